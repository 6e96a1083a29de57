//! Line-oriented `mesh2d 1` text format.
//!
//! ```text
//! mesh2d 1
//! nodes N          then N lines:  x y
//! triangles M      then M lines:  i j k TAG      (TAG: IRON | AIR | DESIGN | MAGNET:<id>)
//! magnets P        then P lines:  id Mx My
//! boundary B       then B lines:  i j MARKER
//! ```
//!
//! `#` starts a comment; blank lines are ignored.

use std::io::{BufRead, Write};
use std::str::FromStr;

use super::{BoundaryEdge, Magnet, Mesh, MeshError, Region, Triangle};

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn err(&self, message: impl Into<String>) -> MeshError {
        MeshError::Parse { line: self.line, message: message.into() }
    }

    /// Next non-empty line with comments stripped, split into tokens.
    fn next_tokens(&mut self) -> Result<Option<Vec<String>>, MeshError> {
        loop {
            let Some(raw) = self.inner.next() else {
                return Ok(None);
            };
            self.line += 1;
            let raw = raw.map_err(|e| self.err(e.to_string()))?;
            let content = raw.split('#').next().unwrap_or("");
            let tokens: Vec<String> = content.split_whitespace().map(str::to_owned).collect();
            if !tokens.is_empty() {
                return Ok(Some(tokens));
            }
        }
    }

    fn expect_tokens(&mut self, what: &str) -> Result<Vec<String>, MeshError> {
        self.next_tokens()?
            .ok_or_else(|| MeshError::Parse { line: self.line + 1, message: format!("unexpected end of input, expected {what}") })
    }

    fn section(&mut self, name: &str) -> Result<usize, MeshError> {
        let t = self.expect_tokens(name)?;
        match t.as_slice() {
            [key, n] if key == name => n
                .parse()
                .map_err(|_| self.err(format!("invalid count `{n}` for section `{name}`"))),
            _ => Err(self.err(format!("expected `{name} <count>`, found `{}`", t.join(" ")))),
        }
    }

    fn record<const N: usize>(&mut self, what: &str) -> Result<[String; N], MeshError> {
        let t = self.expect_tokens(what)?;
        let n = t.len();
        t.try_into()
            .map_err(|_| self.err(format!("{what} record needs {N} fields, found {n}")))
    }

    fn parse<T: FromStr>(&self, token: &str, what: &str) -> Result<T, MeshError> {
        token
            .parse()
            .map_err(|_| self.err(format!("invalid {what} `{token}`")))
    }
}

/// Reads a mesh and validates all invariants.
pub fn load_mesh(reader: impl BufRead) -> Result<Mesh, MeshError> {
    let mut lines = Lines { inner: reader.lines(), line: 0 };

    let header = lines.expect_tokens("header")?;
    if header != ["mesh2d", "1"] {
        return Err(lines.err(format!("expected header `mesh2d 1`, found `{}`", header.join(" "))));
    }

    let n = lines.section("nodes")?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let [x, y] = lines.record("node")?;
        let p = [lines.parse::<f64>(&x, "coordinate")?, lines.parse::<f64>(&y, "coordinate")?];
        if !p.iter().all(|c| c.is_finite()) {
            return Err(lines.err("non-finite node coordinate"));
        }
        nodes.push(p);
    }

    let n = lines.section("triangles")?;
    let mut triangles = Vec::with_capacity(n);
    for _ in 0..n {
        let [i, j, k, tag] = lines.record("triangle")?;
        let nodes = [
            lines.parse(&i, "node index")?,
            lines.parse(&j, "node index")?,
            lines.parse(&k, "node index")?,
        ];
        let region: Region = tag.parse().map_err(|m: String| lines.err(m))?;
        triangles.push(Triangle { nodes, region });
    }

    let n = lines.section("magnets")?;
    let mut magnets = Vec::with_capacity(n);
    for _ in 0..n {
        let [id, mx, my] = lines.record("magnet")?;
        magnets.push(Magnet {
            id: lines.parse(&id, "magnet id")?,
            magnetization: [lines.parse(&mx, "magnetization")?, lines.parse(&my, "magnetization")?],
        });
    }

    let n = lines.section("boundary")?;
    let mut boundary = Vec::with_capacity(n);
    for _ in 0..n {
        let [i, j, marker] = lines.record("boundary edge")?;
        boundary.push(BoundaryEdge {
            nodes: [lines.parse(&i, "node index")?, lines.parse(&j, "node index")?],
            marker: lines.parse(&marker, "marker")?,
        });
    }

    if let Some(extra) = lines.next_tokens()? {
        return Err(lines.err(format!("trailing content `{}`", extra.join(" "))));
    }

    Mesh::new(nodes, triangles, boundary, magnets)
}

/// Writes the canonical text form; floats use shortest round-trip formatting.
pub fn save_mesh(mesh: &Mesh, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "mesh2d 1")?;
    writeln!(out, "nodes {}", mesh.nodes.len())?;
    for p in &mesh.nodes {
        writeln!(out, "{:?} {:?}", p[0], p[1])?;
    }
    writeln!(out, "triangles {}", mesh.triangles.len())?;
    for t in &mesh.triangles {
        writeln!(out, "{} {} {} {}", t.nodes[0], t.nodes[1], t.nodes[2], t.region)?;
    }
    writeln!(out, "magnets {}", mesh.magnets.len())?;
    for m in &mesh.magnets {
        writeln!(out, "{} {:?} {:?}", m.id, m.magnetization[0], m.magnetization[1])?;
    }
    writeln!(out, "boundary {}", mesh.boundary.len())?;
    for e in &mesh.boundary {
        writeln!(out, "{} {} {}", e.nodes[0], e.nodes[1], e.marker)?;
    }
    Ok(())
}
