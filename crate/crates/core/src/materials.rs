//! Reluctivity laws and the ON/OFF design-to-coefficient map.

use std::f64::consts::PI;
use std::io::Read;

use thiserror::Error;

use crate::mesh::{Mesh, Region};

/// Reluctivity of vacuum/air, 1e7/(4π) m/H.
pub const NU_AIR: f64 = 1e7 / (4.0 * PI);
/// Default relative reluctivity of iron.
pub const DEFAULT_NU_R: f64 = 1.0 / 5100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaterialError {
    #[error("B-H samples must be strictly increasing in s (row {row})")]
    NonMonotoneS { row: usize },
    #[error("B-H samples must be nondecreasing in nu (row {row})")]
    DecreasingNu { row: usize },
    #[error("B-H sample {row} has nu = {nu}, outside [{lo}, {hi}]")]
    OutOfRange { row: usize, nu: f64, lo: f64, hi: f64 },
    #[error("B-H table needs at least one sample")]
    Empty,
    #[error("invalid material parameter: {0}")]
    Parameter(String),
    #[error("B-H table: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Linear,
    Nonlinear,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Linear => "linear",
            Mode::Nonlinear => "nonlinear",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = MaterialError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Mode::Linear),
            "nonlinear" => Ok(Mode::Nonlinear),
            _ => Err(MaterialError::Parameter(format!("unknown mode `{s}` (expected linear or nonlinear)"))),
        }
    }
}

/// Shape-preserving cubic Hermite interpolant with zero end slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    s: Vec<f64>,
    nu: Vec<f64>,
    slope: Vec<f64>,
}

impl MonotoneCubic {
    fn new(s: Vec<f64>, nu: Vec<f64>) -> Self {
        let n = s.len();
        let mut slope = vec![0.0; n];
        if n > 2 {
            let h: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
            let d: Vec<f64> = (0..n - 1).map(|i| (nu[i + 1] - nu[i]) / h[i]).collect();
            for i in 1..n - 1 {
                if d[i - 1] * d[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    slope[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
                }
            }
        }
        Self { s, nu, slope }
    }

    fn interval(&self, s: f64) -> Option<usize> {
        if s <= self.s[0] || s >= self.s[self.s.len() - 1] {
            return None;
        }
        Some(self.s.partition_point(|&x| x <= s) - 1)
    }

    fn value(&self, s: f64) -> f64 {
        let Some(i) = self.interval(s) else {
            return if s <= self.s[0] { self.nu[0] } else { self.nu[self.nu.len() - 1] };
        };
        let h = self.s[i + 1] - self.s[i];
        let t = (s - self.s[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.nu[i]
            + (t3 - 2.0 * t2 + t) * h * self.slope[i]
            + (-2.0 * t3 + 3.0 * t2) * self.nu[i + 1]
            + (t3 - t2) * h * self.slope[i + 1]
    }

    fn derivative(&self, s: f64) -> f64 {
        let Some(i) = self.interval(s) else {
            return 0.0;
        };
        let h = self.s[i + 1] - self.s[i];
        let t = (s - self.s[i]) / h;
        let dy = self.nu[i + 1] - self.nu[i];
        dy * (6.0 * t - 6.0 * t * t) / h
            + self.slope[i] * (3.0 * t * t - 4.0 * t + 1.0)
            + self.slope[i + 1] * (3.0 * t * t - 2.0 * t)
    }

    /// ν'(s)/s, using the limit of the first Hermite piece at s = 0.
    fn derivative_over_s(&self, s: f64) -> f64 {
        let h = self.s[1] - self.s[0];
        if self.s[0] == 0.0 && s <= 1e-9 * h {
            let dy = self.nu[1] - self.nu[0];
            return (6.0 * dy / h - 2.0 * self.slope[1]) / h;
        }
        if s == 0.0 {
            return 0.0;
        }
        self.derivative(s) / s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Curve {
    /// ν̂(s) = ν0 + (ν1 − ν0) / (1 + (s/s0)^p). `s0 = ∞` freezes the curve at ν1.
    Analytic { s0: f64, exponent: f64 },
    Table(MonotoneCubic),
}

/// Reluctivity law ν̂(s) of iron, s = |∇u| = |B| in tesla.
#[derive(Debug, Clone, PartialEq)]
pub struct BHModel {
    pub nu0: f64,
    pub nu1: f64,
    pub nu_r: f64,
    pub curve: Curve,
}

impl Default for BHModel {
    fn default() -> Self {
        Self::analytic(NU_AIR, DEFAULT_NU_R, 1.5, 4.0).expect("default curve is valid")
    }
}

impl BHModel {
    pub fn analytic(nu0: f64, nu_r: f64, s0: f64, exponent: f64) -> Result<Self, MaterialError> {
        if !(nu0 > 0.0 && nu0.is_finite()) {
            return Err(MaterialError::Parameter(format!("nu0 must be positive, got {nu0}")));
        }
        if !(nu_r > 0.0 && nu_r <= 1.0) {
            return Err(MaterialError::Parameter(format!("nu_r must lie in (0, 1], got {nu_r}")));
        }
        if !(s0 > 0.0) {
            return Err(MaterialError::Parameter(format!("s0 must be positive, got {s0}")));
        }
        if !(exponent >= 2.0 && exponent.is_finite()) {
            return Err(MaterialError::Parameter(format!("exponent must be >= 2, got {exponent}")));
        }
        Ok(Self { nu0, nu1: nu0 * nu_r, nu_r, curve: Curve::Analytic { s0, exponent } })
    }

    /// Linear material: the curve never leaves ν1.
    pub fn frozen(nu0: f64, nu_r: f64) -> Self {
        Self::analytic(nu0, nu_r, f64::INFINITY, 4.0).expect("valid parameters")
    }

    /// Monotone cubic interpolant through `(s, ν)` samples.
    ///
    /// A `(0, ν1)` sample is prepended when the table starts above zero, and a
    /// `(2·s_last, ν0)` sample appended when it ends below saturation.
    pub fn from_table(nu0: f64, nu_r: f64, samples: &[(f64, f64)]) -> Result<Self, MaterialError> {
        let nu1 = nu0 * nu_r;
        if samples.is_empty() {
            return Err(MaterialError::Empty);
        }
        let lo = nu1 * (1.0 - 1e-9);
        for (row, &(s, nu)) in samples.iter().enumerate() {
            if !(nu >= lo && nu <= nu0 * (1.0 + 1e-12)) || !s.is_finite() {
                return Err(MaterialError::OutOfRange { row, nu, lo: nu1, hi: nu0 });
            }
            if row > 0 {
                let (ps, pn) = samples[row - 1];
                if !(s > ps) {
                    return Err(MaterialError::NonMonotoneS { row });
                }
                if nu < pn {
                    return Err(MaterialError::DecreasingNu { row });
                }
            } else if s < 0.0 {
                return Err(MaterialError::NonMonotoneS { row });
            }
        }
        let mut s: Vec<f64> = samples.iter().map(|p| p.0).collect();
        let mut nu: Vec<f64> = samples.iter().map(|p| p.1.clamp(nu1, nu0)).collect();
        if s[0] > 0.0 {
            s.insert(0, 0.0);
            nu.insert(0, nu1);
        }
        let last = *s.last().unwrap();
        if *nu.last().unwrap() < nu0 {
            s.push(if last > 0.0 { 2.0 * last } else { 1.0 });
            nu.push(nu0);
        }
        Ok(Self { nu0, nu1, nu_r, curve: Curve::Table(MonotoneCubic::new(s, nu)) })
    }

    /// Reads a `s,nu` CSV table.
    pub fn from_csv(nu0: f64, nu_r: f64, reader: impl Read) -> Result<Self, MaterialError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| MaterialError::Csv(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["s", "nu"] {
            return Err(MaterialError::Csv(format!("expected header `s,nu`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut samples = Vec::new();
        for rec in rdr.deserialize::<(f64, f64)>() {
            samples.push(rec.map_err(|e| MaterialError::Csv(e.to_string()))?);
        }
        Self::from_table(nu0, nu_r, &samples)
    }

    /// ν̂(s).
    pub fn nu(&self, s: f64) -> f64 {
        match &self.curve {
            Curve::Analytic { s0, exponent } => {
                let x = (s / s0).powf(*exponent);
                if x.is_infinite() {
                    return self.nu0;
                }
                self.nu1 + (self.nu0 - self.nu1) * (x / (1.0 + x))
            }
            Curve::Table(t) => t.value(s),
        }
    }

    /// ν̂'(s).
    pub fn derivative(&self, s: f64) -> f64 {
        match &self.curve {
            Curve::Analytic { s0, exponent } => {
                if s0.is_infinite() || s == 0.0 {
                    return 0.0;
                }
                let x = s / s0;
                let xp = x.powf(*exponent);
                (self.nu0 - self.nu1) * exponent * xp / (s * (1.0 + xp).powi(2))
            }
            Curve::Table(t) => t.derivative(s),
        }
    }

    /// ν̂'(s)/s, finite at s = 0.
    pub fn derivative_over_s(&self, s: f64) -> f64 {
        match &self.curve {
            Curve::Analytic { s0, exponent } => {
                if s0.is_infinite() {
                    return 0.0;
                }
                let x = s / s0;
                let xp = x.powf(*exponent);
                let xpm2 = if *exponent == 2.0 { 1.0 } else { x.powf(exponent - 2.0) };
                (self.nu0 - self.nu1) * exponent * xpm2 / (s0 * s0 * (1.0 + xp).powi(2))
            }
            Curve::Table(t) => t.derivative_over_s(s),
        }
    }
}

/// Reluctivity derivative as seen by the state equation in `mode`.
pub fn reluctivity_derivative(model: &BHModel, mode: Mode, s: f64) -> f64 {
    match mode {
        Mode::Linear => 0.0,
        Mode::Nonlinear => model.derivative(s),
    }
}

/// ON/OFF flags of the design elements plus the material mode.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignState {
    pub mode: Mode,
    elements: Vec<usize>,
    on: Vec<bool>,
    shift: Vec<f64>,
}

impl DesignState {
    /// Every design element switched ON (iron).
    pub fn all_on(mesh: &Mesh, mode: Mode) -> Self {
        let elements = mesh.design_elements();
        let n = elements.len();
        Self { mode, elements, on: vec![true; n], shift: vec![0.0; n] }
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    pub fn slot(&self, elem: usize) -> Option<usize> {
        self.elements.binary_search(&elem).ok()
    }

    /// `Some(flag)` for design elements, `None` otherwise.
    pub fn is_on(&self, elem: usize) -> Option<bool> {
        self.slot(elem).map(|k| self.on[k])
    }

    /// Sets the flag of a design element; returns whether it changed.
    pub fn set(&mut self, elem: usize, on: bool) -> bool {
        let k = self.slot(elem).expect("not a design element");
        std::mem::replace(&mut self.on[k], on) != on
    }

    pub fn flags(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.elements.iter().copied().zip(self.on.iter().copied())
    }

    pub fn count_on(&self) -> usize {
        self.on.iter().filter(|&&f| f).count()
    }

    pub fn count_off(&self) -> usize {
        self.on.len() - self.count_on()
    }

    /// Copy with `delta` added to the reluctivity of one design element.
    pub fn with_shift(&self, elem: usize, delta: f64) -> Self {
        let mut out = self.clone();
        let k = self.slot(elem).expect("not a design element");
        out.shift[k] += delta;
        out
    }

    fn shift(&self, elem: usize) -> f64 {
        self.slot(elem).map_or(0.0, |k| self.shift[k])
    }

    fn is_iron(&self, mesh: &Mesh, elem: usize) -> bool {
        match mesh.region(elem) {
            Region::Iron => true,
            Region::Design => self.is_on(elem).unwrap_or(true),
            Region::Air | Region::Magnet(_) => false,
        }
    }
}

/// ν of element `elem` at flux density magnitude `s`.
pub fn reluctivity(model: &BHModel, state: &DesignState, mesh: &Mesh, elem: usize, s: f64) -> f64 {
    let base = if !state.is_iron(mesh, elem) {
        model.nu0
    } else {
        match state.mode {
            Mode::Linear => model.nu1,
            Mode::Nonlinear => model.nu(s),
        }
    };
    base + state.shift(elem)
}

/// ν'(s)/s of element `elem`; zero wherever the coefficient is constant.
pub fn reluctivity_derivative_over_s(
    model: &BHModel,
    state: &DesignState,
    mesh: &Mesh,
    elem: usize,
    s: f64,
) -> f64 {
    if state.mode == Mode::Nonlinear && state.is_iron(mesh, elem) {
        model.derivative_over_s(s)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_motor_mesh, MotorGeometry};
    use proptest::prelude::*;

    fn motor() -> Mesh {
        generate_motor_mesh(&MotorGeometry::default(), 0.005).unwrap()
    }

    #[test]
    fn air_reluctivity_value() {
        assert!((NU_AIR - 7.957747e5).abs() < 0.1);
        let mesh = motor();
        let state = DesignState::all_on(&mesh, Mode::Nonlinear);
        let air = mesh.elements_in(|r| r == Region::Air)[0];
        let model = BHModel::default();
        for s in [0.0, 1.0, 1e3] {
            assert_eq!(reluctivity(&model, &state, &mesh, air, s), NU_AIR);
        }
    }

    #[test]
    fn iron_limits() {
        let mesh = motor();
        let state = DesignState::all_on(&mesh, Mode::Nonlinear);
        let iron = mesh.elements_in(|r| r == Region::Iron)[0];
        let model = BHModel::default();
        assert_eq!(reluctivity(&model, &state, &mesh, iron, 0.0), model.nu1);
        let sat = reluctivity(&model, &state, &mesh, iron, 1e9);
        assert!((sat - model.nu0).abs() / model.nu0 < 0.01);
        assert!((model.nu1 / model.nu0 - model.nu_r).abs() <= f64::EPSILON * model.nu_r);
    }

    #[test]
    fn off_design_and_magnets_are_air() {
        let mesh = motor();
        let mut state = DesignState::all_on(&mesh, Mode::Linear);
        let model = BHModel::default();
        let d = state.elements()[3];
        assert_eq!(reluctivity(&model, &state, &mesh, d, 0.3), model.nu1);
        assert!(state.set(d, false));
        assert!(!state.set(d, false));
        assert_eq!(reluctivity(&model, &state, &mesh, d, 0.3), model.nu0);
        let magnet = mesh.elements_in(|r| matches!(r, Region::Magnet(_)))[0];
        assert_eq!(reluctivity(&model, &state, &mesh, magnet, 0.3), model.nu0);
        assert_eq!(state.count_on() + state.count_off(), mesh.design_elements().len());
    }

    #[test]
    fn derivative_matches_central_difference() {
        let model = BHModel::default();
        let Curve::Analytic { s0, .. } = model.curve else { unreachable!() };
        let d = 1e-3 * s0;
        let fd = (model.nu(s0 + d) - model.nu(s0 - d)) / (2.0 * d);
        let exact = model.derivative(s0);
        assert!(((fd - exact) / exact).abs() < 1e-6, "fd {fd} exact {exact}");
        assert_eq!(model.derivative(0.0), 0.0);
        assert_eq!(model.derivative_over_s(0.0), 0.0);
        assert_eq!(reluctivity_derivative(&model, Mode::Linear, s0), 0.0);
        let s = 0.7;
        assert!((model.derivative_over_s(s) - model.derivative(s) / s).abs() < 1e-9 * model.derivative(s) / s);
    }

    #[test]
    fn two_sample_table() {
        let nu1 = NU_AIR * DEFAULT_NU_R;
        let m = BHModel::from_table(NU_AIR, DEFAULT_NU_R, &[(0.0, nu1), (1e7, NU_AIR)]).unwrap();
        assert_eq!(m.nu(0.0), nu1);
        assert_eq!(m.nu(1e7), NU_AIR);
        assert_eq!(m.nu(2e7), NU_AIR);
        let mut prev = m.nu(0.0);
        for k in 1..=100 {
            let v = m.nu(1e5 * k as f64);
            assert!(v >= prev);
            prev = v;
        }
        // zero end slope makes ν'(s)/s bounded near 0
        let lim = m.derivative_over_s(0.0);
        assert!(lim.is_finite() && lim > 0.0);
        assert!((m.derivative_over_s(1e-3) - lim).abs() < 1e-6 * lim);
    }

    #[test]
    fn table_rejects_bad_samples() {
        let nu1 = NU_AIR * DEFAULT_NU_R;
        let err = BHModel::from_table(NU_AIR, DEFAULT_NU_R, &[(0.0, 2.0 * nu1), (1.0, nu1)]).unwrap_err();
        assert_eq!(err, MaterialError::DecreasingNu { row: 1 });
        let err = BHModel::from_table(NU_AIR, DEFAULT_NU_R, &[(0.0, nu1), (0.0, 2.0 * nu1)]).unwrap_err();
        assert_eq!(err, MaterialError::NonMonotoneS { row: 1 });
        let err = BHModel::from_table(NU_AIR, DEFAULT_NU_R, &[(0.0, nu1), (1.0, 2.0 * NU_AIR)]).unwrap_err();
        assert!(matches!(err, MaterialError::OutOfRange { row: 1, .. }));
        let err = BHModel::from_table(NU_AIR, DEFAULT_NU_R, &[(0.0, -1.0)]).unwrap_err();
        assert!(matches!(err, MaterialError::OutOfRange { row: 0, .. }));
    }

    #[test]
    fn dense_table_reproduces_analytic_curve() {
        let analytic = BHModel::default();
        let samples: Vec<(f64, f64)> = (0..=400)
            .map(|k| {
                let s = 0.02 * k as f64;
                (s, analytic.nu(s))
            })
            .collect();
        let table = BHModel::from_table(NU_AIR, DEFAULT_NU_R, &samples).unwrap();
        for k in 0..100 {
            let s = 0.0123 + 0.0789 * k as f64;
            let (a, t) = (analytic.nu(s), table.nu(s));
            assert!(((a - t) / a).abs() < 1e-3, "s={s}: {a} vs {t}");
        }
    }

    #[test]
    fn csv_table() {
        let nu1 = NU_AIR * DEFAULT_NU_R;
        let text = format!("s,nu\n0,{nu1}\n1.0,{}\n3.0,{NU_AIR}\n", 10.0 * nu1);
        let m = BHModel::from_csv(NU_AIR, DEFAULT_NU_R, text.as_bytes()).unwrap();
        assert!((m.nu(1.0) - 10.0 * nu1).abs() < 1e-9);
        let err = BHModel::from_csv(NU_AIR, DEFAULT_NU_R, "b,h\n0,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, MaterialError::Csv(_)));
    }

    fn models() -> Vec<BHModel> {
        let analytic = BHModel::default();
        let samples: Vec<(f64, f64)> =
            (0..=40).map(|k| (0.1 * k as f64, analytic.nu(0.1 * k as f64))).collect();
        vec![
            analytic,
            BHModel::analytic(NU_AIR, DEFAULT_NU_R, 1.2, 2.0).unwrap(),
            BHModel::from_table(NU_AIR, DEFAULT_NU_R, &samples).unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn magnetic_field_is_strictly_increasing(s in 0.0f64..20.0, d in 1e-6f64..5.0) {
            for m in models() {
                let (a, b) = (m.nu(s) * s, m.nu(s + d) * (s + d));
                prop_assert!(b > a, "{:?}: h({}) = {} !< h({}) = {}", m.curve, s, a, s + d, b);
            }
        }

        #[test]
        fn reluctivity_bounded_and_monotone(s in 0.0f64..1e3, d in 0.0f64..10.0) {
            for m in models() {
                let v = m.nu(s);
                prop_assert!(v >= m.nu1 && v <= m.nu0);
                prop_assert!(m.nu(s + d) >= v);
                prop_assert!(m.derivative(s) >= 0.0);
            }
        }

        #[test]
        fn linear_mode_ignores_field(s1 in 0.0f64..100.0, s2 in 0.0f64..100.0) {
            let mesh = generate_motor_mesh(&MotorGeometry::default(), 0.008).unwrap();
            let state = DesignState::all_on(&mesh, Mode::Linear);
            let model = BHModel::default();
            for e in 0..mesh.element_count() {
                prop_assert_eq!(
                    reluctivity(&model, &state, &mesh, e, s1),
                    reluctivity(&model, &state, &mesh, e, s2)
                );
            }
        }
    }
}
