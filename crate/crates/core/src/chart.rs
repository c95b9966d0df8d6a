//! Analytic Legendre charts of surfaces in `S^3`.
//!
//! Shape-operator convention: `dξ = −df ∘ A`, so `−dξ + τ df = df ∘ (A + τ Id)`
//! and a congruence is regular exactly when `−τ` avoids the principal curvatures.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_tau, EvalError, Expr, ParseError};
use crate::jet::Jet2;
use crate::lie::{lift_frame, FrameError, LegendreFrame, LieJet, LieVec};

pub const BUILTIN_CONTACT_TOL: f64 = 1e-12;
pub const CUSTOM_CONTACT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChartError {
    #[error("torus radius {0} must lie in (0, 1)")]
    BadRadius(f64),
    #[error("custom chart needs {expected} component expressions for {field}, got {got}")]
    ComponentCount { field: &'static str, expected: usize, got: usize },
    #[error("in {field}[{index}]: {source}")]
    Parse { field: &'static str, index: usize, source: ParseError },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("point {point:?} lies outside the chart domain")]
    OutsideDomain { point: Vec<f64> },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("empty domain on axis {0}")]
    EmptyDomain(usize),
}

/// A rectangle of parameters with per-axis periodicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub u: [f64; 2],
    pub v: [f64; 2],
    #[serde(default)]
    pub periodic: [bool; 2],
}

impl Domain {
    pub fn torus() -> Self {
        Domain { u: [0.0, TAU], v: [0.0, TAU], periodic: [true, true] }
    }

    pub fn patch(u: [f64; 2], v: [f64; 2]) -> Self {
        Domain { u, v, periodic: [false, false] }
    }

    pub fn axis(&self, k: usize) -> [f64; 2] {
        if k == 0 { self.u } else { self.v }
    }

    pub fn span(&self, k: usize) -> f64 {
        let [a, b] = self.axis(k);
        b - a
    }

    pub fn validate(&self) -> Result<(), ChartError> {
        for k in 0..2 {
            if !(self.span(k) > 0.0) {
                return Err(ChartError::EmptyDomain(k));
            }
        }
        Ok(())
    }

    /// Wraps periodic coordinates into range and checks the others.
    pub fn wrap(&self, point: &[f64]) -> Result<Vec<f64>, ChartError> {
        let mut p = point.to_vec();
        for k in 0..2 {
            let [a, b] = self.axis(k);
            if self.periodic[k] {
                p[k] = a + (p[k] - a).rem_euclid(b - a);
            } else if p[k] < a - 1e-12 * (b - a) || p[k] > b + 1e-12 * (b - a) {
                return Err(ChartError::OutsideDomain { point: point.to_vec() });
            }
        }
        Ok(p)
    }

    /// True when `point ± h e_k` stays inside along every non-periodic axis.
    pub fn contains_stencil(&self, point: &[f64], h: f64) -> bool {
        (0..2).all(|k| {
            let [a, b] = self.axis(k);
            self.periodic[k] || (point[k] - h >= a && point[k] + h <= b)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChartSpec {
    /// `f = (r cos u, r sin u, s cos v, s sin v)`, `ξ = (−s cos u, −s sin u, r cos v, r sin v)`, `s = √(1−r²)`.
    CliffordTorus { r: f64 },
    /// Parallel surface at spherical distance `c`: `f_c = cos c f + sin c ξ`, `ξ_c = −sin c f + cos c ξ`.
    ParallelOf { base: Box<ChartSpec>, c: f64 },
    /// Four component expressions each for `f` and `ξ`.
    Custom { f: Vec<String>, xi: Vec<String>, domain: Domain },
}

impl ChartSpec {
    pub fn clifford_torus(r: f64) -> Self {
        ChartSpec::CliffordTorus { r }
    }

    pub fn domain(&self) -> Domain {
        match self {
            ChartSpec::CliffordTorus { .. } => Domain::torus(),
            ChartSpec::ParallelOf { base, .. } => base.domain(),
            ChartSpec::Custom { domain, .. } => *domain,
        }
    }

    pub fn is_builtin(&self) -> bool {
        match self {
            ChartSpec::CliffordTorus { .. } => true,
            ChartSpec::ParallelOf { base, .. } => base.is_builtin(),
            ChartSpec::Custom { .. } => false,
        }
    }

    pub fn contact_tolerance(&self) -> f64 {
        if self.is_builtin() { BUILTIN_CONTACT_TOL } else { CUSTOM_CONTACT_TOL }
    }

    /// Short human-readable label.
    pub fn label(&self) -> String {
        match self {
            ChartSpec::CliffordTorus { r } => format!("clifford_torus({r})"),
            ChartSpec::ParallelOf { base, c } => format!("parallel_of({}, {c})", base.label()),
            ChartSpec::Custom { .. } => "custom".to_string(),
        }
    }

    /// Parses custom component expressions and validates parameters once.
    pub fn compile(&self) -> Result<Chart, ChartError> {
        let kind = match self {
            ChartSpec::CliffordTorus { r } => {
                if !(*r > 0.0 && *r < 1.0) {
                    return Err(ChartError::BadRadius(*r));
                }
                ChartKind::CliffordTorus { r: *r }
            }
            ChartSpec::ParallelOf { base, c } => {
                ChartKind::Parallel { base: Box::new(base.compile()?), c: *c }
            }
            ChartSpec::Custom { f, xi, domain } => {
                domain.validate()?;
                let parse_all = |field: &'static str, src: &[String]| -> Result<Vec<Expr>, ChartError> {
                    if src.len() != 4 {
                        return Err(ChartError::ComponentCount { field, expected: 4, got: src.len() });
                    }
                    src.iter()
                        .enumerate()
                        .map(|(index, s)| parse_tau(s).map_err(|source| ChartError::Parse { field, index, source }))
                        .collect()
                };
                ChartKind::Custom { f: parse_all("f", f)?, xi: parse_all("xi", xi)? }
            }
        };
        Ok(Chart { domain: self.domain(), contact_tol: self.contact_tolerance(), kind })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ChartKind {
    CliffordTorus { r: f64 },
    Parallel { base: Box<Chart>, c: f64 },
    Custom { f: Vec<Expr>, xi: Vec<Expr> },
}

/// A compiled chart, ready for pointwise jet evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub domain: Domain,
    pub contact_tol: f64,
    kind: ChartKind,
}

fn spatial(comps: [Jet2; 4]) -> LieJet {
    let z = Jet2::zero(comps[0].dim());
    LieVec::new(&comps, z, z)
}

impl Chart {
    /// Raw `(f, ξ)` jets at a (wrapped) parameter point, uncertified.
    pub fn jets(&self, point: &[f64]) -> Result<(LieJet, LieJet), ChartError> {
        let s = Jet2::seeds(point);
        match &self.kind {
            ChartKind::CliffordTorus { r } => {
                let r = *r;
                let q = (1.0 - r * r).sqrt();
                let (cu, su, cv, sv) = (s[0].cos(), s[0].sin(), s[1].cos(), s[1].sin());
                let f = spatial([cu * r, su * r, cv * q, sv * q]);
                let xi = spatial([cu * (-q), su * (-q), cv * r, sv * r]);
                Ok((f, xi))
            }
            ChartKind::Parallel { base, c } => {
                let (f, xi) = base.jets(point)?;
                let (sc, cc) = c.sin_cos();
                let fc = f.zip_with(&xi, |a, b| a * cc + b * sc);
                let xc = f.zip_with(&xi, |a, b| a * (-sc) + b * cc);
                Ok((fc, xc))
            }
            ChartKind::Custom { f, xi } => {
                let eval = |exprs: &[Expr]| -> Result<LieJet, ChartError> {
                    let mut comps = [Jet2::zero(2); 4];
                    for (k, e) in exprs.iter().enumerate() {
                        comps[k] = e.eval_jet(&s).map_err(|source| EvalError { expr: e.to_string(), source })?;
                    }
                    Ok(spatial(comps))
                };
                Ok((eval(f)?, eval(xi)?))
            }
        }
    }

    /// Certified Legendre frame at `point`.
    pub fn frame(&self, point: &[f64]) -> Result<LegendreFrame, ChartError> {
        let p = self.domain.wrap(point)?;
        let (f, xi) = self.jets(&p)?;
        Ok(lift_frame(f, xi, &p, self.contact_tol)?)
    }
}

/// Evaluates a chart at a point as a certified frame.
pub fn eval_chart(spec: &ChartSpec, point: &[f64]) -> Result<LegendreFrame, ChartError> {
    spec.compile()?.frame(point)
}

/// Text form of `clifford_torus(r)` as a custom chart, mainly for cross-checks.
pub fn clifford_torus_custom(r: f64) -> ChartSpec {
    let q = (1.0 - r * r).sqrt();
    let f = vec![format!("{r:?}*cos(u)"), format!("{r:?}*sin(u)"), format!("{q:?}*cos(v)"), format!("{q:?}*sin(v)")];
    let xi = vec![format!("-{q:?}*cos(u)"), format!("-{q:?}*sin(u)"), format!("{r:?}*cos(v)"), format!("{r:?}*sin(v)")];
    ChartSpec::Custom { f, xi, domain: Domain::torus() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    #[test]
    fn symmetric_torus_at_origin() {
        let fr = eval_chart(&ChartSpec::clifford_torus(FRAC_1_SQRT_2), &[0.0, 0.0]).unwrap();
        let f = fr.f.value();
        let xi = fr.xi.value();
        let expect_f = [FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2, 0.0];
        let expect_xi = [-FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2, 0.0];
        for k in 0..4 {
            assert!((f.spatial()[k] - expect_f[k]).abs() < 1e-15);
            assert!((xi.spatial()[k] - expect_xi[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn contact_residuals_of_builtin_torus() {
        let fr = eval_chart(&ChartSpec::clifford_torus(0.6), &[PI, FRAC_PI_2]).unwrap();
        assert!(fr.certificate.max_residual() < 1e-12);
        let fr = eval_chart(&ChartSpec::clifford_torus(FRAC_1_SQRT_2), &[0.3, 1.1]).unwrap();
        assert!(fr.certificate.max_residual() < 1e-12);
    }

    #[test]
    fn custom_text_form_matches_builtin() {
        for r in [0.6, FRAC_1_SQRT_2] {
            let builtin = ChartSpec::clifford_torus(r).compile().unwrap();
            let custom = clifford_torus_custom(r).compile().unwrap();
            for p in [[0.3, 1.1], [2.0, -0.7], [5.5, 3.3]] {
                let a = builtin.frame(&p).unwrap();
                let b = custom.frame(&p).unwrap();
                assert!(a.f.max_abs_diff(&b.f) < 1e-12);
                assert!(a.xi.max_abs_diff(&b.xi) < 1e-12);
            }
        }
    }

    #[test]
    fn parallel_surface_is_legendre() {
        let spec = ChartSpec::ParallelOf { base: Box::new(ChartSpec::clifford_torus(0.6)), c: 0.2 };
        let fr = eval_chart(&spec, &[0.4, 2.2]).unwrap();
        assert!(fr.certificate.max_residual() < 1e-12);
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(ChartSpec::clifford_torus(1.2).compile(), Err(ChartError::BadRadius(_))));
        let broken = ChartSpec::Custom {
            f: vec!["cos(u)".into(), "sin(u)".into(), "0".into(), "0".into()],
            xi: vec!["cos(u)".into(), "sin(u)".into(), "0".into(), "0".into()],
            domain: Domain::torus(),
        };
        let err = eval_chart(&broken, &[0.1, 0.2]).unwrap_err();
        assert!(matches!(err, ChartError::Frame(FrameError::ContactViolation { .. })));
        let short = ChartSpec::Custom { f: vec!["u".into()], xi: vec![], domain: Domain::torus() };
        assert!(matches!(short.compile(), Err(ChartError::ComponentCount { .. })));
        let patch = ChartSpec::Custom { f: vec!["u".into(); 4], xi: vec!["v".into(); 4], domain: Domain::patch([0.0, 1.0], [0.0, 1.0]) };
        assert!(matches!(patch.compile().unwrap().frame(&[2.0, 0.5]), Err(ChartError::OutsideDomain { .. })));
    }

    #[test]
    fn periodic_wrap() {
        let d = Domain::torus();
        let p = d.wrap(&[-0.5, 7.0]).unwrap();
        assert!((p[0] - (TAU - 0.5)).abs() < 1e-15);
        assert!((p[1] - (7.0 - TAU)).abs() < 1e-15);
    }
}
