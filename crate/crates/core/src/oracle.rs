//! Jet derivatives against central differences under step refinement.

use serde::Serialize;

use crate::chart::Chart;
use crate::error::Result;
use crate::expr::Expr;
use crate::grid::{convergence_order, fd_jet_oracle_vec};
use crate::jet::Jet2;

pub const DEFAULT_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// Errors below this at the coarsest step mean the differences are exact
/// up to round-off, and no order is fitted.
pub const EXACT_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub steps: Vec<f64>,
    /// Largest first-derivative error per step.
    pub grad_errors: Vec<f64>,
    /// Largest second-derivative error per step.
    pub hess_errors: Vec<f64>,
    pub grad_order: Option<f64>,
    pub hess_order: Option<f64>,
}

impl ConvergenceStudy {
    /// Every fitted order lies within `target ± slack`.
    pub fn within(&self, target: f64, slack: f64) -> bool {
        [self.grad_order, self.hess_order].iter().flatten().all(|p| (p - target).abs() <= slack)
    }
}

fn split_errors(exact: &[Jet2], approx: &[Jet2]) -> (f64, f64) {
    let mut g = 0.0f64;
    let mut h = 0.0f64;
    for (e, a) in exact.iter().zip(approx) {
        let m = e.dim();
        for i in 0..m {
            g = g.max((e.d(i) - a.d(i)).abs());
            for j in 0..m {
                h = h.max((e.dd(i, j) - a.dd(i, j)).abs());
            }
        }
    }
    (g, h)
}

fn fit(steps: &[f64], errors: &[f64]) -> Option<f64> {
    (errors[0] >= EXACT_FLOOR).then(|| convergence_order(steps, errors))
}

/// Compares the jets of `τ`, `f` and `ξ` with central differences at each point.
pub fn chart_convergence(chart: &Chart, tau: &Expr, points: &[[f64; 2]], steps: &[f64]) -> Result<ConvergenceStudy> {
    let sample = |p: &[f64]| -> Result<Vec<Jet2>> {
        let (f, xi) = chart.jets(p)?;
        let mut out = vec![tau.jet_at(p)?];
        out.extend_from_slice(f.coords());
        out.extend_from_slice(xi.coords());
        Ok(out)
    };
    let mut grad_errors = vec![0.0f64; steps.len()];
    let mut hess_errors = vec![0.0f64; steps.len()];
    for p in points {
        let exact = sample(p)?;
        for (k, &h) in steps.iter().enumerate() {
            let fd = fd_jet_oracle_vec(|q| Ok(sample(q)?.iter().map(Jet2::value).collect()), p, h, &chart.domain)?;
            let (g, hh) = split_errors(&exact, &fd);
            grad_errors[k] = grad_errors[k].max(g);
            hess_errors[k] = hess_errors[k].max(hh);
        }
    }
    Ok(ConvergenceStudy {
        grad_order: fit(steps, &grad_errors),
        hess_order: fit(steps, &hess_errors),
        steps: steps.to_vec(),
        grad_errors,
        hess_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::ChartSpec;
    use crate::expr::parse_tau;

    #[test]
    fn second_order_on_torus() {
        let chart = ChartSpec::clifford_torus(0.6).compile().unwrap();
        let tau = parse_tau("exp(u)*cos(v)").unwrap();
        let s = chart_convergence(&chart, &tau, &[[0.4, 1.1], [2.0, 5.0]], &DEFAULT_STEPS).unwrap();
        assert!(s.within(2.0, 0.3), "{s:?}");
        assert!(s.grad_order.is_some() && s.hess_order.is_some());
    }

    #[test]
    fn polynomial_of_degree_two_is_exact() {
        let chart = ChartSpec::Custom {
            f: vec!["u".into(), "v".into(), "0".into(), "1".into()],
            xi: vec!["0".into(), "0".into(), "1".into(), "0".into()],
            domain: crate::chart::Domain::patch([-1.0, 1.0], [-1.0, 1.0]),
        }
        .compile()
        .unwrap();
        let tau = parse_tau("u*u + u*v").unwrap();
        let s = chart_convergence(&chart, &tau, &[[0.1, 0.2]], &DEFAULT_STEPS).unwrap();
        assert_eq!((s.grad_order, s.hess_order), (None, None));
    }
}
