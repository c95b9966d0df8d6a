//! Rectangular parameter grids, sampled fields, the finite-difference jet
//! oracle and plaquette circulations.
//!
//! Periodic axes are sampled at cell centres `a + (i + ½) h` with `h = span / n`,
//! so the seam is never duplicated. Non-periodic axes include both endpoints.

use serde::Serialize;

use crate::chart::Domain;
use crate::error::{Error, Result};
use crate::jet::Jet2;

pub const MIN_GRID: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub domain: Domain,
    pub n: [usize; 2],
}

impl GridSpec {
    pub fn new(domain: Domain, nu: usize, nv: usize) -> Result<Self> {
        if nu < MIN_GRID || nv < MIN_GRID {
            return Err(Error::GridTooSmall(nu, nv, MIN_GRID));
        }
        domain.validate()?;
        Ok(GridSpec { domain, n: [nu, nv] })
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 2] {
        [self.step(0), self.step(1)]
    }

    pub fn step(&self, axis: usize) -> f64 {
        let n = self.n[axis] as f64;
        if self.domain.periodic[axis] {
            self.domain.span(axis) / n
        } else {
            self.domain.span(axis) / (n - 1.0)
        }
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let [a, _] = self.domain.axis(axis);
        let h = self.step(axis);
        if self.domain.periodic[axis] {
            a + (i as f64 + 0.5) * h
        } else {
            a + i as f64 * h
        }
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [self.coord(0, i), self.coord(1, j)]
    }

    /// Row-major (`u` outer, `v` inner) flat index.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n[1] + j
    }

    pub fn unindex(&self, k: usize) -> [usize; 2] {
        [k / self.n[1], k % self.n[1]]
    }

    pub fn nodes(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|k| {
            let [i, j] = self.unindex(k);
            self.node(i, j)
        }).collect()
    }

    /// Number of elementary intervals along an axis.
    pub fn cells(&self, axis: usize) -> usize {
        if self.domain.periodic[axis] { self.n[axis] } else { self.n[axis] - 1 }
    }

    /// Successor index along an axis, wrapping on periodic axes.
    pub fn next(&self, axis: usize, i: usize) -> Option<usize> {
        if i + 1 < self.n[axis] {
            Some(i + 1)
        } else if self.domain.periodic[axis] {
            Some(0)
        } else {
            None
        }
    }
}

/// `k` real components per grid node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridField {
    pub grid: GridSpec,
    pub components: usize,
    pub data: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: GridSpec, components: usize) -> Self {
        GridField { grid, components, data: vec![0.0; grid.len() * components] }
    }

    pub fn from_values(grid: GridSpec, components: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.len() * components, "field data does not match the grid");
        GridField { grid, components, data }
    }

    /// Samples `f(node)` at every node.
    pub fn sample(grid: GridSpec, components: usize, f: impl Fn([f64; 2]) -> Vec<f64>) -> Self {
        let mut data = Vec::with_capacity(grid.len() * components);
        for p in grid.nodes() {
            let v = f(p);
            assert_eq!(v.len(), components);
            data.extend(v);
        }
        GridField { grid, components, data }
    }

    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[self.grid.index(i, j) * self.components + c]
    }

    pub fn set(&mut self, i: usize, j: usize, c: usize, value: f64) {
        let k = self.grid.index(i, j) * self.components + c;
        self.data[k] = value;
    }

    pub fn at(&self, i: usize, j: usize) -> &[f64] {
        let k = self.grid.index(i, j) * self.components;
        &self.data[k..k + self.components]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Central-difference 2-jet of each component of `sampler` at `point`.
pub fn fd_jet_oracle_vec(
    sampler: impl Fn(&[f64]) -> Result<Vec<f64>>,
    point: &[f64],
    h: f64,
    domain: &Domain,
) -> Result<Vec<Jet2>> {
    if !(1e-6..=1e-1).contains(&h) {
        return Err(Error::InvalidStep(h));
    }
    if !domain.contains_stencil(point, h) {
        return Err(Error::StencilOutOfDomain { point: point.to_vec(), h });
    }
    let m = point.len();
    let shifted = |offsets: &[(usize, f64)]| {
        let mut p = point.to_vec();
        for &(k, s) in offsets {
            p[k] += s * h;
        }
        sampler(&p)
    };
    let center = sampler(point)?;
    let k = center.len();
    let mut grads = vec![vec![0.0; m]; k];
    let mut hess = vec![vec![0.0; m * m]; k];
    for a in 0..m {
        let plus = shifted(&[(a, 1.0)])?;
        let minus = shifted(&[(a, -1.0)])?;
        for c in 0..k {
            grads[c][a] = (plus[c] - minus[c]) / (2.0 * h);
            hess[c][a * m + a] = (plus[c] - 2.0 * center[c] + minus[c]) / (h * h);
        }
        for b in a + 1..m {
            let pp = shifted(&[(a, 1.0), (b, 1.0)])?;
            let pm = shifted(&[(a, 1.0), (b, -1.0)])?;
            let mp = shifted(&[(a, -1.0), (b, 1.0)])?;
            let mm = shifted(&[(a, -1.0), (b, -1.0)])?;
            for c in 0..k {
                let v = (pp[c] - pm[c] - mp[c] + mm[c]) / (4.0 * h * h);
                hess[c][a * m + b] = v;
                hess[c][b * m + a] = v;
            }
        }
    }
    Ok((0..k).map(|c| Jet2::from_parts(center[c], &grads[c], &hess[c])).collect())
}

/// Scalar form of [`fd_jet_oracle_vec`].
pub fn fd_jet_oracle(sampler: impl Fn(&[f64]) -> Result<f64>, point: &[f64], h: f64, domain: &Domain) -> Result<Jet2> {
    fd_jet_oracle_vec(|p| sampler(p).map(|x| vec![x]), point, h, domain).map(|mut v| v.remove(0))
}

/// Least-squares slope of `log(error)` against `log(h)`.
pub fn convergence_order(steps: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// Plaquette estimate of `dα` on a sampled 1-form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoFormSample {
    /// Number of cells along each axis.
    pub cells: [usize; 2],
    /// Circulation around each cell divided by its area, row-major.
    pub density: Vec<f64>,
    /// Largest `|∮ α|` over closed coordinate lines of each periodic axis.
    pub period_circulation: [Option<f64>; 2],
}

impl TwoFormSample {
    pub fn max_abs_density(&self) -> f64 {
        self.density.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Trapezoid circulation of a 1-form (`components == 2`, `(α_u, α_v)`) around
/// every elementary plaquette, plus the total circulations along periodic axes.
pub fn grid_exterior_derivative(alpha: &GridField) -> Result<TwoFormSample> {
    assert_eq!(alpha.components, 2, "expected a 1-form with two components");
    let g = &alpha.grid;
    if g.n[0] < MIN_GRID || g.n[1] < MIN_GRID {
        return Err(Error::GridTooSmall(g.n[0], g.n[1], MIN_GRID));
    }
    let [hu, hv] = g.spacing();
    let cells = [g.cells(0), g.cells(1)];
    let mut density = Vec::with_capacity(cells[0] * cells[1]);
    for i in 0..cells[0] {
        let i1 = g.next(0, i).unwrap();
        for j in 0..cells[1] {
            let j1 = g.next(1, j).unwrap();
            let bottom = 0.5 * hu * (alpha.get(i, j, 0) + alpha.get(i1, j, 0));
            let right = 0.5 * hv * (alpha.get(i1, j, 1) + alpha.get(i1, j1, 1));
            let top = 0.5 * hu * (alpha.get(i, j1, 0) + alpha.get(i1, j1, 0));
            let left = 0.5 * hv * (alpha.get(i, j, 1) + alpha.get(i, j1, 1));
            density.push((bottom + right - top - left) / (hu * hv));
        }
    }
    let mut period_circulation = [None, None];
    if g.domain.periodic[0] {
        let worst = (0..g.n[1])
            .map(|j| (0..g.n[0]).map(|i| alpha.get(i, j, 0)).sum::<f64>() * hu)
            .fold(0.0, |m: f64, c| m.max(c.abs()));
        period_circulation[0] = Some(worst);
    }
    if g.domain.periodic[1] {
        let worst = (0..g.n[0])
            .map(|i| (0..g.n[1]).map(|j| alpha.get(i, j, 1)).sum::<f64>() * hv)
            .fold(0.0, |m: f64, c| m.max(c.abs()));
        period_circulation[1] = Some(worst);
    }
    Ok(TwoFormSample { cells, density, period_circulation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn patch() -> Domain {
        Domain::patch([-1.0, 1.0], [-1.0, 1.0])
    }

    #[test]
    fn node_layout() {
        let g = GridSpec::new(Domain::torus(), 8, 4).unwrap();
        assert_eq!(g.len(), 32);
        assert!((g.coord(0, 0) - TAU / 16.0).abs() < 1e-15);
        assert_eq!(g.next(0, 7), Some(0));
        let p = GridSpec::new(patch(), 5, 5).unwrap();
        assert_eq!(p.coord(0, 0), -1.0);
        assert_eq!(p.coord(0, 4), 1.0);
        assert_eq!(p.next(1, 4), None);
        assert_eq!(p.cells(0), 4);
        assert!(GridSpec::new(patch(), 3, 8).is_err());
    }

    #[test]
    fn oracle_on_constant_field() {
        let j = fd_jet_oracle(|_| Ok(3.5), &[0.2, 0.1], 1e-3, &patch()).unwrap();
        assert_eq!(j.value(), 3.5);
        assert_eq!(j.grad(), &[0.0, 0.0]);
        assert_eq!(j.hess_packed(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn oracle_on_sine() {
        let j = fd_jet_oracle(|p| Ok(p[0].sin()), &[0.0, 0.0], 1e-3, &patch()).unwrap();
        assert!((j.d(0) - 1.0).abs() < 1e-6);
        assert!(j.dd(0, 0).abs() < 1e-6);
    }

    #[test]
    fn oracle_rejects_bad_steps_and_stencils() {
        assert!(matches!(fd_jet_oracle(|_| Ok(0.0), &[0.0, 0.0], 1.0, &patch()), Err(Error::InvalidStep(_))));
        assert!(matches!(
            fd_jet_oracle(|_| Ok(0.0), &[0.99999, 0.0], 1e-3, &patch()),
            Err(Error::StencilOutOfDomain { .. })
        ));
        assert!(fd_jet_oracle(|_| Ok(0.0), &[0.0, 0.0], 1e-3, &Domain::torus()).is_ok());
    }

    #[test]
    fn second_order_convergence_of_oracle() {
        // exp(u) cos(v): error ratio ≈ 4 per halving of h
        let exact = |p: &[f64]| {
            let s = Jet2::seeds(p);
            s[0].exp() * s[1].cos()
        };
        let p = [0.3, 0.7];
        let truth = exact(&p);
        let steps = [1e-2, 5e-3, 2.5e-3];
        let errors: Vec<f64> = steps
            .iter()
            .map(|&h| fd_jet_oracle(|q| Ok(exact(q).value()), &p, h, &patch()).unwrap().max_abs_diff(&truth))
            .collect();
        let order = convergence_order(&steps, &errors);
        assert!((order - 2.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn area_form_has_unit_density() {
        let g = GridSpec::new(patch(), 9, 7).unwrap();
        let alpha = GridField::sample(g, 2, |[u, v]| vec![-v / 2.0, u / 2.0]);
        let d = grid_exterior_derivative(&alpha).unwrap();
        assert_eq!(d.cells, [8, 6]);
        assert!(d.density.iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert_eq!(d.period_circulation, [None, None]);
    }

    #[test]
    fn exact_forms_have_vanishing_circulation() {
        // α = dτ with τ = sin(u) cos(2v) on the torus; errors shrink as O(h²)
        let mut last = f64::INFINITY;
        for n in [16, 32, 64] {
            let g = GridSpec::new(Domain::torus(), n, n).unwrap();
            let alpha = GridField::sample(g, 2, |[u, v]| vec![u.cos() * (2.0 * v).cos(), -2.0 * u.sin() * (2.0 * v).sin()]);
            let d = grid_exterior_derivative(&alpha).unwrap();
            let m = d.max_abs_density();
            assert!(m < last / 3.0 || m < 1e-12);
            last = m;
            assert!(d.period_circulation[0].unwrap() < 1e-12);
            assert!(d.period_circulation[1].unwrap() < 1e-12);
        }
    }
}
