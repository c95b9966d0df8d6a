//! Bianchi permutability: potentials of closed `α_τ`, the `r`-operators and
//! their commutator, the Demoulin family of Ribaucour functions
//!
//! ```text
//! τ_θ = (cos θ e^{τ̃1} τ0 + sin θ e^{τ̃0} τ1) / (cos θ e^{τ̃1} + sin θ e^{τ̃0}),   α_{τi} = −dτ̃i,
//! ```
//!
//! the parallel sections `σi = e^{τ̃j} / (τi − τj) · (ξ − τi f − τi t0 + t1)`,
//! and the dual-family system for `τ̂0`.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::chart::Chart;
use crate::config::{scaled, Tolerances};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{fd_jet_oracle_vec, grid_exterior_derivative, GridField, GridSpec};
use crate::jet::Jet2;
use crate::jet_matrix::JetMatrix;
use crate::lie::{LegendreFrame, LieVector};
use crate::sweep::{classify, frames_on_grid, tau_jets_on_grid, transforms_on_grid, Closedness};
use crate::transform::{transform, TransformResult};

/// A sampled 1-form, optionally with its Jacobian `∂_j α_i` (stored at `2i + j`).
#[derive(Debug, Clone, PartialEq)]
pub struct OneForm {
    pub values: GridField,
    pub jacobian: Option<GridField>,
}

impl OneForm {
    /// `α_τ` with its exact first partials from a grid of transforms.
    pub fn from_results(grid: GridSpec, results: &[TransformResult]) -> Self {
        let values = results.iter().flat_map(|r| r.alpha_values()).collect();
        let jac = results.iter().all(TransformResult::has_alpha_derivatives).then(|| {
            let data = results
                .iter()
                .flat_map(|r| (0..2).flat_map(move |i| (0..2).map(move |j| r.alpha[i].d(j))))
                .collect();
            GridField::from_values(grid, 4, data)
        });
        OneForm { values: GridField::from_values(grid, 2, values), jacobian: jac }
    }

    /// `∫ α` along the coordinate edge leaving node `(i, j)` in direction `axis`.
    /// With a Jacobian the trapezoid rule gets its endpoint-derivative correction
    /// (coefficient_relation order); without one it is the plain trapezoid rule.
    fn edge(&self, axis: usize, i: usize, j: usize) -> Option<f64> {
        let g = &self.values.grid;
        let (i1, j1) = if axis == 0 { (g.next(0, i)?, j) } else { (i, g.next(1, j)?) };
        let h = g.step(axis);
        let mut s = 0.5 * h * (self.values.get(i, j, axis) + self.values.get(i1, j1, axis));
        if let Some(jac) = &self.jacobian {
            let k = 2 * axis + axis;
            s += h * h / 12.0 * (jac.get(i, j, k) - jac.get(i1, j1, k));
        }
        Some(s)
    }
}

/// `τ̃` with `α = −dτ̃` and `τ̃(base) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Potential {
    pub values: GridField,
    pub base: [usize; 2],
    /// Largest `|∮ α|` over elementary cells.
    pub loop_residual: f64,
    /// Largest `|∮ α|` over closed coordinate lines, per periodic axis.
    pub period_residual: [Option<f64>; 2],
}

impl Potential {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j, 0)
    }
}

/// Integrates `−α` along the base row, then along every column.
pub fn integrate_potential(alpha: &OneForm, base: [usize; 2], tol: f64) -> Result<Potential> {
    let g = alpha.values.grid;
    let [nu, nv] = g.n;
    let mut values = GridField::zeros(g, 1);
    let line = |axis: usize, fixed: usize, start: usize, n: usize, periodic: bool| -> Vec<(usize, f64)> {
        // (index, integral from start) along one coordinate line
        let at = |k: usize| if axis == 0 { (k, fixed) } else { (fixed, k) };
        let mut out = vec![(start, 0.0)];
        let mut acc = 0.0;
        let mut k = start;
        let forward = if periodic { n - 1 } else { n - 1 - start };
        for _ in 0..forward {
            let (i, j) = at(k);
            acc += alpha.edge(axis, i, j).unwrap();
            k = (k + 1) % n;
            out.push((k, acc));
        }
        if !periodic {
            let mut acc = 0.0;
            let mut k = start;
            while k > 0 {
                let (i, j) = at(k - 1);
                acc -= alpha.edge(axis, i, j).unwrap();
                k -= 1;
                out.push((k, acc));
            }
        }
        out
    };
    let [i0, j0] = base;
    let row = line(0, j0, i0, nu, g.domain.periodic[0]);
    for (i, along_u) in row {
        for (j, along_v) in line(1, i, j0, nv, g.domain.periodic[1]) {
            values.set(i, j, 0, -(along_u + along_v));
        }
    }

    let mut loop_residual = 0.0f64;
    for i in 0..g.cells(0) {
        let i1 = g.next(0, i).unwrap();
        for j in 0..g.cells(1) {
            let j1 = g.next(1, j).unwrap();
            let c = alpha.edge(0, i, j).unwrap() + alpha.edge(1, i1, j).unwrap()
                - alpha.edge(0, i, j1).unwrap()
                - alpha.edge(1, i, j).unwrap();
            loop_residual = loop_residual.max(c.abs());
        }
    }
    let mut period_residual = [None, None];
    for axis in 0..2 {
        if g.domain.periodic[axis] {
            let other = 1 - axis;
            let worst = (0..g.n[other])
                .map(|f| {
                    (0..g.n[axis])
                        .map(|k| if axis == 0 { alpha.edge(0, k, f).unwrap() } else { alpha.edge(1, f, k).unwrap() })
                        .sum::<f64>()
                        .abs()
                })
                .fold(0.0, f64::max);
            period_residual[axis] = Some(worst);
        }
    }
    let period_max = period_residual.iter().flatten().fold(0.0f64, |m, x| m.max(*x));
    if !(loop_residual <= tol && period_max <= tol) {
        return Err(Error::PathDependence { loop_residual, period_residual: period_max, tolerance: tol });
    }
    Ok(Potential { values, base, loop_residual, period_residual })
}

/// `τ̃` as a 2-jet at node `k`: value from the integration, derivatives from `−α`.
fn potential_jet(potential: &Potential, result: &TransformResult, k: usize) -> Jet2 {
    let m = result.alpha.len();
    let value = potential.values.data[k];
    let grad: Vec<f64> = result.alpha.iter().map(|a| -a.value()).collect();
    let mut hess = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            hess[i * m + j] = -0.5 * (result.alpha[i].d(j) + result.alpha[j].d(i));
        }
    }
    Jet2::from_parts(value, &grad, &hess)
}

/// `α̂ = (a − 1)⁻¹ (df̂, f)` at the value level.
pub fn alpha_hat(frame: &LegendreFrame, result: &TransformResult) -> Vec<f64> {
    let f = frame.f.value();
    let am1 = result.a.value() - 1.0;
    (0..frame.dim()).map(|i| result.f_hat.d(i).inner(&f) / am1).collect()
}

/// `B_i = ∂_i f − (f + t0) α_i` and `B̂_i = ∂_i f̂ − (f̂ + t0) α̂_i`.
pub fn beta_legs(frame: &LegendreFrame, result: &TransformResult) -> (Vec<LieVector>, Vec<LieVector>) {
    let m = frame.dim();
    let t0 = LieVector::t0(frame.spatial_len());
    let p = &frame.f.value() + &t0;
    let q = &result.f_hat.value() + &t0;
    let ah = alpha_hat(frame, result);
    let b = (0..m).map(|i| &frame.f.d(i) - &p.scale(result.alpha[i].value())).collect();
    let bh = (0..m).map(|i| &result.f_hat.d(i) - &q.scale(ah[i])).collect();
    (b, bh)
}

/// `r_τ` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ROperatorAt {
    /// Row-major `m × m` coordinate matrix.
    pub entries: Vec<f64>,
    /// `max |B̂_j − Σ_k B_k r_kj|`.
    pub relation_residual: f64,
    /// Asymmetry of `(df, df) · r`.
    pub symmetry_residual: f64,
    pub b_hat: Vec<LieVector>,
}

/// Solves `(df − (f+t0)α) ∘ r = df̂ − (f̂+t0)α̂` by normal equations.
pub fn r_operator(frame: &LegendreFrame, result: &TransformResult, singular_tol: f64) -> Result<ROperatorAt> {
    let m = frame.dim();
    let (b, bh) = beta_legs(frame, result);
    let gram = JetMatrix::from_fn(m, m, |i, j| Jet2::constant(m, b[i].inner(&b[j])));
    let inv = gram
        .inverse_with_tol(singular_tol)
        .map_err(|_| Error::IllPosed { point: frame.point.clone() })?;
    let mut entries = vec![0.0; m * m];
    for j in 0..m {
        let rhs: Vec<Jet2> = (0..m).map(|l| Jet2::constant(m, b[l].inner(&bh[j]))).collect();
        let col = inv.mul_vec(&rhs);
        for k in 0..m {
            entries[k * m + j] = col[k].value();
        }
    }
    let mut relation_residual = 0.0f64;
    for j in 0..m {
        let mut recon = b[0].scale(entries[j]);
        for k in 1..m {
            recon = &recon + &b[k].scale(entries[k * m + j]);
        }
        relation_residual = relation_residual.max(recon.max_abs_diff(&bh[j]));
    }
    let induced: Vec<f64> = (0..m * m).map(|k| frame.f.d(k / m).inner(&frame.f.d(k % m))).collect();
    let mut symmetry_residual = 0.0f64;
    for i in 0..m {
        for j in i + 1..m {
            let ij: f64 = (0..m).map(|k| induced[i * m + k] * entries[k * m + j]).sum();
            let ji: f64 = (0..m).map(|k| induced[j * m + k] * entries[k * m + i]).sum();
            symmetry_residual = symmetry_residual.max(scaled(ij - ji, ij.abs().max(ji.abs())));
        }
    }
    Ok(ROperatorAt { entries, relation_residual, symmetry_residual, b_hat: bh })
}

/// Frobenius norm of `[r0, r1]`.
pub fn commutator_norm(r0: &[f64], r1: &[f64], m: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            let c: f64 = (0..m).map(|k| r0[i * m + k] * r1[k * m + j] - r1[i * m + k] * r0[k * m + j]).sum();
            s += c * c;
        }
    }
    s.sqrt()
}

/// `(B̂0 ∧ B̂1)(∂_u, ∂_v)`: the wedge form of the Bianchi condition.
pub fn bianchi_wedge(b0: &[LieVector], b1: &[LieVector]) -> f64 {
    let m = b0.len();
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in i + 1..m {
            worst = worst.max((b0[i].inner(&b1[j]) - b0[j].inner(&b1[i])).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BianchiCheck {
    pub commutator_norm: f64,
    pub wedge: f64,
    pub relation_residual: f64,
    pub symmetry_residual: f64,
}

pub fn bianchi_check(r0: &[ROperatorAt], r1: &[ROperatorAt], m: usize) -> BianchiCheck {
    let mut out = BianchiCheck { commutator_norm: 0.0, wedge: 0.0, relation_residual: 0.0, symmetry_residual: 0.0 };
    for (a, b) in r0.iter().zip(r1) {
        out.commutator_norm = out.commutator_norm.max(commutator_norm(&a.entries, &b.entries, m));
        out.wedge = out.wedge.max(bianchi_wedge(&a.b_hat, &b.b_hat));
        out.relation_residual = out.relation_residual.max(a.relation_residual).max(b.relation_residual);
        out.symmetry_residual = out.symmetry_residual.max(a.symmetry_residual).max(b.symmetry_residual);
    }
    out
}

/// `(cos θ, sin θ)`, exact at multiples of `π/2`.
pub fn exact_cos_sin(theta: f64) -> (f64, f64) {
    let k = theta / FRAC_PI_2;
    let r = k.round();
    if (k - r).abs() < 1e-12 {
        match (r as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        (theta.cos(), theta.sin())
    }
}

/// One member `τ_θ` of the family at a point; `None` where the denominator is
/// below `eps`. Exact endpoints: `sin θ = 0` returns `τ0`, `cos θ = 0` returns `τ1`.
pub fn family_tau(tau0: &Jet2, tau1: &Jet2, tilde0: &Jet2, tilde1: &Jet2, theta: f64, eps: f64) -> Option<Jet2> {
    let (c, s) = exact_cos_sin(theta);
    if s == 0.0 {
        return Some(*tau0);
    }
    if c == 0.0 {
        return Some(*tau1);
    }
    let w0 = tilde1.exp() * c;
    let w1 = tilde0.exp() * s;
    let denom = w0 + w1;
    if !(denom.value().abs() >= eps) {
        return None;
    }
    Some((w0 * *tau0 + w1 * *tau1) / denom)
}

/// Two certified Ribaucour functions with everything needed for the family.
#[derive(Debug, Clone)]
pub struct DemoulinFamily {
    pub grid: GridSpec,
    pub tau0_src: String,
    pub tau1_src: String,
    pub frames: Vec<LegendreFrame>,
    pub tau0: Vec<Jet2>,
    pub tau1: Vec<Jet2>,
    pub results0: Vec<TransformResult>,
    pub results1: Vec<TransformResult>,
    pub closedness: [Closedness; 2],
    pub tilde0: Potential,
    pub tilde1: Potential,
    pub tilde0_jets: Vec<Jet2>,
    pub tilde1_jets: Vec<Jet2>,
    pub r0: Vec<ROperatorAt>,
    pub r1: Vec<ROperatorAt>,
    pub bianchi: BianchiCheck,
    /// Denominator mask threshold.
    pub eps: f64,
}

impl DemoulinFamily {
    /// Certifies both functions (regular, closed, pointwise distinct),
    /// integrates their potentials and evaluates the Bianchi condition.
    /// The Bianchi tolerance is not enforced here; see [`DemoulinFamily::require_bianchi`].
    pub fn build(chart: &Chart, grid: &GridSpec, tau0: &Expr, tau1: &Expr, tol: &Tolerances) -> Result<Self> {
        let frames = frames_on_grid(chart, grid)?;
        let t0 = tau_jets_on_grid(tau0, grid)?;
        let t1 = tau_jets_on_grid(tau1, grid)?;
        let results0 = transforms_on_grid(&frames, &t0, tol.singular)?;
        let results1 = transforms_on_grid(&frames, &t1, tol.singular)?;
        let closed = |rs: &[TransformResult]| {
            classify(grid, rs.iter().enumerate().map(|(k, r)| (k, r.max_abs_dalpha(), r.max_abs_alpha())), tol.closedness)
        };
        let closedness = [closed(&results0), closed(&results1)];
        for (c, src) in closedness.iter().zip([tau0, tau1]) {
            if !c.ribaucour {
                return Err(Error::NotRibaucour { which: src.to_string(), max_dalpha: c.max_dalpha });
            }
        }
        let (gap, at) = t0
            .iter()
            .zip(&t1)
            .enumerate()
            .map(|(k, (a, b))| ((a.value() - b.value()).abs(), k))
            .fold((f64::INFINITY, 0), |acc, x| if x.0 < acc.0 { x } else { acc });
        if !(gap > tol.distinct) {
            let [i, j] = grid.unindex(at);
            return Err(Error::NotPointwiseDistinct { gap, point: grid.node(i, j).to_vec() });
        }
        let tilde0 = integrate_potential(&OneForm::from_results(*grid, &results0), [0, 0], tol.potential)?;
        let tilde1 = integrate_potential(&OneForm::from_results(*grid, &results1), [0, 0], tol.potential)?;
        let tilde0_jets = (0..grid.len()).map(|k| potential_jet(&tilde0, &results0[k], k)).collect();
        let tilde1_jets = (0..grid.len()).map(|k| potential_jet(&tilde1, &results1[k], k)).collect();
        let r0 = frames
            .par_iter()
            .zip(&results0)
            .map(|(f, r)| r_operator(f, r, tol.singular))
            .collect::<Result<Vec<_>>>()?;
        let r1 = frames
            .par_iter()
            .zip(&results1)
            .map(|(f, r)| r_operator(f, r, tol.singular))
            .collect::<Result<Vec<_>>>()?;
        let bianchi = bianchi_check(&r0, &r1, 2);
        let eps = tol.mask * (tilde0.values.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp()
            + tilde1.values.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp());
        Ok(DemoulinFamily {
            grid: *grid,
            tau0_src: tau0.to_string(),
            tau1_src: tau1.to_string(),
            frames,
            tau0: t0,
            tau1: t1,
            results0,
            results1,
            closedness,
            tilde0,
            tilde1,
            tilde0_jets,
            tilde1_jets,
            r0,
            r1,
            bianchi,
            eps,
        })
    }

    pub fn require_bianchi(&self, tol: &Tolerances) -> Result<()> {
        if !(self.bianchi.commutator_norm <= tol.bianchi) {
            return Err(Error::BianchiViolation { norm: self.bianchi.commutator_norm, tolerance: tol.bianchi });
        }
        Ok(())
    }
}

/// `τ_θ` on the grid with its mask of singular denominators.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyMember {
    pub theta: f64,
    pub jets: Vec<Option<Jet2>>,
    pub masked_fraction: f64,
}

impl FamilyMember {
    /// Values with `NaN` at masked nodes.
    pub fn values(&self, grid: GridSpec) -> GridField {
        GridField::from_values(grid, 1, self.jets.iter().map(|j| j.map_or(f64::NAN, |j| j.value())).collect())
    }
}

pub fn demoulin_tau(family: &DemoulinFamily, theta: f64) -> Result<FamilyMember> {
    let jets: Vec<Option<Jet2>> = (0..family.grid.len())
        .map(|k| {
            family_tau(
                &family.tau0[k],
                &family.tau1[k],
                &family.tilde0_jets[k],
                &family.tilde1_jets[k],
                theta,
                family.eps,
            )
        })
        .collect();
    let masked = jets.iter().filter(|j| j.is_none()).count();
    let masked_fraction = masked as f64 / jets.len() as f64;
    if masked_fraction > 0.5 {
        return Err(Error::FullyMasked { theta, fraction: masked_fraction });
    }
    Ok(FamilyMember { theta, jets, masked_fraction })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberReport {
    pub theta: f64,
    pub masked_fraction: f64,
    /// Unmasked nodes where `τ_θ` hits a curvature sphere.
    pub nonregular: usize,
    pub max_dalpha: f64,
    pub threshold: f64,
    pub ribaucour: bool,
}

/// Re-runs the closedness test for `τ_θ` on its unmasked, regular nodes.
pub fn verify_member(family: &DemoulinFamily, member: &FamilyMember, tol: &Tolerances) -> MemberReport {
    let outcomes: Vec<Option<Option<(f64, f64)>>> = family
        .frames
        .par_iter()
        .zip(&member.jets)
        .map(|(fr, j)| {
            j.as_ref().map(|t| match transform(fr, t, tol.singular) {
                Ok(r) => Some((r.max_abs_dalpha(), r.max_abs_alpha())),
                Err(_) => None,
            })
        })
        .collect();
    let nonregular = outcomes.iter().filter(|o| matches!(o, Some(None))).count();
    let c = classify(
        &family.grid,
        outcomes.iter().enumerate().filter_map(|(k, o)| o.flatten().map(|(d, a)| (k, d, a))),
        tol.closedness,
    );
    MemberReport {
        theta: member.theta,
        masked_fraction: member.masked_fraction,
        nonregular,
        max_dalpha: c.max_dalpha,
        threshold: c.threshold,
        ribaucour: c.ribaucour,
    }
}

/// Per-member entry of the family report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberEntry {
    pub theta: f64,
    pub masked_fraction: f64,
    pub nonregular: usize,
    pub max_dalpha: f64,
    pub ribaucour: bool,
    /// `τ_θ` equals `τ0` (or `τ1`) bit for bit when `θ` is an endpoint; true otherwise.
    pub endpoints_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualSummary {
    pub consistency: f64,
    pub gamma_identity_residual: f64,
    pub gamma_identity_plaquette: f64,
}

impl From<&DualFamily> for DualSummary {
    fn from(d: &DualFamily) -> Self {
        DualSummary {
            consistency: d.consistency,
            gamma_identity_residual: d.gamma_identity_residual,
            gamma_identity_plaquette: d.gamma_identity_plaquette,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyReport {
    pub tau0: String,
    pub tau1: String,
    pub grid: [usize; 2],
    pub bianchi_norm: f64,
    pub bianchi_wedge: f64,
    pub potential_loop_residual: [f64; 2],
    pub parallel_residual: f64,
    pub members: Vec<MemberEntry>,
    pub dual: Option<DualSummary>,
}

/// Whether a member reproduces the generating function at the endpoints.
pub fn endpoints_ok(family: &DemoulinFamily, member: &FamilyMember) -> bool {
    let (c, s) = exact_cos_sin(member.theta);
    let target = if s == 0.0 {
        &family.tau0
    } else if c == 0.0 {
        &family.tau1
    } else {
        return true;
    };
    member.jets.iter().zip(target).all(|(a, b)| a.as_ref() == Some(b))
}

impl FamilyReport {
    pub fn new(family: &DemoulinFamily, members: &[(FamilyMember, MemberReport)], parallel_residual: f64, dual: Option<&DualFamily>) -> Self {
        FamilyReport {
            tau0: family.tau0_src.clone(),
            tau1: family.tau1_src.clone(),
            grid: family.grid.n,
            bianchi_norm: family.bianchi.commutator_norm,
            bianchi_wedge: family.bianchi.wedge,
            potential_loop_residual: [family.tilde0.loop_residual, family.tilde1.loop_residual],
            parallel_residual,
            members: members
                .iter()
                .map(|(m, r)| MemberEntry {
                    theta: r.theta,
                    masked_fraction: r.masked_fraction,
                    nonregular: r.nonregular,
                    max_dalpha: r.max_dalpha,
                    ribaucour: r.ribaucour,
                    endpoints_ok: endpoints_ok(family, m),
                })
                .collect(),
            dual: dual.map(DualSummary::from),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionGauge {
    /// `u_i = e^{τ̃j} / (τi − τj)`.
    Parallel,
    /// `u_i = 1 / (τi − τj)`; not parallel unless `τj` is constant.
    DropExponential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelSections {
    pub u0: GridField,
    pub u1: GridField,
    /// `max |(dσi, f̂j + t0)|` over both sections, all nodes and directions.
    pub residual: f64,
}

pub fn parallel_sections(family: &DemoulinFamily, gauge: SectionGauge) -> ParallelSections {
    let grid = family.grid;
    let per_node: Vec<([f64; 2], f64)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let fr = &family.frames[k];
            let m = fr.dim();
            let n = fr.spatial_len();
            let t0 = LieVector::t0(n);
            let t1 = LieVector::t1(n);
            let f = fr.f.value();
            let xi = fr.xi.value();
            let taus = [family.tau0[k], family.tau1[k]];
            let results = [&family.results0[k], &family.results1[k]];
            let tildes = [family.tilde0.values.data[k], family.tilde1.values.data[k]];
            let mut us = [0.0; 2];
            let mut worst = 0.0f64;
            for i in 0..2 {
                let j = 1 - i;
                let diff = taus[i] - taus[j];
                let exp_factor = match gauge {
                    SectionGauge::Parallel => tildes[j].exp(),
                    SectionGauge::DropExponential => 1.0,
                };
                let u = exp_factor / diff.value();
                us[i] = u;
                let p = &f + &t0;
                let sigma_bar = &(&(&xi - &f.scale(taus[i].value())) - &t0.scale(taus[i].value())) + &t1;
                let q = &results[j].f_hat.value() + &t0;
                for d in 0..m {
                    let dlog_exp = match gauge {
                        SectionGauge::Parallel => -results[j].alpha[d].value(),
                        SectionGauge::DropExponential => 0.0,
                    };
                    let dlog_u = dlog_exp - diff.d(d) / diff.value();
                    let dsigma_bar = &(&fr.xi.d(d) - &fr.f.d(d).scale(taus[i].value())) - &p.scale(taus[i].d(d));
                    let dsigma = (&sigma_bar.scale(dlog_u) + &dsigma_bar).scale(u);
                    worst = worst.max(dsigma.inner(&q).abs());
                }
            }
            (us, worst)
        })
        .collect();
    let u0 = GridField::from_values(grid, 1, per_node.iter().map(|(u, _)| u[0]).collect());
    let u1 = GridField::from_values(grid, 1, per_node.iter().map(|(u, _)| u[1]).collect());
    let residual = per_node.iter().fold(0.0f64, |m, (_, r)| m.max(*r));
    ParallelSections { u0, u1, residual }
}

/// Driving forms of the dual-family system at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct DualForms {
    /// `α_{τ1} − α̂_{τ0} + d ln|τ1 − τ0|`.
    pub eta: Vec<f64>,
    /// From `(df̂0 − (f̂0+t0)α̂0, f̂1 + t0) = (τ1 − τ0)(a1 − 1) γ`.
    pub gamma: Vec<f64>,
    pub tau0: f64,
    /// `ln(1 − a0)`.
    pub log_one_minus_a0: f64,
}

pub fn dual_forms(chart: &Chart, tau0: &Expr, tau1: &Expr, point: &[f64], singular_tol: f64) -> Result<DualForms> {
    let fr = chart.frame(point)?;
    let t0 = tau0.jet_at(&fr.point)?;
    let t1 = tau1.jet_at(&fr.point)?;
    let r0 = transform(&fr, &t0, singular_tol)?;
    let r1 = transform(&fr, &t1, singular_tol)?;
    let (_, bh0) = beta_legs(&fr, &r0);
    let ah0 = alpha_hat(&fr, &r0);
    let q1 = &r1.f_hat.value() + &LieVector::t0(fr.spatial_len());
    let diff = t1 - t0;
    let norm = diff.value() * (r1.a.value() - 1.0);
    let m = fr.dim();
    let gamma = (0..m).map(|i| bh0[i].inner(&q1) / norm).collect();
    let eta = (0..m).map(|i| r1.alpha[i].value() - ah0[i] + diff.d(i) / diff.value()).collect();
    Ok(DualForms { eta, gamma, tau0: t0.value(), log_one_minus_a0: (1.0 - r0.a.value()).ln() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualFamily {
    pub grid: GridSpec,
    pub gamma: GridField,
    pub tau_hat0: GridField,
    pub v: GridField,
    /// `max |τ̂0_row-first − τ̂0_column-first|`.
    pub consistency: f64,
    /// `max |d((τ0 − τ̂0) γ)|` evaluated pointwise as `z (η ∧ γ + dγ)`.
    pub gamma_identity_residual: f64,
    /// Same quantity from plaquette circulations of the sampled `(τ0 − τ̂0) γ`.
    pub gamma_identity_plaquette: f64,
}

const BLOWUP_LOW: f64 = 1e-8;
const BLOWUP_HIGH: f64 = 1e8;

/// Solves `d ln|z| = η + z γ` for `z = τ0 − τ̂0` on a simply connected patch,
/// starting from `z(base) = z0` at node `(0, 0)`, by RK4 along grid lines
/// (row-first and column-first), then recovers `v` from `−d ln|v| = d ln|z| + α̂0`.
pub fn dual_family_step(
    chart: &Chart,
    patch: &GridSpec,
    tau0: &Expr,
    tau1: &Expr,
    z0: f64,
    tol: &Tolerances,
) -> Result<DualFamily> {
    let g = *patch;
    let [nu, nv] = g.n;
    let sign = z0.signum();
    let eval = |p: [f64; 2]| dual_forms(chart, tau0, tau1, &p, tol.singular);
    let nodes = g.nodes();
    let at_nodes: Vec<DualForms> = nodes.par_iter().map(|p| eval(*p)).collect::<Result<_>>()?;
    // midpoints of u-edges (i + ½, j) and v-edges (i, j + ½)
    let mid_u: Vec<DualForms> = (0..(nu - 1) * nv)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / nv, k % nv);
            let p = g.node(i, j);
            eval([p[0] + 0.5 * g.step(0), p[1]])
        })
        .collect::<Result<_>>()?;
    let mid_v: Vec<DualForms> = (0..nu * (nv - 1))
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / (nv - 1), k % (nv - 1));
            let p = g.node(i, j);
            eval([p[0], p[1] + 0.5 * g.step(1)])
        })
        .collect::<Result<_>>()?;

    let rhs = |forms: &DualForms, axis: usize, w: f64| forms.eta[axis] + sign * w.exp() * forms.gamma[axis];
    let check = |w: f64, p: [f64; 2]| -> Result<f64> {
        let z = w.exp();
        if !(BLOWUP_LOW..=BLOWUP_HIGH).contains(&z) {
            return Err(Error::BlowUp { point: p.to_vec(), value: z });
        }
        Ok(w)
    };
    // one RK4 step from node (i, j) along `axis`
    let step = |axis: usize, i: usize, j: usize, w: f64| -> Result<f64> {
        let h = g.step(axis);
        let (start, mid, end) = if axis == 0 {
            (&at_nodes[g.index(i, j)], &mid_u[i * nv + j], &at_nodes[g.index(i + 1, j)])
        } else {
            (&at_nodes[g.index(i, j)], &mid_v[i * (nv - 1) + j], &at_nodes[g.index(i, j + 1)])
        };
        let k1 = rhs(start, axis, w);
        let k2 = rhs(mid, axis, w + 0.5 * h * k1);
        let k3 = rhs(mid, axis, w + 0.5 * h * k2);
        let k4 = rhs(end, axis, w + h * k3);
        let next = w + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let (ni, nj) = if axis == 0 { (i + 1, j) } else { (i, j + 1) };
        check(next, g.node(ni, nj))
    };
    let w0 = check(z0.abs().ln(), g.node(0, 0))?;

    let integrate = |first: usize| -> Result<Vec<f64>> {
        let second = 1 - first;
        let mut w = vec![0.0; g.len()];
        let mut spine = vec![w0; g.n[first]];
        for k in 1..g.n[first] {
            let (i, j) = if first == 0 { (k - 1, 0) } else { (0, k - 1) };
            spine[k] = step(first, i, j, spine[k - 1])?;
        }
        let lines: Vec<Vec<f64>> = (0..g.n[first])
            .into_par_iter()
            .map(|a| {
                let mut out = vec![spine[a]; g.n[second]];
                for k in 1..g.n[second] {
                    let (i, j) = if first == 0 { (a, k - 1) } else { (k - 1, a) };
                    out[k] = step(second, i, j, out[k - 1])?;
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        for (a, line) in lines.into_iter().enumerate() {
            for (k, val) in line.into_iter().enumerate() {
                let (i, j) = if first == 0 { (a, k) } else { (k, a) };
                w[g.index(i, j)] = val;
            }
        }
        Ok(w)
    };
    let w_row = integrate(0)?;
    let w_col = integrate(1)?;

    let tau_hat = |w: &[f64]| -> Vec<f64> { (0..g.len()).map(|k| at_nodes[k].tau0 - sign * w[k].exp()).collect() };
    let th_row = tau_hat(&w_row);
    let th_col = tau_hat(&w_col);
    let consistency = th_row.iter().zip(&th_col).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if !(consistency <= tol.dual_consistency) {
        return Err(Error::PathDependence {
            loop_residual: consistency,
            period_residual: 0.0,
            tolerance: tol.dual_consistency,
        });
    }

    // v from the closed α̂0 = d ln(1 − a0) + dτ̃0, with α0 = −dτ̃0 on the patch
    let frames = frames_on_grid(chart, &g)?;
    let t0 = tau_jets_on_grid(tau0, &g)?;
    let results0 = transforms_on_grid(&frames, &t0, tol.singular)?;
    let tilde0 = integrate_potential(&OneForm::from_results(g, &results0), [0, 0], tol.potential)?;
    let l0 = at_nodes[0].log_one_minus_a0;
    let v: Vec<f64> = (0..g.len())
        .map(|k| (-(w_row[k] - w0) - (at_nodes[k].log_one_minus_a0 - l0) - tilde0.values.data[k]).exp())
        .collect();

    // d(zγ) = z (η ∧ γ + dγ) once dz = z η + z² γ; dγ by central differences
    let fd_h = 1e-4;
    let gamma_sampler = |p: &[f64]| eval([p[0], p[1]]).map(|f| f.gamma);
    let identity: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|k| {
            let p = nodes[k];
            let jets = fd_jet_oracle_vec(gamma_sampler, &p, fd_h, &chart.domain)?;
            let dgamma = jets[1].d(0) - jets[0].d(1);
            let f = &at_nodes[k];
            let wedge = f.eta[0] * f.gamma[1] - f.eta[1] * f.gamma[0];
            Ok((sign * w_row[k].exp() * (wedge + dgamma)).abs())
        })
        .collect::<Result<_>>()?;
    let gamma_identity_residual = identity.iter().fold(0.0f64, |m, x| m.max(*x));

    let gamma = GridField::from_values(g, 2, at_nodes.iter().flat_map(|f| f.gamma.clone()).collect());
    let z_gamma = GridField::from_values(
        g,
        2,
        (0..g.len()).flat_map(|k| {
            let z = sign * w_row[k].exp();
            [z * at_nodes[k].gamma[0], z * at_nodes[k].gamma[1]]
        }).collect(),
    );
    let gamma_identity_plaquette = grid_exterior_derivative(&z_gamma)?.max_abs_density();

    Ok(DualFamily {
        grid: g,
        gamma,
        tau_hat0: GridField::from_values(g, 1, th_row),
        v: GridField::from_values(g, 1, v),
        consistency,
        gamma_identity_residual,
        gamma_identity_plaquette,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{ChartSpec, Domain};
    use crate::expr::parse_tau;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

    fn torus() -> Chart {
        ChartSpec::clifford_torus(FRAC_1_SQRT_2).compile().unwrap()
    }

    #[test]
    fn zero_form_integrates_to_zero() {
        let g = GridSpec::new(Domain::torus(), 8, 8).unwrap();
        let alpha = OneForm { values: GridField::zeros(g, 2), jacobian: None };
        let p = integrate_potential(&alpha, [0, 0], 1e-12).unwrap();
        assert_eq!(p.values.max_abs(), 0.0);
        assert_eq!(p.loop_residual, 0.0);
    }

    #[test]
    fn non_periodic_integration_both_directions() {
        // α = −d(u² + uv) on a patch with base in the interior
        let g = GridSpec::new(Domain::patch([-1.0, 1.0], [0.0, 2.0]), 11, 9).unwrap();
        let values = GridField::sample(g, 2, |[u, v]| vec![-(2.0 * u + v), -u]);
        let jac = GridField::sample(g, 4, |_| vec![-2.0, -1.0, -1.0, 0.0]);
        let p = integrate_potential(&OneForm { values, jacobian: Some(jac) }, [5, 4], 1e-12).unwrap();
        let [u0, v0] = g.node(5, 4);
        for i in 0..11 {
            for j in 0..9 {
                let [u, v] = g.node(i, j);
                let exact = (u * u + u * v) - (u0 * u0 + u0 * v0);
                assert!((p.get(i, j) - exact).abs() < 1e-13);
            }
        }
        assert_eq!(p.period_residual, [None, None]);
    }

    #[test]
    fn non_closed_form_fails() {
        let g = GridSpec::new(Domain::patch([0.0, 1.0], [0.0, 1.0]), 6, 6).unwrap();
        let values = GridField::sample(g, 2, |[u, v]| vec![-v, u]);
        let err = integrate_potential(&OneForm { values, jacobian: None }, [0, 0], 1e-8).unwrap_err();
        assert!(matches!(err, Error::PathDependence { .. }));
    }

    #[test]
    fn commutator_of_elementary_matrices() {
        let e12 = [0.0, 1.0, 0.0, 0.0];
        let e21 = [0.0, 0.0, 1.0, 0.0];
        assert!(commutator_norm(&e12, &e21, 2) > 1.0);
        let minus_id = [-1.0, 0.0, 0.0, -1.0];
        assert_eq!(commutator_norm(&minus_id, &e12, 2), 0.0);
    }

    #[test]
    fn r_operator_for_zero_tau_is_minus_identity() {
        let fr = torus().frame(&[0.4, 1.3]).unwrap();
        let r = transform(&fr, &Jet2::constant(2, 0.0), 1e-10).unwrap();
        let op = r_operator(&fr, &r, 1e-10).unwrap();
        let expect = [-1.0, 0.0, 0.0, -1.0];
        for k in 0..4 {
            assert!((op.entries[k] - expect[k]).abs() < 1e-14);
        }
        assert!(op.relation_residual < 1e-14);
    }

    #[test]
    fn r_operator_is_diagonal_for_u_only_tau() {
        let p = [0.8, 2.9];
        let fr = torus().frame(&p).unwrap();
        for src in ["0.3*sin(u)", "2"] {
            let t = parse_tau(src).unwrap().jet_at(&p).unwrap();
            let r = transform(&fr, &t, 1e-10).unwrap();
            let op = r_operator(&fr, &r, 1e-10).unwrap();
            assert!(op.entries[1].abs() < 1e-9 && op.entries[2].abs() < 1e-9, "{:?}", op.entries);
            assert!(op.relation_residual < 1e-12 && op.symmetry_residual < 1e-12);
        }
    }

    #[test]
    fn endpoints_and_constant_family() {
        let t0 = Jet2::constant(2, 0.0);
        let t1 = Jet2::constant(2, 2.0);
        let z = Jet2::constant(2, 0.0);
        assert_eq!(family_tau(&t0, &t1, &z, &z, 0.0, 1e-6).unwrap(), t0);
        assert_eq!(family_tau(&t0, &t1, &z, &z, FRAC_PI_2, 1e-6).unwrap(), t1);
        for theta in [0.3, FRAC_PI_4, 1.2] {
            let v = family_tau(&t0, &t1, &z, &z, theta, 1e-6).unwrap();
            let expect = 2.0 * theta.sin() / (theta.cos() + theta.sin());
            assert!((v.value() - expect).abs() < 1e-15);
            assert!(v.is_constant());
        }
        assert!(family_tau(&t0, &t1, &z, &z, 3.0 * FRAC_PI_4, 1e-6).is_none());
    }

    #[test]
    fn gauge_shift_reparametrizes_theta() {
        let s = Jet2::seeds(&[0.3, 0.8]);
        let t0 = s[0].sin() * 0.3;
        let t1 = Jet2::constant(2, 2.0);
        let tilde0 = (t0 + 1.0).ln().unwrap();
        let tilde1 = Jet2::constant(2, 0.0);
        let (c0, c1) = (0.4, -0.25);
        for theta in [0.2, 0.7, 1.1] {
            let shifted = family_tau(&t0, &t1, &(tilde0 + c0), &(tilde1 + c1), theta, 1e-9).unwrap();
            let theta_prime = (theta.tan() * (c0 - c1).exp()).atan();
            let original = family_tau(&t0, &t1, &tilde0, &tilde1, theta_prime, 1e-9).unwrap();
            assert!(shifted.max_abs_diff(&original) < 1e-13);
        }
    }

    #[test]
    fn family_on_small_grid() {
        let g = GridSpec::new(Domain::torus(), 16, 16).unwrap();
        let tol = Tolerances::default();
        let fam = DemoulinFamily::build(&torus(), &g, &parse_tau("0.3*sin(u)").unwrap(), &parse_tau("2").unwrap(), &tol)
            .unwrap();
        fam.require_bianchi(&tol).unwrap();
        let m = demoulin_tau(&fam, 0.0).unwrap();
        assert!(m.jets.iter().zip(&fam.tau0).all(|(a, b)| a.unwrap() == *b));
        let rep = verify_member(&fam, &demoulin_tau(&fam, FRAC_PI_4).unwrap(), &tol);
        assert!(rep.ribaucour, "{rep:?}");
        let ps = parallel_sections(&fam, SectionGauge::Parallel);
        assert!(ps.residual < 1e-10, "{}", ps.residual);
        assert!(parallel_sections(&fam, SectionGauge::DropExponential).residual > 1e-3);
    }

    #[test]
    fn non_ribaucour_generator_is_rejected() {
        let g = GridSpec::new(Domain::torus(), 16, 16).unwrap();
        let err = DemoulinFamily::build(
            &torus(),
            &g,
            &parse_tau("0.3*sin(u)").unwrap(),
            &parse_tau("sin(u)*sin(v)").unwrap(),
            &Tolerances::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotRibaucour { .. }));
    }

    #[test]
    fn dual_step_for_constants_is_an_offset() {
        let patch = GridSpec::new(Domain::patch([0.1, 2.0], [0.1, 2.0]), 8, 8).unwrap();
        let d = dual_family_step(&torus(), &patch, &parse_tau("0.5").unwrap(), &parse_tau("2").unwrap(), 1.0, &Tolerances::default())
            .unwrap();
        assert!(d.gamma.max_abs() < 1e-14);
        assert!(d.tau_hat0.data.iter().all(|t| (t - (0.5 - 1.0)).abs() < 1e-10));
        assert!(d.consistency < 1e-12);
    }

    #[test]
    fn dual_step_for_sine_and_constant() {
        let patch = GridSpec::new(Domain::patch([0.1, 2.0 * PI - 0.1], [0.1, 2.0 * PI - 0.1]), 64, 64).unwrap();
        let d = dual_family_step(
            &torus(),
            &patch,
            &parse_tau("0.3*sin(u)").unwrap(),
            &parse_tau("2").unwrap(),
            1.0,
            &Tolerances::default(),
        )
        .unwrap();
        assert!(d.consistency < 1e-5);
        assert!(d.gamma_identity_residual < 1e-5);
    }

    #[test]
    fn constant_pair_sections() {
        let g = GridSpec::new(Domain::torus(), 8, 8).unwrap();
        let fam = DemoulinFamily::build(&torus(), &g, &parse_tau("0").unwrap(), &parse_tau("2").unwrap(), &Tolerances::default())
            .unwrap();
        let ps = parallel_sections(&fam, SectionGauge::Parallel);
        assert!(ps.u0.data.iter().all(|u| *u == -0.5));
        assert!(ps.u1.data.iter().all(|u| *u == 0.5));
        assert!(ps.residual < 1e-10);
        assert_eq!(fam.bianchi.commutator_norm, 0.0);
    }

    #[test]
    fn quarter_member_closed_form() {
        let g = GridSpec::new(Domain::torus(), 64, 64).unwrap();
        let fam = DemoulinFamily::build(&torus(), &g, &parse_tau("0.3*sin(u)").unwrap(), &parse_tau("2").unwrap(), &Tolerances::default())
            .unwrap();
        let m = demoulin_tau(&fam, FRAC_PI_4).unwrap();
        // potentials are gauged to vanish at node (0, 0)
        let shift = (1.0 + fam.tau0[0].value()).ln();
        for (k, j) in m.jets.iter().enumerate() {
            let t = fam.tau0[k].value();
            let e0 = (1.0 + t).ln() - shift;
            let expect = (t + e0.exp() * 2.0) / (1.0 + e0.exp());
            let err = (j.unwrap().value() - expect).abs();
            assert!(err < 1e-6, "{err}");
        }
    }
}
