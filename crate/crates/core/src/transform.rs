//! Pointwise Ribaucour transform of a Legendre frame.
//!
//! Given `(f, ξ)` and a function `τ` with `−dξ + τ df` non-degenerate, the
//! enveloped congruence `σ = ξ − τf − τt0 + t1` is also enveloped by
//!
//! ```text
//! f̂ = a f + b ξ + (1 − a) f̌,    ξ̂ = ξ − τ f + τ f̂,
//! f̌ = (−dξ + τ df)(∇̄τ),         μ² = |f̌|²,
//! a = 1 − 2 / (τ² + μ² + 1),    b = τ (a − 1),
//! ```
//!
//! where `∇̄` is the gradient of the metric `⟨X, Y⟩₋ = ((−dξ+τdf)X, (−dξ+τdf)Y)`.
//! The pair is Ribaucour iff `α_τ = (df, −f̌)` is closed.
//!
//! Everything runs in jet arithmetic: with 2-jet inputs the outputs `a`, `b`,
//! `f̂`, `ξ̂` and `α` carry exact first partials, which is what `dα` needs.

use crate::config::{scaled, Tolerances};
use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::jet_matrix::{JetMatrix, MatrixError};
use crate::lie::{lift_frame, LegendreFrame, LieJet, LieVector};
use crate::chart::CUSTOM_CONTACT_TOL;

/// Gram matrix of `⟨,⟩₋` in the coordinate basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MinusMetric {
    pub gram: JetMatrix,
    pub det_value: f64,
    pub threshold: f64,
    /// `(−dξ + τ df)(∂_i)` for each coordinate direction.
    pub legs: Vec<LieJet>,
}

impl MinusMetric {
    /// Value-level determinant relative to its threshold (> 1 means regular).
    pub fn margin(&self) -> f64 {
        self.det_value.abs() / self.threshold
    }
}

fn not_regular(frame: &LegendreFrame, e: MatrixError) -> Error {
    match e {
        MatrixError::SingularMatrix { det, threshold } => {
            Error::NotRegular { point: frame.point.clone(), det, threshold }
        }
        other => other.into(),
    }
}

pub fn minus_metric(frame: &LegendreFrame, tau: &Jet2, singular_tol: f64) -> Result<MinusMetric> {
    let m = frame.dim();
    let legs = (0..m)
        .map(|i| {
            let dxi = frame.xi.partial(i)?;
            let df = frame.f.partial(i)?;
            Ok(dxi.zip_with(&df, |x, f| -x + *tau * f))
        })
        .collect::<Result<Vec<LieJet>>>()?;
    let gram = JetMatrix::from_fn(m, m, |i, j| legs[i].inner(&legs[j]));
    let det_value = gram.det()?.value();
    let threshold = gram.singularity_threshold(singular_tol);
    if !(det_value.abs() > threshold) {
        return Err(Error::NotRegular { point: frame.point.clone(), det: det_value, threshold });
    }
    Ok(MinusMetric { gram, det_value, threshold, legs })
}

/// Pointwise self-checks of a transform.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransformResiduals {
    pub unit_f_hat: f64,
    pub unit_xi_hat: f64,
    pub orthogonal_hat: f64,
    /// `db − τ da + (1−a)(−dξ+τdf, f̌)`; `None` when `a`, `b` carry no derivatives.
    pub coefficient_relation: Option<f64>,
    /// `f̌ ⊥ f` and `f̌ ⊥ ξ`.
    pub check_orthogonal: f64,
    /// `|f̌|² = ⟨∇̄τ, ∇̄τ⟩₋`.
    pub mu2_consistency: f64,
    /// `σ = (ξ̂ + t1) − τ (f̂ + t0)`.
    pub envelope: f64,
}

impl TransformResiduals {
    /// Largest of the unit, orthogonality and coefficient relations of the new frame.
    pub fn frame_relations(&self) -> f64 {
        self.unit_f_hat.max(self.unit_xi_hat).max(self.orthogonal_hat).max(self.coefficient_relation.unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformResult {
    pub tau: Jet2,
    /// `∇̄τ` in coordinates.
    pub grad_bar: Vec<Jet2>,
    pub a: Jet2,
    pub b: Jet2,
    pub mu2: Jet2,
    pub f_check: LieJet,
    pub f_hat: LieJet,
    pub xi_hat: LieJet,
    /// Components `α(∂_i) = (∂_i f, −f̌)`.
    pub alpha: Vec<Jet2>,
    pub metric: MinusMetric,
    pub residuals: TransformResiduals,
}

impl TransformResult {
    pub fn alpha_values(&self) -> Vec<f64> {
        self.alpha.iter().map(Jet2::value).collect()
    }

    /// Whether `α` carries first partials (needs 2-jet inputs).
    pub fn has_alpha_derivatives(&self) -> bool {
        self.alpha.iter().all(|a| a.order() >= 1)
    }

    /// `dα(∂_i, ∂_j) = ∂_i α_j − ∂_j α_i` for `i < j`, row-major over pairs.
    pub fn dalpha(&self) -> Vec<f64> {
        let m = self.alpha.len();
        let mut out = Vec::with_capacity(m * (m - 1) / 2);
        for i in 0..m {
            for j in i + 1..m {
                out.push(self.alpha[j].d(i) - self.alpha[i].d(j));
            }
        }
        out
    }

    pub fn max_abs_dalpha(&self) -> f64 {
        self.dalpha().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_alpha(&self) -> f64 {
        self.alpha.iter().fold(0.0, |m, x| m.max(x.value().abs()))
    }
}

pub fn transform(frame: &LegendreFrame, tau: &Jet2, singular_tol: f64) -> Result<TransformResult> {
    let m = frame.dim();
    let metric = minus_metric(frame, tau, singular_tol)?;
    let dtau = (0..m).map(|i| tau.partial(i)).collect::<std::result::Result<Vec<_>, _>>()?;
    let ginv = metric.gram.inverse_with_tol(singular_tol).map_err(|e| not_regular(frame, e))?;
    let grad_bar = ginv.mul_vec(&dtau);

    let mut f_check = metric.legs[0].scale(&grad_bar[0]);
    for i in 1..m {
        f_check = &f_check + &metric.legs[i].scale(&grad_bar[i]);
    }
    let mu2 = f_check.inner(&f_check);
    let mu2_alt = dtau.iter().zip(&grad_bar).fold(Jet2::zero(m), |acc, (d, g)| acc + *d * *g);

    let denom = *tau * *tau + mu2 + 1.0;
    let one_minus_a = denom.recip()? * 2.0;
    let a = 1.0 - one_minus_a;
    let b = *tau * (a - 1.0);

    let f_hat = &(&frame.f.scale(&a) + &frame.xi.scale(&b)) + &f_check.scale(&one_minus_a);
    let xi_hat = &(&frame.xi - &frame.f.scale(tau)) + &f_hat.scale(tau);

    let df = (0..m).map(|i| frame.f.partial(i)).collect::<std::result::Result<Vec<_>, _>>()?;
    let alpha: Vec<Jet2> = df.iter().map(|d| -d.inner(&f_check)).collect();

    let fv = frame.f.value();
    let xv = frame.xi.value();
    let fh = f_hat.value();
    let xh = xi_hat.value();
    let fc = f_check.value();
    let t = tau.value();
    let coefficient_relation = (a.order() >= 1 && b.order() >= 1).then(|| {
        (0..m).fold(0.0, |acc: f64, i| {
            let leg = metric.legs[i].value().inner(&fc);
            let r = b.d(i) - t * a.d(i) + one_minus_a.value() * leg;
            let scale = b.d(i).abs() + (t * a.d(i)).abs();
            acc.max(scaled(r, scale))
        })
    });
    let sigma_direct = (&xv - &fv.scale(t)).zip_with(&(&xh - &fh.scale(t)), |x, y| x - y);
    let residuals = TransformResiduals {
        unit_f_hat: (fh.inner(&fh) - 1.0).abs(),
        unit_xi_hat: (xh.inner(&xh) - 1.0).abs(),
        orthogonal_hat: fh.inner(&xh).abs(),
        coefficient_relation,
        check_orthogonal: fc.inner(&fv).abs().max(fc.inner(&xv).abs()),
        mu2_consistency: scaled(mu2.value() - mu2_alt.value(), mu2.value()),
        envelope: sigma_direct.max_abs(),
    };

    Ok(TransformResult { tau: *tau, grad_bar, a, b, mu2, f_check, f_hat, xi_hat, alpha, metric, residuals })
}

/// The transformed Legendre frame `(f̂, ξ̂)` at the same parameter point.
pub fn transformed_frame(frame: &LegendreFrame, result: &TransformResult) -> Result<LegendreFrame> {
    Ok(lift_frame(result.f_hat.clone(), result.xi_hat.clone(), &frame.point, CUSTOM_CONTACT_TOL)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub hat_frame: LegendreFrame,
    /// Transform of `(f̂, ξ̂)` with the same `τ`; its `f_hat` is the recovered `f`.
    pub back: TransformResult,
    /// `‖(f, ξ)_recovered − (f, ξ)‖∞`.
    pub involution: f64,
    /// `f̌̂ = f̌ + μ² (f − f̂)`.
    pub reverse_check: f64,
    /// `|f̌̂|² = μ²`.
    pub length: f64,
    /// `⟨,⟩₋` of the new frame against the original.
    pub metric: f64,
}

/// Runs the transform backwards from `(f̂, ξ̂)` with the same `τ` and checks
/// that the original frame comes back.
pub fn reconstruct(frame: &LegendreFrame, result: &TransformResult, tol: &Tolerances) -> Result<Reconstruction> {
    let hat_frame = transformed_frame(frame, result)?;
    let back = transform(&hat_frame, &result.tau, tol.singular)?;
    let involution = back
        .f_hat
        .value()
        .max_abs_diff(&frame.f.value())
        .max(back.xi_hat.value().max_abs_diff(&frame.xi.value()));
    if !(involution <= tol.involution) {
        return Err(Error::InvolutionFailure { discrepancy: involution, tolerance: tol.involution });
    }
    let mu2 = result.mu2.value();
    let fv = frame.f.value();
    let expected = &result.f_check.value() + &(&fv - &result.f_hat.value()).scale(mu2);
    let recovered = back.f_check.value();
    let reverse_check = scaled(recovered.max_abs_diff(&expected), expected.max_abs());
    let length = scaled(recovered.inner(&recovered) - mu2, mu2);
    let g0 = result.metric.gram.values();
    let g1 = back.metric.gram.values();
    let metric = g0
        .iter()
        .zip(&g1)
        .fold(0.0, |acc: f64, (x, y)| acc.max(scaled(x - y, x.abs())));
    Ok(Reconstruction { hat_frame, back, involution, reverse_check, length, metric })
}

/// `f̌` through the shape operator: `df ∘ (A + τ Id)⁻¹ (∇^f τ)` with
/// `dξ = −df ∘ A` and `∇^f` the gradient of the induced metric `(df, df)`.
pub fn shape_operator_path(frame: &LegendreFrame, tau: &Jet2, singular_tol: f64) -> Result<LieJet> {
    let m = frame.dim();
    let df = (0..m).map(|i| frame.f.partial(i)).collect::<std::result::Result<Vec<_>, _>>()?;
    let dxi = (0..m).map(|i| frame.xi.partial(i)).collect::<std::result::Result<Vec<_>, _>>()?;
    let induced = JetMatrix::from_fn(m, m, |i, j| df[i].inner(&df[j]));
    let induced_inv = induced
        .inverse_with_tol(singular_tol)
        .map_err(|_| Error::NotHypersurface { point: frame.point.clone() })?;
    let mixed = JetMatrix::from_fn(m, m, |i, j| df[i].inner(&dxi[j]));
    let shape = &induced_inv * &mixed;
    let shifted = JetMatrix::from_fn(m, m, |i, j| {
        let base = -shape[(i, j)];
        if i == j { base + *tau } else { base }
    });
    let shifted_inv = shifted.inverse_with_tol(singular_tol).map_err(|e| not_regular(frame, e))?;
    let dtau = (0..m).map(|i| tau.partial(i)).collect::<std::result::Result<Vec<_>, _>>()?;
    let grad_f = induced_inv.mul_vec(&dtau);
    let w = shifted_inv.mul_vec(&grad_f);
    let mut out = df[0].scale(&w[0]);
    for k in 1..m {
        out = &out + &df[k].scale(&w[k]);
    }
    Ok(out)
}

/// Shape operator `A` (value level) with `dξ = −df ∘ A`.
pub fn shape_operator(frame: &LegendreFrame, singular_tol: f64) -> Result<Vec<f64>> {
    let m = frame.dim();
    let df: Vec<LieVector> = (0..m).map(|i| frame.f.d(i)).collect();
    let dxi: Vec<LieVector> = (0..m).map(|i| frame.xi.d(i)).collect();
    let induced = JetMatrix::from_fn(m, m, |i, j| Jet2::constant(m, df[i].inner(&df[j])));
    let inv = induced
        .inverse_with_tol(singular_tol)
        .map_err(|_| Error::NotHypersurface { point: frame.point.clone() })?;
    let mixed = JetMatrix::from_fn(m, m, |i, j| Jet2::constant(m, -df[i].inner(&dxi[j])));
    Ok((&inv * &mixed).values())
}

/// Curvature of `⟨f+t0, f̂+t0⟩` against `(1 − a) dα`, plus the connection forms.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureCheck {
    /// `(β(f+t0) ∧ β(f̂+t0))(∂_i, ∂_j)` for `i < j`.
    pub lhs: Vec<f64>,
    /// `(1 − a) dα(∂_i, ∂_j)`.
    pub rhs: Vec<f64>,
    /// Connection coefficients of `f+t0` and `f̂+t0` from orthogonal projection.
    pub omega: Vec<f64>,
    pub omega_hat: Vec<f64>,
}

impl CurvatureCheck {
    pub fn residual(&self) -> f64 {
        self.lhs
            .iter()
            .zip(&self.rhs)
            .fold(0.0, |acc: f64, (l, r)| acc.max(scaled(l - r, r.abs())))
    }
}

pub fn curvature_identity(frame: &LegendreFrame, result: &TransformResult) -> CurvatureCheck {
    let m = frame.dim();
    let n = frame.spatial_len();
    let t0 = LieVector::t0(n);
    let p = &frame.f.value() + &t0;
    let q = &result.f_hat.value() + &t0;
    let pq = p.inner(&q);
    let dp: Vec<LieVector> = (0..m).map(|i| frame.f.d(i)).collect();
    let dq: Vec<LieVector> = (0..m).map(|i| result.f_hat.d(i)).collect();
    let omega: Vec<f64> = dp.iter().map(|d| d.inner(&q) / pq).collect();
    let omega_hat: Vec<f64> = dq.iter().map(|d| d.inner(&p) / pq).collect();
    let beta: Vec<LieVector> = (0..m).map(|i| &dp[i] - &p.scale(omega[i])).collect();
    let beta_hat: Vec<LieVector> = (0..m).map(|i| &dq[i] - &q.scale(omega_hat[i])).collect();
    let one_minus_a = 1.0 - result.a.value();
    let dalpha = result.dalpha();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    let mut k = 0;
    for i in 0..m {
        for j in i + 1..m {
            lhs.push(beta[i].inner(&beta_hat[j]) - beta[j].inner(&beta_hat[i]));
            rhs.push(one_minus_a * dalpha[k]);
            k += 1;
        }
    }
    CurvatureCheck { lhs, rhs, omega, omega_hat }
}

/// All pointwise identity residuals of one `(frame, τ)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointResiduals {
    /// `|f̂| = |ξ̂| = 1`, `(f̂, ξ̂) = 0` and `db − τ da + (1−a)(−dξ+τdf, f̌) = 0`.
    pub frame_relations: f64,
    /// `τ df̂ − dξ̂ = −dξ + τ df + (f − f̂) dτ`.
    pub leg_relation: f64,
    /// Check vector of the reverse transform, `f̌̂ = f̌ + μ² (f − f̂)` and `|f̌̂|² = μ²`.
    pub reverse_check: f64,
    /// `α + α̂ = d ln(1 − a)`.
    pub alpha_sum: f64,
    pub involution: f64,
    pub curvature_identity: f64,
    /// Projected connection forms against `α`, `α̂`.
    pub connection: f64,
    pub metric: f64,
    pub check_orthogonal: f64,
    pub mu2_consistency: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointAnalysis {
    pub result: TransformResult,
    pub reconstruction: Reconstruction,
    pub curvature: CurvatureCheck,
    /// `α̂` values from the reconstruction.
    pub alpha_hat: Vec<f64>,
    pub residuals: PointResiduals,
}

/// Transform, reconstruction and every identity check at one point.
pub fn analyze_point(frame: &LegendreFrame, tau: &Jet2, tol: &Tolerances) -> Result<PointAnalysis> {
    let m = frame.dim();
    let result = transform(frame, tau, tol.singular)?;
    let reconstruction = reconstruct(frame, &result, tol)?;
    let curvature = curvature_identity(frame, &result);
    let alpha_hat = reconstruction.back.alpha_values();

    let fv = frame.f.value();
    let fh = result.f_hat.value();
    let diff = &fv - &fh;
    let mut leg_relation: f64 = 0.0;
    let mut alpha_sum: f64 = 0.0;
    let mut connection: f64 = 0.0;
    let one_minus_a = 1.0 - result.a.value();
    for i in 0..m {
        let lhs = &result.f_hat.d(i).scale(tau.value()) - &result.xi_hat.d(i);
        let rhs = &result.metric.legs[i].value() + &diff.scale(tau.d(i));
        leg_relation = leg_relation.max(scaled(lhs.max_abs_diff(&rhs), rhs.max_abs()));
        let dlog = -result.a.d(i) / one_minus_a;
        let alpha = result.alpha[i].value();
        alpha_sum = alpha_sum.max(scaled(alpha + alpha_hat[i] - dlog, dlog));
        connection = connection
            .max(scaled(curvature.omega[i] - alpha, alpha))
            .max(scaled(curvature.omega_hat[i] - alpha_hat[i], alpha_hat[i]));
    }
    let residuals = PointResiduals {
        frame_relations: result.residuals.frame_relations(),
        leg_relation,
        reverse_check: reconstruction.reverse_check.max(reconstruction.length),
        alpha_sum,
        involution: reconstruction.involution,
        curvature_identity: curvature.residual(),
        connection,
        metric: reconstruction.metric,
        check_orthogonal: result.residuals.check_orthogonal,
        mu2_consistency: result.residuals.mu2_consistency,
        envelope: result.residuals.envelope,
    };
    Ok(PointAnalysis { result, reconstruction, curvature, alpha_hat, residuals })
}
