use serde::{Deserialize, Serialize};

/// Every threshold used by the verification sweeps. Identity residuals are
/// measured as `|lhs − rhs| / (1 + |rhs|)`; unit-length and orthogonality
/// residuals are absolute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Contact residual for frame certification; `None` picks the chart default.
    pub contact: Option<f64>,
    /// Relative determinant threshold of the regularity screen.
    pub singular: f64,
    /// Ribaucour iff `max |dα| < closedness · (1 + max |α|)`.
    pub closedness: f64,
    pub unit_hat: f64,
    /// `|f̂| = |ξ̂| = 1`, `(f̂, ξ̂) = 0` and `db − τ da + (1−a)(−dξ+τdf, f̌) = 0`.
    pub frame_relations: f64,
    /// `τ df̂ − dξ̂ = −dξ + τ df + (f − f̂) dτ`.
    pub leg_relation: f64,
    /// Check vector of the reverse transform, `f̌̂ = f̌ + μ² (f − f̂)` and `|f̌̂|² = μ²`.
    pub reverse_check: f64,
    /// `α + α̂ = d ln(1 − a)`.
    pub alpha_sum: f64,
    pub involution: f64,
    pub curvature: f64,
    pub metric: f64,
    pub bianchi: f64,
    pub parallel: f64,
    pub potential: f64,
    pub distinct: f64,
    pub mask: f64,
    pub dual_consistency: f64,
    pub gamma_identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            contact: None,
            singular: 1e-10,
            closedness: 1e-7,
            unit_hat: 1e-10,
            frame_relations: 1e-9,
            leg_relation: 1e-9,
            reverse_check: 1e-9,
            alpha_sum: 1e-8,
            involution: 1e-8,
            curvature: 1e-8,
            metric: 1e-9,
            bianchi: 1e-8,
            parallel: 1e-7,
            potential: 1e-8,
            distinct: 1e-8,
            mask: 1e-6,
            dual_consistency: 1e-5,
            gamma_identity: 1e-5,
        }
    }
}

/// `|x − y| / (1 + scale)`.
pub(crate) fn scaled(diff: f64, scale: f64) -> f64 {
    diff.abs() / (1.0 + scale.abs())
}
