//! Grid sweeps of the pointwise transform: regularity, the Ribaucour
//! closedness test and the full identity suite, with a JSON-ready summary.
//!
//! Sweeps evaluate nodes in parallel and reduce in row-major order, so every
//! summary is deterministic.

use rayon::prelude::*;
use serde::Serialize;

use crate::chart::Chart;
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{GridField, GridSpec};
use crate::jet::Jet2;
use crate::lie::{FrameCertificate, LegendreFrame, LieVector};
use crate::transform::{analyze_point, transform, PointResiduals, TransformResult};

/// Certified frames at every node, row-major.
pub fn frames_on_grid(chart: &Chart, grid: &GridSpec) -> Result<Vec<LegendreFrame>> {
    grid.nodes().par_iter().map(|p| chart.frame(p).map_err(Error::from)).collect()
}

pub fn tau_jets_on_grid(tau: &Expr, grid: &GridSpec) -> Result<Vec<Jet2>> {
    grid.nodes().par_iter().map(|p| tau.jet_at(p).map_err(Error::from)).collect()
}

/// Worst frame-certificate residuals over a grid.
pub fn certify_grid(chart: &Chart, grid: &GridSpec) -> Result<FrameCertificate> {
    let frames = frames_on_grid(chart, grid)?;
    let mut worst = FrameCertificate { immersion_margin: f64::INFINITY, ..Default::default() };
    for fr in &frames {
        let c = fr.certificate;
        worst.unit_f = worst.unit_f.max(c.unit_f);
        worst.unit_xi = worst.unit_xi.max(c.unit_xi);
        worst.orthogonal = worst.orthogonal.max(c.orthogonal);
        worst.contact_df_xi = worst.contact_df_xi.max(c.contact_df_xi);
        worst.contact_f_dxi = worst.contact_f_dxi.max(c.contact_f_dxi);
        worst.immersion_margin = worst.immersion_margin.min(c.immersion_margin);
    }
    Ok(worst)
}

/// Outcome of the closedness test of `α_τ` on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Closedness {
    pub max_dalpha: f64,
    pub at: [f64; 2],
    pub index: [usize; 2],
    pub max_alpha: f64,
    /// `closedness · (1 + max |α|)`.
    pub threshold: f64,
    pub ribaucour: bool,
}

/// Reduces per-node `(|dα|, |α|)` pairs into a classification.
pub fn classify(grid: &GridSpec, values: impl IntoIterator<Item = (usize, f64, f64)>, closedness_tol: f64) -> Closedness {
    let mut best = (0usize, 0.0f64);
    let mut max_alpha = 0.0f64;
    for (k, dalpha, alpha) in values {
        if dalpha > best.1 {
            best = (k, dalpha);
        }
        max_alpha = max_alpha.max(alpha);
    }
    let threshold = closedness_tol * (1.0 + max_alpha);
    let index = grid.unindex(best.0);
    Closedness {
        max_dalpha: best.1,
        at: grid.node(index[0], index[1]),
        index,
        max_alpha,
        threshold,
        ribaucour: best.1 < threshold,
    }
}

/// Transform at every node; the first non-regular node aborts the sweep.
pub fn transforms_on_grid(frames: &[LegendreFrame], taus: &[Jet2], singular_tol: f64) -> Result<Vec<TransformResult>> {
    frames.par_iter().zip(taus).map(|(fr, t)| transform(fr, t, singular_tol)).collect()
}

/// Max `|dα_τ|` over the grid and the Ribaucour classification.
pub fn ribaucour_residual(chart: &Chart, tau: &Expr, grid: &GridSpec, tol: &Tolerances) -> Result<Closedness> {
    let frames = frames_on_grid(chart, grid)?;
    let taus = tau_jets_on_grid(tau, grid)?;
    let results = transforms_on_grid(&frames, &taus, tol.singular)?;
    Ok(classify(
        grid,
        results.iter().enumerate().map(|(k, r)| (k, r.max_abs_dalpha(), r.max_abs_alpha())),
        tol.closedness,
    ))
}

/// Per-node record for the CSV dump.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    /// Row-major node index.
    pub index: usize,
    pub point: [f64; 2],
    pub tau: f64,
    pub a: f64,
    pub b: f64,
    pub mu2: f64,
    pub alpha: [f64; 2],
    pub dalpha: f64,
    pub det: f64,
    pub residuals: PointResiduals,
    pub f: LieVector,
    pub f_hat: LieVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct ResidualSummary {
    pub frame_relations: f64,
    pub leg_relation: f64,
    pub reverse_check: f64,
    pub alpha_sum: f64,
    pub involution: f64,
    pub curvature_identity: f64,
}

impl ResidualSummary {
    fn absorb(&mut self, r: &PointResiduals) {
        self.frame_relations = self.frame_relations.max(r.frame_relations);
        self.leg_relation = self.leg_relation.max(r.leg_relation);
        self.reverse_check = self.reverse_check.max(r.reverse_check);
        self.alpha_sum = self.alpha_sum.max(r.alpha_sum);
        self.involution = self.involution.max(r.involution);
        self.curvature_identity = self.curvature_identity.max(r.curvature_identity);
    }
}

/// Machine-readable run summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticReport {
    pub chart: String,
    pub tau_src: String,
    pub grid: [usize; 2],
    pub regular: bool,
    /// First non-regular node, if any.
    pub not_regular_at: Option<[f64; 2]>,
    pub min_det: f64,
    pub max_dalpha: f64,
    pub max_dalpha_at: [f64; 2],
    pub ribaucour: bool,
    pub contact_residual: f64,
    pub residuals: ResidualSummary,
    /// Supplementary residuals: connection forms, metric equality, f̌ orthogonality,
    /// μ² consistency, envelope of σ.
    pub extra: ExtraResiduals,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct ExtraResiduals {
    pub connection: f64,
    pub metric: f64,
    pub check_orthogonal: f64,
    pub mu2_consistency: f64,
    pub envelope: f64,
}

/// Full per-node analysis of one `(chart, τ)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAnalysis {
    pub grid: GridSpec,
    pub records: Vec<PointRecord>,
    pub report: DiagnosticReport,
}

impl GridAnalysis {
    pub fn alpha_field(&self) -> GridField {
        GridField::from_values(self.grid, 2, self.records.iter().flat_map(|r| r.alpha).collect())
    }
}

/// Runs frame certification, the regularity sweep, the transform with its
/// reconstruction and every identity at each node. Non-regular nodes do not
/// abort: the report records the first one and `regular = false`.
pub fn analyze_grid(
    chart: &Chart,
    chart_label: &str,
    tau: &Expr,
    grid: &GridSpec,
    tol: &Tolerances,
) -> Result<GridAnalysis> {
    let frames = frames_on_grid(chart, grid)?;
    let taus = tau_jets_on_grid(tau, grid)?;
    let outcomes: Vec<Result<PointRecord>> = frames
        .par_iter()
        .zip(&taus)
        .enumerate()
        .map(|(index, (fr, t))| {
            let a = analyze_point(fr, t, tol)?;
            let r = &a.result;
            Ok(PointRecord {
                index,
                point: [fr.point[0], fr.point[1]],
                tau: t.value(),
                a: r.a.value(),
                b: r.b.value(),
                mu2: r.mu2.value(),
                alpha: [r.alpha[0].value(), r.alpha[1].value()],
                dalpha: r.max_abs_dalpha(),
                det: r.metric.det_value,
                residuals: a.residuals,
                f: fr.f.value(),
                f_hat: r.f_hat.value(),
            })
        })
        .collect();

    let mut records = Vec::with_capacity(outcomes.len());
    let mut not_regular_at = None;
    for (k, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => records.push(r),
            Err(Error::NotRegular { .. }) => {
                if not_regular_at.is_none() {
                    let [i, j] = grid.unindex(k);
                    not_regular_at = Some(grid.node(i, j));
                }
            }
            Err(e) => return Err(e),
        }
    }
    let regular = not_regular_at.is_none();

    let mut residuals = ResidualSummary::default();
    let mut extra = ExtraResiduals::default();
    let mut min_det = f64::INFINITY;
    for r in &records {
        residuals.absorb(&r.residuals);
        extra.connection = extra.connection.max(r.residuals.connection);
        extra.metric = extra.metric.max(r.residuals.metric);
        extra.check_orthogonal = extra.check_orthogonal.max(r.residuals.check_orthogonal);
        extra.mu2_consistency = extra.mu2_consistency.max(r.residuals.mu2_consistency);
        extra.envelope = extra.envelope.max(r.residuals.envelope);
        min_det = min_det.min(r.det.abs());
    }
    let contact_residual = frames.iter().fold(0.0, |m: f64, f| m.max(f.certificate.max_residual()));

    let (max_dalpha, max_dalpha_at, ribaucour) = if regular {
        let c = classify(
            grid,
            records.iter().enumerate().map(|(k, r)| (k, r.dalpha, r.alpha[0].abs().max(r.alpha[1].abs()))),
            tol.closedness,
        );
        (c.max_dalpha, c.at, c.ribaucour)
    } else {
        let worst = records.iter().fold((0.0f64, [f64::NAN; 2]), |acc, r| if r.dalpha > acc.0 { (r.dalpha, r.point) } else { acc });
        (worst.0, worst.1, false)
    };

    let report = DiagnosticReport {
        chart: chart_label.to_string(),
        tau_src: tau.to_string(),
        grid: grid.n,
        regular,
        not_regular_at,
        min_det: if min_det.is_finite() { min_det } else { 0.0 },
        max_dalpha,
        max_dalpha_at,
        ribaucour,
        contact_residual,
        residuals,
        extra,
    };
    Ok(GridAnalysis { grid: *grid, records, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{ChartSpec, Domain};
    use crate::expr::parse_tau;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn torus() -> Chart {
        ChartSpec::clifford_torus(FRAC_1_SQRT_2).compile().unwrap()
    }

    #[test]
    fn constant_tau_is_exactly_closed() {
        let g = GridSpec::new(Domain::torus(), 8, 8).unwrap();
        let c = ribaucour_residual(&torus(), &parse_tau("2").unwrap(), &g, &Tolerances::default()).unwrap();
        assert_eq!(c.max_dalpha, 0.0);
        assert!(c.ribaucour);
    }

    #[test]
    fn u_only_tau_is_ribaucour_and_product_is_not() {
        let g = GridSpec::new(Domain::torus(), 16, 16).unwrap();
        let tol = Tolerances::default();
        let c = ribaucour_residual(&torus(), &parse_tau("0.3*sin(u)").unwrap(), &g, &tol).unwrap();
        assert!(c.max_dalpha < 1e-10 && c.ribaucour);
        let c = ribaucour_residual(&torus(), &parse_tau("sin(u)*sin(v)").unwrap(), &g, &tol).unwrap();
        assert!(c.max_dalpha > 1e-2 && !c.ribaucour);
    }

    #[test]
    fn principal_curvature_tau_is_not_regular() {
        let g = GridSpec::new(Domain::torus(), 8, 8).unwrap();
        let tol = Tolerances::default();
        let err = ribaucour_residual(&torus(), &parse_tau("1").unwrap(), &g, &tol).unwrap_err();
        assert!(matches!(err, Error::NotRegular { .. }));
        let a = analyze_grid(&torus(), "t", &parse_tau("1").unwrap(), &g, &tol).unwrap();
        assert!(!a.report.regular && !a.report.ribaucour);
        assert!(a.records.is_empty());
    }

    #[test]
    fn analysis_report_for_ribaucour_tau() {
        let g = GridSpec::new(Domain::torus(), 12, 12).unwrap();
        let a = analyze_grid(&torus(), "torus", &parse_tau("0.3*sin(u)").unwrap(), &g, &Tolerances::default()).unwrap();
        let r = &a.report;
        assert!(r.regular && r.ribaucour);
        assert_eq!(r.tau_src, "0.3 * sin(u)");
        assert!(r.residuals.involution < 1e-12);
        assert_eq!(a.records.len(), 144);
        assert!(r.min_det > 0.0);
    }
}
