//! Command bodies. Each returns a report with its list of gated checks;
//! the caller prints it and maps failures to exit codes.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use ribaucour::demoulin::{
    demoulin_tau, dual_family_step, parallel_sections, verify_member, DemoulinFamily, DualFamily, FamilyReport,
    SectionGauge,
};
use ribaucour::export::{records_csv, MeshExport};
use ribaucour::oracle::{chart_convergence, ConvergenceStudy, DEFAULT_STEPS};
use ribaucour::sweep::{analyze_grid, DiagnosticReport, GridAnalysis};
use ribaucour::transform::transform;
use ribaucour::LieVector;
use serde::Serialize;

use crate::scene::{dual_patch, Output, Prepared};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    /// Upper bound for residuals, lower bound when `at_least` is set.
    pub limit: f64,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub at_least: bool,
}

impl Check {
    pub fn below(name: &str, value: f64, limit: f64) -> Self {
        Check { name: name.into(), pass: value <= limit, value, limit, at_least: false }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Check { name: name.into(), pass: ok, value: if ok { 1.0 } else { 0.0 }, limit: 1.0, at_least: true }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome<R: Serialize> {
    pub command: &'static str,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub report: R,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl<R: Serialize> Outcome<R> {
    fn new(command: &'static str, checks: Vec<Check>, report: R) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Outcome { command, pass, checks, report, artifacts: Vec::new(), warnings: Vec::new() }
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            if c.at_least && c.limit == 1.0 {
                writeln!(out, "{verdict}  {}", c.name).unwrap();
            } else {
                let rel = if c.at_least { ">=" } else { "<=" };
                writeln!(out, "{verdict}  {}  {:e} {rel} {:e}", c.name, c.value, c.limit).unwrap();
            }
        }
        for w in &self.warnings {
            writeln!(out, "warning: {w}").unwrap();
        }
        for a in &self.artifacts {
            writeln!(out, "wrote {a}").unwrap();
        }
        out
    }
}

pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, body: &str) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Records the artifact list in the outcome, then writes the outcome itself
    /// as `json_name` when requested.
    fn finish<R: Serialize>(mut self, mut outcome: Outcome<R>, json_name: Option<&str>) -> anyhow::Result<Outcome<R>> {
        if let Some(name) = json_name {
            self.written.push(name.to_string());
            outcome.artifacts = self.written.clone();
            let path = self.dir.join(name);
            let body = serde_json::to_string_pretty(&outcome)? + "\n";
            fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        } else {
            outcome.artifacts = self.written;
        }
        Ok(outcome)
    }
}

fn analysis(p: &Prepared) -> anyhow::Result<GridAnalysis> {
    Ok(analyze_grid(&p.chart, &p.scene.chart.label(), &p.tau, &p.grid, &p.scene.tolerances)?)
}

fn regularity_checks(r: &DiagnosticReport, p: &Prepared) -> Vec<Check> {
    let regular = match r.not_regular_at {
        None => "congruence regular on grid".to_string(),
        Some([u, v]) => format!("congruence regular on grid (tau hits a curvature sphere at u = {u:.6}, v = {v:.6})"),
    };
    vec![
        Check::below("frame contact residual", r.contact_residual, p.chart.contact_tol),
        Check::flag(&regular, r.regular),
    ]
}

/// The closedness test is only meaningful on a regular congruence.
pub fn check(p: &Prepared) -> anyhow::Result<Outcome<DiagnosticReport>> {
    let a = analysis(p)?;
    let r = a.report;
    let mut checks = regularity_checks(&r, p);
    if r.regular {
        let [u, v] = r.max_dalpha_at;
        let name = format!("alpha closed (max |d alpha| at u = {u:.6}, v = {v:.6})");
        let closed = Check::below(&name, r.max_dalpha, p.scene.tolerances.closedness);
        checks.push(Check { pass: r.ribaucour, ..closed });
    }
    Ok(Outcome::new("check", checks, r))
}

fn identity_checks(r: &DiagnosticReport, p: &Prepared) -> Vec<Check> {
    let t = &p.scene.tolerances;
    let s = &r.residuals;
    vec![
        Check::below("unit/orthogonality relations of the transform", s.frame_relations, t.frame_relations),
        Check::below("legs of the transformed frame", s.leg_relation, t.leg_relation),
        Check::below("check vector of the reverse transform", s.reverse_check, t.reverse_check),
        Check::below("alpha + alpha_hat = d ln(1 - a)", s.alpha_sum, t.alpha_sum),
        Check::below("involution", s.involution, t.involution),
        Check::below("curvature identity", s.curvature_identity, t.curvature),
    ]
}

fn write_meshes(
    arts: &mut Artifacts,
    p: &Prepared,
    a: &GridAnalysis,
    frames_f: &[LieVector],
    warnings: &mut Vec<String>,
) -> anyhow::Result<()> {
    let flip = p.scene.pole_flip;
    let f_mesh = MeshExport::from_points(&p.grid, frames_f, flip);
    let mut hat: Vec<Option<&LieVector>> = vec![None; p.grid.len()];
    for r in &a.records {
        hat[r.index] = Some(&r.f_hat);
    }
    let h_mesh = MeshExport::from_masked_points(&p.grid, &hat, flip);
    for (name, m) in [("f.obj", &f_mesh), ("f_hat.obj", &h_mesh)] {
        if m.clipped > 0 {
            warnings.push(format!("{name}: {} grid nodes clipped or missing", m.clipped));
        }
        arts.write(name, &m.to_obj())?;
    }
    Ok(())
}

/// Writes artifacts for one `(chart, τ)` pair; `gated` adds the identity checks.
fn transform_like(p: &Prepared, out: &Path, command: &'static str, gated: bool) -> anyhow::Result<Outcome<DiagnosticReport>> {
    let a = analysis(p)?;
    let mut checks = Vec::new();
    if gated {
        checks = regularity_checks(&a.report, p);
        checks.extend(identity_checks(&a.report, p));
    }
    let frames_f: Vec<LieVector> = a.records.iter().map(|r| r.f.clone()).collect();
    let frames_f = if frames_f.len() == p.grid.len() {
        frames_f
    } else {
        ribaucour::sweep::frames_on_grid(&p.chart, &p.grid)?.iter().map(|f| f.f.value()).collect()
    };
    let mut arts = Artifacts::new(out)?;
    let mut warnings = Vec::new();
    if p.scene.wants(Output::Obj) {
        write_meshes(&mut arts, p, &a, &frames_f, &mut warnings)?;
    }
    if p.scene.wants(Output::Csv) {
        arts.write("fields.csv", &records_csv(&a.records))?;
    }
    let mut outcome = Outcome::new(command, checks, a.report);
    outcome.warnings = warnings;
    arts.finish(outcome, p.scene.wants(Output::Json).then_some("report.json"))
}

pub fn transform_cmd(p: &Prepared, out: &Path) -> anyhow::Result<Outcome<DiagnosticReport>> {
    transform_like(p, out, "transform", true)
}

pub fn export(p: &Prepared, out: &Path) -> anyhow::Result<Outcome<DiagnosticReport>> {
    transform_like(p, out, "export", false)
}

pub fn default_thetas() -> Vec<f64> {
    (0..8).map(|k| k as f64 * PI / 8.0).collect()
}

pub fn demoulin(p: &Prepared, thetas: &[f64], out: &Path) -> anyhow::Result<Outcome<FamilyReport>> {
    let tol = &p.scene.tolerances;
    let tau1 = p.tau1.as_ref().ok_or_else(|| crate::InputError::new("demoulin needs `tau1` in the scene"))?;
    let family = DemoulinFamily::build(&p.chart, &p.grid, &p.tau, tau1, tol)?;
    family.require_bianchi(tol)?;
    let members = thetas
        .iter()
        .map(|&t| {
            let m = demoulin_tau(&family, t)?;
            let r = verify_member(&family, &m, tol);
            Ok((m, r))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let sections = parallel_sections(&family, SectionGauge::Parallel);
    let dual: Option<DualFamily> = match &p.scene.dual {
        Some(d) => {
            let patch = dual_patch(&p.chart.domain, d)?;
            Some(dual_family_step(&p.chart, &patch, &p.tau, tau1, d.z0, tol)?)
        }
        None => None,
    };
    let report = FamilyReport::new(&family, &members, sections.residual, dual.as_ref());

    let mut checks = vec![
        Check::below("Bianchi commutator norm", report.bianchi_norm, tol.bianchi),
        Check::below("parallel sections", report.parallel_residual, tol.parallel),
    ];
    for m in &report.members {
        let c = Check::below(&format!("theta = {:.6}: closedness on unmasked set", m.theta), m.max_dalpha, tol.closedness);
        checks.push(Check { pass: m.ribaucour, ..c });
        checks.push(Check::flag(&format!("theta = {:.6}: endpoint identity", m.theta), m.endpoints_ok));
    }
    if let Some(d) = &report.dual {
        checks.push(Check::below("dual family path consistency", d.consistency, tol.dual_consistency));
        checks.push(Check::below("d((tau0 - tau_hat0) gamma)", d.gamma_identity_residual, tol.gamma_identity));
    }

    let mut arts = Artifacts::new(out)?;
    let mut warnings = Vec::new();
    if p.scene.wants(Output::Csv) {
        let mut csv = String::from("u,v");
        for (k, _) in thetas.iter().enumerate() {
            write!(csv, ",tau_{k}").unwrap();
        }
        csv.push('\n');
        for idx in 0..p.grid.len() {
            let [i, j] = p.grid.unindex(idx);
            let [u, v] = p.grid.node(i, j);
            write!(csv, "{u:?},{v:?}").unwrap();
            for (m, _) in &members {
                write!(csv, ",{:?}", m.jets[idx].map_or(f64::NAN, |t| t.value())).unwrap();
            }
            csv.push('\n');
        }
        arts.write("family.csv", &csv)?;
    }
    if p.scene.wants(Output::Obj) {
        for (k, (m, _)) in members.iter().enumerate() {
            let hats: Vec<Option<LieVector>> = family
                .frames
                .iter()
                .zip(&m.jets)
                .map(|(fr, j)| j.and_then(|t| transform(fr, &t, tol.singular).ok()).map(|r| r.f_hat.value()))
                .collect();
            let refs: Vec<Option<&LieVector>> = hats.iter().map(Option::as_ref).collect();
            let mesh = MeshExport::from_masked_points(&p.grid, &refs, p.scene.pole_flip);
            let name = format!("theta_{k}.obj");
            if mesh.clipped > 0 {
                warnings.push(format!("{name}: {} grid nodes clipped or missing", mesh.clipped));
            }
            arts.write(&name, &mesh.to_obj())?;
        }
    }
    let mut outcome = Outcome::new("demoulin", checks, report);
    outcome.warnings = warnings;
    arts.finish(outcome, p.scene.wants(Output::Json).then_some("family.json"))
}

/// Fixed interior sample points, as fractions of the domain.
const ORACLE_FRACTIONS: [[f64; 2]; 5] = [[0.23, 0.41], [0.5, 0.5], [0.71, 0.17], [0.37, 0.83], [0.89, 0.62]];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub points: Vec<[f64; 2]>,
    pub tau: ConvergenceStudy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau1: Option<ConvergenceStudy>,
}

pub fn oracle(p: &Prepared) -> anyhow::Result<Outcome<OracleReport>> {
    let d = p.chart.domain;
    let points: Vec<[f64; 2]> = ORACLE_FRACTIONS
        .iter()
        .map(|[a, b]| [d.u[0] + a * d.span(0), d.v[0] + b * d.span(1)])
        .collect();
    let study = |e| chart_convergence(&p.chart, e, &points, &DEFAULT_STEPS);
    let tau = study(&p.tau)?;
    let tau1 = p.tau1.as_ref().map(study).transpose()?;
    let mut checks = Vec::new();
    for (label, s) in std::iter::once(("tau", &tau)).chain(tau1.as_ref().map(|s| ("tau1", s))) {
        for (kind, order) in [("first", s.grad_order), ("second", s.hess_order)] {
            match order {
                Some(q) => checks.push(Check::below(&format!("{label}: {kind}-derivative order |p - 2|"), (q - 2.0).abs(), 0.3)),
                None => checks.push(Check::flag(&format!("{label}: {kind} derivatives exact to round-off"), true)),
            }
        }
    }
    Ok(Outcome::new("oracle", checks, OracleReport { points, tau, tau1 }))
}
