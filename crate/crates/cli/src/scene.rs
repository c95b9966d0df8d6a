//! Scene files: JSON with an explicit chart and `tau`, everything else defaulted.

use std::path::Path;

use anyhow::{bail, Context};
use ribaucour::grid::GridSpec;
use ribaucour::{parse_tau, Chart, ChartSpec, Domain, Expr, Tolerances};
use serde::{Deserialize, Serialize};

pub const DEFAULT_GRID: [usize; 2] = [64, 64];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub chart: ChartSpec,
    pub tau: String,
    #[serde(default)]
    pub tau1: Option<String>,
    #[serde(default)]
    pub thetas: Option<Vec<f64>>,
    #[serde(default = "default_grid")]
    pub grid: [usize; 2],
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Artifacts to write; empty means all that apply.
    #[serde(default)]
    pub outputs: Vec<Output>,
    #[serde(default)]
    pub dual: Option<DualOptions>,
    #[serde(default)]
    pub pole_flip: bool,
}

fn default_grid() -> [usize; 2] {
    DEFAULT_GRID
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    Obj,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualOptions {
    /// Parameter rectangle; defaults to the chart domain shrunk by 0.1 on each side.
    #[serde(default)]
    pub patch: Option<[[f64; 2]; 2]>,
    #[serde(default = "default_grid")]
    pub grid: [usize; 2],
    /// `τ0 − τ̂0` at the first patch node.
    #[serde(default = "default_z0")]
    pub z0: f64,
}

fn default_z0() -> f64 {
    1.0
}

/// A scene after validation: everything parsed and compiled.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scene: Scene,
    pub chart: Chart,
    pub tau: Expr,
    pub tau1: Option<Expr>,
    pub grid: GridSpec,
}

impl Scene {
    pub fn load(path: &Path) -> anyhow::Result<Scene> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing scene {}", path.display()))
    }

    pub fn wants(&self, o: Output) -> bool {
        self.outputs.is_empty() || self.outputs.contains(&o)
    }

    pub fn prepare(self) -> anyhow::Result<Prepared> {
        let mut chart = self.chart.compile().context("chart")?;
        if let Some(c) = self.tolerances.contact {
            chart.contact_tol = c;
        }
        let tau = parse_tau(&self.tau).context("tau")?;
        let tau1 = self.tau1.as_deref().map(parse_tau).transpose().context("tau1")?;
        let grid = GridSpec::new(chart.domain, self.grid[0], self.grid[1])?;
        if let Some(d) = &self.dual {
            if !(d.z0.is_finite() && d.z0 != 0.0) {
                bail!("dual.z0 must be finite and nonzero");
            }
            dual_patch(&chart.domain, d)?;
        }
        Ok(Prepared { scene: self, chart, tau, tau1, grid })
    }
}

pub fn dual_patch(domain: &Domain, d: &DualOptions) -> anyhow::Result<GridSpec> {
    let [u, v] = match d.patch {
        Some(p) => p,
        None => [0, 1].map(|k| {
            let [a, b] = domain.axis(k);
            [a + 0.1, b - 0.1]
        }),
    };
    let patch = Domain::patch(u, v);
    patch.validate()?;
    Ok(GridSpec::new(patch, d.grid[0], d.grid[1])?)
}

/// Parses `NxM`.
pub fn parse_grid(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected NxM, got {s:?}"))?;
    let n = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("bad grid size {t:?}: {e}"));
    Ok([n(a)?, n(b)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scene_gets_defaults() {
        let s: Scene = serde_json::from_str(r#"{"chart": {"kind": "clifford_torus", "r": 0.5}, "tau": "0"}"#).unwrap();
        assert_eq!(s.grid, DEFAULT_GRID);
        assert_eq!(s.tolerances, Tolerances::default());
        assert!(s.wants(Output::Obj));
    }

    #[test]
    fn chart_and_tau_are_required() {
        assert!(serde_json::from_str::<Scene>(r#"{"tau": "0"}"#).is_err());
        assert!(serde_json::from_str::<Scene>(r#"{"chart": {"kind": "clifford_torus", "r": 0.5}}"#).is_err());
        assert!(serde_json::from_str::<Scene>(r#"{"chart": {"kind": "clifford_torus", "r": 0.5}, "tau": "0", "extra": 1}"#)
            .is_err());
    }

    #[test]
    fn grid_flag() {
        assert_eq!(parse_grid("32x16"), Ok([32, 16]));
        assert!(parse_grid("32").is_err());
        assert!(parse_grid("ax3").is_err());
    }

    #[test]
    fn default_dual_patch_is_shrunk_domain() {
        let d = DualOptions { patch: None, grid: [8, 8], z0: 1.0 };
        let g = dual_patch(&Domain::torus(), &d).unwrap();
        assert_eq!(g.domain.axis(0), [0.1, std::f64::consts::TAU - 0.1]);
        assert_eq!(g.domain.periodic, [false, false]);
    }
}
