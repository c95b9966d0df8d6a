use thiserror::Error;

use crate::chart::ChartError;
use crate::expr::{EvalError, ParseError};
use crate::jet::JetError;
use crate::jet_matrix::MatrixError;
use crate::lie::FrameError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("congruence is not regular at {point:?}: det = {det:e} (threshold {threshold:e})")]
    NotRegular { point: Vec<f64>, det: f64, threshold: f64 },
    #[error("induced metric (df, df) is singular at {point:?}")]
    NotHypersurface { point: Vec<f64> },
    #[error("reconstruction differs from the original frame by {discrepancy:e} (tolerance {tolerance:e})")]
    InvolutionFailure { discrepancy: f64, tolerance: f64 },
    #[error("r-operator system is ill-posed at {point:?}")]
    IllPosed { point: Vec<f64> },
    #[error("1-form is not exact: loop residual {loop_residual:e}, period residual {period_residual:e} (tolerance {tolerance:e})")]
    PathDependence { loop_residual: f64, period_residual: f64, tolerance: f64 },
    #[error("Ribaucour functions are not pointwise distinct: |tau0 - tau1| = {gap:e} at {point:?}")]
    NotPointwiseDistinct { gap: f64, point: Vec<f64> },
    #[error("family member theta = {theta} is masked on {fraction:.3} of the grid")]
    FullyMasked { theta: f64, fraction: f64 },
    #[error("|tau0 - tau_hat0| = {value:e} left [1e-8, 1e8] at {point:?}")]
    BlowUp { point: Vec<f64>, value: f64 },
    #[error("finite-difference stencil of step {h} leaves the domain at {point:?}")]
    StencilOutOfDomain { point: Vec<f64>, h: f64 },
    #[error("finite-difference step {0} outside [1e-6, 1e-1]")]
    InvalidStep(f64),
    #[error("grid {0}x{1} is smaller than the required {2}x{2}")]
    GridTooSmall(usize, usize, usize),
    #[error("Bianchi condition violated: commutator norm {norm:e} exceeds {tolerance:e}")]
    BianchiViolation { norm: f64, tolerance: f64 },
    #[error("{which} is not a Ribaucour function: max |d alpha| = {max_dalpha:e}")]
    NotRibaucour { which: String, max_dalpha: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
