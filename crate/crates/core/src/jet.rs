//! Truncated second-order jets in up to [`MAX_DIM`] variables.
//!
//! A [`Jet2`] carries the value, gradient and (symmetric, upper-triangle packed)
//! Hessian of a scalar function at a parameter point. Arithmetic propagates all
//! three through the Leibniz and chain rules, so compositions of supported
//! operations are differentiated exactly up to round-off.
//!
//! Jets also track how many derivative orders are still valid. Taking a partial
//! derivative of a 2-jet yields a 1-jet (its Hessian slot is meaningless), and
//! mixing jets of different orders keeps the smaller one.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use thiserror::Error;

/// Largest supported number of parameters.
pub const MAX_DIM: usize = 4;
const MAX_HESS: usize = MAX_DIM * (MAX_DIM + 1) / 2;

/// Values closer to zero than this are treated as exact zeros by checked division.
pub const MACHINE_ZERO: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("division by a jet whose value {0:e} is machine-zero")]
    DivisionByZeroJet(f64),
    #[error("{op} is undefined at {value}")]
    DomainErrorJet { op: &'static str, value: f64 },
    #[error("partial derivative requested from a jet with no derivative orders left")]
    InsufficientOrder,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Packed index of the Hessian entry `(i, j)` in `dim` variables.
#[inline]
pub fn hess_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * dim - i - 1) / 2 + j
}

#[derive(Clone, Copy, PartialEq)]
pub struct Jet2 {
    value: f64,
    grad: [f64; MAX_DIM],
    hess: [f64; MAX_HESS],
    dim: u8,
    order: u8,
}

impl fmt::Debug for Jet2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet2")
            .field("value", &self.value)
            .field("grad", &self.grad())
            .field("hess", &self.hess_packed())
            .field("order", &self.order)
            .finish()
    }
}

impl Jet2 {
    /// Constant jet in `dim` variables.
    pub fn constant(dim: usize, value: f64) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "jet dimension {dim} out of range");
        Jet2 { value, grad: [0.0; MAX_DIM], hess: [0.0; MAX_HESS], dim: dim as u8, order: 2 }
    }

    /// The coordinate function `x_index` seeded at `value`.
    pub fn variable(dim: usize, index: usize, value: f64) -> Self {
        assert!(index < dim);
        let mut j = Self::constant(dim, value);
        j.grad[index] = 1.0;
        j
    }

    /// Seeds for all coordinates at `point`.
    pub fn seeds(point: &[f64]) -> Vec<Jet2> {
        (0..point.len()).map(|i| Jet2::variable(point.len(), i, point[i])).collect()
    }

    /// Builds a 2-jet from explicit coefficients. `hess` is the full row-major
    /// `dim × dim` matrix; only its upper triangle is read.
    pub fn from_parts(value: f64, grad: &[f64], hess: &[f64]) -> Self {
        let dim = grad.len();
        assert_eq!(hess.len(), dim * dim);
        let mut j = Self::constant(dim, value);
        j.grad[..dim].copy_from_slice(grad);
        for a in 0..dim {
            for b in a..dim {
                j.hess[hess_index(dim, a, b)] = hess[a * dim + b];
            }
        }
        j
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, 0.0)
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.value
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    /// Number of valid derivative orders (0, 1 or 2).
    #[inline]
    pub fn order(&self) -> usize {
        self.order as usize
    }

    #[inline]
    pub fn grad(&self) -> &[f64] {
        &self.grad[..self.dim()]
    }

    #[inline]
    pub fn d(&self, i: usize) -> f64 {
        self.grad[i]
    }

    /// Second partial `∂²/∂x_i∂x_j`.
    #[inline]
    pub fn dd(&self, i: usize, j: usize) -> f64 {
        self.hess[hess_index(self.dim(), i, j)]
    }

    pub fn hess_packed(&self) -> &[f64] {
        let n = self.dim();
        &self.hess[..n * (n + 1) / 2]
    }

    /// Caps the valid order, e.g. for jets assembled from lower-order data.
    pub fn with_order(mut self, order: usize) -> Self {
        self.order = self.order.min(order as u8);
        if self.order < 2 {
            self.hess = [0.0; MAX_HESS];
        }
        if self.order < 1 {
            self.grad = [0.0; MAX_DIM];
        }
        self
    }

    /// Jet of `∂f/∂x_i`: value `grad[i]`, gradient the `i`-th Hessian row.
    pub fn partial(&self, i: usize) -> Result<Jet2, JetError> {
        if self.order == 0 {
            return Err(JetError::InsufficientOrder);
        }
        let n = self.dim();
        let mut out = Jet2::constant(n, self.grad[i]);
        for k in 0..n {
            out.grad[k] = self.dd(i, k);
        }
        out.order = self.order - 1;
        if out.order == 0 {
            out.grad = [0.0; MAX_DIM];
        }
        Ok(out)
    }

    /// Composition `g(self)` given `g(x), g'(x), g''(x)` at the value.
    pub fn compose(&self, g0: f64, g1: f64, g2: f64) -> Jet2 {
        let n = self.dim();
        let mut out = *self;
        out.value = g0;
        for i in 0..n {
            out.grad[i] = g1 * self.grad[i];
        }
        for a in 0..n {
            for b in a..n {
                let k = hess_index(n, a, b);
                out.hess[k] = g1 * self.hess[k] + g2 * self.grad[a] * self.grad[b];
            }
        }
        out
    }

    fn check_dim(&self, other: &Jet2) {
        debug_assert_eq!(self.dim, other.dim, "mixing jets of different dimension");
    }

    pub fn recip(&self) -> Result<Jet2, JetError> {
        let x = self.value;
        if x.abs() <= MACHINE_ZERO {
            return Err(JetError::DivisionByZeroJet(x));
        }
        let r = 1.0 / x;
        Ok(self.compose(r, -r * r, 2.0 * r * r * r))
    }

    pub fn checked_div(&self, rhs: &Jet2) -> Result<Jet2, JetError> {
        Ok(*self * rhs.recip()?)
    }

    pub fn sqrt(&self) -> Result<Jet2, JetError> {
        let x = self.value;
        if x <= 0.0 {
            return Err(JetError::DomainErrorJet { op: "sqrt", value: x });
        }
        let s = x.sqrt();
        Ok(self.compose(s, 0.5 / s, -0.25 / (s * x)))
    }

    pub fn ln(&self) -> Result<Jet2, JetError> {
        let x = self.value;
        if x <= 0.0 {
            return Err(JetError::DomainErrorJet { op: "ln", value: x });
        }
        Ok(self.compose(x.ln(), 1.0 / x, -1.0 / (x * x)))
    }

    pub fn exp(&self) -> Jet2 {
        let e = self.value.exp();
        self.compose(e, e, e)
    }

    pub fn sin(&self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.compose(s, c, -s)
    }

    pub fn cos(&self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.compose(c, -s, -c)
    }

    /// `self^p` for a constant exponent. Negative bases are allowed only for
    /// integral `p`.
    pub fn powf(&self, p: f64) -> Result<Jet2, JetError> {
        let x = self.value;
        if p == 0.0 {
            return Ok(Jet2::constant(self.dim(), 1.0).with_order(self.order()));
        }
        let integral = p.fract() == 0.0;
        if x < 0.0 && !integral {
            return Err(JetError::DomainErrorJet { op: "pow", value: x });
        }
        if x == 0.0 && (p < 2.0 && !(integral && p > 0.0)) {
            return Err(JetError::DomainErrorJet { op: "pow", value: x });
        }
        let g0 = x.powf(p);
        let g1 = if p == 1.0 { 1.0 } else { p * x.powf(p - 1.0) };
        let g2 = if p == 1.0 {
            0.0
        } else if p == 2.0 {
            2.0
        } else {
            p * (p - 1.0) * x.powf(p - 2.0)
        };
        Ok(self.compose(g0, g1, g2))
    }

    /// `self^exponent` for a jet exponent, via `exp(exponent · ln self)`.
    pub fn pow(&self, exponent: &Jet2) -> Result<Jet2, JetError> {
        if exponent.is_constant() {
            return self.powf(exponent.value).map(|j| j.with_order(exponent.order()));
        }
        Ok((*exponent * self.ln()?).exp())
    }

    /// True when every stored derivative is exactly zero.
    pub fn is_constant(&self) -> bool {
        self.grad().iter().all(|&g| g == 0.0) && self.hess_packed().iter().all(|&h| h == 0.0)
    }

    /// Largest absolute difference over all valid coefficients.
    pub fn max_abs_diff(&self, other: &Jet2) -> f64 {
        let order = self.order.min(other.order);
        let mut m = (self.value - other.value).abs();
        if order >= 1 {
            for (a, b) in self.grad().iter().zip(other.grad()) {
                m = m.max((a - b).abs());
            }
        }
        if order >= 2 {
            for (a, b) in self.hess_packed().iter().zip(other.hess_packed()) {
                m = m.max((a - b).abs());
            }
        }
        m
    }

    /// Largest absolute coefficient.
    pub fn max_abs(&self) -> f64 {
        self.max_abs_diff(&Jet2::zero(self.dim()))
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(mut self, rhs: Jet2) -> Jet2 {
        self.check_dim(&rhs);
        let n = self.dim();
        self.value += rhs.value;
        for i in 0..n {
            self.grad[i] += rhs.grad[i];
        }
        for k in 0..n * (n + 1) / 2 {
            self.hess[k] += rhs.hess[k];
        }
        self.order = self.order.min(rhs.order);
        self
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        self + (-rhs)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(mut self) -> Jet2 {
        let n = self.dim();
        self.value = -self.value;
        for i in 0..n {
            self.grad[i] = -self.grad[i];
        }
        for k in 0..n * (n + 1) / 2 {
            self.hess[k] = -self.hess[k];
        }
        self
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        self.check_dim(&rhs);
        let n = self.dim();
        let mut out = Jet2::constant(n, self.value * rhs.value);
        for i in 0..n {
            out.grad[i] = self.value * rhs.grad[i] + rhs.value * self.grad[i];
        }
        for a in 0..n {
            for b in a..n {
                let k = hess_index(n, a, b);
                out.hess[k] = self.value * rhs.hess[k]
                    + rhs.value * self.hess[k]
                    + self.grad[a] * rhs.grad[b]
                    + self.grad[b] * rhs.grad[a];
            }
        }
        out.order = self.order.min(rhs.order);
        out
    }
}

/// IEEE semantics: dividing by a zero-valued jet produces infinities. Use
/// [`Jet2::checked_div`] where a typed error is needed.
impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, rhs: Jet2) -> Jet2 {
        let r = 1.0 / rhs.value;
        self * rhs.compose(r, -r * r, 2.0 * r * r * r)
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(mut self, rhs: f64) -> Jet2 {
        self.value += rhs;
        self
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    fn sub(mut self, rhs: f64) -> Jet2 {
        self.value -= rhs;
        self
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(mut self, rhs: f64) -> Jet2 {
        let n = self.dim();
        self.value *= rhs;
        for i in 0..n {
            self.grad[i] *= rhs;
        }
        for k in 0..n * (n + 1) / 2 {
            self.hess[k] *= rhs;
        }
        self
    }
}

impl Div<f64> for Jet2 {
    type Output = Jet2;
    fn div(self, rhs: f64) -> Jet2 {
        self * (1.0 / rhs)
    }
}

impl Add<Jet2> for f64 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        rhs + self
    }
}

impl Sub<Jet2> for f64 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        -rhs + self
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        rhs * self
    }
}

impl AddAssign for Jet2 {
    fn add_assign(&mut self, rhs: Jet2) {
        *self = *self + rhs;
    }
}

impl SubAssign for Jet2 {
    fn sub_assign(&mut self, rhs: Jet2) {
        *self = *self - rhs;
    }
}
