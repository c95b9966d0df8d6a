//! The ambient space `R^{m+2,2}`, Legendre frames and enveloped sphere congruences.
//!
//! Vectors are stored as `m + 4` coordinates: the `m + 2` spatial ones first,
//! then the coefficients of the time-like unit vectors `t0` and `t1`.

use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

use crate::jet::{Jet2, JetError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("contact condition violated: {relation} residual {residual:e} exceeds {tolerance:e}")]
    ContactViolation { relation: &'static str, residual: f64, tolerance: f64 },
    #[error("not immersed: df(X) and dxi(X) both vanish for some direction (smallest singular value {0:e})")]
    NotImmersed(f64),
    #[error("frame component has nonzero time coefficients")]
    TimeComponent,
    #[error(transparent)]
    Jet(#[from] JetError),
}

/// A vector of `R^{m+2,2}` with coordinates of type `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LieVec<T> {
    coords: Vec<T>,
}

pub type LieVector = LieVec<f64>;
/// A `LieVector`-valued 2-jet.
pub type LieJet = LieVec<Jet2>;

impl<T: Copy> LieVec<T> {
    pub fn new(spatial: &[T], c0: T, c1: T) -> Self {
        let mut coords = spatial.to_vec();
        coords.push(c0);
        coords.push(c1);
        LieVec { coords }
    }

    /// Builds from all `m + 4` coordinates in `(spatial…, c0, c1)` order.
    pub fn from_coords(coords: Vec<T>) -> Self {
        assert!(coords.len() >= 3, "a Lie vector needs at least one spatial coordinate");
        LieVec { coords }
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn spatial(&self) -> &[T] {
        &self.coords[..self.coords.len() - 2]
    }

    pub fn c0(&self) -> T {
        self.coords[self.coords.len() - 2]
    }

    pub fn c1(&self) -> T {
        self.coords[self.coords.len() - 1]
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(&T) -> U) -> LieVec<U> {
        LieVec { coords: self.coords.iter().map(f).collect() }
    }

    pub fn zip_with<U: Copy, V: Copy>(&self, other: &LieVec<U>, mut f: impl FnMut(T, U) -> V) -> LieVec<V> {
        assert_eq!(self.len(), other.len(), "Lie vectors of different ambient dimension");
        LieVec { coords: self.coords.iter().zip(&other.coords).map(|(&a, &b)| f(a, b)).collect() }
    }
}

impl<T> LieVec<T>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<Output = T>,
{
    /// The signature `(m+2, 2)` inner product.
    pub fn inner(&self, other: &Self) -> T {
        assert_eq!(self.len(), other.len(), "Lie vectors of different ambient dimension");
        let n = self.len();
        let mut acc = self.coords[0] * other.coords[0];
        for i in 1..n - 2 {
            acc = acc + self.coords[i] * other.coords[i];
        }
        acc - self.coords[n - 2] * other.coords[n - 2] - self.coords[n - 1] * other.coords[n - 1]
    }
}

pub fn lie_inner(x: &LieVector, y: &LieVector) -> f64 {
    x.inner(y)
}

impl LieVector {
    pub fn spatial_vec(spatial: &[f64]) -> Self {
        Self::new(spatial, 0.0, 0.0)
    }

    /// `t0` in an ambient space with `spatial_len` spatial coordinates.
    pub fn t0(spatial_len: usize) -> Self {
        Self::new(&vec![0.0; spatial_len], 1.0, 0.0)
    }

    pub fn t1(spatial_len: usize) -> Self {
        Self::new(&vec![0.0; spatial_len], 0.0, 1.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|x| x * s)
    }

    pub fn max_abs(&self) -> f64 {
        self.coords.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.zip_with(other, |a, b| a - b).max_abs()
    }
}

impl<T: Copy + Add<Output = T>> Add for &LieVec<T> {
    type Output = LieVec<T>;
    fn add(self, rhs: &LieVec<T>) -> LieVec<T> {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl<T: Copy + Sub<Output = T>> Sub for &LieVec<T> {
    type Output = LieVec<T>;
    fn sub(self, rhs: &LieVec<T>) -> LieVec<T> {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl<T: Copy + Neg<Output = T>> Neg for &LieVec<T> {
    type Output = LieVec<T>;
    fn neg(self) -> LieVec<T> {
        self.map(|&a| -a)
    }
}

impl LieJet {
    pub fn dim(&self) -> usize {
        self.coords[0].dim()
    }

    pub fn order(&self) -> usize {
        self.coords.iter().map(Jet2::order).min().unwrap_or(0)
    }

    /// Constant jet of a plain vector.
    pub fn constant(v: &LieVector, dim: usize) -> Self {
        v.map(|&x| Jet2::constant(dim, x))
    }

    pub fn value(&self) -> LieVector {
        self.map(Jet2::value)
    }

    /// Jet of the coordinate derivative `∂_i` of this vector field.
    pub fn partial(&self, i: usize) -> Result<LieJet, JetError> {
        Ok(LieVec { coords: self.coords.iter().map(|c| c.partial(i)).collect::<Result<_, _>>()? })
    }

    /// Value-level `∂_i` (first derivative vector at the point).
    pub fn d(&self, i: usize) -> LieVector {
        self.map(|c| c.d(i))
    }

    pub fn scale(&self, s: &Jet2) -> LieJet {
        self.map(|&c| c * *s)
    }

    pub fn scale_f64(&self, s: f64) -> LieJet {
        self.map(|&c| c * s)
    }

    pub fn with_order(&self, order: usize) -> LieJet {
        self.map(|c| c.with_order(order))
    }

    /// Largest difference over all valid jet coefficients of all coordinates.
    pub fn max_abs_diff(&self, other: &LieJet) -> f64 {
        self.coords.iter().zip(&other.coords).fold(0.0, |m, (a, b)| m.max(a.max_abs_diff(b)))
    }
}

/// Per-invariant maximal residuals of a certified frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameCertificate {
    pub unit_f: f64,
    pub unit_xi: f64,
    pub orthogonal: f64,
    pub contact_df_xi: f64,
    pub contact_f_dxi: f64,
    /// Smallest singular value of the stacked map `X ↦ (df(X), dξ(X))`.
    pub immersion_margin: f64,
}

impl FrameCertificate {
    pub fn max_residual(&self) -> f64 {
        self.unit_f
            .max(self.unit_xi)
            .max(self.orthogonal)
            .max(self.contact_df_xi)
            .max(self.contact_f_dxi)
    }
}

/// Spherical projection `f` and unit normal field `ξ` of a Legendre map at one
/// parameter point, both as jets with zero time components.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreFrame {
    pub f: LieJet,
    pub xi: LieJet,
    pub point: Vec<f64>,
    pub certificate: FrameCertificate,
}

/// Smallest singular value below which a direction counts as collapsed.
pub const IMMERSION_TOL: f64 = 1e-10;

/// Certifies `(f, ξ)` as a Legendre frame: unit length, orthogonality and the
/// contact relations `(df, ξ) = (f, dξ) = 0` to within `contact_tol`, plus the
/// immersion screen.
pub fn lift_frame(f: LieJet, xi: LieJet, point: &[f64], contact_tol: f64) -> Result<LegendreFrame, FrameError> {
    for v in [&f, &xi] {
        if v.c0().max_abs() != 0.0 || v.c1().max_abs() != 0.0 {
            return Err(FrameError::TimeComponent);
        }
    }
    let m = f.dim();
    let fv = f.value();
    let xv = xi.value();
    let mut cert = FrameCertificate {
        unit_f: (fv.inner(&fv) - 1.0).abs(),
        unit_xi: (xv.inner(&xv) - 1.0).abs(),
        orthogonal: fv.inner(&xv).abs(),
        ..Default::default()
    };
    let df: Vec<LieVector> = (0..m).map(|i| f.d(i)).collect();
    let dxi: Vec<LieVector> = (0..m).map(|i| xi.d(i)).collect();
    for i in 0..m {
        cert.contact_df_xi = cert.contact_df_xi.max(df[i].inner(&xv).abs());
        cert.contact_f_dxi = cert.contact_f_dxi.max(fv.inner(&dxi[i]).abs());
    }
    let checks = [
        ("|f|^2 = 1", cert.unit_f),
        ("|xi|^2 = 1", cert.unit_xi),
        ("(f, xi) = 0", cert.orthogonal),
        ("(df, xi) = 0", cert.contact_df_xi),
        ("(f, dxi) = 0", cert.contact_f_dxi),
    ];
    for (relation, residual) in checks {
        if !(residual <= contact_tol) {
            return Err(FrameError::ContactViolation { relation, residual, tolerance: contact_tol });
        }
    }
    // Gram matrix of X ↦ (df(X), dξ(X)) in the Euclidean spatial product.
    let gram: Vec<f64> = (0..m * m)
        .map(|k| {
            let (i, j) = (k / m, k % m);
            df[i].inner(&df[j]) + dxi[i].inner(&dxi[j])
        })
        .collect();
    cert.immersion_margin = smallest_eigenvalue_sym(&gram, m).max(0.0).sqrt();
    if !(cert.immersion_margin > IMMERSION_TOL) {
        return Err(FrameError::NotImmersed(cert.immersion_margin));
    }
    Ok(LegendreFrame { f, xi, point: point.to_vec(), certificate: cert })
}

/// Smallest eigenvalue of a small symmetric matrix by cyclic Jacobi sweeps.
pub(crate) fn smallest_eigenvalue_sym(a: &[f64], n: usize) -> f64 {
    let mut a = a.to_vec();
    for _ in 0..50 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).fold(f64::INFINITY, f64::min)
}

impl LegendreFrame {
    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    /// Number of spatial coordinates, `m + 2`.
    pub fn spatial_len(&self) -> usize {
        self.f.len() - 2
    }

    /// Point sphere lift `f + t0`.
    pub fn point_sphere(&self) -> LieJet {
        let t0 = LieJet::constant(&LieVector::t0(self.spatial_len()), self.dim());
        &self.f + &t0
    }

    /// Great sphere lift `ξ + t1`.
    pub fn great_sphere(&self) -> LieJet {
        let t1 = LieJet::constant(&LieVector::t1(self.spatial_len()), self.dim());
        &self.xi + &t1
    }
}

/// An enveloped sphere congruence `σ = ξ − τ f − τ t0 + t1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereCongruence {
    pub tau: Jet2,
    pub sigma: LieJet,
}

impl SphereCongruence {
    /// `|(σ, σ)|` at the point; zero for a light-like section.
    pub fn null_residual(&self) -> f64 {
        let s = self.sigma.value();
        s.inner(&s).abs()
    }
}

pub fn sphere_congruence(frame: &LegendreFrame, tau: Jet2) -> SphereCongruence {
    let n = frame.spatial_len();
    let t0 = LieVector::t0(n);
    let t1 = LieVector::t1(n);
    let sigma = frame.xi.zip_with(&frame.f, |x, f| x - tau * f);
    let sigma = sigma.zip_with(&LieJet::constant(&t0, frame.dim()), |s, t| s - tau * t);
    let sigma = &sigma + &LieJet::constant(&t1, frame.dim());
    SphereCongruence { tau, sigma }
}

/// Residual of `σ − (ξ + t1) + τ (f + t0)`, i.e. how far `σ` is from the span
/// of the two lifts with the expected coefficients.
pub fn span_residual(frame: &LegendreFrame, cong: &SphereCongruence) -> f64 {
    let expected = &frame.great_sphere() - &frame.point_sphere().scale(&cong.tau);
    cong.sigma.max_abs_diff(&expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec4(x: [f64; 4]) -> LieVector {
        LieVector::spatial_vec(&x)
    }

    #[test]
    fn time_like_units() {
        let t0 = LieVector::t0(4);
        let t1 = LieVector::t1(4);
        assert_eq!(lie_inner(&t0, &t0), -1.0);
        assert_eq!(lie_inner(&t1, &t1), -1.0);
        assert_eq!(lie_inner(&t0, &t1), 0.0);
    }

    #[test]
    fn point_sphere_lift_is_null() {
        let f = vec4([0.6, 0.0, 0.8, 0.0]);
        let p = &f + &LieVector::t0(4);
        assert!(lie_inner(&p, &p).abs() < 1e-15);
    }

    #[test]
    fn congruence_for_orthonormal_pair() {
        let e1 = LieJet::constant(&vec4([1.0, 0.0, 0.0, 0.0]), 2);
        let e2 = LieJet::constant(&vec4([0.0, 1.0, 0.0, 0.0]), 2);
        // constant maps are not immersed; build the frame by hand
        let frame = LegendreFrame { f: e1, xi: e2, point: vec![0.0, 0.0], certificate: Default::default() };
        let s = sphere_congruence(&frame, Jet2::constant(2, 1.0));
        assert_eq!(s.sigma.value(), LieVector::new(&[-1.0, 1.0, 0.0, 0.0], -1.0, 1.0));
        assert_eq!(s.null_residual(), 0.0);
        let s0 = sphere_congruence(&frame, Jet2::constant(2, 0.0));
        assert_eq!(s0.sigma.value(), LieVector::new(&[0.0, 1.0, 0.0, 0.0], 0.0, 1.0));
    }

    #[test]
    fn broken_frame_is_rejected() {
        let s = Jet2::seeds(&[0.2, 0.3]);
        let f = LieVec::new(&[s[0].cos(), s[0].sin(), Jet2::zero(2), Jet2::zero(2)], Jet2::zero(2), Jet2::zero(2));
        let err = lift_frame(f.clone(), f, &[0.2, 0.3], 1e-8).unwrap_err();
        assert!(matches!(err, FrameError::ContactViolation { relation: "(f, xi) = 0", .. }));
    }

    #[test]
    fn jacobi_smallest_eigenvalue() {
        let a = [2.0, 1.0, 1.0, 2.0];
        assert!((smallest_eigenvalue_sym(&a, 2) - 1.0).abs() < 1e-14);
        let b = [4.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.0, 0.5, 1.0];
        assert!((smallest_eigenvalue_sym(&b, 3) - 0.5).abs() < 1e-14);
    }
}
