//! Symmetric second-order tensors in Mandel form and fourth-order maps on them.
//!
//! Components are ordered `[xx, yy, √2·xy]` for d = 2 and
//! `[xx, yy, zz, √2·xy, √2·yz, √2·xz]` for d = 3. With this scaling the
//! Frobenius product of two symmetric tensors is the plain dot product of their
//! component vectors, and a map that is symmetric with respect to that product
//! is a symmetric matrix.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Maximum Mandel vector length (d = 3).
pub const MAX_K: usize = 6;

/// Spatial dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub fn new(d: usize) -> Result<Self> {
        match d {
            2 => Ok(Dim::Two),
            3 => Ok(Dim::Three),
            _ => Err(Error::config(format!("spatial dimension must be 2 or 3, got {d}"))),
        }
    }

    /// Number of spatial directions d.
    #[inline]
    pub fn n(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    /// Length of the Mandel vector, d(d+1)/2.
    #[inline]
    pub fn k(self) -> usize {
        match self {
            Dim::Two => 3,
            Dim::Three => 6,
        }
    }

    /// `(i, j)` index pair of Mandel component `a`.
    #[inline]
    pub fn pair(self, a: usize) -> (usize, usize) {
        match self {
            Dim::Two => [(0, 0), (1, 1), (0, 1)][a],
            Dim::Three => [(0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2)][a],
        }
    }

    /// Mandel component index of the tensor entry `(i, j)`.
    #[inline]
    pub fn index(self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        match (self, i, j) {
            (_, 0, 0) => 0,
            (_, 1, 1) => 1,
            (Dim::Two, 0, 1) => 2,
            (Dim::Three, 2, 2) => 2,
            (Dim::Three, 0, 1) => 3,
            (Dim::Three, 1, 2) => 4,
            (Dim::Three, 0, 2) => 5,
            _ => panic!("tensor index ({i},{j}) out of range for {self:?}"),
        }
    }
}

impl TryFrom<usize> for Dim {
    type Error = Error;
    fn try_from(d: usize) -> Result<Self> {
        Dim::new(d)
    }
}

impl From<Dim> for usize {
    fn from(d: Dim) -> usize {
        d.n()
    }
}

/// A symmetric d×d tensor stored as a Mandel vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymTensor {
    dim: Dim,
    comps: [f64; MAX_K],
}

impl SymTensor {
    pub fn zero(dim: Dim) -> Self {
        SymTensor {
            dim,
            comps: [0.0; MAX_K],
        }
    }

    pub fn identity(dim: Dim) -> Self {
        let mut t = Self::zero(dim);
        for i in 0..dim.n() {
            t.comps[i] = 1.0;
        }
        t
    }

    /// Builds a tensor from Mandel components (length must be d(d+1)/2).
    pub fn from_mandel(dim: Dim, comps: &[f64]) -> Result<Self> {
        if comps.len() != dim.k() {
            return Err(Error::input(format!(
                "expected {} Mandel components for d={}, got {}",
                dim.k(),
                dim.n(),
                comps.len()
            )));
        }
        let mut t = Self::zero(dim);
        t.comps[..dim.k()].copy_from_slice(comps);
        Ok(t)
    }

    /// Builds a tensor from the independent entries `(i, j)`, i ≤ j, of a symmetric matrix.
    pub fn from_fn(dim: Dim, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut t = Self::zero(dim);
        for a in 0..dim.k() {
            let (i, j) = dim.pair(a);
            t.comps[a] = if i == j { f(i, i) } else { SQRT_2 * f(i, j) };
        }
        t
    }

    /// Symmetric part of a square matrix given as a d×d array view.
    pub fn sym_of(dim: Dim, m: &[[f64; 3]; 3]) -> Self {
        Self::from_fn(dim, |i, j| 0.5 * (m[i][j] + m[j][i]))
    }

    #[inline]
    pub fn dim(&self) -> Dim {
        self.dim
    }

    #[inline]
    pub fn mandel(&self) -> &[f64] {
        &self.comps[..self.dim.k()]
    }

    #[inline]
    pub fn mandel_mut(&mut self) -> &mut [f64] {
        let k = self.dim.k();
        &mut self.comps[..k]
    }

    /// Tensor entry `(i, j)` (unscaled).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let a = self.dim.index(i, j);
        if i == j {
            self.comps[a]
        } else {
            self.comps[a] / SQRT_2
        }
    }

    /// Dense matrix form; entries beyond d are zero.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for i in 0..self.dim.n() {
            for j in 0..self.dim.n() {
                m[i][j] = self.get(i, j);
            }
        }
        m
    }

    /// Frobenius inner product σ:ε.
    #[inline]
    pub fn inner(&self, other: &SymTensor) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.mandel()
            .iter()
            .zip(other.mandel())
            .map(|(a, b)| a * b)
            .sum()
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn trace(&self) -> f64 {
        self.comps[..self.dim.n()].iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.mandel().iter().all(|c| c.is_finite())
    }

    /// `s - (tr s / d) Id`.
    pub fn deviator(&self) -> SymTensor {
        let mean = self.trace() / self.dim.n() as f64;
        let mut out = *self;
        for i in 0..self.dim.n() {
            out.comps[i] -= mean;
        }
        out
    }

    pub fn scale(&self, s: f64) -> SymTensor {
        let mut out = *self;
        out.comps.iter_mut().for_each(|c| *c *= s);
        out
    }

    /// Largest absolute Mandel component.
    pub fn max_abs(&self) -> f64 {
        self.mandel().iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

impl Add for SymTensor {
    type Output = SymTensor;
    fn add(mut self, rhs: SymTensor) -> SymTensor {
        self += rhs;
        self
    }
}

impl AddAssign for SymTensor {
    fn add_assign(&mut self, rhs: SymTensor) {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.comps.iter_mut().zip(rhs.comps) {
            *a += b;
        }
    }
}

impl Sub for SymTensor {
    type Output = SymTensor;
    fn sub(mut self, rhs: SymTensor) -> SymTensor {
        self -= rhs;
        self
    }
}

impl SubAssign for SymTensor {
    fn sub_assign(&mut self, rhs: SymTensor) {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.comps.iter_mut().zip(rhs.comps) {
            *a -= b;
        }
    }
}

impl Neg for SymTensor {
    type Output = SymTensor;
    fn neg(self) -> SymTensor {
        self.scale(-1.0)
    }
}

impl Mul<SymTensor> for f64 {
    type Output = SymTensor;
    fn mul(self, rhs: SymTensor) -> SymTensor {
        rhs.scale(self)
    }
}

/// Symmetric part `(m + mᵀ)/2` of a dense square matrix.
pub fn symmetrize(m: &DMatrix<f64>) -> Result<SymTensor> {
    if m.nrows() != m.ncols() {
        return Err(Error::config(format!(
            "symmetrize expects a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let dim = Dim::new(m.nrows())?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("symmetrize: non-finite matrix entry"));
    }
    Ok(SymTensor::from_fn(dim, |i, j| 0.5 * (m[(i, j)] + m[(j, i)])))
}

/// A linear map on symmetric tensors, stored as a k×k matrix in Mandel space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourthOrderMap {
    dim: Dim,
    m: [[f64; MAX_K]; MAX_K],
}

impl FourthOrderMap {
    pub fn zero(dim: Dim) -> Self {
        FourthOrderMap {
            dim,
            m: [[0.0; MAX_K]; MAX_K],
        }
    }

    pub fn identity(dim: Dim) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: Dim, s: f64) -> Self {
        let mut t = Self::zero(dim);
        for a in 0..dim.k() {
            t.m[a][a] = s;
        }
        t
    }

    /// Builds a map from a row-major k×k Mandel matrix.
    pub fn from_rows(dim: Dim, rows: &[&[f64]]) -> Result<Self> {
        let k = dim.k();
        if rows.len() != k || rows.iter().any(|r| r.len() != k) {
            return Err(Error::input(format!("expected a {k}x{k} Mandel matrix")));
        }
        let mut t = Self::zero(dim);
        for a in 0..k {
            t.m[a][..k].copy_from_slice(rows[a]);
        }
        Ok(t)
    }

    /// Projection onto the deviatoric subspace.
    pub fn deviatoric_projector(dim: Dim) -> Self {
        let n = dim.n();
        let mut t = Self::identity(dim);
        for i in 0..n {
            for j in 0..n {
                t.m[i][j] -= 1.0 / n as f64;
            }
        }
        t
    }

    /// Outer product `a ⊗ b` so that `(a ⊗ b) s = a (b : s)`.
    pub fn outer(a: &SymTensor, b: &SymTensor) -> Self {
        let dim = a.dim();
        let mut t = Self::zero(dim);
        for i in 0..dim.k() {
            for j in 0..dim.k() {
                t.m[i][j] = a.mandel()[i] * b.mandel()[j];
            }
        }
        t
    }

    #[inline]
    pub fn dim(&self) -> Dim {
        self.dim
    }

    #[inline]
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.m[a][b]
    }

    #[inline]
    pub fn set_entry(&mut self, a: usize, b: usize, v: f64) {
        self.m[a][b] = v;
    }

    /// Matrix–vector product in Mandel space.
    #[inline]
    pub fn apply(&self, s: &SymTensor) -> SymTensor {
        debug_assert_eq!(self.dim, s.dim());
        let k = self.dim.k();
        let mut out = SymTensor::zero(self.dim);
        let src = s.mandel();
        let dst = out.mandel_mut();
        for a in 0..k {
            let mut acc = 0.0;
            for b in 0..k {
                acc += self.m[a][b] * src[b];
            }
            dst[a] = acc;
        }
        out
    }

    /// Checked variant of [`apply`](Self::apply).
    pub fn try_apply(&self, s: &SymTensor) -> Result<SymTensor> {
        if self.dim != s.dim() {
            return Err(Error::input(format!(
                "dimension mismatch: map is d={}, tensor is d={}",
                self.dim.n(),
                s.dim().n()
            )));
        }
        Ok(self.apply(s))
    }

    /// Composition `self ∘ other`.
    pub fn compose(&self, other: &FourthOrderMap) -> FourthOrderMap {
        let k = self.dim.k();
        let mut out = Self::zero(self.dim);
        for a in 0..k {
            for b in 0..k {
                out.m[a][b] = (0..k).map(|c| self.m[a][c] * other.m[c][b]).sum();
            }
        }
        out
    }

    pub fn transpose(&self) -> FourthOrderMap {
        let mut out = *self;
        for a in 0..self.dim.k() {
            for b in 0..self.dim.k() {
                out.m[a][b] = self.m[b][a];
            }
        }
        out
    }

    /// `(M + Mᵀ)/2`.
    pub fn symmetric_part(&self) -> FourthOrderMap {
        let t = self.transpose();
        let mut out = *self;
        for a in 0..self.dim.k() {
            for b in 0..self.dim.k() {
                out.m[a][b] = 0.5 * (self.m[a][b] + t.m[a][b]);
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> FourthOrderMap {
        let mut out = *self;
        out.m.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    pub fn plus(&self, other: &FourthOrderMap) -> FourthOrderMap {
        let mut out = *self;
        for a in 0..MAX_K {
            for b in 0..MAX_K {
                out.m[a][b] += other.m[a][b];
            }
        }
        out
    }

    pub fn minus(&self, other: &FourthOrderMap) -> FourthOrderMap {
        self.plus(&other.scale(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `|M − Mᵀ|_∞ ≤ 1e−14·|M|_∞`.
    pub fn is_symmetric(&self) -> bool {
        self.minus(&self.transpose()).max_abs() <= 1e-14 * self.max_abs()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let k = self.dim.k();
        DMatrix::from_fn(k, k, |a, b| self.m[a][b])
    }

    fn from_dmatrix(dim: Dim, m: &DMatrix<f64>) -> Self {
        let mut t = Self::zero(dim);
        for a in 0..dim.k() {
            for b in 0..dim.k() {
                t.m[a][b] = m[(a, b)];
            }
        }
        t
    }

    /// Inverse map; errors if singular.
    pub fn inverse(&self) -> Result<FourthOrderMap> {
        self.to_dmatrix()
            .try_inverse()
            .map(|inv| Self::from_dmatrix(self.dim, &inv))
            .ok_or_else(|| Error::numerical("singular fourth-order map", 0.0))
    }

    /// Solves `self · x = rhs`.
    pub fn solve(&self, rhs: &SymTensor) -> Result<SymTensor> {
        let k = self.dim.k();
        let lu = self.to_dmatrix().lu();
        let b = nalgebra::DVector::from_column_slice(rhs.mandel());
        let x = lu
            .solve(&b)
            .ok_or_else(|| Error::numerical("singular fourth-order map", 0.0))?;
        SymTensor::from_mandel(self.dim, &x.as_slice()[..k])
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = SymmetricEigen::new(self.symmetric_part().to_dmatrix());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }
}

/// Elastic stiffness `2μ I + λ 1⊗1` for Young modulus `e` and Poisson ratio `nu`.
///
/// For d = 2 this is the plane-strain law with the three-dimensional constants.
pub fn isotropic_stiffness(e: f64, nu: f64, dim: Dim) -> Result<FourthOrderMap> {
    check_isotropic(e, nu)?;
    let mu = e / (2.0 * (1.0 + nu));
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mut t = FourthOrderMap::scaled_identity(dim, 2.0 * mu);
    for i in 0..dim.n() {
        for j in 0..dim.n() {
            t.m[i][j] += lambda;
        }
    }
    Ok(t)
}

/// Compliance `C` (strain per stress), the inverse of [`isotropic_stiffness`].
///
/// Written in closed form: `C = P_dev/(2μ) + (1/(dκ_d)) (1⊗1)/d`, where `κ_d`
/// is the in-plane bulk modulus `λ + 2μ/d`.
pub fn isotropic_compliance(e: f64, nu: f64, dim: Dim) -> Result<FourthOrderMap> {
    check_isotropic(e, nu)?;
    let mu = e / (2.0 * (1.0 + nu));
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let n = dim.n() as f64;
    // volumetric eigenvalue of the stiffness: 2μ + dλ
    let vol = 2.0 * mu + n * lambda;
    let dev = FourthOrderMap::deviatoric_projector(dim).scale(1.0 / (2.0 * mu));
    let mut sph = FourthOrderMap::zero(dim);
    for i in 0..dim.n() {
        for j in 0..dim.n() {
            sph.m[i][j] = 1.0 / (n * vol);
        }
    }
    Ok(dev.plus(&sph))
}

fn check_isotropic(e: f64, nu: f64) -> Result<()> {
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::config(format!("Young modulus must be positive, got {e}")));
    }
    if !(nu > -1.0 && nu < 0.5) {
        return Err(Error::config(format!("Poisson ratio must lie in (-1, 1/2), got {nu}")));
    }
    Ok(())
}

/// True iff every eigenvalue λ of the map satisfies `γ ≤ λ ≤ 1/γ`.
pub fn ellipticity_check(t: &FourthOrderMap, gamma: f64) -> bool {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return false;
    }
    t.eigenvalues()
        .iter()
        .all(|&l| l >= gamma && l <= 1.0 / gamma)
}

/// Largest γ for which [`ellipticity_check`] passes (0 if the map is not positive).
pub fn ellipticity_constant(t: &FourthOrderMap) -> f64 {
    let ev = t.eigenvalues();
    let lo = ev[0];
    let hi = ev[ev.len() - 1];
    if lo <= 0.0 {
        0.0
    } else {
        lo.min(1.0 / hi).min(1.0)
    }
}

/// Pointwise material data: compliance `C`, kinematic hardening `B`, yield stress `σ_y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialPoint {
    pub compliance: FourthOrderMap,
    pub hardening: FourthOrderMap,
    pub yield_stress: f64,
    stiffness: FourthOrderMap,
}

impl MaterialPoint {
    pub fn new(
        compliance: FourthOrderMap,
        hardening: FourthOrderMap,
        yield_stress: f64,
    ) -> Result<Self> {
        if compliance.dim() != hardening.dim() {
            return Err(Error::config("compliance and hardening dimensions differ"));
        }
        if !(yield_stress > 0.0) {
            return Err(Error::config(format!(
                "yield stress must be positive, got {yield_stress}"
            )));
        }
        if !compliance.is_symmetric() || !hardening.is_symmetric() {
            return Err(Error::config("material maps must be symmetric"));
        }
        if ellipticity_constant(&compliance) <= 0.0 || ellipticity_constant(&hardening) <= 0.0 {
            return Err(Error::config("material maps must be positive definite"));
        }
        let stiffness = compliance.inverse()?.symmetric_part();
        Ok(MaterialPoint {
            compliance,
            hardening,
            yield_stress,
            stiffness,
        })
    }

    /// Isotropic elasticity with kinematic hardening `B = h·Id`.
    pub fn isotropic(e: f64, nu: f64, h: f64, yield_stress: f64, dim: Dim) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::config(format!("hardening modulus must be positive, got {h}")));
        }
        Self::new(
            isotropic_compliance(e, nu, dim)?,
            FourthOrderMap::scaled_identity(dim, h),
            yield_stress,
        )
    }

    #[inline]
    pub fn dim(&self) -> Dim {
        self.compliance.dim()
    }

    /// Elastic stiffness `C⁻¹`.
    #[inline]
    pub fn stiffness(&self) -> &FourthOrderMap {
        &self.stiffness
    }

    /// Checks the two-sided bounds on `C` and `B`.
    pub fn is_elliptic(&self, gamma: f64, beta: f64) -> bool {
        ellipticity_check(&self.compliance, gamma) && ellipticity_check(&self.hardening, beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(dim: Dim, rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(dim.n(), dim.n(), |i, j| rows[i][j])
    }

    #[test]
    fn symmetrize_examples() {
        let d2 = Dim::Two;
        let id = symmetrize(&dense(d2, &[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(id, SymTensor::identity(d2));
        let anti = symmetrize(&dense(d2, &[&[0.0, 1.0], &[-1.0, 0.0]])).unwrap();
        assert_eq!(anti, SymTensor::zero(d2));
        let s = symmetrize(&dense(d2, &[&[0.0, 1.0], &[0.0, 0.0]])).unwrap();
        assert!((s.get(0, 1) - 0.5).abs() < 1e-15);
        assert!((s.mandel()[2] - 0.5 * SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn symmetrize_rejects_bad_dimension() {
        let m = DMatrix::from_element(4, 4, 1.0);
        assert!(matches!(symmetrize(&m), Err(Error::Config(_))));
        let m = DMatrix::from_element(1, 1, 1.0);
        assert!(symmetrize(&m).is_err());
    }

    #[test]
    fn deviator_examples() {
        let d2 = Dim::Two;
        assert!(SymTensor::identity(d2).deviator().norm() < 1e-15);
        let s = SymTensor::from_fn(d2, |i, j| if i == j && i == 0 { 2.0 } else { 0.0 });
        let dev = s.deviator();
        assert!((dev.get(0, 0) - 1.0).abs() < 1e-15);
        assert!((dev.get(1, 1) + 1.0).abs() < 1e-15);
        let traceless = SymTensor::from_mandel(d2, &[0.3, -0.3, 0.7]).unwrap();
        assert_eq!(traceless.deviator(), traceless);
    }

    #[test]
    fn apply_identity_and_dimension_mismatch() {
        let s = SymTensor::from_mandel(Dim::Three, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(FourthOrderMap::identity(Dim::Three).apply(&s), s);
        assert!(FourthOrderMap::identity(Dim::Two).try_apply(&s).is_err());
    }

    /// Compliance by numerically inverting the Mandel stiffness (independent of the
    /// closed form used by `isotropic_compliance`).
    fn compliance_oracle(e: f64, nu: f64, dim: Dim) -> FourthOrderMap {
        isotropic_stiffness(e, nu, dim).unwrap().inverse().unwrap()
    }

    #[test]
    fn isotropic_compliance_matches_inverse_stiffness() {
        for dim in [Dim::Two, Dim::Three] {
            for &(e, nu) in &[(1.0, 0.3), (2.0, 0.0), (0.5, -0.4), (3.0, 0.49)] {
                let c = isotropic_compliance(e, nu, dim).unwrap();
                let oracle = compliance_oracle(e, nu, dim);
                assert!(c.minus(&oracle).max_abs() < 1e-12 * oracle.max_abs());
            }
        }
    }

    #[test]
    fn compliance_on_shear_and_hydrostatic() {
        let d2 = Dim::Two;
        let c = compliance_oracle(1.0, 0.3, d2);
        let shear = SymTensor::from_mandel(d2, &[0.4, -0.4, 1.1]).unwrap();
        let out = isotropic_compliance(1.0, 0.3, d2).unwrap().apply(&shear);
        assert!((out - shear.scale(1.3)).norm() < 1e-14);
        assert!((c.apply(&shear) - shear.scale(1.3)).norm() < 1e-13);
        let id = SymTensor::identity(d2);
        let expected = (1.0 + 0.3) * (1.0 - 2.0 * 0.3) / 1.0;
        let out = isotropic_compliance(1.0, 0.3, d2).unwrap().apply(&id);
        assert!((out - id.scale(expected)).norm() < 1e-14);
        assert!((c.apply(&id) - id.scale(expected)).norm() < 1e-13);
    }

    #[test]
    fn unit_modulus_zero_poisson_is_identity() {
        for dim in [Dim::Two, Dim::Three] {
            let stiff = isotropic_stiffness(1.0, 0.0, dim).unwrap();
            assert!(stiff.minus(&FourthOrderMap::identity(dim)).max_abs() < 1e-15);
            let c = isotropic_compliance(1.0, 0.0, dim).unwrap();
            let s = SymTensor::from_fn(dim, |i, j| (i + 2 * j) as f64 - 0.5);
            assert!((c.apply(&s) - s).norm() < 1e-14);
        }
    }

    #[test]
    fn eigenvalues_positive_and_near_incompressible_gap() {
        let ev = isotropic_compliance(2.0, 0.3, Dim::Two).unwrap().eigenvalues();
        assert!(ev.iter().all(|&l| l > 0.0));
        // deviatoric eigenvalue (1+ν)/E, volumetric (1+ν)(1−2ν)/E in plane strain
        let c = isotropic_compliance(1.0, 0.49, Dim::Two).unwrap();
        let eig = SymmetricEigen::new(c.to_dmatrix());
        let id = SymTensor::identity(Dim::Two);
        let mut vol = f64::NAN;
        let mut dev_max: f64 = 0.0;
        for (idx, &l) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(idx);
            let trace_part = (v[0] + v[1]).abs() / SQRT_2;
            if trace_part > 0.99 {
                vol = l;
            } else {
                dev_max = dev_max.max(l);
            }
        }
        assert!((vol - 1.49 * 0.02).abs() < 1e-12);
        assert!((dev_max - 1.49).abs() < 1e-12);
        assert!(vol < 0.05 * dev_max);
        assert!((c.apply(&id) - id.scale(vol)).norm() < 1e-12);
    }

    #[test]
    fn invalid_poisson_ratio() {
        assert!(isotropic_compliance(1.0, 0.5, Dim::Two).is_err());
        assert!(isotropic_compliance(1.0, -1.0, Dim::Two).is_err());
        assert!(isotropic_compliance(0.0, 0.2, Dim::Two).is_err());
    }

    #[test]
    fn ellipticity_examples() {
        let id = FourthOrderMap::identity(Dim::Two);
        assert!(ellipticity_check(&id, 1.0));
        assert!(!ellipticity_check(&id.scale(3.0), 0.5));
        let c = isotropic_compliance(1.0, 0.3, Dim::Two).unwrap();
        let ev = SymmetricEigen::new(c.to_dmatrix()).eigenvalues;
        let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(ellipticity_check(&c, 0.5 * min));
    }

    #[test]
    fn material_point_validation() {
        assert!(MaterialPoint::isotropic(1.0, 0.3, 0.1, 0.0, Dim::Two).is_err());
        assert!(MaterialPoint::isotropic(1.0, 0.3, 0.0, 1.0, Dim::Two).is_err());
        let mp = MaterialPoint::isotropic(1.0, 0.3, 0.1, 0.05, Dim::Two).unwrap();
        let prod = mp.stiffness().compose(&mp.compliance);
        assert!(prod.minus(&FourthOrderMap::identity(Dim::Two)).max_abs() < 1e-13);
        assert!(mp.is_elliptic(0.05, 0.05));
    }

    fn sym_strategy(dim: Dim) -> impl Strategy<Value = SymTensor> {
        proptest::collection::vec(-10.0..10.0f64, dim.k())
            .prop_map(move |v| SymTensor::from_mandel(dim, &v).unwrap())
    }

    fn dim_strategy() -> impl Strategy<Value = Dim> {
        prop_oneof![Just(Dim::Two), Just(Dim::Three)]
    }

    proptest! {
        #[test]
        fn mandel_inner_matches_dense(
            (a, b) in dim_strategy().prop_flat_map(|d| (sym_strategy(d), sym_strategy(d)))
        ) {
            let (ma, mb) = (a.to_matrix(), b.to_matrix());
            let n = a.dim().n();
            let mut dense = 0.0;
            for i in 0..n { for j in 0..n { dense += ma[i][j] * mb[i][j]; } }
            let scale = a.norm() * b.norm() + 1e-300;
            prop_assert!((a.inner(&b) - dense).abs() <= 1e-13 * scale);
            let back = SymTensor::sym_of(a.dim(), &ma);
            prop_assert!((back - a).max_abs() <= 1e-15 * a.max_abs().max(1.0));
        }

        #[test]
        fn apply_map_is_self_adjoint(
            (a, b, e, nu) in dim_strategy().prop_flat_map(|d| (sym_strategy(d), sym_strategy(d), 0.1..10.0f64, -0.9..0.45f64))
        ) {
            let t = isotropic_compliance(e, nu, a.dim()).unwrap();
            let lhs = t.apply(&a).inner(&b);
            let rhs = a.inner(&t.apply(&b));
            let tn = t.to_dmatrix().norm();
            prop_assert!((lhs - rhs).abs() <= 1e-13 * tn * a.norm() * b.norm() + 1e-300);
        }

        #[test]
        fn deviator_is_idempotent(a in dim_strategy().prop_flat_map(sym_strategy)) {
            let d1 = a.deviator();
            let d2 = d1.deviator();
            prop_assert!((d1 - d2).max_abs() <= 1e-14 * a.max_abs().max(1.0));
            prop_assert!(d1.trace().abs() <= 1e-14 * a.max_abs().max(1.0) * 10.0);
        }
    }
}
