//! Small dense 3×3 tensor algebra for plane-strain kinematics.
//!
//! Plane strain is carried with full 3×3 tensors: the out-of-plane row and
//! column of a deformation gradient are `(0, 0, 1)`, but logarithmic and
//! deviatoric operations still couple the `zz` component.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

const JACOBI_MAX_SWEEPS: usize = 64;

/// General second-order tensor, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tensor2(pub [[f64; 3]; 3]);

/// Symmetric second-order tensor with one stored value per index pair.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymTensor2 {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub xy: f64,
    pub yz: f64,
    pub xz: f64,
}

/// Eigen-pairs of a symmetric tensor. Eigenvalues are sorted in descending
/// order and `vectors[i][k]` is component `i` of eigenvector `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralDecomp {
    pub values: [f64; 3],
    pub vectors: [[f64; 3]; 3],
}

impl Tensor2 {
    pub const fn identity() -> Self {
        Tensor2([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub const fn zero() -> Self {
        Tensor2([[0.0; 3]; 3])
    }

    pub fn transpose(&self) -> Self {
        let a = &self.0;
        let mut t = [[0.0; 3]; 3];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[j][i];
            }
        }
        Tensor2(t)
    }

    pub fn det(&self) -> f64 {
        let a = &self.0;
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn inverse(&self) -> Result<Self> {
        let a = &self.0;
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::InvalidDeformation { det });
        }
        let inv_det = 1.0 / det;
        let mut b = [[0.0; 3]; 3];
        b[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) * inv_det;
        b[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) * inv_det;
        b[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) * inv_det;
        b[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) * inv_det;
        b[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) * inv_det;
        b[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) * inv_det;
        b[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) * inv_det;
        b[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) * inv_det;
        b[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) * inv_det;
        Ok(Tensor2(b))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut t = self.0;
        t.iter_mut().flatten().for_each(|v| *v *= s);
        Tensor2(t)
    }

    /// `A : B`
    pub fn ddot(&self, other: &Tensor2) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    /// `FᵀF`, symmetric by construction.
    pub fn right_cauchy_green(&self) -> SymTensor2 {
        let a = &self.0;
        let col = |i: usize, j: usize| a[0][i] * a[0][j] + a[1][i] * a[1][j] + a[2][i] * a[2][j];
        SymTensor2 {
            xx: col(0, 0),
            yy: col(1, 1),
            zz: col(2, 2),
            xy: col(0, 1),
            yz: col(1, 2),
            xz: col(0, 2),
        }
    }

    /// Symmetric part `½(A + Aᵀ)`.
    pub fn sym(&self) -> SymTensor2 {
        let a = &self.0;
        SymTensor2 {
            xx: a[0][0],
            yy: a[1][1],
            zz: a[2][2],
            xy: 0.5 * (a[0][1] + a[1][0]),
            yz: 0.5 * (a[1][2] + a[2][1]),
            xz: 0.5 * (a[0][2] + a[2][0]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

impl Default for Tensor2 {
    fn default() -> Self {
        Tensor2::zero()
    }
}

impl Mul for Tensor2 {
    type Output = Tensor2;

    fn mul(self, rhs: Tensor2) -> Tensor2 {
        let (a, b) = (&self.0, &rhs.0);
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        Tensor2(c)
    }
}

impl Add for Tensor2 {
    type Output = Tensor2;

    fn add(self, rhs: Tensor2) -> Tensor2 {
        let mut c = self.0;
        c.iter_mut().flatten().zip(rhs.0.iter().flatten()).for_each(|(a, b)| *a += b);
        Tensor2(c)
    }
}

impl Sub for Tensor2 {
    type Output = Tensor2;

    fn sub(self, rhs: Tensor2) -> Tensor2 {
        let mut c = self.0;
        c.iter_mut().flatten().zip(rhs.0.iter().flatten()).for_each(|(a, b)| *a -= b);
        Tensor2(c)
    }
}

impl SymTensor2 {
    pub const fn new(xx: f64, yy: f64, zz: f64, xy: f64, yz: f64, xz: f64) -> Self {
        SymTensor2 { xx, yy, zz, xy, yz, xz }
    }

    pub const fn identity() -> Self {
        SymTensor2::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0)
    }

    pub const fn zero() -> Self {
        SymTensor2::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    }

    pub const fn diag(a: f64, b: f64, c: f64) -> Self {
        SymTensor2::new(a, b, c, 0.0, 0.0, 0.0)
    }

    /// Tensor without out-of-plane shear components.
    pub const fn plane(xx: f64, yy: f64, xy: f64, zz: f64) -> Self {
        SymTensor2::new(xx, yy, zz, xy, 0.0, 0.0)
    }

    pub fn from_matrix(m: &[[f64; 3]; 3]) -> Self {
        SymTensor2 {
            xx: m[0][0],
            yy: m[1][1],
            zz: m[2][2],
            xy: 0.5 * (m[0][1] + m[1][0]),
            yz: 0.5 * (m[1][2] + m[2][1]),
            xz: 0.5 * (m[0][2] + m[2][0]),
        }
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.xx, self.xy, self.xz],
            [self.xy, self.yy, self.yz],
            [self.xz, self.yz, self.zz],
        ]
    }

    pub fn to_tensor(&self) -> Tensor2 {
        Tensor2(self.to_matrix())
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    /// Deviatoric part `S − (tr S / 3) I`.
    pub fn dev(&self) -> Self {
        let m = self.trace() / 3.0;
        SymTensor2 {
            xx: self.xx - m,
            yy: self.yy - m,
            zz: self.zz - m,
            ..*self
        }
    }

    pub fn ddot(&self, o: &SymTensor2) -> f64 {
        self.xx * o.xx
            + self.yy * o.yy
            + self.zz * o.zz
            + 2.0 * (self.xy * o.xy + self.yz * o.yz + self.xz * o.xz)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        SymTensor2::new(
            self.xx * s,
            self.yy * s,
            self.zz * s,
            self.xy * s,
            self.yz * s,
            self.xz * s,
        )
    }

    pub fn is_finite(&self) -> bool {
        [self.xx, self.yy, self.zz, self.xy, self.yz, self.xz]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Product of two symmetric tensors (generally not symmetric).
    pub fn dot(&self, o: &SymTensor2) -> Tensor2 {
        self.to_tensor() * o.to_tensor()
    }

    pub fn eig(&self) -> Result<SpectralDecomp> {
        sym_eig(self)
    }
}

impl Add for SymTensor2 {
    type Output = SymTensor2;

    fn add(self, o: SymTensor2) -> SymTensor2 {
        SymTensor2::new(
            self.xx + o.xx,
            self.yy + o.yy,
            self.zz + o.zz,
            self.xy + o.xy,
            self.yz + o.yz,
            self.xz + o.xz,
        )
    }
}

impl Sub for SymTensor2 {
    type Output = SymTensor2;

    fn sub(self, o: SymTensor2) -> SymTensor2 {
        SymTensor2::new(
            self.xx - o.xx,
            self.yy - o.yy,
            self.zz - o.zz,
            self.xy - o.xy,
            self.yz - o.yz,
            self.xz - o.xz,
        )
    }
}

impl SpectralDecomp {
    /// `Σᵢ f(λᵢ) nᵢ⊗nᵢ`
    pub fn reassemble_with(&self, f: impl Fn(f64) -> f64) -> SymTensor2 {
        let q = &self.vectors;
        let w = [f(self.values[0]), f(self.values[1]), f(self.values[2])];
        let entry = |i: usize, j: usize| (0..3).map(|k| w[k] * q[i][k] * q[j][k]).sum::<f64>();
        SymTensor2 {
            xx: entry(0, 0),
            yy: entry(1, 1),
            zz: entry(2, 2),
            xy: entry(0, 1),
            yz: entry(1, 2),
            xz: entry(0, 2),
        }
    }

    pub fn reassemble(&self) -> SymTensor2 {
        self.reassemble_with(|l| l)
    }

    pub fn vector(&self, k: usize) -> [f64; 3] {
        [self.vectors[0][k], self.vectors[1][k], self.vectors[2][k]]
    }
}

/// Eigen-decomposition of a symmetric 3×3 tensor by cyclic Jacobi sweeps.
pub fn sym_eig(s: &SymTensor2) -> Result<SpectralDecomp> {
    if !s.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite symmetric tensor {s:?}")));
    }
    let mut a = s.to_matrix();
    let mut v = Tensor2::identity().0;
    let scale = s.norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off == 0.0 || off.sqrt() <= 1e-18 * scale {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = if theta.is_finite() {
                theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
            } else {
                0.0
            };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let sn = t * c;
            for row in a.iter_mut() {
                let (akp, akq) = (row[p], row[q]);
                row[p] = c * akp - sn * akq;
                row[q] = sn * akp + c * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - sn * aqk;
                a[q][k] = sn * apk + c * aqk;
            }
            a[p][q] = 0.0;
            a[q][p] = 0.0;
            for row in v.iter_mut() {
                let (vkp, vkq) = (row[p], row[q]);
                row[p] = c * vkp - sn * vkq;
                row[q] = sn * vkp + c * vkq;
            }
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let mut values = [0.0; 3];
    let mut vectors = [[0.0; 3]; 3];
    for (k, &src) in order.iter().enumerate() {
        values[k] = a[src][src];
        for i in 0..3 {
            vectors[i][k] = v[i][src];
        }
    }
    Ok(SpectralDecomp { values, vectors })
}

/// Logarithm of a symmetric positive-definite tensor.
pub fn log_spd(s: &SymTensor2) -> Result<SymTensor2> {
    let d = sym_eig(s)?;
    if let Some((index, &value)) = d.values.iter().enumerate().find(|(_, &l)| l <= 0.0) {
        return Err(Error::NonPositiveEigenvalue { index, value });
    }
    Ok(d.reassemble_with(f64::ln))
}

/// Exponential of a symmetric tensor; the result is SPD.
pub fn exp_sym(s: &SymTensor2) -> Result<SymTensor2> {
    Ok(sym_eig(s)?.reassemble_with(f64::exp))
}

/// Square root of a symmetric positive-definite tensor.
pub fn sqrt_spd(s: &SymTensor2) -> Result<SymTensor2> {
    let d = sym_eig(s)?;
    if let Some((index, &value)) = d.values.iter().enumerate().find(|(_, &l)| l <= 0.0) {
        return Err(Error::NonPositiveEigenvalue { index, value });
    }
    Ok(d.reassemble_with(f64::sqrt))
}

pub fn dev(s: &SymTensor2) -> SymTensor2 {
    s.dev()
}

pub fn det(t: &Tensor2) -> f64 {
    t.det()
}

pub fn trace(s: &SymTensor2) -> f64 {
    s.trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn rel_err(a: &SymTensor2, b: &SymTensor2) -> f64 {
        (*a - *b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn identity_eigenvalues() {
        let d = sym_eig(&SymTensor2::identity()).unwrap();
        assert_eq!(d.values, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_is_sorted_and_axis_aligned() {
        let d = sym_eig(&SymTensor2::diag(1.0, 3.0, 2.0)).unwrap();
        assert_eq!(d.values, [3.0, 2.0, 1.0]);
        assert_eq!(d.vector(0), [0.0, 1.0, 0.0]);
        assert_eq!(d.vector(1), [0.0, 0.0, 1.0]);
        assert_eq!(d.vector(2), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let s = SymTensor2::diag(f64::NAN, 1.0, 1.0);
        assert!(matches!(sym_eig(&s), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn log_of_identity_and_diagonal() {
        assert_eq!(log_spd(&SymTensor2::identity()).unwrap(), SymTensor2::zero());
        let l = log_spd(&SymTensor2::diag(E * E, 1.0, 1.0)).unwrap();
        assert!((l.xx - 2.0).abs() < 1e-15);
        assert_eq!((l.yy, l.zz, l.xy), (0.0, 0.0, 0.0));
    }

    #[test]
    fn log_reports_offending_eigenvalue() {
        let err = log_spd(&SymTensor2::diag(2.0, -0.5, 1.0)).unwrap_err();
        match err {
            Error::NonPositiveEigenvalue { index, value } => {
                assert_eq!(index, 2);
                assert_eq!(value, -0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exp_of_zero_and_diagonal() {
        assert_eq!(exp_sym(&SymTensor2::zero()).unwrap(), SymTensor2::identity());
        let e = exp_sym(&SymTensor2::diag(1.0, 0.0, 0.0)).unwrap();
        assert!((e.xx - E).abs() < 1e-15);
        assert_eq!((e.yy, e.zz), (1.0, 1.0));
    }

    #[test]
    fn deviator_det_trace() {
        assert_eq!(dev(&SymTensor2::identity()), SymTensor2::zero());
        assert_eq!(det(&Tensor2::identity()), 1.0);
        assert_eq!(dev(&SymTensor2::diag(3.0, 0.0, 0.0)), SymTensor2::diag(2.0, -1.0, -1.0));
        assert_eq!(trace(&SymTensor2::diag(3.0, 2.0, 1.0)), 6.0);
    }

    #[test]
    fn inverse_and_products() {
        let f = Tensor2([[1.1, 0.2, 0.0], [-0.05, 0.93, 0.0], [0.0, 0.0, 1.0]]);
        let i = f * f.inverse().unwrap();
        assert!((i - Tensor2::identity()).norm() < 1e-15);
        let c = f.right_cauchy_green();
        assert!(rel_err(&c, &(f.transpose() * f).sym()) < 1e-15);
        assert!(Tensor2::zero().inverse().is_err());
    }

    #[test]
    fn plane_strain_structure_is_preserved() {
        let f = Tensor2([[1.05, 0.02, 0.0], [0.01, 0.97, 0.0], [0.0, 0.0, 1.0]]);
        let c = f.right_cauchy_green();
        let l = log_spd(&c).unwrap();
        assert_eq!((l.xz, l.yz), (0.0, 0.0));
        let g = f * f.inverse().unwrap().transpose();
        assert_eq!((g.0[0][2], g.0[2][0], g.0[1][2], g.0[2][1]), (0.0, 0.0, 0.0, 0.0));
    }
}
