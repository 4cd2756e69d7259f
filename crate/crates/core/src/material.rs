//! Isotropic material constants and the St Venant–Kirchhoff energy density.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lamé coefficients together with the equivalent Young modulus and Poisson ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub lambda: f64,
    pub mu: f64,
    pub young: f64,
    pub poisson: f64,
}

impl MaterialParams {
    pub fn from_lame(lambda: f64, mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::Material(format!("mu = {mu} must be positive")));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Material(format!("lambda = {lambda} must be nonnegative")));
        }
        let young = mu * (3.0 * lambda + 2.0 * mu) / (lambda + mu);
        let poisson = lambda / (2.0 * (lambda + mu));
        Ok(Self { lambda, mu, young, poisson })
    }

    /// Bending stiffness factor E/(3(1−ν²)) of the plate energy.
    pub fn plate_bending_factor(&self) -> f64 {
        self.young / (3.0 * (1.0 - self.poisson * self.poisson))
    }

    /// Membrane stiffness factor E/(1−ν²) of the plate energy.
    pub fn plate_membrane_factor(&self) -> f64 {
        self.young / (1.0 - self.poisson * self.poisson)
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        lame_from_engineering(1.0, 0.3).expect("default material is valid")
    }
}

pub fn lame_from_engineering(young: f64, poisson: f64) -> Result<MaterialParams> {
    if !(young.is_finite() && young > 0.0) {
        return Err(Error::Material(format!("Young modulus {young} must be positive")));
    }
    if !(poisson > -1.0 && poisson < 0.5) {
        return Err(Error::Material(format!("Poisson ratio {poisson} must lie in ]-1, 1/2[")));
    }
    let mu = young / (2.0 * (1.0 + poisson));
    let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    if lambda < 0.0 {
        return Err(Error::Material(format!(
            "Poisson ratio {poisson} gives a negative Lamé coefficient lambda = {lambda}"
        )));
    }
    Ok(MaterialParams { lambda, mu, young, poisson })
}

/// Symmetric 3×3 matrix stored as (e11, e22, e33, e23, e13, e12).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StrainMatrix(pub [f64; 6]);

impl StrainMatrix {
    pub fn zero() -> Self {
        Self([0.0; 6])
    }

    pub fn identity() -> Self {
        Self([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    }

    /// Symmetric part of a general matrix.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self([
            m[(0, 0)],
            m[(1, 1)],
            m[(2, 2)],
            0.5 * (m[(1, 2)] + m[(2, 1)]),
            0.5 * (m[(0, 2)] + m[(2, 0)]),
            0.5 * (m[(0, 1)] + m[(1, 0)]),
        ])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        const IDX: [[usize; 3]; 3] = [[0, 5, 4], [5, 1, 3], [4, 3, 2]];
        self.0[IDX[i][j]]
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.get(i, j))
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    /// tr(E²), the squared Frobenius norm.
    pub fn norm_squared(&self) -> f64 {
        let e = &self.0;
        e[0] * e[0] + e[1] * e[1] + e[2] * e[2] + 2.0 * (e[3] * e[3] + e[4] * e[4] + e[5] * e[5])
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.map(|v| s * v))
    }
}

/// Q(E) = λ/8 (tr E)² + μ/4 tr(E²).
pub fn quadratic_form_q(e: &StrainMatrix, m: &MaterialParams) -> f64 {
    let t = e.trace();
    m.lambda / 8.0 * t * t + m.mu / 4.0 * e.norm_squared()
}

/// Q(2E) = λ/2 (tr E)² + μ tr(E²): the energy density in terms of a
/// linearized (half-Green) strain.
pub fn limit_density(e: &StrainMatrix, m: &MaterialParams) -> f64 {
    let t = e.trace();
    0.5 * m.lambda * t * t + m.mu * e.norm_squared()
}

/// Value of the St Venant–Kirchhoff density: finite, or +∞ tagged with det F.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density {
    Finite(f64),
    Nonphysical { det: f64 },
}

impl Density {
    pub fn finite(self) -> Option<f64> {
        match self {
            Density::Finite(v) => Some(v),
            Density::Nonphysical { .. } => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Density::Finite(_))
    }
}

/// Ŵ(F) = Q(FᵀF − I) for det F > 0, +∞ otherwise.
pub fn svk_density(f: &Matrix3<f64>, m: &MaterialParams) -> Density {
    svk_density_from_offset(&(f - Matrix3::identity()), m)
}

/// Ŵ(I + G), with FᵀF − I formed as G + Gᵀ + GᵀG to avoid cancellation when G is small.
pub fn svk_density_from_offset(g: &Matrix3<f64>, m: &MaterialParams) -> Density {
    let f = g + Matrix3::identity();
    let det = f.determinant();
    if !(det > 0.0) {
        return Density::Nonphysical { det };
    }
    let c = g + g.transpose() + g.transpose() * g;
    Density::Finite(quadratic_form_q(&StrainMatrix::from_matrix(&c), m))
}

/// Frobenius distance from F to SO(3).
pub fn dist_so3(f: &Matrix3<f64>) -> f64 {
    let svd = f.svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    if f.determinant() < 0.0 {
        s[2] = -s[2];
    }
    s.iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>().sqrt()
}
