use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ConvError, Result};

/// Tolerance for basis orthonormality and for `p` being normal to the manifold.
pub const BASIS_TOL: f64 = 1e-10;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| alpha * a + b).collect()
}

/// Orthonormalize `candidates` against `basis` and each other, keeping up to
/// `want` vectors. Modified Gram-Schmidt, applied twice for stability.
fn extend_basis(basis: &[Vec<f64>], candidates: impl IntoIterator<Item = Vec<f64>>, want: usize) -> Vec<Vec<f64>> {
    let mut all: Vec<Vec<f64>> = basis.to_vec();
    let mut added = Vec::new();
    for mut v in candidates {
        if added.len() == want {
            break;
        }
        for _ in 0..2 {
            for b in &all {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            all.push(v.clone());
            added.push(v);
        }
    }
    added
}

fn unit_vectors(dim: usize) -> impl Iterator<Item = Vec<f64>> {
    (0..dim).map(move |i| {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        e
    })
}

fn gaussian<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// A manifold with closed-form tangent and normal spaces.
#[derive(Clone, Debug, PartialEq)]
pub enum SyntheticManifold {
    /// Unit circle in the plane.
    Circle,
    /// Sphere of radius `radius` in `R^dim`.
    Hypersphere { radius: f64, dim: usize },
    /// Span of orthonormal `basis` vectors (through the origin) in `R^dim`.
    LinearSubspace { basis: Vec<Vec<f64>>, dim: usize },
}

impl SyntheticManifold {
    pub fn hypersphere(radius: f64, dim: usize) -> Result<Self> {
        if dim < 2 || !(radius.is_finite() && radius > 0.0) {
            return Err(ConvError::InvalidInput("hypersphere needs dim >= 2 and radius > 0".into()));
        }
        Ok(SyntheticManifold::Hypersphere { radius, dim })
    }

    /// A random `k`-dimensional subspace of `R^dim`.
    pub fn random_subspace<R: Rng>(rng: &mut R, k: usize, dim: usize) -> Result<Self> {
        if k == 0 || k >= dim {
            return Err(ConvError::InvalidInput("subspace needs 0 < k < dim".into()));
        }
        let candidates: Vec<Vec<f64>> = (0..4 * dim).map(|_| gaussian(rng, dim)).collect();
        let basis = extend_basis(&[], candidates, k);
        Ok(SyntheticManifold::LinearSubspace { basis, dim })
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            SyntheticManifold::Circle => 2,
            SyntheticManifold::Hypersphere { dim, .. } | SyntheticManifold::LinearSubspace { dim, .. } => *dim,
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            SyntheticManifold::Circle => 1,
            SyntheticManifold::Hypersphere { dim, .. } => dim - 1,
            SyntheticManifold::LinearSubspace { basis, .. } => basis.len(),
        }
    }

    /// Orthonormal basis of the tangent space at on-manifold `x`.
    pub fn tangent_basis(&self, x: &[f64]) -> Vec<Vec<f64>> {
        match self {
            SyntheticManifold::Circle => {
                let r = x[0].hypot(x[1]);
                vec![vec![-x[1] / r, x[0] / r]]
            }
            SyntheticManifold::Hypersphere { dim, .. } => {
                let radial = self.normal_basis(x);
                extend_basis(&radial, unit_vectors(*dim), dim - 1)
            }
            SyntheticManifold::LinearSubspace { basis, .. } => basis.clone(),
        }
    }

    /// Orthonormal basis of the normal space at on-manifold `x`.
    pub fn normal_basis(&self, x: &[f64]) -> Vec<Vec<f64>> {
        match self {
            SyntheticManifold::Circle | SyntheticManifold::Hypersphere { .. } => {
                let n = norm(x);
                vec![x.iter().map(|v| v / n).collect()]
            }
            SyntheticManifold::LinearSubspace { basis, dim } => {
                extend_basis(basis, unit_vectors(*dim), dim - basis.len())
            }
        }
    }

    /// Largest deviation of `[tangent | normal]` at `x` from an orthonormal basis of the ambient space.
    pub fn basis_error(&self, x: &[f64]) -> f64 {
        let mut all = self.tangent_basis(x);
        all.extend(self.normal_basis(x));
        let mut worst: f64 = if all.len() == self.ambient_dim() { 0.0 } else { 1.0 };
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(a, b) - target).abs());
            }
        }
        worst
    }

    /// A random on-manifold point.
    pub fn sample_point<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            SyntheticManifold::Circle => {
                let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                circle_point(theta)
            }
            SyntheticManifold::Hypersphere { radius, dim } => loop {
                let g = gaussian(rng, *dim);
                let n = norm(&g);
                if n > 1e-12 {
                    break g.iter().map(|v| radius * v / n).collect();
                }
            },
            SyntheticManifold::LinearSubspace { basis, dim } => {
                let mut x = vec![0.0; *dim];
                for b in basis {
                    let a: f64 = rng.sample(StandardNormal);
                    x = axpy(a, b, &x);
                }
                x
            }
        }
    }

    /// A random unit vector in the normal space at `x`.
    pub fn sample_normal_direction<R: Rng>(&self, rng: &mut R, x: &[f64]) -> Vec<f64> {
        let basis = self.normal_basis(x);
        loop {
            let coeffs = gaussian(rng, basis.len());
            let n = norm(&coeffs);
            if n < 1e-12 {
                continue;
            }
            let mut v = vec![0.0; x.len()];
            for (c, b) in coeffs.iter().zip(&basis) {
                v = axpy(c / n, b, &v);
            }
            return v;
        }
    }
}

pub fn circle_point(theta: f64) -> Vec<f64> {
    let (s, c) = theta.sin_cos();
    vec![c, s]
}

/// An on-manifold point, an off-manifold point displaced along the normal
/// space, and the displacement `p = x_g - x_M`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabPoint {
    pub x_m: Vec<f64>,
    pub x_g: Vec<f64>,
    pub epsilon: f64,
    pub p: Vec<f64>,
}

impl LabPoint {
    /// `x_g = x_M + epsilon * direction`; `direction` must be a unit normal vector.
    pub fn new(manifold: &SyntheticManifold, x_m: Vec<f64>, direction: &[f64], epsilon: f64) -> Result<Self> {
        if direction.len() != x_m.len() || (norm(direction) - 1.0).abs() > BASIS_TOL {
            return Err(ConvError::InvalidInput("direction must be a unit vector of the ambient dimension".into()));
        }
        for t in manifold.tangent_basis(&x_m) {
            if dot(&t, direction).abs() > BASIS_TOL {
                return Err(ConvError::InvalidInput("direction is not normal to the manifold".into()));
            }
        }
        let p: Vec<f64> = direction.iter().map(|d| epsilon * d).collect();
        let x_g = axpy(1.0, &p, &x_m);
        Ok(LabPoint { x_m, x_g, epsilon, p })
    }

    /// Largest `|t . (x_M - x_g)|` over the tangent basis at `x_M`.
    pub fn tangent_leak(&self, manifold: &SyntheticManifold) -> f64 {
        let diff = axpy(-1.0, &self.x_g, &self.x_m);
        manifold
            .tangent_basis(&self.x_m)
            .iter()
            .map(|t| dot(t, &diff).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;

    #[test]
    fn bases_are_orthonormal() {
        let mut r = rng(1);
        let manifolds = [
            SyntheticManifold::Circle,
            SyntheticManifold::hypersphere(2.5, 6).unwrap(),
            SyntheticManifold::random_subspace(&mut r, 2, 5).unwrap(),
        ];
        for m in &manifolds {
            for _ in 0..50 {
                let x = m.sample_point(&mut r);
                assert!(m.basis_error(&x) < BASIS_TOL, "{m:?}");
                assert_eq!(m.tangent_basis(&x).len(), m.intrinsic_dim());
            }
        }
    }

    #[test]
    fn displacement_is_normal() {
        let mut r = rng(2);
        let m = SyntheticManifold::hypersphere(1.0, 4).unwrap();
        for _ in 0..50 {
            let x = m.sample_point(&mut r);
            let d = m.sample_normal_direction(&mut r, &x);
            let pt = LabPoint::new(&m, x, &d, 0.3).unwrap();
            assert!(pt.tangent_leak(&m) < BASIS_TOL);
        }
        let x = circle_point(0.0);
        assert!(LabPoint::new(&SyntheticManifold::Circle, x, &[0.0, 1.0], 0.1).is_err());
    }
}
