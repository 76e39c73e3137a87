use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::manifold::{axpy, circle_point, dot, norm, LabPoint, SyntheticManifold};
use crate::error::{ConvError, Result};
use crate::seed::rng;

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type AngleProfile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `f1`, the tangent-step map `h`, and `f2 = f1 o h`.
#[derive(Clone)]
pub struct LabFunctionPair {
    pub f1: ScalarField,
    pub h: VectorMap,
    /// Closed-form gradient of `f1`, for cross-checking finite differences.
    pub grad_f1: Option<VectorMap>,
}

impl fmt::Debug for LabFunctionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LabFunctionPair").finish_non_exhaustive()
    }
}

impl LabFunctionPair {
    pub fn f1(&self, x: &[f64]) -> f64 {
        (self.f1)(x)
    }

    pub fn f2(&self, x: &[f64]) -> f64 {
        (self.f1)(&(self.h)(x))
    }

    /// `|f1(x) - f2(x)|`, evaluated directly.
    pub fn delta(&self, x: &[f64]) -> f64 {
        (self.f1(x) - self.f2(x)).abs()
    }
}

/// `(R(dtheta) x)` in the plane spanned by orthonormal `u`, `v`.
fn plane_rotation(u: Vec<f64>, v: Vec<f64>, dtheta: f64) -> VectorMap {
    let (s, c) = dtheta.sin_cos();
    Arc::new(move |x: &[f64]| {
        let a = dot(x, &u);
        let b = dot(x, &v);
        let (a2, b2) = (c * a - s * b, s * a + c * b);
        x.iter()
            .zip(u.iter().zip(&v))
            .map(|(&xi, (&ui, &vi))| xi + (a2 - a) * ui + (b2 - b) * vi)
            .collect()
    })
}

fn rotation_2d(dtheta: f64) -> VectorMap {
    let (s, c) = dtheta.sin_cos();
    Arc::new(move |x: &[f64]| vec![c * x[0] - s * x[1], s * x[0] + c * x[1]])
}

/// Unit circle, `f1(x) = g(angle(x)) * (|x| - 1)`, `h` = rotation by `dtheta`,
/// and the point at angle `theta` displaced outward by `epsilon`.
pub fn canonical_circle_fixture(
    g: AngleProfile,
    theta: f64,
    epsilon: f64,
    dtheta: f64,
) -> Result<(SyntheticManifold, LabPoint, LabFunctionPair)> {
    let manifold = SyntheticManifold::Circle;
    let x_m = circle_point(theta);
    let outward = x_m.clone();
    let point = LabPoint::new(&manifold, x_m, &outward, epsilon)?;
    Ok((manifold, point, circle_pair(g, dtheta, Profile::Linear)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Profile {
    /// `|x| - 1`
    Linear,
    /// `(|x|^2 - 1) / 2`
    Quadratic,
}

fn circle_pair(g: AngleProfile, dtheta: f64, profile: Profile) -> LabFunctionPair {
    let g1 = g.clone();
    let f1: ScalarField = Arc::new(move |x: &[f64]| {
        let angle = x[1].atan2(x[0]);
        let r = x[0].hypot(x[1]);
        let radial = match profile {
            Profile::Linear => r - 1.0,
            Profile::Quadratic => 0.5 * (r * r - 1.0),
        };
        g1(angle) * radial
    });
    LabFunctionPair {
        f1,
        h: rotation_2d(dtheta),
        grad_f1: None,
    }
}

/// Shipped fixtures, by CLI name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fixture {
    /// Unit circle, `sin(angle) * (|x| - 1)`, rotation.
    Circle,
    /// Same with a quadratic radial profile, so first-order Taylor is not exact.
    CircleQuadratic,
    /// Unit circle, `sin(angle) * (|x| - 1)`, `h` = rotate then project onto the circle.
    CircleProjected,
    /// Sphere of radius 2 in `R^5`, `(w . x) * (|x| - R)`, rotation in a random plane.
    Hypersphere,
    /// Random 2-plane in `R^5`, `|P_N x|^2`, `h(x) = P_T x + dtheta * b_1`.
    SubspaceQuadratic,
    /// Random 2-plane in `R^5`, `c . P_N x`, same `h`.
    SubspaceLinear,
    /// Unit circle with `f1(x) = x_1`: gradient has a tangential component.
    Counterexample,
}

impl Fixture {
    pub const ALL: [Fixture; 7] = [
        Fixture::Circle,
        Fixture::CircleQuadratic,
        Fixture::CircleProjected,
        Fixture::Hypersphere,
        Fixture::SubspaceQuadratic,
        Fixture::SubspaceLinear,
        Fixture::Counterexample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Circle => "circle",
            Fixture::CircleQuadratic => "circle-quadratic",
            Fixture::CircleProjected => "circle-projected",
            Fixture::Hypersphere => "hypersphere",
            Fixture::SubspaceQuadratic => "subspace-quadratic",
            Fixture::SubspaceLinear => "subspace-linear",
            Fixture::Counterexample => "counterexample",
        }
    }

    /// Build the manifold and function pair. `seed` fixes random planes and
    /// weights; `dtheta` is the tangent step of `h`.
    pub fn build(self, seed: u64, dtheta: f64) -> Result<(SyntheticManifold, LabFunctionPair)> {
        let sin: AngleProfile = Arc::new(f64::sin);
        match self {
            Fixture::Circle => Ok((SyntheticManifold::Circle, circle_pair(sin, dtheta, Profile::Linear))),
            Fixture::CircleQuadratic => Ok((SyntheticManifold::Circle, circle_pair(sin, dtheta, Profile::Quadratic))),
            Fixture::CircleProjected => {
                let mut pair = circle_pair(sin, dtheta, Profile::Linear);
                let rot = rotation_2d(dtheta);
                pair.h = Arc::new(move |x: &[f64]| {
                    let y = rot(x);
                    let r = y[0].hypot(y[1]);
                    vec![y[0] / r, y[1] / r]
                });
                Ok((SyntheticManifold::Circle, pair))
            }
            Fixture::Hypersphere => {
                let radius = 2.0;
                let dim = 5;
                let mut r = rng(seed);
                let manifold = SyntheticManifold::hypersphere(radius, dim)?;
                let SyntheticManifold::LinearSubspace { basis, .. } = SyntheticManifold::random_subspace(&mut r, 2, dim)? else {
                    unreachable!()
                };
                let w = manifold.sample_point(&mut r);
                let w1 = w.clone();
                let f1: ScalarField = Arc::new(move |x: &[f64]| dot(&w1, x) * (norm(x) - radius));
                let grad: VectorMap = Arc::new(move |x: &[f64]| {
                    let n = norm(x);
                    let wx = dot(&w, x);
                    w.iter().zip(x).map(|(wi, xi)| wi * (n - radius) + wx * xi / n).collect()
                });
                let pair = LabFunctionPair {
                    f1,
                    h: plane_rotation(basis[0].clone(), basis[1].clone(), dtheta),
                    grad_f1: Some(grad),
                };
                Ok((manifold, pair))
            }
            Fixture::SubspaceQuadratic | Fixture::SubspaceLinear => {
                let mut r = rng(seed);
                let manifold = SyntheticManifold::random_subspace(&mut r, 2, 5)?;
                let SyntheticManifold::LinearSubspace { basis, dim } = manifold.clone() else {
                    unreachable!()
                };
                let project_n = {
                    let basis = basis.clone();
                    move |x: &[f64]| -> Vec<f64> {
                        let mut out = x.to_vec();
                        for b in &basis {
                            out = axpy(-dot(x, b), b, &out);
                        }
                        out
                    }
                };
                let step: Vec<f64> = basis[0].iter().map(|v| dtheta * v).collect();
                let tb = basis.clone();
                let h: VectorMap = Arc::new(move |x: &[f64]| {
                    let mut out = step.clone();
                    for b in &tb {
                        out = axpy(dot(x, b), b, &out);
                    }
                    out
                });
                let pair = if self == Fixture::SubspaceQuadratic {
                    let pn = project_n.clone();
                    LabFunctionPair {
                        f1: Arc::new(move |x: &[f64]| {
                            let n = pn(x);
                            dot(&n, &n)
                        }),
                        h,
                        grad_f1: Some(Arc::new(move |x: &[f64]| project_n(x).iter().map(|v| 2.0 * v).collect())),
                    }
                } else {
                    let c: Vec<f64> = (0..dim).map(|i| 1.0 + i as f64 * 0.5).collect();
                    let pc = project_n(&c);
                    let pc2 = pc.clone();
                    LabFunctionPair {
                        f1: Arc::new(move |x: &[f64]| dot(&pc, x)),
                        h,
                        grad_f1: Some(Arc::new(move |_: &[f64]| pc2.clone())),
                    }
                };
                Ok((manifold, pair))
            }
            Fixture::Counterexample => {
                let pair = LabFunctionPair {
                    f1: Arc::new(|x: &[f64]| x[0]),
                    h: rotation_2d(dtheta),
                    grad_f1: Some(Arc::new(|_: &[f64]| vec![1.0, 0.0])),
                };
                Ok((SyntheticManifold::Circle, pair))
            }
        }
    }
}

impl fmt::Display for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fixture {
    type Err = ConvError;

    fn from_str(s: &str) -> Result<Self> {
        Fixture::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Fixture::ALL.iter().map(|f| f.name()).collect();
                ConvError::InvalidInput(format!("unknown fixture `{s}` (expected one of {})", names.join(", ")))
            })
    }
}
