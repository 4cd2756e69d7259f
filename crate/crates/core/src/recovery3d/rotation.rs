//! Rotation fields solving dR/dx₃ = A_F R, R(0) = I.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::geometry::gauss_legendre;

/// The skew matrix A_v with A_v w = v ∧ w.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// exp(t A_ω).
pub fn exp_rotation(omega: &Vector3<f64>, t: f64) -> Matrix3<f64> {
    Rotation3::new(omega * t).into_inner()
}

fn series_c2_s3(y: f64) -> (f64, f64) {
    if y.abs() < 1e-2 {
        let y2 = y * y;
        (0.5 - y2 / 24.0 + y2 * y2 / 720.0, 1.0 / 6.0 - y2 / 120.0 + y2 * y2 / 5040.0)
    } else {
        ((1.0 - y.cos()) / (y * y), (y - y.sin()) / (y * y * y))
    }
}

/// ∫₀ˣ (exp(t A_ω) − I)𝐞₃ dt in closed form.
pub fn exp_rotation_integral(omega: &Vector3<f64>, x: f64) -> Vector3<f64> {
    let w = omega.norm();
    let (c2, s3) = series_c2_s3(w * x);
    let e3 = Vector3::z();
    let x2 = x * x;
    let x3 = x2 * x;
    -e3 * (x3 * w * w * s3) + omega.cross(&e3) * (x2 * c2) + omega * (x3 * s3 * omega[2])
}

/// Rotation, its x₃-derivative and ∫₀^{x₃}(R − I)𝐞₃ at one point.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub r: Matrix3<f64>,
    pub dr: Matrix3<f64>,
    pub integral: Vector3<f64>,
}

type Generator<'a> = Box<dyn Fn(f64) -> Vector3<f64> + Send + Sync + 'a>;

/// Solution of dR/dx₃ = A_{F(x₃)} R on [0, L] by fourth-order Magnus steps
/// on unit quaternions; continued by exp(x₃ A_{F(0)}) for x₃ < 0.
pub struct RotationField<'a> {
    generator: Generator<'a>,
    nodes: Vec<f64>,
    quats: Vec<UnitQuaternion<f64>>,
    integrals: Vec<Vector3<f64>>,
    origin_generator: Vector3<f64>,
}

const MAGNUS_C: f64 = 0.288_675_134_594_812_9; // √3/6

impl<'a> RotationField<'a> {
    /// Integrates over the pieces delimited by `breaks` (starting at 0), each
    /// split into `substeps` equal steps.
    pub fn integrate(generator: impl Fn(f64) -> Vector3<f64> + Send + Sync + 'a, breaks: &[f64], substeps: usize) -> Self {
        Self::integrate_adaptive(generator, breaks, substeps, f64::INFINITY)
    }

    /// As [`integrate`](Self::integrate), with extra steps so that no step
    /// rotates by more than about `max_angle`.
    pub fn integrate_adaptive(
        generator: impl Fn(f64) -> Vector3<f64> + Send + Sync + 'a,
        breaks: &[f64],
        substeps: usize,
        max_angle: f64,
    ) -> Self {
        let mut nodes = vec![0.0];
        for w in breaks.windows(2) {
            let len = w[1] - w[0];
            let peak = (0..=8).map(|k| generator(w[0] + len * k as f64 / 8.0).norm()).fold(0.0, f64::max);
            let needed = (peak * len / max_angle).ceil();
            let substeps = substeps.max(1).max(if needed.is_finite() { needed as usize } else { 1 });
            let h = len / substeps as f64;
            for s in 1..=substeps {
                nodes.push(if s == substeps { w[1] } else { w[0] + h * s as f64 });
            }
        }
        let origin_generator = generator(0.0);
        let mut field = Self {
            generator: Box::new(generator),
            nodes: Vec::new(),
            quats: vec![UnitQuaternion::identity()],
            integrals: vec![Vector3::zeros()],
            origin_generator,
        };
        for k in 1..nodes.len() {
            let (q0, i0) = (field.quats[k - 1], field.integrals[k - 1]);
            let (q, i) = field.advance(q0, nodes[k - 1], nodes[k]);
            field.quats.push(q);
            field.integrals.push(i0 + i);
        }
        field.nodes = nodes;
        field
    }

    fn magnus(&self, q0: UnitQuaternion<f64>, t0: f64, t1: f64) -> UnitQuaternion<f64> {
        let h = t1 - t0;
        if h == 0.0 {
            return q0;
        }
        let f1 = (self.generator)(t0 + (0.5 - MAGNUS_C) * h);
        let f2 = (self.generator)(t0 + (0.5 + MAGNUS_C) * h);
        let omega = (f1 + f2) * (0.5 * h) + f2.cross(&f1) * (MAGNUS_C * 0.5 * h * h);
        let q = UnitQuaternion::from_scaled_axis(omega) * q0;
        UnitQuaternion::new_normalize(q.into_inner())
    }

    fn advance(&self, q0: UnitQuaternion<f64>, t0: f64, t1: f64) -> (UnitQuaternion<f64>, Vector3<f64>) {
        let g = gauss_legendre(4);
        let mut integral = Vector3::zeros();
        for (t, w) in g.mapped(t0, t1) {
            let r = self.magnus(q0, t0, t).to_rotation_matrix().into_inner();
            integral += (r.column(2) - Vector3::z()) * w;
        }
        (self.magnus(q0, t0, t1), integral)
    }

    pub fn generator(&self, x3: f64) -> Vector3<f64> {
        if x3 < 0.0 {
            self.origin_generator
        } else {
            (self.generator)(x3)
        }
    }

    pub fn frame(&self, x3: f64) -> Frame {
        if x3 <= 0.0 {
            let r = exp_rotation(&self.origin_generator, x3);
            return Frame {
                r,
                dr: skew(&self.origin_generator) * r,
                integral: exp_rotation_integral(&self.origin_generator, x3),
            };
        }
        let k = self.nodes.partition_point(|t| *t <= x3).saturating_sub(1).min(self.nodes.len() - 1);
        let (q, i) = if self.nodes[k] == x3 {
            (self.quats[k], Vector3::zeros())
        } else {
            self.advance(self.quats[k], self.nodes[k], x3)
        };
        let r = q.to_rotation_matrix().into_inner();
        Frame { r, dr: skew(&(self.generator)(x3)) * r, integral: self.integrals[k] + i }
    }

    pub fn rotation(&self, x3: f64) -> Matrix3<f64> {
        self.frame(x3).r
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Largest ‖RᵀR − I‖ and |det R − 1| over the stored steps.
    pub fn orthogonality_defect(&self) -> f64 {
        self.quats
            .iter()
            .map(|q| {
                let r = q.to_rotation_matrix().into_inner();
                ((r.transpose() * r - Matrix3::identity()).norm()).max((r.determinant() - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }
}
