//! Plateau smoothing of limit fields near the junction.

use crate::error::{Error, Result};
use crate::geometry::{PlateMesh, RodMesh};
use crate::limit_model::{LimitFields, LimitQuadrature, PlateJet, RodJet};

/// Quintic smoothstep on [0, 1] with its first three derivatives, constant outside.
pub fn smoothstep(t: f64) -> [f64; 4] {
    if t <= 0.0 {
        return [0.0; 4];
    }
    if t >= 1.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let (t2, t3) = (t * t, t * t * t);
    [
        t3 * (10.0 - 15.0 * t + 6.0 * t2),
        30.0 * t2 * (1.0 - t) * (1.0 - t),
        60.0 * t * (1.0 - 3.0 * t + 2.0 * t2),
        60.0 * (1.0 - 6.0 * t + 6.0 * t2),
    ]
}

/// Radial blend χ(x) = h((n²|x|² − 1)/3): zero on D(O, 1/n), one outside D(O, 2/n).
#[derive(Debug, Clone, Copy, Default)]
pub struct Blend2 {
    pub v: f64,
    pub d: [f64; 2],
    pub dd: [[f64; 2]; 2],
    pub ddd: [[[f64; 2]; 2]; 2],
}

pub fn plate_blend(n: f64, x: [f64; 2]) -> Blend2 {
    let rho = n * n * (x[0] * x[0] + x[1] * x[1]);
    let h = smoothstep((rho - 1.0) / 3.0);
    let s = [2.0 * n * n * x[0] / 3.0, 2.0 * n * n * x[1] / 3.0];
    let sd = 2.0 * n * n / 3.0;
    let kd = |a: usize, b: usize| if a == b { sd } else { 0.0 };
    let mut b = Blend2 { v: h[0], ..Default::default() };
    for i in 0..2 {
        b.d[i] = h[1] * s[i];
        for j in 0..2 {
            b.dd[i][j] = h[2] * s[i] * s[j] + h[1] * kd(i, j);
            for k in 0..2 {
                b.ddd[i][j][k] = h[3] * s[i] * s[j] * s[k] + h[2] * (kd(i, j) * s[k] + kd(i, k) * s[j] + kd(j, k) * s[i]);
            }
        }
    }
    b
}

/// Axial blend φ(x₃) = h(n x₃ − 1) with derivatives up to third order.
pub fn rod_blend(n: f64, x3: f64) -> [f64; 4] {
    let h = smoothstep(n * x3 - 1.0);
    [h[0], n * h[1], n * n * h[2], n * n * n * h[3]]
}

/// Limit fields made flat near the junction: ∇𝒰_α = 0 and ∇²𝒰₃ = 0 on
/// D(O, 1/n), 𝒲_α = 𝒬₃ = 0 on [0, 1/n].
pub struct SmoothedLimitState<'a> {
    base: &'a dyn LimitFields,
    n: u32,
    u0: [f64; 2],
    w0: f64,
    dw0: [f64; 2],
}

/// Builds the plateau-smoothed fields with parameter n ≥ 2.
pub fn smooth_state(base: &dyn LimitFields, n: u32) -> Result<SmoothedLimitState<'_>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("plateau parameter must be at least 2, got {n}")));
    }
    let j0 = base.plate_jet([0.0, 0.0]);
    Ok(SmoothedLimitState { base, n, u0: j0.u, w0: base.u3_origin(), dw0: j0.dw })
}

impl<'a> SmoothedLimitState<'a> {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn plateau_radius(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn base(&self) -> &'a dyn LimitFields {
        self.base
    }

    /// ∇𝒰₃(0, 0).
    pub fn origin_slope(&self) -> [f64; 2] {
        self.dw0
    }

    /// 𝒰_α(0, 0).
    pub fn origin_inplane(&self) -> [f64; 2] {
        self.u0
    }

    /// Breakpoints of the smoothing transitions along each axis.
    pub fn plate_breaks(&self) -> Vec<f64> {
        let n = self.n as f64;
        (1..=4).flat_map(|k| [-(k as f64) / (2.0 * n), k as f64 / (2.0 * n)]).collect()
    }

    pub fn rod_breaks(&self) -> Vec<f64> {
        let n = self.n as f64;
        vec![1.0 / n, 1.5 / n, 2.0 / n]
    }

    /// Quadrature for limit integrals of the smoothed fields.
    pub fn limit_quadrature(&self, plate: &PlateMesh, rod: &RodMesh, order: usize, subdivisions: usize) -> LimitQuadrature {
        LimitQuadrature::on_meshes(plate, rod, order, order, &self.plate_breaks(), &self.rod_breaks(), subdivisions)
    }
}

impl LimitFields for SmoothedLimitState<'_> {
    fn plate_jet(&self, x: [f64; 2]) -> PlateJet {
        let c = plate_blend(self.n as f64, x);
        let affine = PlateJet {
            u: self.u0,
            w: self.w0 + self.dw0[0] * x[0] + self.dw0[1] * x[1],
            dw: self.dw0,
            ..Default::default()
        };
        if c.v == 0.0 && c.d == [0.0; 2] {
            return affine;
        }
        let b = self.base.plate_jet(x);
        let mut out = affine;
        for a in 0..2 {
            let g = b.u[a] - self.u0[a];
            out.u[a] += c.v * g;
            for i in 0..2 {
                out.du[a][i] = c.d[i] * g + c.v * b.du[a][i];
                for k in 0..2 {
                    out.ddu[a][i][k] = c.dd[i][k] * g + c.d[i] * b.du[a][k] + c.d[k] * b.du[a][i] + c.v * b.ddu[a][i][k];
                }
            }
        }
        let g = b.w - affine.w;
        let dg = [b.dw[0] - self.dw0[0], b.dw[1] - self.dw0[1]];
        out.w += c.v * g;
        for i in 0..2 {
            out.dw[i] += c.d[i] * g + c.v * dg[i];
            for j in 0..2 {
                out.ddw[i][j] = c.dd[i][j] * g + c.d[i] * dg[j] + c.d[j] * dg[i] + c.v * b.ddw[i][j];
                for k in 0..2 {
                    out.dddw[i][j][k] = c.ddd[i][j][k] * g
                        + c.dd[i][j] * dg[k]
                        + c.dd[i][k] * dg[j]
                        + c.dd[j][k] * dg[i]
                        + c.d[i] * b.ddw[j][k]
                        + c.d[j] * b.ddw[i][k]
                        + c.d[k] * b.ddw[i][j]
                        + c.v * b.dddw[i][j][k];
                }
            }
        }
        out
    }

    fn rod_jet(&self, x3: f64) -> RodJet {
        let p = rod_blend(self.n as f64, x3);
        if p == [0.0; 4] {
            return RodJet::default();
        }
        let b = self.base.rod_jet(x3);
        let mut out = RodJet::default();
        for a in 0..2 {
            out.w[a] = p[0] * b.w[a];
            out.dw[a] = p[1] * b.w[a] + p[0] * b.dw[a];
            out.ddw[a] = p[2] * b.w[a] + 2.0 * p[1] * b.dw[a] + p[0] * b.ddw[a];
            out.dddw[a] = p[3] * b.w[a] + 3.0 * p[2] * b.dw[a] + 3.0 * p[1] * b.ddw[a] + p[0] * b.dddw[a];
        }
        out.q3 = p[0] * b.q3;
        out.dq3 = p[1] * b.q3 + p[0] * b.dq3;
        out
    }

    fn u3_origin(&self) -> f64 {
        self.w0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{LimitState, Model};
    use crate::forces::ForceData;
    use crate::geometry::{build_plate_mesh, build_rod_mesh, PlateDomain, RodDomain};
    use crate::limit_model::total_energy;
    use crate::material::MaterialParams;
    use rand::{Rng, SeedableRng};

    fn random_model_state(seed: u64) -> (Model, LimitState) {
        let m = Model::new(
            build_plate_mesh(&PlateDomain::default(), [8, 8]).unwrap(),
            build_rod_mesh(&RodDomain::default(), 8).unwrap(),
            MaterialParams::default(),
            ForceData::zero(),
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..m.dofs.n_free()).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let s = LimitState::from_free(&m.dofs, &x);
        (m, s)
    }

    #[test]
    fn smoothstep_derivatives() {
        let eps = 1e-6;
        for t in [0.1, 0.4, 0.77] {
            let a = smoothstep(t + eps);
            let b = smoothstep(t - eps);
            let c = smoothstep(t);
            for k in 0..3 {
                assert!(((a[k] - b[k]) / (2.0 * eps) - c[k + 1]).abs() < 1e-6);
            }
        }
        assert_eq!(smoothstep(0.0), [0.0; 4]);
        assert_eq!(smoothstep(1.0)[0], 1.0);
    }

    #[test]
    fn blend_derivatives() {
        let eps = 1e-6;
        let x = [0.31, -0.22];
        let b = plate_blend(4.0, x);
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += eps;
            xm[i] -= eps;
            let (p, m) = (plate_blend(4.0, xp), plate_blend(4.0, xm));
            assert!(((p.v - m.v) / (2.0 * eps) - b.d[i]).abs() < 1e-7);
            for j in 0..2 {
                assert!(((p.d[j] - m.d[j]) / (2.0 * eps) - b.dd[j][i]).abs() < 1e-6);
                for k in 0..2 {
                    assert!(((p.dd[j][k] - m.dd[j][k]) / (2.0 * eps) - b.ddd[j][k][i]).abs() < 1e-4);
                }
            }
        }
    }

    #[test]
    fn zero_state_stays_zero() {
        let (m, _) = random_model_state(0);
        let s = m.zero_state();
        let f = m.fields(&s);
        let ss = smooth_state(&f, 4).unwrap();
        assert_eq!(ss.plate_jet([0.3, 0.4]), PlateJet::default());
        assert_eq!(ss.rod_jet(0.6), RodJet::default());
        assert!(smooth_state(&f, 1).is_err());
    }

    #[test]
    fn plateau_invariants_hold() {
        let (m, s) = random_model_state(3);
        let f = m.fields(&s);
        let n = 4;
        let ss = smooth_state(&f, n).unwrap();
        let r = ss.plateau_radius();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let rad = r * rng.gen_range(0.0..1.0f64).sqrt();
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            let j = ss.plate_jet([rad * th.cos(), rad * th.sin()]);
            assert!(j.du.iter().flatten().all(|v| v.abs() < 1e-12));
            assert!(j.ddw.iter().flatten().all(|v| v.abs() < 1e-12));
            let rj = ss.rod_jet(rng.gen_range(-r..r));
            assert_eq!(rj, RodJet::default());
        }
        let far = [1.3, -1.1];
        let (a, b) = (ss.plate_jet(far), f.plate_jet(far));
        assert!((a.w - b.w).abs() < 1e-15 && (a.u[0] - b.u[0]).abs() < 1e-15 && (a.ddw[0][1] - b.ddw[0][1]).abs() < 1e-15);
        assert_eq!(ss.rod_jet(0.8), f.rod_jet(0.8));
        assert_eq!(ss.u3_origin(), f.u3_origin());
    }

    #[test]
    fn smoothing_error_decays_with_n() {
        let (m, s) = random_model_state(8);
        let f = m.fields(&s);
        let mat = &m.material;
        let fd = ForceData::zero();
        let mut changes = Vec::new();
        for n in [2, 4, 8] {
            let ss = smooth_state(&f, n).unwrap();
            let q = ss.limit_quadrature(&m.plate, &m.rod, 6, 2);
            let e0 = total_energy(&f, &fd, mat, &q);
            let e1 = total_energy(&ss, &fd, mat, &q);
            changes.push((e1 - e0).abs());
        }
        assert!(changes[1] < changes[0] && changes[2] < changes[1], "{changes:?}");
    }
}
