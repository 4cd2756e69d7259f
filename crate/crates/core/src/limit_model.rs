//! Pointwise formulas of the limit problem over any representation of the
//! fields (finite element states, smoothed states, closed forms).
//!
//! Energies here are computed by direct quadrature of the defining integrals
//! and serve as the reference for the assembled finite element energy.

use crate::fem::Model;
use crate::forces::ForceData;
use crate::geometry::{disc_rule, gauss_legendre, PlateMesh, RodMesh};
use crate::material::{limit_density, MaterialParams, StrainMatrix};

/// Plate fields and their derivatives at a point of ω.
///
/// `du[a][b]` = ∂_b 𝒰_a, `ddu[a][b][c]` = ∂_b∂_c 𝒰_a, and the `w` entries
/// are 𝒰₃ with its derivatives up to third order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlateJet {
    pub u: [f64; 2],
    pub du: [[f64; 2]; 2],
    pub ddu: [[[f64; 2]; 2]; 2],
    pub w: f64,
    pub dw: [f64; 2],
    pub ddw: [[f64; 2]; 2],
    pub dddw: [[[f64; 2]; 2]; 2],
}

/// Rod fields 𝒲₁, 𝒲₂ (up to third derivative) and 𝒬₃ (with its derivative).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RodJet {
    pub w: [f64; 2],
    pub dw: [f64; 2],
    pub ddw: [f64; 2],
    pub dddw: [f64; 2],
    pub q3: f64,
    pub dq3: f64,
}

/// Anything that can be evaluated as limit fields.
pub trait LimitFields: Sync {
    fn plate_jet(&self, x: [f64; 2]) -> PlateJet;
    fn rod_jet(&self, x3: f64) -> RodJet;
    /// 𝒰₃(0, 0).
    fn u3_origin(&self) -> f64;
}

/// Membrane strains 𝒵₁₁, 𝒵₁₂, 𝒵₂₂.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MembraneStrain {
    pub z11: f64,
    pub z12: f64,
    pub z22: f64,
}

impl MembraneStrain {
    pub fn trace(&self) -> f64 {
        self.z11 + self.z22
    }
}

pub fn membrane_strain_at(j: &PlateJet) -> MembraneStrain {
    MembraneStrain {
        z11: j.du[0][0] + 0.5 * j.dw[0] * j.dw[0],
        z22: j.du[1][1] + 0.5 * j.dw[1] * j.dw[1],
        z12: 0.5 * (j.du[0][1] + j.du[1][0]) + 0.5 * j.dw[0] * j.dw[1],
    }
}

/// 𝒵 at every plate quadrature point.
pub fn membrane_strain(f: &dyn LimitFields, q: &LimitQuadrature) -> Vec<MembraneStrain> {
    q.plate.iter().map(|(x, _)| membrane_strain_at(&f.plate_jet(*x))).collect()
}

/// 𝒬 = (−𝒲₂′, 𝒲₁′, 𝒬₃).
pub fn rotation_vector(j: &RodJet) -> [f64; 3] {
    [-j.dw[1], j.dw[0], j.q3]
}

/// Quadrature points over ω and [0, L] for the limit integrals.
#[derive(Debug, Clone)]
pub struct LimitQuadrature {
    pub plate: Vec<([f64; 2], f64)>,
    pub rod: Vec<(f64, f64)>,
    /// Breakpoints of the rod integrand, starting at 0 and ending at L.
    pub rod_breaks: Vec<f64>,
    pub rod_order: usize,
}

fn merge_breaks(base: &[f64], extra: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut v: Vec<f64> = base.iter().chain(extra).copied().filter(|x| *x >= lo && *x <= hi).collect();
    v.push(lo);
    v.push(hi);
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * (hi - lo));
    v
}

impl LimitQuadrature {
    /// The element Gauss rules of a model.
    pub fn from_model(model: &Model) -> Self {
        Self {
            plate: model.plate_quadrature(),
            rod: model.rod_quadrature(),
            rod_breaks: model.rod.nodes.clone(),
            rod_order: model.options.rod_order,
        }
    }

    /// Tensor Gauss rules on the mesh cells refined by extra breakpoints and
    /// uniform subdivision.
    pub fn on_meshes(
        plate: &PlateMesh,
        rod: &RodMesh,
        plate_order: usize,
        rod_order: usize,
        plate_extra: &[f64],
        rod_extra: &[f64],
        subdivisions: usize,
    ) -> Self {
        let gp = gauss_legendre(plate_order);
        let axis = |grid: &[f64], a: f64| -> Vec<(f64, f64)> {
            let b = merge_breaks(grid, plate_extra, -a, a);
            let mut out = Vec::new();
            for w in b.windows(2) {
                let h = (w[1] - w[0]) / subdivisions as f64;
                for s in 0..subdivisions {
                    let lo = w[0] + h * s as f64;
                    out.extend(gp.mapped(lo, lo + h));
                }
            }
            out
        };
        let [a1, a2] = plate.domain.half_widths;
        let ax = axis(&plate.xs, a1);
        let ay = axis(&plate.ys, a2);
        let mut pts = Vec::with_capacity(ax.len() * ay.len());
        for &(y, wy) in &ay {
            for &(x, wx) in &ax {
                pts.push(([x, y], wx * wy));
            }
        }
        let rb = merge_breaks(&rod.nodes, rod_extra, 0.0, rod.length);
        let mut fine = Vec::new();
        for w in rb.windows(2) {
            let h = (w[1] - w[0]) / subdivisions as f64;
            for s in 0..subdivisions {
                fine.push(w[0] + h * s as f64);
            }
        }
        fine.push(rod.length);
        let gr = gauss_legendre(rod_order);
        let rod_pts = fine.windows(2).flat_map(|w| gr.mapped(w[0], w[1]).collect::<Vec<_>>()).collect();
        Self { plate: pts, rod: rod_pts, rod_breaks: fine, rod_order }
    }
}

/// 𝒲₃(x₃) = 𝒰₃(0,0) − ½∫₀^{x₃}(|𝒲₁′|² + |𝒲₂′|²), by Gauss quadrature on the
/// pieces delimited by `breaks`.
pub fn recover_w3(f: &dyn LimitFields, breaks: &[f64], order: usize, x3: f64) -> f64 {
    let g = gauss_legendre(order);
    let slope2 = |t: f64| {
        let j = f.rod_jet(t);
        j.dw[0] * j.dw[0] + j.dw[1] * j.dw[1]
    };
    let mut integral = 0.0;
    for w in breaks.windows(2) {
        if w[0] >= x3 {
            break;
        }
        let hi = w[1].min(x3);
        integral += g.mapped(w[0], hi).map(|(t, wt)| wt * slope2(t)).sum::<f64>();
    }
    f.u3_origin() - 0.5 * integral
}

/// Exact derivative of the quadrature formula of [`recover_w3`] at x₃.
pub fn recover_w3_derivative(f: &dyn LimitFields, breaks: &[f64], order: usize, x3: f64) -> f64 {
    let g = gauss_legendre(order);
    let k = breaks.partition_point(|b| *b < x3).clamp(1, breaks.len() - 1) - 1;
    let lo = breaks[k];
    let len = x3 - lo;
    let mut d = 0.0;
    for (t, w) in g.nodes.iter().zip(&g.weights) {
        let s = 0.5 * (1.0 + t);
        let j = f.rod_jet(lo + s * len);
        let v = j.dw[0] * j.dw[0] + j.dw[1] * j.dw[1];
        let dv = 2.0 * (j.dw[0] * j.ddw[0] + j.dw[1] * j.ddw[1]);
        d += 0.5 * w * (v + len * s * dv);
    }
    -0.5 * d
}

/// Residual d𝒲₃/dx₃ + ½(|𝒲₁′|² + |𝒲₂′|²) of the recovered 𝒲₃.
pub fn constraint_residual(f: &dyn LimitFields, breaks: &[f64], order: usize, x3: f64) -> f64 {
    let j = f.rod_jet(x3);
    recover_w3_derivative(f, breaks, order, x3) + 0.5 * (j.dw[0] * j.dw[0] + j.dw[1] * j.dw[1])
}

/// Bending and membrane densities of the plate energy at one point.
pub fn plate_densities(j: &PlateJet, m: &MaterialParams) -> (f64, f64) {
    let nu = m.poisson;
    let h = &j.ddw;
    let lap = h[0][0] + h[1][1];
    let hs = h[0][0] * h[0][0] + h[1][1] * h[1][1] + 2.0 * h[0][1] * h[0][1];
    let bend = m.plate_bending_factor() * ((1.0 - nu) * hs + nu * lap * lap);
    let z = membrane_strain_at(j);
    let zs = z.z11 * z.z11 + z.z22 * z.z22 + 2.0 * z.z12 * z.z12;
    let mem = m.plate_membrane_factor() * ((1.0 - nu) * zs + nu * z.trace() * z.trace());
    (bend, mem)
}

/// (bending, membrane) parts of 𝒥_p.
pub fn plate_energy_parts(f: &dyn LimitFields, m: &MaterialParams, q: &LimitQuadrature) -> (f64, f64) {
    q.plate.iter().fold((0.0, 0.0), |(b, mm), (x, w)| {
        let (db, dm) = plate_densities(&f.plate_jet(*x), m);
        (b + w * db, mm + w * dm)
    })
}

/// 𝒥_p.
pub fn plate_energy(f: &dyn LimitFields, m: &MaterialParams, q: &LimitQuadrature) -> f64 {
    let (b, mm) = plate_energy_parts(f, m, q);
    b + mm
}

/// 𝒥_r = Eπ/8 ∫(|𝒲₁″|² + |𝒲₂″|²) + μπ/4 ∫|𝒬₃′|².
pub fn rod_energy(f: &dyn LimitFields, m: &MaterialParams, q: &LimitQuadrature) -> f64 {
    let pi = std::f64::consts::PI;
    q.rod
        .iter()
        .map(|(x, w)| {
            let j = f.rod_jet(*x);
            w * (m.young * pi / 8.0 * (j.ddw[0] * j.ddw[0] + j.ddw[1] * j.ddw[1]) + m.mu * pi / 4.0 * j.dq3 * j.dq3)
        })
        .sum()
}

/// ℒ = 2∫_ω f_p·𝒰 + π∫ f_r·𝒲 + π/4 Σ_α ∫ g_α·(𝒬∧𝐞_α), with 𝒲₃ recovered.
pub fn load_functional(f: &dyn LimitFields, fd: &ForceData, q: &LimitQuadrature) -> f64 {
    let pi = std::f64::consts::PI;
    let plate: f64 = q
        .plate
        .iter()
        .map(|(x, w)| {
            let j = f.plate_jet(*x);
            let fp = fd.f_p(*x);
            w * 2.0 * (fp[0] * j.u[0] + fp[1] * j.u[1] + fp[2] * j.w)
        })
        .sum();
    let rod: f64 = q
        .rod
        .iter()
        .map(|(x, w)| {
            let j = f.rod_jet(*x);
            let fr = fd.f_r(*x);
            let w3 = if fr[2] != 0.0 { recover_w3(f, &q.rod_breaks, q.rod_order, *x) } else { 0.0 };
            let qv = rotation_vector(&j);
            let g1 = fd.g(0, *x);
            let g2 = fd.g(1, *x);
            let q_e1 = [0.0, qv[2], -qv[1]];
            let q_e2 = [-qv[2], 0.0, qv[0]];
            let gt: f64 = (0..3).map(|k| g1[k] * q_e1[k] + g2[k] * q_e2[k]).sum();
            w * (pi * (fr[0] * j.w[0] + fr[1] * j.w[1] + fr[2] * w3) + pi / 4.0 * gt)
        })
        .sum();
    plate + rod
}

/// 𝒥 = 𝒥_p + 𝒥_r − ℒ.
pub fn total_energy(f: &dyn LimitFields, fd: &ForceData, m: &MaterialParams, q: &LimitQuadrature) -> f64 {
    plate_energy(f, m, q) + rod_energy(f, m, q) - load_functional(f, fd, q)
}

/// The minimizing plate warping at (x₁, x₂, X₃).
pub fn optimal_plate_warping(j: &PlateJet, m: &MaterialParams, x3: f64) -> [f64; 3] {
    let c = m.poisson / (1.0 - m.poisson);
    let lap = j.ddw[0][0] + j.ddw[1][1];
    let tz = membrane_strain_at(j).trace();
    [0.0, 0.0, c * ((0.5 * x3 * x3 - 1.0 / 6.0) * lap - x3 * tz)]
}

/// The minimizing rod warping at (X₁, X₂, x₃), third component zero.
pub fn optimal_rod_warping(j: &RodJet, m: &MaterialParams, x: [f64; 2]) -> [f64; 3] {
    let nu = m.poisson;
    let [x1, x2] = x;
    let [a, b] = j.ddw;
    [
        -nu * (0.5 * (x2 * x2 - x1 * x1) * a - x1 * x2 * b),
        -nu * (0.5 * (x1 * x1 - x2 * x2) * b - x1 * x2 * a),
        0.0,
    ]
}

/// 𝐄_p at (x₁, x₂, X₃) with the optimal warping.
pub fn limit_strain_plate(j: &PlateJet, m: &MaterialParams, x3: f64) -> StrainMatrix {
    let z = membrane_strain_at(j);
    let e11 = -x3 * j.ddw[0][0] + z.z11;
    let e22 = -x3 * j.ddw[1][1] + z.z22;
    let e12 = -x3 * j.ddw[0][1] + z.z12;
    let c = m.poisson / (1.0 - m.poisson);
    let e33 = c * (x3 * (j.ddw[0][0] + j.ddw[1][1]) - z.trace());
    StrainMatrix([e11, e22, e33, 0.0, 0.0, e12])
}

/// 𝐄_r at (X₁, X₂, x₃) with the optimal warping.
pub fn limit_strain_rod(j: &RodJet, m: &MaterialParams, x: [f64; 2]) -> StrainMatrix {
    let nu = m.poisson;
    let [x1, x2] = x;
    let axial = -x1 * j.ddw[0] - x2 * j.ddw[1];
    StrainMatrix([-nu * axial, -nu * axial, axial, 0.5 * x1 * j.dq3, -0.5 * x2 * j.dq3, 0.0])
}

/// ∫_Ω Q(2𝐄_p) with `thickness_order` Gauss points in X₃.
pub fn plate_strain_energy(f: &dyn LimitFields, m: &MaterialParams, q: &LimitQuadrature, thickness_order: usize) -> f64 {
    let g = gauss_legendre(thickness_order);
    q.plate
        .iter()
        .map(|(x, w)| {
            let j = f.plate_jet(*x);
            w * g.mapped(-1.0, 1.0).map(|(x3, w3)| w3 * limit_density(&limit_strain_plate(&j, m, x3), m)).sum::<f64>()
        })
        .sum()
}

/// ∫_B Q(2𝐄_r) with a polar rule on the cross-section.
pub fn rod_strain_energy(f: &dyn LimitFields, m: &MaterialParams, q: &LimitQuadrature, radial: usize, angular: usize) -> f64 {
    let disc = disc_rule(radial, angular);
    q.rod
        .iter()
        .map(|(x3, w)| {
            let j = f.rod_jet(*x3);
            w * disc.iter().map(|(x, wd)| wd * limit_density(&limit_strain_rod(&j, m, *x), m)).sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{LimitState, Model};
    use crate::forces::ScalarField;
    use crate::geometry::{build_plate_mesh, build_rod_mesh, PlateDomain, RodDomain};
    use rand::{Rng, SeedableRng};

    struct Poly {
        plate: fn([f64; 2]) -> PlateJet,
        rod: fn(f64) -> RodJet,
        u3o: f64,
    }

    impl LimitFields for Poly {
        fn plate_jet(&self, x: [f64; 2]) -> PlateJet {
            (self.plate)(x)
        }
        fn rod_jet(&self, x3: f64) -> RodJet {
            (self.rod)(x3)
        }
        fn u3_origin(&self) -> f64 {
            self.u3o
        }
    }

    fn zero_plate(_: [f64; 2]) -> PlateJet {
        PlateJet::default()
    }
    fn zero_rod(_: f64) -> RodJet {
        RodJet::default()
    }

    fn meshes(n: usize, m: usize) -> (PlateMesh, RodMesh) {
        (
            build_plate_mesh(&PlateDomain::default(), [n, n]).unwrap(),
            build_rod_mesh(&RodDomain::default(), m).unwrap(),
        )
    }

    fn quad(n: usize, m: usize) -> LimitQuadrature {
        let (p, r) = meshes(n, m);
        LimitQuadrature::on_meshes(&p, &r, 5, 5, &[], &[], 1)
    }

    #[test]
    fn membrane_examples() {
        assert_eq!(membrane_strain_at(&PlateJet::default()), MembraneStrain::default());
        let j = PlateJet { du: [[0.3, 0.0], [0.0, 0.0]], ..Default::default() };
        assert_eq!(membrane_strain_at(&j), MembraneStrain { z11: 0.3, z12: 0.0, z22: 0.0 });
        let a = 0.7;
        let j = PlateJet { dw: [a, 0.0], ..Default::default() };
        let z = membrane_strain_at(&j);
        assert!((z.z11 - a * a / 2.0).abs() < 1e-16 && z.z12 == 0.0 && z.z22 == 0.0);
    }

    #[test]
    fn recover_w3_examples() {
        let constant = Poly { plate: zero_plate, rod: zero_rod, u3o: 0.4 };
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(recover_w3(&constant, &[0.0, 0.5, 1.0], 4, x), 0.4);
        }
        fn quadratic(x: f64) -> RodJet {
            let a = 1.3;
            RodJet { w: [a * x * x, 0.0], dw: [2.0 * a * x, 0.0], ddw: [2.0 * a, 0.0], ..Default::default() }
        }
        let f = Poly { plate: zero_plate, rod: quadratic, u3o: 0.0 };
        let breaks = [0.0, 0.25, 0.5, 0.75, 1.0];
        let mut prev = 0.0;
        for k in 0..=20 {
            let x = k as f64 / 20.0;
            let v = recover_w3(&f, &breaks, 3, x);
            assert!((v + 2.0 * 1.3f64.powi(2) / 3.0 * x.powi(3)).abs() < 1e-14);
            assert!(v <= prev);
            prev = v;
            if k > 0 && k < 20 {
                assert!(constraint_residual(&f, &breaks, 3, x).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn recover_w3_matches_trapezoid_oracle() {
        let (p, r) = meshes(2, 4);
        let model = Model::new(p, r, MaterialParams::default(), ForceData::zero()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..model.dofs.n_free()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = LimitState::from_free(&model.dofs, &x);
        let f = model.fields(&s);
        let target = 0.83;
        let n = 200_000;
        let h = target / n as f64;
        let g = |t: f64| {
            let j = f.rod_jet(t);
            j.dw[0] * j.dw[0] + j.dw[1] * j.dw[1]
        };
        let mut trap = 0.5 * (g(0.0) + g(target));
        for k in 1..n {
            trap += g(k as f64 * h);
        }
        let oracle = f.u3_origin() - 0.5 * trap * h;
        let v = recover_w3(&f, &model.rod.nodes, 4, target);
        assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
        let eps = 1e-5;
        let fd = (recover_w3(&f, &model.rod.nodes, 4, target + eps) - recover_w3(&f, &model.rod.nodes, 4, target - eps)) / (2.0 * eps);
        assert!((fd - recover_w3_derivative(&f, &model.rod.nodes, 4, target)).abs() < 1e-8);
    }

    #[test]
    fn uniform_membrane_energy() {
        fn stretch(_: [f64; 2]) -> PlateJet {
            PlateJet { du: [[0.01, 0.0], [0.0, 0.0]], ..Default::default() }
        }
        let f = Poly { plate: stretch, rod: zero_rod, u3o: 0.0 };
        let m = MaterialParams::default();
        let e = plate_energy(&f, &m, &quad(4, 2));
        let oracle = m.young * 1e-4 * 16.0 / (1.0 - m.poisson * m.poisson);
        assert!((e - oracle).abs() < 1e-14);
    }

    #[test]
    fn rod_energy_examples() {
        fn bend(x: f64) -> RodJet {
            RodJet { w: [x * x, 0.0], dw: [2.0 * x, 0.0], ddw: [2.0, 0.0], ..Default::default() }
        }
        fn twist(x: f64) -> RodJet {
            RodJet { q3: x, dq3: 1.0, ..Default::default() }
        }
        let m = crate::material::lame_from_engineering(1.0, 0.25).unwrap();
        let q = quad(2, 4);
        let pi = std::f64::consts::PI;
        assert!((rod_energy(&Poly { plate: zero_plate, rod: bend, u3o: 0.0 }, &m, &q) - pi / 2.0).abs() < 1e-13);
        assert!((rod_energy(&Poly { plate: zero_plate, rod: twist, u3o: 0.0 }, &m, &q) - m.mu * pi / 4.0).abs() < 1e-13);
    }

    #[test]
    fn load_examples() {
        fn lifted(_: [f64; 2]) -> PlateJet {
            PlateJet { w: 1.0, ..Default::default() }
        }
        let mut fd = ForceData::zero();
        fd.plate[2] = ScalarField::constant(1.0);
        let q = quad(4, 2);
        assert!((load_functional(&Poly { plate: lifted, rod: zero_rod, u3o: 1.0 }, &fd, &q) - 32.0).abs() < 1e-12);
        let mut fd = ForceData::zero();
        fd.rod[2] = ScalarField::constant(1.0);
        let v = load_functional(&Poly { plate: zero_plate, rod: zero_rod, u3o: 1.0 }, &fd, &q);
        assert!((v - std::f64::consts::PI).abs() < 1e-13);
        assert_eq!(load_functional(&Poly { plate: lifted, rod: zero_rod, u3o: 1.0 }, &ForceData::zero(), &q), 0.0);
    }

    #[test]
    fn warping_examples() {
        let m0 = crate::material::lame_from_engineering(1.0, 0.0).unwrap();
        let m = crate::material::lame_from_engineering(1.0, 0.3).unwrap();
        let j = RodJet { ddw: [1.0, 0.0], ..Default::default() };
        assert_eq!(optimal_rod_warping(&j, &m0, [0.4, 0.2]), [0.0; 3]);
        let v = optimal_rod_warping(&j, &m, [1.0, 0.0]);
        assert!((v[0] - 0.15).abs() < 1e-15 && v[1] == 0.0 && v[2] == 0.0);
        let j2 = RodJet { ddw: [0.7, -0.4], ..Default::default() };
        let x = [0.3, -0.6];
        let a = optimal_rod_warping(&j2, &m, x);
        let b = optimal_rod_warping(&j2, &m, [-x[0], -x[1]]);
        assert_eq!(a, b);
        let oracle1 = -0.3 * ((0.36 - 0.09) / 2.0 * 0.7 - 0.3 * -0.6 * -0.4);
        assert!((a[0] - oracle1).abs() < 1e-15);

        let pj = PlateJet { du: [[0.2, 0.0], [0.0, 0.1]], ..Default::default() };
        let c = 0.3 / 0.7;
        let v = optimal_plate_warping(&pj, &m, 0.5);
        assert!((v[2] + c * 0.5 * 0.3).abs() < 1e-15);
        assert_eq!(optimal_plate_warping(&pj, &m0, 0.5), [0.0; 3]);
        let pj = PlateJet { ddw: [[1.0, 0.0], [0.0, 2.0]], ..Default::default() };
        assert!(optimal_plate_warping(&pj, &m, 1.0 / 3f64.sqrt())[2].abs() < 1e-15);
    }

    #[test]
    fn strain_examples() {
        let m = MaterialParams::default();
        assert_eq!(limit_strain_plate(&PlateJet::default(), &m, 0.3), StrainMatrix::zero());
        let pj = PlateJet { ddw: [[1.0, 0.5], [0.5, -2.0]], ..Default::default() };
        let e = limit_strain_plate(&pj, &m, 0.4);
        assert_eq!((e.get(0, 0), e.get(0, 1), e.get(1, 1)), (-0.4, -0.2, 0.8));
        let mm = e.to_matrix();
        assert_eq!(mm, mm.transpose());
        let rj = RodJet { dq3: 0.6, ..Default::default() };
        let e = limit_strain_rod(&rj, &m, [0.3, 0.5]);
        assert_eq!(e.get(0, 2), -0.5 * 0.5 * 0.6);
        assert_eq!(e.get(1, 2), 0.5 * 0.3 * 0.6);
        assert_eq!((e.get(0, 0), e.get(1, 1), e.get(2, 2), e.get(0, 1)), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn strain_energy_identities_on_random_states() {
        let (p, r) = meshes(4, 4);
        let model = Model::new(p, r, crate::material::lame_from_engineering(1.7, 0.28).unwrap(), ForceData::zero()).unwrap();
        let q = LimitQuadrature::from_model(&model);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let x: Vec<f64> = (0..model.dofs.n_free()).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let s = LimitState::from_free(&model.dofs, &x);
            let f = model.fields(&s);
            let jp = plate_energy(&f, &model.material, &q);
            let jr = rod_energy(&f, &model.material, &q);
            let ep = plate_strain_energy(&f, &model.material, &q, 3);
            let er = rod_strain_energy(&f, &model.material, &q, 3, 8);
            assert!((ep / jp - 1.0).abs() < 1e-12, "{ep} {jp}");
            assert!((er / jr - 1.0).abs() < 1e-12, "{er} {jr}");
        }
    }

    #[test]
    fn dense_energy_matches_assembly() {
        let (p, r) = meshes(4, 3);
        let mut fd = ForceData::zero();
        fd.plate = [ScalarField::constant(0.2), ScalarField::expr("x1 - x2").unwrap(), ScalarField::expr("1 + x1*x2").unwrap()];
        fd.rod = [ScalarField::expr("x3").unwrap(), ScalarField::constant(-0.3), ScalarField::expr("2 - x3").unwrap()];
        fd.g1 = [ScalarField::Zero, ScalarField::constant(0.4), ScalarField::expr("x3").unwrap()];
        fd.g2 = [ScalarField::constant(-0.2), ScalarField::Zero, ScalarField::constant(0.1)];
        let model = Model::new(p, r, MaterialParams::default(), fd).unwrap();
        let q = LimitQuadrature::from_model(&model);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..model.dofs.n_free()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let s = LimitState::from_free(&model.dofs, &x);
        let f = model.fields(&s);
        let parts = model.energy_parts(&s);
        let (b, mm) = plate_energy_parts(&f, &model.material, &q);
        assert!((parts.plate_bending - b).abs() < 1e-13 * (1.0 + b.abs()));
        assert!((parts.plate_membrane - mm).abs() < 1e-13 * (1.0 + mm.abs()));
        assert!((parts.rod - rod_energy(&f, &model.material, &q)).abs() < 1e-13 * (1.0 + parts.rod));
        let l = load_functional(&f, &model.forces, &q);
        assert!((parts.load - l).abs() < 1e-13 * (1.0 + l.abs()), "{} vs {l}", parts.load);
        let t = total_energy(&f, &model.forces, &model.material, &q);
        assert!((parts.total - t).abs() < 1e-13 * parts.magnitude);
        assert_eq!(total_energy(&model.fields(&model.zero_state()), &model.forces, &model.material, &q), 0.0);
    }
}
