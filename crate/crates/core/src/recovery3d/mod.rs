//! Recovery sequence of 3D deformations over the plate+rod structure and the
//! rescaled St Venant–Kirchhoff energy evaluated on it.

pub mod rotation;
pub mod smoothing;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{LimitState, Model};
use crate::forces::{ForceData, Region};
use crate::geometry::{check_delta, thin_quadrature_with, Edge, PlateDomain, ThinQuadrature, ThinQuadratureOptions};
use crate::limit_model::{optimal_rod_warping, total_energy, LimitFields, PlateJet, RodJet};
use crate::material::{svk_density_from_offset, Density, MaterialParams, StrainMatrix};

pub use rotation::{exp_rotation, exp_rotation_integral, skew, Frame, RotationField};
pub use smoothing::{smooth_state, SmoothedLimitState};

/// Largest rotation angle of one integration step.
pub const ROTATION_MAX_ANGLE: f64 = 5e-3;

/// Rotation field of the recovery sequence: generator δ^{1/2}𝒬′ + δℛ.
pub fn integrate_rotation<'a>(ss: &'a SmoothedLimitState<'a>, delta: f64, length: f64, breaks: &[f64], substeps: usize) -> Result<RotationField<'a>> {
    check_delta(delta)?;
    if delta > ss.plateau_radius() {
        return Err(Error::InvalidArgument(format!("delta = {delta} exceeds the plateau radius 1/n = {}", ss.plateau_radius())));
    }
    let r = junction_rotation(ss);
    let sd = delta.sqrt();
    let mut b: Vec<f64> = breaks.iter().copied().chain(ss.rod_breaks()).filter(|x| *x > 0.0 && *x < length).collect();
    b.push(0.0);
    b.push(length);
    b.sort_by(f64::total_cmp);
    b.dedup_by(|a, c| (*a - *c).abs() < 1e-14);
    Ok(RotationField::integrate_adaptive(
        move |x3| {
            let j = ss.rod_jet(x3);
            Vector3::new(-j.ddw[1], j.ddw[0], j.dq3) * sd + r * delta
        },
        &b,
        substeps,
        ROTATION_MAX_ANGLE,
    ))
}

/// ℛ = ∂₂𝒰₃(0,0)𝐞₁ − ∂₁𝒰₃(0,0)𝐞₂.
pub fn junction_rotation(ss: &SmoothedLimitState) -> Vector3<f64> {
    let d = ss.origin_slope();
    Vector3::new(d[1], -d[0], 0.0)
}

/// Value and gradient offset ∇v − I of a deformation at one point.
#[derive(Debug, Clone, Copy)]
pub struct PointValue {
    pub displacement: Vector3<f64>,
    pub grad_offset: Matrix3<f64>,
}

/// Per-section data of the rod formula at fixed x₃.
#[derive(Debug, Clone, Copy)]
pub struct RodSection {
    pub x3: f64,
    pub frame: Frame,
    pub bar_r: Matrix3<f64>,
    pub bar_dr: Matrix3<f64>,
    pub bar_w: Vector3<f64>,
    pub w_delta: Vector3<f64>,
    pub jet: RodJet,
}

fn cut(t: f64) -> (f64, f64) {
    let h = smoothing::smoothstep(t - 1.0);
    (h[0], h[1])
}

/// The recovery deformation for one δ.
pub struct RecoveryField<'a> {
    pub delta: f64,
    ss: &'a SmoothedLimitState<'a>,
    rotation: RotationField<'a>,
    domain: PlateDomain,
    material: MaterialParams,
    length: f64,
    r_junction: Vector3<f64>,
    w0: Vector3<f64>,
}

/// Builds the recovery field; requires δ ≤ 1/n.
pub fn build_recovery<'a>(
    ss: &'a SmoothedLimitState<'a>,
    domain: &PlateDomain,
    length: f64,
    delta: f64,
    m: &MaterialParams,
    rod_breaks: &[f64],
    substeps: usize,
) -> Result<RecoveryField<'a>> {
    let rotation = integrate_rotation(ss, delta, length, rod_breaks, substeps)?;
    let u0 = ss.origin_inplane();
    Ok(RecoveryField {
        delta,
        ss,
        rotation,
        domain: domain.clone(),
        material: *m,
        length,
        r_junction: junction_rotation(ss),
        w0: Vector3::new(delta * delta * u0[0], delta * delta * u0[1], delta * ss.u3_origin()),
    })
}

impl<'a> RecoveryField<'a> {
    pub fn rotation(&self) -> &RotationField<'a> {
        &self.rotation
    }

    /// Warping cut-off: zero within δ of O and of clamped edges, one beyond 2δ.
    fn plate_cutoff(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let d = self.delta;
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let (mut v, c1) = cut(r / d);
        let mut g = if c1 != 0.0 { [c1 * x[0] / (r * d), c1 * x[1] / (r * d)] } else { [0.0; 2] };
        let [a1, a2] = self.domain.half_widths;
        for e in Edge::ALL {
            if !self.domain.is_clamped(e) {
                continue;
            }
            let (dist, grad) = match e {
                Edge::Left => (x[0] + a1, [1.0, 0.0]),
                Edge::Right => (a1 - x[0], [-1.0, 0.0]),
                Edge::Bottom => (x[1] + a2, [0.0, 1.0]),
                Edge::Top => (a2 - x[1], [0.0, -1.0]),
            };
            let (k, k1) = cut(dist / d);
            g = [g[0] * k + v * k1 * grad[0] / d, g[1] * k + v * k1 * grad[1] / d];
            v *= k;
        }
        (v, g)
    }

    /// Plate warping ū₃ before the cut-off and its derivatives (∂₁, ∂₂, ∂_{X₃}).
    fn plate_warping(&self, j: &PlateJet, big_x3: f64) -> (f64, [f64; 2], f64) {
        let nu = self.material.poisson;
        let c = nu / (1.0 - nu);
        let lap = j.ddw[0][0] + j.ddw[1][1];
        let g2 = j.dw[0] * j.dw[0] + j.dw[1] * j.dw[1];
        let tz = j.du[0][0] + j.du[1][1] + 0.5 * g2;
        let p = 0.5 * big_x3 * big_x3 - 1.0 / 6.0;
        let v = c * (p * lap - big_x3 * tz) - 0.5 * big_x3 * g2;
        let mut d = [0.0; 2];
        for (b, db) in d.iter_mut().enumerate() {
            let dlap = j.dddw[0][0][b] + j.dddw[1][1][b];
            let dg2 = 2.0 * (j.dw[0] * j.ddw[0][b] + j.dw[1] * j.ddw[1][b]);
            let dtz = j.ddu[0][0][b] + j.ddu[1][1][b] + 0.5 * dg2;
            *db = c * (p * dlap - big_x3 * dtz) - 0.5 * big_x3 * dg2;
        }
        let dx3 = c * (big_x3 * lap - tz) - 0.5 * g2;
        (v, d, dx3)
    }

    /// Plate formula at a physical point of Ω_δ, given the plate jet at (x₁, x₂).
    pub fn plate_point_with(&self, j: &PlateJet, x: [f64; 3]) -> PointValue {
        let d = self.delta;
        let (d2, d3) = (d * d, d * d * d);
        let big = x[2] / d;
        let (k, dk) = self.plate_cutoff([x[0], x[1]]);
        let (w, dw, dwx3) = if k != 0.0 || dk != [0.0; 2] { self.plate_warping(j, big) } else { (0.0, [0.0; 2], 0.0) };
        let ub = k * w;
        let mut g = Matrix3::zeros();
        for a in 0..2 {
            for b in 0..2 {
                g[(a, b)] = d2 * j.du[a][b] - d * x[2] * j.ddw[a][b];
            }
            g[(a, 2)] = -d * j.dw[a];
            g[(2, a)] = d * j.dw[a] + d3 * (dk[a] * w + k * dw[a]);
        }
        g[(2, 2)] = d2 * k * dwx3;
        PointValue {
            displacement: Vector3::new(
                d2 * j.u[0] - d * x[2] * j.dw[0],
                d2 * j.u[1] - d * x[2] * j.dw[1],
                d * j.w + d3 * ub,
            ),
            grad_offset: g,
        }
    }

    pub fn plate_point(&self, x: [f64; 3]) -> PointValue {
        self.plate_point_with(&self.ss.plate_jet([x[0], x[1]]), x)
    }

    /// Data shared by all points of the rod cross-section at x₃.
    pub fn rod_section(&self, x3: f64) -> RodSection {
        let d = self.delta;
        let om = self.r_junction * d;
        let bar_r = exp_rotation(&om, x3);
        let frame = self.rotation.frame(x3);
        RodSection {
            x3,
            frame,
            bar_r,
            bar_dr: skew(&om) * bar_r,
            bar_w: exp_rotation_integral(&om, x3) + self.w0,
            w_delta: frame.integral + self.w0,
            jet: if x3 > 0.0 { self.ss.rod_jet(x3) } else { RodJet::default() },
        }
    }

    /// Rod formula at physical (x₁, x₂) on the section.
    pub fn rod_point_with(&self, s: &RodSection, x12: [f64; 2]) -> PointValue {
        let d = self.delta;
        let ds = self.ss.origin_slope();
        let p = Vector3::new(x12[0], x12[1], 0.0);
        let i3 = Matrix3::identity();
        let big = [x12[0] / d, x12[1] / d];
        let cyl = Vector3::new(
            d * d * self.ss.origin_inplane()[0] - d * s.x3 * ds[0],
            d * d * self.ss.origin_inplane()[1] - d * s.x3 * ds[1],
            d * self.ss.u3_origin() + d * (x12[0] * ds[0] + x12[1] * ds[1]),
        );
        let r = &s.frame.r;
        let s52 = d * d * d.sqrt();
        let s32 = d * d.sqrt();
        let vb = optimal_rod_warping(&s.jet, &self.material, big);
        let nu = self.material.poisson;
        let (a, b) = (s.jet.ddw[0], s.jet.ddw[1]);
        let (xa, xb) = (big[0], big[1]);
        let dvb = [[-nu * (-xa * a - xb * b), -nu * (xb * a - xa * b)], [-nu * (xa * b - xb * a), -nu * (-xb * b - xa * a)]];
        let d3jet = RodJet { ddw: s.jet.dddw, ..Default::default() };
        let vb3 = optimal_rod_warping(&d3jet, &self.material, big);
        let tilde = cyl - s.bar_w - (s.bar_r - i3) * p;
        let disp = s.w_delta + (r - i3) * p + Vector3::new(vb[0], vb[1], 0.0) * s52 + tilde;
        let mut g = Matrix3::zeros();
        for al in 0..2 {
            let e = i3.column(al);
            let mut col = (r - i3) * e - (s.bar_r - i3) * e;
            col[0] += s32 * dvb[0][al];
            col[1] += s32 * dvb[1][al];
            col[2] += d * ds[al];
            g.set_column(al, &col);
        }
        let e3 = Vector3::z();
        let mut col3 = (r - i3) * e3 + s.frame.dr * p - (s.bar_r - i3) * e3 - s.bar_dr * p;
        col3[0] += s52 * vb3[0] - d * ds[0];
        col3[1] += s52 * vb3[1] - d * ds[1];
        g.set_column(2, &col3);
        PointValue { displacement: disp, grad_offset: g }
    }

    pub fn rod_point(&self, x: [f64; 3]) -> PointValue {
        self.rod_point_with(&self.rod_section(x[2]), [x[0], x[1]])
    }

    /// The correction ṽ and its gradient at a rod point.
    pub fn correction(&self, x: [f64; 3]) -> (Vector3<f64>, Matrix3<f64>) {
        let d = self.delta;
        let s = self.rod_section(x[2]);
        let ds = self.ss.origin_slope();
        let p = Vector3::new(x[0], x[1], 0.0);
        let i3 = Matrix3::identity();
        let cyl = Vector3::new(
            d * d * self.ss.origin_inplane()[0] - d * x[2] * ds[0],
            d * d * self.ss.origin_inplane()[1] - d * x[2] * ds[1],
            d * self.ss.u3_origin() + d * (x[0] * ds[0] + x[1] * ds[1]),
        );
        let v = cyl - s.bar_w - (s.bar_r - i3) * p;
        let mut g = Matrix3::zeros();
        for al in 0..2 {
            let mut col: Vector3<f64> = -(s.bar_r - i3) * i3.column(al);
            col[2] += d * ds[al];
            g.set_column(al, &col);
        }
        let mut col3 = -(s.bar_r - i3) * Vector3::z() - s.bar_dr * p;
        col3[0] -= d * ds[0];
        col3[1] -= d * ds[1];
        g.set_column(2, &col3);
        (v, g)
    }

    /// The deformation at any point of the structure: the rod formula for
    /// x₃ ≥ δ, the plate formula for |x₃| < δ.
    pub fn eval(&self, x: [f64; 3]) -> Result<PointValue> {
        let d = self.delta;
        if x[2].abs() < d && self.domain.contains([x[0], x[1]]) {
            Ok(self.plate_point(x))
        } else if x[2] >= d && x[2] <= self.length && x[0] * x[0] + x[1] * x[1] <= d * d * (1.0 + 1e-12) {
            Ok(self.rod_point(x))
        } else {
            Err(Error::Geometry(format!("point {x:?} is outside the structure")))
        }
    }

    /// (∇vᵀ∇v − I)/(2δ²) at (x₁, x₂, δX₃).
    pub fn rescaled_strain_plate(&self, x: [f64; 2], big_x3: f64) -> StrainMatrix {
        let g = self.plate_point([x[0], x[1], self.delta * big_x3]).grad_offset;
        let e = (g + g.transpose() + g.transpose() * g) / (2.0 * self.delta * self.delta);
        StrainMatrix::from_matrix(&e)
    }

    /// (∇vᵀ∇v − I)/(2δ^{3/2}) at (δX₁, δX₂, x₃).
    pub fn rescaled_strain_rod(&self, big_x: [f64; 2], x3: f64) -> StrainMatrix {
        let d = self.delta;
        let g = self.rod_point([d * big_x[0], d * big_x[1], x3]).grad_offset;
        let e = (g + g.transpose() + g.transpose() * g) / (2.0 * d * d.sqrt());
        StrainMatrix::from_matrix(&e)
    }
}

/// Rescaled energies of a recovery field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryEnergy {
    pub elastic_plate: f64,
    pub elastic_rod: f64,
    pub elastic: f64,
    pub load: f64,
    /// elastic − load, or +∞ if a nonphysical gradient was met.
    pub total: f64,
    pub min_det: f64,
    pub nonphysical: bool,
}

/// J_δ(v)/δ⁵ by the rescaled quadrature.
pub fn rescaled_energy(rf: &RecoveryField, fd: &ForceData, q: &ThinQuadrature) -> Result<RecoveryEnergy> {
    let d = rf.delta;
    if (q.delta - d).abs() > 1e-15 {
        return Err(Error::InvalidArgument("quadrature and recovery field use different delta".into()));
    }
    let m = rf.material;
    let d5 = d.powi(5);
    let plate: Vec<(f64, f64, f64, bool)> = q
        .plate
        .par_iter()
        .map(|(x, w)| {
            let j = rf.ss.plate_jet(*x);
            let mut acc = (0.0, 0.0, f64::INFINITY, false);
            for (x3, wt) in &q.thickness {
                let pt = [x[0], x[1], d * x3];
                let pv = rf.plate_point_with(&j, pt);
                let det = (pv.grad_offset + Matrix3::identity()).determinant();
                acc.2 = acc.2.min(det);
                match svk_density_from_offset(&pv.grad_offset, &m) {
                    Density::Finite(e) => acc.0 += w * wt * d * e,
                    Density::Nonphysical { .. } => acc.3 = true,
                }
                let f = fd.eval_f_delta(pt, d, Region::Plate).expect("plate forces are defined everywhere");
                acc.1 += w * wt * d * (f[0] * pv.displacement[0] + f[1] * pv.displacement[1] + f[2] * pv.displacement[2]);
            }
            acc
        })
        .collect();
    let rod: Vec<(f64, f64, f64, bool)> = q
        .axial
        .par_iter()
        .filter(|a| a.active)
        .map(|a| {
            let s = rf.rod_section(a.x3);
            let mut acc = (0.0, 0.0, f64::INFINITY, false);
            for (bx, wd) in &q.disc {
                let x12 = [d * bx[0], d * bx[1]];
                let pv = rf.rod_point_with(&s, x12);
                let det = (pv.grad_offset + Matrix3::identity()).determinant();
                acc.2 = acc.2.min(det);
                let wgt = a.weight * wd * d * d;
                match svk_density_from_offset(&pv.grad_offset, &m) {
                    Density::Finite(e) => acc.0 += wgt * e,
                    Density::Nonphysical { .. } => acc.3 = true,
                }
                let f = fd.eval_f_delta([x12[0], x12[1], a.x3], d, Region::Rod).expect("active axial points lie beyond delta");
                acc.1 += wgt * (f[0] * pv.displacement[0] + f[1] * pv.displacement[1] + f[2] * pv.displacement[2]);
            }
            acc
        })
        .collect();
    let mut out = RecoveryEnergy { elastic_plate: 0.0, elastic_rod: 0.0, elastic: 0.0, load: 0.0, total: 0.0, min_det: f64::INFINITY, nonphysical: false };
    for (e, l, det, bad) in &plate {
        out.elastic_plate += e;
        out.load += l;
        out.min_det = out.min_det.min(*det);
        out.nonphysical |= bad;
    }
    for (e, l, det, bad) in &rod {
        out.elastic_rod += e;
        out.load += l;
        out.min_det = out.min_det.min(*det);
        out.nonphysical |= bad;
    }
    out.elastic_plate /= d5;
    out.elastic_rod /= d5;
    out.load /= d5;
    out.elastic = out.elastic_plate + out.elastic_rod;
    out.total = if out.nonphysical { f64::INFINITY } else { out.elastic - out.load };
    Ok(out)
}

/// Resolution of the δ-sweep quadratures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub order: usize,
    pub thickness_order: usize,
    pub disc_radial: usize,
    pub disc_angular: usize,
    pub subdivisions: usize,
    pub axial_subdivisions: usize,
    pub rotation_substeps: usize,
    /// Subdivisions of the quadrature for the limit energy of the smoothed state.
    pub limit_subdivisions: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            order: 6,
            thickness_order: 4,
            disc_radial: 4,
            disc_angular: 16,
            subdivisions: 2,
            axial_subdivisions: 2,
            rotation_substeps: 4,
            limit_subdivisions: 4,
        }
    }
}

impl SweepOptions {
    pub fn doubled(&self) -> Self {
        Self {
            order: 2 * self.order,
            thickness_order: 2 * self.thickness_order,
            disc_radial: 2 * self.disc_radial,
            disc_angular: 2 * self.disc_angular,
            rotation_substeps: 2 * self.rotation_substeps,
            ..self.clone()
        }
    }

    pub fn thin_options(&self, n: u32) -> ThinQuadratureOptions {
        ThinQuadratureOptions {
            order: self.order,
            thickness_order: self.thickness_order,
            disc_radial: self.disc_radial,
            disc_angular: self.disc_angular,
            subdivisions: self.subdivisions,
            axial_subdivisions: self.axial_subdivisions,
            plateau: Some(n),
            boundary_layers: true,
        }
    }
}

/// One row of a δ-sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub n: u32,
    pub elastic: f64,
    pub load: f64,
    pub total: f64,
    /// 𝒥 of the smoothed state.
    pub limit_energy: f64,
    pub gap: f64,
    pub min_det: f64,
}

/// 𝒥 of the plateau-smoothed state of a model solution.
pub fn smoothed_limit_energy(model: &Model, ss: &SmoothedLimitState, opts: &SweepOptions) -> f64 {
    let lq = ss.limit_quadrature(&model.plate, &model.rod, opts.order.max(model.options.plate_order), opts.limit_subdivisions);
    total_energy(ss, &model.forces, &model.material, &lq)
}

/// Rescaled recovery energies for each δ (decreasing, each ≤ 1/n).
pub fn delta_sweep(model: &Model, state: &LimitState, n: u32, deltas: &[f64], opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("delta values must be decreasing".into()));
    }
    let fields = model.fields(state);
    let ss = smooth_state(&fields, n)?;
    let limit = smoothed_limit_energy(model, &ss, opts);
    let mut rows = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let rf = build_recovery(&ss, &model.plate.domain, model.rod.length, d, &model.material, &model.rod.nodes, opts.rotation_substeps)?;
        let q = thin_quadrature_with(&model.plate, &model.rod, d, &opts.thin_options(n))?;
        let e = rescaled_energy(&rf, &model.forces, &q)?;
        log::info!("delta {d}: elastic {:.10e}, load {:.10e}, total {:.10e}, limit {limit:.10e}", e.elastic, e.load, e.total);
        rows.push(SweepRow {
            delta: d,
            n,
            elastic: e.elastic,
            load: e.load,
            total: e.total,
            limit_energy: limit,
            gap: (e.total - limit).abs(),
            min_det: e.min_det,
        });
    }
    Ok(rows)
}
