//! Decomposition of sampled 3D fields on the thin plate Ω_δ and the thin rod
//! B_δ into elementary parts plus warpings, the seminorms 𝐆_s and 𝐝, and the
//! main/stretching split of the rod center line.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{disc_rule, gauss_legendre};
use crate::material::dist_so3;
use crate::recovery3d::RecoveryField;

pub use crate::recovery3d::rotation::skew as antisym;

/// Whether sampled values are a displacement u or a deformation v = x + u.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Displacement,
    Deformation,
}

/// Tensor sample grid of one of the two thin geometries. Plate points are
/// grouped by column (x₁, x₂) with Gauss–Legendre nodes in x₃ ∈ ]−δ, δ[; rod
/// points are grouped by section x₃ with the polar disc rule scaled to D_δ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "geometry", rename_all = "lowercase")]
pub enum SampleGrid {
    Plate { delta: f64, thickness_order: usize, columns: Vec<[f64; 2]> },
    Rod { delta: f64, disc_radial: usize, disc_angular: usize, sections: Vec<f64> },
}

impl SampleGrid {
    pub fn delta(&self) -> f64 {
        match self {
            SampleGrid::Plate { delta, .. } | SampleGrid::Rod { delta, .. } => *delta,
        }
    }

    /// Number of points per column or section.
    pub fn group_size(&self) -> usize {
        match self {
            SampleGrid::Plate { thickness_order, .. } => *thickness_order,
            SampleGrid::Rod { disc_radial, disc_angular, .. } => disc_radial * disc_angular,
        }
    }

    pub fn n_groups(&self) -> usize {
        match self {
            SampleGrid::Plate { columns, .. } => columns.len(),
            SampleGrid::Rod { sections, .. } => sections.len(),
        }
    }

    /// Physical points and weights within one group (x₃ for the plate,
    /// (x₁, x₂) for the rod).
    fn group_rule(&self) -> Vec<([f64; 2], f64)> {
        match self {
            SampleGrid::Plate { delta, thickness_order, .. } => {
                gauss_legendre(*thickness_order).mapped(-delta, *delta).map(|(t, w)| ([t, 0.0], w)).collect()
            }
            SampleGrid::Rod { delta, disc_radial, disc_angular, .. } => disc_rule(*disc_radial, *disc_angular)
                .into_iter()
                .map(|(p, w)| ([delta * p[0], delta * p[1]], delta * delta * w))
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let d = self.delta();
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {d}")));
        }
        let ok = match self {
            SampleGrid::Plate { thickness_order, .. } => *thickness_order >= 2,
            SampleGrid::Rod { disc_radial, disc_angular, .. } => *disc_radial >= 1 && *disc_angular >= 3,
        };
        if !ok {
            return Err(Error::InvalidArgument("sample grid is too coarse to determine the elementary part".into()));
        }
        Ok(())
    }

    /// All sample points and their within-group weights, group by group.
    pub fn points(&self) -> Vec<([f64; 3], f64)> {
        let rule = self.group_rule();
        let mut out = Vec::with_capacity(self.n_groups() * rule.len());
        match self {
            SampleGrid::Plate { columns, .. } => {
                for c in columns {
                    out.extend(rule.iter().map(|(t, w)| ([c[0], c[1], t[0]], *w)));
                }
            }
            SampleGrid::Rod { sections, .. } => {
                for s in sections {
                    out.extend(rule.iter().map(|(p, w)| ([p[0], p[1], *s], *w)));
                }
            }
        }
        out
    }
}

/// Values of a 3-component field at the points of a [`SampleGrid`], with
/// optional gradients and per-group (column area or section length) weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField3D {
    pub kind: FieldKind,
    pub grid: SampleGrid,
    pub values: Vec<Vector3<f64>>,
    pub gradients: Option<Vec<Matrix3<f64>>>,
    pub group_weights: Option<Vec<f64>>,
}

impl SampledField3D {
    pub fn new(kind: FieldKind, grid: SampleGrid, values: Vec<Vector3<f64>>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.n_groups() * grid.group_size() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.n_groups() * grid.group_size()
            )));
        }
        Ok(Self { kind, grid, values, gradients: None, group_weights: None })
    }

    /// Samples `f` at every grid point.
    pub fn sample(kind: FieldKind, grid: SampleGrid, f: impl Fn([f64; 3]) -> Vector3<f64> + Sync) -> Result<Self> {
        let values = grid.points().par_iter().map(|(x, _)| f(*x)).collect();
        Self::new(kind, grid, values)
    }

    /// Samples `f`, which returns the value and its gradient ∂ᵢfⱼ as a matrix
    /// with rows j and columns i.
    pub fn sample_with_gradient(
        kind: FieldKind,
        grid: SampleGrid,
        f: impl Fn([f64; 3]) -> (Vector3<f64>, Matrix3<f64>) + Sync,
    ) -> Result<Self> {
        let vg: Vec<_> = grid.points().par_iter().map(|(x, _)| f(*x)).collect();
        let mut s = Self::new(kind, grid, vg.iter().map(|p| p.0).collect())?;
        s.gradients = Some(vg.into_iter().map(|p| p.1).collect());
        Ok(s)
    }

    pub fn with_group_weights(mut self, w: Vec<f64>) -> Result<Self> {
        if w.len() != self.grid.n_groups() {
            return Err(Error::InvalidArgument(format!("{} group weights for {} groups", w.len(), self.grid.n_groups())));
        }
        self.group_weights = Some(w);
        Ok(self)
    }

    /// The displacement u at every point.
    pub fn displacement(&self) -> Vec<Vector3<f64>> {
        match self.kind {
            FieldKind::Displacement => self.values.clone(),
            FieldKind::Deformation => {
                self.grid.points().iter().zip(&self.values).map(|((x, _), v)| v - Vector3::from(*x)).collect()
            }
        }
    }

    /// The deformation v at every point.
    pub fn deformation(&self) -> Vec<Vector3<f64>> {
        match self.kind {
            FieldKind::Deformation => self.values.clone(),
            FieldKind::Displacement => {
                self.grid.points().iter().zip(&self.values).map(|((x, _), u)| u + Vector3::from(*x)).collect()
            }
        }
    }

    fn displacement_gradients(&self) -> Result<Vec<Matrix3<f64>>> {
        let g = self.gradients.as_ref().ok_or_else(|| Error::InvalidArgument("field carries no gradients".into()))?;
        Ok(match self.kind {
            FieldKind::Displacement => g.clone(),
            FieldKind::Deformation => g.iter().map(|m| m - Matrix3::identity()).collect(),
        })
    }

    fn full_weights(&self) -> Result<Vec<f64>> {
        let gw = self.group_weights.as_ref().ok_or_else(|| Error::InvalidArgument("field carries no quadrature weights".into()))?;
        let pts = self.grid.points();
        let m = self.grid.group_size();
        Ok(pts.iter().enumerate().map(|(k, (_, w))| w * gw[k / m]).collect())
    }
}

/// 𝐆_s(u) = ‖∇u + ∇uᵀ‖ in L² over the sampled domain.
pub fn seminorm_gs(f: &SampledField3D) -> Result<f64> {
    let g = f.displacement_gradients()?;
    let w = f.full_weights()?;
    Ok(g.iter().zip(&w).map(|(g, w)| w * (g + g.transpose()).norm_squared()).sum::<f64>().sqrt())
}

/// 𝐝(v) = ‖dist(∇v, SO(3))‖ in L² over the sampled domain.
pub fn seminorm_dist(f: &SampledField3D) -> Result<f64> {
    let g = f.displacement_gradients()?;
    let w = f.full_weights()?;
    Ok(g.iter().zip(&w).map(|(g, w)| w * dist_so3(&(g + Matrix3::identity())).powi(2)).sum::<f64>().sqrt())
}

/// u = 𝒰 + x₃ℛ∧𝐞₃ + ū on the plate.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedPlate {
    pub mean: Vec<Vector3<f64>>,
    /// (ℛ₁, ℛ₂) per column.
    pub rotation: Vec<[f64; 2]>,
    pub warping: Vec<Vector3<f64>>,
}

/// Elementary part 𝒰 + x₃ℛ∧𝐞₃ at height x₃.
pub fn plate_elementary(mean: &Vector3<f64>, r: [f64; 2], x3: f64) -> Vector3<f64> {
    mean + Vector3::new(x3 * r[1], -x3 * r[0], 0.0)
}

pub fn decompose_plate(f: &SampledField3D) -> Result<DecomposedPlate> {
    let SampleGrid::Plate { delta, .. } = f.grid else {
        return Err(Error::InvalidArgument("plate decomposition needs a plate grid".into()));
    };
    let u = f.displacement();
    let rule = f.grid.group_rule();
    let m = rule.len();
    let d3 = 1.5 / (delta * delta * delta);
    let mut out = DecomposedPlate { mean: Vec::new(), rotation: Vec::new(), warping: Vec::with_capacity(u.len()) };
    for col in u.chunks(m) {
        let mut mean = Vector3::zeros();
        let mut mom = Vector3::zeros();
        for (v, (t, w)) in col.iter().zip(&rule) {
            mean += v * *w;
            mom += v * (w * t[0]);
        }
        mean /= 2.0 * delta;
        let r = [-d3 * mom[1], d3 * mom[0]];
        out.warping.extend(col.iter().zip(&rule).map(|(v, (t, _))| v - plate_elementary(&mean, r, t[0])));
        out.mean.push(mean);
        out.rotation.push(r);
    }
    Ok(out)
}

/// Residuals of a plate decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateResiduals {
    /// max |u − (𝒰 + x₃ℛ∧𝐞₃ + ū)|.
    pub reconstruction: f64,
    /// max over columns of |∫ū dx₃| and |∫x₃ū_α dx₃|, divided by δ.
    pub moments: f64,
    /// max |ū|.
    pub warping_max: f64,
}

pub fn plate_residuals(f: &SampledField3D, d: &DecomposedPlate) -> PlateResiduals {
    let u = f.displacement();
    let rule = f.grid.group_rule();
    let m = rule.len();
    let delta = f.grid.delta();
    let mut res = PlateResiduals { reconstruction: 0.0, moments: 0.0, warping_max: 0.0 };
    for (c, (col, wcol)) in u.chunks(m).zip(d.warping.chunks(m)).enumerate() {
        let mut m0 = Vector3::zeros();
        let mut m1 = Vector3::zeros();
        for ((v, wb), (t, w)) in col.iter().zip(wcol).zip(&rule) {
            let rec = plate_elementary(&d.mean[c], d.rotation[c], t[0]) + wb;
            res.reconstruction = res.reconstruction.max((v - rec).amax());
            res.warping_max = res.warping_max.max(wb.amax());
            m0 += wb * *w;
            m1 += wb * (w * t[0]);
        }
        res.moments = res.moments.max(m0.amax() / delta).max(m1[0].abs().max(m1[1].abs()) / (delta * delta));
    }
    res
}

/// v = 𝒲 + x₃𝐞₃ + 𝐐(x₁𝐞₁ + x₂𝐞₂) + v̿ on the rod.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedRod {
    pub sections: Vec<f64>,
    pub center: Vec<Vector3<f64>>,
    /// Cross-section moment matrix with columns (4/(πδ⁴))∫x_α(v − mean).
    pub moments: Vec<[Vector3<f64>; 2]>,
    pub rotation: Vec<Matrix3<f64>>,
    pub warping: Vec<Vector3<f64>>,
    /// Sections whose moment matrix had rank below 2.
    pub degenerate: Vec<usize>,
}

/// Nearest rotation to B in the Frobenius sense, or `None` when rank B < 2.
pub fn procrustes(b: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = b.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    if !(s[1] > 1e-12 * s[0]) {
        return None;
    }
    let d = (u * vt).determinant().signum();
    Some(u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * vt)
}

pub fn decompose_rod(f: &SampledField3D) -> Result<DecomposedRod> {
    let SampleGrid::Rod { delta, ref sections, .. } = f.grid else {
        return Err(Error::InvalidArgument("rod decomposition needs a rod grid".into()));
    };
    let v = f.deformation();
    let rule = f.grid.group_rule();
    let m = rule.len();
    let area: f64 = rule.iter().map(|r| r.1).sum();
    let scale = 4.0 / (std::f64::consts::PI * delta.powi(4));
    let mut out = DecomposedRod {
        sections: sections.clone(),
        center: Vec::new(),
        moments: Vec::new(),
        rotation: Vec::new(),
        warping: Vec::with_capacity(v.len()),
        degenerate: Vec::new(),
    };
    let mut prev = Matrix3::identity();
    for (k, (sec, x3)) in v.chunks(m).zip(sections).enumerate() {
        let mean = sec.iter().zip(&rule).map(|(p, (_, w))| p * *w).sum::<Vector3<f64>>() / area;
        let mut b = Matrix3::zeros();
        for (p, (x, w)) in sec.iter().zip(&rule) {
            let dv = p - mean;
            for a in 0..2 {
                let mut c = b.column_mut(a);
                c += dv * (w * x[a]);
            }
        }
        let q = match procrustes(&b) {
            Some(q) => q,
            None => {
                out.degenerate.push(k);
                prev
            }
        };
        prev = q;
        let center = mean - Vector3::new(0.0, 0.0, *x3);
        out.warping.extend(sec.iter().zip(&rule).map(|(p, (x, _))| p - rod_elementary(&center, &q, *x3, *x)));
        out.moments.push([b.column(0) * scale, b.column(1) * scale]);
        out.center.push(center);
        out.rotation.push(q);
    }
    Ok(out)
}

/// Elementary deformation 𝒲 + x₃𝐞₃ + 𝐐(x₁𝐞₁ + x₂𝐞₂).
pub fn rod_elementary(center: &Vector3<f64>, q: &Matrix3<f64>, x3: f64, x12: [f64; 2]) -> Vector3<f64> {
    center + Vector3::new(0.0, 0.0, x3) + q * Vector3::new(x12[0], x12[1], 0.0)
}

/// Residuals of a rod decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RodResiduals {
    pub reconstruction: f64,
    /// max |∫_{D_δ} v̿| / |D_δ|.
    pub warping_mean: f64,
    /// max |v̿|.
    pub warping_max: f64,
    /// max ‖𝐐ᵀ𝐐 − 𝐈₃‖ and |det 𝐐 − 1|.
    pub orthogonality: f64,
}

pub fn rod_residuals(f: &SampledField3D, d: &DecomposedRod) -> RodResiduals {
    let v = f.deformation();
    let rule = f.grid.group_rule();
    let m = rule.len();
    let area: f64 = rule.iter().map(|r| r.1).sum();
    let mut res = RodResiduals { reconstruction: 0.0, warping_mean: 0.0, warping_max: 0.0, orthogonality: 0.0 };
    for (k, (sec, wsec)) in v.chunks(m).zip(d.warping.chunks(m)).enumerate() {
        let q = &d.rotation[k];
        res.orthogonality =
            res.orthogonality.max((q.transpose() * q - Matrix3::identity()).norm()).max((q.determinant() - 1.0).abs());
        let mut mean = Vector3::zeros();
        for ((p, wb), (x, w)) in sec.iter().zip(wsec).zip(&rule) {
            let rec = rod_elementary(&d.center[k], q, d.sections[k], *x) + wb;
            res.reconstruction = res.reconstruction.max((p - rec).amax());
            res.warping_max = res.warping_max.max(wb.amax());
            mean += wb * *w;
        }
        res.warping_mean = res.warping_mean.max(mean.amax() / area);
    }
    res
}

/// 𝒲 = 𝒲⁽ᵐ⁾ + 𝒲⁽ˢ⁾ at the sections, with 𝒲⁽ᵐ⁾ = 𝒲(a) + ∫_a^{x₃}(𝐐 − 𝐈₃)𝐞₃
/// anchored at the first section a (the trapezoidal rule on the sections).
#[derive(Debug, Clone, PartialEq)]
pub struct CenterlineSplit {
    pub main: Vec<Vector3<f64>>,
    pub stretch: Vec<Vector3<f64>>,
    /// d𝒲⁽ᵐ⁾/dx₃ = (𝐐 − 𝐈₃)𝐞₃ at the sections.
    pub main_slope: Vec<Vector3<f64>>,
}

pub fn split_centerline(d: &DecomposedRod) -> CenterlineSplit {
    let slope: Vec<Vector3<f64>> = d.rotation.iter().map(|q| q.column(2) - Vector3::z()).collect();
    let mut main = Vec::with_capacity(d.center.len());
    if let Some(c0) = d.center.first() {
        main.push(*c0);
        for k in 1..d.center.len() {
            let h = d.sections[k] - d.sections[k - 1];
            main.push(main[k - 1] + (slope[k - 1] + slope[k]) * (0.5 * h));
        }
    }
    let stretch = d.center.iter().zip(&main).map(|(c, m)| c - m).collect();
    CenterlineSplit { main, stretch, main_slope: slope }
}

/// max |d𝒲⁽ᵐ⁾₃/dx₃ + ½|(𝐐 − 𝐈₃)𝐞₃|²| over the sections.
pub fn dw31_residual(s: &CenterlineSplit) -> f64 {
    s.main_slope.iter().map(|g| (g[2] + 0.5 * g.norm_squared()).abs()).fold(0.0, f64::max)
}

/// Summary of one decomposition, as written to result bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "geometry", rename_all = "lowercase")]
pub enum DecompositionReport {
    Plate { delta: f64, columns: usize, residuals: PlateResiduals, seminorm_gs: Option<f64>, seminorm_dist: Option<f64> },
    Rod {
        delta: f64,
        sections: usize,
        residuals: RodResiduals,
        dw31_residual: f64,
        degenerate_sections: Vec<usize>,
        seminorm_gs: Option<f64>,
        seminorm_dist: Option<f64>,
    },
}

/// Decomposes `f` according to its grid and summarizes the residuals.
pub fn decompose(f: &SampledField3D) -> Result<DecompositionReport> {
    let gs = seminorm_gs(f).ok();
    let dist = seminorm_dist(f).ok();
    Ok(match &f.grid {
        SampleGrid::Plate { delta, columns, .. } => {
            let d = decompose_plate(f)?;
            DecompositionReport::Plate {
                delta: *delta,
                columns: columns.len(),
                residuals: plate_residuals(f, &d),
                seminorm_gs: gs,
                seminorm_dist: dist,
            }
        }
        SampleGrid::Rod { delta, sections, .. } => {
            let d = decompose_rod(f)?;
            DecompositionReport::Rod {
                delta: *delta,
                sections: sections.len(),
                residuals: rod_residuals(f, &d),
                dw31_residual: dw31_residual(&split_centerline(&d)),
                degenerate_sections: d.degenerate.clone(),
                seminorm_gs: gs,
                seminorm_dist: dist,
            }
        }
    })
}

/// The recovery field sampled on the plate Ω_δ (displacement, with gradients).
pub fn sample_recovery_plate(rf: &RecoveryField, columns: &[([f64; 2], f64)], thickness_order: usize) -> Result<SampledField3D> {
    let grid = SampleGrid::Plate { delta: rf.delta, thickness_order, columns: columns.iter().map(|c| c.0).collect() };
    SampledField3D::sample_with_gradient(FieldKind::Displacement, grid, |x| {
        let p = rf.plate_point(x);
        (p.displacement, p.grad_offset)
    })?
    .with_group_weights(columns.iter().map(|c| c.1).collect())
}

/// The recovery field sampled on the rod part x₃ ≥ δ of B_δ (displacement,
/// with gradients).
pub fn sample_recovery_rod(rf: &RecoveryField, sections: &[(f64, f64)], disc_radial: usize, disc_angular: usize) -> Result<SampledField3D> {
    if sections.iter().any(|s| s.0 < rf.delta) {
        return Err(Error::InvalidArgument("rod sections must lie in x3 >= delta".into()));
    }
    let grid = SampleGrid::Rod { delta: rf.delta, disc_radial, disc_angular, sections: sections.iter().map(|s| s.0).collect() };
    SampledField3D::sample_with_gradient(FieldKind::Displacement, grid, |x| {
        let p = rf.rod_point(x);
        (p.displacement, p.grad_offset)
    })?
    .with_group_weights(sections.iter().map(|s| s.1).collect())
}

const COMPONENTS: [&str; 9] = ["11", "12", "13", "21", "22", "23", "31", "32", "33"];

/// Writes the columnar text format: a header line with the grid shape, a line
/// of column names, then one row per sample point.
pub fn write_field(f: &SampledField3D, out: &mut impl Write) -> std::io::Result<()> {
    let kind = match f.kind {
        FieldKind::Displacement => "displacement",
        FieldKind::Deformation => "deformation",
    };
    match &f.grid {
        SampleGrid::Plate { delta, thickness_order, columns } => {
            writeln!(out, "plate groups={} thickness={thickness_order} delta={delta:?} kind={kind}", columns.len())?
        }
        SampleGrid::Rod { delta, disc_radial, disc_angular, sections } => writeln!(
            out,
            "rod groups={} radial={disc_radial} angular={disc_angular} delta={delta:?} kind={kind}",
            sections.len()
        )?,
    }
    let mut names = vec!["x1", "x2", "x3", "u1", "u2", "u3"].into_iter().map(String::from).collect::<Vec<_>>();
    if f.group_weights.is_some() {
        names.push("w".into());
    }
    if f.gradients.is_some() {
        names.extend(COMPONENTS.iter().map(|c| format!("g{c}")));
    }
    writeln!(out, "{}", names.join(" "))?;
    let w = f.full_weights().ok();
    for (k, (x, _)) in f.grid.points().iter().enumerate() {
        let v = &f.values[k];
        let mut row = vec![x[0], x[1], x[2], v[0], v[1], v[2]];
        if let Some(w) = &w {
            row.push(w[k]);
        }
        if let Some(g) = &f.gradients {
            row.extend((0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| g[k][(i, j)]));
        }
        writeln!(out, "{}", row.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" "))?;
    }
    Ok(())
}

fn header_value<'a>(fields: &'a [&str], key: &str, row: usize) -> Result<&'a str> {
    fields
        .iter()
        .find_map(|f| f.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| Error::FieldFormat { row, msg: format!("header lacks {key}=") })
}

fn header_num<T: std::str::FromStr>(fields: &[&str], key: &str, row: usize) -> Result<T> {
    let s = header_value(fields, key, row)?;
    s.parse().map_err(|_| Error::FieldFormat { row, msg: format!("bad value {s:?} for {key}") })
}

/// Reads the format written by [`write_field`]. Rows are numbered from 1
/// (the header line).
pub fn read_field(input: impl BufRead) -> Result<SampledField3D> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<Option<(usize, String)>> {
        match lines.next() {
            Some((i, Ok(l))) => Ok(Some((i, l))),
            Some((i, Err(e))) => Err(Error::FieldFormat { row: i, msg: e.to_string() }),
            None => {
                if what.is_empty() {
                    Ok(None)
                } else {
                    Err(Error::FieldFormat { row: 0, msg: format!("missing {what}") })
                }
            }
        }
    };
    let (_, header) = next("header")?.unwrap();
    let fields: Vec<&str> = header.split_whitespace().collect();
    let groups: usize = header_num(&fields, "groups", 1)?;
    let delta: f64 = header_num(&fields, "delta", 1)?;
    let kind = match header_value(&fields, "kind", 1)? {
        "displacement" => FieldKind::Displacement,
        "deformation" => FieldKind::Deformation,
        k => return Err(Error::FieldFormat { row: 1, msg: format!("unknown kind {k:?}") }),
    };
    let mut grid = match fields.first().copied() {
        Some("plate") => SampleGrid::Plate { delta, thickness_order: header_num(&fields, "thickness", 1)?, columns: Vec::new() },
        Some("rod") => SampleGrid::Rod {
            delta,
            disc_radial: header_num(&fields, "radial", 1)?,
            disc_angular: header_num(&fields, "angular", 1)?,
            sections: Vec::new(),
        },
        other => return Err(Error::FieldFormat { row: 1, msg: format!("unknown geometry {other:?}") }),
    };
    grid.validate().map_err(|e| Error::FieldFormat { row: 1, msg: e.to_string() })?;
    let (_, names) = next("column names")?.unwrap();
    let names: Vec<&str> = names.split_whitespace().collect();
    let col = |n: &str| names.iter().position(|c| *c == n);
    let base: Vec<usize> = ["x1", "x2", "x3", "u1", "u2", "u3"]
        .iter()
        .map(|n| col(n).ok_or_else(|| Error::FieldFormat { row: 2, msg: format!("missing column {n}") }))
        .collect::<Result<_>>()?;
    let wcol = col("w");
    let gcols: Option<Vec<usize>> = COMPONENTS.iter().map(|c| col(&format!("g{c}"))).collect();
    let rule = grid.group_rule();
    let m = rule.len();
    let tol = 1e-9 * delta;
    let (mut values, mut grads, mut weights) = (Vec::new(), Vec::new(), Vec::new());
    let mut anchors: Vec<[f64; 2]> = Vec::new();
    for k in 0..groups * m {
        let (row, line) = next("")?.ok_or_else(|| Error::FieldFormat { row: k + 3, msg: "unexpected end of file".into() })?;
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::FieldFormat { row, msg: format!("not a number: {t:?}") }))
            .collect::<Result<_>>()?;
        if nums.len() != names.len() {
            return Err(Error::FieldFormat { row, msg: format!("expected {} columns, found {}", names.len(), nums.len()) });
        }
        let x = [nums[base[0]], nums[base[1]], nums[base[2]]];
        let (g, j) = (k / m, k % m);
        let (anchor, local) = match grid {
            SampleGrid::Plate { .. } => ([x[0], x[1]], [x[2], 0.0]),
            SampleGrid::Rod { .. } => ([x[2], 0.0], [x[0], x[1]]),
        };
        if j == 0 {
            anchors.push(anchor);
        }
        let a = anchors[g];
        let e = rule[j].0;
        if (anchor[0] - a[0]).abs() > tol || (anchor[1] - a[1]).abs() > tol || (local[0] - e[0]).abs() > tol || (local[1] - e[1]).abs() > tol {
            return Err(Error::FieldFormat { row, msg: "point does not match the sample grid".into() });
        }
        values.push(Vector3::new(nums[base[3]], nums[base[4]], nums[base[5]]));
        if let Some(wc) = wcol {
            if j == 0 {
                weights.push(nums[wc] / rule[0].1);
            }
        }
        if let Some(gc) = &gcols {
            grads.push(Matrix3::from_row_slice(&gc.iter().map(|&c| nums[c]).collect::<Vec<_>>()));
        }
    }
    if let Some((row, l)) = next("")? {
        if !l.trim().is_empty() {
            return Err(Error::FieldFormat { row, msg: "extra rows after the declared grid".into() });
        }
    }
    match &mut grid {
        SampleGrid::Plate { columns, .. } => *columns = anchors,
        SampleGrid::Rod { sections, .. } => *sections = anchors.iter().map(|a| a[0]).collect(),
    }
    let mut f = SampledField3D::new(kind, grid, values)?;
    if gcols.is_some() {
        f.gradients = Some(grads);
    }
    if wcol.is_some() {
        f = f.with_group_weights(weights)?;
    }
    Ok(f)
}

pub fn read_field_file(path: impl AsRef<Path>) -> Result<SampledField3D> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    read_field(std::io::BufReader::new(file))
}

pub fn write_field_file(f: &SampledField3D, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    let mut w = std::io::BufWriter::new(file);
    write_field(f, &mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path.as_ref(), e))
}

/// One row of the empirical scaling study of the recovery field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub delta: f64,
    /// 𝐆_s(u, Ω_δ)/δ^{5/2}.
    pub plate_gs: f64,
    /// 𝐝(v, B_δ)/δ^{5/2}, over x₃ ≥ δ.
    pub rod_dist: f64,
}

/// Scaled seminorms of a recovery field on a tensor grid of Ω_δ and B_δ.
pub fn scaling_row(rf: &RecoveryField, plate: &[([f64; 2], f64)], thickness_order: usize, axial: &[(f64, f64)], disc: (usize, usize)) -> Result<ScalingRow> {
    let p = sample_recovery_plate(rf, plate, thickness_order)?;
    let r = sample_recovery_rod(rf, axial, disc.0, disc.1)?;
    let s = rf.delta.powf(2.5);
    Ok(ScalingRow { delta: rf.delta, plate_gs: seminorm_gs(&p)? / s, rod_dist: seminorm_dist(&r)? / s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recovery3d::rotation::exp_rotation;
    use rand::{Rng, SeedableRng};

    fn plate_grid(delta: f64) -> SampleGrid {
        let columns = (0..5).flat_map(|i| (0..4).map(move |j| [-1.0 + 0.5 * i as f64, -0.7 + 0.4 * j as f64])).collect();
        SampleGrid::Plate { delta, thickness_order: 4, columns }
    }

    fn rod_grid(delta: f64) -> SampleGrid {
        SampleGrid::Rod { delta, disc_radial: 3, disc_angular: 12, sections: (0..=10).map(|k| k as f64 * 0.1).collect() }
    }

    #[test]
    fn antisym_matches_cross_product() {
        assert_eq!(antisym(&Vector3::zeros()), Matrix3::zeros());
        let a = antisym(&Vector3::z());
        assert_eq!(a * Vector3::x(), Vector3::y());
        assert_eq!(a * Vector3::y(), -Vector3::x());
        assert_eq!(a * Vector3::z(), Vector3::zeros());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let f = Vector3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
            let x = Vector3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
            let a = antisym(&f);
            assert!((a * x - f.cross(&x)).amax() <= 1e-15);
            assert_eq!(a, -a.transpose());
        }
    }

    #[test]
    fn plate_examples() {
        let d = 0.1;
        let c = SampledField3D::sample(FieldKind::Displacement, plate_grid(d), |_| Vector3::new(1.0, -2.0, 0.5)).unwrap();
        let p = decompose_plate(&c).unwrap();
        assert!(p.mean.iter().all(|m| (m - Vector3::new(1.0, -2.0, 0.5)).amax() < 1e-14));
        assert!(p.rotation.iter().all(|r| r[0].abs() < 1e-13 && r[1].abs() < 1e-13));
        assert!(p.warping.iter().all(|w| w.amax() < 1e-14));

        let lin = SampledField3D::sample(FieldKind::Displacement, plate_grid(d), |x| Vector3::new(0.7 * x[2], 0.0, 0.0)).unwrap();
        let p = decompose_plate(&lin).unwrap();
        assert!(p.rotation.iter().all(|r| r[0].abs() < 1e-14 && (r[1] - 0.7).abs() < 1e-13));
        assert!(p.mean.iter().all(|m| m.amax() < 1e-15));
        assert!(p.warping.iter().all(|w| w.amax() < 1e-14));

        let quad = SampledField3D::sample(FieldKind::Displacement, plate_grid(d), |x| Vector3::new(x[2] * x[2], 0.0, 0.0)).unwrap();
        let p = decompose_plate(&quad).unwrap();
        assert!(p.mean.iter().all(|m| (m[0] - d * d / 3.0).abs() < 1e-16 && m[1] == 0.0));
        assert!(p.rotation.iter().all(|r| r[0] == 0.0 && r[1].abs() < 1e-14));
        let pts = quad.grid.points();
        for (w, (x, _)) in p.warping.iter().zip(&pts) {
            assert!((w[0] - (x[2] * x[2] - d * d / 3.0)).abs() < 1e-16);
        }
        let r = plate_residuals(&quad, &p);
        assert!(r.reconstruction < 1e-16 && r.moments < 1e-14, "{r:?}");
    }

    #[test]
    fn rod_examples() {
        let d = 0.08;
        let id = SampledField3D::sample(FieldKind::Deformation, rod_grid(d), |x| Vector3::from(x)).unwrap();
        let r = decompose_rod(&id).unwrap();
        assert!(r.center.iter().all(|c| c.amax() < 1e-15));
        assert!(r.rotation.iter().all(|q| (q - Matrix3::identity()).amax() < 1e-14));
        assert!(r.warping.iter().all(|w| w.amax() < 1e-15));
        for m in &r.moments {
            assert!((m[0] - Vector3::x()).amax() < 1e-13 && (m[1] - Vector3::y()).amax() < 1e-13);
        }

        let rot = exp_rotation(&Vector3::new(0.4, -1.2, 0.9), 1.0);
        let rf = SampledField3D::sample(FieldKind::Deformation, rod_grid(d), |x| rot * Vector3::from(x)).unwrap();
        let r = decompose_rod(&rf).unwrap();
        for (k, x3) in r.sections.iter().enumerate() {
            assert!((r.rotation[k] - rot).amax() < 1e-13);
            assert!((r.center[k] - (rot * Vector3::new(0.0, 0.0, *x3) - Vector3::new(0.0, 0.0, *x3))).amax() < 1e-14);
        }
        assert!(rod_residuals(&rf, &r).warping_max < 1e-13);
        assert!(r.degenerate.is_empty());
    }

    #[test]
    fn degenerate_section_falls_back() {
        let d = 0.1;
        let rot = exp_rotation(&Vector3::new(0.0, 0.3, 0.0), 1.0);
        let f = SampledField3D::sample(FieldKind::Deformation, rod_grid(d), |x| {
            if (x[2] - 0.5).abs() < 1e-12 {
                Vector3::new(0.0, 0.0, x[2])
            } else {
                rot * Vector3::from(x)
            }
        })
        .unwrap();
        let r = decompose_rod(&f).unwrap();
        assert_eq!(r.degenerate, vec![5]);
        assert_eq!(r.rotation[5], r.rotation[4]);
    }

    #[test]
    fn split_examples() {
        let d = 0.1;
        let f = SampledField3D::sample(FieldKind::Displacement, rod_grid(d), |x| Vector3::new(0.1 * x[2] * x[2], 0.0, 0.03 * x[2])).unwrap();
        let r = decompose_rod(&f).unwrap();
        let s = split_centerline(&r);
        assert!(r.rotation.iter().all(|q| (q - Matrix3::identity()).amax() < 1e-14));
        for k in 0..s.main.len() {
            assert!((s.main[k] - r.center[0]).amax() < 1e-14);
            assert!((s.stretch[k] - (r.center[k] - r.center[0])).amax() < 1e-14);
        }
        assert_eq!(s.stretch[0], Vector3::zeros());

        for th in [0.1, 0.7, 2.0] {
            let q = exp_rotation(&Vector3::x(), th);
            let g = q.column(2) - Vector3::z();
            assert!((g[2] - (th.cos() - 1.0)).abs() < 1e-15);
            assert!((g.norm_squared() - 2.0 * (1.0 - th.cos())).abs() < 1e-15);
        }
        let bent = SampledField3D::sample(FieldKind::Deformation, rod_grid(d), |x| {
            let q = exp_rotation(&Vector3::new(1.3, 0.2, 0.4), x[2]);
            q * Vector3::new(x[0], x[1], 0.0) + Vector3::new(0.0, 0.0, x[2]) + Vector3::new(0.1 * x[2].sin(), x[2] * x[2], 0.0)
        })
        .unwrap();
        let s = split_centerline(&decompose_rod(&bent).unwrap());
        assert!(dw31_residual(&s) < 1e-14);
        assert_eq!(s.stretch[0], Vector3::zeros());
    }

    #[test]
    fn seminorm_examples() {
        let d = 0.1;
        let columns: Vec<([f64; 2], f64)> = (0..4).flat_map(|i| (0..4).map(move |j| ([-0.75 + 0.5 * i as f64, -0.75 + 0.5 * j as f64], 0.25))).collect();
        let grid = SampleGrid::Plate { delta: d, thickness_order: 3, columns: columns.iter().map(|c| c.0).collect() };
        let w: Vec<f64> = columns.iter().map(|c| c.1).collect();
        let a = Vector3::new(0.3, -0.1, 0.2);
        let b = Vector3::new(-0.5, 0.4, 1.1);
        let rigid = SampledField3D::sample_with_gradient(FieldKind::Displacement, grid.clone(), |x| (a + b.cross(&Vector3::from(x)), antisym(&b)))
            .unwrap()
            .with_group_weights(w.clone())
            .unwrap();
        assert!(seminorm_gs(&rigid).unwrap() < 1e-10);
        let id = SampledField3D::sample_with_gradient(FieldKind::Deformation, grid.clone(), |x| (Vector3::from(x), Matrix3::identity()))
            .unwrap()
            .with_group_weights(w.clone())
            .unwrap();
        assert_eq!(seminorm_dist(&id).unwrap(), 0.0);
        let eps = 1e-3;
        let mut g = Matrix3::zeros();
        g[(0, 1)] = eps;
        let shear = SampledField3D::sample_with_gradient(FieldKind::Displacement, grid, |x| (Vector3::new(eps * x[1], 0.0, 0.0), g))
            .unwrap()
            .with_group_weights(w)
            .unwrap();
        let volume = 4.0 * 2.0 * d;
        assert!((seminorm_gs(&shear).unwrap() - eps * 2f64.sqrt() * volume.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn text_round_trip() {
        let d = 0.1;
        let f = SampledField3D::sample_with_gradient(FieldKind::Displacement, plate_grid(d), |x| {
            (Vector3::new(x[0].sin() * x[2], x[1], 1.0 / 3.0), Matrix3::from_fn(|i, j| (i * 3 + j) as f64 * 0.1))
        })
        .unwrap()
        .with_group_weights(vec![0.125; 20])
        .unwrap();
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        let g = read_field(&buf[..]).unwrap();
        assert_eq!(g.values, f.values);
        assert_eq!(g.gradients, f.gradients);
        assert_eq!(g.grid, f.grid);
        let (gw, fw) = (g.group_weights.unwrap(), f.group_weights.unwrap());
        assert!(gw.iter().zip(&fw).all(|(a, b)| (a - b).abs() < 1e-15));

        let r = SampledField3D::sample(FieldKind::Deformation, rod_grid(d), |x| Vector3::from(x) * 1.5).unwrap();
        let mut buf = Vec::new();
        write_field(&r, &mut buf).unwrap();
        assert_eq!(read_field(&buf[..]).unwrap(), r);
    }

    #[test]
    fn text_errors_name_the_row() {
        let f = SampledField3D::sample(FieldKind::Displacement, plate_grid(0.1), |_| Vector3::zeros()).unwrap();
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        match read_field(truncated.as_bytes()) {
            Err(Error::FieldFormat { row, .. }) => assert_eq!(row, 11),
            other => panic!("{other:?}"),
        }
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[6] = lines[6].replacen(' ', " x", 1);
        match read_field(lines.join("\n").as_bytes()) {
            Err(Error::FieldFormat { row, .. }) => assert_eq!(row, 7),
            other => panic!("{other:?}"),
        }
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[4] = "0.3 0 0 0 0 0".into();
        match read_field(lines.join("\n").as_bytes()) {
            Err(Error::FieldFormat { row, .. }) => assert_eq!(row, 5),
            other => panic!("{other:?}"),
        }
    }
}
