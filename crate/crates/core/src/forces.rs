//! Limit force data (f_p, f_r, g₁, g₂), the scaled 3D body force f_δ, the
//! antiderivative F_{r,3} and the small-data admissibility check.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::{gauss_legendre, PlateDomain, RodMesh};

/// A scalar force component: a closed-form expression or a sampled table.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ScalarField {
    #[default]
    Zero,
    Expr(Expr),
    /// Piecewise linear in one coordinate, constant beyond the ends.
    Table1D { xs: Vec<f64>, vs: Vec<f64> },
    /// Bilinear on a tensor grid; `vs[j * xs.len() + i]` is the value at (xs[i], ys[j]).
    Table2D { xs: Vec<f64>, ys: Vec<f64>, vs: Vec<f64> },
}

fn interp1(xs: &[f64], vs: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return vs[0];
    }
    let n = xs.len();
    if x >= xs[n - 1] {
        return vs[n - 1];
    }
    let k = xs.partition_point(|g| *g <= x).clamp(1, n - 1);
    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    vs[k - 1] + t * (vs[k] - vs[k - 1])
}

fn bracket(xs: &[f64], x: f64) -> (usize, f64) {
    let n = xs.len();
    let x = x.clamp(xs[0], xs[n - 1]);
    let k = xs.partition_point(|g| *g <= x).clamp(1, n - 1);
    (k - 1, (x - xs[k - 1]) / (xs[k] - xs[k - 1]))
}

fn check_grid(xs: &[f64], what: &str) -> Result<()> {
    if xs.len() < 2 || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Forces(format!("{what} needs at least two strictly increasing abscissae")));
    }
    Ok(())
}

impl ScalarField {
    pub fn constant(v: f64) -> Self {
        if v == 0.0 {
            ScalarField::Zero
        } else {
            ScalarField::Expr(Expr::parse(&format!("{v:?}")).expect("float literal parses"))
        }
    }

    pub fn expr(src: &str) -> Result<Self> {
        Ok(ScalarField::Expr(Expr::parse(src)?))
    }

    pub fn table1d(xs: Vec<f64>, vs: Vec<f64>) -> Result<Self> {
        check_grid(&xs, "1D table")?;
        if xs.len() != vs.len() {
            return Err(Error::Forces("1D table abscissae and values differ in length".into()));
        }
        Ok(ScalarField::Table1D { xs, vs })
    }

    pub fn table2d(xs: Vec<f64>, ys: Vec<f64>, vs: Vec<f64>) -> Result<Self> {
        check_grid(&xs, "2D table")?;
        check_grid(&ys, "2D table")?;
        if vs.len() != xs.len() * ys.len() {
            return Err(Error::Forces("2D table value count does not match the grid".into()));
        }
        Ok(ScalarField::Table2D { xs, ys, vs })
    }

    /// Reads a table from CSV. One-dimensional tables have rows `x, value`;
    /// two-dimensional tables have rows `x1, x2, value` covering a full tensor grid.
    /// Lines starting with `#` and a non-numeric header row are skipped.
    pub fn from_csv(path: &Path, dims: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_path(path)
            .map_err(|e| Error::Forces(format!("{}: {e}", path.display())))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Forces(format!("{}: {e}", path.display())))?;
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) if v.len() == dims + 1 => rows.push(v),
                Ok(v) => {
                    return Err(Error::Forces(format!(
                        "{}: row {} has {} columns, expected {}",
                        path.display(),
                        k + 1,
                        v.len(),
                        dims + 1
                    )))
                }
                Err(_) if k == 0 => continue,
                Err(e) => return Err(Error::Forces(format!("{}: row {}: {e}", path.display(), k + 1))),
            }
        }
        if dims == 1 {
            rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
            Self::table1d(rows.iter().map(|r| r[0]).collect(), rows.iter().map(|r| r[1]).collect())
        } else {
            let mut xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let mut ys: Vec<f64> = rows.iter().map(|r| r[1]).collect();
            for v in [&mut xs, &mut ys] {
                v.sort_by(f64::total_cmp);
                v.dedup();
            }
            let mut vs = vec![f64::NAN; xs.len() * ys.len()];
            for r in &rows {
                let i = xs.partition_point(|g| *g < r[0]);
                let j = ys.partition_point(|g| *g < r[1]);
                vs[j * xs.len() + i] = r[2];
            }
            if vs.iter().any(|v| v.is_nan()) {
                return Err(Error::Forces(format!("{}: 2D table does not cover a full grid", path.display())));
            }
            Self::table2d(xs, ys, vs)
        }
    }

    /// Value at a point of the plate (x₃ ignored by tables, passed to expressions).
    pub fn eval_plate(&self, x: [f64; 2]) -> f64 {
        match self {
            ScalarField::Zero => 0.0,
            ScalarField::Expr(e) => e.eval([x[0], x[1], 0.0]),
            ScalarField::Table1D { xs, vs } => interp1(xs, vs, x[0]),
            ScalarField::Table2D { xs, ys, vs } => {
                let (i, s) = bracket(xs, x[0]);
                let (j, t) = bracket(ys, x[1]);
                let n = xs.len();
                let v = |a: usize, b: usize| vs[b * n + a];
                (1.0 - s) * (1.0 - t) * v(i, j)
                    + s * (1.0 - t) * v(i + 1, j)
                    + s * t * v(i + 1, j + 1)
                    + (1.0 - s) * t * v(i, j + 1)
            }
        }
    }

    /// Value at a point x₃ of the rod axis.
    pub fn eval_rod(&self, x3: f64) -> f64 {
        match self {
            ScalarField::Zero => 0.0,
            ScalarField::Expr(e) => e.eval([0.0, 0.0, x3]),
            ScalarField::Table1D { xs, vs } => interp1(xs, vs, x3),
            ScalarField::Table2D { .. } => self.eval_plate([x3, 0.0]),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ScalarField::Zero => true,
            ScalarField::Expr(e) => e.as_constant() == Some(0.0),
            ScalarField::Table1D { vs, .. } | ScalarField::Table2D { vs, .. } => vs.iter().all(|v| *v == 0.0),
        }
    }
}

pub type VectorField = [ScalarField; 3];

fn zero_vec() -> VectorField {
    [ScalarField::Zero, ScalarField::Zero, ScalarField::Zero]
}

/// The four limit force fields and a global load multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceData {
    pub plate: VectorField,
    pub rod: VectorField,
    pub g1: VectorField,
    pub g2: VectorField,
    pub scale: f64,
}

impl Default for ForceData {
    fn default() -> Self {
        Self::zero()
    }
}

/// Which part of the structure a 3D point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Plate,
    Rod,
}

impl ForceData {
    pub fn zero() -> Self {
        Self { plate: zero_vec(), rod: zero_vec(), g1: zero_vec(), g2: zero_vec(), scale: 1.0 }
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self { scale: self.scale * t, ..self.clone() }
    }

    pub fn is_zero(&self) -> bool {
        self.scale == 0.0
            || [&self.plate, &self.rod, &self.g1, &self.g2].iter().all(|v| v.iter().all(ScalarField::is_zero))
    }

    pub fn has_rod_loads(&self) -> bool {
        self.scale != 0.0 && [&self.rod, &self.g1, &self.g2].iter().any(|v| v.iter().any(|f| !f.is_zero()))
    }

    pub fn f_p(&self, x: [f64; 2]) -> [f64; 3] {
        let s = self.scale;
        [0, 1, 2].map(|k| s * self.plate[k].eval_plate(x))
    }

    pub fn f_r(&self, x3: f64) -> [f64; 3] {
        let s = self.scale;
        [0, 1, 2].map(|k| s * self.rod[k].eval_rod(x3))
    }

    pub fn g(&self, alpha: usize, x3: f64) -> [f64; 3] {
        let s = self.scale;
        let g = if alpha == 0 { &self.g1 } else { &self.g2 };
        [0, 1, 2].map(|k| s * g[k].eval_rod(x3))
    }

    /// f_δ at the physical point x. The rod branch requires x₃ > δ.
    pub fn eval_f_delta(&self, x: [f64; 3], delta: f64, region: Region) -> Result<[f64; 3]> {
        match region {
            Region::Plate => {
                let f = self.f_p([x[0], x[1]]);
                let d2 = delta * delta;
                Ok([d2 * f[0], d2 * f[1], d2 * delta * f[2]])
            }
            Region::Rod => {
                if !(x[2] > delta) {
                    return Err(Error::InvalidArgument(format!(
                        "rod force evaluated at x3 = {} inside the junction segment (delta = {delta})",
                        x[2]
                    )));
                }
                let fr = self.f_r(x[2]);
                let g1 = self.g(0, x[2]);
                let g2 = self.g(1, x[2]);
                let s = delta.powf(2.5);
                let (c1, c2) = (x[0] / (delta * delta), x[1] / (delta * delta));
                let mut out = [0.0; 3];
                for k in 0..3 {
                    let axial = if k == 2 { fr[k] / delta.sqrt() } else { fr[k] };
                    out[k] = s * (axial + c1 * g1[k] + c2 * g2[k]);
                }
                Ok(out)
            }
        }
    }

    /// F_{r,3}(x₃) = ∫_{x₃}^{L} f_{r,3}.
    pub fn antiderivative_fr3(&self, x3: f64, length: f64) -> f64 {
        integrate(|s| self.f_r(s)[2], x3, length, 16)
    }
}

/// Composite 8-point Gauss integral of `f` over [a, b] with `panels` panels.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let g = gauss_legendre(8);
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let lo = a + h * p as f64;
        let hi = if p + 1 == panels { b } else { lo + h };
        sum += g.mapped(lo, hi).map(|(x, w)| w * f(x)).sum::<f64>();
    }
    sum
}

/// F_{r,3} tabulated at rod nodes, evaluated between nodes by a local integral.
#[derive(Debug, Clone)]
pub struct Fr3Table {
    nodes: Vec<f64>,
    at_nodes: Vec<f64>,
}

impl Fr3Table {
    pub fn new(fd: &ForceData, rod: &RodMesh) -> Self {
        let n = rod.nodes.len();
        let mut at_nodes = vec![0.0; n];
        for j in (0..n - 1).rev() {
            at_nodes[j] = at_nodes[j + 1] + integrate(|s| fd.f_r(s)[2], rod.nodes[j], rod.nodes[j + 1], 4);
        }
        Self { nodes: rod.nodes.clone(), at_nodes }
    }

    pub fn eval(&self, fd: &ForceData, x3: f64) -> f64 {
        let n = self.nodes.len();
        let k = self.nodes.partition_point(|g| *g < x3).clamp(1, n - 1);
        let b = self.nodes[k];
        self.at_nodes[k] + integrate(|s| fd.f_r(s)[2], x3, b, 4)
    }

    pub fn at_origin(&self) -> f64 {
        self.at_nodes[0]
    }
}

/// User thresholds standing in for the smallness constants on the loads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub threshold_p: f64,
    pub threshold_r: f64,
}

impl Thresholds {
    pub fn default_for(mu: f64, length: f64) -> Self {
        Self { threshold_p: 0.1 * mu, threshold_r: 0.1 * mu / length }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Admissible,
    Inadmissible,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub case1_holds: bool,
    pub min_fr3: f64,
    pub fr3_norm: f64,
    pub fp_norm: f64,
    pub thresholds: Thresholds,
    pub verdict: Verdict,
}

pub fn check_admissibility(
    fd: &ForceData,
    plate: &PlateDomain,
    length: f64,
    thresholds: Thresholds,
) -> Result<AdmissibilityReport> {
    if !(thresholds.threshold_p > 0.0 && thresholds.threshold_r > 0.0) {
        return Err(Error::InvalidArgument("admissibility thresholds must be positive".into()));
    }
    let panels = 64;
    let fr3_norm = integrate(|s| fd.f_r(s)[2].powi(2), 0.0, length, panels).sqrt();
    let [a1, a2] = plate.half_widths;
    let g = gauss_legendre(6);
    let np = 24;
    let (h1, h2) = (2.0 * a1 / np as f64, 2.0 * a2 / np as f64);
    let mut fp2 = 0.0;
    for j in 0..np {
        let y0 = -a2 + h2 * j as f64;
        for (y, wy) in g.mapped(y0, y0 + h2) {
            for i in 0..np {
                let x0 = -a1 + h1 * i as f64;
                for (x, wx) in g.mapped(x0, x0 + h1) {
                    let f = fd.f_p([x, y]);
                    fp2 += wx * wy * (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]);
                }
            }
        }
    }
    let fp_norm = fp2.sqrt();

    let mut min_fr3 = 0.0f64;
    let mut running = 0.0;
    let h = length / panels as f64;
    let gl = gauss_legendre(4);
    for p in (0..panels).rev() {
        let lo = h * p as f64;
        let hi = if p + 1 == panels { length } else { lo + h };
        for (x, _) in gl.mapped(lo, hi) {
            min_fr3 = min_fr3.min(running + integrate(|s| fd.f_r(s)[2], x, hi, 1));
        }
        running += integrate(|s| fd.f_r(s)[2], lo, hi, 1);
        min_fr3 = min_fr3.min(running);
    }
    let tiny = 1e-14 * (1.0 + fr3_norm * length.sqrt());
    let case1_holds = min_fr3 >= -tiny;

    let verdict = if !(fr3_norm.is_finite() && fp_norm.is_finite() && min_fr3.is_finite()) {
        Verdict::Indeterminate
    } else if fp_norm <= thresholds.threshold_p && (case1_holds || fr3_norm <= thresholds.threshold_r) {
        Verdict::Admissible
    } else {
        Verdict::Inadmissible
    };
    Ok(AdmissibilityReport { case1_holds, min_fr3, fr3_norm, fp_norm, thresholds, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_rod_mesh, RodDomain};

    fn with_rod3(src: &str) -> ForceData {
        let mut fd = ForceData::zero();
        fd.rod[2] = ScalarField::expr(src).unwrap();
        fd
    }

    #[test]
    fn f_delta_scalings() {
        let fd = ForceData::zero();
        assert_eq!(fd.eval_f_delta([0.1, 0.2, 0.5], 0.1, Region::Rod).unwrap(), [0.0; 3]);
        let mut fd = ForceData::zero();
        fd.plate[2] = ScalarField::constant(1.0);
        let f = fd.eval_f_delta([0.3, 0.3, 0.0], 0.1, Region::Plate).unwrap();
        assert!((f[2] - 1e-3).abs() < 1e-18 && f[0] == 0.0);
        let mut fd = ForceData::zero();
        fd.rod[0] = ScalarField::constant(1.0);
        let f = fd.eval_f_delta([0.0, 0.0, 0.5], 0.04, Region::Rod).unwrap();
        let oracle = 0.04f64 * 0.04 * 0.2;
        assert!((f[0] - oracle).abs() < 1e-18);
        assert!((oracle - 3.2e-4).abs() < 1e-18);
        assert!(fd.eval_f_delta([0.0, 0.0, 0.03], 0.04, Region::Rod).is_err());
    }

    #[test]
    fn f_delta_plate_monomial_scaling() {
        let mut fd = ForceData::zero();
        fd.plate = [ScalarField::expr("x1").unwrap(), ScalarField::expr("x2^2").unwrap(), ScalarField::constant(2.0)];
        let x = [0.7, -0.4, 0.0];
        let a = fd.eval_f_delta(x, 0.1, Region::Plate).unwrap();
        let b = fd.eval_f_delta(x, 0.05, Region::Plate).unwrap();
        assert!((a[0] / b[0] - 4.0).abs() < 1e-12);
        assert!((a[1] / b[1] - 4.0).abs() < 1e-12);
        assert!((a[2] / b[2] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn f_delta_is_linear() {
        let mut a = ForceData::zero();
        a.rod[1] = ScalarField::expr("x3").unwrap();
        a.g1[2] = ScalarField::constant(3.0);
        let x = [0.01, -0.02, 0.4];
        let fa = a.eval_f_delta(x, 0.05, Region::Rod).unwrap();
        let fb = a.scaled(-2.5).eval_f_delta(x, 0.05, Region::Rod).unwrap();
        for k in 0..3 {
            assert!((fb[k] + 2.5 * fa[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn fr3_examples() {
        assert_eq!(ForceData::zero().antiderivative_fr3(0.3, 1.0), 0.0);
        assert!((with_rod3("1").antiderivative_fr3(0.25, 1.0) - 0.75).abs() < 1e-14);
        assert!((with_rod3("x3").antiderivative_fr3(0.0, 1.0) - 0.5).abs() < 1e-14);
        assert_eq!(with_rod3("x3").antiderivative_fr3(1.0, 1.0), 0.0);
    }

    #[test]
    fn fr3_table_matches_direct_integral() {
        let fd = with_rod3("sin(3*x3) + x3^2");
        let rod = build_rod_mesh(&RodDomain::new(1.5).unwrap(), 5).unwrap();
        let t = Fr3Table::new(&fd, &rod);
        for x in [0.0f64, 0.1, 0.33, 0.9, 1.5] {
            let exact = ((3.0 * x).cos() - 4.5f64.cos()) / 3.0 + (1.5f64.powi(3) - x * x * x) / 3.0;
            assert!((t.eval(&fd, x) - exact).abs() < 1e-13);
        }
        let mut prev = f64::INFINITY;
        let fd = with_rod3("1 + x3");
        let t = Fr3Table::new(&fd, &rod);
        for k in 0..=30 {
            let v = t.eval(&fd, 1.5 * k as f64 / 30.0);
            assert!(v <= prev);
            prev = v;
        }
        assert_eq!(prev, 0.0);
    }

    #[test]
    fn admissibility_cases() {
        let d = PlateDomain::default();
        let th = Thresholds::default_for(1.0, 1.0);
        let r = check_admissibility(&ForceData::zero(), &d, 1.0, th).unwrap();
        assert_eq!(r.verdict, Verdict::Admissible);
        assert_eq!((r.fp_norm, r.fr3_norm), (0.0, 0.0));

        let r = check_admissibility(&with_rod3("-1"), &d, 1.0, th).unwrap();
        assert!(!r.case1_holds);
        assert!((r.min_fr3 + 1.0).abs() < 1e-12);
        assert_eq!(r.verdict, Verdict::Inadmissible);
        let loose = Thresholds { threshold_p: 1.0, threshold_r: 2.0 };
        assert_eq!(check_admissibility(&with_rod3("-1"), &d, 1.0, loose).unwrap().verdict, Verdict::Admissible);

        let r = check_admissibility(&with_rod3("1"), &d, 1.0, th).unwrap();
        assert!(r.case1_holds && r.fr3_norm > th.threshold_r);
        assert_eq!(r.verdict, Verdict::Admissible);

        let mut big = ForceData::zero();
        big.plate[2] = ScalarField::constant(100.0);
        let r = check_admissibility(&big, &d, 1.0, th).unwrap();
        assert_eq!(r.verdict, Verdict::Inadmissible);
        assert!((r.fp_norm - 100.0 * 4.0).abs() < 1e-9);

        let mut nan = ForceData::zero();
        nan.plate[0] = ScalarField::expr("1/(x1-x1)").unwrap();
        assert_eq!(check_admissibility(&nan, &d, 1.0, th).unwrap().verdict, Verdict::Indeterminate);
    }

    #[test]
    fn tables_interpolate() {
        let t = ScalarField::table1d(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(t.eval_rod(0.5), 1.0);
        assert_eq!(t.eval_rod(3.0), 0.0);
        let t2 = ScalarField::table2d(vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((t2.eval_plate([0.5, 0.5]) - 1.5).abs() < 1e-15);
        assert!(ScalarField::table1d(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn tables_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("rod.csv");
        std::fs::write(&p1, "x,value\n1,3\n0,1\n").unwrap();
        let t = ScalarField::from_csv(&p1, 1).unwrap();
        assert_eq!(t.eval_rod(0.5), 2.0);
        let p2 = dir.path().join("plate.csv");
        std::fs::write(&p2, "# grid\n0,0,0\n1,0,1\n0,1,2\n1,1,3\n").unwrap();
        let t = ScalarField::from_csv(&p2, 2).unwrap();
        assert!((t.eval_plate([0.5, 0.5]) - 1.5).abs() < 1e-15);
        let p3 = dir.path().join("bad.csv");
        std::fs::write(&p3, "0,0\n1,x\n").unwrap();
        assert!(ScalarField::from_csv(&p3, 1).is_err());
    }
}
