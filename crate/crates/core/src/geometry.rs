//! Plate and rod domains, structured meshes, and quadrature rules over the
//! mid-surface, the rod axis and the rescaled thin domains Ω = ω×]−1,1[ and
//! B = D×]0,L[.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One edge of the rectangle ω.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    /// x₁ = −a₁
    Left,
    /// x₁ = a₁
    Right,
    /// x₂ = −a₂
    Bottom,
    /// x₂ = a₂
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];

    fn index(self) -> usize {
        match self {
            Edge::Left => 0,
            Edge::Right => 1,
            Edge::Bottom => 2,
            Edge::Top => 3,
        }
    }
}

/// The rectangle ω = [−a₁, a₁]×[−a₂, a₂] with the clamped part γ₀ of its boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateDomain {
    pub half_widths: [f64; 2],
    clamped: [bool; 4],
}

impl PlateDomain {
    pub fn new(half_widths: [f64; 2], clamped: &[Edge]) -> Result<Self> {
        for (k, a) in half_widths.iter().enumerate() {
            if !(a.is_finite() && *a > 1.0) {
                return Err(Error::Geometry(format!(
                    "half width a{} = {a} must exceed 1 so that the unit disc lies inside the plate",
                    k + 1
                )));
            }
        }
        if clamped.is_empty() {
            return Err(Error::Geometry("the clamped boundary must contain at least one edge".into()));
        }
        let mut flags = [false; 4];
        for e in clamped {
            flags[e.index()] = true;
        }
        Ok(Self { half_widths, clamped: flags })
    }

    pub fn is_clamped(&self, e: Edge) -> bool {
        self.clamped[e.index()]
    }

    pub fn clamped_edges(&self) -> Vec<Edge> {
        Edge::ALL.into_iter().filter(|e| self.is_clamped(*e)).collect()
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_widths[0] * self.half_widths[1]
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        x[0].abs() <= self.half_widths[0] && x[1].abs() <= self.half_widths[1]
    }
}

impl Default for PlateDomain {
    fn default() -> Self {
        Self::new([2.0, 2.0], &Edge::ALL).expect("default plate domain is valid")
    }
}

/// The rod axis [0, L].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RodDomain {
    pub length: f64,
}

impl RodDomain {
    pub fn new(length: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Geometry(format!("rod length {length} must be positive")));
        }
        Ok(Self { length })
    }
}

impl Default for RodDomain {
    fn default() -> Self {
        Self { length: 1.0 }
    }
}

/// Checks a thickness parameter: 0 < δ < 1.
pub fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("thickness parameter δ = {delta} must lie in ]0, 1[")));
    }
    Ok(())
}

/// Structured rectangular mesh of ω. Nodes are numbered row by row,
/// `k = j·(nx+1) + i` with i along x₁.
#[derive(Debug, Clone)]
pub struct PlateMesh {
    pub domain: PlateDomain,
    pub nx: usize,
    pub ny: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub origin_node: usize,
}

pub fn build_plate_mesh(domain: &PlateDomain, resolution: [usize; 2]) -> Result<PlateMesh> {
    let [nx, ny] = resolution;
    if nx < 2 || ny < 2 {
        return Err(Error::Geometry(format!("plate resolution {nx}x{ny}: need at least 2 elements per axis")));
    }
    if nx % 2 != 0 || ny % 2 != 0 {
        return Err(Error::Geometry(format!(
            "plate resolution {nx}x{ny}: element counts must be even so that a node lies at the junction point"
        )));
    }
    let grid = |a: f64, n: usize| -> Vec<f64> {
        (0..=n)
            .map(|i| if 2 * i == n { 0.0 } else { -a + 2.0 * a * i as f64 / n as f64 })
            .collect()
    };
    let xs = grid(domain.half_widths[0], nx);
    let ys = grid(domain.half_widths[1], ny);
    let origin_node = (ny / 2) * (nx + 1) + nx / 2;
    Ok(PlateMesh { domain: domain.clone(), nx, ny, xs, ys, origin_node })
}

impl PlateMesh {
    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn n_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn node_coords(&self, k: usize) -> [f64; 2] {
        let i = k % (self.nx + 1);
        let j = k / (self.nx + 1);
        [self.xs[i], self.ys[j]]
    }

    pub fn hx(&self) -> f64 {
        2.0 * self.domain.half_widths[0] / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        2.0 * self.domain.half_widths[1] / self.ny as f64
    }

    /// Corner nodes of element `e`, counterclockwise from the lower-left corner.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (ex, ey) = (e % self.nx, e / self.nx);
        [self.node(ex, ey), self.node(ex + 1, ey), self.node(ex + 1, ey + 1), self.node(ex, ey + 1)]
    }

    /// Lower-left corner of element `e`.
    pub fn element_origin(&self, e: usize) -> [f64; 2] {
        [self.xs[e % self.nx], self.ys[e / self.nx]]
    }

    /// Element containing `x` (points on shared edges go to the lower index).
    pub fn locate(&self, x: [f64; 2]) -> Result<usize> {
        if !self.domain.contains(x) {
            return Err(Error::InvalidArgument(format!("point ({}, {}) lies outside the plate", x[0], x[1])));
        }
        let find = |v: f64, grid: &[f64]| -> usize {
            let n = grid.len() - 1;
            let idx = grid.partition_point(|g| *g < v);
            idx.saturating_sub(1).min(n - 1)
        };
        Ok(find(x[1], &self.ys) * self.nx + find(x[0], &self.xs))
    }

    /// Whether node `k` lies on a clamped edge.
    pub fn is_clamped_node(&self, k: usize) -> bool {
        let i = k % (self.nx + 1);
        let j = k / (self.nx + 1);
        let d = &self.domain;
        (i == 0 && d.is_clamped(Edge::Left))
            || (i == self.nx && d.is_clamped(Edge::Right))
            || (j == 0 && d.is_clamped(Edge::Bottom))
            || (j == self.ny && d.is_clamped(Edge::Top))
    }
}

/// Uniform partition of the rod axis.
#[derive(Debug, Clone)]
pub struct RodMesh {
    pub length: f64,
    pub nodes: Vec<f64>,
}

pub fn build_rod_mesh(domain: &RodDomain, n_elems: usize) -> Result<RodMesh> {
    if n_elems == 0 {
        return Err(Error::Geometry("rod mesh needs at least one element".into()));
    }
    let l = domain.length;
    let nodes = (0..=n_elems)
        .map(|i| if i == n_elems { l } else { l * i as f64 / n_elems as f64 })
        .collect();
    Ok(RodMesh { length: l, nodes })
}

impl RodMesh {
    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        (self.nodes[e], self.nodes[e + 1])
    }

    pub fn locate(&self, x3: f64) -> Result<usize> {
        if !(0.0..=self.length).contains(&x3) {
            return Err(Error::InvalidArgument(format!("x3 = {x3} lies outside [0, {}]", self.length)));
        }
        let idx = self.nodes.partition_point(|g| *g < x3);
        Ok(idx.saturating_sub(1).min(self.n_elements() - 1))
    }
}

/// Gauss–Legendre rule on [−1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn gauss_legendre(n: usize) -> GaussRule {
    assert!(n >= 1, "Gauss rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            x = 0.0;
            dp = 1.0;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    GaussRule { nodes, weights }
}

impl GaussRule {
    /// Points and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(move |(t, w)| (c + h * t, h * w))
    }

    /// Points and weights mapped to the reference interval [0, 1].
    pub fn unit(&self) -> Vec<(f64, f64)> {
        self.mapped(0.0, 1.0).collect()
    }
}

/// Polar tensor-product rule on the unit disc: Gauss–Legendre in r (with the
/// Jacobian r folded into the weights) times the uniform rule in θ.
pub fn disc_rule(n_radial: usize, n_angular: usize) -> Vec<([f64; 2], f64)> {
    let g = gauss_legendre(n_radial);
    let dtheta = 2.0 * std::f64::consts::PI / n_angular as f64;
    let mut out = Vec::with_capacity(n_radial * n_angular);
    for (r, w) in g.mapped(0.0, 1.0) {
        for j in 0..n_angular {
            let th = dtheta * (j as f64 + 0.5);
            out.push(([r * th.cos(), r * th.sin()], w * r * dtheta));
        }
    }
    out
}

/// Options controlling the resolution of [`ThinQuadrature`].
#[derive(Debug, Clone)]
pub struct ThinQuadratureOptions {
    /// Gauss order per in-plane and axial sub-interval.
    pub order: usize,
    /// Gauss order through the thickness X₃ ∈ ]−1, 1[.
    pub thickness_order: usize,
    pub disc_radial: usize,
    pub disc_angular: usize,
    /// Uniform splits of every in-plane sub-interval.
    pub subdivisions: usize,
    /// Uniform splits of every axial sub-interval.
    pub axial_subdivisions: usize,
    /// Plateau parameter n: adds breakpoints at multiples of 1/(2n) up to 2/n.
    pub plateau: Option<u32>,
    /// Adds breakpoints at distances δ and 2δ from clamped edges and from O.
    pub boundary_layers: bool,
}

impl ThinQuadratureOptions {
    pub fn with_order(order: usize) -> Self {
        Self {
            order,
            thickness_order: order,
            disc_radial: order,
            disc_angular: 4 * order,
            subdivisions: 1,
            axial_subdivisions: 2,
            plateau: None,
            boundary_layers: false,
        }
    }
}

/// A point of the rescaled rod axis; `active` is false inside the junction
/// exclusion ]0, δ[.
#[derive(Debug, Clone, Copy)]
pub struct AxialPoint {
    pub x3: f64,
    pub weight: f64,
    pub active: bool,
}

/// Tensor-product quadrature over Ω = ω×]−1,1[ and B = D×]0,L[.
#[derive(Debug, Clone)]
pub struct ThinQuadrature {
    pub delta: f64,
    /// In-plane points of ω with weights.
    pub plate: Vec<([f64; 2], f64)>,
    /// Thickness points X₃ ∈ ]−1, 1[ with weights.
    pub thickness: Vec<(f64, f64)>,
    /// Unit disc points (X₁, X₂) with weights.
    pub disc: Vec<([f64; 2], f64)>,
    pub axial: Vec<AxialPoint>,
}

pub fn thin_quadrature(plate: &PlateMesh, rod: &RodMesh, delta: f64, order: usize) -> Result<ThinQuadrature> {
    thin_quadrature_with(plate, rod, delta, &ThinQuadratureOptions::with_order(order))
}

fn sorted_breakpoints(mut pts: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    pts.retain(|p| *p > lo && *p < hi);
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    let tol = 1e-12 * (hi - lo);
    let mut out: Vec<f64> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.last().map_or(true, |q| p - q > tol) {
            out.push(p);
        }
    }
    *out.last_mut().expect("nonempty") = hi;
    out[0] = lo;
    out
}

fn interval_rule(breaks: &[f64], splits: usize, g: &GaussRule) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let h = (w[1] - w[0]) / splits as f64;
        for s in 0..splits {
            let a = w[0] + h * s as f64;
            let b = if s + 1 == splits { w[1] } else { a + h };
            out.extend(g.mapped(a, b));
        }
    }
    out
}

pub fn thin_quadrature_with(
    plate: &PlateMesh,
    rod: &RodMesh,
    delta: f64,
    opts: &ThinQuadratureOptions,
) -> Result<ThinQuadrature> {
    check_delta(delta)?;
    if opts.order < 2 || opts.thickness_order < 2 || opts.disc_radial < 1 || opts.disc_angular < 3 {
        return Err(Error::InvalidArgument("quadrature orders must be at least 2".into()));
    }
    let g = gauss_legendre(opts.order);
    let d = &plate.domain;
    let mut axes: Vec<Vec<(f64, f64)>> = Vec::new();
    for (axis, grid) in [&plate.xs, &plate.ys].into_iter().enumerate() {
        let a = d.half_widths[axis];
        let mut pts = grid.clone();
        if let Some(n) = opts.plateau {
            for k in 1..=4 {
                let r = k as f64 / (2.0 * n as f64);
                pts.extend([-r, r]);
            }
        }
        if opts.boundary_layers {
            pts.extend([-2.0 * delta, -delta, delta, 2.0 * delta]);
            let (lo_edge, hi_edge) = if axis == 0 { (Edge::Left, Edge::Right) } else { (Edge::Bottom, Edge::Top) };
            if d.is_clamped(lo_edge) {
                pts.extend([-a + delta, -a + 2.0 * delta]);
            }
            if d.is_clamped(hi_edge) {
                pts.extend([a - delta, a - 2.0 * delta]);
            }
        }
        axes.push(interval_rule(&sorted_breakpoints(pts, -a, a), opts.subdivisions, &g));
    }
    let mut plate_pts = Vec::with_capacity(axes[0].len() * axes[1].len());
    for &(x2, w2) in &axes[1] {
        for &(x1, w1) in &axes[0] {
            plate_pts.push(([x1, x2], w1 * w2));
        }
    }
    let thickness = gauss_legendre(opts.thickness_order).mapped(-1.0, 1.0).collect();
    let disc = disc_rule(opts.disc_radial, opts.disc_angular);

    let l = rod.length;
    let mut pts = rod.nodes.clone();
    pts.push(delta);
    if let Some(n) = opts.plateau {
        for k in 2..=4 {
            pts.push(k as f64 / (2.0 * n as f64));
        }
    }
    let axial = interval_rule(&sorted_breakpoints(pts, 0.0, l), opts.axial_subdivisions, &g)
        .into_iter()
        .map(|(x3, weight)| AxialPoint { x3, weight, active: x3 >= delta })
        .collect();
    Ok(ThinQuadrature { delta, plate: plate_pts, thickness, disc, axial })
}

impl ThinQuadrature {
    /// Quadrature measure of Ω.
    pub fn plate_measure(&self) -> f64 {
        let a: f64 = self.plate.iter().map(|p| p.1).sum();
        let t: f64 = self.thickness.iter().map(|p| p.1).sum();
        a * t
    }

    /// Quadrature measure of B with the junction exclusion applied.
    pub fn rod_measure(&self) -> f64 {
        let d: f64 = self.disc.iter().map(|p| p.1).sum();
        let a: f64 = self.axial.iter().filter(|p| p.active).map(|p| p.weight).sum();
        a * d
    }

    /// Axial points as (x₃, weight) ignoring the junction exclusion.
    pub fn axial_all(&self) -> Vec<(f64, f64)> {
        self.axial.iter().map(|p| (p.x3, p.weight)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_meshes(n: usize) -> (PlateMesh, RodMesh) {
        let p = build_plate_mesh(&PlateDomain::default(), [n, n]).unwrap();
        let r = build_rod_mesh(&RodDomain::default(), n).unwrap();
        (p, r)
    }

    #[test]
    fn plate_mesh_has_node_at_origin() {
        let (p, _) = default_meshes(4);
        assert_eq!(p.n_nodes(), 25);
        assert_eq!(p.node_coords(p.origin_node), [0.0, 0.0]);
        let d = PlateDomain::new([1.5, 1.5], &Edge::ALL).unwrap();
        let m = build_plate_mesh(&d, [2, 2]).unwrap();
        assert_eq!(m.n_nodes(), 9);
        assert_eq!(m.origin_node, 4);
        assert!(build_plate_mesh(&d, [3, 3]).is_err());
    }

    #[test]
    fn plate_domain_rejects_small_or_unclamped() {
        assert!(PlateDomain::new([1.0, 2.0], &Edge::ALL).is_err());
        assert!(PlateDomain::new([2.0, 2.0], &[]).is_err());
    }

    #[test]
    fn rod_mesh_nodes() {
        let r = build_rod_mesh(&RodDomain::new(1.0).unwrap(), 4).unwrap();
        assert_eq!(r.nodes, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let r = build_rod_mesh(&RodDomain::new(2.0).unwrap(), 1).unwrap();
        assert_eq!(r.nodes, vec![0.0, 2.0]);
        assert!(build_rod_mesh(&RodDomain::default(), 0).is_err());
    }

    #[test]
    fn refinement_nests_nodes() {
        let (c, _) = default_meshes(4);
        let (f, _) = default_meshes(8);
        for x in &c.xs {
            assert!(f.xs.iter().any(|y| (x - y).abs() < 1e-15));
        }
    }

    #[test]
    fn gauss_exactness_per_degree() {
        for n in 1..=10 {
            let g = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = g.nodes.iter().zip(&g.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-14, "n={n} deg={deg} q={q}");
            }
        }
    }

    #[test]
    fn locate_points() {
        let (p, r) = default_meshes(4);
        assert_eq!(p.locate([-2.0, -2.0]).unwrap(), 0);
        assert_eq!(p.locate([2.0, 2.0]).unwrap(), 15);
        assert_eq!(p.locate([0.1, -0.1]).unwrap(), 6);
        assert!(p.locate([2.1, 0.0]).is_err());
        assert_eq!(r.locate(0.3).unwrap(), 1);
        assert_eq!(r.locate(1.0).unwrap(), 3);
    }

    #[test]
    fn thin_quadrature_measures() {
        let (p, r) = default_meshes(4);
        let q = thin_quadrature(&p, &r, 0.1, 4).unwrap();
        assert!((q.plate_measure() - 32.0).abs() < 1e-12);
        let disc: f64 = q.disc.iter().map(|d| d.1).sum();
        assert!((disc - std::f64::consts::PI).abs() < 1e-13);
        assert!((q.rod_measure() - std::f64::consts::PI * 0.9).abs() < 1e-12);
        let x3sq: f64 = q.thickness.iter().map(|(x, w)| w * x * x).sum();
        assert!((x3sq - 2.0 / 3.0).abs() < 1e-12);
        for ap in &q.axial {
            assert_eq!(ap.active, ap.x3 >= 0.1);
            assert!(!(ap.x3 < 0.1 && ap.x3 + 1e-15 > 0.1 && ap.active));
        }
    }

    #[test]
    fn thin_quadrature_with_layers_keeps_measure() {
        let (p, r) = default_meshes(8);
        let mut o = ThinQuadratureOptions::with_order(6);
        o.plateau = Some(4);
        o.boundary_layers = true;
        o.subdivisions = 2;
        let q = thin_quadrature_with(&p, &r, 0.05, &o).unwrap();
        assert!((q.plate_measure() / 32.0 - 1.0).abs() < 1e-12);
        assert!((q.rod_measure() / (std::f64::consts::PI * 0.95) - 1.0).abs() < 1e-12);
        assert!(q.plate.iter().all(|p| p.1 > 0.0));
    }

    #[test]
    fn disc_rule_integrates_polynomials() {
        let d = disc_rule(4, 16);
        let m: f64 = d.iter().map(|(x, w)| w * x[0] * x[0]).sum();
        assert!((m - std::f64::consts::PI / 4.0).abs() < 1e-14);
        let m4: f64 = d.iter().map(|(x, w)| w * x[0].powi(2) * x[1].powi(2)).sum();
        assert!((m4 - std::f64::consts::PI / 24.0).abs() < 1e-14);
    }
}
