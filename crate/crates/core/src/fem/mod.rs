//! Finite element discretization of the limit problem: Bogner–Fox–Schmit
//! rectangles for 𝒰₃, bilinear rectangles for 𝒰₁, 𝒰₂, Hermite cubics for
//! 𝒲₁, 𝒲₂ and linear elements for 𝒬₃.
//!
//! The total energy is split as ½uᵀKu − bᵀu + M(u) where K collects the plate
//! bending stiffness and the (quadratic) rod energy including the F_{r,3}
//! term, b the linear loads, and M the quartic membrane energy.

pub mod basis;
pub mod sparse;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forces::{Fr3Table, ForceData};
use crate::geometry::{gauss_legendre, PlateMesh, RodMesh};
use crate::limit_model::{LimitFields, PlateJet, RodJet};
use crate::material::MaterialParams;

pub use basis::PlateBasis;
pub use sparse::{CsrSymmetric, Skyline, ZeroPivot};

pub const PLATE_NODE_DOFS: usize = 6;
pub const ROD_NODE_DOFS: usize = 5;
const PE: usize = 24;
const RE: usize = 10;

/// Named unknown fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    U1,
    U2,
    U3,
    W1,
    W2,
    Q3,
}

/// Global numbering of unknowns and the constrained set.
///
/// Plate node k owns `6k..6k+6` as (𝒰₁, 𝒰₂, 𝒰₃, ∂₁𝒰₃, ∂₂𝒰₃, ∂₁₂𝒰₃); rod node j
/// owns `6N_p + 5j..+5` as (𝒲₁, 𝒲₁′, 𝒲₂, 𝒲₂′, 𝒬₃).
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub n_plate_nodes: usize,
    pub n_rod_nodes: usize,
    constrained: Vec<bool>,
    free: Vec<usize>,
    free_index: Vec<Option<usize>>,
    origin_u3: usize,
}

pub fn build_dof_map(plate: &PlateMesh, rod: &RodMesh) -> Result<DofMap> {
    if plate.node_coords(plate.origin_node) != [0.0, 0.0] {
        return Err(Error::Geometry("plate mesh has no node at the junction point".into()));
    }
    let np = plate.n_nodes();
    let nr = rod.n_nodes();
    let n = PLATE_NODE_DOFS * np + ROD_NODE_DOFS * nr;
    let mut constrained = vec![false; n];
    for k in 0..np {
        if plate.is_clamped_node(k) {
            constrained[PLATE_NODE_DOFS * k..PLATE_NODE_DOFS * (k + 1)].iter_mut().for_each(|c| *c = true);
        }
    }
    let r0 = PLATE_NODE_DOFS * np;
    constrained[r0..r0 + ROD_NODE_DOFS].iter_mut().for_each(|c| *c = true);
    let free: Vec<usize> = (0..n).filter(|g| !constrained[*g]).collect();
    let mut free_index = vec![None; n];
    for (i, g) in free.iter().enumerate() {
        free_index[*g] = Some(i);
    }
    Ok(DofMap {
        n_plate_nodes: np,
        n_rod_nodes: nr,
        constrained,
        free,
        free_index,
        origin_u3: PLATE_NODE_DOFS * plate.origin_node + 2,
    })
}

impl DofMap {
    pub fn n_total(&self) -> usize {
        self.constrained.len()
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_constrained(&self) -> usize {
        self.n_total() - self.n_free()
    }

    pub fn is_constrained(&self, g: usize) -> bool {
        self.constrained[g]
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn free_index(&self, g: usize) -> Option<usize> {
        self.free_index[g]
    }

    pub fn plate_dof(&self, node: usize, k: usize) -> usize {
        PLATE_NODE_DOFS * node + k
    }

    pub fn rod_dof(&self, node: usize, k: usize) -> usize {
        PLATE_NODE_DOFS * self.n_plate_nodes + ROD_NODE_DOFS * node + k
    }

    /// Index of the value 𝒰₃(0, 0).
    pub fn origin_u3(&self) -> usize {
        self.origin_u3
    }

    /// Whether `g` belongs to a plate node.
    pub fn is_plate_dof(&self, g: usize) -> bool {
        g < PLATE_NODE_DOFS * self.n_plate_nodes
    }
}

/// Nodal values of all unknowns, constrained entries held at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitState {
    pub values: Vec<f64>,
}

impl LimitState {
    pub fn zeros(dm: &DofMap) -> Self {
        Self { values: vec![0.0; dm.n_total()] }
    }

    pub fn free_values(&self, dm: &DofMap) -> Vec<f64> {
        dm.free.iter().map(|g| self.values[*g]).collect()
    }

    pub fn from_free(dm: &DofMap, x: &[f64]) -> Self {
        let mut s = Self::zeros(dm);
        for (i, g) in dm.free.iter().enumerate() {
            s.values[*g] = x[i];
        }
        s
    }

    /// self + α·d with d indexed by free DOFs.
    pub fn step(&self, dm: &DofMap, alpha: f64, d: &[f64]) -> Self {
        let mut s = self.clone();
        for (i, g) in dm.free.iter().enumerate() {
            s.values[*g] += alpha * d[i];
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_admissible(&self, dm: &DofMap) -> bool {
        self.values.len() == dm.n_total()
            && self.values.iter().all(|v| v.is_finite())
            && (0..dm.n_total()).all(|g| !dm.is_constrained(g) || self.values[g] == 0.0)
    }
}

/// Quadrature orders of the element integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub plate_order: usize,
    pub rod_order: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { plate_order: 7, rod_order: 4 }
    }
}

/// Energy and its decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EnergyParts {
    pub plate_bending: f64,
    pub plate_membrane: f64,
    pub rod: f64,
    pub load: f64,
    pub total: f64,
    /// Sum of the magnitudes of all contributions; sets the round-off scale of `total`.
    pub magnitude: f64,
}

impl EnergyParts {
    pub fn plate(&self) -> f64 {
        self.plate_bending + self.plate_membrane
    }
}

/// Energy, reduced gradient and reduced Hessian.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub energy: f64,
    pub magnitude: f64,
    pub gradient: Vec<f64>,
    pub hessian: CsrSymmetric,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Level {
    Energy,
    Gradient,
    Hessian,
}

struct ElementOut {
    energy: f64,
    magnitude: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

/// A discretized limit problem.
#[derive(Debug, Clone)]
pub struct Model {
    pub plate: PlateMesh,
    pub rod: RodMesh,
    pub material: MaterialParams,
    pub forces: ForceData,
    pub dofs: DofMap,
    pub options: ModelOptions,
    plate_basis: Vec<(PlateBasis, f64)>,
    rod_points: Vec<(f64, f64)>,
    bending: Vec<f64>,
    rod_elastic: Vec<f64>,
    rod_f: Vec<Vec<f64>>,
    load: Vec<f64>,
    fr3: Fr3Table,
    pattern: CsrSymmetric,
}

fn membrane_matrix(m: &MaterialParams) -> [[f64; 3]; 3] {
    let c = m.plate_membrane_factor();
    let nu = m.poisson;
    [[2.0 * c, 2.0 * nu * c, 0.0], [2.0 * nu * c, 2.0 * c, 0.0], [0.0, 0.0, (1.0 - nu) * c]]
}

fn bending_matrix(m: &MaterialParams) -> [[f64; 3]; 3] {
    let c = m.plate_bending_factor();
    let nu = m.poisson;
    [[2.0 * c, 2.0 * nu * c, 0.0], [2.0 * nu * c, 2.0 * c, 0.0], [0.0, 0.0, 4.0 * (1.0 - nu) * c]]
}

impl Model {
    pub fn new(plate: PlateMesh, rod: RodMesh, material: MaterialParams, forces: ForceData) -> Result<Self> {
        Self::with_options(plate, rod, material, forces, ModelOptions::default())
    }

    pub fn with_options(
        plate: PlateMesh,
        rod: RodMesh,
        material: MaterialParams,
        forces: ForceData,
        options: ModelOptions,
    ) -> Result<Self> {
        if options.plate_order < 2 || options.rod_order < 2 {
            return Err(Error::InvalidArgument("element quadrature orders must be at least 2".into()));
        }
        let dofs = build_dof_map(&plate, &rod)?;
        let (hx, hy) = (plate.hx(), plate.hy());
        let gp = gauss_legendre(options.plate_order).unit();
        let mut plate_basis = Vec::with_capacity(gp.len() * gp.len());
        for &(eta, wy) in &gp {
            for &(xi, wx) in &gp {
                plate_basis.push((PlateBasis::eval(xi, eta, hx, hy), wx * wy * hx * hy));
            }
        }
        let db = bending_matrix(&material);
        let mut bending = vec![0.0; PE * PE];
        for (b, w) in &plate_basis {
            let k = [&b.psi[2][0], &b.psi[0][2], &b.psi[1][1]];
            for i in 0..16 {
                let gi = 6 * (i / 4) + 2 + i % 4;
                for j in 0..16 {
                    let gj = 6 * (j / 4) + 2 + j % 4;
                    let mut s = 0.0;
                    for p in 0..3 {
                        for q in 0..3 {
                            s += k[p][i] * db[p][q] * k[q][j];
                        }
                    }
                    bending[gi * PE + gj] += w * s;
                }
            }
        }

        let rod_points = gauss_legendre(options.rod_order).unit();
        let fr3 = Fr3Table::new(&forces, &rod);
        let pi = std::f64::consts::PI;
        let h_rod = rod.length / rod.n_elements() as f64;
        let mut rod_elastic = vec![0.0; RE * RE];
        let mut rod_f = Vec::with_capacity(rod.n_elements());
        for e in 0..rod.n_elements() {
            let (a, _) = rod.element_bounds(e);
            let mut kf = vec![0.0; RE * RE];
            for &(xi, w) in &rod_points {
                let w = w * h_rod;
                let hm = basis::hermite(xi, h_rod);
                let lin = basis::linear(xi, h_rod);
                let f = fr3.eval(&forces, a + xi * h_rod);
                for alpha in 0..2 {
                    let idx = [2 * alpha, 2 * alpha + 1, 5 + 2 * alpha, 6 + 2 * alpha];
                    for i in 0..4 {
                        for j in 0..4 {
                            if e == 0 {
                                rod_elastic[idx[i] * RE + idx[j]] +=
                                    w * material.young * pi / 4.0 * hm[2][i] * hm[2][j];
                            }
                            kf[idx[i] * RE + idx[j]] += w * pi * f * hm[1][i] * hm[1][j];
                        }
                    }
                }
                if e == 0 {
                    let idx = [4, 9];
                    for i in 0..2 {
                        for j in 0..2 {
                            rod_elastic[idx[i] * RE + idx[j]] += w * material.mu * pi / 2.0 * lin[1][i] * lin[1][j];
                        }
                    }
                }
            }
            rod_f.push(kf);
        }

        let mut model = Self {
            plate,
            rod,
            material,
            forces,
            dofs,
            options,
            plate_basis,
            rod_points,
            bending,
            rod_elastic,
            rod_f,
            load: Vec::new(),
            fr3,
            pattern: CsrSymmetric::from_cliques(0, std::iter::empty()),
        };
        model.load = model.build_load();
        model.pattern = model.build_pattern();
        Ok(model)
    }

    fn build_load(&self) -> Vec<f64> {
        let dm = &self.dofs;
        let mut b = vec![0.0; dm.n_total()];
        let (hx, hy) = (self.plate.hx(), self.plate.hy());
        for e in 0..self.plate.n_elements() {
            let [x0, y0] = self.plate.element_origin(e);
            let g = self.plate_element_dofs(e);
            let gp = gauss_legendre(self.options.plate_order).unit();
            let mut k = 0;
            for &(eta, _) in &gp {
                for &(xi, _) in &gp {
                    let (bas, w) = &self.plate_basis[k];
                    k += 1;
                    let f = self.forces.f_p([x0 + xi * hx, y0 + eta * hy]);
                    for c in 0..4 {
                        b[g[6 * c]] += 2.0 * w * f[0] * bas.phi[0][0][c];
                        b[g[6 * c + 1]] += 2.0 * w * f[1] * bas.phi[0][0][c];
                        for kk in 0..4 {
                            b[g[6 * c + 2 + kk]] += 2.0 * w * f[2] * bas.psi[0][0][4 * c + kk];
                        }
                    }
                }
            }
        }
        let pi = std::f64::consts::PI;
        let h = self.rod.length / self.rod.n_elements() as f64;
        for e in 0..self.rod.n_elements() {
            let (a, _) = self.rod.element_bounds(e);
            let g = self.rod_element_dofs(e);
            for &(xi, w) in &self.rod_points {
                let w = w * h;
                let x3 = a + xi * h;
                let hm = basis::hermite(xi, h);
                let lin = basis::linear(xi, h);
                let fr = self.forces.f_r(x3);
                let g1 = self.forces.g(0, x3);
                let g2 = self.forces.g(1, x3);
                let gw = [-g1[2], -g2[2]];
                for alpha in 0..2 {
                    let idx = [2 * alpha, 2 * alpha + 1, 5 + 2 * alpha, 6 + 2 * alpha];
                    for i in 0..4 {
                        b[g[idx[i]]] += w * (pi * fr[alpha] * hm[0][i] + pi / 4.0 * gw[alpha] * hm[1][i]);
                    }
                }
                let tq = g1[1] - g2[0];
                b[g[4]] += w * pi / 4.0 * tq * lin[0][0];
                b[g[9]] += w * pi / 4.0 * tq * lin[0][1];
            }
        }
        b[dm.origin_u3()] += pi * self.fr3.at_origin();
        for (g, v) in b.iter_mut().enumerate() {
            if dm.is_constrained(g) {
                *v = 0.0;
            }
        }
        b
    }

    fn build_pattern(&self) -> CsrSymmetric {
        let dm = &self.dofs;
        let free_of = |gs: &[usize]| -> Vec<usize> { gs.iter().filter_map(|g| dm.free_index(*g)).collect() };
        let mut cliques: Vec<Vec<usize>> = (0..self.plate.n_elements()).map(|e| free_of(&self.plate_element_dofs(e))).collect();
        cliques.extend((0..self.rod.n_elements()).map(|e| free_of(&self.rod_element_dofs(e))));
        CsrSymmetric::from_cliques(dm.n_free(), cliques.iter().map(|c| c.as_slice()))
    }

    pub fn plate_element_dofs(&self, e: usize) -> [usize; PE] {
        let nodes = self.plate.element_nodes(e);
        let mut out = [0; PE];
        for (c, n) in nodes.iter().enumerate() {
            for k in 0..PLATE_NODE_DOFS {
                out[6 * c + k] = self.dofs.plate_dof(*n, k);
            }
        }
        out
    }

    pub fn rod_element_dofs(&self, e: usize) -> [usize; RE] {
        let mut out = [0; RE];
        for a in 0..2 {
            for k in 0..ROD_NODE_DOFS {
                out[5 * a + k] = self.dofs.rod_dof(e + a, k);
            }
        }
        out
    }

    pub fn zero_state(&self) -> LimitState {
        LimitState::zeros(&self.dofs)
    }

    /// Linear load vector b over all DOFs.
    pub fn load_vector(&self) -> &[f64] {
        &self.load
    }

    /// F_{r,3}(x₃) as used by the model.
    pub fn fr3(&self, x3: f64) -> f64 {
        self.fr3.eval(&self.forces, x3)
    }

    fn plate_element(&self, ue: &[f64; PE], level: Level) -> (f64, f64, ElementOut) {
        let mut grad = if level >= Level::Gradient { vec![0.0; PE] } else { Vec::new() };
        let mut hess = if level == Level::Hessian { vec![0.0; PE * PE] } else { Vec::new() };
        let mut e_bend = 0.0;
        for i in 0..PE {
            let mut row = 0.0;
            for j in 0..PE {
                row += self.bending[i * PE + j] * ue[j];
            }
            e_bend += 0.5 * ue[i] * row;
            if level >= Level::Gradient {
                grad[i] = row;
            }
        }
        if level == Level::Hessian {
            hess.copy_from_slice(&self.bending);
        }
        let d = membrane_matrix(&self.material);
        let mut e_mem = 0.0;
        let wdof = |i: usize| ue[6 * (i / 4) + 2 + i % 4];
        for (b, w) in &self.plate_basis {
            let mut du = [[0.0; 2]; 2];
            for c in 0..4 {
                for a in 0..2 {
                    du[a][0] += b.phi[1][0][c] * ue[6 * c + a];
                    du[a][1] += b.phi[0][1][c] * ue[6 * c + a];
                }
            }
            let (mut w1, mut w2) = (0.0, 0.0);
            for i in 0..16 {
                w1 += b.psi[1][0][i] * wdof(i);
                w2 += b.psi[0][1][i] * wdof(i);
            }
            let z = [du[0][0] + 0.5 * w1 * w1, du[1][1] + 0.5 * w2 * w2, du[0][1] + du[1][0] + w1 * w2];
            let n = [
                d[0][0] * z[0] + d[0][1] * z[1],
                d[1][0] * z[0] + d[1][1] * z[1],
                d[2][2] * z[2],
            ];
            e_mem += w * 0.5 * (z[0] * n[0] + z[1] * n[1] + z[2] * n[2]);
            if level == Level::Energy {
                continue;
            }
            let mut bm = [[0.0; PE]; 3];
            for c in 0..4 {
                bm[0][6 * c] = b.phi[1][0][c];
                bm[2][6 * c] = b.phi[0][1][c];
                bm[1][6 * c + 1] = b.phi[0][1][c];
                bm[2][6 * c + 1] = b.phi[1][0][c];
                for k in 0..4 {
                    let i = 4 * c + k;
                    let l = 6 * c + 2 + k;
                    bm[0][l] = w1 * b.psi[1][0][i];
                    bm[1][l] = w2 * b.psi[0][1][i];
                    bm[2][l] = w2 * b.psi[1][0][i] + w1 * b.psi[0][1][i];
                }
            }
            for i in 0..PE {
                grad[i] += w * (bm[0][i] * n[0] + bm[1][i] * n[1] + bm[2][i] * n[2]);
            }
            if level != Level::Hessian {
                continue;
            }
            let mut db = [[0.0; PE]; 3];
            for p in 0..3 {
                for i in 0..PE {
                    db[p][i] = d[p][0] * bm[0][i] + d[p][1] * bm[1][i] + d[p][2] * bm[2][i];
                }
            }
            for i in 0..PE {
                let (b0, b1, b2) = (bm[0][i], bm[1][i], bm[2][i]);
                if b0 == 0.0 && b1 == 0.0 && b2 == 0.0 {
                    continue;
                }
                let row = &mut hess[i * PE..(i + 1) * PE];
                for j in 0..PE {
                    row[j] += w * (b0 * db[0][j] + b1 * db[1][j] + b2 * db[2][j]);
                }
            }
            for i in 0..16 {
                let li = 6 * (i / 4) + 2 + i % 4;
                let (p1, p2) = (b.psi[1][0][i], b.psi[0][1][i]);
                for j in 0..16 {
                    let lj = 6 * (j / 4) + 2 + j % 4;
                    let (q1, q2) = (b.psi[1][0][j], b.psi[0][1][j]);
                    hess[li * PE + lj] += w * (n[0] * p1 * q1 + n[1] * p2 * q2 + n[2] * (p1 * q2 + p2 * q1));
                }
            }
        }
        let out = ElementOut { energy: e_bend + e_mem, magnitude: e_bend.abs() + e_mem.abs(), grad, hess };
        (e_bend, e_mem, out)
    }

    fn rod_element(&self, e: usize, ue: &[f64; RE], level: Level) -> (f64, f64, ElementOut) {
        let kf = &self.rod_f[e];
        let mut grad = if level >= Level::Gradient { vec![0.0; RE] } else { Vec::new() };
        let (mut el, mut ef) = (0.0, 0.0);
        for i in 0..RE {
            let (mut r1, mut r2) = (0.0, 0.0);
            for j in 0..RE {
                r1 += self.rod_elastic[i * RE + j] * ue[j];
                r2 += kf[i * RE + j] * ue[j];
            }
            el += 0.5 * ue[i] * r1;
            ef += 0.5 * ue[i] * r2;
            if level >= Level::Gradient {
                grad[i] = r1 + r2;
            }
        }
        let hess = if level == Level::Hessian {
            self.rod_elastic.iter().zip(kf).map(|(a, b)| a + b).collect()
        } else {
            Vec::new()
        };
        (el, ef, ElementOut { energy: el + ef, magnitude: el.abs() + ef.abs(), grad, hess })
    }

    fn gather<const N: usize>(&self, s: &LimitState, g: &[usize; N]) -> [f64; N] {
        let mut out = [0.0; N];
        for (o, gi) in out.iter_mut().zip(g) {
            *o = s.values[*gi];
        }
        out
    }

    fn check_len(&self, s: &LimitState) {
        assert_eq!(s.values.len(), self.dofs.n_total(), "state length does not match the DOF map");
    }

    /// Energy decomposition of a state.
    pub fn energy_parts(&self, s: &LimitState) -> EnergyParts {
        self.check_len(s);
        let plate: Vec<(f64, f64)> = (0..self.plate.n_elements())
            .into_par_iter()
            .map(|e| {
                let ue = self.gather(s, &self.plate_element_dofs(e));
                let (b, m, _) = self.plate_element(&ue, Level::Energy);
                (b, m)
            })
            .collect();
        let rod: Vec<(f64, f64)> = (0..self.rod.n_elements())
            .map(|e| {
                let ue = self.gather(s, &self.rod_element_dofs(e));
                let (el, ef, _) = self.rod_element(e, &ue, Level::Energy);
                (el, ef)
            })
            .collect();
        let mut p = EnergyParts::default();
        for (b, m) in plate {
            p.plate_bending += b;
            p.plate_membrane += m;
            p.magnitude += b.abs() + m.abs();
        }
        let mut f_term = 0.0;
        for (el, ef) in rod {
            p.rod += el;
            f_term += ef;
            p.magnitude += el.abs() + ef.abs();
        }
        let mut lin = 0.0;
        for (b, v) in self.load.iter().zip(&s.values) {
            lin += b * v;
            p.magnitude += (b * v).abs();
        }
        p.load = lin - f_term;
        p.total = p.plate_bending + p.plate_membrane + p.rod - p.load;
        p
    }

    pub fn energy(&self, s: &LimitState) -> f64 {
        self.energy_parts(s).total
    }

    fn accumulate(&self, s: &LimitState, level: Level) -> (f64, f64, Vec<f64>, Option<CsrSymmetric>) {
        self.check_len(s);
        let dm = &self.dofs;
        let plate: Vec<([usize; PE], ElementOut)> = (0..self.plate.n_elements())
            .into_par_iter()
            .map(|e| {
                let g = self.plate_element_dofs(e);
                let ue = self.gather(s, &g);
                (g, self.plate_element(&ue, level).2)
            })
            .collect();
        let rod: Vec<([usize; RE], ElementOut)> = (0..self.rod.n_elements())
            .map(|e| {
                let g = self.rod_element_dofs(e);
                let ue = self.gather(s, &g);
                (g, self.rod_element(e, &ue, level).2)
            })
            .collect();
        let mut grad = vec![0.0; dm.n_free()];
        let mut hess = (level == Level::Hessian).then(|| self.pattern.clone());
        let mut energy = 0.0;
        let mut magnitude = 0.0;
        let mut scatter = |g: &[usize], out: &ElementOut| {
            energy += out.energy;
            magnitude += out.magnitude;
            let n = g.len();
            for i in 0..n {
                let Some(fi) = dm.free_index(g[i]) else { continue };
                grad[fi] += out.grad[i];
                if let Some(h) = hess.as_mut() {
                    for j in 0..n {
                        if let Some(fj) = dm.free_index(g[j]) {
                            let p = h.position(fi, fj).expect("pattern covers element couplings");
                            h.values[p] += out.hess[i * n + j];
                        }
                    }
                }
            }
        };
        for (g, out) in &plate {
            scatter(g, out);
        }
        for (g, out) in &rod {
            scatter(g, out);
        }
        for (i, g) in dm.free_dofs().iter().enumerate() {
            let bv = self.load[*g] * s.values[*g];
            energy -= bv;
            magnitude += bv.abs();
            grad[i] -= self.load[*g];
        }
        (energy, magnitude, grad, hess)
    }

    /// Energy and gradient with respect to the free DOFs.
    pub fn energy_gradient(&self, s: &LimitState) -> (f64, Vec<f64>) {
        let (e, _, g, _) = self.accumulate(s, Level::Gradient);
        (e, g)
    }

    pub fn gradient(&self, s: &LimitState) -> Vec<f64> {
        self.energy_gradient(s).1
    }

    pub fn assemble(&self, s: &LimitState) -> Assembly {
        let (energy, magnitude, gradient, hessian) = self.accumulate(s, Level::Hessian);
        Assembly { energy, magnitude, gradient, hessian: hessian.expect("hessian requested") }
    }

    /// Reduced Hessian pattern (values zero).
    pub fn hessian_pattern(&self) -> &CsrSymmetric {
        &self.pattern
    }

    /// Evaluates a field with its derivatives: plate 𝒰_α → (v, ∂₁, ∂₂);
    /// 𝒰₃ → (v, ∂₁, ∂₂, ∂₁₁, ∂₂₂, ∂₁₂); rod 𝒲_α → (v, ′, ″, ‴); 𝒬₃ → (v, ′).
    pub fn interpolate(&self, s: &LimitState, field: Field, point: &[f64]) -> Result<Vec<f64>> {
        match field {
            Field::U1 | Field::U2 | Field::U3 => {
                if point.len() != 2 {
                    return Err(Error::InvalidArgument("plate fields take a 2D point".into()));
                }
                let j = self.plate_jet(s, [point[0], point[1]])?;
                Ok(match field {
                    Field::U1 => vec![j.u[0], j.du[0][0], j.du[0][1]],
                    Field::U2 => vec![j.u[1], j.du[1][0], j.du[1][1]],
                    _ => vec![j.w, j.dw[0], j.dw[1], j.ddw[0][0], j.ddw[1][1], j.ddw[0][1]],
                })
            }
            _ => {
                if point.len() != 1 {
                    return Err(Error::InvalidArgument("rod fields take a scalar abscissa".into()));
                }
                let j = self.rod_jet(s, point[0])?;
                Ok(match field {
                    Field::W1 => vec![j.w[0], j.dw[0], j.ddw[0], j.dddw[0]],
                    Field::W2 => vec![j.w[1], j.dw[1], j.ddw[1], j.dddw[1]],
                    _ => vec![j.q3, j.dq3],
                })
            }
        }
    }

    pub fn plate_jet(&self, s: &LimitState, x: [f64; 2]) -> Result<PlateJet> {
        let e = self.plate.locate(x)?;
        Ok(self.plate_jet_in(s, e, x))
    }

    fn plate_jet_in(&self, s: &LimitState, e: usize, x: [f64; 2]) -> PlateJet {
        let [x0, y0] = self.plate.element_origin(e);
        let (hx, hy) = (self.plate.hx(), self.plate.hy());
        let b = PlateBasis::eval((x[0] - x0) / hx, (x[1] - y0) / hy, hx, hy);
        let ue = self.gather(s, &self.plate_element_dofs(e));
        plate_jet_from(&b, &ue)
    }

    pub fn rod_jet(&self, s: &LimitState, x3: f64) -> Result<RodJet> {
        let e = self.rod.locate(x3)?;
        let (a, b) = self.rod.element_bounds(e);
        let ue = self.gather(s, &self.rod_element_dofs(e));
        Ok(rod_jet_from((x3 - a) / (b - a), b - a, &ue))
    }

    /// Borrowed view of a state as continuous fields.
    pub fn fields<'a>(&'a self, s: &'a LimitState) -> FeFields<'a> {
        FeFields { model: self, state: s }
    }

    /// Plate-element Gauss points in physical coordinates with weights.
    pub fn plate_quadrature(&self) -> Vec<([f64; 2], f64)> {
        let gp = gauss_legendre(self.options.plate_order).unit();
        let (hx, hy) = (self.plate.hx(), self.plate.hy());
        let mut out = Vec::with_capacity(self.plate.n_elements() * gp.len() * gp.len());
        for e in 0..self.plate.n_elements() {
            let [x0, y0] = self.plate.element_origin(e);
            for &(eta, wy) in &gp {
                for &(xi, wx) in &gp {
                    out.push(([x0 + xi * hx, y0 + eta * hy], wx * wy * hx * hy));
                }
            }
        }
        out
    }

    /// Rod-element Gauss points with weights.
    pub fn rod_quadrature(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for e in 0..self.rod.n_elements() {
            let (a, b) = self.rod.element_bounds(e);
            out.extend(self.rod_points.iter().map(|(xi, w)| (a + xi * (b - a), w * (b - a))));
        }
        out
    }
}

pub(crate) fn plate_jet_from(b: &PlateBasis, ue: &[f64; PE]) -> PlateJet {
    let mut j = PlateJet::default();
    for c in 0..4 {
        for a in 0..2 {
            let v = ue[6 * c + a];
            j.u[a] += b.phi[0][0][c] * v;
            j.du[a][0] += b.phi[1][0][c] * v;
            j.du[a][1] += b.phi[0][1][c] * v;
            let m = b.phi[1][1][c] * v;
            j.ddu[a][0][1] += m;
            j.ddu[a][1][0] += m;
        }
    }
    for i in 0..16 {
        let v = ue[6 * (i / 4) + 2 + i % 4];
        if v == 0.0 {
            continue;
        }
        j.w += b.psi[0][0][i] * v;
        j.dw[0] += b.psi[1][0][i] * v;
        j.dw[1] += b.psi[0][1][i] * v;
        for p in 0..2 {
            for q in 0..2 {
                let (n1, n2) = ((p == 0) as usize + (q == 0) as usize, (p == 1) as usize + (q == 1) as usize);
                j.ddw[p][q] += b.psi[n1][n2][i] * v;
                for r in 0..2 {
                    let n1 = n1 + (r == 0) as usize;
                    let n2 = n2 + (r == 1) as usize;
                    j.dddw[p][q][r] += b.psi[n1][n2][i] * v;
                }
            }
        }
    }
    j
}

pub(crate) fn rod_jet_from(xi: f64, h: f64, ue: &[f64; RE]) -> RodJet {
    let hm = basis::hermite(xi, h);
    let lin = basis::linear(xi, h);
    let mut j = RodJet::default();
    for alpha in 0..2 {
        let d = [ue[2 * alpha], ue[2 * alpha + 1], ue[5 + 2 * alpha], ue[6 + 2 * alpha]];
        let ev = |k: usize| (0..4).map(|i| hm[k][i] * d[i]).sum::<f64>();
        j.w[alpha] = ev(0);
        j.dw[alpha] = ev(1);
        j.ddw[alpha] = ev(2);
        j.dddw[alpha] = ev(3);
    }
    j.q3 = lin[0][0] * ue[4] + lin[0][1] * ue[9];
    j.dq3 = lin[1][0] * ue[4] + lin[1][1] * ue[9];
    j
}

/// A finite element state viewed as continuous limit fields. Points outside
/// the domains are clamped onto them.
#[derive(Clone, Copy)]
pub struct FeFields<'a> {
    pub model: &'a Model,
    pub state: &'a LimitState,
}

impl LimitFields for FeFields<'_> {
    fn plate_jet(&self, x: [f64; 2]) -> PlateJet {
        let [a1, a2] = self.model.plate.domain.half_widths;
        let x = [x[0].clamp(-a1, a1), x[1].clamp(-a2, a2)];
        let e = self.model.plate.locate(x).expect("clamped point lies in the plate");
        self.model.plate_jet_in(self.state, e, x)
    }

    fn rod_jet(&self, x3: f64) -> RodJet {
        let x3 = x3.clamp(0.0, self.model.rod.length);
        self.model.rod_jet(self.state, x3).expect("clamped abscissa lies on the rod")
    }

    fn u3_origin(&self) -> f64 {
        self.state.values[self.model.dofs.origin_u3()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forces::ScalarField;
    use crate::geometry::{build_plate_mesh, build_rod_mesh, Edge, PlateDomain, RodDomain};
    use rand::{Rng, SeedableRng};

    fn model(n: usize, m: usize, fd: ForceData) -> Model {
        let p = build_plate_mesh(&PlateDomain::default(), [n, n]).unwrap();
        let r = build_rod_mesh(&RodDomain::default(), m).unwrap();
        Model::new(p, r, MaterialParams::default(), fd).unwrap()
    }

    fn random_state(m: &Model, seed: u64, amp: f64) -> LimitState {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..m.dofs.n_free()).map(|_| rng.gen_range(-amp..amp)).collect();
        LimitState::from_free(&m.dofs, &x)
    }

    #[test]
    fn dof_counts() {
        let d = PlateDomain::new([1.5, 1.5], &Edge::ALL).unwrap();
        let p = build_plate_mesh(&d, [2, 2]).unwrap();
        let r = build_rod_mesh(&RodDomain::default(), 2).unwrap();
        let dm = build_dof_map(&p, &r).unwrap();
        assert_eq!(dm.n_total(), 69);
        let plate_constrained = (0..54).filter(|g| dm.is_constrained(*g)).count();
        assert_eq!(plate_constrained, 48);
        let rod_constrained = (54..69).filter(|g| dm.is_constrained(*g)).count();
        assert_eq!(rod_constrained, 5);
        assert!((0..5).all(|k| dm.is_constrained(dm.rod_dof(0, k))));
        assert_eq!(dm.origin_u3(), 6 * 4 + 2);
        assert!(!dm.is_constrained(dm.origin_u3()));
    }

    #[test]
    fn partial_clamping_leaves_free_edges() {
        let d = PlateDomain::new([2.0, 2.0], &[Edge::Left]).unwrap();
        let p = build_plate_mesh(&d, [4, 4]).unwrap();
        let r = build_rod_mesh(&RodDomain::default(), 2).unwrap();
        let dm = build_dof_map(&p, &r).unwrap();
        assert_eq!(dm.n_constrained(), 5 * 6 + 5);
    }

    #[test]
    fn zero_state_zero_forces() {
        let m = model(4, 2, ForceData::zero());
        let s = m.zero_state();
        let a = m.assemble(&s);
        assert_eq!(a.energy, 0.0);
        assert!(a.gradient.iter().all(|g| *g == 0.0));
        let amax = a.hessian.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(a.hessian.asymmetry() <= 1e-14 * amax);
        assert!(Skyline::factor(&a.hessian, 0.0).unwrap().is_positive_definite());
    }

    #[test]
    fn gradient_matches_differences() {
        let mut fd = ForceData::zero();
        fd.plate[2] = ScalarField::expr("0.3 + x1").unwrap();
        fd.rod = [ScalarField::constant(0.2), ScalarField::expr("x3").unwrap(), ScalarField::expr("1 - 2*x3").unwrap()];
        fd.g1[1] = ScalarField::constant(0.5);
        fd.g2[2] = ScalarField::expr("x3^2").unwrap();
        let m = model(4, 3, fd);
        let s = random_state(&m, 1, 0.3);
        let a = m.assemble(&s);
        let x = s.free_values(&m.dofs);
        let h = 1e-6;
        let mut max_err = 0.0f64;
        for i in 0..x.len() {
            let mut d = vec![0.0; x.len()];
            d[i] = 1.0;
            let ep = m.energy(&s.step(&m.dofs, h, &d));
            let em = m.energy(&s.step(&m.dofs, -h, &d));
            let fd = (ep - em) / (2.0 * h);
            max_err = max_err.max((fd - a.gradient[i]).abs() / (1.0 + a.gradient[i].abs()));
            let gp = m.gradient(&s.step(&m.dofs, h, &d));
            let gm = m.gradient(&s.step(&m.dofs, -h, &d));
            for j in 0..x.len() {
                let hd = (gp[j] - gm[j]) / (2.0 * h);
                let hv = a.hessian.get(j, i);
                assert!((hd - hv).abs() <= 1e-5 * (1.0 + hv.abs()), "H[{j},{i}] {hv} vs {hd}");
            }
        }
        assert!(max_err < 1e-6, "{max_err}");
        assert!((a.energy - m.energy(&s)).abs() < 1e-12 * (1.0 + a.energy.abs()));
    }

    #[test]
    fn linear_plate_gradient_at_zero_is_minus_load() {
        let mut fd = ForceData::zero();
        fd.plate = [ScalarField::constant(0.1), ScalarField::expr("x2").unwrap(), ScalarField::constant(1.0)];
        let m = model(4, 2, fd);
        let g = m.gradient(&m.zero_state());
        for (i, gi) in m.dofs.free_dofs().iter().enumerate() {
            assert_eq!(g[i], -m.load_vector()[*gi]);
        }
    }

    #[test]
    fn rod_examples() {
        let m = model(2, 4, ForceData::zero());
        let mut s = m.zero_state();
        for j in 0..m.rod.n_nodes() {
            let x = m.rod.nodes[j];
            s.values[m.dofs.rod_dof(j, 0)] = x * x;
            s.values[m.dofs.rod_dof(j, 1)] = 2.0 * x;
        }
        s.values[m.dofs.rod_dof(0, 0)] = 0.0;
        s.values[m.dofs.rod_dof(0, 1)] = 0.0;
        let p = m.energy_parts(&s);
        assert!((p.rod - std::f64::consts::PI / 2.0).abs() < 1e-12);
        let cubic = m.interpolate(&s, Field::W1, &[0.37]).unwrap();
        assert!((cubic[0] - 0.37 * 0.37).abs() < 1e-13 && (cubic[1] - 0.74).abs() < 1e-13);

        let mut s = m.zero_state();
        let mu = m.material.mu;
        for j in 0..m.rod.n_nodes() {
            s.values[m.dofs.rod_dof(j, 4)] = m.rod.nodes[j];
        }
        let p = m.energy_parts(&s);
        assert!((p.rod - mu * std::f64::consts::PI / 4.0).abs() < 1e-13);
    }

    #[test]
    fn plate_continuity_across_elements() {
        let m = model(4, 2, ForceData::zero());
        let s = random_state(&m, 4, 1.0);
        let e_left = m.plate.locate([-0.1, 0.3]).unwrap();
        let e_right = m.plate.locate([0.1, 0.3]).unwrap();
        let a = m.plate_jet_in(&s, e_left, [0.0, 0.3]);
        let b = m.plate_jet_in(&s, e_right, [0.0, 0.3]);
        assert!((a.w - b.w).abs() < 1e-12);
        assert!((a.dw[0] - b.dw[0]).abs() < 1e-12 && (a.dw[1] - b.dw[1]).abs() < 1e-12);
        assert!((a.u[0] - b.u[0]).abs() < 1e-12);
        assert!(m.interpolate(&s, Field::U3, &[3.0, 0.0]).is_err());
    }

    #[test]
    fn rigid_motions_in_kernel_without_constraints() {
        let m = model(4, 2, ForceData::zero());
        let mut s = m.zero_state();
        for k in 0..m.plate.n_nodes() {
            let [x, y] = m.plate.node_coords(k);
            s.values[6 * k] = 0.3 - 0.2 * y;
            s.values[6 * k + 1] = -0.1 + 0.2 * x;
        }
        let mut lin = s.clone();
        lin.values.iter_mut().for_each(|v| *v *= 1e-4);
        let e = m.energy_parts(&lin);
        assert!(e.plate() < 1e-20);
    }
}
