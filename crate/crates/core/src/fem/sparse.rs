//! Symmetric sparse matrices in compressed row form and a profile LDLᵀ factorization.

/// Symmetric matrix with both triangles stored in compressed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrSymmetric {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrSymmetric {
    /// Empty matrix over the union of the given cliques; each clique is a list
    /// of row indices that couple with one another.
    pub fn from_cliques<'a>(n: usize, cliques: impl Iterator<Item = &'a [usize]>) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for c in cliques {
            for &i in c {
                rows[i].extend_from_slice(c);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(r);
            row_ptr.push(cols.len());
        }
        let values = vec![0.0; cols.len()];
        Self { n, row_ptr, cols, values }
    }

    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let r = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        r.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(|p| self.values[p] * x[self.cols[p]]).sum())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, v) in out.iter_mut().enumerate() {
            *v = self.get(i, j);
        }
        out
    }

    /// Largest |A_ij − A_ji| over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                m = m.max((self.values[p] - self.get(self.cols[p], i)).abs());
            }
        }
        m
    }
}

/// Failure of an LDLᵀ factorization without pivoting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroPivot {
    pub row: usize,
}

/// LDLᵀ factors in skyline (variable band) storage.
#[derive(Debug, Clone)]
pub struct Skyline {
    n: usize,
    first: Vec<usize>,
    start: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl Skyline {
    /// Factors A + shift·I.
    pub fn factor(a: &CsrSymmetric, shift: f64) -> Result<Self, ZeroPivot> {
        let n = a.n;
        let first: Vec<usize> = (0..n)
            .map(|i| if a.row_ptr[i] < a.row_ptr[i + 1] { a.cols[a.row_ptr[i]].min(i) } else { i })
            .collect();
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + i - first[i]);
        }
        let mut lower = vec![0.0; start[n]];
        let mut diag = vec![0.0; n];
        for i in 0..n {
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.cols[p];
                if j < i {
                    lower[start[i] + j - first[i]] = a.values[p];
                } else if j == i {
                    diag[i] = a.values[p] + shift;
                }
            }
            if a.position(i, i).is_none() {
                diag[i] = shift;
            }
        }
        let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs())).max(f64::MIN_POSITIVE);
        let mut g = vec![0.0; n];
        for i in 0..n {
            let fi = first[i];
            let si = start[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = &lower[start[j] + k0 - fj..start[j] + j - fj];
                let gi = &g[k0..j];
                let s: f64 = gi.iter().zip(row_j).map(|(a, b)| a * b).sum();
                let gij = lower[si + j - fi] - s;
                g[j] = gij;
                lower[si + j - fi] = gij / diag[j];
            }
            let mut d = diag[i];
            for j in fi..i {
                d -= g[j] * lower[si + j - fi];
            }
            if d == 0.0 || !d.is_finite() || d.abs() < 1e-300 * scale {
                return Err(ZeroPivot { row: i });
            }
            diag[i] = d;
        }
        Ok(Self { n, first, start, lower, diag })
    }

    pub fn negative_pivots(&self) -> usize {
        self.diag.iter().filter(|d| **d < 0.0).count()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.diag.iter().all(|d| *d > 0.0)
    }

    pub fn min_pivot(&self) -> f64 {
        self.diag.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.lower[self.start[i]..self.start[i + 1]];
            let s: f64 = row.iter().zip(&x[fi..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in 0..n {
            x[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let xi = x[i];
            let row = &self.lower[self.start[i]..self.start[i + 1]];
            for (k, l) in row.iter().enumerate() {
                x[fi + k] -= l * xi;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn random_banded(n: usize, seed: u64, spd: bool) -> (CsrSymmetric, DMatrix<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cliques: Vec<Vec<usize>> = (0..n - 2).map(|i| vec![i, i + 1, i + 2]).collect();
        let mut a = CsrSymmetric::from_cliques(n, cliques.iter().map(|c| c.as_slice()));
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.cols[p];
                if j < i {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    dense[(i, j)] = v;
                    dense[(j, i)] = v;
                }
            }
            dense[(i, i)] = if spd { 5.0 } else { rng.gen_range(-2.0..2.0) };
        }
        for i in 0..n {
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                a.values[p] = dense[(i, a.cols[p])];
            }
        }
        (a, dense)
    }

    #[test]
    fn solve_matches_dense() {
        let (a, dense) = random_banded(30, 3, true);
        let f = Skyline::factor(&a, 0.0).unwrap();
        assert!(f.is_positive_definite());
        let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let x = f.solve(&b);
        let r = &dense * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(b);
        assert!(r.amax() < 1e-12);
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn inertia_matches_eigenvalues() {
        for seed in 0..5 {
            let (a, dense) = random_banded(20, seed, false);
            let neg = dense.clone().symmetric_eigen().eigenvalues.iter().filter(|v| **v < 0.0).count();
            if let Ok(f) = Skyline::factor(&a, 0.0) {
                assert_eq!(f.negative_pivots(), neg);
            }
            let mv = a.mul_vec(&vec![1.0; 20]);
            let dv = &dense * nalgebra::DVector::from_element(20, 1.0);
            assert!(mv.iter().zip(dv.iter()).all(|(x, y)| (x - y).abs() < 1e-14));
        }
    }

    #[test]
    fn shift_makes_definite() {
        let (a, _) = random_banded(15, 9, false);
        let f = Skyline::factor(&a, 50.0).unwrap();
        assert!(f.is_positive_definite());
    }
}
