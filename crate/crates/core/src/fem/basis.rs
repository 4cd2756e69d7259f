//! Reference shape functions on uniform elements.

/// Cubic Hermite functions on an element of length `h` at ξ ∈ [0, 1].
/// `out[d][k]` is the d-th physical derivative of function k, ordered
/// (value at 0, slope at 0, value at 1, slope at 1).
pub fn hermite(xi: f64, h: f64) -> [[f64; 4]; 4] {
    let (x, x2, x3) = (xi, xi * xi, xi * xi * xi);
    let (h2, h3) = (h * h, h * h * h);
    [
        [1.0 - 3.0 * x2 + 2.0 * x3, h * (x - 2.0 * x2 + x3), 3.0 * x2 - 2.0 * x3, h * (x3 - x2)],
        [(6.0 * x2 - 6.0 * x) / h, 1.0 - 4.0 * x + 3.0 * x2, (6.0 * x - 6.0 * x2) / h, 3.0 * x2 - 2.0 * x],
        [(12.0 * x - 6.0) / h2, (6.0 * x - 4.0) / h, (6.0 - 12.0 * x) / h2, (6.0 * x - 2.0) / h],
        [12.0 / h3, 6.0 / h2, -12.0 / h3, 6.0 / h2],
    ]
}

/// Linear Lagrange functions: `out[d][k]`, d ∈ {0, 1}.
pub fn linear(xi: f64, h: f64) -> [[f64; 2]; 2] {
    [[1.0 - xi, xi], [-1.0 / h, 1.0 / h]]
}

/// Corner (i, j) offsets of a rectangle, counterclockwise from the lower left.
pub const CORNERS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

/// Bilinear and Bogner–Fox–Schmit shape functions at one point of a rectangle.
#[derive(Debug, Clone)]
pub struct PlateBasis {
    /// Bilinear: `phi[p][q][a]` = ∂₁ᵖ∂₂ᵠ of the function of corner a, p, q ≤ 1.
    pub phi: [[[f64; 4]; 2]; 2],
    /// BFS: `psi[p][q][4a + k]` = ∂₁ᵖ∂₂ᵠ, p, q ≤ 3, with k ∈ (w, ∂₁w, ∂₂w, ∂₁₂w).
    pub psi: [[[f64; 16]; 4]; 4],
}

impl PlateBasis {
    pub fn eval(xi: f64, eta: f64, hx: f64, hy: f64) -> Self {
        let hxv = hermite(xi, hx);
        let hyv = hermite(eta, hy);
        let lx = linear(xi, hx);
        let ly = linear(eta, hy);
        let mut phi = [[[0.0; 4]; 2]; 2];
        let mut psi = [[[0.0; 16]; 4]; 4];
        for (a, &(ia, ib)) in CORNERS.iter().enumerate() {
            for p in 0..2 {
                for q in 0..2 {
                    phi[p][q][a] = lx[p][ia] * ly[q][ib];
                }
            }
            for k in 0..4 {
                let fx = 2 * ia + (k & 1);
                let fy = 2 * ib + (k >> 1);
                for p in 0..4 {
                    for q in 0..4 {
                        psi[p][q][4 * a + k] = hxv[p][fx] * hyv[q][fy];
                    }
                }
            }
        }
        Self { phi, psi }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_nodal_values() {
        let h = 0.7;
        let a = hermite(0.0, h);
        let b = hermite(1.0, h);
        let expect_a = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]];
        let expect_b = [[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        for d in 0..2 {
            for k in 0..4 {
                assert!((a[d][k] - expect_a[d][k]).abs() < 1e-15);
                assert!((b[d][k] - expect_b[d][k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn hermite_derivatives_match_differences() {
        let h = 1.3;
        let eps = 1e-6;
        for xi in [0.1, 0.45, 0.8] {
            let p = hermite(xi + eps, h);
            let m = hermite(xi - eps, h);
            let c = hermite(xi, h);
            for d in 0..3 {
                for k in 0..4 {
                    let fd = (p[d][k] - m[d][k]) / (2.0 * eps * h);
                    assert!((fd - c[d + 1][k]).abs() < 1e-6 * (1.0 + c[d + 1][k].abs()));
                }
            }
        }
    }

    #[test]
    fn bfs_reproduces_bicubic() {
        let (hx, hy) = (0.5, 0.8);
        let f = |x: f64, y: f64| [x * x * x * y * y - 2.0 * x * y * y * y + x - 0.3, 3.0 * x * x * y * y - 2.0 * y * y * y + 1.0, 2.0 * x * x * x * y - 6.0 * x * y * y, 6.0 * x * x * y - 6.0 * y * y];
        let mut dofs = [0.0; 16];
        for (a, &(ia, ib)) in CORNERS.iter().enumerate() {
            let v = f(ia as f64 * hx, ib as f64 * hy);
            dofs[4 * a..4 * a + 4].copy_from_slice(&v);
        }
        let (xi, eta) = (0.3, 0.65);
        let (x, y) = (xi * hx, eta * hy);
        let b = PlateBasis::eval(xi, eta, hx, hy);
        let val: f64 = (0..16).map(|i| b.psi[0][0][i] * dofs[i]).sum();
        assert!((val - f(x, y)[0]).abs() < 1e-14);
        let d12: f64 = (0..16).map(|i| b.psi[1][1][i] * dofs[i]).sum();
        assert!((d12 - f(x, y)[3]).abs() < 1e-13);
        let d112: f64 = (0..16).map(|i| b.psi[2][1][i] * dofs[i]).sum();
        assert!((d112 - (12.0 * x * y)).abs() < 1e-12);
    }
}
