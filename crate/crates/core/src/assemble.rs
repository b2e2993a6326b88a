//! Reweighted 5-point system assembly.
//!
//! Cells are numbered row-major. A horizontal edge joins `(i, j)` and
//! `(i, j + 1)`; a vertical edge joins `(i, j)` and `(i + 1, j)`. Edges that
//! would leave the grid do not exist, which gives the zero-flux boundary.

use crate::error::{Error, Result};
use crate::grid::GradientField;
use crate::sparse::SparseMatrix;

/// Per-edge weights: `u` on horizontal edges (`rows x (cols-1)`), `v` on
/// vertical edges (`(rows-1) x cols`), both row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField {
    rows: usize,
    cols: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl WeightField {
    pub fn new(rows: usize, cols: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidInput(format!("grid {rows}x{cols} below 2x2")));
        }
        if u.len() != rows * (cols - 1) {
            return Err(Error::DimensionMismatch {
                expected: rows * (cols - 1),
                found: u.len(),
            });
        }
        if v.len() != (rows - 1) * cols {
            return Err(Error::DimensionMismatch {
                expected: (rows - 1) * cols,
                found: v.len(),
            });
        }
        if let Some(w) = u.iter().chain(&v).find(|&&w| !(w > 0.0 && w <= 1.0)) {
            return Err(Error::InvalidInput(format!("weight {w} outside (0, 1]")));
        }
        Ok(Self { rows, cols, u, v })
    }

    /// All weights equal to one (plain unweighted least squares).
    pub fn uniform(rows: usize, cols: usize) -> Result<Self> {
        Self::new(
            rows,
            cols,
            vec![1.0; rows * (cols - 1)],
            vec![1.0; (rows - 1) * cols],
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Weight of the horizontal edge `(i, j) -> (i, j+1)`.
    #[inline]
    pub fn u(&self, i: usize, j: usize) -> f64 {
        self.u[i * (self.cols - 1) + j]
    }

    /// Weight of the vertical edge `(i, j) -> (i+1, j)`.
    #[inline]
    pub fn v(&self, i: usize, j: usize) -> f64 {
        self.v[i * self.cols + j]
    }

    pub fn u_values(&self) -> &[f64] {
        &self.u
    }

    pub fn v_values(&self) -> &[f64] {
        &self.v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    pub a: SparseMatrix,
    pub b: Vec<f64>,
}

/// Structural nonzero count of the 5-point operator on an `m x n` grid.
pub fn stencil_nnz(rows: usize, cols: usize) -> usize {
    5 * rows * cols - 2 * (rows + cols)
}

fn check_params(p: f64, tau: f64) -> Result<()> {
    if !(p < 2.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!("p must be < 2, got {p}")));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("tau must be > 0, got {tau}")));
    }
    Ok(())
}

fn check_phi(phi: &[f64], grads: &GradientField) -> Result<()> {
    let n = grads.rows() * grads.cols();
    if phi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: phi.len(),
        });
    }
    Ok(())
}

/// Smoothed IRLS weight `tau / (|r|^(2-p) + tau)` for edge residual `r`.
#[inline]
pub fn edge_weight(residual: f64, p: f64, tau: f64) -> f64 {
    (tau / (residual.abs().powf(2.0 - p) + tau)).max(f64::MIN_POSITIVE)
}

pub fn compute_weights(phi: &[f64], grads: &GradientField, p: f64, tau: f64) -> Result<WeightField> {
    check_params(p, tau)?;
    check_phi(phi, grads)?;
    let (m, n) = (grads.rows(), grads.cols());
    let mut u = Vec::with_capacity(m * (n - 1));
    for i in 0..m {
        for j in 0..n - 1 {
            let r = phi[i * n + j + 1] - phi[i * n + j] - grads.dx(i, j);
            u.push(edge_weight(r, p, tau));
        }
    }
    let mut v = Vec::with_capacity((m - 1) * n);
    for i in 0..m - 1 {
        for j in 0..n {
            let r = phi[(i + 1) * n + j] - phi[i * n + j] - grads.dy(i, j);
            v.push(edge_weight(r, p, tau));
        }
    }
    Ok(WeightField { rows: m, cols: n, u, v })
}

/// Caches the stencil pattern of an `m x n` grid so that repeated assemblies
/// only rewrite values.
#[derive(Clone, Debug)]
pub struct SystemAssembler {
    rows: usize,
    cols: usize,
    system: LinearSystem,
}

impl SystemAssembler {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidInput(format!("grid {rows}x{cols} below 2x2")));
        }
        let n = rows * cols;
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::with_capacity(stencil_nnz(rows, cols));
        row_offsets.push(0);
        for i in 0..rows {
            for j in 0..cols {
                let k = i * cols + j;
                if i > 0 {
                    col_indices.push(k - cols);
                }
                if j > 0 {
                    col_indices.push(k - 1);
                }
                col_indices.push(k);
                if j + 1 < cols {
                    col_indices.push(k + 1);
                }
                if i + 1 < rows {
                    col_indices.push(k + cols);
                }
                row_offsets.push(col_indices.len());
            }
        }
        let nnz = col_indices.len();
        let a = SparseMatrix::new(n, row_offsets, col_indices, vec![0.0; nnz])?;
        Ok(Self {
            rows,
            cols,
            system: LinearSystem { a, b: vec![0.0; n] },
        })
    }

    pub fn system(&self) -> &LinearSystem {
        &self.system
    }

    pub fn into_system(self) -> LinearSystem {
        self.system
    }

    /// Rewrites matrix values and right-hand side for new weights.
    pub fn assemble(&mut self, weights: &WeightField, grads: &GradientField) -> Result<&LinearSystem> {
        let (m, n) = (self.rows, self.cols);
        for (what, r, c) in [
            ("weights", weights.rows(), weights.cols()),
            ("gradients", grads.rows(), grads.cols()),
        ] {
            if (r, c) != (m, n) {
                return Err(Error::InvalidInput(format!(
                    "{what} are {r}x{c}, assembler expects {m}x{n}"
                )));
            }
        }
        let LinearSystem { a, b } = &mut self.system;
        let values = a.values_mut();
        let mut pos = 0;
        for i in 0..m {
            for j in 0..n {
                let up = (i > 0).then(|| weights.v(i - 1, j));
                let left = (j > 0).then(|| weights.u(i, j - 1));
                let right = (j + 1 < n).then(|| weights.u(i, j));
                let down = (i + 1 < m).then(|| weights.v(i, j));

                let mut diag = 0.0;
                let mut rhs = 0.0;
                if let Some(w) = up {
                    values[pos] = -w;
                    pos += 1;
                    diag += w;
                    rhs += grads.dy(i - 1, j) * w;
                }
                if let Some(w) = left {
                    values[pos] = -w;
                    pos += 1;
                    diag += w;
                    rhs += grads.dx(i, j - 1) * w;
                }
                let diag_pos = pos;
                pos += 1;
                if let Some(w) = right {
                    values[pos] = -w;
                    pos += 1;
                    diag += w;
                    rhs -= grads.dx(i, j) * w;
                }
                if let Some(w) = down {
                    values[pos] = -w;
                    pos += 1;
                    diag += w;
                    rhs -= grads.dy(i, j) * w;
                }
                values[diag_pos] = diag;
                b[i * n + j] = rhs;
            }
        }
        debug_assert_eq!(pos, values.len());
        Ok(&self.system)
    }
}

/// One-shot assembly of the weighted system.
pub fn assemble_system(weights: &WeightField, grads: &GradientField) -> Result<LinearSystem> {
    let mut asm = SystemAssembler::new(weights.rows(), weights.cols())?;
    asm.assemble(weights, grads)?;
    Ok(asm.into_system())
}

/// Discrete Lp mismatch between the gradients of `phi` and the wrapped
/// gradients, summed over all grid edges.
pub fn objective(phi: &[f64], grads: &GradientField, p: f64) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!("objective needs p > 0, got {p}")));
    }
    check_phi(phi, grads)?;
    let (m, n) = (grads.rows(), grads.cols());
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..n {
            let k = i * n + j;
            if j + 1 < n {
                total += (phi[k + 1] - phi[k] - grads.dx(i, j)).abs().powf(p);
            }
            if i + 1 < m {
                total += (phi[k + n] - phi[k] - grads.dy(i, j)).abs().powf(p);
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{wrap_map, wrapped_gradients, PhaseKind, PhaseMap};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_grads(m: usize, n: usize) -> GradientField {
        wrapped_gradients(&PhaseMap::filled(m, n, 0.0, PhaseKind::Wrapped).unwrap()).unwrap()
    }

    fn grads_of(values: Vec<f64>, m: usize, n: usize) -> GradientField {
        let psi = wrap_map(&PhaseMap::unwrapped(m, n, values).unwrap()).unwrap();
        wrapped_gradients(&psi).unwrap()
    }

    #[test]
    fn weight_examples() {
        assert_eq!(edge_weight(0.0, 1.5, 0.01), 1.0);
        assert_eq!(edge_weight(0.0, -3.0, 0.01), 1.0);
        assert!((edge_weight(1.0, 0.0, 0.01) - 0.01 / 1.01).abs() < 1e-15);
        assert!((edge_weight(1.0, 0.0, 0.01) - 0.009901).abs() < 1e-6);
        assert!((edge_weight(0.5, 1.0, 0.01) - 0.019608).abs() < 1e-6);
    }

    #[test]
    fn compute_weights_on_grid() {
        // phi = [0, 1; 0, 0], zero gradients: only edge (0,0)->(0,1) has residual 1
        let g = zero_grads(2, 2);
        let w = compute_weights(&[0.0, 1.0, 0.0, 0.0], &g, 0.0, 0.01).unwrap();
        assert!((w.u(0, 0) - 0.01 / 1.01).abs() < 1e-15);
        assert_eq!(w.u(1, 0), 1.0);
        assert_eq!(w.v(0, 0), 1.0);
        assert!((w.v(0, 1) - 0.01 / 1.01).abs() < 1e-15);
    }

    #[test]
    fn weight_parameters_validated() {
        let g = zero_grads(2, 2);
        let phi = [0.0; 4];
        assert!(matches!(
            compute_weights(&phi, &g, 2.0, 0.01),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            compute_weights(&phi, &g, 1.0, 0.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            compute_weights(&phi[..3], &g, 1.0, 0.01),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn weight_field_validated() {
        assert!(WeightField::new(2, 2, vec![1.0, 1.0], vec![1.0, 1.0]).is_ok());
        assert!(WeightField::new(2, 2, vec![1.0], vec![1.0, 1.0]).is_err());
        assert!(WeightField::new(2, 2, vec![1.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(WeightField::new(2, 2, vec![1.0, 1.5], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn sweep_nnz_examples() {
        assert_eq!(stencil_nnz(120, 160), 95440);
        assert_eq!(stencil_nnz(480, 640), 1_533_760);
        let asm = SystemAssembler::new(120, 160).unwrap();
        assert_eq!(asm.system().a.nnz(), 95440);
    }

    /// Hand-built Laplacian of the 3x3 grid graph.
    fn laplacian_3x3() -> Vec<f64> {
        let mut l = vec![0.0; 81];
        let edges = [
            (0, 1), (1, 2), (3, 4), (4, 5), (6, 7), (7, 8),
            (0, 3), (3, 6), (1, 4), (4, 7), (2, 5), (5, 8),
        ];
        for (p, q) in edges {
            l[p * 9 + q] = -1.0;
            l[q * 9 + p] = -1.0;
            l[p * 9 + p] += 1.0;
            l[q * 9 + q] += 1.0;
        }
        l
    }

    #[test]
    fn unit_weights_give_grid_laplacian() {
        let w = WeightField::uniform(3, 3).unwrap();
        let sys = assemble_system(&w, &zero_grads(3, 3)).unwrap();
        assert_eq!(sys.a.to_dense(), laplacian_3x3());
        assert!(sys.b.iter().all(|&v| v == 0.0));
        let d = sys.a.diagonal().unwrap();
        assert_eq!(d, vec![2.0, 3.0, 2.0, 3.0, 4.0, 3.0, 2.0, 3.0, 2.0]);
    }

    #[test]
    fn rhs_single_edge() {
        // 2x2 with a jump of 1 along the first row only
        let g = grads_of(vec![0.0, 1.0, 0.0, 0.0], 2, 2);
        let w = WeightField::uniform(2, 2).unwrap();
        let sys = assemble_system(&w, &g).unwrap();
        // dx(0,0) = 1, dy(0,1) = -1, all other edge gradients 0
        assert_eq!(sys.b, vec![-1.0, 2.0, 0.0, -1.0]);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let mut asm = SystemAssembler::new(3, 3).unwrap();
        let w = WeightField::uniform(3, 4).unwrap();
        assert!(asm.assemble(&w, &zero_grads(3, 3)).is_err());
    }

    #[test]
    fn recoverable_phi_solves_system_for_any_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (m, n) = (5, 6);
        let phi: Vec<f64> = (0..m * n).map(|k| 0.3 * k as f64 + rng.random_range(-0.5..0.5)).collect();
        let g = grads_of(phi.clone(), m, n);
        let u = (0..m * (n - 1)).map(|_| rng.random_range(0.01..1.0)).collect();
        let v = (0..(m - 1) * n).map(|_| rng.random_range(0.01..1.0)).collect();
        let w = WeightField::new(m, n, u, v).unwrap();
        let sys = assemble_system(&w, &g).unwrap();
        let ax = sys.a.spmv(&phi).unwrap();
        for (l, r) in ax.iter().zip(&sys.b) {
            assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_examples() {
        let phi = [0.0, 0.4, 0.1, 0.5];
        let g = grads_of(phi.to_vec(), 2, 2);
        assert!(objective(&phi, &g, 1.0).unwrap() < 1e-15);

        let g = zero_grads(2, 2);
        let phi = [0.0, 0.7, 0.0, 0.7];
        // two horizontal edges with residual 0.7, vertical residuals 0
        assert!((objective(&phi, &g, 2.0).unwrap() - 2.0 * 0.49).abs() < 1e-15);
        let phi = [0.0, 0.7, 0.0, 0.0];
        assert!((objective(&phi, &g, 2.0).unwrap() - 2.0 * 0.49).abs() < 1e-15);
        let phi = [0.0, 0.0, 0.0, 0.3];
        assert!((objective(&phi, &g, 2.0).unwrap() - 2.0 * 0.09).abs() < 1e-15);
        assert!(objective(&phi, &g, 0.0).is_err());
    }

    #[test]
    fn objective_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m, n) = (4, 5);
        let truth: Vec<f64> = (0..m * n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let g = grads_of(truth, m, n);
        let phi: Vec<f64> = (0..m * n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = 1.3;
        // independent summation: edges enumerated as explicit pairs
        let mut edges = Vec::new();
        for i in 0..m {
            for j in 0..n - 1 {
                edges.push((i * n + j, i * n + j + 1, g.dx(i, j)));
            }
        }
        for i in 0..m - 1 {
            for j in 0..n {
                edges.push((i * n + j, (i + 1) * n + j, g.dy(i, j)));
            }
        }
        let oracle: f64 = edges
            .iter()
            .map(|&(a, b, d)| (phi[b] - phi[a] - d).abs().powf(p))
            .sum();
        assert!((objective(&phi, &g, p).unwrap() - oracle).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn assembled_operator_invariants(seed in 0u64..200, m in 2usize..8, n in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let psi: Vec<f64> = (0..m * n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let g = grads_of(psi, m, n);
            let phi: Vec<f64> = (0..m * n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let w = compute_weights(&phi, &g, 0.5, 0.01).unwrap();
            prop_assert!(w.u_values().iter().chain(w.v_values()).all(|&x| x > 0.0 && x <= 1.0));
            let sys = assemble_system(&w, &g).unwrap();
            prop_assert_eq!(sys.a.nnz(), stencil_nnz(m, n));
            prop_assert!(sys.a.is_symmetric(1e-12));
            let ones = vec![1.0; m * n];
            prop_assert!(sys.a.spmv(&ones).unwrap().iter().all(|r| r.abs() < 1e-10));
            let l1: f64 = sys.b.iter().map(|x| x.abs()).sum();
            let total: f64 = sys.b.iter().sum();
            prop_assert!(total.abs() <= 1e-8 * l1.max(1e-300));
            let d = sys.a.diagonal().unwrap();
            for (i, &di) in d.iter().enumerate() {
                let (cols, vals) = sys.a.row(i);
                let off: f64 = cols.iter().zip(vals).filter(|(&j, _)| j != i).map(|(_, v)| v.abs()).sum();
                prop_assert!(di >= 0.0 && di + 1e-12 >= off);
            }
        }
    }
}
