//! No-fill-in preconditioners for PCG.
//!
//! Every preconditioner keeps its factors on the sparsity pattern of `A`
//! (or a triangle of it), so memory stays proportional to `nnz(A)`.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{lower_solve_in_place, upper_solve_in_place, SparseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecondKind {
    Identity,
    Jacobi,
    Ilu0,
    Ic0,
    Ssor,
}

impl PrecondKind {
    /// All kinds in their canonical listing order.
    pub const ALL: [PrecondKind; 5] = [
        PrecondKind::Identity,
        PrecondKind::Jacobi,
        PrecondKind::Ilu0,
        PrecondKind::Ic0,
        PrecondKind::Ssor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrecondKind::Identity => "identity",
            PrecondKind::Jacobi => "jacobi",
            PrecondKind::Ilu0 => "ilu0",
            PrecondKind::Ic0 => "ic0",
            PrecondKind::Ssor => "ssor",
        }
    }
}

impl fmt::Display for PrecondKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrecondKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PrecondKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown preconditioner {s:?} (expected identity|jacobi|ilu0|ic0|ssor)"
                ))
            })
    }
}

/// First diagonal shift tried when IC(0) breaks down; doubled on each retry.
pub const IC0_INITIAL_SHIFT: f64 = 1e-3;
const IC0_MAX_RETRIES: usize = 40;

#[derive(Clone, Debug)]
enum Factors {
    Identity,
    Jacobi {
        diag: Vec<f64>,
    },
    /// Unit lower `L` (strict part stored) and upper `U` with diagonal.
    Ilu0 {
        lower: SparseMatrix,
        upper: SparseMatrix,
    },
    /// `L` with diagonal, and its transpose laid out for the backward sweep.
    Ic0 {
        lower: SparseMatrix,
        upper: SparseMatrix,
    },
    /// Implicit SSOR: diagonal plus the strict triangles of `A`.
    Ssor {
        omega: f64,
        diag: Vec<f64>,
        lower: SparseMatrix,
        upper: SparseMatrix,
    },
}

#[derive(Clone, Debug)]
pub struct Preconditioner {
    kind: PrecondKind,
    n: usize,
    factors: Factors,
    build_time: Duration,
    shift: f64,
}

impl Preconditioner {
    /// Builds a preconditioner of `kind` from `a`. `omega` is only used by
    /// SSOR and must lie in `(0, 2)` there.
    ///
    /// IC(0) breakdowns are retried on `A + sigma * diag(A)` with `sigma`
    /// doubling from [`IC0_INITIAL_SHIFT`]; the shift used is reported by
    /// [`Preconditioner::shift`].
    pub fn build(kind: PrecondKind, a: &SparseMatrix, omega: f64) -> Result<Self> {
        if kind == PrecondKind::Ssor && !(omega > 0.0 && omega < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "SSOR relaxation factor must lie in (0, 2), got {omega}"
            )));
        }
        let start = Instant::now();
        let mut shift = 0.0;
        let factors = match kind {
            PrecondKind::Identity => Factors::Identity,
            PrecondKind::Jacobi => Factors::Jacobi {
                diag: positive_diagonal(a)?,
            },
            PrecondKind::Ilu0 => {
                let lu = ilu0(a)?;
                Factors::Ilu0 {
                    lower: lu.strict_lower(),
                    upper: lu.upper(),
                }
            }
            PrecondKind::Ic0 => {
                let (lower, used) = ic0_with_retry(a)?;
                shift = used;
                Factors::Ic0 {
                    upper: lower.transpose(),
                    lower,
                }
            }
            PrecondKind::Ssor => Factors::Ssor {
                omega,
                diag: positive_diagonal(a)?,
                lower: a.strict_lower(),
                upper: a.strict_upper(),
            },
        };
        Ok(Self {
            kind,
            n: a.dim(),
            factors,
            build_time: start.elapsed(),
            shift,
        })
    }

    pub fn kind(&self) -> PrecondKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn build_time(&self) -> Duration {
        self.build_time
    }

    /// Relative diagonal shift that IC(0) needed (0 when none, and for the
    /// other kinds).
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Stored factor entries, for no-fill-in checks.
    pub fn factor_patterns(&self) -> Vec<&SparseMatrix> {
        match &self.factors {
            Factors::Identity | Factors::Jacobi { .. } => Vec::new(),
            Factors::Ilu0 { lower, upper } | Factors::Ic0 { lower, upper } => vec![lower, upper],
            Factors::Ssor { lower, upper, .. } => vec![lower, upper],
        }
    }

    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mut z = vec![0.0; self.n];
        self.apply_into(r, &mut z)?;
        Ok(z)
    }

    /// `z = M⁻¹ r`.
    pub fn apply_into(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        for len in [r.len(), z.len()] {
            if len != self.n {
                return Err(Error::DimensionMismatch {
                    expected: self.n,
                    found: len,
                });
            }
        }
        match &self.factors {
            Factors::Identity => z.copy_from_slice(r),
            Factors::Jacobi { diag } => {
                for (i, (zi, (&ri, &di))) in z.iter_mut().zip(r.iter().zip(diag)).enumerate() {
                    if di == 0.0 {
                        return Err(Error::SingularFactor { row: i });
                    }
                    *zi = ri / di;
                }
            }
            Factors::Ilu0 { lower, upper } => {
                z.copy_from_slice(r);
                lower_solve_in_place(lower, z, true)?;
                upper_solve_in_place(upper, z, false)?;
            }
            Factors::Ic0 { lower, upper } => {
                z.copy_from_slice(r);
                lower_solve_in_place(lower, z, false)?;
                upper_solve_in_place(upper, z, false)?;
            }
            Factors::Ssor {
                omega,
                diag,
                lower,
                upper,
            } => ssor_apply(*omega, diag, lower, upper, r, z)?,
        }
        Ok(())
    }
}

fn positive_diagonal(a: &SparseMatrix) -> Result<Vec<f64>> {
    let diag = a.diagonal()?;
    if let Some(row) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::SingularFactor { row });
    }
    Ok(diag)
}

/// `z = ((2-w)/w) (D/w + U)⁻¹ D (D/w + L)⁻¹ r`.
fn ssor_apply(
    omega: f64,
    diag: &[f64],
    lower: &SparseMatrix,
    upper: &SparseMatrix,
    r: &[f64],
    z: &mut [f64],
) -> Result<()> {
    let n = diag.len();
    for i in 0..n {
        let (cols, vals) = lower.row(i);
        let acc: f64 = cols.iter().zip(vals).map(|(&j, &v)| v * z[j]).sum();
        z[i] = (r[i] - acc) * omega / diag[i];
    }
    let scale = (2.0 - omega) / omega;
    for (zi, &di) in z.iter_mut().zip(diag) {
        *zi *= scale * di;
    }
    for i in (0..n).rev() {
        let (cols, vals) = upper.row(i);
        let acc: f64 = cols.iter().zip(vals).map(|(&j, &v)| v * z[j]).sum();
        z[i] = (z[i] - acc) * omega / diag[i];
    }
    Ok(())
}

/// Incomplete LU with zero fill (IKJ order). Returns the combined factor on
/// A's pattern: strict lower part holds `L` (unit diagonal implied), the rest
/// holds `U`.
pub fn ilu0(a: &SparseMatrix) -> Result<SparseMatrix> {
    let n = a.dim();
    let diag_pos: Vec<usize> = (0..n)
        .map(|i| {
            a.position(i, i)
                .ok_or_else(|| Error::Structure(format!("missing diagonal entry in row {i}")))
        })
        .collect::<Result<_>>()?;
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let mut vals = a.values().to_vec();
    // marker[j] = storage position of (i, j) for the current row i
    let mut marker = vec![usize::MAX; n];

    for i in 0..n {
        let (lo, hi) = (offsets[i], offsets[i + 1]);
        for p in lo..hi {
            marker[cols[p]] = p;
        }
        for p in lo..hi {
            let k = cols[p];
            if k >= i {
                break;
            }
            let pivot = vals[diag_pos[k]];
            let l_ik = vals[p] / pivot;
            vals[p] = l_ik;
            for q in diag_pos[k] + 1..offsets[k + 1] {
                let target = marker[cols[q]];
                if target != usize::MAX {
                    vals[target] -= l_ik * vals[q];
                }
            }
        }
        let pivot = vals[diag_pos[i]];
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::FactorBreakdown {
                kind: PrecondKind::Ilu0,
                row: i,
                pivot,
            });
        }
        for p in lo..hi {
            marker[cols[p]] = usize::MAX;
        }
    }
    SparseMatrix::new(n, offsets.to_vec(), cols.to_vec(), vals)
}

/// Incomplete Cholesky with zero fill on the lower pattern of
/// `A + shift * diag(A)`. Fails with [`Error::FactorBreakdown`] at the first
/// non-positive pivot.
pub fn ic0(a: &SparseMatrix, shift: f64) -> Result<SparseMatrix> {
    let mut l = a.lower();
    let n = l.dim();
    for i in 0..n {
        if l.position(i, i).is_none() {
            return Err(Error::Structure(format!("missing diagonal entry in row {i}")));
        }
    }
    let offsets = l.row_offsets().to_vec();
    let cols = l.col_indices().to_vec();
    let vals = l.values_mut();

    for i in 0..n {
        let (lo, hi) = (offsets[i], offsets[i + 1]);
        // diagonal is the last entry of a lower row
        let dpos = hi - 1;
        for p in lo..dpos {
            let k = cols[p];
            let (klo, khi) = (offsets[k], offsets[k + 1]);
            // s = a_ik - sum_{m < k} l_im l_km over the common pattern
            let mut s = vals[p];
            let (mut x, mut y) = (lo, klo);
            while x < p && y < khi - 1 {
                match cols[x].cmp(&cols[y]) {
                    std::cmp::Ordering::Less => x += 1,
                    std::cmp::Ordering::Greater => y += 1,
                    std::cmp::Ordering::Equal => {
                        s -= vals[x] * vals[y];
                        x += 1;
                        y += 1;
                    }
                }
            }
            vals[p] = s / vals[khi - 1];
        }
        let mut d = vals[dpos] * (1.0 + shift);
        for v in &vals[lo..dpos] {
            d -= v * v;
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::FactorBreakdown {
                kind: PrecondKind::Ic0,
                row: i,
                pivot: d,
            });
        }
        vals[dpos] = d.sqrt();
    }
    Ok(l)
}

fn ic0_with_retry(a: &SparseMatrix) -> Result<(SparseMatrix, f64)> {
    let mut last = match ic0(a, 0.0) {
        Ok(l) => return Ok((l, 0.0)),
        Err(e @ Error::FactorBreakdown { .. }) => e,
        Err(e) => return Err(e),
    };
    let mut shift = IC0_INITIAL_SHIFT;
    for _ in 0..IC0_MAX_RETRIES {
        match ic0(a, shift) {
            Ok(l) => return Ok((l, shift)),
            Err(e @ Error::FactorBreakdown { .. }) => last = e,
            Err(e) => return Err(e),
        }
        shift *= 2.0;
    }
    Err(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::dot;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(n: usize, dense: &[f64]) -> SparseMatrix {
        SparseMatrix::from_dense(n, dense).unwrap()
    }

    fn random_spd_stencil(rng: &mut ChaCha8Rng, r: usize, c: usize) -> SparseMatrix {
        let n = r * c;
        let mut trip = Vec::new();
        for i in 0..r {
            for j in 0..c {
                let p = i * c + j;
                trip.push((p, p, rng.random_range(0.01..0.5)));
                let mut link = |q: usize, w: f64| {
                    trip.push((p, q, -w));
                    trip.push((q, p, -w));
                    trip.push((p, p, w));
                    trip.push((q, q, w));
                };
                if j + 1 < c {
                    link(p + 1, rng.random_range(0.1..1.0));
                }
                if i + 1 < r {
                    link(p + c, rng.random_range(0.1..1.0));
                }
            }
        }
        SparseMatrix::from_triplets(n, &trip).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for k in PrecondKind::ALL {
            assert_eq!(k.name().parse::<PrecondKind>().unwrap(), k);
        }
        assert!("sor".parse::<PrecondKind>().is_err());
    }

    #[test]
    fn identity_and_jacobi_examples() {
        let a = m(2, &[2.0, 0.0, 0.0, 3.0]);
        let id = Preconditioner::build(PrecondKind::Identity, &a, 1.0).unwrap();
        assert_eq!(id.apply(&[0.3, -7.0]).unwrap(), vec![0.3, -7.0]);
        let j = Preconditioner::build(PrecondKind::Jacobi, &a, 1.0).unwrap();
        assert_eq!(j.apply(&[2.0, 3.0]).unwrap(), vec![1.0, 1.0]);
        let a = m(2, &[2.0, 0.0, 0.0, 4.0]);
        let j = Preconditioner::build(PrecondKind::Jacobi, &a, 1.0).unwrap();
        assert_eq!(j.apply(&[2.0, 4.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn jacobi_rejects_zero_diagonal() {
        let a = m(2, &[0.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            Preconditioner::build(PrecondKind::Jacobi, &a, 1.0),
            Err(Error::SingularFactor { row: 0 })
        ));
    }

    #[test]
    fn ssor_two_by_two() {
        // M = (D+L) D^-1 (D+U) = [[2,-1],[-1,2.5]]; M z = [1,0] gives z = [0.625, 0.25]
        let a = m(2, &[2.0, -1.0, -1.0, 2.0]);
        let s = Preconditioner::build(PrecondKind::Ssor, &a, 1.0).unwrap();
        let z = s.apply(&[1.0, 0.0]).unwrap();
        assert!((z[0] - 0.625).abs() < 1e-12);
        assert!((z[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn ssor_omega_validated() {
        let a = m(2, &[2.0, -1.0, -1.0, 2.0]);
        for w in [0.0, 2.0, -1.0, f64::NAN] {
            assert!(matches!(
                Preconditioner::build(PrecondKind::Ssor, &a, w),
                Err(Error::InvalidParameter(_))
            ));
        }
        // omega is irrelevant for other kinds
        assert!(Preconditioner::build(PrecondKind::Jacobi, &a, 5.0).is_ok());
    }

    #[test]
    fn ilu0_exact_on_tridiagonal() {
        let n = 6;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            d[i * n + i] = 4.0 + i as f64 * 0.1;
            if i + 1 < n {
                d[i * n + i + 1] = -1.0;
                d[(i + 1) * n + i] = -1.5;
            }
        }
        let a = m(n, &d);
        let lu = ilu0(&a).unwrap();
        // reconstruct L U densely
        let mut prod = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..=i.min(j) {
                    let l = if k == i { 1.0 } else { lu.get(i, k) };
                    s += l * lu.get(k, j);
                }
                prod[i * n + j] = s;
            }
        }
        for (x, y) in prod.iter().zip(&d) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ilu0_breakdown_on_zero_pivot() {
        let a = m(2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            ilu0(&a),
            Err(Error::FactorBreakdown { kind: PrecondKind::Ilu0, row: 1, .. })
        ));
    }

    #[test]
    fn ic0_breakdown_carries_row_and_retry_shifts() {
        // indefinite: second pivot 1 - 4 = -3
        let a = m(2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            ic0(&a, 0.0),
            Err(Error::FactorBreakdown { kind: PrecondKind::Ic0, row: 1, .. })
        ));
        let p = Preconditioner::build(PrecondKind::Ic0, &a, 1.0).unwrap();
        // needs (1+s)^2 > 4, i.e. s > 1
        assert!(p.shift() > 1.0);
        let mut s = IC0_INITIAL_SHIFT;
        while s <= 1.0 {
            s *= 2.0;
        }
        assert_eq!(p.shift(), s);
    }

    #[test]
    fn ic0_matches_laplacian_pattern() {
        // 3x3 grid Laplacian plus identity (SPD)
        let mut trip = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                let p = i * 3 + j;
                trip.push((p, p, 1.0));
                for q in [(j + 1 < 3).then(|| p + 1), (i + 1 < 3).then(|| p + 3)].into_iter().flatten() {
                    trip.extend([(p, q, -1.0), (q, p, -1.0), (p, p, 1.0), (q, q, 1.0)]);
                }
            }
        }
        let a = SparseMatrix::from_triplets(9, &trip).unwrap();
        let l = ic0(&a, 0.0).unwrap();
        for i in 0..9 {
            for j in 0..=i {
                if a.position(i, j).is_none() {
                    assert!(l.position(i, j).is_none());
                    continue;
                }
                let llt: f64 = (0..=j).map(|k| l.get(i, k) * l.get(j, k)).sum();
                assert!((llt - a.get(i, j)).abs() < 1e-10, "({i},{j})");
            }
        }
    }

    #[test]
    fn dimension_checked_on_apply() {
        let p = Preconditioner::build(PrecondKind::Identity, &SparseMatrix::identity(3), 1.0).unwrap();
        assert!(matches!(p.apply(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn no_fill_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_spd_stencil(&mut rng, 5, 7);
        for kind in [PrecondKind::Ilu0, PrecondKind::Ic0, PrecondKind::Ssor] {
            let p = Preconditioner::build(kind, &a, 1.2).unwrap();
            for f in p.factor_patterns() {
                for i in 0..f.dim() {
                    for &j in f.row(i).0 {
                        assert!(a.position(i, j).is_some(), "{kind} stores fill at ({i},{j})");
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn apply_is_linear(seed in 0u64..100, kind_idx in 0usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_spd_stencil(&mut rng, 4, 6);
            let p = Preconditioner::build(PrecondKind::ALL[kind_idx], &a, 1.3).unwrap();
            let n = a.dim();
            let r1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r2: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (al, be) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let mix: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| al * x + be * y).collect();
            let lhs = p.apply(&mix).unwrap();
            let z1 = p.apply(&r1).unwrap();
            let z2 = p.apply(&r2).unwrap();
            for i in 0..n {
                prop_assert!((lhs[i] - (al * z1[i] + be * z2[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn symmetric_kinds_apply_symmetrically(seed in 0u64..100, kind_idx in 0usize..4) {
            let kind = [PrecondKind::Identity, PrecondKind::Jacobi, PrecondKind::Ic0, PrecondKind::Ssor][kind_idx];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_spd_stencil(&mut rng, 5, 4);
            let p = Preconditioner::build(kind, &a, 0.8).unwrap();
            let n = a.dim();
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs = dot(&r, &p.apply(&s).unwrap());
            let rhs = dot(&s, &p.apply(&r).unwrap());
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
