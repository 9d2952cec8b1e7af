//! Dense real skew-symmetric matrices and their Pfaffians.
//!
//! The Pfaffian is computed by a Parlett–Reid style reduction to skew
//! tridiagonal form with partial pivoting on the sub-diagonal column, which
//! is stable even when the matrix comes from nearly coincident space-time
//! points and is close to rank deficient.

use nalgebra::DMatrix;
use thiserror::Error;

/// Absolute tolerance used when checking `A = -Aᵀ` at construction.
pub const ANTISYMMETRY_TOL: f64 = 1e-12;

/// Pivots smaller than this are treated as exact zeros.
pub const PIVOT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SkewError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("odd dimension {0}; Pfaffians are only defined for even dimension")]
    OddDimension(usize),
    #[error("entries ({i},{j}) and ({j},{i}) violate antisymmetry by {defect:e}")]
    NotAntisymmetric { i: usize, j: usize, defect: f64 },
    #[error("non-finite entry at ({0},{1})")]
    NonFinite(usize, usize),
    #[error("dimension mismatch: expected {expected}x{expected}, got {rows}x{cols}")]
    DimensionMismatch {
        expected: usize,
        rows: usize,
        cols: usize,
    },
}

/// An even-dimensional, exactly antisymmetric real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix {
    entries: DMatrix<f64>,
}

impl SkewMatrix {
    /// Validates `entries` and stores the exactly antisymmetrized matrix `(A - Aᵀ)/2`.
    pub fn new(entries: DMatrix<f64>) -> Result<Self, SkewError> {
        let (rows, cols) = entries.shape();
        if rows != cols {
            return Err(SkewError::NotSquare { rows, cols });
        }
        if rows % 2 == 1 {
            return Err(SkewError::OddDimension(rows));
        }
        for i in 0..rows {
            for j in i..rows {
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
                if !a.is_finite() {
                    return Err(SkewError::NonFinite(i, j));
                }
                if !b.is_finite() {
                    return Err(SkewError::NonFinite(j, i));
                }
                let defect = (a + b).abs();
                if defect > ANTISYMMETRY_TOL {
                    return Err(SkewError::NotAntisymmetric { i, j, defect });
                }
            }
        }
        let entries = (&entries - entries.transpose()) * 0.5;
        Ok(Self { entries })
    }

    /// Builds a matrix from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SkewError> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(SkewError::NotSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Builds a matrix from its strict upper triangle; the lower triangle is mirrored.
    pub fn from_upper(dim: usize, mut upper: impl FnMut(usize, usize) -> f64) -> Result<Self, SkewError> {
        if dim % 2 == 1 {
            return Err(SkewError::OddDimension(dim));
        }
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in (i + 1)..dim {
                let v = upper(i, j);
                if !v.is_finite() {
                    return Err(SkewError::NonFinite(i, j));
                }
                m[(i, j)] = v;
                m[(j, i)] = -v;
            }
        }
        Ok(Self { entries: m })
    }

    pub fn empty() -> Self {
        Self {
            entries: DMatrix::zeros(0, 0),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Multiplies every entry by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            entries: &self.entries * c,
        }
    }

    /// Simultaneously swaps rows `i, j` and columns `i, j`.
    pub fn swap_pair(&self, i: usize, j: usize) -> Self {
        let mut m = self.entries.clone();
        m.swap_rows(i, j);
        m.swap_columns(i, j);
        Self { entries: m }
    }

    /// Deletes the listed rows and the matching columns.
    pub fn remove_indices(&self, idx: &[usize]) -> Result<Self, SkewError> {
        let keep: Vec<usize> = (0..self.dim()).filter(|k| !idx.contains(k)).collect();
        if keep.len() % 2 == 1 {
            return Err(SkewError::OddDimension(keep.len()));
        }
        let m = DMatrix::from_fn(keep.len(), keep.len(), |a, b| self.entries[(keep[a], keep[b])]);
        Ok(Self { entries: m })
    }
}

/// Pfaffian by pivoted skew tridiagonalization. The empty matrix has Pfaffian 1.
pub fn pfaffian(a: &SkewMatrix) -> f64 {
    let n = a.dim();
    if n == 0 {
        return 1.0;
    }
    let mut m = a.entries.clone();
    let mut pf = 1.0;
    let mut k = 0;
    while k + 1 < n {
        // largest |m[i, k]| for i > k
        let mut kp = k + 1;
        let mut best = m[(k + 1, k)].abs();
        for i in (k + 2)..n {
            let v = m[(i, k)].abs();
            if v > best {
                best = v;
                kp = i;
            }
        }
        if kp != k + 1 {
            m.swap_rows(k + 1, kp);
            m.swap_columns(k + 1, kp);
            pf = -pf;
        }
        let pivot = m[(k, k + 1)];
        if pivot.abs() < PIVOT_FLOOR {
            return 0.0;
        }
        pf *= pivot;
        if k + 2 < n {
            // Gauss transform eliminating row/column k beyond the tridiagonal band.
            let tau: Vec<f64> = ((k + 2)..n).map(|j| m[(k, j)] / pivot).collect();
            let col: Vec<f64> = ((k + 2)..n).map(|i| m[(i, k + 1)]).collect();
            let r = n - k - 2;
            for a in 0..r {
                for b in 0..r {
                    m[(k + 2 + a, k + 2 + b)] += tau[a] * col[b] - col[a] * tau[b];
                }
            }
        }
        k += 2;
    }
    pf
}

/// Determinant through LU with partial pivoting. Serves as an oracle for `Pf(A)² = det(A)`.
pub fn determinant(a: &SkewMatrix) -> f64 {
    if a.dim() == 0 {
        return 1.0;
    }
    a.entries.clone().lu().determinant()
}

/// Returns `E A Eᵀ`, exactly antisymmetrized.
pub fn congruence(a: &SkewMatrix, e: &DMatrix<f64>) -> Result<SkewMatrix, SkewError> {
    let n = a.dim();
    if e.nrows() != n || e.ncols() != n {
        return Err(SkewError::DimensionMismatch {
            expected: n,
            rows: e.nrows(),
            cols: e.ncols(),
        });
    }
    let prod = e * &a.entries * e.transpose();
    let entries = (&prod - prod.transpose()) * 0.5;
    Ok(SkewMatrix { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_skew(dim: usize, rng: &mut impl Rng) -> SkewMatrix {
        SkewMatrix::from_upper(dim, |_, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn example4() -> SkewMatrix {
        let (a12, a13, a14, a23, a24, a34) = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        SkewMatrix::from_rows(&[
            vec![0.0, a12, a13, a14],
            vec![-a12, 0.0, a23, a24],
            vec![-a13, -a23, 0.0, a34],
            vec![-a14, -a24, -a34, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn two_by_two_is_upper_entry() {
        let a = SkewMatrix::from_rows(&[vec![0.0, 3.0], vec![-3.0, 0.0]]).unwrap();
        assert_eq!(pfaffian(&a), 3.0);
        assert!((determinant(&a) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn four_by_four_expansion() {
        let a = example4();
        assert!((pfaffian(&a) - 8.0).abs() < 1e-12);
        assert!((determinant(&a) - 64.0).abs() < 1e-9);
    }

    #[test]
    fn empty_matrix_conventions() {
        let a = SkewMatrix::empty();
        assert_eq!(pfaffian(&a), 1.0);
        assert_eq!(determinant(&a), 1.0);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(
            SkewMatrix::new(DMatrix::zeros(2, 3)),
            Err(SkewError::NotSquare { .. })
        ));
        assert!(matches!(
            SkewMatrix::new(DMatrix::zeros(3, 3)),
            Err(SkewError::OddDimension(3))
        ));
        let bad = SkewMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.0 + 1e-9, 0.0]]);
        assert!(matches!(bad, Err(SkewError::NotAntisymmetric { .. })));
        let diag = SkewMatrix::from_rows(&[vec![1e-6, 1.0], vec![-1.0, 0.0]]);
        assert!(matches!(diag, Err(SkewError::NotAntisymmetric { .. })));
    }

    #[test]
    fn small_defects_are_symmetrized_exactly() {
        let a = SkewMatrix::from_rows(&[vec![0.0, 1.0 + 4e-13], vec![-1.0, 0.0]]).unwrap();
        assert_eq!(a.get(0, 1), -a.get(1, 0));
        assert!((pfaffian(&a) - (1.0 + 2e-13)).abs() < 1e-15);
    }

    #[test]
    fn pfaffian_squared_matches_lu_determinant_8x8() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let a = random_skew(8, &mut rng);
            let (pf, det) = (pfaffian(&a), determinant(&a));
            assert!((pf * pf - det).abs() <= 1e-10 * det.abs().max(1e-3), "{pf} {det}");
        }
    }

    #[test]
    fn identity_congruence_is_noop() {
        let a = example4();
        let b = congruence(&a, &DMatrix::identity(4, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn transposition_congruence_flips_sign() {
        let a = example4();
        let mut e = DMatrix::<f64>::identity(4, 4);
        e.swap_rows(1, 3);
        let b = congruence(&a, &e).unwrap();
        assert!((pfaffian(&b) + pfaffian(&a)).abs() < 1e-12);
    }

    #[test]
    fn congruence_scales_by_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let a = random_skew(6, &mut rng);
            let e = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
            let lhs = pfaffian(&congruence(&a, &e).unwrap());
            let rhs = e.clone().lu().determinant() * pfaffian(&a);
            assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn congruence_dimension_mismatch() {
        let a = example4();
        assert!(congruence(&a, &DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn duplicated_pairs_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_skew(6, &mut rng);
        // make index 4 a copy of index 1 (in rows and columns)
        let mut m = a.entries().clone();
        for j in 0..6 {
            m[(4, j)] = m[(1, j)];
            m[(j, 4)] = m[(j, 1)];
        }
        m[(1, 4)] = 0.0;
        m[(4, 1)] = 0.0;
        m[(4, 4)] = 0.0;
        let b = SkewMatrix::new(m).unwrap();
        assert!(pfaffian(&b).abs() < 1e-10);
    }

    fn skew_strategy() -> impl Strategy<Value = SkewMatrix> {
        (1usize..=15, any::<u64>()).prop_map(|(half, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            random_skew(2 * half, &mut rng)
        })
    }

    proptest! {
        #[test]
        fn pf_squared_is_det(a in skew_strategy()) {
            let pf = pfaffian(&a);
            let det = determinant(&a);
            let scale = det.abs().max(f64::MIN_POSITIVE);
            prop_assert!((pf * pf - det).abs() <= 1e-8 * scale.max(1e-12), "pf²={} det={}", pf * pf, det);
        }

        #[test]
        fn pair_swap_negates(a in skew_strategy(), i in 0usize..30, j in 0usize..30) {
            let n = a.dim();
            let (i, j) = (i % n, j % n);
            prop_assume!(i != j);
            let pf = pfaffian(&a);
            let swapped = pfaffian(&a.swap_pair(i, j));
            prop_assert!((pf + swapped).abs() <= 1e-12 * pf.abs().max(1.0));
        }

        #[test]
        fn homogeneity(a in skew_strategy()) {
            let n = a.dim();
            let pf = pfaffian(&a);
            for c in [-2.0f64, 0.5] {
                let expected = c.powi((n / 2) as i32) * pf;
                let got = pfaffian(&a.scaled(c));
                prop_assert!((got - expected).abs() <= 1e-10 * expected.abs().max(1e-12));
            }
        }
    }
}
