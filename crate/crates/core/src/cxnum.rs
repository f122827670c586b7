//! Dense complex matrices: just enough linear algebra for equivalent
//! channels, interference-cancelling projectors and rank tests.

use std::ops::{Index, IndexMut, Mul};

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative singular-value threshold used for every rank decision in the crate.
pub const DEFAULT_RTOL: f64 = 1e-9;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Row-major dense complex matrix with at least one row and one column.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix {rows}x{cols}");
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix from column vectors of equal length.
    pub fn from_columns(columns: &[Vec<C64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Dimension("ragged columns".into()));
        }
        let cols = columns.len();
        let mut data = vec![ZERO; rows * cols];
        for (j, col) in columns.iter().enumerate() {
            for (i, z) in col.iter().enumerate() {
                data[i * cols + j] = *z;
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn column_vector(v: &[C64]) -> Result<Self> {
        Self::new(v.len(), 1, v.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    /// Column-major stacking, `vec(A)`.
    pub fn vectorize(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.push(self[(r, c)]);
            }
        }
        out
    }

    /// Hermitian transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols, "matrix-vector dimension mismatch");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scaled(&self, k: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * k).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Horizontal concatenation; all parts must share the row count.
    pub fn hstack(parts: &[&CMatrix]) -> Result<Self> {
        let rows = parts
            .first()
            .ok_or_else(|| Error::Dimension("hstack of nothing".into()))?
            .rows;
        if parts.iter().any(|p| p.rows != rows) {
            return Err(Error::Dimension("hstack row mismatch".into()));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            for r in 0..rows {
                for c in 0..p.cols {
                    out[(r, offset + c)] = p[(r, c)];
                }
            }
            offset += p.cols;
        }
        Ok(out)
    }

    /// Columns at the given indices, in order. `None` when `idx` is empty.
    pub fn select_columns(&self, idx: &[usize]) -> Option<Self> {
        if idx.is_empty() {
            return None;
        }
        Some(Self::from_fn(self.rows, idx.len(), |r, c| {
            self[(r, idx[c])]
        }))
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }

    /// Singular values in non-increasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self
            .to_nalgebra()
            .singular_values()
            .iter()
            .copied()
            .collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// Number of singular values above `rtol` times the largest one.
    pub fn numerical_rank(&self, rtol: f64) -> usize {
        rank_of_singular_values(&self.singular_values(), rtol)
    }

    /// Greedy left-to-right maximal independent column subset.
    pub fn max_independent_columns(&self, rtol: f64) -> Vec<usize> {
        let mut kept: Vec<usize> = Vec::new();
        for j in 0..self.cols {
            let mut trial = kept.clone();
            trial.push(j);
            let sub = self.select_columns(&trial).expect("nonempty selection");
            if sub.numerical_rank(rtol) == kept.len() + 1 {
                kept = trial;
            }
        }
        kept
    }

    /// `(GᴴG)⁻¹ Gᴴ y`; errors unless `self` has full column rank.
    pub fn least_squares(&self, y: &[C64]) -> Result<Vec<C64>> {
        if y.len() != self.rows {
            return Err(Error::Dimension(format!(
                "{} entries for {} rows",
                y.len(),
                self.rows
            )));
        }
        let rank = self.numerical_rank(DEFAULT_RTOL);
        if rank < self.cols {
            return Err(Error::RankDeficient {
                rank,
                needed: self.cols,
                stage: None,
            });
        }
        let gn = self.to_nalgebra();
        let gh = gn.adjoint();
        let rhs = &gh * nalgebra::DVector::from_column_slice(y);
        let gram = &gh * &gn;
        let x = match Cholesky::new(gram.clone()) {
            Some(ch) => ch.solve(&rhs),
            None => gram.lu().solve(&rhs).ok_or(Error::RankDeficient {
                rank,
                needed: self.cols,
                stage: None,
            })?,
        };
        Ok(x.iter().copied().collect())
    }

    /// `I - G (GᴴG)⁻¹ Gᴴ` over a maximal independent column subset of `self`.
    pub fn complement_projection(&self) -> CMatrix {
        ComplementProjector::new(self.rows, Some(self)).to_matrix()
    }

    /// QR reduction of `min_x ‖z − self·x‖²`: returns `(R, Qᴴz, rest)` with
    /// `R` upper trapezoidal (`min(rows, cols) × cols`) and
    /// `‖z − self·x‖² = ‖Qᴴz − R x‖² + rest` for every `x`.
    pub fn qr_reduce(&self, z: &[C64]) -> (CMatrix, Vec<C64>, f64) {
        assert_eq!(z.len(), self.rows, "qr_reduce dimension mismatch");
        let qr = self.to_nalgebra().qr();
        let q = qr.q();
        let r = qr.r();
        let zr = q.adjoint() * nalgebra::DVector::from_column_slice(z);
        let zr: Vec<C64> = zr.iter().copied().collect();
        let rest = (vec_norm(z).powi(2) - vec_norm(&zr).powi(2)).max(0.0);
        (CMatrix::from_nalgebra(&r), zr, rest)
    }
}

/// Projected QR reduction: with `P` the projector onto the complement of the
/// columns of `interf`, returns `(R₂₂, u₂, rest)` such that
/// `‖P(z − g s)‖² = ‖u₂ − R₂₂ s‖² + rest` for every `s`, read off one QR of
/// `[interf, g]`. `None` unless `interf` has full column rank (judged on
/// the singular values of `R₁₁`, which equal those of `interf`) and fewer
/// columns than rows.
pub fn projected_qr_reduce(
    interf: &CMatrix,
    g: &CMatrix,
    z: &[C64],
) -> Option<(CMatrix, Vec<C64>, f64)> {
    let n = interf.rows;
    let c1 = interf.cols;
    assert!(
        g.rows == n && z.len() == n,
        "projected_qr_reduce dimension mismatch"
    );
    if c1 >= n {
        return None;
    }
    let full = CMatrix::hstack(&[interf, g])
        .expect("row counts agree")
        .to_nalgebra();
    let qr = full.qr();
    let r = qr.r();
    let mut sv: Vec<f64> = r
        .view((0, 0), (c1, c1))
        .singular_values()
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if rank_of_singular_values(&sv, DEFAULT_RTOL) < c1 {
        return None;
    }
    let u = qr.q().adjoint() * nalgebra::DVector::from_column_slice(z);
    let k = r.nrows() - c1;
    let r22 = r.view((c1, c1), (k, g.cols)).into_owned();
    let u2: Vec<C64> = u.iter().skip(c1).copied().collect();
    let rest = (vec_norm(z).powi(2) - u.norm_squared()).max(0.0);
    Some((CMatrix::from_nalgebra(&r22), u2, rest))
}

/// Orthogonal projector `I − U Uᴴ` onto the complement of a column span,
/// kept in factored form with `U` the left singular vectors whose singular
/// values pass the rank tolerance. No columns gives the identity.
#[derive(Clone, Debug)]
pub struct ComplementProjector {
    n: usize,
    basis: Option<DMatrix<C64>>,
}

impl ComplementProjector {
    pub fn new(n: usize, g: Option<&CMatrix>) -> Self {
        let Some(g) = g else {
            return Self { n, basis: None };
        };
        assert_eq!(g.rows(), n, "projector size mismatch");
        let svd = g.to_nalgebra().svd(true, false);
        let largest = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| largest > 0.0 && svd.singular_values[i] > DEFAULT_RTOL * largest)
            .collect();
        if keep.is_empty() {
            return Self { n, basis: None };
        }
        let u = svd.u.expect("left vectors requested");
        Self {
            n,
            basis: Some(u.select_columns(&keep)),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Rank of the cancelled subspace.
    pub fn cancelled_rank(&self) -> usize {
        self.basis.as_ref().map_or(0, DMatrix::ncols)
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.n);
        match &self.basis {
            None => v.to_vec(),
            Some(u) => {
                let v = nalgebra::DVector::from_column_slice(v);
                let out = &v - u * (u.adjoint() * &v);
                out.iter().copied().collect()
            }
        }
    }

    pub fn apply_matrix(&self, m: &CMatrix) -> CMatrix {
        assert_eq!(m.rows(), self.n);
        match &self.basis {
            None => m.clone(),
            Some(u) => {
                let mn = m.to_nalgebra();
                let out = &mn - u * (u.adjoint() * &mn);
                CMatrix::from_nalgebra(&out)
            }
        }
    }

    /// Dense `n×n` projector, symmetrized so `Qᴴ = Q` to rounding.
    pub fn to_matrix(&self) -> CMatrix {
        match &self.basis {
            None => CMatrix::identity(self.n),
            Some(u) => {
                let q = DMatrix::<C64>::identity(self.n, self.n) - u * u.adjoint();
                let q = (&q + q.adjoint()).scale(0.5);
                CMatrix::from_nalgebra(&q)
            }
        }
    }
}

/// Projector onto the orthogonal complement of the columns of `g`, or the
/// identity of size `n` when there is nothing to cancel.
pub fn complement_projection_or_identity(n: usize, g: Option<&CMatrix>) -> CMatrix {
    ComplementProjector::new(n, g).to_matrix()
}

pub(crate) fn rank_of_singular_values(sv: &[f64], rtol: f64) -> usize {
    match sv.first() {
        Some(&largest) if largest > 0.0 => sv.iter().filter(|&&s| s > rtol * largest).count(),
        _ => 0,
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == ZERO {
                    continue;
                }
                for c in 0..rhs.cols {
                    out[(r, c)] += a * rhs[(k, c)];
                }
            }
        }
        out
    }
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn vectorize_stacks_columns() {
        let m =
            CMatrix::from_rows(&[vec![c(1., 0.), c(2., 0.)], vec![c(3., 0.), c(4., 0.)]]).unwrap();
        let v: Vec<f64> = m.vectorize().iter().map(|z| z.re).collect();
        assert_eq!(v, vec![1.0, 3.0, 2.0, 4.0]);
        let one = CMatrix::new(1, 1, vec![c(0.5, -2.0)]).unwrap();
        assert_eq!(one.vectorize(), vec![c(0.5, -2.0)]);
    }

    #[test]
    fn least_squares_recovers_exact_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = random_matrix(6, 3, &mut rng);
        let x = vec![c(1.0, -1.0), c(0.25, 0.5), c(-2.0, 0.0)];
        let y = g.mul_vec(&x);
        let est = g.least_squares(&y).unwrap();
        assert!(vec_norm(&vec_sub(&est, &x)) < 1e-12);
        let deficient = CMatrix::hstack(&[&g, &g.select_columns(&[0]).unwrap()]).unwrap();
        assert!(matches!(
            deficient.least_squares(&y),
            Err(Error::RankDeficient {
                rank: 3,
                needed: 4,
                ..
            })
        ));
    }

    #[test]
    fn vectorize_of_product_matches_column_construction() {
        // vec(A H) column block n equals A times column n of H.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(2, 2, &mut rng);
        let h = random_matrix(2, 2, &mut rng);
        let lhs = (&a * &h).vectorize();
        let mut rhs = Vec::new();
        for n in 0..2 {
            rhs.extend(a.mul_vec(&h.column(n)));
        }
        assert!(vec_norm(&vec_sub(&lhs, &rhs)) < 1e-14);
    }

    #[test]
    fn rejects_bad_shapes_and_nan() {
        assert!(CMatrix::new(0, 2, vec![]).is_err());
        assert!(CMatrix::new(2, 2, vec![ZERO; 3]).is_err());
        assert!(matches!(
            CMatrix::new(1, 1, vec![c(f64::NAN, 0.0)]),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(CMatrix::identity(3).numerical_rank(DEFAULT_RTOL), 3);
        assert_eq!(CMatrix::zeros(2, 4).numerical_rank(DEFAULT_RTOL), 0);
        let ones = CMatrix::from_fn(2, 2, |_, _| ONE);
        let sv = ones.singular_values();
        assert!((sv[0] - 2.0).abs() < 1e-12 && sv[1].abs() < 1e-12);
        assert_eq!(ones.numerical_rank(DEFAULT_RTOL), 1);
    }

    #[test]
    fn independent_columns_examples() {
        assert_eq!(
            CMatrix::identity(3).max_independent_columns(DEFAULT_RTOL),
            vec![0, 1, 2]
        );
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c1 = random_matrix(4, 1, &mut rng);
        let c2 = random_matrix(4, 1, &mut rng);
        let doubled = CMatrix::hstack(&[&c1, &c1.scaled(c(2.0, 0.0))]).unwrap();
        assert_eq!(doubled.max_independent_columns(DEFAULT_RTOL), vec![0]);
        let sum = c1.add(&c2);
        let three = CMatrix::hstack(&[&c1, &c2, &sum]).unwrap();
        assert_eq!(three.max_independent_columns(DEFAULT_RTOL), vec![0, 1]);
        assert_eq!(three.numerical_rank(DEFAULT_RTOL), 2);
    }

    #[test]
    fn projection_examples() {
        let q = CMatrix::zeros(3, 2).complement_projection();
        assert_eq!(q, CMatrix::identity(3));

        let e1 = CMatrix::column_vector(&[ONE, ZERO, ZERO]).unwrap();
        let q = e1.complement_projection();
        let expected = CMatrix::from_fn(3, 3, |r, c| if r == c && r > 0 { ONE } else { ZERO });
        assert!(q.sub(&expected).frobenius_norm() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let col = random_matrix(5, 1, &mut rng);
        let dup = CMatrix::hstack(&[&col, &col]).unwrap();
        let q1 = col.complement_projection();
        let q2 = dup.complement_projection();
        assert!(q1.sub(&q2).frobenius_norm() < 1e-12);
    }

    #[test]
    fn projection_is_hermitian_idempotent_and_annihilating() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let g = random_matrix(8, 3, &mut rng);
            let q = g.complement_projection();
            assert!(q.sub(&q.adjoint()).frobenius_norm() < 1e-10);
            assert!((&q * &q).sub(&q).frobenius_norm() < 1e-10);
            assert!((&q * &g).frobenius_norm() < 1e-10 * g.frobenius_norm());
        }
    }

    #[test]
    fn identity_when_nothing_to_cancel() {
        assert_eq!(
            complement_projection_or_identity(4, None),
            CMatrix::identity(4)
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = CMatrix> {
            proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), rows * cols).prop_map(
                move |v| {
                    CMatrix::new(
                        rows,
                        cols,
                        v.into_iter().map(|(a, b)| C64::new(a, b)).collect(),
                    )
                    .unwrap()
                },
            )
        }

        proptest! {
            #[test]
            fn rank_invariant_under_permutation_and_scaling(
                g in matrix(6, 4),
                perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
                scales in proptest::collection::vec(0.1f64..3.0, 4),
            ) {
                let permuted = g.select_columns(&perm).unwrap();
                let scaled = CMatrix::from_fn(6, 4, |r, c| permuted[(r, c)] * scales[c]);
                prop_assert_eq!(g.numerical_rank(DEFAULT_RTOL), scaled.numerical_rank(DEFAULT_RTOL));
            }

            #[test]
            fn projector_contract(g in matrix(7, 3)) {
                let q = g.complement_projection();
                prop_assert!(q.sub(&q.adjoint()).max_abs() < 1e-10);
                prop_assert!((&q * &q).sub(&q).max_abs() < 1e-10);
                prop_assert!((&q * &g).frobenius_norm() < 1e-10 * g.frobenius_norm().max(1e-300));
            }
        }
    }
}
