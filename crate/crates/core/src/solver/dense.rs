//! Assembled Kirchhoff systems and the dense LU oracle.

use super::{check_dims, PackResistances, SolveError};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "row {i} has wrong length");
            m.row_mut(i).copy_from_slice(row);
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Kirchhoff system for an ideal busbar: row 0 is KCL, row `k` equates cell
/// `k + 1` with cell 1.
///
/// ```text
/// [ 1    1    1  ...  1  ]       [ I         ]
/// [ r_1 -r_2  0  ...  0  ]  i =  [ v̄_2 − v̄_1 ]
/// [ r_1  0   -r_3 ... 0  ]       [ v̄_3 − v̄_1 ]
/// ```
pub fn build_a22_no_interconnect(
    res: &PackResistances,
    vbar: &[f64],
    applied: f64,
) -> (DenseMatrix, Vec<f64>) {
    let n = res.n();
    let mut a = DenseMatrix::zeros(n);
    let mut q = vec![0.0; n];
    a.row_mut(0).fill(1.0);
    q[0] = applied;
    for k in 1..n {
        a[(k, 0)] = res.r(1);
        a[(k, k)] = -res.r(k + 1);
        q[k] = vbar[k] - vbar[0];
    }
    (a, q)
}

/// Kirchhoff system with interconnection resistances. Row `k` is the loop
/// between adjacent cells `k` and `k + 1`:
///
/// `r_k i_k − (r_{k+1} + R_{k+1}) i_{k+1} − R_{k+1} (i_{k+2} + ... + i_n) = v̄_{k+1} − v̄_k`.
///
/// Every superdiagonal entry of row `k` past the diagonal is `−R_{k+1}`.
pub fn build_a22_interconnect(
    res: &PackResistances,
    vbar: &[f64],
    applied: f64,
) -> (DenseMatrix, Vec<f64>) {
    let n = res.n();
    let mut a = DenseMatrix::zeros(n);
    let mut q = vec![0.0; n];
    a.row_mut(0).fill(1.0);
    q[0] = applied;
    for k in 1..n {
        let big_r = res.big_r(k + 1);
        let row = a.row_mut(k);
        row[k - 1] = res.r(k);
        row[k] = -(res.r(k + 1) + big_r);
        row[k + 1..].fill(-big_r);
        q[k] = vbar[k] - vbar[k - 1];
    }
    (a, q)
}

/// Relative pivot floor for [`solve_dense_oracle`].
pub const PIVOT_FLOOR: f64 = 1e-14;

/// Solves `a x = q` by LU factorisation with partial pivoting.
///
/// A pivot smaller than `PIVOT_FLOOR` times the largest entry of its original
/// row is reported as [`SolveError::SingularSystem`].
pub fn solve_dense_oracle(a: &DenseMatrix, q: &[f64]) -> Result<Vec<f64>, SolveError> {
    let n = a.n();
    if q.len() != n {
        return Err(SolveError::DimensionMismatch(format!(
            "{n}×{n} matrix with right-hand side of length {}",
            q.len()
        )));
    }
    let mut lu = a.clone();
    let mut x = q.to_vec();
    let mut scale: Vec<f64> = (0..n)
        .map(|i| lu.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect();

    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|i| (i, lu[(i, col)].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pivot_abs > PIVOT_FLOOR * scale[pivot_row]) || scale[pivot_row] == 0.0 {
            return Err(SolveError::SingularSystem {
                column: col,
                pivot: pivot_abs,
            });
        }
        if pivot_row != col {
            for j in 0..n {
                lu.data.swap(col * n + j, pivot_row * n + j);
            }
            x.swap(col, pivot_row);
            scale.swap(col, pivot_row);
        }
        let pivot = lu[(col, col)];
        let (upper, lower) = lu.data.split_at_mut((col + 1) * n);
        let pivot_row_tail = &upper[col * n + col + 1..col * n + n];
        let xc = x[col];
        for (offset, row) in lower.chunks_exact_mut(n).enumerate() {
            let factor = row[col] / pivot;
            if factor == 0.0 {
                continue;
            }
            row[col] = factor;
            for (dst, &src) in row[col + 1..].iter_mut().zip(pivot_row_tail) {
                *dst -= factor * src;
            }
            x[col + 1 + offset] -= factor * xc;
        }
    }

    for i in (0..n).rev() {
        let row = lu.row(i);
        let tail: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(a, b)| a * b).sum();
        x[i] = (x[i] - tail) / row[i];
    }
    Ok(x)
}

/// Dense-route branch solve on the interconnect system.
pub fn dense_branch_currents(
    res: &PackResistances,
    vbar: &[f64],
    applied: f64,
) -> Result<Vec<f64>, SolveError> {
    check_dims(res, vbar)?;
    let (a, q) = build_a22_interconnect(res, vbar, applied);
    solve_dense_oracle(&a, &q)
}
