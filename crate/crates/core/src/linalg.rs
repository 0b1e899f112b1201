//! Banded linear algebra: LU with partial pivoting, bordered solves,
//! symmetric tridiagonal inertia counts and inverse iteration.

use crate::error::{CarrierError, Result};

/// Pivots smaller than this multiple of the largest matrix entry are treated as zero.
pub const PIVOT_RELATIVE_TOL: f64 = 1e-14;

/// General band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Storage follows the LAPACK band layout with `kl` extra rows reserved for
/// pivoting fill-in, so a matrix can be factored in place.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self { n, kl, ku, ldab, ab: vec![0.0; ldab * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i <= j + self.kl && j <= i + self.ku
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Panics if `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.ab[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut s = 0.0;
            for (j, xj) in x.iter().enumerate().take(hi + 1).skip(lo) {
                s += self.ab[self.idx(i, j)] * xj;
            }
            *yi = s;
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.ab.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// LU factorisation with partial pivoting.
    #[allow(clippy::needless_range_loop)]
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let kv = self.kl + self.ku;
        let scale = self.max_abs();
        if n == 0 {
            return Ok(BandLu { m: self, ipiv: Vec::new() });
        }
        if !scale.is_finite() {
            return Err(CarrierError::NonFinite("band matrix entries".into()));
        }
        let tiny = PIVOT_RELATIVE_TOL * scale;
        let ldab = self.ldab;
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ldab;
            let mut jp = 0usize;
            let mut best = self.ab[col + kv].abs();
            for r in 1..=km {
                let v = self.ab[col + kv + r].abs();
                if v > best {
                    best = v;
                    jp = r;
                }
            }
            ipiv[j] = j + jp;
            if best <= tiny || best == 0.0 {
                return Err(CarrierError::SingularPivot { index: j, magnitude: best });
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = c * ldab + kv + j - c;
                    let b = c * ldab + kv + j + jp - c;
                    self.ab.swap(a, b);
                }
            }
            let piv = self.ab[col + kv];
            for r in 1..=km {
                self.ab[col + kv + r] /= piv;
            }
            for c in (j + 1)..=ju {
                let cc = c * ldab;
                let t = self.ab[cc + kv + j - c];
                if t != 0.0 {
                    for r in 1..=km {
                        let l = self.ab[col + kv + r];
                        self.ab[cc + kv + j + r - c] -= l * t;
                    }
                }
            }
        }
        Ok(BandLu { m: self, ipiv })
    }
}

/// Factored band matrix.
#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.m.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.m.n;
        assert_eq!(b.len(), n);
        let kl = self.m.kl;
        let kv = self.m.kl + self.m.ku;
        let ldab = self.m.ldab;
        let ab = &self.m.ab;
        for j in 0..n.saturating_sub(1) {
            let lm = kl.min(n - 1 - j);
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
            let bj = b[j];
            if bj != 0.0 {
                let col = j * ldab + kv;
                for r in 1..=lm {
                    b[j + r] -= ab[col + r] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let col = j * ldab + kv;
            b[j] /= ab[col];
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(kv);
                for i in lo..j {
                    b[i] -= ab[col + i - j] * bj;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Square tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        let m = n.saturating_sub(1);
        Self { lower: vec![0.0; m], diag: vec![0.0; n], upper: vec![0.0; m] }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i == j + 1 {
            self.lower[j]
        } else if j == i + 1 {
            self.upper[i]
        } else {
            0.0
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn to_band(&self) -> BandMatrix {
        let n = self.dim();
        let mut b = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            b.set(i, i, self.diag[i]);
            if i + 1 < n {
                b.set(i + 1, i, self.lower[i]);
                b.set(i, i + 1, self.upper[i]);
            }
        }
        b
    }

    pub fn factor(&self) -> Result<BandLu> {
        self.to_band().factor()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factor()?.solve(b))
    }
}

/// Solves the bordered system `[A c; r^T d] [x; e] = [f; g]`.
///
/// The border is absorbed into a band system three times as large, using
/// running sums of `r_i x_i` and a copy of the scalar unknown at every index.
/// Unlike block elimination this stays well posed when `A` itself is singular.
pub fn solve_bordered(
    a: &BandMatrix,
    col: &[f64],
    row: &[f64],
    corner: f64,
    rhs: &[f64],
    rhs_last: f64,
) -> Result<(Vec<f64>, f64)> {
    let n = a.dim();
    assert!(n > 0);
    assert_eq!(col.len(), n);
    assert_eq!(row.len(), n);
    assert_eq!(rhs.len(), n);
    let kl = 3 * a.lower_bandwidth() + 1;
    let ku = (3 * a.upper_bandwidth()).saturating_sub(1).max(2);
    let mut m = BandMatrix::zeros(3 * n, kl, ku);
    let mut b = vec![0.0; 3 * n];
    for i in 0..n {
        let (rc, ra, rch) = (3 * i, 3 * i + 1, 3 * i + 2);
        // running sum s_i = s_{i-1} + r_i x_i
        m.set(rc, 3 * i + 2, 1.0);
        if i > 0 {
            m.set(rc, 3 * i - 1, -1.0);
        }
        m.set(rc, 3 * i, -row[i]);
        // row i of A plus the border column
        let lo = i.saturating_sub(a.lower_bandwidth());
        let hi = (i + a.upper_bandwidth()).min(n - 1);
        for j in lo..=hi {
            let v = a.get(i, j);
            if v != 0.0 {
                m.set(ra, 3 * j, v);
            }
        }
        m.set(ra, 3 * i + 1, col[i]);
        b[ra] = rhs[i];
        // copies of the scalar unknown agree; the last row closes the border
        if i + 1 < n {
            m.set(rch, 3 * i + 1, 1.0);
            m.set(rch, 3 * i + 4, -1.0);
        } else {
            m.set(rch, 3 * i + 2, 1.0);
            m.set(rch, 3 * i + 1, corner);
            b[rch] = rhs_last;
        }
    }
    let lu = m.factor()?;
    lu.solve_in_place(&mut b);
    let x: Vec<f64> = (0..n).map(|i| b[3 * i]).collect();
    Ok((x, b[1]))
}

/// Number of eigenvalues below `shift` of the symmetric tridiagonal matrix
/// with diagonal `d` and off-diagonal products `e2[i] = a_{i,i+1} a_{i+1,i}`.
///
/// Products are used so that symmetrisable (sign-symmetric) matrices can be
/// counted without forming the symmetric similarity transform.
pub fn sturm_count(d: &[f64], e2: &[f64], shift: f64) -> usize {
    let n = d.len();
    if n == 0 {
        return 0;
    }
    assert_eq!(e2.len() + 1, n);
    let scale = d.iter().fold(0.0_f64, |m, v| m.max(v.abs())) + e2.iter().fold(0.0_f64, |m, v| m.max(v.abs().sqrt()));
    let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let mut count = 0;
    let mut q = d[0] - shift;
    if q.abs() < tiny {
        q = -tiny;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..n {
        q = d[i] - shift - e2[i - 1] / q;
        if q.abs() < tiny {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Eigenpair of the symmetric tridiagonal matrix closest to `shift`,
/// by inverse iteration from a fixed deterministic start vector.
///
/// Returns the Rayleigh quotient and a unit (Euclidean) eigenvector.
pub fn inverse_iteration(t: &Tridiagonal, shift: f64, iterations: usize) -> Result<(f64, Vec<f64>)> {
    let n = t.dim();
    assert!(n > 0);
    let mut shifted = t.clone();
    let mut attempt = 0;
    let lu = loop {
        for (i, d) in shifted.diag.iter_mut().enumerate() {
            *d = t.diag[i] - shift - attempt as f64 * 1e-8;
        }
        match shifted.factor() {
            Ok(lu) => break lu,
            Err(CarrierError::SingularPivot { .. }) if attempt == 0 => attempt = 1,
            Err(e) => return Err(e),
        }
    };
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.7548776662466927).fract()).collect();
    normalize(&mut v);
    for _ in 0..iterations.max(1) {
        lu.solve_in_place(&mut v);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CarrierError::NonFinite("inverse iteration".into()));
        }
        normalize(&mut v);
    }
    let tv = t.matvec(&v);
    let lambda: f64 = tv.iter().zip(&v).map(|(a, b)| a * b).sum();
    Ok((lambda, v))
}

fn normalize(v: &mut [f64]) {
    let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
