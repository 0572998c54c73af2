//! Sparse storage and a direct solver for banded systems with a dense border and a
//! low-rank correction.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

type C = Complex64;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<C>,
}

impl CsrMatrix {
    /// Builds the matrix, summing duplicates in input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, C)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![C::ZERO; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut out = Vec::with_capacity(triplets.len());
        for r in 0..n {
            let mut row: Vec<(usize, C)> = (counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])).collect();
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut s = C::ZERO;
                while k < row.len() && row[k].0 == c {
                    s += row[k].1;
                    k += 1;
                }
                col_idx.push(c);
                out.push(s);
            }
            row_ptr[r + 1] = col_idx.len();
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            vals: out,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, r: usize, c: usize) -> C {
        let s = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        match s.binary_search(&c) {
            Ok(k) => self.vals[self.row_ptr[r] + k],
            Err(_) => C::ZERO,
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.vals[k]))
    }

    pub fn mul_vec(&self, x: &[C]) -> Vec<C> {
        (0..self.n).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// Frobenius norm of the entries with `r in rows` and `c in cols`.
    pub fn block_norm(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> f64 {
        rows.flat_map(|r| self.row(r))
            .filter(|(c, _)| cols.contains(c))
            .map(|(_, v)| v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Symmetric low-rank term `W^H C W` acting on the entries `rows` of a vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRank {
    pub rows: Vec<usize>,
    /// `r x rows.len()`.
    pub w: DMatrix<C>,
    /// `r x r`.
    pub c: DMatrix<C>,
}

impl LowRank {
    pub fn rank(&self) -> usize {
        self.w.nrows()
    }

    /// `y += W^H C W x`.
    pub fn add_mul(&self, x: &[C], y: &mut [C]) {
        let xs = nalgebra::DVector::from_iterator(self.rows.len(), self.rows.iter().map(|&r| x[r]));
        let t = &self.c * (&self.w * xs);
        let z = self.w.ad_mul(&t);
        for (k, &r) in self.rows.iter().enumerate() {
            y[r] += z[k];
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> C {
        let (Some(a), Some(b)) = (
            self.rows.iter().position(|&r| r == i),
            self.rows.iter().position(|&r| r == j),
        ) else {
            return C::ZERO;
        };
        let wa = self.w.column(a);
        let wb = self.w.column(b);
        let cb = &self.c * wb;
        wa.iter().zip(cb.iter()).map(|(x, y)| x.conj() * y).sum()
    }
}

/// Banded LU factorisation with partial pivoting.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    kv: usize,
    ldab: usize,
    ab: Vec<C>,
    ipiv: Vec<usize>,
}

impl BandLu {
    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        self.kv + r - c + c * self.ldab
    }

    /// `entries(r)` yields the nonzeros of row `r`; all must satisfy `-kl <= c - r <= ku`.
    pub fn factor(
        n: usize,
        kl: usize,
        ku: usize,
        entries: impl Fn(usize) -> Vec<(usize, C)>,
    ) -> Result<Self> {
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut lu = BandLu {
            n,
            kl,
            kv,
            ldab,
            ab: vec![C::ZERO; ldab * n.max(1)],
            ipiv: vec![0; n],
        };
        let mut amax = 0.0f64;
        for r in 0..n {
            for (c, v) in entries(r) {
                let i = lu.idx(r, c);
                lu.ab[i] = v;
                amax = amax.max(v.norm());
            }
        }
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = -1.0;
            for i in 0..=km {
                let a = lu.ab[lu.idx(j + i, j)].norm();
                if a > best {
                    best = a;
                    jp = i;
                }
            }
            lu.ipiv[j] = j + jp;
            if !(best > 1e-300 && best > 1e-15 * amax) {
                return Err(Error::Solver(format!(
                    "singular pivot at column {j}: |pivot| = {best:.3e}, max |a_ij| = {amax:.3e}"
                )));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let (a, b) = (lu.idx(j, c), lu.idx(j + jp, c));
                    lu.ab.swap(a, b);
                }
            }
            let piv = lu.ab[lu.idx(j, j)];
            let inv = 1.0 / piv;
            let col0 = lu.idx(j, j);
            for i in 1..=km {
                lu.ab[col0 + i] *= inv;
            }
            for c in j + 1..=ju {
                let t = lu.ab[lu.idx(j, c)];
                if t == C::ZERO {
                    continue;
                }
                let dst = lu.idx(j, c);
                for i in 1..=km {
                    let l = lu.ab[col0 + i];
                    lu.ab[dst + i] -= l * t;
                }
            }
        }
        Ok(lu)
    }

    pub fn solve_in_place(&self, b: &mut [C]) {
        let n = self.n;
        for j in 0..n {
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
            let lm = self.kl.min(n - 1 - j);
            let bj = b[j];
            if bj != C::ZERO {
                let col0 = self.idx(j, j);
                for i in 1..=lm {
                    b[j + i] -= self.ab[col0 + i] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[self.idx(j, j)];
            let bj = b[j];
            if bj != C::ZERO {
                let lo = j.saturating_sub(self.kv);
                for i in lo..j {
                    b[i] -= self.ab[self.idx(i, j)] * bj;
                }
            }
        }
    }
}

/// Factorisation of `A + W^H C W` where the rows of `A` are reordered by `order`
/// so that all but the last `n_border` unknowns form a banded block.
pub struct Factorization {
    a: CsrMatrix,
    low_rank: Option<LowRank>,
    order: Vec<usize>,
    n_inner: usize,
    band: BandLu,
    /// `A_II^{-1} A_IB`.
    z: DMatrix<C>,
    /// Border rows of `A` in reordered numbering, split into inner and border parts.
    a_bi: Vec<Vec<(usize, C)>>,
    schur: Option<nalgebra::linalg::LU<C, nalgebra::Dyn, nalgebra::Dyn>>,
    /// `S^{-1} W^H` and the LU of the capacitance matrix `I + C W S^{-1} W^H`.
    woodbury: Option<(DMatrix<C>, nalgebra::linalg::LU<C, nalgebra::Dyn, nalgebra::Dyn>)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    /// `||A x - b|| / ||b||`.
    pub residual: f64,
    pub refinement_steps: usize,
    pub bandwidth: (usize, usize),
}

fn norm(v: &[C]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

impl Factorization {
    pub fn new(
        a: CsrMatrix,
        low_rank: Option<LowRank>,
        order: Vec<usize>,
        n_border: usize,
    ) -> Result<Self> {
        let n = a.n;
        if order.len() != n || n_border > n {
            return Err(Error::Solver("inconsistent ordering".into()));
        }
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            inv[old] = new;
        }
        if inv.contains(&usize::MAX) {
            return Err(Error::Solver("ordering is not a permutation".into()));
        }
        let ni = n - n_border;
        let rows: Vec<Vec<(usize, C)>> = order
            .iter()
            .map(|&old| {
                let mut r: Vec<(usize, C)> = a.row(old).map(|(c, v)| (inv[c], v)).collect();
                r.sort_by_key(|e| e.0);
                r
            })
            .collect();
        let (mut kl, mut ku) = (0usize, 0usize);
        for (r, row) in rows.iter().enumerate().take(ni) {
            for &(c, _) in row {
                if c < ni {
                    if c < r {
                        kl = kl.max(r - c);
                    } else {
                        ku = ku.max(c - r);
                    }
                }
            }
        }
        let band = BandLu::factor(ni, kl, ku, |r| {
            rows[r].iter().copied().filter(|&(c, _)| c < ni).collect()
        })?;

        let nb = n_border;
        let mut z = DMatrix::<C>::zeros(ni, nb);
        for (r, row) in rows.iter().enumerate().take(ni) {
            for &(c, v) in row {
                if c >= ni {
                    z[(r, c - ni)] = v;
                }
            }
        }
        for k in 0..nb {
            band.solve_in_place(z.column_mut(k).as_mut_slice());
        }
        let a_bi: Vec<Vec<(usize, C)>> = rows[ni..].to_vec();
        let schur = if nb > 0 {
            let mut s = DMatrix::<C>::zeros(nb, nb);
            for (i, row) in a_bi.iter().enumerate() {
                for &(c, v) in row {
                    if c >= ni {
                        s[(i, c - ni)] += v;
                    } else {
                        for k in 0..nb {
                            s[(i, k)] -= v * z[(c, k)];
                        }
                    }
                }
            }
            let lu = s.lu();
            if !lu.is_invertible() {
                return Err(Error::Solver("singular border Schur complement".into()));
            }
            Some(lu)
        } else {
            None
        };
        let mut f = Factorization {
            a,
            low_rank: None,
            order,
            n_inner: ni,
            band,
            z,
            a_bi,
            schur,
            woodbury: None,
        };
        if let Some(lr) = low_rank {
            let r = lr.rank();
            let mut y = DMatrix::<C>::zeros(n, r);
            for k in 0..r {
                let mut col = vec![C::ZERO; n];
                for (j, &row) in lr.rows.iter().enumerate() {
                    col[row] = lr.w[(k, j)].conj();
                }
                let s = f.solve_sparse(&col);
                y.column_mut(k).copy_from_slice(&s);
            }
            let mut wy = DMatrix::<C>::zeros(r, r);
            for (j, &row) in lr.rows.iter().enumerate() {
                for k in 0..r {
                    let yk = y[(row, k)];
                    for i in 0..r {
                        wy[(i, k)] += lr.w[(i, j)] * yk;
                    }
                }
            }
            let cap = DMatrix::<C>::identity(r, r) + &lr.c * wy;
            let lu = cap.lu();
            if !lu.is_invertible() {
                return Err(Error::Solver("singular low-rank capacitance matrix".into()));
            }
            f.woodbury = Some((y, lu));
            f.low_rank = Some(lr);
        }
        Ok(f)
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.band.kl, self.band.kv - self.band.kl)
    }

    /// Solves with the sparse part only.
    fn solve_sparse(&self, b: &[C]) -> Vec<C> {
        let ni = self.n_inner;
        let mut y: Vec<C> = self.order.iter().map(|&o| b[o]).collect();
        let (yi, yb) = y.split_at_mut(ni);
        self.band.solve_in_place(yi);
        if let Some(lu) = &self.schur {
            let mut rb = nalgebra::DVector::<C>::from_iterator(yb.len(), yb.iter().copied());
            for (i, row) in self.a_bi.iter().enumerate() {
                for &(c, v) in row {
                    if c < ni {
                        rb[i] -= v * yi[c];
                    }
                }
            }
            let xb = lu.solve(&rb).expect("invertible Schur complement");
            let corr = &self.z * &xb;
            for r in 0..ni {
                yi[r] -= corr[r];
            }
            yb.copy_from_slice(xb.as_slice());
        }
        let mut x = vec![C::ZERO; y.len()];
        for (new, &old) in self.order.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    fn solve_once(&self, b: &[C]) -> Vec<C> {
        let mut x = self.solve_sparse(b);
        if let (Some(lr), Some((y, cap))) = (&self.low_rank, &self.woodbury) {
            let xs = nalgebra::DVector::from_iterator(lr.rows.len(), lr.rows.iter().map(|&r| x[r]));
            let t = &lr.c * (&lr.w * xs);
            let w = cap.solve(&t).expect("invertible capacitance matrix");
            let corr = y * w;
            for (xi, ci) in x.iter_mut().zip(corr.iter()) {
                *xi -= ci;
            }
        }
        x
    }

    /// `A x + W^H C W x`.
    pub fn apply(&self, x: &[C]) -> Vec<C> {
        let mut y = self.a.mul_vec(x);
        if let Some(lr) = &self.low_rank {
            lr.add_mul(x, &mut y);
        }
        y
    }

    /// Direct solve followed by at most three steps of iterative refinement.
    pub fn solve(&self, b: &[C]) -> (Vec<C>, SolveReport) {
        let bn = norm(b);
        let mut x = self.solve_once(b);
        let mut steps = 0;
        let residual = |x: &[C]| -> (Vec<C>, f64) {
            let ax = self.apply(x);
            let r: Vec<C> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let rn = norm(&r);
            (r, if bn > 0.0 { rn / bn } else { rn })
        };
        let (mut r, mut res) = residual(&x);
        while res > 1e-14 && steps < 3 {
            let dx = self.solve_once(&r);
            let cand: Vec<C> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
            let (r2, res2) = residual(&cand);
            steps += 1;
            if res2 >= res {
                break;
            }
            x = cand;
            r = r2;
            res = res2;
        }
        (
            x,
            SolveReport {
                residual: res,
                refinement_steps: steps,
                bandwidth: self.bandwidth(),
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rc(rng: &mut rand::rngs::StdRng) -> C {
        C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    #[test]
    fn band_lu_matches_dense() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let n = 40;
        let (kl, ku) = (3, 2);
        let mut dense = DMatrix::<C>::zeros(n, n);
        for r in 0..n {
            for c in r.saturating_sub(kl)..(r + ku + 1).min(n) {
                dense[(r, c)] = rc(&mut rng);
            }
        }
        let lu = BandLu::factor(n, kl, ku, |r| {
            (r.saturating_sub(kl)..(r + ku + 1).min(n)).map(|c| (c, dense[(r, c)])).collect()
        })
        .unwrap();
        let b: Vec<C> = (0..n).map(|_| rc(&mut rng)).collect();
        let mut x = b.clone();
        lu.solve_in_place(&mut x);
        let ax = &dense * nalgebra::DVector::from_vec(x);
        for i in 0..n {
            assert!((ax[i] - b[i]).norm() < 1e-11);
        }
    }

    #[test]
    fn bordered_with_low_rank() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let n = 30;
        let mut trip = Vec::new();
        for r in 0..n {
            trip.push((r, r, C::new(4.0, 1.0)));
            if r + 1 < n {
                trip.push((r, r + 1, rc(&mut rng)));
                trip.push((r + 1, r, rc(&mut rng)));
            }
            // wrap-around coupling handled by the border
            trip.push((r, (r + n - 1) % n, rc(&mut rng)));
        }
        trip.push((0, 0, C::new(0.5, 0.0)));
        let a = CsrMatrix::from_triplets(n, &trip);
        let rows = vec![2, 7, 11, 20];
        let r = 3;
        let w = DMatrix::from_fn(r, rows.len(), |_, _| rc(&mut rng));
        let c = DMatrix::from_fn(r, r, |_, _| rc(&mut rng));
        let lr = LowRank { rows, w, c };
        let mut order: Vec<usize> = (1..n - 1).collect();
        order.extend([0, n - 1]);
        let f = Factorization::new(a.clone(), Some(lr.clone()), order, 2).unwrap();
        let b: Vec<C> = (0..n).map(|_| rc(&mut rng)).collect();
        let (x, rep) = f.solve(&b);
        assert!(rep.residual < 1e-13, "{rep:?}");
        // dense oracle
        let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j) + lr.entry(i, j));
        let xd = dense.lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).norm() < 1e-11);
        }
    }
}
