//! Symmetric sparse direct solver and shift-invert eigensolver.
//!
//! The factorization is an envelope (skyline) `L D L^T` in reverse
//! Cuthill-McKee order. The structured strip meshes have a narrow profile
//! (about `J` wide), so the envelope carries little fill. Rows whose diagonal
//! is weak relative to their largest off-diagonal entry are paired with that
//! neighbour before ordering and eliminated as a 2x2 pivot block, which
//! handles symmetric indefinite matrices such as `[[0, 1], [1, 0]]`.
//! Pivots that still vanish during elimination are reported, not perturbed.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::SymSparse;
use crate::error::{Error, Result};

/// Bunch-Kaufman growth constant `(1 + sqrt 17) / 8`.
const PAIR_ALPHA: f64 = 0.640_388_203_202_208_4;
/// Pivots smaller than this times the row scale count as zero.
const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Factorization {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// Envelope start of each row (permuted numbering).
    first: Vec<usize>,
    row_ptr: Vec<usize>,
    /// Strictly lower entries of the unit factor, row by row.
    lower: Vec<f64>,
    /// Block diagonal: `diag[i]`, and `off[i] = D[i+1][i]` when `(i, i+1)` is a 2x2 block.
    diag: Vec<f64>,
    off: Vec<f64>,
    pair_start: Vec<bool>,
}

/// Pivot rows eliminated together, in original numbering.
fn pair_weak_rows(s: &SymSparse) -> Vec<Vec<usize>> {
    let n = s.dim();
    let mut diag = vec![0.0; n];
    let mut best: Vec<(f64, usize)> = vec![(0.0, usize::MAX); n];
    for (i, j, v) in s.iter_upper() {
        if i == j {
            diag[i] = v;
            continue;
        }
        // ties broken towards the lower index for determinism
        if v.abs() > best[i].0 || (v.abs() == best[i].0 && j < best[i].1) {
            best[i] = (v.abs(), j);
        }
        if v.abs() > best[j].0 || (v.abs() == best[j].0 && i < best[j].1) {
            best[j] = (v.abs(), i);
        }
    }
    let mut taken = vec![false; n];
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        if taken[i] {
            continue;
        }
        let (gamma, r) = best[i];
        let weak = gamma > 0.0 && diag[i].abs() < PAIR_ALPHA * gamma;
        if weak && !taken[r] {
            let a_ir = s.get(i, r);
            let det = diag[i] * diag[r] - a_ir * a_ir;
            if det.abs() >= 1e-2 * a_ir * a_ir {
                taken[i] = true;
                taken[r] = true;
                groups.push(vec![i, r]);
                continue;
            }
        }
        taken[i] = true;
        groups.push(vec![i]);
    }
    groups
}

/// Reverse Cuthill-McKee on the graph whose vertices are pivot groups.
fn rcm_order(s: &SymSparse, groups: &[Vec<usize>]) -> Vec<usize> {
    let n = s.dim();
    let mut group_of = vec![0; n];
    for (g, members) in groups.iter().enumerate() {
        for &m in members {
            group_of[m] = g;
        }
    }
    let ng = groups.len();
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(2 * s.nnz_upper());
    for (i, j, _) in s.iter_upper() {
        let (a, b) = (group_of[i], group_of[j]);
        if a != b {
            edges.push((a, b));
            edges.push((b, a));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let mut ptr = vec![0; ng + 1];
    for &(a, _) in &edges {
        ptr[a + 1] += 1;
    }
    for g in 0..ng {
        ptr[g + 1] += ptr[g];
    }
    let adj: Vec<usize> = edges.iter().map(|e| e.1).collect();
    let degree = |g: usize| ptr[g + 1] - ptr[g];

    let mut visited = vec![false; ng];
    let mut order = Vec::with_capacity(ng);
    let mut level = vec![usize::MAX; ng];
    // BFS levels from `root`, restricted to the current component
    let bfs = |root: usize, level: &mut Vec<usize>, touched: &mut Vec<usize>| -> usize {
        for &t in touched.iter() {
            level[t] = usize::MAX;
        }
        touched.clear();
        let mut queue = VecDeque::from([root]);
        level[root] = 0;
        touched.push(root);
        let mut depth = 0;
        while let Some(g) = queue.pop_front() {
            depth = depth.max(level[g]);
            for &h in &adj[ptr[g]..ptr[g + 1]] {
                if level[h] == usize::MAX {
                    level[h] = level[g] + 1;
                    touched.push(h);
                    queue.push_back(h);
                }
            }
        }
        depth
    };

    let mut touched = Vec::new();
    for seed in 0..ng {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral root (George-Liu)
        let mut root = seed;
        let mut depth = bfs(root, &mut level, &mut touched);
        loop {
            let last = touched
                .iter()
                .copied()
                .filter(|&g| level[g] == depth)
                .min_by_key(|&g| (degree(g), g))
                .expect("non-empty last level");
            let d = bfs(last, &mut level, &mut touched);
            if d > depth {
                depth = d;
                root = last;
            } else {
                break;
            }
        }
        // Cuthill-McKee sweep
        let start = order.len();
        visited[root] = true;
        order.push(root);
        let mut head = start;
        let mut nbrs = Vec::new();
        while head < order.len() {
            let g = order[head];
            head += 1;
            nbrs.clear();
            nbrs.extend(adj[ptr[g]..ptr[g + 1]].iter().copied().filter(|&h| !visited[h]));
            nbrs.sort_unstable_by_key(|&h| (degree(h), h));
            for &h in &nbrs {
                visited[h] = true;
                order.push(h);
            }
        }
    }
    order.reverse();
    order.into_iter().flat_map(|g| groups[g].iter().copied()).collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

/// Signed `L D L^T` of a symmetric matrix.
pub fn factorize(s: &SymSparse) -> Result<Factorization> {
    if !s.is_finite() {
        return Err(Error::Factorization("matrix has non-finite entries".into()));
    }
    let n = s.dim();
    let groups = pair_weak_rows(s);
    let perm = rcm_order(s, &groups);
    let mut iperm = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        iperm[old] = new;
    }
    let mut pair_start = vec![false; n];
    for g in &groups {
        if g.len() == 2 {
            let p = iperm[g[0]].min(iperm[g[1]]);
            debug_assert_eq!(iperm[g[0]].max(iperm[g[1]]), p + 1);
            pair_start[p] = true;
        }
    }

    let mut first: Vec<usize> = (0..n).collect();
    let mut diag = vec![0.0; n];
    let mut scale = vec![0.0_f64; n];
    for (i, j, v) in s.iter_upper() {
        let (p, q) = (iperm[i], iperm[j]);
        let (row, col) = if p >= q { (p, q) } else { (q, p) };
        first[row] = first[row].min(col);
        scale[p] = scale[p].max(v.abs());
        scale[q] = scale[q].max(v.abs());
        if p == q {
            diag[p] = v;
        }
    }
    for k in 0..n.saturating_sub(1) {
        if pair_start[k] {
            first[k + 1] = first[k + 1].min(k);
        }
    }
    for i in 0..n {
        let f = first[i];
        if f > 0 && f < i && pair_start[f - 1] {
            first[i] = f - 1;
        }
    }
    let mut row_ptr = vec![0; n + 1];
    for i in 0..n {
        row_ptr[i + 1] = row_ptr[i] + (i - first[i]);
    }
    let mut lower = vec![0.0; row_ptr[n]];
    for (i, j, v) in s.iter_upper() {
        let (p, q) = (iperm[i], iperm[j]);
        if p != q {
            let (row, col) = if p > q { (p, q) } else { (q, p) };
            lower[row_ptr[row] + col - first[row]] = v;
        }
    }

    let mut off = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let (done, rest) = lower.split_at_mut(row_ptr[i]);
        let s_i = first[i];
        let row = &mut rest[..i - s_i];
        // unit-lower solve: row <- w where w_j = A_ij - sum_{p<j} L_jp w_p
        for j in s_i..i {
            let f_j = first[j];
            let lo = s_i.max(f_j);
            if lo < j {
                let lj = &done[row_ptr[j] + lo - f_j..row_ptr[j] + j - f_j];
                let d = dot(lj, &row[lo - s_i..j - s_i]);
                row[j - s_i] -= d;
            }
        }
        if pair_start[i] {
            // row i+1 shares the solve; its (i+1, i) slot becomes D's off-diagonal
            let (done2, rest2) = lower.split_at_mut(row_ptr[i + 1]);
            let s_n = first[i + 1];
            let row_n = &mut rest2[..i + 1 - s_n];
            for j in s_n..=i {
                let f_j = first[j];
                let lo = s_n.max(f_j);
                if lo < j {
                    let lj = &done2[row_ptr[j] + lo - f_j..row_ptr[j] + j - f_j];
                    let d = dot(lj, &row_n[lo - s_n..j - s_n]);
                    row_n[j - s_n] -= d;
                }
            }
            let row_i = &mut done2[row_ptr[i]..row_ptr[i] + i - s_i];
            let d_ii = finish_row(row_i, s_i, &diag, &off, &pair_start, i, diag[i]);
            let e = row_n[i - s_n];
            row_n[i - s_n] = 0.0;
            let d_nn = finish_row(&mut row_n[..i - s_n], s_n, &diag, &off, &pair_start, i, diag[i + 1]);
            let det = d_ii * d_nn - e * e;
            let sc = scale[i].max(scale[i + 1]);
            if !(det.abs() > PIVOT_TOL * PIVOT_TOL * sc * sc) || !det.is_finite() {
                return Err(Error::ZeroPivot { step: i, pivot: det.abs().sqrt() });
            }
            diag[i] = d_ii;
            diag[i + 1] = d_nn;
            off[i] = e;
            i += 2;
        } else {
            let d = finish_row(row, s_i, &diag, &off, &pair_start, i, diag[i]);
            if !(d.abs() > PIVOT_TOL * scale[i]) || !d.is_finite() {
                return Err(Error::ZeroPivot { step: i, pivot: d.abs() });
            }
            diag[i] = d;
            i += 1;
        }
    }

    Ok(Factorization {
        n,
        perm,
        first,
        row_ptr,
        lower,
        diag,
        off,
        pair_start,
    })
}

/// Turns `w = (L D)_{i,:}` into `L_{i,:}` for columns `< limit` and returns
/// the Schur-complement diagonal `a_ii - sum_j L_ij w_j`.
fn finish_row(row: &mut [f64], start: usize, diag: &[f64], off: &[f64], pair_start: &[bool], limit: usize, a_ii: f64) -> f64 {
    let mut d = a_ii;
    let mut j = start;
    let end = limit.min(start + row.len());
    // a pair can straddle the envelope start only if first was widened, which
    // factorize guarantees; so `start` is never the second row of a pair
    while j < end {
        if pair_start[j] && j + 1 < end {
            let (w0, w1) = (row[j - start], row[j + 1 - start]);
            let (a, b, c) = (diag[j], off[j], diag[j + 1]);
            let det = a * c - b * b;
            let l0 = (w0 * c - w1 * b) / det;
            let l1 = (w1 * a - w0 * b) / det;
            row[j - start] = l0;
            row[j + 1 - start] = l1;
            d -= l0 * w0 + l1 * w1;
            j += 2;
        } else {
            let w = row[j - start];
            let l = w / diag[j];
            row[j - start] = l;
            d -= l * w;
            j += 1;
        }
    }
    d
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of the unit lower factor.
    pub fn factor_nnz(&self) -> usize {
        self.lower.len()
    }

    /// Number of 2x2 pivot blocks.
    pub fn pair_count(&self) -> usize {
        self.pair_start.iter().filter(|p| **p).count()
    }

    /// `(negative, positive)` eigenvalue counts of the factored matrix.
    pub fn inertia(&self) -> (usize, usize) {
        let (mut neg, mut pos) = (0, 0);
        let mut i = 0;
        while i < self.n {
            if self.pair_start[i] {
                let (a, b, c) = (self.diag[i], self.off[i], self.diag[i + 1]);
                let det = a * c - b * b;
                if det < 0.0 {
                    neg += 1;
                    pos += 1;
                } else if a + c < 0.0 {
                    neg += 2;
                } else {
                    pos += 2;
                }
                i += 2;
            } else {
                if self.diag[i] < 0.0 {
                    neg += 1;
                } else {
                    pos += 1;
                }
                i += 1;
            }
        }
        (neg, pos)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::Solve(format!("right-hand side has length {}, expected {}", b.len(), self.n)));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solve("right-hand side contains NaN or Inf".into()));
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..self.n {
            let f = self.first[i];
            let row = &self.lower[self.row_ptr[i]..self.row_ptr[i + 1]];
            x[i] -= dot(row, &x[f..i]);
        }
        let mut i = 0;
        while i < self.n {
            if self.pair_start[i] {
                let (a, b, c) = (self.diag[i], self.off[i], self.diag[i + 1]);
                let det = a * c - b * b;
                let (x0, x1) = (x[i], x[i + 1]);
                x[i] = (c * x0 - b * x1) / det;
                x[i + 1] = (a * x1 - b * x0) / det;
                i += 2;
            } else {
                x[i] /= self.diag[i];
                i += 1;
            }
        }
        for i in (0..self.n).rev() {
            let f = self.first[i];
            let xi = x[i];
            let row = &self.lower[self.row_ptr[i]..self.row_ptr[i + 1]];
            for (xj, l) in x[f..i].iter_mut().zip(row) {
                *xj -= l * xi;
            }
        }
        let mut out = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        Ok(out)
    }
}

/// Convenience wrapper matching [`Factorization::solve`].
pub fn solve(f: &Factorization, b: &[f64]) -> Result<Vec<f64>> {
    f.solve(b)
}

/// Generalized eigenpair of `A v = mu M v` over the free nodes.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// M-normalized.
    pub vector: Vec<f64>,
    /// `||A v - mu M v||_2 / ||v||_M`
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub count: usize,
    pub shift: f64,
    pub tol: f64,
    /// Maximum Krylov dimension (applications of the shifted inverse).
    pub max_iter: usize,
    pub seed: u64,
}

impl EigenOptions {
    pub fn new(count: usize, shift: f64) -> Self {
        EigenOptions {
            count,
            shift,
            tol: 1e-9,
            max_iter: 160,
            seed: 0x5eed_5eed,
        }
    }
}

/// The `count` smallest eigenpairs of `A v = mu M v` above `shift`.
pub fn smallest_eigenpairs(a: &SymSparse, m: &SymSparse, count: usize, shift: f64, tol: f64, max_iter: usize) -> Result<Vec<EigenPair>> {
    let opts = EigenOptions {
        tol,
        max_iter,
        ..EigenOptions::new(count, shift)
    };
    eigenpairs_with(a, m, &opts)
}

fn m_norm(m: &SymSparse, v: &[f64], scratch: &mut [f64]) -> f64 {
    m.mul_vec_into(v, scratch);
    dot(v, scratch).max(0.0).sqrt()
}

/// M-orthogonalizes `w` against `basis` (two classical Gram-Schmidt passes),
/// adding the coefficients to `coef`. Returns the remaining M-norm.
fn orthogonalize(m: &SymSparse, basis: &[Vec<f64>], w: &mut [f64], coef: &mut [f64], scratch: &mut [f64]) -> f64 {
    for _ in 0..2 {
        m.mul_vec_into(w, scratch);
        let c: Vec<f64> = basis.iter().map(|v| dot(v, scratch)).collect();
        for (k, (v, ck)) in basis.iter().zip(&c).enumerate() {
            coef[k] += ck;
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= ck * vi;
            }
        }
    }
    m_norm(m, w, scratch)
}

pub fn eigenpairs_with(a: &SymSparse, m: &SymSparse, opts: &EigenOptions) -> Result<Vec<EigenPair>> {
    let n = a.dim();
    if m.dim() != n {
        return Err(Error::Solve("A and M dimensions differ".into()));
    }
    if opts.count == 0 || opts.count > n {
        return Err(Error::Solve(format!("cannot compute {} eigenpairs of a {n}x{n} pencil", opts.count)));
    }
    let shifted = a.linear_combination(1.0, m, -opts.shift);
    let fact = factorize(&shifted)?;
    let (neg, _) = fact.inertia();
    if neg > 0 {
        return Err(Error::ShiftAboveSpectrum { shift: opts.shift, below: neg });
    }

    let block = opts.count.max(2).min(n);
    let max_dim = opts.max_iter.max(block + opts.count + 1).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut scratch = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_dim);
    // h[t] holds the coefficients of OP v_t in the basis
    let mut h: Vec<Vec<f64>> = Vec::new();

    let push_random = |basis: &mut Vec<Vec<f64>>, rng: &mut ChaCha8Rng, scratch: &mut [f64]| -> bool {
        for _ in 0..5 {
            let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut coef = vec![0.0; basis.len()];
            let before = m_norm(m, &w, scratch);
            let norm = orthogonalize(m, basis, &mut w, &mut coef, scratch);
            if norm > 1e-8 * before {
                w.iter_mut().for_each(|x| *x /= norm);
                basis.push(w);
                return true;
            }
        }
        false
    };
    for _ in 0..block {
        if !push_random(&mut basis, &mut rng, &mut scratch) {
            break;
        }
    }

    let mut best = vec![f64::INFINITY; opts.count];
    let mut mv = vec![0.0; n];
    loop {
        let t = h.len();
        if t >= basis.len() {
            break;
        }
        m.mul_vec_into(&basis[t], &mut mv);
        let mut w = fact.solve(&mv)?;
        let before = m_norm(m, &w, &mut scratch);
        let mut coef = vec![0.0; basis.len()];
        let norm = orthogonalize(m, &basis, &mut w, &mut coef, &mut scratch);
        let grow = basis.len() < max_dim;
        if grow && norm > 1e-10 * before {
            w.iter_mut().for_each(|x| *x /= norm);
            coef.push(norm);
            basis.push(w);
        } else if grow {
            // invariant direction found; continue the band with fresh noise
            coef.push(0.0);
            if !push_random(&mut basis, &mut rng, &mut scratch) {
                coef.pop();
            }
        }
        h.push(coef);

        let k = h.len();
        if k < opts.count || (k < block + 1 && basis.len() < n) {
            if basis.len() == h.len() && !grow {
                break;
            }
            continue;
        }
        let pairs = ritz(a, m, &basis, &h, opts, &mut scratch);
        for (b, p) in best.iter_mut().zip(&pairs) {
            *b = p.residual;
        }
        if pairs.len() == opts.count && pairs.iter().all(|p| p.residual <= opts.tol) {
            return Ok(pairs);
        }
        if h.len() >= max_dim || h.len() == basis.len() && !grow {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: h.len(),
        residuals: best,
    })
}

/// Rayleigh-Ritz on the columns whose image under the shifted inverse is known.
fn ritz(a: &SymSparse, m: &SymSparse, basis: &[Vec<f64>], h: &[Vec<f64>], opts: &EigenOptions, scratch: &mut [f64]) -> Vec<EigenPair> {
    let k = h.len();
    let n = a.dim();
    let hm = DMatrix::from_fn(k, k, |i, j| 0.5 * (h[j].get(i).copied().unwrap_or(0.0) + h[i].get(j).copied().unwrap_or(0.0)));
    let eig = SymmetricEigen::new(hm);
    let mut idx: Vec<usize> = (0..k).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
    idx.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    idx.truncate(opts.count);
    let mut out = Vec::with_capacity(idx.len());
    for &c in &idx {
        let theta = eig.eigenvalues[c];
        let s = eig.eigenvectors.column(c);
        let mut x = vec![0.0; n];
        for (j, v) in basis.iter().take(k).enumerate() {
            let sj = s[j];
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += sj * vi;
            }
        }
        let norm = m_norm(m, &x, scratch);
        x.iter_mut().for_each(|v| *v /= norm);
        let mu = opts.shift + 1.0 / theta;
        let ax = a.mul_vec(&x);
        m.mul_vec_into(&x, scratch);
        let residual = ax
            .iter()
            .zip(scratch.iter())
            .map(|(p, q)| (p - mu * q).powi(2))
            .sum::<f64>()
            .sqrt();
        out.push(EigenPair {
            value: mu,
            vector: x,
            residual,
        });
    }
    out.sort_by(|p, q| p.value.total_cmp(&q.value));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap1d(n: usize) -> SymSparse {
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, 2.0));
            if i + 1 < n {
                e.push((i, i + 1, -1.0));
            }
        }
        SymSparse::from_triplets(n, e)
    }

    fn residual(s: &SymSparse, x: &[f64], b: &[f64]) -> f64 {
        let r: f64 = s.mul_vec(x).iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        r / b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn identity_factors_trivially() {
        let f = factorize(&SymSparse::identity(5)).unwrap();
        assert_eq!(f.factor_nnz(), 0);
        let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        assert_eq!(f.solve(&b).unwrap(), b);
    }

    #[test]
    fn swap_matrix_needs_a_two_by_two_pivot() {
        let s = SymSparse::from_triplets(2, vec![(0, 1, 1.0)]);
        let f = factorize(&s).unwrap();
        assert_eq!(f.pair_count(), 1);
        assert_eq!(f.inertia(), (1, 1));
        let x = f.solve(&[3.0, 4.0]).unwrap();
        assert_eq!(x, vec![4.0, 3.0]);
    }

    #[test]
    fn saddle_point_system() {
        // [[2, 0, 1], [0, 2, 1], [1, 1, 0]]: quasi-definite KKT block
        let s = SymSparse::from_triplets(3, vec![(0, 0, 2.0), (1, 1, 2.0), (0, 2, 1.0), (1, 2, 1.0)]);
        let f = factorize(&s).unwrap();
        assert_eq!(f.inertia(), (1, 2));
        let b = [1.0, 2.0, 3.0];
        let x = f.solve(&b).unwrap();
        assert!(residual(&s, &x, &b) < 1e-14);
    }

    #[test]
    fn singular_matrix_is_reported() {
        // 1D Neumann Laplacian: constants in the kernel
        let mut e = Vec::new();
        let n = 6;
        for i in 0..n - 1 {
            e.push((i, i, 1.0));
            e.push((i + 1, i + 1, 1.0));
            e.push((i, i + 1, -1.0));
        }
        let s = SymSparse::from_triplets(n, e);
        assert!(matches!(factorize(&s), Err(Error::ZeroPivot { .. })));
    }

    #[test]
    fn solve_rejects_bad_input() {
        let f = factorize(&lap1d(4)).unwrap();
        assert!(f.solve(&[1.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(f.solve(&[1.0]).is_err());
    }

    #[test]
    fn ones_are_recovered() {
        let s = lap1d(50).linear_combination(1.0, &SymSparse::identity(50), 0.1);
        let ones = vec![1.0; 50];
        let b = s.mul_vec(&ones);
        let x = factorize(&s).unwrap().solve(&b).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn random_spd_residual() {
        let n = 300;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut e = Vec::new();
        let mut rowsum = vec![0.0; n];
        for _ in 0..4 * n {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i != j {
                let v: f64 = rng.gen_range(-1.0..1.0);
                e.push((i, j, v));
                rowsum[i] += v.abs();
                rowsum[j] += v.abs();
            }
        }
        for (i, r) in rowsum.iter().enumerate() {
            e.push((i, i, r + 0.5));
        }
        let s = SymSparse::from_triplets(n, e);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = factorize(&s).unwrap().solve(&b).unwrap();
        assert!(residual(&s, &x, &b) < 1e-10);
    }

    #[test]
    fn random_indefinite_residual() {
        let n = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, if i % 3 == 0 { -4.0 } else { 4.0 }));
            for _ in 0..3 {
                let j = rng.gen_range(0..n);
                if j != i {
                    e.push((i, j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        let s = SymSparse::from_triplets(n, e);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = factorize(&s).unwrap();
        let x = f.solve(&b).unwrap();
        assert!(residual(&s, &x, &b) < 1e-10);
        assert!(f.inertia().0 > 0);
    }

    #[test]
    fn laplacian_eigenvalues_1d() {
        // -u'' on (0,1) with P1 on n interior nodes: K/h, M h/6 (1,4,1)
        let n = 99;
        let h = 1.0 / (n + 1) as f64;
        let k = SymSparse::from_triplets(
            n,
            (0..n).flat_map(|i| {
                let mut v = vec![(i, i, 2.0 / h)];
                if i + 1 < n {
                    v.push((i, i + 1, -1.0 / h));
                }
                v
            })
            .collect(),
        );
        let m = SymSparse::from_triplets(
            n,
            (0..n).flat_map(|i| {
                let mut v = vec![(i, i, 4.0 * h / 6.0)];
                if i + 1 < n {
                    v.push((i, i + 1, h / 6.0));
                }
                v
            })
            .collect(),
        );
        let pairs = smallest_eigenpairs(&k, &m, 3, 0.0, 1e-9, 100).unwrap();
        for (j, p) in pairs.iter().enumerate() {
            let t = (j + 1) as f64 * std::f64::consts::PI * h;
            let exact = 6.0 / (h * h) * (1.0 - t.cos()) / (2.0 + t.cos());
            assert!((p.value - exact).abs() < 1e-9 * exact, "{} vs {exact}", p.value);
            assert!(p.residual <= 1e-9);
        }
        for i in 0..3 {
            for j in 0..3 {
                let g = m.bilinear(&pairs[i].vector, &pairs[j].vector);
                let d = if i == j { 1.0 } else { 0.0 };
                assert!((g - d).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn shift_above_spectrum_is_rejected() {
        let k = lap1d(20);
        let m = SymSparse::identity(20);
        assert!(matches!(
            smallest_eigenpairs(&k, &m, 1, 0.5, 1e-9, 50),
            Err(Error::ShiftAboveSpectrum { .. })
        ));
    }

    #[test]
    fn tiny_budget_reports_non_convergence() {
        let k = lap1d(400);
        let m = SymSparse::identity(400);
        let err = smallest_eigenpairs(&k, &m, 4, 0.0, 1e-14, 6).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }), "{err}");
    }
}
