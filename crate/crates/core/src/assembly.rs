//! P1 Galerkin assembly: stiffness, consistent mass, Dirichlet elimination,
//! and the boundary terms of the truncated scattering problem.

use std::f64::consts::{PI, SQRT_2};
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::mesh::{signed_area, Mesh, NodeTag};
use crate::quad::linear_times_sine;

/// Symmetric sparse matrix; only the upper triangle (diagonal included) is
/// stored, rows in compressed form with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SymSparse {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SymSparse {
    /// Entries may come from either triangle; `(i, j)` and `(j, i)` are the
    /// same slot and duplicates are summed.
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        for e in entries.iter_mut() {
            if e.0 > e.1 {
                std::mem::swap(&mut e.0, &mut e.1);
            }
            debug_assert!(e.1 < n);
        }
        entries.sort_unstable_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                row_ptr[i + 1] += 1;
                cols.push(j);
                vals.push(v);
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SymSparse { n, row_ptr, cols, vals }
    }

    pub fn identity(n: usize) -> Self {
        SymSparse {
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored (upper-triangle) entries.
    pub fn nnz_upper(&self) -> usize {
        self.vals.len()
    }

    /// Upper-triangle entries `(i, j, v)` with `i <= j`.
    pub fn iter_upper(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k], self.vals[k]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.fill(0.0);
        for i in 0..self.n {
            let xi = x[i];
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                let v = self.vals[k];
                if j == i {
                    acc += v * xi;
                } else {
                    acc += v * x[j];
                    y[j] += v * xi;
                }
            }
            y[i] += acc;
        }
    }

    /// `x^T S y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let sy = self.mul_vec(y);
        x.iter().zip(&sy).map(|(a, b)| a * b).sum()
    }

    /// `alpha * self + beta * other` on the union pattern.
    pub fn linear_combination(&self, alpha: f64, other: &SymSparse, beta: f64) -> SymSparse {
        assert_eq!(self.n, other.n);
        let mut entries = Vec::with_capacity(self.nnz_upper() + other.nnz_upper());
        entries.extend(self.iter_upper().map(|(i, j, v)| (i, j, alpha * v)));
        entries.extend(other.iter_upper().map(|(i, j, v)| (i, j, beta * v)));
        SymSparse::from_triplets(self.n, entries)
    }

    /// Submatrix on the rows/columns with `index[i] = Some(new)`.
    pub fn restrict(&self, index: &[Option<usize>], new_dim: usize) -> SymSparse {
        assert_eq!(index.len(), self.n);
        let entries = self
            .iter_upper()
            .filter_map(|(i, j, v)| Some((index[i]?, index[j]?, v)))
            .collect();
        SymSparse::from_triplets(new_dim, entries)
    }

    /// Dense copy, for tests and small problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, j, v) in self.iter_upper() {
            d[i][j] = v;
            d[j][i] = v;
        }
        d
    }

    /// Coordinate text dump, one `row col value` line per stored entry.
    pub fn write_coordinate<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (i, j, v) in self.iter_upper() {
            writeln!(out, "{i} {j} {v:.16e}")?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.vals.iter().all(|v| v.is_finite())
    }
}

fn element_gradients(nodes: &[[f64; 2]], t: [usize; 3]) -> Result<(f64, [f64; 3], [f64; 3])> {
    let area = signed_area(nodes, t);
    if !(area > 0.0) {
        return Err(Error::Assembly(format!("degenerate triangle {t:?} (area {area:e})")));
    }
    let p = t.map(|i| nodes[i]);
    let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
    let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
    Ok((area, b, c))
}

/// `A_ij = int grad psi_i . grad psi_j` over every triangle.
pub fn assemble_stiffness(mesh: &Mesh) -> Result<SymSparse> {
    let nodes = mesh.nodes();
    let mut entries = Vec::with_capacity(6 * mesh.triangles().len());
    for &t in mesh.triangles() {
        let (area, b, c) = element_gradients(nodes, t)?;
        for a in 0..3 {
            for e in a..3 {
                let v = (b[a] * b[e] + c[a] * c[e]) / (4.0 * area);
                entries.push((t[a], t[e], v));
            }
        }
    }
    Ok(SymSparse::from_triplets(mesh.n_nodes(), entries))
}

/// Consistent mass, element matrix `area/12 [[2,1,1],[1,2,1],[1,1,2]]`.
pub fn assemble_mass(mesh: &Mesh) -> Result<SymSparse> {
    let nodes = mesh.nodes();
    let mut entries = Vec::with_capacity(6 * mesh.triangles().len());
    for &t in mesh.triangles() {
        let (area, _, _) = element_gradients(nodes, t)?;
        for a in 0..3 {
            for e in a..3 {
                let w = if a == e { 2.0 } else { 1.0 };
                entries.push((t[a], t[e], w * area / 12.0));
            }
        }
    }
    Ok(SymSparse::from_triplets(mesh.n_nodes(), entries))
}

/// Matrices restricted to the free (non-Dirichlet) nodes.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub a: SymSparse,
    pub m: SymSparse,
    /// `free[k]` is the mesh node of unknown `k`.
    pub free: Vec<usize>,
    /// Inverse of `free`.
    pub index: Vec<Option<usize>>,
}

impl ReducedSystem {
    /// Nodal field on the whole mesh, zero on eliminated nodes.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.index.len()];
        for (k, &node) in self.free.iter().enumerate() {
            full[node] = reduced[k];
        }
        full
    }

    pub fn reduce(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&n| full[n]).collect()
    }
}

/// Free-node numbering: Dirichlet nodes, and the right end when requested,
/// are eliminated.
pub fn free_nodes(mesh: &Mesh, right_end_is_dirichlet: bool) -> (Vec<usize>, Vec<Option<usize>>) {
    let mut free = Vec::new();
    let mut index = vec![None; mesh.n_nodes()];
    for (i, tag) in mesh.tags().iter().enumerate() {
        let fixed = match tag {
            NodeTag::Dirichlet => true,
            NodeTag::RightEnd => right_end_is_dirichlet,
            NodeTag::Interior | NodeTag::Interface => false,
        };
        if !fixed {
            index[i] = Some(free.len());
            free.push(i);
        }
    }
    (free, index)
}

/// Removes the rows and columns of constrained nodes (no penalty terms).
pub fn apply_dirichlet(a: &SymSparse, m: &SymSparse, mesh: &Mesh, right_end_is_dirichlet: bool) -> Result<ReducedSystem> {
    let (free, index) = free_nodes(mesh, right_end_is_dirichlet);
    if free.is_empty() {
        return Err(Error::Assembly("no free nodes left after Dirichlet elimination".into()));
    }
    Ok(ReducedSystem {
        a: a.restrict(&index, free.len()),
        m: m.restrict(&index, free.len()),
        free,
        index,
    })
}

/// `(node, int psi_node(y) sin(k pi y) dy)` along a vertical column, exact
/// for the piecewise-linear trace.
pub fn column_sine_weights(mesh: &Mesh, column: &[usize], k: usize) -> Vec<(usize, f64)> {
    let omega = k as f64 * PI;
    let nodes = mesh.nodes();
    let mut w = vec![0.0; column.len()];
    for r in 0..column.len() - 1 {
        let y0 = nodes[column[r]][1];
        let y1 = nodes[column[r + 1]][1];
        w[r] += linear_times_sine(y0, y1, 1.0, 0.0, omega);
        w[r + 1] += linear_times_sine(y0, y1, 0.0, 1.0, omega);
    }
    column.iter().copied().zip(w).collect()
}

/// `2 int u(x, y) sin(k pi y) dy` of a nodal field along a column.
pub fn column_mode(mesh: &Mesh, column: &[usize], field: &[f64], k: usize) -> f64 {
    2.0 * column_sine_weights(mesh, column, k)
        .into_iter()
        .map(|(n, w)| w * field[n])
        .sum::<f64>()
}

fn right_end_column(mesh: &Mesh, at_x: f64) -> Result<&[usize]> {
    let last = mesh.strip_columns() - 1;
    match mesh.strip_column_at(at_x) {
        Some(i) if i == last => Ok(mesh.right_column()),
        _ => Err(Error::Assembly(format!(
            "x = {at_x} is not the right-end mesh line (x = {})",
            mesh.length()
        ))),
    }
}

/// Modal Dirichlet-to-Neumann block for the decaying modes `k = 2..=K`:
/// `B = sum_k sqrt(k^2 - 1) pi q_k q_k^T` with `(q_k)_i = int psi_i sqrt(2) sin(k pi y)`.
pub fn assemble_dtn_block(mesh: &Mesh, modes: usize, at_x: f64) -> Result<SymSparse> {
    let j = mesh.params().j;
    if modes < 2 || modes > j - 1 {
        return Err(Error::Assembly(format!("DtN mode count K = {modes} outside [2, J-1 = {}]", j - 1)));
    }
    let column = right_end_column(mesh, at_x)?;
    let mut entries = Vec::new();
    for k in 2..=modes {
        let rate = ((k * k - 1) as f64).sqrt() * PI;
        let q: Vec<(usize, f64)> = column_sine_weights(mesh, column, k)
            .into_iter()
            .map(|(n, w)| (n, SQRT_2 * w))
            .collect();
        for (a, &(na, qa)) in q.iter().enumerate() {
            for &(nb, qb) in &q[a..] {
                entries.push((na, nb, rate * qa * qb));
            }
        }
    }
    Ok(SymSparse::from_triplets(mesh.n_nodes(), entries))
}

/// Natural-boundary load of a unit mode-1 slope at the truncation line:
/// `g_i = int psi_i(y) sin(pi y) dy` on `x = at_x`, zero elsewhere.
pub fn assemble_mode1_flux(mesh: &Mesh, at_x: f64) -> Result<Vec<f64>> {
    let column = right_end_column(mesh, at_x)?;
    let mut g = vec![0.0; mesh.n_nodes()];
    for (n, w) in column_sine_weights(mesh, column, 1) {
        g[n] += w;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_strip_mesh, MeshParams};
    use crate::profile::Profile;
    use rand::{Rng, SeedableRng};

    #[test]
    fn textbook_right_triangle_element() {
        let nodes = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let (area, b, c) = element_gradients(&nodes, [0, 1, 2]).unwrap();
        let diag: Vec<f64> = (0..3).map(|a| (b[a] * b[a] + c[a] * c[a]) / (4.0 * area)).collect();
        assert_eq!(diag, vec![1.0, 0.5, 0.5]);
    }

    #[test]
    fn stiffness_annihilates_constants_and_is_symmetric() {
        let mesh = build_strip_mesh(&Profile::hat(1.0).unwrap(), 3.0, 4, 12, 8).unwrap();
        let a = assemble_stiffness(&mesh).unwrap();
        let ones = vec![1.0; mesh.n_nodes()];
        let r = a.mul_vec(&ones);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        let d = a.to_dense();
        for i in 0..d.len() {
            for j in 0..d.len() {
                assert_eq!(d[i][j], d[j][i]);
            }
        }
    }

    #[test]
    fn mass_sums_to_area() {
        let unit = build_strip_mesh(&Profile::zero(), 1.0, 1, 8, 8).unwrap();
        let m = assemble_mass(&unit).unwrap();
        let total: f64 = m.mul_vec(&vec![1.0; unit.n_nodes()]).iter().sum();
        assert!((total - 1.0).abs() < 1e-12);

        // area of the hat-capped domain: N + int hat = 4 + 1/4
        let hat = build_strip_mesh(&Profile::hat(1.0).unwrap(), 4.0, 4, 32, 16).unwrap();
        let m = assemble_mass(&hat).unwrap();
        let total: f64 = m.mul_vec(&vec![1.0; hat.n_nodes()]).iter().sum();
        assert!((total - 4.25).abs() < 1e-12, "{total}");
    }

    #[test]
    fn dirichlet_free_counts() {
        let unit = build_strip_mesh(&Profile::zero(), 1.0, 1, 2, 2).unwrap();
        let (a, m) = (assemble_stiffness(&unit).unwrap(), assemble_mass(&unit).unwrap());
        let red = apply_dirichlet(&a, &m, &unit, true).unwrap();
        assert_eq!(red.free.len(), 1);

        let (i_cap, i_strip, j) = (3, 10, 6);
        let eig = build_strip_mesh(&Profile::constant(0.2).unwrap(), 2.0, i_cap, i_strip, j).unwrap();
        let red = apply_dirichlet(
            &assemble_stiffness(&eig).unwrap(),
            &assemble_mass(&eig).unwrap(),
            &eig,
            true,
        )
        .unwrap();
        assert_eq!(red.free.len(), (i_cap + i_strip - 1) * (j - 1));

        let scat = Mesh::build(&Profile::constant(0.2).unwrap(), &MeshParams::new(2.0, 3, 10, 6).open_right_end()).unwrap();
        let (free, index) = free_nodes(&scat, false);
        assert_eq!(free.len(), (i_cap + i_strip) * (j - 1));
        assert!(scat.right_column()[1..j].iter().all(|&n| index[n].is_some()));
    }

    #[test]
    fn dirichlet_rejects_fully_constrained_mesh() {
        // 2 x 2 cells, right end Dirichlet: only the centre is free
        let mesh = build_strip_mesh(&Profile::zero(), 1.0, 1, 2, 2).unwrap();
        let a = assemble_stiffness(&mesh).unwrap();
        let m = assemble_mass(&mesh).unwrap();
        assert!(apply_dirichlet(&a, &m, &mesh, true).is_ok());
        let mut tiny = mesh.clone();
        // every node constrained
        let all_fixed: Vec<_> = tiny.tags().iter().map(|_| NodeTag::Dirichlet).collect();
        tiny.set_tags_for_test(all_fixed);
        assert!(apply_dirichlet(&a, &m, &tiny, true).is_err());
    }

    #[test]
    fn dtn_block_rank_and_psd() {
        let mesh = Mesh::build(&Profile::zero(), &MeshParams::new(2.0, 1, 8, 16).open_right_end()).unwrap();
        let b2 = assemble_dtn_block(&mesh, 2, 2.0).unwrap();
        // a single dyad: every 2x2 minor on the right column vanishes
        let col = mesh.right_column();
        for &p in &col[1..5] {
            for &q in &col[5..9] {
                let minor = b2.get(p, p) * b2.get(q, q) - b2.get(p, q) * b2.get(q, p);
                assert!(minor.abs() < 1e-14 * b2.get(p, p).abs().max(1e-300) * 1e3, "{minor}");
            }
        }
        let b = assemble_dtn_block(&mesh, 8, 2.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!(b.bilinear(&x, &x) >= -1e-14);
        }
        assert!(assemble_dtn_block(&mesh, 1, 2.0).is_err());
        assert!(assemble_dtn_block(&mesh, 16, 2.0).is_err());
        assert!(assemble_dtn_block(&mesh, 4, 1.0).is_err());
    }

    #[test]
    fn dtn_projection_is_near_orthonormal() {
        // q_k applied to the interpolated sin(j pi y): ~ delta_jk / sqrt 2
        let mesh = Mesh::build(&Profile::zero(), &MeshParams::new(1.0, 1, 4, 128).open_right_end()).unwrap();
        let col = mesh.right_column();
        for k in 2..5 {
            let q = column_sine_weights(&mesh, col, k);
            for j in 1..5 {
                let got: f64 = q
                    .iter()
                    .map(|&(n, w)| SQRT_2 * w * (j as f64 * PI * mesh.nodes()[n][1]).sin())
                    .sum();
                let expect = if j == k { 1.0 / SQRT_2 } else { 0.0 };
                assert!((got - expect).abs() < 2e-3 * (k * k) as f64 / 16.0, "k={k} j={j} {got}");
            }
        }
    }

    #[test]
    fn mode1_flux_sums_to_two_over_pi() {
        for j in [16, 64, 256] {
            let mesh = Mesh::build(&Profile::zero(), &MeshParams::new(1.0, 1, 2, j).open_right_end()).unwrap();
            let g = assemble_mode1_flux(&mesh, 1.0).unwrap();
            let sum: f64 = g.iter().sum();
            // partition of unity: exact for every J
            assert!((sum - 2.0 / PI).abs() < 1e-12, "J={j}: {sum}");
            let col = mesh.right_column();
            let on_col: std::collections::HashSet<_> = col.iter().copied().collect();
            assert!(g.iter().enumerate().all(|(i, v)| on_col.contains(&i) || *v == 0.0));
            for r in 0..=j {
                assert!((g[col[r]] - g[col[j - r]]).abs() < 1e-15);
            }
        }
    }
}
