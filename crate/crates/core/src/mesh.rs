//! Two-block structured triangulation of the truncated strip.
//!
//! The cap `{-phi(y) < x < 0}` and the rectangle `[0, L] x [0, 1]` share the
//! vertical mesh line `x = 0`, so traces on that line are exact edge
//! integrals. Cap columns blend linearly between the arc `x = -phi(y_j)` and
//! the interface; every quad is split along its lower-left to upper-right
//! diagonal. Rows where `phi(y_j) = 0` collapse onto the interface node.

use std::f64::consts::PI;
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::profile::Profile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeTag {
    Interior,
    Dirichlet,
    /// Free node on the truncation line `x = L` (scattering problems).
    RightEnd,
    /// Free node on the shared line `x = 0`.
    Interface,
}

impl NodeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeTag::Interior => "interior",
            NodeTag::Dirichlet => "dirichlet",
            NodeTag::RightEnd => "right-end",
            NodeTag::Interface => "interface",
        }
    }
}

/// Boundary condition carried by the right end of the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RightEnd {
    /// Eigenproblems on the closed domain.
    Dirichlet,
    /// Left free for the truncated scattering problem.
    Open,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshParams {
    pub length: f64,
    pub i_cap: usize,
    pub i_strip: usize,
    pub j: usize,
    /// Strength `g` of the row grading `y(t) = t - g sin(2 pi t) / (2 pi)`;
    /// 0 is uniform, values in (0, 1) refine towards `y = 0` and `y = 1`.
    pub grading: f64,
    pub right_end: RightEnd,
}

impl MeshParams {
    pub fn new(length: f64, i_cap: usize, i_strip: usize, j: usize) -> Self {
        MeshParams {
            length,
            i_cap,
            i_strip,
            j,
            grading: 0.0,
            right_end: RightEnd::Dirichlet,
        }
    }

    pub fn graded(mut self, grading: f64) -> Self {
        self.grading = grading;
        self
    }

    pub fn open_right_end(mut self) -> Self {
        self.right_end = RightEnd::Open;
        self
    }

    /// Row coordinate `y_j`; the same formula for every resolution so that
    /// refined meshes reproduce coarse rows bit for bit.
    pub fn row_y(&self, row: usize) -> f64 {
        if row == 0 {
            return 0.0;
        }
        if row == self.j {
            return 1.0;
        }
        let t = row as f64 / self.j as f64;
        t - self.grading * (2.0 * PI * t).sin() / (2.0 * PI)
    }

    pub fn strip_x(&self, col: usize) -> f64 {
        col as f64 / self.i_strip as f64 * self.length
    }
}

/// Base resolution of a refinement ladder. Level `l` multiplies every
/// interval count by `2^l`, so mesh widths halve exactly between levels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolution {
    /// Vertical intervals.
    pub j: usize,
    /// Horizontal intervals across the cap.
    pub i_cap: usize,
    /// Strip intervals per unit length.
    pub strip_density: f64,
    #[serde(default)]
    pub grading: f64,
}

impl Resolution {
    /// Square strip cells and a cap with `J / 2` columns.
    pub fn new(j: usize) -> Self {
        Resolution {
            j,
            i_cap: (j / 2).max(1),
            strip_density: j as f64,
            grading: 0.0,
        }
    }

    pub fn graded(mut self, grading: f64) -> Self {
        self.grading = grading;
        self
    }

    pub fn level(&self, level: u32) -> Resolution {
        let f = 1usize << level;
        Resolution {
            j: self.j * f,
            i_cap: self.i_cap * f,
            strip_density: self.strip_density * f as f64,
            grading: self.grading,
        }
    }

    /// Mesh parameters for a strip of the given length at `level`.
    pub fn params(&self, length: f64, level: u32) -> MeshParams {
        let base = ((self.strip_density * length) - 1e-9).ceil().max(2.0) as usize;
        let f = 1usize << level;
        MeshParams::new(length, self.i_cap * f, base * f, self.j * f).graded(self.grading)
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    params: MeshParams,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    tags: Vec<NodeTag>,
    rows: Vec<f64>,
    /// `columns[c][row]`: node index; cap columns first, then the interface,
    /// then the strip columns.
    columns: Vec<Vec<usize>>,
    cap_columns: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQuality {
    pub min_area: f64,
    /// Longest edge over shortest altitude, worst triangle.
    pub max_aspect: f64,
    pub h_max: f64,
}

/// Eigenproblem mesh (Dirichlet right end, uniform rows).
pub fn build_strip_mesh(profile: &Profile, length: f64, i_cap: usize, i_strip: usize, j: usize) -> Result<Mesh> {
    Mesh::build(profile, &MeshParams::new(length, i_cap, i_strip, j))
}

impl Mesh {
    pub fn build(profile: &Profile, params: &MeshParams) -> Result<Mesh> {
        let p = params;
        if !(p.length > 0.0 && p.length.is_finite()) {
            return Err(Error::Mesh(format!("length {} must be positive", p.length)));
        }
        if p.i_strip < 2 || p.j < 2 || p.i_cap < 1 {
            return Err(Error::Mesh(format!(
                "need I_cap >= 1, I_strip >= 2, J >= 2 (got {}, {}, {})",
                p.i_cap, p.i_strip, p.j
            )));
        }
        if !(0.0..1.0).contains(&p.grading) {
            return Err(Error::Mesh(format!("grading {} must lie in [0, 1)", p.grading)));
        }
        let has_cap = !profile.is_zero();
        let cap_columns = if has_cap { p.i_cap } else { 0 };
        let rows: Vec<f64> = (0..=p.j).map(|r| p.row_y(r)).collect();
        let phi: Vec<f64> = rows.iter().map(|&y| profile.eval_unchecked(y)).collect();

        let n_cols = cap_columns + p.i_strip + 1;
        let mut nodes = Vec::with_capacity(n_cols * (p.j + 1));
        let mut tags = Vec::with_capacity(n_cols * (p.j + 1));
        let mut columns = vec![Vec::with_capacity(p.j + 1); n_cols];

        // interface column first so collapsed cap rows can point at it
        let mut interface = Vec::with_capacity(p.j + 1);
        for (r, &y) in rows.iter().enumerate() {
            let on_wall = r == 0 || r == p.j || !has_cap || phi[r] == 0.0;
            interface.push(nodes.len());
            nodes.push([0.0, y]);
            tags.push(if on_wall {
                NodeTag::Dirichlet
            } else {
                NodeTag::Interface
            });
        }
        for c in 0..cap_columns {
            for (r, &y) in rows.iter().enumerate() {
                if phi[r] == 0.0 {
                    columns[c].push(interface[r]);
                    continue;
                }
                let x = -phi[r] * (1.0 - c as f64 / p.i_cap as f64);
                let wall = c == 0 || r == 0 || r == p.j;
                columns[c].push(nodes.len());
                nodes.push([x, y]);
                tags.push(if wall { NodeTag::Dirichlet } else { NodeTag::Interior });
            }
        }
        columns[cap_columns] = interface;
        for c in 1..=p.i_strip {
            let x = p.strip_x(c);
            for (r, &y) in rows.iter().enumerate() {
                let tag = if r == 0 || r == p.j {
                    NodeTag::Dirichlet
                } else if c == p.i_strip {
                    match p.right_end {
                        RightEnd::Dirichlet => NodeTag::Dirichlet,
                        RightEnd::Open => NodeTag::RightEnd,
                    }
                } else {
                    NodeTag::Interior
                };
                columns[cap_columns + c].push(nodes.len());
                nodes.push([x, y]);
                tags.push(tag);
            }
        }

        let mut triangles = Vec::with_capacity(2 * (n_cols - 1) * p.j);
        for c in 0..n_cols - 1 {
            for r in 0..p.j {
                let n00 = columns[c][r];
                let n10 = columns[c + 1][r];
                let n01 = columns[c][r + 1];
                let n11 = columns[c + 1][r + 1];
                for t in [[n00, n10, n11], [n00, n11, n01]] {
                    if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                        continue;
                    }
                    let area = signed_area(&nodes, t);
                    if !(area > 0.0) {
                        return Err(Error::TangledCap {
                            triangle: triangles.len(),
                            area,
                        });
                    }
                    triangles.push(t);
                }
            }
        }

        Ok(Mesh {
            params: p.clone(),
            nodes,
            triangles,
            tags,
            rows,
            columns,
            cap_columns,
        })
    }

    pub fn params(&self) -> &MeshParams {
        &self.params
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn tags(&self) -> &[NodeTag] {
        &self.tags
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn length(&self) -> f64 {
        self.params.length
    }

    pub fn has_cap(&self) -> bool {
        self.cap_columns > 0
    }

    /// All columns, cap first; entry `[c][row]` is a node index.
    pub fn columns(&self) -> &[Vec<usize>] {
        &self.columns
    }

    /// Nodes on the line `x = 0`, bottom to top.
    pub fn interface_column(&self) -> &[usize] {
        &self.columns[self.cap_columns]
    }

    /// Strip column `i` (0 = interface, `I_strip` = right end).
    pub fn strip_column(&self, i: usize) -> &[usize] {
        &self.columns[self.cap_columns + i]
    }

    pub fn strip_columns(&self) -> usize {
        self.params.i_strip + 1
    }

    pub fn right_column(&self) -> &[usize] {
        self.columns.last().expect("mesh has columns")
    }

    pub fn strip_x(&self, i: usize) -> f64 {
        self.params.strip_x(i)
    }

    /// Strip column lying exactly on `x`, if any.
    pub fn strip_column_at(&self, x: f64) -> Option<usize> {
        let t = x / self.params.length * self.params.i_strip as f64;
        let i = t.round();
        if i < 0.0 || i > self.params.i_strip as f64 {
            return None;
        }
        let i = i as usize;
        let xi = self.strip_x(i);
        ((xi - x).abs() <= 1e-12 * (1.0 + x.abs())).then_some(i)
    }

    pub fn quality(&self) -> MeshQuality {
        let mut q = MeshQuality {
            min_area: f64::INFINITY,
            max_aspect: 0.0,
            h_max: 0.0,
        };
        for &t in &self.triangles {
            let area = signed_area(&self.nodes, t);
            let longest = (0..3)
                .map(|k| dist(self.nodes[t[k]], self.nodes[t[(k + 1) % 3]]))
                .fold(0.0, f64::max);
            q.min_area = q.min_area.min(area);
            q.h_max = q.h_max.max(longest);
            q.max_aspect = q.max_aspect.max(longest * longest / (2.0 * area));
        }
        q
    }

    /// Node nearest to `(x, y)` by Euclidean distance.
    pub fn nearest_node(&self, x: f64, y: f64) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, p) in self.nodes.iter().enumerate() {
            let d = (p[0] - x).powi(2) + (p[1] - y).powi(2);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Plain-text dump: `"<nodes> <triangles>"`, then `id x y tag` lines, then
    /// `id n1 n2 n3` lines.
    pub fn write_msh_lite<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{} {}", self.nodes.len(), self.triangles.len())?;
        for (i, (p, tag)) in self.nodes.iter().zip(&self.tags).enumerate() {
            writeln!(out, "{} {:.16e} {:.16e} {}", i, p[0], p[1], tag.as_str())?;
        }
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(out, "{} {} {} {}", i, t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

#[cfg(test)]
impl Mesh {
    pub(crate) fn set_tags_for_test(&mut self, tags: Vec<NodeTag>) {
        self.tags = tags;
    }
}

pub(crate) fn signed_area(nodes: &[[f64; 2]], t: [usize; 3]) -> f64 {
    let [a, b, c] = t.map(|i| nodes[i]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_levels_scale_every_count() {
        let r = Resolution::new(16);
        let p0 = r.params(8.0, 0);
        let p2 = r.params(8.0, 2);
        assert_eq!((p0.i_cap, p0.i_strip, p0.j), (8, 128, 16));
        assert_eq!((p2.i_cap, p2.i_strip, p2.j), (32, 512, 64));
        assert_eq!(r.level(2).params(8.0, 0), p2);
        // fractional lengths round the strip count up
        assert_eq!(Resolution::new(4).params(2.1, 0).i_strip, 9);
        let json = r#"{"j": 8, "i_cap": 4, "strip_density": 8.0, "extra": 1}"#;
        assert!(serde_json::from_str::<Resolution>(json).is_err());
    }

    #[test]
    fn unit_square_counts_and_tags() {
        let m = build_strip_mesh(&Profile::zero(), 1.0, 1, 2, 2).unwrap();
        assert_eq!(m.n_nodes(), 9);
        assert_eq!(m.triangles().len(), 8);
        let boundary = m.tags().iter().filter(|t| **t == NodeTag::Dirichlet).count();
        assert_eq!(boundary, 8);
        let q = m.quality();
        assert!((q.h_max - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((q.min_area - 0.125).abs() < 1e-15);
    }

    #[test]
    fn hat_mesh_has_full_interface_and_positive_areas() {
        let m = build_strip_mesh(&Profile::hat(1.0).unwrap(), 4.0, 4, 32, 16).unwrap();
        assert_eq!(m.interface_column().len(), 17);
        assert!(m.interface_column().iter().all(|&n| m.nodes()[n][0] == 0.0));
        assert!(m.quality().min_area > 0.0);
        // both corner rows collapse: (I_cap + I_strip + 1)(J + 1) - 2 I_cap
        assert_eq!(m.n_nodes(), (4 + 32 + 1) * 17 - 2 * 4);
        let apex = m.columns()[0][8];
        assert_eq!(m.nodes()[apex], [-0.5, 0.5]);
        assert_eq!(m.tags()[apex], NodeTag::Dirichlet);
    }

    #[test]
    fn constant_profile_leftmost_line() {
        let m = build_strip_mesh(&Profile::constant(0.3).unwrap(), 4.0, 3, 16, 8).unwrap();
        assert!(m.columns()[0].iter().all(|&n| m.nodes()[n][0] == -0.3));
        let min_x = m.nodes().iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        assert_eq!(min_x, -0.3);
    }

    #[test]
    fn refinement_halves_h_max_and_nests_nodes() {
        let p = Profile::hat(1.0).unwrap();
        let coarse = Mesh::build(&p, &MeshParams::new(3.0, 2, 12, 8).graded(0.4)).unwrap();
        let fine = Mesh::build(&p, &MeshParams::new(3.0, 4, 24, 16).graded(0.4)).unwrap();
        for (c, col) in coarse.columns().iter().enumerate() {
            for (r, &n) in col.iter().enumerate() {
                let f = fine.columns()[2 * c][2 * r];
                assert_eq!(coarse.nodes()[n], fine.nodes()[f]);
            }
        }
        let sq = |j| build_strip_mesh(&Profile::zero(), 1.0, 1, j, j).unwrap().quality().h_max;
        assert!((sq(4) / sq(8) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn open_right_end_keeps_free_nodes() {
        let params = MeshParams::new(2.0, 2, 8, 4).open_right_end();
        let m = Mesh::build(&Profile::constant(0.2).unwrap(), &params).unwrap();
        let right = m.right_column();
        assert_eq!(m.tags()[right[0]], NodeTag::Dirichlet);
        assert!(right[1..4].iter().all(|&n| m.tags()[n] == NodeTag::RightEnd));
        assert!(m.interface_column()[1..4].iter().all(|&n| m.tags()[n] == NodeTag::Interface));
    }

    #[test]
    fn strip_column_lookup() {
        let m = build_strip_mesh(&Profile::zero(), 8.0, 1, 64, 4).unwrap();
        assert_eq!(m.strip_column_at(4.0), Some(32));
        assert_eq!(m.strip_column_at(4.01), None);
    }

    #[test]
    fn msh_lite_header_and_line_counts() {
        let m = build_strip_mesh(&Profile::hat(0.5).unwrap(), 1.0, 2, 4, 4).unwrap();
        let mut buf = Vec::new();
        m.write_msh_lite(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert_eq!(header, format!("{} {}", m.n_nodes(), m.triangles().len()));
        assert_eq!(lines.count(), m.n_nodes() + m.triangles().len());
    }

    proptest::proptest! {
        #[test]
        fn every_triangle_positive(eps in 0.0f64..1.0, kind in 0usize..3, j in 2usize..12, ic in 1usize..5) {
            let p = match kind {
                0 => Profile::hat(eps).unwrap(),
                1 => Profile::slope(eps).unwrap(),
                _ => Profile::constant(eps).unwrap(),
            };
            let m = Mesh::build(&p, &MeshParams::new(2.0, ic, 8, j)).unwrap();
            for &t in m.triangles() {
                proptest::prop_assert!(signed_area(m.nodes(), t) > 0.0);
            }
        }
    }
}
