//! Maximum of the first eigenfunction, nodal set of the second, and the
//! two-profile experiment with equal height functions but different phases.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, NodeTag, Resolution};
use crate::profile::Profile;
use crate::report::{CsvWriter, Field};
use crate::scattering::{phase_ladder, PhaseEstimate};
use crate::spectra::{eigen_ladder, EigenLadder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxPoint {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

/// Nodes sharing a triangle with `node`, excluding `node`.
fn neighbours(mesh: &Mesh, node: usize) -> Vec<usize> {
    let mut out: Vec<usize> = mesh
        .triangles()
        .iter()
        .filter(|t| t.contains(&node))
        .flat_map(|t| t.iter().copied())
        .filter(|&n| n != node)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Argmax node refined by a least-squares paraboloid through the node and
/// its neighbours, clamped to the patch's bounding box.
pub fn locate_maximum(mesh: &Mesh, u: &[f64]) -> Result<MaxPoint> {
    let (node, _) = u
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    if mesh.tags()[node] == NodeTag::Dirichlet {
        return Err(Error::Features("maximum sits on the boundary; the field is broken".into()));
    }
    let patch: Vec<usize> = std::iter::once(node).chain(neighbours(mesh, node)).collect();
    if patch.iter().skip(1).any(|&n| mesh.tags()[n] == NodeTag::Dirichlet) {
        return Err(Error::Features("maximum lies in a boundary patch; the field is broken".into()));
    }
    let nodes = mesh.nodes();
    let [x0, y0] = nodes[node];
    let h = patch[1..]
        .iter()
        .map(|&n| (nodes[n][0] - x0).abs().max((nodes[n][1] - y0).abs()))
        .fold(0.0, f64::max);
    // local coordinates scaled by the patch size for conditioning
    let rows = patch.len();
    let mut a = DMatrix::zeros(rows, 6);
    let mut b = DVector::zeros(rows);
    for (r, &n) in patch.iter().enumerate() {
        let (dx, dy) = ((nodes[n][0] - x0) / h, (nodes[n][1] - y0) / h);
        let basis = [1.0, dx, dy, dx * dx, dx * dy, dy * dy];
        for (c, v) in basis.iter().enumerate() {
            a[(r, c)] = *v;
        }
        b[r] = u[n] - u[node];
    }
    let c = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Features(format!("paraboloid fit failed: {e}")))?;
    let hess = Matrix2::new(2.0 * c[3], c[4], c[4], 2.0 * c[5]);
    let grad = Vector2::new(c[1], c[2]);
    let (mut dx, mut dy) = match hess.try_inverse() {
        Some(inv) => {
            let s = -(inv * grad);
            (s[0], s[1])
        }
        None => (0.0, 0.0),
    };
    let (lo_x, hi_x, lo_y, hi_y) = patch.iter().fold((0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64), |acc, &n| {
        let (px, py) = ((nodes[n][0] - x0) / h, (nodes[n][1] - y0) / h);
        (acc.0.min(px), acc.1.max(px), acc.2.min(py), acc.3.max(py))
    });
    dx = dx.clamp(lo_x, hi_x);
    dy = dy.clamp(lo_y, hi_y);
    let value = u[node] + c[0] + c[1] * dx + c[2] * dy + c[3] * dx * dx + c[4] * dx * dy + c[5] * dy * dy;
    Ok(MaxPoint {
        x: x0 + h * dx,
        y: y0 + h * dy,
        value,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NodalCurve {
    /// Zero-crossing pairs inside each triangle.
    pub segments: Vec<[[f64; 2]; 2]>,
    /// Extremal `x` over crossings with `y` in `(delta_y, 1 - delta_y)`.
    pub x_min: f64,
    pub x_max: f64,
    pub delta_y: f64,
}

/// Per-triangle zero crossings of a P1 field on edges with a strict sign change.
pub fn nodal_curve(mesh: &Mesh, u: &[f64]) -> Result<NodalCurve> {
    let nodes = mesh.nodes();
    let delta_y = 2.0 / mesh.params().j as f64;
    let mut segments = Vec::new();
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in mesh.triangles() {
        let mut pts: Vec<[f64; 2]> = Vec::with_capacity(2);
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            let (ua, ub) = (u[a], u[b]);
            if ua * ub < 0.0 {
                let s = ua / (ua - ub);
                let p = [
                    nodes[a][0] + s * (nodes[b][0] - nodes[a][0]),
                    nodes[a][1] + s * (nodes[b][1] - nodes[a][1]),
                ];
                if p[1] > delta_y && p[1] < 1.0 - delta_y {
                    x_min = x_min.min(p[0]);
                    x_max = x_max.max(p[0]);
                }
                pts.push(p);
            }
        }
        if pts.len() == 2 {
            segments.push([pts[0], pts[1]]);
        }
    }
    if segments.is_empty() || !x_min.is_finite() {
        return Err(Error::Features("no sign change found; the field has no interior nodal set".into()));
    }
    Ok(NodalCurve {
        segments,
        x_min,
        x_max,
        delta_y,
    })
}

impl NodalCurve {
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = CsvWriter::new(out, &["x0", "y0", "x1", "y1"])?;
        for s in &self.segments {
            w.row(&[s[0][0].into(), s[0][1].into(), s[1][0].into(), s[1][1].into()])?;
        }
        Ok(())
    }
}

/// Length of the vertical slice of `Omega_N` at abscissa `x`.
pub fn height_function(profile: &Profile, n: f64, x: f64) -> f64 {
    if x >= n || x <= -profile.max() {
        0.0
    } else if x >= 0.0 {
        1.0
    } else {
        profile.superlevel_measure(-x)
    }
}

/// Localization data of one domain, from a mesh ladder.
#[derive(Debug, Clone, Serialize)]
pub struct Localization {
    pub n: f64,
    pub a: f64,
    /// Extrapolated maximum of `u_1`.
    pub max_point: [f64; 3],
    /// `|x* - (N - a) / 2|`
    pub max_deviation: f64,
    /// Mean extrapolated crossing of `u_2` over interior rows.
    pub nodal_x: f64,
    /// `max |x_row - (N - a) / 2|` over interior rows.
    pub nodal_deviation: f64,
    /// `x_max - x_min` over the extrapolated interior row crossings.
    pub nodal_extent: f64,
    /// `x_max - x_min` over all crossings of the finest discrete field.
    pub mesh_nodal_extent: f64,
}

/// Measures the localization of the maximum and nodal line on a ladder
/// with two modes.
pub fn localization(lad: &EigenLadder, a: f64) -> Result<Localization> {
    if lad.values[0].len() < 2 {
        return Err(Error::Features("nodal line needs the second eigenfunction".into()));
    }
    let target = 0.5 * (lad.n - a);
    let max_point = lad
        .extrapolated_maximum()
        .ok_or_else(|| Error::Features("maximum could not be located on every level".into()))?;
    let rows = lad.base_mesh.rows();
    let band = 2.0 / lad.base.j as f64;
    let crossings = lad.extrapolated_crossings(2);
    let interior: Vec<f64> = crossings
        .iter()
        .zip(rows)
        .filter(|(x, y)| x.is_finite() && **y > band && **y < 1.0 - band)
        .map(|(x, _)| *x)
        .collect();
    if interior.is_empty() {
        return Err(Error::Features("no interior crossings of the second eigenfunction".into()));
    }
    let nodal_x = interior.iter().sum::<f64>() / interior.len() as f64;
    let nodal_deviation = interior.iter().map(|x| (x - target).abs()).fold(0.0, f64::max);
    let (lo, hi) = interior.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let curve = nodal_curve(&lad.finest.mesh, &lad.finest.fields[1])?;
    Ok(Localization {
        n: lad.n,
        a,
        max_point,
        max_deviation: (max_point[0] - target).abs(),
        nodal_x,
        nodal_deviation,
        nodal_extent: hi - lo,
        mesh_nodal_extent: curve.x_max - curve.x_min,
    })
}

/// Resolutions for the two-profile experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure2Config {
    pub scatter_length: f64,
    pub scatter_base: Resolution,
    pub scatter_levels: u32,
    pub eigen_base: Resolution,
    pub eigen_levels: u32,
}

impl Default for Figure2Config {
    fn default() -> Self {
        Figure2Config {
            scatter_length: 8.0,
            scatter_base: Resolution::new(16),
            scatter_levels: 3,
            eigen_base: Resolution::new(8),
            eigen_levels: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Figure2Report {
    pub eps: f64,
    pub n: f64,
    pub height_samples: usize,
    pub height_max_diff: f64,
    pub a_hat: f64,
    pub a_slope: f64,
    /// `(a_hat - a_slope) / 2`
    pub predicted_shift: f64,
    /// `x_nodal(slope) - x_nodal(hat)`
    pub nodal_shift: f64,
    /// `x*(slope) - x*(hat)`
    pub max_shift: f64,
    pub ratio: f64,
    pub hat: Localization,
    pub slope: Localization,
    #[serde(skip)]
    pub outlines: Vec<(String, Vec<[f64; 2]>)>,
    #[serde(skip)]
    pub curves: Vec<(String, NodalCurve)>,
}

/// Hat and slope profiles of the same size: equal height functions,
/// different phases, hence nodal lines at different places.
pub fn figure2_experiment(eps: f64, n: f64, cfg: &Figure2Config) -> Result<Figure2Report> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Features(format!("eps = {eps} outside (0, 1]")));
    }
    let hat = Profile::hat(eps)?;
    let slope = Profile::slope(eps)?;
    let samples = 101;
    let lo = -hat.max();
    let height_max_diff = (0..samples)
        .map(|i| {
            let x = lo + (n - lo) * i as f64 / (samples - 1) as f64;
            (height_function(&hat, n, x) - height_function(&slope, n, x)).abs()
        })
        .fold(0.0, f64::max);

    let run = |p: &Profile| -> Result<(PhaseEstimate, EigenLadder)> {
        let ph = phase_ladder(p, cfg.scatter_length, &cfg.scatter_base, cfg.scatter_levels, &[])
            .map_err(|e| e.context(format!("phase of {}", p.label())))?;
        let lad = eigen_ladder(p, n, 2, &cfg.eigen_base, cfg.eigen_levels)
            .map_err(|e| e.context(format!("eigenpairs of {}", p.label())))?;
        Ok((ph, lad))
    };
    let (ph_hat, lad_hat) = run(&hat)?;
    let (ph_slope, lad_slope) = run(&slope)?;
    let loc_hat = localization(&lad_hat, ph_hat.a.value)?;
    let loc_slope = localization(&lad_slope, ph_slope.a.value)?;
    let predicted = 0.5 * (ph_hat.a.value - ph_slope.a.value);
    let nodal_shift = loc_slope.nodal_x - loc_hat.nodal_x;

    let outline = |p: &Profile| -> Vec<[f64; 2]> {
        let mut pts: Vec<[f64; 2]> = vec![[n, 0.0], [n, 1.0]];
        let mut arc: Vec<[f64; 2]> = p.breakpoints().map(|(y, v)| [-v, y]).collect();
        arc.reverse();
        pts.extend(arc);
        pts.push([n, 0.0]);
        pts
    };
    let curves = vec![
        (hat.label(), nodal_curve(&lad_hat.finest.mesh, &lad_hat.finest.fields[1])?),
        (slope.label(), nodal_curve(&lad_slope.finest.mesh, &lad_slope.finest.fields[1])?),
    ];
    Ok(Figure2Report {
        eps,
        n,
        height_samples: samples,
        height_max_diff,
        a_hat: ph_hat.a.value,
        a_slope: ph_slope.a.value,
        predicted_shift: predicted,
        nodal_shift,
        max_shift: loc_slope.max_point[0] - loc_hat.max_point[0],
        ratio: nodal_shift / predicted,
        hat: loc_hat,
        slope: loc_slope,
        outlines: vec![(hat.label(), outline(&hat)), (slope.label(), outline(&slope))],
        curves,
    })
}

impl Figure2Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// Plot-ready rows `profile,kind,x,y`: each outline as a closed polyline
    /// and each nodal segment as two points; blank `kind` rows separate
    /// polylines.
    pub fn write_plot_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = CsvWriter::new(out, &["profile", "kind", "part", "x", "y"])?;
        for (label, pts) in &self.outlines {
            for p in pts {
                w.row(&[Field::Text(label), Field::Text("outline"), Field::Int(0), p[0].into(), p[1].into()])?;
            }
        }
        for (label, curve) in &self.curves {
            for (k, s) in curve.segments.iter().enumerate() {
                for p in s {
                    w.row(&[Field::Text(label), Field::Text("nodal"), Field::Int(k as i64), p[0].into(), p[1].into()])?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::compute_eigenpairs;

    #[test]
    fn height_of_hat_and_slope() {
        for eps in [0.2, 0.5, 1.0] {
            let hat = Profile::hat(eps).unwrap();
            let slope = Profile::slope(eps).unwrap();
            for i in 1..50 {
                let x = -eps / 2.0 * i as f64 / 50.0;
                let expect = 1.0 + 2.0 * x / eps;
                assert!((height_function(&hat, 4.0, x) - expect).abs() < 1e-14);
                assert!((height_function(&slope, 4.0, x) - expect).abs() < 1e-14);
            }
            assert_eq!(height_function(&hat, 4.0, 0.0), 1.0);
            assert_eq!(height_function(&hat, 4.0, 2.0), 1.0);
            assert_eq!(height_function(&hat, 4.0, 5.0), 0.0);
            assert_eq!(height_function(&hat, 4.0, -eps), 0.0);
        }
    }

    #[test]
    fn paraboloid_recovers_exact_quadratic() {
        let mesh = Mesh::build(&Profile::zero(), &crate::mesh::MeshParams::new(2.0, 1, 16, 8)).unwrap();
        let u: Vec<f64> = mesh
            .nodes()
            .iter()
            .map(|p| 1.0 - (p[0] - 1.03).powi(2) - 2.0 * (p[1] - 0.48).powi(2) + 0.1 * (p[0] - 1.03) * (p[1] - 0.48))
            .collect();
        let m = locate_maximum(&mesh, &u).unwrap();
        assert!((m.x - 1.03).abs() < 1e-12 && (m.y - 0.48).abs() < 1e-12, "{m:?}");
        assert!((m.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rectangle_maximum_and_nodal_line() {
        let params = Resolution::new(8).params(8.0, 0);
        let f = compute_eigenpairs(&Profile::zero(), 8.0, 2, &params).unwrap();
        let m = locate_maximum(&f.mesh, &f.fields[0]).unwrap();
        let h = 1.0 / 8.0;
        assert!((m.x - 4.0).abs() <= h && (m.y - 0.5).abs() <= h, "{m:?}");
        assert!(m.value > 0.0);
        let c = nodal_curve(&f.mesh, &f.fields[1]).unwrap();
        assert!((c.x_min - 4.0).abs() < 1e-2 && (c.x_max - 4.0).abs() < 1e-2, "{} {}", c.x_min, c.x_max);
    }

    #[test]
    fn single_signed_field_has_no_nodal_line() {
        let params = Resolution::new(8).params(4.0, 0);
        let f = compute_eigenpairs(&Profile::zero(), 4.0, 1, &params).unwrap();
        assert!(nodal_curve(&f.mesh, &f.fields[0]).is_err());
    }

    #[test]
    fn boundary_maximum_is_rejected() {
        let mesh = Mesh::build(&Profile::zero(), &crate::mesh::MeshParams::new(2.0, 1, 8, 4)).unwrap();
        let u: Vec<f64> = mesh.nodes().iter().map(|p| p[0]).collect();
        assert!(locate_maximum(&mesh, &u).is_err());
    }
}
