//! Dirichlet eigenpairs of `Omega_N`, extrapolated in the mesh width, and
//! the large-`N` expansion `mu_m = pi^2 + m^2 pi^2 / (N + a)^2 + O(N^-5)`.

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::Serialize;

use crate::assembly::{apply_dirichlet, assemble_mass, assemble_stiffness};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, MeshParams, Resolution};
use crate::profile::Profile;
use crate::quad::{log_log_fit, richardson, romberg, Extrapolation};
use crate::report::{CsvWriter, Field};
use crate::sparse::{eigenpairs_with, EigenOptions};

const PI2: f64 = PI * PI;
/// Eigen residual tolerance used by the sweeps; tight because the
/// localization studies resolve shifts of order `1e-6`.
pub const EIGEN_TOL: f64 = 1e-10;

/// Lowest eigenpairs on one mesh, fields expanded to every mesh node.
#[derive(Debug, Clone)]
pub struct EigenField {
    pub mesh: Mesh,
    pub values: Vec<f64>,
    /// `fields[m - 1][node]`, M-normalized, sign fixed by [`sign_anchor`].
    pub fields: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Point where mode `m` is made non-negative: the first crest `(N / 2m, 1/2)`.
pub fn sign_anchor(n: f64, m: usize) -> (f64, f64) {
    (n / (2.0 * m as f64), 0.5)
}

pub fn compute_eigenpairs(profile: &Profile, n: f64, m_count: usize, params: &MeshParams) -> Result<EigenField> {
    if !(1..=4).contains(&m_count) {
        return Err(Error::Spectra(format!("m_count = {m_count} outside 1..=4")));
    }
    if !(n > 0.0) {
        return Err(Error::Spectra(format!("N = {n} must be positive")));
    }
    let mut params = params.clone();
    params.length = n;
    params.right_end = crate::mesh::RightEnd::Dirichlet;
    let mesh = Mesh::build(profile, &params)?;
    let a = assemble_stiffness(&mesh)?;
    let m = assemble_mass(&mesh)?;
    let red = apply_dirichlet(&a, &m, &mesh, true)?;
    let opts = EigenOptions {
        tol: EIGEN_TOL,
        max_iter: 200,
        ..EigenOptions::new(m_count, PI2)
    };
    let pairs = eigenpairs_with(&red.a, &red.m, &opts)
        .map_err(|e| e.context(format!("eigenpairs of {} at N = {n}, J = {}", profile.label(), params.j)))?;
    let mut fields = Vec::with_capacity(m_count);
    for (k, p) in pairs.iter().enumerate() {
        let mut u = red.expand(&p.vector);
        let (x, y) = sign_anchor(n, k + 1);
        if u[mesh.nearest_node(x, y)] < 0.0 {
            u.iter_mut().for_each(|v| *v = -*v);
        }
        fields.push(u);
    }
    Ok(EigenField {
        values: pairs.iter().map(|p| p.value).collect(),
        residuals: pairs.iter().map(|p| p.residual).collect(),
        fields,
        mesh,
    })
}

/// Eigen solves of one domain on a nested ladder of meshes.
#[derive(Debug, Clone)]
pub struct EigenLadder {
    pub profile: String,
    pub n: f64,
    pub base: Resolution,
    pub j: Vec<usize>,
    /// `values[level][m - 1]`
    pub values: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
    /// Coarsest mesh; every level contains its nodes bit for bit.
    pub base_mesh: Mesh,
    /// `base_fields[level][m - 1][base node]`
    pub base_fields: Vec<Vec<Vec<f64>>>,
    /// Horizontal zero crossings of each mode along the base rows,
    /// `crossings[level][m - 1][row]` (NaN where the row has none).
    pub row_crossings: Vec<Vec<Vec<f64>>>,
    /// Paraboloid-refined maximum of mode 1, per level.
    pub maxima: Vec<Option<[f64; 3]>>,
    pub finest: EigenField,
}

/// Solves on `levels` refinements of `base`.
pub fn eigen_ladder(profile: &Profile, n: f64, m_count: usize, base: &Resolution, levels: u32) -> Result<EigenLadder> {
    if levels == 0 {
        return Err(Error::Spectra("need at least one level".into()));
    }
    let mut out: Option<EigenLadder> = None;
    for level in 0..levels {
        let params = base.params(n, level);
        let field = compute_eigenpairs(profile, n, m_count, &params)?;
        let lad = out.get_or_insert_with(|| EigenLadder {
            profile: profile.label(),
            n,
            base: *base,
            j: Vec::new(),
            values: Vec::new(),
            residuals: Vec::new(),
            base_mesh: field.mesh.clone(),
            base_fields: Vec::new(),
            row_crossings: Vec::new(),
            maxima: Vec::new(),
            finest: field.clone(),
        });
        let f = 1usize << level;
        let base_cols = lad.base_mesh.columns();
        let mut restricted = vec![vec![0.0; lad.base_mesh.n_nodes()]; m_count];
        for (c, col) in base_cols.iter().enumerate() {
            for (r, &node) in col.iter().enumerate() {
                let fine = field.mesh.columns()[c * f][r * f];
                for (k, u) in field.fields.iter().enumerate() {
                    restricted[k][node] = u[fine];
                }
            }
        }
        let rows = lad.base_mesh.rows().len();
        let crossings = field
            .fields
            .iter()
            .map(|u| (0..rows).map(|r| row_crossing(&field.mesh, u, r * f, n)).collect())
            .collect();
        lad.j.push(params.j);
        lad.values.push(field.values.clone());
        lad.residuals.push(field.residuals.clone());
        lad.base_fields.push(restricted);
        lad.row_crossings.push(crossings);
        lad.maxima.push(crate::features::locate_maximum(&field.mesh, &field.fields[0]).ok().map(|m| [m.x, m.y, m.value]));
        lad.finest = field;
    }
    Ok(out.expect("levels >= 1"))
}

/// Zero crossing of `u` along mesh row `row` nearest to the middle of the
/// strip, by linear interpolation between horizontally adjacent nodes.
fn row_crossing(mesh: &Mesh, u: &[f64], row: usize, n: f64) -> f64 {
    let cols = mesh.columns();
    let mut best = (f64::INFINITY, f64::NAN);
    for w in cols.windows(2) {
        let (a, b) = (w[0][row], w[1][row]);
        if a == b {
            continue;
        }
        let (ua, ub) = (u[a], u[b]);
        if ua * ub < 0.0 {
            let (xa, xb) = (mesh.nodes()[a][0], mesh.nodes()[b][0]);
            let x = xa + ua / (ua - ub) * (xb - xa);
            let d = (x - 0.5 * n).abs();
            if d < best.0 {
                best = (d, x);
            }
        }
    }
    best.1
}

impl EigenLadder {
    pub fn levels(&self) -> usize {
        self.j.len()
    }

    pub fn mode_values(&self, m: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[m - 1]).collect()
    }

    pub fn extrapolated(&self, m: usize) -> Result<Extrapolation> {
        richardson(&self.mode_values(m)).ok_or_else(|| Error::Spectra("Richardson extrapolation needs at least three levels".into()))
    }

    /// Mode `m` on the base nodes, rescaled at every level by the
    /// least-squares factor against `model` and Romberg-extrapolated in
    /// `h^2, h^4` node by node. Returns the field and the finest scale.
    pub fn extrapolated_field(&self, m: usize, model: &[f64], weight: &[bool]) -> (Vec<f64>, f64) {
        let levels = self.levels();
        let scales: Vec<f64> = (0..levels)
            .map(|l| least_squares_scale(&self.base_fields[l][m - 1], model, weight))
            .collect();
        let n = self.base_mesh.n_nodes();
        let field = (0..n)
            .map(|i| {
                let seq: Vec<f64> = (0..levels).map(|l| scales[l] * self.base_fields[l][m - 1][i]).collect();
                romberg(&seq)
            })
            .collect();
        (field, scales[levels - 1])
    }

    /// Row crossings of mode `m` extrapolated level by level.
    pub fn extrapolated_crossings(&self, m: usize) -> Vec<f64> {
        let rows = self.base_mesh.rows().len();
        (0..rows)
            .map(|r| {
                let seq: Vec<f64> = self.row_crossings.iter().map(|c| c[m - 1][r]).collect();
                if seq.iter().any(|x| x.is_nan()) {
                    f64::NAN
                } else {
                    romberg(&seq)
                }
            })
            .collect()
    }

    /// Location of the maximum of mode 1, extrapolated over the levels.
    pub fn extrapolated_maximum(&self) -> Option<[f64; 3]> {
        let m: Option<Vec<[f64; 3]>> = self.maxima.iter().copied().collect();
        let m = m?;
        Some([0, 1, 2].map(|k| romberg(&m.iter().map(|p| p[k]).collect::<Vec<_>>())))
    }
}

fn least_squares_scale(u: &[f64], model: &[f64], weight: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for ((a, b), w) in u.iter().zip(model).zip(weight) {
        if *w {
            num += a * b;
            den += a * a;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Richardson limit of `mu_m` for one domain.
pub fn richardson_eigenvalue(profile: &Profile, n: f64, m: usize, base: &Resolution, levels: u32) -> Result<Extrapolation> {
    if levels < 3 {
        return Err(Error::Spectra("Richardson extrapolation needs at least three levels".into()));
    }
    eigen_ladder(profile, n, m, base, levels)?.extrapolated(m)
}

/// The leading model `pi^2 + m^2 pi^2 / (N + a)^2`.
pub fn model_eigenvalue(n: f64, m: usize, a: f64) -> f64 {
    let mf = m as f64;
    PI2 + mf * mf * PI2 / ((n + a) * (n + a))
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseFromEigs {
    pub m: usize,
    /// `(N, a(N))` with `a(N) = m pi / sqrt(mu_m - pi^2) - N`.
    pub per_n: Vec<(f64, f64)>,
    /// Limit of the fit `a(N) = a + c / N^2`.
    pub a: f64,
    pub c: f64,
}

/// Inverts the leading model per `N` and fits `a(N) = a + c N^-2`, the
/// form implied by an `O(N^-5)` eigenvalue remainder.
pub fn extract_a_from_eigs(m: usize, data: &[(f64, f64)]) -> Result<PhaseFromEigs> {
    if data.is_empty() {
        return Err(Error::Spectra("no eigenvalues supplied".into()));
    }
    let mut per_n = Vec::with_capacity(data.len());
    for &(n, mu) in data {
        if !(mu > PI2) {
            return Err(Error::Spectra(format!(
                "mu_{m} = {mu} at N = {n} is not above pi^2; the discretization is broken"
            )));
        }
        per_n.push((n, m as f64 * PI / (mu - PI2).sqrt() - n));
    }
    let (a, c) = if per_n.len() == 1 {
        (per_n[0].1, 0.0)
    } else {
        let xs: Vec<f64> = per_n.iter().map(|p| p.0.powi(-2)).collect();
        let ys: Vec<f64> = per_n.iter().map(|p| p.1).collect();
        let fit = crate::quad::fit_line(&xs, &ys).ok_or_else(|| Error::Spectra("degenerate N list".into()))?;
        (fit.intercept, fit.slope)
    };
    Ok(PhaseFromEigs { m, per_n, a, c })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompositeError {
    /// `sup |s u - model|` over `x > 3 log N`.
    pub sup_far: f64,
    /// `sup |s u|` over `x <= 3 log N`.
    pub sup_near: f64,
    /// `sup_near` minus the model's own sup over the same nodes.
    pub sup_near_excess: f64,
    pub scale_used: f64,
}

/// Composite approximant `sin(m pi (x + a) / (N + a)) sin(pi y)` at the nodes.
pub fn composite_model(mesh: &Mesh, n: f64, m: usize, a: f64) -> Vec<f64> {
    let k = m as f64 * PI / (n + a);
    mesh.nodes().iter().map(|p| (k * (p[0] + a)).sin() * (PI * p[1]).sin()).collect()
}

/// Far-region mask `x > 3 log N`.
pub fn far_region(mesh: &Mesh, n: f64) -> Vec<bool> {
    let cut = 3.0 * n.ln();
    mesh.nodes().iter().map(|p| p[0] > cut).collect()
}

/// Compares a nodal eigenfield with the composite approximant; the field is
/// rescaled by the least-squares factor over the far region.
pub fn composite_error(mesh: &Mesh, u: &[f64], n: f64, m: usize, a: f64) -> Result<CompositeError> {
    let model = composite_model(mesh, n, m, a);
    let far = far_region(mesh, n);
    if !far.iter().any(|f| *f) {
        return Err(Error::Spectra(format!("no nodes with x > 3 log N = {} at N = {n}", 3.0 * n.ln())));
    }
    let s = least_squares_scale(u, &model, &far);
    Ok(composite_error_scaled(u, &model, &far, s))
}

fn composite_error_scaled(u: &[f64], model: &[f64], far: &[bool], s: f64) -> CompositeError {
    let (mut sup_far, mut sup_near, mut model_near) = (0.0_f64, 0.0_f64, 0.0_f64);
    for ((v, w), f) in u.iter().zip(model).zip(far) {
        if *f {
            sup_far = sup_far.max((s * v - w).abs());
        } else {
            sup_near = sup_near.max((s * v).abs());
            model_near = model_near.max(w.abs());
        }
    }
    CompositeError {
        sup_far,
        sup_near,
        sup_near_excess: sup_near - model_near,
        scale_used: s,
    }
}

/// `sup_far` of the far-field form `sin(k (N - x)) sin(pi y)`, with `k`
/// carrying the fifth-order eigenvalue term `-4 m^4 pi^4 b / (N + a)^5`.
/// Decaying transverse modes are dropped; at `x > 3 log N` they are far
/// below this.
pub fn far_field_prediction(mesh: &Mesh, n: f64, m: usize, a: f64, b: f64) -> Result<f64> {
    let mf = m as f64;
    let nt = n + a;
    let k = (model_eigenvalue(n, m, a) - PI2 - 4.0 * mf.powi(4) * PI2 * PI2 * b / nt.powi(5)).sqrt();
    let u: Vec<f64> = mesh.nodes().iter().map(|p| (k * (n - p[0])).sin() * (PI * p[1]).sin()).collect();
    Ok(composite_error(mesh, &u, n, m, a)?.sup_far)
}

/// Composite error of the level-extrapolated field of mode `m`.
pub fn ladder_composite_error(lad: &EigenLadder, m: usize, a: f64) -> Result<CompositeError> {
    let mesh = &lad.base_mesh;
    let model = composite_model(mesh, lad.n, m, a);
    let far = far_region(mesh, lad.n);
    if !far.iter().any(|f| *f) {
        return Err(Error::Spectra(format!("no nodes with x > 3 log N at N = {}", lad.n)));
    }
    let (u, _) = lad.extrapolated_field(m, &model, &far);
    Ok(composite_error_scaled(&u, &model, &far, 1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionRow {
    pub n: f64,
    pub mu: f64,
    pub err_est: f64,
    pub model: f64,
    pub residual: f64,
    pub noise_dominated: bool,
    pub sup_far: Option<f64>,
    pub sup_near: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionReport {
    pub m: usize,
    pub a: f64,
    pub a_source: String,
    pub b: Option<f64>,
    pub rows: Vec<ExpansionRow>,
    /// Log-log slope of `|r|` against `N + a` over the rows kept.
    pub slope: Option<f64>,
    pub slope_r2: Option<f64>,
    /// R^2 below 0.9.
    pub slope_flagged: bool,
    /// Least-squares coefficient `c` in `r = c (N + a)^-5`.
    pub c5_fit: Option<f64>,
    /// `-4 m^4 pi^4 b`
    pub c5_predicted: Option<f64>,
}

/// Residuals of the leading model. `data` holds `(N, extrapolated mu_m)`.
pub fn expansion_residuals(m: usize, a: f64, a_source: &str, b: Option<f64>, data: &[(f64, Extrapolation)]) -> Result<ExpansionReport> {
    if data.is_empty() {
        return Err(Error::Spectra("no eigenvalues supplied".into()));
    }
    let mut rows: Vec<ExpansionRow> = data
        .iter()
        .map(|(n, e)| {
            let model = model_eigenvalue(*n, m, a);
            let residual = e.value - model;
            ExpansionRow {
                n: *n,
                mu: e.value,
                err_est: e.error_estimate,
                model,
                residual,
                noise_dominated: !e.monotone || residual.abs() < 3.0 * e.error_estimate,
                sup_far: None,
                sup_near: None,
            }
        })
        .collect();
    rows.sort_by(|p, q| p.n.total_cmp(&q.n));
    if rows.iter().any(|r| !r.residual.is_finite()) {
        return Err(Error::Spectra("non-finite residual".into()));
    }
    let kept: Vec<&ExpansionRow> = rows.iter().filter(|r| !r.noise_dominated).collect();
    let (slope, r2) = if kept.len() >= 2 {
        let xs: Vec<f64> = kept.iter().map(|r| r.n + a).collect();
        let ys: Vec<f64> = kept.iter().map(|r| r.residual).collect();
        match log_log_fit(&xs, &ys) {
            Some(f) => (Some(f.slope), Some(f.r_squared)),
            None => (None, None),
        }
    } else {
        (None, None)
    };
    let c5_fit = (!kept.is_empty()).then(|| {
        let (mut num, mut den) = (0.0, 0.0);
        for r in &kept {
            let t = (r.n + a).powi(-5);
            num += r.residual * t;
            den += t * t;
        }
        num / den
    });
    let m4 = (m as f64).powi(4);
    Ok(ExpansionReport {
        m,
        a,
        a_source: a_source.to_string(),
        b,
        rows,
        slope,
        slope_r2: r2,
        slope_flagged: r2.is_none_or(|v| v < 0.9),
        c5_fit,
        c5_predicted: b.map(|b| -4.0 * m4 * PI2 * PI2 * b),
    })
}

impl ExpansionReport {
    pub fn kept_rows(&self) -> usize {
        self.rows.iter().filter(|r| !r.noise_dominated).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = CsvWriter::new(
            out,
            &["N", "m", "mu_extrap", "err_est", "model", "residual", "noise_dominated", "sup_far", "sup_near"],
        )?;
        for r in &self.rows {
            w.row(&[
                Field::Float(r.n),
                Field::Int(self.m as i64),
                Field::Float(r.mu),
                Field::Float(r.err_est),
                Field::Float(r.model),
                Field::Float(r.residual),
                Field::Int(r.noise_dominated as i64),
                Field::Float(r.sup_far.unwrap_or(f64::NAN)),
                Field::Float(r.sup_near.unwrap_or(f64::NAN)),
            ])?;
        }
        Ok(())
    }
}

/// Coefficients `(c3, c4)` of `mu_m - pi^2 - m^2 pi^2 / N^2 = c3 N^-3 + c4 N^-4`
/// by least squares; the leading one should be `-2 m^2 pi^2 a`.
pub fn untilded_coefficients(m: usize, data: &[(f64, f64)]) -> Result<(f64, f64)> {
    if data.len() < 2 {
        return Err(Error::Spectra("need at least two N values".into()));
    }
    let mf = (m * m) as f64;
    let (mut s33, mut s34, mut s44, mut b3, mut b4) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(n, mu) in data {
        let r = mu - PI2 - mf * PI2 / (n * n);
        let (t3, t4) = (n.powi(-3), n.powi(-4));
        s33 += t3 * t3;
        s34 += t3 * t4;
        s44 += t4 * t4;
        b3 += r * t3;
        b4 += r * t4;
    }
    let det = s33 * s44 - s34 * s34;
    if det.abs() < 1e-300 {
        return Err(Error::Spectra("degenerate N list".into()));
    }
    Ok(((b3 * s44 - b4 * s34) / det, (s33 * b4 - s34 * b3) / det))
}
