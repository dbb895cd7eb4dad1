//! The generalized eigenfunction `U` of the half-infinite strip with a cap.
//!
//! `U` solves `(Delta + pi^2) U = 0`, vanishes on the walls and the arc, and
//! grows like `(x + a) sin(pi y)`. On the truncated mesh the decaying modes
//! `k >= 2` leave through a modal Dirichlet-to-Neumann block and mode 1 carries
//! a unit natural flux. The shift is the lowest transverse eigenvalue of the
//! discrete row grid rather than `pi^2`: with it the discrete far field is
//! exactly linear in `x`, whereas `pi^2` leaves a slowly growing `sinh`
//! component that biases the extracted phase.

use std::io::{self, Write};

use serde::Serialize;

use crate::assembly::{
    apply_dirichlet, assemble_dtn_block, assemble_mass, assemble_mode1_flux, assemble_stiffness, column_mode,
    SymSparse,
};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, MeshParams, Resolution};
use crate::profile::Profile;
use crate::quad::{fit_line, richardson, Extrapolation};
use crate::report::{fmt_f64, CsvWriter, Field};
use crate::sparse::{factorize, smallest_eigenpairs};

/// Deviation of the fitted mode-1 slope from 1 beyond which the truncation
/// is considered unconverged.
pub const SLOPE_TOLERANCE: f64 = 0.05;
/// Relative level below which modal coefficients are treated as rounding noise.
pub const NOISE_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct ScatterField {
    pub mesh: Mesh,
    /// Nodal values on the whole mesh (zero on Dirichlet nodes).
    pub u: Vec<f64>,
    pub a_trace: f64,
    pub a_fit: f64,
    pub slope_fit: f64,
    pub fit_window: (f64, f64),
    /// Decaying modes handled by the boundary block.
    pub modes: usize,
    /// Lowest eigenvalue of the discrete transverse problem.
    pub transverse_shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFitReport {
    pub slope: f64,
    pub intercept: f64,
    /// `intercept / slope`
    pub a: f64,
    pub columns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeDecay {
    pub k: usize,
    /// Fitted `kappa` in `|c_k(x)| ~ A e^{-kappa x}`; `None` below the noise floor.
    pub rate: Option<f64>,
    /// Signed `A_k`.
    pub amplitude: Option<f64>,
    /// Far-field offset removed before fitting.
    pub plateau: f64,
    pub samples_used: usize,
    pub below_noise_floor: bool,
}

/// Lowest eigenvalue of `-v''` on the row grid (P1, Dirichlet ends).
pub fn transverse_shift(rows: &[f64]) -> Result<f64> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::Scattering("need at least two row intervals".into()));
    }
    let mut k = Vec::new();
    let mut m = Vec::new();
    let unknown = |row: usize| (1..n - 1).contains(&row).then(|| row - 1);
    for e in 0..n - 1 {
        let h = rows[e + 1] - rows[e];
        let ids = [unknown(e), unknown(e + 1)];
        for a in 0..2 {
            for b in a..2 {
                if let (Some(i), Some(j)) = (ids[a], ids[b]) {
                    let (kv, mv) = if a == b { (1.0 / h, h / 3.0) } else { (-1.0 / h, h / 6.0) };
                    k.push((i.min(j), i.max(j), kv));
                    m.push((i.min(j), i.max(j), mv));
                }
            }
        }
    }
    let k = SymSparse::from_triplets(n - 2, k);
    let m = SymSparse::from_triplets(n - 2, m);
    let pairs = smallest_eigenpairs(&k, &m, 1, 0.0, 1e-10, 200)?;
    Ok(pairs[0].value)
}

/// Solves the truncated scattering problem on `[-phi, L] x [0, 1]`.
pub fn solve_generalized_mode(
    profile: &Profile,
    length: f64,
    i_cap: usize,
    i_strip: usize,
    j: usize,
    modes: usize,
) -> Result<ScatterField> {
    solve_on(profile, &MeshParams::new(length, i_cap, i_strip, j), modes)
}

/// Default DtN rank `min(8, J - 1)`.
pub fn default_modes(j: usize) -> usize {
    8.min(j - 1)
}

pub fn solve_on(profile: &Profile, params: &MeshParams, modes: usize) -> Result<ScatterField> {
    let length = params.length;
    if length < 4.0 {
        return Err(Error::Scattering(format!("truncation length {length} must be at least 4")));
    }
    let params = params.clone().open_right_end();
    let mesh = Mesh::build(profile, &params)?;
    let a = assemble_stiffness(&mesh)?;
    let m = assemble_mass(&mesh)?;
    let red = apply_dirichlet(&a, &m, &mesh, false)?;
    let shift = transverse_shift(mesh.rows())?;
    let dtn = assemble_dtn_block(&mesh, modes, length)?.restrict(&red.index, red.free.len());
    let flux = red.reduce(&assemble_mode1_flux(&mesh, length)?);
    let system = red.a.linear_combination(1.0, &red.m, -shift).linear_combination(1.0, &dtn, 1.0);
    let fact = factorize(&system).map_err(|e| e.context("scattering system"))?;
    let u = red.expand(&fact.solve(&flux)?);
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Scattering("solution is not finite".into()));
    }

    let mut field = ScatterField {
        mesh,
        u,
        a_trace: 0.0,
        a_fit: 0.0,
        slope_fit: 0.0,
        fit_window: (0.5 * length, 0.75 * length),
        modes,
        transverse_shift: shift,
    };
    field.a_trace = extract_a_trace(&field);
    let fit = extract_a_linefit(&field, field.fit_window)?;
    field.a_fit = fit.a;
    field.slope_fit = fit.slope;
    if (fit.slope - 1.0).abs() > SLOPE_TOLERANCE {
        return Err(Error::Scattering(format!(
            "mode-1 slope {} deviates from 1 by more than {SLOPE_TOLERANCE}: truncation unconverged",
            fit.slope
        )));
    }
    Ok(field)
}

/// `2 int U(0, y) sin(pi y) dy` on the interface line.
pub fn extract_a_trace(f: &ScatterField) -> f64 {
    if !f.mesh.has_cap() {
        return 0.0;
    }
    column_mode(&f.mesh, f.mesh.interface_column(), &f.u, 1)
}

/// Least-squares line through `c_1(x) = 2 int U(x, y) sin(pi y) dy` over the
/// strip columns in `window`.
pub fn extract_a_linefit(f: &ScatterField, window: (f64, f64)) -> Result<LineFitReport> {
    let (lo, hi) = window;
    let length = f.mesh.length();
    if !(lo >= 1.0 - 1e-12 && hi <= length - 1.0 + 1e-12 && lo < hi) {
        return Err(Error::Scattering(format!(
            "fit window [{lo}, {hi}] must satisfy 1 <= lo < hi <= L - 1 = {}",
            length - 1.0
        )));
    }
    let (xs, cs): (Vec<f64>, Vec<f64>) = (0..f.mesh.strip_columns())
        .map(|i| (f.mesh.strip_x(i), i))
        .filter(|(x, _)| *x >= lo - 1e-12 && *x <= hi + 1e-12)
        .map(|(x, i)| (x, column_mode(&f.mesh, f.mesh.strip_column(i), &f.u, 1)))
        .unzip();
    if xs.len() < 8 {
        return Err(Error::Scattering(format!(
            "fit window [{lo}, {hi}] holds {} mesh columns, need at least 8",
            xs.len()
        )));
    }
    let fit = fit_line(&xs, &cs).ok_or_else(|| Error::Scattering("degenerate line fit".into()))?;
    Ok(LineFitReport {
        slope: fit.slope,
        intercept: fit.intercept,
        a: fit.intercept / fit.slope,
        columns: xs.len(),
    })
}

/// Modal coefficient `c_k` on every strip column: `(x, c_k(x))`.
pub fn mode_profile(f: &ScatterField, k: usize) -> Vec<(f64, f64)> {
    (0..f.mesh.strip_columns())
        .map(|i| (f.mesh.strip_x(i), column_mode(&f.mesh, f.mesh.strip_column(i), &f.u, k)))
        .collect()
}

/// Exponential decay fit of `c_k` at the strip columns nearest `x_samples`.
pub fn mode_coefficients(f: &ScatterField, k: usize, x_samples: &[f64]) -> Result<ModeDecay> {
    if k < 2 || k > f.modes {
        return Err(Error::Scattering(format!("mode {k} outside [2, K = {}]", f.modes)));
    }
    let length = f.mesh.length();
    if let Some(x) = x_samples.iter().find(|x| !(**x > 1.0 && **x < length - 1.0)) {
        return Err(Error::Scattering(format!("sample x = {x} outside (1, L - 1)")));
    }
    let n = f.mesh.params().i_strip;
    let mut cols: Vec<usize> = x_samples
        .iter()
        .map(|x| ((x / length * n as f64).round() as usize).min(n))
        .collect();
    cols.sort_unstable();
    cols.dedup();
    // the far field carries a resolution artefact that is constant in x;
    // midway both end layers have decayed below rounding
    let mid = (n as f64 / 2.0).round() as usize;
    let plateau = column_mode(&f.mesh, f.mesh.strip_column(mid), &f.u, k);
    let mut xs = Vec::new();
    let mut ls = Vec::new();
    let mut signs = Vec::new();
    for &i in &cols {
        let x = f.mesh.strip_x(i);
        let col = f.mesh.strip_column(i);
        let c = column_mode(&f.mesh, col, &f.u, k) - plateau;
        let scale = column_mode(&f.mesh, col, &f.u, 1).abs().max(1.0);
        if c.abs() > 1e3 * NOISE_FLOOR * scale {
            xs.push(x);
            ls.push(c.abs().ln());
            signs.push(c.signum());
        }
    }
    let consistent = signs.windows(2).all(|w| w[0] == w[1]);
    if xs.len() < 3 || !consistent {
        return Ok(ModeDecay {
            k,
            rate: None,
            amplitude: None,
            plateau,
            samples_used: xs.len(),
            below_noise_floor: true,
        });
    }
    let fit = fit_line(&xs, &ls).ok_or_else(|| Error::Scattering("degenerate decay fit".into()))?;
    Ok(ModeDecay {
        k,
        rate: Some(-fit.slope),
        amplitude: Some(signs[0] * fit.intercept.exp()),
        plateau,
        samples_used: xs.len(),
        below_noise_floor: false,
    })
}

/// Decay fit over the strip columns in `(1, L / 2]`, away from the layer at
/// the truncation line.
pub fn mode_decay(f: &ScatterField, k: usize) -> Result<ModeDecay> {
    let length = f.mesh.length();
    let xs: Vec<f64> = (0..f.mesh.strip_columns())
        .map(|i| f.mesh.strip_x(i))
        .filter(|&x| x > 1.0 + 1e-9 && x <= 0.5 * length + 1e-9)
        .collect();
    mode_coefficients(f, k, &xs)
}

/// Far-field transverse mass `q` with `int U(x, y)^2 dy ~ q (x + a)^2`; the
/// slope squared of a line through `sqrt` of the slice integrals.
fn far_field_mass(f: &ScatterField) -> Result<f64> {
    let length = f.mesh.length();
    let (mut xs, mut ss) = (Vec::new(), Vec::new());
    for i in 0..f.mesh.strip_columns() {
        let x = f.mesh.strip_x(i);
        if x >= 0.5 * length - 1e-12 {
            xs.push(x);
            ss.push(column_square(&f.mesh, f.mesh.strip_column(i), &f.u).sqrt());
        }
    }
    let fit = fit_line(&xs, &ss).ok_or_else(|| Error::Scattering("degenerate far-field fit".into()))?;
    Ok(fit.slope * fit.slope)
}

/// `int u(x, y)^2 dy` along a column, exact for the linear trace.
fn column_square(mesh: &Mesh, column: &[usize], u: &[f64]) -> f64 {
    let nodes = mesh.nodes();
    column
        .windows(2)
        .map(|w| {
            let h = nodes[w[1]][1] - nodes[w[0]][1];
            let (p, q) = (u[w[0]], u[w[1]]);
            h * (p * p + p * q + q * q) / 3.0
        })
        .sum()
}

/// `int U^2` over `{x < cut}`, clipping triangles exactly; the integrand is
/// quadratic, so the edge-midpoint rule is exact on every piece.
pub fn integrate_square_below(mesh: &Mesh, u: &[f64], cut: f64) -> f64 {
    let nodes = mesh.nodes();
    let mut total = 0.0;
    for t in mesh.triangles() {
        let p: Vec<[f64; 3]> = t.iter().map(|&n| [nodes[n][0], nodes[n][1], u[n]]).collect();
        let xmax = p.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v[0]));
        let xmin = p.iter().fold(f64::INFINITY, |m, v| m.min(v[0]));
        if xmin >= cut {
            continue;
        }
        if xmax <= cut {
            total += tri_square(p[0], p[1], p[2]);
            continue;
        }
        // Sutherland-Hodgman against x <= cut; u is linear so interpolate it too
        let mut poly: Vec<[f64; 3]> = Vec::with_capacity(4);
        for e in 0..3 {
            let (a, b) = (p[e], p[(e + 1) % 3]);
            let (ina, inb) = (a[0] <= cut, b[0] <= cut);
            if ina {
                poly.push(a);
            }
            if ina != inb {
                let s = (cut - a[0]) / (b[0] - a[0]);
                poly.push([cut, a[1] + s * (b[1] - a[1]), a[2] + s * (b[2] - a[2])]);
            }
        }
        for k in 1..poly.len().saturating_sub(1) {
            total += tri_square(poly[0], poly[k], poly[k + 1]);
        }
    }
    total
}

fn tri_square(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
    let mid = |p: [f64; 3], q: [f64; 3]| 0.5 * (p[2] + q[2]);
    let (m1, m2, m3) = (mid(a, b), mid(b, c), mid(c, a));
    area / 3.0 * (m1 * m1 + m2 * m2 + m3 * m3)
}

/// `int_{x + a < A} U^2 - q A^3 / 3`, with `q` the measured far-field
/// transverse mass (`1/2` in the limit), which keeps the `O(h^2)` error of
/// the slice mass from growing like `A^3`.
pub fn compute_b_constant(f: &ScatterField, a: f64, a_cut: f64) -> Result<f64> {
    let cut = a_cut - a;
    let length = f.mesh.length();
    if !(cut > 0.0 && cut <= length + 1e-12) {
        return Err(Error::Scattering(format!(
            "cutoff A = {a_cut} maps to x = {cut}, outside the strip (0, {length}]"
        )));
    }
    let q = far_field_mass(f)?;
    Ok(integrate_square_below(&f.mesh, &f.u, cut) - q * a_cut.powi(3) / 3.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScatterSummary {
    pub a_trace: f64,
    pub a_fit: f64,
    pub slope_fit: f64,
    pub b: Option<f64>,
    pub mode_rates: Vec<Option<f64>>,
    pub length: f64,
    pub modes: usize,
    pub j: usize,
}

impl ScatterField {
    pub fn summary(&self, b: Option<f64>) -> ScatterSummary {
        let mode_rates = (2..=self.modes.min(4))
            .map(|k| mode_decay(self, k).ok().and_then(|d| d.rate))
            .collect();
        ScatterSummary {
            a_trace: self.a_trace,
            a_fit: self.a_fit,
            slope_fit: self.slope_fit,
            b,
            mode_rates,
            length: self.mesh.length(),
            modes: self.modes,
            j: self.mesh.params().j,
        }
    }

    /// `x,y,U` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = CsvWriter::new(out, &["x", "y", "U"])?;
        for (p, v) in self.mesh.nodes().iter().zip(&self.u) {
            w.row(&[Field::Float(p[0]), Field::Float(p[1]), Field::Float(*v)])?;
        }
        Ok(())
    }
}

/// Scattering quantities on a ladder of resolutions, with their limits.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseEstimate {
    pub profile: String,
    pub length: f64,
    pub j: Vec<usize>,
    pub a_fit: Vec<f64>,
    pub a_trace: Vec<f64>,
    pub slope_fit: Vec<f64>,
    /// `b` at each level for each cutoff in `cuts`.
    pub b: Vec<Vec<f64>>,
    pub cuts: Vec<f64>,
    pub a: Extrapolation,
    pub a_trace_limit: Extrapolation,
    pub b_limit: Vec<Extrapolation>,
    /// Finest-level extraction, `b` at the first cutoff.
    pub finest: Option<ScatterSummary>,
    #[serde(skip)]
    pub finest_field: Option<ScatterField>,
}

impl PhaseEstimate {
    /// `b` at the largest cutoff.
    pub fn b_value(&self) -> Option<f64> {
        self.b_limit.first().map(|e| e.value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn summary_line(&self) -> String {
        format!(
            "a = {} (err {}), b = {}",
            fmt_f64(self.a.value),
            fmt_f64(self.a.error_estimate),
            self.b_value().map(fmt_f64).unwrap_or_else(|| "-".into())
        )
    }
}

/// Runs the scattering solve on `levels` refinements of `base` and
/// extrapolates `a` (line fit and trace) and `b` at the given cutoffs.
pub fn phase_ladder(profile: &Profile, length: f64, base: &Resolution, levels: u32, cuts: &[f64]) -> Result<PhaseEstimate> {
    phase_ladder_with_modes(profile, length, base, levels, cuts, None)
}

/// [`phase_ladder`] with an explicit number of boundary modes instead of
/// [`default_modes`].
pub fn phase_ladder_with_modes(
    profile: &Profile,
    length: f64,
    base: &Resolution,
    levels: u32,
    cuts: &[f64],
    modes: Option<usize>,
) -> Result<PhaseEstimate> {
    if levels < 3 {
        return Err(Error::Scattering("extrapolation needs at least three levels".into()));
    }
    let mut est = PhaseEstimate {
        profile: profile.label(),
        length,
        j: Vec::new(),
        a_fit: Vec::new(),
        a_trace: Vec::new(),
        slope_fit: Vec::new(),
        b: vec![Vec::new(); cuts.len()],
        cuts: cuts.to_vec(),
        a: Extrapolation::default(),
        a_trace_limit: Extrapolation::default(),
        b_limit: Vec::new(),
        finest: None,
        finest_field: None,
    };
    for level in 0..levels {
        let params = base.params(length, level);
        let modes = modes.unwrap_or_else(|| default_modes(params.j));
        let field = solve_on(profile, &params, modes).map_err(|e| e.context(format!("scattering at J = {}", params.j)))?;
        est.j.push(params.j);
        est.a_fit.push(field.a_fit);
        est.a_trace.push(field.a_trace);
        est.slope_fit.push(field.slope_fit);
        for (c, &cut) in cuts.iter().enumerate() {
            est.b[c].push(compute_b_constant(&field, field.a_fit, cut)?);
        }
        est.finest = Some(field.summary(est.b.first().and_then(|v| v.last().copied())));
        est.finest_field = Some(field);
    }
    let extrap = |v: &[f64]| richardson(v).ok_or_else(|| Error::Scattering("extrapolation failed".into()));
    est.a = extrap(&est.a_fit)?;
    est.a_trace_limit = extrap(&est.a_trace)?;
    est.b_limit = est.b.iter().map(|v| extrap(v)).collect::<Result<_>>()?;
    Ok(est)
}

/// The first-order prediction `eps * I(phi)` for comparison with `a(eps phi)`.
pub fn first_order_phase(profile: &Profile) -> f64 {
    profile.perturbation_coefficient()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn field(p: &Profile, length: f64, j: usize) -> ScatterField {
        let params = Resolution::new(j).params(length, 0);
        solve_on(p, &params, default_modes(j)).unwrap()
    }

    #[test]
    fn transverse_shift_is_above_pi_squared() {
        let rows: Vec<f64> = (0..=32).map(|r| r as f64 / 32.0).collect();
        let s = transverse_shift(&rows).unwrap();
        // P1 on a uniform grid: 6/h^2 (1 - cos t)/(2 + cos t), t = pi h
        let h = 1.0 / 32.0;
        let t = PI * h;
        let exact = 6.0 / (h * h) * (1.0 - t.cos()) / (2.0 + t.cos());
        assert!((s - exact).abs() < 1e-9 * exact);
        assert!(s > PI * PI);
    }

    #[test]
    fn empty_cap_phase_vanishes_at_fourth_order() {
        let coarse = field(&Profile::zero(), 8.0, 16);
        let fine = field(&Profile::zero(), 8.0, 32);
        assert_eq!(coarse.a_trace, 0.0);
        assert!(coarse.a_fit.abs() < 1e-5, "{}", coarse.a_fit);
        assert!(fine.a_fit.abs() < 2e-7, "{}", fine.a_fit);
        assert!(coarse.a_fit.abs() / fine.a_fit.abs() > 12.0);
        assert!((fine.slope_fit - 1.0).abs() < 1e-2);
    }

    #[test]
    fn constant_cap_is_a_shifted_strip() {
        let f = field(&Profile::constant(0.3).unwrap(), 8.0, 32);
        assert!((f.a_fit - 0.3).abs() < 2e-3, "{}", f.a_fit);
        assert!((f.a_trace - 0.3).abs() < 2e-3, "{}", f.a_trace);
        // only the discretization excites the antisymmetric mode
        let flat = mode_decay(&f, 2).unwrap();
        let tilted = mode_decay(&field(&Profile::slope(0.3).unwrap(), 8.0, 32), 2).unwrap();
        let amp = |d: &ModeDecay| d.amplitude.map_or(0.0, f64::abs);
        assert!(amp(&flat) < 1e-2 * amp(&tilted), "{flat:?} {tilted:?}");
    }

    #[test]
    fn window_must_hold_enough_columns() {
        let f = field(&Profile::hat(1.0).unwrap(), 8.0, 8);
        assert!(extract_a_linefit(&f, (4.0, 4.5)).is_err());
        assert!(extract_a_linefit(&f, (0.5, 4.0)).is_err());
    }

    #[test]
    fn short_truncation_is_rejected() {
        let params = Resolution::new(8).params(3.0, 0);
        assert!(solve_on(&Profile::hat(1.0).unwrap(), &params, 2).is_err());
    }

    #[test]
    fn clipped_integral_of_linear_field() {
        // U = x + 1 on the unit square, integral over x < 0.37 is ((1.37)^3 - 1)/3
        let mesh = Mesh::build(&Profile::zero(), &MeshParams::new(1.0, 1, 4, 3)).unwrap();
        let u: Vec<f64> = mesh.nodes().iter().map(|p| p[0] + 1.0).collect();
        let got = integrate_square_below(&mesh, &u, 0.37);
        let exact = (1.37f64.powi(3) - 1.0) / 3.0;
        assert!((got - exact).abs() < 1e-14, "{got} vs {exact}");
    }
}
