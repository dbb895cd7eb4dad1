//! Small quadrature and fitting helpers shared by the modules.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Exact integral over [y0, y1] of the linear function through (y0, f0), (y1, f1)
/// times `sin(omega * y)`.
pub fn linear_times_sine(y0: f64, y1: f64, f0: f64, f1: f64, omega: f64) -> f64 {
    let c = 0.5 * (y0 + y1);
    let d = 0.5 * (y1 - y0);
    if d == 0.0 {
        return 0.0;
    }
    let mean = 0.5 * (f0 + f1);
    let slope = (f1 - f0) / (y1 - y0);
    let x = omega * d;
    // sin x - x cos x loses everything to cancellation for small x
    let odd = if x.abs() < 1e-2 {
        let x2 = x * x;
        x * x2 * (1.0 / 3.0 - x2 * (1.0 / 30.0 - x2 / 840.0))
    } else {
        x.sin() - x * x.cos()
    };
    let even = if x.abs() < 1e-8 { d * omega } else { x.sin() };
    mean * 2.0 * (omega * c).sin() * even / omega + slope * (omega * c).cos() * 2.0 * odd / (omega * omega)
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Slope of `log|y|` against `log x`; the fitted order of a power law.
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.abs().ln()).collect();
    if ly.iter().any(|v| !v.is_finite()) {
        return None;
    }
    fit_line(&lx, &ly)
}

/// Result of extrapolating a sequence computed on a resolution ladder with
/// ratio 2 (coarse to fine).
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct Extrapolation {
    pub value: f64,
    pub error_estimate: f64,
    /// `log2` of the ratio of the last two differences; NaN when the ladder
    /// has already converged to rounding.
    pub observed_order: f64,
    /// False when the differences change sign or fail to shrink.
    pub monotone: bool,
    pub finest: f64,
}

/// Richardson extrapolation with a fitted order.
///
/// The order comes from the finest three levels and the value is the
/// two-level extrapolation with that order (Aitken's delta-squared). With
/// four or more levels and an observed order near 2 the ladder is
/// Romberg-extrapolated in `h^2, h^4, ...` instead. Returns `None` for fewer
/// than three levels.
pub fn richardson(values: &[f64]) -> Option<Extrapolation> {
    let n = values.len();
    if n < 3 || values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let finest = values[n - 1];
    let d: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let (d1, d2) = (d[n - 3], d[n - 2]);
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if d.iter().all(|x| x.abs() <= 4.0 * f64::EPSILON * scale) {
        return Some(Extrapolation {
            value: finest,
            error_estimate: d2.abs(),
            observed_order: f64::NAN,
            monotone: true,
            finest,
        });
    }
    let same_sign = d.windows(2).all(|w| w[0] * w[1] > 0.0);
    let shrinking = d.windows(2).all(|w| w[1].abs() < w[0].abs());
    if !(same_sign && shrinking) {
        return Some(Extrapolation {
            value: finest,
            error_estimate: 10.0 * d1.abs().max(d2.abs()),
            observed_order: (d1 / d2).abs().log2(),
            monotone: false,
            finest,
        });
    }
    let p = (d1 / d2).log2();
    let aitken = |a: f64, b: f64, c: f64| {
        let (e1, e2) = (b - a, c - b);
        c + e2 / ((e1 / e2) - 1.0)
    };
    let value_a = aitken(values[n - 3], values[n - 2], values[n - 1]);
    if n >= 4 && (p - 2.0).abs() <= 0.25 {
        let all = romberg(values);
        let coarse = romberg(&values[..n - 1]);
        let fine = romberg(&values[1..]);
        return Some(Extrapolation {
            value: all,
            error_estimate: (all - coarse).abs().max((all - fine).abs()),
            observed_order: p,
            monotone: true,
            finest,
        });
    }
    let two = finest + d2 / 3.0;
    let mut err = (value_a - two).abs();
    if n >= 4 {
        err = err.max((value_a - aitken(values[n - 4], values[n - 3], values[n - 2])).abs());
    }
    Some(Extrapolation {
        value: value_a,
        error_estimate: err,
        observed_order: p,
        monotone: true,
        finest,
    })
}

/// Repeated Richardson elimination of `h^2, h^4, ...` (ratio 2).
pub(crate) fn romberg(values: &[f64]) -> f64 {
    let mut col = values.to_vec();
    let mut factor = 4.0;
    while col.len() > 1 {
        col = col.windows(2).map(|w| w[1] + (w[1] - w[0]) / (factor - 1.0)).collect();
        factor *= 4.0;
    }
    col[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_16_integrates_degree_31() {
        let (x, w) = gauss_legendre(16);
        let exact = 2.0 / 31.0; // integral of t^30 over [-1, 1]
        let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((got - exact).abs() < 1e-14, "{got} vs {exact}");
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn linear_sine_matches_dense_midpoint() {
        let cases = [
            (0.1, 0.35, 1.0, 0.0, PI),
            (0.0, 1.0, 0.2, -0.7, 3.0 * PI),
            (0.4, 0.4001, 1.0, 2.0, 2.0 * PI),
        ];
        for (y0, y1, f0, f1, w) in cases {
            let n = 20000;
            let h = (y1 - y0) / n as f64;
            let mut s = 0.0;
            for i in 0..n {
                let y = y0 + (i as f64 + 0.5) * h;
                let f = f0 + (f1 - f0) * (y - y0) / (y1 - y0);
                s += f * (w * y).sin() * h;
            }
            let got = linear_times_sine(y0, y1, f0, f1, w);
            assert!((got - s).abs() < 1e-9 * (1.0 + s.abs()), "{got} vs {s}");
        }
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 - 2.0 * x).collect();
        let f = fit_line(&xs, &ys).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-14);
        assert!((f.intercept - 0.5).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn richardson_removes_pure_power() {
        let vals: Vec<f64> = (0..3).map(|l| 2.0 + 0.7 * 0.5f64.powi(l).powf(2.3)).collect();
        let e = richardson(&vals).unwrap();
        assert!((e.value - 2.0).abs() < 1e-13, "{e:?}");
        assert!((e.observed_order - 2.3).abs() < 1e-10);
        assert!(e.monotone);
    }

    #[test]
    fn romberg_on_even_expansion() {
        let f = |h: f64| 1.0 + 0.3 * h * h - 0.8 * h.powi(4) + 0.5 * h.powi(6);
        let vals: Vec<f64> = (0..4).map(|l| f(0.25 * 0.5f64.powi(l))).collect();
        let e = richardson(&vals).unwrap();
        assert!((e.value - 1.0).abs() < 1e-14, "{e:?}");
        assert!(e.error_estimate >= (e.value - 1.0).abs());
    }

    #[test]
    fn non_monotone_ladder_is_flagged() {
        let e = richardson(&[1.0, 1.1, 1.05]).unwrap();
        assert!(!e.monotone);
        assert_eq!(e.value, 1.05);
        assert!(e.error_estimate >= 0.5);
        assert!(richardson(&[1.0, 2.0]).is_none());
    }
}
