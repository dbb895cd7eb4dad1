//! Boundary profiles `phi: [0, 1] -> [0, inf)` describing the curved left end
//! of the strip domain `{0 < y < 1, -phi(y) < x < N}`.
//!
//! Every profile is piecewise linear. The named shapes (constant, hat, slope)
//! are breakpoint lists; smooth Lipschitz profiles have to be sampled by the
//! caller.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::gauss_legendre;

/// Named base shape, before the `eps` scaling.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    Constant { c: f64 },
    /// `1/2 - |y - 1/2|`
    Hat,
    /// `y / 2`
    Slope,
    Pwl { points: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    kind: ProfileKind,
    eps: f64,
    /// Base breakpoints `(y, phi)`, strictly increasing in y, spanning [0, 1].
    points: Vec<(f64, f64)>,
}

impl Profile {
    pub fn new(kind: ProfileKind, eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::Profile(format!("scale eps = {eps} must be finite and >= 0")));
        }
        let points = match &kind {
            ProfileKind::Constant { c } => vec![(0.0, *c), (1.0, *c)],
            ProfileKind::Hat => vec![(0.0, 0.0), (0.5, 0.5), (1.0, 0.0)],
            ProfileKind::Slope => vec![(0.0, 0.0), (1.0, 0.5)],
            ProfileKind::Pwl { points } => points.iter().map(|p| (p[0], p[1])).collect(),
        };
        validate_points(&points)?;
        Ok(Profile { kind, eps, points })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(ProfileKind::Constant { c }, 1.0)
    }

    pub fn zero() -> Self {
        Self::constant(0.0).expect("zero profile is valid")
    }

    pub fn hat(eps: f64) -> Result<Self> {
        Self::new(ProfileKind::Hat, eps)
    }

    pub fn slope(eps: f64) -> Result<Self> {
        Self::new(ProfileKind::Slope, eps)
    }

    pub fn piecewise_linear(points: Vec<[f64; 2]>, eps: f64) -> Result<Self> {
        Self::new(ProfileKind::Pwl { points }, eps)
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Same base shape with a different scale.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.kind.clone(), eps)
    }

    /// Scaled breakpoints `(y, eps * phi)`.
    pub fn breakpoints(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().map(move |&(y, v)| (y, self.eps * v))
    }

    /// Short label used in reports, e.g. `hat(eps=0.5)`.
    pub fn label(&self) -> String {
        match &self.kind {
            ProfileKind::Constant { c } => format!("constant(c={},eps={})", c, self.eps),
            ProfileKind::Hat => format!("hat(eps={})", self.eps),
            ProfileKind::Slope => format!("slope(eps={})", self.eps),
            ProfileKind::Pwl { points } => format!("pwl({} points,eps={})", points.len(), self.eps),
        }
    }

    pub fn eval(&self, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::OutOfDomain { name: "y", value: y });
        }
        Ok(self.eval_unchecked(y))
    }

    pub(crate) fn eval_unchecked(&self, y: f64) -> f64 {
        let pts = &self.points;
        // first breakpoint strictly to the right of y
        let k = pts.partition_point(|p| p.0 <= y).clamp(1, pts.len() - 1);
        let (y0, v0) = pts[k - 1];
        let (y1, v1) = pts[k];
        let t = (y - y0) / (y1 - y0);
        self.eps * (v0 + t * (v1 - v0))
    }

    /// Exact supremum of the scaled profile.
    pub fn max(&self) -> f64 {
        self.eps * self.points.iter().fold(0.0_f64, |m, p| m.max(p.1))
    }

    pub fn min(&self) -> f64 {
        self.eps * self.points.iter().fold(f64::INFINITY, |m, p| m.min(p.1))
    }

    /// Largest segment slope in absolute value.
    pub fn lipschitz(&self) -> f64 {
        self.eps
            * self
                .points
                .windows(2)
                .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.max() == 0.0
    }

    /// `2 * int_0^1 phi(y) sin^2(pi y) dy`, the first-order coefficient of the
    /// scattering phase under `phi -> eps * phi`. Linear in the scale.
    pub fn perturbation_coefficient(&self) -> f64 {
        let (nodes, weights) = gauss16();
        let mut total = 0.0;
        for w in self.points.windows(2) {
            let (y0, v0) = w[0];
            let (y1, v1) = w[1];
            let half = 0.5 * (y1 - y0);
            let mid = 0.5 * (y0 + y1);
            for (t, wt) in nodes.iter().zip(weights) {
                let y = mid + half * t;
                let v = v0 + (v1 - v0) * (y - y0) / (y1 - y0);
                let s = (PI * y).sin();
                total += wt * half * v * s * s;
            }
        }
        2.0 * self.eps * total
    }

    /// Measure of `{y in [0,1] : phi(y) > t}`, exact for piecewise-linear profiles.
    pub fn superlevel_measure(&self, t: f64) -> f64 {
        let mut len = 0.0;
        for w in self.points.windows(2) {
            let (y0, v0) = (w[0].0, self.eps * w[0].1);
            let (y1, v1) = (w[1].0, self.eps * w[1].1);
            match (v0 > t, v1 > t) {
                (true, true) => len += y1 - y0,
                (false, false) => {}
                (true, false) => len += (v0 - t) / (v0 - v1) * (y1 - y0),
                (false, true) => len += (v1 - t) / (v1 - v0) * (y1 - y0),
            }
        }
        len
    }
}

/// Profile as written in a run-config file:
/// `{"kind": "hat"|"slope"|"constant"|"pwl", "eps": 1.0, "c": 0.3, "points": [[y, v], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub kind: String,
    #[serde(default = "one")]
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 2]>>,
}

fn one() -> f64 {
    1.0
}

impl ProfileSpec {
    pub fn build(&self) -> Result<Profile> {
        let kind = match (self.kind.as_str(), self.c, &self.points) {
            ("hat", None, None) => ProfileKind::Hat,
            ("slope", None, None) => ProfileKind::Slope,
            ("constant", Some(c), None) => ProfileKind::Constant { c },
            ("pwl", None, Some(points)) => ProfileKind::Pwl { points: points.clone() },
            ("constant", None, _) => return Err(Error::Profile("constant profile needs \"c\"".into())),
            ("pwl", _, None) => return Err(Error::Profile("pwl profile needs \"points\"".into())),
            ("hat" | "slope" | "constant" | "pwl", _, _) => {
                return Err(Error::Profile(format!("unexpected field for kind \"{}\"", self.kind)))
            }
            (other, _, _) => return Err(Error::Profile(format!("unknown profile kind \"{other}\""))),
        };
        Profile::new(kind, self.eps)
    }
}

impl From<&Profile> for ProfileSpec {
    fn from(p: &Profile) -> Self {
        let (kind, c, points) = match &p.kind {
            ProfileKind::Constant { c } => ("constant", Some(*c), None),
            ProfileKind::Hat => ("hat", None, None),
            ProfileKind::Slope => ("slope", None, None),
            ProfileKind::Pwl { points } => ("pwl", None, Some(points.clone())),
        };
        ProfileSpec {
            kind: kind.into(),
            eps: p.eps,
            c,
            points,
        }
    }
}

fn gauss16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

fn validate_points(points: &[(f64, f64)]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::Profile("need at least two breakpoints".into()));
    }
    if points[0].0 != 0.0 || points[points.len() - 1].0 != 1.0 {
        return Err(Error::Profile("breakpoints must start at y = 0 and end at y = 1".into()));
    }
    for w in points.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::Profile(format!(
                "breakpoints not strictly increasing at y = {}",
                w[1].0
            )));
        }
    }
    for &(y, v) in points {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Profile(format!("phi({y}) = {v} must be finite and >= 0")));
        }
    }
    Ok(())
}
