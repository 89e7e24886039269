//! Drift functions `φ(x)` of the deterministic inter-jump motion.

use serde::{Deserialize, Serialize};

use crate::error::{PassageError, Result};
use crate::numeric::{integrate, CubicSpline, OdeOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Linear,
    Cubic,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DriftKind {
    Constant { c: f64 },
    /// `φ_K(x) = ((λ+q)/μ)(K·e^{−2μx} − 1)`.
    SegerdahlFamily { k: f64, lambda: f64, q: f64, mu: f64 },
    /// Interpolated table, extended by its end values outside the knots.
    Tabulated { points: Vec<(f64, f64)>, interpolation: Interpolation },
}

/// Closed interval with possibly infinite ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Clone, Debug)]
pub struct DriftSpec {
    kind: DriftKind,
    sign_domain: Interval,
    spline: Option<CubicSpline>,
}

impl PartialEq for DriftSpec {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.sign_domain == other.sign_domain
    }
}

// Number of probe points per unit knot interval when checking the sign of a
// tabulated drift.
const SIGN_PROBES: usize = 16;

impl DriftSpec {
    pub fn constant(c: f64) -> Result<Self> {
        if !c.is_finite() || c == 0.0 {
            return Err(PassageError::InvalidModel(format!("constant drift must be finite and nonzero, got {c}")));
        }
        Ok(DriftSpec { kind: DriftKind::Constant { c }, sign_domain: Interval::REAL_LINE, spline: None })
    }

    /// The `φ_K` family. The default sign domain is the side of the zero
    /// `ln(K)/(2μ)` on which `φ_K` is negative for `K ≤ 1` (the whole line
    /// when `K < 0`) and the positive side for `K > 1`.
    pub fn segerdahl_family(k: f64, lambda: f64, q: f64, mu: f64) -> Result<Self> {
        if k == 0.0 || !k.is_finite() {
            return Err(PassageError::InvalidModel("φ_K needs a finite nonzero K".into()));
        }
        if !(lambda > 0.0 && q >= 0.0 && mu > 0.0) || !(lambda + q + mu).is_finite() {
            return Err(PassageError::InvalidModel(format!(
                "φ_K needs λ > 0, q ≥ 0, μ > 0 (got λ={lambda}, q={q}, μ={mu})"
            )));
        }
        let sign_domain = if k < 0.0 {
            Interval::REAL_LINE
        } else {
            let zero = k.ln() / (2.0 * mu);
            if k <= 1.0 {
                Interval { lo: zero, hi: f64::INFINITY }
            } else {
                Interval { lo: f64::NEG_INFINITY, hi: zero }
            }
        };
        Ok(DriftSpec { kind: DriftKind::SegerdahlFamily { k, lambda, q, mu }, sign_domain, spline: None })
    }

    /// Tabulated drift. The default sign domain is the real line, which
    /// requires the table to keep one sign throughout.
    pub fn tabulated(points: Vec<(f64, f64)>, interpolation: Interpolation) -> Result<Self> {
        let d = Self::tabulated_unchecked(points, interpolation)?;
        d.sign_on(f64::NEG_INFINITY, f64::INFINITY)?;
        Ok(d)
    }

    /// Tabulated drift claimed to keep one sign on `[lo, hi]` only.
    pub fn tabulated_on(points: Vec<(f64, f64)>, interpolation: Interpolation, lo: f64, hi: f64) -> Result<Self> {
        Self::tabulated_unchecked(points, interpolation)?.with_sign_domain(lo, hi)
    }

    fn tabulated_unchecked(points: Vec<(f64, f64)>, interpolation: Interpolation) -> Result<Self> {
        if points.len() < 2 {
            return Err(PassageError::InvalidModel("tabulated drift needs at least two points".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) || points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(PassageError::InvalidModel("tabulated drift abscissae must be finite and strictly increasing".into()));
        }
        let spline = match interpolation {
            Interpolation::Linear => None,
            Interpolation::Cubic => {
                let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
                let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
                CubicSpline::natural(&xs, &ys)
            }
        };
        Ok(DriftSpec { kind: DriftKind::Tabulated { points, interpolation }, sign_domain: Interval::REAL_LINE, spline })
    }

    /// Restrict the domain on which the drift is claimed not to change sign.
    pub fn with_sign_domain(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(PassageError::InvalidModel(format!("empty sign domain [{lo}, {hi}]")));
        }
        let saved = self.sign_domain;
        self.sign_domain = Interval { lo, hi };
        let inner_ok = self.sign_on(lo, hi).is_ok();
        if !inner_ok {
            self.sign_domain = saved;
            return Err(PassageError::InvalidModel(format!("drift changes sign or vanishes on [{lo}, {hi}]")));
        }
        Ok(self)
    }

    pub fn kind(&self) -> &DriftKind {
        &self.kind
    }

    pub fn sign_domain(&self) -> Interval {
        self.sign_domain
    }

    pub fn value(&self, x: f64) -> f64 {
        match &self.kind {
            DriftKind::Constant { c } => *c,
            DriftKind::SegerdahlFamily { k, lambda, q, mu } => (lambda + q) / mu * (k * (-2.0 * mu * x).exp() - 1.0),
            DriftKind::Tabulated { points, interpolation } => match interpolation {
                Interpolation::Cubic => self.spline.as_ref().expect("spline built with drift").eval(x),
                Interpolation::Linear => linear_interp(points, x),
            },
        }
    }

    /// `φ′(x)`: analytic for the closed-form kinds, fourth-order central
    /// differences for tables.
    pub fn derivative(&self, x: f64) -> f64 {
        match &self.kind {
            DriftKind::Constant { .. } => 0.0,
            DriftKind::SegerdahlFamily { k, lambda, q, mu } => -2.0 * (lambda + q) * k * (-2.0 * mu * x).exp(),
            DriftKind::Tabulated { .. } => {
                let h = 1e-3 * x.abs().max(1.0);
                (-self.value(x + 2.0 * h) + 8.0 * self.value(x + h) - 8.0 * self.value(x - h)
                    + self.value(x - 2.0 * h))
                    / (12.0 * h)
            }
        }
    }

    /// Sign (±1) of the drift on `[lo, hi]`, or an error if the interval
    /// leaves the sign domain or the drift vanishes/changes sign on it.
    pub fn sign_on(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo <= hi) {
            return Err(PassageError::Domain(format!("empty interval [{lo}, {hi}]")));
        }
        if !(self.sign_domain.contains(lo) && self.sign_domain.contains(hi)) {
            return Err(PassageError::Domain(format!(
                "[{lo}, {hi}] is not inside the drift sign domain [{}, {}]",
                self.sign_domain.lo, self.sign_domain.hi
            )));
        }
        let err = || PassageError::Domain(format!("drift vanishes or changes sign on [{lo}, {hi}]"));
        match &self.kind {
            DriftKind::Constant { c } => Ok(c.signum()),
            DriftKind::SegerdahlFamily { k, mu, .. } => {
                // monotone in x, so the endpoints decide
                let at = |x: f64| if x.is_infinite() { if x > 0.0 { -1.0 } else if *k > 0.0 { 1.0 } else { -1.0 } } else { self.value(x) };
                let _ = mu;
                let (a, b) = (at(lo), at(hi));
                if a * b > 0.0 {
                    Ok(a.signum())
                } else {
                    Err(err())
                }
            }
            DriftKind::Tabulated { points, .. } => {
                let x_first = points[0].0;
                let x_last = points[points.len() - 1].0;
                let a = lo.max(x_first).min(x_last);
                let b = hi.min(x_last).max(x_first);
                let mut probes = vec![self.value(lo.max(x_first - 1.0)), self.value(hi.min(x_last + 1.0))];
                if a < b {
                    let segments = points.len() * SIGN_PROBES;
                    probes.extend((0..=segments).map(|i| self.value(a + (b - a) * i as f64 / segments as f64)));
                }
                let s = probes[0].signum();
                if probes.iter().all(|v| *v != 0.0 && v.signum() == s) {
                    Ok(s)
                } else {
                    Err(err())
                }
            }
        }
    }

    /// Position after following `dx/dt = φ(x)` for time `t ≥ 0` from `x0`.
    /// Exact for constant and `φ_K` drifts (the latter is linear in
    /// `e^{2μx}`); adaptive Runge–Kutta with relative tolerance `tol` for
    /// tables.
    pub fn flow(&self, x0: f64, t: f64, tol: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(x0);
        }
        match &self.kind {
            DriftKind::Constant { c } => Ok(x0 + c * t),
            DriftKind::SegerdahlFamily { k, lambda, q, mu } => {
                let rate = 2.0 * (lambda + q);
                let ratio = k * (-2.0 * mu * x0).exp();
                // e^{2μ(x−x0)} = ratio + (1 − ratio)·e^{−2(λ+q)t}
                let w = ratio + (1.0 - ratio) * (-rate * t).exp();
                if w <= 0.0 {
                    return Err(PassageError::Domain(format!("φ_K flow from {x0} explodes before t = {t}")));
                }
                Ok(x0 + w.ln() / (2.0 * mu))
            }
            DriftKind::Tabulated { .. } => {
                let opts = OdeOptions::with_tolerances(tol, tol * 1e-3);
                let y = integrate(|_, y, dy| dy[0] = self.value(y[0]), 0.0, &[x0], &[t], &opts)
                    .map_err(|e| PassageError::Integration { x: e.x, reason: e.to_string() })?;
                Ok(y[0][0])
            }
        }
    }

    /// Time for the flow started at `x0` to reach `level`, if that happens
    /// within `t_max`.
    pub fn hit_time(&self, x0: f64, level: f64, t_max: f64, tol: f64) -> Result<Option<f64>> {
        if x0 == level {
            return Ok(Some(0.0));
        }
        let heading = (level - x0).signum();
        if self.value(x0).signum() != heading {
            return Ok(None);
        }
        match &self.kind {
            DriftKind::Constant { c } => {
                let t = (level - x0) / c;
                Ok((t <= t_max).then_some(t))
            }
            DriftKind::SegerdahlFamily { k, lambda, q, mu } => {
                let rate = 2.0 * (lambda + q);
                let ratio = k * (-2.0 * mu * x0).exp();
                let target = (2.0 * mu * (level - x0)).exp();
                // e^{−rate·t} = (target − ratio)/(1 − ratio)
                let frac = (target - ratio) / (1.0 - ratio);
                if !(frac > 0.0 && frac <= 1.0) {
                    return Ok(None);
                }
                let t = -frac.ln() / rate;
                Ok((t <= t_max).then_some(t))
            }
            DriftKind::Tabulated { .. } => {
                let end = self.flow(x0, t_max, tol)?;
                if (end - level) * heading < 0.0 {
                    return Ok(None);
                }
                let (mut lo, mut hi) = (0.0, t_max);
                let mut x_lo = x0;
                let mut x_hi = end;
                while (x_hi - x_lo).abs() > 1e-10 && hi - lo > 1e-15 * t_max.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    let xm = self.flow(x0, mid, tol)?;
                    if (xm - level) * heading >= 0.0 {
                        hi = mid;
                        x_hi = xm;
                    } else {
                        lo = mid;
                        x_lo = xm;
                    }
                }
                Ok(Some(hi))
            }
        }
    }
}

fn linear_interp(points: &[(f64, f64)], x: f64) -> f64 {
    let n = points.len();
    if x <= points[0].0 {
        return points[0].1;
    }
    if x >= points[n - 1].0 {
        return points[n - 1].1;
    }
    let i = points.partition_point(|p| p.0 <= x) - 1;
    let (x0, y0) = points[i];
    let (x1, y1) = points[i + 1];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Wire format: a flat object keyed by `kind`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct DriftRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    interpolation: Option<Interpolation>,
    /// `[lo, hi]`, `null` for an infinite end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sign_domain: Option<[Option<f64>; 2]>,
}

impl TryFrom<DriftRepr> for DriftSpec {
    type Error = PassageError;

    fn try_from(r: DriftRepr) -> Result<Self> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| PassageError::InvalidModel(format!("drift kind '{}' requires field '{name}'", r.kind)))
        };
        let mut d = match r.kind.as_str() {
            "constant" => DriftSpec::constant(need(r.c, "c")?)?,
            "segerdahl_family" => DriftSpec::segerdahl_family(
                need(r.k, "k")?,
                need(r.lambda, "lambda")?,
                need(r.q, "q")?,
                need(r.mu, "mu")?,
            )?,
            "tabulated" => {
                let points =
                    r.points.clone().ok_or_else(|| PassageError::InvalidModel("tabulated drift requires 'points'".into()))?;
                let interpolation = r.interpolation.unwrap_or(Interpolation::Linear);
                match r.sign_domain {
                    Some([lo, hi]) => DriftSpec::tabulated_on(
                        points,
                        interpolation,
                        lo.unwrap_or(f64::NEG_INFINITY),
                        hi.unwrap_or(f64::INFINITY),
                    )?,
                    None => DriftSpec::tabulated(points, interpolation)?,
                }
            }
            other => {
                return Err(PassageError::InvalidModel(format!(
                    "unknown drift kind '{other}' (expected constant, segerdahl_family or tabulated)"
                )))
            }
        };
        if let Some([lo, hi]) = r.sign_domain {
            d = d.with_sign_domain(lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY))?;
        }
        Ok(d)
    }
}

impl From<DriftSpec> for DriftRepr {
    fn from(d: DriftSpec) -> Self {
        let mut r = DriftRepr {
            kind: String::new(),
            c: None,
            k: None,
            lambda: None,
            q: None,
            mu: None,
            points: None,
            interpolation: None,
            sign_domain: None,
        };
        let default_domain = match &d.kind {
            DriftKind::Constant { c } => {
                r.kind = "constant".into();
                r.c = Some(*c);
                DriftSpec::constant(*c).map(|x| x.sign_domain).ok()
            }
            DriftKind::SegerdahlFamily { k, lambda, q, mu } => {
                r.kind = "segerdahl_family".into();
                (r.k, r.lambda, r.q, r.mu) = (Some(*k), Some(*lambda), Some(*q), Some(*mu));
                DriftSpec::segerdahl_family(*k, *lambda, *q, *mu).map(|x| x.sign_domain).ok()
            }
            DriftKind::Tabulated { points, interpolation } => {
                r.kind = "tabulated".into();
                r.points = Some(points.clone());
                r.interpolation = Some(*interpolation);
                Some(Interval::REAL_LINE)
            }
        };
        if default_domain != Some(d.sign_domain) {
            let end = |v: f64| v.is_finite().then_some(v);
            r.sign_domain = Some([end(d.sign_domain.lo), end(d.sign_domain.hi)]);
        }
        r
    }
}

impl Serialize for DriftSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DriftRepr::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DriftSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = DriftRepr::deserialize(d)?;
        DriftSpec::try_from(r).map_err(serde::de::Error::custom)
    }
}
