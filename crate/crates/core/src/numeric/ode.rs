//! Adaptive Dormand–Prince 5(4) integration for small dense systems.

use std::fmt;

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest allowed |step|; `f64::INFINITY` means unbounded.
    pub h_max: f64,
    pub max_steps: usize,
    /// Abort with [`OdeFailureKind::BlowUp`] once any component exceeds this
    /// magnitude.
    pub blow_up: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
            blow_up: None,
        }
    }
}

impl OdeOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        OdeOptions {
            rtol,
            atol,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OdeFailureKind {
    StepTooSmall,
    MaxSteps,
    NonFinite,
    BlowUp,
}

#[derive(Clone, Debug)]
pub struct OdeFailure {
    pub x: f64,
    pub kind: OdeFailureKind,
}

impl fmt::Display for OdeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            OdeFailureKind::StepTooSmall => "step size underflow",
            OdeFailureKind::MaxSteps => "step budget exhausted",
            OdeFailureKind::NonFinite => "non-finite state",
            OdeFailureKind::BlowUp => "solution exceeded blow-up threshold",
        };
        write!(f, "{what} at x = {}", self.x)
    }
}

impl std::error::Error for OdeFailure {}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// 5th minus embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
        }
    }
}

/// Take one Dormand–Prince step of size `h` from `(x, y)`. On return
/// `ws.y_new` holds the 5th-order solution and the weighted RMS error norm is
/// returned. `ws.k[0]` must hold `f(x, y)` on entry.
fn dopri_step<F>(rhs: &mut F, x: f64, y: &[f64], h: f64, ws: &mut Workspace, opts: &OdeOptions) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    macro_rules! stage {
        ($dst:expr, $c:expr, [$(($ai:expr, $ki:expr)),*]) => {{
            for i in 0..n {
                ws.tmp[i] = y[i] + h * (0.0 $(+ $ai * ws.k[$ki][i])*);
            }
            let (tmp, k) = (&ws.tmp, &mut ws.k[$dst]);
            rhs(x + $c * h, tmp, k);
        }};
    }
    stage!(1, C2, [(A21, 0)]);
    stage!(2, C3, [(A31, 0), (A32, 1)]);
    stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
    stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
    stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
    for i in 0..n {
        ws.y_new[i] = y[i]
            + h * (A71 * ws.k[0][i] + A73 * ws.k[2][i] + A74 * ws.k[3][i] + A75 * ws.k[4][i] + A76 * ws.k[5][i]);
    }
    {
        let (y_new, k) = (&ws.y_new, &mut ws.k[6]);
        rhs(x + h, y_new, k);
    }
    let mut acc = 0.0;
    for i in 0..n {
        let e = h
            * (E1 * ws.k[0][i] + E3 * ws.k[2][i] + E4 * ws.k[3][i] + E5 * ws.k[4][i] + E6 * ws.k[5][i]
                + E7 * ws.k[6][i]);
        let sc = opts.atol + opts.rtol * y[i].abs().max(ws.y_new[i].abs());
        acc += (e / sc) * (e / sc);
    }
    (acc / n.max(1) as f64).sqrt()
}

/// Integrate `y' = rhs(x, y)` from `(x0, y0)` and report the state at each of
/// `outputs`, which must be monotone in a single direction away from `x0`
/// (increasing for forward, decreasing for backward integration).
pub fn integrate<F>(
    mut rhs: F,
    x0: f64,
    y0: &[f64],
    outputs: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<Vec<f64>>, OdeFailure>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut out = Vec::with_capacity(outputs.len());
    let Some(&last) = outputs.last() else {
        return Ok(out);
    };
    let dir = if last >= x0 { 1.0 } else { -1.0 };
    debug_assert!(
        outputs.iter().all(|&o| (o - x0) * dir >= 0.0),
        "outputs must lie on one side of x0"
    );

    let mut ws = Workspace::new(n);
    let mut x = x0;
    let mut y = y0.to_vec();
    rhs(x, &y, &mut ws.k[0]);

    let span = (last - x0).abs();
    let mut h = initial_step(&y, &ws.k[0], span, opts);
    let mut steps = 0usize;

    for &target in outputs {
        while (target - x) * dir > 0.0 {
            if steps >= opts.max_steps {
                return Err(OdeFailure { x, kind: OdeFailureKind::MaxSteps });
            }
            let remaining = (target - x).abs();
            let mut h_try = h.min(opts.h_max).min(remaining);
            let hit_target = h_try >= remaining * (1.0 - 1e-12);
            if hit_target {
                h_try = remaining;
            }
            let min_step = 16.0 * f64::EPSILON * x.abs().max(1.0);
            if h_try < min_step && !hit_target {
                return Err(OdeFailure { x, kind: OdeFailureKind::StepTooSmall });
            }
            let err = dopri_step(&mut rhs, x, &y, dir * h_try, &mut ws, opts);
            steps += 1;
            if !err.is_finite() || ws.y_new.iter().any(|v| !v.is_finite()) {
                // Shrink hard; a persistent non-finite state ends the run.
                if h_try <= min_step {
                    return Err(OdeFailure { x, kind: OdeFailureKind::NonFinite });
                }
                h = h_try * 0.1;
                continue;
            }
            if err <= 1.0 {
                x = if hit_target { target } else { x + dir * h_try };
                std::mem::swap(&mut y, &mut ws.y_new);
                // FSAL: last stage is f(x_new, y_new).
                ws.k.swap(0, 6);
                if let Some(limit) = opts.blow_up {
                    if y.iter().any(|v| v.abs() > limit) {
                        return Err(OdeFailure { x, kind: OdeFailureKind::BlowUp });
                    }
                }
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // Do not let a short final hop to an output shrink the step.
                h = if hit_target { h.max(h_try * fac) } else { h_try * fac };
            } else {
                h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn initial_step(y: &[f64], f0: &[f64], span: f64, opts: &OdeOptions) -> f64 {
    if span == 0.0 {
        return 0.0;
    }
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for (yi, fi) in y.iter().zip(f0) {
        let sc = opts.atol + opts.rtol * yi.abs();
        d0 = d0.max((yi / sc).abs());
        d1 = d1.max((fi / sc).abs());
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span).min(opts.h_max).max(1e-12 * span)
}
