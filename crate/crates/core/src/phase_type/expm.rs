//! Matrix exponential by scaling and squaring with a degree-13 Padé kernel.

use nalgebra::DMatrix;

use crate::error::{PassageError, Result};

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which Padé(13) meets unit roundoff (Higham 2005).
const THETA13: f64 = 5.371_920_351_148_152;

// More squarings than this cannot produce a finite result from a finite kernel.
const MAX_SQUARINGS: i32 = 1100;

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(M·t)` for a square matrix `M`.
pub fn matrix_exp(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(PassageError::ShapeMismatch(format!(
            "matrix_exp needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !t.is_finite() || m.iter().any(|v| !v.is_finite()) {
        return Err(PassageError::Domain("matrix_exp needs finite entries".into()));
    }
    let n = m.nrows();
    let a = m * t;
    let norm = one_norm(&a);
    if norm == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    if s > MAX_SQUARINGS {
        return Err(PassageError::Overflow(format!("scaling exponent {s} out of range")));
    }
    let a = a * 2f64.powi(-s);

    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &PADE13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| PassageError::Overflow("singular Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(PassageError::Overflow("squaring phase left the representable range".into()));
        }
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(PassageError::Overflow("non-finite result".into()));
    }
    Ok(r)
}
