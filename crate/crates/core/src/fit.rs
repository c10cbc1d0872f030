//! Straight-line fits of `ln(1 - F)` against `ln(t/T)`.

use serde::Serialize;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    /// Intercept of `ln(1 - F) = a + b ln(t/T)`.
    pub a: f64,
    /// Slope.
    pub b: f64,
    pub window_lo: f64,
    pub window_hi: f64,
    pub n_points: usize,
    /// Points inside the window dropped because `1 - F <= 0`.
    pub n_excluded: usize,
    /// Root-mean-square residual in `ln(1 - F)`.
    pub rms: f64,
    /// NaN when only two points were used.
    pub stderr_a: f64,
    pub stderr_b: f64,
}

fn check_window(lo: f64, hi: f64) -> Result<()> {
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(invalid(
            "window",
            format!("need 0 < lo < hi, got [{lo}, {hi}]"),
        ));
    }
    Ok(())
}

/// Least squares for `y = a + b x`, optionally with weights `1 / sigma^2`.
/// Standard errors are scaled by the residual variance in both cases.
fn line_fit(x: &[f64], y: &[f64], w: Option<&[f64]>) -> (f64, f64, f64, f64, f64) {
    let n = x.len();
    let weight = |i: usize| w.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..n).map(weight).sum();
    let xm = (0..n).map(|i| weight(i) * x[i]).sum::<f64>() / sw;
    let ym = (0..n).map(|i| weight(i) * y[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| weight(i) * (x[i] - xm).powi(2)).sum();
    let sxy: f64 = (0..n).map(|i| weight(i) * (x[i] - xm) * (y[i] - ym)).sum();
    let b = sxy / sxx;
    let a = ym - b * xm;
    let resid: Vec<f64> = (0..n).map(|i| y[i] - a - b * x[i]).collect();
    let rms = (resid.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    let (stderr_a, stderr_b) = if n > 2 {
        let s2 = (0..n).map(|i| weight(i) * resid[i].powi(2)).sum::<f64>() / (n - 2) as f64;
        ((s2 * (1.0 / sw + xm * xm / sxx)).sqrt(), (s2 / sxx).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    (a, b, rms, stderr_a, stderr_b)
}

struct Selected {
    x: Vec<f64>,
    y: Vec<f64>,
    sigma: Vec<f64>,
    excluded: usize,
}

fn select(series: impl Iterator<Item = (f64, f64, f64)>, lo: f64, hi: f64) -> Selected {
    let mut out = Selected {
        x: Vec::new(),
        y: Vec::new(),
        sigma: Vec::new(),
        excluded: 0,
    };
    for (t, f, se) in series {
        if !(t >= lo && t <= hi) {
            continue;
        }
        let loss = 1.0 - f;
        if loss <= 0.0 {
            out.excluded += 1;
            continue;
        }
        out.x.push(t.ln());
        out.y.push(loss.ln());
        // error propagated to ln(1 - F)
        out.sigma.push(se / loss);
    }
    out
}

fn finish(sel: Selected, weighted: bool, lo: f64, hi: f64) -> Result<FitResult> {
    let n = sel.x.len();
    let distinct = sel.x.iter().any(|&x| x != sel.x[0]);
    if n < 2 || !distinct {
        return Err(Error::TooFewPoints {
            usable: n,
            excluded: sel.excluded,
        });
    }
    let weights: Option<Vec<f64>> = if weighted {
        if let Some(bad) = sel.sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(invalid(
                "weights",
                format!("standard errors must be positive, got {bad}"),
            ));
        }
        Some(sel.sigma.iter().map(|s| 1.0 / (s * s)).collect())
    } else {
        None
    };
    let (a, b, rms, stderr_a, stderr_b) = line_fit(&sel.x, &sel.y, weights.as_deref());
    Ok(FitResult {
        a,
        b,
        window_lo: lo,
        window_hi: hi,
        n_points: n,
        n_excluded: sel.excluded,
        rms,
        stderr_a,
        stderr_b,
    })
}

/// Ordinary least squares on `(ln(t/T), ln(1 - F))` for the `(t/T, F)` pairs
/// with `lo <= t/T <= hi`. Points with `F >= 1` are dropped, not clamped.
pub fn loglog_fit(series: &[(f64, f64)], lo: f64, hi: f64) -> Result<FitResult> {
    check_window(lo, hi)?;
    let sel = select(series.iter().map(|&(t, f)| (t, f, 0.0)), lo, hi);
    finish(sel, false, lo, hi)
}

/// Like [`loglog_fit`] for `(t/T, F, stderr_F)` triples, optionally weighting
/// each point by the inverse variance of `ln(1 - F)`.
pub fn loglog_fit_with_errors(
    series: &[(f64, f64, f64)],
    lo: f64,
    hi: f64,
    weighted: bool,
) -> Result<FitResult> {
    check_window(lo, hi)?;
    finish(select(series.iter().copied(), lo, hi), weighted, lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterceptShift {
    pub value: f64,
    pub stderr: f64,
}

/// Largest slope difference for which two intercepts are still compared.
pub const SLOPE_TOLERANCE: f64 = 0.1;

/// `second.a - first.a` for two fits over the same window with comparable slopes.
pub fn intercept_shift(first: &FitResult, second: &FitResult) -> Result<InterceptShift> {
    if first.window_lo != second.window_lo || first.window_hi != second.window_hi {
        return Err(Error::IncompatibleFits(format!(
            "windows [{}, {}] and [{}, {}] differ",
            first.window_lo, first.window_hi, second.window_lo, second.window_hi
        )));
    }
    if (first.b - second.b).abs() > SLOPE_TOLERANCE {
        return Err(Error::IncompatibleFits(format!(
            "slopes {} and {} differ by more than {SLOPE_TOLERANCE}",
            first.b, second.b
        )));
    }
    Ok(InterceptShift {
        value: second.a - first.a,
        stderr: first.stderr_a.hypot(second.stderr_a),
    })
}
