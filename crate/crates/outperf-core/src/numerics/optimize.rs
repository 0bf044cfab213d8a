//! Scalar minimization of convex (or at least unimodal) functions.

use crate::error::{CoreError, Result};

/// Golden-section search for the minimizer of `f` on `[lo, hi]`.
///
/// Returns `(argmin, f(argmin))`. The interval is contracted until its width
/// is below `tol`, so the returned argmin is within `tol` of a true minimizer
/// whenever `f` is unimodal on the bracket. Endpoint minima are handled: the
/// best point ever evaluated (including `lo` and `hi`) is what is returned.
pub fn minimize_convex_1d(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    if !(lo < hi) {
        return Err(CoreError::InvalidInput(format!(
            "bracket [{lo}, {hi}] is not a nondegenerate interval"
        )));
    }
    if !(tol > 0.0) {
        return Err(CoreError::InvalidInput(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    // 1/phi and 1/phi^2.
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    const INVPHI2: f64 = 0.381_966_011_250_105_2;

    let mut a = lo;
    let mut b = hi;
    let mut best = (lo, f(lo));
    for cand in [(hi, f(hi))] {
        if cand.1 < best.1 {
            best = cand;
        }
    }
    let mut c = a + INVPHI2 * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    // Width shrinks by 1/phi per step; cap generously for tiny tolerances.
    for _ in 0..512 {
        if fc < best.1 {
            best = (c, fc);
        }
        if fd < best.1 {
            best = (d, fd);
        }
        if b - a <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = a + INVPHI2 * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    if !best.1.is_finite() {
        return Err(CoreError::Numerical(format!(
            "objective non-finite near {}",
            best.0
        )));
    }
    Ok(best)
}
