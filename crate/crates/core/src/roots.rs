//! Scalar root finders used by the equilibrium solver.

/// Outcome of a scalar solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Newton's method kept inside a sign-changing bracket `[lo, hi]`.
///
/// `f` returns `(value, derivative)` and must be increasing across the
/// bracket (`f(lo) ≤ 0 ≤ f(hi)`). A Newton step that leaves the current
/// bracket, or fails to halve it, is replaced by bisection. Iteration stops
/// once the step is at rounding level. `converged` reports `|f(x)| ≤ tol`,
/// or a residual within a few ulps of `x` where `tol` is below what `f64`
/// can resolve.
pub fn safeguarded_newton<F>(mut f: F, mut lo: f64, mut hi: f64, x0: f64, tol: f64, max_iter: usize) -> Root
where
    F: FnMut(f64) -> (f64, f64),
{
    let mut x = x0.clamp(lo, hi);
    let mut width = hi - lo;
    // Best point so far: (x, f, f').
    let mut best = (x, f64::INFINITY, f64::NAN);
    let mut iterations = max_iter;
    for it in 1..=max_iter {
        let (fx, dfx) = f(x);
        if fx.abs() < best.1.abs() {
            best = (x, fx, dfx);
        }
        if fx == 0.0 {
            return Root {
                x,
                residual: 0.0,
                iterations: it,
                converged: true,
            };
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx.is_finite() && dfx != 0.0 && newton > lo && newton < hi && (newton - x).abs() < 0.5 * width {
            newton
        } else {
            0.5 * (lo + hi)
        };
        width = (next - x).abs().max(f64::EPSILON * x.abs());
        let step_small = (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0);
        x = next;
        if step_small || hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            iterations = it;
            break;
        }
    }
    let (fx, dfx) = f(x);
    if fx.abs() < best.1.abs() {
        best = (x, fx, dfx);
    }
    // One polishing step from the best point, then accept anything within a
    // few ulps of the root.
    let polished = best.0 - best.1 / best.2;
    if polished.is_finite() && polished >= lo.min(best.0) && polished <= hi.max(best.0) {
        let (fp, dfp) = f(polished);
        if fp.abs() < best.1.abs() {
            best = (polished, fp, dfp);
        }
    }
    let floor = 4.0 * f64::EPSILON * (best.0 * best.2).abs();
    Root {
        x: best.0,
        residual: best.1,
        iterations,
        converged: best.1.abs() <= tol.max(floor),
    }
}

/// Root of a decreasing function on `[lo, hi]` with `f(lo) ≥ 0 ≥ f(hi)`.
///
/// Regula falsi with the Illinois modification, falling back to bisection
/// whenever two consecutive steps fail to halve the bracket. Stops when
/// `|f| ≤ tol` or the bracket collapses to rounding level.
pub fn bracketed_decreasing<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> Root
where
    F: FnMut(f64) -> f64,
{
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    if f_lo.abs() <= tol {
        return Root {
            x: lo,
            residual: f_lo,
            iterations: 0,
            converged: true,
        };
    }
    if f_hi.abs() <= tol {
        return Root {
            x: hi,
            residual: f_hi,
            iterations: 0,
            converged: true,
        };
    }
    // Which side was retained last (Illinois bookkeeping): -1 lo, +1 hi.
    let mut side = 0i8;
    let mut width = hi - lo;
    let mut slow_steps = 0;
    let mut best = if f_lo.abs() < f_hi.abs() {
        (lo, f_lo)
    } else {
        (hi, f_hi)
    };
    for it in 1..=max_iter {
        let x = if slow_steps >= 2 {
            slow_steps = 0;
            0.5 * (lo + hi)
        } else {
            let t = f_lo / (f_lo - f_hi);
            let x = lo + t * (hi - lo);
            if x > lo && x < hi {
                x
            } else {
                0.5 * (lo + hi)
            }
        };
        let fx = f(x);
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx.abs() <= tol {
            return Root {
                x,
                residual: fx,
                iterations: it,
                converged: true,
            };
        }
        if fx > 0.0 {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        let new_width = hi - lo;
        if new_width > 0.5 * width {
            slow_steps += 1;
        } else {
            slow_steps = 0;
        }
        width = new_width;
        if width <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
            return Root {
                x: best.0,
                residual: best.1,
                iterations: it,
                converged: best.1.abs() <= tol,
            };
        }
    }
    Root {
        x: best.0,
        residual: best.1,
        iterations: max_iter,
        converged: best.1.abs() <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_finds_sqrt_two() {
        let r = safeguarded_newton(|x| (x * x - 2.0, 2.0 * x), 0.0, 2.0, 1.0, 1e-14, 100);
        assert!(r.converged);
        assert!((r.x - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn newton_survives_flat_start() {
        // Derivative vanishes at the starting point; bisection must take over.
        let r = safeguarded_newton(|x| (x.powi(3) - 8.0, 3.0 * x * x), 0.0, 10.0, 0.0, 1e-12, 200);
        assert!(r.converged);
        assert!((r.x - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bracketed_handles_wide_brackets() {
        let r = bracketed_decreasing(|x: f64| 3.0 - x.ln(), 1e-3, 1e40, 1e-13, 300);
        assert!(r.converged, "{r:?}");
        assert!((r.x - 3f64.exp()).abs() < 1e-10);
    }

    #[test]
    fn bracketed_exact_endpoint() {
        let r = bracketed_decreasing(|x| 1.0 - x, 1.0, 5.0, 1e-12, 10);
        assert_eq!(r.x, 1.0);
        assert_eq!(r.iterations, 0);
    }
}
