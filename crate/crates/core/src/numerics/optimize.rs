//! Scalar and small-dimensional maximization used for selective MLEs.

use crate::error::{Error, Result};

/// Brent's parabolic-interpolation minimizer on a bracket `a < b < c`
/// with `f(b) <= min(f(a), f(c))`.
pub fn brent_minimize<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, c: f64, tol: f64) -> (f64, f64) {
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let (mut lo, mut hi) = (a.min(c), a.max(c));
    let mut x = b;
    let mut w = b;
    let mut v = b;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..500 {
        let xm = 0.5 * (lo + hi);
        let tol1 = tol * x.abs().max(1.0);
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (hi - lo) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if !(p.abs() >= (0.5 * q * etemp).abs() || p <= q * (lo - x) || p >= q * (hi - x)) {
                d = p / q;
                let u = x + d;
                if u - lo < tol2 || hi - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { lo - x } else { hi - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                lo = x;
            } else {
                hi = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Maximizes a scalar function on `[lower, upper]`.
///
/// Walks uphill from `start` with doubling steps to bracket the maximum,
/// then refines with Brent. Non-finite values are treated as `-inf`. If the
/// walk reaches a bound (or the edge of the finite region) while the
/// function is still increasing, the maximum is reported as divergent.
pub fn maximize_scalar<F: FnMut(f64) -> f64>(
    mut f: F,
    start: f64,
    step: f64,
    lower: f64,
    upper: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let mut g = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let x0 = start.clamp(lower, upper);
    let f0 = g(x0);
    if f0 == f64::NEG_INFINITY {
        return Err(Error::Numerical(format!("objective not finite at start {x0}")));
    }
    let fr = g((x0 + step).min(upper));
    let fl = g((x0 - step).max(lower));
    let dir = if fr > f0 {
        1.0
    } else if fl > f0 {
        -1.0
    } else {
        // start is already bracketed
        let a = (x0 - step).max(lower);
        let c = (x0 + step).min(upper);
        let (x, fx) = brent_minimize(|x| -g(x), a, x0, c, tol);
        return Ok((x, -fx));
    };
    let bound = if dir > 0.0 { upper } else { lower };
    let mut prev = x0;
    let mut cur = (x0 + dir * step).clamp(lower, upper);
    let mut fcur = g(cur);
    let mut h = step;
    loop {
        h *= 2.0;
        let mut next = cur + dir * h;
        if (next - bound) * dir > 0.0 {
            next = bound;
        }
        let mut fnext = g(next);
        if fnext == f64::NEG_INFINITY {
            // Shrink towards the finite region before giving up.
            let mut lo_step = cur;
            let mut hi_step = next;
            for _ in 0..60 {
                let mid = 0.5 * (lo_step + hi_step);
                if g(mid) == f64::NEG_INFINITY {
                    hi_step = mid;
                } else {
                    lo_step = mid;
                }
            }
            next = lo_step;
            fnext = g(next);
            if fnext >= fcur {
                return Err(Error::DivergentMle {
                    coordinate: 0,
                    positive: dir > 0.0,
                });
            }
        }
        if fnext < fcur {
            let (x, fx) = brent_minimize(|x| -g(x), prev, cur, next, tol);
            return Ok((x, -fx));
        }
        if next == bound {
            return Err(Error::DivergentMle {
                coordinate: 0,
                positive: dir > 0.0,
            });
        }
        prev = cur;
        cur = next;
        fcur = fnext;
    }
}

/// Central finite-difference gradient.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let hi = h * x[i].abs().max(1.0);
            xp[i] = x[i] + hi;
            let fp = f(&xp);
            xp[i] = x[i] - hi;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * hi)
        })
        .collect()
}

/// BFGS maximization inside a box with finite-difference gradients.
///
/// Returns the maximizer and the maximum; reports divergence when the
/// iterate is pinned against a bound with the gradient pointing outward.
pub fn maximize_bfgs<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    bounds: &[(f64, f64)],
    grad_tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let n = start.len();
    let mut obj = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            -v
        }
    };
    let clamp = |x: &mut [f64]| {
        for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
            *xi = xi.clamp(lo, hi);
        }
    };
    let mut x = start.to_vec();
    clamp(&mut x);
    let mut fx = obj(&x);
    if !fx.is_finite() {
        return Err(Error::Numerical("objective not finite at start".into()));
    }
    let mut g = fd_gradient(&mut obj, &x, 1e-6);
    let mut hinv = vec![vec![0.0; n]; n];
    for (i, row) in hinv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..500 {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm <= grad_tol {
            break;
        }
        let mut p: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| hinv[i][j] * g[j]).sum::<f64>())
            .collect();
        let mut slope: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            // Lost descent direction; restart from steepest descent.
            for (i, row) in hinv.iter_mut().enumerate() {
                row.iter_mut().for_each(|v| *v = 0.0);
                row[i] = 1.0;
            }
            p = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + t * b).collect();
            clamp(&mut xn);
            let fnew = obj(&xn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else { break };
        let gn = fd_gradient(&mut obj, &xn, 1e-6);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-14 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| hinv[i][j] * yv[j]).sum()).collect();
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        let progress = (fx - fnew).abs();
        x = xn;
        fx = fnew;
        g = gn;
        if progress < 1e-16 * fx.abs().max(1.0) && s.iter().all(|v| v.abs() < 1e-14) {
            break;
        }
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        let span = (hi - lo).abs().max(1.0);
        if (x[i] - hi).abs() < 1e-9 * span && g[i] < 0.0 {
            return Err(Error::DivergentMle {
                coordinate: i,
                positive: true,
            });
        }
        if (x[i] - lo).abs() < 1e-9 * span && g[i] > 0.0 {
            return Err(Error::DivergentMle {
                coordinate: i,
                positive: false,
            });
        }
    }
    Ok((x, -fx))
}
