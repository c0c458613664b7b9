//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Infinite limits are handled by the substitution `x = a + s·t/(1-t)` on
//! `[0, 1)`, where `s` is a caller-provided length scale. The log-space
//! driver [`log_integrate`] is meant for unimodal integrands whose values
//! would underflow in linear space.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum number of panels kept by the adaptive driver.
    pub max_intervals: usize,
    /// Length scale for the semi-infinite substitution.
    pub scale: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 0.0,
            max_intervals: 200,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
    pub converged: bool,
}

fn gk15<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    let k = kronrod * half;
    let g = gauss * half;
    (k, (k - g).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn adaptive<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, opts: &QuadOptions) -> Integral {
    let (v, e) = gk15(f, a, b);
    let mut panels = vec![Panel {
        a,
        b,
        value: v,
        error: e,
    }];
    let mut total = v;
    let mut err = e;
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err <= tol || !err.is_finite() {
            return Integral {
                value: total,
                error: err,
                intervals: panels.len(),
                converged: err <= tol,
            };
        }
        if panels.len() >= opts.max_intervals {
            return Integral {
                value: total,
                error: err,
                intervals: panels.len(),
                converged: false,
            };
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("at least one panel");
        let worst = panels.swap_remove(idx);
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel cannot be split further in floating point.
            panels.push(worst);
            return Integral {
                value: total,
                error: err,
                intervals: panels.len(),
                converged: false,
            };
        }
        let (v1, e1) = gk15(f, worst.a, mid);
        let (v2, e2) = gk15(f, mid, worst.b);
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.error;
        panels.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        panels.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        // Re-sum periodically to limit drift of the running totals.
        if panels.len() % 32 == 0 {
            total = panels.iter().map(|p| p.value).sum();
            err = panels.iter().map(|p| p.error).sum();
        }
    }
}

/// Integrates `f` over `[a, b]`; either limit may be infinite.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<Integral> {
    integrate_dyn(&f, a, b, opts)
}

fn integrate_dyn(f: &dyn Fn(f64) -> f64, a: f64, b: f64, opts: &QuadOptions) -> Result<Integral> {
    if a.is_nan() || b.is_nan() {
        return Err(Error::invalid("limits", "NaN integration limit"));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            intervals: 0,
            converged: true,
        });
    }
    if a > b {
        let r = integrate_dyn(f, b, a, opts)?;
        return Ok(Integral { value: -r.value, ..r });
    }
    let s = opts.scale;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid("scale", "must be positive and finite"));
    }
    let out = match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive(f, a, b, opts),
        (true, false) => {
            let g = |t: f64| {
                let u = 1.0 - t;
                let x = a + s * t / u;
                guarded(f(x), x) * s / (u * u)
            };
            adaptive(&g, 0.0, 1.0, opts)
        }
        (false, true) => {
            let g = |t: f64| {
                let u = 1.0 - t;
                let x = b - s * t / u;
                guarded(f(x), x) * s / (u * u)
            };
            adaptive(&g, 0.0, 1.0, opts)
        }
        (false, false) => {
            let lo = integrate_dyn(f, f64::NEG_INFINITY, 0.0, opts)?;
            let hi = integrate_dyn(f, 0.0, f64::INFINITY, opts)?;
            Integral {
                value: lo.value + hi.value,
                error: lo.error + hi.error,
                intervals: lo.intervals + hi.intervals,
                converged: lo.converged && hi.converged,
            }
        }
    };
    if out.value.is_nan() {
        return Err(Error::Numerical("quadrature produced NaN".into()));
    }
    Ok(out)
}

#[inline]
fn guarded(v: f64, x: f64) -> f64 {
    if x.is_finite() && v.is_finite() {
        v
    } else {
        0.0
    }
}

/// Natural log of `∫_lo^hi exp(logf(x)) dx` for a unimodal `logf`.
///
/// `mode` is the location of the maximum (it is clamped into `[lo, hi]`);
/// the integrand is rescaled by its value there so that arbitrarily small
/// integrals remain representable. `scale` is a rough width of the peak.
pub fn log_integrate<F: Fn(f64) -> f64>(logf: F, lo: f64, hi: f64, mode: f64, scale: f64) -> Result<f64> {
    if !(lo < hi) {
        return Ok(f64::NEG_INFINITY);
    }
    let c = if mode.is_nan() { 0.0 } else { mode.clamp(lo, hi) };
    let c = if c.is_finite() {
        c
    } else if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    };
    let offset = logf(c);
    if offset == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if !offset.is_finite() {
        return Err(Error::Numerical(format!("log-integrand not finite at peak {c}")));
    }
    let opts = QuadOptions {
        rel_tol: 1e-13,
        abs_tol: 1e-300,
        max_intervals: 400,
        scale,
    };
    let g = |x: f64| (logf(x) - offset).exp();
    let left = integrate(g, lo, c, &opts)?;
    let right = integrate(g, c, hi, &opts)?;
    let total = left.value + right.value;
    if !(total > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(offset + total.ln())
}
