//! Bracketed scalar root finding (Brent's method) and bracket search.

use crate::error::{Error, Result};

/// Finds a root of `f` in `[a, b]` given a sign change.
///
/// Port of the classic Brent–Dekker zero finder; terminates when the
/// bracket is narrower than `2·(xtol + 4ε|x|)`.
pub fn brent<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64, xtol: f64, max_iter: usize) -> Result<f64> {
    let (mut xpre, mut xcur) = (a, b);
    let mut fpre = f(xpre)?;
    let mut fcur = f(xcur)?;
    if fpre == 0.0 {
        return Ok(xpre);
    }
    if fcur == 0.0 {
        return Ok(xcur);
    }
    if fpre.signum() == fcur.signum() {
        return Err(Error::Numerical(format!(
            "root not bracketed: f({a})={fpre}, f({b})={fcur}"
        )));
    }
    let (mut xblk, mut fblk) = (0.0, 0.0);
    let (mut spre, mut scur) = (0.0f64, 0.0f64);
    for _ in 0..max_iter {
        if fpre != 0.0 && fcur != 0.0 && fpre.signum() != fcur.signum() {
            xblk = xpre;
            fblk = fpre;
            spre = xcur - xpre;
            scur = spre;
        }
        if fblk.abs() < fcur.abs() {
            xpre = xcur;
            xcur = xblk;
            xblk = xpre;
            fpre = fcur;
            fcur = fblk;
            fblk = fpre;
        }
        let delta = 0.5 * (xtol + 4.0 * f64::EPSILON * xcur.abs());
        let sbis = 0.5 * (xblk - xcur);
        if fcur == 0.0 || sbis.abs() < delta {
            return Ok(xcur);
        }
        if spre.abs() > delta && fcur.abs() < fpre.abs() {
            let stry = if xpre == xblk {
                // secant
                -fcur * (xcur - xpre) / (fcur - fpre)
            } else {
                // inverse quadratic interpolation
                let dpre = (fpre - fcur) / (xpre - xcur);
                let dblk = (fblk - fcur) / (xblk - xcur);
                -fcur * (fblk * dblk - fpre * dpre) / (dblk * dpre * (fblk - fpre))
            };
            if 2.0 * stry.abs() < spre.abs().min(3.0 * sbis.abs() - delta) {
                spre = scur;
                scur = stry;
            } else {
                spre = sbis;
                scur = sbis;
            }
        } else {
            spre = sbis;
            scur = sbis;
        }
        xpre = xcur;
        fpre = fcur;
        if scur.abs() > delta {
            xcur += scur;
        } else {
            xcur += if sbis > 0.0 { delta } else { -delta };
        }
        fcur = f(xcur)?;
    }
    Err(Error::Numerical("brent: iteration limit reached".into()))
}

/// Outcome of walking away from `start` looking for a sign change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bracket {
    Found(f64, f64),
    /// The search reached `limit` without a sign change.
    Unbounded,
}

/// Steps from `start` in direction `dir` (±1) with doubling steps until
/// `f` changes sign relative to `f(start)`, or until `|x - start| > span`.
pub fn search_bracket<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    start: f64,
    dir: f64,
    step: f64,
    span: f64,
) -> Result<Bracket> {
    let f0 = f(start)?;
    if f0 == 0.0 {
        return Ok(Bracket::Found(start, start));
    }
    let mut prev = start;
    let mut h = step;
    loop {
        let dist = h.min(span);
        let x = start + dir * dist;
        let fx = f(x)?;
        if fx == 0.0 || fx.signum() != f0.signum() {
            return Ok(if dir > 0.0 {
                Bracket::Found(prev, x)
            } else {
                Bracket::Found(x, prev)
            });
        }
        if dist >= span {
            return Ok(Bracket::Unbounded);
        }
        prev = x;
        h *= 2.0;
    }
}
