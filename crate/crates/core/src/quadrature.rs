//! Adaptive Gauss–Legendre quadrature on finite intervals.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const ORDER: usize = 10;

#[derive(Debug, Clone, Copy)]
pub struct QuadratureSettings {
    /// Absolute tolerance on each integral.
    pub abs_tol: f64,
    /// Maximum bisection depth.
    pub max_depth: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            abs_tol: 1e-10,
            max_depth: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 {
                1.0
            } else if n == 1 {
                x
            } else {
                p1
            };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ORDER))
}

fn fixed<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (x, w) = rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter()
        .zip(w)
        .map(|(xi, wi)| wi * f(mid + half * xi))
        .sum::<f64>()
        * half
}

/// Integrates `f` over `[a, b]`, bisecting until each piece agrees with its
/// two halves to within its share of the tolerance.
///
/// A feature much narrower than the node spacing can be missed entirely; use
/// [`integrate_with_breaks`] when its position is known.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    settings: &QuadratureSettings,
) -> Result<Integral> {
    let whole = fixed(&f, a, b);
    let mut out = Integral {
        value: 0.0,
        error: 0.0,
    };
    let mut failed = false;
    recurse(
        &f,
        a,
        b,
        whole,
        settings.abs_tol,
        0,
        settings,
        &mut out,
        &mut failed,
    );
    if failed || out.error > settings.abs_tol || !out.value.is_finite() {
        return Err(Error::Quadrature {
            estimate: out.value,
            error_bound: out.error,
            tolerance: settings.abs_tol,
        });
    }
    Ok(out)
}

/// Like [`integrate`] over `[a, b]`, but first splits at every point of
/// `breaks` strictly inside the interval. The tolerance is shared out by
/// piece length.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    settings: &QuadratureSettings,
) -> Result<Integral> {
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&p| p > a && p < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let len = b - a;
    let mut total = Integral {
        value: 0.0,
        error: 0.0,
    };
    for w in pts.windows(2) {
        let piece = QuadratureSettings {
            abs_tol: settings.abs_tol * (w[1] - w[0]) / len,
            ..*settings
        };
        let r = integrate(&f, w[0], w[1], &piece).map_err(|e| match e {
            Error::Quadrature {
                estimate,
                error_bound,
                ..
            } => Error::Quadrature {
                estimate: total.value + estimate,
                error_bound: total.error + error_bound,
                tolerance: settings.abs_tol,
            },
            e => e,
        })?;
        total.value += r.value;
        total.error += r.error;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    settings: &QuadratureSettings,
    out: &mut Integral,
    failed: &mut bool,
) {
    let m = 0.5 * (a + b);
    let left = fixed(f, a, m);
    let right = fixed(f, m, b);
    let err = (left + right - whole).abs();
    if err <= tol || depth >= settings.max_depth {
        if err > tol {
            *failed = true;
        }
        out.value += left + right;
        out.error += err;
        return;
    }
    recurse(f, a, m, left, 0.5 * tol, depth + 1, settings, out, failed);
    recurse(f, m, b, right, 0.5 * tol, depth + 1, settings, out, failed);
}
