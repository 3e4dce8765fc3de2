//! BFGS with a strong-Wolfe line search, for the MAP hyperparameter fit.

/// Stopping rules for [`minimize_bfgs`].
#[derive(Debug, Clone, Copy)]
pub struct BfgsSettings {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Largest allowed change of any coordinate in one step.
    pub max_step: f64,
}

impl Default for BfgsSettings {
    fn default() -> Self {
        BfgsSettings {
            max_iters: 500,
            grad_tol: 1e-6,
            max_step: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(x: &[f64], alpha: f64, p: &[f64]) -> Vec<f64> {
    x.iter().zip(p).map(|(a, b)| a + alpha * b).collect()
}

struct Point {
    alpha: f64,
    value: f64,
    grad: Vec<f64>,
    slope: f64,
}

/// Minimizes `f`, which returns the value and gradient. Infinite values mark
/// infeasible points; the line search backs away from them.
pub fn minimize_bfgs<F>(f: F, x0: &[f64], settings: &BfgsSettings) -> BfgsOutcome
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return BfgsOutcome {
            x,
            value: fx,
            grad_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
    }
    // inverse Hessian approximation, row-major
    let mut h = identity(n);
    let mut fresh = true;
    let mut iterations = 0;
    while iterations < settings.max_iters {
        let gn = norm(&g);
        if gn < settings.grad_tol {
            return BfgsOutcome {
                x,
                value: fx,
                grad_norm: gn,
                iterations,
                converged: true,
            };
        }
        iterations += 1;
        let mut p = mat_vec(&h, &g, n);
        p.iter_mut().for_each(|v| *v = -*v);
        if dot(&p, &g) >= 0.0 {
            h = identity(n);
            fresh = true;
            p = g.iter().map(|v| -v).collect();
        }
        let pmax = p.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if pmax > settings.max_step {
            let s = settings.max_step / pmax;
            p.iter_mut().for_each(|v| *v *= s);
        }
        let Some(step) = line_search(&f, &x, fx, &g, &p) else {
            if fresh {
                break;
            }
            h = identity(n);
            fresh = true;
            continue;
        };
        let x_new = axpy(&x, step.alpha, &p);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if fresh {
                let scale = sy / dot(&y, &y);
                h = identity(n);
                h.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut h, &s, &y, sy, n);
            fresh = false;
        }
        x = x_new;
        fx = step.value;
        g = step.grad;
    }
    let gn = norm(&g);
    BfgsOutcome {
        x,
        value: fx,
        grad_norm: gn,
        iterations,
        converged: gn < settings.grad_tol,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn mat_vec(h: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| dot(&h[i * n..(i + 1) * n], v)).collect()
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y, n);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] +=
                -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
    // keep exactly symmetric
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (h[i * n + j] + h[j * n + i]);
            h[i * n + j] = v;
            h[j * n + i] = v;
        }
    }
}

fn line_search<F>(f: &F, x: &[f64], f0: f64, g0: &[f64], p: &[f64]) -> Option<Point>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let slope0 = dot(g0, p);
    let eval = |alpha: f64| -> Point {
        let (value, grad) = f(&axpy(x, alpha, p));
        let slope = if value.is_finite() {
            dot(&grad, p)
        } else {
            f64::NAN
        };
        Point {
            alpha,
            value: if value.is_finite() {
                value
            } else {
                f64::INFINITY
            },
            grad,
            slope,
        }
    };
    let armijo = |pt: &Point| pt.value <= f0 + C1 * pt.alpha * slope0;
    let curvature = |pt: &Point| pt.slope.abs() <= -C2 * slope0;

    let mut prev = Point {
        alpha: 0.0,
        value: f0,
        grad: g0.to_vec(),
        slope: slope0,
    };
    let mut alpha = 1.0;
    for i in 0..30 {
        let cur = eval(alpha);
        if !armijo(&cur) || (i > 0 && cur.value >= prev.value) {
            return zoom(&eval, prev, cur, f0, slope0);
        }
        if curvature(&cur) {
            return Some(cur);
        }
        if cur.slope >= 0.0 {
            return zoom(&eval, cur, prev, f0, slope0);
        }
        prev = cur;
        alpha *= 2.0;
    }
    None
}

fn zoom<E>(eval: &E, mut lo: Point, mut hi: Point, f0: f64, slope0: f64) -> Option<Point>
where
    E: Fn(f64) -> Point,
{
    let mut best_armijo: Option<Point> = None;
    for _ in 0..50 {
        let (a, b) = (lo.alpha, hi.alpha);
        let width = b - a;
        if width.abs() < 1e-16 * a.abs().max(1.0) {
            break;
        }
        // quadratic through (lo.value, lo.slope, hi.value), safeguarded
        let mut trial = 0.5 * (a + b);
        if hi.value.is_finite() && lo.slope.is_finite() {
            let denom = 2.0 * (hi.value - lo.value - lo.slope * width);
            if denom > 0.0 {
                let q = a - lo.slope * width * width / denom;
                let (left, right) = if a < b { (a, b) } else { (b, a) };
                let margin = 0.1 * width.abs();
                if q > left + margin && q < right - margin {
                    trial = q;
                }
            }
        }
        let cur = eval(trial);
        if cur.value > f0 + C1 * cur.alpha * slope0 || cur.value >= lo.value {
            hi = cur;
        } else {
            if cur.slope.abs() <= -C2 * slope0 {
                return Some(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = std::mem::replace(&mut lo, cur);
            } else {
                lo = cur;
            }
            if best_armijo.as_ref().is_none_or(|b| lo.value < b.value) {
                best_armijo = Some(Point {
                    alpha: lo.alpha,
                    value: lo.value,
                    grad: lo.grad.clone(),
                    slope: lo.slope,
                });
            }
        }
    }
    best_armijo.or(if lo.alpha > 0.0 { Some(lo) } else { None })
}
