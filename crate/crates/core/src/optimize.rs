//! Box-constrained BFGS with finite-difference gradients.
//!
//! Used for likelihood maximization over log-parameters, where analytic
//! gradients of the Matérn family in its smoothness are not available. The
//! objective is minimized; non-finite objective values are treated as a
//! failed step and backtracked.

use log::debug;

#[derive(Clone, Debug)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Coordinates tried at their lower bound whenever a step moves them
    /// down. Meant for log-scale parameters whose optimum may be zero, which
    /// quasi-Newton steps otherwise approach one unit at a time.
    pub snap_lower: Vec<bool>,
}

impl Bounds {
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
            snap_lower: vec![false; dim],
        }
    }

    fn project(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = xi.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Coordinates pinned at a bound with the gradient pushing outward.
    fn active(&self, x: &[f64], g: &[f64]) -> Vec<bool> {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                (xi <= self.lower[i] && g[i] > 0.0) || (xi >= self.upper[i] && g[i] < 0.0)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Absolute change in objective between iterations.
    pub f_tol: f64,
    /// Infinity norm of the projected gradient.
    pub g_tol: f64,
    /// Central-difference step.
    pub fd_step: f64,
    /// Largest move of any coordinate in one step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            f_tol: 1e-7,
            g_tol: 1e-3,
            fd_step: 1e-4,
            max_step: 2.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// Projected gradient at `x` (zero on active bounds).
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Central differences, falling back to one-sided steps at the box edge.
pub fn gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], f0: f64, h: f64, bounds: &Bounds) -> Vec<f64> {
    let mut xw = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let up_ok = x[i] + h <= bounds.upper[i];
        let down_ok = x[i] - h >= bounds.lower[i];
        g[i] = if up_ok && down_ok {
            xw[i] = x[i] + h;
            let fp = f(&xw);
            xw[i] = x[i] - h;
            let fm = f(&xw);
            (fp - fm) / (2.0 * h)
        } else if up_ok {
            xw[i] = x[i] + h;
            (f(&xw) - f0) / h
        } else {
            xw[i] = x[i] - h;
            (f0 - f(&xw)) / h
        };
        xw[i] = x[i];
    }
    g
}

/// Central second differences.
pub fn hessian<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let k = x.len();
    let f0 = f(x);
    let mut hess = vec![vec![0.0; k]; k];
    let mut xw = x.to_vec();
    for i in 0..k {
        xw[i] = x[i] + h;
        let fp = f(&xw);
        xw[i] = x[i] - h;
        let fm = f(&xw);
        xw[i] = x[i];
        hess[i][i] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64, xw: &mut Vec<f64>| {
                xw[i] = x[i] + si * h;
                xw[j] = x[j] + sj * h;
                let v = f(xw);
                xw[i] = x[i];
                xw[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0, &mut xw) - corner(1.0, -1.0, &mut xw) - corner(-1.0, 1.0, &mut xw)
                + corner(-1.0, -1.0, &mut xw))
                / (4.0 * h * h);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    hess
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn masked(g: &[f64], active: &[bool]) -> Vec<f64> {
    g.iter().zip(active).map(|(&v, &a)| if a { 0.0 } else { v }).collect()
}

fn identity(k: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| (0..k).map(|j| if i == j { scale } else { 0.0 }).collect())
        .collect()
}

/// Result record for a point already known to be optimal, with its
/// projected gradient.
pub fn assess<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], bounds: &Bounds, opts: &BfgsOptions) -> BfgsResult {
    let fx = f(x);
    let g = gradient(&mut f, x, fx, opts.fd_step, bounds);
    let active = bounds.active(x, &g);
    BfgsResult {
        x: x.to_vec(),
        f: fx,
        grad: masked(&g, &active),
        iterations: 0,
        converged: fx.is_finite(),
    }
}

const STALL_LIMIT: usize = 5;
const STALL_G_FACTOR: f64 = 10.0;

/// Minimizes `f` from `x0` inside `bounds`.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], bounds: &Bounds, opts: &BfgsOptions) -> BfgsResult {
    let k = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut fx = f(&x);
    if k == 0 {
        return BfgsResult {
            x,
            f: fx,
            grad: vec![],
            iterations: 0,
            converged: fx.is_finite(),
        };
    }
    let mut g = gradient(&mut f, &x, fx, opts.fd_step, bounds);
    let mut active = bounds.active(&x, &g);
    let mut h_inv = identity(k, 1.0);
    let mut scaled = false;
    let mut last_df = f64::INFINITY;
    let mut stalled = 0;

    for iter in 0..opts.max_iter {
        let pg = masked(&g, &active);
        if inf_norm(&pg) < opts.g_tol && last_df.abs() < opts.f_tol {
            return BfgsResult {
                x,
                f: fx,
                grad: pg,
                iterations: iter,
                converged: true,
            };
        }
        // accepted steps that no longer change f: a flat ridge, where the
        // finite-difference gradient sits at noise level
        if stalled >= STALL_LIMIT {
            let converged = inf_norm(&pg) < STALL_G_FACTOR * opts.g_tol;
            debug!("objective stalled at iteration {iter}, |g| = {:e}", inf_norm(&pg));
            return BfgsResult {
                x,
                f: fx,
                grad: pg,
                iterations: iter,
                converged,
            };
        }

        let mut dir: Vec<f64> = (0..k)
            .map(|i| if active[i] { 0.0 } else { -(0..k).map(|j| h_inv[i][j] * pg[j]).sum::<f64>() })
            .collect();
        if crate::linalg::dot(&dir, &pg) >= 0.0 {
            h_inv = identity(k, 1.0);
            scaled = false;
            dir = pg.iter().map(|v| -v).collect();
        }
        let biggest = inf_norm(&dir);
        if biggest > opts.max_step {
            dir.iter_mut().for_each(|d| *d *= opts.max_step / biggest);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let mut xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            bounds.project(&mut xn);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = crate::linalg::dot(&pg, &step);
            let fnew = f(&xn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * decrease {
                accepted = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }

        let Some((mut xn, mut fnew)) = accepted else {
            // no decrease along the current direction: either we are at a
            // numerical optimum or the quasi-Newton model is stale
            if scaled {
                h_inv = identity(k, 1.0);
                scaled = false;
                last_df = f64::INFINITY;
                continue;
            }
            let converged = inf_norm(&pg) < opts.g_tol;
            debug!("line search stalled at iteration {iter}, |g| = {:e}", inf_norm(&pg));
            return BfgsResult {
                x,
                f: fx,
                grad: pg,
                iterations: iter,
                converged,
            };
        };

        for i in 0..k {
            if bounds.snap_lower[i] && xn[i] < x[i] && xn[i] > bounds.lower[i] {
                let mut xs = xn.clone();
                xs[i] = bounds.lower[i];
                let fs = f(&xs);
                if fs < fnew {
                    xn = xs;
                    fnew = fs;
                }
            }
        }
        let gn = gradient(&mut f, &xn, fnew, opts.fd_step, bounds);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        last_df = fnew - fx;
        stalled = if last_df.abs() < opts.f_tol { stalled + 1 } else { 0 };
        x = xn;
        fx = fnew;
        g = gn;
        let new_active = bounds.active(&x, &g);
        if new_active != active {
            h_inv = identity(k, 1.0);
            scaled = false;
            active = new_active;
            continue;
        }

        let sy = crate::linalg::dot(&s, &y);
        if sy > 1e-12 * crate::linalg::dot(&s, &s).sqrt() * crate::linalg::dot(&y, &y).sqrt() {
            if !scaled {
                let gamma = sy / crate::linalg::dot(&y, &y);
                h_inv = identity(k, gamma);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..k).map(|i| (0..k).map(|j| h_inv[i][j] * y[j]).sum()).collect();
            let yhy = crate::linalg::dot(&y, &hy);
            for i in 0..k {
                for j in 0..k {
                    h_inv[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
    }

    let pg = masked(&g, &active);
    BfgsResult {
        x,
        f: fx,
        grad: pg,
        iterations: opts.max_iter,
        converged: false,
    }
}
