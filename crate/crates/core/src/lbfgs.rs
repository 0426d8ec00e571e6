//! Box-projected, diagonally preconditioned L-BFGS.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Settings {
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
/// Relative slack on the function value for the approximate-Wolfe test, which
/// takes over once Armijo comparisons drown in rounding error.
const VALUE_SLACK: f64 = 1e-12;

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn projected_grad_norm(x: &[f64], g: &[f64], lo: f64, hi: f64) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            if (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0) {
                0.0
            } else {
                gi.abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Minimizes `objective` over the box `[lo, hi]^n`. `objective` writes the
/// gradient into its second argument and returns the value. `precond` is a
/// positive diagonal approximating the inverse Hessian up to scale.
pub(crate) fn minimize<F>(
    mut objective: F,
    x0: Vec<f64>,
    lo: f64,
    hi: f64,
    precond: &[f64],
    settings: Settings,
) -> Outcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x: Vec<f64> = x0.into_iter().map(|v| v.clamp(lo, hi)).collect();
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);
    let mut history: VecDeque<Pair> = VecDeque::with_capacity(settings.memory);

    let mut d = vec![0.0; n];
    let mut alpha_buf = vec![0.0; settings.memory];
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];

    let mut iterations = 0;
    let mut grad_norm = projected_grad_norm(&x, &g, lo, hi);
    while iterations < settings.max_iters && grad_norm > settings.grad_tol && f.is_finite() {
        iterations += 1;

        // two-loop recursion with H₀ = γ·diag(precond)
        d.copy_from_slice(&g);
        for (i, pair) in history.iter().enumerate().rev() {
            let a = pair.rho * dot(&pair.s, &d);
            alpha_buf[i] = a;
            d.iter_mut().zip(&pair.y).for_each(|(di, yi)| *di -= a * yi);
        }
        let gamma = match history.back() {
            Some(p) => {
                let dy: f64 = p.y.iter().zip(precond).map(|(y, h)| y * h * y).sum();
                1.0 / (p.rho * dy)
            }
            None => 1.0,
        };
        d.iter_mut().zip(precond).for_each(|(di, h)| *di *= gamma * h);
        for (i, pair) in history.iter().enumerate() {
            let b = pair.rho * dot(&pair.y, &d);
            let a = alpha_buf[i];
            d.iter_mut().zip(&pair.s).for_each(|(di, si)| *di += (a - b) * si);
        }
        d.iter_mut().for_each(|di| *di = -*di);
        freeze_active(&x, &mut d, lo, hi);
        if dot(&g, &d) >= 0.0 {
            history.clear();
            d.iter_mut().zip(g.iter().zip(precond)).for_each(|(di, (gi, h))| *di = -gi * h);
            freeze_active(&x, &mut d, lo, hi);
        }
        if history.is_empty() {
            let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if dmax > 1.0 {
                d.iter_mut().for_each(|di| *di /= dmax);
            }
        }

        let mut alpha = 1.0;
        let mut accepted = false;
        let mut ft = f;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..n {
                xt[i] = (x[i] + alpha * d[i]).clamp(lo, hi);
            }
            ft = objective(&xt, &mut gt);
            if ft.is_finite() {
                let mut slope0 = 0.0;
                let mut slope1 = 0.0;
                for i in 0..n {
                    let dx = xt[i] - x[i];
                    slope0 += g[i] * dx;
                    slope1 += gt[i] * dx;
                }
                let armijo = ft <= f + ARMIJO * slope0;
                let approx_wolfe = ft <= f + VALUE_SLACK * f.abs()
                    && slope0 < 0.0
                    && slope1 <= (1.0 - 2.0 * ARMIJO) * -slope0;
                if slope0 < 0.0 && (armijo || approx_wolfe) {
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }

        if !accepted {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        }

        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * libm::sqrt(dot(&s, &s) * dot(&y, &y)) {
            if history.len() == settings.memory {
                history.pop_front();
            }
            history.push_back(Pair { s, y, rho: 1.0 / sy });
        }
        core::mem::swap(&mut x, &mut xt);
        core::mem::swap(&mut g, &mut gt);
        f = ft;
        grad_norm = projected_grad_norm(&x, &g, lo, hi);
    }

    Outcome { x, grad_norm, iterations, converged: grad_norm <= settings.grad_tol }
}

fn freeze_active(x: &[f64], d: &mut [f64], lo: f64, hi: f64) {
    for (xi, di) in x.iter().zip(d.iter_mut()) {
        if (*xi <= lo && *di < 0.0) || (*xi >= hi && *di > 0.0) {
            *di = 0.0;
        }
    }
}
