//! Small dense optimizers: BFGS with a backtracking line search, and
//! golden-section search for one-dimensional unimodal problems.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the largest gradient component falls below this.
    pub gtol: f64,
    /// Stop when an iteration improves f by less than `ftol · (1 + |f|)`.
    pub ftol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 1000,
            gtol: 1e-12,
            ftol: 1e-16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out or the objective went
    /// non-finite at the start point.
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn reset(h: &mut [f64], n: usize, scale: f64) {
    h.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        h[i * n + i] = scale;
    }
}

/// Minimizes `fg`, which returns f(x) and writes ∇f(x) into its second
/// argument.
pub fn bfgs<F>(mut fg: F, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = fg(&x, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Minimum {
            x,
            f,
            iterations: 0,
            converged: false,
        };
    }
    let mut h = vec![0.0; n * n];
    reset(&mut h, n, 1.0);
    let mut fresh = true;

    let mut p = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];

    for iter in 0..opts.max_iter {
        if g.iter().all(|v| v.abs() < opts.gtol) {
            return Minimum {
                x,
                f,
                iterations: iter,
                converged: true,
            };
        }
        for i in 0..n {
            p[i] = -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>();
        }
        let mut slope = dot(&g, &p);
        if slope >= 0.0 {
            reset(&mut h, n, 1.0);
            fresh = true;
            p.iter_mut().zip(&g).for_each(|(p, g)| *p = -g);
            slope = dot(&g, &p);
        }

        let mut t = 1.0;
        let mut f_new = f64::NAN;
        let mut accepted = false;
        for _ in 0..80 {
            for i in 0..n {
                x_new[i] = x[i] + t * p[i];
            }
            f_new = fg(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= f + 1e-4 * t * slope {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || !g_new.iter().all(|v| v.is_finite()) {
            if fresh {
                // Steepest descent cannot make progress either: x is
                // stationary to working precision.
                return Minimum {
                    x,
                    f,
                    iterations: iter,
                    converged: true,
                };
            }
            reset(&mut h, n, 1.0);
            fresh = true;
            continue;
        }

        for i in 0..n {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        let improvement = f - f_new;
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;
        if improvement <= opts.ftol * (1.0 + f.abs()) && !fresh {
            return Minimum {
                x,
                f,
                iterations: iter + 1,
                converged: true,
            };
        }

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                reset(&mut h, n, sy / dot(&y, &y));
            }
            for i in 0..n {
                hy[i] = (0..n).map(|j| h[i * n + j] * y[j]).sum();
            }
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] +=
                        rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
            fresh = false;
        }
    }
    Minimum {
        x,
        f,
        iterations: opts.max_iter,
        converged: false,
    }
}

/// Golden-section search for the minimizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > tol * (1.0 + c.abs().max(d.abs())) {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    (lo + hi) / 2.0
}
