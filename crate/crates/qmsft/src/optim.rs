//! Bounded quasi-Newton minimization on `R^n`.

/// Outcome of [`bfgs`].
#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct BfgsOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Stop when the relative decrease over an iteration falls below this.
    pub cost_tol: f64,
    pub max_backtracks: usize,
    /// Cap on the step length in parameter space.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iters: 200,
            grad_tol: 1e-10,
            cost_tol: 1e-15,
            max_backtracks: 60,
            max_step: 10.0,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// BFGS with Armijo backtracking. Non-finite costs are treated as `+∞`, and a
/// non-descent direction resets the inverse Hessian to the identity.
pub fn bfgs<F, G>(f: F, grad: G, x0: Vec<f64>, opts: BfgsOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let cost = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut x = x0;
    let mut fx = cost(&x);
    let mut g = grad(&x);
    let mut h = identity(n);
    let mut iterations = 0;
    if n == 0 || !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        let grad_norm = norm(&g);
        return Minimum {
            x,
            value: fx,
            iterations,
            grad_norm,
        };
    }
    while iterations < opts.max_iters && norm(&g) > opts.grad_tol {
        iterations += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i], &g)).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let dn = norm(&d);
        let mut alpha = if dn > opts.max_step {
            opts.max_step / dn
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let fnew = cost(&xn);
            if fnew <= fx + 1e-4 * alpha * slope {
                accepted = Some((xn, fnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew)) = accepted else { break };
        let gn = grad(&xn);
        if gn.iter().any(|v| !v.is_finite()) {
            x = xn;
            fx = fnew;
            break;
        }
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            update_inverse_hessian(&mut h, &s, &y, sy);
        }
        let decrease = fx - fnew;
        x = xn;
        g = gn;
        fx = fnew;
        if decrease <= opts.cost_tol * fx.abs().max(1e-300) {
            break;
        }
    }
    let grad_norm = norm(&g);
    Minimum {
        x,
        value: fx,
        iterations,
        grad_norm,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn update_inverse_hessian(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Central-difference gradient.
pub fn central_gradient(f: &dyn Fn(&[f64]) -> f64, v: &[f64], h: f64) -> Vec<f64> {
    let mut w = v.to_vec();
    (0..v.len())
        .map(|k| {
            let x0 = w[k];
            w[k] = x0 + h;
            let fp = f(&w);
            w[k] = x0 - h;
            let fm = f(&w);
            w[k] = x0;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// BFGS with central-difference gradients.
pub fn bfgs_numeric(f: &dyn Fn(&[f64]) -> f64, x0: Vec<f64>, opts: BfgsOptions) -> Minimum {
    bfgs(f, |x| central_gradient(f, x, 1e-6), x0, opts)
}
