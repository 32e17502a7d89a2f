//! Quasi-Newton minimisation with numerical gradients.

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) struct Bfgs {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for Bfgs {
    fn default() -> Self {
        Bfgs {
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

fn gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 6e-6 * x[i].abs().max(1.0);
            let xi = x[i];
            xp[i] = xi + h;
            let fp = f(&xp);
            xp[i] = xi - h;
            let fm = f(&xp);
            xp[i] = xi;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Bfgs {
    /// Minimises `f` from `x0`. Non-finite objective values are treated as
    /// infeasible and rejected by the line search.
    pub fn minimize(&self, f: impl Fn(&[f64]) -> f64, x0: &[f64]) -> Minimum {
        let n = x0.len();
        let mut x = x0.to_vec();
        let mut fx = f(&x);
        if n == 0 || !fx.is_finite() {
            return Minimum { x, f: fx, iterations: 0, converged: n == 0 };
        }
        let identity = |n: usize| {
            let mut h = vec![vec![0.0; n]; n];
            for (i, row) in h.iter_mut().enumerate() {
                row[i] = 1.0;
            }
            h
        };
        let mut h = identity(n);
        let mut g = gradient(&f, &x);
        let mut fresh = true;
        for iter in 1..=self.max_iter {
            let gnorm = dot(&g, &g).sqrt();
            if gnorm <= 1e-12 * fx.abs().max(1e-300) || gnorm == 0.0 {
                return Minimum { x, f: fx, iterations: iter - 1, converged: true };
            }
            let mut dir: Vec<f64> = h.iter().map(|row| -dot(row, &g)).collect();
            let mut slope = dot(&dir, &g);
            if !(slope < 0.0) {
                h = identity(n);
                dir = g.iter().map(|v| -v).collect();
                slope = -gnorm * gnorm;
                fresh = true;
            }
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
                let fnew = f(&xn);
                if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                    accepted = Some((xn, fnew));
                    break;
                }
                step *= 0.5;
            }
            let Some((xn, fnew)) = accepted else {
                if fresh {
                    return Minimum { x, f: fx, iterations: iter, converged: true };
                }
                h = identity(n);
                fresh = true;
                continue;
            };
            let gn = gradient(&f, &xn);
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
            let change = (fx - fnew).abs();
            let scale = fx.abs().max(fnew.abs());
            x = xn;
            g = gn;
            fx = fnew;
            if change <= self.tol * scale || change == 0.0 {
                return Minimum { x, f: fx, iterations: iter, converged: true };
            }
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                if fresh {
                    // scale the initial inverse Hessian
                    let gamma = sy / dot(&y, &y);
                    for (i, row) in h.iter_mut().enumerate() {
                        row.iter_mut().for_each(|v| *v = 0.0);
                        row[i] = gamma;
                    }
                }
                let rho = 1.0 / sy;
                let hy: Vec<f64> = h.iter().map(|row| dot(row, &y)).collect();
                let yhy = dot(&y, &hy);
                for i in 0..n {
                    for j in 0..n {
                        h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                            + (rho * rho * yhy + rho) * s[i] * s[j];
                    }
                }
                fresh = false;
            }
        }
        Minimum { x, f: fx, iterations: self.max_iter, converged: false }
    }
}
