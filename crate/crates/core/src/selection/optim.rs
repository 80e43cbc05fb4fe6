use nalgebra::{DMatrix, DVector};

use super::SolverOptions;

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Quasi-Newton (BFGS) maximization with Armijo backtracking.
///
/// `h0_inv` is the initial approximation of the inverse of the negative
/// Hessian. Stops when the relative change of the objective is below
/// `rel_tol` and the gradient sup-norm is below `grad_tol * (1 + |f|)`, or
/// when the line search cannot make progress (reported as not converged
/// unless the gradient test already passes).
pub fn bfgs_maximize<F>(f: F, x0: DVector<f64>, h0_inv: DMatrix<f64>, opts: &SolverOptions) -> BfgsOutcome
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let k = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut h = h0_inv;
    let mut converged = false;
    let mut iterations = 0;
    let grad_ok = |g: &DVector<f64>, fx: f64| g.amax() <= opts.grad_tol * (1.0 + fx.abs());
    if grad_ok(&g, fx) {
        return BfgsOutcome {
            x,
            value: fx,
            grad: g,
            iterations: 0,
            converged: true,
        };
    }
    for it in 1..=opts.max_iter {
        iterations = it;
        let mut dir = &h * &g;
        let mut slope = g.dot(&dir);
        if !(slope > 0.0) {
            // Not an ascent direction: reset to steepest ascent.
            h = DMatrix::identity(k, k) * (1.0 / (1.0 + g.norm()));
            dir = &h * &g;
            slope = g.dot(&dir);
        }
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..50 {
            let cand = &x + &dir * t;
            let (fc, gc) = f(&cand);
            if fc.is_finite() && fc >= fx + 1e-4 * t * slope {
                next = Some((cand, fc, gc));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fxn, gn)) = next else {
            converged = grad_ok(&g, fx);
            break;
        };
        let s = &xn - &x;
        // Gradient of the minimized objective (-f) changes by y.
        let y = &g - &gn;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let rel = (fxn - fx).abs() / (1.0 + fxn.abs());
        x = xn;
        fx = fxn;
        g = gn;
        if grad_ok(&g, fx) || (rel < opts.rel_tol && g.amax() <= 1e-6 * (1.0 + fx.abs())) {
            converged = true;
            break;
        }
    }
    BfgsOutcome {
        x,
        value: fx,
        grad: g,
        iterations,
        converged,
    }
}

/// Hessian by central differences of an analytic gradient, symmetrized.
pub fn fd_hessian<G>(grad: G, x: &DVector<f64>) -> DMatrix<f64>
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let k = x.len();
    let mut h = DMatrix::zeros(k, k);
    for j in 0..k {
        let step = 1e-5 * x[j].abs().max(1.0);
        let mut xp = x.clone();
        xp[j] += step;
        let mut xm = x.clone();
        xm[j] -= step;
        let d = (grad(&xp) - grad(&xm)) / (2.0 * step);
        h.set_column(j, &d);
    }
    (&h + h.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizes_concave_quadratic() {
        // f = -(x-1)^2 - 10 (y+2)^2
        let f = |v: &DVector<f64>| {
            let (a, b) = (v[0] - 1.0, v[1] + 2.0);
            (-(a * a) - 10.0 * b * b, DVector::from_vec(vec![-2.0 * a, -20.0 * b]))
        };
        let out = bfgs_maximize(f, DVector::zeros(2), DMatrix::identity(2, 2) * 0.01, &SolverOptions::default());
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-8 && (out.x[1] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn fd_hessian_of_quadratic() {
        let g = |v: &DVector<f64>| DVector::from_vec(vec![-2.0 * v[0] + v[1], v[0] - 6.0 * v[1]]);
        let h = fd_hessian(g, &DVector::from_vec(vec![0.3, -0.7]));
        let want = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -6.0]);
        assert!((h - want).amax() < 1e-9);
    }
}
