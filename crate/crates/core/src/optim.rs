//! Derivative-free minimisation (Nelder–Mead) for the low-dimensional
//! likelihood fits.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Convergence when the spread of simplex values falls below
    /// `f_tol * (1 + |f_best|)`...
    pub f_tol: f64,
    /// ...and every vertex lies within `x_tol` of the best one (per coordinate).
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iter: 20_000, f_tol: 1e-12, x_tol: 1e-9 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimise `f` starting from `x0` with initial simplex offsets `steps`.
///
/// Non-finite objective values are treated as +inf, which lets callers express
/// box constraints by returning `f64::INFINITY` outside the feasible region.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], steps: &[f64], opts: NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(steps.len(), n);
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();

    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let mut iterations = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();
    while iterations < opts.max_iter {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let f_best = values[best];
        let f_worst = values[worst];
        let spread_ok = f_best.is_finite() && f_worst.is_finite() && (f_worst - f_best) <= opts.f_tol * (1.0 + f_best.abs());
        let size_ok = simplex.iter().all(|v| v.iter().zip(&simplex[best]).all(|(a, b)| (a - b).abs() <= opts.x_tol));
        if spread_ok && size_ok {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &idx in order.iter().take(n) {
            for (c, x) in centroid.iter_mut().zip(&simplex[idx]) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }

        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[worst]).map(|(c, w)| c + t * (c - w)).collect() };

        let xr = along(ALPHA);
        let fr = eval(&xr);
        if fr < values[best] {
            let xe = along(GAMMA);
            let fe = eval(&xe);
            if fe < fr {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second_worst] {
            simplex[worst] = xr;
            values[worst] = fr;
            continue;
        }
        // contraction: outside if the reflection improved on the worst point
        let (xc, fc) = if fr < f_worst {
            let xc = along(RHO);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-RHO);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < f_worst.min(fr) {
            simplex[worst] = xc;
            values[worst] = fc;
            continue;
        }
        // shrink towards the best vertex
        let xb = simplex[best].clone();
        for idx in 0..=n {
            if idx == best {
                continue;
            }
            for (x, b) in simplex[idx].iter_mut().zip(&xb) {
                *x = b + SIGMA * (*x - b);
            }
            values[idx] = eval(&simplex[idx]);
        }
    }

    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    Minimum { x: simplex[best].clone(), f: values[best], iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let m = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.5, 0.5],
            NelderMeadOptions::default(),
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6, "{:?}", m.x);
        assert!((m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn respects_infinite_walls() {
        // minimum of (x-2)^2 constrained to x <= 1
        let m =
            nelder_mead(|x| if x[0] > 1.0 { f64::INFINITY } else { (x[0] - 2.0).powi(2) }, &[0.0], &[0.3], NelderMeadOptions::default());
        assert!(m.x[0] <= 1.0 && m.x[0] > 1.0 - 1e-6);
    }
}
