//! Bounded Nelder-Mead simplex search on the unit box.
//!
//! Coordinates are normalized to `[0, 1]^n`; trial points are clipped to the
//! box before evaluation. Coefficients adapt to the dimension.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter falls below this.
    pub x_tol: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { max_evals: 2000, f_tol: 1e-12, x_tol: 1e-6, initial_step: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub iterations: usize,
}

fn clip(x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Minimizes `f` over `[0, 1]^n` from `x0`. Non-finite values count as
/// `+inf`. The returned point is the best one evaluated.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut start = x0.to_vec();
    clip(&mut start);
    let mut simplex = vec![start.clone()];
    for k in 0..n {
        let mut p = start.clone();
        // step inward when the seed sits on the upper face
        p[k] = if p[k] + opts.initial_step <= 1.0 { p[k] + opts.initial_step } else { p[k] - opts.initial_step };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p, &mut evals)).collect();
    let mut iterations = 0;

    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let diameter = simplex[1..].iter().map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
        if (spread.is_finite() && spread <= opts.f_tol) || diameter <= opts.x_tol {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / nf).collect();
        let along = |t: f64| {
            let mut p: Vec<f64> = (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect();
            clip(&mut p);
            p
        };

        let xr = along(-alpha);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(-alpha * beta);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(-alpha * gamma);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(gamma);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        for k in 1..=n {
            for j in 0..n {
                simplex[k][j] = simplex[0][j] + delta * (simplex[k][j] - simplex[0][j]);
            }
            values[k] = eval(&simplex[k], &mut evals);
        }
    }

    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    NelderMeadResult { x: simplex[best].clone(), f: values[best], evals, iterations }
}
