//! Derivative-free local search: Nelder–Mead with adaptive coefficients.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop once the spread of simplex values falls below this.
    pub ftol: f64,
    /// ... and the simplex diameter falls below this.
    pub xtol: f64,
    pub initial_step: f64,
    /// Stop as soon as the best value is at or below this.
    pub target: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 4000,
            ftol: 1e-10,
            xtol: 1e-7,
            initial_step: 0.5,
            target: f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Minimizes `f` from `x0`. `f` may return `+inf` (or NaN) to mark
/// infeasible points; the start must be feasible for progress to be made.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let d = x0.len();
    let cost = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let dd = d as f64;
    let da = d.max(2) as f64;
    let (alpha, gamma) = (1.0, 1.0 + 2.0 / da);
    let (rho, sigma) = (0.75 - 1.0 / (2.0 * da), 1.0 - 1.0 / da);

    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    pts.push(x0.to_vec());
    for i in 0..d {
        let mut p = x0.to_vec();
        p[i] += opts.initial_step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| cost(p)).collect();
    let mut evals = d + 1;
    // Infeasible initial vertices: pull them halfway back toward the start.
    for i in 1..=d {
        let mut tries = 0;
        while !vals[i].is_finite() && vals[0].is_finite() && tries < 40 {
            for k in 0..d {
                pts[i][k] = 0.5 * (pts[i][k] + x0[k]);
            }
            vals[i] = cost(&pts[i]);
            evals += 1;
            tries += 1;
        }
    }

    let mut order: Vec<usize> = (0..=d).collect();
    let mut centroid = vec![0.0; d];
    let mut trial = vec![0.0; d];
    let mut trial2 = vec![0.0; d];
    while evals < opts.max_evals {
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let (best, worst, second) = (order[0], order[d], order[d.saturating_sub(1)]);
        let spread = vals[worst] - vals[best];
        let diam = pts
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&pts[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= opts.ftol && diam <= opts.xtol || diam < 1e-14 || vals[best].is_infinite() || vals[best] <= opts.target {
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..d] {
            for k in 0..d {
                centroid[k] += pts[i][k] / dd;
            }
        }
        for k in 0..d {
            trial[k] = centroid[k] + alpha * (centroid[k] - pts[worst][k]);
        }
        let fr = cost(&trial);
        evals += 1;
        if fr < vals[best] {
            for k in 0..d {
                trial2[k] = centroid[k] + gamma * (trial[k] - centroid[k]);
            }
            let fe = cost(&trial2);
            evals += 1;
            if fe < fr {
                pts[worst].copy_from_slice(&trial2);
                vals[worst] = fe;
            } else {
                pts[worst].copy_from_slice(&trial);
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            pts[worst].copy_from_slice(&trial);
            vals[worst] = fr;
            continue;
        }
        // contraction, outside or inside
        let outside = fr < vals[worst];
        for k in 0..d {
            trial2[k] = if outside {
                centroid[k] + rho * (trial[k] - centroid[k])
            } else {
                centroid[k] - rho * (centroid[k] - pts[worst][k])
            };
        }
        let fc = cost(&trial2);
        evals += 1;
        if fc < vals[worst].min(fr) || (!outside && fc < vals[worst]) {
            pts[worst].copy_from_slice(&trial2);
            vals[worst] = fc;
            continue;
        }
        // shrink toward the best vertex
        let bp = pts[best].clone();
        for i in 0..=d {
            if i == best {
                continue;
            }
            for k in 0..d {
                pts[i][k] = bp[k] + sigma * (pts[i][k] - bp[k]);
            }
            vals[i] = cost(&pts[i]);
            evals += 1;
        }
    }
    let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).expect("simplex");
    Minimum {
        x: pts[best].clone(),
        value: vals[best],
        evals,
    }
}

/// Restarts Nelder–Mead from its own optimum until the value stops improving.
pub fn nelder_mead_polished(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    opts: &NelderMeadOptions,
    restarts: usize,
) -> Minimum {
    let mut m = nelder_mead(&f, x0, opts);
    let mut step = opts.initial_step;
    for _ in 0..restarts {
        if m.value <= opts.target {
            break;
        }
        step *= 0.5;
        let o = NelderMeadOptions {
            initial_step: step.max(1e-4),
            ..*opts
        };
        let next = nelder_mead(&f, &m.x, &o);
        let improved = m.value - next.value;
        let evals = m.evals + next.evals;
        if next.value < m.value {
            m = next;
        }
        m.evals = evals;
        if !(improved > opts.ftol) {
            break;
        }
    }
    m
}
