//! Derivative-free simplex minimizer (Nelder-Mead) with the
//! dimension-adaptive parameters of Gao & Han (2012).

pub(crate) struct NelderMead {
    pub max_iterations: usize,
    /// Stop when the simplex function values span less than
    /// `ftol * max(1, |f_best|)`.
    pub ftol: f64,
    /// Per-coordinate displacement used to build the initial simplex.
    pub initial_step: f64,
}

pub(crate) struct NmOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

impl NelderMead {
    pub(crate) fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64]) -> NmOutcome {
        let n = x0.len();
        if n == 0 {
            return NmOutcome {
                x: Vec::new(),
                value: sanitize(f(x0)),
                converged: true,
            };
        }
        let nf = n as f64;
        let alpha = 1.0;
        let beta = 1.0 + 2.0 / nf;
        let gamma = 0.75 - 1.0 / (2.0 * nf);
        let delta = 1.0 - 1.0 / nf;

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(x0.to_vec());
        for i in 0..n {
            let mut v = x0.to_vec();
            v[i] += self.initial_step;
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| sanitize(f(v))).collect();

        let mut order: Vec<usize> = (0..=n).collect();
        let mut converged = false;
        for _ in 0..self.max_iterations {
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let best = order[0];
            let worst = order[n];
            let second_worst = order[n - 1];
            if values[best].is_finite()
                && values[worst] - values[best] <= self.ftol * values[best].abs().max(1.0)
            {
                converged = true;
                break;
            }

            // Centroid of all but the worst vertex.
            let mut centroid = vec![0.0; n];
            for &idx in order.iter().take(n) {
                for (c, x) in centroid.iter_mut().zip(&simplex[idx]) {
                    *c += x;
                }
            }
            for c in centroid.iter_mut() {
                *c /= nf;
            }

            let reflect: Vec<f64> = centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + alpha * (c - w))
                .collect();
            let f_reflect = sanitize(f(&reflect));

            if f_reflect < values[best] {
                let expand: Vec<f64> = centroid
                    .iter()
                    .zip(&reflect)
                    .map(|(c, r)| c + beta * (r - c))
                    .collect();
                let f_expand = sanitize(f(&expand));
                if f_expand < f_reflect {
                    simplex[worst] = expand;
                    values[worst] = f_expand;
                } else {
                    simplex[worst] = reflect;
                    values[worst] = f_reflect;
                }
                continue;
            }
            if f_reflect < values[second_worst] {
                simplex[worst] = reflect;
                values[worst] = f_reflect;
                continue;
            }
            if f_reflect < values[worst] {
                // Outside contraction.
                let contract: Vec<f64> = centroid
                    .iter()
                    .zip(&reflect)
                    .map(|(c, r)| c + gamma * (r - c))
                    .collect();
                let f_contract = sanitize(f(&contract));
                if f_contract <= f_reflect {
                    simplex[worst] = contract;
                    values[worst] = f_contract;
                    continue;
                }
            } else {
                // Inside contraction.
                let contract: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[worst])
                    .map(|(c, w)| c + gamma * (w - c))
                    .collect();
                let f_contract = sanitize(f(&contract));
                if f_contract < values[worst] {
                    simplex[worst] = contract;
                    values[worst] = f_contract;
                    continue;
                }
            }
            // Shrink toward the best vertex.
            let best_point = simplex[best].clone();
            for &idx in order.iter().skip(1) {
                let v: Vec<f64> = best_point
                    .iter()
                    .zip(&simplex[idx])
                    .map(|(b, x)| b + delta * (x - b))
                    .collect();
                values[idx] = sanitize(f(&v));
                simplex[idx] = v;
            }
        }

        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        NmOutcome {
            x: simplex[best].clone(),
            value: values[best],
            converged,
        }
    }
}
