//! BFGS with a backtracking line search, used to find a posterior mode
//! before sampling.

use super::LogDensity;

pub(crate) struct Mode {
    pub x: Vec<f64>,
    pub value: f64,
}

/// Maximises the log density from `x0`. Always returns the best finite
/// point seen, which is `x0` itself if no step improves on it.
pub(crate) fn maximize<T: LogDensity + ?Sized>(target: &T, x0: &[f64], max_iter: usize) -> Option<Mode> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = target.log_density_and_gradient(&x, &mut g);
    if !f.is_finite() {
        return None;
    }
    // work with the negative log density and its gradient
    let mut grad: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut f_min = -f;
    let mut inv_h = identity(n);
    for _ in 0..max_iter {
        let gnorm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-8 * (1.0 + f_min.abs()) {
            break;
        }
        let mut dir: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| inv_h[i][j] * grad[j]).sum::<f64>())
            .collect();
        let mut slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        if !(slope < 0.0) {
            inv_h = identity(n);
            dir = grad.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        // cap the step so that the first trial cannot leap absurdly far
        let dnorm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut step = if dnorm > 5.0 { 5.0 / dnorm } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let ft = target.log_density_and_gradient(&trial, &mut g);
            if ft.is_finite() && -ft <= f_min + 1e-4 * step * slope {
                accepted = Some((trial, -ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else { break };
        let grad_new: Vec<f64> = g.iter().map(|v| -v).collect();
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| inv_h[i][j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    inv_h[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        let improvement = f_min - f_new;
        x = x_new;
        grad = grad_new;
        f_min = f_new;
        if improvement.abs() < 1e-12 * (1.0 + f_min.abs()) {
            break;
        }
    }
    f = -f_min;
    Some(Mode { x, value: f })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic;

    impl LogDensity for Quadratic {
        fn dim(&self) -> usize {
            2
        }

        fn log_density_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
            // maximum at (1, -2) with correlated curvature
            let a = x[0] - 1.0;
            let b = x[1] + 2.0;
            g[0] = -(4.0 * a + b);
            g[1] = -(a + 2.0 * b);
            -(2.0 * a * a + a * b + b * b)
        }
    }

    #[test]
    fn finds_quadratic_maximum() {
        let m = maximize(&Quadratic, &[10.0, 10.0], 200).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] + 2.0).abs() < 1e-6);
    }
}
