//! Information criteria from posterior draws.

use serde::{Deserialize, Serialize};

use crate::stats::log_sum_exp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InformationCriteria {
    pub aic: f64,
    pub bic: f64,
    pub dic: f64,
    pub dic2: f64,
    pub waic: f64,
    /// `D̄ - D(θ̄)`
    pub p_d: f64,
    /// Half the variance of the deviance.
    pub p_v: f64,
    /// Sum over observations of the variance of the log-likelihood.
    pub p_w: f64,
    /// Number of parameters.
    pub p: usize,
    /// Number of observations.
    pub n: usize,
    pub mean_deviance: f64,
    pub plug_in_deviance: f64,
}

/// Mean that is exact when all values are equal.
pub(crate) fn stable_mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let Some(first) = it.next() else { return f64::NAN };
    let mut n = 1.0;
    let mut acc = 0.0;
    for v in it {
        acc += v - first;
        n += 1.0;
    }
    first + acc / n
}

fn stable_var(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = stable_mean(values.iter().copied());
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Criteria from a draw × observation log-likelihood matrix and the
/// pointwise log-likelihood at the plug-in estimate. Both must sum the
/// observations in the same order.
pub fn criteria_from_pointwise(pointwise: &[Vec<f64>], plug_in_pointwise: &[f64], p: usize) -> InformationCriteria {
    let s = pointwise.len();
    let n = plug_in_pointwise.len();
    let deviances: Vec<f64> = pointwise.iter().map(|row| -2.0 * row.iter().sum::<f64>()).collect();
    let mean_deviance = stable_mean(deviances.iter().copied());
    let plug_in_deviance = -2.0 * plug_in_pointwise.iter().sum::<f64>();
    let p_d = mean_deviance - plug_in_deviance;
    let p_v = stable_var(&deviances) / 2.0;

    let mut lppd = 0.0;
    let mut p_w = 0.0;
    let mut column = vec![0.0; s];
    for i in 0..n {
        for (d, row) in pointwise.iter().enumerate() {
            column[d] = row[i];
        }
        lppd += log_sum_exp(&column) - (s as f64).ln();
        p_w += stable_var(&column);
    }
    let pf = p as f64;
    InformationCriteria {
        aic: plug_in_deviance + 2.0 * pf,
        bic: plug_in_deviance + pf * (n as f64).ln(),
        dic: mean_deviance + p_d,
        dic2: mean_deviance + p_v,
        waic: -2.0 * (lppd - p_w),
        p_d,
        p_v,
        p_w,
        p,
        n,
        mean_deviance,
        plug_in_deviance,
    }
}
