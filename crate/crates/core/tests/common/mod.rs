//! Brute-force likelihood oracle shared by the test targets.

use polyanchor::hazard::HazardFamily;
use polyanchor::model::ScheduleSpec;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Weibull `(hazard, cumulative hazard)` with `H = rate · t^shape`.
pub fn weibull(shape: f64, rate: f64, t: f64) -> (f64, f64) {
    (rate * shape * t.powf(shape - 1.0), rate * t.powf(shape))
}

/// Independent evaluation of a component's `(hazard, cumulative hazard)`.
pub fn naive(family: HazardFamily, p: &[f64], t: f64) -> (f64, f64) {
    match family {
        HazardFamily::Weibull => weibull(p[0], p[1], t),
        HazardFamily::Exponential => (p[0], p[0] * t),
        HazardFamily::LogNormal => {
            let n = Normal::new(p[0], p[1]).unwrap();
            let s = n.sf(t.ln());
            (n.pdf(t.ln()) / t / s, -s.ln())
        }
        HazardFamily::LogLogistic => {
            let u = (t / p[1]).powf(p[0]);
            (p[0] / t * u / (1.0 + u), (1.0 + u).ln())
        }
    }
}

/// `Σ d·ln h(t) - H(t)` over records.
pub fn oracle_sum(records: &[(f64, bool)], parts: impl Fn(f64) -> (f64, f64)) -> f64 {
    let mut total = 0.0;
    for &(t, d) in records {
        let (h, cum) = parts(t);
        if d {
            total += h.ln();
        }
        total -= cum;
    }
    total
}

/// Brute-force change-point likelihood: walk the segments explicitly.
/// `terms` are `(component, weight)` pairs; a schedule lists term indices.
pub fn naive_group(
    comps: &[(HazardFamily, Vec<f64>)],
    terms: &[(usize, f64)],
    schedule: Option<&ScheduleSpec>,
    records: &[(f64, bool)],
) -> f64 {
    let (bounds, segs): (Vec<f64>, Vec<Vec<usize>>) = match schedule {
        None => (vec![0.0, f64::INFINITY], vec![(0..terms.len()).collect()]),
        Some(s) => {
            let mut b = vec![0.0];
            b.extend(&s.change_points);
            b.push(f64::INFINITY);
            (b, s.segments.clone())
        }
    };
    let eval = |seg: &[usize], t: f64| -> (f64, f64) {
        seg.iter().fold((0.0, 0.0), |acc, &i| {
            let (c, w) = terms[i];
            let (h, cum) = naive(comps[c].0, &comps[c].1, t);
            (acc.0 + w * h, acc.1 + w * cum)
        })
    };
    oracle_sum(records, |t| {
        let mut cum = 0.0;
        let mut k = 0;
        while k + 1 < segs.len() && t >= bounds[k + 1] {
            cum += eval(&segs[k], bounds[k + 1]).1 - eval(&segs[k], bounds[k]).1;
            k += 1;
        }
        let (h, c_t) = eval(&segs[k], t);
        (h, cum + c_t - eval(&segs[k], bounds[k]).1)
    })
}
