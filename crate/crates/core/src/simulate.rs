//! Synthetic survival data drawn from a model group's hazard.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1};
use serde::{Deserialize, Serialize};

use crate::datasets::{SurvivalDataset, SurvivalRecord};
use crate::error::{invalid, Result};
use crate::hazard::ChangePointSchedule;
use crate::model::{GroupKind, JointModel};

/// Censoring applied to simulated event times.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Censoring {
    /// Administrative end of follow-up.
    pub end: Option<f64>,
    /// Rate of independent exponential drop-out.
    pub dropout_rate: Option<f64>,
}

impl Censoring {
    fn validate(&self) -> Result<()> {
        if let Some(e) = self.end {
            if !(e.is_finite() && e > 0.0) {
                return Err(invalid(format!("censoring end must be positive, got {e}")));
            }
        }
        if let Some(r) = self.dropout_rate {
            if !(r.is_finite() && r > 0.0) {
                return Err(invalid(format!("drop-out rate must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

/// Solves `H(t) = target` by bracketing and bisection; `None` when the
/// cumulative hazard stays below `target` up to `limit`.
fn invert(schedule: &ChangePointSchedule, target: f64, limit: f64) -> Result<Option<f64>> {
    let h_at = |t: f64| schedule.cumulative_hazard(t);
    let mut hi = 1.0_f64.min(limit);
    while h_at(hi)? < target {
        if hi >= limit {
            return Ok(None);
        }
        hi = (hi * 2.0).min(limit);
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h_at(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(hi))
}

/// Draws one time from `schedule` per record, by inversion of the
/// cumulative hazard, then applies `censoring`.
pub fn simulate_schedule(
    schedule: &ChangePointSchedule,
    n: usize,
    censoring: &Censoring,
    rng: &mut impl Rng,
) -> Result<Vec<SurvivalRecord>> {
    censoring.validate()?;
    let dropout = censoring.dropout_rate.map(|r| Exp::new(r).expect("validated"));
    let limit = censoring.end.unwrap_or(f64::MAX).min(schedule.end());
    (0..n)
        .map(|_| {
            let target: f64 = Exp1.sample(rng);
            let event_time = invert(schedule, target, limit)?;
            let drop = dropout.as_ref().map(|d| d.sample(rng));
            let cut = drop.map_or(limit, |d| d.min(limit));
            Ok(match event_time {
                Some(t) if t <= cut => SurvivalRecord::new(t, true),
                _ => SurvivalRecord::new(cut, false),
            })
        })
        .collect()
}

/// `n` records from the hazard of group `kind` at constrained parameters
/// `theta`.
pub fn simulate_group(
    model: &JointModel,
    kind: GroupKind,
    theta: &[f64],
    n: usize,
    censoring: &Censoring,
    seed: u64,
) -> Result<SurvivalDataset> {
    if n == 0 {
        return Err(invalid("cannot simulate an empty dataset"));
    }
    let schedule = model.group_schedule(kind, theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = simulate_schedule(&schedule, n, censoring, &mut rng)?;
    SurvivalDataset::new(records, model.time_unit())
}
