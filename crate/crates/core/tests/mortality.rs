use polyanchor::datasets::{kaplan_meier, Sex};
use polyanchor::mortality::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

fn synthetic_surface(n_ages: usize, n_years: usize, drift: f64, seed: u64) -> MortalitySurface {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = Normal::new(0.0, 0.05).unwrap();
    let e = Normal::new(0.0, 0.01).unwrap();
    let mut kappa = vec![0.0];
    for _ in 1..n_years {
        let last = *kappa.last().unwrap();
        kappa.push(last + drift + v.sample(&mut rng));
    }
    let mean: f64 = kappa.iter().sum::<f64>() / n_years as f64;
    kappa.iter_mut().for_each(|k| *k -= mean);
    let raw: Vec<f64> = (0..n_ages).map(|x| 1.0 + 0.05 * x as f64).collect();
    let total: f64 = raw.iter().sum();
    let beta: Vec<f64> = raw.iter().map(|b| b / total).collect();
    let log_rates = (0..n_ages)
        .map(|x| {
            let alpha = -7.0 + 0.09 * x as f64;
            (0..n_years)
                .map(|t| alpha + beta[x] * kappa[t] + e.sample(&mut rng))
                .collect()
        })
        .collect();
    MortalitySurface::new(50, 1990, Sex::Female, log_rates).unwrap()
}

#[test]
fn recovers_drift_and_keeps_constraints() {
    let s = synthetic_surface(20, 30, -1.0, 5);
    let post = fit_lee_carter(&s, &LeeCarterConfig::default()).unwrap();
    assert!((post.mean_drift() + 1.0).abs() < 0.15, "drift {}", post.mean_drift());
    for d in &post.draws {
        assert!((d.beta.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(d.kappa.iter().sum::<f64>().abs() < 1e-10);
    }
}

#[test]
fn equal_loadings_on_two_ages() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let e = Normal::new(0.0, 0.01).unwrap();
    let kappa: Vec<f64> = (0..20).map(|t| 5.0 - 0.5 * t as f64 + 0.25).collect();
    let log_rates = [-5.0, -4.0]
        .iter()
        .map(|a| kappa.iter().map(|k| a + 0.5 * k + e.sample(&mut rng)).collect())
        .collect();
    let s = MortalitySurface::new(60, 2000, Sex::Male, log_rates).unwrap();
    let post = fit_lee_carter(&s, &LeeCarterConfig::default()).unwrap();
    let n = post.draws.len() as f64;
    let b0 = post.draws.iter().map(|d| d.beta[0]).sum::<f64>() / n;
    let b1 = post.draws.iter().map(|d| d.beta[1]).sum::<f64>() / n;
    assert!((b0 - 0.5).abs() < 0.02 && (b1 - 0.5).abs() < 0.02, "{b0} {b1}");
}

#[test]
fn constant_surface_has_no_drift() {
    let s = MortalitySurface::new(60, 2000, Sex::Male, vec![vec![-4.0; 15]; 5]).unwrap();
    let post = fit_lee_carter(&s, &LeeCarterConfig::default()).unwrap();
    let u: Vec<f64> = post.draws.iter().map(|d| d.drift).collect();
    let m = u.iter().sum::<f64>() / u.len() as f64;
    let sd = (u.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (u.len() - 1) as f64).sqrt();
    assert!(m.abs() < 2.0 * sd, "mean {m} sd {sd}");
}

fn fixed_posterior(sigma_v2: f64, drift: f64, n_draws: usize) -> LeeCarterPosterior {
    let draw = LeeCarterDraw {
        alpha: vec![-5.0, -4.5, -4.0],
        beta: vec![0.3, 0.3, 0.4],
        kappa: vec![2.0, 1.0, 0.0, -1.0, -2.0],
        drift,
        sigma_v2,
        sigma_eps2: 1e-4,
    };
    LeeCarterPosterior {
        first_age: 70,
        first_year: 2010,
        sex: Sex::Female,
        draws: vec![draw; n_draws],
    }
}

#[test]
fn projection_variance_grows_linearly() {
    let post = fixed_posterior(0.04, -0.5, 20000);
    let var_at = |h: i32| {
        let r = project_rates(&post, 2014 + h, 9).unwrap();
        let logs: Vec<f64> = (0..r.n_draws()).map(|d| r.rate(d, 72, 0).ln()).collect();
        let m = logs.iter().sum::<f64>() / logs.len() as f64;
        logs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (logs.len() - 1) as f64
    };
    let ratio = var_at(10) / var_at(5);
    assert!((ratio - 2.0).abs() < 0.6, "ratio {ratio}");
}

#[test]
fn negative_drift_lowers_median_rates() {
    let post = fixed_posterior(0.01, -0.5, 2001);
    let median = |h: i32| {
        let r = project_rates(&post, 2014 + h, 3).unwrap();
        let mut v: Vec<f64> = (0..r.n_draws()).map(|d| r.rate(d, 71, 0)).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    assert!(median(1) > median(5) && median(5) > median(20));
}

#[test]
fn synthetic_mean_matches_discrete_law() {
    let m = 0.5;
    let rates = ProjectedRates::single_year(2020, 0, vec![vec![m; 111]]).unwrap();
    let mut map = BTreeMap::new();
    map.insert(Sex::Female, rates);
    let profile = [ProfileEntry {
        age: 20,
        sex: Sex::Female,
        count: 20000,
    }];
    let c = synthesize_cohort(&map, &profile, None, "pop", 1).unwrap();
    let empirical = c.all_causes.times().iter().sum::<f64>() / 20000.0;
    // death in year j with probability q(1-q)^j, uniform within the year
    let q = 1.0 - (-m).exp();
    let analytic = (1.0 - q) / q + 0.5;
    assert!((empirical / analytic - 1.0).abs() < 0.05, "{empirical} vs {analytic}");
}

#[test]
fn large_cohort_km_tracks_cohort_survival() {
    let post = fixed_posterior(0.01, -0.2, 50);
    let rates = project_rates(&post, 2016, 4).unwrap();
    // extend to many ages so the cohort lives long enough
    let wide: Vec<Vec<f64>> = (0..rates.n_draws())
        .map(|d| {
            (0..30)
                .map(|a| rates.rate(d, 70 + (a % 3) as u32, 0) * (1.0 + a as f64))
                .collect()
        })
        .collect();
    let rates = ProjectedRates::single_year(2016, 70, wide).unwrap();
    let mut map = BTreeMap::new();
    map.insert(Sex::Female, rates.clone());
    let profile = [ProfileEntry {
        age: 70,
        sex: Sex::Female,
        count: 10000,
    }];
    let c = synthesize_cohort(&map, &profile, None, "pop", 8).unwrap();
    let km = kaplan_meier(&c.all_causes);
    for j in 0..30u32 {
        let avg = cohort_survival(&rates, 70, j).unwrap().iter().sum::<f64>() / rates.n_draws() as f64;
        let est = km.survival_at(j as f64);
        assert!((avg - est).abs() < 0.02, "j={j}: {avg} vs {est}");
        if j > 0 {
            let prev = cohort_survival(&rates, 70, j - 1).unwrap();
            let cur = cohort_survival(&rates, 70, j).unwrap();
            assert!(prev.iter().zip(&cur).all(|(a, b)| b <= a));
        }
    }
}

#[test]
fn csv_round_trip_for_surface_and_rates() {
    use std::io::Write;
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "year,age,sex,mx").unwrap();
    for y in 2000..2006 {
        for a in 60..63 {
            writeln!(f, "{y},{a},female,{}", 0.01 * (a - 59) as f64).unwrap();
            writeln!(f, "{y},{a},male,{}", 0.02).unwrap();
        }
    }
    f.flush().unwrap();
    let s = load_mortality_csv(f.path(), Sex::Female).unwrap();
    assert_eq!((s.n_ages(), s.n_years()), (3, 6));
    assert!((s.log_rates()[1][0] - 0.02f64.ln()).abs() < 1e-15);

    let rates = ProjectedRates::single_year(2030, 60, vec![vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
    let out = tempfile::NamedTempFile::new().unwrap();
    write_rates_csv(out.path(), &rates, &["header".into()]).unwrap();
    let back = load_rates_csv(out.path(), 2030).unwrap();
    assert_eq!(back, rates);
}
