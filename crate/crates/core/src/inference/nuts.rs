//! Multinomial No-U-Turn sampler with a diagonal metric, dual-averaging
//! step-size adaptation and windowed metric estimation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LogDensity;
use crate::error::{Error, Result};

const MAX_DELTA_H: f64 = 1000.0;

#[derive(Clone, Debug)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Outcome of one transition.
#[derive(Clone, Copy, Debug)]
pub(crate) struct TransitionStats {
    pub accept_stat: f64,
    pub depth: usize,
    pub divergent: bool,
}

pub(crate) struct Nuts<'a, T: LogDensity + ?Sized> {
    target: &'a T,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) epsilon: f64,
    pub(crate) inv_metric: Vec<f64>,
    max_depth: usize,
    z: Point,
    divergent: bool,
}

impl<'a, T: LogDensity + ?Sized> Nuts<'a, T> {
    pub(crate) fn new(target: &'a T, q: Vec<f64>, rng: ChaCha8Rng, max_depth: usize) -> Result<Self> {
        let dim = q.len();
        let mut grad = vec![0.0; dim];
        let logp = target.log_density_and_gradient(&q, &mut grad);
        if !logp.is_finite() {
            return Err(Error::Sampler("initial point has non-finite log density".into()));
        }
        Ok(Self {
            target,
            rng,
            epsilon: 1.0,
            inv_metric: vec![1.0; dim],
            max_depth,
            z: Point {
                q,
                p: vec![0.0; dim],
                grad,
                logp,
            },
            divergent: false,
        })
    }

    pub(crate) fn position(&self) -> &[f64] {
        &self.z.q
    }

    pub(crate) fn log_density(&self) -> f64 {
        self.z.logp
    }

    fn hamiltonian(&self, z: &Point) -> f64 {
        let kinetic: f64 = z.p.iter().zip(&self.inv_metric).map(|(p, m)| 0.5 * p * p * m).sum();
        let h = -z.logp + kinetic;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn sample_momentum(&mut self) {
        for (p, m) in self.z.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = self.rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
    }

    fn dtau_dp(&self, z: &Point) -> Vec<f64> {
        z.p.iter().zip(&self.inv_metric).map(|(p, m)| p * m).collect()
    }

    fn leapfrog(&mut self, eps: f64) {
        let z = &mut self.z;
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        z.logp = self.target.log_density_and_gradient(&z.q, &mut z.grad);
        if z.logp.is_finite() {
            for (p, g) in z.p.iter_mut().zip(&z.grad) {
                *p += 0.5 * eps * g;
            }
        } else {
            z.logp = f64::NEG_INFINITY;
        }
    }

    /// Doubles or halves the step size until a single leapfrog step crosses
    /// an acceptance probability of 0.8.
    pub(crate) fn init_stepsize(&mut self) -> Result<()> {
        let start = self.z.clone();
        let threshold = 0.8f64.ln();
        self.sample_momentum();
        let h0 = self.hamiltonian(&self.z);
        self.leapfrog(self.epsilon);
        let delta = h0 - self.hamiltonian(&self.z);
        let direction = if delta > threshold { 1 } else { -1 };
        loop {
            self.z = start.clone();
            self.sample_momentum();
            let h0 = self.hamiltonian(&self.z);
            self.leapfrog(self.epsilon);
            let delta = h0 - self.hamiltonian(&self.z);
            if (direction == 1 && !(delta > threshold)) || (direction == -1 && !(delta < threshold)) {
                break;
            }
            self.epsilon = if direction == 1 {
                2.0 * self.epsilon
            } else {
                0.5 * self.epsilon
            };
            if self.epsilon > 1e7 {
                self.z = start;
                return Err(Error::Sampler(
                    "step size diverged while initialising; the posterior may be improper".into(),
                ));
            }
            if self.epsilon == 0.0 {
                self.z = start;
                return Err(Error::Sampler(
                    "step size underflowed while initialising; the posterior is badly scaled".into(),
                ));
            }
        }
        self.z = start;
        Ok(())
    }

    pub(crate) fn transition(&mut self) -> TransitionStats {
        self.sample_momentum();
        self.divergent = false;
        let mut z_fwd = self.z.clone();
        let mut z_bck = self.z.clone();
        let mut z_sample = self.z.clone();
        let mut z_propose = self.z.clone();

        let p0 = self.z.p.clone();
        let sharp0 = self.dtau_dp(&self.z);
        let mut p_fwd_fwd = p0.clone();
        let mut p_sharp_fwd_fwd = sharp0.clone();
        let mut p_fwd_bck = p0.clone();
        let mut p_sharp_fwd_bck = sharp0.clone();
        let mut p_bck_fwd = p0.clone();
        let mut p_sharp_bck_fwd = sharp0.clone();
        let mut p_bck_bck = p0.clone();
        let mut p_sharp_bck_bck = sharp0;
        let mut rho = p0;

        let mut log_sum_weight = 0.0;
        let h0 = self.hamiltonian(&self.z);
        let mut n_leapfrog = 0;
        let mut sum_metro_prob = 0.0;
        let mut depth = 0;
        let dim = rho.len();

        while depth < self.max_depth {
            let mut rho_fwd = vec![0.0; dim];
            let mut rho_bck = vec![0.0; dim];
            let mut log_sum_weight_subtree = f64::NEG_INFINITY;
            let valid;
            if self.rng.random::<f64>() > 0.5 {
                self.z = z_fwd.clone();
                rho_bck.copy_from_slice(&rho);
                p_bck_fwd.copy_from_slice(&p_fwd_bck);
                p_sharp_bck_fwd.copy_from_slice(&p_sharp_fwd_bck);
                valid = self.build_tree(
                    depth,
                    &mut z_propose,
                    &mut p_sharp_fwd_bck,
                    &mut p_sharp_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    h0,
                    1.0,
                    &mut n_leapfrog,
                    &mut log_sum_weight_subtree,
                    &mut sum_metro_prob,
                );
                z_fwd = self.z.clone();
            } else {
                self.z = z_bck.clone();
                rho_fwd.copy_from_slice(&rho);
                p_fwd_bck.copy_from_slice(&p_bck_fwd);
                p_sharp_fwd_bck.copy_from_slice(&p_sharp_bck_fwd);
                valid = self.build_tree(
                    depth,
                    &mut z_propose,
                    &mut p_sharp_bck_fwd,
                    &mut p_sharp_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    h0,
                    -1.0,
                    &mut n_leapfrog,
                    &mut log_sum_weight_subtree,
                    &mut sum_metro_prob,
                );
                z_bck = self.z.clone();
            }
            if !valid {
                break;
            }
            depth += 1;
            if log_sum_weight_subtree > log_sum_weight {
                z_sample = z_propose.clone();
            } else {
                let accept = (log_sum_weight_subtree - log_sum_weight).exp();
                if self.rng.random::<f64>() < accept {
                    z_sample = z_propose.clone();
                }
            }
            log_sum_weight = log_sum_exp2(log_sum_weight, log_sum_weight_subtree);

            for i in 0..dim {
                rho[i] = rho_bck[i] + rho_fwd[i];
            }
            let mut persist = criterion(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
            let mut ext: Vec<f64> = rho_bck.iter().zip(&p_fwd_bck).map(|(a, b)| a + b).collect();
            persist &= criterion(&p_sharp_bck_bck, &p_sharp_fwd_bck, &ext);
            for i in 0..dim {
                ext[i] = rho_fwd[i] + p_bck_fwd[i];
            }
            persist &= criterion(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &ext);
            if !persist {
                break;
            }
        }
        self.z = z_sample;
        TransitionStats {
            accept_stat: if n_leapfrog > 0 {
                sum_metro_prob / n_leapfrog as f64
            } else {
                0.0
            },
            depth,
            divergent: self.divergent,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &mut self,
        depth: usize,
        z_propose: &mut Point,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut [f64],
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        h0: f64,
        sign: f64,
        n_leapfrog: &mut usize,
        log_sum_weight: &mut f64,
        sum_metro_prob: &mut f64,
    ) -> bool {
        if depth == 0 {
            self.leapfrog(sign * self.epsilon);
            *n_leapfrog += 1;
            let h = self.hamiltonian(&self.z);
            if h - h0 > MAX_DELTA_H {
                self.divergent = true;
            }
            *log_sum_weight = log_sum_exp2(*log_sum_weight, h0 - h);
            *sum_metro_prob += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            *z_propose = self.z.clone();
            *p_sharp_beg = self.dtau_dp(&self.z);
            p_sharp_end.clone_from(p_sharp_beg);
            add_assign(rho, &self.z.p);
            p_beg.clone_from(&self.z.p);
            p_end.clone_from(p_beg);
            return !self.divergent;
        }
        let dim = rho.len();
        let mut log_sum_weight_init = f64::NEG_INFINITY;
        let mut p_init_end = vec![0.0; dim];
        let mut p_sharp_init_end = vec![0.0; dim];
        let mut rho_init = vec![0.0; dim];
        if !self.build_tree(
            depth - 1,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            h0,
            sign,
            n_leapfrog,
            &mut log_sum_weight_init,
            sum_metro_prob,
        ) {
            return false;
        }
        let mut z_propose_final = self.z.clone();
        let mut log_sum_weight_final = f64::NEG_INFINITY;
        let mut p_final_beg = vec![0.0; dim];
        let mut p_sharp_final_beg = vec![0.0; dim];
        let mut rho_final = vec![0.0; dim];
        if !self.build_tree(
            depth - 1,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            h0,
            sign,
            n_leapfrog,
            &mut log_sum_weight_final,
            sum_metro_prob,
        ) {
            return false;
        }
        let log_sum_weight_subtree = log_sum_exp2(log_sum_weight_init, log_sum_weight_final);
        *log_sum_weight = log_sum_exp2(*log_sum_weight, log_sum_weight_subtree);
        if log_sum_weight_final > log_sum_weight_subtree {
            *z_propose = z_propose_final;
        } else {
            let accept = (log_sum_weight_final - log_sum_weight_subtree).exp();
            if self.rng.random::<f64>() < accept {
                *z_propose = z_propose_final;
            }
        }
        let rho_subtree: Vec<f64> = rho_init.iter().zip(&rho_final).map(|(a, b)| a + b).collect();
        add_assign(rho, &rho_subtree);
        let mut persist = criterion(p_sharp_beg, p_sharp_end, &rho_subtree);
        let ext: Vec<f64> = rho_init.iter().zip(&p_final_beg).map(|(a, b)| a + b).collect();
        persist &= criterion(p_sharp_beg, &p_sharp_final_beg, &ext);
        let ext: Vec<f64> = rho_final.iter().zip(&p_init_end).map(|(a, b)| a + b).collect();
        persist &= criterion(&p_sharp_init_end, p_sharp_end, &ext);
        persist
    }
}

fn criterion(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

/// Nesterov dual averaging of the log step size.
#[derive(Clone, Debug)]
pub(crate) struct StepSizeAdaptation {
    delta: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl StepSizeAdaptation {
    const GAMMA: f64 = 0.05;
    const KAPPA: f64 = 0.75;
    const T0: f64 = 10.0;

    pub(crate) fn new(delta: f64, epsilon: f64) -> Self {
        let mut s = Self {
            delta,
            mu: 0.0,
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        };
        s.restart(epsilon);
        s
    }

    pub(crate) fn restart(&mut self, epsilon: f64) {
        self.mu = (10.0 * epsilon).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    pub(crate) fn learn(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let a = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + Self::T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / Self::GAMMA;
        let x_eta = self.counter.powf(-Self::KAPPA);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    pub(crate) fn final_epsilon(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Windowed estimation of the diagonal inverse metric: an initial fast
/// buffer, doubling slow windows, and a terminal fast buffer.
#[derive(Clone, Debug)]
pub(crate) struct MetricAdaptation {
    num_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    counter: usize,
    next_window: usize,
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MetricAdaptation {
    pub(crate) fn new(dim: usize, num_warmup: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base_window) = (75, 50, 25);
        if num_warmup < 20 {
            // too short to adapt the metric
            init_buffer = num_warmup;
            term_buffer = 0;
            base_window = 0;
        } else if init_buffer + base_window + term_buffer > num_warmup {
            init_buffer = (0.15 * num_warmup as f64) as usize;
            term_buffer = (0.1 * num_warmup as f64) as usize;
            base_window = num_warmup - (init_buffer + term_buffer);
        }
        Self {
            num_warmup,
            init_buffer,
            term_buffer,
            window_size: base_window,
            counter: 0,
            next_window: (init_buffer + base_window).saturating_sub(1),
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn in_window(&self) -> bool {
        self.window_size > 0
            && self.counter >= self.init_buffer
            && self.counter < self.num_warmup - self.term_buffer
            && self.counter != self.num_warmup
    }

    fn end_of_window(&self) -> bool {
        self.window_size > 0 && self.counter == self.next_window && self.counter != self.num_warmup
    }

    fn compute_next_window(&mut self) {
        let last = self.num_warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.counter + self.window_size;
        if self.next_window != last && self.next_window + 2 * self.window_size >= self.num_warmup - self.term_buffer {
            self.next_window = last;
        }
    }

    /// Records `q`; returns `true` when the inverse metric was updated.
    pub(crate) fn learn(&mut self, inv_metric: &mut [f64], q: &[f64]) -> bool {
        if self.in_window() {
            self.n += 1;
            let n = self.n as f64;
            for i in 0..q.len() {
                let d = q[i] - self.mean[i];
                self.mean[i] += d / n;
                self.m2[i] += d * (q[i] - self.mean[i]);
            }
        }
        if self.end_of_window() {
            self.compute_next_window();
            let n = self.n as f64;
            if self.n > 1 {
                for i in 0..q.len() {
                    let var = self.m2[i] / (n - 1.0);
                    inv_metric[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
                }
            }
            self.n = 0;
            self.mean.iter_mut().for_each(|v| *v = 0.0);
            self.m2.iter_mut().for_each(|v| *v = 0.0);
            self.counter += 1;
            return true;
        }
        self.counter += 1;
        false
    }
}
