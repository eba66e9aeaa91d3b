//! One-sided CUSUM detection of the dot switching from `|G>` to `|X>`.
//!
//! Each averaged record sample contributes the Gaussian log-likelihood ratio
//! `s = (mu1 - mu0) / sigma^2 * (y_bar - (mu0 + mu1) / 2)` with
//! `sigma^2 = beta^2 / dt_avg`. The detector keeps the running sum `S`, its
//! running minimum `m` (starting from `S_0 = m_0 = 0`) and stops pumping the
//! first time `S - m > h`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::item_rng;
use crate::scalar::Real;

/// Pre- and post-change distributions of an averaged record sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hypotheses<T> {
    pub mu0: T,
    pub mu1: T,
    /// Variance of one averaged sample, `beta^2 / dt_avg`.
    pub sigma2: T,
    /// Averaging interval.
    pub dt_avg: T,
}

impl<T: Real> Hypotheses<T> {
    /// Dot empty (`mu0 = 0`) versus dot excited (`mu1 = 1`).
    pub fn dot_switch(beta: T, dt_avg: T) -> Self {
        Self {
            mu0: T::zero(),
            mu1: T::one(),
            sigma2: beta * beta / dt_avg,
            dt_avg,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.mu1 > self.mu0 && self.sigma2 > T::zero() && self.dt_avg > T::zero()
    }

    pub fn beta2(&self) -> T {
        self.sigma2 * self.dt_avg
    }
}

/// Log-likelihood ratio of one sample. `y` is the record integrated over
/// `dt_avg`; it is divided by `dt_avg` to get the sample mean first.
pub fn llr_increment<T: Real>(y: T, hyp: &Hypotheses<T>) -> T {
    let y_bar = y / hyp.dt_avg;
    (hyp.mu1 - hyp.mu0) / hyp.sigma2 * (y_bar - (hyp.mu0 + hyp.mu1) * T::lit(0.5))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CusumState<T> {
    /// Cumulative log-likelihood ratio.
    pub sum: T,
    /// Running minimum of `sum`, including the initial zero.
    pub min: T,
    /// Samples consumed.
    pub k: u64,
}

impl<T: Real> CusumState<T> {
    pub fn statistic(&self) -> T {
        self.sum - self.min
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    /// Keep pumping.
    Continue,
    /// Switch the pump off; terminal for the cycle.
    Stop,
}

impl Decision {
    pub fn is_stop(self) -> bool {
        self == Decision::Stop
    }

    pub fn label(self) -> &'static str {
        match self {
            Decision::Continue => "H0",
            Decision::Stop => "H1",
        }
    }
}

/// Folds one increment into the state. Stops iff `S - m > h` (ties continue).
pub fn cusum_update<T: Real>(state: CusumState<T>, s: T, h: T) -> (CusumState<T>, Decision) {
    let sum = state.sum + s;
    let min = if sum < state.min { sum } else { state.min };
    let next = CusumState {
        sum,
        min,
        k: state.k + 1,
    };
    let verdict = if next.statistic() > h {
        Decision::Stop
    } else {
        Decision::Continue
    };
    (next, verdict)
}

/// Streaming detector: hypotheses, threshold and state in one place.
#[derive(Clone, Copy, Debug)]
pub struct CusumDetector<T: Real> {
    pub hyp: Hypotheses<T>,
    pub h: T,
    pub state: CusumState<T>,
    stopped: bool,
}

impl<T: Real> CusumDetector<T> {
    pub fn new(hyp: Hypotheses<T>, h: T) -> Self {
        Self {
            hyp,
            h,
            state: CusumState::default(),
            stopped: false,
        }
    }

    /// Consumes an integrated sample; returns the increment and the verdict.
    pub fn observe(&mut self, y: T) -> (T, Decision) {
        let s = llr_increment(y, &self.hyp);
        if self.stopped {
            return (s, Decision::Stop);
        }
        let (next, d) = cusum_update(self.state, s, self.h);
        self.state = next;
        self.stopped = d.is_stop();
        (s, d)
    }

    pub fn has_stopped(&self) -> bool {
        self.stopped
    }
}

/// Synthetic source of integrated record samples.
pub trait SignalSource {
    /// Integrated record of sample `k` (0-based).
    fn sample<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> f64;
    /// Index of the first post-change sample.
    fn change_at(&self) -> Option<usize>;
}

/// Mean `mu0` before `change_at` and `mu1` from then on, plus white noise of
/// amplitude `beta` integrated over `dt_avg`.
#[derive(Clone, Copy, Debug)]
pub struct StepSignal {
    pub change_at: Option<usize>,
    pub mu0: f64,
    pub mu1: f64,
    pub beta: f64,
    pub dt_avg: f64,
    pub noisy: bool,
}

impl SignalSource for StepSignal {
    fn sample<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> f64 {
        let mean = match self.change_at {
            Some(c) if k >= c => self.mu1,
            _ => self.mu0,
        };
        let noise = if self.noisy {
            let n = Normal::new(0.0, self.dt_avg.sqrt()).expect("dt_avg > 0");
            self.beta * n.sample(rng)
        } else {
            0.0
        };
        mean * self.dt_avg + noise
    }

    fn change_at(&self) -> Option<usize> {
        self.change_at
    }
}

/// Delay and false-alarm estimates from repeated synthetic runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DetectionStats {
    pub n_runs: usize,
    /// Mean samples from the change to the alarm, counting the alarm sample.
    pub mean_delay: f64,
    pub se_delay: f64,
    /// Fraction of runs that alarm before the change.
    pub false_alarm_rate: f64,
    pub se_false_alarm: f64,
    /// Runs with no alarm within `max_samples`.
    pub missed: usize,
}

pub fn detection_stats<S: SignalSource>(
    mut make_source: impl FnMut() -> S,
    hyp: &Hypotheses<f64>,
    h: f64,
    n_runs: usize,
    max_samples: usize,
    seed: u64,
) -> DetectionStats {
    let mut delays = Vec::new();
    let mut false_alarms = 0usize;
    let mut missed = 0usize;
    for run in 0..n_runs {
        let mut rng = item_rng(seed, run as u64);
        let mut src = make_source();
        let mut det = CusumDetector::new(*hyp, h);
        let mut fired = None;
        for k in 0..max_samples {
            let y = src.sample(k, &mut rng);
            if det.observe(y).1.is_stop() {
                fired = Some(k);
                break;
            }
        }
        match (fired, src.change_at()) {
            (Some(k), Some(c)) if k >= c => delays.push((k - c + 1) as f64),
            (Some(_), _) => false_alarms += 1,
            (None, _) => missed += 1,
        }
    }
    let n = n_runs.max(1) as f64;
    let (mean_delay, se_delay) = mean_and_se(&delays);
    let fa = false_alarms as f64 / n;
    DetectionStats {
        n_runs,
        mean_delay,
        se_delay,
        false_alarm_rate: fa,
        se_false_alarm: (fa * (1.0 - fa) / n).sqrt(),
        missed,
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
