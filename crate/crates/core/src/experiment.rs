//! Pumping cycles under a controller, Monte Carlo aggregation, sweeps and
//! the constrained optimizations over stop time and CUSUM threshold.
//!
//! Every trajectory draws its noise from a stream seeded by
//! [`derive_seed`](crate::rng::derive_seed)`(seed, index)` and draws one
//! Wiener increment per step whether or not anything listens to the record.
//! Results are reduced in trajectory-index order, so the thread count never
//! changes an output bit.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes::{BayesController, ChainParams};
use crate::detect::{cusum_update, llr_increment, CusumDetector, CusumState, Decision, Hypotheses};
use crate::dynamics::{DensityMatrix, DiffusionScheme, Dynamics, DynamicsError, ModelParams, TailLength, TailReadout};
use crate::linalg::CMat;
use crate::report::fmt_f64;
use crate::rng::item_rng;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: u64,
        #[source]
        source: DynamicsError,
    },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid run control `{name}`: {reason}")]
    InvalidControl { name: &'static str, reason: String },
    #[error("no pumping time keeps p2plus <= {epsilon}")]
    NoFeasibleTime { epsilon: f64 },
    #[error("no threshold keeps p2plus <= {epsilon}")]
    NoFeasibleThreshold { epsilon: f64 },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Who decides when the pump goes off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Controller {
    /// Fixed pumping duration; ignores the record.
    Timer {
        t_stop: f64,
    },
    Cusum,
    Bayes,
}

impl Controller {
    pub fn label(&self) -> &'static str {
        match self {
            Controller::Timer { .. } => "timer",
            Controller::Cusum => "cusum",
            Controller::Bayes => "bayes",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunControl {
    pub dt: f64,
    /// Cap on the pumping phase.
    pub t_max: f64,
    pub t_tail: TailLength,
    pub n_traj: usize,
    pub seed: u64,
    /// Tolerated multi-photon probability.
    pub epsilon: f64,
    /// CUSUM threshold.
    pub h: f64,
    pub controller: Controller,
    /// Record steps summed into one controller sample.
    pub record_period: usize,
    pub scheme: DiffusionScheme,
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
}

impl Default for RunControl {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_max: 200.0,
            t_tail: TailLength::default(),
            n_traj: 1000,
            seed: 1,
            epsilon: 0.01,
            h: 1.0,
            controller: Controller::Cusum,
            record_period: 1,
            scheme: DiffusionScheme::default(),
            workers: None,
        }
    }
}

impl RunControl {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |name, reason: &str| {
            Err(ExperimentError::InvalidControl {
                name,
                reason: reason.into(),
            })
        };
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", "must be positive");
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return bad("t_max", "must be non-negative");
        }
        if let TailLength::Fixed(t) = self.t_tail {
            if !(t >= 0.0 && t.is_finite()) {
                return bad("t_tail", "must be non-negative");
            }
        }
        if self.n_traj == 0 {
            return bad("n_traj", "must be at least 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon", "must lie in (0, 1)");
        }
        if !(self.h >= 0.0) {
            return bad("h", "must be non-negative");
        }
        if self.record_period == 0 {
            return bad("record_period", "must be at least 1");
        }
        if self.workers == Some(0) {
            return bad("workers", "must be at least 1");
        }
        if let Controller::Timer { t_stop } = self.controller {
            if !(t_stop >= 0.0 && t_stop.is_finite()) {
                return bad("t_stop", "must be non-negative");
            }
        }
        Ok(())
    }

    fn steps(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppedBy {
    Controller,
    TMax,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryOutcome {
    pub stop_time: f64,
    /// `p0, p1, p2plus`
    pub probs: [f64; 3],
    pub stopped_by: StoppedBy,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhotonStats {
    pub mean: [f64; 3],
    /// Binomial standard errors `sqrt(p (1 - p) / n)`.
    pub se: [f64; 3],
    pub n_traj: usize,
    pub controller: String,
    /// CUSUM threshold, Bayes tolerance, or the tolerance a timer was optimized for.
    pub h_or_eps: f64,
    pub params: ModelParams<f64>,
    pub mean_stop_time: f64,
    /// Trajectories that hit `t_max` before the controller fired.
    pub n_t_max: usize,
}

impl PhotonStats {
    fn from_outcomes(
        outcomes: &[TrajectoryOutcome],
        controller: &str,
        h_or_eps: f64,
        params: ModelParams<f64>,
    ) -> Self {
        let n = outcomes.len();
        let nf = n as f64;
        let mut sum = [0.0; 3];
        let mut stop = 0.0;
        let mut n_t_max = 0;
        for o in outcomes {
            for (s, p) in sum.iter_mut().zip(o.probs) {
                *s += p;
            }
            stop += o.stop_time;
            if o.stopped_by == StoppedBy::TMax {
                n_t_max += 1;
            }
        }
        let mean = sum.map(|s| s / nf);
        Self {
            mean,
            se: mean.map(|p| binomial_se(p, n)),
            n_traj: n,
            controller: controller.into(),
            h_or_eps,
            params,
            mean_stop_time: stop / nf,
            n_t_max,
        }
    }

    /// A noiseless row: exact probabilities, zero standard error.
    pub fn exact(probs: [f64; 3], t_stop: f64, epsilon: f64, params: ModelParams<f64>) -> Self {
        Self {
            mean: probs,
            se: [0.0; 3],
            n_traj: 0,
            controller: "deterministic".into(),
            h_or_eps: epsilon,
            params,
            mean_stop_time: t_stop,
            n_t_max: 0,
        }
    }

    /// `p2plus - 2 SE <= epsilon`
    pub fn within_constraint(&self, epsilon: f64) -> bool {
        self.mean[2] - 2.0 * self.se[2] <= epsilon
    }
}

pub fn binomial_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p)).max(0.0).sqrt() / (n as f64).sqrt()
}

/// One row per step of the pumping phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecordRow {
    pub t: f64,
    pub y: Option<f64>,
    pub expect_px: f64,
    pub pump_on: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorRow {
    pub k: u64,
    pub y: f64,
    pub s: f64,
    pub sum: f64,
    pub min: f64,
    pub verdict: Decision,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterRow {
    pub t: f64,
    pub y: f64,
    pub xbar: f64,
    pub p: [f64; 3],
    pub p_tail: f64,
    pub verdict: Decision,
}

/// Everything a single monitored cycle produced. The detector and filter run
/// on every trajectory with a record, whichever controller holds the pump.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub record: Vec<RecordRow>,
    pub detector: Vec<DetectorRow>,
    pub filter: Vec<FilterRow>,
}

/// One step of the pumping phase as seen by a controller.
struct Sample {
    y: Option<f64>,
    expect_px: f64,
    /// Record summed over a completed controller window.
    window: Option<f64>,
}

/// The pumped, monitored state of one trajectory.
struct Pump<'a, R: Rng> {
    dynamics: &'a Dynamics<f64>,
    dt: f64,
    period: usize,
    rng: R,
    rho: DensityMatrix<f64>,
    steps: usize,
    acc: f64,
    acc_len: usize,
}

impl<R: Rng> Pump<'_, R> {
    fn advance(&mut self) -> Result<Sample, DynamicsError> {
        let z: f64 = self.rng.sample(StandardNormal);
        let out = self
            .dynamics
            .step_stochastic(&self.rho, true, self.dt, z * self.dt.sqrt())?;
        self.rho = out.rho_next;
        self.steps += 1;
        let mut window = None;
        if let Some(y) = out.y {
            self.acc += y;
            self.acc_len += 1;
            if self.acc_len == self.period {
                window = Some(self.acc);
                self.acc = 0.0;
                self.acc_len = 0;
            }
        }
        Ok(Sample {
            y: out.y,
            expect_px: out.expect_px,
            window,
        })
    }

    fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }
}

enum Policy {
    Timer(usize),
    Cusum(CusumDetector<f64>),
    Bayes(BayesController<f64>),
}

/// A parameter set and run control with the post-stop readout precomputed.
#[derive(Clone, Debug)]
pub struct Simulator {
    dynamics: Dynamics<f64>,
    tail: TailReadout<f64>,
    ctrl: RunControl,
}

impl Simulator {
    pub fn new(params: ModelParams<f64>, ctrl: RunControl) -> Result<Self, ExperimentError> {
        ctrl.validate()?;
        let dynamics = Dynamics::with_scheme(params, ctrl.scheme)?;
        let tail = TailReadout::new(&dynamics, ctrl.dt, ctrl.t_tail)?;
        Ok(Self { dynamics, tail, ctrl })
    }

    pub fn dynamics(&self) -> &Dynamics<f64> {
        &self.dynamics
    }

    pub fn control(&self) -> &RunControl {
        &self.ctrl
    }

    pub fn params(&self) -> &ModelParams<f64> {
        self.dynamics.params()
    }

    pub fn tail(&self) -> &TailReadout<f64> {
        &self.tail
    }

    /// Controller sample hypotheses, `None` without a record.
    pub fn hypotheses(&self) -> Option<Hypotheses<f64>> {
        let beta = self.params().beta()?;
        Some(Hypotheses::dot_switch(beta, self.window_dt()))
    }

    fn window_dt(&self) -> f64 {
        self.ctrl.dt * self.ctrl.record_period as f64
    }

    fn pump(&self, index: u64) -> Pump<'_, rand_chacha::ChaCha8Rng> {
        Pump {
            dynamics: &self.dynamics,
            dt: self.ctrl.dt,
            period: self.ctrl.record_period,
            rng: item_rng(self.ctrl.seed, index),
            rho: DensityMatrix::ground(),
            steps: 0,
            acc: 0.0,
            acc_len: 0,
        }
    }

    fn policy(&self) -> Result<Policy, ExperimentError> {
        let need_record = |name| ExperimentError::InvalidControl {
            name,
            reason: "controller needs a measurement record (eta * gamma > 0)".into(),
        };
        Ok(match self.ctrl.controller {
            Controller::Timer { t_stop } => Policy::Timer(self.ctrl.steps(t_stop)),
            Controller::Cusum => {
                let hyp = self.hypotheses().ok_or_else(|| need_record("controller"))?;
                Policy::Cusum(CusumDetector::new(hyp, self.ctrl.h))
            }
            Controller::Bayes => {
                let beta = self.params().beta().ok_or_else(|| need_record("controller"))?;
                let chain = ChainParams::from_model(self.params());
                Policy::Bayes(BayesController::new(chain, beta, self.window_dt(), self.ctrl.epsilon))
            }
        })
    }

    fn readout(&self, rho: &DensityMatrix<f64>, t: f64, by: StoppedBy) -> Result<TrajectoryOutcome, DynamicsError> {
        let probs = self.tail.read(rho)?;
        Ok(TrajectoryOutcome {
            stop_time: t,
            probs: probs.p,
            stopped_by: by,
        })
    }

    pub fn run_trajectory(&self, index: u64) -> Result<TrajectoryOutcome, ExperimentError> {
        self.run(index, None)
    }

    /// Like [`run_trajectory`](Self::run_trajectory), also returning the record
    /// and the detector and filter internals.
    pub fn run_traced(&self, index: u64) -> Result<(TrajectoryOutcome, Trace), ExperimentError> {
        let mut trace = Trace::default();
        let out = self.run(index, Some(&mut trace))?;
        Ok((out, trace))
    }

    fn run(&self, index: u64, mut trace: Option<&mut Trace>) -> Result<TrajectoryOutcome, ExperimentError> {
        let wrap = |source| ExperimentError::Trajectory { index, source };
        let mut policy = self.policy()?;
        let max_steps = self.ctrl.steps(self.ctrl.t_max);
        let mut shadow = match (&trace, self.hypotheses()) {
            (Some(_), Some(hyp)) => {
                let beta = self.params().beta().unwrap_or(f64::INFINITY);
                let chain = ChainParams::from_model(self.params());
                Some((
                    CusumDetector::new(hyp, self.ctrl.h),
                    BayesController::new(chain, beta, self.window_dt(), self.ctrl.epsilon),
                ))
            }
            _ => None,
        };
        let mut pump = self.pump(index);
        let mut stopped_by = StoppedBy::TMax;
        loop {
            let done = match &policy {
                Policy::Timer(n) => pump.steps >= *n,
                _ => false,
            };
            if done {
                stopped_by = StoppedBy::Controller;
                break;
            }
            if pump.steps >= max_steps {
                break;
            }
            let sample = pump.advance().map_err(wrap)?;
            let t = pump.time();
            if let Some(tr) = trace.as_deref_mut() {
                tr.record.push(RecordRow {
                    t,
                    y: sample.y,
                    expect_px: sample.expect_px,
                    pump_on: true,
                });
            }
            let Some(y) = sample.window else { continue };
            if let (Some(tr), Some((det, filt))) = (trace.as_deref_mut(), shadow.as_mut()) {
                let (s, verdict) = det.observe(y);
                tr.detector.push(DetectorRow {
                    k: det.state.k,
                    y,
                    s,
                    sum: det.state.sum,
                    min: det.state.min,
                    verdict,
                });
                let verdict = filt.observe(y);
                let p = filt.state.p;
                tr.filter.push(FilterRow {
                    t,
                    y,
                    xbar: filt.state.xbar,
                    p: [p[0], p[1], p[2]],
                    p_tail: filt.state.tail(),
                    verdict,
                });
            }
            let stop = match &mut policy {
                Policy::Timer(_) => false,
                Policy::Cusum(det) => det.observe(y).1.is_stop(),
                Policy::Bayes(filt) => filt.observe(y).is_stop(),
            };
            if stop {
                stopped_by = StoppedBy::Controller;
                break;
            }
        }
        let t = pump.time();
        if let Some(tr) = trace {
            tr.record.push(RecordRow {
                t,
                y: None,
                expect_px: self.dynamics.expect_px(&pump.rho),
                pump_on: false,
            });
        }
        self.readout(&pump.rho, t, stopped_by).map_err(wrap)
    }

    /// CUSUM outcomes of one trajectory for every threshold in `hs` (ascending).
    ///
    /// The pumped evolution and the statistic `S - m` do not depend on the
    /// threshold, so each `h` stops at the first sample where `S - m > h`.
    /// Entry `i` is bit-identical to a single-threshold run with `h = hs[i]`.
    pub fn run_cusum_thresholds(&self, index: u64, hs: &[f64]) -> Result<Vec<TrajectoryOutcome>, ExperimentError> {
        if hs.windows(2).any(|w| w[0] > w[1]) || hs.iter().any(|h| !(*h >= 0.0)) {
            return Err(ExperimentError::InvalidControl {
                name: "h",
                reason: "thresholds must be non-negative and ascending".into(),
            });
        }
        let hyp = self.hypotheses().ok_or(ExperimentError::InvalidControl {
            name: "controller",
            reason: "controller needs a measurement record (eta * gamma > 0)".into(),
        })?;
        let wrap = |source| ExperimentError::Trajectory { index, source };
        let max_steps = self.ctrl.steps(self.ctrl.t_max);
        let mut pump = self.pump(index);
        let mut state = CusumState::default();
        let mut out = Vec::with_capacity(hs.len());
        while out.len() < hs.len() && pump.steps < max_steps {
            let sample = pump.advance().map_err(wrap)?;
            let Some(y) = sample.window else { continue };
            state = cusum_update(state, llr_increment(y, &hyp), hs[out.len()]).0;
            if out.len() < hs.len() && state.statistic() > hs[out.len()] {
                let o = self
                    .readout(&pump.rho, pump.time(), StoppedBy::Controller)
                    .map_err(wrap)?;
                while out.len() < hs.len() && state.statistic() > hs[out.len()] {
                    out.push(o);
                }
            }
        }
        if out.len() < hs.len() {
            let o = self.readout(&pump.rho, pump.time(), StoppedBy::TMax).map_err(wrap)?;
            out.resize(hs.len(), o);
        }
        Ok(out)
    }

    /// Density matrix of trajectory `index` after pumping for `t`, ignoring the controller.
    pub fn pumped_state(&self, index: u64, t: f64) -> Result<DensityMatrix<f64>, ExperimentError> {
        let wrap = |source| ExperimentError::Trajectory { index, source };
        let n = self.ctrl.steps(t);
        let mut pump = self.pump(index);
        while pump.steps < n {
            pump.advance().map_err(wrap)?;
        }
        Ok(pump.rho)
    }
}

/// Maps `f` over trajectory indices `0..n` on `workers` threads, in index order.
fn par_indices<R: Send>(
    workers: Option<usize>,
    n: usize,
    f: impl Fn(u64) -> Result<R, ExperimentError> + Sync + Send,
) -> Result<Vec<R>, ExperimentError> {
    let run = || (0..n as u64).into_par_iter().map(&f).collect::<Vec<_>>();
    let results = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| ExperimentError::Pool(e.to_string()))?
            .install(run),
        None => run(),
    };
    results.into_iter().collect()
}

pub fn monte_carlo(params: ModelParams<f64>, ctrl: RunControl) -> Result<PhotonStats, ExperimentError> {
    let sim = Simulator::new(params, ctrl)?;
    let outcomes = par_indices(ctrl.workers, ctrl.n_traj, |i| sim.run_trajectory(i))?;
    let h_or_eps = match ctrl.controller {
        Controller::Timer { t_stop } => t_stop,
        Controller::Cusum => ctrl.h,
        Controller::Bayes => ctrl.epsilon,
    };
    Ok(PhotonStats::from_outcomes(
        &outcomes,
        ctrl.controller.label(),
        h_or_eps,
        params,
    ))
}

/// Average density matrix of `ctrl.n_traj` trajectories pumped for `t`.
pub fn ensemble_state(params: ModelParams<f64>, ctrl: RunControl, t: f64) -> Result<CMat<f64>, ExperimentError> {
    let sim = Simulator::new(
        params,
        RunControl {
            t_tail: TailLength::Fixed(0.0),
            ..ctrl
        },
    )?;
    let states = par_indices(ctrl.workers, ctrl.n_traj, |i| sim.pumped_state(i, t))?;
    let mut mean = CMat::zeros();
    for s in &states {
        mean.axpy(1.0, s.matrix());
    }
    Ok(mean.scale(1.0 / ctrl.n_traj as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t: f64,
    pub p: [f64; 3],
}

/// `0, step, 2 step, ... <= t_max`
pub fn uniform_grid(t_max: f64, step: f64) -> Vec<f64> {
    let n = (t_max / step + 1e-9).floor() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

/// Lindblad photon statistics after pumping for each `t` in `t_grid`
/// (ascending, rounded to whole steps of `dt`) and relaxing with the pump off.
pub fn deterministic_curve(
    params: ModelParams<f64>,
    dt: f64,
    t_tail: TailLength,
    t_grid: &[f64],
) -> Result<Vec<CurvePoint>, ExperimentError> {
    if t_grid.windows(2).any(|w| w[0] > w[1]) || t_grid.iter().any(|t| !(*t >= 0.0)) {
        return Err(ExperimentError::InvalidControl {
            name: "t_grid",
            reason: "must be non-negative and ascending".into(),
        });
    }
    if !(dt > 0.0) {
        return Err(ExperimentError::InvalidControl {
            name: "dt",
            reason: "must be positive".into(),
        });
    }
    let dynamics = Dynamics::new(params)?;
    let tail = TailReadout::new(&dynamics, dt, t_tail)?;
    let mut rho = DensityMatrix::ground();
    let mut steps = 0usize;
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let target = (t / dt).round() as usize;
        while steps < target {
            rho = dynamics.step_deterministic(&rho, true, dt)?;
            steps += 1;
        }
        out.push(CurvePoint {
            t,
            p: tail.read(&rho)?.p,
        });
    }
    Ok(out)
}

/// Largest `p1` on the curve with `p2plus <= epsilon`; ties go to the earlier time.
///
/// `p2plus` is exactly zero only at `t = 0`, so `epsilon = 0` selects the
/// unpumped point when the grid contains it and fails otherwise.
pub fn optimal_timer(curve: &[CurvePoint], epsilon: f64) -> Result<CurvePoint, ExperimentError> {
    let mut best: Option<CurvePoint> = None;
    for pt in curve.iter().filter(|pt| pt.p[2] <= epsilon) {
        if best.is_none_or(|b| pt.p[1] > b.p[1]) {
            best = Some(*pt);
        }
    }
    best.ok_or(ExperimentError::NoFeasibleTime { epsilon })
}

/// `n` thresholds spaced evenly in `log h` over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect(),
    }
}

/// The default threshold grid: ten points per decade from 0.01 to 100.
pub fn default_h_grid() -> Vec<f64> {
    log_grid(0.01, 100.0, 41)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HScan {
    pub rows: Vec<PhotonStats>,
    /// Index into `rows` of the best threshold with `p2plus <= epsilon`.
    pub best: Option<usize>,
}

impl HScan {
    pub fn best(&self) -> Option<&PhotonStats> {
        self.best.map(|i| &self.rows[i])
    }
}

/// CUSUM statistics for every threshold in `hs`, all from the same
/// `ctrl.n_traj` trajectories.
pub fn optimize_h(params: ModelParams<f64>, ctrl: RunControl, hs: &[f64]) -> Result<HScan, ExperimentError> {
    let mut sorted = hs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sim = Simulator::new(
        params,
        RunControl {
            controller: Controller::Cusum,
            ..ctrl
        },
    )?;
    let per_traj = par_indices(ctrl.workers, ctrl.n_traj, |i| sim.run_cusum_thresholds(i, &sorted))?;
    let rows: Vec<PhotonStats> = sorted
        .iter()
        .enumerate()
        .map(|(j, &h)| {
            let column: Vec<TrajectoryOutcome> = per_traj.iter().map(|v| v[j]).collect();
            PhotonStats::from_outcomes(&column, "cusum", h, params)
        })
        .collect();
    let mut best: Option<usize> = None;
    for (j, r) in rows.iter().enumerate() {
        if r.mean[2] <= ctrl.epsilon && best.is_none_or(|b| r.mean[1] > rows[b].mean[1]) {
            best = Some(j);
        }
    }
    Ok(HScan { rows, best })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    /// Optimal fixed pumping time on the Lindblad curve.
    Deterministic,
    Cusum,
    Bayes,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCase {
    pub gamma: f64,
    pub eta: f64,
    pub kind: CaseKind,
}

impl SweepCase {
    pub fn deterministic(gamma: f64) -> Self {
        Self {
            gamma,
            eta: 0.0,
            kind: CaseKind::Deterministic,
        }
    }

    pub fn cusum(gamma: f64, eta: f64) -> Self {
        Self {
            gamma,
            eta,
            kind: CaseKind::Cusum,
        }
    }

    pub fn bayes(gamma: f64, eta: f64) -> Self {
        Self {
            gamma,
            eta,
            kind: CaseKind::Bayes,
        }
    }
}

/// Best achievable statistics for one case at one pump rate.
pub fn run_case(
    base: ModelParams<f64>,
    omega: f64,
    case: SweepCase,
    ctrl: RunControl,
    hs: &[f64],
) -> Result<PhotonStats, ExperimentError> {
    let params = ModelParams {
        omega,
        gamma: case.gamma,
        eta: case.eta,
        ..base
    };
    match case.kind {
        CaseKind::Deterministic => {
            let grid = uniform_grid(ctrl.t_max, ctrl.dt);
            let curve = deterministic_curve(params, ctrl.dt, ctrl.t_tail, &grid)?;
            let best = optimal_timer(&curve, ctrl.epsilon)?;
            Ok(PhotonStats::exact(best.p, best.t, ctrl.epsilon, params))
        }
        CaseKind::Cusum => optimize_h(params, ctrl, hs)?
            .best()
            .cloned()
            .ok_or(ExperimentError::NoFeasibleThreshold { epsilon: ctrl.epsilon }),
        CaseKind::Bayes => monte_carlo(
            params,
            RunControl {
                controller: Controller::Bayes,
                ..ctrl
            },
        ),
    }
}

/// One row per `(omega, case)`, pump rates outermost.
pub fn sweep_omega(
    base: ModelParams<f64>,
    omegas: &[f64],
    cases: &[SweepCase],
    ctrl: RunControl,
    hs: &[f64],
) -> Result<Vec<PhotonStats>, ExperimentError> {
    let mut rows = Vec::with_capacity(omegas.len() * cases.len());
    for &omega in omegas {
        for &case in cases {
            rows.push(run_case(base, omega, case, ctrl, hs)?);
        }
    }
    Ok(rows)
}

pub const RESULTS_HEADER: [&str; 13] = [
    "omega",
    "gamma",
    "eta",
    "controller",
    "h_or_eps",
    "p0",
    "p1",
    "p2plus",
    "se_p0",
    "se_p1",
    "se_p2plus",
    "n_traj",
    "mean_stop_time",
];

pub fn write_results<W: Write>(w: W, rows: &[PhotonStats]) -> Result<(), ExperimentError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RESULTS_HEADER)?;
    for r in rows {
        let p = &r.params;
        out.write_record([
            fmt_f64(p.omega),
            fmt_f64(p.gamma),
            fmt_f64(p.eta),
            r.controller.clone(),
            fmt_f64(r.h_or_eps),
            fmt_f64(r.mean[0]),
            fmt_f64(r.mean[1]),
            fmt_f64(r.mean[2]),
            fmt_f64(r.se[0]),
            fmt_f64(r.se[1]),
            fmt_f64(r.se[2]),
            r.n_traj.to_string(),
            fmt_f64(r.mean_stop_time),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_curve<W: Write>(w: W, curve: &[CurvePoint]) -> Result<(), ExperimentError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "p0", "p1", "p2plus"])?;
    for c in curve {
        out.write_record([fmt_f64(c.t), fmt_f64(c.p[0]), fmt_f64(c.p[1]), fmt_f64(c.p[2])])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_record<W: Write>(w: W, rows: &[RecordRow]) -> Result<(), ExperimentError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "y", "expect_PX", "pump_on"])?;
    for r in rows {
        out.write_record([
            fmt_f64(r.t),
            r.y.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.expect_px),
            (r.pump_on as u8).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_detector<W: Write>(w: W, rows: &[DetectorRow]) -> Result<(), ExperimentError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["k", "y", "s", "S", "m", "S_minus_m", "verdict"])?;
    for r in rows {
        out.write_record([
            r.k.to_string(),
            fmt_f64(r.y),
            fmt_f64(r.s),
            fmt_f64(r.sum),
            fmt_f64(r.min),
            fmt_f64(r.sum - r.min),
            r.verdict.label().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_filter<W: Write>(w: W, rows: &[FilterRow]) -> Result<(), ExperimentError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "y", "xbar", "p0", "p1", "p2", "p_tail", "verdict"])?;
    for r in rows {
        out.write_record([
            fmt_f64(r.t),
            fmt_f64(r.y),
            fmt_f64(r.xbar),
            fmt_f64(r.p[0]),
            fmt_f64(r.p[1]),
            fmt_f64(r.p[2]),
            fmt_f64(r.p_tail),
            r.verdict.label().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
