//! Stochastic master equation for the monitored dot, its Lindblad limit, and
//! the measurement record.
//!
//! All rates are in units of the cavity leakage rate, with hbar = 1. The
//! deterministic generator is
//!
//! ```text
//! L rho = -i[H, rho] + Gamma H[sigma^-] rho + kappa H[a b^dagger] rho
//!         + gamma H[P_X] rho + Omega H[sigma^+] rho      (Omega only while pumping)
//! H[A] rho = A rho A^dagger - (A^dagger A rho + rho A^dagger A) / 2
//! ```
//!
//! and monitoring adds `sqrt(eta gamma) D[P_X] rho dW` with
//! `D[P_X] rho = P_X rho + rho P_X - 2 <P_X> rho`. The controller sees the
//! time-integrated record `y = <P_X> dt + beta dW`, `beta = (eta gamma)^(-1/2)`.

use num_complex::Complex;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{build_space, hamiltonian, make_operator, projector, Operator, OperatorKind, StateSpace};
use crate::linalg::{CMat, SparseMat, DIM};
use crate::scalar::Real;

/// Tolerance on the trace before renormalization; larger drift means `dt` is too big.
pub const TRACE_DRIFT_TOL: f64 = 1e-6;
/// Most negative eigenvalue tolerated before a trajectory is aborted.
pub const POSITIVITY_TOL: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("integration step unstable: {0}")]
    StepUnstable(String),
    #[error("measurement record requested but eta * gamma = 0")]
    DegenerateNoise,
    #[error("invalid model parameter {name}: {reason}")]
    InvalidParams { name: &'static str, reason: String },
    #[error("tail integration did not converge: non-final population {residual:e} after t = {t_tail}")]
    TailNotConverged { residual: f64, t_tail: f64 },
}

/// Physical rates of the source, in units of the cavity leakage rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct ModelParams<T> {
    /// Dot-cavity coupling.
    pub g: T,
    /// Spontaneous emission of the dot outside the cavity mode.
    #[serde(rename = "Gamma")]
    pub big_gamma: T,
    /// Cavity leakage into the external mode.
    pub kappa: T,
    /// Dephasing rate of the dot.
    pub gamma: T,
    /// Incoherent pump rate while the bias is on.
    #[serde(rename = "Omega")]
    pub omega: T,
    /// Fraction of the dephasing captured by the observer.
    pub eta: T,
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        Self {
            g: T::lit(0.1),
            big_gamma: T::lit(0.001),
            kappa: T::one(),
            gamma: T::one(),
            omega: T::lit(0.1),
            eta: T::one(),
        }
    }
}

impl<T: Real> ModelParams<T> {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let rates = [
            ("g", self.g),
            ("Gamma", self.big_gamma),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("Omega", self.omega),
        ];
        for (name, v) in rates {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(DynamicsError::InvalidParams {
                    name,
                    reason: format!("must be a finite rate >= 0, got {v}"),
                });
            }
        }
        if !(self.eta >= T::zero() && self.eta <= T::one()) {
            return Err(DynamicsError::InvalidParams {
                name: "eta",
                reason: format!("must lie in [0, 1], got {}", self.eta),
            });
        }
        Ok(())
    }

    /// `sqrt(eta gamma)`, the strength of the measurement back-action.
    pub fn measurement_strength(&self) -> T {
        (self.eta * self.gamma).sqrt()
    }

    /// Record noise amplitude `(eta gamma)^(-1/2)`; `None` without monitoring.
    pub fn beta(&self) -> Option<T> {
        let s = self.eta * self.gamma;
        (s > T::zero()).then(|| s.sqrt().recip())
    }

    pub fn is_monitored(&self) -> bool {
        self.eta * self.gamma > T::zero()
    }
}

/// Hermitian, unit-trace, positive state of the dot, cavity and external mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix<T: Real> {
    m: CMat<T>,
}

impl<T: Real> DensityMatrix<T> {
    /// Projector onto basis state `index`.
    pub fn pure_basis(index: usize) -> Self {
        let mut m = CMat::zeros();
        m[(index, index)] = Complex::one();
        Self { m }
    }

    /// `|G,0,0><G,0,0|`, the decoupled initial state.
    pub fn ground() -> Self {
        Self::pure_basis(0)
    }

    /// `|psi><psi|` for a normalized state vector.
    pub fn from_pure(psi: &[Complex<T>; DIM]) -> Self {
        Self {
            m: CMat::from_fn(|i, j| psi[i] * psi[j].conj()),
        }
    }

    /// Validates Hermiticity, trace and positivity.
    pub fn from_matrix(m: CMat<T>) -> Result<Self, DynamicsError> {
        if !m.is_hermitian(T::lit(1e-10)) {
            return Err(DynamicsError::StepUnstable("matrix is not Hermitian".into()));
        }
        let tr = m.trace();
        if (tr.re - T::one()).abs() > T::lit(1e-8) || tr.im.abs() > T::lit(1e-8) {
            return Err(DynamicsError::StepUnstable(format!("trace {tr} != 1")));
        }
        if !m.is_positive_with_shift(T::lit(1e-7)) {
            return Err(DynamicsError::StepUnstable("matrix is not positive".into()));
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &CMat<T> {
        &self.m
    }

    pub fn trace(&self) -> T {
        self.m.trace().re
    }

    /// `Re Tr(O rho)`
    pub fn expect(&self, op: &Operator<T>) -> T {
        let mut acc = Complex::zero();
        for &(i, j, a) in op.sparse().entries() {
            acc += a * self.m[(j, i)];
        }
        acc.re
    }

    /// `Re Tr(O rho)` for a dense observable.
    pub fn expect_dense(&self, obs: &CMat<T>) -> T {
        let mut acc = Complex::zero();
        for i in 0..DIM {
            for j in 0..DIM {
                acc += obs[(i, j)] * self.m[(j, i)];
            }
        }
        acc.re
    }

    pub fn populations(&self) -> [T; DIM] {
        self.m.diagonal()
    }

    pub fn is_positive(&self, tol: T) -> bool {
        self.m.is_positive_with_shift(tol)
    }
}

/// How the measurement back-action enters each stochastic step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionScheme {
    /// `rho += sqrt(eta gamma) D[P_X] rho dW`, evaluated at the start of the step.
    EulerMaruyama,
    /// `rho -> M rho M / Tr(M rho M)` with `M = exp(sqrt(eta gamma) P_X dY - eta gamma P_X dt)`
    /// and `dY = 2 sqrt(eta gamma) <P_X> dt + dW`. Agrees with Euler-Maruyama to first
    /// order in `dt` and never produces negative populations.
    #[default]
    Positive,
}

/// Result of one monitored step.
#[derive(Clone, Copy, Debug)]
pub struct StepOutput<T: Real> {
    pub rho_next: DensityMatrix<T>,
    /// Record increment `y = <P_X> dt + beta dW`; `None` without monitoring.
    pub y: Option<T>,
    /// `<P_X>` before the step.
    pub expect_px: T,
}

/// `y = <P_X> dt + beta dW`, the record accumulated over one step.
pub fn sample_record<T: Real>(expect_px: T, params: &ModelParams<T>, dt: T, dw: T) -> Result<T, DynamicsError> {
    let beta = params.beta().ok_or(DynamicsError::DegenerateNoise)?;
    Ok(expect_px * dt + beta * dw)
}

#[derive(Clone, Debug)]
struct Channel<T: Real> {
    rate: T,
    jump: SparseMat<T>,
    /// `A^dagger A`
    number: SparseMat<T>,
}

impl<T: Real> Channel<T> {
    fn new(rate: T, op: &Operator<T>) -> Self {
        let number = op.matrix().adjoint().matmul(op.matrix());
        Self {
            rate,
            jump: op.sparse().clone(),
            number: SparseMat::from_dense(&number),
        }
    }

    /// `out += rate * H[A] rho`
    fn apply(&self, rho: &CMat<T>, out: &mut CMat<T>) {
        if self.rate == T::zero() {
            return;
        }
        let r = Complex::new(self.rate, T::zero());
        let half = Complex::new(-self.rate * T::lit(0.5), T::zero());
        self.jump.acc_sandwich(rho, r, out);
        self.number.acc_left(rho, half, out);
        self.number.acc_right(rho, half, out);
    }

    /// `out += rate * (A^dagger O A - {A^dagger A, O} / 2)`
    fn apply_adjoint(&self, obs: &CMat<T>, out: &mut CMat<T>) {
        if self.rate == T::zero() {
            return;
        }
        let r = Complex::new(self.rate, T::zero());
        let half = Complex::new(-self.rate * T::lit(0.5), T::zero());
        self.jump.acc_sandwich_adjoint(obs, r, out);
        self.number.acc_left(obs, half, out);
        self.number.acc_right(obs, half, out);
    }
}

/// Integrator for one parameter set. Immutable once built and shareable across threads.
#[derive(Clone, Debug)]
pub struct Dynamics<T: Real> {
    params: ModelParams<T>,
    space: StateSpace,
    hamiltonian: Operator<T>,
    proj_x: Operator<T>,
    /// `X`-state indices; `P_X` is diagonal on them.
    x_indices: Vec<usize>,
    always_on: Vec<Channel<T>>,
    /// `always_on` with the dephasing reduced to the unobserved fraction.
    unobserved: Vec<Channel<T>>,
    pump: Channel<T>,
    scheme: DiffusionScheme,
}

impl<T: Real> Dynamics<T> {
    pub fn new(params: ModelParams<T>) -> Result<Self, DynamicsError> {
        Self::with_scheme(params, DiffusionScheme::default())
    }

    pub fn with_scheme(params: ModelParams<T>, scheme: DiffusionScheme) -> Result<Self, DynamicsError> {
        params.validate()?;
        let space = build_space();
        let hamiltonian = hamiltonian(params.g, &space);
        let proj_x = make_operator(OperatorKind::ProjX, &space);
        let sm = make_operator(OperatorKind::SigmaMinus, &space);
        let leak = make_operator(OperatorKind::ABDag, &space);
        let sp = make_operator(OperatorKind::SigmaPlus, &space);
        let always_on = vec![
            Channel::new(params.big_gamma, &sm),
            Channel::new(params.kappa, &leak),
            Channel::new(params.gamma, &proj_x),
        ];
        // The Kraus update already dephases at eta * gamma; the drift keeps the rest.
        let unobserved = vec![
            Channel::new(params.big_gamma, &sm),
            Channel::new(params.kappa, &leak),
            Channel::new((T::one() - params.eta) * params.gamma, &proj_x),
        ];
        let x_indices = space.indices_where(|s| s.dot == crate::hilbert::Dot::X);
        Ok(Self {
            params,
            pump: Channel::new(params.omega, &sp),
            space,
            hamiltonian,
            proj_x,
            x_indices,
            always_on,
            unobserved,
            scheme,
        })
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn scheme(&self) -> DiffusionScheme {
        self.scheme
    }

    pub fn proj_x(&self) -> &Operator<T> {
        &self.proj_x
    }

    pub fn expect_px(&self, rho: &DensityMatrix<T>) -> T {
        self.x_indices.iter().fold(T::zero(), |acc, &i| acc + rho.m[(i, i)].re)
    }

    /// Deterministic generator `L rho`.
    pub fn lindblad_rhs(&self, rho: &CMat<T>, pump_on: bool) -> CMat<T> {
        self.rhs_with(&self.always_on, rho, pump_on)
    }

    fn rhs_with(&self, channels: &[Channel<T>], rho: &CMat<T>, pump_on: bool) -> CMat<T> {
        let mut out = CMat::zeros();
        let minus_i = Complex::new(T::zero(), -T::one());
        let plus_i = Complex::new(T::zero(), T::one());
        self.hamiltonian.sparse().acc_left(rho, minus_i, &mut out);
        self.hamiltonian.sparse().acc_right(rho, plus_i, &mut out);
        for ch in channels {
            ch.apply(rho, &mut out);
        }
        if pump_on {
            self.pump.apply(rho, &mut out);
        }
        out
    }

    /// Heisenberg-picture generator, the adjoint of [`Self::lindblad_rhs`]
    /// under the trace pairing: `Tr(O L rho) = Tr(L^dagger(O) rho)`.
    pub fn adjoint_rhs(&self, obs: &CMat<T>, pump_on: bool) -> CMat<T> {
        let mut out = CMat::zeros();
        let minus_i = Complex::new(T::zero(), -T::one());
        let plus_i = Complex::new(T::zero(), T::one());
        self.hamiltonian.sparse().acc_left(obs, plus_i, &mut out);
        self.hamiltonian.sparse().acc_right(obs, minus_i, &mut out);
        for ch in &self.always_on {
            ch.apply_adjoint(obs, &mut out);
        }
        if pump_on {
            self.pump.apply_adjoint(obs, &mut out);
        }
        out
    }

    /// `D[P_X] rho`
    pub fn measurement_superop(&self, rho: &CMat<T>) -> CMat<T> {
        let mut out = CMat::zeros();
        let one = Complex::one();
        self.proj_x.sparse().acc_left(rho, one, &mut out);
        self.proj_x.sparse().acc_right(rho, one, &mut out);
        let p = self.x_indices.iter().fold(T::zero(), |acc, &i| acc + rho[(i, i)].re);
        out.axpy(-T::lit(2.0) * p, rho);
        out
    }

    fn rk4(&self, m: &CMat<T>, dt: T, f: impl Fn(&CMat<T>) -> CMat<T>) -> CMat<T> {
        let half = dt * T::lit(0.5);
        let k1 = f(m);
        let mut tmp = *m;
        tmp.axpy(half, &k1);
        let k2 = f(&tmp);
        tmp = *m;
        tmp.axpy(half, &k2);
        let k3 = f(&tmp);
        tmp = *m;
        tmp.axpy(dt, &k3);
        let k4 = f(&tmp);
        let sixth = dt / T::lit(6.0);
        let mut out = *m;
        out.axpy(sixth, &k1);
        out.axpy(sixth * T::lit(2.0), &k2);
        out.axpy(sixth * T::lit(2.0), &k3);
        out.axpy(sixth, &k4);
        out
    }

    fn drift(&self, m: &CMat<T>, pump_on: bool, dt: T) -> CMat<T> {
        self.rk4(m, dt, |x| self.lindblad_rhs(x, pump_on))
    }

    /// Symmetrize, check the trace drift, renormalize, check positivity.
    fn finish(&self, m: CMat<T>) -> Result<DensityMatrix<T>, DynamicsError> {
        let m = m.hermitian_part();
        let tr = m.trace().re;
        if !tr.is_finite() {
            return Err(DynamicsError::StepUnstable("non-finite state".into()));
        }
        if (tr - T::one()).abs() > T::lit(TRACE_DRIFT_TOL) {
            return Err(DynamicsError::StepUnstable(format!(
                "trace drifted to {tr} before renormalization; reduce dt"
            )));
        }
        let m = m.scale(tr.recip());
        if !m.is_positive_with_shift(T::lit(POSITIVITY_TOL)) {
            return Err(DynamicsError::StepUnstable(format!(
                "eigenvalue below -{POSITIVITY_TOL:e}; reduce dt"
            )));
        }
        Ok(DensityMatrix { m })
    }

    /// One classical RK4 step of the Lindblad equation.
    pub fn step_deterministic(
        &self,
        rho: &DensityMatrix<T>,
        pump_on: bool,
        dt: T,
    ) -> Result<DensityMatrix<T>, DynamicsError> {
        debug_assert!(dt > T::zero());
        self.finish(self.drift(&rho.m, pump_on, dt))
    }

    /// One monitored step driven by the Wiener increment `dw ~ N(0, dt)`.
    pub fn step_stochastic(
        &self,
        rho: &DensityMatrix<T>,
        pump_on: bool,
        dt: T,
        dw: T,
    ) -> Result<StepOutput<T>, DynamicsError> {
        let expect_px = self.expect_px(rho);
        let strength = self.params.measurement_strength();
        if strength == T::zero() {
            return Ok(StepOutput {
                rho_next: self.step_deterministic(rho, pump_on, dt)?,
                y: None,
                expect_px,
            });
        }
        let y = Some(sample_record(expect_px, &self.params, dt, dw)?);
        let next = match self.scheme {
            DiffusionScheme::EulerMaruyama => {
                let mut m = self.drift(&rho.m, pump_on, dt);
                m.axpy(strength * dw, &self.measurement_superop(&rho.m));
                m
            }
            DiffusionScheme::Positive => {
                let dy = T::lit(2.0) * strength * expect_px * dt + dw;
                let mx = (strength * dy - strength * strength * dt).exp();
                let mut scale = [T::one(); DIM];
                for &i in &self.x_indices {
                    scale[i] = mx;
                }
                let mut m = rho.m;
                for (i, si) in scale.iter().enumerate() {
                    for (j, sj) in scale.iter().enumerate() {
                        m[(i, j)] = m[(i, j)] * (*si * *sj);
                    }
                }
                let norm = m.trace().re;
                if !(norm > T::zero()) || !norm.is_finite() {
                    return Err(DynamicsError::StepUnstable(
                        "measurement update lost normalization".into(),
                    ));
                }
                let m = m.scale(norm.recip());
                self.rk4(&m, dt, |x| self.rhs_with(&self.unobserved, x, pump_on))
            }
        };
        Ok(StepOutput {
            rho_next: self.finish(next)?,
            y,
            expect_px,
        })
    }

    /// One RK4 step of an observable under the adjoint generator.
    pub fn step_observable(&self, obs: &CMat<T>, pump_on: bool, dt: T) -> CMat<T> {
        self.rk4(obs, dt, |x| self.adjoint_rhs(x, pump_on))
    }

    /// Projectors onto `n_ext = 0, 1, 2` and onto the non-final states.
    pub fn readout_projectors(&self) -> ReadoutSet<T> {
        let proj = |n: u8| *projector::<T>(&self.space, |s| s.n_ext == n).matrix();
        ReadoutSet {
            photons: [proj(0), proj(1), proj(2)],
            non_final: *projector::<T>(&self.space, |s| !s.is_final()).matrix(),
        }
    }
}

/// Observables read out at the end of a cycle.
#[derive(Clone, Copy, Debug)]
pub struct ReadoutSet<T: Real> {
    /// Projectors onto 0, 1 and 2+ external photons.
    pub photons: [CMat<T>; 3],
    /// Projector onto states that can still emit.
    pub non_final: CMat<T>,
}

impl<T: Real> ReadoutSet<T> {
    pub fn read(&self, rho: &DensityMatrix<T>) -> PhotonProbs<T> {
        PhotonProbs {
            p: [
                rho.expect_dense(&self.photons[0]),
                rho.expect_dense(&self.photons[1]),
                rho.expect_dense(&self.photons[2]),
            ],
            non_final: rho.expect_dense(&self.non_final),
        }
    }
}

/// Photon-number probabilities of the external mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotonProbs<T> {
    /// `p(0)`, `p(1)`, `p(2+)`
    pub p: [T; 3],
    /// Population still outside `|G,0,n>` at readout.
    pub non_final: T,
}

/// How long to keep integrating after the pump switches off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TailLength {
    /// Exactly this long; readout fails if the system has not relaxed.
    Fixed(f64),
    /// Until the worst-case non-final population is below the readout tolerance.
    Auto(AutoTail),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTail {
    Auto,
}

impl Default for TailLength {
    fn default() -> Self {
        TailLength::Auto(AutoTail::Auto)
    }
}

/// Non-final population allowed at readout.
pub const READOUT_TOL: f64 = 1e-4;
/// Longest tail the automatic mode will try.
pub const MAX_AUTO_TAIL: f64 = 1e5;

/// Pump-off relaxation folded into the readout observables.
///
/// Evolving the observables backwards under the adjoint generator gives
/// `Tr(O exp(L t) rho) = Tr(exp(L^dagger t)(O) rho)`, so the post-stop
/// photon statistics of any state are a handful of traces. With the same RK4
/// step this agrees with integrating the state forward to rounding error.
#[derive(Clone, Debug)]
pub struct TailReadout<T: Real> {
    evolved: ReadoutSet<T>,
    t_tail: T,
}

impl<T: Real> TailReadout<T> {
    pub fn new(dynamics: &Dynamics<T>, dt: T, tail: TailLength) -> Result<Self, DynamicsError> {
        let mut set = dynamics.readout_projectors();
        let tol = T::lit(READOUT_TOL);
        let (steps, auto) = match tail {
            TailLength::Fixed(t) => ((T::lit(t) / dt).round().to_usize().unwrap_or(0), false),
            TailLength::Auto(_) => ((T::lit(MAX_AUTO_TAIL) / dt).round().to_usize().unwrap_or(0), true),
        };
        let mut taken = 0usize;
        while taken < steps {
            // Tr of a positive observable bounds its largest expectation value.
            if auto && set.non_final.trace().re < tol {
                break;
            }
            for o in set.photons.iter_mut() {
                *o = dynamics.step_observable(o, false, dt);
            }
            set.non_final = dynamics.step_observable(&set.non_final, false, dt);
            taken += 1;
        }
        let t_tail = dt * T::from_usize(taken).unwrap_or_else(T::zero);
        if auto && set.non_final.trace().re >= tol {
            return Err(DynamicsError::TailNotConverged {
                residual: set.non_final.trace().re.to_f64_lossy(),
                t_tail: t_tail.to_f64_lossy(),
            });
        }
        Ok(Self { evolved: set, t_tail })
    }

    pub fn t_tail(&self) -> T {
        self.t_tail
    }

    /// Photon statistics of `rho` after the tail; fails if it has not relaxed.
    pub fn read(&self, rho: &DensityMatrix<T>) -> Result<PhotonProbs<T>, DynamicsError> {
        let probs = self.evolved.read(rho);
        if probs.non_final >= T::lit(READOUT_TOL) {
            return Err(DynamicsError::TailNotConverged {
                residual: probs.non_final.to_f64_lossy(),
                t_tail: self.t_tail.to_f64_lossy(),
            });
        }
        Ok(probs)
    }
}

/// Integrates `rho` forward with the pump off for `t_tail` and reads the
/// photon statistics directly from the final state.
pub fn tail_forward<T: Real>(
    dynamics: &Dynamics<T>,
    rho: &DensityMatrix<T>,
    dt: T,
    t_tail: T,
) -> Result<PhotonProbs<T>, DynamicsError> {
    let steps = (t_tail / dt).round().to_usize().unwrap_or(0);
    let mut state = *rho;
    for _ in 0..steps {
        state = dynamics.step_deterministic(&state, false, dt)?;
    }
    let probs = dynamics.readout_projectors().read(&state);
    if probs.non_final >= T::lit(READOUT_TOL) {
        return Err(DynamicsError::TailNotConverged {
            residual: probs.non_final.to_f64_lossy(),
            t_tail: t_tail.to_f64_lossy(),
        });
    }
    Ok(probs)
}
