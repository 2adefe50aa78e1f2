//! Extremum-seeking style online center-of-mass estimator.
//!
//! A sinusoidal dither on the body force makes any center-of-mass error
//! `dp = p_true - p_est` show up as a torque residual `F x dp` at the dither
//! frequencies. Per channel the residual is band-passed, demodulated by the
//! dither that excites it, low-passed, and integrated into the estimate:
//!
//! ```text
//! x, y: excited by d2 on F_z, filtered by H2, demodulated by d2, gain g2
//! z:    excited by d1 on F_x/F_y, filtered by H1, demodulated by d1, gain g1
//! ```
//!
//! The averaged demodulated signal of channel `x` is `a2^2 / 2 * dp_x`, so the
//! estimate moves along `+g * v`.

use nalgebra::{Complex, Matrix2, Matrix3, Vector3};
use thiserror::Error;

use crate::filters::{BandPass, LowPass};
use crate::scalar::{abs, clamp, lit, to_f64, Real};

/// Dither amplitudes [N] and angular frequencies [rad/s].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DitherConfig<T: Real> {
    pub a1: T,
    pub a2: T,
    pub w1: T,
    pub w2: T,
}

impl<T: Real> Default for DitherConfig<T> {
    fn default() -> Self {
        Self { a1: lit(0.3), a2: lit(0.7), w1: lit(5.0), w2: lit(3.0) }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DitherError {
    #[error("dither frequencies must be positive")]
    NonPositiveFrequency,
    #[error("dither frequencies {w1} and {w2} rad/s are closer than max(w)/{q_margin}")]
    FrequencySeparation { w1: f64, w2: f64, q_margin: f64 },
    #[error("dither amplitude `{name}` = {value} N must lie in (0, {limit}] N")]
    Amplitude { name: &'static str, value: f64, limit: f64 },
}

impl<T: Real> DitherConfig<T> {
    /// `weight` is the hover thrust `m g`; amplitudes must stay below a tenth of it.
    pub fn validate(&self, weight: T, q_margin: T) -> Result<(), DitherError> {
        if !(self.w1 > T::zero() && self.w2 > T::zero()) {
            return Err(DitherError::NonPositiveFrequency);
        }
        let w_max = if self.w1 > self.w2 { self.w1 } else { self.w2 };
        if !(abs(self.w1 - self.w2) >= w_max / q_margin) {
            return Err(DitherError::FrequencySeparation {
                w1: to_f64(self.w1),
                w2: to_f64(self.w2),
                q_margin: to_f64(q_margin),
            });
        }
        let limit = weight * lit(0.1);
        for (name, a) in [("a1", self.a1), ("a2", self.a2)] {
            if !(a > T::zero() && a <= limit) {
                return Err(DitherError::Amplitude { name, value: to_f64(a), limit: to_f64(limit) });
            }
        }
        Ok(())
    }
}

/// Body-force dither `[d1, d1, d2]` at time `t`.
pub fn dither<T: Real>(t: T, cfg: &DitherConfig<T>) -> Vector3<T> {
    let d1 = cfg.a1 * (cfg.w1 * t).sin();
    let d2 = cfg.a2 * (cfg.w2 * t).sin();
    Vector3::new(d1, d1, d2)
}

/// Unsmoothed applied torque `J_est (w_now - w_prev) / dt`; the gyroscopic term is dropped.
pub fn estimate_applied_torque<T: Real>(
    gyro_now: &Vector3<T>,
    gyro_prev: &Vector3<T>,
    dt: T,
    inertia_est: &Matrix3<T>,
) -> Vector3<T> {
    assert!(dt > T::zero());
    inertia_est * (gyro_now - gyro_prev) / dt
}

pub fn torque_residual<T: Real>(t_hat: &Vector3<T>, t_nominal: &Vector3<T>) -> Vector3<T> {
    t_hat - t_nominal
}

/// Which residual component drives the `z` channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum K3Source {
    #[default]
    TauX,
    NegTauY,
}

/// `[dtau_y, -dtau_x, k3]`.
pub fn k_map<T: Real>(delta_t: &Vector3<T>, k3: K3Source) -> Vector3<T> {
    let k3 = match k3 {
        K3Source::TauX => delta_t[0],
        K3Source::NegTauY => -delta_t[1],
    };
    Vector3::new(delta_t[1], -delta_t[0], k3)
}

/// Per-axis signals of one channel after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelOutput<T: Real> {
    pub gamma: T,
    pub v: T,
    pub increment: T,
}

/// Demodulation, low-pass and gradient integration of one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscChannel<T: Real> {
    pub band_pass: BandPass<T>,
    pub low_pass: LowPass<T>,
    pub gain: T,
}

impl<T: Real> EscChannel<T> {
    pub fn new(center: T, q: T, w_lowpass: T, gain: T, dt: T) -> Self {
        Self { band_pass: BandPass::new(center, q, dt), low_pass: LowPass::new(w_lowpass, dt), gain }
    }

    /// Demodulates an already band-passed signal and returns the estimate
    /// increment `dt * g * v` (zero unless `integrate`).
    pub fn update(&mut self, k_tilde: T, demod: T, dt: T, integrate: bool) -> ChannelOutput<T> {
        let gamma = k_tilde * demod;
        let v = self.low_pass.step(gamma);
        let increment = if integrate { dt * self.gain * v } else { T::zero() };
        ChannelOutput { gamma, v, increment }
    }
}

/// Estimator tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig<T: Real> {
    pub dither: DitherConfig<T>,
    /// Band-pass quality factor.
    pub q: T,
    /// Low-pass cutoff `w_L` [rad/s].
    pub w_lowpass: T,
    /// Gain of the `z` channel.
    pub g1: T,
    /// Gain of the `x` and `y` channels.
    pub g2: T,
    /// Cutoff of the smoothing applied to the differentiated torque [rad/s].
    pub smoothing_cutoff: T,
    pub k3_source: K3Source,
    /// `J_est` used by the differentiator.
    pub inertia_est: Matrix3<T>,
    /// Half-width of the box the estimate is clamped into [m].
    pub envelope: T,
    /// Integration-free start-up time [s]; `None` means two periods of the slower dither.
    pub warmup: Option<T>,
    /// Largest admissible `max(g / w, w_L / w)` per channel.
    pub delta_max: T,
    /// Sampling period [s].
    pub dt: T,
}

impl<T: Real> Default for EstimatorConfig<T> {
    fn default() -> Self {
        Self {
            dither: DitherConfig::default(),
            q: lit(20.0),
            w_lowpass: lit(0.5),
            g1: lit(1.5),
            g2: lit(0.5),
            smoothing_cutoff: lit(20.0),
            k3_source: K3Source::TauX,
            inertia_est: Matrix3::from_diagonal(&Vector3::new(lit(0.035), lit(0.035), lit(0.045))),
            envelope: lit(0.15),
            warmup: None,
            delta_max: lit(0.4),
            dt: lit(0.004),
        }
    }
}

impl<T: Real> EstimatorConfig<T> {
    pub fn warmup_time(&self) -> T {
        self.warmup.unwrap_or_else(|| {
            let w_min = if self.dither.w1 < self.dither.w2 { self.dither.w1 } else { self.dither.w2 };
            lit::<T>(2.0) * T::TAU() / w_min
        })
    }

    pub fn stability(&self) -> StabilityReport {
        validate_stability(self.g1, self.g2, self.w_lowpass, &self.dither, self.delta_max)
    }
}

/// A failed stability condition.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityViolation {
    #[error("gain {name} = {value} violates {name} > 0")]
    GainNotPositive { name: &'static str, value: f64 },
    #[error("low-pass cutoff w_L = {0} violates w_L > 0")]
    CutoffNotPositive(f64),
    #[error("channel {channel}: delta = {delta} exceeds delta_max = {delta_max}")]
    NotSmall { channel: &'static str, delta: f64, delta_max: f64 },
    #[error("channel {channel}: averaged matrix is not Hurwitz")]
    NotHurwitz { channel: &'static str },
}

impl StabilityViolation {
    /// Short identifier of the violated condition.
    pub fn condition(&self) -> &'static str {
        match self {
            Self::GainNotPositive { name: "g1", .. } => "g1 > 0",
            Self::GainNotPositive { .. } => "g2 > 0",
            Self::CutoffNotPositive(_) => "w_L > 0",
            Self::NotSmall { .. } => "delta <= delta_max",
            Self::NotHurwitz { .. } => "hurwitz",
        }
    }
}

/// Averaged-model analysis of one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStability {
    pub name: &'static str,
    pub gain: f64,
    /// Amplitude and angular frequency of the demodulating dither.
    pub amplitude: f64,
    pub frequency: f64,
    pub delta: f64,
    /// Eigenvalues of `[[0, -g], [w_L a^2 / 2, -w_L]]` in real time [1/s].
    pub eigenvalues: [Complex<f64>; 2],
    /// Eigenvalues of the time-scaled matrix `B` (divided by `w delta`).
    pub scaled_eigenvalues: [Complex<f64>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub channels: Vec<ChannelStability>,
    pub violations: Vec<StabilityViolation>,
}

impl StabilityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Eigenvalues of a real 2x2 matrix.
pub fn eigenvalues_2x2(m: &Matrix2<f64>) -> [Complex<f64>; 2] {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m.determinant();
    let disc = Complex::new(tr * tr / 4.0 - det, 0.0).sqrt();
    let half = Complex::new(tr / 2.0, 0.0);
    [half + disc, half - disc]
}

/// Averaged error dynamics of one channel in real time: state `(dp, v)`.
pub fn averaged_matrix(gain: f64, w_lowpass: f64, amplitude: f64) -> Matrix2<f64> {
    Matrix2::new(0.0, -gain, 0.5 * w_lowpass * amplitude * amplitude, -w_lowpass)
}

/// Checks positivity, smallness against `delta_max`, and Hurwitz stability of
/// the averaged model for each channel.
pub fn validate_stability<T: Real>(
    g1: T,
    g2: T,
    w_lowpass: T,
    dither: &DitherConfig<T>,
    delta_max: T,
) -> StabilityReport {
    let (g1, g2, wl, dmax) = (to_f64(g1), to_f64(g2), to_f64(w_lowpass), to_f64(delta_max));
    let mut violations = Vec::new();
    for (name, value) in [("g1", g1), ("g2", g2)] {
        if !(value > 0.0) {
            violations.push(StabilityViolation::GainNotPositive { name, value });
        }
    }
    if !(wl > 0.0) {
        violations.push(StabilityViolation::CutoffNotPositive(wl));
    }
    let (a1, a2, w1, w2) = (to_f64(dither.a1), to_f64(dither.a2), to_f64(dither.w1), to_f64(dither.w2));
    let mut channels = Vec::new();
    for (name, gain, amplitude, frequency) in [("x", g2, a2, w2), ("y", g2, a2, w2), ("z", g1, a1, w1)] {
        let delta = (gain / frequency).max(wl / frequency);
        let eigenvalues = eigenvalues_2x2(&averaged_matrix(gain, wl, amplitude));
        let scale = frequency * delta;
        let scaled_eigenvalues = eigenvalues.map(|e| e / scale);
        if !(delta <= dmax) {
            violations.push(StabilityViolation::NotSmall { channel: name, delta, delta_max: dmax });
        }
        if !eigenvalues.iter().all(|e| e.re < 0.0) {
            violations.push(StabilityViolation::NotHurwitz { channel: name });
        }
        channels.push(ChannelStability { name, gain, amplitude, frequency, delta, eigenvalues, scaled_eigenvalues });
    }
    StabilityReport { channels, violations }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("stability conditions violated: {0:?}")]
    Unstable(Vec<StabilityViolation>),
    #[error("invalid estimator configuration: {0}")]
    Config(&'static str),
}

/// Signals of the most recent estimator step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorTelemetry<T: Real> {
    /// Smoothed torque residual.
    pub residual: Vector3<T>,
    pub k: Vector3<T>,
    pub k_tilde: Vector3<T>,
    pub gamma: Vector3<T>,
    pub v: Vector3<T>,
    pub com_est: Vector3<T>,
    pub integrating: bool,
}

/// Full estimator pipeline running at a fixed rate.
#[derive(Debug, Clone)]
pub struct ComEstimator<T: Real> {
    config: EstimatorConfig<T>,
    com_est: Vector3<T>,
    channels: [EscChannel<T>; 3],
    smoothing: [LowPass<T>; 3],
    prev_gyro: Option<(Vector3<T>, T)>,
    start_time: Option<T>,
    primed: bool,
    frozen: bool,
    telemetry: EstimatorTelemetry<T>,
}

impl<T: Real> ComEstimator<T> {
    /// Refuses configurations that fail [`validate_stability`].
    pub fn new(config: EstimatorConfig<T>, com_init: Vector3<T>) -> Result<Self, EstimatorError> {
        let report = config.stability();
        if !report.passed() {
            return Err(EstimatorError::Unstable(report.violations));
        }
        if !(config.dt > T::zero()) {
            return Err(EstimatorError::Config("dt must be positive"));
        }
        if !(config.q > T::zero()) {
            return Err(EstimatorError::Config("q must be positive"));
        }
        if !(config.envelope > T::zero()) {
            return Err(EstimatorError::Config("envelope must be positive"));
        }
        if !(config.smoothing_cutoff > T::zero()) || config.smoothing_cutoff * config.dt >= T::PI() {
            return Err(EstimatorError::Config("smoothing cutoff must lie in (0, Nyquist)"));
        }
        if config.dither.w1.max(config.dither.w2) * config.dt >= T::PI() {
            return Err(EstimatorError::Config("dither frequency above Nyquist"));
        }
        let c = &config;
        let xy = EscChannel::new(c.dither.w2, c.q, c.w_lowpass, c.g2, c.dt);
        let z = EscChannel::new(c.dither.w1, c.q, c.w_lowpass, c.g1, c.dt);
        let smooth = LowPass::new(c.smoothing_cutoff, c.dt);
        let com_est = Self::clamp_box(com_init, c.envelope);
        Ok(Self {
            channels: [xy, xy, z],
            smoothing: [smooth; 3],
            com_est,
            prev_gyro: None,
            start_time: None,
            primed: false,
            frozen: false,
            telemetry: EstimatorTelemetry {
                residual: Vector3::zeros(),
                k: Vector3::zeros(),
                k_tilde: Vector3::zeros(),
                gamma: Vector3::zeros(),
                v: Vector3::zeros(),
                com_est,
                integrating: false,
            },
            config,
        })
    }

    fn clamp_box(p: Vector3<T>, half: T) -> Vector3<T> {
        p.map(|x| clamp(x, -half, half))
    }

    pub fn config(&self) -> &EstimatorConfig<T> {
        &self.config
    }

    pub fn com_est(&self) -> Vector3<T> {
        self.com_est
    }

    pub fn telemetry(&self) -> &EstimatorTelemetry<T> {
        &self.telemetry
    }

    /// Dither to add to the desired body force at time `t`; zero once frozen.
    pub fn dither(&self, t: T) -> Vector3<T> {
        if self.frozen {
            Vector3::zeros()
        } else {
            dither(t, &self.config.dither)
        }
    }

    /// Stops all further updates of the estimate.
    pub fn freeze(&mut self) {
        self.frozen = true;
        self.telemetry.integrating = false;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Processes one sample.
    ///
    /// `nominal_torque` is the torque the controller believes it applied over
    /// the interval ending at `t`. Both it and the differentiated gyro pass
    /// through the same smoothing, so the residual has no filter mismatch.
    pub fn step(&mut self, t: T, gyro: &Vector3<T>, nominal_torque: &Vector3<T>) -> &EstimatorTelemetry<T> {
        if self.frozen {
            return &self.telemetry;
        }
        let Some((prev, t_prev)) = self.prev_gyro.replace((*gyro, t)) else {
            self.start_time = Some(t);
            return &self.telemetry;
        };
        let dt_meas = t - t_prev;
        let raw =
            torque_residual(&estimate_applied_torque(gyro, &prev, dt_meas, &self.config.inertia_est), nominal_torque);
        let k_raw = k_map(&raw, self.config.k3_source);
        if !self.primed {
            // Start every filter in its steady state for the present (constant) input.
            for i in 0..3 {
                self.smoothing[i].prime(raw[i]);
                self.channels[i].band_pass.prime(k_raw[i]);
                self.channels[i].low_pass.reset();
            }
            self.primed = true;
        }
        let residual = Vector3::from_fn(|i, _| self.smoothing[i].step(raw[i]));
        let k = k_map(&residual, self.config.k3_source);
        let k_tilde = Vector3::from_fn(|i, _| self.channels[i].band_pass.step(k[i]));

        let d = dither(t, &self.config.dither);
        let demod = Vector3::new(d[2], d[2], d[0]);
        let start = self.start_time.unwrap_or(t);
        let integrating = t - start >= self.config.warmup_time();
        let dt = self.config.dt;
        let mut gamma = Vector3::zeros();
        let mut v = Vector3::zeros();
        let mut inc = Vector3::zeros();
        for i in 0..3 {
            let out = self.channels[i].update(k_tilde[i], demod[i], dt, integrating);
            gamma[i] = out.gamma;
            v[i] = out.v;
            inc[i] = out.increment;
        }
        self.com_est = Self::clamp_box(self.com_est + inc, self.config.envelope);
        self.telemetry = EstimatorTelemetry { residual, k, k_tilde, gamma, v, com_est: self.com_est, integrating };
        &self.telemetry
    }
}
