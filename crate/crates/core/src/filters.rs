//! Discrete band-pass and low-pass filters used by the estimator.
//!
//! Both are bilinear-transform discretizations prewarped at their characteristic
//! frequency, so the discrete response matches the continuous one exactly there.

use nalgebra::Complex;

use crate::scalar::{lit, Real};

/// Bilinear-transform constant `K = w / tan(w dt / 2)`.
fn prewarp<T: Real>(w: T, dt: T) -> T {
    w / (w * dt * lit::<T>(0.5)).tan()
}

/// Second-order band-pass `(w0/Q) s / (s^2 + (w0/Q) s + w0^2)` in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPass<T: Real> {
    center: T,
    q: T,
    dt: T,
    b0: T,
    a1: T,
    a2: T,
    s1: T,
    s2: T,
}

impl<T: Real> BandPass<T> {
    /// Panics unless `center`, `q` and `dt` are positive and `center` lies below Nyquist.
    pub fn new(center: T, q: T, dt: T) -> Self {
        assert!(center > T::zero() && q > T::zero() && dt > T::zero());
        assert!(center * dt < T::PI(), "band-pass center above Nyquist");
        let k = prewarp(center, dt);
        let bw = center / q;
        let w2 = center * center;
        let a0 = k * k + bw * k + w2;
        Self {
            center,
            q,
            dt,
            b0: bw * k / a0,
            a1: lit::<T>(2.0) * (w2 - k * k) / a0,
            a2: (k * k - bw * k + w2) / a0,
            s1: T::zero(),
            s2: T::zero(),
        }
    }

    pub fn center(&self) -> T {
        self.center
    }

    pub fn q(&self) -> T {
        self.q
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// `(b, a)` with `b = [b0, 0, -b0]` and `a = [1, a1, a2]`.
    pub fn coefficients(&self) -> ([T; 3], [T; 3]) {
        ([self.b0, T::zero(), -self.b0], [T::one(), self.a1, self.a2])
    }

    pub fn step(&mut self, x: T) -> T {
        let y = self.b0 * x + self.s1;
        self.s1 = -self.a1 * y + self.s2;
        self.s2 = -self.b0 * x - self.a2 * y;
        y
    }

    pub fn reset(&mut self) {
        self.s1 = T::zero();
        self.s2 = T::zero();
    }

    /// Sets the state to the steady state for a constant input `x` (zero output).
    pub fn prime(&mut self, x: T) {
        self.s1 = -self.b0 * x;
        self.s2 = -self.b0 * x;
    }

    /// Response of the discrete filter at angular frequency `w` [rad/s].
    pub fn frequency_response(&self, w: T) -> Complex<T> {
        let (s, c) = (-w * self.dt).sin_cos();
        let z1 = Complex::new(c, s);
        let z2 = z1 * z1;
        let one = Complex::new(T::one(), T::zero());
        let num = (one - z2) * self.b0;
        let den = one + z1 * self.a1 + z2 * self.a2;
        num / den
    }
}

/// Magnitude of the continuous band-pass at `w`.
pub fn bandpass_analytic_gain<T: Real>(center: T, q: T, w: T) -> T {
    let bw = center / q;
    let re = center * center - w * w;
    let im = bw * w;
    im / (re * re + im * im).sqrt()
}

/// First-order low-pass `wc / (s + wc)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowPass<T: Real> {
    cutoff: T,
    dt: T,
    b: T,
    a: T,
    x_prev: T,
    y: T,
}

impl<T: Real> LowPass<T> {
    pub fn new(cutoff: T, dt: T) -> Self {
        assert!(cutoff > T::zero() && dt > T::zero());
        assert!(cutoff * dt < T::PI(), "low-pass cutoff above Nyquist");
        let k = prewarp(cutoff, dt);
        Self { cutoff, dt, b: cutoff / (k + cutoff), a: (cutoff - k) / (k + cutoff), x_prev: T::zero(), y: T::zero() }
    }

    pub fn cutoff(&self) -> T {
        self.cutoff
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn step(&mut self, x: T) -> T {
        self.y = self.b * (x + self.x_prev) - self.a * self.y;
        self.x_prev = x;
        self.y
    }

    pub fn output(&self) -> T {
        self.y
    }

    pub fn reset(&mut self) {
        self.prime(T::zero());
    }

    /// Sets the state to the steady state for a constant input `x`.
    pub fn prime(&mut self, x: T) {
        self.x_prev = x;
        self.y = x;
    }

    pub fn frequency_response(&self, w: T) -> Complex<T> {
        let (s, c) = (-w * self.dt).sin_cos();
        let z1 = Complex::new(c, s);
        let one = Complex::new(T::one(), T::zero());
        (one + z1) * self.b / (one + z1 * self.a)
    }
}
