//! Reference-frame and sequence transformations shared by every model.
//!
//! Conventions used throughout the crate:
//!
//! * Park is amplitude invariant with the q-axis leading: a balanced set
//!   `a = V cos(θ + φ)` maps to `q = V cos φ`, `d = -V sin φ`, so a
//!   synchronized frame gives `q = V`, `d = 0`.
//! * A peak phasor `X` seen from a frame at angle `θ` satisfies
//!   `q - j d = X e^{-jθ}` (positive sequence). With this choice
//!   `S = 1.5 V I*` gives `P = 1.5 (v_q i_q + v_d i_d)` and
//!   `Q = 1.5 (v_q i_d - v_d i_q)`, so positive `i_d` injects reactive power.
//! * Negative-sequence quantities are read in the frame at `-θ`.

use std::collections::VecDeque;
use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;

const TWO_PI_3: f64 = 2.0 * PI / 3.0;

/// Instantaneous three-phase values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThreePhaseSample {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub t: f64,
}

impl ThreePhaseSample {
    pub fn new(a: f64, b: f64, c: f64, t: f64) -> Self {
        Self { a, b, c, t }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sequence {
    #[default]
    Positive,
    Negative,
}

/// A pair of rotating-frame quantities together with the angle that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DqSample {
    pub q: f64,
    pub d: f64,
    pub sequence: Sequence,
    pub theta_ref: f64,
}

impl DqSample {
    pub fn new(q: f64, d: f64, sequence: Sequence, theta_ref: f64) -> Self {
        Self {
            q,
            d,
            sequence,
            theta_ref,
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.q.hypot(self.d)
    }

    /// Complex form `q - j d`.
    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.q, -self.d)
    }
}

/// Per-phase complex peak phasors at nominal frequency.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplexPhasorSet {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
}

impl ComplexPhasorSet {
    pub fn new(a: Complex64, b: Complex64, c: Complex64) -> Self {
        Self { a, b, c }
    }

    pub fn from_array(x: [Complex64; 3]) -> Self {
        Self::new(x[0], x[1], x[2])
    }

    pub fn as_array(&self) -> [Complex64; 3] {
        [self.a, self.b, self.c]
    }

    /// Balanced positive-sequence set with phase-a phasor `x`.
    pub fn balanced(x: Complex64) -> Self {
        let a = Complex64::from_polar(1.0, TWO_PI_3);
        Self::new(x, x * a * a, x * a)
    }

    /// Instantaneous waveform `Re(X e^{jωt})` per phase.
    pub fn instantaneous(&self, omega: f64, t: f64) -> ThreePhaseSample {
        let rot = Complex64::from_polar(1.0, omega * t);
        ThreePhaseSample::new((self.a * rot).re, (self.b * rot).re, (self.c * rot).re, t)
    }
}

/// Per-unit base. `v_base` is line-to-line RMS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerUnitBase {
    pub s_base: f64,
    pub v_base: f64,
    pub f_nom: f64,
}

impl PerUnitBase {
    pub fn new(s_base: f64, v_base: f64, f_nom: f64) -> Self {
        assert!(s_base > 0.0 && v_base > 0.0 && f_nom > 0.0, "per-unit base must be positive");
        Self {
            s_base,
            v_base,
            f_nom,
        }
    }

    pub fn z_base(&self) -> f64 {
        self.v_base * self.v_base / self.s_base
    }

    /// Peak phase-to-ground voltage.
    pub fn v_pk(&self) -> f64 {
        self.v_base * SQRT_2 / 3f64.sqrt()
    }

    /// Peak phase current consistent with `S = 1.5 V_pk I_pk`.
    pub fn i_pk(&self) -> f64 {
        self.s_base / (1.5 * self.v_pk())
    }

    pub fn omega_nom(&self) -> f64 {
        2.0 * PI * self.f_nom
    }
}

/// Amplitude-invariant Clarke transform to the complex stationary frame `α + jβ`.
pub fn clarke(abc: &ThreePhaseSample) -> Complex64 {
    let alpha = (2.0 * abc.a - abc.b - abc.c) / 3.0;
    let beta = (abc.b - abc.c) / 3f64.sqrt();
    Complex64::new(alpha, beta)
}

/// Inverse Clarke, assuming zero homopolar component.
pub fn inverse_clarke(ab: Complex64, t: f64) -> ThreePhaseSample {
    let s3 = 3f64.sqrt();
    ThreePhaseSample::new(
        ab.re,
        -0.5 * ab.re + 0.5 * s3 * ab.im,
        -0.5 * ab.re - 0.5 * s3 * ab.im,
        t,
    )
}

fn zero_sequence(abc: &ThreePhaseSample) -> f64 {
    (abc.a + abc.b + abc.c) / 3.0
}

/// Park transform of a stationary-frame vector.
pub fn rotate_to_dq(ab: Complex64, theta: f64, sequence: Sequence) -> DqSample {
    let angle = match sequence {
        Sequence::Positive => theta,
        Sequence::Negative => -theta,
    };
    let z = ab * Complex64::from_polar(1.0, -angle);
    DqSample::new(z.re, -z.im, sequence, theta)
}

/// Stationary-frame vector of a rotating-frame quantity.
pub fn rotate_from_dq(dq: &DqSample, theta: f64) -> Complex64 {
    let angle = match dq.sequence {
        Sequence::Positive => theta,
        Sequence::Negative => -theta,
    };
    dq.as_complex() * Complex64::from_polar(1.0, angle)
}

/// Park transform (positive-sequence frame at `theta`).
pub fn park(abc: &ThreePhaseSample, theta: f64) -> DqSample {
    rotate_to_dq(clarke(abc), theta, Sequence::Positive)
}

/// Park transform with explicit sequence frame.
pub fn park_seq(abc: &ThreePhaseSample, theta: f64, sequence: Sequence) -> DqSample {
    rotate_to_dq(clarke(abc), theta, sequence)
}

/// Inverse of [`park`]; the homopolar part, which Park discards, is returned as zero.
pub fn inverse_park(dq: &DqSample, theta: f64) -> ThreePhaseSample {
    inverse_clarke(rotate_from_dq(dq, theta), 0.0)
}

/// Park transform that also returns the homopolar component so the
/// transform can be inverted exactly.
pub fn park_with_zero(abc: &ThreePhaseSample, theta: f64) -> (DqSample, f64) {
    (park(abc, theta), zero_sequence(abc))
}

pub fn inverse_park_with_zero(dq: &DqSample, zero: f64, theta: f64, t: f64) -> ThreePhaseSample {
    let mut out = inverse_park(dq, theta);
    out.a += zero;
    out.b += zero;
    out.c += zero;
    out.t = t;
    out
}

fn alpha_op() -> Complex64 {
    Complex64::from_polar(1.0, TWO_PI_3)
}

/// Symmetrical components `(positive, negative, zero)` of a phasor set.
pub fn fortescue(set: &ComplexPhasorSet) -> (Complex64, Complex64, Complex64) {
    let a = alpha_op();
    let a2 = a * a;
    let pos = (set.a + a * set.b + a2 * set.c) / 3.0;
    let neg = (set.a + a2 * set.b + a * set.c) / 3.0;
    let zero = (set.a + set.b + set.c) / 3.0;
    (pos, neg, zero)
}

pub fn inverse_fortescue(pos: Complex64, neg: Complex64, zero: Complex64) -> ComplexPhasorSet {
    let a = alpha_op();
    let a2 = a * a;
    ComplexPhasorSet::new(
        zero + pos + neg,
        zero + a2 * pos + a * neg,
        zero + a * pos + a2 * neg,
    )
}

/// Rotating-frame view of a sequence phasor (phase-a reference).
///
/// The negative-sequence phasor `X2` of a set rotating at `+ω` behaves in
/// time like `conj(X2)` rotating at `-ω`, which is why it is conjugated
/// before being referred to the `-θ` frame.
pub fn phasor_to_dq(x: Complex64, theta: f64, sequence: Sequence) -> DqSample {
    let z = match sequence {
        Sequence::Positive => x * Complex64::from_polar(1.0, -theta),
        Sequence::Negative => x.conj() * Complex64::from_polar(1.0, theta),
    };
    DqSample::new(z.re, -z.im, sequence, theta)
}

pub fn dq_to_phasor(dq: &DqSample, theta: f64) -> Complex64 {
    let z = dq.as_complex();
    match dq.sequence {
        Sequence::Positive => z * Complex64::from_polar(1.0, theta),
        Sequence::Negative => (z * Complex64::from_polar(1.0, -theta)).conj(),
    }
}

/// `P = 1.5 (v_q i_q + v_d i_d)`, `Q = 1.5 (v_q i_d - v_d i_q)` for peak quantities.
pub fn power_qd(v: &DqSample, i: &DqSample) -> (f64, f64) {
    debug_assert_eq!(v.sequence, i.sequence);
    (
        1.5 * (v.q * i.q + v.d * i.d),
        1.5 * (v.q * i.d - v.d * i.q),
    )
}

/// Wrap an angle to `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut x = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if x >= PI {
        x -= 2.0 * PI;
    }
    x
}

/// Delayed signal cancellation on the stationary frame.
///
/// The history buffer stores one complex `αβ` sample per call to [`Dsc::push`].
/// The quarter-period delayed value is linearly interpolated between stored
/// samples; until enough history exists the raw input is reported as positive
/// sequence.
#[derive(Debug, Clone)]
pub struct Dsc {
    delay: f64,
    dt: f64,
    history: VecDeque<Complex64>,
    capacity: usize,
}

impl Dsc {
    pub fn new(f_nom: f64, dt: f64) -> Self {
        assert!(dt > 0.0 && f_nom > 0.0);
        let delay = 0.25 / f_nom;
        let capacity = (delay / dt).floor() as usize + 2;
        Self {
            delay,
            dt,
            history: VecDeque::with_capacity(capacity + 1),
            capacity,
        }
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn is_primed(&self) -> bool {
        self.history.len() >= self.capacity
    }

    /// Fill the history with a steady sinusoidal past: `x(t) = pos e^{jωt} + neg e^{-jωt}`.
    pub fn prefill(&mut self, pos: Complex64, neg: Complex64, omega: f64, t_now: f64) {
        self.history.clear();
        for k in (1..=self.capacity).rev() {
            let t = t_now - k as f64 * self.dt;
            self.history.push_back(
                pos * Complex64::from_polar(1.0, omega * t) + neg * Complex64::from_polar(1.0, -omega * t),
            );
        }
        while self.history.len() > self.capacity {
            self.history.pop_front();
        }
    }

    fn delayed(&self) -> Complex64 {
        // history.back() is the newest sample (delay 0).
        let steps = self.delay / self.dt;
        let m = steps.floor() as usize;
        let frac = steps - m as f64;
        let n = self.history.len();
        let x0 = self.history[n - 1 - m];
        if frac <= 1e-12 {
            return x0;
        }
        let x1 = self.history[n - 2 - m];
        x0 * (1.0 - frac) + x1 * frac
    }

    /// Push the newest sample and return `(positive, negative)` stationary-frame parts.
    pub fn push(&mut self, x: Complex64) -> (Complex64, Complex64) {
        self.history.push_back(x);
        while self.history.len() > self.capacity {
            self.history.pop_front();
        }
        if !self.is_primed() {
            return (x, Complex64::new(0.0, 0.0));
        }
        let xd = self.delayed();
        let j = Complex64::new(0.0, 1.0);
        (0.5 * (x + j * xd), 0.5 * (x - j * xd))
    }
}

/// Extract positive and negative sequence from an `αβ` history at time `t`.
pub fn dsc_extract(dsc: &mut Dsc, alpha_beta: Complex64) -> (Complex64, Complex64) {
    dsc.push(alpha_beta)
}
