//! Fixed-step forward-Euler integration, discrete control blocks and the event scheduler.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Default bound on any per-unit state before a run is declared divergent.
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e9;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub values: Vec<f64>,
    pub labels: Vec<String>,
    pub t: f64,
}

impl StateVector {
    pub fn new(values: Vec<f64>, labels: Vec<String>, t: f64) -> Self {
        assert_eq!(values.len(), labels.len(), "one label per state");
        Self { values, labels, t }
    }

    pub fn unlabeled(values: Vec<f64>, t: f64) -> Self {
        let labels = (0..values.len()).map(|k| format!("x{k}")).collect();
        Self::new(values, labels, t)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Return an error if any value is non-finite or exceeds `bound` in magnitude.
pub fn check_bounded(values: &[f64], bound: f64, t: f64, dt: f64, what: &str) -> Result<()> {
    if let Some(k) = values.iter().position(|v| !v.is_finite() || v.abs() > bound) {
        return Err(SimError::NumericalDivergence {
            t,
            dt,
            detail: format!("{what}[{k}] = {}", values[k]),
        });
    }
    Ok(())
}

/// One forward-Euler step `x' = x + dt f(x, t)`.
pub fn euler_step<F>(f: F, x: &StateVector, dt: f64, bound: f64) -> Result<StateVector>
where
    F: Fn(&[f64], f64) -> Vec<f64>,
{
    assert!(dt > 0.0, "dt must be positive");
    let dx = f(&x.values, x.t);
    debug_assert_eq!(dx.len(), x.len());
    let values: Vec<f64> = x.values.iter().zip(&dx).map(|(v, d)| v + dt * d).collect();
    check_bounded(&values, bound, x.t + dt, dt, "state")?;
    Ok(StateVector {
        values,
        labels: x.labels.clone(),
        t: x.t + dt,
    })
}

/// PI controller `k_p (1 + 1/(τ_i s))` discretized with forward Euler.
///
/// The integrator state holds the integral contribution to the output and is
/// frozen whenever the output is saturated.
#[derive(Debug, Clone, PartialEq)]
pub struct PiBlock {
    pub k_p: f64,
    pub tau_i: f64,
    pub state: f64,
    pub out_min: Option<f64>,
    pub out_max: Option<f64>,
    pub anti_windup: bool,
}

impl PiBlock {
    pub fn new(k_p: f64, tau_i: f64) -> Self {
        assert!(tau_i > 0.0, "tau_i must be positive");
        Self {
            k_p,
            tau_i,
            state: 0.0,
            out_min: None,
            out_max: None,
            anti_windup: true,
        }
    }

    pub fn with_limits(mut self, out_min: f64, out_max: f64) -> Self {
        self.out_min = Some(out_min);
        self.out_max = Some(out_max);
        self
    }

    fn clamp(&self, y: f64) -> (f64, bool) {
        let mut out = y;
        if let Some(lo) = self.out_min {
            out = out.max(lo);
        }
        if let Some(hi) = self.out_max {
            out = out.min(hi);
        }
        (out, out != y)
    }

    /// Unsaturated output for `error` without advancing the state.
    pub fn raw_output(&self, error: f64) -> f64 {
        self.k_p * error + self.state
    }

    /// Advance the integrator unless `freeze` is set.
    pub fn advance(&mut self, error: f64, dt: f64, freeze: bool) {
        if !(freeze && self.anti_windup) {
            self.state += self.k_p / self.tau_i * error * dt;
        }
    }

    /// Output for `error`, then advance the state (frozen while saturated).
    pub fn step(&mut self, error: f64, dt: f64) -> f64 {
        assert!(dt > 0.0, "dt must be positive");
        let (out, saturated) = self.clamp(self.raw_output(error));
        self.advance(error, dt, saturated);
        out
    }

    /// Set the integrator so that the output equals `output` at zero error.
    pub fn preset(&mut self, output: f64) {
        self.state = output;
    }
}

/// Free-function form of [`PiBlock::step`].
pub fn pi_step(block: &mut PiBlock, error: f64, dt: f64) -> f64 {
    block.step(error, dt)
}

/// First-order lag `1/(1 + τ s)` discretized with forward Euler.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderLag {
    pub tau: f64,
    pub state: f64,
}

impl FirstOrderLag {
    pub fn new(tau: f64, initial: f64) -> Self {
        assert!(tau > 0.0, "tau must be positive");
        Self {
            tau,
            state: initial,
        }
    }

    /// Output at the start of the step, then advance toward `u`.
    ///
    /// Returns `NumericalDivergence` when `dt ≥ 2τ`, the explicit-Euler stability bound.
    pub fn step(&mut self, u: f64, dt: f64) -> Result<f64> {
        if dt >= 2.0 * self.tau {
            return Err(SimError::NumericalDivergence {
                t: f64::NAN,
                dt,
                detail: format!("lag with tau = {} s is unstable for dt = {dt} s", self.tau),
            });
        }
        let y = self.state;
        self.state += dt / self.tau * (u - self.state);
        Ok(y)
    }

    /// Advance without the stability check; used where divergence is detected downstream.
    pub fn step_unchecked(&mut self, u: f64, dt: f64) -> f64 {
        let y = self.state;
        self.state += dt / self.tau * (u - self.state);
        y
    }

    pub fn output(&self) -> f64 {
        self.state
    }
}

pub fn lag_step(block: &mut FirstOrderLag, u: f64, dt: f64) -> Result<f64> {
    block.step(u, dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum EventAction {
    ApplyFault { fault: String },
    ClearFault { fault: String },
    OpenBreakerPhase { breaker: String, phases: [bool; 3] },
    ConnectLoad { load: String },
    DisconnectSource { source: String },
    SetSetpoint {
        vsc: String,
        #[serde(default)]
        p_mw: Option<f64>,
        #[serde(default)]
        q_mvar: Option<f64>,
    },
    EnableHarmonics { source: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    #[serde(flatten)]
    pub action: EventAction,
}

/// Anything events can be applied to.
pub trait EventTarget {
    fn apply_event(&mut self, action: &EventAction, t: f64) -> Result<()>;
}

/// Time-ordered event list. Each event fires once, on the first step with `t ≥ t_event`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventSchedule {
    events: Vec<Event>,
    next: usize,
}

impl EventSchedule {
    /// Events are stably sorted, so equal timestamps keep their given order.
    pub fn new(mut events: Vec<Event>) -> Self {
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Self { events, next: 0 }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn reset(&mut self) {
        self.next = 0;
    }

    /// Events due at `t` that have not yet fired, marking them as fired.
    pub fn due(&mut self, t: f64) -> Vec<Event> {
        let mut out = Vec::new();
        // relative slack so that k*dt landing a hair below an event time still fires
        let slack = 1e-9 * t.abs().max(1.0);
        while self.next < self.events.len() && t + slack >= self.events[self.next].t {
            out.push(self.events[self.next].clone());
            self.next += 1;
        }
        out
    }

    pub fn is_exhausted(&self) -> bool {
        self.next >= self.events.len()
    }
}

/// Apply every due action to `target`; returns the actions applied.
pub fn run_events<T: EventTarget>(schedule: &mut EventSchedule, t: f64, target: &mut T) -> Result<Vec<EventAction>> {
    let due = schedule.due(t);
    let mut applied = Vec::with_capacity(due.len());
    for ev in due {
        target.apply_event(&ev.action, t)?;
        applied.push(ev.action);
    }
    Ok(applied)
}
