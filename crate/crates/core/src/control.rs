//! Per-converter discrete-time control.
//!
//! Each converter runs a cascaded pair of PI loops at the switching rate: the
//! outer loop tracks a droop-shaped voltage reference and emits a current
//! reference, the inner loop tracks inductor current and emits the duty
//! ratio. On top of that sit three slower mechanisms:
//!
//! * a secondary restoration PI that lifts the droop reference to cancel the
//!   steady-state bus deviation, clamped to 10% of the nominal reference;
//! * the adaptive droop-gain update, which walks each gain in fixed steps of
//!   `delta` until the converter's output current sits within `gamma` of its
//!   share `K_j * I_ave` of the communicated average;
//! * current-limit supervision, which pins the current reference at the
//!   nominal rating whenever a measured current exceeds it and releases it
//!   again only after the inductor current has stayed below 95% of the
//!   rating for ten consecutive supervision periods.

use crate::{real, CoreError, Real};

/// Discrete PI regulator with clamping anti-windup.
#[derive(Debug, Clone, PartialEq)]
pub struct Pi<T> {
    pub kp: T,
    /// Integral gain [1/s].
    pub ki: T,
    pub out_min: T,
    pub out_max: T,
    pub integrator: T,
}

impl<T: Real> Pi<T> {
    pub fn new(kp: T, ki: T, out_min: T, out_max: T) -> Result<Self, CoreError> {
        for (name, v) in [
            ("kp", kp),
            ("ki", ki),
            ("out_min", out_min),
            ("out_max", out_max),
        ] {
            if !v.is_finite() {
                return Err(CoreError::NonFinite { what: name.into() });
            }
        }
        if kp < T::zero() || ki < T::zero() {
            return Err(CoreError::InvalidInput(
                "PI gains must be non-negative".into(),
            ));
        }
        if out_min >= out_max {
            return Err(CoreError::InvalidInput(format!(
                "PI output limits [{out_min}, {out_max}] must satisfy min < max"
            )));
        }
        Ok(Self {
            kp,
            ki,
            out_min,
            out_max,
            integrator: T::zero(),
        })
    }

    /// Advances the integrator by one step and returns the limited output.
    /// The integrator is clamped so the output never leaves the limits and
    /// cannot wind up while the output is saturated.
    pub fn update(&mut self, error: T, dt: T) -> T {
        debug_assert!(dt > T::zero(), "PI step requires dt > 0");
        let p = self.kp * error;
        let integ = self.integrator + self.ki * error * dt;
        self.integrator = integ.max(self.out_min - p).min(self.out_max - p);
        // p + (out_max - p) can exceed out_max by one ulp when p is large,
        // so the sum is clamped again before it reaches the plant.
        (p + self.integrator).max(self.out_min).min(self.out_max)
    }

    /// Seeds the integrator so the next zero-error update returns `output`.
    /// Used for equilibrium starts and bumpless mode transfers.
    pub fn preload(&mut self, output: T) {
        self.integrator = output.max(self.out_min).min(self.out_max);
    }
}

/// Droop-shaped voltage reference `v_ref_star - r_d * i_out + correction`.
pub fn droop_reference<T: Real>(v_ref_star: T, r_d: T, i_out: T, correction: T) -> T {
    debug_assert!(r_d >= T::zero(), "droop gain must be non-negative");
    v_ref_star - r_d * i_out + correction
}

/// Settings of the adaptive droop-gain update for one converter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveDroopConfig<T> {
    /// Initial droop resistance [ohm]; also the baseline the accumulated
    /// correction is measured against.
    pub r_d_init: T,
    /// Gain step applied per update when outside the band [ohm].
    pub delta: T,
    /// Convergence band around the current target [A].
    pub gamma: T,
    /// Proportional load factor K_j; 1 means an equal share of the average.
    pub load_factor: T,
    /// Seconds between gain updates.
    pub update_period: T,
    /// Gain updates pause while the terminal voltage is outside this band [V].
    pub v_min: T,
    pub v_max: T,
    /// Upper bound on the droop gain [ohm]; the lower bound is zero.
    pub r_d_max: T,
}

impl<T: Real> AdaptiveDroopConfig<T> {
    /// Defaults sized for a converter regulating `v_ref_star`.
    pub fn default_for(v_ref_star: T) -> Self {
        Self {
            r_d_init: real(0.5),
            delta: real(0.02),
            gamma: real(0.05),
            load_factor: T::one(),
            update_period: real(1e-3),
            v_min: real::<T>(0.9) * v_ref_star,
            v_max: real::<T>(1.1) * v_ref_star,
            r_d_max: real(10.0),
        }
    }

    pub fn validate(&self, v_ref_star: T) -> Result<(), CoreError> {
        for (name, v) in [
            ("delta", self.delta),
            ("gamma", self.gamma),
            ("load_factor", self.load_factor),
            ("update_period", self.update_period),
        ] {
            if !v.is_finite() || v <= T::zero() {
                return Err(CoreError::NonPositive {
                    name: name.into(),
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        if !self.r_d_init.is_finite() || self.r_d_init < T::zero() {
            return Err(CoreError::InvalidInput(format!(
                "initial droop gain {} must be non-negative",
                self.r_d_init
            )));
        }
        if !self.r_d_max.is_finite() || self.r_d_max <= self.r_d_init {
            return Err(CoreError::InvalidInput(format!(
                "droop gain ceiling {} must exceed the initial gain {}",
                self.r_d_max, self.r_d_init
            )));
        }
        if !(self.v_min.is_finite() && self.v_max.is_finite())
            || self.v_min >= v_ref_star
            || self.v_max <= v_ref_star
        {
            return Err(CoreError::InvalidScenario(format!(
                "voltage guard band [{}, {}] must bracket the reference {}",
                self.v_min, self.v_max, v_ref_star
            )));
        }
        Ok(())
    }
}

/// Loop mode of one converter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    /// Cascaded voltage/current loops track the droop reference.
    Droop,
    /// Outer loop bypassed; the inductor current is regulated at the
    /// nominal rating until supervision releases the limit.
    CurrentLimit,
}

impl ControlMode {
    /// Numeric trace encoding: 0 droop, 1 current limit.
    pub fn as_index(self) -> u8 {
        match self {
            ControlMode::Droop => 0,
            ControlMode::CurrentLimit => 1,
        }
    }
}

/// Mutable state of the adaptive droop machine.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveDroopState<T> {
    /// Accumulated correction relative to the initial gain [ohm].
    pub r_d_old: T,
    /// Effective droop gain in use [ohm].
    pub r_d: T,
    pub mode: ControlMode,
    /// True when the last update saw this converter inside the gamma band.
    pub converged: bool,
    /// Latched when an update was skipped over non-finite measurements.
    pub fault: bool,
}

impl<T: Real> AdaptiveDroopState<T> {
    pub fn new(cfg: &AdaptiveDroopConfig<T>) -> Self {
        Self {
            r_d_old: T::zero(),
            r_d: cfg.r_d_init,
            mode: ControlMode::Droop,
            converged: false,
            fault: false,
        }
    }
}

/// One adaptive droop-gain update for one converter.
///
/// Branch order: an output current above the rating stops the algorithm and
/// enters the current limit; inside the band the gain holds and the state is
/// marked converged; outside the voltage guard the gain update is paused for
/// this period; otherwise the gain moves one `delta` toward shedding (excess
/// current) or attracting (deficit) load, clamped to `[0, r_d_max]`.
pub fn adaptive_droop_update<T: Real>(
    cfg: &AdaptiveDroopConfig<T>,
    state: &AdaptiveDroopState<T>,
    i_j: T,
    i_ave: T,
    v_terminal: T,
    i_nom: T,
) -> AdaptiveDroopState<T> {
    let mut next = state.clone();
    if !(i_j.is_finite() && i_ave.is_finite() && v_terminal.is_finite()) {
        next.fault = true;
        return next;
    }
    let err = i_j - cfg.load_factor * i_ave;
    next.converged = err.abs() < cfg.gamma;
    if i_j > i_nom {
        next.mode = ControlMode::CurrentLimit;
        return next;
    }
    if next.converged || v_terminal < cfg.v_min || v_terminal > cfg.v_max {
        return next;
    }
    if err > cfg.gamma {
        next.r_d = (cfg.r_d_init + next.r_d_old + cfg.delta)
            .max(T::zero())
            .min(cfg.r_d_max);
        next.r_d_old = next.r_d - cfg.r_d_init;
    } else if err < -cfg.gamma {
        next.r_d = (cfg.r_d_init + next.r_d_old - cfg.delta)
            .max(T::zero())
            .min(cfg.r_d_max);
        next.r_d_old = next.r_d - cfg.r_d_init;
    }
    next
}

/// Secondary restoration PI: integrates the bus-voltage error into a
/// reference correction bounded to 10% of the nominal reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondaryControl<T> {
    pi: Pi<T>,
    correction: T,
}

impl<T: Real> SecondaryControl<T> {
    pub fn new(kp: T, ki: T, v_ref_star: T) -> Result<Self, CoreError> {
        let bound = real::<T>(0.1) * v_ref_star;
        Ok(Self {
            pi: Pi::new(kp, ki, -bound, bound)?,
            correction: T::zero(),
        })
    }

    pub fn step(&mut self, v_bus: T, v_bus_ref: T, dt: T) -> T {
        self.correction = self.pi.update(v_bus_ref - v_bus, dt);
        self.correction
    }

    pub fn correction(&self) -> T {
        self.correction
    }

    pub fn preload(&mut self, correction: T) {
        self.pi.preload(correction);
        self.correction = self.pi.integrator;
    }
}

/// Loop gains for one converter.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains<T> {
    pub voltage_kp: T,
    pub voltage_ki: T,
    pub current_kp: T,
    pub current_ki: T,
    pub secondary_kp: T,
    pub secondary_ki: T,
}

impl<T: Real> ControllerGains<T> {
    /// Standard bandwidth-based tuning: inner current loop at a tenth of the
    /// switching frequency, outer voltage loop a decade below that, secondary
    /// restoration a further decade down. Each integral gain places the zero
    /// a decade below the loop crossover.
    pub fn from_bandwidth(params: &crate::circuit::ConverterParams<T>) -> Self {
        let two_pi = real::<T>(std::f64::consts::TAU);
        let ten = real::<T>(10.0);
        let w_i = two_pi * params.f_sw / ten;
        let current_kp = w_i * params.inductance / params.v_in;
        let w_v = w_i / ten;
        let voltage_kp = w_v * params.capacitance;
        Self {
            voltage_kp,
            voltage_ki: voltage_kp * w_v / ten,
            current_kp,
            current_ki: current_kp * w_i / ten,
            secondary_kp: real(0.2),
            secondary_ki: real(157.0),
        }
    }
}

/// Measurements consumed by one controller step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurements<T> {
    /// Capacitor voltage at the converter output [V].
    pub v_terminal: T,
    /// Current delivered into the cable [A].
    pub i_out: T,
    /// Inductor current [A].
    pub i_l: T,
    /// Common bus voltage [V].
    pub v_bus: T,
}

/// Complete controller for one converter: cascaded loops, droop shaping,
/// optional secondary restoration, adaptive gain state, and current-limit
/// supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverterController<T> {
    pub v_ref_star: T,
    i_nom: T,
    voltage_pi: Pi<T>,
    current_pi: Pi<T>,
    secondary: Option<SecondaryControl<T>>,
    cfg: AdaptiveDroopConfig<T>,
    state: AdaptiveDroopState<T>,
    droop_enabled: bool,
    adaptive_enabled: bool,
    limit_exit_count: u32,
}

/// Supervision periods the inductor current must spend below 95% of the
/// rating before the current limit releases.
const LIMIT_EXIT_PERIODS: u32 = 10;

impl<T: Real> ConverterController<T> {
    pub fn new(
        params: &crate::circuit::ConverterParams<T>,
        gains: &ControllerGains<T>,
        cfg: AdaptiveDroopConfig<T>,
        secondary_enabled: bool,
    ) -> Result<Self, CoreError> {
        params.validate()?;
        cfg.validate(params.v_ref)?;
        let i_nom = params.i_nom();
        let two = real::<T>(2.0);
        let voltage_pi = Pi::new(
            gains.voltage_kp,
            gains.voltage_ki,
            -two * i_nom,
            two * i_nom,
        )?;
        let current_pi = Pi::new(gains.current_kp, gains.current_ki, T::zero(), T::one())?;
        let secondary = if secondary_enabled {
            Some(SecondaryControl::new(
                gains.secondary_kp,
                gains.secondary_ki,
                params.v_ref,
            )?)
        } else {
            None
        };
        let state = AdaptiveDroopState::new(&cfg);
        Ok(Self {
            v_ref_star: params.v_ref,
            i_nom,
            voltage_pi,
            current_pi,
            secondary,
            cfg,
            state,
            droop_enabled: true,
            adaptive_enabled: false,
            limit_exit_count: 0,
        })
    }

    /// One control period: secondary restoration, droop reference, cascaded
    /// loops. Returns the duty ratio, always in [0, 1].
    pub fn step(&mut self, m: &Measurements<T>, dt: T) -> T {
        debug_assert!(
            m.v_terminal.is_finite()
                && m.i_out.is_finite()
                && m.i_l.is_finite()
                && m.v_bus.is_finite(),
            "controller measurements must be finite"
        );
        let correction = match self.secondary.as_mut() {
            Some(s) => s.step(m.v_bus, self.v_ref_star, dt),
            None => T::zero(),
        };
        let i_ref = match self.state.mode {
            ControlMode::Droop => {
                let v_ref = droop_reference(self.v_ref_star, self.r_d(), m.i_out, correction);
                self.voltage_pi.update(v_ref - m.v_terminal, dt)
            }
            ControlMode::CurrentLimit => self.i_nom,
        };
        self.current_pi.update(i_ref - m.i_l, dt)
    }

    /// Supervision and gain-adaptation tick, run once per update period.
    ///
    /// Current-limit entry and exit run regardless of whether gain adaptation
    /// is active: any measured current above the rating forces the limit by
    /// the next step. The gain update itself runs only when activated, and
    /// never while current-limited.
    pub fn update_tick(&mut self, i_out: T, i_ave: T, v_terminal: T, i_l: T) {
        if i_l > self.i_nom || i_out > self.i_nom {
            self.state.mode = ControlMode::CurrentLimit;
            self.limit_exit_count = 0;
        } else if self.state.mode == ControlMode::CurrentLimit {
            if i_l < real::<T>(0.95) * self.i_nom {
                self.limit_exit_count += 1;
                if self.limit_exit_count >= LIMIT_EXIT_PERIODS {
                    self.state.mode = ControlMode::Droop;
                    self.limit_exit_count = 0;
                    self.voltage_pi.preload(i_l);
                }
            } else {
                self.limit_exit_count = 0;
            }
        }
        if self.adaptive_enabled && self.droop_enabled && self.state.mode == ControlMode::Droop {
            self.state =
                adaptive_droop_update(&self.cfg, &self.state, i_out, i_ave, v_terminal, self.i_nom);
        }
    }

    /// Effective droop gain: the adapted gain, or zero while droop is disabled.
    pub fn r_d(&self) -> T {
        if self.droop_enabled {
            self.state.r_d
        } else {
            T::zero()
        }
    }

    pub fn mode(&self) -> ControlMode {
        self.state.mode
    }

    pub fn converged(&self) -> bool {
        self.state.converged
    }

    pub fn state(&self) -> &AdaptiveDroopState<T> {
        &self.state
    }

    pub fn config(&self) -> &AdaptiveDroopConfig<T> {
        &self.cfg
    }

    pub fn correction(&self) -> T {
        self.secondary
            .as_ref()
            .map_or(T::zero(), SecondaryControl::correction)
    }

    pub fn i_nom(&self) -> T {
        self.i_nom
    }

    pub fn adaptive_enabled(&self) -> bool {
        self.adaptive_enabled
    }

    /// Turns the gain adaptation on (activation event).
    pub fn activate_adaptive(&mut self) {
        self.adaptive_enabled = true;
    }

    /// Enables or disables droop shaping. Disabling forces the effective gain
    /// to zero and freezes the adaptive state; re-enabling restores it.
    pub fn set_droop_enabled(&mut self, enabled: bool) {
        self.droop_enabled = enabled;
    }

    pub fn set_load_factor(&mut self, k: T) {
        self.cfg.load_factor = k;
    }

    /// Seeds loop states for an equilibrium start: voltage loop at the
    /// operating current, current loop at the operating duty, secondary at
    /// the given correction.
    pub fn preload(&mut self, i_l: T, duty: T, correction: T) {
        self.voltage_pi.preload(i_l);
        self.current_pi.preload(duty);
        if let Some(s) = self.secondary.as_mut() {
            s.preload(correction);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::ConverterParams;
    use approx::assert_relative_eq;

    fn params_100w() -> ConverterParams<f64> {
        ConverterParams {
            v_in: 60.0,
            v_ref: 36.0,
            p_rated: 100.0,
            inductance: 2e-3,
            capacitance: 100e-6,
            f_sw: 25e3,
        }
    }

    fn cfg() -> AdaptiveDroopConfig<f64> {
        AdaptiveDroopConfig::default_for(36.0)
    }

    #[test]
    fn pi_pure_proportional() {
        let mut pi = Pi::new(1.0, 0.0, -10.0, 10.0).unwrap();
        assert_relative_eq!(pi.update(2.0, 4e-5), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn pi_single_integration_step() {
        let mut pi = Pi::new(0.0, 10.0, -10.0, 10.0).unwrap();
        assert_relative_eq!(pi.update(1.0, 0.1), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn pi_integrator_does_not_wind_up_past_the_limit() {
        let mut pi = Pi::new(0.1, 1e4, 0.0, 1.0).unwrap();
        for _ in 0..1000 {
            assert_eq!(pi.update(5.0, 1e-3), 1.0);
        }
        assert!(pi.integrator <= 1.0);
        // One period at moderate negative error already pulls the output off
        // the rail; a wound-up integrator would stay pinned.
        assert!(pi.update(-0.2, 1e-3) < 1.0);
    }

    #[test]
    fn pi_rejects_bad_limits() {
        assert!(Pi::new(1.0, 1.0, 1.0, 1.0).is_err());
        assert!(Pi::new(-1.0, 1.0, 0.0, 1.0).is_err());
        assert!(Pi::new(1.0, f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn droop_reference_examples() {
        assert_relative_eq!(droop_reference(36.0, 0.0, 5.0, 0.0), 36.0);
        assert_relative_eq!(droop_reference(36.0, 0.5, 2.0, 0.0), 35.0);
        assert_relative_eq!(droop_reference(36.0, 0.5, 2.0, 0.4), 35.4);
    }

    #[test]
    fn adaptive_holds_inside_the_band() {
        let cfg = cfg();
        let st = AdaptiveDroopState::new(&cfg);
        let next = adaptive_droop_update(&cfg, &st, 2.52, 2.5, 36.0, 2.7778);
        assert!(next.converged);
        assert_eq!(next.r_d, st.r_d);
        assert_eq!(next.mode, ControlMode::Droop);
    }

    #[test]
    fn adaptive_steps_up_on_excess_current() {
        let cfg = AdaptiveDroopConfig {
            r_d_init: 0.5,
            delta: 0.05,
            ..cfg()
        };
        let st = AdaptiveDroopState {
            r_d_old: 0.2,
            r_d: 0.7,
            ..AdaptiveDroopState::new(&cfg)
        };
        let next = adaptive_droop_update(&cfg, &st, 3.0, 2.5, 36.0, 5.0);
        assert_relative_eq!(next.r_d, 0.75, epsilon = 1e-15);
        assert_relative_eq!(next.r_d_old, 0.25, epsilon = 1e-15);
        assert!(!next.converged);
    }

    #[test]
    fn adaptive_steps_down_on_current_deficit() {
        let cfg = cfg();
        let st = AdaptiveDroopState::new(&cfg);
        let next = adaptive_droop_update(&cfg, &st, 2.0, 2.5, 36.0, 2.7778);
        assert_relative_eq!(next.r_d, 0.48, epsilon = 1e-15);
        assert_relative_eq!(next.r_d_old, -0.02, epsilon = 1e-15);
    }

    #[test]
    fn adaptive_enters_current_limit_above_rating() {
        let cfg = cfg();
        let st = AdaptiveDroopState::new(&cfg);
        let next = adaptive_droop_update(&cfg, &st, 1.2 * 2.7778, 2.5, 36.0, 2.7778);
        assert_eq!(next.mode, ControlMode::CurrentLimit);
        assert_eq!(next.r_d, st.r_d);
    }

    #[test]
    fn adaptive_pauses_outside_the_voltage_guard() {
        let cfg = cfg();
        let st = AdaptiveDroopState::new(&cfg);
        for v in [0.85 * 36.0, 1.15 * 36.0] {
            let next = adaptive_droop_update(&cfg, &st, 2.0, 2.5, v, 2.7778);
            assert_eq!(next.r_d, st.r_d);
            assert!(!next.converged);
        }
    }

    #[test]
    fn adaptive_gain_clamps_at_zero_and_ceiling() {
        let cfg = AdaptiveDroopConfig {
            delta: 1.0,
            ..cfg()
        };
        let low = AdaptiveDroopState {
            r_d: 0.3,
            r_d_old: -0.2,
            ..AdaptiveDroopState::new(&cfg)
        };
        let next = adaptive_droop_update(&cfg, &low, 2.0, 2.5, 36.0, 2.7778);
        assert_eq!(next.r_d, 0.0);
        assert_relative_eq!(next.r_d_old, -0.5, epsilon = 1e-15);

        let high = AdaptiveDroopState {
            r_d: 9.8,
            r_d_old: 9.3,
            ..AdaptiveDroopState::new(&cfg)
        };
        let next = adaptive_droop_update(&cfg, &high, 2.6, 2.5, 36.0, 2.7778);
        assert_eq!(next.r_d, 10.0);
        assert_relative_eq!(next.r_d_old, 9.5, epsilon = 1e-15);
    }

    #[test]
    fn adaptive_flags_non_finite_measurements() {
        let cfg = cfg();
        let st = AdaptiveDroopState::new(&cfg);
        let next = adaptive_droop_update(&cfg, &st, f64::NAN, 2.5, 36.0, 2.7778);
        assert!(next.fault);
        assert_eq!(next.r_d, st.r_d);
        assert_eq!(next.converged, st.converged);
    }

    #[test]
    fn secondary_correction_clamps_at_ten_percent() {
        let mut s = SecondaryControl::new(0.2, 157.0, 36.0).unwrap();
        for _ in 0..10_000 {
            s.step(20.0, 36.0, 1e-3);
        }
        assert_relative_eq!(s.correction(), 3.6, epsilon = 1e-12);
        s.step(36.0, 36.0, 1e-3);
        assert!(s.correction() <= 3.6);
    }

    #[test]
    fn controller_duty_stays_in_unit_interval() {
        let p = params_100w();
        let gains = ControllerGains::from_bandwidth(&p);
        let mut c = ConverterController::new(&p, &gains, cfg(), true).unwrap();
        let dt = 4e-5;
        for k in 0..2000 {
            let swing = if k % 2 == 0 { 50.0 } else { -20.0 };
            let m = Measurements {
                v_terminal: swing,
                i_out: -swing / 10.0,
                i_l: swing / 5.0,
                v_bus: swing,
            };
            let d = c.step(&m, dt);
            assert!((0.0..=1.0).contains(&d), "duty {d} out of range");
        }
    }

    #[test]
    fn current_limit_pins_the_reference_at_the_rating() {
        let p = params_100w();
        let gains = ControllerGains::from_bandwidth(&p);
        let mut c = ConverterController::new(&p, &gains, cfg(), false).unwrap();
        let i_nom = c.i_nom();
        let m = Measurements {
            v_terminal: 36.0,
            i_out: 1.2 * i_nom,
            i_l: 1.2 * i_nom,
            v_bus: 35.0,
        };
        c.update_tick(m.i_out, m.i_out, m.v_terminal, m.i_l);
        assert_eq!(c.mode(), ControlMode::CurrentLimit);
        // A huge voltage error must not move the duty while limited: the
        // inner loop sees only (i_nom - i_l).
        let voltage_integrator_before = c.voltage_pi.integrator;
        let d1 = c.step(
            &Measurements {
                v_terminal: 10.0,
                ..m
            },
            4e-5,
        );
        assert_eq!(c.voltage_pi.integrator, voltage_integrator_before);
        let mut c2 = c.clone();
        let d2 = c2.step(
            &Measurements {
                v_terminal: 60.0,
                ..m
            },
            4e-5,
        );
        assert_eq!(d1, d2);
    }

    #[test]
    fn current_limit_releases_after_ten_quiet_periods() {
        let p = params_100w();
        let gains = ControllerGains::from_bandwidth(&p);
        let mut c = ConverterController::new(&p, &gains, cfg(), false).unwrap();
        let i_nom = c.i_nom();
        c.update_tick(1.2 * i_nom, 1.2 * i_nom, 36.0, 1.2 * i_nom);
        assert_eq!(c.mode(), ControlMode::CurrentLimit);
        for _ in 0..9 {
            c.update_tick(0.5 * i_nom, 0.5 * i_nom, 36.0, 0.5 * i_nom);
            assert_eq!(c.mode(), ControlMode::CurrentLimit);
        }
        c.update_tick(0.5 * i_nom, 0.5 * i_nom, 36.0, 0.5 * i_nom);
        assert_eq!(c.mode(), ControlMode::Droop);
    }

    #[test]
    fn current_limit_exit_counter_resets_on_relapse() {
        let p = params_100w();
        let gains = ControllerGains::from_bandwidth(&p);
        let mut c = ConverterController::new(&p, &gains, cfg(), false).unwrap();
        let i_nom = c.i_nom();
        c.update_tick(1.2 * i_nom, i_nom, 36.0, 1.2 * i_nom);
        for _ in 0..9 {
            c.update_tick(0.5 * i_nom, i_nom, 36.0, 0.5 * i_nom);
        }
        // Back above 95% for one period: the quiet streak starts over.
        c.update_tick(0.97 * i_nom, i_nom, 36.0, 0.97 * i_nom);
        for _ in 0..9 {
            c.update_tick(0.5 * i_nom, i_nom, 36.0, 0.5 * i_nom);
            assert_eq!(c.mode(), ControlMode::CurrentLimit);
        }
        c.update_tick(0.5 * i_nom, i_nom, 36.0, 0.5 * i_nom);
        assert_eq!(c.mode(), ControlMode::Droop);
    }

    #[test]
    fn inductor_current_above_rating_forces_the_limit_by_the_next_step() {
        let p = params_100w();
        let gains = ControllerGains::from_bandwidth(&p);
        let mut c = ConverterController::new(&p, &gains, cfg(), false).unwrap();
        let i_nom = c.i_nom();
        // Output current fine, inductor current over: still must trip.
        c.update_tick(0.5 * i_nom, 0.5 * i_nom, 36.0, 1.01 * i_nom);
        assert_eq!(c.mode(), ControlMode::CurrentLimit);
    }

    #[test]
    fn disabling_droop_zeroes_the_gain_and_freezes_adaptation() {
        let p = params_100w();
        let gains = ControllerGains::from_bandwidth(&p);
        let mut c = ConverterController::new(&p, &gains, cfg(), false).unwrap();
        c.activate_adaptive();
        c.set_droop_enabled(false);
        assert_eq!(c.r_d(), 0.0);
        let r_d_before = c.state().r_d;
        c.update_tick(2.0, 2.5, 36.0, 2.0);
        assert_eq!(c.state().r_d, r_d_before);
        c.set_droop_enabled(true);
        assert_eq!(c.r_d(), r_d_before);
    }

    #[test]
    fn adaptation_waits_for_activation() {
        let p = params_100w();
        let gains = ControllerGains::from_bandwidth(&p);
        let mut c = ConverterController::new(&p, &gains, cfg(), false).unwrap();
        c.update_tick(2.0, 2.5, 36.0, 2.0);
        assert_eq!(c.state().r_d, 0.5);
        c.activate_adaptive();
        c.update_tick(2.0, 2.5, 36.0, 2.0);
        assert_relative_eq!(c.state().r_d, 0.48, epsilon = 1e-15);
    }

    #[test]
    fn bandwidth_gains_match_the_component_values() {
        let gains = ControllerGains::from_bandwidth(&params_100w());
        assert_relative_eq!(gains.current_kp, 0.5235987755982988, max_relative = 1e-12);
        assert_relative_eq!(gains.current_ki, 822.4670334241131, max_relative = 1e-12);
        assert_relative_eq!(gains.voltage_kp, 0.15707963267948966, max_relative = 1e-12);
        assert_relative_eq!(gains.voltage_ki, 24.674011002723397, max_relative = 1e-12);
    }
}
