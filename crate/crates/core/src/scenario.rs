//! Event-driven closed-loop simulation.
//!
//! A scenario bundles the plant (converters + network), the per-converter
//! controllers, the communication bus, a clock hierarchy, and a list of
//! timed events. Everything is scheduled on integer multiples of the plant
//! step, so a run is a deterministic function of its configuration:
//!
//! * plant integration every `dt` (default 4 us);
//! * controller execution every `controller_period` (default one switching
//!   period, 40 us);
//! * communication publish and adaptive/supervision ticks on their own
//!   periods (default 1 ms);
//! * trace samples every `trace_every` controller steps (default 10).
//!
//! At a coincident instant the order is: events, comm publish, supervision
//! and gain updates, controller steps, trace logging, then the plant step
//! into the next instant. Publishing before reading makes the zero-delay
//! communicated average exact at every update tick.
//!
//! Runs start at the solved closed-loop equilibrium of the initial
//! configuration instead of a zero state: a cold start would trip the
//! current limit on inrush, which is not the situation any of the studied
//! transients describe.

use crate::circuit::{
    plant_step, solve_bus_voltage, validate_load_factors, ConverterParams, NetworkConfig,
    PlantState,
};
use crate::comm::CommBus;
use crate::control::{AdaptiveDroopConfig, ControllerGains, ConverterController, Measurements};
use crate::{real, CoreError, Real};

/// Timed configuration change applied between plant steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Event<T> {
    /// Seconds from the start of the run.
    pub time: T,
    pub kind: EventKind<T>,
}

/// What an event does. Converter indices are zero-based here; the file
/// format uses one-based ids and the loader converts.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind<T> {
    /// Turns on the adaptive gain updates of every controller.
    ActivateAdaptiveDroop,
    /// Replaces every controller's sharing weight.
    SetLoadFactors(Vec<T>),
    /// Replaces the bus load resistance [ohm].
    SetLoadResistance(T),
    /// Replaces one cable resistance [ohm].
    SetCableResistance { converter: usize, ohms: T },
    /// Disabling forces every droop gain to zero and freezes adaptation;
    /// re-enabling restores the frozen gains.
    SetDroopEnabled(bool),
}

/// Communication layer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CommSettings<T> {
    pub sample_period: T,
    pub transport_delay: T,
    pub dropout_probability: f64,
    pub seed: u64,
}

impl<T: Real> CommSettings<T> {
    pub fn defaults() -> Self {
        Self {
            sample_period: real(1e-3),
            transport_delay: T::zero(),
            dropout_probability: 0.0,
            seed: 0,
        }
    }
}

/// Complete description of one deterministic run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub converters: Vec<ConverterParams<T>>,
    pub gains: Vec<ControllerGains<T>>,
    pub adaptive: Vec<AdaptiveDroopConfig<T>>,
    pub network: NetworkConfig<T>,
    pub comm: CommSettings<T>,
    pub secondary_enabled: bool,
    pub droop_enabled_at_start: bool,
    pub adaptive_active_at_start: bool,
    /// Plant integration step [s].
    pub dt: T,
    /// Run duration [s].
    pub t_end: T,
    /// Controller execution period [s]; must be an integer multiple of `dt`.
    pub controller_period: T,
    /// Trace sample every this many controller steps.
    pub trace_every: usize,
    pub events: Vec<Event<T>>,
}

/// One trace sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<T> {
    pub time: T,
    /// Output current of each converter into its cable [A].
    pub currents: Vec<T>,
    /// Terminal (capacitor) voltage of each converter [V].
    pub terminal_voltages: Vec<T>,
    pub bus_voltage: T,
    /// Effective droop gain of each converter [ohm].
    pub r_d: Vec<T>,
    /// 0 droop mode, 1 current limit.
    pub modes: Vec<u8>,
    /// Bus load current [A].
    pub load_current: T,
    /// `I_1 - I_2` when the scenario has exactly two converters.
    pub delta_i: Option<T>,
}

/// Decimated time series of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace<T> {
    pub records: Vec<TraceRecord<T>>,
}

/// Where and when a run went non-finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence<T> {
    pub time: T,
    pub step: usize,
}

/// End-of-run metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary<T> {
    /// Realized end time [s]; shorter than configured if the run diverged.
    pub t_end: T,
    /// `I_1 - I_2` sampled just before the first event fired (two-converter
    /// scenarios with at least one event).
    pub delta_i_pre_event: Option<T>,
    /// `I_1 - I_2` at the final instant (two-converter scenarios).
    pub delta_i_final: Option<T>,
    /// First instant from which every converter's sharing band held
    /// continuously to the end of the run.
    pub convergence_time: Option<T>,
    /// True when every converter was inside its band at the last tick.
    pub converged: bool,
    /// Largest bus deviation from the nominal reference over the run [V].
    pub max_bus_deviation: T,
    /// Largest bus deviation over the last 5% of the run [V].
    pub steady_bus_deviation: T,
    pub final_r_d: Vec<T>,
    pub final_modes: Vec<u8>,
    pub final_currents: Vec<T>,
    pub final_terminal_voltages: Vec<T>,
    pub final_bus_voltage: T,
    /// Secondary corrections at the end of the run [V].
    pub final_corrections: Vec<T>,
    /// Two-converter scenarios: |R'_1/R'_2 - s_1/s_2| at the end, with
    /// R'_j = cable + droop gain and s_j the droop-shifted source voltage.
    pub ratio_residual_final: Option<T>,
}

/// Result of a run: decimated trace, metrics, and the divergence diagnostic
/// if the solver went non-finite before `t_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput<T> {
    pub trace: Trace<T>,
    pub summary: Summary<T>,
    pub divergence: Option<Divergence<T>>,
}

fn steps_per<T: Real>(period: T, dt: T, what: &str) -> Result<usize, CoreError> {
    let ratio = (period / dt).to_f64().unwrap_or(f64::NAN);
    if !ratio.is_finite() || ratio < 0.5 {
        return Err(CoreError::InvalidScenario(format!(
            "{what} must be at least the plant step"
        )));
    }
    let n = ratio.round();
    if (ratio - n).abs() > 1e-6 * n {
        return Err(CoreError::InvalidScenario(format!(
            "{what} must be an integer multiple of the plant step (ratio {ratio})"
        )));
    }
    Ok(n as usize)
}

impl<T: Real> Scenario<T> {
    /// Scenario skeleton with the standard clock hierarchy for the given
    /// converters: plant step a tenth of the first converter's switching
    /// period, controller at the switching period, trace every ten
    /// controller steps, communication at its defaults, no events.
    pub fn with_standard_clocks(
        converters: Vec<ConverterParams<T>>,
        gains: Vec<ControllerGains<T>>,
        adaptive: Vec<AdaptiveDroopConfig<T>>,
        network: NetworkConfig<T>,
    ) -> Self {
        assert!(
            !converters.is_empty(),
            "scenario needs at least one converter"
        );
        let period = converters[0].f_sw.recip();
        Self {
            converters,
            gains,
            adaptive,
            network,
            comm: CommSettings::defaults(),
            secondary_enabled: true,
            droop_enabled_at_start: true,
            adaptive_active_at_start: false,
            dt: period / real(10.0),
            t_end: real(0.5),
            controller_period: period,
            trace_every: 10,
            events: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let n = self.converters.len();
        if n == 0 {
            return Err(CoreError::InvalidScenario(
                "at least one converter required".into(),
            ));
        }
        for (what, got) in [
            ("controller gains", self.gains.len()),
            ("adaptive configs", self.adaptive.len()),
            ("cable resistances", self.network.cable_resistances.len()),
        ] {
            if got != n {
                return Err(CoreError::LengthMismatch {
                    what: what.into(),
                    expected: n,
                    got,
                });
            }
        }
        for p in &self.converters {
            p.validate()?;
        }
        self.network.validate()?;
        for (p, a) in self.converters.iter().zip(&self.adaptive) {
            a.validate(p.v_ref)?;
        }
        let factors: Vec<T> = self.adaptive.iter().map(|a| a.load_factor).collect();
        validate_load_factors(&factors)?;

        if !(self.dt > T::zero()) {
            return Err(CoreError::NonPositive {
                name: "dt".into(),
                value: self.dt.to_f64().unwrap_or(f64::NAN),
            });
        }
        if self.t_end < self.dt {
            return Err(CoreError::InvalidScenario(
                "t_end must cover at least one plant step".into(),
            ));
        }
        steps_per(self.controller_period, self.dt, "controller period")?;
        steps_per(self.comm.sample_period, self.dt, "communication period")?;
        for a in &self.adaptive {
            steps_per(a.update_period, self.dt, "adaptive update period")?;
        }
        if self.trace_every == 0 {
            return Err(CoreError::InvalidScenario(
                "trace_every must be at least 1".into(),
            ));
        }
        if !self.comm.transport_delay.is_finite() || self.comm.transport_delay < T::zero() {
            return Err(CoreError::InvalidScenario(
                "communication delay must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.comm.dropout_probability) {
            return Err(CoreError::InvalidScenario(
                "dropout probability must lie in [0, 1]".into(),
            ));
        }

        let mut prev = T::zero();
        for (idx, ev) in self.events.iter().enumerate() {
            if !ev.time.is_finite() || ev.time < T::zero() {
                return Err(CoreError::InvalidScenario(format!(
                    "event {idx} time {} must be finite and non-negative",
                    ev.time
                )));
            }
            if ev.time < prev {
                return Err(CoreError::InvalidScenario(format!(
                    "event {idx} out of order: {} after {}",
                    ev.time, prev
                )));
            }
            prev = ev.time;
            match &ev.kind {
                EventKind::SetLoadFactors(ks) => {
                    if ks.len() != n {
                        return Err(CoreError::LengthMismatch {
                            what: format!("event {idx} load factors"),
                            expected: n,
                            got: ks.len(),
                        });
                    }
                    validate_load_factors(ks)?;
                }
                EventKind::SetLoadResistance(r) => {
                    if !r.is_finite() || *r <= T::zero() {
                        return Err(CoreError::InvalidScenario(format!(
                            "event {idx} load resistance {r} must be positive"
                        )));
                    }
                }
                EventKind::SetCableResistance { converter, ohms } => {
                    if *converter >= n {
                        return Err(CoreError::InvalidScenario(format!(
                            "event {idx} cable index {converter} out of range for {n} converters"
                        )));
                    }
                    if !ohms.is_finite() || *ohms <= T::zero() {
                        return Err(CoreError::InvalidScenario(format!(
                            "event {idx} cable resistance {ohms} must be positive"
                        )));
                    }
                }
                EventKind::ActivateAdaptiveDroop | EventKind::SetDroopEnabled(_) => {}
            }
        }
        Ok(())
    }

    /// Closed-loop equilibrium of the initial configuration: converter
    /// sources `v_ref + correction` behind cable plus initial droop gain,
    /// with the secondary corrections settled to their clamped fixed point.
    /// Returns (state, duties, corrections, output currents).
    fn initial_operating_point(
        &self,
    ) -> Result<(PlantState<T>, Vec<T>, Vec<T>, Vec<T>), CoreError> {
        let n = self.converters.len();
        let r_eff: Vec<T> = self
            .network
            .cable_resistances
            .iter()
            .zip(&self.adaptive)
            .map(|(&r, a)| {
                if self.droop_enabled_at_start {
                    r + a.r_d_init
                } else {
                    r
                }
            })
            .collect();
        let eff_net = NetworkConfig {
            cable_resistances: r_eff.clone(),
            load_resistance: self.network.load_resistance,
            load_factors: None,
        };
        let mut corrections = vec![T::zero(); n];
        let mut sources: Vec<T> = self.converters.iter().map(|p| p.v_ref).collect();
        let mut v_bus = solve_bus_voltage(&sources, &eff_net)?;
        if self.secondary_enabled {
            let tol = real::<T>(1e-13);
            for _ in 0..1000 {
                let mut moved = T::zero();
                for (j, p) in self.converters.iter().enumerate() {
                    let bound = real::<T>(0.1) * p.v_ref;
                    let next = (corrections[j] + p.v_ref - v_bus).max(-bound).min(bound);
                    moved = moved.max((next - corrections[j]).abs());
                    corrections[j] = next;
                    sources[j] = p.v_ref + next;
                }
                v_bus = solve_bus_voltage(&sources, &eff_net)?;
                if moved < tol {
                    break;
                }
            }
        }
        let mut i_out = Vec::with_capacity(n);
        let mut v_c = Vec::with_capacity(n);
        let mut duties = Vec::with_capacity(n);
        for j in 0..n {
            let i = (sources[j] - v_bus) / r_eff[j];
            let v = v_bus + i * self.network.cable_resistances[j];
            let d = v / self.converters[j].v_in;
            if !(T::zero()..=T::one()).contains(&d) {
                return Err(CoreError::InvalidScenario(format!(
                    "initial operating point needs duty {d} on converter {} (outside [0, 1])",
                    j + 1
                )));
            }
            i_out.push(i);
            v_c.push(v);
            duties.push(d);
        }
        Ok((
            PlantState::new(i_out.clone(), v_c),
            duties,
            corrections,
            i_out,
        ))
    }

    /// Runs the scenario to completion (or divergence) and returns the
    /// decimated trace plus summary metrics.
    pub fn run(&self) -> Result<RunOutput<T>, CoreError> {
        self.validate()?;
        let n = self.converters.len();
        let dt = self.dt;
        let ctrl_every = steps_per(self.controller_period, dt, "controller period")?;
        let comm_every = steps_per(self.comm.sample_period, dt, "communication period")?;
        let update_every: Vec<usize> = self
            .adaptive
            .iter()
            .map(|a| steps_per(a.update_period, dt, "adaptive update period"))
            .collect::<Result<_, _>>()?;
        let log_every = ctrl_every * self.trace_every;
        let n_steps = (self.t_end / dt).to_f64().unwrap_or(0.0).round() as usize;

        let mut net = self.network.clone();
        let mut ctrls: Vec<ConverterController<T>> = self
            .converters
            .iter()
            .zip(&self.gains)
            .zip(&self.adaptive)
            .map(|((p, g), a)| ConverterController::new(p, g, a.clone(), self.secondary_enabled))
            .collect::<Result<_, _>>()?;
        let (mut state, mut duties, corrections, i_out0) = self.initial_operating_point()?;
        for (j, c) in ctrls.iter_mut().enumerate() {
            c.set_droop_enabled(self.droop_enabled_at_start);
            if self.adaptive_active_at_start {
                c.activate_adaptive();
            }
            c.preload(i_out0[j], duties[j], corrections[j]);
        }
        let mut comm = CommBus::new(
            n,
            self.comm.sample_period,
            self.comm.transport_delay,
            self.comm.dropout_probability,
            self.comm.seed,
        )?;
        comm.seed_initial(&i_out0)?;

        let v_star = self.converters[0].v_ref;
        let event_steps: Vec<usize> = self
            .events
            .iter()
            .map(|e| (e.time / dt).to_f64().unwrap_or(f64::INFINITY).round() as usize)
            .collect();

        let mut records = Vec::with_capacity(n_steps / log_every + 2);
        let mut band_ok = vec![false; n];
        let mut conv_since: Option<T> = None;
        let mut delta_i_pre: Option<T> = None;
        let mut awaiting_first_event = !self.events.is_empty();
        let mut divergence = None;
        let mut max_dev = T::zero();
        let mut ev_idx = 0;
        let mut final_step = n_steps;

        for k in 0..=n_steps {
            let now = dt * real::<T>(k as f64);
            while ev_idx < self.events.len() && event_steps[ev_idx] == k {
                if awaiting_first_event {
                    awaiting_first_event = false;
                    if n == 2 {
                        let io = state.output_currents(&net)?;
                        delta_i_pre = Some(io[0] - io[1]);
                    }
                }
                apply_event(&mut net, &mut ctrls, &self.events[ev_idx]);
                ev_idx += 1;
            }
            let v_bus = state.bus_voltage(&net)?;
            max_dev = max_dev.max((v_bus - v_star).abs());

            let comm_due = k % comm_every == 0;
            let tick_due = update_every.iter().any(|&u| k % u == 0);
            let ctrl_due = k % ctrl_every == 0;
            let log_due = k % log_every == 0;
            if comm_due || tick_due || ctrl_due || log_due {
                let i_out = state.output_currents(&net)?;
                if comm_due {
                    for (j, &i) in i_out.iter().enumerate() {
                        comm.publish(j, i, now)?;
                    }
                }
                if tick_due {
                    let i_ave = comm.average_current(now)?;
                    for j in 0..n {
                        if k % update_every[j] == 0 {
                            ctrls[j].update_tick(
                                i_out[j],
                                i_ave,
                                state.capacitor_voltages[j],
                                state.inductor_currents[j],
                            );
                            let cfg = ctrls[j].config();
                            band_ok[j] = (i_out[j] - cfg.load_factor * i_ave).abs() < cfg.gamma;
                        }
                    }
                    if band_ok.iter().all(|&b| b) {
                        conv_since.get_or_insert(now);
                    } else {
                        conv_since = None;
                    }
                }
                if ctrl_due {
                    for j in 0..n {
                        let m = Measurements {
                            v_terminal: state.capacitor_voltages[j],
                            i_out: i_out[j],
                            i_l: state.inductor_currents[j],
                            v_bus,
                        };
                        duties[j] = ctrls[j].step(&m, self.controller_period);
                    }
                }
                if log_due {
                    records.push(TraceRecord {
                        time: now,
                        currents: i_out.clone(),
                        terminal_voltages: state.capacitor_voltages.clone(),
                        bus_voltage: v_bus,
                        r_d: ctrls.iter().map(|c| c.r_d()).collect(),
                        modes: ctrls.iter().map(|c| c.mode().as_index()).collect(),
                        load_current: v_bus / net.load_resistance,
                        delta_i: (n == 2).then(|| i_out[0] - i_out[1]),
                    });
                }
            }

            if k < n_steps {
                // A non-finite value surfacing inside the integrator means
                // the run diverged; it is reported, not returned as an error.
                let next = match plant_step(&state, &duties, &self.converters, &net, dt) {
                    Ok(next) => next,
                    Err(CoreError::NonFinite { .. }) => {
                        PlantState::new(vec![T::nan(); n], vec![T::nan(); n])
                    }
                    Err(other) => return Err(other),
                };
                if !next.is_finite() {
                    divergence = Some(Divergence {
                        time: dt * real::<T>((k + 1) as f64),
                        step: k + 1,
                    });
                    final_step = k;
                    break;
                }
                state = next;
            }
        }

        let i_out = state.output_currents(&net)?;
        let v_bus = state.bus_voltage(&net)?;
        let realized_end = dt * real::<T>(final_step as f64);
        let steady_from = real::<T>(0.95) * realized_end;
        let mut steady_dev = (v_bus - v_star).abs();
        for r in records.iter().filter(|r| r.time >= steady_from) {
            steady_dev = steady_dev.max((r.bus_voltage - v_star).abs());
        }
        let ratio_residual_final = (n == 2).then(|| {
            let r1 = net.cable_resistances[0] + ctrls[0].r_d();
            let r2 = net.cable_resistances[1] + ctrls[1].r_d();
            let s1 = ctrls[0].v_ref_star + ctrls[0].correction();
            let s2 = ctrls[1].v_ref_star + ctrls[1].correction();
            (r1 / r2 - s1 / s2).abs()
        });
        let summary = Summary {
            t_end: realized_end,
            delta_i_pre_event: delta_i_pre,
            delta_i_final: (n == 2).then(|| i_out[0] - i_out[1]),
            convergence_time: conv_since,
            converged: band_ok.iter().all(|&b| b),
            max_bus_deviation: max_dev,
            steady_bus_deviation: steady_dev,
            final_r_d: ctrls.iter().map(|c| c.r_d()).collect(),
            final_modes: ctrls.iter().map(|c| c.mode().as_index()).collect(),
            final_currents: i_out,
            final_terminal_voltages: state.capacitor_voltages.clone(),
            final_bus_voltage: v_bus,
            final_corrections: ctrls.iter().map(|c| c.correction()).collect(),
            ratio_residual_final,
        };
        Ok(RunOutput {
            trace: Trace { records },
            summary,
            divergence,
        })
    }
}

fn apply_event<T: Real>(
    net: &mut NetworkConfig<T>,
    ctrls: &mut [ConverterController<T>],
    ev: &Event<T>,
) {
    match &ev.kind {
        EventKind::ActivateAdaptiveDroop => {
            for c in ctrls.iter_mut() {
                c.activate_adaptive();
            }
        }
        EventKind::SetLoadFactors(ks) => {
            for (c, &k) in ctrls.iter_mut().zip(ks) {
                c.set_load_factor(k);
            }
        }
        EventKind::SetLoadResistance(r) => net.load_resistance = *r,
        EventKind::SetCableResistance { converter, ohms } => {
            net.cable_resistances[*converter] = *ohms;
        }
        EventKind::SetDroopEnabled(enabled) => {
            for c in ctrls.iter_mut() {
                c.set_droop_enabled(*enabled);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn converter() -> ConverterParams<f64> {
        ConverterParams {
            v_in: 60.0,
            v_ref: 36.0,
            p_rated: 100.0,
            inductance: 2e-3,
            capacitance: 1e-4,
            f_sw: 25e3,
        }
    }

    fn pair_scenario(cables: Vec<f64>, r_load: f64) -> Scenario<f64> {
        let p = converter();
        let gains = ControllerGains::from_bandwidth(&p);
        let adaptive = AdaptiveDroopConfig::default_for(p.v_ref);
        Scenario::with_standard_clocks(
            vec![p.clone(), p],
            vec![gains.clone(), gains],
            vec![adaptive.clone(), adaptive],
            NetworkConfig::new(cables, r_load).unwrap(),
        )
    }

    #[test]
    fn symmetric_pair_shares_exactly() {
        let mut s = pair_scenario(vec![1.0, 1.0], 10.0);
        s.t_end = 0.02;
        let out = s.run().unwrap();
        assert!(out.divergence.is_none());
        for r in &out.trace.records {
            assert_eq!(r.delta_i, Some(0.0), "asymmetry at t = {}", r.time);
        }
        assert_eq!(out.summary.delta_i_final, Some(0.0));
    }

    #[test]
    fn equilibrium_start_is_quiescent() {
        let mut s = pair_scenario(vec![1.0, 2.0], 10.0);
        s.t_end = 0.05;
        let out = s.run().unwrap();
        // Started at the solved operating point, nothing should move: the
        // largest bus excursion over the whole run stays in the noise.
        assert!(
            out.summary.max_bus_deviation - out.summary.steady_bus_deviation < 1e-3,
            "drift from the initial equilibrium: max {} vs steady {}",
            out.summary.max_bus_deviation,
            out.summary.steady_bus_deviation
        );
        assert!(out.divergence.is_none());
    }

    #[test]
    fn runs_are_bit_identical() {
        let mut s = pair_scenario(vec![1.0, 2.0], 10.0);
        s.t_end = 0.02;
        s.comm.dropout_probability = 0.3;
        s.comm.seed = 99;
        let a = s.run().unwrap();
        let b = s.run().unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.summary, b.summary);
    }

    #[test]
    fn coincident_events_apply_in_listed_order() {
        let mut s = pair_scenario(vec![1.0, 1.0], 10.0);
        s.t_end = 0.01;
        s.events = vec![
            Event {
                time: 0.005,
                kind: EventKind::SetLoadResistance(8.0),
            },
            Event {
                time: 0.005,
                kind: EventKind::SetLoadResistance(12.0),
            },
        ];
        let out = s.run().unwrap();
        let last = out.trace.records.last().unwrap();
        assert_relative_eq!(
            last.load_current,
            last.bus_voltage / 12.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn load_step_shows_up_after_the_event() {
        let mut s = pair_scenario(vec![1.0, 1.0], 20.0);
        s.t_end = 0.02;
        s.events = vec![Event {
            time: 0.01,
            kind: EventKind::SetLoadResistance(10.0),
        }];
        let out = s.run().unwrap();
        let before = out
            .trace
            .records
            .iter()
            .find(|r| r.time >= 0.008)
            .unwrap()
            .currents
            .iter()
            .sum::<f64>();
        let after = out
            .trace
            .records
            .last()
            .unwrap()
            .currents
            .iter()
            .sum::<f64>();
        assert!(
            after > 1.5 * before,
            "halving the load resistance should roughly double the current ({before} -> {after})"
        );
        assert!(out.summary.delta_i_pre_event.is_some());
    }

    #[test]
    fn divergent_plant_reports_instead_of_erroring() {
        let mut s = pair_scenario(vec![1.0, 2.0], 10.0);
        // An inductance this small makes the filter dynamics far stiffer
        // than the step size. The run starts at an exact equilibrium, so a
        // disturbance is needed to excite the unstable mode.
        s.converters[0].inductance = 1e-12;
        s.t_end = 0.02;
        s.events = vec![Event {
            time: 0.005,
            kind: EventKind::SetLoadResistance(9.0),
        }];
        let out = s.run().unwrap();
        let d = out.divergence.expect("run should diverge");
        assert!(d.time >= 0.005 && d.time <= 0.02);
        assert!(out.summary.t_end < 0.02);
        for r in &out.trace.records {
            assert!(r.bus_voltage.is_finite());
        }
    }

    #[test]
    fn rejects_unsorted_events() {
        let mut s = pair_scenario(vec![1.0, 1.0], 10.0);
        s.events = vec![
            Event {
                time: 0.2,
                kind: EventKind::ActivateAdaptiveDroop,
            },
            Event {
                time: 0.1,
                kind: EventKind::SetLoadResistance(5.0),
            },
        ];
        assert!(matches!(s.run(), Err(CoreError::InvalidScenario(_))));
    }

    #[test]
    fn rejects_load_factors_that_do_not_sum_to_n() {
        let mut s = pair_scenario(vec![1.0, 1.0], 10.0);
        s.adaptive[0].load_factor = 1.5;
        s.adaptive[1].load_factor = 1.0;
        assert!(s.run().is_err());
        s.adaptive[1].load_factor = 0.5;
        s.validate().unwrap();
    }

    #[test]
    fn rejects_event_payload_problems() {
        let mut s = pair_scenario(vec![1.0, 1.0], 10.0);
        s.events = vec![Event {
            time: 0.01,
            kind: EventKind::SetCableResistance {
                converter: 2,
                ohms: 3.0,
            },
        }];
        assert!(s.validate().is_err());
        s.events = vec![Event {
            time: 0.01,
            kind: EventKind::SetLoadFactors(vec![1.6, 0.8]),
        }];
        assert!(s.validate().is_err());
        s.events = vec![Event {
            time: -0.01,
            kind: EventKind::ActivateAdaptiveDroop,
        }];
        assert!(s.validate().is_err());
    }

    #[test]
    fn rejects_misaligned_clocks() {
        let mut s = pair_scenario(vec![1.0, 1.0], 10.0);
        s.controller_period = 1.5 * s.dt;
        assert!(s.validate().is_err());
        let mut s = pair_scenario(vec![1.0, 1.0], 10.0);
        s.adaptive[0].update_period = 1.0001e-3;
        assert!(s.validate().is_err());
    }

    #[test]
    fn disabled_droop_scenario_regulates_at_the_reference() {
        let mut s = pair_scenario(vec![1.0, 1.0], 10.0);
        s.droop_enabled_at_start = false;
        s.secondary_enabled = false;
        s.t_end = 0.05;
        let out = s.run().unwrap();
        let last = out.trace.records.last().unwrap();
        for &v in &last.terminal_voltages {
            assert_relative_eq!(v, 36.0, max_relative = 1e-3);
        }
        assert_eq!(last.r_d, vec![0.0, 0.0]);
    }
}
