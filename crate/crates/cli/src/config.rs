//! Scenario file schema and conversion into a runnable [`Scenario64`].
//!
//! Files are TOML. Every field of every section has a default except the run
//! horizon, the network, and the converter list, so a minimal file is:
//!
//! ```toml
//! [solver]
//! t_end = 0.5
//!
//! [network]
//! cable_resistances = [1.0, 2.0]
//! load_resistance = 10.0
//!
//! [[converters]]
//! [[converters]]
//! ```
//!
//! Converter ids in event sections are one-based, matching the column names
//! of the emitted trace.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use droopsim_core::circuit::NetworkConfig;
use droopsim_core::control::{AdaptiveDroopConfig, ControllerGains};
use droopsim_core::scenario::{CommSettings, Event, EventKind};
use droopsim_core::{ConverterParams64, Scenario64};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    pub network: NetworkSection,
    #[serde(default)]
    pub comm: CommSection,
    #[serde(default)]
    pub control: ControlSection,
    pub converters: Vec<ConverterSection>,
    #[serde(default)]
    pub events: Vec<EventSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Run duration [s].
    pub t_end: f64,
    /// Plant integration step [s]; defaults to a tenth of the controller
    /// period.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Controller execution period [s]; defaults to one switching period of
    /// the first converter.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controller_period: Option<f64>,
    /// Trace sample every this many controller steps.
    #[serde(default = "default_trace_every")]
    pub trace_every: usize,
}

fn default_trace_every() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory; overridden by DROOPSIM_OUT_DIR and the -o flag.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// Per-converter cable resistance, converter terminal to bus [ohm].
    pub cable_resistances: Vec<f64>,
    /// Bus load resistance [ohm].
    pub load_resistance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommSection {
    /// Seconds between published current samples.
    #[serde(default = "default_sample_period")]
    pub sample_period: f64,
    /// Seconds a published sample takes to become visible.
    #[serde(default)]
    pub transport_delay: f64,
    /// Probability that a published sample is lost.
    #[serde(default)]
    pub dropout_probability: f64,
    /// Seed of the dropout draw.
    #[serde(default)]
    pub seed: u64,
}

fn default_sample_period() -> f64 {
    1e-3
}

impl Default for CommSection {
    fn default() -> Self {
        Self {
            sample_period: default_sample_period(),
            transport_delay: 0.0,
            dropout_probability: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    /// Run the bus-restoration PI on every controller.
    #[serde(default = "default_true")]
    pub secondary_enabled: bool,
    /// Start with droop active.
    #[serde(default = "default_true")]
    pub droop_enabled: bool,
    /// Start with the adaptive gain updates already running.
    #[serde(default)]
    pub adaptive_active: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ControlSection {
    fn default() -> Self {
        Self {
            secondary_enabled: true,
            droop_enabled: true,
            adaptive_active: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterSection {
    /// Input source voltage [V].
    #[serde(default = "default_v_in")]
    pub v_in: f64,
    /// Nominal output reference [V].
    #[serde(default = "default_v_ref")]
    pub v_ref: f64,
    /// Rated power [W]; sets the nominal current limit.
    #[serde(default = "default_p_rated")]
    pub p_rated: f64,
    /// Output filter inductance [H].
    #[serde(default = "default_inductance")]
    pub inductance: f64,
    /// Output filter capacitance [F].
    #[serde(default = "default_capacitance")]
    pub capacitance: f64,
    /// Switching frequency [Hz].
    #[serde(default = "default_f_sw")]
    pub f_sw: f64,
    /// PI gains; derived from the loop bandwidths when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<AdaptiveSection>,
}

fn default_v_in() -> f64 {
    60.0
}
fn default_v_ref() -> f64 {
    36.0
}
fn default_p_rated() -> f64 {
    100.0
}
fn default_inductance() -> f64 {
    2e-3
}
fn default_capacitance() -> f64 {
    1e-4
}
fn default_f_sw() -> f64 {
    25e3
}

impl Default for ConverterSection {
    fn default() -> Self {
        Self {
            v_in: default_v_in(),
            v_ref: default_v_ref(),
            p_rated: default_p_rated(),
            inductance: default_inductance(),
            capacitance: default_capacitance(),
            f_sw: default_f_sw(),
            gains: None,
            adaptive: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub voltage_kp: f64,
    pub voltage_ki: f64,
    pub current_kp: f64,
    pub current_ki: f64,
    pub secondary_kp: f64,
    pub secondary_ki: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveSection {
    /// Initial droop resistance [ohm].
    #[serde(default = "default_r_d_init")]
    pub r_d_init: f64,
    /// Gain step per update [ohm].
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Convergence band [A].
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Sharing weight K_j.
    #[serde(default = "default_load_factor")]
    pub load_factor: f64,
    /// Seconds between gain updates.
    #[serde(default = "default_update_period")]
    pub update_period: f64,
    /// Gain updates pause while the terminal voltage leaves [v_min, v_max];
    /// default 0.9 and 1.1 times v_ref.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    /// Upper clamp of the droop gain [ohm].
    #[serde(default = "default_r_d_max")]
    pub r_d_max: f64,
}

fn default_r_d_init() -> f64 {
    0.5
}
fn default_delta() -> f64 {
    0.02
}
fn default_gamma() -> f64 {
    0.05
}
fn default_load_factor() -> f64 {
    1.0
}
fn default_update_period() -> f64 {
    1e-3
}
fn default_r_d_max() -> f64 {
    10.0
}

impl Default for AdaptiveSection {
    fn default() -> Self {
        Self {
            r_d_init: default_r_d_init(),
            delta: default_delta(),
            gamma: default_gamma(),
            load_factor: default_load_factor(),
            update_period: default_update_period(),
            v_min: None,
            v_max: None,
            r_d_max: default_r_d_max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSection {
    /// Seconds from the start of the run.
    pub time: f64,
    /// One of: activate_adaptive_droop, set_load_factors,
    /// set_load_resistance, set_cable_resistance, set_droop_enabled.
    pub action: String,
    /// set_load_factors: one weight per converter.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<f64>>,
    /// set_load_resistance / set_cable_resistance: the new resistance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ohms: Option<f64>,
    /// set_cable_resistance: one-based converter id.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converter: Option<usize>,
    /// set_droop_enabled: the new state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
}

impl ScenarioFile {
    /// Parses a scenario file; parse errors carry the line and column.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read scenario file {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Renders the parsed form back to TOML; reparsing the result yields an
    /// identical configuration.
    pub fn render(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Converts the file into a validated runnable scenario.
    pub fn build(&self) -> Result<Scenario64> {
        if self.converters.is_empty() {
            bail!("[[converters]] must list at least one converter");
        }
        let converters: Vec<ConverterParams64> = self
            .converters
            .iter()
            .map(|c| ConverterParams64 {
                v_in: c.v_in,
                v_ref: c.v_ref,
                p_rated: c.p_rated,
                inductance: c.inductance,
                capacitance: c.capacitance,
                f_sw: c.f_sw,
            })
            .collect();
        let gains: Vec<ControllerGains<f64>> = self
            .converters
            .iter()
            .zip(&converters)
            .map(|(c, p)| match &c.gains {
                Some(g) => ControllerGains {
                    voltage_kp: g.voltage_kp,
                    voltage_ki: g.voltage_ki,
                    current_kp: g.current_kp,
                    current_ki: g.current_ki,
                    secondary_kp: g.secondary_kp,
                    secondary_ki: g.secondary_ki,
                },
                None => ControllerGains::from_bandwidth(p),
            })
            .collect();
        let adaptive: Vec<AdaptiveDroopConfig<f64>> = self
            .converters
            .iter()
            .map(|c| {
                let a = c.adaptive.clone().unwrap_or_default();
                AdaptiveDroopConfig {
                    r_d_init: a.r_d_init,
                    delta: a.delta,
                    gamma: a.gamma,
                    load_factor: a.load_factor,
                    update_period: a.update_period,
                    v_min: a.v_min.unwrap_or(0.9 * c.v_ref),
                    v_max: a.v_max.unwrap_or(1.1 * c.v_ref),
                    r_d_max: a.r_d_max,
                }
            })
            .collect();

        let network = NetworkConfig {
            cable_resistances: self.network.cable_resistances.clone(),
            load_resistance: self.network.load_resistance,
            load_factors: None,
        };

        let events = self
            .events
            .iter()
            .enumerate()
            .map(|(i, e)| {
                self.build_event(e)
                    .with_context(|| format!("[[events]] entry {}", i + 1))
            })
            .collect::<Result<Vec<_>>>()?;

        let controller_period = self
            .solver
            .controller_period
            .unwrap_or(1.0 / self.converters[0].f_sw);
        let dt = self.solver.dt.unwrap_or(controller_period / 10.0);

        let scenario = Scenario64 {
            converters,
            gains,
            adaptive,
            network,
            comm: CommSettings {
                sample_period: self.comm.sample_period,
                transport_delay: self.comm.transport_delay,
                dropout_probability: self.comm.dropout_probability,
                seed: self.comm.seed,
            },
            secondary_enabled: self.control.secondary_enabled,
            droop_enabled_at_start: self.control.droop_enabled,
            adaptive_active_at_start: self.control.adaptive_active,
            dt,
            t_end: self.solver.t_end,
            controller_period,
            trace_every: self.solver.trace_every,
            events,
        };
        scenario.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(scenario)
    }

    fn build_event(&self, e: &EventSection) -> Result<Event<f64>> {
        let n = self.converters.len();
        let reject_extras = |allowed: &[&str]| -> Result<()> {
            let mut extras = Vec::new();
            if e.factors.is_some() && !allowed.contains(&"factors") {
                extras.push("factors");
            }
            if e.ohms.is_some() && !allowed.contains(&"ohms") {
                extras.push("ohms");
            }
            if e.converter.is_some() && !allowed.contains(&"converter") {
                extras.push("converter");
            }
            if e.enabled.is_some() && !allowed.contains(&"enabled") {
                extras.push("enabled");
            }
            if extras.is_empty() {
                Ok(())
            } else {
                bail!("action {} does not take: {}", e.action, extras.join(", "))
            }
        };
        let kind = match e.action.as_str() {
            "activate_adaptive_droop" => {
                reject_extras(&[])?;
                EventKind::ActivateAdaptiveDroop
            }
            "set_load_factors" => {
                reject_extras(&["factors"])?;
                let factors = e
                    .factors
                    .clone()
                    .ok_or_else(|| anyhow!("set_load_factors requires factors = [..]"))?;
                EventKind::SetLoadFactors(factors)
            }
            "set_load_resistance" => {
                reject_extras(&["ohms"])?;
                let ohms = e
                    .ohms
                    .ok_or_else(|| anyhow!("set_load_resistance requires ohms"))?;
                EventKind::SetLoadResistance(ohms)
            }
            "set_cable_resistance" => {
                reject_extras(&["ohms", "converter"])?;
                let id = e.converter.ok_or_else(|| {
                    anyhow!("set_cable_resistance requires converter (one-based)")
                })?;
                if id == 0 || id > n {
                    bail!("converter id {id} outside 1..={n}");
                }
                let ohms = e
                    .ohms
                    .ok_or_else(|| anyhow!("set_cable_resistance requires ohms"))?;
                EventKind::SetCableResistance {
                    converter: id - 1,
                    ohms,
                }
            }
            "set_droop_enabled" => {
                reject_extras(&["enabled"])?;
                let enabled = e
                    .enabled
                    .ok_or_else(|| anyhow!("set_droop_enabled requires enabled"))?;
                EventKind::SetDroopEnabled(enabled)
            }
            other => bail!(
                "unknown action {other:?}; expected one of activate_adaptive_droop, \
                 set_load_factors, set_load_resistance, set_cable_resistance, \
                 set_droop_enabled"
            ),
        };
        Ok(Event { time: e.time, kind })
    }
}
