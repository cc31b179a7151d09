//! Averaged electrical model of N buck converters feeding one DC bus.
//!
//! ```text
//!  Vg_1 --[buck d_1]--+-- v_C1 --[R_L1]--+
//!                    _|_                 |
//!                    C_1                 +--- V_bus
//!                     |                  |        |
//!  Vg_2 --[buck d_2]--+-- v_C2 --[R_L2]--+      [R_L]
//!                    _|_                          |
//!                    C_2                         gnd
//! ```
//!
//! Each converter is the switching-period average of a buck stage: the
//! inductor sees `d * Vg` against the output capacitor, and the capacitor
//! feeds the bus through its cable resistance. The bus node has no dynamics
//! of its own, so its voltage follows algebraically from the capacitor
//! voltages at every evaluation:
//!
//! ```text
//!  L_j di_Lj/dt = d_j * Vg_j - v_Cj
//!  C_j dv_Cj/dt = i_Lj - I_j          I_j = (v_Cj - V_bus) / R_Lj
//!  V_bus = (sum_j v_Cj / R_Lj) / (1/R_L + sum_j 1/R_Lj)
//! ```
//!
//! Time stepping is classical fixed-step RK4 with the bus voltage re-solved
//! at every stage. Duties are held constant across a step (the controller
//! updates them on its own, slower clock).

use crate::{real, CoreError, Real};

/// Electrical parameters of one converter.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverterParams<T> {
    /// Input source voltage Vg [V].
    pub v_in: T,
    /// Output voltage set point V* [V].
    pub v_ref: T,
    /// Rated output power [W].
    pub p_rated: T,
    /// Output filter inductance [H].
    pub inductance: T,
    /// Output filter capacitance [F].
    pub capacitance: T,
    /// Switching frequency [Hz]. Caps the plant step at half the switching
    /// period.
    pub f_sw: T,
}

impl<T: Real> ConverterParams<T> {
    /// Nominal output current [A], `p_rated / v_ref`. Above it the converter
    /// leaves voltage control for the current-limit mode.
    pub fn i_nom(&self) -> T {
        self.p_rated / self.v_ref
    }

    /// Largest admissible plant step for this converter [s].
    pub fn max_step(&self) -> T {
        (self.f_sw + self.f_sw).recip()
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let fields = [
            ("v_in", self.v_in),
            ("v_ref", self.v_ref),
            ("p_rated", self.p_rated),
            ("inductance", self.inductance),
            ("capacitance", self.capacitance),
            ("f_sw", self.f_sw),
        ];
        for (name, value) in fields {
            if !value.is_finite() || value <= T::zero() {
                return Err(CoreError::NonPositive {
                    name: format!("converter {name}"),
                    value: value.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }
}

/// Cable resistances, bus load, and optional initial sharing weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig<T> {
    /// Per-converter cable resistance R_Lj, terminal to bus [ohm].
    pub cable_resistances: Vec<T>,
    /// Load resistance R_L at the bus [ohm].
    pub load_resistance: T,
    /// Optional sharing weights K_j; when present they override the
    /// per-converter controller settings at scenario assembly. Must sum to
    /// the converter count.
    pub load_factors: Option<Vec<T>>,
}

impl<T: Real> NetworkConfig<T> {
    pub fn new(cable_resistances: Vec<T>, load_resistance: T) -> Result<Self, CoreError> {
        let net = Self {
            cable_resistances,
            load_resistance,
            load_factors: None,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        for (j, &r) in self.cable_resistances.iter().enumerate() {
            if !r.is_finite() || r <= T::zero() {
                return Err(CoreError::NonPositive {
                    name: format!("cable_resistances[{j}]"),
                    value: r.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        if !self.load_resistance.is_finite() || self.load_resistance <= T::zero() {
            return Err(CoreError::NonPositive {
                name: "load_resistance".into(),
                value: self.load_resistance.to_f64().unwrap_or(f64::NAN),
            });
        }
        if let Some(k) = &self.load_factors {
            if k.len() != self.cable_resistances.len() {
                return Err(CoreError::LengthMismatch {
                    what: "load_factors".into(),
                    expected: self.cable_resistances.len(),
                    got: k.len(),
                });
            }
            validate_load_factors(k)?;
        }
        Ok(())
    }
}

/// Checks that sharing weights are positive, finite, and sum to the
/// converter count (each K_j = 1 means an equal split).
pub fn validate_load_factors<T: Real>(k: &[T]) -> Result<(), CoreError> {
    let mut sum = T::zero();
    for (j, &kj) in k.iter().enumerate() {
        if !kj.is_finite() || kj <= T::zero() {
            return Err(CoreError::NonPositive {
                name: format!("load_factors[{j}]"),
                value: kj.to_f64().unwrap_or(f64::NAN),
            });
        }
        sum = sum + kj;
    }
    let n = real::<T>(k.len() as f64);
    if (sum - n).abs() > real::<T>(1e-9) * n {
        return Err(CoreError::InvalidInput(format!(
            "load factors must sum to the converter count {} (got {})",
            k.len(),
            sum
        )));
    }
    Ok(())
}

/// Dynamic state of the plant: one inductor current and one capacitor
/// voltage per converter. The output capacitor sits at the converter
/// terminal, so the terminal voltage is the capacitor voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState<T> {
    /// Inductor currents i_Lj [A].
    pub inductor_currents: Vec<T>,
    /// Capacitor (terminal) voltages v_Cj [V].
    pub capacitor_voltages: Vec<T>,
}

impl<T: Real> PlantState<T> {
    pub fn new(inductor_currents: Vec<T>, capacitor_voltages: Vec<T>) -> Self {
        assert_eq!(inductor_currents.len(), capacitor_voltages.len());
        Self {
            inductor_currents,
            capacitor_voltages,
        }
    }

    pub fn len(&self) -> usize {
        self.inductor_currents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inductor_currents.is_empty()
    }

    /// Terminal voltages V_DCj. Identical to the capacitor voltages in this
    /// model; kept as a named accessor so call sites read as measurements.
    pub fn terminal_voltages(&self) -> &[T] {
        &self.capacitor_voltages
    }

    pub fn bus_voltage(&self, net: &NetworkConfig<T>) -> Result<T, CoreError> {
        solve_bus_voltage(&self.capacitor_voltages, net)
    }

    /// Branch currents I_j = (v_Cj - V_bus) / R_Lj.
    pub fn output_currents(&self, net: &NetworkConfig<T>) -> Result<Vec<T>, CoreError> {
        let v_bus = self.bus_voltage(net)?;
        Ok(self
            .capacitor_voltages
            .iter()
            .zip(&net.cable_resistances)
            .map(|(&v, &r)| (v - v_bus) / r)
            .collect())
    }

    pub fn is_finite(&self) -> bool {
        self.inductor_currents.iter().all(|x| x.is_finite())
            && self.capacitor_voltages.iter().all(|x| x.is_finite())
    }
}

/// Solves the bus node voltage for the given terminal voltages.
///
/// The bus has no stored energy, so Kirchhoff's current law gives it in
/// closed form: `V_bus = (sum v_j / R_Lj) / (1/R_L + sum 1/R_Lj)`.
pub fn solve_bus_voltage<T: Real>(
    terminal_voltages: &[T],
    net: &NetworkConfig<T>,
) -> Result<T, CoreError> {
    if terminal_voltages.len() != net.cable_resistances.len() {
        return Err(CoreError::LengthMismatch {
            what: "terminal_voltages".into(),
            expected: net.cable_resistances.len(),
            got: terminal_voltages.len(),
        });
    }
    let mut injected = T::zero();
    let mut conductance = net.load_resistance.recip();
    for (j, (&v, &r)) in terminal_voltages
        .iter()
        .zip(&net.cable_resistances)
        .enumerate()
    {
        if !v.is_finite() {
            return Err(CoreError::NonFinite {
                what: format!("terminal voltage {}", j + 1),
            });
        }
        injected = injected + v / r;
        conductance = conductance + r.recip();
    }
    Ok(injected / conductance)
}

/// State derivatives for the averaged model at one instant.
fn derivatives<T: Real>(
    inductor_currents: &[T],
    capacitor_voltages: &[T],
    duties: &[T],
    params: &[ConverterParams<T>],
    net: &NetworkConfig<T>,
    d_il: &mut [T],
    d_vc: &mut [T],
) -> Result<(), CoreError> {
    let v_bus = solve_bus_voltage(capacitor_voltages, net)?;
    for j in 0..params.len() {
        let p = &params[j];
        let i_out = (capacitor_voltages[j] - v_bus) / net.cable_resistances[j];
        d_il[j] = (duties[j] * p.v_in - capacitor_voltages[j]) / p.inductance;
        d_vc[j] = (inductor_currents[j] - i_out) / p.capacitance;
    }
    Ok(())
}

/// Advances the plant by one RK4 step of size `dt` with duties held fixed.
///
/// `dt` must not exceed half the fastest switching period; larger steps
/// cannot resolve the controller clock and are rejected.
pub fn plant_step<T: Real>(
    state: &PlantState<T>,
    duties: &[T],
    params: &[ConverterParams<T>],
    net: &NetworkConfig<T>,
    dt: T,
) -> Result<PlantState<T>, CoreError> {
    let n = params.len();
    if state.len() != n || duties.len() != n || net.cable_resistances.len() != n {
        return Err(CoreError::LengthMismatch {
            what: "plant_step inputs".into(),
            expected: n,
            got: state.len(),
        });
    }
    let max_dt = params
        .iter()
        .map(|p| p.max_step())
        .fold(T::infinity(), T::min);
    if !(dt > T::zero()) || dt > max_dt {
        return Err(CoreError::StepTooLarge {
            dt: dt.to_f64().unwrap_or(f64::NAN),
            max: max_dt.to_f64().unwrap_or(f64::NAN),
        });
    }
    for (j, &d) in duties.iter().enumerate() {
        if !d.is_finite() || d < T::zero() || d > T::one() {
            return Err(CoreError::InvalidInput(format!(
                "duty {} out of [0, 1]: {}",
                j + 1,
                d
            )));
        }
    }

    let half = dt / real::<T>(2.0);
    let sixth = dt / real::<T>(6.0);
    let two = real::<T>(2.0);

    let il0 = &state.inductor_currents;
    let vc0 = &state.capacitor_voltages;
    let mut k1i = vec![T::zero(); n];
    let mut k1v = vec![T::zero(); n];
    let mut k2i = vec![T::zero(); n];
    let mut k2v = vec![T::zero(); n];
    let mut k3i = vec![T::zero(); n];
    let mut k3v = vec![T::zero(); n];
    let mut k4i = vec![T::zero(); n];
    let mut k4v = vec![T::zero(); n];

    let staged =
        |x: &[T], k: &[T], h: T| -> Vec<T> { x.iter().zip(k).map(|(&x, &k)| x + k * h).collect() };

    derivatives(il0, vc0, duties, params, net, &mut k1i, &mut k1v)?;
    let (il, vc) = (staged(il0, &k1i, half), staged(vc0, &k1v, half));
    derivatives(&il, &vc, duties, params, net, &mut k2i, &mut k2v)?;
    let (il, vc) = (staged(il0, &k2i, half), staged(vc0, &k2v, half));
    derivatives(&il, &vc, duties, params, net, &mut k3i, &mut k3v)?;
    let (il, vc) = (staged(il0, &k3i, dt), staged(vc0, &k3v, dt));
    derivatives(&il, &vc, duties, params, net, &mut k4i, &mut k4v)?;

    let mut il_next = Vec::with_capacity(n);
    let mut vc_next = Vec::with_capacity(n);
    for j in 0..n {
        il_next.push(il0[j] + sixth * (k1i[j] + two * k2i[j] + two * k3i[j] + k4i[j]));
        vc_next.push(vc0[j] + sixth * (k1v[j] + two * k2v[j] + two * k3v[j] + k4v[j]));
    }
    Ok(PlantState::new(il_next, vc_next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params_100w() -> ConverterParams<f64> {
        ConverterParams {
            v_in: 60.0,
            v_ref: 36.0,
            p_rated: 100.0,
            inductance: 2e-3,
            capacitance: 1e-4,
            f_sw: 25e3,
        }
    }

    #[test]
    fn bus_voltage_symmetric_pair() {
        let net = NetworkConfig::new(vec![1.0, 1.0], 4.0).unwrap();
        let v = solve_bus_voltage(&[10.0, 10.0], &net).unwrap();
        assert_relative_eq!(v, 80.0 / 9.0, max_relative = 1e-12);
    }

    #[test]
    fn bus_voltage_unequal_cables() {
        let net = NetworkConfig::new(vec![1.0, 2.0], 6.48).unwrap();
        let v = solve_bus_voltage(&[36.0, 36.0], &net).unwrap();
        assert_relative_eq!(v, 32.64179104477612, max_relative = 1e-12);
    }

    #[test]
    fn bus_voltage_dead_network_is_zero() {
        let net = NetworkConfig::new(vec![1.0, 2.0], 6.48).unwrap();
        assert_eq!(solve_bus_voltage(&[0.0, 0.0], &net).unwrap(), 0.0);
    }

    #[test]
    fn bus_voltage_rejects_non_finite() {
        let net = NetworkConfig::new(vec![1.0, 2.0], 6.48).unwrap();
        assert!(matches!(
            solve_bus_voltage(&[f64::NAN, 36.0], &net),
            Err(CoreError::NonFinite { .. })
        ));
    }

    #[test]
    fn bus_voltage_rejects_length_mismatch() {
        let net = NetworkConfig::new(vec![1.0, 2.0], 6.48).unwrap();
        assert!(matches!(
            solve_bus_voltage(&[36.0], &net),
            Err(CoreError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn bus_voltage_f32_smoke() {
        let net = NetworkConfig::<f32>::new(vec![1.0, 1.0], 4.0).unwrap();
        let v = solve_bus_voltage(&[10.0f32, 10.0], &net).unwrap();
        assert_relative_eq!(v, 80.0 / 9.0, max_relative = 1e-5);
    }

    #[test]
    fn network_rejects_non_positive_resistance() {
        assert!(NetworkConfig::new(vec![1.0, 0.0], 4.0).is_err());
        assert!(NetworkConfig::new(vec![1.0, 1.0], -4.0).is_err());
    }

    #[test]
    fn i_nom_matches_rating() {
        let p = params_100w();
        assert_relative_eq!(p.i_nom() * p.v_ref, p.p_rated, max_relative = 1e-9);
    }

    #[test]
    fn equilibrium_state_is_a_fixed_point() {
        let params = vec![params_100w(), params_100w()];
        let net = NetworkConfig::new(vec![1.0, 2.0], 6.48).unwrap();
        let vc = vec![36.0, 35.5];
        let v_bus = solve_bus_voltage(&vc, &net).unwrap();
        let il: Vec<f64> = vc
            .iter()
            .zip(&net.cable_resistances)
            .map(|(&v, &r)| (v - v_bus) / r)
            .collect();
        let duties: Vec<f64> = vc.iter().map(|&v| v / 60.0).collect();
        let state = PlantState::new(il.clone(), vc.clone());
        let next = plant_step(&state, &duties, &params, &net, 4e-6).unwrap();
        for j in 0..2 {
            assert_relative_eq!(next.inductor_currents[j], il[j], epsilon = 1e-9);
            assert_relative_eq!(next.capacitor_voltages[j], vc[j], epsilon = 1e-9);
        }
    }

    #[test]
    fn step_larger_than_half_switching_period_is_rejected() {
        let params = vec![params_100w(), params_100w()];
        let net = NetworkConfig::new(vec![1.0, 2.0], 6.48).unwrap();
        let state = PlantState::new(vec![0.0, 0.0], vec![0.0, 0.0]);
        let r = plant_step(&state, &[0.5, 0.5], &params, &net, 2.1e-5);
        assert!(matches!(r, Err(CoreError::StepTooLarge { .. })));
    }

    #[test]
    fn duty_outside_unit_interval_is_rejected() {
        let params = vec![params_100w(), params_100w()];
        let net = NetworkConfig::new(vec![1.0, 2.0], 6.48).unwrap();
        let state = PlantState::new(vec![0.0, 0.0], vec![0.0, 0.0]);
        assert!(plant_step(&state, &[1.2, 0.5], &params, &net, 4e-6).is_err());
        assert!(plant_step(&state, &[-0.1, 0.5], &params, &net, 4e-6).is_err());
    }

    #[test]
    fn single_converter_settles_to_steady_state() {
        let params = vec![params_100w()];
        let net = NetworkConfig::new(vec![1.0], 6.48).unwrap();
        let duties = [0.5];
        let mut state = PlantState::new(vec![0.0], vec![0.0]);
        let dt = 4e-6;
        for _ in 0..12_500 {
            state = plant_step(&state, &duties, &params, &net, dt).unwrap();
        }
        let mut d_il = [0.0];
        let mut d_vc = [0.0];
        derivatives(
            &state.inductor_currents,
            &state.capacitor_voltages,
            &duties,
            &params,
            &net,
            &mut d_il,
            &mut d_vc,
        )
        .unwrap();
        assert!(d_il[0].abs() < 1e-6, "inductor residual {}", d_il[0]);
        assert!(d_vc[0].abs() < 1e-6, "capacitor residual {}", d_vc[0]);
    }

    #[test]
    fn output_currents_satisfy_kcl() {
        let net = NetworkConfig::new(vec![1.0, 2.0], 6.48).unwrap();
        let state = PlantState::new(vec![0.0, 0.0], vec![36.0, 35.0]);
        let currents = state.output_currents(&net).unwrap();
        let v_bus = state.bus_voltage(&net).unwrap();
        let total: f64 = currents.iter().sum();
        assert_relative_eq!(total, v_bus / 6.48, epsilon = 1e-12);
    }
}
