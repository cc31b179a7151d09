//! Closed-form sharing analysis for two converters on one bus.
//!
//! For terminal voltages V_1, V_2 behind cable resistances R_1, R_2 and a
//! bus load R_L, with D = R_L R_1 + R_L R_2 + R_1 R_2:
//!
//! ```text
//!  I_1 = (R_2 V_1 + R_L (V_1 - V_2)) / D
//!  I_2 = (R_1 V_2 + R_L (V_2 - V_1)) / D
//!  dI  = (2 R_L (V_1 - V_2) + R_2 V_1 - R_1 V_2) / D
//! ```
//!
//! Droop control adds a virtual resistance in series with each cable,
//! R'_j = R_j + R_dj. With matched references the mismatch collapses to
//! `dI = (R'_2 V_1 - R'_1 V_2) / D'`, which is zero exactly when
//! `R'_1 / R'_2 = V_1 / V_2` (the ratio condition the adaptive algorithm
//! steers toward).

use crate::{real, CoreError, Real};

/// Two-converter sharing figures in one bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct SharingAnalysis<T> {
    pub i_1: T,
    pub i_2: T,
    /// Current mismatch I_1 - I_2 [A].
    pub delta_i: T,
    /// Shared denominator D = R_L R'_1 + R_L R'_2 + R'_1 R'_2 [ohm^2].
    pub denominator: T,
    /// R'_1 / R'_2 - V_1 / V_2; zero at the equal-share operating point.
    pub ratio_residual: T,
}

fn check_finite<T: Real>(pairs: &[(&'static str, T)]) -> Result<(), CoreError> {
    for &(name, v) in pairs {
        if !v.is_finite() {
            return Err(CoreError::NonFinite { what: name.into() });
        }
    }
    Ok(())
}

fn check_positive<T: Real>(pairs: &[(&'static str, T)]) -> Result<(), CoreError> {
    for &(name, v) in pairs {
        if !v.is_finite() || v <= T::zero() {
            return Err(CoreError::NonPositive {
                name: name.into(),
                value: v.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    Ok(())
}

/// Steady-state branch currents (I_1, I_2) of the two-converter network.
pub fn steady_state_currents<T: Real>(
    v_dc1: T,
    v_dc2: T,
    r_l1: T,
    r_l2: T,
    r_load: T,
) -> Result<(T, T), CoreError> {
    check_finite(&[("v_dc1", v_dc1), ("v_dc2", v_dc2)])?;
    check_positive(&[("r_l1", r_l1), ("r_l2", r_l2), ("r_load", r_load)])?;
    let d = r_load * r_l1 + r_load * r_l2 + r_l1 * r_l2;
    let i_1 = (r_l2 * v_dc1 + r_load * (v_dc1 - v_dc2)) / d;
    let i_2 = (r_l1 * v_dc2 + r_load * (v_dc2 - v_dc1)) / d;
    Ok((i_1, i_2))
}

/// Current mismatch I_1 - I_2.
///
/// Without droop this is the full closed form including the source-difference
/// term. With droop gains `Some((r_d1, r_d2))` the virtual resistances are
/// folded into the cables and the matched-reference form is used; that form
/// drops the `2 R_L (V_1 - V_2)` term, so for unequal voltages it is not the
/// literal difference of the branch currents.
pub fn current_mismatch<T: Real>(
    v_dc1: T,
    v_dc2: T,
    r_l1: T,
    r_l2: T,
    r_load: T,
    droop: Option<(T, T)>,
) -> Result<T, CoreError> {
    check_finite(&[("v_dc1", v_dc1), ("v_dc2", v_dc2)])?;
    check_positive(&[("r_l1", r_l1), ("r_l2", r_l2), ("r_load", r_load)])?;
    match droop {
        None => {
            let d = r_load * r_l1 + r_load * r_l2 + r_l1 * r_l2;
            let two = real::<T>(2.0);
            Ok((two * r_load * (v_dc1 - v_dc2) + r_l2 * v_dc1 - r_l1 * v_dc2) / d)
        }
        Some((r_d1, r_d2)) => {
            check_finite(&[("r_d1", r_d1), ("r_d2", r_d2)])?;
            if r_d1 < T::zero() || r_d2 < T::zero() {
                return Err(CoreError::InvalidInput(
                    "droop gains must be non-negative".into(),
                ));
            }
            let r1 = r_l1 + r_d1;
            let r2 = r_l2 + r_d2;
            let d = r_load * r1 + r_load * r2 + r1 * r2;
            Ok((r2 * v_dc1 - r1 * v_dc2) / d)
        }
    }
}

/// Residual of the ratio condition, `r_1 / r_2 - v_1 / v_2`. Zero when the
/// effective resistances match the voltage ratio, i.e. when both branches
/// carry the same current.
pub fn ratio_condition_residual<T: Real>(r_1: T, r_2: T, v_1: T, v_2: T) -> T {
    r_1 / r_2 - v_1 / v_2
}

/// Bundled sharing figures with droop gains in series with the cables.
pub fn sharing_analysis<T: Real>(
    v_dc1: T,
    v_dc2: T,
    r_l1: T,
    r_l2: T,
    r_load: T,
    droop: Option<(T, T)>,
) -> Result<SharingAnalysis<T>, CoreError> {
    let (r_d1, r_d2) = droop.unwrap_or((T::zero(), T::zero()));
    if r_d1 < T::zero() || r_d2 < T::zero() {
        return Err(CoreError::InvalidInput(
            "droop gains must be non-negative".into(),
        ));
    }
    let r1 = r_l1 + r_d1;
    let r2 = r_l2 + r_d2;
    let (i_1, i_2) = steady_state_currents(v_dc1, v_dc2, r1, r2, r_load)?;
    Ok(SharingAnalysis {
        i_1,
        i_2,
        delta_i: i_1 - i_2,
        denominator: r_load * r1 + r_load * r2 + r1 * r2,
        ratio_residual: ratio_condition_residual(r1, r2, v_dc1, v_dc2),
    })
}

/// Points of the droop V-I line `v = v_ref - r_d * i + correction` over
/// `[i_min, i_max]`, for plotting. The range must lie within the converter's
/// rated span `[0, i_nom]`.
pub fn vi_characteristic<T: Real>(
    v_ref: T,
    r_d: T,
    correction: T,
    i_min: T,
    i_max: T,
    i_nom: T,
    points: usize,
) -> Result<Vec<(T, T)>, CoreError> {
    check_finite(&[
        ("v_ref", v_ref),
        ("r_d", r_d),
        ("correction", correction),
        ("i_min", i_min),
        ("i_max", i_max),
    ])?;
    if points < 2 {
        return Err(CoreError::InvalidInput(
            "vi_characteristic needs at least 2 points".into(),
        ));
    }
    if i_min < T::zero() || i_max > i_nom || i_min > i_max {
        return Err(CoreError::InvalidInput(format!(
            "current range [{i_min}, {i_max}] must lie within [0, {i_nom}]"
        )));
    }
    let span = i_max - i_min;
    let last = real::<T>((points - 1) as f64);
    Ok((0..points)
        .map(|k| {
            let i = i_min + span * real::<T>(k as f64) / last;
            (i, v_ref - r_d * i + correction)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Frozen against an independent dense nodal solve (see tests/circuit_props.rs
    // for the oracle itself).
    const I1_REF: f64 = 3.3582089552238807;
    const I2_REF: f64 = 1.6791044776119404;

    #[test]
    fn table_point_currents() {
        let (i1, i2) = steady_state_currents(36.0, 36.0, 1.0, 2.0, 6.48).unwrap();
        assert_relative_eq!(i1, I1_REF, max_relative = 1e-9);
        assert_relative_eq!(i2, I2_REF, max_relative = 1e-9);
    }

    #[test]
    fn table_point_mismatch() {
        let di = current_mismatch(36.0, 36.0, 1.0, 2.0, 6.48, None).unwrap();
        assert_relative_eq!(di, I1_REF - I2_REF, max_relative = 1e-9);
        assert_relative_eq!(di, 1.6791044776119404, max_relative = 1e-9);
    }

    #[test]
    fn droop_gains_that_balance_the_cables_zero_the_mismatch() {
        let di = current_mismatch(36.0, 36.0, 1.0, 2.0, 6.48, Some((1.0, 0.0))).unwrap();
        assert_relative_eq!(di, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn equal_voltages_equal_resistances_share_exactly() {
        let di = current_mismatch(36.0, 36.0, 2.0, 2.0, 6.48, None).unwrap();
        assert_eq!(di, 0.0);
    }

    #[test]
    fn mismatch_rejects_negative_droop() {
        assert!(current_mismatch(36.0, 36.0, 1.0, 2.0, 6.48, Some((-0.1, 0.0))).is_err());
    }

    #[test]
    fn currents_reject_non_positive_resistance() {
        assert!(steady_state_currents(36.0, 36.0, 0.0, 2.0, 6.48).is_err());
        assert!(steady_state_currents(36.0, 36.0, 1.0, 2.0, -1.0).is_err());
    }

    #[test]
    fn ratio_residual_examples() {
        assert_eq!(ratio_condition_residual(2.0, 2.0, 36.0, 36.0), 0.0);
        assert_relative_eq!(
            ratio_condition_residual(2.0, 4.0, 36.0, 36.0),
            -0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn sharing_bundle_matches_parts() {
        let a = sharing_analysis(36.0, 36.0, 1.0, 2.0, 6.48, None).unwrap();
        assert_relative_eq!(a.i_1, I1_REF, max_relative = 1e-9);
        assert_relative_eq!(a.i_2, I2_REF, max_relative = 1e-9);
        assert_relative_eq!(a.delta_i, a.i_1 - a.i_2, epsilon = 1e-12);
        assert_relative_eq!(a.denominator, 21.44, max_relative = 1e-12);
    }

    #[test]
    fn vi_line_endpoints() {
        let pts = vi_characteristic(36.0, 0.5, 0.0, 0.0, 2.0, 2.7778, 5).unwrap();
        assert_eq!(pts.len(), 5);
        assert_relative_eq!(pts[0].1, 36.0, epsilon = 1e-12);
        assert_relative_eq!(pts[4].0, 2.0, epsilon = 1e-12);
        assert_relative_eq!(pts[4].1, 35.0, epsilon = 1e-12);
    }

    #[test]
    fn vi_line_rejects_range_outside_rating() {
        assert!(vi_characteristic(36.0, 0.5, 0.0, 0.0, 3.0, 2.7778, 5).is_err());
        assert!(vi_characteristic(36.0, 0.5, 0.0, -0.5, 1.0, 2.7778, 5).is_err());
        assert!(vi_characteristic(36.0, 0.5, 0.0, 0.0, 1.0, 2.7778, 1).is_err());
    }
}
