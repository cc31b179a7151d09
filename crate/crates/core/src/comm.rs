//! Low-bandwidth measurement sharing between converters.
//!
//! Each converter periodically publishes its output current onto a shared
//! bus. A published value becomes visible to readers only after the
//! configured transport delay, and a publish may be lost with a configured
//! probability (the previous value then stays visible). The adaptive droop
//! update consumes the arithmetic mean of the visible currents of all
//! converters, the publisher's own included.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{CoreError, Real};

#[derive(Debug, Clone)]
struct Slot<T> {
    visible: Option<T>,
    /// Published but not yet past the transport delay: (publish time, value).
    in_flight: VecDeque<(T, T)>,
}

/// Shared current-broadcast bus.
#[derive(Debug, Clone)]
pub struct CommBus<T> {
    /// Seconds between publishes [s].
    pub sample_period: T,
    /// Seconds before a published value becomes visible [s].
    pub transport_delay: T,
    /// Probability that a single publish is lost.
    pub dropout_probability: f64,
    rng: ChaCha8Rng,
    slots: Vec<Slot<T>>,
}

impl<T: Real> CommBus<T> {
    pub fn new(
        converters: usize,
        sample_period: T,
        transport_delay: T,
        dropout_probability: f64,
        seed: u64,
    ) -> Result<Self, CoreError> {
        if converters == 0 {
            return Err(CoreError::InvalidInput(
                "communication bus needs at least one converter".into(),
            ));
        }
        if !sample_period.is_finite() || sample_period <= T::zero() {
            return Err(CoreError::NonPositive {
                name: "sample_period".into(),
                value: sample_period.to_f64().unwrap_or(f64::NAN),
            });
        }
        if !transport_delay.is_finite() || transport_delay < T::zero() {
            return Err(CoreError::InvalidInput(format!(
                "transport delay {transport_delay} must be non-negative"
            )));
        }
        if !(0.0..=1.0).contains(&dropout_probability) {
            return Err(CoreError::InvalidInput(format!(
                "dropout probability {dropout_probability} must lie in [0, 1]"
            )));
        }
        Ok(Self {
            sample_period,
            transport_delay,
            dropout_probability,
            rng: ChaCha8Rng::seed_from_u64(seed),
            slots: vec![
                Slot {
                    visible: None,
                    in_flight: VecDeque::new(),
                };
                converters
            ],
        })
    }

    pub fn converters(&self) -> usize {
        self.slots.len()
    }

    /// Makes initial values visible immediately, bypassing delay and dropout.
    /// Call once before the first read so every converter has a value.
    pub fn seed_initial(&mut self, currents: &[T]) -> Result<(), CoreError> {
        if currents.len() != self.slots.len() {
            return Err(CoreError::LengthMismatch {
                what: "initial communicated currents".into(),
                expected: self.slots.len(),
                got: currents.len(),
            });
        }
        for (slot, &i) in self.slots.iter_mut().zip(currents) {
            slot.visible = Some(i);
            slot.in_flight.clear();
        }
        Ok(())
    }

    /// Publishes converter `id`'s output current at time `now`. The value
    /// becomes visible after the transport delay unless this publish drops.
    pub fn publish(&mut self, id: usize, current: T, now: T) -> Result<(), CoreError> {
        if id >= self.slots.len() {
            return Err(CoreError::InvalidInput(format!(
                "converter index {id} out of range (bus has {})",
                self.slots.len()
            )));
        }
        if self.dropout_probability > 0.0 && self.rng.gen::<f64>() < self.dropout_probability {
            return Ok(());
        }
        self.slots[id].in_flight.push_back((now, current));
        Ok(())
    }

    fn reveal(&mut self, now: T) {
        let horizon = now - self.transport_delay;
        for slot in &mut self.slots {
            while let Some(&(ts, value)) = slot.in_flight.front() {
                if ts <= horizon {
                    slot.visible = Some(value);
                    slot.in_flight.pop_front();
                } else {
                    break;
                }
            }
        }
    }

    /// The value of converter `id` as visible at time `now`.
    pub fn visible(&mut self, id: usize, now: T) -> Result<T, CoreError> {
        if id >= self.slots.len() {
            return Err(CoreError::InvalidInput(format!(
                "converter index {id} out of range (bus has {})",
                self.slots.len()
            )));
        }
        self.reveal(now);
        self.slots[id]
            .visible
            .ok_or(CoreError::CommNotVisible { converter: id })
    }

    /// Arithmetic mean of the visible currents of all converters at `now`.
    pub fn average_current(&mut self, now: T) -> Result<T, CoreError> {
        self.reveal(now);
        let mut sum = T::zero();
        for (id, slot) in self.slots.iter().enumerate() {
            sum = sum
                + slot
                    .visible
                    .ok_or(CoreError::CommNotVisible { converter: id })?;
        }
        Ok(sum / crate::real::<T>(self.slots.len() as f64))
    }
}
