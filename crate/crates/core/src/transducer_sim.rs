//! Emulated sensors and actuators bound to ITE channels.
//!
//! Sensors are deterministic per seed and always emit values inside the
//! channel's declared range, on its resolution grid. Actuators only change
//! state when handed an admissible value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{Number, Value};

use crate::ite_model::{ChannelDescriptor, DataType, Decimal3, FieldDescriptor, IteDescriptor};

/// A value carried by a channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reading {
    Number(Decimal3),
    Text(String),
}

impl Reading {
    pub fn as_number(&self) -> Option<Decimal3> {
        match self {
            Reading::Number(d) => Some(*d),
            Reading::Text(_) => None,
        }
    }
}

/// JSON form of a reading: integers for integer and Boolean fields, floats otherwise.
pub fn reading_to_json(field: &FieldDescriptor, reading: &Reading) -> Value {
    match reading {
        Reading::Text(text) => Value::String(text.clone()),
        Reading::Number(d) => match field.data_type {
            DataType::UnsignedInt | DataType::Int | DataType::Boolean if d.is_integral() => {
                Value::Number(Number::from(d.thousandths() / 1000))
            }
            _ => Number::from_f64(d.to_f64()).map_or(Value::Null, Value::Number),
        },
    }
}

/// Interprets a JSON value as a reading for `field`. `None` when the shape is wrong.
pub fn reading_from_json(field: &FieldDescriptor, value: &Value) -> Option<Reading> {
    match (field.data_type, value) {
        (DataType::String, Value::String(s)) => Some(Reading::Text(s.clone())),
        (DataType::String, _) => None,
        (DataType::Boolean, Value::Bool(b)) => Some(Reading::Number(Decimal3::from_int(i64::from(*b)))),
        (_, Value::Number(n)) => {
            let exact = if let Some(i) = n.as_i64() {
                i.checked_mul(1000).map(Decimal3::from_thousandths)
            } else if let Some(u) = n.as_u64() {
                i64::try_from(u)
                    .ok()
                    .and_then(|i| i.checked_mul(1000))
                    .map(Decimal3::from_thousandths)
            } else {
                n.as_f64().and_then(Decimal3::from_f64_exact)
            };
            exact.map(Reading::Number)
        }
        _ => None,
    }
}

/// Rounds `raw` (in thousandths) onto the field's grid and clamps it to the field's range.
fn snap(field: &FieldDescriptor, raw: f64) -> Decimal3 {
    let min = field.min_value.thousandths();
    let top = field.top_of_grid().thousandths();
    let clamped = raw.clamp(min as f64, top as f64);
    let t = match field.data_type {
        DataType::Boolean => {
            if clamped >= 500.0 {
                1000
            } else {
                0
            }
        }
        _ => {
            let mut res = field.resolution.thousandths();
            if res == 0 && matches!(field.data_type, DataType::UnsignedInt | DataType::Int) {
                res = 1000;
            }
            if res == 0 {
                clamped.round() as i64
            } else {
                let steps = ((clamped - min as f64) / res as f64).round() as i64;
                min + steps * res
            }
        }
    };
    let top = match field.data_type {
        DataType::UnsignedInt | DataType::Int if field.resolution == Decimal3::ZERO => {
            top.div_euclid(1000) * 1000
        }
        _ => top,
    };
    Decimal3::from_thousandths(t.clamp(min, top.max(min)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Constant(Decimal3),
    /// Moves by `±step` every tick, staying inside the bounds.
    RandomWalk { step: Decimal3 },
    /// `mid + amplitude * sin(2π tick / period)`; the default amplitude spans the whole range.
    Sinusoid {
        period_ticks: u64,
        amplitude: Option<Decimal3>,
    },
    /// Fixed text for `String` fields.
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorProfile {
    pub generator: Generator,
    pub seed: u64,
}

impl SensorProfile {
    /// Random walk with a step of roughly 1% of the range (at least one grid step).
    pub fn default_for(field: &FieldDescriptor, seed: u64) -> Self {
        let generator = match field.data_type {
            DataType::String => Generator::Text(field.units.clone()),
            DataType::Boolean => Generator::RandomWalk {
                step: Decimal3::ONE,
            },
            _ => {
                let span = field.max_value.thousandths() - field.min_value.thousandths();
                let mut step = (span / 100).max(field.resolution.thousandths()).max(1);
                if matches!(field.data_type, DataType::UnsignedInt | DataType::Int) {
                    step = step.max(1000);
                }
                Generator::RandomWalk {
                    step: Decimal3::from_thousandths(step),
                }
            }
        };
        Self { generator, seed }
    }
}

#[derive(Debug, Clone)]
struct WalkState {
    tick: u64,
    value: Decimal3,
    rng: ChaCha8Rng,
}

/// An emulated sensor channel.
#[derive(Debug, Clone)]
pub struct Sensor {
    field: FieldDescriptor,
    profile: SensorProfile,
    walk: Option<WalkState>,
}

impl Sensor {
    pub fn new(field: FieldDescriptor, profile: SensorProfile) -> Self {
        Self {
            field,
            profile,
            walk: None,
        }
    }

    pub fn field(&self) -> &FieldDescriptor {
        &self.field
    }

    fn midpoint(&self) -> Decimal3 {
        let mid = (self.field.min_value.thousandths() + self.field.max_value.thousandths()) as f64
            / 2.0;
        snap(&self.field, mid)
    }

    /// Value at `tick`. Reproducible for a given seed; ticks may be sampled in any order.
    pub fn sample(&mut self, tick: u64) -> Reading {
        let field = &self.field;
        match &self.profile.generator {
            Generator::Text(text) => Reading::Text(text.clone()),
            Generator::Constant(value) => Reading::Number(snap(field, value.thousandths() as f64)),
            Generator::Sinusoid {
                period_ticks,
                amplitude,
            } => {
                let min = field.min_value.thousandths() as f64;
                let max = field.max_value.thousandths() as f64;
                let mid = (min + max) / 2.0;
                let amp = amplitude.map_or((max - min) / 2.0, |a| a.thousandths() as f64);
                let period = (*period_ticks).max(1);
                let phase = (tick % period) as f64 / period as f64;
                let raw = mid + amp * (2.0 * std::f64::consts::PI * phase).sin();
                Reading::Number(snap(field, raw))
            }
            Generator::RandomWalk { step } => {
                let step = step.thousandths() as f64;
                let restart = self.walk.as_ref().is_none_or(|w| w.tick > tick);
                if restart {
                    self.walk = Some(WalkState {
                        tick: 0,
                        value: self.midpoint(),
                        rng: ChaCha8Rng::seed_from_u64(self.profile.seed),
                    });
                }
                let walk = self.walk.as_mut().expect("initialized above");
                while walk.tick < tick {
                    let up: bool = walk.rng.random();
                    let mut next = walk.value.thousandths() as f64 + if up { step } else { -step };
                    // Reflect off the bounds instead of sticking to them.
                    if next > field.max_value.thousandths() as f64
                        || next < field.min_value.thousandths() as f64
                    {
                        next = walk.value.thousandths() as f64 + if up { -step } else { step };
                    }
                    walk.value = snap(field, next);
                    walk.tick += 1;
                }
                Reading::Number(walk.value)
            }
        }
    }
}

/// An emulated actuator channel. Defaults to the minimum of its range.
#[derive(Debug, Clone)]
pub struct Actuator {
    request: FieldDescriptor,
    current: Reading,
    default: Reading,
}

impl Actuator {
    pub fn new(request: FieldDescriptor) -> Self {
        let default = match request.data_type {
            DataType::String => Reading::Text(String::new()),
            _ => Reading::Number(request.min_value),
        };
        Self {
            request,
            current: default.clone(),
            default,
        }
    }

    pub fn field(&self) -> &FieldDescriptor {
        &self.request
    }

    pub fn current(&self) -> &Reading {
        &self.current
    }

    pub fn default_value(&self) -> &Reading {
        &self.default
    }

    /// Stores `value` when it is in range and on the resolution grid.
    pub fn apply(&mut self, value: Decimal3) -> bool {
        if !self.request.data_type.is_numeric() || !self.request.admits(value) {
            return false;
        }
        self.current = Reading::Number(value);
        true
    }

    /// Applies a JSON value; shape mismatches are rejected like out-of-range values.
    pub fn apply_json(&mut self, value: &Value) -> bool {
        match reading_from_json(&self.request, value) {
            Some(Reading::Number(d)) => self.apply(d),
            Some(Reading::Text(text)) => {
                self.current = Reading::Text(text);
                true
            }
            None => false,
        }
    }

    pub fn reset(&mut self) {
        self.current = self.default.clone();
    }
}

/// Live transducers for every channel of an ITE, in ITE order.
#[derive(Debug, Clone)]
pub struct ChannelBank {
    pub sensors: Vec<Sensor>,
    pub actuators: Vec<Actuator>,
}

impl ChannelBank {
    /// Binds default profiles; sensor `i` is seeded with `seed + i`.
    pub fn bind(ite: &IteDescriptor, seed: u64) -> Self {
        let sensors = ite
            .sensors
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let field = c.response_format.clone();
                let profile = SensorProfile::default_for(&field, seed.wrapping_add(i as u64));
                Sensor::new(field, profile)
            })
            .collect();
        let actuators = ite
            .actuators
            .iter()
            .map(|c: &ChannelDescriptor| Actuator::new(c.value_field().clone()))
            .collect();
        Self { sensors, actuators }
    }
}
