//! Forgetting-curve scheduled memory replay for continual learning.
//!
//! Replay timing comes from a model-centric clock: time advances by the norm
//! of every applied parameter update, a warm-up window calibrates one
//! "virtual day", and spaced-repetition day lists are mapped onto that axis.
//! Replay strength follows the ratio between recent and baseline update
//! intensity and scales an L2 penalty anchored at the previous task's
//! parameters.
//!
//! Every numeric type is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common double-precision instantiations.

pub mod clock;
pub mod error;
pub mod memory;
pub mod metrics;
pub mod modulator;
mod scalar;
pub mod schedule;
pub mod trainer;

pub use clock::{compute_delta, ClockConfig, ClockPhase, ModelClock, UpdateDelta};
pub use error::{Error, Result};
pub use memory::{Capacity, Example, ReplayBuffer};
pub use metrics::{backward_transfer, overall_performance, EvalMatrix};
pub use modulator::{anchor_penalty, replay_loss, replay_strength, ModulatorConfig, ParameterSnapshot};
pub use scalar::Scalar;
pub use schedule::{
    calibrate, make_variant, simulate, HumanSchedule, ReplaySchedule, ReplayTimer, ScheduleKind, ScheduleMode,
};
pub use trainer::{run_sequence, Learner, RunMode, TinyNet, TrainConfig};

pub type Clock = ModelClock<f64>;
pub type Clock32 = ModelClock<f32>;
pub type Schedule = ReplaySchedule<f64>;
pub type Modulator = ModulatorConfig<f64>;
pub type Buffer = ReplayBuffer<f64>;
pub type Matrix = EvalMatrix<f64>;
pub type Net = TinyNet<f64>;
pub type Net32 = TinyNet<f32>;
pub type Config = TrainConfig<f64>;
pub type Config32 = TrainConfig<f32>;
