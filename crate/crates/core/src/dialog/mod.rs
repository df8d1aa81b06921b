//! Dialog acts, belief tracking and the simulated user environment.

mod act;
mod belief;
mod env;
mod log;

pub use act::{ActType, DialogAct};
pub use belief::{BeliefState, DomainBelief, Exchange, SlotEntry, SlotStatus};
pub use env::{
    reward_for, DialogEnv, EpisodeConfig, EpisodeResult, Outcome, RewardScheme, StepOutcome,
};
pub use log::{EpisodeLog, LogRecord, TurnRecord};
