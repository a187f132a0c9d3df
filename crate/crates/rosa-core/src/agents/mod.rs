//! The three learners (controller, switching policy, magnitude policy), the
//! shared PPO machinery and the collect-then-update training loop.

pub mod checkpoint;
pub mod policy;
pub mod ppo;
pub mod rollout;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointIndex};
pub use policy::{act, sample_logits, HeadRole, PolicyHead};
pub use ppo::{clipped_surrogate, gae, gae_bootstrap, ppo_update, PpoBatch, PpoDiagnostics};
pub use rollout::{
    collect_rollout, controller_reward, shaper_step_reward, Agents, BonusSource, MetricsRow, RolloutConfig,
    RolloutState, TransitionRecord,
};
pub use train::{
    build_agents, pbrs_potential, rollout_config, train, train_with, update_agents, NullObserver, RunObserver,
    TrainOptions, TrainOutcome, UpdateDiagnostics,
};
