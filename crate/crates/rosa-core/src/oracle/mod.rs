//! Exact tabular analysis of the switching-control shaping game.

pub mod invariance;
pub mod mdp;
pub mod mg;
pub mod ops;
pub mod qlearn;
pub mod suite;

pub use invariance::{invariance_check, InvarianceReport, ShaperStrategy};
pub use mdp::{solve_mdp, FiniteMdp, MdpSolution};
pub use mg::{random_mg, AugValue, RandomMgSpec, TabularMG};
pub use ops::{
    bellman_op, brute_force_values, continuation_op, greedy_policy, intervention_op, switch_rule, value_iterate,
    CtrlChoice,
};
pub use qlearn::{linear_fa_q, q_learning_switch, AlphaSchedule};
