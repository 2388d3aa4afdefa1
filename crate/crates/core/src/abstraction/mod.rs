//! Structure-exploiting reductions: relevance abstraction of factored
//! models, deterministic goal regression, and bisimulation minimization.

mod minimize;
mod relevance;
mod strips;

pub use minimize::{
    initial_partition, lift_solution, quotient, refine_partition, refine_trace, Partition,
};
pub use relevance::{project_abstract, relevant_closure, reward_variables};
pub use strips::{
    execute_plan, regression_plan, strips_from_pso, strips_operators, strips_regress,
    RegressionPlan, StripsOp, SubgoalSet,
};
