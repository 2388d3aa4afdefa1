//! Factored models: state variables, decision trees, two-slice networks,
//! probabilistic STRIPS operators and grounding to flat models.

mod ground;
mod model;
pub mod tree;

pub use ground::{action_successors, apply_pso, ground, ground_with_cap, net_successors};
pub use model::{
    persistence_cpt, point_dist, CptTree, EffectTree, FactoredAction, FactoredMdp, Outcome,
    ProbStripsOp, TwoSliceNet, VariableSpec, GROUNDING_CAP,
};
pub use tree::{
    combine, for_each_assignment, simplify_tree, sum_trees, DecisionTree, Interval, IntervalTree,
    PolicyTree, TreeNode, ValueTree, VarRef,
};
