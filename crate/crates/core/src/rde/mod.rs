//! Rough differential equations: the Davie scheme, flows and Jacobians,
//! Liouville's formula, and rough SDEs through the joint lift.

mod fields;
mod flow;
mod joint;
mod solver;

pub use fields::{jacobian_consistency, Augmented, ExprFields, LinearFields, Reversed, Smoothness, VectorFields};
pub use flow::{det_jacobian, determinant, flow_map, flow_with_jacobian, solve_flow, DeterminantPath, FlowSample};
pub use joint::{build_joint_lift, solve_rough_sde, JointLift, MomentSummary, RoughSdeSolution};
pub use solver::{
    davie_advance, davie_step, integrate_range, self_convergence, solve_linear_rde, solve_rde, DavieWorkspace, DyadicStudy,
    StatePath,
};
