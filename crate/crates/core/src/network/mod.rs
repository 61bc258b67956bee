//! Feed-forward networks of emulators and dynamic linear models, and the
//! closed-form moment propagation through them.

mod graph;
mod integrals;
mod linked;
mod mdm;

pub use graph::{
    propagate, propagate_horizon, Input, Node, NodeGraph, NodeModel, NodeMoments, Propagation,
    PropagationOptions, Shock, ShockSide, StepInputs,
};
pub use integrals::{gauss_kernel_linear, gauss_kernel_mean, gauss_kernel_second};
pub use linked::{linked_gp_moments, LinkedMoments};
pub use mdm::{mdm_marginal, mdm_moments, parent_slot_covariance, MdmMarginal};
