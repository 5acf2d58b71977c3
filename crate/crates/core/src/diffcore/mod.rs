//! Dense tensors, reverse-mode differentiation, SGD and the lr schedule.

pub mod gradcheck;
mod graph;
mod loss;
mod optim;
mod schedule;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub(crate) use graph::stable_sigmoid;
pub use loss::{mean_prediction_entropy, one_hot, softmax_cross_entropy};
pub use optim::{sgd_nesterov_step, LrGroup, OptimState, Param};
pub use schedule::{grl_coeff, lr_at, ScheduleConfig};
pub use tensor::Tensor;
#[allow(unused_imports)]
pub(crate) use tensor::{matmul_bt_raw, softmax_in_place};

#[cfg(test)]
mod tests;
