//! Per-target tanh networks, the regularized training losses and the
//! trained surrogate.

pub mod loss;
pub mod mlp;
pub mod model;
pub mod train;

pub use loss::{LossContext, Penalty, ResidualUnits};
pub use mlp::{Jet, Mlp};
pub use model::{DomainPolicy, Order, StateJet, SurrogateModel};
pub use train::{init_nets, train, train_with_progress, AdamConfig, EpochLoss, LossConfig};
