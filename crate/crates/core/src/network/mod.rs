//! Hand-differentiated layer stacks and the two-stage joint network.
//!
//! Every hidden layer is `linear → batch-norm → ReLU → dropout`. The
//! enhancement stack ends in a linear regression head producing the 429-dim
//! enhanced window; the recognition stack consumes that window and ends in a
//! softmax over phone classes.

mod checkpoint;
mod init;
mod joint;
mod layers;
mod loss;
mod stack;

pub use checkpoint::{Checkpoint, RngState, TrainerState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use init::{glorot_init, glorot_limit};
pub use joint::{GradientSet, JointForward, JointNetwork, JointTrace, Model, NetConfig};
pub use layers::{softmax_rows, BatchNorm, BnCache, Linear};
pub use loss::{losses, mse_grad, mse_loss, nll_grad_logits, nll_loss, LossValues, PROB_FLOOR};
pub use stack::{Head, HiddenLayer, HiddenTrace, LayerGrads, LayerOptions, Stack, StackGrads, StackTrace};

use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point element type of a network (`f32` for training runs, `f64`
/// for gradient checks).
pub trait Real:
    LinalgScalar + Float + NumAssign + FromPrimitive + ScalarOperand + Debug + Display + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}
