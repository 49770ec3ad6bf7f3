//! Small differentiable classifiers with hand-written gradients.
//!
//! Two architectures are supported, multinomial logistic regression and a
//! one-hidden-layer `tanh` MLP. Everything is `f64`; parameters live in a
//! flat [`ParameterVector`] whose schema names the layers.

mod batch;
mod model;
mod params;

pub use batch::LabeledBatch;
pub use model::{
    confidences, init_model, loss_and_grad, per_sample_losses, predict, predict_accuracy,
    sgd_step, ModelArch,
};
pub use params::{LayerShape, ParameterVector};
