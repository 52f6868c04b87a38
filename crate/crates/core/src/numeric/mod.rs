//! Dense values, reverse-mode differentiation, losses and the optimizer.

pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;
pub mod tensor;

pub use gradcheck::{check_param_gradients, gradient_check, GroupCheck, DEFAULT_STEP};
pub use graph::{
    bce_loss, cosine_similarity, kl_divergence, sigmoid, softmax, Backward, Gradients, Graph, ParamGrad, Var,
};
pub use optim::{adagrad_step, AdaGrad, ADAGRAD_EPS};
pub use params::{Init, Param, ParamGroup, ParamId, ParamKind, ParamStore};
pub use tensor::Tensor;
