//! Numeric building blocks: dense matrices, a reverse-mode tape, parameter
//! storage and optimizers.

mod checkpoint;
mod graph;
mod matrix;
mod optim;
mod params;
mod quant;

pub use checkpoint::{Checkpoint, TensorData, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use graph::{softmax_rows, softmax_xent_diag_value, Graph, Var, LAYER_NORM_EPS};
pub use matrix::{cosine, dot, l2_norm, sigmoid, Matrix};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{Grads, ParamId, ParamSet};
pub use quant::{affine_params, dequantize_value, fake_quant, quantize_value, QuantizedTensor, SCALE_FLOOR};
