//! Small differentiable building blocks with explicit backward passes:
//! dense layers, layer normalization, an LSTM cell and Adam.

mod adam;
mod checkpoint;
mod layer_norm;
mod lstm;
mod mlp;
mod params;

pub use adam::{adam_step, Adam, AdamConfig, Moments};
pub use checkpoint::{load_params, read_params, save_params, write_params};
pub use layer_norm::{layer_norm_apply, layer_norm_backward};
pub use lstm::{lstm_step, LstmCell, LstmState, LstmTrace};
pub use mlp::{mlp_apply, mlp_backward, Activation, LayerSpec, Mlp, MlpTrace, NetworkSpec, LAYER_NORM_EPS};
pub use params::{GradientRecord, Layout, LayoutBuilder, ParamVector, Segment};
