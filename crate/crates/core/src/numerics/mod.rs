//! Dense linear algebra, affine layers, initialization and the RMSprop
//! optimizer. Everything the training core needs and nothing more.

mod layer;
mod matrix;
mod rmsprop;
mod rng;

pub use layer::{glorot_init, Activation, DenseLayer, LayerGrads};
pub use matrix::DenseMatrix;
pub use rmsprop::{RmsPropConfig, RmsPropState};
pub use rng::RngState;
