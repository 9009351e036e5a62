pub mod element;
pub mod error;
pub mod par;
pub mod tensor;

pub use element::Element;
pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
pub mod checkpoint;
pub mod param;
pub mod model;
pub mod data;
pub mod infer;
pub mod metrics;
pub mod train;
