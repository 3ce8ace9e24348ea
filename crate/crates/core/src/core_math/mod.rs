//! Deterministic numeric building blocks: a dense `f64` tensor, stabilised
//! reductions over logits, a counter-based random stream and a central
//! difference gradient checker.

mod gradcheck;
mod rng;
mod stable;
mod tensor;

pub use gradcheck::{gradient_check, relative_error, FD_STEP};
pub use rng::RngStream;
pub use stable::{argmax, log_softmax, logsumexp, softmax};
pub use tensor::Tensor;
