pub mod adapt;
pub mod classifier;
pub mod features;
pub mod latency;
pub mod pipeline;
pub mod preprocess;
pub mod session;
pub mod sim;
pub mod state;
pub mod stream;

pub use state::{AttentionState, NUM_STATES};
