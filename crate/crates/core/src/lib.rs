pub mod bowen;
pub mod clt;
pub mod error;
pub mod exec;
pub mod group;
pub mod lc;
pub mod markov;
pub mod measure;
pub mod qm;
pub mod sft;
pub mod stats;
pub mod thermo;

pub use error::{Error, Result};
pub use exec::Exec;
