pub mod evaluate;
pub mod prepare;
pub mod spectrum;
pub mod sweep;
pub mod train;

pub use evaluate::{cmd_evaluate, EvaluateArgs};
pub use prepare::{cmd_prepare, cmd_synthesize, PrepareArgs, SynthesizeArgs};
pub use spectrum::{cmd_spectrum, SpectrumArgs};
pub use sweep::{cmd_sweep, SweepArgs};
pub use train::{cmd_train, TrainArgs};
