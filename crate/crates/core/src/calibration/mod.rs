//! Calibration data from three sources: self-generation with a temperature
//! schedule, contiguous windows of a real corpus, and uniform random tokens.

pub mod generate;
pub mod sampling;
pub mod schedule;
pub mod set;

pub use generate::{generate_example, MAX_EMPTY_SEGMENTS};
pub use sampling::sample_next_token;
pub use schedule::{schedule_temperature, TemperatureSchedule};
pub use set::{
    build_calibration_set, build_corpus_set, build_random_vocab_set, build_self_set, example_rng,
    CalibrationSet, CalibrationSpec, SourceKind,
};
