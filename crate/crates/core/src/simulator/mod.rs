//! Random benchmark systems and stroboscopically sampled, projection-noise
//! limited measurement traces.

mod generate;
mod sampling;
mod traces;

pub use generate::{generate_random_system, haar_basis_map, SystemGenerator};
pub use sampling::{
    repetitions_for_envelope, resolve_adaptive_repetitions, SamplingPlan, Strategy, TimeGridConfig,
};
pub use traces::{multinomial, synthesize_traces, TraceSet, TraceSidecar};
