//! Compactly supported wavelets on `[0, 1]` (periodized).

pub mod ball;
pub mod family;
pub mod spikes;
pub mod transform;

pub use ball::{
    ball_membership, distance_bounds, distance_upper, project_to_ball, DistanceBounds, HolderBall,
};
pub use family::{build_family, evaluate_wavelet, shared_family, WaveletFamily};
pub use spikes::{realizable_count, spike_set, spike_set_scaled, Spike, SpikeSet, SpikeTable};
pub use transform::{analyze, holder_norm, synthesize, WaveletCoefficients};
