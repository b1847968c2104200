//! Hierarchical spatiotemporal oriented-energy features for video volumes.
//!
//! The pipeline filters an `(x, y, t)` volume with ten steered third-order
//! Gaussian derivatives, splits each response into squared positive and
//! negative parts, divisively normalizes across orientation, pools in
//! spacetime and across parent channels, and feeds the result back through
//! the same filters. Global channel sums of the last layer form a
//! descriptor compared with the Bhattacharyya coefficient.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod filterbank;
pub mod layer;
pub mod network;
pub mod recognition;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
pub use filterbank::{
    conv_oriented, conv_separable, g3_basis, icosa_directions, steering_coeffs, DirectionSet, Padding,
    SeparableKernel3D, SteerableBasis,
};
pub use layer::{
    cc_pool, derive_pooling_params, normalize_group, rectify_two_path, run_layer, st_pool, Bank, ChannelTag,
    FeatureMaps, PoolingParams, SignPath,
};
pub use network::{describe, extract_descriptor, forward, plan, Descriptor, FeatureHierarchy, NetworkConfig, Plan};
pub use recognition::{bhattacharyya, loo_eval, ncc_classify, nn_classify, Classifier, EvalReport, LabeledDescriptor};
pub use synth::{make_dataset, move_stop, moving_sinusoid, picket_fence, PatternKind, PatternSpec};
pub use volume::{build_pyramid, load_volume, num_scales, FrameSource, Volume};
