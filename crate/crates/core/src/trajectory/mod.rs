//! Trajectories of tree shapes in a PCA subspace: Yeo-Johnson
//! Gaussianization, trajectory SRVFs, temporal registration, the
//! spatiotemporal registration pipeline and 4D geodesics.

mod basis;
mod pipeline;
mod srvf;
mod yj;

pub use basis::{
    devectorize, fit_basis, fit_basis_aligned, parse_basis, serialize_basis, vectorize,
    BasisFit, BasisOptions, Template, TreeShapeBasis, BASIS_FORMAT,
};
pub(crate) use basis::gram_pca;
pub(crate) use srvf::check_compatible;
pub use pipeline::{
    geodesic4d, geodesic4d_srvf, invert_trajectory, prepare_sequence, prepare_tree,
    spatiotemporal_pipeline, PipelineOptions, PipelineResult,
};
pub use srvf::{
    apply_time_warp, pca_srvf, pca_srvf_inverse, temporal_register, trajectory_dist_sq,
    PcaTrajectory, TemporalOptions, TemporalRegistration, TimeWarp, TrajectoryAlignmentCost,
    TrajectorySrvf,
};
pub use yj::{yj_fit, yj_forward, yj_inverse, yj_log_likelihood};
