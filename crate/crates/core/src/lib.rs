//! Identifiability of blind gain and phase calibration, `Y = diag(lambda) A X`.
//!
//! * [`cxmat`]: dense complex matrices, DFT, Kronecker products, SVD rank and null spaces.
//! * [`model`]: instances, seeded generic draws, scale alignment, sample-complexity thresholds.
//! * [`certify`]: rank certificates for the subspace and joint-sparse models.
//! * [`construct`]: explicit DFT-based instances that attain the certificate.
//! * [`recover`]: null-space recovery of `(lambda, X)` up to scale.
//! * [`experiment`]: phase-transition sweeps with CSV output.
//! * [`cli`]: the `bgpc` command-line front end.

pub mod certify;
pub mod cli;
pub mod construct;
pub mod cxmat;
pub mod error;
pub mod experiment;
pub mod fmt;
pub mod model;
pub mod recover;

pub use certify::{certify_joint_sparse, certify_subspace, CertificateReport, CertifyOptions, Mode, Verdict};
pub use construct::{construct_claim1, construct_claim2, verify_claim1_rank, ClaimVerification, ConstructedInstance};
pub use cxmat::{dft_matrix, kronecker, left_null_space, null_space, numeric_rank, ComplexMatrix, RankResult};
pub use error::{BgpcError, Result};
pub use experiment::{run_sweep, PhaseCell, SweepConfig};
pub use model::{
    align_scale, forward, min_samples_joint_sparse, min_samples_subspace, random_instance, BgpcInstance, ScaleAlignment,
};
pub use recover::{recover, recover_joint_sparse, RecoverOptions, RecoveryResult, RecoveryStatus};
