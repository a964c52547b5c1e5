//! Dynamic models of nonsingular Gaussian CM_L, CM_F, reciprocal and Markov
//! sequences, and conversion between explicitly sample-equivalent models.
//!
//! A model is stored as its parameters ([`ModelSpec`]) and can be stacked
//! into `T x = ξ` with `Cov(ξ) = P`. Two models govern the same sequence
//! when `T1' P1⁻¹ T1 = T2' P2⁻¹ T2`; [`convert`] builds the unique target
//! model of a requested kind and the resulting [`EquivalencePair`] maps noise
//! realizations so both models produce the same sample path.
//!
//! ```
//! use cmseq_core::{convert, ConversionMethod, ForwardMarkovModel, ModelKind, NoiseRealization, SequenceShape};
//! use nalgebra::DMatrix;
//!
//! let shape = SequenceShape::new(1, 1).unwrap();
//! let one = || DMatrix::from_element(1, 1, 1.0);
//! let fwd = ForwardMarkovModel::new(shape, vec![one()], vec![one(), one()]).unwrap();
//! let pair = convert(&fwd.into(), ModelKind::BackwardMarkov, ConversionMethod::ClosedForm).unwrap();
//! let xi = NoiseRealization::from_slice(shape, &[1.0, 1.0]).unwrap();
//! let zeta = pair.map_noise(&xi).unwrap();
//! assert!((zeta.values()[1] - 2.0).abs() < 1e-12);
//! ```

pub mod equivalence;
pub mod error;
pub mod generate;
pub mod linalg;
pub mod model;
pub mod sampling;
pub mod structure;

pub use equivalence::{
    cml_to_reciprocal_noise_map, cml_to_reciprocal_params, convert, map_noise,
    markov_bwd_to_fwd_params, markov_fwd_to_bwd_params, markov_noise_map, model_from_information,
    ConversionMethod, EquivalencePair,
};
pub use error::{ModelError, Result};
pub use model::{
    covariance_from_information, BackwardMarkovModel, BlockMatrix, CmModel, Conditioning,
    Direction, ForwardMarkovModel, ModelKind, ModelSpec, NoiseRealization, ReciprocalModel,
    SequenceShape,
};
pub use sampling::{
    empirical_covariance, mapped_noise_covariance, sample, verify_equivalence,
    verify_equivalence_with, NoiseSampler, SampleBatch, VerificationReport,
    VerificationTolerances,
};
pub use structure::{
    check_cm_markov_condition, check_cm_reciprocal_condition, classify,
    reciprocal_condition_violations, MarkovCondition, StructurePattern, StructureReport,
    DEFAULT_TOL,
};
