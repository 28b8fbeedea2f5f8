//! Conditional random fields for sequence labeling, segmentation and trees.
//!
//! All models share one data model: a [`LabelAlphabet`], instances
//! ([`ChainInstance`], [`TreeInstance`]), a [`FeatureIndex`] built with a
//! frequency cutoff, and a flat weight vector aligned with that index.
//! Inference runs in log space throughout.
//!
//! ```
//! use crftk_core::{
//!     build_feature_index, chain, ChainInstance, Corpus, EncodedChain, LabelAlphabet, Templates,
//! };
//!
//! let labels = LabelAlphabet::new(["A", "B"]).unwrap();
//! let obs = vec![vec!["w=x".to_string()], vec!["w=y".to_string()]];
//! let data = vec![ChainInstance::new(obs, Some(vec![0, 1]), &labels).unwrap()];
//! let index = build_feature_index(Corpus::Chains(&data), &labels, Templates::chain(1), 1).unwrap();
//! let enc = EncodedChain::new(&index, &data[0]);
//! let pot = chain::ChainPotentials::new(&index, &vec![0.0; index.len()], &enc).unwrap();
//! assert_eq!(chain::viterbi(&pot).unwrap().0, vec![0, 0]);
//! ```

pub mod alphabet;
pub mod chain;
pub mod error;
pub mod eval;
pub mod features;
pub mod instance;
pub mod latent;
pub mod logspace;
pub mod model;
pub mod optim;
pub mod params;
pub mod semimarkov;
pub mod tree;

pub use alphabet::{LabelAlphabet, BOS};
pub use chain::{ChainPotentials, EncodedChain, TrellisResult};
pub use error::{CrfError, Result};
pub use eval::{ConfusionCounts, KappaMode, KappaReport, Prf, Span, SpanSet};
pub use features::{build_feature_index, Corpus, FeatureIndex, FeatureKey, FeatureRef, Templates};
pub use instance::{ChainInstance, TreeInstance, TreeNode};
pub use latent::{LatentMode, LatentObjectiveConfig, LatentTraining};
pub use model::{load_model, save_model, Model, ModelKind};
pub use optim::{fit, FitConfig, FitResult};
pub use params::ParameterVector;
pub use semimarkov::{Segment, SegmentLabeling, SegmentTrellis, SemiMarkovPotentials};
pub use tree::{TreePotentials, TreeTrellis};
