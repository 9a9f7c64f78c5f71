//! Random-walk based top-n recommendation on user-item bipartite graphs.
//!
//! The pipeline: load interactions ([`dataset`]), fit a sparse item-item
//! model ([`item_model`]), assemble the walk transition matrix ([`walk`]),
//! score and rank ([`recommend`]), evaluate ([`eval`]), and inspect mixing
//! behavior ([`spectral`]).

pub mod dataset;
pub mod error;
pub mod eval;
pub mod item_model;
pub mod recommend;
pub mod sparse;
pub mod spectral;
pub mod walk;

pub use dataset::{EvalSplit, InteractionLog, NEGATIVES_PER_USER};
pub use error::{Error, Result};
pub use eval::{CoverageReport, EvalReport, GridPoint, Objective};
pub use item_model::{FitOptions, ItemModel, NeighborhoodSize};
pub use recommend::{ItemScorer, Recommendation, Strategy, StrategyScorer};
pub use sparse::{DenseVector, SparseMatrix, StochasticMatrix, ROW_SUM_TOLERANCE};
pub use spectral::{CouplingReport, DriftReport, Partition, SpectrumReport};
pub use walk::RecWalkModel;
