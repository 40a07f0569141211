//! Statistical downscaling of gridded ocean-surface wind to significant wave
//! height (Hs) at a single target point.
//!
//! The pipeline has four layers:
//!
//! * [`geo`] – spherical geodesy on a regular lat/lon grid: bearings,
//!   land-blocked great-circle paths, sea-point selection and fetch.
//! * [`features`] – projected wind, the global (per sea point) and local
//!   (wind-sea) predictors, and the windowed travel-time predictor used by
//!   the regression baseline.
//! * [`nn`] – a small reverse-mode network core (conv/pool/batchnorm/dense/
//!   dropout/LSTM/concat) with Adam and the two MSE losses.
//! * [`model`] – the two-stage model: a CNN mapping the instantaneous global
//!   predictor to a horizon of Hs contributions, and an LSTM head that reads
//!   the resulting prediction matrix together with the local predictor.
//!
//! [`eval`] holds metrics, blocked k-fold cross-validation over `t_max` and
//! the window-regression baseline; [`synth`] generates wind fields with a
//! planted travel-time kernel for end-to-end validation.

pub mod error;
pub mod eval;
pub mod features;
pub mod geo;
pub mod io;
pub mod kv;
pub mod model;
pub mod nn;
pub mod synth;

pub use error::{Error, Result};
pub use eval::{CvCurve, CvPoint, EvalReport};
pub use features::{Dataset, FeatureSet, HsSeries, ProjectionConvention, WindGrid};
pub use geo::{GridSpec, LandMask, LatLon, SeaPoint, SeaPointSet};
pub use model::{PredictionMatrix, Stage1Model, Stage2Model, TrainConfig};
pub use nn::{Mode, Network, Tensor};
