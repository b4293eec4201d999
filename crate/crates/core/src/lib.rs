//! Projective normality of ample line bundles on complex abelian varieties,
//! decided numerically from theta function evaluations.
//!
//! The pipeline: sample or load a period matrix ([`torus`]), evaluate the
//! canonical theta basis ([`theta`]), measure ranks of evaluation matrices
//! ([`ranklab`]) and assemble the multiplication map verdicts ([`normality`]).

pub mod cli;
pub mod error;
pub mod normality;
pub mod ranklab;
pub mod report;
pub mod theta;
pub mod torus;

pub use error::{Error, Result};
pub use normality::{full_check, NormalityVerdict};
pub use ranklab::{RankReport, Tolerances};
pub use theta::{Section, ThetaSection};
pub use torus::{PolarizationType, RiemannMatrix, TorsionPoint, TorusPoint};
