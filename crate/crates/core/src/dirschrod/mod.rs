//! Dirac-Schrödinger operators `λA(x) + iD₂` on a truncated line.

mod aps;
mod d2;
mod product;

use thiserror::Error;

use crate::numlin::NumError;

pub use aps::{
    assemble_aps, assemble_aps_with, fredholm_index, lambda_sweep, sf_index_verify, sf_index_verify_gauged,
    ApsAssembly, ApsScheme, IndexResult, LambdaCell, LambdaSweep, VerifyRecord, DEFAULT_TOL, MIN_GAP_RATIO,
};
pub use d2::{build_d2, D2Variant, DiscreteD2, PROPAGATION_SPEED};
pub use product::{
    bounded_transform, correspondence_check, dirac_schrodinger_pair, kucerovsky_check, product_operator,
    CorrespondencePoint, CorrespondenceReport, KucerovskyReport, ProductOperator, DEFAULT_MU,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DirSchrodError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("singular values not separated (gap ratio {gap_ratio:.3}): {detail}")]
    IllSeparated { gap_ratio: f64, detail: String },
    #[error(transparent)]
    Num(#[from] NumError),
}
