//! Exit codes: 0 success, 1 other failure, 2 parse or validation error,
//! 3 infeasible system, 4 resource bound exceeded.

use cmps_core::cmps::MpsError;
use cmps_core::indexing::IndexError;
use cmps_core::optimizer::OptimizerError;
use cmps_core::problems::ProblemError;
use thiserror::Error;

pub const USAGE: u8 = 2;
pub const INFEASIBLE: u8 = 3;
pub const RESOURCE: u8 = 4;

/// Bad flag combinations or values that clap cannot check.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// An input file that cannot be read.
#[derive(Debug, Error)]
#[error("cannot read {path}: {source}")]
pub struct InputError {
    pub path: String,
    pub source: std::io::Error,
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        let code = if let Some(e) = cause.downcast_ref::<ProblemError>() {
            Some(problem(e))
        } else if let Some(e) = cause.downcast_ref::<OptimizerError>() {
            Some(optimizer(e))
        } else if let Some(e) = cause.downcast_ref::<MpsError>() {
            Some(mps(e))
        } else if let Some(e) = cause.downcast_ref::<IndexError>() {
            Some(index(e))
        } else if cause.is::<UsageError>() || cause.is::<InputError>() {
            Some(USAGE)
        } else {
            None
        };
        if let Some(code) = code {
            return code;
        }
    }
    1
}

fn index(e: &IndexError) -> u8 {
    match e {
        IndexError::Infeasible => INFEASIBLE,
        IndexError::Geometry(_) => RESOURCE,
        IndexError::InvalidSystem(_) => USAGE,
    }
}

fn mps(e: &MpsError) -> u8 {
    match e {
        MpsError::Index(e) => index(e),
        MpsError::Geometry(_) => RESOURCE,
        MpsError::InvalidArgument(_) | MpsError::Parse { .. } => USAGE,
        _ => 1,
    }
}

fn problem(e: &ProblemError) -> u8 {
    match e {
        ProblemError::Index(e) => index(e),
        ProblemError::Infeasible => INFEASIBLE,
        ProblemError::TooLarge { .. } => RESOURCE,
        _ => USAGE,
    }
}

fn optimizer(e: &OptimizerError) -> u8 {
    match e {
        OptimizerError::Mps(e) => mps(e),
        OptimizerError::InvalidConfig(_) => USAGE,
        OptimizerError::Cost(_) => 1,
    }
}
