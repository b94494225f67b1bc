//! Library behind the `odorsim` command: scenario files, runs, checks and
//! plots.

pub mod app;
pub mod check;
pub mod plot;
pub mod run;
pub mod scenario;

use odor_consensus::sim::SimError;
use odor_consensus::smc::SmcError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("numerical abort: {0}")]
    Numerical(SimError),
    #[error("{0}")]
    SingularCoupling(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidConfig(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::SingularCoupling(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

pub(crate) fn singular_message(rank: usize, n: usize) -> String {
    format!(
        "L + B is singular (rank {rank} of {n}): the virtual leader must reach every agent \
         through a directed spanning tree"
    )
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => CliError::InvalidConfig(c.to_string()),
            SimError::Control(SmcError::SingularCoupling { rank, n }) => {
                CliError::SingularCoupling(singular_message(rank, n))
            }
            other => CliError::Numerical(other),
        }
    }
}
