use alloc::boxed::Box;
use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} index {index} out of range (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix that must be positive definite failed to factor, even after
    /// the jitter retry.
    #[error("matrix is not positive definite")]
    Singular,

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }

    pub(crate) fn at_episode(self, episode: usize) -> Self {
        match self {
            e @ Error::Episode { .. } => e,
            e => Error::Episode {
                episode,
                source: Box::new(e),
            },
        }
    }

    /// Episode index attached to the error, if any.
    pub fn episode(&self) -> Option<usize> {
        match self {
            Error::Episode { episode, .. } => Some(*episode),
            _ => None,
        }
    }
}

pub(crate) fn check_index(what: &'static str, index: usize, limit: usize) -> Result<()> {
    if index < limit {
        Ok(())
    } else {
        Err(Error::Index { what, index, limit })
    }
}
