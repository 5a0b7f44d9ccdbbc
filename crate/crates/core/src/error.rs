use thiserror::Error;

use crate::model::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no route from {src} to {dst}")]
    NoRoute { src: NodeId, dst: NodeId },
    #[error("all paths unavailable")]
    AllPathsDown,
}
