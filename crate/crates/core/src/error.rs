use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("integration failure at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("jump probability per step {dp:.4} at t = {time} is not below 0.1; reduce dt")]
    StepSize { dp: f64, time: f64 },

    #[error("pulse calibration failed: {0}")]
    Calibration(String),

    #[error("event classification failed: {0}")]
    Classification(String),

    #[error("no coincidence events to post-select (p2ph = 0)")]
    NoPostSelection,
}

pub type Result<T> = std::result::Result<T, Error>;
