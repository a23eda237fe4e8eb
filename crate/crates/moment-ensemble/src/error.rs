//! Error type shared across the crate.

use thiserror::Error;

/// Errors reported by moment, ensemble, and scenario operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Two objects that must share a shape (grid vs. profile, sequence vs.
    /// sequence) disagree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An operation asked for a moment index beyond the truncation order.
    /// Sequences are dense up to `max_order`; indices past it are an error,
    /// never an implicit zero.
    #[error("moment order {needed} exceeds truncation order {max_order}")]
    OrderOverflow { needed: usize, max_order: usize },

    /// Invalid argument (non-positive step, degenerate bounds, bad config
    /// value, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A state left the admissible region during integration.
    #[error("integration blow-up at node {node} (t = {time}): |state| exceeded {bound}")]
    BlowUp { node: usize, time: f64, bound: f64 },

    /// The feedback law stalled: the control gradient vanished while the
    /// moment error was still large.
    #[error("feedback stall at t = {time}: gradient norm {gradient_norm:e} with error norm {error_norm:e}")]
    Stall {
        time: f64,
        gradient_norm: f64,
        error_norm: f64,
    },

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Malformed input file (CSV or config).
    #[error("parse error: {0}")]
    Parse(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
