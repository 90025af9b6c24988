/// Everything that can go wrong across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A disc was dropped into a full column.
    #[error("column {column} is full")]
    IllegalMove { column: usize },

    /// An operation that needs a playable position was given a terminal one.
    #[error("no legal moves from a terminal position")]
    NoLegalMoves,

    /// The training loss left the finite range, usually a step-size problem.
    #[error("training loss became non-finite during epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    /// A checkpoint byte stream did not match the expected layout.
    #[error("bad checkpoint: {0}")]
    Format(String),

    /// Aggregation was asked to summarize an empty set of runs.
    #[error("aggregation needs at least one completed run")]
    InsufficientRuns,

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A board in the text format could not be parsed.
    #[error("bad board text: {0}")]
    BoardText(String),
}
