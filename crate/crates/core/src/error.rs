use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration or input value violates its invariants.
    #[error("invalid {field}: {reason}")]
    InvalidInput { field: String, reason: String },

    #[error("viewing direction ({row}, {col}) outside the {m_h}x{m_v} grid")]
    InvalidDirection { row: u32, col: u32, m_h: u32, m_v: u32 },

    #[error("no tiles requested by any user")]
    EmptyPartition,

    /// The instance admits no feasible allocation.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An exhaustive search or enumeration would exceed its configured cap.
    #[error("budget exceeded: {required} candidates required, cap is {cap}")]
    BudgetExceeded { required: u128, cap: u128 },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
