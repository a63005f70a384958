use thiserror::Error;

/// Errors raised while parsing, planning or executing an einsum over slot vectors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("malformed equation: {0}")]
    MalformedEquation(String),

    #[error("implicit output (no \"->\") is not supported")]
    ImplicitOutput,

    #[error("equation has {subscripts} input subscripts but {operands} operands were given")]
    OperandCountMismatch { subscripts: usize, operands: usize },

    #[error("too many operands: {0} (at most {max})", max = crate::equation::MAX_OPERANDS)]
    TooManyOperands(usize),

    #[error("operand {operand}: subscript has {labels} labels but the tensor has rank {rank}")]
    RankMismatch {
        operand: usize,
        labels: usize,
        rank: usize,
    },

    #[error("label '{label}' bound to extent {first} and {second}")]
    SizeConflict {
        label: char,
        first: usize,
        second: usize,
    },

    #[error("output label '{0}' does not appear in any input")]
    UnknownOutputLabel(char),

    #[error("label '{label}' repeated within {}", match .operand { Some(i) => format!("operand {i}"), None => "the output".to_string() })]
    RepeatedLabel { label: char, operand: Option<usize> },

    #[error("{required} slots required but only {slots} available")]
    DoesNotFit { required: usize, slots: usize },

    #[error("slot count {0} is not a power of two")]
    InvalidSlotCount(usize),

    #[error("level exhausted: {needed} more level(s) needed, {available} available (bootstrapping required)")]
    LevelExhausted { needed: u32, available: u32 },

    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("operation requires a ciphertext operand")]
    ExpectedCipher,

    #[error("operation requires a plaintext operand")]
    ExpectedPlain,

    #[error("at least one operand must be encrypted")]
    NoEncryptedOperand,

    #[error("tensor shape {shape:?} holds {expected} values, got {found}")]
    ShapeMismatch {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },

    #[error("packed tensor of shape {shape:?} has padded shape {found:?}, expected {expected:?}")]
    LayoutMismatch {
        shape: Vec<usize>,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

impl Error {
    /// Validation errors come from the equation or the operand shapes.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MalformedEquation(_)
                | Error::ImplicitOutput
                | Error::OperandCountMismatch { .. }
                | Error::TooManyOperands(_)
                | Error::RankMismatch { .. }
                | Error::SizeConflict { .. }
                | Error::UnknownOutputLabel(_)
                | Error::RepeatedLabel { .. }
                | Error::InvalidSlotCount(_)
                | Error::ShapeMismatch { .. }
                | Error::LayoutMismatch { .. }
                | Error::LengthMismatch { .. }
                | Error::NoEncryptedOperand
        )
    }

    /// Capacity errors: the problem does not fit the slot or level budget.
    pub fn is_capacity(&self) -> bool {
        matches!(
            self,
            Error::DoesNotFit { .. } | Error::LevelExhausted { .. }
        )
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedEquation(_) => "MalformedEquation",
            Error::ImplicitOutput => "ImplicitOutput",
            Error::OperandCountMismatch { .. } => "OperandCountMismatch",
            Error::TooManyOperands(_) => "TooManyOperands",
            Error::RankMismatch { .. } => "RankMismatch",
            Error::SizeConflict { .. } => "SizeConflict",
            Error::UnknownOutputLabel(_) => "UnknownOutputLabel",
            Error::RepeatedLabel { .. } => "RepeatedLabel",
            Error::DoesNotFit { .. } => "DoesNotFit",
            Error::InvalidSlotCount(_) => "InvalidSlotCount",
            Error::LevelExhausted { .. } => "LevelExhausted",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::ExpectedCipher => "ExpectedCipher",
            Error::ExpectedPlain => "ExpectedPlain",
            Error::NoEncryptedOperand => "NoEncryptedOperand",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::LayoutMismatch { .. } => "LayoutMismatch",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
