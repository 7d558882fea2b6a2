//! Identifier newtypes and the service-status vocabulary.
//!
//! All identifiers are zero-based indices. `new_checked` validates a value
//! against its exclusive upper bound; the plain constructors are used where
//! the range is already established by construction.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! index_newtype {
    ($(#[$meta:meta])* $name:ident, $kind:literal) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub usize);

        impl $name {
            pub const fn new(index: usize) -> Self {
                Self(index)
            }

            /// Builds the id, rejecting values outside `[0, bound)`.
            pub fn new_checked(index: usize, bound: usize) -> Result<Self> {
                if index < bound {
                    Ok(Self(index))
                } else {
                    Err(Error::Domain(format!(
                        "{} {} out of range [0, {})",
                        $kind, index, bound
                    )))
                }
            }

            pub const fn index(self) -> usize {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

index_newtype!(
    /// Client index in `[0, N)`.
    ClientId,
    "client"
);
index_newtype!(
    /// Slice index within one client, in `[0, D_i)`.
    SliceIdx,
    "slice"
);
index_newtype!(
    /// Group index in `[0, L)`.
    GroupId,
    "group"
);
index_newtype!(
    /// Training sequence index in `[0, B)`.
    SequenceId,
    "sequence"
);
index_newtype!(
    /// Phase (position within a sequence) in `[0, L)`.
    PhaseIdx,
    "phase"
);

/// Whether a system can still answer queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ServiceStatus {
    Available { surviving: usize },
    Failed { reason: String },
}

impl ServiceStatus {
    /// `Failed` exactly when nothing survives.
    pub fn from_surviving(surviving: usize, unit: &str) -> Self {
        if surviving == 0 {
            ServiceStatus::Failed {
                reason: format!("no surviving {unit}"),
            }
        } else {
            ServiceStatus::Available { surviving }
        }
    }

    pub fn is_available(&self) -> bool {
        matches!(self, ServiceStatus::Available { .. })
    }

    pub fn surviving(&self) -> usize {
        match self {
            ServiceStatus::Available { surviving } => *surviving,
            ServiceStatus::Failed { .. } => 0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ServiceStatus::Available { .. } => "Available",
            ServiceStatus::Failed { .. } => "Failed",
        }
    }
}
