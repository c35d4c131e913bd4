use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Network slice. The discriminant order (mMTC, URLLC, eMBB) is the order
/// used by user tuples, Rb allocations and per-slice arrays everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slice {
    Mmtc = 0,
    Urllc = 1,
    Embb = 2,
}

impl Slice {
    pub const ALL: [Slice; 3] = [Slice::Mmtc, Slice::Urllc, Slice::Embb];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Slice::Mmtc => "mmtc",
            Slice::Urllc => "urllc",
            Slice::Embb => "embb",
        }
    }
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Slice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mmtc" => Ok(Slice::Mmtc),
            "urllc" => Ok(Slice::Urllc),
            "embb" => Ok(Slice::Embb),
            other => Err(Error::Parameter(format!("unknown slice `{other}`"))),
        }
    }
}
