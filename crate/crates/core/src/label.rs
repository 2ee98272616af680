use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Binary target. Class indices are fixed: `Hof` = 0, `Not` = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "HOF")]
    Hof,
    #[serde(rename = "NOT")]
    Not,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Hof, Label::Not];

    pub fn index(self) -> usize {
        match self {
            Label::Hof => 0,
            Label::Not => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Hof),
            1 => Some(Label::Not),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Hof => "HOF",
            Label::Not => "NOT",
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Hof => Label::Not,
            Label::Not => Label::Hof,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label {0:?}; expected HOF or NOT")]
pub struct UnknownLabel(pub String);

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "HOF" => Ok(Label::Hof),
            "NOT" => Ok(Label::Not),
            other => Err(UnknownLabel(other.to_string())),
        }
    }
}
