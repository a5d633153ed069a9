use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

pub const NUM_CLASSES: usize = 3;

/// Inhaler sound event class. The declaration order is the fixed class order
/// used by confusion matrices and for breaking argmax ties.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventClass {
    Actuation,
    Exhalation,
    Inhalation,
}

impl EventClass {
    pub const ALL: [EventClass; NUM_CLASSES] =
        [EventClass::Actuation, EventClass::Exhalation, EventClass::Inhalation];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventClass::Actuation => "actuation",
            EventClass::Exhalation => "exhalation",
            EventClass::Inhalation => "inhalation",
        }
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label {0:?}")]
pub struct UnknownLabel(pub alloc::string::String);

impl FromStr for EventClass {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "actuation" => Ok(EventClass::Actuation),
            "exhalation" => Ok(EventClass::Exhalation),
            "inhalation" => Ok(EventClass::Inhalation),
            other => Err(UnknownLabel(other.into())),
        }
    }
}

/// Which corpus a segment came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DatasetTag {
    #[serde(rename = "dpi-watch")]
    DpiWatch,
    #[serde(rename = "rda")]
    Rda,
    #[serde(rename = "synthetic")]
    Synthetic,
    #[serde(rename = "synthetic-dpi")]
    SyntheticDpi,
    #[serde(rename = "synthetic-mdi")]
    SyntheticMdi,
}

impl DatasetTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetTag::DpiWatch => "dpi-watch",
            DatasetTag::Rda => "rda",
            DatasetTag::Synthetic => "synthetic",
            DatasetTag::SyntheticDpi => "synthetic-dpi",
            DatasetTag::SyntheticMdi => "synthetic-mdi",
        }
    }
}

impl fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetTag {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dpi-watch" => Ok(DatasetTag::DpiWatch),
            "rda" => Ok(DatasetTag::Rda),
            "synthetic" => Ok(DatasetTag::Synthetic),
            "synthetic-dpi" => Ok(DatasetTag::SyntheticDpi),
            "synthetic-mdi" => Ok(DatasetTag::SyntheticMdi),
            other => Err(UnknownLabel(other.into())),
        }
    }
}
