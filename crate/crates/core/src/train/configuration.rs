use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// Source of audio for one training stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// Dry-powder inhaler recordings (DPI-Watch or dpi-like synthetic audio).
    Dpi,
    /// Metered-dose inhaler recordings (RDA or mdi-like synthetic audio).
    Mdi,
}

/// The four named pretrain / finetune / re-finetune compositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainingConfiguration {
    #[serde(rename = "LS_DPI")]
    LsDpi,
    #[serde(rename = "DPI_DPI")]
    DpiDpi,
    #[serde(rename = "MDI_MDI")]
    MdiMdi,
    #[serde(rename = "MDI_DPI")]
    MdiDpi,
}

impl TrainingConfiguration {
    pub const ALL: [Self; 4] = [Self::LsDpi, Self::DpiDpi, Self::MdiMdi, Self::MdiDpi];

    pub fn name(self) -> &'static str {
        match self {
            Self::LsDpi => "LS_DPI",
            Self::DpiDpi => "DPI_DPI",
            Self::MdiMdi => "MDI_MDI",
            Self::MdiDpi => "MDI_DPI",
        }
    }

    /// Pretraining corpus; `None` means an externally supplied pretrained checkpoint.
    pub fn pretrain_domain(self) -> Option<Domain> {
        match self {
            Self::LsDpi => None,
            Self::DpiDpi => Some(Domain::Dpi),
            Self::MdiMdi | Self::MdiDpi => Some(Domain::Mdi),
        }
    }

    pub fn finetune_domain(self) -> Domain {
        match self {
            Self::LsDpi | Self::DpiDpi => Domain::Dpi,
            Self::MdiMdi | Self::MdiDpi => Domain::Mdi,
        }
    }

    pub fn refinetune_domain(self) -> Option<Domain> {
        match self {
            Self::MdiDpi => Some(Domain::Dpi),
            _ => None,
        }
    }

    /// Domain of the reported test data. Every configuration is scored on
    /// dpi data; MDI_MDI is the un-adapted cross-device baseline.
    pub fn eval_domain(self) -> Domain {
        Domain::Dpi
    }
}

impl fmt::Display for TrainingConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainingConfiguration {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| TrainError::UnknownConfiguration(s.to_string()))
    }
}

impl From<TrainingConfiguration> for String {
    fn from(c: TrainingConfiguration) -> Self {
        c.name().to_string()
    }
}
