//! Data layer: disaster-event records, ingestion, imputation, splits and
//! synthetic scenario packs.

mod generate;
mod ingest;
mod mice;
mod pack;
pub mod regions;
mod splits;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_pack, GeneratorConfig, Region};
pub use ingest::{ingest_events, ColumnMapping, IngestOutcome, RowDiagnostic, TimeFormat};
pub use mice::{mean_impute, mice_impute, MiceConfig, MiceOutcome};
pub use pack::{
    EventTruth, FailureSpec, FailureTargetSpec, PackHeader, Reading, ScenarioPack, SensorSample,
};
pub use splits::{make_splits, SplitSpec, Splits, YearRange};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("empty input")]
    EmptyInput,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unimputable column {0}: no observed entries")]
    UnimputableColumn(usize),
    #[error("invalid imputation input: {0}")]
    InvalidImputation(String),
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("invalid scenario pack: {0}")]
    InvalidPack(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record on line {line}: {message}")]
    Record { line: usize, message: String },
}

/// The four hazard classes tracked end to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Wildfire,
    SevereStorm,
    Hurricane,
    Flood,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::Wildfire, Category::SevereStorm, Category::Hurricane, Category::Flood];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Category> {
        Self::ALL.get(i).copied()
    }

    /// Maps free-form incident type strings (FEMA `incidentType`, NOAA
    /// `EVENT_TYPE`, ...) onto a category by keyword.
    pub fn parse_loose(raw: &str) -> Option<Category> {
        let s = raw.trim().to_ascii_lowercase();
        if s.is_empty() {
            return None;
        }
        let has = |words: &[&str]| words.iter().any(|w| s.contains(w));
        if has(&["wildfire", "fire"]) {
            Some(Category::Wildfire)
        } else if has(&["hurricane", "tropical", "typhoon", "cyclone"]) {
            Some(Category::Hurricane)
        } else if has(&["flood", "inundation", "surge"]) {
            Some(Category::Flood)
        } else if has(&["storm", "tornado", "hail", "thunder", "wind", "lightning", "blizzard"]) {
            Some(Category::SevereStorm)
        } else {
            None
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::Wildfire => "Wildfire",
            Category::SevereStorm => "SevereStorm",
            Category::Hurricane => "Hurricane",
            Category::Flood => "Flood",
        };
        f.write_str(s)
    }
}

/// Classification target: a hazard category or "no hazard".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventClass {
    Wildfire,
    SevereStorm,
    Hurricane,
    Flood,
    None,
}

impl EventClass {
    pub const ALL: [EventClass; 5] = [
        EventClass::Wildfire,
        EventClass::SevereStorm,
        EventClass::Hurricane,
        EventClass::Flood,
        EventClass::None,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<EventClass> {
        Self::ALL.get(i).copied()
    }

    pub fn category(self) -> Option<Category> {
        Category::from_index(self.index())
    }
}

impl From<Category> for EventClass {
    fn from(c: Category) -> Self {
        EventClass::ALL[c.index()]
    }
}

impl From<Option<Category>> for EventClass {
    fn from(c: Option<Category>) -> Self {
        c.map_or(EventClass::None, EventClass::from)
    }
}

/// Fixed-length feature row with an observation mask (`true` = observed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl FeatureVector {
    pub fn observed(values: Vec<f64>) -> Self {
        let mask = vec![true; values.len()];
        FeatureVector { values, mask }
    }

    /// Missing entries are stored as `0.0` with a `false` mask bit.
    pub fn from_options(values: &[Option<f64>]) -> Self {
        FeatureVector {
            values: values.iter().map(|v| v.unwrap_or(0.0)).collect(),
            mask: values.iter().map(Option::is_some).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.mask[i].then(|| self.values[i])
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|m| *m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisasterEvent {
    pub event_id: String,
    /// UTC epoch seconds.
    pub onset_time: i64,
    pub end_time: Option<i64>,
    pub category: Category,
    /// 0 (negligible) to 10 (catastrophic).
    pub severity: f64,
    pub lat: f64,
    pub lon: f64,
    pub region_code: String,
    #[serde(default)]
    pub features: FeatureVector,
    #[serde(default)]
    pub texts: Vec<String>,
}

impl DisasterEvent {
    pub fn validate(&self) -> Result<(), String> {
        if self.event_id.is_empty() {
            return Err("empty event_id".into());
        }
        if let Some(end) = self.end_time {
            if end < self.onset_time {
                return Err(format!("end_time {end} precedes onset_time {}", self.onset_time));
            }
        }
        if !(0.0..=10.0).contains(&self.severity) {
            return Err(format!("severity {} outside [0, 10]", self.severity));
        }
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(format!("coordinates ({}, {}) out of range", self.lat, self.lon));
        }
        if self.features.values.len() != self.features.mask.len() {
            return Err("feature values and mask differ in length".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub time: i64,
    pub text: String,
    pub label: EventClass,
}
