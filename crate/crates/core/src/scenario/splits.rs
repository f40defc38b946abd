use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};

use super::DisasterEvent;

/// Inclusive range of calendar years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub first: i32,
    pub last: i32,
}

impl YearRange {
    pub fn new(first: i32, last: i32) -> Self {
        YearRange { first, last }
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.first..=self.last).contains(&year)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_range: YearRange,
    pub val_range: YearRange,
    pub test_range: YearRange,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_range: YearRange::new(1953, 2010),
            val_range: YearRange::new(2011, 2018),
            test_range: YearRange::new(2019, 2023),
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), String> {
        let ranges = [self.train_range, self.val_range, self.test_range];
        if ranges.iter().any(|r| r.first > r.last) {
            return Err("year range with first > last".into());
        }
        for (i, a) in ranges.iter().enumerate() {
            for b in &ranges[i + 1..] {
                if a.first <= b.last && b.first <= a.last {
                    return Err("overlapping year ranges".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Splits {
    pub train: Vec<DisasterEvent>,
    pub val: Vec<DisasterEvent>,
    pub test: Vec<DisasterEvent>,
    /// Events whose onset year falls in no range.
    pub dropped: usize,
}

pub fn onset_year(event: &DisasterEvent) -> i32 {
    DateTime::from_timestamp(event.onset_time, 0).map(|d| d.year()).unwrap_or(i32::MIN)
}

/// Partitions events by UTC onset year, preserving input order within each split.
pub fn make_splits(events: &[DisasterEvent], spec: &SplitSpec) -> Splits {
    let mut out = Splits::default();
    for ev in events {
        let year = onset_year(ev);
        if spec.train_range.contains(year) {
            out.train.push(ev.clone());
        } else if spec.val_range.contains(year) {
            out.val.push(ev.clone());
        } else if spec.test_range.contains(year) {
            out.test.push(ev.clone());
        } else {
            out.dropped += 1;
        }
    }
    out
}
