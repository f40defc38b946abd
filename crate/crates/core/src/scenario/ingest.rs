use std::io::Read;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{regions, Category, DisasterEvent, FeatureVector, ScenarioError};

/// How timestamp cells are parsed. `Auto` tries epoch seconds, RFC 3339 and
/// the FEMA/NOAA date layouts in turn.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeFormat {
    #[default]
    Auto,
    EpochSeconds,
    Rfc3339,
    /// A chrono `strftime` pattern for naive timestamps.
    Pattern(String),
}

/// Names the CSV columns that feed each [`DisasterEvent`] field.
///
/// Mandatory: `event_id`, `onset`, `category`, and either both `lat`/`lon` or
/// `region`. Everything else is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub event_id: String,
    pub onset: String,
    #[serde(default)]
    pub end: Option<String>,
    pub category: String,
    #[serde(default)]
    pub severity: Option<String>,
    #[serde(default)]
    pub lat: Option<String>,
    #[serde(default)]
    pub lon: Option<String>,
    #[serde(default)]
    pub region: Option<String>,
    /// Column holding a UTC offset such as `EST-5`, `UTC` or `+02:00`; naive
    /// timestamps are taken as UTC when absent.
    #[serde(default)]
    pub timezone: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default)]
    pub time_format: TimeFormat,
    /// Used when no severity column is mapped or the cell is empty.
    #[serde(default = "default_severity")]
    pub default_severity: f64,
    /// Prepended to ids so records from different sources cannot collide.
    #[serde(default)]
    pub id_prefix: String,
}

fn default_severity() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowDiagnostic {
    /// 1-based line number in the source (the header is line 1).
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub events: Vec<DisasterEvent>,
    pub rejected: Vec<RowDiagnostic>,
}

struct Columns {
    event_id: usize,
    onset: usize,
    end: Option<usize>,
    category: usize,
    severity: Option<usize>,
    lat: Option<usize>,
    lon: Option<usize>,
    region: Option<usize>,
    timezone: Option<usize>,
    text: Option<usize>,
    features: Vec<usize>,
}

fn resolve(headers: &csv::StringRecord, mapping: &ColumnMapping) -> Result<Columns, ScenarioError> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let required = |name: &str| find(name).ok_or_else(|| ScenarioError::MissingColumn(name.to_string()));
    let optional = |name: &Option<String>| -> Result<Option<usize>, ScenarioError> {
        name.as_deref().map(required).transpose()
    };
    let cols = Columns {
        event_id: required(&mapping.event_id)?,
        onset: required(&mapping.onset)?,
        end: optional(&mapping.end)?,
        category: required(&mapping.category)?,
        severity: optional(&mapping.severity)?,
        lat: optional(&mapping.lat)?,
        lon: optional(&mapping.lon)?,
        region: optional(&mapping.region)?,
        timezone: optional(&mapping.timezone)?,
        text: optional(&mapping.text)?,
        features: mapping.features.iter().map(|f| required(f)).collect::<Result<_, _>>()?,
    };
    if (cols.lat.is_none() || cols.lon.is_none()) && cols.region.is_none() {
        return Err(ScenarioError::MissingColumn(
            mapping.region.clone().unwrap_or_else(|| "region (or lat/lon)".into()),
        ));
    }
    Ok(cols)
}

/// Reads a headered CSV and maps each row onto the unified event schema.
///
/// Rows with unparseable mandatory fields are skipped and reported in
/// [`IngestOutcome::rejected`]; the call only fails on schema problems.
pub fn ingest_events<R: Read>(source: R, mapping: &ColumnMapping) -> Result<IngestOutcome, ScenarioError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(ScenarioError::EmptyInput);
    }
    let cols = resolve(&headers, mapping)?;
    let mut out = IngestOutcome::default();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                out.rejected.push(RowDiagnostic { line, reason: format!("malformed row: {e}") });
                continue;
            }
        };
        match parse_row(&record, &cols, mapping) {
            Ok(ev) => out.events.push(ev),
            Err(reason) => out.rejected.push(RowDiagnostic { line, reason }),
        }
    }
    Ok(out)
}

fn cell(record: &csv::StringRecord, idx: usize) -> &str {
    record.get(idx).map(str::trim).unwrap_or("")
}

fn parse_row(record: &csv::StringRecord, cols: &Columns, mapping: &ColumnMapping) -> Result<DisasterEvent, String> {
    let raw_id = cell(record, cols.event_id);
    if raw_id.is_empty() {
        return Err("empty event id".into());
    }
    let offset = match cols.timezone.map(|c| cell(record, c)) {
        Some(tz) if !tz.is_empty() => parse_utc_offset(tz).ok_or_else(|| format!("unparseable timezone `{tz}`"))?,
        _ => 0,
    };
    let onset_raw = cell(record, cols.onset);
    let onset = parse_time(onset_raw, &mapping.time_format)
        .ok_or_else(|| format!("unparseable onset time `{onset_raw}`"))?
        - offset;
    let end_time = match cols.end.map(|c| cell(record, c)) {
        Some(raw) if !raw.is_empty() => {
            Some(parse_time(raw, &mapping.time_format).ok_or_else(|| format!("unparseable end time `{raw}`"))? - offset)
        }
        _ => None,
    };
    let cat_raw = cell(record, cols.category);
    let category = Category::parse_loose(cat_raw).ok_or_else(|| format!("unknown category `{cat_raw}`"))?;
    let severity = match cols.severity.map(|c| cell(record, c)) {
        Some(raw) if !raw.is_empty() => raw.parse::<f64>().map_err(|_| format!("unparseable severity `{raw}`"))?,
        _ => mapping.default_severity,
    };
    let region_raw = cols.region.map(|c| cell(record, c)).unwrap_or("");
    let region_code = regions::normalize_code(region_raw).map(str::to_string).unwrap_or_else(|| region_raw.to_string());
    let lat = cols.lat.map(|c| cell(record, c)).filter(|s| !s.is_empty());
    let lon = cols.lon.map(|c| cell(record, c)).filter(|s| !s.is_empty());
    let (lat, lon) = match (lat, lon) {
        (Some(a), Some(b)) => (
            parse_coordinate(a, 'N', 'S').ok_or_else(|| format!("unparseable latitude `{a}`"))?,
            normalize_lon(parse_coordinate(b, 'E', 'W').ok_or_else(|| format!("unparseable longitude `{b}`"))?),
        ),
        _ => regions::centroid(region_raw).ok_or_else(|| format!("no coordinates and unknown region `{region_raw}`"))?,
    };
    let features = FeatureVector::from_options(
        &cols
            .features
            .iter()
            .map(|&c| cell(record, c).parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Vec<_>>(),
    );
    let texts = cols
        .text
        .map(|c| cell(record, c))
        .filter(|t| !t.is_empty())
        .map(|t| vec![t.to_string()])
        .unwrap_or_default();
    let event = DisasterEvent {
        event_id: format!("{}{}", mapping.id_prefix, raw_id),
        onset_time: onset,
        end_time,
        category,
        severity,
        lat,
        lon,
        region_code,
        features,
        texts,
    };
    event.validate()?;
    Ok(event)
}

/// Parses a timestamp to UTC epoch seconds. Naive timestamps are read as UTC.
pub(crate) fn parse_time(raw: &str, format: &TimeFormat) -> Option<i64> {
    let raw = raw.trim();
    match format {
        TimeFormat::EpochSeconds => raw.parse::<i64>().ok(),
        TimeFormat::Rfc3339 => DateTime::parse_from_rfc3339(raw).ok().map(|d| d.timestamp()),
        TimeFormat::Pattern(p) => NaiveDateTime::parse_from_str(raw, p)
            .ok()
            .or_else(|| NaiveDate::parse_from_str(raw, p).ok().and_then(|d| d.and_hms_opt(0, 0, 0)))
            .map(|d| d.and_utc().timestamp()),
        TimeFormat::Auto => {
            if let Ok(v) = raw.parse::<i64>() {
                return Some(v);
            }
            if let Ok(d) = DateTime::parse_from_rfc3339(raw) {
                return Some(d.timestamp());
            }
            const NAIVE: &[&str] = &[
                "%Y-%m-%dT%H:%M:%S%.f",
                "%Y-%m-%d %H:%M:%S",
                "%m/%d/%Y %H:%M:%S",
                "%m/%d/%Y %H:%M",
                "%d-%b-%y %H:%M:%S",
            ];
            const DATES: &[&str] = &["%Y-%m-%d", "%m/%d/%Y", "%Y%m%d"];
            NAIVE
                .iter()
                .find_map(|p| NaiveDateTime::parse_from_str(raw, p).ok())
                .or_else(|| {
                    DATES
                        .iter()
                        .find_map(|p| NaiveDate::parse_from_str(raw, p).ok())
                        .and_then(|d| d.and_hms_opt(0, 0, 0))
                })
                .map(|d| d.and_utc().timestamp())
        }
    }
}

/// Offset of local time from UTC in seconds. Accepts `UTC`, `GMT`, `EST-5`
/// style zone-with-hours, and `+HH:MM` / `-HHMM` offsets.
pub(crate) fn parse_utc_offset(raw: &str) -> Option<i64> {
    let s = raw.trim().to_ascii_uppercase();
    if s == "UTC" || s == "GMT" || s == "Z" {
        return Some(0);
    }
    let start = s.find(['+', '-'])?;
    let (sign, digits) = match &s[start..start + 1] {
        "-" => (-1, &s[start + 1..]),
        _ => (1, &s[start + 1..]),
    };
    let digits: String = digits.chars().filter(|c| c.is_ascii_digit()).collect();
    let (h, m) = match digits.len() {
        1 | 2 => (digits.parse::<i64>().ok()?, 0),
        3 | 4 => {
            let (h, m) = digits.split_at(digits.len() - 2);
            (h.parse::<i64>().ok()?, m.parse::<i64>().ok()?)
        }
        _ => return None,
    };
    if h > 14 || m >= 60 {
        return None;
    }
    Some(sign * (h * 3600 + m * 60))
}

/// Decimal degrees from `34.05`, `-118.2`, `34.05N` or `118.25 W`.
pub(crate) fn parse_coordinate(raw: &str, pos: char, neg: char) -> Option<f64> {
    let s = raw.trim().to_ascii_uppercase();
    let (body, sign) = if let Some(b) = s.strip_suffix(pos) {
        (b.trim(), 1.0)
    } else if let Some(b) = s.strip_suffix(neg) {
        (b.trim(), -1.0)
    } else {
        (s.as_str(), 1.0)
    };
    let v: f64 = body.trim_end_matches('°').parse().ok()?;
    v.is_finite().then_some(v * sign)
}

fn normalize_lon(lon: f64) -> f64 {
    if lon > 180.0 {
        lon - 360.0
    } else {
        lon
    }
}
