use std::fs;
use std::process::Command;

use serde_json::Value;

const FEMA: &str = "\
disasterNumber,declarationDate,incidentType,state,declarationTitle
1603,2005-08-29T00:00:00Z,Hurricane,LA,HURRICANE KATRINA
4240,2015-09-22T00:00:00Z,Fire,CA,VALLEY FIRE
4611,2021-09-02T00:00:00Z,Flood,NY,REMNANTS OF HURRICANE IDA
9999,not-a-date,Flood,NY,BROKEN ROW
";

const FEMA_MAP: &str = r#"
event_id = "disasterNumber"
onset = "declarationDate"
category = "incidentType"
region = "state"
text = "declarationTitle"
id_prefix = "fema-"
"#;

const NOAA: &str = "\
EVENT_ID,BEGIN_DATE_TIME,CZ_TIMEZONE,EVENT_TYPE,BEGIN_LAT,BEGIN_LON,MAGNITUDE,INJURIES_DIRECT,DAMAGE_K
501,12-JUN-12 14:30:00,EST-5,Thunderstorm Wind,35.1,-80.8,60,2,150
502,03-APR-20 09:10:00,CST-6,Tornado,32.3,-90.2,,5,900
503,17-JUL-99 22:00:00,MST-7,Flash Flood,33.4,-112.0,,0,40
504,21-MAY-19 18:45:00,CST-6,Hail,35.5,-97.5,1.75,,12
505,05-MAR-21 01:00:00,EST-5,Avalanche,39.0,-106.0,,0,0
";

const NOAA_MAP: &str = r#"
event_id = "EVENT_ID"
onset = "BEGIN_DATE_TIME"
timezone = "CZ_TIMEZONE"
category = "EVENT_TYPE"
lat = "BEGIN_LAT"
lon = "BEGIN_LON"
features = ["DAMAGE_K", "MAGNITUDE", "INJURIES_DIRECT"]
id_prefix = "noaa-"
"#;

const TWEETS: &str = "\
tweet_id,time,text,label
t1,1125331200,water everywhere in the ninth ward,flood
t2,1125331300,lovely weather today,none
t3,1442880000,fire jumped the highway,wildfire
t4,1442880100,,wildfire
t5,1442880200,what is this,meteor
";

fn read_jsonl(path: &std::path::Path) -> Vec<Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn two_sources_with_distinct_mappings_are_unified_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    for (name, text) in [
        ("fema.csv", FEMA),
        ("fema.toml", FEMA_MAP),
        ("noaa.csv", NOAA),
        ("noaa.toml", NOAA_MAP),
        ("tweets.csv", TWEETS),
    ] {
        fs::write(p(name), text).unwrap();
    }
    let src = |csv: &str, map: &str| format!("{}={}", p(csv).display(), p(map).display());
    let out = p("out");
    let run = Command::new(env!("CARGO_BIN_EXE_mcs"))
        .args(["ingest", "--source", &src("fema.csv", "fema.toml"), "--source", &src("noaa.csv", "noaa.toml")])
        .args(["--tweets", p("tweets.csv").to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let summary: Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    let printed: Value = serde_json::from_str(String::from_utf8_lossy(&run.stdout).trim()).unwrap();
    assert_eq!(summary, printed);

    // one bad date, one unknown hazard
    assert_eq!(summary["events"], 7);
    assert_eq!(summary["rejected"], 2);
    assert_eq!(summary["tweets"], 3);
    assert_eq!(summary["tweets_rejected"], 2);
    assert_eq!(summary["outside_splits"], 0);
    assert_eq!(summary["train"], 2);
    assert_eq!(summary["val"], 2);
    assert_eq!(summary["test"], 3);
    let imp = summary["imputation"].as_array().unwrap();
    assert_eq!(imp[0]["method"], "none");
    assert_eq!(imp[1]["method"], "mice");
    assert_eq!(imp[1]["cells"], 3);

    let events = read_jsonl(&out.join("events.jsonl"));
    let onsets: Vec<i64> = events.iter().map(|e| e["onset_time"].as_i64().unwrap()).collect();
    assert!(onsets.windows(2).all(|w| w[0] <= w[1]));
    let by_id = |id: &str| events.iter().find(|e| e["event_id"] == id).unwrap_or_else(|| panic!("{id}")).clone();

    let katrina = by_id("fema-1603");
    assert_eq!(katrina["category"], "Hurricane");
    assert_eq!(katrina["onset_time"], 1_125_273_600);
    assert_eq!(katrina["region_code"], "LA");
    assert_eq!(by_id("fema-4240")["category"], "Wildfire");

    let storm = by_id("noaa-501");
    assert_eq!(storm["category"], "SevereStorm");
    // 2012-06-12 14:30 at UTC-5
    assert_eq!(storm["onset_time"], 1_339_529_400);
    assert_eq!(by_id("noaa-503")["category"], "Flood");
    let tornado = by_id("noaa-502");
    let values = tornado["features"]["values"].as_array().unwrap();
    assert_eq!(values.len(), 3);
    assert!(values.iter().all(|v| v.as_f64().unwrap().is_finite()));
    assert_eq!(values[0], 900.0);

    let splits: usize = ["train", "val", "test"].iter().map(|s| read_jsonl(&out.join(format!("{s}.jsonl"))).len()).sum();
    assert_eq!(splits, 7);
    let rejected = read_jsonl(&out.join("rejected.jsonl"));
    assert_eq!(rejected.len(), 4);
    assert!(rejected.iter().any(|r| r["line"] == 5 && r["source"].as_str().unwrap().ends_with("fema.csv")));
    let tweets = read_jsonl(&out.join("tweets.jsonl"));
    assert_eq!(tweets.iter().map(|t| t["label"].as_str().unwrap()).collect::<Vec<_>>(), ["Flood", "None", "Wildfire"]);
}

#[test]
fn a_mapping_naming_an_absent_column_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("e.csv"), FEMA).unwrap();
    fs::write(dir.path().join("m.toml"), NOAA_MAP).unwrap();
    let run = Command::new(env!("CARGO_BIN_EXE_mcs"))
        .arg("ingest")
        .arg("--source")
        .arg(format!("{}={}", dir.path().join("e.csv").display(), dir.path().join("m.toml").display()))
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&run.stderr).trim()).unwrap();
    assert_eq!(err["error"], "invalid_input");
    assert!(err["message"].as_str().unwrap().contains("EVENT_ID"));
}
