//! Seeded synthetic scenario packs.
//!
//! Severity scale: 0 is no measurable impact, 10 is catastrophic. Each
//! category starts around its own base level and evolves as a clamped
//! Gaussian random walk sampled every `path_step_s` seconds:
//!
//! | category     | base | drift/step | volatility |
//! |--------------|------|------------|------------|
//! | Wildfire     | 4.0  | +0.15      | 0.5        |
//! | SevereStorm  | 5.0  | -0.10      | 0.6        |
//! | Hurricane    | 6.0  | +0.05      | 0.4        |
//! | Flood        | 4.0  | +0.10      | 0.3        |
//!
//! Resource demand is a per-category package scaled by initial severity.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    Category, DisasterEvent, EventClass, EventTruth, FailureSpec, FailureTargetSpec, FeatureVector, Reading,
    ScenarioError, ScenarioPack, SensorSample, TweetRecord,
};
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub code: String,
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Default for Region {
    fn default() -> Self {
        // roughly 110 km x 90 km around Sacramento
        Region { code: "CA".into(), lat_min: 38.2, lat_max: 39.2, lon_min: -122.0, lon_max: -121.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub pack_id: String,
    pub event_count: usize,
    pub duration_s: u64,
    pub start_epoch: i64,
    pub region: Region,
    /// Relative frequency of Wildfire, SevereStorm, Hurricane, Flood.
    pub category_weights: [f64; 4],
    pub event_duration_min_s: u64,
    pub event_duration_max_s: u64,
    pub sensor_cadence_s: u64,
    /// Expected spurious readings per genuine reading.
    pub false_reading_rate: f64,
    pub path_step_s: u64,
    /// Probability that a genuine message mentions another hazard's vocabulary.
    pub text_noise: f64,
    pub resources: [u32; 4],
    pub edge_nodes: Vec<String>,
    pub tweets_per_event: usize,
    pub none_tweets: usize,
    pub link_failures: usize,
    pub failure_duration_s: u64,
    /// All events start at t = 0 with a reading at t = 0 (used by the
    /// concurrency sweep).
    pub simultaneous_onset: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            pack_id: "pack".into(),
            event_count: 20,
            duration_s: 24 * 3600,
            start_epoch: 1_688_169_600, // 2023-07-01T00:00:00Z
            region: Region::default(),
            category_weights: [1.0, 1.0, 1.0, 1.0],
            event_duration_min_s: 2 * 3600,
            event_duration_max_s: 6 * 3600,
            sensor_cadence_s: 30,
            false_reading_rate: 0.02,
            path_step_s: 300,
            text_noise: 0.15,
            resources: [6, 6, 6, 6],
            edge_nodes: vec!["edge-1".into(), "edge-2".into(), "edge-3".into()],
            tweets_per_event: 40,
            none_tweets: 200,
            link_failures: 0,
            failure_duration_s: 120,
            simultaneous_onset: false,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Config(m.to_string()));
        if self.event_count < 1 {
            return bad("event_count must be at least 1");
        }
        if self.duration_s == 0 {
            return bad("duration_s must be positive");
        }
        if self.event_duration_min_s == 0 || self.event_duration_min_s > self.event_duration_max_s {
            return bad("event duration bounds must satisfy 0 < min <= max");
        }
        if self.sensor_cadence_s == 0 || self.path_step_s == 0 {
            return bad("sensor_cadence_s and path_step_s must be positive");
        }
        if !(0.0..=10.0).contains(&self.false_reading_rate) {
            return bad("false_reading_rate must lie in [0, 10]");
        }
        if !(0.0..=1.0).contains(&self.text_noise) {
            return bad("text_noise must lie in [0, 1]");
        }
        if self.category_weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || self.category_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("category_weights must be non-negative with a positive sum");
        }
        let r = &self.region;
        if !(r.lat_min < r.lat_max && r.lon_min < r.lon_max)
            || r.lat_min < -90.0
            || r.lat_max > 90.0
            || r.lon_min < -180.0
            || r.lon_max > 180.0
        {
            return bad("region bounds invalid");
        }
        if self.edge_nodes.is_empty() {
            return bad("at least one edge node required");
        }
        Ok(())
    }
}

const VOCAB: [&[&str]; 4] = [
    &["fire", "wildfire", "smoke", "flames", "blaze", "burning", "embers", "firefighters", "acres", "brush", "ash", "scorched"],
    &["storm", "tornado", "hail", "thunder", "lightning", "gusts", "funnel", "downed", "debris", "shelter", "twister", "squall"],
    &["hurricane", "landfall", "eyewall", "category", "gale", "cyclone", "tropical", "coast", "rainbands", "evacuation", "typhoon", "storm"],
    &["flood", "flooding", "water", "river", "levee", "rising", "submerged", "overflow", "inundated", "flash", "rain", "stranded"],
];
const GENERIC: &[&str] = &[
    "please", "help", "near", "road", "people", "update", "now", "area", "team", "report", "city", "north", "south",
    "highway", "local", "officials", "urgent", "residents",
];
const CHATTER: &[&str] = &[
    "traffic", "concert", "game", "sale", "coffee", "weekend", "maintenance", "routine", "test", "check", "parade",
    "meeting", "festival", "sunny", "calm", "lunch", "music", "market", "school", "photo",
];

const BASE_SEVERITY: [f64; 4] = [4.0, 5.0, 6.0, 4.0];
const DRIFT: [f64; 4] = [0.15, -0.10, 0.05, 0.10];
const VOLATILITY: [f64; 4] = [0.5, 0.6, 0.4, 0.3];
/// Units per resource type (Medical, Fire, Rescue, Logistics) at severity 5.
const PACKAGE: [[u32; 4]; 4] = [[1, 3, 0, 1], [1, 0, 2, 1], [2, 0, 2, 2], [1, 0, 3, 1]];

fn pick_category(weights: &[f64; 4], rng: &mut SimRng) -> Category {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return Category::ALL[i];
        }
        x -= w;
    }
    Category::Flood
}

fn hazard_text(cat: Category, noise: f64, rng: &mut SimRng) -> String {
    let mut words: Vec<&str> = Vec::new();
    let own = VOCAB[cat.index()];
    for _ in 0..rng.random_range(3..=6) {
        words.push(own.choose(rng).unwrap());
    }
    for _ in 0..rng.random_range(2..=4) {
        words.push(GENERIC.choose(rng).unwrap());
    }
    if rng.random_bool(noise) {
        let other = (cat.index() + rng.random_range(1..4)) % 4;
        for _ in 0..rng.random_range(1..=2) {
            words.push(VOCAB[other].choose(rng).unwrap());
        }
    }
    shuffle_join(words, rng)
}

fn chatter_text(rng: &mut SimRng) -> String {
    let mut words: Vec<&str> = Vec::new();
    for _ in 0..rng.random_range(3..=6) {
        words.push(CHATTER.choose(rng).unwrap());
    }
    for _ in 0..rng.random_range(1..=3) {
        words.push(GENERIC.choose(rng).unwrap());
    }
    if rng.random_bool(0.35) {
        words.push(VOCAB[rng.random_range(0..4)].choose(rng).unwrap());
    }
    shuffle_join(words, rng)
}

fn shuffle_join(mut words: Vec<&str>, rng: &mut SimRng) -> String {
    use rand::seq::SliceRandom;
    words.shuffle(rng);
    words.join(" ")
}

fn edge_for(lon: f64, cfg: &GeneratorConfig) -> String {
    let n = cfg.edge_nodes.len();
    let frac = (lon - cfg.region.lon_min) / (cfg.region.lon_max - cfg.region.lon_min);
    let idx = ((frac * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
    cfg.edge_nodes[idx].clone()
}

struct Draft {
    category: Category,
    onset_s: u64,
    end_s: u64,
    lat: f64,
    lon: f64,
    path: Vec<f64>,
    demand: [u32; 4],
}

/// Builds a reproducible pack: equal `(config, seed)` give equal packs.
pub fn generate_pack(config: &GeneratorConfig, seed: u64) -> Result<ScenarioPack, ScenarioError> {
    config.validate()?;
    let mut ev_rng = rng::stream(seed, 1);
    let mut sensor_rng = rng::stream(seed, 2);
    let mut text_rng = rng::stream(seed, 3);
    let mut fail_rng = rng::stream(seed, 4);
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    let mut drafts = Vec::with_capacity(config.event_count);
    for _ in 0..config.event_count {
        let category = pick_category(&config.category_weights, &mut ev_rng);
        let span = ev_rng.random_range(config.event_duration_min_s..=config.event_duration_max_s);
        let onset_s = if config.simultaneous_onset || config.duration_s <= span {
            0
        } else {
            ev_rng.random_range(0..=config.duration_s - span)
        };
        let end_s = (onset_s + span).min(config.duration_s);
        let lat = ev_rng.random_range(config.region.lat_min..config.region.lat_max);
        let lon = ev_rng.random_range(config.region.lon_min..config.region.lon_max);
        let ci = category.index();
        let steps = (end_s - onset_s).div_ceil(config.path_step_s) as usize + 1;
        let mut path = Vec::with_capacity(steps);
        let mut s = (BASE_SEVERITY[ci] + std_normal.sample(&mut ev_rng)).clamp(0.5, 10.0);
        for _ in 0..steps {
            path.push(s);
            s = (s + DRIFT[ci] + VOLATILITY[ci] * std_normal.sample(&mut ev_rng)).clamp(0.0, 10.0);
        }
        let scale = 0.5 + path[0] / 10.0;
        let mut demand = [0u32; 4];
        for (d, base) in demand.iter_mut().zip(PACKAGE[ci]) {
            let jitter = ev_rng.random_range(-1i64..=1);
            *d = ((base as f64 * scale).round() as i64 + if base > 0 { jitter } else { 0 }).max(0) as u32;
        }
        if demand.iter().all(|d| *d == 0) {
            demand[PACKAGE[ci].iter().enumerate().max_by_key(|(_, v)| **v).unwrap().0] = 1;
        }
        drafts.push(Draft { category, onset_s, end_s, lat, lon, path, demand });
    }
    drafts.sort_by_key(|d| d.onset_s);

    let mut events = Vec::new();
    let mut truth = Vec::new();
    let mut samples = Vec::new();
    let mut spurious = 0usize;
    for (i, d) in drafts.iter().enumerate() {
        let event_id = format!("{}-ev{:03}", config.pack_id, i);
        let site_id = format!("site-{i:03}");
        let source = edge_for(d.lon, config);
        let mut texts = Vec::new();
        let phase = if config.simultaneous_onset { 0 } else { sensor_rng.random_range(0..config.sensor_cadence_s * 1000) };
        let mut t = d.onset_s * 1000 + phase;
        let mut k = 0;
        while t <= d.end_s * 1000 {
            let step = ((t / 1000 - d.onset_s) / config.path_step_s) as usize;
            let sev = (d.path[step.min(d.path.len() - 1)] + 0.3 * std_normal.sample(&mut sensor_rng)).clamp(0.0, 10.0);
            let text = hazard_text(d.category, config.text_noise, &mut text_rng);
            if texts.len() < 3 {
                texts.push(text.clone());
            }
            samples.push(SensorSample {
                t_ms: t,
                source_node: source.clone(),
                reading: Reading {
                    reading_id: format!("{event_id}-r{k:04}"),
                    site_id: site_id.clone(),
                    event_ref: Some(event_id.clone()),
                    severity: sev,
                    lat: d.lat,
                    lon: d.lon,
                    text,
                    demand: d.demand,
                },
            });
            k += 1;
            if config.false_reading_rate > 0.0 {
                let mut expected = config.false_reading_rate;
                while expected > 0.0 {
                    if sensor_rng.random_bool(expected.min(1.0)) {
                        samples.push(false_reading(config, spurious, &mut sensor_rng, &mut text_rng));
                        spurious += 1;
                    }
                    expected -= 1.0;
                }
            }
            t += config.sensor_cadence_s * 1000;
        }
        events.push(DisasterEvent {
            event_id: event_id.clone(),
            onset_time: config.start_epoch + d.onset_s as i64,
            end_time: Some(config.start_epoch + d.end_s as i64),
            category: d.category,
            severity: d.path[0],
            lat: d.lat,
            lon: d.lon,
            region_code: config.region.code.clone(),
            features: FeatureVector::observed(d.demand.iter().map(|v| *v as f64).collect()),
            texts,
        });
        truth.push(EventTruth {
            event_id,
            site_id,
            category: d.category,
            onset_ms: d.onset_s * 1000,
            end_ms: d.end_s * 1000,
            lat: d.lat,
            lon: d.lon,
            demand: d.demand,
            severity_path: d.path.clone(),
        });
    }
    samples.sort_by(|a, b| a.t_ms.cmp(&b.t_ms).then_with(|| a.reading.reading_id.cmp(&b.reading.reading_id)));

    let mut tweets = Vec::new();
    for (i, d) in drafts.iter().enumerate() {
        for j in 0..config.tweets_per_event {
            tweets.push(TweetRecord {
                tweet_id: format!("tw-{i:03}-{j:03}"),
                time: config.start_epoch + d.onset_s as i64 + j as i64 * 60,
                text: hazard_text(d.category, config.text_noise, &mut text_rng),
                label: EventClass::from(d.category),
            });
        }
    }
    for j in 0..config.none_tweets {
        tweets.push(TweetRecord {
            tweet_id: format!("tw-none-{j:04}"),
            time: config.start_epoch + text_rng.random_range(0..config.duration_s) as i64,
            text: chatter_text(&mut text_rng),
            label: EventClass::None,
        });
    }

    let mut failures = Vec::new();
    for _ in 0..config.link_failures {
        let edge = config.edge_nodes.choose(&mut fail_rng).unwrap().clone();
        let at_ms = fail_rng.random_range(0..config.duration_s * 1000);
        failures.push(FailureSpec {
            target: FailureTargetSpec::Link { a: "central".into(), b: edge },
            at_ms,
            duration_ms: config.failure_duration_s * 1000,
        });
    }
    failures.sort_by_key(|f| f.at_ms);

    let pack = ScenarioPack {
        pack_id: config.pack_id.clone(),
        seed,
        start_epoch: config.start_epoch,
        duration_s: config.duration_s,
        path_step_s: config.path_step_s,
        resources: config.resources,
        edge_nodes: config.edge_nodes.clone(),
        events,
        sensor_streams: samples,
        ground_truth: truth,
        tweets,
        failures,
    };
    pack.validate()?;
    Ok(pack)
}

fn false_reading(cfg: &GeneratorConfig, n: usize, rng: &mut SimRng, text_rng: &mut SimRng) -> SensorSample {
    let lat = rng.random_range(cfg.region.lat_min..cfg.region.lat_max);
    let lon = rng.random_range(cfg.region.lon_min..cfg.region.lon_max);
    let mut demand = [0u32; 4];
    demand[rng.random_range(0..4)] = rng.random_range(1..=2);
    SensorSample {
        t_ms: rng.random_range(0..cfg.duration_s * 1000),
        source_node: edge_for(lon, cfg),
        reading: Reading {
            reading_id: format!("false-{n:05}"),
            site_id: format!("site-f{n:05}"),
            event_ref: None,
            severity: rng.random_range(1.0..9.0),
            lat,
            lon,
            text: chatter_text(text_rng),
            demand,
        },
    }
}
