//! Rule-based (ICS) assessment used by the baseline pipeline.

use crate::scenario::{Category, EventClass};

const KEYWORDS: [(Category, &[&str]); 4] = [
    (Category::Wildfire, &["fire", "wildfire", "smoke", "flames", "blaze", "burning"]),
    (Category::Hurricane, &["hurricane", "landfall", "cyclone", "tropical", "typhoon", "eyewall"]),
    (Category::Flood, &["flood", "flooding", "levee", "submerged", "inundated", "overflow"]),
    (Category::SevereStorm, &["storm", "tornado", "hail", "thunder", "lightning", "twister"]),
];

/// Keyword vote over the message; ties go to the earlier entry of the
/// keyword table. No keyword at all yields `EventClass::None`.
pub fn keyword_classify(text: &str) -> EventClass {
    let lower = text.to_ascii_lowercase();
    let words: Vec<&str> = lower.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty()).collect();
    let mut best: Option<(usize, Category)> = None;
    for (cat, kws) in KEYWORDS {
        let hits = words.iter().filter(|w| kws.contains(w)).count();
        if hits > 0 && best.is_none_or(|(h, _)| hits > h) {
            best = Some((hits, cat));
        }
    }
    best.map_or(EventClass::None, |(_, c)| EventClass::from(c))
}

/// Standard ICS resource package per hazard (Medical, Fire, Rescue, Logistics).
pub fn ics_package(class: EventClass) -> [u32; 4] {
    match class {
        EventClass::Wildfire => [1, 3, 0, 1],
        EventClass::SevereStorm => [1, 0, 2, 1],
        EventClass::Hurricane => [2, 0, 2, 2],
        EventClass::Flood => [1, 0, 3, 1],
        EventClass::None => [1, 0, 1, 1],
    }
}
