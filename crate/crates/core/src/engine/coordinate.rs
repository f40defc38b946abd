use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::alloc::NUM_TYPES;
use crate::SimTime;

/// One incident's request for units within a decision round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub incident_id: String,
    pub severity: f64,
    pub onset: SimTime,
    pub slot: usize,
    pub requested: [u32; NUM_TYPES],
}

/// Priority ladder: higher severity, then earlier onset, then lower slot.
pub fn claim_order(a: &Claim, b: &Claim) -> Ordering {
    b.severity.total_cmp(&a.severity).then(a.onset.cmp(&b.onset)).then(a.slot.cmp(&b.slot))
}

/// Grants units from `available` in priority order. The returned vector is
/// aligned with `claims`.
pub fn coordinate(claims: &[Claim], available: [u32; NUM_TYPES]) -> Vec<[u32; NUM_TYPES]> {
    let mut order: Vec<usize> = (0..claims.len()).collect();
    order.sort_by(|&i, &j| claim_order(&claims[i], &claims[j]).then(i.cmp(&j)));
    let mut left = available;
    let mut out = vec![[0; NUM_TYPES]; claims.len()];
    for i in order {
        for r in 0..NUM_TYPES {
            let g = claims[i].requested[r].min(left[r]);
            out[i][r] = g;
            left[r] -= g;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn claim(id: &str, sev: f64, onset: u64, slot: usize, req: [u32; 4]) -> Claim {
        Claim { incident_id: id.into(), severity: sev, onset: SimTime::from_secs(onset), slot, requested: req }
    }

    #[test]
    fn higher_severity_wins_last_unit() {
        let claims = [claim("low", 5.0, 0, 0, [1, 0, 0, 0]), claim("high", 8.0, 10, 1, [1, 0, 0, 0])];
        assert_eq!(coordinate(&claims, [1, 0, 0, 0]), vec![[0; 4], [1, 0, 0, 0]]);
    }

    #[test]
    fn ties_fall_to_onset_then_slot() {
        let claims = [claim("late", 5.0, 20, 0, [1, 0, 0, 0]), claim("early", 5.0, 10, 1, [1, 0, 0, 0])];
        assert_eq!(coordinate(&claims, [1, 0, 0, 0])[1], [1, 0, 0, 0]);
        let claims = [claim("b", 5.0, 10, 3, [0, 1, 0, 0]), claim("a", 5.0, 10, 2, [0, 1, 0, 0])];
        assert_eq!(coordinate(&claims, [0, 1, 0, 0]), vec![[0; 4], [0, 1, 0, 0]]);
    }

    #[test]
    fn partial_grants_split_per_type() {
        let claims = [claim("a", 9.0, 0, 0, [2, 1, 0, 0]), claim("b", 3.0, 0, 1, [2, 2, 0, 0])];
        assert_eq!(coordinate(&claims, [3, 2, 0, 0]), vec![[2, 1, 0, 0], [1, 1, 0, 0]]);
    }
}
