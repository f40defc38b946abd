//! Resource-allocation environment: world state, the 24-dim observation,
//! 21 discrete dispatch actions, the shaped reward, the ICS rule ladder and
//! the optimal-assignment oracle.
//!
//! Observation layout (version [`STATE_LAYOUT_VERSION`]):
//!
//! | dims   | content                                                        |
//! |--------|----------------------------------------------------------------|
//! | 0..8   | per type r: available/total at `2r`, deployed/total at `2r+1`  |
//! | 8..23  | per slot i at `8+3i`: severity/10, unmet/initial demand, elapsed/3600 (clamped) |
//! | 23     | clock / horizon (clamped)                                      |

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;

pub const NUM_TYPES: usize = 4;
pub const NUM_SLOTS: usize = 5;
pub const NUM_ACTIONS: usize = 1 + NUM_TYPES * NUM_SLOTS;
pub const STATE_DIM: usize = 24;
pub const STATE_LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum AllocError {
    #[error("action index {0} outside [0, {NUM_ACTIONS})")]
    InvalidAction(usize),
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("incident {0} is already registered")]
    DuplicateIncident(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResourceType {
    Medical,
    Fire,
    Rescue,
    Logistics,
}

impl ResourceType {
    pub const ALL: [ResourceType; NUM_TYPES] =
        [ResourceType::Medical, ResourceType::Fire, ResourceType::Rescue, ResourceType::Logistics];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AllocAction {
    Noop,
    Dispatch { rtype: usize, slot: usize },
}

impl AllocAction {
    pub fn encode(self) -> usize {
        match self {
            AllocAction::Noop => 0,
            AllocAction::Dispatch { rtype, slot } => 1 + rtype * NUM_SLOTS + slot,
        }
    }

    pub fn decode(k: usize) -> Result<Self, AllocError> {
        match k {
            0 => Ok(AllocAction::Noop),
            k if k < NUM_ACTIONS => Ok(AllocAction::Dispatch { rtype: (k - 1) / NUM_SLOTS, slot: (k - 1) % NUM_SLOTS }),
            k => Err(AllocError::InvalidAction(k)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub coverage: f64,
    pub waiting: f64,
    pub waste: f64,
    pub step_cost: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { coverage: 1.0, waiting: 0.5, waste: 0.5, step_cost: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AllocConfig {
    pub weights: RewardWeights,
    /// Simulated seconds per environment step.
    pub step_dt_s: f64,
    pub horizon_steps: u32,
    /// Scenario length used for the clock dimension.
    pub clock_horizon_s: f64,
}

impl Default for AllocConfig {
    fn default() -> Self {
        AllocConfig { weights: RewardWeights::default(), step_dt_s: 60.0, horizon_steps: 60, clock_horizon_s: 86_400.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResourcePool {
    pub total: [u32; NUM_TYPES],
    pub available: [u32; NUM_TYPES],
}

impl ResourcePool {
    pub fn new(total: [u32; NUM_TYPES]) -> Self {
        ResourcePool { total, available: total }
    }

    pub fn deployed(&self, r: usize) -> u32 {
        self.total[r] - self.available[r]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IncidentSlot {
    pub active: bool,
    pub incident_id: String,
    pub severity: f64,
    pub unmet: [u32; NUM_TYPES],
    pub initial_demand: [u32; NUM_TYPES],
    pub elapsed_s: f64,
}

impl IncidentSlot {
    pub fn unmet_total(&self) -> u32 {
        self.unmet.iter().sum()
    }
}

/// Incident waiting outside the five encoded slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuedIncident {
    pub incident_id: String,
    pub severity: f64,
    pub demand: [u32; NUM_TYPES],
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocWorld {
    pub pool: ResourcePool,
    pub slots: [IncidentSlot; NUM_SLOTS],
    /// Severity-descending; ties keep arrival order.
    pub queue: Vec<QueuedIncident>,
    pub clock_s: f64,
    pub steps: u32,
    /// Sum of every demand ever registered in this world.
    pub registered_demand: u64,
    pub config: AllocConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub covered: u32,
    pub wasted: bool,
}

impl AllocWorld {
    pub fn new(resources: [u32; NUM_TYPES], config: AllocConfig) -> Self {
        AllocWorld {
            pool: ResourcePool::new(resources),
            slots: Default::default(),
            queue: Vec::new(),
            clock_s: 0.0,
            steps: 0,
            registered_demand: 0,
            config,
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.slot_of(id).is_some() || self.queue.iter().any(|q| q.incident_id == id)
    }

    pub fn slot_of(&self, id: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.active && s.incident_id == id)
    }

    /// Registers an incident in the first free slot or the overflow queue.
    /// Incidents with zero demand are ignored.
    pub fn add_incident(
        &mut self,
        id: &str,
        severity: f64,
        demand: [u32; NUM_TYPES],
        elapsed_s: f64,
    ) -> Result<(), AllocError> {
        if self.contains(id) {
            return Err(AllocError::DuplicateIncident(id.into()));
        }
        if !(0.0..=10.0).contains(&severity) {
            return Err(AllocError::InvalidWorld(format!("severity {severity} outside [0, 10]")));
        }
        let total: u32 = demand.iter().sum();
        if total == 0 {
            return Ok(());
        }
        self.registered_demand += total as u64;
        let q = QueuedIncident { incident_id: id.into(), severity, demand, elapsed_s };
        let pos = self.queue.iter().position(|x| x.severity < severity).unwrap_or(self.queue.len());
        self.queue.insert(pos, q);
        self.backfill();
        Ok(())
    }

    fn backfill(&mut self) {
        while !self.queue.is_empty() {
            let Some(free) = self.slots.iter().position(|s| !s.active) else { break };
            let q = self.queue.remove(0);
            self.slots[free] = IncidentSlot {
                active: true,
                incident_id: q.incident_id,
                severity: q.severity,
                unmet: q.demand,
                initial_demand: q.demand,
                elapsed_s: q.elapsed_s,
            };
        }
    }

    pub fn set_severity(&mut self, id: &str, severity: f64) {
        let severity = severity.clamp(0.0, 10.0);
        if let Some(i) = self.slot_of(id) {
            self.slots[i].severity = severity;
        } else if let Some(pos) = self.queue.iter().position(|q| q.incident_id == id) {
            let mut q = self.queue.remove(pos);
            q.severity = severity;
            let at = self.queue.iter().position(|x| x.severity < severity).unwrap_or(self.queue.len());
            self.queue.insert(at, q);
        }
    }

    /// Drops an incident regardless of remaining demand.
    pub fn remove_incident(&mut self, id: &str) {
        if let Some(i) = self.slot_of(id) {
            self.slots[i] = IncidentSlot::default();
            self.backfill();
        } else {
            self.queue.retain(|q| q.incident_id != id);
        }
    }

    /// Returns deployed units to the pool.
    pub fn release(&mut self, r: usize, n: u32) {
        let n = n.min(self.pool.deployed(r));
        self.pool.available[r] += n;
    }

    pub fn active_count(&self) -> usize {
        self.slots.iter().filter(|s| s.active).count()
    }

    pub fn is_settled(&self) -> bool {
        self.active_count() == 0 && self.queue.is_empty()
    }

    /// Whether `action` would move a unit toward unmet demand.
    pub fn is_useful(&self, action: AllocAction) -> bool {
        match action {
            AllocAction::Noop => false,
            AllocAction::Dispatch { rtype, slot } => {
                let s = &self.slots[slot];
                s.active && s.unmet[rtype] > 0 && self.pool.available[rtype] > 0
            }
        }
    }

    /// No-op is always allowed; dispatches only when useful.
    pub fn action_mask(&self) -> [bool; NUM_ACTIONS] {
        let mut m = [false; NUM_ACTIONS];
        m[0] = true;
        for (k, slot) in m.iter_mut().enumerate().skip(1) {
            *slot = self.is_useful(AllocAction::decode(k).unwrap());
        }
        m
    }

    /// Applies a dispatch without advancing time. Returns whether a unit moved.
    /// A slot whose demand is fully met is freed and backfilled.
    pub fn dispatch(&mut self, action: AllocAction) -> bool {
        if !self.is_useful(action) {
            return false;
        }
        let AllocAction::Dispatch { rtype, slot } = action else { return false };
        self.pool.available[rtype] -= 1;
        self.slots[slot].unmet[rtype] -= 1;
        if self.slots[slot].unmet_total() == 0 {
            self.slots[slot] = IncidentSlot::default();
            self.backfill();
        }
        true
    }

    /// Advances waiting clocks by `dt` seconds.
    pub fn advance(&mut self, dt_s: f64) {
        for s in self.slots.iter_mut().filter(|s| s.active) {
            s.elapsed_s += dt_s;
        }
        for q in self.queue.iter_mut() {
            q.elapsed_s += dt_s;
        }
        self.clock_s += dt_s;
    }

    /// Mean waiting increment per step is the full step for every tracked
    /// incident, since slots are freed as soon as their demand is met.
    fn any_waiting(&self) -> bool {
        !self.is_settled()
    }

    /// One environment step: dispatch (if any), then time advances by
    /// `step_dt_s`.
    ///
    /// Reward = w_c * covered/registered - w_w * dt/3600
    /// - w_x * wasted - step cost; the waiting term applies while any
    ///   incident still has unmet demand after the dispatch.
    pub fn step(&mut self, k: usize) -> Result<StepOutcome, AllocError> {
        let action = AllocAction::decode(k)?;
        let w = self.config.weights.clone();
        let moved = self.dispatch(action);
        let wasted = matches!(action, AllocAction::Dispatch { .. }) && !moved;
        let covered = moved as u32;
        let coverage = if self.registered_demand > 0 { covered as f64 / self.registered_demand as f64 } else { 0.0 };
        let dt = self.config.step_dt_s;
        let wait = if self.any_waiting() { (dt / 3600.0).min(1.0) } else { 0.0 };
        self.advance(dt);
        self.steps += 1;
        let reward = w.coverage * coverage - w.waiting * wait - w.waste * (wasted as u8 as f64) - w.step_cost;
        let done = self.is_settled() || self.steps >= self.config.horizon_steps;
        Ok(StepOutcome { reward, done, covered, wasted })
    }

    pub fn encode_state(&self) -> [f64; STATE_DIM] {
        let mut s = [0.0; STATE_DIM];
        for r in 0..NUM_TYPES {
            let total = self.pool.total[r];
            if total > 0 {
                s[2 * r] = self.pool.available[r] as f64 / total as f64;
                s[2 * r + 1] = self.pool.deployed(r) as f64 / total as f64;
            }
        }
        for (i, slot) in self.slots.iter().enumerate().filter(|(_, s)| s.active) {
            let init: u32 = slot.initial_demand.iter().sum();
            s[8 + 3 * i] = (slot.severity / 10.0).clamp(0.0, 1.0);
            s[8 + 3 * i + 1] = if init > 0 { slot.unmet_total() as f64 / init as f64 } else { 0.0 };
            s[8 + 3 * i + 2] = (slot.elapsed_s / 3600.0).clamp(0.0, 1.0);
        }
        if self.config.clock_horizon_s > 0.0 {
            s[23] = (self.clock_s / self.config.clock_horizon_s).clamp(0.0, 1.0);
        }
        s
    }
}

/// ICS rule ladder: highest-severity incident first (ties: lower slot); within
/// it the available type with the largest unmet demand (ties: lower type).
pub fn baseline_policy(world: &AllocWorld) -> AllocAction {
    let mut slots: Vec<usize> = (0..NUM_SLOTS).filter(|&i| world.slots[i].active).collect();
    slots.sort_by(|&a, &b| world.slots[b].severity.total_cmp(&world.slots[a].severity).then(a.cmp(&b)));
    for i in slots {
        let s = &world.slots[i];
        let best = (0..NUM_TYPES)
            .filter(|&r| s.unmet[r] > 0 && world.pool.available[r] > 0)
            .min_by(|&a, &b| s.unmet[b].cmp(&s.unmet[a]).then(a.cmp(&b)));
        if let Some(r) = best {
            return AllocAction::Dispatch { rtype: r, slot: i };
        }
    }
    AllocAction::Noop
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub incidents: (usize, usize),
    pub demand_per_type: (u32, u32),
    pub resources_per_type: (u32, u32),
    /// Types that may carry demand or units.
    pub types: usize,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec { incidents: (1, 7), demand_per_type: (0, 3), resources_per_type: (2, 8), types: NUM_TYPES }
    }
}

/// Random world drawn from `spec`; the first incident always has demand.
pub fn random_world(spec: &WorldSpec, config: &AllocConfig, rng: &mut SimRng) -> AllocWorld {
    let mut res = [0u32; NUM_TYPES];
    for r in res.iter_mut().take(spec.types) {
        *r = rng.random_range(spec.resources_per_type.0..=spec.resources_per_type.1);
    }
    let mut world = AllocWorld::new(res, config.clone());
    let n = rng.random_range(spec.incidents.0..=spec.incidents.1);
    for j in 0..n {
        let mut demand = [0u32; NUM_TYPES];
        for d in demand.iter_mut().take(spec.types) {
            *d = rng.random_range(spec.demand_per_type.0..=spec.demand_per_type.1);
        }
        if demand.iter().sum::<u32>() == 0 {
            demand[rng.random_range(0..spec.types)] = 1;
        }
        let sev = (rng.random_range(10..=100) as f64) / 10.0;
        world.add_incident(&format!("inc-{j}"), sev, demand, 0.0).expect("fresh ids");
    }
    world
}

/// An optimal assignment of rows to columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column per row; `None` for rows left unassigned when rows outnumber
    /// columns.
    pub row_to_col: Vec<Option<usize>>,
    pub cost: f64,
}

impl Assignment {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_to_col.iter().enumerate().filter_map(|(r, c)| c.map(|c| (r, c)))
    }
}

/// Shortest-augmenting-path Hungarian method; requires `rows <= cols`.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost[0].len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Minimum total cost over `rows` x `cols` with `min(n, m)` pairs.
fn min_cost(cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let sub: Vec<Vec<f64>> = rows.iter().map(|&r| cols.iter().map(|&c| cost[r][c]).collect()).collect();
    if rows.len() <= cols.len() {
        hungarian(&sub).iter().enumerate().map(|(i, &j)| sub[i][j]).sum()
    } else {
        let t: Vec<Vec<f64>> = (0..cols.len()).map(|j| (0..rows.len()).map(|i| sub[i][j]).collect()).collect();
        hungarian(&t).iter().enumerate().map(|(j, &i)| t[j][i]).sum()
    }
}

/// Exact minimum-cost assignment. Among optimal assignments the one whose
/// row-to-column vector is lexicographically smallest wins, with "unassigned"
/// ordered after every column.
pub fn optimal_assignment(cost: &[Vec<f64>]) -> Result<Assignment, AllocError> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(AllocError::InvalidWorld("cost matrix must be at least 1x1".into()));
    }
    if cost.iter().any(|r| r.len() != m || r.iter().any(|c| !c.is_finite())) {
        return Err(AllocError::InvalidWorld("cost matrix must be rectangular and finite".into()));
    }
    let all_rows: Vec<usize> = (0..n).collect();
    let all_cols: Vec<usize> = (0..m).collect();
    let target = min_cost(cost, &all_rows, &all_cols);
    let scale: f64 = cost.iter().flatten().map(|c| c.abs()).fold(1.0, f64::max);
    let tol = 1e-9 * scale * (n.max(m) as f64);

    let mut free_cols: Vec<usize> = all_cols.clone();
    let mut spent = 0.0;
    let mut row_to_col = vec![None; n];
    for r in 0..n {
        let rest: Vec<usize> = (r + 1..n).collect();
        let mut chosen = false;
        for (ci, &c) in free_cols.iter().enumerate() {
            let mut cols = free_cols.clone();
            cols.remove(ci);
            // must still be able to pair the remaining rows fully
            let remaining_pairs = (n - r - 1).min(cols.len());
            if remaining_pairs + 1 + row_to_col.iter().flatten().count() != n.min(m) {
                continue;
            }
            let total = spent + cost[r][c] + min_cost(cost, &rest, &cols);
            if (total - target).abs() <= tol {
                row_to_col[r] = Some(c);
                spent += cost[r][c];
                free_cols.remove(ci);
                chosen = true;
                break;
            }
        }
        if !chosen {
            // leaving this row unassigned is the only optimal choice left
            row_to_col[r] = None;
        }
    }
    let cost_sum = row_to_col.iter().enumerate().filter_map(|(r, c)| c.map(|c| cost[r][c])).sum();
    Ok(Assignment { row_to_col, cost: cost_sum })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> AllocWorld {
        AllocWorld::new([2, 2, 2, 2], AllocConfig::default())
    }

    #[test]
    fn action_codec_is_bijective() {
        for k in 0..NUM_ACTIONS {
            assert_eq!(AllocAction::decode(k).unwrap().encode(), k);
        }
        assert_eq!(AllocAction::decode(21), Err(AllocError::InvalidAction(21)));
    }

    #[test]
    fn noop_in_empty_world_costs_one_step() {
        let mut w = world();
        let out = w.step(0).unwrap();
        assert!((out.reward + 0.01).abs() < 1e-15);
        assert!(out.done);
    }

    #[test]
    fn dispatch_to_inactive_slot_is_wasted() {
        let mut w = world();
        w.add_incident("a", 5.0, [1, 0, 0, 0], 0.0).unwrap();
        let k = AllocAction::Dispatch { rtype: 0, slot: 3 }.encode();
        let out = w.step(k).unwrap();
        assert!(out.wasted);
        let wait = 0.5 * 60.0 / 3600.0;
        assert!((out.reward - (-0.5 - wait - 0.01)).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_episode() {
        // noop, wasted dispatch, then the covering dispatch
        let mut w = world();
        w.add_incident("a", 5.0, [0, 1, 0, 0], 0.0).unwrap();
        let wait = 0.5 * 60.0 / 3600.0;
        let r1 = w.step(0).unwrap().reward;
        let r2 = w.step(AllocAction::Dispatch { rtype: 0, slot: 0 }.encode()).unwrap().reward;
        let last = w.step(AllocAction::Dispatch { rtype: 1, slot: 0 }.encode()).unwrap();
        assert!(last.done);
        let expected = (-wait - 0.01) + (-wait - 0.5 - 0.01) + (1.0 - 0.01);
        assert!((r1 + r2 + last.reward - expected).abs() < 1e-12);
        assert_eq!(w.pool.available, [2, 1, 2, 2]);
    }

    #[test]
    fn encode_empty_and_full() {
        let mut w = world();
        w.clock_s = 43_200.0;
        let s = w.encode_state();
        assert_eq!(s[23], 0.5);
        for r in 0..4 {
            assert_eq!(s[2 * r], 1.0);
            assert_eq!(s[2 * r + 1], 0.0);
        }
        assert!(s[8..23].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn overflow_queue_backfills_by_severity() {
        let mut w = AllocWorld::new([10, 0, 0, 0], AllocConfig::default());
        for (i, sev) in [1.0, 2.0, 3.0, 4.0, 5.0, 9.0, 7.0].iter().enumerate() {
            w.add_incident(&format!("i{i}"), *sev, [1, 0, 0, 0], 0.0).unwrap();
        }
        assert_eq!(w.queue.iter().map(|q| q.severity).collect::<Vec<_>>(), [9.0, 7.0]);
        assert!(w.dispatch(AllocAction::Dispatch { rtype: 0, slot: 0 }));
        assert_eq!(w.slots[0].incident_id, "i5");
    }

    #[test]
    fn baseline_serves_most_severe_first() {
        let mut w = world();
        w.add_incident("low", 3.0, [1, 0, 0, 0], 0.0).unwrap();
        w.add_incident("high", 7.0, [0, 1, 2, 0], 0.0).unwrap();
        assert_eq!(baseline_policy(&w), AllocAction::Dispatch { rtype: 2, slot: 1 });
        let empty = world();
        assert_eq!(baseline_policy(&empty), AllocAction::Noop);
    }

    #[test]
    fn assignment_trivia() {
        let a = optimal_assignment(&[vec![4.0]]).unwrap();
        assert_eq!(a.row_to_col, vec![Some(0)]);
        let diag = vec![vec![0.0, 5.0, 5.0], vec![5.0, 0.0, 5.0], vec![5.0, 5.0, 0.0]];
        assert_eq!(optimal_assignment(&diag).unwrap().row_to_col, vec![Some(0), Some(1), Some(2)]);
        let ties = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(optimal_assignment(&ties).unwrap().row_to_col, vec![Some(0), Some(1)]);
        let tall = vec![vec![3.0], vec![1.0], vec![1.0]];
        assert_eq!(optimal_assignment(&tall).unwrap().row_to_col, vec![None, Some(0), None]);
    }
}
