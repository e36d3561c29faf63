//! Tabular data-driven planning: collect trajectories, estimate
//! conditional observation ranges and worst-case stage costs per history
//! window, and run the same worst-case dynamic program against the learned
//! generators.
//!
//! A learned model is keyed by the last `k` observations and `k - 1`
//! actions of the history. `k = 1` plans on the latest observation alone;
//! `k = horizon + 1` keeps the whole memory, in which case an exhaustive
//! dataset reproduces the true model's conditional ranges exactly. Unseen
//! histories are a hard error, never an optimistic default: a worst-case
//! planner must not silently underestimate what it has not observed.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{
    replicate_rng, rollout_one, solve_abstraction_dp, Compressor, InfoAbstraction, Realization,
    RolloutPolicy, Strategy, ValueTable,
};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::model::{EnumerationOptions, SystemModel};
use crate::point::Point;
use crate::ranges;
use crate::set::FinitePointSet;

/// One logged step: the observation received, the action taken, the cost
/// paid.
#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
pub struct TrajectoryStep {
    pub t: usize,
    pub y: Point,
    pub u: Point,
    pub c: f64,
}

/// One closed-loop run over the full horizon.
#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
pub struct Trajectory {
    pub replicate: u64,
    pub steps: Vec<TrajectoryStep>,
}

/// A batch of trajectories plus how it was generated.
#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
pub struct TrajectoryDataset {
    pub trajectories: Vec<Trajectory>,
    /// Exploration policy that produced the data.
    pub policy: String,
    pub seed: u64,
}

impl TrajectoryDataset {
    pub fn horizon(&self) -> Result<usize> {
        let first = self.trajectories.first().ok_or(Error::EmptyDataset)?;
        if first.steps.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(first.steps.len() - 1)
    }

    /// Checks that every trajectory spans the same horizon with
    /// consecutively numbered steps and entries inside the system's
    /// declared sets.
    pub fn validate_against(&self, sys: &SystemModel) -> Result<()> {
        let horizon = sys.horizon();
        for traj in &self.trajectories {
            if traj.steps.len() != horizon + 1 {
                return Err(Error::DimensionMismatch {
                    expected: horizon + 1,
                    got: traj.steps.len(),
                });
            }
            for (t, step) in traj.steps.iter().enumerate() {
                if step.t != t {
                    return Err(Error::Schema(format!(
                        "replicate {} has step {} recorded at position {t}",
                        traj.replicate, step.t
                    )));
                }
                if !sys.observations(t).contains(&step.y) {
                    return Err(Error::OutOfRangeObservation {
                        t,
                        observation: step.y.to_string(),
                    });
                }
                if !sys.actions(t).contains(&step.u) {
                    return Err(Error::OutOfRangeAction {
                        t,
                        action: step.u.to_string(),
                    });
                }
                if !step.c.is_finite() || step.c < 0.0 {
                    return Err(Error::NegativeInput(format!(
                        "cost {} in replicate {} at t={t}",
                        step.c, traj.replicate
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of distinct actions observed per time, for coverage reports.
    pub fn action_coverage(&self) -> Result<Vec<usize>> {
        let horizon = self.horizon()?;
        let mut seen: Vec<BTreeSet<&Point>> = vec![BTreeSet::new(); horizon + 1];
        for traj in &self.trajectories {
            for step in &traj.steps {
                seen[step.t].insert(&step.u);
            }
        }
        Ok(seen.into_iter().map(|s| s.len()).collect())
    }

    /// Serializes as newline-delimited JSON, one record per step.
    pub fn to_ndjson(&self) -> Result<String> {
        let mut out = String::new();
        for traj in &self.trajectories {
            for step in &traj.steps {
                let record = NdjsonRecord {
                    replicate: traj.replicate,
                    t: step.t,
                    y: step.y.clone(),
                    u: step.u.clone(),
                    c: step.c,
                };
                out.push_str(&serde_json::to_string(&record)?);
                out.push('\n');
            }
        }
        Ok(out)
    }

    /// Parses newline-delimited JSON records, grouping them by replicate
    /// and ordering each trajectory by time.
    pub fn from_ndjson(text: &str) -> Result<TrajectoryDataset> {
        let mut grouped: BTreeMap<u64, Vec<TrajectoryStep>> = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let record: NdjsonRecord = serde_json::from_str(line)?;
            grouped.entry(record.replicate).or_default().push(TrajectoryStep {
                t: record.t,
                y: record.y,
                u: record.u,
                c: record.c,
            });
        }
        if grouped.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let trajectories = grouped
            .into_iter()
            .map(|(replicate, mut steps)| {
                steps.sort_by_key(|s| s.t);
                for (i, step) in steps.iter().enumerate() {
                    if step.t != i {
                        return Err(Error::Schema(format!(
                            "replicate {replicate} is missing a record for t={i}"
                        )));
                    }
                }
                Ok(Trajectory { replicate, steps })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrajectoryDataset {
            trajectories,
            policy: "imported".into(),
            seed: 0,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct NdjsonRecord {
    replicate: u64,
    t: usize,
    y: Point,
    u: Point,
    c: f64,
}

/// How actions are chosen while collecting data.
#[derive(Clone, Copy, Debug)]
pub enum ExplorationPolicy<'a> {
    UniformRandom,
    RoundRobin,
    Strategy(&'a Strategy),
}

impl ExplorationPolicy<'_> {
    fn name(&self) -> String {
        match self {
            ExplorationPolicy::UniformRandom => "uniform-random".into(),
            ExplorationPolicy::RoundRobin => "round-robin".into(),
            ExplorationPolicy::Strategy(s) => format!("strategy:{}", s.kind()),
        }
    }

    fn rollout_policy(&self) -> RolloutPolicy<'_> {
        match self {
            ExplorationPolicy::UniformRandom => RolloutPolicy::UniformRandom,
            ExplorationPolicy::RoundRobin => RolloutPolicy::RoundRobin,
            ExplorationPolicy::Strategy(s) => RolloutPolicy::Strategy(s),
        }
    }
}

fn steps_to_trajectory(replicate: u64, steps: Vec<crate::dp::RolloutStep>) -> Trajectory {
    Trajectory {
        replicate,
        steps: steps
            .into_iter()
            .map(|s| TrajectoryStep {
                t: s.t,
                y: s.observation,
                u: s.action,
                c: s.cost,
            })
            .collect(),
    }
}

/// Collects `n` seeded closed-loop trajectories. Replicate `k` draws from a
/// stream derived from `seed` and `k` alone, so datasets are reproducible.
pub fn generate_dataset(
    sys: &SystemModel,
    policy: ExplorationPolicy<'_>,
    n: u64,
    seed: u64,
) -> Result<TrajectoryDataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let trajectories = (0..n)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep);
            let (steps, _) = rollout_one(sys, &policy.rollout_policy(), rep, &mut rng)?;
            Ok(steps_to_trajectory(rep, steps))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryDataset {
        trajectories,
        policy: policy.name(),
        seed,
    })
}

/// Enumerates **every** trajectory: all initial states, disturbance and
/// noise sequences, and action sequences. The budget caps the number of
/// emitted trajectories.
pub fn generate_exhaustive_dataset(
    sys: &SystemModel,
    opts: &EnumerationOptions,
) -> Result<TrajectoryDataset> {
    let mut trajectories = Vec::new();
    if sys.is_state_space() {
        exhaustive_state(sys, opts, &mut trajectories)?;
    } else {
        exhaustive_io(sys, opts, &mut trajectories)?;
    }
    Ok(TrajectoryDataset {
        trajectories,
        policy: "exhaustive".into(),
        seed: 0,
    })
}

fn exhaustive_state(
    sys: &SystemModel,
    opts: &EnumerationOptions,
    out: &mut Vec<Trajectory>,
) -> Result<()> {
    let ss = sys.state_space()?;
    let horizon = sys.horizon();

    fn recurse(
        ss: &crate::model::StateSpaceModel,
        horizon: usize,
        budget: usize,
        t: usize,
        xi: u32,
        y: &Point,
        prefix: &mut Vec<TrajectoryStep>,
        out: &mut Vec<Trajectory>,
    ) -> Result<()> {
        for ui in 0..ss.actions(t).len() as u32 {
            prefix.push(TrajectoryStep {
                t,
                y: y.clone(),
                u: ss.actions(t).points()[ui as usize].clone(),
                c: ss.cost_value(t, xi, ui),
            });
            if t == horizon {
                if out.len() >= budget {
                    return Err(Error::ModelTooLarge {
                        nodes: out.len() + 1,
                        budget,
                    });
                }
                out.push(Trajectory {
                    replicate: out.len() as u64,
                    steps: prefix.clone(),
                });
            } else {
                for wi in 0..ss.disturbances(t).len() as u32 {
                    let next = ss.next_state_index(t, xi, ui, wi);
                    for ni in 0..ss.noises(t + 1).len() as u32 {
                        let y = ss.observations(t + 1).points()
                            [ss.observation_index(t + 1, next, ni) as usize]
                            .clone();
                        recurse(ss, horizon, budget, t + 1, next, &y, prefix, out)?;
                    }
                }
            }
            prefix.pop();
        }
        Ok(())
    }

    let mut prefix = Vec::with_capacity(horizon + 1);
    for xi in 0..ss.states(0).len() as u32 {
        for ni in 0..ss.noises(0).len() as u32 {
            let y = ss.observations(0).points()[ss.observation_index(0, xi, ni) as usize].clone();
            recurse(ss, horizon, opts.budget, 0, xi, &y, &mut prefix, out)?;
        }
    }
    Ok(())
}

fn exhaustive_io(
    sys: &SystemModel,
    opts: &EnumerationOptions,
    out: &mut Vec<Trajectory>,
) -> Result<()> {
    struct Walk<'a> {
        io: &'a crate::model::IoModel,
        horizon: usize,
        budget: usize,
        ws: Vec<Point>,
        us: Vec<Point>,
        prefix: Vec<TrajectoryStep>,
    }

    impl Walk<'_> {
        // Entered with `ws = (w_0..w_{t-1})` for `t >= 1` (just `w_0` at
        // `t = 0`) and `us = (u_0..u_{t-1})`, mirroring how rollouts feed
        // the observation map.
        fn at_time(&mut self, t: usize, out: &mut Vec<Trajectory>) -> Result<()> {
            let y = self.io.observe(t, &self.ws, &self.us);
            for u in self.io.actions(t).points().to_vec() {
                self.us.push(u.clone());
                if t == 0 {
                    self.after_disturbance(t, &y, &u, out)?;
                } else {
                    for w in self.io.disturbances(t).points().to_vec() {
                        self.ws.push(w);
                        self.after_disturbance(t, &y, &u, out)?;
                        self.ws.pop();
                    }
                }
                self.us.pop();
            }
            Ok(())
        }

        fn after_disturbance(
            &mut self,
            t: usize,
            y: &Point,
            u: &Point,
            out: &mut Vec<Trajectory>,
        ) -> Result<()> {
            self.prefix.push(TrajectoryStep {
                t,
                y: y.clone(),
                u: u.clone(),
                c: self.io.cost(t, &self.ws, &self.us),
            });
            if t == self.horizon {
                if out.len() >= self.budget {
                    return Err(Error::ModelTooLarge {
                        nodes: out.len() + 1,
                        budget: self.budget,
                    });
                }
                out.push(Trajectory {
                    replicate: out.len() as u64,
                    steps: self.prefix.clone(),
                });
            } else {
                self.at_time(t + 1, out)?;
            }
            self.prefix.pop();
            Ok(())
        }
    }

    let io = sys.io()?;
    let horizon = sys.horizon();
    for w0 in io.disturbances(0).points().to_vec() {
        let mut walk = Walk {
            io,
            horizon,
            budget: opts.budget,
            ws: vec![w0],
            us: Vec::new(),
            prefix: Vec::with_capacity(horizon + 1),
        };
        walk.at_time(0, out)?;
    }
    Ok(())
}

/// The last `window` observations and `window - 1` actions of a history,
/// the key a learned model predicts from.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Debug)]
pub struct WindowKey {
    pub observations: Vec<Point>,
    pub actions: Vec<Point>,
}

impl WindowKey {
    /// The key visible at step `t` of a trajectory.
    pub fn at_step(traj: &Trajectory, t: usize, window: usize) -> WindowKey {
        let lo_obs = (t + 1).saturating_sub(window);
        let lo_act = t.saturating_sub(window.saturating_sub(1));
        WindowKey {
            observations: traj.steps[lo_obs..=t].iter().map(|s| s.y.clone()).collect(),
            actions: traj.steps[lo_act..t].iter().map(|s| s.u.clone()).collect(),
        }
    }

    /// The key one step later, after acting and observing.
    pub fn advance(&self, u: &Point, next_obs: &Point, window: usize) -> WindowKey {
        let mut observations = self.observations.clone();
        observations.push(next_obs.clone());
        if observations.len() > window {
            observations.remove(0);
        }
        let mut actions = self.actions.clone();
        actions.push(u.clone());
        while actions.len() > window.saturating_sub(1) {
            actions.remove(0);
        }
        WindowKey {
            observations,
            actions,
        }
    }

    /// The realization this key denotes in the window compression, so that
    /// learned strategies can be applied to live memories.
    pub fn realization(&self) -> Realization {
        Realization::Tuple(vec![
            Realization::Tuple(
                self.observations
                    .iter()
                    .cloned()
                    .map(Realization::Point)
                    .collect(),
            ),
            Realization::Tuple(self.actions.iter().cloned().map(Realization::Point).collect()),
        ])
    }
}

impl std::fmt::Display for WindowKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.realization())
    }
}

/// What the data says about one (window, action) pair.
#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
pub struct ActionStats {
    pub action: Point,
    /// Every next observation seen after this pair; empty at the final
    /// time.
    pub next_observations: FinitePointSet,
    /// Worst cost incurred with this pair.
    pub max_cost: f64,
}

/// Everything learned about one window key at one time.
#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
pub struct KeyStats {
    pub key: WindowKey,
    /// Sorted by action.
    pub actions: Vec<ActionStats>,
}

impl KeyStats {
    pub fn action(&self, u: &Point) -> Option<&ActionStats> {
        self.actions
            .binary_search_by(|a| a.action.cmp(u))
            .ok()
            .map(|i| &self.actions[i])
    }
}

/// Empirical conditional ranges and worst-case costs keyed by history
/// windows, one level per time.
#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
pub struct EmpiricalRangeModel {
    pub window: usize,
    pub horizon: usize,
    /// `levels[t]` is sorted by key.
    pub levels: Vec<Vec<KeyStats>>,
}

impl EmpiricalRangeModel {
    pub fn stats(&self, t: usize, key: &WindowKey) -> Option<&KeyStats> {
        let level = &self.levels[t];
        level
            .binary_search_by(|k| k.key.cmp(key))
            .ok()
            .map(|i| &level[i])
    }

    /// Predicted set of next observations after `(key, action)`.
    pub fn range(&self, t: usize, key: &WindowKey, u: &Point) -> Option<&FinitePointSet> {
        self.stats(t, key)
            .and_then(|k| k.action(u))
            .map(|a| &a.next_observations)
    }

    /// Worst observed cost of `(key, action)`.
    pub fn max_cost(&self, t: usize, key: &WindowKey, u: &Point) -> Option<f64> {
        self.stats(t, key).and_then(|k| k.action(u)).map(|a| a.max_cost)
    }

    pub fn key_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<EmpiricalRangeModel> {
        let model: EmpiricalRangeModel = serde_json::from_str(json)?;
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Schema("the window must keep at least one observation".into()));
        }
        if self.levels.len() != self.horizon + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.horizon + 1,
                got: self.levels.len(),
            });
        }
        for (t, level) in self.levels.iter().enumerate() {
            if level.windows(2).any(|w| w[0].key >= w[1].key) {
                return Err(Error::Schema(format!(
                    "keys at time {t} are not sorted and duplicate-free"
                )));
            }
            for stats in level {
                if stats.actions.windows(2).any(|w| w[0].action >= w[1].action) {
                    return Err(Error::Schema(format!(
                        "actions for key {} at time {t} are not sorted and duplicate-free",
                        stats.key
                    )));
                }
                for a in &stats.actions {
                    if t < self.horizon && a.next_observations.is_empty() {
                        return Err(Error::GeneratorIncomplete(format!(
                            "no next observations recorded for key {} under action {} at time {t}",
                            stats.key, a.action
                        )));
                    }
                    if !a.max_cost.is_finite() || a.max_cost < 0.0 {
                        return Err(Error::NegativeInput(format!(
                            "recorded cost {} for key {} at time {t}",
                            a.max_cost, stats.key
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Groups every step of the dataset by its last-`window` history and
/// records, per action, the union of next observations and the worst cost.
pub fn build_empirical_ranges(
    dataset: &TrajectoryDataset,
    window: usize,
) -> Result<EmpiricalRangeModel> {
    if window == 0 {
        return Err(Error::Schema("the window must keep at least one observation".into()));
    }
    let horizon = dataset.horizon()?;
    let mut levels: Vec<BTreeMap<WindowKey, BTreeMap<Point, (BTreeSet<Point>, f64)>>> =
        vec![BTreeMap::new(); horizon + 1];
    for traj in &dataset.trajectories {
        if traj.steps.len() != horizon + 1 {
            return Err(Error::DimensionMismatch {
                expected: horizon + 1,
                got: traj.steps.len(),
            });
        }
        for (t, step) in traj.steps.iter().enumerate() {
            let key = WindowKey::at_step(traj, t, window);
            let entry = levels[t]
                .entry(key)
                .or_default()
                .entry(step.u.clone())
                .or_insert_with(|| (BTreeSet::new(), f64::NEG_INFINITY));
            entry.1 = entry.1.max(step.c);
            if t < horizon {
                entry.0.insert(traj.steps[t + 1].y.clone());
            }
        }
    }
    let levels = levels
        .into_iter()
        .map(|level| {
            level
                .into_iter()
                .map(|(key, actions)| KeyStats {
                    key,
                    actions: actions
                        .into_iter()
                        .map(|(action, (next, max_cost))| ActionStats {
                            action,
                            next_observations: FinitePointSet::new(next),
                            max_cost,
                        })
                        .collect(),
                })
                .collect()
        })
        .collect();
    let model = EmpiricalRangeModel {
        window,
        horizon,
        levels,
    };
    model.validate()?;
    Ok(model)
}

/// Training loss of one prediction against the data: the average Hausdorff
/// distance between the predicted and empirical observation ranges plus
/// `cost_weight` times the absolute cost error.
pub fn range_prediction_loss(
    predicted: &FinitePointSet,
    empirical: &FinitePointSet,
    predicted_cost: f64,
    empirical_cost: f64,
    cost_weight: f64,
    m: &Metric,
) -> Result<f64> {
    if !cost_weight.is_finite() || cost_weight < 0.0 {
        return Err(Error::NegativeInput(format!(
            "cost weight {cost_weight}"
        )));
    }
    let range_term = ranges::average_hausdorff(predicted, empirical, m)?;
    Ok(cost_weight * (predicted_cost - empirical_cost).abs() + range_term)
}

/// Runs the worst-case dynamic program on the learned model: window keys
/// are the realizations, recorded worst costs the stage generators, and
/// predicted observation ranges drive the transitions. Fails with
/// [`Error::MissingKey`] if any reachable key lacks data for some action.
///
/// The system supplies only its signature: criterion, horizon, action sets
/// and metrics. Its dynamics are never consulted.
pub fn solve_dp_from_data(
    model: &EmpiricalRangeModel,
    sys: &SystemModel,
) -> Result<(ValueTable, Strategy)> {
    if model.levels.iter().all(Vec::is_empty) {
        return Err(Error::EmptyDataset);
    }
    model.validate()?;
    if model.horizon != sys.horizon() {
        return Err(Error::DimensionMismatch {
            expected: sys.horizon(),
            got: model.horizon,
        });
    }
    let horizon = model.horizon;
    let window = model.window;
    let compressor = Compressor::Window {
        observations: window,
        actions: window.saturating_sub(1),
    };
    let mut spaces = Vec::with_capacity(horizon + 1);
    let mut sup_cost = Vec::with_capacity(horizon + 1);
    let mut transitions = Vec::with_capacity(horizon);
    let mut metrics = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let level = &model.levels[t];
        if level.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let us = sys.actions(t);
        let mut costs = Vec::with_capacity(level.len() * us.len());
        let mut trans: Vec<Vec<u32>> = Vec::with_capacity(level.len() * us.len());
        for stats in level {
            for u in us {
                let found = stats.action(u).ok_or_else(|| Error::MissingKey {
                    t,
                    key: format!("{} with action {u}", stats.key),
                })?;
                costs.push(found.max_cost);
                if t < horizon {
                    let next_level = &model.levels[t + 1];
                    let mut successors = BTreeSet::new();
                    for y in &found.next_observations {
                        let next = stats.key.advance(u, y, window);
                        let zi = next_level
                            .binary_search_by(|k| k.key.cmp(&next))
                            .map_err(|_| Error::MissingKey {
                                t: t + 1,
                                key: next.to_string(),
                            })?;
                        successors.insert(zi as u32);
                    }
                    trans.push(successors.into_iter().collect());
                }
            }
        }
        spaces.push(level.iter().map(|k| k.key.realization()).collect());
        sup_cost.push(costs);
        if t < horizon {
            transitions.push(trans);
        }
        metrics.push(compressor.metric(sys, t)?);
        actions.push(us.clone());
    }
    let abstraction = InfoAbstraction::from_parts(
        sys.criterion(),
        compressor,
        actions,
        spaces,
        sup_cost,
        transitions,
        metrics,
    )?;
    solve_abstraction_dp(sys, abstraction)
}
