//! Backward induction, strategy extraction and strategy evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_memory_tree, Criterion, EnumerationOptions, Memory, SystemModel};
use crate::point::Point;
use crate::set::FinitePointSet;

use super::{build_filter_graph, Compressor, InfoAbstraction, Realization};

/// Optimal worst-case values of an abstraction: `value(t, zi)` is the
/// cost-to-go from realization `zi` at time `t`, and `q_value(t, zi, ui)`
/// the cost-to-go with the first action pinned.
#[derive(Clone, Debug)]
pub struct ValueTable {
    abstraction: Arc<InfoAbstraction>,
    values: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn abstraction(&self) -> &InfoAbstraction {
        &self.abstraction
    }

    pub fn abstraction_arc(&self) -> Arc<InfoAbstraction> {
        Arc::clone(&self.abstraction)
    }

    pub fn value(&self, t: usize, zi: u32) -> f64 {
        self.values[t][zi as usize]
    }

    pub fn values(&self, t: usize) -> &[f64] {
        &self.values[t]
    }

    pub fn q_value(&self, t: usize, zi: u32, ui: u32) -> f64 {
        self.q[t][zi as usize * self.abstraction.actions(t).len() + ui as usize]
    }

    /// Value of a realization looked up by content.
    pub fn value_of(&self, t: usize, z: &Realization) -> Result<f64> {
        match self.abstraction.index_of(t, z) {
            Some(zi) => Ok(self.value(t, zi)),
            None => Err(Error::MissingKey {
                t,
                key: z.to_string(),
            }),
        }
    }

    /// The guaranteed worst-case cost before anything is observed: the
    /// maximum value over initial realizations.
    pub fn initial_value(&self) -> f64 {
        self.values[0].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Provenance of a strategy.
#[derive(Copy, Clone, PartialEq, Eq, Serialize, Deserialize, Debug)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Memory,
    InfoState,
    Approx,
    DataDriven,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::Memory => write!(f, "memory"),
            StrategyKind::InfoState => write!(f, "info-state"),
            StrategyKind::Approx => write!(f, "approx"),
            StrategyKind::DataDriven => write!(f, "data-driven"),
        }
    }
}

/// Rule applied when several actions share the minimal Q-value.
#[derive(Copy, Clone, Default, PartialEq, Eq, Serialize, Deserialize, Debug)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// The canonically smallest minimizing action.
    #[default]
    SmallestAction,
}

impl fmt::Display for TieBreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TieBreak::SmallestAction => write!(f, "smallest-action"),
        }
    }
}

/// A feedback strategy on realizations: `u_t = s_t(sigma_t(m_t))`.
#[derive(Clone, Debug)]
pub struct Strategy {
    kind: StrategyKind,
    tie_break: TieBreak,
    compressor: Compressor,
    actions: Vec<BTreeMap<Realization, Point>>,
}

impl Strategy {
    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn tie_break(&self) -> TieBreak {
        self.tie_break
    }

    pub fn compressor(&self) -> &Compressor {
        &self.compressor
    }

    pub fn action_map(&self, t: usize) -> &BTreeMap<Realization, Point> {
        &self.actions[t]
    }

    /// The action prescribed for a realization.
    pub fn action(&self, t: usize, z: &Realization) -> Result<&Point> {
        self.actions[t].get(z).ok_or_else(|| Error::MissingKey {
            t,
            key: z.to_string(),
        })
    }

    /// The action prescribed for a memory.
    pub fn act(&self, sys: &SystemModel, m: &Memory) -> Result<Point> {
        let z = self.compressor.realize(sys, m)?;
        Ok(self.action(m.time(), &z)?.clone())
    }
}

fn kind_of(c: &Compressor) -> StrategyKind {
    match c {
        Compressor::IdentityMemory => StrategyKind::Memory,
        Compressor::ConditionalRange => StrategyKind::InfoState,
        Compressor::QuantizedRange { .. } | Compressor::Projected { .. } => StrategyKind::Approx,
        Compressor::Window { .. } => StrategyKind::DataDriven,
    }
}

fn solve_table(a: InfoAbstraction) -> ValueTable {
    let horizon = a.horizon();
    let criterion = a.criterion();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); horizon + 1];
    let mut q: Vec<Vec<f64>> = vec![Vec::new(); horizon + 1];
    for t in (0..=horizon).rev() {
        let nz = a.space(t).len();
        let nu = a.actions(t).len();
        let mut qt = vec![0.0; nz * nu];
        let mut vt = vec![0.0; nz];
        for zi in 0..nz {
            let mut best = f64::INFINITY;
            for ui in 0..nu {
                let stage = a.sup_cost(t, zi as u32, ui as u32);
                let qv = if t == horizon {
                    stage
                } else {
                    let to_go = a
                        .successors(t, zi as u32, ui as u32)
                        .iter()
                        .map(|&zj| values[t + 1][zj as usize])
                        .fold(f64::NEG_INFINITY, f64::max);
                    match criterion {
                        Criterion::Instantaneous => stage.max(to_go),
                        Criterion::Terminal => to_go,
                    }
                };
                qt[zi * nu + ui] = qv;
                best = best.min(qv);
            }
            vt[zi] = best;
        }
        values[t] = vt;
        q[t] = qt;
    }
    ValueTable {
        abstraction: Arc::new(a),
        values,
        q,
    }
}

/// Greedy strategy from a solved table.
pub fn extract_strategy(table: &ValueTable, tie_break: TieBreak) -> Strategy {
    let a = table.abstraction();
    let mut actions = Vec::with_capacity(a.horizon() + 1);
    for t in 0..=a.horizon() {
        let us = a.actions(t).points();
        let mut map = BTreeMap::new();
        for (zi, z) in a.space(t).iter().enumerate() {
            let mut best_ui = 0usize;
            let mut best = f64::INFINITY;
            for ui in 0..us.len() {
                let qv = table.q_value(t, zi as u32, ui as u32);
                // Strict improvement: the scan runs in canonical action
                // order, so the first minimizer is the smallest action.
                if qv < best {
                    best = qv;
                    best_ui = ui;
                }
            }
            map.insert(z.clone(), us[best_ui].clone());
        }
        actions.push(map);
    }
    let TieBreak::SmallestAction = tie_break;
    Strategy {
        kind: kind_of(a.compressor()),
        tie_break,
        compressor: a.compressor().clone(),
        actions,
    }
}

/// Solves an abstraction by backward induction and extracts its greedy
/// strategy. The abstraction must match the system's horizon and criterion.
pub fn solve_abstraction_dp(
    sys: &SystemModel,
    a: InfoAbstraction,
) -> Result<(ValueTable, Strategy)> {
    if a.horizon() != sys.horizon() || a.criterion() != sys.criterion() {
        return Err(Error::Schema(format!(
            "abstraction (criterion {}, horizon {}) does not match the system \
             (criterion {}, horizon {})",
            a.criterion(),
            a.horizon(),
            sys.criterion(),
            sys.horizon()
        )));
    }
    let table = solve_table(a);
    let strategy = extract_strategy(&table, TieBreak::default());
    Ok((table, strategy))
}

/// Solves the exhaustive dynamic program over raw memories. Its value is
/// the optimal worst-case cost of the system.
pub fn solve_memory_dp(
    sys: &SystemModel,
    opts: &EnumerationOptions,
) -> Result<(ValueTable, Strategy)> {
    let a = Compressor::IdentityMemory.build(sys, opts)?;
    solve_abstraction_dp(sys, a)
}

/// Dynamic program specialized to terminal-cost systems. The terminal
/// value depends on the history only through the set of states consistent
/// with it, so for state-space models the recursion runs on the
/// conditional-range graph instead of the exponentially larger raw memory
/// tree; values and worst-case guarantees are identical, histories merge.
pub fn solve_terminal_dp(
    sys: &SystemModel,
    opts: &EnumerationOptions,
) -> Result<(ValueTable, Strategy)> {
    if sys.criterion() != Criterion::Terminal {
        return Err(Error::Schema(format!(
            "the terminal solver requires a terminal-cost system, got criterion {}",
            sys.criterion()
        )));
    }
    if sys.is_state_space() {
        let a = Compressor::ConditionalRange.build(sys, opts)?;
        solve_abstraction_dp(sys, a)
    } else {
        solve_memory_dp(sys, opts)
    }
}

/// Exact worst-case cost of a strategy on the true system: the maximum of
/// the realized criterion over every initial state, disturbance and noise
/// history, with actions pinned to the strategy's prescriptions.
pub fn evaluate_strategy_worst_case(
    sys: &SystemModel,
    s: &Strategy,
    opts: &EnumerationOptions,
) -> Result<f64> {
    if s.compressor.memory_based() {
        evaluate_on_tree(sys, s, opts)
    } else {
        evaluate_on_graph(sys, s, opts)
    }
}

fn pinned_value(criterion: Criterion, t: usize, horizon: usize, stage: f64, to_go: f64) -> f64 {
    if t == horizon {
        stage
    } else {
        match criterion {
            Criterion::Instantaneous => stage.max(to_go),
            Criterion::Terminal => to_go,
        }
    }
}

fn evaluate_on_tree(sys: &SystemModel, s: &Strategy, opts: &EnumerationOptions) -> Result<f64> {
    let tree = build_memory_tree(sys, opts)?;
    let horizon = sys.horizon();
    let mut to_go: Vec<f64> = Vec::new();
    for t in (0..=horizon).rev() {
        let level = tree.level(t);
        let mut theta = vec![0.0; level.len()];
        for (ni, node) in level.iter().enumerate() {
            let z = s.compressor.realize(sys, &node.memory)?;
            let u = s.action(t, &z)?;
            let ui = sys
                .actions(t)
                .index_of(u)
                .ok_or_else(|| Error::OutOfRangeAction {
                    t,
                    action: u.to_string(),
                })? as u32;
            let stage = tree.cost_sup(sys, t, ni as u32, ui);
            let succ = node
                .children
                .range((ui, 0)..=(ui, u32::MAX))
                .map(|(_, &child)| to_go[child as usize])
                .fold(f64::NEG_INFINITY, f64::max);
            theta[ni] = pinned_value(sys.criterion(), t, horizon, stage, succ);
        }
        to_go = theta;
    }
    Ok(to_go.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

fn evaluate_on_graph(sys: &SystemModel, s: &Strategy, opts: &EnumerationOptions) -> Result<f64> {
    let ss = sys.state_space()?;
    let graph = build_filter_graph(sys, opts, s.compressor.tracks_initial_obs())?;
    let horizon = sys.horizon();
    let mut to_go: Vec<f64> = Vec::new();
    for t in (0..=horizon).rev() {
        let level = graph.level(t);
        let mut theta = vec![0.0; level.len()];
        for (ni, node) in level.iter().enumerate() {
            let support = ss.support_points(t, &node.support);
            let y0 = graph.initial_obs_point(sys, t, ni as u32);
            let z = s.compressor.realize_support(t, &support, y0.as_ref())?;
            let u = s.action(t, &z)?;
            let ui = sys
                .actions(t)
                .index_of(u)
                .ok_or_else(|| Error::OutOfRangeAction {
                    t,
                    action: u.to_string(),
                })? as u32;
            let stage = ss.support_cost_sup(t, &node.support, ui);
            let succ = if t == horizon {
                f64::NEG_INFINITY
            } else {
                node.successors[ui as usize]
                    .iter()
                    .map(|&(_, child)| to_go[child as usize])
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            theta[ni] = pinned_value(sys.criterion(), t, horizon, stage, succ);
        }
        to_go = theta;
    }
    Ok(to_go.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Per-time suboptimality radii from per-time tolerances.
///
/// For the instantaneous criterion, `alpha[t] = max(eps[t], alpha[t+1] +
/// lips[t+1] * delta[t])` with `alpha` past the horizon equal to zero; for
/// the terminal criterion, `alpha[T] = eps[T]` and `alpha[t] = alpha[t+1] +
/// lips[t+1] * delta[t]`. `lips[t]` is the Lipschitz constant of the value
/// function at time `t`; `lips[0]` does not enter either recursion. Playing
/// the greedy strategy of an abstraction with tolerances `(eps, delta)`
/// costs at most `2 * alpha[0]` more than the optimum.
pub fn alpha_bound(
    criterion: Criterion,
    eps: &[f64],
    delta: &[f64],
    lips: &[f64],
) -> Result<Vec<f64>> {
    if eps.is_empty() {
        return Err(Error::EmptySet("alpha_bound"));
    }
    for len in [delta.len(), lips.len()] {
        if len != eps.len() {
            return Err(Error::DimensionMismatch {
                expected: eps.len(),
                got: len,
            });
        }
    }
    for &v in eps.iter().chain(delta).chain(lips) {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::NegativeInput(format!(
                "tolerances and Lipschitz constants must be finite and nonnegative, got {v}"
            )));
        }
    }
    let horizon = eps.len() - 1;
    let mut alpha = vec![0.0; horizon + 1];
    match criterion {
        Criterion::Instantaneous => {
            let mut next = 0.0;
            for t in (0..=horizon).rev() {
                let l = if t < horizon { lips[t + 1] } else { 0.0 };
                alpha[t] = eps[t].max(next + l * delta[t]);
                next = alpha[t];
            }
        }
        Criterion::Terminal => {
            alpha[horizon] = eps[horizon];
            for t in (0..horizon).rev() {
                alpha[t] = alpha[t + 1] + lips[t + 1] * delta[t];
            }
        }
    }
    Ok(alpha)
}

/// One logged step of a simulated rollout.
#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
pub struct RolloutStep {
    pub replicate: u64,
    pub t: usize,
    /// True state at `t`; absent for input-output models, which have none.
    pub state: Option<Point>,
    pub observation: Point,
    pub action: Point,
    pub cost: f64,
}

/// Outcome of a batch of rollouts.
#[derive(Clone, Debug)]
pub struct RolloutReport {
    /// Realized criterion value per replicate.
    pub costs: Vec<f64>,
    /// Worst realized criterion value.
    pub max_cost: f64,
    pub runtime_ms: f64,
    /// Every step of every replicate, in replicate-major order.
    pub steps: Vec<RolloutStep>,
}

pub(crate) fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ replicate.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// How actions are chosen during a rollout.
pub(crate) enum RolloutPolicy<'a> {
    Strategy(&'a Strategy),
    UniformRandom,
    RoundRobin,
}

fn sample(set: &FinitePointSet, rng: &mut ChaCha8Rng) -> Point {
    set.points()[rng.gen_range(0..set.len())].clone()
}

fn choose_action(
    sys: &SystemModel,
    policy: &RolloutPolicy<'_>,
    replicate: u64,
    t: usize,
    m: &Memory,
    rng: &mut ChaCha8Rng,
) -> Result<Point> {
    let us = sys.actions(t);
    Ok(match policy {
        RolloutPolicy::Strategy(s) => s.act(sys, m)?,
        RolloutPolicy::UniformRandom => sample(us, rng),
        RolloutPolicy::RoundRobin => us.points()[(replicate as usize + t) % us.len()].clone(),
    })
}

/// Simulates one replicate: disturbances, noises and the initial state are
/// drawn uniformly from their sets. Returns the logged steps and the
/// realized criterion value.
pub(crate) fn rollout_one(
    sys: &SystemModel,
    policy: &RolloutPolicy<'_>,
    replicate: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<RolloutStep>, f64)> {
    if sys.is_state_space() {
        rollout_state(sys, policy, replicate, rng)
    } else {
        rollout_io(sys, policy, replicate, rng)
    }
}

fn rollout_state(
    sys: &SystemModel,
    policy: &RolloutPolicy<'_>,
    replicate: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<RolloutStep>, f64)> {
    let ss = sys.state_space()?;
    let horizon = sys.horizon();
    let mut xi = rng.gen_range(0..ss.states(0).len()) as u32;
    let ni = rng.gen_range(0..ss.noises(0).len()) as u32;
    let mut y = ss.observations(0).points()[ss.observation_index(0, xi, ni) as usize].clone();
    let mut m = Memory::initial(y.clone());
    let mut steps = Vec::with_capacity(horizon + 1);
    let mut total = 0.0f64;
    for t in 0..=horizon {
        let u = choose_action(sys, policy, replicate, t, &m, rng)?;
        let ui = ss
            .actions(t)
            .index_of(&u)
            .ok_or_else(|| Error::OutOfRangeAction {
                t,
                action: u.to_string(),
            })? as u32;
        let cost = ss.cost_value(t, xi, ui);
        steps.push(RolloutStep {
            replicate,
            t,
            state: Some(ss.states(t).points()[xi as usize].clone()),
            observation: y.clone(),
            action: u.clone(),
            cost,
        });
        total = match sys.criterion() {
            Criterion::Instantaneous => total.max(cost),
            Criterion::Terminal => cost,
        };
        if t < horizon {
            let wi = rng.gen_range(0..ss.disturbances(t).len()) as u32;
            xi = ss.next_state_index(t, xi, ui, wi);
            let ni = rng.gen_range(0..ss.noises(t + 1).len()) as u32;
            y = ss.observations(t + 1).points()[ss.observation_index(t + 1, xi, ni) as usize]
                .clone();
            m = m.extend(u, y.clone());
        }
    }
    Ok((steps, total))
}

fn rollout_io(
    sys: &SystemModel,
    policy: &RolloutPolicy<'_>,
    replicate: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<RolloutStep>, f64)> {
    let io = sys.io()?;
    let horizon = sys.horizon();
    let mut ws = vec![sample(io.disturbances(0), rng)];
    let mut us: Vec<Point> = Vec::with_capacity(horizon + 1);
    let mut m = Memory::initial(io.observe(0, &ws, &[]));
    let mut steps = Vec::with_capacity(horizon + 1);
    let mut total = 0.0f64;
    for t in 0..=horizon {
        let u = choose_action(sys, policy, replicate, t, &m, rng)?;
        us.push(u.clone());
        if t >= 1 {
            ws.push(sample(io.disturbances(t), rng));
        }
        let cost = io.cost(t, &ws[..=t], &us[..=t]);
        steps.push(RolloutStep {
            replicate,
            t,
            state: None,
            observation: m.observations()[t].clone(),
            action: u.clone(),
            cost,
        });
        total = match sys.criterion() {
            Criterion::Instantaneous => total.max(cost),
            Criterion::Terminal => cost,
        };
        if t < horizon {
            let y = io.observe(t + 1, &ws[..=t], &us[..=t]);
            m = m.extend(u, y);
        }
    }
    Ok((steps, total))
}

/// Runs independent uniformly seeded rollouts of a strategy. Replicate `k`
/// draws from a stream derived from `seed` and `k` alone, so reports are
/// reproducible regardless of thread scheduling.
pub fn simulate_rollouts(
    sys: &SystemModel,
    s: &Strategy,
    replicates: u64,
    seed: u64,
) -> Result<RolloutReport> {
    if replicates == 0 {
        return Err(Error::EmptySet("simulate_rollouts replicates"));
    }
    let start = Instant::now();
    let per: Result<Vec<(Vec<RolloutStep>, f64)>> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep);
            rollout_one(sys, &RolloutPolicy::Strategy(s), rep, &mut rng)
        })
        .collect();
    let per = per?;
    let mut steps = Vec::new();
    let mut costs = Vec::with_capacity(per.len());
    for (mut st, c) in per {
        steps.append(&mut st);
        costs.push(c);
    }
    let max_cost = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RolloutReport {
        costs,
        max_cost,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        steps,
    })
}

/// Serializable record of a solve, keyed by realization text.
#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
pub struct SolveArtifact {
    pub criterion: String,
    pub kind: StrategyKind,
    pub tie_break: TieBreak,
    /// Guaranteed worst-case cost over all initial realizations.
    pub value: f64,
    /// Size of the realization space per time.
    pub realization_counts: Vec<usize>,
    /// Per time: `(realization, value)` in canonical order.
    pub values: Vec<Vec<(String, f64)>>,
    /// Per time: `(realization, action coordinates)` in canonical order.
    pub strategy: Vec<Vec<(String, Vec<f64>)>>,
    /// Suboptimality radii, when tolerances were available.
    pub alpha: Option<Vec<f64>>,
    pub runtime_ms: f64,
}

pub fn make_artifact(
    table: &ValueTable,
    s: &Strategy,
    alpha: Option<Vec<f64>>,
    runtime_ms: f64,
) -> SolveArtifact {
    let a = table.abstraction();
    let mut values = Vec::with_capacity(a.horizon() + 1);
    let mut strategy = Vec::with_capacity(a.horizon() + 1);
    for t in 0..=a.horizon() {
        values.push(
            a.space(t)
                .iter()
                .zip(table.values(t))
                .map(|(z, &v)| (z.to_string(), v))
                .collect(),
        );
        strategy.push(
            s.action_map(t)
                .iter()
                .map(|(z, u)| (z.to_string(), u.coords().collect()))
                .collect(),
        );
    }
    SolveArtifact {
        criterion: a.criterion().to_string(),
        kind: s.kind(),
        tie_break: s.tie_break(),
        value: table.initial_value(),
        realization_counts: (0..=a.horizon()).map(|t| a.space(t).len()).collect(),
        values,
        strategy,
        alpha,
        runtime_ms,
    }
}
