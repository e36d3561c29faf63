//! Dynamic programming over memories, information states and approximate
//! information states.
//!
//! Everything here revolves around one object: a finite abstraction of the
//! control problem whose "states" are realizations of a compressed memory.
//! A [`Compressor`] maps each reachable memory to a [`Realization`]; pooling
//! the worst-case stage costs and the reachable successor realizations over
//! every memory with the same image yields an [`InfoAbstraction`], a finite
//! model that can be solved by backward induction regardless of whether the
//! compression loses information. When it does, the loss is quantified by
//! tolerances measured in [`crate::quantize`] and turned into value bounds
//! by [`alpha_bound`].
//!
//! Two enumeration routes feed the pooling. Memory-based compressions
//! (identity, sliding windows) walk the full memory tree. Compressions that
//! factor through the conditional range instead walk a graph of distinct
//! filter states, which is typically far smaller because many histories
//! share a support.

mod solve;

pub use solve::{
    alpha_bound, evaluate_strategy_worst_case, extract_strategy, make_artifact, simulate_rollouts,
    solve_abstraction_dp, solve_memory_dp, solve_terminal_dp, RolloutReport, RolloutStep,
    SolveArtifact, Strategy, StrategyKind, TieBreak, ValueTable,
};
pub(crate) use solve::{replicate_rng, rollout_one, RolloutPolicy};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::model::{
    build_memory_tree, Criterion, EnumerationOptions, Memory, RangeState, SystemModel,
};
use crate::point::Point;
use crate::quantize::{self, QuantizationGrid};
use crate::ranges;
use crate::set::FinitePointSet;

/// The value an information-state process takes at one time.
///
/// Realizations compare and order structurally, so they can key maps and
/// define deterministic canonical enumerations of realization spaces.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Realization {
    /// A single point: an observation, a window entry, a coordinate block.
    Point(Point),
    /// A set of points: a conditional range or its quantized image.
    Set(FinitePointSet),
    /// An ordered tuple of components, compared componentwise.
    Tuple(Vec<Realization>),
}

impl fmt::Display for Realization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Realization::Point(p) => write!(f, "{p}"),
            Realization::Set(s) => write!(f, "{s}"),
            Realization::Tuple(parts) => {
                write!(f, "[")?;
                for (i, part) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " | ")?;
                    }
                    write!(f, "{part}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// A metric on realizations, shaped to match the realizations it compares.
#[derive(Clone, Debug)]
pub enum RealizationMetric {
    /// Ground metric between point realizations.
    Point(Metric),
    /// Hausdorff distance between set realizations.
    Hausdorff(Metric),
    /// Maximum over paired components of tuples, one metric per component.
    MaxComponents(Vec<RealizationMetric>),
    /// Maximum over paired elements of equally long tuples sharing one
    /// component metric, as between two observation windows.
    MaxElements(Box<RealizationMetric>),
}

fn shape_mismatch(a: &Realization, b: &Realization) -> Error {
    Error::Schema(format!(
        "realizations {a} and {b} do not fit the shape of the metric"
    ))
}

impl RealizationMetric {
    pub fn distance(&self, a: &Realization, b: &Realization) -> Result<f64> {
        match (self, a, b) {
            (RealizationMetric::Point(m), Realization::Point(x), Realization::Point(y)) => {
                m.dist(x, y)
            }
            (RealizationMetric::Hausdorff(m), Realization::Set(x), Realization::Set(y)) => {
                ranges::hausdorff(x, y, m)
            }
            (
                RealizationMetric::MaxComponents(ms),
                Realization::Tuple(xs),
                Realization::Tuple(ys),
            ) => {
                if ms.len() != xs.len() || ms.len() != ys.len() {
                    return Err(shape_mismatch(a, b));
                }
                let mut worst = 0.0f64;
                for ((m, x), y) in ms.iter().zip(xs).zip(ys) {
                    worst = worst.max(m.distance(x, y)?);
                }
                Ok(worst)
            }
            (RealizationMetric::MaxElements(m), Realization::Tuple(xs), Realization::Tuple(ys)) => {
                if xs.len() != ys.len() {
                    return Err(shape_mismatch(a, b));
                }
                let mut worst = 0.0f64;
                for (x, y) in xs.iter().zip(ys) {
                    worst = worst.max(m.distance(x, y)?);
                }
                Ok(worst)
            }
            _ => Err(shape_mismatch(a, b)),
        }
    }
}

/// Hausdorff distance between two nonempty finite sets of realizations.
pub fn realization_hausdorff(
    a: &[Realization],
    b: &[Realization],
    m: &RealizationMetric,
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet("realization_hausdorff"));
    }
    let mut worst = 0.0f64;
    for (left, right) in [(a, b), (b, a)] {
        for x in left {
            let mut best = f64::INFINITY;
            for y in right {
                best = best.min(m.distance(x, y)?);
                if best == 0.0 {
                    break;
                }
            }
            worst = worst.max(best);
        }
    }
    Ok(worst)
}

/// One reachable conditional-range filter state.
#[derive(Clone, Debug)]
pub struct FilterNode {
    /// Sorted state indices of the conditional range at this node's level.
    pub support: Vec<u32>,
    /// Index of the initial observation, when the graph tracks it.
    pub initial_obs: Option<u32>,
    /// `successors[ui]` lists, per feasible next observation index, the
    /// successor node at the next level. Sorted by observation index; empty
    /// on the final level.
    pub successors: Vec<Vec<(u32, u32)>>,
}

/// All reachable conditional-range filter states, deduplicated per level.
///
/// Histories that induce the same conditional range collapse to one node,
/// so the graph is typically exponentially smaller than the memory tree
/// while carrying the same cost and transition information for any
/// compression that depends on the memory only through the range (plus,
/// optionally, the initial observation).
#[derive(Debug)]
pub struct FilterGraph {
    levels: Vec<Vec<FilterNode>>,
}

impl FilterGraph {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, t: usize) -> &[FilterNode] {
        &self.levels[t]
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// The conditional range of the node, as points.
    pub fn support_set(&self, sys: &SystemModel, t: usize, node: u32) -> Result<FinitePointSet> {
        let ss = sys.state_space()?;
        Ok(ss.support_points(t, &self.levels[t][node as usize].support))
    }

    /// The initial observation recorded on the node, as a point.
    pub fn initial_obs_point(&self, sys: &SystemModel, t: usize, node: u32) -> Option<Point> {
        self.levels[t][node as usize]
            .initial_obs
            .map(|yi| sys.observations(0).points()[yi as usize].clone())
    }
}

/// Enumerates the reachable filter states of a state-space system.
///
/// With `track_initial_obs`, nodes additionally carry (and are keyed by)
/// the initial observation of the histories that reach them, for
/// compressions whose realization includes it.
pub fn build_filter_graph(
    sys: &SystemModel,
    opts: &EnumerationOptions,
    track_initial_obs: bool,
) -> Result<FilterGraph> {
    let ss = sys.state_space()?;
    let horizon = sys.horizon();
    let mut used = 0usize;
    let charge = |used: &mut usize, n: usize| -> Result<()> {
        *used += n;
        if *used > opts.budget {
            Err(Error::ModelTooLarge {
                nodes: *used,
                budget: opts.budget,
            })
        } else {
            Ok(())
        }
    };

    let mut roots: Vec<FilterNode> = Vec::new();
    let mut root_keys: BTreeMap<(Vec<u32>, Option<u32>), u32> = BTreeMap::new();
    let restrict = match &opts.initial_observation {
        Some(y0) => Some(
            sys.observations(0)
                .index_of(y0)
                .ok_or_else(|| Error::OutOfRangeObservation {
                    t: 0,
                    observation: y0.to_string(),
                })? as u32,
        ),
        None => None,
    };
    for (yi, support) in ss.initial_buckets().into_iter().enumerate() {
        if support.is_empty() {
            continue;
        }
        if restrict.is_some_and(|want| want != yi as u32) {
            continue;
        }
        let tag = track_initial_obs.then_some(yi as u32);
        if let std::collections::btree_map::Entry::Vacant(e) =
            root_keys.entry((support.clone(), tag))
        {
            e.insert(roots.len() as u32);
            roots.push(FilterNode {
                support,
                initial_obs: tag,
                successors: Vec::new(),
            });
            charge(&mut used, 1)?;
        }
    }
    if roots.is_empty() {
        let y0 = opts
            .initial_observation
            .as_ref()
            .expect("an unrestricted filter graph always has roots");
        return Err(Error::InfeasibleObservation {
            t: 0,
            observation: y0.to_string(),
        });
    }

    let mut levels = vec![roots];
    for t in 0..horizon {
        let nu = sys.actions(t).len();
        let mut next: Vec<FilterNode> = Vec::new();
        let mut keys: BTreeMap<(Vec<u32>, Option<u32>), u32> = BTreeMap::new();
        let level_len = levels[t].len();
        for ni in 0..level_len {
            let mut successors = Vec::with_capacity(nu);
            for ui in 0..nu {
                let buckets = {
                    let node = &levels[t][ni];
                    ss.successor_buckets(t, &node.support, ui as u32)
                };
                let tag = levels[t][ni].initial_obs;
                let mut row = Vec::with_capacity(buckets.len());
                for (yi, support) in buckets {
                    let id = match keys.entry((support, tag)) {
                        std::collections::btree_map::Entry::Occupied(e) => *e.get(),
                        std::collections::btree_map::Entry::Vacant(e) => {
                            let id = next.len() as u32;
                            next.push(FilterNode {
                                support: e.key().0.clone(),
                                initial_obs: tag,
                                successors: Vec::new(),
                            });
                            e.insert(id);
                            charge(&mut used, 1)?;
                            id
                        }
                    };
                    row.push((yi, id));
                }
                successors.push(row);
            }
            levels[t][ni].successors = successors;
        }
        levels.push(next);
    }
    Ok(FilterGraph { levels })
}

/// A per-time compression of the memory into a realization.
#[derive(Clone, Debug)]
pub enum Compressor {
    /// No compression: the realization is the memory itself.
    IdentityMemory,
    /// The conditional range of the current state given the memory; an
    /// exact information state for state-space systems.
    ConditionalRange,
    /// The conditional range passed through a per-time quantization grid.
    QuantizedRange { grids: Vec<QuantizationGrid> },
    /// The last `observations` observations and last `actions` actions of
    /// the memory (fewer at early times, when the memory is shorter).
    Window { observations: usize, actions: usize },
    /// Splits the state coordinates of the conditional range into a block
    /// that must be common to all of its states, kept as a point, and a
    /// residual block kept as a set, optionally quantized. Tailored to
    /// systems whose state is partly known given the memory.
    Projected {
        /// Coordinates with a common value across the range.
        point_coords: Vec<usize>,
        /// Coordinates kept set-valued.
        set_coords: Vec<usize>,
        /// Per-time grids for the set-valued block.
        grids: Option<Vec<QuantizationGrid>>,
        /// Append the initial observation to the realization.
        include_initial_obs: bool,
        /// Metric on the common block.
        point_metric: Metric,
        /// Ground metric on the set-valued block.
        set_metric: Metric,
    },
}

fn select_coords(p: &Point, coords: &[usize]) -> Result<Point> {
    let mut vals = Vec::with_capacity(coords.len());
    for &i in coords {
        if i >= p.dims() {
            return Err(Error::DimensionMismatch {
                expected: i + 1,
                got: p.dims(),
            });
        }
        vals.push(p.coord(i));
    }
    Ok(Point::new(vals))
}

fn grid_at(grids: &[QuantizationGrid], t: usize) -> Result<&QuantizationGrid> {
    grids
        .get(t)
        .ok_or_else(|| Error::Schema(format!("no quantization grid declared for time {t}")))
}

fn encode_window(m: &Memory, observations: usize, actions: usize) -> Realization {
    let obs = m.observations();
    let acts = m.actions();
    let o = observations.min(obs.len());
    let a = actions.min(acts.len());
    Realization::Tuple(vec![
        Realization::Tuple(
            obs[obs.len() - o..]
                .iter()
                .cloned()
                .map(Realization::Point)
                .collect(),
        ),
        Realization::Tuple(
            acts[acts.len() - a..]
                .iter()
                .cloned()
                .map(Realization::Point)
                .collect(),
        ),
    ])
}

impl Compressor {
    /// Whether realizations are functions of the raw memory (enumerated on
    /// the memory tree) rather than of the conditional range (enumerated on
    /// the filter graph).
    pub fn memory_based(&self) -> bool {
        matches!(
            self,
            Compressor::IdentityMemory | Compressor::Window { .. }
        )
    }

    pub(crate) fn tracks_initial_obs(&self) -> bool {
        matches!(
            self,
            Compressor::Projected {
                include_initial_obs: true,
                ..
            }
        )
    }

    fn validate(&self) -> Result<()> {
        if let Compressor::Window { observations, .. } = self {
            if *observations == 0 {
                return Err(Error::Schema(
                    "a window compression must keep at least one observation".into(),
                ));
            }
        }
        Ok(())
    }

    /// The realization of one memory.
    pub fn realize(&self, sys: &SystemModel, m: &Memory) -> Result<Realization> {
        self.validate()?;
        match self {
            Compressor::IdentityMemory => Ok(encode_window(m, m.time() + 1, m.time())),
            Compressor::Window {
                observations,
                actions,
            } => Ok(encode_window(m, *observations, *actions)),
            _ => {
                let range = RangeState::from_memory(sys, m)?;
                self.realize_support(m.time(), &range.support, m.observations().first())
            }
        }
    }

    /// The realization of one conditional range. Memory-based compressions
    /// reject this route; `initial_obs` is required only when the
    /// compression includes the initial observation.
    pub fn realize_support(
        &self,
        t: usize,
        support: &FinitePointSet,
        initial_obs: Option<&Point>,
    ) -> Result<Realization> {
        match self {
            Compressor::IdentityMemory | Compressor::Window { .. } => Err(Error::Schema(
                "memory-based compressions cannot be evaluated on a conditional range".into(),
            )),
            Compressor::ConditionalRange => Ok(Realization::Set(support.clone())),
            Compressor::QuantizedRange { grids } => Ok(Realization::Set(
                quantize::quantize_range(grid_at(grids, t)?, support)?,
            )),
            Compressor::Projected {
                point_coords,
                set_coords,
                grids,
                include_initial_obs,
                ..
            } => {
                let first = support.first()?;
                let common = select_coords(first, point_coords)?;
                for x in support {
                    if select_coords(x, point_coords)? != common {
                        return Err(Error::GeneratorIncomplete(format!(
                            "coordinates {point_coords:?} are not common across the \
                             conditional range {support} at time {t}"
                        )));
                    }
                }
                let mut residual = Vec::with_capacity(support.len());
                for x in support {
                    residual.push(select_coords(x, set_coords)?);
                }
                let mut residual = FinitePointSet::new(residual);
                if let Some(grids) = grids {
                    residual = quantize::quantize_range(grid_at(grids, t)?, &residual)?;
                }
                let mut parts = vec![Realization::Point(common), Realization::Set(residual)];
                if *include_initial_obs {
                    let y0 = initial_obs.ok_or_else(|| {
                        Error::Schema(
                            "this compression needs the initial observation, but the \
                             enumeration did not track it"
                                .into(),
                        )
                    })?;
                    parts.push(Realization::Point(y0.clone()));
                }
                Ok(Realization::Tuple(parts))
            }
        }
    }

    /// The metric carried by the realization space at time `t`.
    pub fn metric(&self, sys: &SystemModel, _t: usize) -> Result<RealizationMetric> {
        match self {
            Compressor::IdentityMemory | Compressor::Window { .. } => {
                Ok(RealizationMetric::MaxComponents(vec![
                    RealizationMetric::MaxElements(Box::new(RealizationMetric::Point(
                        sys.observation_metric().clone(),
                    ))),
                    RealizationMetric::MaxElements(Box::new(RealizationMetric::Point(
                        sys.action_metric().clone(),
                    ))),
                ]))
            }
            Compressor::ConditionalRange | Compressor::QuantizedRange { .. } => Ok(
                RealizationMetric::Hausdorff(sys.state_space()?.state_metric().clone()),
            ),
            Compressor::Projected {
                point_metric,
                set_metric,
                include_initial_obs,
                ..
            } => {
                let mut parts = vec![
                    RealizationMetric::Point(point_metric.clone()),
                    RealizationMetric::Hausdorff(set_metric.clone()),
                ];
                if *include_initial_obs {
                    parts.push(RealizationMetric::Point(sys.observation_metric().clone()));
                }
                Ok(RealizationMetric::MaxComponents(parts))
            }
        }
    }

    /// Builds the abstraction this compression induces on a system by
    /// pooling costs and transitions over every history with the same
    /// realization.
    pub fn build(&self, sys: &SystemModel, opts: &EnumerationOptions) -> Result<InfoAbstraction> {
        self.validate()?;
        let nodes = realized_nodes(sys, self, opts)?;
        InfoAbstraction::pool(sys, self.clone(), &nodes)
    }
}

/// One enumerated history class with its realization and generators.
pub(crate) struct RealizedNode {
    pub realization: Realization,
    /// Worst-case stage cost per action index.
    pub cost_sup: Vec<f64>,
    /// Sorted, deduplicated successor realizations per action index; empty
    /// on the final level.
    pub next: Vec<Vec<Realization>>,
}

/// Per-level realized views of either the memory tree or the filter graph,
/// the shared input for pooling, measurement and exactness checks.
pub(crate) fn realized_nodes(
    sys: &SystemModel,
    c: &Compressor,
    opts: &EnumerationOptions,
) -> Result<Vec<Vec<RealizedNode>>> {
    if c.memory_based() {
        realized_tree_nodes(sys, c, opts)
    } else {
        realized_graph_nodes(sys, c, opts)
    }
}

fn realized_tree_nodes(
    sys: &SystemModel,
    c: &Compressor,
    opts: &EnumerationOptions,
) -> Result<Vec<Vec<RealizedNode>>> {
    let tree = build_memory_tree(sys, opts)?;
    let horizon = sys.horizon();
    let mut realizations: Vec<Vec<Realization>> = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let mut level = Vec::with_capacity(tree.level(t).len());
        for node in tree.level(t) {
            level.push(c.realize(sys, &node.memory)?);
        }
        realizations.push(level);
    }
    let mut out: Vec<Vec<RealizedNode>> = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let nu = sys.actions(t).len();
        let mut level = Vec::with_capacity(tree.level(t).len());
        for (ni, node) in tree.level(t).iter().enumerate() {
            let mut cost_sup = Vec::with_capacity(nu);
            let mut next = Vec::new();
            for ui in 0..nu as u32 {
                cost_sup.push(tree.cost_sup(sys, t, ni as u32, ui));
                if t < horizon {
                    let mut succ: BTreeSet<Realization> = BTreeSet::new();
                    for (_, &child) in node.children.range((ui, 0)..=(ui, u32::MAX)) {
                        succ.insert(realizations[t + 1][child as usize].clone());
                    }
                    next.push(succ.into_iter().collect());
                }
            }
            level.push(RealizedNode {
                realization: realizations[t][ni].clone(),
                cost_sup,
                next,
            });
        }
        out.push(level);
    }
    Ok(out)
}

fn realized_graph_nodes(
    sys: &SystemModel,
    c: &Compressor,
    opts: &EnumerationOptions,
) -> Result<Vec<Vec<RealizedNode>>> {
    let ss = sys.state_space()?;
    let graph = build_filter_graph(sys, opts, c.tracks_initial_obs())?;
    let horizon = sys.horizon();
    let mut realizations: Vec<Vec<Realization>> = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let mut level = Vec::with_capacity(graph.level(t).len());
        for (ni, node) in graph.level(t).iter().enumerate() {
            let support = ss.support_points(t, &node.support);
            let y0 = graph.initial_obs_point(sys, t, ni as u32);
            level.push(c.realize_support(t, &support, y0.as_ref())?);
        }
        realizations.push(level);
    }
    let mut out: Vec<Vec<RealizedNode>> = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let nu = sys.actions(t).len();
        let mut level = Vec::with_capacity(graph.level(t).len());
        for (ni, node) in graph.level(t).iter().enumerate() {
            let mut cost_sup = Vec::with_capacity(nu);
            let mut next = Vec::new();
            for ui in 0..nu {
                cost_sup.push(ss.support_cost_sup(t, &node.support, ui as u32));
                if t < horizon {
                    let mut succ: BTreeSet<Realization> = BTreeSet::new();
                    for &(_, child) in &node.successors[ui] {
                        succ.insert(realizations[t + 1][child as usize].clone());
                    }
                    next.push(succ.into_iter().collect());
                }
            }
            level.push(RealizedNode {
                realization: realizations[t][ni].clone(),
                cost_sup,
                next,
            });
        }
        out.push(level);
    }
    Ok(out)
}

/// A finite approximate-information-state model.
///
/// `sup_cost` and `transitions` pool the worst-case stage cost and the set
/// of reachable successor realizations over every history whose compressed
/// memory equals the realization, so they are well defined even when the
/// compression is not an exact information state; for exact ones, pooling
/// changes nothing.
#[derive(Clone, Debug)]
pub struct InfoAbstraction {
    criterion: Criterion,
    horizon: usize,
    compressor: Compressor,
    actions: Vec<FinitePointSet>,
    spaces: Vec<Vec<Realization>>,
    index: Vec<BTreeMap<Realization, u32>>,
    /// `[t][zi * |U_t| + ui]`: pooled worst-case stage cost.
    sup_cost: Vec<Vec<f64>>,
    /// `[t][zi * |U_t| + ui]`: sorted indices into the space at `t + 1`.
    transitions: Vec<Vec<Vec<u32>>>,
    metrics: Vec<RealizationMetric>,
}

impl InfoAbstraction {
    /// Assembles an abstraction from explicit parts, validating that the
    /// spaces are canonically sorted, the tables have matching shapes, the
    /// costs are finite and nonnegative, and every transition range is a
    /// nonempty subset of the next space.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        criterion: Criterion,
        compressor: Compressor,
        actions: Vec<FinitePointSet>,
        spaces: Vec<Vec<Realization>>,
        sup_cost: Vec<Vec<f64>>,
        transitions: Vec<Vec<Vec<u32>>>,
        metrics: Vec<RealizationMetric>,
    ) -> Result<InfoAbstraction> {
        if spaces.is_empty() {
            return Err(Error::EmptySet("InfoAbstraction::from_parts spaces"));
        }
        let horizon = spaces.len() - 1;
        for (name, len) in [
            ("actions", actions.len()),
            ("sup_cost", sup_cost.len()),
            ("metrics", metrics.len()),
        ] {
            if len != horizon + 1 {
                return Err(Error::DimensionMismatch {
                    expected: horizon + 1,
                    got: len,
                });
            }
            let _ = name;
        }
        if transitions.len() != horizon {
            return Err(Error::DimensionMismatch {
                expected: horizon,
                got: transitions.len(),
            });
        }
        let mut index = Vec::with_capacity(horizon + 1);
        for (t, space) in spaces.iter().enumerate() {
            if space.is_empty() {
                return Err(Error::EmptySet("realization space"));
            }
            if actions[t].is_empty() {
                return Err(Error::EmptySet("action set"));
            }
            if space.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Schema(format!(
                    "the realization space at time {t} is not sorted and duplicate-free"
                )));
            }
            let cells = space.len() * actions[t].len();
            if sup_cost[t].len() != cells {
                return Err(Error::DimensionMismatch {
                    expected: cells,
                    got: sup_cost[t].len(),
                });
            }
            for (cell, &c) in sup_cost[t].iter().enumerate() {
                if !c.is_finite() || c < 0.0 {
                    return Err(Error::NegativeInput(format!(
                        "stage cost {c} for realization {} under action {} at time {t}",
                        space[cell / actions[t].len()],
                        actions[t].points()[cell % actions[t].len()],
                    )));
                }
            }
            if t < horizon {
                if transitions[t].len() != cells {
                    return Err(Error::DimensionMismatch {
                        expected: cells,
                        got: transitions[t].len(),
                    });
                }
                for (cell, range) in transitions[t].iter().enumerate() {
                    if range.is_empty() {
                        return Err(Error::GeneratorIncomplete(format!(
                            "empty transition range for realization {} under action {} at time {t}",
                            space[cell / actions[t].len()],
                            actions[t].points()[cell % actions[t].len()],
                        )));
                    }
                    if range.windows(2).any(|w| w[0] >= w[1])
                        || range.last().is_some_and(|&z| z as usize >= spaces[t + 1].len())
                    {
                        return Err(Error::Schema(format!(
                            "malformed transition range at time {t}: indices must be sorted, \
                             unique and inside the next realization space"
                        )));
                    }
                }
            }
            index.push(
                space
                    .iter()
                    .enumerate()
                    .map(|(i, z)| (z.clone(), i as u32))
                    .collect::<BTreeMap<_, _>>(),
            );
        }
        Ok(InfoAbstraction {
            criterion,
            horizon,
            compressor,
            actions,
            spaces,
            index,
            sup_cost,
            transitions,
            metrics,
        })
    }

    /// Pools realized nodes into an abstraction.
    fn pool(
        sys: &SystemModel,
        compressor: Compressor,
        nodes: &[Vec<RealizedNode>],
    ) -> Result<InfoAbstraction> {
        let horizon = sys.horizon();
        let mut spaces: Vec<Vec<Realization>> = Vec::with_capacity(horizon + 1);
        let mut index: Vec<BTreeMap<Realization, u32>> = Vec::with_capacity(horizon + 1);
        for level in nodes {
            let keys: BTreeSet<Realization> =
                level.iter().map(|n| n.realization.clone()).collect();
            let space: Vec<Realization> = keys.into_iter().collect();
            index.push(
                space
                    .iter()
                    .enumerate()
                    .map(|(i, z)| (z.clone(), i as u32))
                    .collect(),
            );
            spaces.push(space);
        }
        let mut sup_cost: Vec<Vec<f64>> = Vec::with_capacity(horizon + 1);
        let mut transitions: Vec<Vec<Vec<u32>>> = Vec::with_capacity(horizon);
        for t in 0..=horizon {
            let nu = sys.actions(t).len();
            let nz = spaces[t].len();
            let mut costs = vec![f64::NEG_INFINITY; nz * nu];
            let mut trans: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); nz * nu];
            for node in &nodes[t] {
                let zi = index[t][&node.realization] as usize;
                for ui in 0..nu {
                    let cell = zi * nu + ui;
                    costs[cell] = costs[cell].max(node.cost_sup[ui]);
                    if t < horizon {
                        for z in &node.next[ui] {
                            trans[cell].insert(index[t + 1][z]);
                        }
                    }
                }
            }
            sup_cost.push(costs);
            if t < horizon {
                transitions.push(trans.into_iter().map(|s| s.into_iter().collect()).collect());
            }
        }
        let metrics = (0..=horizon)
            .map(|t| compressor.metric(sys, t))
            .collect::<Result<Vec<_>>>()?;
        let actions = (0..=horizon).map(|t| sys.actions(t).clone()).collect();
        InfoAbstraction::from_parts(
            sys.criterion(),
            compressor,
            actions,
            spaces,
            sup_cost,
            transitions,
            metrics,
        )
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn compressor(&self) -> &Compressor {
        &self.compressor
    }

    pub fn actions(&self, t: usize) -> &FinitePointSet {
        &self.actions[t]
    }

    /// The realization space at time `t`, canonically sorted.
    pub fn space(&self, t: usize) -> &[Realization] {
        &self.spaces[t]
    }

    pub fn index_of(&self, t: usize, z: &Realization) -> Option<u32> {
        self.index[t].get(z).copied()
    }

    /// Pooled worst-case stage cost of `(z, u)`.
    pub fn sup_cost(&self, t: usize, zi: u32, ui: u32) -> f64 {
        self.sup_cost[t][zi as usize * self.actions[t].len() + ui as usize]
    }

    /// Pooled transition range of `(z, u)`: sorted indices into the space
    /// at `t + 1`.
    pub fn successors(&self, t: usize, zi: u32, ui: u32) -> &[u32] {
        &self.transitions[t][zi as usize * self.actions[t].len() + ui as usize]
    }

    pub fn metric(&self, t: usize) -> &RealizationMetric {
        &self.metrics[t]
    }

    /// Total number of realizations across all times.
    pub fn realization_count(&self) -> usize {
        self.spaces.iter().map(Vec::len).sum()
    }

    /// The realization of one memory under this abstraction's compression.
    pub fn realize(&self, sys: &SystemModel, m: &Memory) -> Result<Realization> {
        self.compressor.realize(sys, m)
    }
}

/// Checks that a compression is an exact information state on a system:
/// every history with the same realization must produce the same worst-case
/// stage costs and the same successor realization sets as the pooled
/// abstraction. Returns the violations found (empty means exact).
pub fn verify_exact_information_state(
    sys: &SystemModel,
    a: &InfoAbstraction,
    opts: &EnumerationOptions,
) -> Result<Vec<String>> {
    let nodes = realized_nodes(sys, a.compressor(), opts)?;
    let mut violations = Vec::new();
    for (t, level) in nodes.iter().enumerate() {
        let nu = a.actions(t).len();
        for node in level {
            let zi = a.index_of(t, &node.realization).ok_or_else(|| {
                Error::GeneratorIncomplete(format!(
                    "reachable realization {} at time {t} is missing from the abstraction",
                    node.realization
                ))
            })?;
            for ui in 0..nu {
                let pooled = a.sup_cost(t, zi, ui as u32);
                if (pooled - node.cost_sup[ui]).abs() > 1e-12 {
                    violations.push(format!(
                        "time {t}, realization {}, action {}: worst stage cost {} \
                         differs from the pooled value {pooled}",
                        node.realization,
                        a.actions(t).points()[ui],
                        node.cost_sup[ui],
                    ));
                }
                if t < a.horizon() {
                    let pooled: Vec<&Realization> = a
                        .successors(t, zi, ui as u32)
                        .iter()
                        .map(|&zj| &a.space(t + 1)[zj as usize])
                        .collect();
                    let exact: Vec<&Realization> = node.next[ui].iter().collect();
                    if pooled != exact {
                        violations.push(format!(
                            "time {t}, realization {}, action {}: successor realizations \
                             differ from the pooled transition range",
                            node.realization,
                            a.actions(t).points()[ui],
                        ));
                    }
                }
            }
        }
    }
    Ok(violations)
}
