//! State quantization and its approximation guarantees.
//!
//! A quantization grid is a finite γ-cover of a state set: every state has a
//! grid point within γ. Coarsening the conditional-range filter through the
//! nearest-grid-point map turns the exact information state into an
//! approximate one, and this module provides both sides of that trade:
//! closed-form (ε, δ) tolerance formulas from the model's Lipschitz
//! constants, and exhaustive measurement of the same tolerances over every
//! reachable history, so the formulas can be verified to dominate reality.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{
    build_filter_graph, realization_hausdorff, realized_nodes, solve_abstraction_dp, alpha_bound,
    Compressor, InfoAbstraction, Realization, ValueTable,
};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::model::{EnumerationOptions, SystemModel};
use crate::point::Point;
use crate::ranges::{self, PointMap};
use crate::set::FinitePointSet;

/// A γ-cover of a state set together with the resolution it achieves.
#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
pub struct QuantizationGrid {
    points: FinitePointSet,
    gamma: f64,
    metric: Metric,
}

impl QuantizationGrid {
    /// Wraps an explicit grid point set, for grids that come from
    /// configuration rather than [`build_grid`]. The cover property against
    /// any particular state set can be checked with [`validate_cover`].
    pub fn from_points(points: FinitePointSet, gamma: f64, metric: Metric) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySet("QuantizationGrid::from_points"));
        }
        if !(gamma >= 0.0) {
            return Err(Error::NegativeInput(format!(
                "quantization resolution must be nonnegative, got {gamma}"
            )));
        }
        Ok(QuantizationGrid {
            points,
            gamma,
            metric,
        })
    }

    pub fn points(&self) -> &FinitePointSet {
        &self.points
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }
}

/// Builds a γ-cover greedily: scan the set in canonical order and keep a
/// point whenever no previously kept point is within γ. Every skipped point
/// is then within γ of a kept one, which is exactly the cover property.
/// γ = 0 keeps everything.
pub fn build_grid(x: &FinitePointSet, gamma: f64, metric: &Metric) -> Result<QuantizationGrid> {
    if x.is_empty() {
        return Err(Error::EmptySet("build_grid"));
    }
    if !(gamma >= 0.0) {
        return Err(Error::NegativeInput(format!(
            "quantization resolution must be nonnegative, got {gamma}"
        )));
    }
    let mut kept: Vec<Point> = Vec::new();
    for p in x {
        let mut covered = false;
        for q in &kept {
            if metric.dist(p, q)? <= gamma {
                covered = true;
                break;
            }
        }
        if !covered {
            kept.push(p.clone());
        }
    }
    Ok(QuantizationGrid {
        points: FinitePointSet::new(kept),
        gamma,
        metric: metric.clone(),
    })
}

/// The worst distance from a point of `x` to the grid. At most γ for grids
/// produced by [`build_grid`] on `x`; reports the achieved radius so callers
/// can also vet externally supplied grids.
pub fn validate_cover(grid: &QuantizationGrid, x: &FinitePointSet) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptySet("validate_cover"));
    }
    let mut radius: f64 = 0.0;
    for p in x {
        let mut best = f64::INFINITY;
        for q in grid.points() {
            best = best.min(grid.metric.dist(p, q)?);
        }
        radius = radius.max(best);
    }
    if radius > grid.gamma {
        return Err(Error::Schema(format!(
            "grid does not cover the set: worst distance {radius} exceeds gamma {}",
            grid.gamma
        )));
    }
    Ok(radius)
}

/// Nearest grid point, ties broken toward the canonically smallest point.
pub fn quantize_point(grid: &QuantizationGrid, x: &Point) -> Result<Point> {
    let mut best: Option<(&Point, f64)> = None;
    for q in grid.points() {
        let d = grid.metric.dist(x, q)?;
        // Strict improvement only: the scan runs in canonical order, so the
        // first point at the minimal distance wins ties.
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((q, d));
        }
    }
    let (q, _) = best.expect("grids are never empty");
    Ok(q.clone())
}

/// Elementwise nearest-grid-point image of a set.
pub fn quantize_range(grid: &QuantizationGrid, p: &FinitePointSet) -> Result<FinitePointSet> {
    if p.is_empty() {
        return Err(Error::EmptySet("quantize_range"));
    }
    let mut image = Vec::with_capacity(p.len());
    for x in p {
        image.push(quantize_point(grid, x)?);
    }
    Ok(FinitePointSet::new(image))
}

/// One grid per time over the state set, the usual starting point for a
/// quantized information state.
pub fn grids_for_system(sys: &SystemModel, gamma: &[f64]) -> Result<Vec<QuantizationGrid>> {
    let ss = sys.state_space()?;
    if gamma.len() != sys.horizon() + 1 {
        return Err(Error::DimensionMismatch {
            expected: sys.horizon() + 1,
            got: gamma.len(),
        });
    }
    gamma
        .iter()
        .enumerate()
        .map(|(t, &g)| build_grid(ss.states(t), g, ss.state_metric()))
        .collect()
}

/// Whether every observation reveals the state exactly.
pub fn is_perfectly_observed(sys: &SystemModel) -> Result<bool> {
    let ss = sys.state_space()?;
    for t in 0..=sys.horizon() {
        let states = ss.states(t).points();
        let obs = ss.observations(t).points();
        for xi in 0..states.len() as u32 {
            for ni in 0..ss.noises(t).len() as u32 {
                if obs[ss.observation_index(t, xi, ni) as usize] != states[xi as usize] {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Largest Lipschitz constant of the stage cost in the state, over actions,
/// per time. Scalar costs are compared by absolute difference.
pub fn cost_lipschitz(sys: &SystemModel) -> Result<Vec<f64>> {
    let ss = sys.state_space()?;
    let mut out = Vec::with_capacity(sys.horizon() + 1);
    for t in 0..=sys.horizon() {
        let mut worst = 0.0f64;
        for ui in 0..ss.actions(t).len() as u32 {
            let map = PointMap::from_fn(ss.states(t), |x| {
                let xi = ss.states(t).index_of(x).expect("domain point") as u32;
                Point::scalar(ss.cost_value(t, xi, ui))
            });
            worst = worst.max(ranges::lipschitz_constant(
                &map,
                ss.state_metric(),
                &Metric::Manhattan,
            )?);
        }
        out.push(worst);
    }
    Ok(out)
}

/// Largest Lipschitz constant of the dynamics in the state, over actions
/// and disturbances, per time. The final entry is zero: no transition
/// leaves the last stage.
pub fn dynamics_lipschitz(sys: &SystemModel) -> Result<Vec<f64>> {
    let ss = sys.state_space()?;
    let mut out = Vec::with_capacity(sys.horizon() + 1);
    for t in 0..sys.horizon() {
        let mut worst = 0.0f64;
        for ui in 0..ss.actions(t).len() as u32 {
            for wi in 0..ss.disturbances(t).len() as u32 {
                let map = PointMap::from_fn(ss.states(t), |x| {
                    let xi = ss.states(t).index_of(x).expect("domain point") as u32;
                    ss.states(t + 1).points()[ss.next_state_index(t, xi, ui, wi) as usize].clone()
                });
                worst = worst.max(ranges::lipschitz_constant(
                    &map,
                    ss.state_metric(),
                    ss.state_metric(),
                )?);
            }
        }
        out.push(worst);
    }
    out.push(0.0);
    Ok(out)
}

/// Largest Lipschitz constant of the observation map in the state, over
/// noises, per time.
pub fn observation_lipschitz(sys: &SystemModel) -> Result<Vec<f64>> {
    let ss = sys.state_space()?;
    let mut out = Vec::with_capacity(sys.horizon() + 1);
    for t in 0..=sys.horizon() {
        let mut worst = 0.0f64;
        for ni in 0..ss.noises(t).len() as u32 {
            let map = PointMap::from_fn(ss.states(t), |x| {
                let xi = ss.states(t).index_of(x).expect("domain point") as u32;
                ss.observations(t).points()[ss.observation_index(t, xi, ni) as usize].clone()
            });
            worst = worst.max(ranges::lipschitz_constant(
                &map,
                ss.state_metric(),
                sys.observation_metric(),
            )?);
        }
        out.push(worst);
    }
    Ok(out)
}

fn validate_grids(sys: &SystemModel, grids: &[QuantizationGrid]) -> Result<()> {
    let ss = sys.state_space()?;
    if grids.len() != sys.horizon() + 1 {
        return Err(Error::DimensionMismatch {
            expected: sys.horizon() + 1,
            got: grids.len(),
        });
    }
    for (t, grid) in grids.iter().enumerate() {
        validate_cover(grid, ss.states(t))?;
    }
    Ok(())
}

/// Closed-form tolerances for a quantized information state when the state
/// is perfectly observed: quantizing a known state by γ moves the stage
/// cost by at most `2 L_cost γ` and the next quantized state by at most
/// `2 γ' + 2 L_dyn γ`.
pub fn perfect_obs_bounds(
    sys: &SystemModel,
    grids: &[QuantizationGrid],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !is_perfectly_observed(sys)? {
        return Err(Error::Schema(
            "the perfect-observation bounds require every observation to reveal the state".into(),
        ));
    }
    validate_grids(sys, grids)?;
    let l_cost = cost_lipschitz(sys)?;
    let l_dyn = dynamics_lipschitz(sys)?;
    let horizon = sys.horizon();
    let eps: Vec<f64> = (0..=horizon)
        .map(|t| 2.0 * l_cost[t] * grids[t].gamma())
        .collect();
    let delta: Vec<f64> = (0..=horizon)
        .map(|t| {
            if t < horizon {
                2.0 * grids[t + 1].gamma() + 2.0 * l_dyn[t] * grids[t].gamma()
            } else {
                0.0
            }
        })
        .collect();
    Ok((eps, delta))
}

/// Worst-case one-step sensitivities of the conditional-range filter,
/// measured exhaustively on the filter graph within groups of ranges that
/// quantize alike.
///
/// The first sequence is the filter's Lipschitz constant under a shared
/// feasible `(action, next observation)` pair; the second is its evolution
/// constant, the sensitivity of the whole set of next ranges (over all
/// feasible next observations) in the Hausdorff distance over ranges. Both
/// final entries are zero.
pub fn filter_evolution_constants(
    sys: &SystemModel,
    grids: &[QuantizationGrid],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let ss = sys.state_space()?;
    let graph = build_filter_graph(sys, &EnumerationOptions::default(), false)?;
    let horizon = sys.horizon();
    let mut l_filter = Vec::with_capacity(horizon + 1);
    let mut lambda = Vec::with_capacity(horizon + 1);
    for t in 0..horizon {
        let level = graph.level(t);
        let supports: Vec<FinitePointSet> = level
            .iter()
            .map(|node| ss.support_points(t, &node.support))
            .collect();
        let mut groups: std::collections::BTreeMap<FinitePointSet, Vec<usize>> =
            std::collections::BTreeMap::new();
        for (i, support) in supports.iter().enumerate() {
            groups
                .entry(quantize_range(&grids[t], support)?)
                .or_default()
                .push(i);
        }
        let pairs: Vec<(usize, usize)> = groups
            .values()
            .flat_map(|members| {
                members.iter().enumerate().flat_map(move |(k, &i)| {
                    members[k + 1..].iter().map(move |&j| (i, j))
                })
            })
            .collect();
        let nu = sys.actions(t).len();
        let (lf, lam) = pairs
            .par_iter()
            .map(|&(i, j)| -> Result<(f64, f64)> {
                let h = ranges::hausdorff(&supports[i], &supports[j], ss.state_metric())?;
                if h <= 0.0 {
                    return Ok((0.0, 0.0));
                }
                let mut lf = 0.0f64;
                let mut lam = 0.0f64;
                for ui in 0..nu {
                    let si = &level[i].successors[ui];
                    let sj = &level[j].successors[ui];
                    let mut ki = 0;
                    for &(yi, ci) in si {
                        while ki < sj.len() && sj[ki].0 < yi {
                            ki += 1;
                        }
                        if ki < sj.len() && sj[ki].0 == yi {
                            let a = graph.support_set(sys, t + 1, ci)?;
                            let b = graph.support_set(sys, t + 1, sj[ki].1)?;
                            lf = lf.max(ranges::hausdorff(&a, &b, ss.state_metric())? / h);
                        }
                    }
                    let next = |list: &[(u32, u32)]| -> Result<Vec<Realization>> {
                        let mut out = std::collections::BTreeSet::new();
                        for &(_, c) in list {
                            out.insert(Realization::Set(graph.support_set(sys, t + 1, c)?));
                        }
                        Ok(out.into_iter().collect())
                    };
                    let ground = crate::dp::RealizationMetric::Hausdorff(ss.state_metric().clone());
                    lam = lam.max(realization_hausdorff(&next(si)?, &next(sj)?, &ground)? / h);
                }
                Ok((lf, lam))
            })
            .try_reduce(
                || (0.0, 0.0),
                |a, b| Ok((a.0.max(b.0), a.1.max(b.1))),
            )?;
        l_filter.push(lf);
        lambda.push(lam);
    }
    l_filter.push(0.0);
    lambda.push(0.0);
    Ok((l_filter, lambda))
}

/// Closed-form tolerances for a quantized conditional-range information
/// state under partial observations. The cost tolerance matches the
/// perfectly observed case; the transition tolerance pays the quantization
/// at both ends of the step, amplified by the larger of the chained map
/// constants and the filter's measured evolution constant.
pub fn partial_obs_bounds(
    sys: &SystemModel,
    grids: &[QuantizationGrid],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (eps, delta, _, _) = partial_obs_bounds_full(sys, grids)?;
    Ok((eps, delta))
}

fn partial_obs_bounds_full(
    sys: &SystemModel,
    grids: &[QuantizationGrid],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    validate_grids(sys, grids)?;
    let l_cost = cost_lipschitz(sys)?;
    let l_dyn = dynamics_lipschitz(sys)?;
    let l_obs = observation_lipschitz(sys)?;
    let (l_filter, lambda) = filter_evolution_constants(sys, grids)?;
    let horizon = sys.horizon();
    let eps: Vec<f64> = (0..=horizon)
        .map(|t| 2.0 * l_cost[t] * grids[t].gamma())
        .collect();
    let delta: Vec<f64> = (0..=horizon)
        .map(|t| {
            if t < horizon {
                let chained = l_filter[t] * l_obs[t + 1] * l_dyn[t];
                2.0 * grids[t + 1].gamma() + 2.0 * chained.max(lambda[t]) * grids[t].gamma()
            } else {
                0.0
            }
        })
        .collect();
    Ok((eps, delta, l_filter, lambda))
}

/// Exhaustively measured tolerances of an abstraction on a system: per
/// time, the worst absolute error of the pooled stage cost against any
/// history's true worst-case cost, and the worst Hausdorff distance between
/// the pooled transition range and any history's true set of successor
/// realizations.
pub fn empirical_eps_delta(
    sys: &SystemModel,
    a: &InfoAbstraction,
    opts: &EnumerationOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nodes = realized_nodes(sys, a.compressor(), opts)?;
    let horizon = sys.horizon();
    let mut eps = Vec::with_capacity(horizon + 1);
    let mut delta = Vec::with_capacity(horizon + 1);
    for (t, level) in nodes.iter().enumerate() {
        let nu = a.actions(t).len();
        let (e, d) = level
            .par_iter()
            .map(|node| -> Result<(f64, f64)> {
                let zi = a.index_of(t, &node.realization).ok_or_else(|| {
                    Error::GeneratorIncomplete(format!(
                        "reachable realization {} at time {t} is missing from the abstraction",
                        node.realization
                    ))
                })?;
                let mut e = 0.0f64;
                let mut d = 0.0f64;
                for ui in 0..nu {
                    e = e.max((node.cost_sup[ui] - a.sup_cost(t, zi, ui as u32)).abs());
                    if t < horizon {
                        let pooled: Vec<Realization> = a
                            .successors(t, zi, ui as u32)
                            .iter()
                            .map(|&zj| a.space(t + 1)[zj as usize].clone())
                            .collect();
                        d = d.max(realization_hausdorff(
                            &node.next[ui],
                            &pooled,
                            a.metric(t + 1),
                        )?);
                    }
                }
                Ok((e, d))
            })
            .try_reduce(|| (0.0, 0.0), |x, y| Ok((x.0.max(y.0), x.1.max(y.1))))?;
        eps.push(e);
        delta.push(d);
    }
    Ok((eps, delta))
}

fn pairwise_max<F>(n: usize, f: F) -> Result<f64>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    pairs
        .par_iter()
        .map(|&(i, j)| f(i, j))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Measured Lipschitz constant of a solved value function on its
/// realization space, per time: the largest pairwise value difference per
/// unit of realization distance. Infinite when two realizations at
/// distance zero carry different values, which a true metric rules out.
pub fn verify_value_lipschitz(table: &ValueTable) -> Result<Vec<f64>> {
    let a = table.abstraction();
    let mut out = Vec::with_capacity(a.horizon() + 1);
    for t in 0..=a.horizon() {
        let space = a.space(t);
        let values = table.values(t);
        out.push(pairwise_max(space.len(), |i, j| {
            let dist = a.metric(t).distance(&space[i], &space[j])?;
            Ok(ratio((values[i] - values[j]).abs(), dist))
        })?);
    }
    Ok(out)
}

/// Measured Lipschitz constant of the pooled stage-cost generator on the
/// realization space, per time.
pub fn measure_cost_lipschitz(a: &InfoAbstraction) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(a.horizon() + 1);
    for t in 0..=a.horizon() {
        let space = a.space(t);
        let nu = a.actions(t).len();
        out.push(pairwise_max(space.len(), |i, j| {
            let dist = a.metric(t).distance(&space[i], &space[j])?;
            let mut worst = 0.0f64;
            for ui in 0..nu as u32 {
                worst = worst.max(ratio(
                    (a.sup_cost(t, i as u32, ui) - a.sup_cost(t, j as u32, ui)).abs(),
                    dist,
                ));
            }
            Ok(worst)
        })?);
    }
    Ok(out)
}

/// Measured evolution constant of the pooled transition generator, per
/// time: the sensitivity of the transition range to the realization, in
/// the Hausdorff distance over realizations. The final entry is zero.
pub fn measure_evolution_constant(a: &InfoAbstraction) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(a.horizon() + 1);
    for t in 0..a.horizon() {
        let space = a.space(t);
        let nu = a.actions(t).len();
        out.push(pairwise_max(space.len(), |i, j| {
            let dist = a.metric(t).distance(&space[i], &space[j])?;
            let mut worst = 0.0f64;
            for ui in 0..nu as u32 {
                let next = |zi: u32| -> Vec<Realization> {
                    a.successors(t, zi, ui)
                        .iter()
                        .map(|&zj| a.space(t + 1)[zj as usize].clone())
                        .collect()
                };
                let h = realization_hausdorff(&next(i as u32), &next(j as u32), a.metric(t + 1))?;
                worst = worst.max(ratio(h, dist));
            }
            Ok(worst)
        })?);
    }
    out.push(0.0);
    Ok(out)
}

/// Formula and measured tolerances of one quantized information state,
/// with every constant that enters the formulas.
#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
pub struct BoundReport {
    pub criterion: String,
    pub perfectly_observed: bool,
    /// Grid resolution per time.
    pub gamma: Vec<f64>,
    pub eps_formula: Vec<f64>,
    pub eps_measured: Vec<f64>,
    pub delta_formula: Vec<f64>,
    pub delta_measured: Vec<f64>,
    /// Suboptimality radii from the measured tolerances and the measured
    /// value-Lipschitz constants.
    pub alpha: Vec<f64>,
    pub l_cost: Vec<f64>,
    pub l_dyn: Vec<f64>,
    pub l_obs: Vec<f64>,
    /// Filter sensitivity under a shared next observation; empty when the
    /// system is perfectly observed.
    pub l_filter: Vec<f64>,
    /// Filter evolution constant; empty when the system is perfectly
    /// observed.
    pub lambda_filter: Vec<f64>,
    /// Measured value-Lipschitz constant per time.
    pub l_value: Vec<f64>,
}

impl BoundReport {
    /// Every time at which a measured tolerance exceeds its formula by more
    /// than `tol`. Empty means the formulas dominate, as they should.
    pub fn violations(&self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for t in 0..self.eps_formula.len() {
            if self.eps_measured[t] > self.eps_formula[t] + tol {
                out.push(format!(
                    "t={t}: measured cost tolerance {} exceeds the formula {}",
                    self.eps_measured[t], self.eps_formula[t]
                ));
            }
            if self.delta_measured[t] > self.delta_formula[t] + tol {
                out.push(format!(
                    "t={t}: measured transition tolerance {} exceeds the formula {}",
                    self.delta_measured[t], self.delta_formula[t]
                ));
            }
        }
        out
    }

    /// Per-time table of the headline numbers.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("t,eps_formula,eps_measured,delta_formula,delta_measured,alpha\n");
        for t in 0..self.eps_formula.len() {
            out.push_str(&format!(
                "{t},{},{},{},{},{}\n",
                self.eps_formula[t],
                self.eps_measured[t],
                self.delta_formula[t],
                self.delta_measured[t],
                self.alpha[t]
            ));
        }
        out
    }
}

/// Builds the quantized-range abstraction for the given grids, measures its
/// tolerances exhaustively, computes the closed-form tolerances, and folds
/// both into one report.
pub fn bound_report(
    sys: &SystemModel,
    grids: &[QuantizationGrid],
    opts: &EnumerationOptions,
) -> Result<BoundReport> {
    let perfect = is_perfectly_observed(sys)?;
    let (eps_formula, delta_formula, l_filter, lambda_filter) = if perfect {
        let (e, d) = perfect_obs_bounds(sys, grids)?;
        (e, d, Vec::new(), Vec::new())
    } else {
        partial_obs_bounds_full(sys, grids)?
    };
    let compressor = Compressor::QuantizedRange {
        grids: grids.to_vec(),
    };
    let a = compressor.build(sys, opts)?;
    let (eps_measured, delta_measured) = empirical_eps_delta(sys, &a, opts)?;
    let (table, _) = solve_abstraction_dp(sys, a)?;
    let l_value = verify_value_lipschitz(&table)?;
    let alpha = alpha_bound(sys.criterion(), &eps_measured, &delta_measured, &l_value)?;
    Ok(BoundReport {
        criterion: sys.criterion().to_string(),
        perfectly_observed: perfect,
        gamma: grids.iter().map(QuantizationGrid::gamma).collect(),
        eps_formula,
        eps_measured,
        delta_formula,
        delta_measured,
        alpha,
        l_cost: cost_lipschitz(sys)?,
        l_dyn: dynamics_lipschitz(sys)?,
        l_obs: observation_lipschitz(sys)?,
        l_filter,
        lambda_filter,
        l_value,
    })
}
