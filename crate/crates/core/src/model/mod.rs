//! Finite worst-case system models and the conditional-range filter.
//!
//! A system is described either in state-space form
//!
//! ```text
//! x_{t+1} = f_t(x_t, u_t, w_t)      y_t = h_t(x_t, n_t)      c_t = d_t(x_t, u_t)
//! ```
//!
//! with disturbances `w_t` and measurement noises `n_t` ranging over known
//! finite sets, or in input-output form, where the observation and cost at
//! time `t` are arbitrary functions of the whole primitive history
//! `(w_{0:t}, u_{0:t})`. The agent's memory at time `t` is everything it has
//! seen, `m_t = (y_{0:t}, u_{0:t-1})`.
//!
//! State-space models are tabulated eagerly into index-based tables, which
//! validates totality up front and keeps the enumeration loops cheap. The
//! input-output form keeps its defining closures and is driven by explicit
//! enumeration of consistent disturbance prefixes; `SystemModel::io_view`
//! rewrites a state-space model into that form, which gives the test suites
//! a brute-force route that is independent of the filter.

mod schema;
mod tree;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::point::Point;
use crate::set::FinitePointSet;

pub use schema::{load_model, load_model_file, save_model_file};
pub use tree::{build_memory_tree, MemoryNode, MemoryTree, NodeSupport};

/// Worst-case performance criterion.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Debug)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Maximum stage cost over the horizon.
    Instantaneous,
    /// Cost at the final time only.
    Terminal,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::Instantaneous => write!(f, "instantaneous"),
            Criterion::Terminal => write!(f, "terminal"),
        }
    }
}

/// Limits for reachability enumerations.
#[derive(Clone, Debug)]
pub struct EnumerationOptions {
    /// Hard cap on the total number of enumerated nodes.
    pub budget: usize,
    /// Restrict the enumeration to histories starting with this observation.
    pub initial_observation: Option<Point>,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        EnumerationOptions {
            budget: 10_000_000,
            initial_observation: None,
        }
    }
}

impl EnumerationOptions {
    pub fn with_budget(budget: usize) -> Self {
        EnumerationOptions {
            budget,
            ..Default::default()
        }
    }

    pub fn with_initial_observation(y0: Point) -> Self {
        EnumerationOptions {
            initial_observation: Some(y0),
            ..Default::default()
        }
    }
}

/// The agent's memory `m_t = (y_{0:t}, u_{0:t-1})`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Memory {
    observations: Vec<Point>,
    actions: Vec<Point>,
}

impl Memory {
    pub fn initial(y0: Point) -> Memory {
        Memory {
            observations: vec![y0],
            actions: Vec::new(),
        }
    }

    /// `m_{t+1} = (m_t, u_t, y_{t+1})`.
    pub fn extend(&self, u: Point, y: Point) -> Memory {
        let mut next = self.clone();
        next.actions.push(u);
        next.observations.push(y);
        next
    }

    pub fn time(&self) -> usize {
        self.observations.len() - 1
    }

    pub fn observations(&self) -> &[Point] {
        &self.observations
    }

    pub fn actions(&self) -> &[Point] {
        &self.actions
    }

    /// The memory truncated to its first `t + 1` observations.
    pub fn prefix(&self, t: usize) -> Memory {
        Memory {
            observations: self.observations[..=t].to_vec(),
            actions: self.actions[..t.min(self.actions.len())].to_vec(),
        }
    }
}

impl fmt::Display for Memory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "y=[")?;
        for (i, y) in self.observations.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{y}")?;
        }
        write!(f, "] u=[")?;
        for (i, u) in self.actions.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{u}")?;
        }
        write!(f, "]")
    }
}

/// Pure memory extension, exposed as a free function as well for symmetry
/// with the other model operations.
pub fn memory_extend(m: &Memory, u: Point, y: Point) -> Memory {
    m.extend(u, y)
}

/// Conditional range of the current state given a memory: the set of states
/// reachable by at least one (initial state, disturbance, noise) history
/// consistent with everything observed so far.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RangeState {
    pub t: usize,
    pub support: FinitePointSet,
}

/// State-space model with eagerly tabulated index-based maps.
#[derive(Clone)]
pub struct StateSpaceModel {
    horizon: usize,
    states: Vec<Arc<FinitePointSet>>,
    actions: Vec<Arc<FinitePointSet>>,
    disturbances: Vec<Arc<FinitePointSet>>,
    noises: Vec<Arc<FinitePointSet>>,
    observations: Vec<Arc<FinitePointSet>>,
    /// `dynamics[t][xi * |U_t| * |W_t| + ui * |W_t| + wi]` is the index of the
    /// successor state in `states[t + 1]`.
    dynamics: Vec<Vec<u32>>,
    /// `observation[t][xi * |N_t| + ni]` indexes into `observations[t]`.
    observation: Vec<Vec<u32>>,
    /// `cost[t][xi * |U_t| + ui]`.
    cost: Vec<Vec<f64>>,
    state_metric: Metric,
    observation_metric: Metric,
    action_metric: Metric,
}

impl StateSpaceModel {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn states(&self, t: usize) -> &FinitePointSet {
        &self.states[t]
    }

    pub fn actions(&self, t: usize) -> &FinitePointSet {
        &self.actions[t]
    }

    pub fn disturbances(&self, t: usize) -> &FinitePointSet {
        &self.disturbances[t]
    }

    pub fn noises(&self, t: usize) -> &FinitePointSet {
        &self.noises[t]
    }

    pub fn observations(&self, t: usize) -> &FinitePointSet {
        &self.observations[t]
    }

    pub fn state_metric(&self) -> &Metric {
        &self.state_metric
    }

    pub fn observation_metric(&self) -> &Metric {
        &self.observation_metric
    }

    pub fn action_metric(&self) -> &Metric {
        &self.action_metric
    }

    #[inline]
    pub fn next_state_index(&self, t: usize, xi: u32, ui: u32, wi: u32) -> u32 {
        let nu = self.actions[t].len() as u32;
        let nw = self.disturbances[t].len() as u32;
        self.dynamics[t][(xi * nu * nw + ui * nw + wi) as usize]
    }

    #[inline]
    pub fn observation_index(&self, t: usize, xi: u32, ni: u32) -> u32 {
        let nn = self.noises[t].len() as u32;
        self.observation[t][(xi * nn + ni) as usize]
    }

    #[inline]
    pub fn cost_value(&self, t: usize, xi: u32, ui: u32) -> f64 {
        let nu = self.actions[t].len() as u32;
        self.cost[t][(xi * nu + ui) as usize]
    }

    /// Successor state of a point-valued transition.
    pub fn step(&self, t: usize, x: &Point, u: &Point, w: &Point) -> Result<Point> {
        let xi = self.state_index(t, x)?;
        let ui = self.action_index(t, u)?;
        let wi = self
            .disturbances[t]
            .index_of(w)
            .ok_or_else(|| Error::UnknownPoint { point: w.to_string() })? as u32;
        let next = self.next_state_index(t, xi, ui, wi);
        Ok(self.states[t + 1].points()[next as usize].clone())
    }

    pub fn observe(&self, t: usize, x: &Point, n: &Point) -> Result<Point> {
        let xi = self.state_index(t, x)?;
        let ni = self
            .noises[t]
            .index_of(n)
            .ok_or_else(|| Error::UnknownPoint { point: n.to_string() })? as u32;
        let yi = self.observation_index(t, xi, ni);
        Ok(self.observations[t].points()[yi as usize].clone())
    }

    pub fn stage_cost(&self, t: usize, x: &Point, u: &Point) -> Result<f64> {
        let xi = self.state_index(t, x)?;
        let ui = self.action_index(t, u)?;
        Ok(self.cost_value(t, xi, ui))
    }

    fn state_index(&self, t: usize, x: &Point) -> Result<u32> {
        self.states[t]
            .index_of(x)
            .map(|i| i as u32)
            .ok_or_else(|| Error::UnknownPoint { point: x.to_string() })
    }

    fn action_index(&self, t: usize, u: &Point) -> Result<u32> {
        self.actions[t]
            .index_of(u)
            .map(|i| i as u32)
            .ok_or_else(|| Error::OutOfRangeAction {
                t,
                action: u.to_string(),
            })
    }

    /// Consistent initial supports grouped by initial observation index.
    pub(crate) fn initial_buckets(&self) -> Vec<Vec<u32>> {
        let mut buckets = vec![Vec::new(); self.observations[0].len()];
        let nn = self.noises[0].len() as u32;
        for xi in 0..self.states[0].len() as u32 {
            for ni in 0..nn {
                buckets[self.observation_index(0, xi, ni) as usize].push(xi);
            }
        }
        for b in &mut buckets {
            b.sort_unstable();
            b.dedup();
        }
        buckets
    }

    /// Successor supports of one (support, action) pair, grouped by the next
    /// observation index. Every returned support is nonempty, sorted and
    /// deduplicated.
    pub(crate) fn successor_buckets(
        &self,
        t: usize,
        support: &[u32],
        ui: u32,
    ) -> Vec<(u32, Vec<u32>)> {
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); self.observations[t + 1].len()];
        let nw = self.disturbances[t].len() as u32;
        let nn = self.noises[t + 1].len() as u32;
        for &xi in support {
            for wi in 0..nw {
                let next = self.next_state_index(t, xi, ui, wi);
                for ni in 0..nn {
                    let yi = self.observation_index(t + 1, next, ni);
                    buckets[yi as usize].push(next);
                }
            }
        }
        buckets
            .into_iter()
            .enumerate()
            .filter_map(|(yi, mut b)| {
                if b.is_empty() {
                    None
                } else {
                    b.sort_unstable();
                    b.dedup();
                    Some((yi as u32, b))
                }
            })
            .collect()
    }

    pub(crate) fn support_cost_sup(&self, t: usize, support: &[u32], ui: u32) -> f64 {
        support
            .iter()
            .map(|&xi| self.cost_value(t, xi, ui))
            .fold(0.0, f64::max)
    }

    pub(crate) fn support_points(&self, t: usize, support: &[u32]) -> FinitePointSet {
        FinitePointSet::new(
            support
                .iter()
                .map(|&xi| self.states[t].points()[xi as usize].clone()),
        )
    }
}

type IoMapFn = Arc<dyn Fn(usize, &[Point], &[Point]) -> Point + Send + Sync>;
type IoCostFn = Arc<dyn Fn(usize, &[Point], &[Point]) -> f64 + Send + Sync>;

/// Input-output model: observations and costs as functions of the primitive
/// history. The observation closure receives `(t, w_{0:t-1}, u_{0:t-1})` for
/// `t >= 1` and `(0, [w_0], [])` at time zero; the cost closure receives the
/// full prefixes `(t, w_{0:t}, u_{0:t})`.
#[derive(Clone)]
pub struct IoModel {
    horizon: usize,
    disturbances: Vec<Arc<FinitePointSet>>,
    actions: Vec<Arc<FinitePointSet>>,
    observations: Vec<Arc<FinitePointSet>>,
    observation: IoMapFn,
    cost: IoCostFn,
    observation_metric: Metric,
    action_metric: Metric,
}

impl fmt::Debug for IoModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IoModel")
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl IoModel {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn disturbances(&self, t: usize) -> &FinitePointSet {
        &self.disturbances[t]
    }

    pub fn actions(&self, t: usize) -> &FinitePointSet {
        &self.actions[t]
    }

    pub fn observations(&self, t: usize) -> &FinitePointSet {
        &self.observations[t]
    }

    pub fn observe(&self, t: usize, w_prefix: &[Point], u_prefix: &[Point]) -> Point {
        (self.observation)(t, w_prefix, u_prefix)
    }

    pub fn cost(&self, t: usize, w_prefix: &[Point], u_prefix: &[Point]) -> f64 {
        (self.cost)(t, w_prefix, u_prefix)
    }
}

/// Declarative inputs for an input-output model.
pub struct IoModelBuilder {
    pub horizon: usize,
    pub criterion: Criterion,
    /// `W_t` for `t = 0..=T`.
    pub disturbances: Vec<FinitePointSet>,
    /// `U_t` for `t = 0..=T`.
    pub actions: Vec<FinitePointSet>,
    /// Declared observation spaces `Y_t`; outputs of the observation closure
    /// must stay inside them (checked during enumeration).
    pub observations: Vec<FinitePointSet>,
    pub observation_metric: Metric,
    pub action_metric: Metric,
}

impl IoModelBuilder {
    pub fn build<Fh, Fc>(self, observation: Fh, cost: Fc) -> Result<SystemModel>
    where
        Fh: Fn(usize, &[Point], &[Point]) -> Point + Send + Sync + 'static,
        Fc: Fn(usize, &[Point], &[Point]) -> f64 + Send + Sync + 'static,
    {
        let t_len = self.horizon + 1;
        for (name, len) in [
            ("disturbances", self.disturbances.len()),
            ("actions", self.actions.len()),
            ("observations", self.observations.len()),
        ] {
            if len != t_len {
                return Err(Error::Schema(format!(
                    "{name} must list {t_len} sets (one per time), got {len}"
                )));
            }
        }
        for sets in [&self.disturbances, &self.actions, &self.observations] {
            if sets.iter().any(FinitePointSet::is_empty) {
                return Err(Error::EmptySet("IoModelBuilder::build"));
            }
        }
        Ok(SystemModel {
            criterion: self.criterion,
            form: Form::Io(IoModel {
                horizon: self.horizon,
                disturbances: self.disturbances.into_iter().map(Arc::new).collect(),
                actions: self.actions.into_iter().map(Arc::new).collect(),
                observations: self.observations.into_iter().map(Arc::new).collect(),
                observation: Arc::new(observation),
                cost: Arc::new(cost),
                observation_metric: self.observation_metric,
                action_metric: self.action_metric,
            }),
        })
    }
}

/// Declarative inputs for a state-space model.
pub struct StateSpaceBuilder {
    pub horizon: usize,
    pub criterion: Criterion,
    /// `X_t` for `t = 0..=T`.
    pub states: Vec<FinitePointSet>,
    /// `U_t` for `t = 0..=T`.
    pub actions: Vec<FinitePointSet>,
    /// `W_t` for `t = 0..T-1`.
    pub disturbances: Vec<FinitePointSet>,
    /// `N_t` for `t = 0..=T`.
    pub noises: Vec<FinitePointSet>,
    pub state_metric: Metric,
    pub observation_metric: Metric,
    pub action_metric: Metric,
}

impl StateSpaceBuilder {
    /// Tabulates the defining maps and validates totality: the dynamics must
    /// land in the declared next state set and costs must be finite and
    /// non-negative.
    pub fn build<Fd, Fh, Fc>(self, dynamics: Fd, observation: Fh, cost: Fc) -> Result<SystemModel>
    where
        Fd: Fn(usize, &Point, &Point, &Point) -> Point,
        Fh: Fn(usize, &Point, &Point) -> Point,
        Fc: Fn(usize, &Point, &Point) -> f64,
    {
        let horizon = self.horizon;
        let t_len = horizon + 1;
        if self.states.len() != t_len
            || self.actions.len() != t_len
            || self.noises.len() != t_len
            || self.disturbances.len() != horizon
        {
            return Err(Error::Schema(format!(
                "state-space model with horizon {horizon} needs {t_len} state/action/noise sets \
                 and {horizon} disturbance sets"
            )));
        }
        for sets in [&self.states, &self.actions, &self.noises, &self.disturbances] {
            if sets.iter().any(FinitePointSet::is_empty) {
                return Err(Error::EmptySet("StateSpaceBuilder::build"));
            }
        }

        let mut dyn_tables = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let (xs, us, ws) = (&self.states[t], &self.actions[t], &self.disturbances[t]);
            let mut table = Vec::with_capacity(xs.len() * us.len() * ws.len());
            for x in xs {
                for u in us {
                    for w in ws {
                        let next = dynamics(t, x, u, w);
                        let idx = self.states[t + 1].index_of(&next).ok_or_else(|| {
                            Error::GeneratorIncomplete(format!(
                                "dynamics at t={t} maps ({x},{u},{w}) to {next}, \
                                 which is not in the declared state set at t={}",
                                t + 1
                            ))
                        })?;
                        table.push(idx as u32);
                    }
                }
            }
            dyn_tables.push(table);
        }

        let mut obs_spaces = Vec::with_capacity(t_len);
        let mut obs_tables = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let (xs, ns) = (&self.states[t], &self.noises[t]);
            let mut raw = Vec::with_capacity(xs.len() * ns.len());
            for x in xs {
                for n in ns {
                    raw.push(observation(t, x, n));
                }
            }
            let space = FinitePointSet::new(raw.iter().cloned());
            let table = raw
                .iter()
                .map(|y| space.index_of(y).expect("image point present") as u32)
                .collect();
            obs_spaces.push(Arc::new(space));
            obs_tables.push(table);
        }

        let mut cost_tables = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let (xs, us) = (&self.states[t], &self.actions[t]);
            let mut table = Vec::with_capacity(xs.len() * us.len());
            for x in xs {
                for u in us {
                    let c = cost(t, x, u);
                    if !c.is_finite() || c < 0.0 {
                        return Err(Error::NegativeInput(format!(
                            "cost at t={t} for ({x},{u}) is {c}; costs must be finite and >= 0"
                        )));
                    }
                    table.push(c);
                }
            }
            cost_tables.push(table);
        }

        Ok(SystemModel {
            criterion: self.criterion,
            form: Form::State(StateSpaceModel {
                horizon,
                states: self.states.into_iter().map(Arc::new).collect(),
                actions: self.actions.into_iter().map(Arc::new).collect(),
                disturbances: self.disturbances.into_iter().map(Arc::new).collect(),
                noises: self.noises.into_iter().map(Arc::new).collect(),
                observations: obs_spaces,
                dynamics: dyn_tables,
                observation: obs_tables,
                cost: cost_tables,
                state_metric: self.state_metric,
                observation_metric: self.observation_metric,
                action_metric: self.action_metric,
            }),
        })
    }
}

/// Forward-reachable state sets: `X_{t+1}` is the image of `X_t` under every
/// admissible (action, disturbance) pair. Useful for trimming benchmark
/// models whose nominal state space is much larger than what is reachable.
pub fn forward_reachable_states<Fd>(
    x0: FinitePointSet,
    horizon: usize,
    actions: &[FinitePointSet],
    disturbances: &[FinitePointSet],
    dynamics: Fd,
) -> Vec<FinitePointSet>
where
    Fd: Fn(usize, &Point, &Point, &Point) -> Point,
{
    let mut levels = vec![x0];
    for t in 0..horizon {
        let prev = &levels[t];
        let mut next = Vec::new();
        for x in prev {
            for u in &actions[t] {
                for w in &disturbances[t] {
                    next.push(dynamics(t, x, u, w));
                }
            }
        }
        levels.push(FinitePointSet::new(next));
    }
    levels
}

#[derive(Clone)]
enum Form {
    State(StateSpaceModel),
    Io(IoModel),
}

/// A finite worst-case control system in either representation.
#[derive(Clone)]
pub struct SystemModel {
    criterion: Criterion,
    form: Form,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let form = match &self.form {
            Form::State(_) => "state-space",
            Form::Io(_) => "input-output",
        };
        f.debug_struct("SystemModel")
            .field("criterion", &self.criterion)
            .field("form", &form)
            .field("horizon", &self.horizon())
            .finish()
    }
}

impl SystemModel {
    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    pub fn horizon(&self) -> usize {
        match &self.form {
            Form::State(m) => m.horizon,
            Form::Io(m) => m.horizon,
        }
    }

    pub fn actions(&self, t: usize) -> &FinitePointSet {
        match &self.form {
            Form::State(m) => m.actions(t),
            Form::Io(m) => m.actions(t),
        }
    }

    pub fn observations(&self, t: usize) -> &FinitePointSet {
        match &self.form {
            Form::State(m) => m.observations(t),
            Form::Io(m) => m.observations(t),
        }
    }

    pub fn observation_metric(&self) -> &Metric {
        match &self.form {
            Form::State(m) => &m.observation_metric,
            Form::Io(m) => &m.observation_metric,
        }
    }

    pub fn action_metric(&self) -> &Metric {
        match &self.form {
            Form::State(m) => &m.action_metric,
            Form::Io(m) => &m.action_metric,
        }
    }

    pub fn is_state_space(&self) -> bool {
        matches!(self.form, Form::State(_))
    }

    /// The state-space representation, required by state-dependent
    /// operations such as the conditional-range filter.
    pub fn state_space(&self) -> Result<&StateSpaceModel> {
        match &self.form {
            Form::State(m) => Ok(m),
            Form::Io(_) => Err(Error::GeneratorIncomplete(
                "operation requires a state-space model".into(),
            )),
        }
    }

    pub fn io(&self) -> Result<&IoModel> {
        match &self.form {
            Form::Io(m) => Ok(m),
            Form::State(_) => Err(Error::GeneratorIncomplete(
                "operation requires an input-output model".into(),
            )),
        }
    }

    /// Rewrites a state-space model as an equivalent input-output model by
    /// bundling primitive uncertainties: the time-0 disturbance carries
    /// `(x_0, n_0, w_0, n_1)` and the time-t disturbance carries
    /// `(w_t, n_{t+1})`, so every observation and cost becomes a function of
    /// the disturbance/action prefix alone. The rewrite is used by tests as
    /// a brute-force enumeration route that bypasses the filter.
    pub fn io_view(&self) -> Result<SystemModel> {
        let ss = self.state_space()?.clone();
        let horizon = ss.horizon;
        let sd = ss.states[0].points()[0].dims();
        let nd = ss.noises[0].points()[0].dims();

        let mut disturbances = Vec::with_capacity(horizon + 1);
        let mut w0 = Vec::new();
        for x in ss.states[0].iter() {
            for n in ss.noises[0].iter() {
                if horizon == 0 {
                    w0.push(x.concat(n));
                } else {
                    for w in ss.disturbances[0].iter() {
                        for n1 in ss.noises[1].iter() {
                            w0.push(x.concat(n).concat(w).concat(n1));
                        }
                    }
                }
            }
        }
        disturbances.push(FinitePointSet::new(w0));
        for t in 1..=horizon {
            if t < horizon {
                let mut wt = Vec::new();
                for w in ss.disturbances[t].iter() {
                    for n in ss.noises[t + 1].iter() {
                        wt.push(w.concat(n));
                    }
                }
                disturbances.push(FinitePointSet::new(wt));
            } else {
                disturbances.push(FinitePointSet::singleton(Point::new([])));
            }
        }

        let wd = if horizon == 0 {
            0
        } else {
            ss.disturbances[0].points()[0].dims()
        };
        // Replays the state trajectory up to `t` from bundled primitives.
        let replay = {
            let ss = ss.clone();
            move |t: usize, w_prefix: &[Point], u_prefix: &[Point]| -> Point {
                let mut x = w_prefix[0].project(0..sd);
                for s in 0..t {
                    let w = if s == 0 {
                        w_prefix[0].project(sd + nd..sd + nd + wd)
                    } else {
                        w_prefix[s].project(0..wd)
                    };
                    x = ss
                        .step(s, &x, &u_prefix[s], &w)
                        .expect("replay stays inside tabulated spaces");
                }
                x
            }
        };

        let obs_fn = {
            let ss = ss.clone();
            let replay = replay.clone();
            move |t: usize, w_prefix: &[Point], u_prefix: &[Point]| -> Point {
                let x = replay(t, w_prefix, u_prefix);
                let n = if t == 0 {
                    w_prefix[0].project(sd..sd + nd)
                } else {
                    let prev = &w_prefix[t - 1];
                    prev.project(prev.dims() - nd..prev.dims())
                };
                ss.observe(t, &x, &n).expect("noise stays inside tabulated spaces")
            }
        };
        let cost_fn = {
            let ss = ss.clone();
            move |t: usize, w_prefix: &[Point], u_prefix: &[Point]| -> f64 {
                let x = replay(t, w_prefix, u_prefix);
                ss.stage_cost(t, &x, &u_prefix[t])
                    .expect("action stays inside tabulated spaces")
            }
        };

        IoModelBuilder {
            horizon,
            criterion: self.criterion,
            disturbances,
            actions: ss.actions.iter().map(|a| (**a).clone()).collect(),
            observations: ss.observations.iter().map(|o| (**o).clone()).collect(),
            observation_metric: ss.observation_metric.clone(),
            action_metric: ss.action_metric.clone(),
        }
        .build(obs_fn, cost_fn)
    }
}

/// Initial conditional range: states consistent with the first observation.
pub fn range_filter_init(sys: &SystemModel, y0: &Point) -> Result<RangeState> {
    let ss = sys.state_space()?;
    let yi = ss.observations[0]
        .index_of(y0)
        .ok_or_else(|| Error::OutOfRangeObservation {
            t: 0,
            observation: y0.to_string(),
        })?;
    let support = ss.initial_buckets().swap_remove(yi);
    if support.is_empty() {
        return Err(Error::InfeasibleObservation {
            t: 0,
            observation: y0.to_string(),
        });
    }
    Ok(RangeState {
        t: 0,
        support: ss.support_points(0, &support),
    })
}

/// One filter step: propagate the support through the dynamics and keep the
/// successors that can produce the new observation under some noise value.
pub fn range_filter_update(
    sys: &SystemModel,
    p: &RangeState,
    u: &Point,
    y_next: &Point,
) -> Result<RangeState> {
    let ss = sys.state_space()?;
    let t = p.t;
    if t >= ss.horizon {
        return Err(Error::Schema(format!(
            "filter update at t={t} would step past the horizon {}",
            ss.horizon
        )));
    }
    let ui = ss.action_index(t, u)?;
    let yi = ss.observations[t + 1]
        .index_of(y_next)
        .ok_or_else(|| Error::OutOfRangeObservation {
            t: t + 1,
            observation: y_next.to_string(),
        })?;
    let support: Vec<u32> = p
        .support
        .iter()
        .map(|x| ss.state_index(t, x))
        .collect::<Result<Vec<_>>>()?;
    let buckets = ss.successor_buckets(t, &support, ui);
    let next = buckets
        .into_iter()
        .find(|(y, _)| *y == yi as u32)
        .map(|(_, s)| s)
        .ok_or_else(|| Error::InfeasibleObservation {
            t: t + 1,
            observation: y_next.to_string(),
        })?;
    Ok(RangeState {
        t: t + 1,
        support: ss.support_points(t + 1, &next),
    })
}

impl RangeState {
    /// Runs the filter along a full memory.
    pub fn from_memory(sys: &SystemModel, m: &Memory) -> Result<RangeState> {
        let mut p = range_filter_init(sys, &m.observations()[0])?;
        for (u, y) in m.actions().iter().zip(&m.observations()[1..]) {
            p = range_filter_update(sys, &p, u, y)?;
        }
        Ok(p)
    }
}

/// What the worst-case stage cost is conditioned on.
pub enum CostCarrier<'a> {
    Memory(&'a Memory),
    Range(&'a RangeState),
    Set { t: usize, support: &'a FinitePointSet },
}

/// `sup [[C_t | carrier, u]]`: the worst stage cost consistent with the
/// carrier when action `u` is applied.
pub fn worst_case_stage_cost(sys: &SystemModel, carrier: CostCarrier<'_>, u: &Point) -> Result<f64> {
    match carrier {
        CostCarrier::Range(p) => {
            let ss = sys.state_space()?;
            let ui = ss.action_index(p.t, u)?;
            let mut sup = f64::NEG_INFINITY;
            for x in &p.support {
                sup = sup.max(ss.cost_value(p.t, ss.state_index(p.t, x)?, ui));
            }
            if p.support.is_empty() {
                return Err(Error::EmptySet("worst_case_stage_cost"));
            }
            Ok(sup)
        }
        CostCarrier::Set { t, support } => worst_case_stage_cost(
            sys,
            CostCarrier::Range(&RangeState {
                t,
                support: support.clone(),
            }),
            u,
        ),
        CostCarrier::Memory(m) => {
            if sys.is_state_space() {
                let p = RangeState::from_memory(sys, m)?;
                worst_case_stage_cost(sys, CostCarrier::Range(&p), u)
            } else {
                let io = sys.io()?;
                let t = m.time();
                io.actions(t)
                    .index_of(u)
                    .ok_or_else(|| Error::OutOfRangeAction {
                        t,
                        action: u.to_string(),
                    })?;
                let prefixes = tree::consistent_io_prefixes(io, m)?;
                let mut u_prefix = m.actions().to_vec();
                u_prefix.push(u.clone());
                let mut sup = f64::NEG_INFINITY;
                for w_prefix in &prefixes {
                    sup = sup.max(io.cost(t, w_prefix, &u_prefix));
                }
                Ok(sup)
            }
        }
    }
}

/// All memories reachable at time `t` under some action choices: exactly the
/// memories whose consistent disturbance/noise history set is nonempty, in a
/// deterministic order.
pub fn enumerate_reachable_memories(
    sys: &SystemModel,
    t: usize,
    opts: &EnumerationOptions,
) -> Result<Vec<Memory>> {
    let tree = tree::build_memory_tree_to(sys, t, opts)?;
    Ok(tree.level(t).iter().map(|n| n.memory.clone()).collect())
}

#[cfg(test)]
mod tests;
