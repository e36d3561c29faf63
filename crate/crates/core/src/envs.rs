//! Two grid-world benchmarks exposed as [`SystemModel`]s.
//!
//! **Wall defense.** An agent patrols the two rows above a wall while an
//! attacker moves through the two rows below it. Standing next to a wall
//! cell damages it (attacker) or repairs it (agent); the agent sees its own
//! position and the wall exactly but the attacker only through noisy
//! observations, and pays the accumulated damage at every step.
//!
//! **Pursuit evasion.** An agent chases a moving target through a square
//! grid with static obstacles, observing the target with noise until the
//! final time, and pays the obstacle-avoiding shortest-path distance to the
//! target at the final time only.
//!
//! Both games share the same five-move kinematics: a move off the feasible
//! set leaves the mover in place (see [`clip_move`]). Constructors trim the
//! declared state sets to what is forward-reachable from the configured
//! initial condition, which keeps the tabulated models small.

use serde::{Deserialize, Serialize};

use crate::dp::{Compressor, RolloutReport};
use crate::error::{Error, Result};
use crate::metric::{Metric, ShortestPathMetric};
use crate::model::{forward_reachable_states, Criterion, StateSpaceBuilder, SystemModel};
use crate::point::Point;
use crate::quantize::QuantizationGrid;
use crate::set::FinitePointSet;

/// The shared move set: left, right, stay, up, down.
pub const MOVES: [(i64, i64); 5] = [(-1, 0), (1, 0), (0, 0), (0, 1), (0, -1)];

fn cell(c: (i64, i64)) -> Point {
    Point::int(&[c.0, c.1])
}

fn move_set() -> FinitePointSet {
    FinitePointSet::new(MOVES.iter().copied().map(cell))
}

/// Applies `delta` to `pos` if the result stays feasible, else stays put.
pub fn clip_move(pos: &Point, delta: &Point, feasible: &FinitePointSet) -> Point {
    let candidate = pos.add(delta);
    if feasible.contains(&candidate) {
        candidate
    } else {
        pos.clone()
    }
}

/// Shared configuration for both benchmarks, loadable from JSON.
///
/// `obstacles` only affects pursuit evasion; `quantized_cells` only affects
/// the wall-defense approximate information state. Exactly one of
/// `initial_observation` (the solver conditions on it) and `initial_true`
/// (the opponent's start is known; the initial state set becomes a
/// singleton) may be set; both may be omitted.
#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
#[serde(deny_unknown_fields)]
pub struct GridEnvConfig {
    pub horizon: usize,
    /// Obstacle cells for pursuit evasion; empty means the default layout.
    #[serde(default)]
    pub obstacles: Vec<(i64, i64)>,
    pub initial_agent: (i64, i64),
    /// Observed opponent cell at time zero, if the run conditions on one.
    #[serde(default)]
    pub initial_observation: Option<(i64, i64)>,
    /// True opponent cell at time zero, if it is known exactly.
    #[serde(default)]
    pub initial_true: Option<(i64, i64)>,
    /// Quantization centers for the wall-defense attacker range; empty
    /// means every even column in both attacker rows.
    #[serde(default)]
    pub quantized_cells: Vec<(i64, i64)>,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_replicates() -> u64 {
    100
}

impl GridEnvConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: GridEnvConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_observation.is_some() && self.initial_true.is_some() {
            return Err(Error::Schema(
                "set at most one of initial_observation and initial_true".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Wall defense
// ---------------------------------------------------------------------------

/// Geometry of the wall-defense grid: columns `-half..=half`, agent rows
/// `{1, 2}`, wall row `0`, attacker rows `{-1, -2}`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct WallGrid {
    half: i64,
}

impl WallGrid {
    /// The five-column grid.
    pub fn full() -> Self {
        WallGrid { half: 2 }
    }

    /// A three-column strip, small enough for exhaustive verification.
    pub fn strip() -> Self {
        WallGrid { half: 1 }
    }

    pub fn columns(&self) -> impl Iterator<Item = i64> {
        -self.half..=self.half
    }

    pub fn column_count(&self) -> usize {
        (2 * self.half + 1) as usize
    }

    pub fn agent_cells(&self) -> FinitePointSet {
        FinitePointSet::new(
            self.columns()
                .flat_map(|c| [cell((c, 1)), cell((c, 2))]),
        )
    }

    pub fn attacker_cells(&self) -> FinitePointSet {
        FinitePointSet::new(
            self.columns()
                .flat_map(|c| [cell((c, -1)), cell((c, -2))]),
        )
    }

    /// Default quantization centers: the even columns of both attacker
    /// rows, a cover of the attacker cells at resolution one.
    pub fn default_quantized_cells(&self) -> Vec<(i64, i64)> {
        self.columns()
            .filter(|c| c % 2 == 0)
            .flat_map(|c| [(c, -1), (c, -2)])
            .collect()
    }
}

/// One wall-defense state in structured form.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct WallDefenseState {
    pub agent: (i64, i64),
    pub attacker: (i64, i64),
    /// Damage per column, left to right, each in `0..=3`.
    pub damage: Vec<u8>,
}

impl WallDefenseState {
    pub fn to_point(&self) -> Point {
        let mut coords = vec![self.agent.0, self.agent.1, self.attacker.0, self.attacker.1];
        coords.extend(self.damage.iter().map(|&d| i64::from(d)));
        Point::int(&coords)
    }

    pub fn from_point(p: &Point, grid: &WallGrid) -> Result<Self> {
        let expected = 4 + grid.column_count();
        if p.dims() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: p.dims(),
            });
        }
        Ok(WallDefenseState {
            agent: (p.coord(0) as i64, p.coord(1) as i64),
            attacker: (p.coord(2) as i64, p.coord(3) as i64),
            damage: (4..p.dims()).map(|i| p.coord(i) as u8).collect(),
        })
    }
}

/// One step of the wall-defense game: both movers are clipped to their
/// rows, and each column's damage gains one point if the attacker stands
/// below it and loses one if the agent stands above it, simultaneously,
/// clipped to `0..=3`. The damage update reads the positions *before* the
/// move.
pub fn wall_step(
    grid: &WallGrid,
    s: &WallDefenseState,
    u: &Point,
    w: &Point,
) -> WallDefenseState {
    let agent = clip_move(&cell(s.agent), u, &grid.agent_cells());
    let attacker = clip_move(&cell(s.attacker), w, &grid.attacker_cells());
    let damage = grid
        .columns()
        .zip(&s.damage)
        .map(|(c, &d)| {
            let hit = i16::from(s.attacker == (c, -1));
            let fix = i16::from(s.agent == (c, 1));
            (i16::from(d) + hit - fix).clamp(0, 3) as u8
        })
        .collect();
    WallDefenseState {
        agent: (agent.coord(0) as i64, agent.coord(1) as i64),
        attacker: (attacker.coord(0) as i64, attacker.coord(1) as i64),
        damage,
    }
}

/// Stage cost of the wall-defense game: total damage.
pub fn wall_cost(damage: &[u8]) -> f64 {
    damage.iter().map(|&d| f64::from(d)).sum()
}

/// The wall-defense observation noise: exact, or shifted one row up.
fn wall_noise_set() -> FinitePointSet {
    FinitePointSet::new([cell((0, 0)), cell((0, 1))])
}

fn wall_model(cfg: &GridEnvConfig, grid: WallGrid) -> Result<SystemModel> {
    cfg.validate()?;
    let agent_cells = grid.agent_cells();
    let attacker_cells = grid.attacker_cells();
    if !agent_cells.contains(&cell(cfg.initial_agent)) {
        return Err(Error::Schema(format!(
            "initial agent cell {} is not an agent cell",
            cell(cfg.initial_agent)
        )));
    }
    let initial_attackers = match cfg.initial_true {
        Some(c) if !attacker_cells.contains(&cell(c)) => {
            return Err(Error::Schema(format!(
                "initial attacker cell {} is not an attacker cell",
                cell(c)
            )));
        }
        Some(c) => FinitePointSet::singleton(cell(c)),
        None => attacker_cells.clone(),
    };
    let x0 = initial_attackers.map(|at| {
        WallDefenseState {
            agent: cfg.initial_agent,
            attacker: (at.coord(0) as i64, at.coord(1) as i64),
            damage: vec![0; grid.column_count()],
        }
        .to_point()
    });

    let horizon = cfg.horizon;
    let moves = move_set();
    let dynamics = move |_t: usize, x: &Point, u: &Point, w: &Point| {
        let s = WallDefenseState::from_point(x, &grid).expect("state layout");
        wall_step(&grid, &s, u, w).to_point()
    };
    let states = forward_reachable_states(
        x0,
        horizon,
        &vec![moves.clone(); horizon + 1],
        &vec![moves.clone(); horizon],
        dynamics,
    );
    let ncols = grid.column_count();
    StateSpaceBuilder {
        horizon,
        criterion: Criterion::Instantaneous,
        states,
        actions: vec![moves.clone(); horizon + 1],
        disturbances: vec![moves; horizon],
        noises: vec![wall_noise_set(); horizon + 1],
        state_metric: Metric::Manhattan,
        observation_metric: Metric::Manhattan,
        action_metric: Metric::Manhattan,
    }
    .build(
        dynamics,
        move |_t, x, n| {
            // The agent sees its own cell and the damage exactly and the
            // attacker through the noise: (agent, damage, observed attacker).
            let attacker = x.project(2..4);
            let observed = clip_move(&attacker, n, &attacker_cells);
            x.project(0..2)
                .concat(&x.project(4..4 + ncols))
                .concat(&observed)
        },
        move |_t, x, _u| wall_cost(
            &(4..4 + ncols).map(|i| x.coord(i) as u8).collect::<Vec<_>>(),
        ),
    )
}

/// The five-column wall-defense game.
pub fn wall_defense(cfg: &GridEnvConfig) -> Result<SystemModel> {
    wall_model(cfg, WallGrid::full())
}

/// The three-column wall-defense strip.
pub fn wall_defense_strip(cfg: &GridEnvConfig) -> Result<SystemModel> {
    wall_model(cfg, WallGrid::strip())
}

/// The quantization grid over attacker cells used by the wall-defense
/// approximate information state: the configured centers (or the default
/// even-column cover), with the resolution measured against the full
/// attacker cell set.
pub fn wall_quantized_grid(cfg: &GridEnvConfig, grid: &WallGrid) -> Result<QuantizationGrid> {
    let attacker_cells = grid.attacker_cells();
    let centers = if cfg.quantized_cells.is_empty() {
        grid.default_quantized_cells()
    } else {
        cfg.quantized_cells.clone()
    };
    let centers = FinitePointSet::new(centers.into_iter().map(cell));
    for c in &centers {
        if !attacker_cells.contains(c) {
            return Err(Error::Schema(format!(
                "quantization center {c} is not an attacker cell"
            )));
        }
    }
    let mut radius = 0.0f64;
    for x in &attacker_cells {
        let nearest = centers
            .iter()
            .map(|c| Metric::Manhattan.dist(x, c))
            .try_fold(f64::INFINITY, |best, d| d.map(|d| best.min(d)))?;
        radius = radius.max(nearest);
    }
    QuantizationGrid::from_points(centers, radius, Metric::Manhattan)
}

/// The wall-defense approximate information state: the exactly observed
/// block (agent cell and damage vector) kept as a point, the attacker range
/// quantized, and the initial observation appended.
pub fn wall_composite_compressor(cfg: &GridEnvConfig, grid: &WallGrid) -> Result<Compressor> {
    let ncols = grid.column_count();
    let quantized = wall_quantized_grid(cfg, grid)?;
    Ok(Compressor::Projected {
        point_coords: std::iter::once(0)
            .chain(std::iter::once(1))
            .chain(4..4 + ncols)
            .collect(),
        set_coords: vec![2, 3],
        grids: Some(vec![quantized; cfg.horizon + 1]),
        include_initial_obs: true,
        point_metric: Metric::Manhattan,
        set_metric: Metric::Manhattan,
    })
}

/// The exact wall-defense information state: the same split with the
/// attacker range kept unquantized and no initial-observation tag.
pub fn wall_exact_compressor(grid: &WallGrid) -> Compressor {
    let ncols = grid.column_count();
    Compressor::Projected {
        point_coords: std::iter::once(0)
            .chain(std::iter::once(1))
            .chain(4..4 + ncols)
            .collect(),
        set_coords: vec![2, 3],
        grids: None,
        include_initial_obs: false,
        point_metric: Metric::Manhattan,
        set_metric: Metric::Manhattan,
    }
}

// ---------------------------------------------------------------------------
// Pursuit evasion
// ---------------------------------------------------------------------------

/// One pursuit-evasion state in structured form.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PursuitState {
    pub agent: (i64, i64),
    pub target: (i64, i64),
}

impl PursuitState {
    pub fn to_point(&self) -> Point {
        Point::int(&[self.agent.0, self.agent.1, self.target.0, self.target.1])
    }

    pub fn from_point(p: &Point) -> Result<Self> {
        if p.dims() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                got: p.dims(),
            });
        }
        Ok(PursuitState {
            agent: (p.coord(0) as i64, p.coord(1) as i64),
            target: (p.coord(2) as i64, p.coord(3) as i64),
        })
    }
}

/// One step of the pursuit game: both movers clipped to the obstacle-free
/// cells.
pub fn pursuit_step(
    s: &PursuitState,
    u: &Point,
    w: &Point,
    free: &FinitePointSet,
) -> PursuitState {
    let agent = clip_move(&cell(s.agent), u, free);
    let target = clip_move(&cell(s.target), w, free);
    PursuitState {
        agent: (agent.coord(0) as i64, agent.coord(1) as i64),
        target: (target.coord(0) as i64, target.coord(1) as i64),
    }
}

/// Shortest distance from target to agent over four-neighbor moves within
/// the obstacle-free cells; adjacent cells are one unit apart.
pub fn pursuit_terminal_cost(
    target: &Point,
    agent: &Point,
    free: &FinitePointSet,
) -> Result<f64> {
    ShortestPathMetric::new(free.clone())?.dist(target, agent)
}

/// The default obstacle layout for the nine-by-nine grid: a plus shape of
/// five cells centered on the origin.
pub fn default_pursuit_obstacles() -> Vec<(i64, i64)> {
    vec![(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)]
}

fn pursuit_model(cfg: &GridEnvConfig, half: i64) -> Result<SystemModel> {
    cfg.validate()?;
    let obstacles: Vec<(i64, i64)> = if cfg.obstacles.is_empty() && half == 4 {
        default_pursuit_obstacles()
    } else {
        cfg.obstacles.clone()
    };
    for &o in &obstacles {
        if o.0.abs() > half || o.1.abs() > half {
            return Err(Error::Schema(format!(
                "obstacle {} lies outside the grid",
                cell(o)
            )));
        }
    }
    let free = FinitePointSet::new(
        (-half..=half)
            .flat_map(|x| (-half..=half).map(move |y| (x, y)))
            .filter(|c| !obstacles.contains(c))
            .map(cell),
    );
    if free.is_empty() {
        return Err(Error::EmptySet("pursuit_model"));
    }
    // One breadth-first sweep from an arbitrary free cell certifies that the
    // terminal cost is defined for every pair of feasible cells.
    let paths = ShortestPathMetric::new(free.clone())?;
    let anchor = free.first()?.clone();
    for c in &free {
        paths.dist(&anchor, c)?;
    }
    if !free.contains(&cell(cfg.initial_agent)) {
        return Err(Error::Schema(format!(
            "initial agent cell {} is an obstacle or outside the grid",
            cell(cfg.initial_agent)
        )));
    }
    let initial_targets = match cfg.initial_true {
        Some(c) if !free.contains(&cell(c)) => {
            return Err(Error::Schema(format!(
                "initial target cell {} is an obstacle or outside the grid",
                cell(c)
            )));
        }
        Some(c) => FinitePointSet::singleton(cell(c)),
        None => free.clone(),
    };
    let x0 = initial_targets.map(|ta| {
        PursuitState {
            agent: cfg.initial_agent,
            target: (ta.coord(0) as i64, ta.coord(1) as i64),
        }
        .to_point()
    });

    let horizon = cfg.horizon;
    let moves = move_set();
    let stay = FinitePointSet::singleton(cell((0, 0)));
    let free_dyn = free.clone();
    let dynamics = move |_t: usize, x: &Point, u: &Point, w: &Point| {
        let s = PursuitState::from_point(x).expect("state layout");
        pursuit_step(&s, u, w, &free_dyn).to_point()
    };
    // The agent chooses no action at the final time, and the final
    // observation reveals the target exactly.
    let mut actions = vec![moves.clone(); horizon];
    actions.push(stay.clone());
    let mut noises = vec![moves.clone(); horizon];
    noises.push(stay);
    let states = forward_reachable_states(
        x0,
        horizon,
        &actions,
        &vec![moves.clone(); horizon],
        &dynamics,
    );
    let free_obs = free.clone();
    StateSpaceBuilder {
        horizon,
        criterion: Criterion::Terminal,
        states,
        actions,
        disturbances: vec![moves; horizon],
        noises,
        state_metric: Metric::Manhattan,
        observation_metric: Metric::Manhattan,
        action_metric: Metric::Manhattan,
    }
    .build(
        dynamics,
        move |_t, x, n| {
            let target = x.project(2..4);
            x.project(0..2).concat(&clip_move(&target, n, &free_obs))
        },
        move |t, x, _u| {
            if t < horizon {
                0.0
            } else {
                paths
                    .dist(&x.project(2..4), &x.project(0..2))
                    .expect("grid connectivity validated")
            }
        },
    )
}

/// The nine-by-nine pursuit-evasion game.
pub fn pursuit_evasion(cfg: &GridEnvConfig) -> Result<SystemModel> {
    pursuit_model(cfg, 4)
}

/// The five-by-five pursuit-evasion game, small enough for exhaustive
/// verification.
pub fn pursuit_evasion_reduced(cfg: &GridEnvConfig) -> Result<SystemModel> {
    pursuit_model(cfg, 2)
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// The full observation point at time zero whose observed-opponent block
/// (the trailing two coordinates) equals `observed`. The exactly observed
/// blocks are pinned by the initial condition, so the match is unique.
pub fn initial_observation_point(sys: &SystemModel, observed: (i64, i64)) -> Result<Point> {
    let target = cell(observed);
    let mut matches = sys.observations(0).iter().filter(|y| {
        y.dims() >= 2 && y.project(y.dims() - 2..y.dims()) == target
    });
    match (matches.next(), matches.next()) {
        (Some(y), None) => Ok(y.clone()),
        (None, _) => Err(Error::InfeasibleObservation {
            t: 0,
            observation: target.to_string(),
        }),
        (Some(_), Some(_)) => Err(Error::Schema(format!(
            "observed cell {target} does not identify a unique initial observation"
        ))),
    }
}

/// Renders rollout traces as CSV with one row per step: replicate, time,
/// agent cell, opponent cell, observation, action, stage cost. Requires
/// state-space rollouts, whose steps carry the true state.
pub fn rollout_trace_csv(report: &RolloutReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["replicate", "t", "agent", "opponent", "observation", "action", "stage_cost"])
        .map_err(csv_error)?;
    for step in &report.steps {
        let state = step.state.as_ref().ok_or_else(|| {
            Error::Schema("rollout steps carry no state; trace CSV needs a state-space model".into())
        })?;
        w.write_record([
            step.replicate.to_string(),
            step.t.to_string(),
            state.project(0..2).to_string(),
            state.project(2..4).to_string(),
            step.observation.to_string(),
            step.action.to_string(),
            step.cost.to_string(),
        ])
        .map_err(csv_error)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .map_err(|e| Error::Schema(format!("trace is not UTF-8: {e}")))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Schema(format!("failed to render CSV: {e}"))
}

#[cfg(test)]
mod tests;
