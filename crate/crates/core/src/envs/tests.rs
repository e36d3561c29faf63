use super::*;
use crate::dp::{simulate_rollouts, solve_abstraction_dp, solve_terminal_dp};
use crate::model::EnumerationOptions;

fn strip_config(horizon: usize) -> GridEnvConfig {
    GridEnvConfig {
        horizon,
        obstacles: Vec::new(),
        initial_agent: (0, 2),
        initial_observation: None,
        initial_true: None,
        quantized_cells: Vec::new(),
        replicates: 8,
        seed: 7,
    }
}

fn reduced_pursuit_config(horizon: usize) -> GridEnvConfig {
    GridEnvConfig {
        horizon,
        obstacles: vec![(0, 0), (1, 1)],
        initial_agent: (0, 2),
        initial_observation: None,
        initial_true: None,
        quantized_cells: Vec::new(),
        replicates: 8,
        seed: 7,
    }
}

fn open_grid(half: i64) -> FinitePointSet {
    FinitePointSet::new(
        (-half..=half).flat_map(|x| (-half..=half).map(move |y| Point::int(&[x, y]))),
    )
}

#[test]
fn clip_move_frozen_examples() {
    let free = open_grid(4);
    assert_eq!(
        clip_move(&Point::int(&[0, 0]), &Point::int(&[0, 0]), &free),
        Point::int(&[0, 0])
    );
    // A move off the agent rows leaves the agent in place.
    let agents = WallGrid::full().agent_cells();
    assert_eq!(
        clip_move(&Point::int(&[2, 2]), &Point::int(&[1, 0]), &agents),
        Point::int(&[2, 2])
    );
    // A move into an obstacle leaves the mover in place.
    let with_hole = FinitePointSet::new(
        open_grid(4)
            .iter()
            .filter(|p| **p != Point::int(&[1, 0]))
            .cloned(),
    );
    assert_eq!(
        clip_move(&Point::int(&[0, 0]), &Point::int(&[1, 0]), &with_hole),
        Point::int(&[0, 0])
    );
}

#[test]
fn wall_step_damage_clipping() {
    let grid = WallGrid::full();
    let stay = Point::int(&[0, 0]);
    // Full damage stays full under another hit.
    let s = WallDefenseState {
        agent: (2, 2),
        attacker: (0, -1),
        damage: vec![0, 0, 3, 0, 0],
    };
    assert_eq!(wall_step(&grid, &s, &stay, &stay).damage, vec![0, 0, 3, 0, 0]);
    // Zero damage stays zero under another repair.
    let s = WallDefenseState {
        agent: (0, 1),
        attacker: (2, -2),
        damage: vec![0; 5],
    };
    assert_eq!(wall_step(&grid, &s, &stay, &stay).damage, vec![0; 5]);
    // A simultaneous hit and repair cancel.
    let s = WallDefenseState {
        agent: (0, 1),
        attacker: (0, -1),
        damage: vec![0, 0, 1, 0, 0],
    };
    assert_eq!(wall_step(&grid, &s, &stay, &stay).damage, vec![0, 0, 1, 0, 0]);
}

#[test]
fn wall_cost_sums_damage() {
    assert_eq!(wall_cost(&[0; 5]), 0.0);
    assert_eq!(wall_cost(&[3; 5]), 15.0);
    assert_eq!(wall_cost(&[1, 0, 2, 0, 0]), 3.0);
}

#[test]
fn wall_observation_clips_into_attacker_rows() {
    let sys = wall_defense_strip(&strip_config(1)).unwrap();
    let ss = sys.state_space().unwrap();
    let state = |attacker: (i64, i64)| {
        WallDefenseState {
            agent: (0, 2),
            attacker,
            damage: vec![0; 3],
        }
        .to_point()
    };
    let up = Point::int(&[0, 1]);
    // Shifting a front-row attacker up leaves the feasible rows, so the
    // observation stays put; a back-row attacker is seen one row up.
    let y = ss.observe(0, &state((0, -1)), &up).unwrap();
    assert_eq!(y.project(y.dims() - 2..y.dims()), Point::int(&[0, -1]));
    let y = ss.observe(0, &state((0, -2)), &up).unwrap();
    assert_eq!(y.project(y.dims() - 2..y.dims()), Point::int(&[0, -1]));
    // The exactly observed block is the agent cell and the damage.
    assert_eq!(y.project(0..2), Point::int(&[0, 2]));
    assert_eq!(y.project(2..5), Point::int(&[0, 0, 0]));
}

#[test]
fn wall_reachable_sets_stay_within_bounds() {
    let sys = wall_defense_strip(&strip_config(3)).unwrap();
    let ss = sys.state_space().unwrap();
    assert_eq!(ss.states(0).len(), 6); // unknown attacker, everything else pinned
    let grid = WallGrid::strip();
    for t in 0..=3 {
        for x in ss.states(t) {
            let s = WallDefenseState::from_point(x, &grid).unwrap();
            assert!(grid.agent_cells().contains(&Point::int(&[s.agent.0, s.agent.1])));
            assert!(grid
                .attacker_cells()
                .contains(&Point::int(&[s.attacker.0, s.attacker.1])));
            assert!(s.damage.iter().all(|&d| d <= 3), "damage out of range in {x}");
        }
    }
    // Damage can actually accumulate: some state at t=3 has a damaged column.
    assert!(ss
        .states(3)
        .iter()
        .any(|x| (4..x.dims()).any(|i| x.coord(i) > 0.0)));
}

#[test]
fn wall_initial_observations_cover_attacker_cells() {
    let sys = wall_defense(&strip_config(1)).unwrap();
    let observed: FinitePointSet = sys
        .observations(0)
        .map(|y| y.project(y.dims() - 2..y.dims()));
    assert_eq!(observed, WallGrid::full().attacker_cells());
}

#[test]
fn default_quantized_cells_cover_at_resolution_one() {
    for (grid, centers) in [(WallGrid::full(), 6), (WallGrid::strip(), 2)] {
        let cfg = strip_config(1);
        let q = wall_quantized_grid(&cfg, &grid).unwrap();
        assert_eq!(q.gamma(), 1.0);
        assert_eq!(q.points().len(), centers);
    }
}

#[test]
fn composite_state_shrinks_the_realization_space() {
    let mut cfg = strip_config(2);
    cfg.initial_observation = Some((0, -2));
    let sys = wall_defense_strip(&cfg).unwrap();
    let y0 = initial_observation_point(&sys, (0, -2)).unwrap();
    let opts = EnumerationOptions::with_initial_observation(y0);
    let exact = wall_exact_compressor(&WallGrid::strip())
        .build(&sys, &opts)
        .unwrap();
    let approx = wall_composite_compressor(&cfg, &WallGrid::strip())
        .unwrap()
        .build(&sys, &opts)
        .unwrap();
    assert!(
        approx.realization_count() < exact.realization_count(),
        "approx {} vs exact {}",
        approx.realization_count(),
        exact.realization_count()
    );
    let (te, _) = solve_abstraction_dp(&sys, exact).unwrap();
    let (ta, _) = solve_abstraction_dp(&sys, approx).unwrap();
    // The approximation pools histories, so its value can only be larger.
    assert!(ta.initial_value() >= te.initial_value() - 1e-9);
}

#[test]
fn pursuit_step_frozen_examples() {
    let free = open_grid(4);
    let stay = Point::int(&[0, 0]);
    let s = PursuitState {
        agent: (0, 2),
        target: (3, -4),
    };
    assert_eq!(pursuit_step(&s, &stay, &stay, &free), s);
    // The target pressed against the boundary cannot leave the grid.
    let down = Point::int(&[0, -1]);
    assert_eq!(pursuit_step(&s, &stay, &down, &free).target, (3, -4));
    // The agent moves freely into a free cell.
    let right = Point::int(&[1, 0]);
    assert_eq!(pursuit_step(&s, &right, &stay, &free).agent, (1, 2));
}

#[test]
fn terminal_cost_is_shortest_path_distance() {
    let free = open_grid(4);
    let a = Point::int(&[0, 0]);
    assert_eq!(pursuit_terminal_cost(&a, &a, &free).unwrap(), 0.0);
    assert_eq!(
        pursuit_terminal_cost(&a, &Point::int(&[0, 1]), &free).unwrap(),
        1.0
    );
    assert_eq!(
        pursuit_terminal_cost(&a, &Point::int(&[2, 3]), &free).unwrap(),
        5.0
    );
    // Obstacles force a detour.
    let ring = FinitePointSet::new(
        open_grid(1)
            .iter()
            .filter(|p| **p != Point::int(&[0, 0]))
            .cloned(),
    );
    assert_eq!(
        pursuit_terminal_cost(&Point::int(&[-1, 0]), &Point::int(&[1, 0]), &ring).unwrap(),
        4.0
    );
}

#[test]
fn terminal_cost_is_a_metric_on_the_reduced_layout() {
    let cfg = reduced_pursuit_config(2);
    let free = FinitePointSet::new(
        (-2..=2)
            .flat_map(|x| (-2..=2).map(move |y| (x, y)))
            .filter(|c| !cfg.obstacles.contains(c))
            .map(|c| Point::int(&[c.0, c.1])),
    );
    let metric = Metric::ShortestPath(ShortestPathMetric::new(free.clone()).unwrap());
    metric.check_axioms(&free, 1e-12).unwrap();
}

#[test]
fn pursuit_final_time_has_no_choice_and_no_noise() {
    let cfg = reduced_pursuit_config(2);
    let sys = pursuit_evasion_reduced(&cfg).unwrap();
    let ss = sys.state_space().unwrap();
    assert_eq!(ss.actions(2).len(), 1);
    assert_eq!(ss.noises(2).len(), 1);
    for x in ss.states(2) {
        let y = ss.observe(2, x, &Point::int(&[0, 0])).unwrap();
        assert_eq!(y.project(2..4), x.project(2..4));
    }
    // Intermediate stage costs vanish; the terminal cost is the distance.
    let xi = 0u32;
    assert_eq!(ss.cost_value(0, xi, 0), 0.0);
}

#[test]
fn obstacles_and_initial_cells_are_validated() {
    let mut cfg = reduced_pursuit_config(1);
    cfg.obstacles = vec![(9, 0)];
    assert!(matches!(
        pursuit_evasion_reduced(&cfg),
        Err(Error::Schema(_))
    ));
    let mut cfg = reduced_pursuit_config(1);
    cfg.initial_agent = (0, 0); // an obstacle in this layout
    assert!(matches!(
        pursuit_evasion_reduced(&cfg),
        Err(Error::Schema(_))
    ));
    let mut cfg = strip_config(1);
    cfg.initial_agent = (0, -1); // an attacker cell, not an agent cell
    assert!(matches!(wall_defense_strip(&cfg), Err(Error::Schema(_))));
    let mut cfg = strip_config(1);
    cfg.initial_true = Some((0, 2)); // an agent cell, not an attacker cell
    assert!(matches!(wall_defense_strip(&cfg), Err(Error::Schema(_))));
}

#[test]
fn known_initial_target_pins_the_initial_set() {
    let mut cfg = reduced_pursuit_config(1);
    cfg.initial_true = Some((2, 2));
    let sys = pursuit_evasion_reduced(&cfg).unwrap();
    assert_eq!(sys.state_space().unwrap().states(0).len(), 1);
}

#[test]
fn config_json_round_trip_and_validation() {
    let cfg = reduced_pursuit_config(3);
    let json = serde_json::to_string(&cfg).unwrap();
    assert_eq!(GridEnvConfig::from_json(&json).unwrap(), cfg);

    let minimal = r#"{"horizon": 2, "initial_agent": [0, 2]}"#;
    let parsed = GridEnvConfig::from_json(minimal).unwrap();
    assert_eq!(parsed.replicates, 100);
    assert!(parsed.obstacles.is_empty());

    let conflicting = r#"{
        "horizon": 2,
        "initial_agent": [0, 2],
        "initial_observation": [0, -1],
        "initial_true": [0, -2]
    }"#;
    assert!(matches!(
        GridEnvConfig::from_json(conflicting),
        Err(Error::Schema(_))
    ));
    assert!(GridEnvConfig::from_json(r#"{"horizon": 2, "initial_agent": [0, 2], "typo": 1}"#).is_err());
}

#[test]
fn initial_observation_points_resolve_uniquely() {
    let sys = wall_defense_strip(&strip_config(1)).unwrap();
    let y0 = initial_observation_point(&sys, (0, -1)).unwrap();
    assert_eq!(y0, Point::int(&[0, 2, 0, 0, 0, 0, -1]));
    assert!(matches!(
        initial_observation_point(&sys, (4, -1)),
        Err(Error::InfeasibleObservation { .. })
    ));
}

#[test]
fn rollout_traces_render_as_csv() {
    let cfg = reduced_pursuit_config(2);
    let sys = pursuit_evasion_reduced(&cfg).unwrap();
    let (_, strategy) = solve_terminal_dp(&sys, &EnumerationOptions::default()).unwrap();
    let report = simulate_rollouts(&sys, &strategy, 4, cfg.seed).unwrap();
    let csv = rollout_trace_csv(&report).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "replicate,t,agent,opponent,observation,action,stage_cost"
    );
    assert_eq!(csv.lines().count(), 1 + 4 * 3);
    // Cells render as quoted tuples.
    assert!(csv.contains("\"(0,2)\""), "{csv}");
}
