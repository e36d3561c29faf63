use std::collections::BTreeSet;

use crate::error::Error;
use crate::metric::Metric;
use crate::point::Point;
use crate::set::FinitePointSet;

use super::*;

fn set_1d(vals: &[i64]) -> FinitePointSet {
    FinitePointSet::new(vals.iter().map(|&v| Point::int(&[v])))
}

/// Two-state toggle with a saturating noisy readout:
/// `x' = (x + u + w) mod 2`, `y = min(x + n, 1)`, `c = x + u`,
/// all of `x, u, w, n` binary.
///
/// Hand-computed conditional ranges: `y = 0` pins the state to `{0}`, while
/// `y = 1` is consistent with both states; since the free disturbance can
/// always toggle, every successor support before filtering is `{0, 1}`.
fn toggle_model(horizon: usize) -> SystemModel {
    let bits = set_1d(&[0, 1]);
    StateSpaceBuilder {
        horizon,
        criterion: Criterion::Instantaneous,
        states: vec![bits.clone(); horizon + 1],
        actions: vec![bits.clone(); horizon + 1],
        disturbances: vec![bits.clone(); horizon],
        noises: vec![bits.clone(); horizon + 1],
        state_metric: Metric::Manhattan,
        observation_metric: Metric::Manhattan,
        action_metric: Metric::Manhattan,
    }
    .build(
        |_, x, u, w| Point::scalar((x.coord(0) + u.coord(0) + w.coord(0)) % 2.0),
        |_, x, n| Point::scalar((x.coord(0) + n.coord(0)).min(1.0)),
        |_, x, u| x.coord(0) + u.coord(0),
    )
    .unwrap()
}

/// Noise-free identity readout with frozen dynamics `x' = x`.
fn frozen_identity_model() -> SystemModel {
    let bits = set_1d(&[0, 1]);
    let zero = set_1d(&[0]);
    StateSpaceBuilder {
        horizon: 1,
        criterion: Criterion::Instantaneous,
        states: vec![bits.clone(); 2],
        actions: vec![zero.clone(); 2],
        disturbances: vec![zero.clone()],
        noises: vec![zero.clone(); 2],
        state_metric: Metric::Manhattan,
        observation_metric: Metric::Manhattan,
        action_metric: Metric::Manhattan,
    }
    .build(|_, x, _, _| x.clone(), |_, x, _| x.clone(), |_, _, _| 0.0)
    .unwrap()
}

#[test]
fn filter_frozen_supports() {
    let sys = toggle_model(2);

    let p = range_filter_init(&sys, &Point::scalar(0.0)).unwrap();
    assert_eq!(p.support, set_1d(&[0]));
    let p = range_filter_update(&sys, &p, &Point::scalar(0.0), &Point::scalar(0.0)).unwrap();
    assert_eq!(p.support, set_1d(&[0]));
    assert_eq!(p.t, 1);

    let p = range_filter_init(&sys, &Point::scalar(1.0)).unwrap();
    assert_eq!(p.support, set_1d(&[0, 1]));
    let p = range_filter_update(&sys, &p, &Point::scalar(1.0), &Point::scalar(1.0)).unwrap();
    assert_eq!(p.support, set_1d(&[0, 1]));
}

#[test]
fn filter_rejects_bad_observations() {
    let sys = frozen_identity_model();

    match range_filter_init(&sys, &Point::scalar(5.0)) {
        Err(Error::OutOfRangeObservation { t: 0, .. }) => {}
        other => panic!("expected out-of-range observation, got {other:?}"),
    }

    let p = range_filter_init(&sys, &Point::scalar(0.0)).unwrap();
    match range_filter_update(&sys, &p, &Point::scalar(0.0), &Point::scalar(1.0)) {
        Err(Error::InfeasibleObservation { t: 1, .. }) => {}
        other => panic!("expected infeasible observation, got {other:?}"),
    }

    let p = range_filter_update(&sys, &p, &Point::scalar(0.0), &Point::scalar(0.0)).unwrap();
    match range_filter_update(&sys, &p, &Point::scalar(0.0), &Point::scalar(0.0)) {
        Err(Error::Schema(_)) => {}
        other => panic!("expected horizon error, got {other:?}"),
    }
}

#[test]
fn memory_tree_level_sizes() {
    let sys = toggle_model(2);
    let tree = build_memory_tree(&sys, &EnumerationOptions::default()).unwrap();
    assert_eq!(tree.depth(), 2);
    // 2 initial observations; every (action, observation) pair is reachable
    // afterwards, so each node has 4 children.
    assert_eq!(tree.level(0).len(), 2);
    assert_eq!(tree.level(1).len(), 8);
    assert_eq!(tree.level(2).len(), 32);
    assert_eq!(tree.node_count(), 42);
}

#[test]
fn tree_supports_match_filter() {
    let sys = toggle_model(2);
    let tree = build_memory_tree(&sys, &EnumerationOptions::default()).unwrap();
    for t in 0..=2 {
        for (i, node) in tree.level(t).iter().enumerate() {
            let p = RangeState::from_memory(&sys, &node.memory).unwrap();
            assert_eq!(p.t, t);
            assert_eq!(p.support, tree.support_set(&sys, t, i as u32).unwrap());
        }
    }
}

#[test]
fn cost_carriers_agree() {
    let sys = toggle_model(2);
    let tree = build_memory_tree(&sys, &EnumerationOptions::default()).unwrap();
    for t in 0..=2 {
        for (i, node) in tree.level(t).iter().enumerate() {
            let p = RangeState::from_memory(&sys, &node.memory).unwrap();
            for (ui, u) in sys.actions(t).iter().enumerate() {
                let via_memory =
                    worst_case_stage_cost(&sys, CostCarrier::Memory(&node.memory), u).unwrap();
                let via_range =
                    worst_case_stage_cost(&sys, CostCarrier::Range(&p), u).unwrap();
                let via_set = worst_case_stage_cost(
                    &sys,
                    CostCarrier::Set {
                        t,
                        support: &p.support,
                    },
                    u,
                )
                .unwrap();
                let via_tree = tree.cost_sup(&sys, t, i as u32, ui as u32);
                assert_eq!(via_memory, via_range);
                assert_eq!(via_memory, via_set);
                assert_eq!(via_memory, via_tree);
            }
        }
    }

    // Frozen values: y0 = 1 leaves both states possible, so the worst stage
    // cost of action u is 1 + u.
    let m = Memory::initial(Point::scalar(1.0));
    for u in 0..=1 {
        let c = worst_case_stage_cost(&sys, CostCarrier::Memory(&m), &Point::scalar(u as f64))
            .unwrap();
        assert_eq!(c, 1.0 + u as f64);
    }
}

#[test]
fn io_view_agrees_with_filter() {
    let sys = toggle_model(2);
    let io_sys = sys.io_view().unwrap();
    let opts = EnumerationOptions::default();

    for t in 0..=2 {
        let via_state: BTreeSet<Memory> =
            enumerate_reachable_memories(&sys, t, &opts).unwrap().into_iter().collect();
        let via_io: BTreeSet<Memory> =
            enumerate_reachable_memories(&io_sys, t, &opts).unwrap().into_iter().collect();
        assert_eq!(via_state, via_io);

        for m in &via_state {
            for u in sys.actions(t) {
                let a = worst_case_stage_cost(&sys, CostCarrier::Memory(m), u).unwrap();
                let b = worst_case_stage_cost(&io_sys, CostCarrier::Memory(m), u).unwrap();
                assert_eq!(a, b, "memory {m}, action {u}");
            }
        }
    }
}

#[test]
fn initial_observation_restricts_roots() {
    let sys = toggle_model(2);
    let opts = EnumerationOptions::with_initial_observation(Point::scalar(0.0));
    let memories = enumerate_reachable_memories(&sys, 1, &opts).unwrap();
    assert_eq!(memories.len(), 4);
    assert!(memories
        .iter()
        .all(|m| m.observations()[0] == Point::scalar(0.0)));

    let bad = EnumerationOptions::with_initial_observation(Point::scalar(9.0));
    match enumerate_reachable_memories(&sys, 1, &bad) {
        Err(Error::OutOfRangeObservation { t: 0, .. }) => {}
        other => panic!("expected out-of-range observation, got {other:?}"),
    }
}

#[test]
fn node_budget_is_enforced() {
    let sys = toggle_model(2);
    match build_memory_tree(&sys, &EnumerationOptions::with_budget(3)) {
        Err(Error::ModelTooLarge { budget: 3, .. }) => {}
        other => panic!("expected budget error, got {other:?}"),
    }
}

#[test]
fn enumeration_depth_is_checked() {
    let sys = toggle_model(1);
    match enumerate_reachable_memories(&sys, 2, &EnumerationOptions::default()) {
        Err(Error::Schema(_)) => {}
        other => panic!("expected depth error, got {other:?}"),
    }
}

#[test]
fn io_model_with_constant_observation() {
    let sys = IoModelBuilder {
        horizon: 1,
        criterion: Criterion::Instantaneous,
        disturbances: vec![set_1d(&[0, 1]), set_1d(&[0])],
        actions: vec![set_1d(&[0, 1]); 2],
        observations: vec![set_1d(&[7]); 2],
        observation_metric: Metric::Manhattan,
        action_metric: Metric::Manhattan,
    }
    .build(
        |_, _, _| Point::scalar(7.0),
        |t, w, u| w[0].coord(0) + u[t].coord(0),
    )
    .unwrap();

    // A constant readout never reveals anything: memories are exactly the
    // action histories.
    assert_eq!(
        enumerate_reachable_memories(&sys, 0, &EnumerationOptions::default())
            .unwrap()
            .len(),
        1
    );
    let memories = enumerate_reachable_memories(&sys, 1, &EnumerationOptions::default()).unwrap();
    assert_eq!(memories.len(), 2);

    for m in &memories {
        let c =
            worst_case_stage_cost(&sys, CostCarrier::Memory(m), &Point::scalar(1.0)).unwrap();
        assert_eq!(c, 2.0);
    }
}

#[test]
fn io_observation_outside_declared_set_is_reported() {
    let sys = IoModelBuilder {
        horizon: 1,
        criterion: Criterion::Instantaneous,
        disturbances: vec![set_1d(&[0, 1]); 2],
        actions: vec![set_1d(&[0]); 2],
        observations: vec![set_1d(&[0]); 2],
        observation_metric: Metric::Manhattan,
        action_metric: Metric::Manhattan,
    }
    .build(|_, w, _| w[0].clone(), |_, _, _| 0.0)
    .unwrap();

    match build_memory_tree(&sys, &EnumerationOptions::default()) {
        Err(Error::GeneratorIncomplete(msg)) => {
            assert!(msg.contains("observation"), "unexpected message: {msg}")
        }
        other => panic!("expected generator error, got {other:?}"),
    }
}

#[test]
fn memory_prefix_truncates() {
    let m = Memory::initial(Point::scalar(0.0))
        .extend(Point::scalar(1.0), Point::scalar(0.0))
        .extend(Point::scalar(0.0), Point::scalar(1.0));
    assert_eq!(m.time(), 2);
    let p = m.prefix(1);
    assert_eq!(p.time(), 1);
    assert_eq!(p.observations().len(), 2);
    assert_eq!(p.actions().len(), 1);
    assert_eq!(m.prefix(2), m);
    assert_eq!(m.to_string(), "y=[(0) (0) (1)] u=[(1) (0)]");
}

#[test]
fn model_json_round_trip() {
    let sys = toggle_model(2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model_file(&sys, &path).unwrap();
    let back = load_model_file(&path).unwrap();

    assert_eq!(back.criterion(), sys.criterion());
    assert_eq!(back.horizon(), sys.horizon());
    let (a, b) = (sys.state_space().unwrap(), back.state_space().unwrap());
    for t in 0..=2 {
        assert_eq!(a.states(t), b.states(t));
        assert_eq!(a.actions(t), b.actions(t));
        assert_eq!(a.noises(t), b.noises(t));
        assert_eq!(a.observations(t), b.observations(t));
        for x in a.states(t) {
            for u in a.actions(t) {
                assert_eq!(a.stage_cost(t, x, u).unwrap(), b.stage_cost(t, x, u).unwrap());
                if t < 2 {
                    for w in a.disturbances(t) {
                        assert_eq!(a.step(t, x, u, w).unwrap(), b.step(t, x, u, w).unwrap());
                    }
                }
            }
            for n in a.noises(t) {
                assert_eq!(a.observe(t, x, n).unwrap(), b.observe(t, x, n).unwrap());
            }
        }
    }
}

fn tiny_doc(dynamics: &str) -> String {
    format!(
        r#"{{
  "criterion": "instantaneous",
  "horizon": 1,
  "states": [[[0],[1]],[[0],[1]]],
  "actions": [[[0]],[[0]]],
  "disturbances": [[[0]]],
  "noises": [[[0]],[[0]]],
  "dynamics": [[{dynamics}]],
  "observation": "identity",
  "cost": "zero",
  "state_metric": {{"kind":"manhattan"}},
  "observation_metric": {{"kind":"manhattan"}},
  "action_metric": {{"kind":"manhattan"}}
}}"#
    )
}

#[test]
fn named_rules_expand() {
    let json = tiny_doc(
        r#"{"x":[0],"u":[0],"w":[0],"next":[0]},{"x":[1],"u":[0],"w":[0],"next":[1]}"#,
    );
    let sys = load_model(&json).unwrap();
    let ss = sys.state_space().unwrap();
    // Identity observations read the state; zero costs are free everywhere.
    assert_eq!(ss.observations(0), ss.states(0));
    assert_eq!(
        ss.observe(0, &Point::scalar(1.0), &Point::scalar(0.0)).unwrap(),
        Point::scalar(1.0)
    );
    assert_eq!(
        ss.stage_cost(1, &Point::scalar(1.0), &Point::scalar(0.0)).unwrap(),
        0.0
    );
}

#[test]
fn schema_validates_table_totality() {
    let missing = tiny_doc(r#"{"x":[0],"u":[0],"w":[0],"next":[0]}"#);
    match load_model(&missing) {
        Err(Error::Schema(msg)) => assert!(msg.contains("missing an entry"), "{msg}"),
        other => panic!("expected schema error, got {other:?}"),
    }

    let conflicting = tiny_doc(
        r#"{"x":[0],"u":[0],"w":[0],"next":[0]},
           {"x":[0],"u":[0],"w":[0],"next":[1]},
           {"x":[1],"u":[0],"w":[0],"next":[1]}"#,
    );
    match load_model(&conflicting) {
        Err(Error::Schema(msg)) => assert!(msg.contains("conflicting"), "{msg}"),
        other => panic!("expected schema error, got {other:?}"),
    }

    let extra = tiny_doc(
        r#"{"x":[0],"u":[0],"w":[0],"next":[0]},
           {"x":[1],"u":[0],"w":[0],"next":[1]},
           {"x":[5],"u":[0],"w":[0],"next":[0]}"#,
    );
    match load_model(&extra) {
        Err(Error::Schema(msg)) => assert!(msg.contains("outside the declared sets"), "{msg}"),
        other => panic!("expected schema error, got {other:?}"),
    }

    let escaping = tiny_doc(
        r#"{"x":[0],"u":[0],"w":[0],"next":[9]},{"x":[1],"u":[0],"w":[0],"next":[1]}"#,
    );
    match load_model(&escaping) {
        Err(Error::GeneratorIncomplete(msg)) => assert!(msg.contains("dynamics"), "{msg}"),
        other => panic!("expected generator error, got {other:?}"),
    }
}
