//! JSON persistence for state-space models.
//!
//! The document lists the finite sets explicitly and the defining maps as
//! entry tables, one table per time step. Two shorthands cover the common
//! cases: `"observation": "identity"` reads the state directly (ignoring
//! noise) and `"cost": "zero"` makes every stage free. Loading validates
//! totality: each table must define exactly one entry per input combination.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::point::Point;
use crate::set::FinitePointSet;

use super::{Criterion, StateSpaceBuilder, SystemModel};

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    criterion: Criterion,
    horizon: usize,
    /// `X_t` for `t = 0..=T`.
    states: Vec<FinitePointSet>,
    /// `U_t` for `t = 0..=T`.
    actions: Vec<FinitePointSet>,
    /// `W_t` for `t = 0..T-1`.
    disturbances: Vec<FinitePointSet>,
    /// `N_t` for `t = 0..=T`.
    noises: Vec<FinitePointSet>,
    /// One table per `t = 0..T-1`.
    dynamics: Vec<Vec<DynEntry>>,
    observation: ObservationRule,
    cost: CostRule,
    state_metric: Metric,
    observation_metric: Metric,
    action_metric: Metric,
}

#[derive(Serialize, Deserialize)]
struct DynEntry {
    x: Point,
    u: Point,
    w: Point,
    next: Point,
}

#[derive(Serialize, Deserialize)]
struct ObsEntry {
    x: Point,
    n: Point,
    y: Point,
}

#[derive(Serialize, Deserialize)]
struct CostEntry {
    x: Point,
    u: Point,
    c: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ObservationRule {
    Named(NamedObservation),
    Table(Vec<Vec<ObsEntry>>),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum NamedObservation {
    /// `y_t = x_t`, ignoring the noise.
    Identity,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CostRule {
    Named(NamedCost),
    Table(Vec<Vec<CostEntry>>),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum NamedCost {
    /// `c_t = 0` everywhere.
    Zero,
}

type Table2 = Vec<BTreeMap<(Point, Point), Point>>;
type Table3 = Vec<BTreeMap<(Point, Point, Point), Point>>;
type CostTable = Vec<BTreeMap<(Point, Point), f64>>;

/// Parses a model from its JSON text.
pub fn load_model(json: &str) -> Result<SystemModel> {
    let doc: ModelDoc = serde_json::from_str(json)?;
    build_from_doc(doc)
}

/// Loads a model from a JSON file.
pub fn load_model_file(path: impl AsRef<Path>) -> Result<SystemModel> {
    load_model(&fs::read_to_string(path)?)
}

/// Writes a state-space model back out as an explicit-table JSON document.
pub fn save_model_file(sys: &SystemModel, path: impl AsRef<Path>) -> Result<()> {
    let ss = sys.state_space()?;
    let horizon = ss.horizon();

    let mut dynamics = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut table = Vec::new();
        for x in ss.states(t) {
            for u in ss.actions(t) {
                for w in ss.disturbances(t) {
                    table.push(DynEntry {
                        x: x.clone(),
                        u: u.clone(),
                        w: w.clone(),
                        next: ss.step(t, x, u, w)?,
                    });
                }
            }
        }
        dynamics.push(table);
    }

    let mut observation = Vec::with_capacity(horizon + 1);
    let mut cost = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let mut obs_table = Vec::new();
        for x in ss.states(t) {
            for n in ss.noises(t) {
                obs_table.push(ObsEntry {
                    x: x.clone(),
                    n: n.clone(),
                    y: ss.observe(t, x, n)?,
                });
            }
        }
        observation.push(obs_table);
        let mut cost_table = Vec::new();
        for x in ss.states(t) {
            for u in ss.actions(t) {
                cost_table.push(CostEntry {
                    x: x.clone(),
                    u: u.clone(),
                    c: ss.stage_cost(t, x, u)?,
                });
            }
        }
        cost.push(cost_table);
    }

    let doc = ModelDoc {
        criterion: sys.criterion(),
        horizon,
        states: (0..=horizon).map(|t| ss.states(t).clone()).collect(),
        actions: (0..=horizon).map(|t| ss.actions(t).clone()).collect(),
        disturbances: (0..horizon).map(|t| ss.disturbances(t).clone()).collect(),
        noises: (0..=horizon).map(|t| ss.noises(t).clone()).collect(),
        dynamics,
        observation: ObservationRule::Table(observation),
        cost: CostRule::Table(cost),
        state_metric: ss.state_metric().clone(),
        observation_metric: ss.observation_metric().clone(),
        action_metric: ss.action_metric().clone(),
    };
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn build_from_doc(doc: ModelDoc) -> Result<SystemModel> {
    let horizon = doc.horizon;
    for (name, len, want) in [
        ("states", doc.states.len(), horizon + 1),
        ("actions", doc.actions.len(), horizon + 1),
        ("noises", doc.noises.len(), horizon + 1),
        ("disturbances", doc.disturbances.len(), horizon),
        ("dynamics", doc.dynamics.len(), horizon),
    ] {
        if len != want {
            return Err(Error::Schema(format!(
                "{name} must list {want} entries for horizon {horizon}, got {len}"
            )));
        }
    }

    let dyn_maps = index_dynamics(&doc)?;
    let obs_maps = index_observation(&doc)?;
    let cost_maps = index_cost(&doc)?;

    StateSpaceBuilder {
        horizon,
        criterion: doc.criterion,
        states: doc.states,
        actions: doc.actions,
        disturbances: doc.disturbances,
        noises: doc.noises,
        state_metric: doc.state_metric,
        observation_metric: doc.observation_metric,
        action_metric: doc.action_metric,
    }
    .build(
        move |t, x, u, w| {
            dyn_maps[t][&(x.clone(), u.clone(), w.clone())].clone()
        },
        move |t, x, n| match &obs_maps {
            None => x.clone(),
            Some(maps) => maps[t][&(x.clone(), n.clone())].clone(),
        },
        move |t, x, u| match &cost_maps {
            None => 0.0,
            Some(maps) => maps[t][&(x.clone(), u.clone())],
        },
    )
}

/// Checks that a table defines each expected key exactly once and nothing
/// else, then returns it as a lookup map.
fn index_entries<K: Ord + Clone, V: PartialEq>(
    what: &str,
    t: usize,
    entries: Vec<(K, V)>,
    expected: impl Iterator<Item = K> + Clone,
    describe: impl Fn(&K) -> String,
) -> Result<BTreeMap<K, V>> {
    let mut map = BTreeMap::new();
    for (k, v) in entries {
        if let Some(prev) = map.get(&k) {
            if *prev != v {
                return Err(Error::Schema(format!(
                    "{what} table at t={t} has conflicting entries for {}",
                    describe(&k)
                )));
            }
        }
        map.insert(k, v);
    }
    let mut count = 0usize;
    for k in expected.clone() {
        count += 1;
        if !map.contains_key(&k) {
            return Err(Error::Schema(format!(
                "{what} table at t={t} is missing an entry for {}",
                describe(&k)
            )));
        }
    }
    if map.len() != count {
        return Err(Error::Schema(format!(
            "{what} table at t={t} has entries outside the declared sets"
        )));
    }
    Ok(map)
}

fn index_dynamics(doc: &ModelDoc) -> Result<Table3> {
    let mut maps = Vec::with_capacity(doc.horizon);
    for (t, table) in doc.dynamics.iter().enumerate() {
        let entries = table
            .iter()
            .map(|e| ((e.x.clone(), e.u.clone(), e.w.clone()), e.next.clone()))
            .collect();
        let expected = doc.states[t].points().iter().flat_map(|x| {
            doc.actions[t].points().iter().flat_map(move |u| {
                doc.disturbances[t]
                    .points()
                    .iter()
                    .map(move |w| (x.clone(), u.clone(), w.clone()))
            })
        });
        maps.push(index_entries(
            "dynamics",
            t,
            entries,
            expected,
            |(x, u, w)| format!("(x={x}, u={u}, w={w})"),
        )?);
    }
    Ok(maps)
}

fn index_observation(doc: &ModelDoc) -> Result<Option<Table2>> {
    let tables = match &doc.observation {
        ObservationRule::Named(NamedObservation::Identity) => return Ok(None),
        ObservationRule::Table(tables) => tables,
    };
    if tables.len() != doc.horizon + 1 {
        return Err(Error::Schema(format!(
            "observation must list {} tables (one per time), got {}",
            doc.horizon + 1,
            tables.len()
        )));
    }
    let mut maps = Vec::with_capacity(tables.len());
    for (t, table) in tables.iter().enumerate() {
        let entries = table
            .iter()
            .map(|e| ((e.x.clone(), e.n.clone()), e.y.clone()))
            .collect();
        let expected = doc.states[t].points().iter().flat_map(|x| {
            doc.noises[t]
                .points()
                .iter()
                .map(move |n| (x.clone(), n.clone()))
        });
        maps.push(index_entries(
            "observation",
            t,
            entries,
            expected,
            |(x, n)| format!("(x={x}, n={n})"),
        )?);
    }
    Ok(Some(maps))
}

fn index_cost(doc: &ModelDoc) -> Result<Option<CostTable>> {
    let tables = match &doc.cost {
        CostRule::Named(NamedCost::Zero) => return Ok(None),
        CostRule::Table(tables) => tables,
    };
    if tables.len() != doc.horizon + 1 {
        return Err(Error::Schema(format!(
            "cost must list {} tables (one per time), got {}",
            doc.horizon + 1,
            tables.len()
        )));
    }
    let mut maps = Vec::with_capacity(tables.len());
    for (t, table) in tables.iter().enumerate() {
        let entries = table
            .iter()
            .map(|e| ((e.x.clone(), e.u.clone()), e.c))
            .collect();
        let expected = doc.states[t].points().iter().flat_map(|x| {
            doc.actions[t]
                .points()
                .iter()
                .map(move |u| (x.clone(), u.clone()))
        });
        maps.push(index_entries("cost", t, entries, expected, |(x, u)| {
            format!("(x={x}, u={u})")
        })?);
    }
    Ok(Some(maps))
}
