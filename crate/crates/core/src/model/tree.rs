//! Exhaustive enumeration of reachable memories.
//!
//! The tree has one level per time step; a node is a reachable memory
//! together with everything needed to answer conditional-range queries about
//! it: for state-space models the set of consistent current states, for
//! input-output models the set of consistent disturbance prefixes. Children
//! are keyed by (action index, next observation index), so the tree is also
//! the transition structure of the memory-level dynamic program.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::point::Point;
use crate::set::FinitePointSet;

use super::{EnumerationOptions, IoModel, Memory, SystemModel};

/// Consistent-history bookkeeping for one reachable memory.
#[derive(Clone, Debug)]
pub enum NodeSupport {
    /// State-space form: consistent current states, as sorted indices into
    /// the state set of the node's level.
    States(Vec<u32>),
    /// Input-output form: consistent disturbance prefixes `w_{0:t}`, each a
    /// sequence of indices into the per-time disturbance sets. The final
    /// entry is unconstrained by observations and is enumerated in full.
    Prefixes(Vec<Vec<u32>>),
}

#[derive(Clone, Debug)]
pub struct MemoryNode {
    pub memory: Memory,
    pub support: NodeSupport,
    /// (action index, next observation index) -> node index in the next level.
    pub children: BTreeMap<(u32, u32), u32>,
}

/// All reachable memories up to a horizon, level by level.
#[derive(Debug)]
pub struct MemoryTree {
    levels: Vec<Vec<MemoryNode>>,
}

impl MemoryTree {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, t: usize) -> &[MemoryNode] {
        &self.levels[t]
    }

    pub fn node(&self, t: usize, i: u32) -> &MemoryNode {
        &self.levels[t][i as usize]
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Worst stage cost of a node under an action:
    /// `sup [[C_t | m, u]]`.
    pub fn cost_sup(&self, sys: &SystemModel, t: usize, node: u32, ui: u32) -> f64 {
        let node = &self.levels[t][node as usize];
        match &node.support {
            NodeSupport::States(support) => {
                let ss = sys.state_space().expect("tree built from this model");
                ss.support_cost_sup(t, support, ui)
            }
            NodeSupport::Prefixes(prefixes) => {
                let io = sys.io().expect("tree built from this model");
                let u = io.actions(t).points()[ui as usize].clone();
                let mut u_prefix = node.memory.actions().to_vec();
                u_prefix.push(u);
                let mut sup = f64::NEG_INFINITY;
                for p in prefixes {
                    let w_prefix = io_prefix_points(io, p);
                    sup = sup.max(io.cost(t, &w_prefix, &u_prefix));
                }
                sup
            }
        }
    }

    /// The node's conditional state range (state-space models only).
    pub fn support_set(&self, sys: &SystemModel, t: usize, node: u32) -> Result<FinitePointSet> {
        match &self.levels[t][node as usize].support {
            NodeSupport::States(support) => {
                Ok(sys.state_space()?.support_points(t, support))
            }
            NodeSupport::Prefixes(_) => Err(Error::GeneratorIncomplete(
                "state supports require a state-space model".into(),
            )),
        }
    }
}

fn io_prefix_points(io: &IoModel, prefix: &[u32]) -> Vec<Point> {
    prefix
        .iter()
        .enumerate()
        .map(|(s, &wi)| io.disturbances(s).points()[wi as usize].clone())
        .collect()
}

/// Consistent disturbance prefixes `w_{0:t}` of a memory in an input-output
/// model, by direct enumeration of every prefix against the observation
/// history. Used by per-memory queries; the tree builder incrementalises the
/// same computation.
pub(super) fn consistent_io_prefixes(io: &IoModel, m: &Memory) -> Result<Vec<Vec<Point>>> {
    let t = m.time();
    let mut prefixes: Vec<Vec<Point>> = vec![Vec::new()];
    for s in 0..=t {
        let mut next = Vec::new();
        for p in &prefixes {
            // y_s constrains w_{0:s-1} (so the parent prefix), except at
            // s = 0 where it constrains w_0 itself; the newly appended
            // disturbance is otherwise checked one step later.
            if s > 0 && io.observe(s, p, &m.actions()[..s]) != m.observations()[s] {
                continue;
            }
            for w in io.disturbances(s) {
                let mut q = p.clone();
                q.push(w.clone());
                if s == 0 && io.observe(0, &q, &[]) != m.observations()[0] {
                    continue;
                }
                next.push(q);
            }
        }
        prefixes = next;
        if prefixes.is_empty() {
            return Err(Error::InfeasibleObservation {
                t: s,
                observation: m.observations()[s].to_string(),
            });
        }
    }
    Ok(prefixes)
}

/// Builds the full reachable-memory tree to the model's horizon.
pub fn build_memory_tree(sys: &SystemModel, opts: &EnumerationOptions) -> Result<MemoryTree> {
    build_memory_tree_to(sys, sys.horizon(), opts)
}

pub(super) fn build_memory_tree_to(
    sys: &SystemModel,
    depth: usize,
    opts: &EnumerationOptions,
) -> Result<MemoryTree> {
    if depth > sys.horizon() {
        return Err(Error::Schema(format!(
            "enumeration depth {depth} exceeds the horizon {}",
            sys.horizon()
        )));
    }
    let mut total = 0usize;
    let mut roots = root_nodes(sys)?;
    if let Some(y0) = &opts.initial_observation {
        if sys.observations(0).index_of(y0).is_none() {
            return Err(Error::OutOfRangeObservation {
                t: 0,
                observation: y0.to_string(),
            });
        }
        roots.retain(|n| &n.memory.observations()[0] == y0);
        if roots.is_empty() {
            return Err(Error::InfeasibleObservation {
                t: 0,
                observation: y0.to_string(),
            });
        }
    }
    charge_budget(&mut total, roots.len(), opts.budget)?;
    let mut levels = vec![roots];

    for t in 0..depth {
        let mut next: Vec<MemoryNode> = Vec::new();
        let n_actions = sys.actions(t).len() as u32;
        // Split borrows: current level is levels[t].
        let current = levels.last_mut().expect("at least one level");
        for node in current.iter_mut() {
            for ui in 0..n_actions {
                let u = sys.actions(t).points()[ui as usize].clone();
                let buckets = successor_nodes(sys, t, node, ui)?;
                charge_budget(&mut total, buckets.len(), opts.budget)?;
                for (yi, support) in buckets {
                    let y = sys.observations(t + 1).points()[yi as usize].clone();
                    let child = MemoryNode {
                        memory: node.memory.extend(u.clone(), y),
                        support,
                        children: BTreeMap::new(),
                    };
                    node.children.insert((ui, yi), next.len() as u32);
                    next.push(child);
                }
            }
        }
        levels.push(next);
    }
    Ok(MemoryTree { levels })
}

fn charge_budget(total: &mut usize, added: usize, budget: usize) -> Result<()> {
    *total += added;
    if *total > budget {
        return Err(Error::ModelTooLarge {
            nodes: *total,
            budget,
        });
    }
    Ok(())
}

fn root_nodes(sys: &SystemModel) -> Result<Vec<MemoryNode>> {
    if sys.is_state_space() {
        let ss = sys.state_space()?;
        let buckets = ss.initial_buckets();
        Ok(buckets
            .into_iter()
            .enumerate()
            .filter(|(_, b)| !b.is_empty())
            .map(|(yi, support)| MemoryNode {
                memory: Memory::initial(ss.observations(0).points()[yi].clone()),
                support: NodeSupport::States(support),
                children: BTreeMap::new(),
            })
            .collect())
    } else {
        let io = sys.io()?;
        let mut buckets: BTreeMap<u32, Vec<Vec<u32>>> = BTreeMap::new();
        for (wi, w) in io.disturbances(0).iter().enumerate() {
            let y0 = io.observe(0, std::slice::from_ref(w), &[]);
            let yi = io.observations(0).index_of(&y0).ok_or_else(|| {
                Error::GeneratorIncomplete(format!(
                    "observation {y0} at t=0 is outside the declared observation set"
                ))
            })?;
            buckets.entry(yi as u32).or_default().push(vec![wi as u32]);
        }
        Ok(buckets
            .into_iter()
            .map(|(yi, prefixes)| MemoryNode {
                memory: Memory::initial(io.observations(0).points()[yi as usize].clone()),
                support: NodeSupport::Prefixes(prefixes),
                children: BTreeMap::new(),
            })
            .collect())
    }
}

/// Successor supports of `(node, u)` grouped by next observation index.
fn successor_nodes(
    sys: &SystemModel,
    t: usize,
    node: &MemoryNode,
    ui: u32,
) -> Result<Vec<(u32, NodeSupport)>> {
    match &node.support {
        NodeSupport::States(support) => {
            let ss = sys.state_space()?;
            Ok(ss
                .successor_buckets(t, support, ui)
                .into_iter()
                .map(|(yi, s)| (yi, NodeSupport::States(s)))
                .collect())
        }
        NodeSupport::Prefixes(prefixes) => {
            let io = sys.io()?;
            let mut u_prefix = node.memory.actions().to_vec();
            u_prefix.push(io.actions(t).points()[ui as usize].clone());
            let mut buckets: BTreeMap<u32, Vec<Vec<u32>>> = BTreeMap::new();
            let n_next_w = io.disturbances(t + 1).len() as u32;
            for p in prefixes {
                let w_prefix = io_prefix_points(io, p);
                let y = io.observe(t + 1, &w_prefix, &u_prefix);
                let yi = io.observations(t + 1).index_of(&y).ok_or_else(|| {
                    Error::GeneratorIncomplete(format!(
                        "observation {y} at t={} is outside the declared observation set",
                        t + 1
                    ))
                })? as u32;
                let entry = buckets.entry(yi).or_default();
                for wi in 0..n_next_w {
                    let mut q = p.clone();
                    q.push(wi);
                    entry.push(q);
                }
            }
            Ok(buckets
                .into_iter()
                .map(|(yi, p)| (yi, NodeSupport::Prefixes(p)))
                .collect())
        }
    }
}
