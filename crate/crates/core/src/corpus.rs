//! Deterministic families of small randomized systems for stress-testing
//! the solvers and bounds at desk scale.
//!
//! Every generator is a pure function of its seed, so test failures
//! reproduce exactly. Observation alphabets are deliberately smaller than
//! the state space, forcing genuine partial observability through
//! aliasing.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dp::Compressor;
use crate::error::Result;
use crate::metric::Metric;
use crate::model::{forward_reachable_states, Criterion, StateSpaceBuilder, SystemModel};
use crate::point::Point;
use crate::set::FinitePointSet;

/// Shape of one randomized system.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct RandomSystemParams {
    pub states: usize,
    pub actions: usize,
    pub disturbances: usize,
    pub noises: usize,
    pub horizon: usize,
    pub criterion: Criterion,
    /// Integer costs in `0..=9`; otherwise reals in `[0, 10)`.
    pub integer_costs: bool,
}

fn scalars(n: usize) -> FinitePointSet {
    FinitePointSet::new((0..n).map(|v| Point::int(&[v as i64])))
}

fn random_costs(rng: &mut ChaCha8Rng, n: usize, integer: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if integer {
                rng.gen_range(0..=9) as f64
            } else {
                rng.gen_range(0.0..10.0)
            }
        })
        .collect()
}

/// A randomized partially observed system. Dynamics, readout and costs are
/// independent uniform tables drawn from the seed; the observation alphabet
/// has `ceil(|X| / 2)` symbols so that distinct states can share readouts.
pub fn random_system(params: &RandomSystemParams, seed: u64) -> Result<SystemModel> {
    let p = *params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, nu, nw, nn, horizon) =
        (p.states, p.actions, p.disturbances, p.noises, p.horizon);
    let ny = nx.div_ceil(2).max(1);
    let next: Vec<usize> = (0..(horizon * nx * nu * nw))
        .map(|_| rng.gen_range(0..nx))
        .collect();
    let obs: Vec<usize> = (0..((horizon + 1) * nx * nn))
        .map(|_| rng.gen_range(0..ny))
        .collect();
    let cost = random_costs(&mut rng, (horizon + 1) * nx * nu, p.integer_costs);

    StateSpaceBuilder {
        horizon,
        criterion: p.criterion,
        states: vec![scalars(nx); horizon + 1],
        actions: vec![scalars(nu); horizon + 1],
        disturbances: vec![scalars(nw); horizon],
        noises: vec![scalars(nn); horizon + 1],
        state_metric: Metric::Manhattan,
        observation_metric: Metric::Manhattan,
        action_metric: Metric::Manhattan,
    }
    .build(
        move |t, x, u, w| {
            let i = ((t * nx + x.coord(0) as usize) * nu + u.coord(0) as usize) * nw
                + w.coord(0) as usize;
            Point::int(&[next[i] as i64])
        },
        move |t, x, n| {
            let i = (t * nx + x.coord(0) as usize) * nn + n.coord(0) as usize;
            Point::int(&[obs[i] as i64])
        },
        move |t, x, u| cost[(t * nx + x.coord(0) as usize) * nu + u.coord(0) as usize],
    )
}

/// One named system of the standard corpus.
pub struct CorpusEntry {
    pub name: String,
    pub params: RandomSystemParams,
    pub system: SystemModel,
}

impl CorpusEntry {
    /// Tolerance appropriate for value comparisons on this entry.
    pub fn value_tolerance(&self) -> f64 {
        if self.params.integer_costs {
            0.0
        } else {
            1e-9
        }
    }
}

/// The shared corpus of randomized systems: sizes, criteria and cost kinds
/// are drawn from one seeded stream, so the first `k` entries agree across
/// calls with different counts.
pub fn standard_corpus(count: usize, seed: u64) -> Result<Vec<CorpusEntry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let params = RandomSystemParams {
            states: rng.gen_range(2..=6),
            actions: rng.gen_range(2..=3),
            disturbances: rng.gen_range(1..=3),
            noises: rng.gen_range(1..=2),
            horizon: rng.gen_range(1..=3),
            criterion: if rng.gen_bool(0.5) {
                Criterion::Instantaneous
            } else {
                Criterion::Terminal
            },
            integer_costs: rng.gen_bool(0.5),
        };
        let instance_seed = rng.gen::<u64>();
        let name = format!(
            "sys{i:02}-x{}u{}w{}n{}t{}-{}-{}",
            params.states,
            params.actions,
            params.disturbances,
            params.noises,
            params.horizon,
            match params.criterion {
                Criterion::Instantaneous => "inst",
                Criterion::Terminal => "term",
            },
            if params.integer_costs { "int" } else { "real" },
        );
        entries.push(CorpusEntry {
            name,
            params,
            system: random_system(&params, instance_seed)?,
        });
    }
    Ok(entries)
}

/// A perfectly observed chain whose readout arrives `delay` steps late.
///
/// The state is augmented to carry the last `delay + 1` chain values, the
/// readout reveals the oldest one, and stage costs act on the newest. The
/// compression keeping the latest observation and the last `delay` actions
/// ([`delayed_exact_window`]) is then an exact information state: the
/// revealed old state plus the actions since determine everything the full
/// memory determines.
pub fn delayed_chain(
    params: &RandomSystemParams,
    delay: usize,
    seed: u64,
) -> Result<SystemModel> {
    let p = *params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, nu, nw, horizon) = (p.states, p.actions, p.disturbances, p.horizon);
    let next: Vec<usize> = (0..(horizon * nx * nu * nw))
        .map(|_| rng.gen_range(0..nx))
        .collect();
    let cost = random_costs(&mut rng, (horizon + 1) * nx * nu, p.integer_costs);

    let step = {
        let next = next.clone();
        move |t: usize, z: &Point, u: &Point, w: &Point| {
            let i = ((t * nx + z.coord(0) as usize) * nu + u.coord(0) as usize) * nw
                + w.coord(0) as usize;
            let mut coords = vec![next[i] as f64];
            coords.extend((0..delay).map(|k| z.coord(k)));
            Point::new(coords)
        }
    };

    let x0 = FinitePointSet::new((0..nx).map(|x| Point::new(vec![x as f64; delay + 1])));
    let actions = vec![scalars(nu); horizon + 1];
    let disturbances = vec![scalars(nw); horizon];
    let states = forward_reachable_states(x0, horizon, &actions, &disturbances, &step);

    StateSpaceBuilder {
        horizon,
        criterion: p.criterion,
        states,
        actions,
        disturbances,
        noises: vec![scalars(1); horizon + 1],
        state_metric: Metric::Manhattan,
        observation_metric: Metric::Manhattan,
        action_metric: Metric::Manhattan,
    }
    .build(
        step,
        move |_, z, _| Point::scalar(z.coord(delay)),
        move |t, z, u| cost[(t * nx + z.coord(0) as usize) * nu + u.coord(0) as usize],
    )
}

/// The compression that is exact for [`delayed_chain`]: the latest readout
/// plus the actions taken since it was emitted.
pub fn delayed_exact_window(delay: usize) -> Compressor {
    Compressor::Window {
        observations: 1,
        actions: delay,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{
        solve_abstraction_dp, solve_memory_dp, verify_exact_information_state,
    };
    use crate::model::EnumerationOptions;

    fn opts() -> EnumerationOptions {
        EnumerationOptions::default()
    }

    #[test]
    fn generators_are_deterministic() {
        let params = RandomSystemParams {
            states: 4,
            actions: 2,
            disturbances: 2,
            noises: 2,
            horizon: 2,
            criterion: Criterion::Instantaneous,
            integer_costs: true,
        };
        let a = random_system(&params, 11).unwrap();
        let b = random_system(&params, 11).unwrap();
        let (va, _) = solve_memory_dp(&a, &opts()).unwrap();
        let (vb, _) = solve_memory_dp(&b, &opts()).unwrap();
        assert_eq!(va.initial_value(), vb.initial_value());
        assert_eq!(a.observations(1), b.observations(1));
    }

    #[test]
    fn corpus_prefixes_agree() {
        let short = standard_corpus(3, 99).unwrap();
        let long = standard_corpus(6, 99).unwrap();
        for (s, l) in short.iter().zip(&long) {
            assert_eq!(s.name, l.name);
            assert_eq!(s.params, l.params);
        }
        assert_eq!(short[0].value_tolerance() == 0.0, short[0].params.integer_costs);
    }

    #[test]
    fn corpus_sizes_stay_at_desk_scale() {
        for entry in standard_corpus(12, 7).unwrap() {
            let p = entry.params;
            assert!((2..=6).contains(&p.states));
            assert!((2..=3).contains(&p.actions));
            assert!((1..=3).contains(&p.disturbances));
            assert!((1..=2).contains(&p.noises));
            assert!((1..=3).contains(&p.horizon));
            for t in 0..=p.horizon {
                assert!(entry.system.observations(t).len() <= p.states.div_ceil(2).max(1));
            }
        }
    }

    #[test]
    fn observation_aliasing_is_common() {
        // With half-sized alphabets most instances must alias some states.
        let mut aliased = 0;
        for entry in standard_corpus(10, 5).unwrap() {
            let sys = &entry.system;
            if (0..=sys.horizon())
                .any(|t| sys.observations(t).len() < sys.state_space().unwrap().states(t).len())
            {
                aliased += 1;
            }
        }
        assert!(aliased >= 8, "only {aliased}/10 instances alias observations");
    }

    #[test]
    fn delayed_window_is_an_exact_information_state() {
        let params = RandomSystemParams {
            states: 3,
            actions: 2,
            disturbances: 2,
            noises: 1,
            horizon: 3,
            criterion: Criterion::Instantaneous,
            integer_costs: true,
        };
        for (delay, seed) in [(1usize, 21u64), (2, 22)] {
            let sys = delayed_chain(&params, delay, seed).unwrap();
            let window = delayed_exact_window(delay);
            let a = window.build(&sys, &opts()).unwrap();
            let violations = verify_exact_information_state(&sys, &a, &opts()).unwrap();
            assert!(violations.is_empty(), "delay {delay}: {violations:?}");

            let (vw, _) = solve_abstraction_dp(&sys, a).unwrap();
            let (vm, _) = solve_memory_dp(&sys, &opts()).unwrap();
            assert_eq!(vw.initial_value(), vm.initial_value(), "delay {delay}");
        }
    }

    #[test]
    fn undelayed_chain_reveals_the_state() {
        let params = RandomSystemParams {
            states: 3,
            actions: 2,
            disturbances: 2,
            noises: 1,
            horizon: 2,
            criterion: Criterion::Terminal,
            integer_costs: false,
        };
        let sys = delayed_chain(&params, 0, 4).unwrap();
        for t in 0..=params.horizon {
            let ss = sys.state_space().unwrap();
            assert_eq!(sys.observations(t).len(), ss.states(t).len());
        }
        let a = delayed_exact_window(0).build(&sys, &opts()).unwrap();
        assert!(verify_exact_information_state(&sys, &a, &opts())
            .unwrap()
            .is_empty());
    }
}
