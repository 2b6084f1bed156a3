//! Small generators used by property tests and the acceptance suite.

use crate::instance::Instance;
use crate::mechanisms::AgentOrdering;
use crate::metric::{Metric, PointId};
use rand::Rng;

/// Uniform random line instance with up to `max_agents` agents and up to
/// `max_facilities` facilities, capacities sized so the instance is feasible
/// (and usually tight enough that greedy choices collide).
pub fn random_line_instance<R: Rng>(rng: &mut R, max_agents: usize, max_facilities: usize) -> Instance {
    let n = rng.gen_range(1..=max_agents);
    let m = rng.gen_range(1..=max_facilities);
    let mut coords = Vec::with_capacity(n + m);
    for _ in 0..(n + m) {
        coords.push(rng.gen_range(0.0..10.0));
    }
    let agents = (0..n).map(PointId).collect();
    let facilities = (n..n + m).map(PointId).collect();
    // Random positive capacities, then topped up until the instance is
    // feasible.
    let mut caps: Vec<u64> = (0..m).map(|_| rng.gen_range(1..=3u64)).collect();
    while caps.iter().sum::<u64>() < n as u64 {
        let j = rng.gen_range(0..m);
        caps[j] += 1;
    }
    Instance::new(Metric::line(coords), agents, facilities, caps)
        .expect("generated instance is valid")
}

/// Uniform random permutation of the instance's agents.
pub fn random_ordering<R: Rng>(rng: &mut R, n: usize) -> AgentOrdering {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    AgentOrdering::new(perm).expect("permutation is valid")
}
