//! Prior reuse orderings: K-medoid star forests and the exact shortest
//! Hamiltonian path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{DistanceGraph, SpanningTree};

/// Iteration cap for the alternating K-medoid refinement.
pub const KMEDOID_MAX_ITERS: usize = 100;

/// Largest vertex count accepted by [`held_karp_shortest_ham_path`].
pub const HAMILTONIAN_CAP: usize = 20;

/// Centers are computed in full; every other channel reuses its nearest center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StarForest {
    centers: Vec<usize>,
    assign: Vec<usize>,
    iterations: usize,
}

impl StarForest {
    /// Forest over the given centers with every other vertex attached to its
    /// nearest center (smallest center id on ties).
    pub fn from_centers(g: &DistanceGraph, centers: &[usize]) -> Result<Self> {
        let n = g.n();
        let mut centers = centers.to_vec();
        centers.sort_unstable();
        centers.dedup();
        if centers.is_empty() || centers.len() > n {
            return Err(Error::CenterCount { r: centers.len(), n });
        }
        if let Some(&c) = centers.iter().find(|&&c| c >= n) {
            return Err(Error::VertexOutOfRange { vertex: c, n });
        }
        let assign = assign_nearest(g, &centers);
        Ok(StarForest { centers, assign, iterations: 0 })
    }

    /// Sorted center ids.
    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    /// Center of every vertex; a center maps to itself.
    pub fn assignment(&self) -> &[usize] {
        &self.assign
    }

    pub fn is_center(&self, v: usize) -> bool {
        self.assign[v] == v && self.centers.binary_search(&v).is_ok()
    }

    pub fn n(&self) -> usize {
        self.assign.len()
    }

    /// Refinement rounds used by [`kmedoid_cluster`]; zero for hand-built forests.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Sum of member-to-center distances.
    pub fn member_distance(&self, g: &DistanceGraph) -> u64 {
        (0..self.n()).map(|v| g.dist(v, self.assign[v]) as u64).sum()
    }
}

fn assign_nearest(g: &DistanceGraph, centers: &[usize]) -> Vec<usize> {
    let mut assign = vec![0; g.n()];
    for (v, a) in assign.iter_mut().enumerate() {
        if centers.binary_search(&v).is_ok() {
            *a = v;
            continue;
        }
        // centers are sorted, so min_by_key keeps the smallest id on ties
        *a = *centers.iter().min_by_key(|&&c| g.dist(v, c)).expect("nonempty centers");
    }
    assign
}

/// K-medoid clustering with k-means++ style seeding on the distance matrix,
/// then alternating assignment and medoid update until the centers stop
/// changing or [`KMEDOID_MAX_ITERS`] rounds pass.
pub fn kmedoid_cluster(g: &DistanceGraph, r: usize, seed: u64) -> Result<StarForest> {
    let n = g.n();
    if r == 0 || r > n {
        return Err(Error::CenterCount { r, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(g, r, &mut rng);
    centers.sort_unstable();

    let mut iterations = 0;
    while iterations < KMEDOID_MAX_ITERS {
        iterations += 1;
        let assign = assign_nearest(g, &centers);
        let mut next: Vec<usize> = centers
            .iter()
            .map(|&c| {
                let members: Vec<usize> = (0..n).filter(|&v| assign[v] == c).collect();
                let cost = |m: usize| members.iter().map(|&v| g.dist(m, v) as u64).sum::<u64>();
                let current = cost(c);
                // keep the current medoid unless a member is strictly better
                members
                    .iter()
                    .copied()
                    .map(|m| (cost(m), m))
                    .filter(|&(cm, _)| cm < current)
                    .min()
                    .map_or(c, |(_, m)| m)
            })
            .collect();
        next.sort_unstable();
        if next == centers {
            break;
        }
        centers = next;
    }
    let assign = assign_nearest(g, &centers);
    Ok(StarForest { centers, assign, iterations })
}

fn seed_centers(g: &DistanceGraph, r: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = g.n();
    let mut chosen = vec![false; n];
    let mut centers = Vec::with_capacity(r);
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    centers.push(first);
    let mut nearest: Vec<u64> = (0..n).map(|v| g.dist(v, first) as u64).collect();
    while centers.len() < r {
        let weights: Vec<u64> = (0..n).map(|v| if chosen[v] { 0 } else { nearest[v] * nearest[v] }).collect();
        let total: u64 = weights.iter().sum();
        let pick = if total == 0 {
            // remaining vertices duplicate existing centers: pick uniformly
            let free: Vec<usize> = (0..n).filter(|&v| !chosen[v]).collect();
            free[rng.gen_range(0..free.len())]
        } else {
            let mut ticket = rng.gen_range(0..total);
            let mut pick = 0;
            for (v, &w) in weights.iter().enumerate() {
                if ticket < w {
                    pick = v;
                    break;
                }
                ticket -= w;
            }
            pick
        };
        chosen[pick] = true;
        centers.push(pick);
        for (v, d) in nearest.iter_mut().enumerate() {
            *d = (*d).min(g.dist(v, pick) as u64);
        }
    }
    centers
}

/// Best of `restarts` runs of [`kmedoid_cluster`] with seeds `seed, seed + 1, ...`
/// by [`kmedoid_cost`]; the earliest restart wins ties.
pub fn kmedoid_best_of(g: &DistanceGraph, r: usize, seed: u64, restarts: usize) -> Result<StarForest> {
    let mut best: Option<(u64, StarForest)> = None;
    for k in 0..restarts.max(1) as u64 {
        let f = kmedoid_cluster(g, r, seed.wrapping_add(k))?;
        let cost = kmedoid_cost(&f, g);
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, f));
        }
    }
    Ok(best.expect("at least one restart").1)
}

/// XNORs per output pixel: `R * full + sum of member distances`.
pub fn kmedoid_cost(f: &StarForest, g: &DistanceGraph) -> u64 {
    f.centers.len() as u64 * g.full() as u64 + f.member_distance(g)
}

/// Open Hamiltonian path through every vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HamPath {
    order: Vec<usize>,
    total: u64,
}

impl HamPath {
    pub fn new(order: Vec<usize>, g: &DistanceGraph) -> Result<Self> {
        let n = g.n();
        if order.len() != n {
            return Err(Error::InvalidParameter(format!("path of {} vertices for {n}", order.len())));
        }
        let mut seen = vec![false; n];
        for &v in &order {
            if v >= n || std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidParameter(format!("path is not a permutation at vertex {v}")));
            }
        }
        let total = order.windows(2).map(|w| g.dist(w[0], w[1]) as u64).sum();
        Ok(HamPath { order, total })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Exact shortest open Hamiltonian path by Held-Karp subset DP, minimized over all
/// endpoint pairs. `O(V^2 2^V)` time and `O(V 2^V)` memory; capped at
/// [`HAMILTONIAN_CAP`] vertices. Among optimal paths the lexicographically
/// smallest vertex order is returned.
pub fn held_karp_shortest_ham_path(g: &DistanceGraph) -> Result<HamPath> {
    let n = g.n();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    if n > HAMILTONIAN_CAP {
        return Err(Error::TooLargeForHamiltonian { n, cap: HAMILTONIAN_CAP });
    }
    if (n as u64 - 1) * g.full() as u64 >= u32::MAX as u64 {
        return Err(Error::InvalidParameter("path length would overflow u32".into()));
    }
    const INF: u32 = u32::MAX;
    let full_mask = (1usize << n) - 1;
    // best[mask * n + v]: shortest path covering `mask` that starts at v
    let mut best = vec![INF; (1usize << n) * n];
    for v in 0..n {
        best[(1 << v) * n + v] = 0;
    }
    for mask in 1..=full_mask {
        if mask.count_ones() < 2 {
            continue;
        }
        for v in 0..n {
            if mask & (1 << v) == 0 {
                continue;
            }
            let rest = mask ^ (1 << v);
            let row = g.row(v);
            let tail = &best[rest * n..rest * n + n];
            let mut b = INF;
            let mut bits = rest;
            while bits != 0 {
                let u = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let c = tail[u] + row[u];
                if c < b {
                    b = c;
                }
            }
            best[mask * n + v] = b;
        }
    }

    let opt = (0..n).map(|v| best[full_mask * n + v]).min().expect("n >= 1");
    let mut order = Vec::with_capacity(n);
    let mut cur = (0..n).find(|&v| best[full_mask * n + v] == opt).expect("optimum attained");
    let mut mask = full_mask;
    order.push(cur);
    while order.len() < n {
        let rest = mask ^ (1 << cur);
        let target = best[mask * n + cur];
        let next = (0..n)
            .find(|&u| rest & (1 << u) != 0 && best[rest * n + u] + g.dist(cur, u) == target)
            .expect("optimal successor exists");
        order.push(next);
        mask = rest;
        cur = next;
    }
    let path = HamPath::new(order, g)?;
    debug_assert_eq!(path.total, opt as u64);
    Ok(path)
}

/// The path as a chain hanging from `order[0]`.
pub fn ham_path_as_tree(p: &HamPath, g: &DistanceGraph) -> Result<SpanningTree> {
    let n = p.order.len();
    if n != g.n() {
        return Err(Error::ShapeMismatch(format!("path of {n} vertices for a {}-vertex graph", g.n())));
    }
    let mut parent = vec![None; n];
    for w in p.order.windows(2) {
        parent[w[1]] = Some(w[0]);
    }
    SpanningTree::from_parents(p.order[0], parent, g)
}
