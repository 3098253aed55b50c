//! Complete inter-channel distance graph, dense Prim MST and tree re-rooting.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::layer::BinaryLayer;

/// Symmetric matrix of Hamming distances between the weight sets of a layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceGraph {
    n: usize,
    full: usize,
    dist: Vec<u32>,
}

impl DistanceGraph {
    /// Builds a graph from a row-major `n x n` matrix, checking symmetry, a zero
    /// diagonal and the `[0, full]` range.
    pub fn from_matrix(n: usize, full: usize, dist: Vec<u32>) -> Result<Self> {
        if dist.len() != n * n {
            return Err(Error::InvalidGraph(format!("{} entries for {n} vertices", dist.len())));
        }
        for i in 0..n {
            if dist[i * n + i] != 0 {
                return Err(Error::InvalidGraph(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let d = dist[i * n + j];
                if d != dist[j * n + i] {
                    return Err(Error::InvalidGraph(format!("asymmetric at ({i}, {j})")));
                }
                if d as usize > full {
                    return Err(Error::InvalidGraph(format!("distance {d} at ({i}, {j}) exceeds {full}")));
                }
            }
        }
        Ok(DistanceGraph { n, full, dist })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn full(&self) -> usize {
        self.full
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> u32 {
        self.dist[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u32] {
        &self.dist[i * self.n..(i + 1) * self.n]
    }

    /// Same graph with vertex `i` renamed to `perm[i]`.
    pub fn relabeled(&self, perm: &[usize]) -> DistanceGraph {
        let n = self.n;
        let mut dist = vec![0; n * n];
        for i in 0..n {
            for j in 0..n {
                dist[perm[i] * n + perm[j]] = self.dist(i, j);
            }
        }
        DistanceGraph { n, full: self.full, dist }
    }
}

/// Pairwise Hamming distances between the output-channel weight sets of `layer`.
pub fn build_distance_graph(layer: &BinaryLayer) -> DistanceGraph {
    let n = layer.shape().c_out;
    let words: Vec<&[u64]> = layer.weights().iter().map(|w| w.bits().words()).collect();
    let mut dist = vec![0u32; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = crate::bits::hamming_words(words[i], words[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    DistanceGraph { n, full: layer.shape().full(), dist }
}

/// Rooted spanning tree over the vertices of a [`DistanceGraph`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningTree {
    root: usize,
    parent: Vec<Option<usize>>,
    edge_weight: Vec<u32>,
}

impl SpanningTree {
    /// Validates that `parent` describes a tree rooted at `root` and takes edge
    /// weights from `g`.
    pub fn from_parents(root: usize, parent: Vec<Option<usize>>, g: &DistanceGraph) -> Result<Self> {
        if parent.len() != g.n() {
            return Err(Error::InvalidTree(format!("{} parents for {} vertices", parent.len(), g.n())));
        }
        let edge_weight = parent
            .iter()
            .enumerate()
            .map(|(v, p)| match p {
                Some(p) if *p < g.n() => g.dist(*p, v),
                _ => 0,
            })
            .collect();
        let tree = SpanningTree { root, parent, edge_weight };
        tree.validate()?;
        Ok(tree)
    }

    /// Like [`SpanningTree::from_parents`] with explicit per-vertex edge weights.
    pub fn with_weights(root: usize, parent: Vec<Option<usize>>, edge_weight: Vec<u32>) -> Result<Self> {
        if edge_weight.len() != parent.len() {
            return Err(Error::InvalidTree("edge weight count differs from vertex count".into()));
        }
        let tree = SpanningTree { root, parent, edge_weight };
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&self) -> Result<()> {
        let n = self.parent.len();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if self.root >= n {
            return Err(Error::VertexOutOfRange { vertex: self.root, n });
        }
        for (v, p) in self.parent.iter().enumerate() {
            match (*p, v == self.root) {
                (None, true) => {}
                (Some(_), true) => return Err(Error::InvalidTree("root has a parent".into())),
                (None, false) => return Err(Error::InvalidTree(format!("vertex {v} has no parent"))),
                (Some(p), false) if p >= n => return Err(Error::VertexOutOfRange { vertex: p, n }),
                (Some(_), false) => {}
            }
        }
        if self.edge_weight[self.root] != 0 {
            return Err(Error::InvalidTree("root carries an edge weight".into()));
        }
        // every vertex must reach the root in fewer than n hops
        for v in 0..n {
            let mut cur = v;
            let mut hops = 0;
            while let Some(p) = self.parent[cur] {
                cur = p;
                hops += 1;
                if hops >= n {
                    return Err(Error::InvalidTree(format!("cycle through vertex {v}")));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.parent.len()
    }

    #[inline]
    pub fn root(&self) -> usize {
        self.root
    }

    #[inline]
    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    #[inline]
    pub fn edge_weight(&self, v: usize) -> u32 {
        self.edge_weight[v]
    }

    pub fn total_distance(&self) -> u64 {
        self.edge_weight.iter().map(|&w| w as u64).sum()
    }

    /// Children of each vertex, ascending.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.n()];
        for (v, p) in self.parent.iter().enumerate() {
            if let Some(p) = p {
                ch[*p].push(v);
            }
        }
        ch
    }

    /// Breadth-first order from the root, children visited in ascending id.
    pub fn bfs_order(&self) -> Vec<usize> {
        let children = self.children();
        let mut order = Vec::with_capacity(self.n());
        let mut queue = VecDeque::from([self.root]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            queue.extend(children[v].iter().copied());
        }
        order
    }

    /// Edge hops from each vertex to the root.
    pub fn vertex_depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.n()];
        for v in self.bfs_order() {
            if let Some(p) = self.parent[v] {
                depth[v] = depth[p] + 1;
            }
        }
        depth
    }

    /// Undirected adjacency with edge weights.
    pub fn adjacency(&self) -> Vec<Vec<(usize, u32)>> {
        let mut adj = vec![Vec::new(); self.n()];
        for (v, p) in self.parent.iter().enumerate() {
            if let Some(p) = *p {
                adj[v].push((p, self.edge_weight[v]));
                adj[p].push((v, self.edge_weight[v]));
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
        }
        adj
    }

    /// Undirected edge set as `(min, max, weight)` triples, sorted.
    pub fn undirected_edges(&self) -> Vec<(usize, usize, u32)> {
        let mut edges: Vec<_> = self
            .parent
            .iter()
            .enumerate()
            .filter_map(|(v, p)| p.map(|p| (v.min(p), v.max(p), self.edge_weight[v])))
            .collect();
        edges.sort_unstable();
        edges
    }

    /// The same undirected tree hung from `new_root`.
    pub fn rerooted(&self, new_root: usize) -> Result<SpanningTree> {
        let n = self.n();
        if new_root >= n {
            return Err(Error::VertexOutOfRange { vertex: new_root, n });
        }
        let adj = self.adjacency();
        let mut parent = vec![None; n];
        let mut edge_weight = vec![0; n];
        let mut seen = vec![false; n];
        seen[new_root] = true;
        let mut queue = VecDeque::from([new_root]);
        while let Some(u) = queue.pop_front() {
            for &(v, w) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(u);
                    edge_weight[v] = w;
                    queue.push_back(v);
                }
            }
        }
        Ok(SpanningTree { root: new_root, parent, edge_weight })
    }
}

/// Dense O(V^2) Prim. Among frontier vertices with equal key the smallest id
/// is attached first; a vertex keeps the earliest parent that achieved its key.
pub fn prim_mst(g: &DistanceGraph, start: usize) -> Result<SpanningTree> {
    let n = g.n();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    if start >= n {
        return Err(Error::VertexOutOfRange { vertex: start, n });
    }
    let mut in_tree = vec![false; n];
    let mut key = vec![u32::MAX; n];
    let mut parent = vec![None; n];
    let mut edge_weight = vec![0u32; n];
    key[start] = 0;

    for _ in 0..n {
        let mut u = usize::MAX;
        let mut best = u32::MAX;
        for v in 0..n {
            if !in_tree[v] && (u == usize::MAX || key[v] < best) {
                u = v;
                best = key[v];
            }
        }
        in_tree[u] = true;
        if let Some(p) = parent[u] {
            edge_weight[u] = g.dist(p, u);
        }
        let row = g.row(u);
        for v in 0..n {
            if !in_tree[v] && row[v] < key[v] {
                key[v] = row[v];
                parent[v] = Some(u);
            }
        }
    }
    Ok(SpanningTree { root: start, parent, edge_weight })
}

/// Edge count of the longest root-to-vertex path.
pub fn tree_depth(t: &SpanningTree) -> usize {
    t.vertex_depths().into_iter().max().unwrap_or(0)
}

/// Sum over vertices of `depth - depth(v)`: how far each vertex sits above the deepest level.
pub fn depth_slack(t: &SpanningTree) -> u64 {
    let depths = t.vertex_depths();
    let max = depths.iter().copied().max().unwrap_or(0);
    depths.iter().map(|&d| (max - d) as u64).sum()
}

/// Re-roots `t` at a center of the unweighted tree, minimizing depth.
///
/// A tree has one or two centers, found as the midpoint(s) of a longest path.
/// With two centers the one with the smaller [`depth_slack`] wins, then the
/// smaller id.
pub fn reroot_min_depth(t: &SpanningTree) -> SpanningTree {
    let adj = t.adjacency();
    let (a, _) = farthest(&adj, t.root());
    let (b, prev) = farthest(&adj, a);
    let mut path = vec![b];
    let mut cur = b;
    while cur != a {
        cur = prev[cur].expect("path to bfs source");
        path.push(cur);
    }
    let diameter = path.len() - 1;
    let mut centers = vec![path[diameter / 2]];
    if diameter % 2 == 1 {
        centers.push(path[diameter / 2 + 1]);
    }
    centers
        .into_iter()
        .map(|c| t.rerooted(c).expect("center is a vertex"))
        .min_by_key(|r| (depth_slack(r), r.root()))
        .expect("at least one center")
}

/// Farthest vertex from `src` (smallest id on ties) and the BFS predecessor array.
fn farthest(adj: &[Vec<(usize, u32)>], src: usize) -> (usize, Vec<Option<usize>>) {
    let n = adj.len();
    let mut dist = vec![usize::MAX; n];
    let mut prev = vec![None; n];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &(v, _) in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                prev[v] = Some(u);
                queue.push_back(v);
            }
        }
    }
    let far = (0..n).max_by_key(|&v| (dist[v], std::cmp::Reverse(v))).unwrap_or(src);
    (far, prev)
}
