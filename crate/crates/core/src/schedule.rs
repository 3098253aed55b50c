//! Executable reuse schedules and their cost models.
//!
//! A [`ComputeSchedule`] fixes which channels are computed in full (roots) and,
//! for every other channel, the parent it reuses together with the positions
//! where its weights differ from the parent's.
//!
//! Text format (one item per line, `#` starts a comment):
//!
//! ```text
//! version=1
//! kind=mst
//! shape=<c_out> <c_in> <m> <h_in> <w_in> <pad>
//! alpha=<f64>
//! roots=<r1> <r2> ...
//! rootbits <root> <c_in*m*m characters of 0/1>
//! <child> <parent> <k> <p1>:<b1> ... <pk>:<bk>
//! ```
//!
//! `p` is a flat weight index and `b` the child's bit at `p`.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::baselines::{
    ham_path_as_tree, held_karp_shortest_ham_path, kmedoid_best_of, kmedoid_cost, StarForest, HAMILTONIAN_CAP,
};
use crate::bits::BitVec;
use crate::error::{Error, Result};
use crate::graph::{build_distance_graph, prim_mst, reroot_min_depth, DistanceGraph, SpanningTree};
use crate::layer::{BinaryLayer, BinaryWeightSet, LayerShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScheduleKind {
    Standard,
    Mst,
    Kmedoid,
    Hampath,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 4] =
        [ScheduleKind::Standard, ScheduleKind::Mst, ScheduleKind::Kmedoid, ScheduleKind::Hampath];

    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Standard => "standard",
            ScheduleKind::Mst => "mst",
            ScheduleKind::Kmedoid => "kmedoid",
            ScheduleKind::Hampath => "hampath",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScheduleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown schedule kind {s:?}")))
    }
}

/// Positions where a child's weights differ from its parent's, with the child's bit there.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DiffList {
    entries: Vec<(u32, bool)>,
}

impl DiffList {
    /// Entries must have strictly increasing positions.
    pub fn new(entries: Vec<(u32, bool)>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidSchedule("diff positions must be strictly increasing".into()));
        }
        Ok(DiffList { entries })
    }

    pub fn between(parent: &BinaryWeightSet, child: &BinaryWeightSet) -> Result<Self> {
        let x = parent.bits().xor(child.bits())?;
        let entries = x.ones_positions().into_iter().map(|p| (p as u32, child.get(p))).collect();
        Ok(DiffList { entries })
    }

    pub fn entries(&self) -> &[(u32, bool)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Flips the stored child bit of entry `i`; used to build corrupted schedules.
    pub fn flip_bit(&mut self, i: usize) {
        self.entries[i].1 = !self.entries[i].1;
    }

    /// Applies the diff to the parent's weights, giving the child's.
    pub fn apply(&self, parent: &BinaryWeightSet) -> Result<BinaryWeightSet> {
        let mut bits = parent.bits().clone();
        for &(p, b) in &self.entries {
            if p as usize >= bits.len() {
                return Err(Error::InvalidSchedule(format!("diff position {p} out of range")));
            }
            bits.set(p as usize, b);
        }
        Ok(BinaryWeightSet::new(bits))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComputeSchedule {
    shape: LayerShape,
    kind: ScheduleKind,
    alpha: f64,
    roots: Vec<usize>,
    root_weights: Vec<BinaryWeightSet>,
    parent: Vec<Option<usize>>,
    diffs: Vec<DiffList>,
    eval_order: Vec<usize>,
}

impl ComputeSchedule {
    /// Assembles a schedule from its parts, checking structure and recomputing the
    /// evaluation order (breadth-first from the roots, ids ascending).
    pub fn from_parts(
        shape: LayerShape,
        kind: ScheduleKind,
        alpha: f64,
        roots: Vec<(usize, BinaryWeightSet)>,
        parent: Vec<Option<usize>>,
        diffs: Vec<DiffList>,
    ) -> Result<Self> {
        shape.validate()?;
        let n = shape.c_out;
        if parent.len() != n || diffs.len() != n {
            return Err(Error::ShapeMismatch(format!("schedule has {} channels for c_out = {n}", parent.len())));
        }
        let mut roots = roots;
        roots.sort_by_key(|(r, _)| *r);
        if roots.is_empty() {
            return Err(Error::InvalidSchedule("no root channel".into()));
        }
        if roots.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidSchedule("duplicate root".into()));
        }
        for (r, w) in &roots {
            if *r >= n {
                return Err(Error::VertexOutOfRange { vertex: *r, n });
            }
            if parent[*r].is_some() {
                return Err(Error::InvalidSchedule(format!("root {r} has a parent")));
            }
            if w.len() != shape.full() {
                return Err(Error::ShapeMismatch(format!("root {r} carries {} bits", w.len())));
            }
        }
        for v in 0..n {
            let is_root = roots.binary_search_by_key(&v, |(r, _)| *r).is_ok();
            match parent[v] {
                None if !is_root => return Err(Error::InvalidSchedule(format!("channel {v} has no parent"))),
                Some(p) if p >= n => return Err(Error::VertexOutOfRange { vertex: p, n }),
                _ => {}
            }
            if is_root && !diffs[v].is_empty() {
                return Err(Error::InvalidSchedule(format!("root {v} carries a diff list")));
            }
            if let Some(&(p, _)) = diffs[v].entries.last() {
                if p as usize >= shape.full() {
                    return Err(Error::DiffOutOfRange { channel: v, position: p as usize, full: shape.full() });
                }
            }
        }

        let mut children = vec![Vec::new(); n];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(v);
            }
        }
        let mut eval_order = Vec::with_capacity(n);
        let mut queue: VecDeque<usize> = roots.iter().map(|(r, _)| *r).collect();
        while let Some(v) = queue.pop_front() {
            eval_order.push(v);
            queue.extend(children[v].iter().copied());
        }
        if eval_order.len() != n {
            return Err(Error::InvalidSchedule("parent links contain a cycle".into()));
        }

        let (roots, root_weights) = roots.into_iter().unzip();
        Ok(ComputeSchedule { shape, kind, alpha, roots, root_weights, parent, diffs, eval_order })
    }

    /// Every channel computed in full.
    pub fn standard(layer: &BinaryLayer) -> Result<Self> {
        let n = layer.shape().c_out;
        let roots = layer.weights().iter().cloned().enumerate().collect();
        Self::from_parts(
            *layer.shape(),
            ScheduleKind::Standard,
            layer.alpha(),
            roots,
            vec![None; n],
            vec![DiffList::default(); n],
        )
    }

    pub fn shape(&self) -> &LayerShape {
        &self.shape
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn root_weights(&self, root: usize) -> Option<&BinaryWeightSet> {
        self.roots.iter().position(|&r| r == root).map(|i| &self.root_weights[i])
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn diff(&self, v: usize) -> &DiffList {
        &self.diffs[v]
    }

    pub fn diff_mut(&mut self, v: usize) -> &mut DiffList {
        &mut self.diffs[v]
    }

    /// Parents before children.
    pub fn eval_order(&self) -> &[usize] {
        &self.eval_order
    }

    pub fn n(&self) -> usize {
        self.shape.c_out
    }

    /// Bits feeding XNOR gates: `roots * full + sum of diff lengths`.
    pub fn params_bits(&self) -> u64 {
        self.roots.len() as u64 * self.shape.full() as u64 + self.diffs.iter().map(|d| d.len() as u64).sum::<u64>()
    }

    /// XNOR operations per output pixel; numerically equal to [`Self::params_bits`].
    pub fn xnor_per_pixel(&self) -> u64 {
        self.params_bits()
    }

    /// Edge hops from each channel to its root.
    pub fn stages(&self) -> Vec<usize> {
        let mut stage = vec![0; self.n()];
        for &v in &self.eval_order {
            if let Some(p) = self.parent[v] {
                stage[v] = stage[p] + 1;
            }
        }
        stage
    }

    /// Longest root-to-channel chain in edges.
    pub fn depth(&self) -> usize {
        self.stages().into_iter().max().unwrap_or(0)
    }

    /// Rebuilds every channel's weights by walking the diff lists from the roots.
    pub fn reconstruct_weights(&self) -> Result<Vec<BinaryWeightSet>> {
        let mut out: Vec<Option<BinaryWeightSet>> = vec![None; self.n()];
        for (r, w) in self.roots.iter().zip(&self.root_weights) {
            out[*r] = Some(w.clone());
        }
        for &v in &self.eval_order {
            if let Some(p) = self.parent[v] {
                let pw = out[p].as_ref().expect("parent evaluated first");
                out[v] = Some(self.diffs[v].apply(pw)?);
            }
        }
        Ok(out.into_iter().map(|w| w.expect("all channels reached")).collect())
    }

    pub fn reconstruct_layer(&self) -> Result<BinaryLayer> {
        BinaryLayer::new(self.shape, self.reconstruct_weights()?, self.alpha)
    }

    /// The single-root schedule as a spanning tree, with diff lengths as edge weights.
    pub fn as_tree(&self) -> Result<SpanningTree> {
        if self.roots.len() != 1 {
            return Err(Error::InvalidSchedule(format!("{} roots, expected 1", self.roots.len())));
        }
        let w = self.diffs.iter().map(|d| d.len() as u32).collect();
        SpanningTree::with_weights(self.roots[0], self.parent.clone(), w)
    }
}

/// Schedule following `tree`, with diff lists taken from `layer`'s weights.
pub fn schedule_from_tree(t: &SpanningTree, layer: &BinaryLayer, kind: ScheduleKind) -> Result<ComputeSchedule> {
    let n = layer.shape().c_out;
    if t.n() != n {
        return Err(Error::ShapeMismatch(format!("tree has {} vertices for c_out = {n}", t.n())));
    }
    let mut diffs = vec![DiffList::default(); n];
    for (v, d) in diffs.iter_mut().enumerate() {
        if let Some(p) = t.parent(v) {
            *d = DiffList::between(layer.weight(p), layer.weight(v))?;
        }
    }
    let root = t.root();
    ComputeSchedule::from_parts(
        *layer.shape(),
        kind,
        layer.alpha(),
        vec![(root, layer.weight(root).clone())],
        t.parents().to_vec(),
        diffs,
    )
}

/// Every center is a root; members reuse their center.
pub fn schedule_from_forest(f: &StarForest, layer: &BinaryLayer) -> Result<ComputeSchedule> {
    let n = layer.shape().c_out;
    if f.n() != n {
        return Err(Error::ShapeMismatch(format!("forest has {} vertices for c_out = {n}", f.n())));
    }
    let mut parent = vec![None; n];
    let mut diffs = vec![DiffList::default(); n];
    for v in 0..n {
        if !f.is_center(v) {
            let c = f.assignment()[v];
            parent[v] = Some(c);
            diffs[v] = DiffList::between(layer.weight(c), layer.weight(v))?;
        }
    }
    let roots = f.centers().iter().map(|&c| (c, layer.weight(c).clone())).collect();
    ComputeSchedule::from_parts(*layer.shape(), ScheduleKind::Kmedoid, layer.alpha(), roots, parent, diffs)
}

/// Reused-plus-root weights over all weights: `params_bits / (c_out * full)`.
pub fn compression_ratio(s: &ComputeSchedule) -> f64 {
    s.params_bits() as f64 / (s.shape.c_out as f64 * s.shape.full() as f64)
}

/// XNOR count for one activation map: `xnor_per_pixel * h_out * w_out`.
pub fn bitops_total(s: &ComputeSchedule) -> u64 {
    s.xnor_per_pixel() * (s.shape.h_out() * s.shape.w_out()) as u64
}

/// Synchronization registers needed to line all channel outputs up.
///
/// A channel at tree stage `k` becomes ready in clock `ceil(k / adders_per_stage)`,
/// where `adders_per_stage` is the number of chained reuse additions that fit in
/// one clock. Each channel is delayed to the last ready clock with one register
/// per clock of slack.
pub fn register_estimate(s: &ComputeSchedule, adders_per_stage: usize) -> Result<u64> {
    if adders_per_stage == 0 {
        return Err(Error::InvalidParameter("adders_per_stage must be at least 1".into()));
    }
    let clocks: Vec<usize> = s.stages().into_iter().map(|k| k.div_ceil(adders_per_stage)).collect();
    let last = clocks.iter().copied().max().unwrap_or(0);
    Ok(clocks.iter().map(|&c| (last - c) as u64).sum())
}

/// One row of an analysis report.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub method: String,
    pub params_bits: u64,
    pub xnor_per_pixel: u64,
    pub bitops_total: u64,
    pub ratio: f64,
    /// Longest chain in edges.
    pub depth: usize,
    pub sync_registers: u64,
    pub exploration_seconds: f64,
}

impl CostReport {
    pub fn from_schedule(s: &ComputeSchedule, adders_per_stage: usize, exploration: Duration) -> Result<Self> {
        Ok(CostReport {
            method: s.kind().to_string(),
            params_bits: s.params_bits(),
            xnor_per_pixel: s.xnor_per_pixel(),
            bitops_total: bitops_total(s),
            ratio: compression_ratio(s),
            depth: s.depth(),
            sync_registers: register_estimate(s, adders_per_stage)?,
            exploration_seconds: exploration.as_secs_f64(),
        })
    }

    /// Longest chain counted in vertices rather than edges.
    pub fn depth_vertices(&self) -> usize {
        self.depth + 1
    }
}

pub const REPORT_HEADER: &str =
    "method,params_bits,xnor_per_pixel,bitops_total,ratio,depth,sync_registers,exploration_seconds";

pub fn write_report<W: Write>(rows: &[CostReport], mut sink: W) -> Result<()> {
    writeln!(sink, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{}",
            r.method,
            r.params_bits,
            r.xnor_per_pixel,
            r.bitops_total,
            r.ratio,
            r.depth,
            r.sync_registers,
            r.exploration_seconds
        )?;
    }
    Ok(())
}

/// How each method searches for its ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanOptions {
    /// Fixed K-medoid center count; `None` sweeps every count and keeps the cheapest.
    pub centers: Option<usize>,
    pub seed: u64,
    pub restarts: usize,
    /// Re-root MST schedules at a minimum-depth vertex.
    pub min_depth: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions { centers: None, seed: 0, restarts: 4, min_depth: true }
    }
}

/// Builds the `kind` schedule for `layer` from its precomputed graph, returning it
/// with the wall-clock time the ordering search took.
pub fn plan_schedule(
    layer: &BinaryLayer,
    g: &DistanceGraph,
    kind: ScheduleKind,
    opts: &PlanOptions,
) -> Result<(ComputeSchedule, Duration)> {
    let start = Instant::now();
    match kind {
        ScheduleKind::Standard => {
            let elapsed = start.elapsed();
            Ok((ComputeSchedule::standard(layer)?, elapsed))
        }
        ScheduleKind::Mst => {
            let t = prim_mst(g, 0)?;
            let t = if opts.min_depth { reroot_min_depth(&t) } else { t };
            let elapsed = start.elapsed();
            Ok((schedule_from_tree(&t, layer, kind)?, elapsed))
        }
        ScheduleKind::Hampath => {
            let p = held_karp_shortest_ham_path(g)?;
            let t = ham_path_as_tree(&p, g)?;
            let elapsed = start.elapsed();
            Ok((schedule_from_tree(&t, layer, kind)?, elapsed))
        }
        ScheduleKind::Kmedoid => {
            let forest = match opts.centers {
                Some(r) => kmedoid_best_of(g, r, opts.seed, opts.restarts)?,
                None => {
                    let mut best: Option<(u64, StarForest)> = None;
                    for r in 1..=g.n() {
                        let f = kmedoid_best_of(g, r, opts.seed, opts.restarts)?;
                        let c = kmedoid_cost(&f, g);
                        if best.as_ref().is_none_or(|(b, _)| c < *b) {
                            best = Some((c, f));
                        }
                    }
                    best.expect("graph has at least one vertex").1
                }
            };
            let elapsed = start.elapsed();
            Ok((schedule_from_forest(&forest, layer)?, elapsed))
        }
    }
}

/// Cost rows for every requested method. Hamiltonian paths above the exact-solver
/// cap are skipped and reported in the second return value.
pub fn analyze_layer(
    layer: &BinaryLayer,
    methods: &[ScheduleKind],
    opts: &PlanOptions,
    adders_per_stage: usize,
) -> Result<(Vec<CostReport>, Vec<String>)> {
    let g = build_distance_graph(layer);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &kind in methods {
        if kind == ScheduleKind::Hampath && g.n() > HAMILTONIAN_CAP {
            skipped.push(format!(
                "hampath skipped: c_out = {} exceeds exact solver cap of {HAMILTONIAN_CAP}",
                g.n()
            ));
            continue;
        }
        let (s, t) = plan_schedule(layer, &g, kind, opts)?;
        rows.push(CostReport::from_schedule(&s, adders_per_stage, t)?);
    }
    Ok((rows, skipped))
}

pub fn write_schedule<W: Write>(s: &ComputeSchedule, mut sink: W) -> Result<()> {
    let sh = &s.shape;
    writeln!(sink, "version=1")?;
    writeln!(sink, "kind={}", s.kind)?;
    writeln!(sink, "shape={} {} {} {} {} {}", sh.c_out, sh.c_in, sh.m, sh.h_in, sh.w_in, sh.pad)?;
    writeln!(sink, "alpha={}", s.alpha)?;
    let roots: Vec<String> = s.roots.iter().map(|r| r.to_string()).collect();
    writeln!(sink, "roots={}", roots.join(" "))?;
    for (r, w) in s.roots.iter().zip(&s.root_weights) {
        let bits: String = w.bits().iter().map(|b| if b { '1' } else { '0' }).collect();
        writeln!(sink, "rootbits {r} {bits}")?;
    }
    for v in 0..s.n() {
        if let Some(p) = s.parent[v] {
            write!(sink, "{v} {p} {}", s.diffs[v].len())?;
            for &(pos, b) in s.diffs[v].entries() {
                write!(sink, " {pos}:{}", u8::from(b))?;
            }
            writeln!(sink)?;
        }
    }
    sink.flush()?;
    Ok(())
}

pub fn read_schedule<R: BufRead>(source: R) -> Result<ComputeSchedule> {
    let mut lines = Vec::new();
    for (i, l) in source.lines().enumerate() {
        let l = l?;
        let t = l.split('#').next().unwrap_or("").trim().to_string();
        if !t.is_empty() {
            lines.push((i + 1, t));
        }
    }
    let mut it = lines.into_iter().peekable();
    let mut header = |key: &str| -> Result<(usize, String)> {
        match it.next() {
            Some((n, l)) => match l.split_once('=') {
                Some((k, v)) if k.trim() == key => Ok((n, v.trim().to_string())),
                _ => Err(Error::Parse { line: n, msg: format!("expected `{key}=`") }),
            },
            None => Err(Error::Parse { line: 0, msg: format!("missing `{key}=`") }),
        }
    };
    let (n, version) = header("version")?;
    if version != "1" {
        return Err(Error::Parse { line: n, msg: format!("unsupported version {version}") });
    }
    let (n, kind) = header("kind")?;
    let kind: ScheduleKind = kind.parse().map_err(|_| Error::Parse { line: n, msg: format!("unknown kind {kind:?}") })?;
    let (n, shape) = header("shape")?;
    let dims = parse_usizes(&shape, n)?;
    let [c_out, c_in, m, h_in, w_in, pad] = dims[..] else {
        return Err(Error::Parse { line: n, msg: "shape needs 6 fields".into() });
    };
    let shape = LayerShape::new(c_out, c_in, m, h_in, w_in, pad)?;
    let (n, alpha) = header("alpha")?;
    let alpha: f64 = alpha.parse().map_err(|_| Error::Parse { line: n, msg: format!("bad alpha {alpha:?}") })?;
    let (n, roots) = header("roots")?;
    let roots = parse_usizes(&roots, n)?;

    let mut root_weights = Vec::with_capacity(roots.len());
    let mut parent = vec![None; c_out];
    let mut diffs = vec![DiffList::default(); c_out];
    let mut seen = vec![false; c_out];
    for (n, line) in it {
        let mut toks = line.split_whitespace();
        let first = toks.next().unwrap_or("");
        if first == "rootbits" {
            let r = parse_field::<usize>(toks.next(), n, "root id")?;
            let bits = toks.next().ok_or_else(|| Error::Parse { line: n, msg: "missing root bits".into() })?;
            let mut bv = BitVec::zeros(0);
            for ch in bits.chars() {
                match ch {
                    '0' => bv.push(false),
                    '1' => bv.push(true),
                    _ => return Err(Error::Parse { line: n, msg: format!("bad bit {ch:?}") }),
                }
            }
            if !roots.contains(&r) {
                return Err(Error::Parse { line: n, msg: format!("rootbits for non-root {r}") });
            }
            root_weights.push((r, BinaryWeightSet::new(bv)));
            continue;
        }
        let child: usize = first.parse().map_err(|_| Error::Parse { line: n, msg: format!("bad child {first:?}") })?;
        let p = parse_field::<usize>(toks.next(), n, "parent")?;
        let k = parse_field::<usize>(toks.next(), n, "diff count")?;
        if child >= c_out || p >= c_out {
            return Err(Error::Parse { line: n, msg: format!("channel out of range in `{line}`") });
        }
        if std::mem::replace(&mut seen[child], true) {
            return Err(Error::Parse { line: n, msg: format!("duplicate record for channel {child}") });
        }
        let mut entries = Vec::with_capacity(k);
        for tok in toks {
            let (pos, b) = tok
                .split_once(':')
                .ok_or_else(|| Error::Parse { line: n, msg: format!("bad diff entry {tok:?}") })?;
            let pos: u32 = pos.parse().map_err(|_| Error::Parse { line: n, msg: format!("bad position {pos:?}") })?;
            let b = match b {
                "0" => false,
                "1" => true,
                _ => return Err(Error::Parse { line: n, msg: format!("bad bit {b:?}") }),
            };
            entries.push((pos, b));
        }
        if entries.len() != k {
            return Err(Error::Parse { line: n, msg: format!("declared {k} diffs, found {}", entries.len()) });
        }
        parent[child] = Some(p);
        diffs[child] = DiffList::new(entries).map_err(|e| Error::Parse { line: n, msg: e.to_string() })?;
    }
    if root_weights.len() != roots.len() {
        return Err(Error::Parse { line: 0, msg: "every root needs a rootbits line".into() });
    }
    ComputeSchedule::from_parts(shape, kind, alpha, root_weights, parent, diffs)
}

fn parse_usizes(s: &str, line: usize) -> Result<Vec<usize>> {
    s.split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| Error::Parse { line, msg: format!("bad integer {t:?}") }))
        .collect()
}

fn parse_field<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| Error::Parse { line, msg: format!("bad or missing {what}") })
}
