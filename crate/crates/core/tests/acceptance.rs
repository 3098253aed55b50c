//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness so the verdicts are always printed; exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bnn_mst::baselines::{ham_path_as_tree, held_karp_shortest_ham_path, kmedoid_cluster};
use bnn_mst::format::{read_bac, read_bwt, write_bac, write_bwt};
use bnn_mst::graph::{build_distance_graph, prim_mst, reroot_min_depth, tree_depth, DistanceGraph, SpanningTree};
use bnn_mst::schedule::{
    bitops_total, compression_ratio, plan_schedule, read_schedule, schedule_from_forest, schedule_from_tree,
    write_schedule, ComputeSchedule, PlanOptions, ScheduleKind,
};
use bnn_mst::simulate::{assert_equivalent, direct_conv, reuse_eval};
use bnn_mst::train::{loss_and_grad, train_toy, Mode, NetSpec, Params, Regularizer, TrainConfig, TOY_LAMBDA, TOY_SWEEP};
use bnn_mst::{BinaryActivationMap, BinaryLayer, BinaryWeightSet, Error, LayerShape};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn random_graph(n: usize, max_w: u32, rng: &mut ChaCha8Rng) -> DistanceGraph {
    let mut d = vec![0u32; n * n];
    for i in 0..n {
        for j in 0..i {
            let w = rng.gen_range(0..=max_w);
            d[i * n + j] = w;
            d[j * n + i] = w;
        }
    }
    DistanceGraph::from_matrix(n, max_w as usize, d).unwrap()
}

fn median<T: Copy + PartialOrd>(v: &[T]) -> T {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s[s.len() / 2]
}

/// Four 9-bit channels around an all-ones hub, two, three and two bits away.
fn worked_example_layer() -> BinaryLayer {
    let hub = [1i8; 9];
    let flip = |pos: &[usize]| {
        let mut w = hub;
        for &p in pos {
            w[p] = -1;
        }
        BinaryWeightSet::from_signs(&w)
    };
    let weights = vec![flip(&[0, 1]), flip(&[2, 3, 4]), flip(&[5, 6]), BinaryWeightSet::from_signs(&hub)];
    BinaryLayer::new(LayerShape::same(4, 1, 3, 4, 4).unwrap(), weights, 1.0).unwrap()
}

fn criterion_1() -> Outcome {
    let layer = worked_example_layer();
    let run = || {
        let g = build_distance_graph(&layer);
        let t = prim_mst(&g, 0).unwrap();
        let s = schedule_from_tree(&t, &layer, ScheduleKind::Mst).unwrap();
        (t, s)
    };
    let (t, s) = run();
    let mut edges: Vec<u32> = (0..4).filter(|&v| t.parent(v).is_some()).map(|v| t.edge_weight(v)).collect();
    edges.sort();
    ensure!(edges == [2, 2, 3], "MST edge weights {edges:?}");
    // exact rational: params / (c_out * full) == 16 / 36
    ensure!(s.params_bits() * 36 == 16 * 36, "params_bits {}", s.params_bits());
    let ratio = compression_ratio(&s);
    ensure!(ratio == 16.0 / 36.0, "ratio {ratio}");
    ensure!((ratio - 0.44).abs() < 0.005, "ratio {ratio} does not round to 0.44");
    let times: Vec<Duration> = (0..11)
        .map(|_| {
            let start = Instant::now();
            let (_, s) = run();
            std::hint::black_box(compression_ratio(&s));
            start.elapsed()
        })
        .collect();
    let med = median(&times);
    ensure!(med < Duration::from_millis(1), "median runtime {med:?}");
    Ok(format!("ratio = 16/36 = {ratio:.4}, median runtime {med:?}"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counts = [0usize; 3];
    let mut instances = 0;
    while counts.iter().any(|&c| c < 1000) {
        let c_out = rng.gen_range(1..=32);
        let shape = LayerShape::same(c_out, rng.gen_range(1..=8), 3, rng.gen_range(1..=16), rng.gen_range(1..=16)).unwrap();
        let layer = BinaryLayer::random(shape, &mut rng).unwrap().with_alpha(rng.gen_range(0.01..4.0));
        let act = BinaryActivationMap::random_for(&shape, &mut rng).unwrap();
        let g = build_distance_graph(&layer);
        let direct = direct_conv(&layer, &act).unwrap();
        let mut schedules: Vec<(usize, ComputeSchedule)> = Vec::new();
        let t = reroot_min_depth(&prim_mst(&g, rng.gen_range(0..c_out)).unwrap());
        schedules.push((0, schedule_from_tree(&t, &layer, ScheduleKind::Mst).unwrap()));
        let f = kmedoid_cluster(&g, rng.gen_range(1..=c_out), rng.gen()).unwrap();
        schedules.push((1, schedule_from_forest(&f, &layer).unwrap()));
        if c_out <= 16 {
            let p = held_karp_shortest_ham_path(&g).unwrap();
            schedules.push((2, schedule_from_tree(&ham_path_as_tree(&p, &g).unwrap(), &layer, ScheduleKind::Hampath).unwrap()));
        }
        for (k, s) in &schedules {
            let report = assert_equivalent(&layer, &act, s).unwrap();
            ensure!(report.passed(), "instance {instances} kind {}: deviations {:?}", s.kind(), report.max_abs_diff);
            ensure!(reuse_eval(s, &act).unwrap() == direct, "instance {instances}: output maps differ");
            counts[*k] += 1;
        }
        instances += 1;
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "{instances} instances; mst {}, kmedoid {}, hampath {} schedules with zero deviation in {elapsed:.2?}",
        counts[0], counts[1], counts[2]
    ))
}

/// All labeled trees on `n` vertices via Prüfer sequences.
fn min_spanning_total_by_pruefer(g: &DistanceGraph) -> u64 {
    let n = g.n();
    if n <= 1 {
        return 0;
    }
    if n == 2 {
        return g.dist(0, 1) as u64;
    }
    let len = n - 2;
    let mut best = u64::MAX;
    let mut seq = vec![0usize; len];
    loop {
        let mut degree = vec![1usize; n];
        for &s in &seq {
            degree[s] += 1;
        }
        let mut total = 0u64;
        for &s in &seq {
            let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
            total += g.dist(leaf, s) as u64;
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
        total += g.dist(rest[0], rest[1]) as u64;
        best = best.min(total);
        // next sequence in base n
        let mut i = 0;
        while i < len {
            seq[i] += 1;
            if seq[i] < n {
                break;
            }
            seq[i] = 0;
            i += 1;
        }
        if i == len {
            return best;
        }
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..1200 {
        let n = rng.gen_range(1..=6);
        let max_w = if trial % 2 == 0 { 4 } else { 1000 };
        let g = random_graph(n, max_w, &mut rng);
        let prim = prim_mst(&g, rng.gen_range(0..n)).unwrap().total_distance();
        let oracle = min_spanning_total_by_pruefer(&g);
        ensure!(prim == oracle, "trial {trial}: prim {prim} vs enumeration {oracle}");
    }
    Ok("1200 graphs, Prim equals Prüfer enumeration".into())
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut comparisons = 0;
    for trial in 0..220 {
        let c_out = rng.gen_range(1..=12);
        let shape = LayerShape::same(c_out, rng.gen_range(1..=8), 3, 8, 8).unwrap();
        let layer = BinaryLayer::random(shape, &mut rng).unwrap();
        let g = build_distance_graph(&layer);
        let mst = bitops_total(&schedule_from_tree(&prim_mst(&g, 0).unwrap(), &layer, ScheduleKind::Mst).unwrap());
        let p = held_karp_shortest_ham_path(&g).unwrap();
        let ham = bitops_total(&schedule_from_tree(&ham_path_as_tree(&p, &g).unwrap(), &layer, ScheduleKind::Hampath).unwrap());
        let standard = bitops_total(&ComputeSchedule::standard(&layer).unwrap());
        ensure!(mst <= ham && ham <= standard, "trial {trial}: mst {mst}, hampath {ham}, standard {standard}");
        for r in 1..=c_out {
            let f = kmedoid_cluster(&g, r, trial as u64).unwrap();
            let km = bitops_total(&schedule_from_forest(&f, &layer).unwrap());
            ensure!(mst <= km, "trial {trial}, r = {r}: mst {mst} > kmedoid {km}");
            comparisons += 1;
        }
    }
    Ok(format!("220 layers, {comparisons} kmedoid comparisons, zero violations"))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                cur.push(v);
                go(cur, used, out);
                cur.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let perms: Vec<Vec<Vec<usize>>> = (0..=8).map(permutations).collect();
    for trial in 0..240 {
        let n = rng.gen_range(1..=8);
        let g = random_graph(n, if trial % 3 == 0 { 3 } else { 500 }, &mut rng);
        let hk = held_karp_shortest_ham_path(&g).unwrap();
        let brute = perms[n]
            .iter()
            .map(|p| p.windows(2).map(|w| g.dist(w[0], w[1]) as u64).sum::<u64>())
            .min()
            .unwrap();
        let walked: u64 = hk.order().windows(2).map(|w| g.dist(w[0], w[1]) as u64).sum();
        ensure!(hk.total() == brute && walked == brute, "trial {trial}: held-karp {} vs brute force {brute}", hk.total());
    }
    Ok("240 instances up to 8 vertices, Held-Karp equals brute force".into())
}

fn random_tree(n: usize, rng: &mut ChaCha8Rng) -> SpanningTree {
    let mut label: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        label.swap(i, rng.gen_range(0..=i));
    }
    let mut parent = vec![None; n];
    let mut weight = vec![0u32; n];
    for v in 1..n {
        parent[label[v]] = Some(label[rng.gen_range(0..v)]);
        weight[label[v]] = rng.gen_range(0..50);
    }
    SpanningTree::with_weights(label[0], parent, weight).unwrap()
}

/// Height of the tree when hung from `root`, by BFS over undirected edges.
fn height_from(t: &SpanningTree, root: usize) -> usize {
    let adj = t.adjacency();
    let mut dist = vec![usize::MAX; t.n()];
    dist[root] = 0;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &(v, _) in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist.into_iter().max().unwrap()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..600 {
        let n = rng.gen_range(1..=10);
        let t = random_tree(n, &mut rng);
        let r = reroot_min_depth(&t);
        let best = (0..n).map(|v| height_from(&t, v)).min().unwrap();
        ensure!(tree_depth(&r) == best, "trial {trial}: depth {} vs brute force {best}", tree_depth(&r));
        ensure!(r.total_distance() == t.total_distance(), "trial {trial}: total changed");
        let mut a = t.undirected_edges();
        let mut b = r.undirected_edges();
        a.sort();
        b.sort();
        ensure!(a == b, "trial {trial}: edge set changed");
    }
    Ok("600 trees, re-rooted depth equals the all-roots minimum".into())
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    for _ in 0..120 {
        let n = rng.gen_range(1..=12);
        let layer = BinaryLayer::random(LayerShape::same(n, rng.gen_range(1..=4), 3, 4, 4).unwrap(), &mut rng).unwrap();
        let g = build_distance_graph(&layer);
        for r in 1..=n {
            let s = schedule_from_forest(&kmedoid_cluster(&g, r, rng.gen()).unwrap(), &layer).unwrap();
            let want = usize::from(r < n);
            ensure!(s.depth() == want, "kmedoid n = {n}, r = {r}: depth {}", s.depth());
            checked += 1;
        }
        let p = held_karp_shortest_ham_path(&g).unwrap();
        let s = schedule_from_tree(&ham_path_as_tree(&p, &g).unwrap(), &layer, ScheduleKind::Hampath).unwrap();
        ensure!(s.depth() == n - 1, "hampath n = {n}: depth {}", s.depth());
        checked += 1;
    }
    Ok(format!("{checked} schedules: kmedoid depth 1, hampath depth V-1"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let big = BinaryLayer::random(LayerShape::same(512, 64, 3, 4, 4).unwrap(), &mut rng).unwrap();
    let g = build_distance_graph(&big);
    let start = Instant::now();
    let t = prim_mst(&g, 0).unwrap();
    let prim = start.elapsed();
    std::hint::black_box(t.total_distance());
    ensure!(prim < Duration::from_secs(1), "Prim on 512 vertices took {prim:?}");

    let shape = LayerShape::same(16, 16, 3, 32, 32).unwrap();
    let mut times = [Vec::new(), Vec::new(), Vec::new()];
    for seed in 0..5 {
        let layer = BinaryLayer::random(shape, &mut ChaCha8Rng::seed_from_u64(100 + seed)).unwrap();
        let g = build_distance_graph(&layer);
        let opts = PlanOptions { seed, ..PlanOptions::default() };
        for (k, kind) in [ScheduleKind::Mst, ScheduleKind::Kmedoid, ScheduleKind::Hampath].into_iter().enumerate() {
            times[k].push(plan_schedule(&layer, &g, kind, &opts).unwrap().1);
        }
    }
    let [mst, km, hk] = [median(&times[0]), median(&times[1]), median(&times[2])];
    ensure!(mst < km && km < hk, "exploration medians mst {mst:?}, kmedoid {km:?}, held-karp {hk:?}");
    Ok(format!("Prim V=512 in {prim:?}; exploration mst {mst:?} < kmedoid {km:?} < held-karp {hk:?}"))
}

fn criterion_9() -> Outcome {
    let seeds: Vec<u64> = (0..10).collect();
    let mut finals = Vec::new();
    for &seed in &seeds {
        let row: Vec<_> = TOY_SWEEP
            .iter()
            .map(|&lambda| {
                let s = train_toy(&TrainConfig { lambda, seed, ..TrainConfig::default() }).unwrap();
                s.final_metrics().clone()
            })
            .collect();
        finals.push(row);
    }
    let on = TOY_SWEEP.iter().position(|&l| l == TOY_LAMBDA).unwrap();
    let dist_off: Vec<u64> = finals.iter().map(|r| r[0].sum_mst_distance).collect();
    let dist_on: Vec<u64> = finals.iter().map(|r| r[on].sum_mst_distance).collect();
    let (m_off, m_on) = (median(&dist_off), median(&dist_on));
    ensure!(m_on < m_off, "median MST distance {m_on} with regularizer vs {m_off} without");

    let monotone = finals.iter().filter(|r| r.windows(2).all(|w| w[1].params_bits <= w[0].params_bits)).count();
    ensure!(monotone >= 8, "params_bits nonincreasing in only {monotone}/10 seeds");

    let mut worst_gap = 0.0f64;
    for (seed, r) in seeds.iter().zip(&finals) {
        let gap = (r[on].test_acc - r[0].test_acc).abs() * 100.0;
        worst_gap = worst_gap.max(gap);
        ensure!(gap <= 5.0, "seed {seed}: test accuracy {:.3} vs {:.3} without regularizer", r[on].test_acc, r[0].test_acc);
    }
    let acc = |k: usize| median(&finals.iter().map(|r| r[k].test_acc).collect::<Vec<_>>()) * 100.0;
    let bits = |k: usize| median(&finals.iter().map(|r| r[k].params_bits).collect::<Vec<_>>());
    Ok(format!(
        "median MST distance {m_off} -> {m_on}; params_bits monotone in {monotone}/10 seeds; \
         median params_bits {:?}, median test acc {:.1}/{:.1}/{:.1}% for lambda {:?}; worst accuracy gap {worst_gap:.1} points",
        (bits(0), bits(1), bits(2)),
        acc(0),
        acc(1),
        acc(2),
        TOY_SWEEP
    ))
}

fn criterion_10() -> Outcome {
    let spec = NetSpec { hw: 5, stem: 2, binary: vec![4], classes: 3 };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut p = Params::init(&spec, &mut rng);
    for w in p.bin_w[0].iter_mut() {
        *w = rng.gen_range(0.15..0.85) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
    }
    p.alpha[0] = 1.3;
    ensure!(p.count() <= 200, "{} parameters", p.count());
    let images: Vec<f64> = (0..6 * 25).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let labels = [0, 1, 2, 2, 1, 0];
    let targets = vec![(0..4 * 18).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect::<Vec<f64>>()];
    let reg = Regularizer { targets: &targets, coef: 0.02 };
    let mut g = p.zeros_like();
    loss_and_grad(&spec, &p, Mode::Soft, &images, &labels, Some(&reg), Some(&mut g));
    let analytic: Vec<f64> = g.tensors().concat();

    let h = 1e-5;
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let loss_at = |delta: f64| {
            let mut q = p.clone();
            let mut k = i;
            for t in q.tensors_mut() {
                if k < t.len() {
                    t[k] += delta;
                    break;
                }
                k -= t.len();
            }
            loss_and_grad(&spec, &q, Mode::Soft, &images, &labels, Some(&reg), None).loss
        };
        let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    ensure!(worst <= 1e-4, "worst relative error {worst:.2e}");
    Ok(format!("{} parameters, worst relative error {worst:.2e}", p.count()))
}

fn criterion_11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..1000 {
        let shape = LayerShape::same(rng.gen_range(1..=20), rng.gen_range(1..=6), [1, 3, 5][rng.gen_range(0..3)], rng.gen_range(5..=9), rng.gen_range(5..=9)).unwrap();
        let layer = BinaryLayer::random(shape, &mut rng).unwrap().with_alpha(rng.gen_range(-3.0..3.0));
        let mut buf = Vec::new();
        write_bwt(&layer, &mut buf).unwrap();
        ensure!(read_bwt(buf.as_slice()).unwrap() == layer, "trial {trial}: BWT1 round trip");

        let act = BinaryActivationMap::random_for(&shape, &mut rng).unwrap();
        let mut abuf = Vec::new();
        write_bac(&act, &mut abuf).unwrap();
        ensure!(read_bac(abuf.as_slice()).unwrap() == act, "trial {trial}: BAC1 round trip");

        let g = build_distance_graph(&layer);
        let s = match trial % 3 {
            0 => schedule_from_tree(&reroot_min_depth(&prim_mst(&g, 0).unwrap()), &layer, ScheduleKind::Mst).unwrap(),
            1 => schedule_from_forest(&kmedoid_cluster(&g, rng.gen_range(1..=g.n()), rng.gen()).unwrap(), &layer).unwrap(),
            _ => ComputeSchedule::standard(&layer).unwrap(),
        };
        let mut sbuf = Vec::new();
        write_schedule(&s, &mut sbuf).unwrap();
        ensure!(read_schedule(sbuf.as_slice()).unwrap() == s, "trial {trial}: schedule round trip");

        if trial % 50 == 0 {
            let mut bad = buf.clone();
            bad[..4].copy_from_slice(b"XBWT");
            ensure!(matches!(read_bwt(bad.as_slice()), Err(Error::BadMagic { .. })), "trial {trial}: bad weight magic");
            let record = shape.full().div_ceil(8);
            let k = rng.gen_range(0..shape.c_out);
            let cut = 36 + k * record + rng.gen_range(0..record);
            ensure!(
                matches!(read_bwt(&buf[..cut]), Err(Error::TruncatedAtChannel(c)) if c == k),
                "trial {trial}: truncation in channel {k}"
            );
            ensure!(matches!(read_bwt(&buf[..20]), Err(Error::TruncatedHeader)), "trial {trial}: header truncation");
            let mut bad = abuf.clone();
            bad[3] = b'0';
            ensure!(matches!(read_bac(bad.as_slice()), Err(Error::BadMagic { .. })), "trial {trial}: bad activation magic");
            ensure!(
                matches!(read_bac(&abuf[..abuf.len() - 1]), Err(Error::TruncatedPayload)),
                "trial {trial}: activation truncation"
            );
            let text = String::from_utf8(sbuf.clone()).unwrap().replacen("kind=", "kind=x", 1);
            ensure!(matches!(read_schedule(text.as_bytes()), Err(Error::Parse { line: 2, .. })), "trial {trial}: schedule kind");
        }
    }
    Ok("1000 instances of BWT1, BAC1 and schedule files round-trip; corruption gives typed errors".into())
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("worked-example ratio", criterion_1),
        ("direct and reuse outputs agree", criterion_2),
        ("MST optimality", criterion_3),
        ("spanning-tree bit-op ordering", criterion_4),
        ("exact Hamiltonian path", criterion_5),
        ("min-depth re-rooting", criterion_6),
        ("depth constants", criterion_7),
        ("performance", criterion_8),
        ("trainer efficacy", criterion_9),
        ("soft-mode gradient check", criterion_10),
        ("format round trips", criterion_11),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} {name}: PASS ({detail}) [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} {name}: FAIL ({why}) [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
