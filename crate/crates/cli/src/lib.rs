//! Command implementations for the `bnn-mst` binary.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bnn_mst::baselines::HAMILTONIAN_CAP;
use bnn_mst::format::{import_text, read_bac, read_bwt, write_bac, write_bwt};
use bnn_mst::schedule::{
    analyze_layer, bitops_total, plan_schedule, read_schedule, write_report, write_schedule, CostReport, PlanOptions,
    ScheduleKind,
};
use bnn_mst::simulate::{assert_equivalent, reuse_eval, write_output_map};
use bnn_mst::train::{train_toy, write_metrics, TrainConfig, TrainState, TOY_LAMBDA};
use bnn_mst::{build_distance_graph, BinaryActivationMap, BinaryLayer, LayerShape};

#[derive(Debug, Parser)]
#[command(name = "bnn-mst", version, about = "Spanning-tree compute reuse for binary convolution layers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Random binary layer as a BWT1 file
    Gen(GenArgs),
    /// Random binary activation map as a BAC1 file
    GenAct(GenActArgs),
    /// Convert a text weight listing to BWT1
    Import(ImportArgs),
    /// Cost report per scheduling method
    Analyze(AnalyzeArgs),
    /// Write a compute schedule
    Schedule(ScheduleArgs),
    /// Check a schedule against direct convolution
    Simulate(SimulateArgs),
    /// Aggregate method comparison over random layers
    Compare(CompareArgs),
    /// Train the toy network with the distance regularizer
    Train(TrainArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// c_out,c_in,m,h,w[,pad]; pad defaults to (m-1)/2
    #[arg(long, value_parser = parse_shape)]
    pub shape: LayerShape,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenActArgs {
    /// c_in,h,w
    #[arg(long, value_parser = parse_triple)]
    pub shape: (usize, usize, usize),
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Input map height and width as h,w
    #[arg(long, value_parser = parse_pair)]
    pub map: (usize, usize),
    /// Zero padding; defaults to (m-1)/2
    #[arg(long)]
    pub pad: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct PlanArgs {
    /// Fixed K-medoid center count; all counts are tried when omitted
    #[arg(long)]
    pub centers: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub adders_per_stage: usize,
}

impl PlanArgs {
    fn options(&self) -> PlanOptions {
        PlanOptions { centers: self.centers, seed: self.seed, ..PlanOptions::default() }
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Comma-separated subset of standard,mst,kmedoid,hampath
    #[arg(long, value_delimiter = ',', default_value = "standard,mst,kmedoid,hampath")]
    pub method: Vec<ScheduleKind>,
    #[command(flatten)]
    pub plan: PlanArgs,
    /// CSV destination; printed to stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value = "mst")]
    pub method: ScheduleKind,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub activations: PathBuf,
    #[arg(long)]
    pub schedule: PathBuf,
    /// Also write the scheduled outputs here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// c_out,c_in,m,h,w[,pad]
    #[arg(long, value_parser = parse_shape, default_value = "16,16,3,32,32")]
    pub shape: LayerShape,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[command(flatten)]
    pub plan: PlanArgs,
    /// Per-trial CSV destination
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = TOY_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma0: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr0: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Centers per binary layer
    #[arg(long, default_value_t = 1)]
    pub centers: usize,
    /// Comma-separated lambdas; runs one training per value and writes sweep.csv
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<f64>>,
    /// Output directory for metrics and weight files
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or malformed inputs: exit 2.
    Input(String),
    /// A check ran and did not hold: exit 1.
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Verification(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Verification(m) => f.write_str(m),
        }
    }
}

impl From<bnn_mst::Error> for CliError {
    fn from(e: bnn_mst::Error) -> Self {
        match e {
            bnn_mst::Error::Diverged { .. } => CliError::Verification(e.to_string()),
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn parse_usizes(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"))).collect()
}

pub fn parse_shape(s: &str) -> Result<LayerShape, String> {
    let v = parse_usizes(s)?;
    let shape = match v[..] {
        [c_out, c_in, m, h, w] => LayerShape::same(c_out, c_in, m, h, w),
        [c_out, c_in, m, h, w, pad] => LayerShape::new(c_out, c_in, m, h, w, pad),
        _ => return Err("expected c_out,c_in,m,h,w[,pad]".into()),
    };
    shape.map_err(|e| e.to_string())
}

fn parse_triple(s: &str) -> Result<(usize, usize, usize), String> {
    match parse_usizes(s)?[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err("expected three comma-separated integers".into()),
    }
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    match parse_usizes(s)?[..] {
        [a, b] => Ok((a, b)),
        _ => Err("expected two comma-separated integers".into()),
    }
}

fn require_file(p: &Path) -> CliResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{}: no such file", p.display())))
    }
}

fn require_parent(p: &Path) -> CliResult<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => {
            Err(CliError::Input(format!("{}: directory does not exist", d.display())))
        }
        _ => Ok(()),
    }
}

fn create(p: &Path) -> CliResult<BufWriter<File>> {
    File::create(p).map(BufWriter::new).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
}

fn load_layer(p: &Path) -> CliResult<BinaryLayer> {
    let f = File::open(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
    read_bwt(BufReader::new(f)).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
}

fn load_activations(p: &Path) -> CliResult<BinaryActivationMap> {
    let f = File::open(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
    read_bac(BufReader::new(f)).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(a, out),
        Command::GenAct(a) => cmd_gen_act(a, out),
        Command::Import(a) => cmd_import(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Schedule(a) => cmd_schedule(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Compare(a) => cmd_compare(a, out),
        Command::Train(a) => cmd_train(a, out),
    }
}

pub fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> CliResult<()> {
    require_parent(&a.out)?;
    let layer = BinaryLayer::random(a.shape, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    write_bwt(&layer, create(&a.out)?)?;
    writeln!(out, "wrote {} channels of {} bits to {}", a.shape.c_out, a.shape.full(), a.out.display())?;
    Ok(())
}

pub fn cmd_gen_act(a: &GenActArgs, out: &mut dyn Write) -> CliResult<()> {
    require_parent(&a.out)?;
    let (c, h, w) = a.shape;
    let act = BinaryActivationMap::random(c, h, w, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    write_bac(&act, create(&a.out)?)?;
    writeln!(out, "wrote {c}x{h}x{w} activations to {}", a.out.display())?;
    Ok(())
}

pub fn cmd_import(a: &ImportArgs, out: &mut dyn Write) -> CliResult<()> {
    require_file(&a.input)?;
    require_parent(&a.out)?;
    let f = File::open(&a.input)?;
    let (h, w) = a.map;
    let layer = import_text(BufReader::new(f), h, w, a.pad)
        .map_err(|e| CliError::Input(format!("{}: {e}", a.input.display())))?;
    write_bwt(&layer, create(&a.out)?)?;
    writeln!(out, "imported {} channels to {}", layer.shape().c_out, a.out.display())?;
    Ok(())
}

fn print_table(rows: &[CostReport], out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<9} {:>11} {:>9} {:>14} {:>8} {:>6} {:>9} {:>12}",
        "method", "params_bits", "xnor/px", "bitops", "ratio", "depth", "registers", "explore_s"
    )?;
    for r in rows {
        writeln!(
            out,
            "{:<9} {:>11} {:>9} {:>14} {:>8.4} {:>6} {:>9} {:>12.6}",
            r.method, r.params_bits, r.xnor_per_pixel, r.bitops_total, r.ratio, r.depth, r.sync_registers, r.exploration_seconds
        )?;
    }
    Ok(())
}

pub fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> CliResult<()> {
    require_file(&a.weights)?;
    if let Some(p) = &a.out {
        require_parent(p)?;
    }
    let layer = load_layer(&a.weights)?;
    let (rows, skipped) = analyze_layer(&layer, &a.method, &a.plan.options(), a.plan.adders_per_stage)?;
    let mut csv = Vec::new();
    write_report(&rows, &mut csv)?;
    for s in &skipped {
        writeln!(csv, "# {s}")?;
        eprintln!("warning: {s}");
    }
    match &a.out {
        Some(p) => {
            let mut f = create(p)?;
            f.write_all(&csv)?;
            f.flush()?;
            print_table(&rows, out)?;
        }
        None => out.write_all(&csv)?,
    }
    Ok(())
}

pub fn cmd_schedule(a: &ScheduleArgs, out: &mut dyn Write) -> CliResult<()> {
    require_file(&a.weights)?;
    require_parent(&a.out)?;
    let layer = load_layer(&a.weights)?;
    let g = build_distance_graph(&layer);
    let (s, _) = plan_schedule(&layer, &g, a.method, &a.plan.options())?;
    write_schedule(&s, create(&a.out)?)?;
    writeln!(
        out,
        "{} schedule: {} roots, depth {}, {} parameter bits -> {}",
        a.method,
        s.roots().len(),
        s.depth(),
        s.params_bits(),
        a.out.display()
    )?;
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    for p in [&a.weights, &a.activations, &a.schedule] {
        require_file(p)?;
    }
    if let Some(p) = &a.out {
        require_parent(p)?;
    }
    let layer = load_layer(&a.weights)?;
    let act = load_activations(&a.activations)?;
    let f = File::open(&a.schedule)?;
    let s = read_schedule(BufReader::new(f)).map_err(|e| CliError::Input(format!("{}: {e}", a.schedule.display())))?;
    let report = assert_equivalent(&layer, &act, &s)?;
    writeln!(out, "channel,max_abs_diff")?;
    for (c, d) in report.max_abs_diff.iter().enumerate() {
        writeln!(out, "{c},{d}")?;
    }
    if let Some(p) = &a.out {
        write_output_map(&reuse_eval(&s, &act)?, create(p)?)?;
    }
    if report.passed() {
        writeln!(out, "PASS")?;
        Ok(())
    } else {
        let bad = report.failing_channels();
        writeln!(out, "FAIL channels {bad:?}")?;
        Err(CliError::Verification(format!("schedule disagrees with direct convolution on channels {bad:?}")))
    }
}

/// Per-trial costs for one random layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub method: ScheduleKind,
    pub bitops: u64,
    pub depth: usize,
    pub seconds: f64,
}

/// Runs every method on `trials` random layers (layer seed `seed + t`) and
/// returns the rows plus any ordering violations found.
pub fn compare_trials(
    shape: LayerShape,
    trials: usize,
    plan: &PlanArgs,
) -> CliResult<(Vec<TrialRow>, Vec<String>)> {
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for t in 0..trials {
        let seed = plan.seed.wrapping_add(t as u64);
        let layer = BinaryLayer::random(shape, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let g = build_distance_graph(&layer);
        let opts = PlanOptions { seed, ..plan.options() };
        let mut cost = |kind| -> CliResult<u64> {
            let (s, d): (_, Duration) = plan_schedule(&layer, &g, kind, &opts)?;
            let b = bitops_total(&s);
            rows.push(TrialRow { trial: t, method: kind, bitops: b, depth: s.depth(), seconds: d.as_secs_f64() });
            Ok(b)
        };
        let standard = cost(ScheduleKind::Standard)?;
        let mst = cost(ScheduleKind::Mst)?;
        let kmedoid = cost(ScheduleKind::Kmedoid)?;
        if mst > kmedoid {
            violations.push(format!("trial {t}: mst {mst} > kmedoid {kmedoid}"));
        }
        if shape.c_out <= HAMILTONIAN_CAP {
            let ham = cost(ScheduleKind::Hampath)?;
            if !(mst <= ham && ham <= standard) {
                violations.push(format!("trial {t}: expected mst {mst} <= hampath {ham} <= standard {standard}"));
            }
        } else if mst > standard {
            violations.push(format!("trial {t}: mst {mst} > standard {standard}"));
        }
    }
    Ok((rows, violations))
}

pub fn cmd_compare(a: &CompareArgs, out: &mut dyn Write) -> CliResult<()> {
    if a.trials == 0 {
        return Err(CliError::Input("trials must be at least 1".into()));
    }
    if let Some(p) = &a.out {
        require_parent(p)?;
    }
    let (rows, violations) = compare_trials(a.shape, a.trials, &a.plan)?;
    if let Some(p) = &a.out {
        let mut f = create(p)?;
        writeln!(f, "trial,method,bitops_total,depth,exploration_seconds")?;
        for r in &rows {
            writeln!(f, "{},{},{},{},{}", r.trial, r.method, r.bitops, r.depth, r.seconds)?;
        }
        f.flush()?;
    }
    let s = &a.shape;
    writeln!(out, "shape {},{},{},{},{} pad {}; {} trials", s.c_out, s.c_in, s.m, s.h_in, s.w_in, s.pad, a.trials)?;
    if s.c_out > HAMILTONIAN_CAP {
        writeln!(out, "note: hampath skipped, c_out {} exceeds cap {HAMILTONIAN_CAP}", s.c_out)?;
    }
    writeln!(out, "{:<9} {:>16} {:>10} {:>14}", "method", "mean_bitops", "mean_depth", "mean_explore_s")?;
    for kind in ScheduleKind::ALL {
        let sel: Vec<&TrialRow> = rows.iter().filter(|r| r.method == kind).collect();
        if sel.is_empty() {
            continue;
        }
        let n = sel.len() as f64;
        writeln!(
            out,
            "{:<9} {:>16.1} {:>10.2} {:>14.6}",
            kind,
            sel.iter().map(|r| r.bitops as f64).sum::<f64>() / n,
            sel.iter().map(|r| r.depth as f64).sum::<f64>() / n,
            sel.iter().map(|r| r.seconds).sum::<f64>() / n
        )?;
    }
    if violations.is_empty() {
        writeln!(out, "ordering PASS")?;
        Ok(())
    } else {
        for v in &violations {
            writeln!(out, "{v}")?;
        }
        writeln!(out, "ordering FAIL")?;
        Err(CliError::Verification(format!("{} ordering violations", violations.len())))
    }
}

/// Summary of one training run in the ablation layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub max_depth: usize,
    pub params_bits: u64,
    pub bitops: u64,
    pub test_acc: f64,
    pub sum_mst_distance: u64,
}

pub const SWEEP_HEADER: &str = "lambda,max_depth,params_bits,bitops_total,test_acc,sum_mst_distance";

pub fn sweep_row(state: &TrainState) -> CliResult<SweepRow> {
    let m = state.final_metrics();
    let mut bitops = 0;
    for layer in state.binary_layers()? {
        let g = build_distance_graph(&layer);
        let (s, _) = plan_schedule(&layer, &g, ScheduleKind::Mst, &PlanOptions::default())?;
        bitops += bitops_total(&s);
    }
    Ok(SweepRow {
        lambda: state.config.lambda,
        max_depth: m.max_depth,
        params_bits: m.params_bits,
        bitops,
        test_acc: m.test_acc,
        sum_mst_distance: m.sum_mst_distance,
    })
}

fn train_one(cfg: &TrainConfig, dir: &Path, out: &mut dyn Write) -> CliResult<TrainState> {
    let state = train_toy(cfg)?;
    write_metrics(&state.history, create(&dir.join("metrics.csv"))?)?;
    let files = state.write_weight_files(dir)?;
    let m = state.final_metrics();
    writeln!(
        out,
        "lambda {}: test_acc {:.4}, sum_mst_distance {}, max_depth {}, params_bits {} ({} weight files in {})",
        cfg.lambda,
        m.test_acc,
        m.sum_mst_distance,
        m.max_depth,
        m.params_bits,
        files.len(),
        dir.display()
    )?;
    Ok(state)
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let base = TrainConfig {
        lambda: a.lambda,
        gamma0: a.gamma0,
        epochs: a.epochs,
        lr0: a.lr0,
        seed: a.seed,
        n_centers: a.centers,
        ..TrainConfig::default()
    };
    base.validate()?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Input(format!("{}: {e}", a.out.display())))?;
    let Some(lambdas) = &a.sweep else {
        train_one(&base, &a.out, out)?;
        return Ok(());
    };
    let mut rows = Vec::new();
    for &lambda in lambdas {
        let cfg = TrainConfig { lambda, ..base.clone() };
        cfg.validate()?;
        let dir = a.out.join(format!("lambda_{lambda:e}"));
        std::fs::create_dir_all(&dir)?;
        rows.push(sweep_row(&train_one(&cfg, &dir, out)?)?);
    }
    let mut f = create(&a.out.join("sweep.csv"))?;
    writeln!(f, "{SWEEP_HEADER}")?;
    for r in &rows {
        writeln!(f, "{},{},{},{},{},{}", r.lambda, r.max_depth, r.params_bits, r.bitops, r.test_acc, r.sum_mst_distance)?;
    }
    f.flush()?;
    writeln!(out, "{:>10} {:>9} {:>11} {:>12} {:>8}", "lambda", "mst_depth", "params_bits", "bitops", "test_acc")?;
    for r in &rows {
        writeln!(out, "{:>10e} {:>9} {:>11} {:>12} {:>8.4}", r.lambda, r.max_depth, r.params_bits, r.bitops, r.test_acc)?;
    }
    Ok(())
}
