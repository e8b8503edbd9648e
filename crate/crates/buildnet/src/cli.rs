//! Subcommands of the `buildnet` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use buildnet_core::analysis::expansion_curve;
use buildnet_core::encoder::{Dataset, EncoderContext, FeatureGroupMask};
use buildnet_core::nn::{Model, ModelMeta, NetworkTopology};
use buildnet_core::policy::{DecisionPolicy, ExclusionSet, SelectionMode};
use buildnet_core::sim::{
    simulate_match, MatchPolicy, MatchRules, ModelPolicy, RandomBuildPolicy, ScriptedPolicy, Winner,
};
use buildnet_core::synth::{generate_synthetic_corpus, ReactiveConfig, StochasticScriptPolicy, TwoBranch};
use buildnet_core::training::{
    baseline_most_frequent, baseline_uniform_random, evaluate_topk, run_cell, split_dataset, train_monitored,
    AblationRow, BaselineMode, NetworkScorer, TrainConfig, STANDARD_KS,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::files::{self, Rejection};
use crate::parallel::{default_jobs, par_map};
use crate::report::{ErrorTable, TableRow};
use crate::server::{Server, ServiceConfig};

#[derive(Parser, Debug)]
#[command(name = "buildnet", version, about = "Learn, evaluate and serve build-order policies")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Worker threads for per-game and per-cell work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Turn a directory of event logs into an encoded dataset.
    Extract(ExtractArgs),
    /// Train a network on a dataset and save the model.
    Train(TrainArgs),
    /// Top-k errors of a model against the baselines.
    Eval(EvalArgs),
    /// Train every input mask several times and tabulate the errors.
    Ablate(AblateArgs),
    /// Predicted chance of expanding versus worker count, as CSV.
    Analyze(AnalyzeArgs),
    /// Write a synthetic corpus of event logs.
    Synth(SynthArgs),
    /// Play simulated matches between two policies.
    Simulate(SimulateArgs),
    /// Answer build requests over TCP.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct TablesArgs {
    /// Build catalog file (default: built-in Protoss vs Terran catalog).
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Normalization table file (default: built-in table).
    #[arg(long)]
    pub norms: Option<PathBuf>,
}

impl TablesArgs {
    fn context(&self) -> Result<EncoderContext> {
        files::load_context(self.catalog.as_deref(), self.norms.as_deref())
    }
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tables: TablesArgs,
    /// JSON summary path (default: `<out>.report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Training settings as read from a TOML file; flags override them.
#[derive(Args, Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of pairs (rounded to whole games) used for training.
    #[arg(long)]
    pub split: Option<f64>,
    /// Hidden layer widths, e.g. `128,128,128,128`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
}

impl TrainSettings {
    fn or(self, fallback: TrainSettings) -> TrainSettings {
        TrainSettings {
            epochs: self.epochs.or(fallback.epochs),
            batch_size: self.batch_size.or(fallback.batch_size),
            learning_rate: self.learning_rate.or(fallback.learning_rate),
            seed: self.seed.or(fallback.seed),
            split: self.split.or(fallback.split),
            hidden: self.hidden.or(fallback.hidden),
        }
    }

    /// Flags, then the config file, then defaults.
    fn resolve(&self, config: Option<&Path>, mask: FeatureGroupMask) -> Result<TrainConfig> {
        let from_file = match config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => TrainSettings::default(),
        };
        let s = self.clone().or(from_file);
        let d = TrainConfig::default();
        let topology = match s.hidden {
            Some(h) => {
                let mut sizes = vec![d.topology.inputs()];
                sizes.extend(h);
                sizes.push(d.topology.outputs());
                NetworkTopology::new(sizes).map_err(|e| anyhow!("hidden layers: {e}"))?
            }
            None => d.topology.clone(),
        };
        let config = TrainConfig {
            epochs: s.epochs.unwrap_or(d.epochs),
            batch_size: s.batch_size.unwrap_or(d.batch_size),
            learning_rate: s.learning_rate.unwrap_or(d.learning_rate),
            seed: s.seed.unwrap_or(d.seed),
            split_fraction: s.split.unwrap_or(d.split_fraction),
            mask,
            topology,
        };
        config.validate()?;
        Ok(config)
    }
}

fn parse_mask(s: &str) -> Result<FeatureGroupMask, String> {
    s.parse()
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with any of: epochs, batch_size, learning_rate, seed, split, hidden.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input feature groups, e.g. `a+b+c+d+e`.
    #[arg(long, default_value = "a+b+c+d+e", value_parser = parse_mask)]
    pub mask: FeatureGroupMask,
    #[command(flatten)]
    pub settings: TrainSettings,
    #[command(flatten)]
    pub tables: TablesArgs,
    /// JSON report path (default: `<out>.report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Evaluate on the held-out part of this split (the one used for training).
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    /// Evaluate on every pair instead of the held-out part.
    #[arg(long)]
    pub all: bool,
    /// Seed of the random baseline.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub tables: TablesArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Comma-separated masks.
    #[arg(long, value_delimiter = ',', default_value = "a,a+d,a+b+c+e,a+b+c+d+e", value_parser = parse_mask)]
    pub masks: Vec<FeatureGroupMask>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: TrainSettings,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tables: TablesArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Opponent-reactive weighted rules.
    Reactive,
    /// Two fixed openings chosen 70/30.
    TwoBranch,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub games: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = GeneratorKind::Reactive)]
    pub generator: GeneratorKind,
    /// Productions per game (reactive generator).
    #[arg(long)]
    pub decisions: Option<usize>,
    /// Worker count that triggers expansion (reactive generator).
    #[arg(long)]
    pub expand_at: Option<u32>,
    /// Workers built before army (reactive generator).
    #[arg(long)]
    pub worker_target: Option<u32>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Contender {
    /// The trained model under `--policy`.
    Model,
    /// Workers, then gateways, then zealots.
    Script,
    /// Workers only.
    Workers,
    /// Uniformly random builds.
    Random,
}

#[derive(Args, Debug, Clone)]
pub struct PolicyArgs {
    #[arg(long, default_value = "greedy")]
    pub policy: SelectionMode,
    /// Hide observed enemy material from the network.
    #[arg(long)]
    pub blind: bool,
    /// Builds never chosen; pass an empty string for none.
    #[arg(long, value_delimiter = ',', default_value = "archon,carrier,dark_archon,high_templar,reaver,shuttle")]
    pub exclude: Vec<String>,
}

impl PolicyArgs {
    fn build(&self, ctx: &EncoderContext, seed: u64) -> Result<DecisionPolicy> {
        let names = self.exclude.iter().map(|s| s.trim()).filter(|s| !s.is_empty());
        let exclusions = ExclusionSet::from_names(&ctx.catalog, names).map_err(|e| anyhow!(e))?;
        Ok(DecisionPolicy { mode: self.policy, blind: self.blind, exclusions, seed })
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub a: Contender,
    #[arg(long, value_enum)]
    pub b: Contender,
    /// Required when either side is `model`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value_t = 200)]
    pub matches: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub tables: TablesArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub tables: TablesArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub bind: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn report_path(explicit: Option<&Path>, beside: &Path) -> PathBuf {
    explicit.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut name = beside.as_os_str().to_owned();
        name.push(".report.json");
        PathBuf::from(name)
    })
}

pub fn run(cli: Cli) -> Result<()> {
    let jobs = cli.jobs.unwrap_or_else(default_jobs).max(1);
    match cli.command {
        Command::Extract(a) => extract(a, jobs),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a, jobs),
        Command::Analyze(a) => analyze(a),
        Command::Synth(a) => synth(a),
        Command::Simulate(a) => simulate(a, jobs),
        Command::Serve(a) => serve(a),
    }
}

#[derive(Serialize)]
struct ExtractReport {
    games: usize,
    pairs: usize,
    rejected: Vec<Rejection>,
}

fn extract(a: ExtractArgs, jobs: usize) -> Result<()> {
    let ctx = a.tables.context()?;
    let ex = files::extract_corpus(&a.events, &ctx, jobs)?;
    if ex.dataset.games.is_empty() {
        bail!("every log in {} was rejected", a.events.display());
    }
    files::save_dataset(&a.out, &ex.dataset)?;
    let report = ExtractReport { games: ex.dataset.games.len(), pairs: ex.dataset.pair_count(), rejected: ex.rejected };
    println!("games: {}\npairs: {}\nrejected: {}", report.games, report.pairs, report.rejected.len());
    for r in &report.rejected {
        println!("  {}: {}", r.file, r.reason);
    }
    files::save_json(&report_path(a.report.as_deref(), &a.out), &report)
}

#[derive(Serialize)]
struct EpochLine {
    epoch: usize,
    mean_loss: f64,
    train_top1_error: f64,
    test_top1_error: Option<f64>,
}

#[derive(Serialize)]
struct TrainReport {
    model_version: String,
    train_examples: usize,
    table: ErrorTable,
    history: Vec<EpochLine>,
}

fn baseline_rows(train_set: &Dataset, test_set: &Dataset, seed: u64) -> [TableRow; 2] {
    [
        TableRow::single(
            "most frequent",
            &baseline_most_frequent(train_set, test_set, &STANDARD_KS, BaselineMode::SingleClass),
        ),
        TableRow::single("random", &baseline_uniform_random(test_set, &STANDARD_KS, seed)),
    ]
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let ctx = a.tables.context()?;
    let config = a.settings.resolve(a.config.as_deref(), a.mask)?;
    let d = files::load_dataset(&a.dataset)?;
    let (train_set, test_set) = split_dataset(&d, config.split_fraction)?;
    let outcome = train_monitored(&train_set, Some(&test_set), &config)?;
    let model = Model { network: outcome.network, meta: ModelMeta::for_context(&ctx, config.mask) };
    files::save_model(&a.out, &model)?;
    let metrics = evaluate_topk(&mut NetworkScorer::new(&model.network, config.mask), &test_set, &STANDARD_KS);
    let mut rows = vec![TableRow::single(config.mask.to_string(), &metrics)];
    rows.extend(baseline_rows(&train_set, &test_set, config.seed));
    let report = TrainReport {
        model_version: model.fingerprint(),
        train_examples: train_set.pair_count(),
        table: ErrorTable { title: "held-out error".into(), test_examples: test_set.pair_count(), rows },
        history: outcome
            .history
            .iter()
            .map(|r| EpochLine {
                epoch: r.epoch,
                mean_loss: r.mean_loss,
                train_top1_error: r.train_top1_error,
                test_top1_error: r.test.as_ref().and_then(|m| m.error(1)),
            })
            .collect(),
    };
    println!("model {} ({} training pairs)", report.model_version, report.train_examples);
    print!("{}", report.table.render());
    files::save_json(&report_path(a.report.as_deref(), &a.out), &report)
}

fn eval(a: EvalArgs) -> Result<()> {
    let ctx = a.tables.context()?;
    let model = files::load_model(&a.model)?;
    model.check_compatible(&ctx)?;
    let d = files::load_dataset(&a.dataset)?;
    let (train_set, test_set) = if a.all { (d.clone(), d) } else { split_dataset(&d, a.split)? };
    let metrics = evaluate_topk(&mut NetworkScorer::new(&model.network, model.meta.mask), &test_set, &STANDARD_KS);
    let mut rows = vec![TableRow::single(model.meta.mask.to_string(), &metrics)];
    rows.extend(baseline_rows(&train_set, &test_set, a.seed));
    let table = ErrorTable { title: format!("model {}", model.fingerprint()), test_examples: test_set.pair_count(), rows };
    print!("{}", table.render());
    match a.report {
        Some(p) => files::save_json(&p, &table),
        None => files::save_json(&report_path(None, &a.model), &table),
    }
}

fn ablate(a: AblateArgs, jobs: usize) -> Result<()> {
    if a.repeats == 0 || a.masks.is_empty() {
        bail!("need at least one mask and one repeat");
    }
    let base = a.settings.resolve(a.config.as_deref(), FeatureGroupMask::FULL)?;
    let d = files::load_dataset(&a.dataset)?;
    let (train_set, test_set) = split_dataset(&d, base.split_fraction)?;
    let cells: Vec<(FeatureGroupMask, u64)> =
        a.masks.iter().flat_map(|&m| (0..a.repeats as u64).map(move |r| (m, r))).collect();
    let results = par_map(&cells, jobs, |&(mask, r)| run_cell(&train_set, &test_set, mask, &base, r));
    let mut results = results.into_iter();
    let mut rows = Vec::new();
    for &mask in &a.masks {
        let runs = results.by_ref().take(a.repeats).collect::<Result<Vec<_>, _>>()?;
        rows.push(TableRow::ablation(&AblationRow::from_runs(mask, runs)));
    }
    rows.extend(baseline_rows(&train_set, &test_set, base.seed));
    let table = ErrorTable {
        title: format!("input ablation, mean ± std over {} runs", a.repeats),
        test_examples: test_set.pair_count(),
        rows,
    };
    print!("{}", table.render());
    files::save_json(&report_path(a.report.as_deref(), &a.dataset), &table)
}

/// Header of the expansion CSV; bump the version when columns change.
pub const EXPANSION_SCHEMA: &str = "# buildnet expansion v1";

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let ctx = a.tables.context()?;
    let model = files::load_model(&a.model)?;
    let d = files::load_dataset(&a.dataset)?;
    let rows = expansion_curve(&model, &d, &ctx)?;
    let mut out = Vec::new();
    out.extend_from_slice(EXPANSION_SCHEMA.as_bytes());
    out.push(b'\n');
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["probe_count", "n_states", "mean_probability"])?;
        for r in &rows {
            w.write_record([r.probe_count.to_string(), r.n_states.to_string(), format!("{:.6}", r.mean_probability)])?;
        }
        w.flush()?;
    }
    fs::write(&a.out, out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{} worker counts with single-base states written to {}", rows.len(), a.out.display());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    if a.games == 0 {
        bail!("--games must be at least 1");
    }
    let catalog = files::load_catalog(None)?;
    let generator = match a.generator {
        GeneratorKind::Reactive => {
            let d = ReactiveConfig::default();
            StochasticScriptPolicy::Reactive(ReactiveConfig {
                decisions: a.decisions.unwrap_or(d.decisions),
                expand_at: a.expand_at.unwrap_or(d.expand_at),
                worker_target: a.worker_target.unwrap_or(d.worker_target),
                ..d
            })
        }
        GeneratorKind::TwoBranch => {
            let id = |n: &str| catalog.build_id(n).expect("shipped catalog");
            let (probe, pylon, gateway, forge) = (id("probe"), id("pylon"), id("gateway"), id("forge"));
            StochasticScriptPolicy::TwoBranch(TwoBranch {
                p_first: 0.7,
                first: vec![(0, probe), (300, probe), (600, pylon), (1100, gateway)],
                second: vec![(0, probe), (300, pylon), (800, forge), (1100, probe)],
            })
        }
    };
    let logs = generate_synthetic_corpus(&generator, a.games, a.seed, &catalog);
    files::write_corpus(&a.out, &logs, &catalog)?;
    println!("{} games written to {}", logs.len(), a.out.display());
    Ok(())
}

#[derive(Serialize, Debug, PartialEq, Eq)]
pub struct SimulateReport {
    pub a: Contender,
    pub b: Contender,
    pub matches: usize,
    pub wins_a: usize,
    pub wins_b: usize,
    pub draws: usize,
}

fn contender<'a>(
    kind: Contender,
    model: Option<&'a Model>,
    policy: &DecisionPolicy,
    ctx: &'a EncoderContext,
) -> Result<Box<dyn MatchPolicy + 'a>> {
    Ok(match kind {
        Contender::Model => {
            let model = model.ok_or_else(|| anyhow!("--model is required for a model contender"))?;
            Box::new(ModelPolicy { model, policy: policy.clone(), ctx })
        }
        Contender::Script => Box::new(ScriptedPolicy::workers_then_army(&ctx.catalog)),
        Contender::Workers => Box::new(ScriptedPolicy::WorkersOnly),
        Contender::Random => Box::new(RandomBuildPolicy { exclusions: policy.exclusions.clone() }),
    })
}

fn simulate(a: SimulateArgs, jobs: usize) -> Result<()> {
    let ctx = a.tables.context()?;
    let model = a.model.as_deref().map(files::load_model).transpose()?;
    if let Some(m) = &model {
        m.check_compatible(&ctx)?;
    }
    let policy = a.policy.build(&ctx, a.seed)?;
    let rules = MatchRules::default_for(&ctx.catalog);
    contender(a.a, model.as_ref(), &policy, &ctx)?;
    let seeds: Vec<u64> = (0..a.matches as u64).map(|i| a.seed.wrapping_add(i)).collect();
    let winners = par_map(&seeds, jobs, |&seed| {
        let mut pa = contender(a.a, model.as_ref(), &policy, &ctx).expect("checked above");
        let mut pb = contender(a.b, model.as_ref(), &policy, &ctx).expect("checked above");
        simulate_match(pa.as_mut(), pb.as_mut(), &rules, &ctx.catalog, seed).winner
    });
    let count = |w| winners.iter().filter(|&&x| x == w).count();
    let report = SimulateReport {
        a: a.a,
        b: a.b,
        matches: a.matches,
        wins_a: count(Winner::A),
        wins_b: count(Winner::B),
        draws: count(Winner::Draw),
    };
    let pct = |n: usize| if a.matches == 0 { 0.0 } else { 100.0 * n as f64 / a.matches as f64 };
    println!("{:<10}{:>8}{:>8}", "", "count", "%");
    println!("{:<10}{:>8}{:>8.1}", format!("{:?} wins", a.a).to_lowercase(), report.wins_a, pct(report.wins_a));
    println!("{:<10}{:>8}{:>8.1}", format!("{:?} wins", a.b).to_lowercase(), report.wins_b, pct(report.wins_b));
    println!("{:<10}{:>8}{:>8.1}", "draws", report.draws, pct(report.draws));
    match a.report {
        Some(p) => files::save_json(&p, &report),
        None => Ok(()),
    }
}

fn serve(a: ServeArgs) -> Result<()> {
    let ctx = a.tables.context()?;
    let model = files::load_model(&a.model)?;
    let policy = a.policy.build(&ctx, a.seed)?;
    let server = Server::bind(&a.bind, ServiceConfig { model, ctx, policy, seed: a.seed })?;
    let handle = server.shutdown_handle();
    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        ctrlc::set_handler(move || {
            stop.store(true, Ordering::SeqCst);
            handle.shutdown();
        })
        .context("installing signal handler")?;
    }
    println!("serving model {} on {}", server.model_version(), server.local_addr()?);
    server.run()?;
    log::info!("shut down cleanly (signal: {})", stop.load(Ordering::SeqCst));
    Ok(())
}
