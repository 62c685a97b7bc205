use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use aigen_core::aiger::{parse_aag, write_aag};
use aigen_core::trajectory::{encode_with_depth, DEFAULT_MAX_DEPTH};
use aigen_core::{Aig, EquivSpec};
use aigen_neural::{Checkpoint, PolicyModel, TrainConfig};
use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bridge::ExternalTool;
use crate::dataset::{gen_dataset, load_aag, GenConfig, TargetSource};
use crate::eval::{check_model_signature, evaluate, synthesize, EvalItem, EvalSetup, Method, PolicySource, SynthError};
use crate::manifest::DatasetManifest;
use crate::training::{
    load_policy_examples, policy_config, policy_token_accuracy, train_policy, train_tt, tt_accuracy, tt_test_set,
    LoopOptions, PolicyShape,
};
use crate::{worker_count, CliError};

#[derive(Parser, Debug)]
#[command(name = "aigen", version, about = "Equivalence-preserving generative logic synthesis")]
pub struct Cli {
    /// Worker threads (default: $AIGEN_WORKERS, then all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate unique random circuits and optimized targets.
    GenDataset(GenDatasetArgs),
    /// Train the truth-table classifier or the synthesis policy.
    Train(TrainArgs),
    /// Re-synthesize one circuit.
    Synth(SynthArgs),
    /// Evaluate synthesis methods on a dataset.
    Eval(EvalArgs),
    /// Check two circuits for functional equivalence.
    Verify(VerifyArgs),
    /// Print a circuit's trajectory and positional codes.
    Encode(EncodeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SupervisionArg {
    InternalMcts,
    ExternalTool,
    None,
}

#[derive(Args, Debug)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub inputs: usize,
    #[arg(long)]
    pub outputs: usize,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 100)]
    pub max_traj_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SupervisionArg::InternalMcts)]
    pub supervision: SupervisionArg,
    /// Searched decisions for internal supervision.
    #[arg(long, default_value_t = usize::MAX)]
    pub mcts_steps: usize,
    #[arg(long, default_value_t = 8)]
    pub mcts_rollouts: usize,
    /// External synthesizer command with {in} and {out} placeholders.
    #[arg(long)]
    pub tool: Option<String>,
    #[arg(long, default_value_t = 60.0)]
    pub tool_timeout: f64,
    /// Datasets whose functions must not reappear (e.g. the training set).
    #[arg(long)]
    pub exclude: Vec<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Tt,
    Policy,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    /// Dataset directory (policy task).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: u64,
    #[arg(long, default_value_t = 1000)]
    pub log_every: u64,
    #[arg(long, default_value_t = 2000)]
    pub steps: u64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long)]
    pub warmup: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Encoder layers.
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub decoder_layers: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub ffn: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Normalize the policy loss over feasible tokens only.
    #[arg(long)]
    pub masked_loss: bool,
    /// Held-out examples for the final accuracy report.
    #[arg(long, default_value_t = 1000)]
    pub eval_size: usize,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Greedy)]
    pub mode: ModeArg,
    /// Searched decisions (mcts mode).
    #[arg(long = "search-steps", default_value_t = 1)]
    pub search_steps: usize,
    #[arg(long, default_value_t = 5)]
    pub rollouts: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Greedy,
    Mcts,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Policy checkpoint; a uniform policy is used when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = 100)]
    pub max_len: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    /// Targets stored in the dataset.
    Internal,
    External,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub eval_dir: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Comma-separated: greedy, mcts:S:R.
    #[arg(long, default_value = "greedy,mcts:1:5,mcts:1:20")]
    pub methods: String,
    #[arg(long, value_enum, default_value_t = BaselineArg::Internal)]
    pub baseline: BaselineArg,
    #[arg(long)]
    pub tool: Option<String>,
    #[arg(long, default_value_t = 60.0)]
    pub tool_timeout: f64,
    /// Training manifest directory; evaluation refuses overlapping functions.
    #[arg(long)]
    pub train_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
    pub max_depth: usize,
}

fn read_aag(path: &Path) -> anyhow::Result<Aig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_aag(&text).with_context(|| format!("parsing {}", path.display()))
}

fn pool(workers: usize) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}

fn tool(template: Option<&String>, timeout: f64) -> anyhow::Result<ExternalTool> {
    let t = template.ok_or_else(|| anyhow!("--tool is required for an external synthesizer"))?;
    Ok(ExternalTool::new(t.clone(), Duration::from_secs_f64(timeout))?)
}

fn load_policy(path: &Path) -> anyhow::Result<PolicyModel> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    PolicyModel::from_params(ck.config.clone(), &ck.params).with_context(|| format!("binding {}", path.display()))
}

/// Runs one parsed command, printing results to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let workers = worker_count(cli.workers);
    match cli.command {
        Command::GenDataset(a) => pool(workers)?.install(|| gen_dataset_cmd(a)),
        Command::Train(a) => train_cmd(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Eval(a) => pool(workers)?.install(|| eval_cmd(a, workers)),
        Command::Verify(a) => verify_cmd(a),
        Command::Encode(a) => encode_cmd(a),
    }
}

fn gen_dataset_cmd(a: GenDatasetArgs) -> Result<(), CliError> {
    let targets = match a.supervision {
        SupervisionArg::InternalMcts => TargetSource::InternalMcts {
            steps: a.mcts_steps,
            rollouts: a.mcts_rollouts,
        },
        SupervisionArg::ExternalTool => TargetSource::External(tool(a.tool.as_ref(), a.tool_timeout)?),
        SupervisionArg::None => TargetSource::None,
    };
    let mut exclude = HashSet::new();
    for dir in &a.exclude {
        exclude.extend(DatasetManifest::read(dir)?.items.into_iter().map(|i| i.digest));
    }
    let cfg = GenConfig {
        n_inputs: a.inputs,
        n_outputs: a.outputs,
        count: a.count,
        max_traj_len: a.max_traj_len,
        seed: a.seed,
        targets,
        exclude,
    };
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let (m, digest) = gen_dataset(&cfg, &a.out)?;
    let mean = |f: fn(&crate::manifest::ManifestItem) -> usize| {
        m.items.iter().map(f).sum::<usize>() as f64 / m.items.len().max(1) as f64
    };
    println!(
        "{} items ({} skipped); mean #AND source {:.3} target {:.3}",
        m.items.len(),
        m.skipped.len(),
        mean(|i| i.ands_original),
        mean(|i| i.ands_target)
    );
    println!("manifest sha256 {digest}");
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<(), CliError> {
    let tc = TrainConfig {
        steps: a.steps,
        batch_size: a.batch,
        lr: a.lr,
        warmup: a.warmup.unwrap_or(a.steps / 20),
        clip: a.clip,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let opts = LoopOptions {
        out: a.out.clone(),
        loss_csv: a.loss_csv.clone(),
        checkpoint_every: a.checkpoint_every,
        log_every: a.log_every,
    };
    match a.task {
        Task::Tt => {
            let model = train_tt(a.layers.unwrap_or(4), &tc, a.resume.as_deref(), &opts)?;
            let acc = tt_accuracy(&model, &tt_test_set(a.eval_size, a.seed.wrapping_add(0x5eed)))?;
            println!(
                "per-bit accuracy {:.4}; exact-table accuracy {:.4}",
                acc.per_bit, acc.exact
            );
        }
        Task::Policy => {
            let dir = a
                .dataset
                .as_deref()
                .ok_or_else(|| anyhow!("--dataset is required for the policy task"))?;
            let manifest = DatasetManifest::read(dir)?;
            let d = PolicyShape::default();
            let shape = PolicyShape {
                n_layers: a.layers.unwrap_or(d.n_layers),
                n_decoder_layers: a.decoder_layers.unwrap_or(d.n_decoder_layers),
                embed_width: a.width.unwrap_or(d.embed_width),
                ffn_width: a.ffn.unwrap_or(d.ffn_width),
                n_heads: a.heads.unwrap_or(d.n_heads),
                max_len: a.max_len.unwrap_or(d.max_len.max(manifest.generator.max_traj_len)),
            };
            let cfg = policy_config(&shape, manifest.generator.n_inputs, manifest.generator.n_outputs);
            let (_, examples) = load_policy_examples(dir, &cfg)?;
            let model = train_policy(&cfg, &examples, a.masked_loss, &tc, a.resume.as_deref(), &opts)?;
            let k = examples.len().min(a.eval_size);
            println!(
                "teacher-forced token accuracy {:.4} on {k} training pairs",
                policy_token_accuracy(&model, &examples[..k])?
            );
        }
    }
    println!("checkpoint written to {}", a.out.display());
    Ok(())
}

fn method_of(s: &SearchArgs) -> Method {
    match s.mode {
        ModeArg::Greedy => Method::Greedy,
        ModeArg::Mcts => Method::Mcts {
            steps: s.search_steps,
            rollouts: s.rollouts,
        },
    }
}

fn synth_cmd(a: SynthArgs) -> Result<(), CliError> {
    let source = read_aag(&a.input)?;
    let model = a.checkpoint.as_deref().map(load_policy).transpose()?;
    if let Some(m) = &model {
        check_model_signature(m, source.n_inputs(), source.n_outputs())?;
    }
    let policy = model.as_ref().map_or(PolicySource::Uniform, PolicySource::Neural);
    let aig = match synthesize(&source, policy, method_of(&a.search), a.max_len, a.seed) {
        Ok(aig) => aig,
        Err(SynthError::Decode(e)) => return Err(CliError::Incomplete(e.to_string())),
        Err(e @ SynthError::Verification { .. }) => return Err(CliError::Verification(e.to_string())),
        Err(e) => return Err(anyhow!(e).into()),
    };
    // Checked again on the exact bytes that are written.
    let text = write_aag(&aig);
    let reread = parse_aag(&text).map_err(|e| CliError::Verification(e.to_string()))?;
    if let Some((o, r)) = EquivSpec::from_aig(&source)
        .map_err(|e| anyhow!(e))?
        .first_mismatch(&reread)
    {
        return Err(CliError::Verification(format!("output {o} differs at row {r}")));
    }
    std::fs::write(&a.out, text).with_context(|| format!("writing {}", a.out.display()))?;
    println!("#AND {} -> {}", source.count_ands(), aig.count_ands());
    Ok(())
}

fn eval_cmd(a: EvalArgs, workers: usize) -> Result<(), CliError> {
    let manifest = DatasetManifest::read(&a.eval_dir)?;
    if let Some(train) = &a.train_dir {
        let overlap = manifest.overlap(&DatasetManifest::read(train)?);
        if !overlap.is_empty() {
            return Err(anyhow!("{} evaluation functions also appear in the training set", overlap.len()).into());
        }
    }
    let methods = a
        .methods
        .split(',')
        .map(str::parse)
        .collect::<anyhow::Result<Vec<Method>>>()?;
    let model = a.checkpoint.as_deref().map(load_policy).transpose()?;
    if let Some(m) = &model {
        check_model_signature(m, manifest.generator.n_inputs, manifest.generator.n_outputs)?;
    }
    let external = match a.baseline {
        BaselineArg::External => Some(tool(a.tool.as_ref(), a.tool_timeout)?),
        BaselineArg::Internal => None,
    };
    let mut items = Vec::with_capacity(manifest.items.len());
    for it in &manifest.items {
        let source = load_aag(&a.eval_dir, &it.file)?;
        let baseline_ands = match &external {
            Some(t) => t.run(&source).map_or(source.count_ands(), |o| o.count_ands()),
            None => it.ands_target,
        };
        items.push(EvalItem { source, baseline_ands });
    }
    let setup = EvalSetup {
        policy: model.as_ref().map_or(PolicySource::Uniform, PolicySource::Neural),
        methods,
        max_len: a.max_len,
        seed: a.seed,
        baseline: match a.baseline {
            BaselineArg::Internal => "dataset targets".into(),
            BaselineArg::External => a.tool.clone().unwrap_or_default(),
        },
        workers,
    };
    let report = evaluate(&items, &setup)?;
    print!("{}", report.render());
    if let Some(out) = &a.out {
        let json = serde_json::to_string_pretty(&report).map_err(|e| anyhow!(e))?;
        std::fs::write(out, json).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn verify_cmd(a: VerifyArgs) -> Result<(), CliError> {
    let (x, y) = (read_aag(&a.a)?, read_aag(&a.b)?);
    if x.n_inputs() != y.n_inputs() || x.n_outputs() != y.n_outputs() {
        return Err(anyhow!(
            "signatures differ: {} inputs/{} outputs vs {} inputs/{} outputs",
            x.n_inputs(),
            x.n_outputs(),
            y.n_inputs(),
            y.n_outputs()
        )
        .into());
    }
    let spec = EquivSpec::from_aig(&x).map_err(|e| anyhow!(e))?;
    match spec.first_mismatch(&y) {
        None => {
            println!("equivalent");
            Ok(())
        }
        Some((o, row)) => {
            let bits: Vec<String> = (0..x.n_inputs()).map(|j| ((row >> j) & 1).to_string()).collect();
            let names: Vec<String> = (1..=x.n_inputs()).map(|j| format!("x{j}")).collect();
            let msg = format!(
                "output {o} differs at row {row}: ({})=({})",
                names.join(","),
                bits.join(",")
            );
            println!("{msg}");
            Err(CliError::Verification(msg))
        }
    }
}

fn encode_cmd(a: EncodeArgs) -> Result<(), CliError> {
    let aig = read_aag(&a.input)?;
    let traj = encode_with_depth(&aig, a.max_depth).map_err(|e| anyhow!(e))?;
    let vocab = traj.vocab();
    for (t, item) in traj.items.iter().enumerate() {
        let pos = match &item.pos {
            Some(p) => p
                .to_bits(a.max_depth, traj.n_outputs)
                .iter()
                .map(|b| b.to_string())
                .collect::<String>(),
            None => "-".into(),
        };
        println!("{t:>4} {:>5} {pos}", vocab.name(item.token));
    }
    Ok(())
}
