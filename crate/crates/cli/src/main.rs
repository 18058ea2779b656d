use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use relnet::autodiff::Checkpoint;
use relnet::eval::{self, BaselineManifest};
use relnet::graph::build_graph;
use relnet::ground::{extract_dbn, ground, GroundMdp};
use relnet::model::{DomainModel, InstanceContext, ModelConfig};
use relnet::rddl::{parse_domain, parse_instance, validate, DomainAst, TypedModel};
use relnet::train::{train, TrainConfig, TrainSinks};

#[derive(Parser)]
#[command(name = "relnet", version, about = "Generalized graph-attention policies for RDDL domains")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file overriding default settings: {"model": {..}, "train": {..}}.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy on one or more instances of a domain.
    Train(TrainArgs),
    /// Evaluate a trained policy with greedy rollouts.
    Eval(EvalArgs),
    /// Print the instance graph.
    Graph(GraphArgs),
    /// Print the ground MDP and its dependency structure.
    DumpMdp(InstanceArgs),
    /// Solve a small instance exactly.
    Oracle(InstanceArgs),
    /// Evaluate the uniform random policy.
    RandomBaseline(BaselineArgs),
}

#[derive(Args)]
struct InstanceArgs {
    /// Domain file; found among the instance's sibling files when omitted.
    #[arg(long)]
    domain: Option<PathBuf>,
    #[arg(long)]
    instance: PathBuf,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    domain: Option<PathBuf>,
    /// Training instance; repeat for multi-instance training.
    #[arg(long = "instance", required = true)]
    instances: Vec<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    wall_seconds: Option<f64>,
    #[arg(long)]
    neighborhood: Option<usize>,
    /// CSV training log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    target: InstanceArgs,
    #[arg(long, default_value_t = eval::DEFAULT_ROLLOUTS)]
    rollouts: usize,
    /// Use γ = 1 instead of the instance discount.
    #[arg(long)]
    undiscounted: bool,
    /// Baseline manifest {instance_id: {v_min, v_max}} for α.
    #[arg(long)]
    baselines: Option<PathBuf>,
    /// Reference α for β.
    #[arg(long)]
    reference_alpha: Option<f64>,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    target: InstanceArgs,
    #[arg(long, default_value_t = eval::DEFAULT_ROLLOUTS)]
    rollouts: usize,
    #[arg(long)]
    undiscounted: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphFormat {
    Dot,
    Json,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    domain: Option<PathBuf>,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = GraphFormat::Dot)]
    format: GraphFormat,
}

/// Errors caused by how the tool was invoked rather than by its inputs.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    model: Value,
    #[serde(default)]
    train: Value,
}

/// Overlay `patch` onto `base` key by key.
fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) if !p.is_null() => *b = p.clone(),
        _ => {}
    }
}

fn overlay<T: serde::Serialize + serde::de::DeserializeOwned>(default: T, patch: &Value) -> Result<T> {
    let mut v = serde_json::to_value(default)?;
    merge(&mut v, patch);
    serde_json::from_value(v).context("invalid configuration value")
}

fn load_config(path: Option<&Path>) -> Result<(ModelConfig, TrainConfig)> {
    let file: FileConfig = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => FileConfig::default(),
    };
    Ok((overlay(ModelConfig::default(), &file.model)?, overlay(TrainConfig::default(), &file.train)?))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Find the domain an instance file refers to among its sibling `.rddl` files.
fn resolve_domain(instance: &Path, instance_text: &str) -> Result<DomainAst> {
    let inst = parse_instance(instance_text).with_context(|| format!("parsing {}", instance.display()))?;
    let name = &inst.domain;
    let dir = instance.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut candidates: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "rddl") && p != instance)
        .collect();
    candidates.sort();
    for p in candidates {
        if let Ok(text) = fs::read_to_string(&p) {
            if let Ok(d) = parse_domain(&text) {
                if &d.name == name {
                    return Ok(d);
                }
            }
        }
    }
    bail!("no domain `{name}` next to {}; pass --domain", instance.display())
}

fn load_domain(domain: Option<&Path>, instance: &Path) -> Result<DomainAst> {
    match domain {
        Some(p) => parse_domain(&read(p)?).with_context(|| format!("parsing {}", p.display())),
        None => resolve_domain(instance, &read(instance)?),
    }
}

fn load_pair(domain: Option<&Path>, instance: &Path) -> Result<TypedModel> {
    let d = load_domain(domain, instance)?;
    let i = parse_instance(&read(instance)?).with_context(|| format!("parsing {}", instance.display()))?;
    validate(&d, &i).with_context(|| format!("validating {}", instance.display()))
}

fn load_mdp(domain: Option<&Path>, instance: &Path) -> Result<GroundMdp> {
    Ok(ground(&load_pair(domain, instance)?)?)
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn cmd_train(args: TrainArgs, seed: Option<u64>, config: Option<&Path>) -> Result<()> {
    let (mut model_cfg, mut cfg) = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = args.steps {
        cfg.total_steps = n;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if args.wall_seconds.is_some() {
        cfg.wall_seconds = args.wall_seconds;
    }
    if let Some(nb) = args.neighborhood {
        model_cfg.neighborhood = nb;
    }
    let domain = load_domain(args.domain.as_deref(), &args.instances[0])?;
    let model = DomainModel::new(&domain, model_cfg);
    let mut contexts = Vec::new();
    for path in &args.instances {
        let i = parse_instance(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
        let tm = validate(&domain, &i).with_context(|| format!("validating {}", path.display()))?;
        contexts.push(InstanceContext::from_mdp(ground(&tm)?, &model_cfg));
    }
    let log: Option<Box<dyn std::io::Write + Send>> = match &args.log {
        Some(p) => Some(Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => None,
    };
    let sinks = TrainSinks {
        log,
        checkpoint: Some(args.out.clone()),
    };
    let out = train(&model, &contexts, model.init_params(cfg.seed), &cfg, sinks)?;
    eprintln!(
        "trained {} steps ({} updates, {} episodes) in {:.1}s; checkpoint {}",
        out.env_steps,
        out.updates,
        out.episodes.len(),
        out.seconds,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs, seed: Option<u64>) -> Result<()> {
    let Some(model_path) = args.model else {
        return Err(Usage("eval requires --model <checkpoint>".into()).into());
    };
    let t = &args.target;
    let tm = load_pair(t.domain.as_deref(), &t.instance)?;
    let ck = Checkpoint::load(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let (model, params) = DomainModel::from_checkpoint(&tm.domain, &ck)?;
    let ctx = InstanceContext::from_mdp(ground(&tm)?, &model.config);
    let gamma = if args.undiscounted { 1.0 } else { ctx.mdp.discount };
    let mut report = eval::evaluate(&model, &params, &ctx, args.rollouts.max(1), seed.unwrap_or(0), gamma)?;
    if let Some(path) = &args.baselines {
        let manifest: BaselineManifest =
            serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
        let bounds = manifest
            .get(&ctx.mdp.instance_name)
            .ok_or_else(|| anyhow!("no baseline for `{}` in {}", ctx.mdp.instance_name, path.display()))?;
        report = report.with_metrics(*bounds, args.reference_alpha)?;
    }
    if t.json {
        print_json(&report)
    } else {
        print!("{}", report.table());
        Ok(())
    }
}

fn cmd_graph(args: GraphArgs) -> Result<()> {
    let mdp = load_mdp(args.domain.as_deref(), &args.instance)?;
    let g = build_graph(&mdp, &extract_dbn(&mdp));
    match args.format {
        GraphFormat::Dot => print!("{}", g.to_dot()),
        GraphFormat::Json => print_json(&g.to_json(&mdp.init_state))?,
    }
    Ok(())
}

fn cmd_dump(args: InstanceArgs) -> Result<()> {
    let mdp = load_mdp(args.domain.as_deref(), &args.instance)?;
    let dbn = extract_dbn(&mdp);
    let vars = mdp.state_var_names();
    let acts = mdp.action_names();
    let names = |idx: &[usize], table: &[String]| idx.iter().map(|&i| table[i].clone()).collect::<Vec<_>>();
    let cpfs: Vec<Value> = (0..vars.len())
        .map(|v| {
            json!({
                "var": vars[v],
                "init": mdp.init_state[v],
                "state_deps": names(&dbn.state_deps[v], &vars),
                "action_deps": names(&dbn.action_deps[v], &acts),
            })
        })
        .collect();
    let actions: Vec<Value> = (0..acts.len())
        .map(|a| json!({ "action": acts[a], "affects": names(dbn.affected_set(a).unwrap_or(&[]), &vars) }))
        .collect();
    let summary = json!({
        "domain": mdp.domain.name,
        "instance": mdp.instance_name,
        "horizon": mdp.horizon,
        "discount": mdp.discount,
        "state_vars": cpfs,
        "actions": actions,
    });
    if args.json {
        return print_json(&summary);
    }
    println!("{} / {}  H={} γ={}", mdp.domain.name, mdp.instance_name, mdp.horizon, mdp.discount);
    println!("state variables ({}):", vars.len());
    for c in &cpfs {
        println!(
            "  {}{}  <- {} | {}",
            c["var"].as_str().unwrap_or_default(),
            if c["init"] == true { " *" } else { "" },
            c["state_deps"],
            c["action_deps"]
        );
    }
    println!("actions ({}):", acts.len());
    for a in &actions {
        println!("  {}  affects {}", a["action"].as_str().unwrap_or_default(), a["affects"]);
    }
    Ok(())
}

fn cmd_oracle(args: InstanceArgs) -> Result<()> {
    let mdp = load_mdp(args.domain.as_deref(), &args.instance)?;
    let r = eval::value_iteration(&mdp)?;
    let first = mdp.action_names()[r.policy[eval::state_index(&mdp.init_state)]].clone();
    if args.json {
        print_json(&json!({ "instance": mdp.instance_name, "v_star": r.value, "first_action": first }))
    } else {
        println!("V*(s0) = {}", r.value);
        println!("optimal first action: {first}");
        Ok(())
    }
}

fn cmd_baseline(args: BaselineArgs, seed: Option<u64>) -> Result<()> {
    let t = &args.target;
    let mdp = load_mdp(t.domain.as_deref(), &t.instance)?;
    let gamma = if args.undiscounted { 1.0 } else { mdp.discount };
    let report = eval::random_baseline(&mdp, args.rollouts.max(1), seed.unwrap_or(0), gamma)?;
    if t.json {
        print_json(&report)
    } else {
        print!("{}", report.table());
        Ok(())
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let config = cli.config.as_deref();
    match cli.command {
        Command::Train(a) => cmd_train(a, seed, config),
        Command::Eval(a) => cmd_eval(a, seed),
        Command::Graph(a) => cmd_graph(a),
        Command::DumpMdp(a) => cmd_dump(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::RandomBaseline(a) => cmd_baseline(a, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            eprintln!("{}", <Cli as clap::CommandFactory>::command().render_usage());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
