//! Command-line front end: `train`, `verify`, `explain`, `render`, `eval`.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or I/O error.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::belief::{marginal_state_visitation, RewardSource};
use crate::config::{Algorithm, Preset, RunConfig};
use crate::deep::{evaluate_greedy, train_deep, DeepConfig, TargetPlacement};
use crate::envs::EnvName;
use crate::error::{Error, Result};
use crate::eval::{evaluate_table, EvalReport};
use crate::explain::{contrastive, default_contrast_pair, intersection, outcome_projection, signed_parts};
use crate::io::{render_heatmap, slice_csv, ArtifactKind, HeatmapMeta, RunArtifact};
use crate::mdp::{ActionId, Environment, StateId};
use crate::par::Execution;
use crate::tabular::InitMode;
use crate::train::train_tabular_with;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "beliefmap", version, about = "Belief maps learned alongside Q-values")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a learner and write a run directory.
    Train(TrainArgs),
    /// Re-check Q = H . R on a stored run.
    Verify(VerifyArgs),
    /// Contrastive explanation of one action against another.
    Explain(ExplainArgs),
    /// Heatmap of the state-marginal belief of one state-action pair.
    Render(RenderArgs),
    /// Greedy evaluation of a stored run.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Zero,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RewardArg {
    Env,
    Proxy,
}

impl From<RewardArg> for RewardSource {
    fn from(r: RewardArg) -> Self {
        match r {
            RewardArg::Env => RewardSource::EnvGroundTruth,
            RewardArg::Proxy => RewardSource::EmpiricalProxy,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DeepProfile {
    Paper,
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum)]
    env: EnvName,
    #[arg(long = "algo", value_enum)]
    algo: Algorithm,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    episodes: Option<usize>,
    /// Hyperparameter preset; defaults to the environment's own.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, value_enum, default_value = "zero")]
    q_init: InitArg,
    #[arg(long, value_enum, default_value = "zero")]
    h_init: InitArg,
    #[arg(long, default_value_t = 1.0)]
    init_scale: f64,
    /// Network sizes for dqn/dbn.
    #[arg(long, value_enum, default_value = "paper")]
    profile: DeepProfile,
    /// Put the target network on the predicted value instead of the bootstrap.
    #[arg(long)]
    literal_target: bool,
    /// Q optimizer steps between target-network syncs.
    #[arg(long)]
    target_sync: Option<usize>,
    /// Output directory; defaults to `runs/<env>-<algo>-seed<seed>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    run_dir: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, value_enum, default_value = "env")]
    reward: RewardArg,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    run_dir: PathBuf,
    #[arg(long)]
    state: StateId,
    /// Defaults to the best action by Q.
    #[arg(long)]
    a0: Option<ActionId>,
    /// Defaults to the runner-up action by Q.
    #[arg(long)]
    a1: Option<ActionId>,
    /// Value table to explain: `q`, or `q_a` / `q_b` for double-Q runs.
    #[arg(long)]
    table: Option<String>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "csv,json")]
    format: Vec<Format>,
    #[arg(long, value_enum, default_value = "env")]
    reward: RewardArg,
    #[arg(long)]
    trim_unreachable: bool,
    /// Defaults to `<run_dir>/explain`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    run_dir: PathBuf,
    #[arg(long)]
    state: StateId,
    #[arg(long)]
    action: ActionId,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    table: Option<String>,
    /// Drop states that never occur in play (blackjack sums outside 4..=21).
    #[arg(long)]
    trim_unreachable: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    run_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    max_steps: usize,
    /// For double-Q runs the acting table is `q_a + q_b`; this picks one.
    #[arg(long)]
    table: Option<String>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Render(a) => cmd_render(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn init_mode(arg: InitArg, seed: u64, scale: f64) -> InitMode {
    match arg {
        InitArg::Zero => InitMode::Zero,
        InitArg::Random => InitMode::Random { seed, scale },
    }
}

fn build_config(a: &TrainArgs) -> Result<RunConfig> {
    let preset = a.preset.unwrap_or_else(|| Preset::default_for(a.env));
    if preset.env() != a.env {
        return Err(Error::InvalidArgument(format!(
            "preset {preset:?} is for {}, not {}",
            preset.env(),
            a.env
        )));
    }
    let mut cfg = RunConfig::preset(preset, a.algo, a.seed);
    if let Some(deep) = cfg.deep.as_mut() {
        if a.profile == DeepProfile::Desk {
            *deep = DeepConfig::desk(preset);
        }
        if a.literal_target {
            deep.target_placement = TargetPlacement::Literal;
        }
        if let Some(k) = a.target_sync {
            deep.target_sync_every = k;
        }
        if let Some(g) = a.gamma {
            deep.gamma = g;
        }
        if let Some(lr) = a.alpha {
            deep.adam.learning_rate = lr;
        }
        cfg.alpha = deep.adam.learning_rate;
        cfg.gamma = deep.gamma;
    } else {
        cfg.alpha = a.alpha.unwrap_or(cfg.alpha);
        cfg.gamma = a.gamma.unwrap_or(cfg.gamma);
    }
    cfg.episodes = a.episodes.unwrap_or(cfg.episodes);
    cfg.checkpoint_every = a.checkpoint_every.unwrap_or(cfg.checkpoint_every);
    cfg.max_steps = a.max_steps.unwrap_or(cfg.max_steps);
    cfg.q_init = init_mode(a.q_init, a.seed, a.init_scale);
    cfg.h_init = init_mode(a.h_init, a.seed.wrapping_add(0x5eed), a.init_scale);
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs) -> Result<i32> {
    let cfg = build_config(&a)?;
    let out = a.out.clone().unwrap_or_else(|| {
        PathBuf::from("runs").join(format!("{}-{}-seed{}", a.env, a.algo.as_str(), a.seed))
    });
    let art = if cfg.algorithm.is_tabular() {
        let run = train_tabular_with(&cfg, Execution::default(), |cp| {
            eprintln!(
                "episode {:>8}  max_abs_err {:.3e}  max_mass {:.6}",
                cp.episode,
                cp.max_abs_err(),
                cp.max_total_mass()
            );
        })?;
        RunArtifact::from_tabular(&cfg, &run)?
    } else {
        let deep = cfg.deep.as_ref().expect("validated");
        let run = train_deep(&cfg)?;
        let env_cap = cfg.env.build()?.max_episode_steps().unwrap_or(cfg.max_steps);
        let eval = evaluate_greedy(
            &cfg.env,
            &run.qnet,
            deep.q_input,
            deep.eval_episodes,
            env_cap.min(cfg.max_steps),
            cfg.seed,
            Execution::default(),
        )?;
        let recovery = run.recovery(&cfg)?;
        RunArtifact::from_deep(&cfg, &run, Some(eval), recovery.as_ref())?
    };
    art.write(&out)?;
    print_json(&json!({
        "out": out,
        "config_hash": art.manifest.config_hash,
        "seed": art.manifest.seed,
        "consistency": art.manifest.consistency,
        "deep": art.manifest.deep.as_ref().map(|d| json!({"eval": d.eval.as_ref().map(|e| json!({
            "episodes": e.episodes, "mean_return": e.mean_return, "mean_length": e.mean_length,
        })), "recovery": d.recovery})),
    }))?;
    Ok(EXIT_OK)
}

fn cmd_verify(a: VerifyArgs) -> Result<i32> {
    let art = RunArtifact::read(&a.run_dir)?;
    if art.manifest.kind != ArtifactKind::Tabular {
        return Err(Error::InvalidArgument(
            "deep runs carry no exact consistency check; see the recovery summary in the manifest".into(),
        ));
    }
    let report = art.verify(a.tol, a.reward.into(), Execution::default())?;
    print_json(&report)?;
    Ok(if report.passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// The `(Q, H)` tensor names to use, by Q name.
fn pick_pair(art: &RunArtifact, table: Option<&str>) -> Result<(String, String)> {
    let pairs = &art.manifest.pairs;
    let pair = match table {
        None => pairs.first(),
        Some(t) => pairs.iter().find(|p| p.q == t),
    };
    pair.map(|p| (p.q.clone(), p.h.clone())).ok_or_else(|| {
        let names: Vec<_> = pairs.iter().map(|p| p.q.as_str()).collect();
        Error::InvalidArgument(format!("no value table {table:?} in this run (have {names:?})"))
    })
}

fn meta(art: &RunArtifact, title: String) -> HeatmapMeta {
    HeatmapMeta {
        title,
        config_hash: art.manifest.config_hash.clone(),
        seed: art.manifest.seed,
    }
}

/// Sums a `(s', a')` slice over `a'`.
fn marginal(slice: &[f64], num_actions: usize) -> Vec<f64> {
    slice.chunks(num_actions).map(|c| c.iter().sum()).collect()
}

fn heatmap(env: &dyn Environment, values: &[f64], trim: bool, meta: &HeatmapMeta) -> Result<String> {
    let layout = env
        .grid_layout()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no grid layout", env.spec().env_name)))?;
    let keep = |s: StateId| !trim || env.is_displayable(s);
    Ok(render_heatmap(&layout, values, &keep, meta))
}

fn check_state(art: &RunArtifact, state: StateId) -> Result<()> {
    let ns = art.manifest.env.num_states;
    if state >= ns {
        return Err(Error::InvalidState { state, num_states: ns });
    }
    Ok(())
}

fn cmd_explain(a: ExplainArgs) -> Result<i32> {
    let art = RunArtifact::read(&a.run_dir)?;
    let (qn, hn) = pick_pair(&art, a.table.as_deref())?;
    check_state(&art, a.state)?;
    let q = art.qtable(&qn)?;
    let h = art.belief(&hn)?;
    let r = art.reward_for(a.reward.into())?;
    let env = art.env()?;
    let na = art.manifest.env.num_actions;
    let (a0, a1) = match (a.a0, a.a1) {
        (Some(x), Some(y)) => (x, y),
        (x, y) => {
            let (d0, d1) = default_contrast_pair(&q, a.state).ok_or_else(|| {
                Error::InvalidArgument(format!("state {} has fewer than two legal actions", a.state))
            })?;
            let x = x.unwrap_or(d0);
            (x, y.unwrap_or(if x == d1 { d0 } else { d1 }))
        }
    };
    let ex = contrastive(&h, &q, &r, a.state, a0, a1)?;
    let parts = signed_parts(&ex.g);
    let inter = intersection(&h, a.state, a0, a1)?;
    let outcomes = env.outcome_states();
    let projection = if outcomes.is_empty() {
        None
    } else {
        let names: Vec<String> = outcomes.iter().map(|&o| env.describe_state(o)).collect();
        Some(json!({
            "states": outcomes,
            "names": names,
            "a0": outcome_projection(&h, a.state, a0, &outcomes)?,
            "a1": outcome_projection(&h, a.state, a1, &outcomes)?,
        }))
    };

    let out = a.out.clone().unwrap_or_else(|| a.run_dir.join("explain"));
    fs::create_dir_all(&out)?;
    let stem = format!("{qn}_s{}_a{a0}_a{a1}", a.state);
    let summary = json!({
        "config_hash": art.manifest.config_hash,
        "seed": art.manifest.seed,
        "table": qn,
        "state": a.state,
        "state_name": env.describe_state(a.state),
        "a0": a0,
        "a1": a1,
        "q0": ex.q0,
        "q1": ex.q1,
        "advantage_check": ex.advantage_check,
        "advantage_residual": ex.advantage_residual(),
        "reward_source": RewardSource::from(a.reward),
        "outcome_projection": projection,
    });
    let mut written: Vec<PathBuf> = Vec::new();
    let mut write = |name: String, body: &str| -> Result<()> {
        let path = out.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    let fields: [(&str, &[f64]); 4] = [
        ("g", &ex.g),
        ("only_a0", &parts.only_a0),
        ("only_a1", &parts.only_a1),
        ("intersection", &inter),
    ];
    if a.format.contains(&Format::Json) {
        let mut full = summary.clone();
        for (name, v) in fields {
            full[name] = json!(v);
        }
        write(format!("{stem}.json"), &(serde_json::to_string_pretty(&full)? + "\n"))?;
    }
    if a.format.contains(&Format::Csv) {
        for (name, v) in fields {
            write(format!("{stem}_{name}.csv"), &slice_csv(a.state, a0, na, v))?;
        }
        if !a.format.contains(&Format::Json) {
            write(format!("{stem}.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
        }
    }
    if a.format.contains(&Format::Svg) {
        for (name, v) in &fields[1..] {
            let m = meta(&art, format!("{name} {qn} s={} a0={a0} a1={a1}", a.state));
            write(format!("{stem}_{name}.svg"), &heatmap(env.as_ref(), &marginal(v, na), a.trim_unreachable, &m)?)?;
        }
    }
    print_json(&json!({
        "files": written,
        "advantage_residual": ex.advantage_residual(),
        "q0": ex.q0,
        "q1": ex.q1,
        "advantage_check": ex.advantage_check,
    }))?;
    Ok(EXIT_OK)
}

fn cmd_render(a: RenderArgs) -> Result<i32> {
    let art = RunArtifact::read(&a.run_dir)?;
    let (qn, hn) = pick_pair(&art, a.table.as_deref())?;
    check_state(&art, a.state)?;
    let h = art.belief(&hn)?;
    let env = art.env()?;
    let values = marginal_state_visitation(&h, a.state, a.action)?;
    let m = meta(&art, format!("{hn} s={} a={} ({qn})", a.state, a.action));
    let svg = heatmap(env.as_ref(), &values, a.trim_unreachable, &m)?;
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&a.out, svg)?;
    println!("{}", a.out.display());
    Ok(EXIT_OK)
}

fn eval_run(art: &RunArtifact, a: &EvalArgs) -> Result<EvalReport> {
    let cfg = &art.manifest.config;
    let exec = Execution::default();
    match art.manifest.kind {
        ArtifactKind::Tabular => {
            let q = match (&a.table, art.manifest.pairs.len()) {
                (Some(t), _) => art.qtable(&pick_pair(art, Some(t))?.0)?,
                (None, 2) => {
                    let (qa, qb) = (art.qtable("q_a")?, art.qtable("q_b")?);
                    let sum: Vec<f64> = qa.values().iter().zip(qb.values()).map(|(x, y)| x + y).collect();
                    let (ns, na) = qa.shape();
                    crate::tabular::QTable::from_values(ns, na, sum)?.with_legal(qa.legal_sets().to_vec())?
                }
                (None, _) => art.qtable(&pick_pair(art, None)?.0)?,
            };
            evaluate_table(&cfg.env, &q, a.episodes, a.max_steps, a.seed, exec)
        }
        ArtifactKind::Deep => {
            let (qnet, _) = art.networks()?;
            let deep = cfg.deep.as_ref().ok_or_else(|| Error::Format("missing deep config".into()))?;
            evaluate_greedy(&cfg.env, &qnet, deep.q_input, a.episodes, a.max_steps, a.seed, exec)
        }
    }
}

fn cmd_eval(a: EvalArgs) -> Result<i32> {
    let art = RunArtifact::read(&a.run_dir)?;
    let rep = eval_run(&art, &a)?;
    print_json(&json!({
        "run": a.run_dir,
        "episodes": rep.episodes,
        "mean_return": rep.mean_return,
        "mean_length": rep.mean_length,
    }))?;
    Ok(EXIT_OK)
}
