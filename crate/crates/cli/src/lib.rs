//! `scenforge` command line. Exit codes: 0 success, 1 pipeline failure,
//! 2 usage error.

pub mod config;
pub mod pipeline;
pub mod toy;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{ArgGroup, Args, Parser, Subcommand};
use scenforge_core::conditioner::{render_frame_svg, ConditionBundle, Task};
use scenforge_core::{dsl, io};
use scenforge_diffusion::check::{self, CheckResult};
use scenforge_diffusion::edm::Preconditioning;

use crate::config::PipelineConfig;
use crate::pipeline::{Input, Source};

/// A bad invocation or configuration; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "scenforge", version, about = "Scenario text to multi-view structured conditions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate trajectories, maps, BEV rasters and a condition bundle.
    Gen(GenArgs),
    /// Draw each frame of a condition bundle as SVG.
    Render(RenderArgs),
    /// Run the diffusion numeric self-checks.
    EdmCheck(EdmCheckArgs),
    /// Train the toy denoiser and report loss and sample moments.
    TrainToy(toy::TrainToyArgs),
    /// Re-load an artifact tree or parse a scenario file.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["prompt", "scn"])))]
pub struct GenArgs {
    /// Free-text scenario description.
    #[arg(long)]
    pub prompt: Option<String>,
    /// Scenario DSL file.
    #[arg(long)]
    pub scn: Option<PathBuf>,
    /// TOML pipeline configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use the offline intent matcher instead of the remote model.
    #[arg(long)]
    pub offline: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// future_prediction, front_outpaint or full_generation.
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub rig: Option<PathBuf>,
    #[arg(long)]
    pub sizes: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Waypoint index of the first bundle frame.
    #[arg(long)]
    pub start_frame: Option<usize>,
}

impl GenArgs {
    pub fn input(&self) -> Input {
        match (&self.prompt, &self.scn) {
            (Some(p), _) => Input::Prompt(p.clone()),
            (None, Some(s)) => Input::Scenario(s.clone()),
            (None, None) => unreachable!("clap requires one input"),
        }
    }

    /// Config file (if any) with flags applied on top.
    pub fn config(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let env = scenforge_core::gateway::GatewayConfig::from_env();
        if std::env::var_os(scenforge_core::gateway::ENV_URL).is_some() {
            cfg.gateway.base_url = env.base_url;
        }
        if std::env::var_os(scenforge_core::gateway::ENV_MODEL).is_some() {
            cfg.gateway.model = env.model;
        }
        cfg.offline |= self.offline;
        cfg.out = self.out.clone().or(cfg.out);
        cfg.seed = self.seed.or(cfg.seed);
        cfg.task = self.task.unwrap_or(cfg.task);
        cfg.rig = self.rig.clone().or(cfg.rig);
        cfg.sizes = self.sizes.clone().or(cfg.sizes);
        cfg.clip.frames = self.frames.unwrap_or(cfg.clip.frames);
        cfg.clip.start_frame = self.start_frame.unwrap_or(cfg.clip.start_frame);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Condition bundle directory.
    pub bundle: PathBuf,
    /// Where to write `frame_XX.svg`; defaults to `<bundle>/svg`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EdmCheckArgs {
    /// Print a JSON document instead of the table.
    #[arg(long)]
    pub json: bool,
    /// Fault injection: multiplier of ln σ in c_noise.
    #[arg(long, hide = true, default_value_t = 0.25)]
    pub debug_c_noise_scale: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Artifact directory written by `gen`, or a `.scn` file.
    pub path: PathBuf,
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Gen(args) => cmd_gen(&args),
        Command::Render(args) => cmd_render(&args),
        Command::EdmCheck(args) => cmd_edm_check(&args),
        Command::TrainToy(args) => toy::cmd_train_toy(&args),
        Command::Validate(args) => cmd_validate(&args),
    }
}

pub fn cmd_gen(args: &GenArgs) -> anyhow::Result<i32> {
    let cfg = args.config()?;
    let (spec, source) = pipeline::resolve(&args.input(), &cfg)?;
    if source == Source::IntentFallback {
        eprintln!("warning: no intent recognized in the prompt; generating the default ego-forward scene");
    }
    let dir = pipeline::output_dir(&spec, &cfg);
    let generated = pipeline::generate(spec, source, &cfg)?;
    generated.write(&dir)?;
    for id in &generated.skipped {
        eprintln!("warning: agent `{id}` lies outside the BEV raster and was not drawn");
    }
    let env: Vec<&str> = generated.spec.environment.iter().map(String::as_str).collect();
    println!(
        "scenario `{}` seed {}: {} agents, env [{}], {} frames -> {}",
        generated.spec.name,
        generated.seed,
        generated.trajectories.len(),
        env.join(" "),
        generated.bundle.meta.layout[0],
        dir.display()
    );
    Ok(0)
}

pub fn cmd_render(args: &RenderArgs) -> anyhow::Result<i32> {
    let bundle = ConditionBundle::load(&args.bundle).with_context(|| format!("loading bundle {}", args.bundle.display()))?;
    let out = args.out.clone().unwrap_or_else(|| args.bundle.join("svg"));
    let written = render_bundle(&bundle, &out)?;
    println!("{} frame(s) -> {}", written.len(), out.display());
    Ok(0)
}

/// Writes `frame_XX.svg` for every frame; returns the paths.
pub fn render_bundle(bundle: &ConditionBundle, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    (0..bundle.meta.layout[0])
        .map(|t| {
            let path = out.join(format!("frame_{t:02}.svg"));
            io::write_atomic(&path, render_frame_svg(bundle, t).as_bytes())?;
            Ok(path)
        })
        .collect()
}

pub fn cmd_edm_check(args: &EdmCheckArgs) -> anyhow::Result<i32> {
    if !args.debug_c_noise_scale.is_finite() {
        return Err(UsageError("--debug-c-noise-scale must be finite".into()).into());
    }
    let started = Instant::now();
    let results = check::run_all(&Preconditioning { noise_scale: args.debug_c_noise_scale });
    let all = results.iter().all(|r| r.pass);
    if args.json {
        let doc = serde_json::json!({ "pass": all, "checks": results });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        print!("{}", check_table(&results));
        println!("{} in {:.1} s", if all { "PASS" } else { "FAIL" }, started.elapsed().as_secs_f64());
    }
    Ok(if all { 0 } else { 1 })
}

pub fn check_table(results: &[CheckResult]) -> String {
    let mut s = String::new();
    for r in results {
        s.push_str(&format!(
            "{:<4}  {:<22}  {:.3e} <= {:.0e}  {}\n",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.metric,
            r.tolerance,
            r.detail
        ));
    }
    s
}

pub fn cmd_validate(args: &ValidateArgs) -> anyhow::Result<i32> {
    let path = &args.path;
    if path.is_dir() {
        let report = pipeline::validate_tree(path).with_context(|| format!("validating {}", path.display()))?;
        println!(
            "ok: {} agents, {} frames, {} recovered map lines, env [{}]",
            report.agents,
            report.frames,
            report.recovered_lines,
            report.environment.join(" ")
        );
    } else if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let spec = dsl::parse(&text).with_context(|| path.display().to_string())?;
        let canonical = dsl::print_canonical(&spec);
        if dsl::parse(&canonical).as_ref() != Ok(&spec) {
            bail!("canonical form of {} does not parse back to the same scenario", path.display());
        }
        println!("ok: scenario `{}` with {} agent(s)", spec.name, spec.agents.len() + 1);
    } else {
        return Err(UsageError(format!("{} does not exist", path.display())).into());
    }
    Ok(0)
}
