//! The `gen` pipeline and the artifact tree it writes.
//!
//! Tree layout under the output directory:
//!
//! ```text
//! scenario.scn          canonical scenario source
//! trajectories.json     per-agent waypoints
//! hdmap.json            vector map
//! t_b.ppm / t_b.json    trajectory BEV raster and its metadata
//! h_b.ppm / h_b.json    map BEV raster and its metadata
//! h_b_vectors.json      polylines recovered from h_b.ppm
//! render.svg            BEV debug render
//! bundle/               multi-view condition bundle
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use scenforge_core::bev::{self, BevRaster};
use scenforge_core::conditioner::{self, ConditionBundle};
use scenforge_core::dsl::{self, ScenarioSpec};
use scenforge_core::gateway::{self, PromptTemplate};
use scenforge_core::geom::Vec2;
use scenforge_core::hdmap::{self, HdMap, MapClass};
use scenforge_core::kernel::{self, KernelParams, Trajectory};
use scenforge_core::{io, post, seed};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

pub const SCENARIO_FILE: &str = "scenario.scn";
pub const TRAJECTORIES_FILE: &str = "trajectories.json";
pub const HDMAP_FILE: &str = "hdmap.json";
pub const TRAJ_RASTER_FILE: &str = "t_b.ppm";
pub const MAP_RASTER_FILE: &str = "h_b.ppm";
pub const VECTORS_FILE: &str = "h_b_vectors.json";
pub const RENDER_FILE: &str = "render.svg";
pub const BUNDLE_DIR: &str = "bundle";

/// Pipeline stage named in failure messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Input,
    Gateway,
    Parse,
    Kernel,
    Hdmap,
    Raster,
    Post,
    Conditioner,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Input => "input",
            Stage::Gateway => "gateway",
            Stage::Parse => "parse",
            Stage::Kernel => "kernel",
            Stage::Hdmap => "hdmap",
            Stage::Raster => "raster",
            Stage::Post => "post",
            Stage::Conditioner => "conditioner",
            Stage::Write => "write",
        })
    }
}

trait StageExt<T> {
    fn stage(self, stage: Stage) -> anyhow::Result<T>;
}

impl<T, E: Into<anyhow::Error>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> anyhow::Result<T> {
        self.map_err(|e| e.into().context(format!("stage `{stage}` failed")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Prompt(String),
    Scenario(PathBuf),
}

/// How the scenario was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    File,
    Remote,
    Intent,
    /// The intent matcher found nothing and returned the default scene.
    IntentFallback,
}

/// Everything `gen` computes, before anything is written.
#[derive(Debug, Clone)]
pub struct Generated {
    pub spec: ScenarioSpec,
    pub source: Source,
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
    pub map: HdMap,
    pub traj_raster: BevRaster,
    pub map_raster: BevRaster,
    pub skipped: Vec<String>,
    pub vectors: Vec<RecoveredLine>,
    pub bundle: ConditionBundle,
    pub render: String,
}

/// A polyline recovered from the map raster, in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredLine {
    pub class: MapClass,
    pub points: Vec<Vec2>,
}

/// Resolves the input to a scenario: the file as-is, or a prompt through
/// the remote model (parsed) or the offline matcher.
pub fn resolve(input: &Input, cfg: &PipelineConfig) -> anyhow::Result<(ScenarioSpec, Source)> {
    match input {
        Input::Scenario(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).stage(Stage::Input)?;
            let spec = dsl::parse(&text).with_context(|| path.display().to_string()).stage(Stage::Parse)?;
            Ok((spec, Source::File))
        }
        Input::Prompt(query) if cfg.offline => {
            let m = gateway::match_intent(query);
            Ok((m.spec, if m.fallback { Source::IntentFallback } else { Source::Intent }))
        }
        Input::Prompt(query) => {
            let prompt = gateway::build_prompt(&PromptTemplate::default(), query).stage(Stage::Gateway)?;
            let reply = gateway::query_remote(&cfg.gateway, &prompt).stage(Stage::Gateway)?;
            let spec = dsl::parse(&reply).context("completion is not a valid scenario").stage(Stage::Parse)?;
            Ok((spec, Source::Remote))
        }
    }
}

/// Runs every stage after the scenario is known.
pub fn generate(spec: ScenarioSpec, source: Source, cfg: &PipelineConfig) -> anyhow::Result<Generated> {
    let seed = cfg.seed.or(cfg.kernel.seed).unwrap_or(spec.seed);
    let params = KernelParams { seed: Some(seed), ..cfg.kernel.clone() };
    let trajectories = kernel::generate_scene(&spec, &params).stage(Stage::Kernel)?;

    let map = hdmap::synthesize(&trajectories, &cfg.map, &mut seed::stream(seed, "hdmap", 0)).stage(Stage::Hdmap)?;
    let violations = hdmap::validate(&map, &trajectories);
    if let Some(first) = violations.first() {
        return Err(anyhow!("{} map constraint violation(s), first: {first:?}", violations.len())).stage(Stage::Hdmap);
    }

    let (traj_raster, log) = bev::rasterize_trajectories(&trajectories, &cfg.raster).stage(Stage::Raster)?;
    let (map_raster, _) = bev::rasterize_hdmap(&map, &cfg.raster).stage(Stage::Raster)?;
    let render = bev::render_svg(Some(&map), &trajectories, &cfg.raster);

    let vectors = post::vectorize(&map_raster, cfg.threshold, &cfg.raster)
        .into_iter()
        .map(|(class, points)| RecoveredLine { class, points })
        .collect();

    let rig = cfg.load_rig().stage(Stage::Post)?;
    let sizes = cfg.load_sizes().stage(Stage::Conditioner)?;
    let bundle =
        conditioner::bundle(&spec, seed, &trajectories, &map, &rig, &sizes, cfg.task, &cfg.clip).stage(Stage::Conditioner)?;

    Ok(Generated {
        spec,
        source,
        seed,
        trajectories,
        map,
        traj_raster,
        map_raster,
        skipped: log.skipped,
        vectors,
        bundle,
        render,
    })
}

/// The directory `gen` writes to: config/flag, else the scenario's first
/// `save` path, else `out`.
pub fn output_dir(spec: &ScenarioSpec, cfg: &PipelineConfig) -> PathBuf {
    cfg.out.clone().or_else(|| spec.outputs.first().map(|o| PathBuf::from(&o.path))).unwrap_or_else(|| PathBuf::from("out"))
}

impl Generated {
    /// Writes the artifact tree. Every file is written atomically.
    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).stage(Stage::Write)?;
        let mut spec = self.spec.clone();
        spec.seed = self.seed;
        io::write_atomic(&dir.join(SCENARIO_FILE), dsl::print_canonical(&spec).as_bytes()).stage(Stage::Write)?;
        io::write_json(&dir.join(TRAJECTORIES_FILE), &self.trajectories).stage(Stage::Write)?;
        io::write_json(&dir.join(HDMAP_FILE), &self.map).stage(Stage::Write)?;
        self.traj_raster.save(&dir.join(TRAJ_RASTER_FILE)).stage(Stage::Write)?;
        self.map_raster.save(&dir.join(MAP_RASTER_FILE)).stage(Stage::Write)?;
        io::write_json(&dir.join(VECTORS_FILE), &self.vectors).stage(Stage::Write)?;
        io::write_atomic(&dir.join(RENDER_FILE), self.render.as_bytes()).stage(Stage::Write)?;
        self.bundle.save(&dir.join(BUNDLE_DIR)).stage(Stage::Write)?;
        Ok(())
    }
}

/// Outcome of re-loading an artifact tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeReport {
    pub agents: usize,
    pub frames: usize,
    pub recovered_lines: usize,
    pub environment: Vec<String>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Re-loads every artifact and cross-checks them.
pub fn validate_tree(dir: &Path) -> anyhow::Result<TreeReport> {
    let text = std::fs::read_to_string(dir.join(SCENARIO_FILE)).with_context(|| format!("reading {SCENARIO_FILE}"))?;
    let spec = dsl::parse(&text).with_context(|| format!("parsing {SCENARIO_FILE}"))?;
    if dsl::print_canonical(&spec) != text {
        bail!("{SCENARIO_FILE} is not in canonical form");
    }

    let trajectories: Vec<Trajectory> = read_json(&dir.join(TRAJECTORIES_FILE))?;
    if trajectories.iter().filter(|t| t.is_ego()).count() != 1 {
        bail!("{TRAJECTORIES_FILE} must hold exactly one ego trajectory");
    }
    if trajectories.len() != spec.agents.len() + 1 {
        bail!("{TRAJECTORIES_FILE} has {} trajectories for {} declared agents plus ego", trajectories.len(), spec.agents.len());
    }
    for t in &trajectories {
        let step = if t.len() > 1 { t.points[1][3] - t.points[0][3] } else { 1.0 };
        let r = t.kinematic_residual(step);
        if !(r <= 1e-6) {
            bail!("trajectory `{}` is kinematically inconsistent (residual {r:e})", t.agent_id);
        }
    }

    let map: HdMap = read_json(&dir.join(HDMAP_FILE))?;
    let violations = hdmap::validate(&map, &trajectories);
    if let Some(v) = violations.first() {
        bail!("{HDMAP_FILE}: {} constraint violation(s), first: {v:?}", violations.len());
    }

    let t_b = BevRaster::load(&dir.join(TRAJ_RASTER_FILE)).context(TRAJ_RASTER_FILE)?;
    let h_b = BevRaster::load(&dir.join(MAP_RASTER_FILE)).context(MAP_RASTER_FILE)?;
    if (t_b.width, t_b.height) != (h_b.width, h_b.height) {
        bail!("BEV rasters differ in size");
    }
    let vectors: Vec<RecoveredLine> = read_json(&dir.join(VECTORS_FILE))?;

    let svg = std::fs::read_to_string(dir.join(RENDER_FILE)).with_context(|| format!("reading {RENDER_FILE}"))?;
    if !svg.starts_with("<svg") || !svg.trim_end().ends_with("</svg>") {
        bail!("{RENDER_FILE} is not an SVG document");
    }

    let bundle = ConditionBundle::load(&dir.join(BUNDLE_DIR)).context("loading bundle")?;
    if bundle.meta.agents != trajectories.len() {
        bail!("bundle metadata lists {} agents, trajectories hold {}", bundle.meta.agents, trajectories.len());
    }
    if bundle.meta.seed != spec.seed {
        bail!("bundle seed {} differs from scenario seed {}", bundle.meta.seed, spec.seed);
    }
    Ok(TreeReport {
        agents: trajectories.len(),
        frames: bundle.meta.layout[0],
        recovered_lines: vectors.len(),
        environment: bundle.meta.environment,
    })
}
