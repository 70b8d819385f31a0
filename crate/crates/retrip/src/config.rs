//! Pipeline configuration resolution: built-in defaults, environment preset,
//! config file, then explicit flags; later layers win.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Args;
use retrip_core::{Environment, PipelineConfig};

/// Pipeline parameter overrides shared by every subcommand. Unset flags fall
/// back to the config file, then the environment preset defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineFlags {
    /// ARP z-score threshold (preset: 4.5 outdoor, 3.5 indoor).
    #[arg(long, global = true)]
    pub z_a: Option<f64>,
    /// RRP squared-difference threshold.
    #[arg(long, global = true)]
    pub delta_r: Option<f64>,
    /// Ring-local neighborhood half-width for the RRP test.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Reflectivity stddev below which ARP extraction is skipped.
    #[arg(long, global = true)]
    pub sigma_floor: Option<f64>,
    /// Cluster connectivity radius, meters.
    #[arg(long, global = true)]
    pub radius: Option<f64>,
    #[arg(long, global = true)]
    pub min_cluster_size: Option<usize>,
    #[arg(long, global = true)]
    pub max_cluster_size: Option<usize>,
    /// Key-instance budget per frame.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Shortest admissible triangle side, meters.
    #[arg(long, global = true)]
    pub side_min: Option<f64>,
    /// Longest admissible triangle side, meters.
    #[arg(long, global = true)]
    pub side_max: Option<f64>,
    /// Hash quantization step, meters.
    #[arg(long, global = true)]
    pub resolution: Option<f64>,
    /// Triangle-inequality slack below which a triangle is degenerate.
    #[arg(long, global = true)]
    pub degenerate_eps: Option<f64>,
    /// Per-side matching tolerance, meters.
    #[arg(long, global = true)]
    pub side_tol: Option<f64>,
    /// Maximum vertex size ratio during matching.
    #[arg(long, global = true)]
    pub size_ratio_tol: Option<f64>,
    /// Number of loop candidates to retrieve.
    #[arg(long, global = true)]
    pub candidates: Option<usize>,
    /// Temporal exclusion window in frames ("none" disables it).
    #[arg(long, global = true)]
    pub exclusion: Option<ExclusionWindow>,
    /// Disable label and size matching (side lengths only).
    #[arg(long, global = true)]
    pub no_instance_matching: bool,
    /// Plane-extraction voxel edge, meters.
    #[arg(long, global = true)]
    pub voxel_size: Option<f64>,
    /// Planarity eigenvalue-ratio threshold.
    #[arg(long, global = true)]
    pub planarity_ratio: Option<f64>,
    #[arg(long, global = true)]
    pub min_voxel_points: Option<usize>,
    /// Reflectivity layer step in scan sigmas.
    #[arg(long, global = true)]
    pub z_l: Option<f64>,
    /// Plane normal alignment threshold.
    #[arg(long, global = true)]
    pub sigma_n: Option<f64>,
    /// Point-to-plane distance threshold, meters.
    #[arg(long, global = true)]
    pub sigma_d: Option<f64>,
    /// Maximum layer difference (strict).
    #[arg(long, global = true)]
    pub sigma_lambda: Option<u8>,
    /// Plane-coincidence fraction required to accept a loop.
    #[arg(long, global = true)]
    pub accept_threshold: Option<f64>,
}

/// Frame-count exclusion window; "none" disables it entirely.
#[derive(Debug, Clone, Copy)]
pub struct ExclusionWindow(pub Option<u64>);

impl std::str::FromStr for ExclusionWindow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "none" {
            Ok(ExclusionWindow(None))
        } else {
            s.parse::<u64>()
                .map(|n| ExclusionWindow(Some(n)))
                .map_err(|e| e.to_string())
        }
    }
}

/// Flat `key = value` config file mirroring the flag names.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!(
                "{}:{}: expected 'key = value', got '{}'",
                path.display(),
                line_no + 1,
                raw
            );
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| anyhow::anyhow!("config key '{key}': bad value '{value}': {e}"))
}

/// Applies config-file keys onto a pipeline config. Unknown keys are usage
/// errors so typos never pass silently.
pub fn apply_config_map(cfg: &mut PipelineConfig, map: &BTreeMap<String, String>) -> Result<()> {
    for (key, value) in map {
        match key.as_str() {
            "env" => {
                let env: Environment = value
                    .parse()
                    .map_err(|e: String| anyhow::anyhow!("config key 'env': {e}"))?;
                apply_env(cfg, env);
            }
            "z-a" => cfg.keypoints.z_a = parse_num(key, value)?,
            "delta-r" => cfg.keypoints.delta_r = parse_num(key, value)?,
            "window" => cfg.keypoints.window = parse_num(key, value)?,
            "sigma-floor" => cfg.keypoints.sigma_floor = parse_num(key, value)?,
            "radius" => cfg.cluster.radius = parse_num(key, value)?,
            "min-cluster-size" => cfg.cluster.min_cluster_size = parse_num(key, value)?,
            "max-cluster-size" => cfg.cluster.max_cluster_size = parse_num(key, value)?,
            "k" => cfg.cluster.k = parse_num(key, value)?,
            "side-min" => cfg.descriptor.side_min = parse_num(key, value)?,
            "side-max" => cfg.descriptor.side_max = parse_num(key, value)?,
            "resolution" => cfg.descriptor.resolution = parse_num(key, value)?,
            "degenerate-eps" => cfg.descriptor.degenerate_eps = parse_num(key, value)?,
            "side-tol" => cfg.matching.side_tol = parse_num(key, value)?,
            "size-ratio-tol" => cfg.matching.size_ratio_tol = parse_num(key, value)?,
            "candidates" => cfg.matching.num_candidates = parse_num(key, value)?,
            "exclusion" => {
                let window: ExclusionWindow = value
                    .parse()
                    .map_err(|e| anyhow::anyhow!("config key 'exclusion': {e}"))?;
                cfg.matching.temporal_exclusion = window.0;
            }
            "instance-matching" => cfg.matching.require_label_match = parse_num(key, value)?,
            "voxel-size" => cfg.verify.voxel_size = parse_num(key, value)?,
            "planarity-ratio" => cfg.verify.planarity_ratio = parse_num(key, value)?,
            "min-voxel-points" => cfg.verify.min_voxel_points = parse_num(key, value)?,
            "z-l" => cfg.verify.z_l = parse_num(key, value)?,
            "sigma-n" => cfg.verify.sigma_n = parse_num(key, value)?,
            "sigma-d" => cfg.verify.sigma_d = parse_num(key, value)?,
            "sigma-lambda" => cfg.verify.sigma_lambda = parse_num(key, value)?,
            "accept-threshold" => cfg.verify.accept_threshold = parse_num(key, value)?,
            other => bail!("unknown config key '{other}'"),
        }
    }
    Ok(())
}

/// Switches the environment preset: ARP threshold and revisit semantics.
pub fn apply_env(cfg: &mut PipelineConfig, env: Environment) {
    let fresh = PipelineConfig::for_env(env);
    cfg.env = env;
    cfg.keypoints.z_a = fresh.keypoints.z_a;
}

/// Applies explicit flags last; they win over the config file and preset.
pub fn apply_flags(cfg: &mut PipelineConfig, flags: &PipelineFlags) {
    macro_rules! set {
        ($field:expr, $opt:expr) => {
            if let Some(v) = $opt {
                $field = v;
            }
        };
    }
    set!(cfg.keypoints.z_a, flags.z_a);
    set!(cfg.keypoints.delta_r, flags.delta_r);
    set!(cfg.keypoints.window, flags.window);
    set!(cfg.keypoints.sigma_floor, flags.sigma_floor);
    set!(cfg.cluster.radius, flags.radius);
    set!(cfg.cluster.min_cluster_size, flags.min_cluster_size);
    set!(cfg.cluster.max_cluster_size, flags.max_cluster_size);
    set!(cfg.cluster.k, flags.k);
    set!(cfg.descriptor.side_min, flags.side_min);
    set!(cfg.descriptor.side_max, flags.side_max);
    set!(cfg.descriptor.resolution, flags.resolution);
    set!(cfg.descriptor.degenerate_eps, flags.degenerate_eps);
    set!(cfg.matching.side_tol, flags.side_tol);
    set!(cfg.matching.size_ratio_tol, flags.size_ratio_tol);
    set!(cfg.matching.num_candidates, flags.candidates);
    if let Some(window) = flags.exclusion {
        cfg.matching.temporal_exclusion = window.0;
    }
    if flags.no_instance_matching {
        cfg.matching.require_label_match = false;
    }
    set!(cfg.verify.voxel_size, flags.voxel_size);
    set!(cfg.verify.planarity_ratio, flags.planarity_ratio);
    set!(cfg.verify.min_voxel_points, flags.min_voxel_points);
    set!(cfg.verify.z_l, flags.z_l);
    set!(cfg.verify.sigma_n, flags.sigma_n);
    set!(cfg.verify.sigma_d, flags.sigma_d);
    set!(cfg.verify.sigma_lambda, flags.sigma_lambda);
    set!(cfg.verify.accept_threshold, flags.accept_threshold);
}

/// Resolves the effective config: preset → config file → flags.
pub fn resolve(
    env: Option<Environment>,
    config_path: Option<&Path>,
    flags: &PipelineFlags,
) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::for_env(env.unwrap_or(Environment::Outdoor));
    if let Some(path) = config_path {
        let map = parse_config_file(path)?;
        apply_config_map(&mut cfg, &map)?;
    }
    if let Some(env) = env {
        apply_env(&mut cfg, env);
    }
    apply_flags(&mut cfg, flags);
    Ok(cfg)
}

/// Prints every effective setting as `key = value` lines.
pub fn print_config(cfg: &PipelineConfig) {
    println!("env = {}", cfg.env.name());
    println!("z-a = {}", cfg.keypoints.z_a);
    println!("delta-r = {}", cfg.keypoints.delta_r);
    println!("window = {}", cfg.keypoints.window);
    println!("sigma-floor = {}", cfg.keypoints.sigma_floor);
    println!("radius = {}", cfg.cluster.radius);
    println!("min-cluster-size = {}", cfg.cluster.min_cluster_size);
    println!("max-cluster-size = {}", cfg.cluster.max_cluster_size);
    println!("k = {}", cfg.cluster.k);
    println!("side-min = {}", cfg.descriptor.side_min);
    println!("side-max = {}", cfg.descriptor.side_max);
    println!("resolution = {}", cfg.descriptor.resolution);
    println!("degenerate-eps = {}", cfg.descriptor.degenerate_eps);
    println!("side-tol = {}", cfg.matching.side_tol);
    println!("size-ratio-tol = {}", cfg.matching.size_ratio_tol);
    println!("candidates = {}", cfg.matching.num_candidates);
    match cfg.matching.temporal_exclusion {
        Some(n) => println!("exclusion = {n}"),
        None => println!("exclusion = none"),
    }
    println!("instance-matching = {}", cfg.matching.require_label_match);
    println!("voxel-size = {}", cfg.verify.voxel_size);
    println!("planarity-ratio = {}", cfg.verify.planarity_ratio);
    println!("min-voxel-points = {}", cfg.verify.min_voxel_points);
    println!("z-l = {}", cfg.verify.z_l);
    println!("sigma-n = {}", cfg.verify.sigma_n);
    println!("sigma-d = {}", cfg.verify.sigma_d);
    println!("sigma-lambda = {}", cfg.verify.sigma_lambda);
    println!("accept-threshold = {}", cfg.verify.accept_threshold);
    println!("revisit-threshold = {}", cfg.env.revisit_threshold());
    println!("scan-spacing = {}", cfg.env.scan_spacing());
}
