//! Manifest-driven command-line front end.
//!
//! Four subcommands cover the toolkit's stages:
//!
//! * `capacity`  — analytic maximum-density bounds per technology,
//! * `calibrate` — Monte-Carlo delivery-ratio surfaces, content-hash cached,
//! * `simulate`  — the scheme × density × repetition experiment grid,
//! * `cost`      — CPU-cycle and context-overhead sweeps.
//!
//! Every output CSV starts with `# key=value` provenance comments (tool
//! version, manifest hash, seed). Exit codes form a stable contract for
//! automation: 0 success, 1 runtime failure, 2 validation failure (clap
//! usage errors also exit 2). Re-running any command with an unchanged
//! manifest and cache is a no-op apart from rewriting identical bytes.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::capacity::{max_density_single, TrafficAssumption};
use crate::cost::{cis_size_bits, cpu_usage, overhead_bps, total_cycles_per_second, CostInputs};
use crate::link::{
    calibrate_pdr, default_pathloss_for, read_families_csv, write_families_csv,
    CalibrationConfig, PdrCurveFamily,
};
use crate::radio::{default_catalog, derive_psr_catalog, McsMode, PathlossParams, RatProfile};
use crate::sim::{run_simulation, AppProfile, Scheme, SimAssets, SimConfig};

/// Environment variable overriding the curve-cache directory
/// (default: `<out_dir>/pdr_cache`).
pub const CACHE_DIR_ENV: &str = "CARHET_CACHE_DIR";

/// Range over which packet-success-ratio curves are tabulated for the
/// capacity bounds; beyond ~3 km every catalog technology is far below
/// its sensing floor, so the interference footprint has converged.
const PSR_RANGE_M: f64 = 3000.0;

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

/// Command failures, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input (manifest, paths, names): exit 2.
    #[error("{0}")]
    Validation(String),
    /// Failure during execution (I/O, calibration, simulation): exit 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "carhet",
    version,
    about = "Packet-level simulator and analysis toolkit for heterogeneous V2V communication"
)]
pub struct Cli {
    /// JSON run manifest; omitted means built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    /// Output directory (overrides the manifest).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed (overrides the manifest).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for independent grid cells; 0 picks the core count.
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic capacity bounds per technology and for the combined set.
    Capacity,
    /// Derive (or reuse cached) packet-delivery-ratio surfaces.
    Calibrate,
    /// Run the scheme x density x repetition simulation grid.
    Simulate {
        /// Application-requirement preset.
        #[arg(long, value_enum, default_value_t = ScenarioArg::Uniform)]
        scenario: ScenarioArg,
    },
    /// CPU-cycle and protocol-overhead sweeps.
    Cost,
}

/// Application-requirement presets for `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    /// Every vehicle runs the manifest's single application requirement.
    Uniform,
    /// Heterogeneous requirements: half the fleet at 1.5 Mbps over 40 m,
    /// a quarter at 1.0 Mbps over 80 m, a quarter at 0.5 Mbps over 120 m.
    Mixed,
}

impl ScenarioArg {
    fn name(self) -> &'static str {
        match self {
            ScenarioArg::Uniform => "uniform",
            ScenarioArg::Mixed => "mixed",
        }
    }
}

/// The heterogeneous-requirements fleet mix used by `--scenario mixed`.
pub fn mixed_preset() -> Vec<AppProfile> {
    vec![
        AppProfile {
            fraction: 0.50,
            rate_bps: 1_500_000.0,
            target_distance_m: 40.0,
            reliability: 0.9,
        },
        AppProfile {
            fraction: 0.25,
            rate_bps: 1_000_000.0,
            target_distance_m: 80.0,
            reliability: 0.9,
        },
        AppProfile {
            fraction: 0.25,
            rate_bps: 500_000.0,
            target_distance_m: 120.0,
            reliability: 0.9,
        },
    ]
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// Everything a run needs, serializable so a grid is reproducible from
/// one JSON file. Every field has a default; `{}` is a valid manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    /// Technology catalog: `"default"` or a path to a JSON array of profiles.
    pub catalog: String,
    /// Pathloss parameters: `"default"` or a path to a JSON array, one
    /// entry per catalog profile.
    pub pathloss: String,
    pub out_dir: PathBuf,
    /// Master seed; recorded in every output header.
    pub seed: u64,
    pub capacity: CapacityBlock,
    pub calibration: CalibrationBlock,
    pub simulation: SimulationBlock,
    pub cost: CostBlock,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            catalog: "default".into(),
            pathloss: "default".into(),
            out_dir: "out".into(),
            seed: 1,
            capacity: CapacityBlock::default(),
            calibration: CalibrationBlock::default(),
            simulation: SimulationBlock::default(),
            cost: CostBlock::default(),
        }
    }
}

/// One row group of the capacity sweep: an application rate and an MCS.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityEntry {
    pub rate_mbps: f64,
    #[serde(default = "default_mcs")]
    pub mcs: McsMode,
}

fn default_mcs() -> McsMode {
    McsMode::Highest
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityBlock {
    pub entries: Vec<CapacityEntry>,
    pub payload_bytes: u32,
}

impl Default for CapacityBlock {
    fn default() -> Self {
        CapacityBlock {
            entries: [0.5, 1.0, 1.5]
                .iter()
                .map(|&rate_mbps| CapacityEntry {
                    rate_mbps,
                    mcs: McsMode::Highest,
                })
                .collect(),
            payload_bytes: 1024,
        }
    }
}

/// Calibration grid; the seed comes from the manifest's master seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationBlock {
    pub cbr_levels: Vec<f64>,
    pub distances_m: Vec<f64>,
    pub trials: u32,
    pub payload_bytes: u32,
    pub mcs: McsMode,
}

impl Default for CalibrationBlock {
    fn default() -> Self {
        let d = CalibrationConfig::default();
        CalibrationBlock {
            cbr_levels: d.cbr_levels,
            distances_m: d.distances_m,
            trials: d.trials,
            payload_bytes: d.payload_bytes,
            mcs: d.mcs,
        }
    }
}

impl CalibrationBlock {
    fn to_config(&self, seed: u64) -> CalibrationConfig {
        CalibrationConfig {
            cbr_levels: self.cbr_levels.clone(),
            distances_m: self.distances_m.clone(),
            trials: self.trials,
            seed,
            payload_bytes: self.payload_bytes,
            mcs: self.mcs,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationBlock {
    /// `single_rat:<name-or-id>`, `random`, or `carhet`.
    pub schemes: Vec<String>,
    pub densities_veh_per_km: Vec<f64>,
    /// Seeded runs per (scheme, density) cell; repetition r uses seed
    /// `seed + r`, so every scheme and density sees the same fleets.
    pub repetitions: u32,
    pub sim_time_s: f64,
    pub warmup_s: f64,
    pub road_length_m: f64,
    pub lanes: usize,
    pub max_speed_kmh: f64,
    /// Uniform-scenario application requirement (ignored under
    /// `--scenario mixed`).
    pub app_rate_mbps: f64,
    pub target_distance_m: f64,
    pub reliability: f64,
    pub payload_bytes: u32,
    pub mcs: McsMode,
    pub t_meas_s: f64,
    pub t_update_s: f64,
    pub t_neigh_s: f64,
    pub alpha: f64,
    pub capture_margin_db: Option<f64>,
    pub metrics_window_s: f64,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        let d = SimConfig::default();
        SimulationBlock {
            schemes: vec![
                "single_rat:DSRC-5.9".into(),
                "random".into(),
                "carhet".into(),
            ],
            densities_veh_per_km: vec![40.0, 80.0, 120.0],
            repetitions: 1,
            sim_time_s: d.sim_time_s,
            warmup_s: d.warmup_s,
            road_length_m: d.road_length_m,
            lanes: d.lanes,
            max_speed_kmh: d.max_speed_kmh,
            app_rate_mbps: 0.5,
            target_distance_m: 40.0,
            reliability: 0.9,
            payload_bytes: d.payload_bytes,
            mcs: d.mcs,
            t_meas_s: d.t_meas_s,
            t_update_s: d.t_update_s,
            t_neigh_s: d.t_neigh_s,
            alpha: d.alpha,
            capture_margin_db: d.capture_margin_db,
            metrics_window_s: d.metrics_window_s,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostBlock {
    /// Neighbor counts 0..=n_max, applied as both 1- and 2-hop counts.
    pub n_max: u64,
    pub cpu_ghz: Vec<f64>,
    pub n_rat: u64,
    pub t_meas_s: f64,
    pub t_update_s: f64,
    pub total_bandwidth_mhz: f64,
}

impl Default for CostBlock {
    fn default() -> Self {
        let d = CostInputs::default();
        CostBlock {
            n_max: 100,
            cpu_ghz: vec![0.5, 1.0, 2.0, 3.0],
            n_rat: d.n_rat,
            t_meas_s: d.t_meas_s,
            t_update_s: d.t_update_s,
            total_bandwidth_mhz: d.total_bandwidth_hz / 1e6,
        }
    }
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Parses `std::env::args`, runs the command, and returns the process
/// exit code. The thin binary calls this and nothing else.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one parsed command to completion.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut manifest = load_manifest(cli.manifest.as_deref())?;
    if let Some(out) = cli.out {
        manifest.out_dir = out;
    }
    if let Some(seed) = cli.seed {
        manifest.seed = seed;
    }
    validate_manifest(&manifest)?;
    let ctx = Context::build(manifest)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Runtime(format!("building the worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Capacity => cmd_capacity(&ctx),
        Command::Calibrate => cmd_calibrate(&ctx),
        Command::Simulate { scenario } => cmd_simulate(&ctx, scenario),
        Command::Cost => cmd_cost(&ctx),
    })
}

fn load_manifest(path: Option<&Path>) -> Result<RunManifest, CliError> {
    let Some(path) = path else {
        return Ok(RunManifest::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("reading manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("parsing manifest {}: {e}", path.display())))
}

/// Checks every manifest field that later stages would otherwise reject
/// with a panic or an obscure error; failures name the field.
fn validate_manifest(m: &RunManifest) -> Result<(), CliError> {
    fn bad(field: &str, msg: impl std::fmt::Display) -> Result<(), CliError> {
        Err(CliError::Validation(format!(
            "manifest field `{field}`: {msg}"
        )))
    }

    for (field, spec) in [("catalog", &m.catalog), ("pathloss", &m.pathloss)] {
        if spec != "default" && !Path::new(spec).exists() {
            return bad(field, format!("path {spec:?} does not exist"));
        }
    }

    if m.capacity.payload_bytes == 0 {
        return bad("capacity.payload_bytes", "must be positive");
    }
    for e in &m.capacity.entries {
        if !(e.rate_mbps > 0.0 && e.rate_mbps.is_finite()) {
            return bad("capacity.entries", "every rate_mbps must be positive");
        }
    }

    let c = &m.calibration;
    if c.cbr_levels.is_empty() || c.distances_m.is_empty() {
        return bad("calibration", "cbr_levels and distances_m must be non-empty");
    }
    if c.cbr_levels.iter().any(|&l| !(0.0..1.0).contains(&l)) {
        return bad("calibration.cbr_levels", "levels must lie in [0, 1)");
    }
    if !c
        .cbr_levels
        .windows(2)
        .all(|w| w[0] < w[1])
    {
        return bad("calibration.cbr_levels", "levels must be strictly ascending");
    }
    if c.distances_m.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
        return bad("calibration.distances_m", "distances must be non-negative");
    }
    if !c.distances_m.windows(2).all(|w| w[0] < w[1]) {
        return bad(
            "calibration.distances_m",
            "distances must be strictly ascending",
        );
    }
    if c.trials == 0 {
        return bad("calibration.trials", "must be at least 1");
    }
    if c.payload_bytes == 0 {
        return bad("calibration.payload_bytes", "must be positive");
    }

    let s = &m.simulation;
    if s.schemes.is_empty() {
        return bad("simulation.schemes", "at least one scheme is required");
    }
    if s.densities_veh_per_km.is_empty()
        || s.densities_veh_per_km
            .iter()
            .any(|&d| !(d >= 0.0 && d.is_finite()))
    {
        return bad(
            "simulation.densities_veh_per_km",
            "densities must be non-negative numbers",
        );
    }
    if s.repetitions == 0 {
        return bad("simulation.repetitions", "must be at least 1");
    }
    if !(s.sim_time_s > 0.0) {
        return bad("simulation.sim_time_s", "must be positive");
    }
    if !(s.warmup_s >= 0.0 && s.warmup_s < s.sim_time_s) {
        return bad("simulation.warmup_s", "must satisfy 0 <= warmup < sim_time");
    }
    if !(s.road_length_m > 0.0) {
        return bad("simulation.road_length_m", "must be positive");
    }
    if s.lanes == 0 {
        return bad("simulation.lanes", "must be at least 1");
    }
    if !(s.max_speed_kmh >= 0.0) {
        return bad("simulation.max_speed_kmh", "must be non-negative");
    }
    if !(s.app_rate_mbps > 0.0) {
        return bad("simulation.app_rate_mbps", "must be positive");
    }
    if !(s.target_distance_m > 0.0) {
        return bad("simulation.target_distance_m", "must be positive");
    }
    if !(s.reliability > 0.0 && s.reliability <= 1.0) {
        return bad("simulation.reliability", "must lie in (0, 1]");
    }
    if s.payload_bytes == 0 {
        return bad("simulation.payload_bytes", "must be positive");
    }
    for (field, value) in [
        ("simulation.t_meas_s", s.t_meas_s),
        ("simulation.t_update_s", s.t_update_s),
        ("simulation.t_neigh_s", s.t_neigh_s),
        ("simulation.metrics_window_s", s.metrics_window_s),
    ] {
        if !(value > 0.0) {
            return bad(field, "must be positive");
        }
    }
    if !(s.alpha >= 0.0) {
        return bad("simulation.alpha", "must be non-negative");
    }

    let k = &m.cost;
    if k.cpu_ghz.is_empty() || k.cpu_ghz.iter().any(|&g| !(g > 0.0)) {
        return bad("cost.cpu_ghz", "needs at least one positive clock speed");
    }
    if k.n_rat == 0 {
        return bad("cost.n_rat", "must be at least 1");
    }
    if !(k.t_meas_s > 0.0) || !(k.t_update_s > 0.0) {
        return bad("cost", "t_meas_s and t_update_s must be positive");
    }
    if !(k.total_bandwidth_mhz > 0.0) {
        return bad("cost.total_bandwidth_mhz", "must be positive");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared run context
// ---------------------------------------------------------------------------

/// Loaded, validated inputs shared by all subcommands.
struct Context {
    manifest: RunManifest,
    catalog: Vec<RatProfile>,
    pathloss: Vec<PathlossParams>,
    /// SHA-256 of the effective manifest (after flag overrides), hex.
    manifest_sha256: String,
}

impl Context {
    fn build(manifest: RunManifest) -> Result<Context, CliError> {
        let catalog = load_catalog(&manifest.catalog)?;
        let pathloss = load_pathloss(&manifest.pathloss, &catalog)?;
        let canonical = serde_json::to_vec(&manifest)
            .map_err(|e| CliError::Runtime(format!("serializing the manifest: {e}")))?;
        let manifest_sha256 = hex(&Sha256::digest(&canonical));
        Ok(Context {
            manifest,
            catalog,
            pathloss,
            manifest_sha256,
        })
    }

    /// Header comments stamped on every output CSV.
    fn provenance(&self, seed: u64) -> Vec<String> {
        vec![
            format!("tool_version={}", env!("CARGO_PKG_VERSION")),
            format!("manifest_sha256={}", self.manifest_sha256),
            format!("seed={seed}"),
        ]
    }

    fn cache_dir(&self) -> PathBuf {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.manifest.out_dir.join("pdr_cache"),
        }
    }
}

fn load_catalog(spec: &str) -> Result<Vec<RatProfile>, CliError> {
    if spec == "default" {
        return Ok(default_catalog());
    }
    let text = fs::read_to_string(spec).map_err(|e| {
        CliError::Validation(format!("manifest field `catalog`: reading {spec:?}: {e}"))
    })?;
    let catalog: Vec<RatProfile> = serde_json::from_str(&text).map_err(|e| {
        CliError::Validation(format!("manifest field `catalog`: parsing {spec:?}: {e}"))
    })?;
    if catalog.is_empty() {
        return Err(CliError::Validation(
            "manifest field `catalog`: must list at least one technology".into(),
        ));
    }
    for (i, p) in catalog.iter().enumerate() {
        if p.id as usize != i {
            return Err(CliError::Validation(format!(
                "manifest field `catalog`: profile {:?} has id {} but sits at index {i}; \
                 ids must equal positions",
                p.name, p.id
            )));
        }
    }
    Ok(catalog)
}

fn load_pathloss(spec: &str, catalog: &[RatProfile]) -> Result<Vec<PathlossParams>, CliError> {
    let params = if spec == "default" {
        default_pathloss_for(catalog)
    } else {
        let text = fs::read_to_string(spec).map_err(|e| {
            CliError::Validation(format!("manifest field `pathloss`: reading {spec:?}: {e}"))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::Validation(format!("manifest field `pathloss`: parsing {spec:?}: {e}"))
        })?
    };
    if params.len() != catalog.len() {
        return Err(CliError::Validation(format!(
            "manifest field `pathloss`: {} entries for {} catalog profiles",
            params.len(),
            catalog.len()
        )));
    }
    Ok(params)
}

// ---------------------------------------------------------------------------
// Small shared helpers
// ---------------------------------------------------------------------------

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes via a unique sibling temp file and renames into place, so
/// concurrent cells and interrupted runs never leave half-written CSVs.
fn atomic_write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let err = |what: &str, e: std::io::Error| {
        CliError::Runtime(format!("{what} {}: {e}", path.display()))
    };
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(name);
    fs::write(&tmp, contents).map_err(|e| err("writing", e))?;
    fs::rename(&tmp, path).map_err(|e| err("committing", e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", path.display())))
}

fn push_provenance(out: &mut String, lines: &[String]) {
    for line in lines {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
}

fn mcs_label(mcs: McsMode) -> &'static str {
    match mcs {
        McsMode::Highest => "highest",
        McsMode::QpskHalf => "qpsk_half",
    }
}

/// `40` for integral values, `37.5` otherwise; keeps directory names tidy.
fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// Parses a scheme name: `random`, `carhet`, or `single_rat:<name-or-id>`.
pub fn parse_scheme(spec: &str, catalog: &[RatProfile]) -> Result<Scheme, CliError> {
    let t = spec.trim();
    if t.eq_ignore_ascii_case("random") {
        return Ok(Scheme::Random);
    }
    if t.eq_ignore_ascii_case("carhet") {
        return Ok(Scheme::Carhet);
    }
    if let Some(rest) = t.strip_prefix("single_rat:") {
        if let Ok(id) = rest.trim().parse::<usize>() {
            if id < catalog.len() {
                return Ok(Scheme::SingleRat { rat_id: id });
            }
        }
        if let Some(p) = catalog
            .iter()
            .find(|p| p.name.eq_ignore_ascii_case(rest.trim()))
        {
            return Ok(Scheme::SingleRat {
                rat_id: p.id as usize,
            });
        }
    }
    let names: Vec<&str> = catalog.iter().map(|p| p.name.as_str()).collect();
    Err(CliError::Validation(format!(
        "unknown scheme {spec:?}; valid schemes are `random`, `carhet`, and \
         `single_rat:<name-or-id>` with technologies {}",
        names.join(", ")
    )))
}

// ---------------------------------------------------------------------------
// capacity
// ---------------------------------------------------------------------------

fn cmd_capacity(ctx: &Context) -> Result<(), CliError> {
    let block = &ctx.manifest.capacity;
    let psrs = derive_psr_catalog(&ctx.catalog, PSR_RANGE_M);

    let mut out = String::new();
    push_provenance(&mut out, &ctx.provenance(ctx.manifest.seed));
    out.push_str("rate_mbps,mcs,rat,max_density_veh_per_km\n");
    for entry in &block.entries {
        let rate_bps = entry.rate_mbps * 1e6;
        let mut combined = 0.0;
        for (i, profile) in ctx.catalog.iter().enumerate() {
            let t = TrafficAssumption::from_app_rate(
                rate_bps,
                block.payload_bytes,
                profile,
                entry.mcs,
            );
            let density = max_density_single(&t, &psrs[i]);
            combined += density;
            out.push_str(&format!(
                "{},{},{},{density:.3}\n",
                entry.rate_mbps,
                mcs_label(entry.mcs),
                profile.name
            ));
        }
        out.push_str(&format!(
            "{},{},hetero,{combined:.3}\n",
            entry.rate_mbps,
            mcs_label(entry.mcs)
        ));
    }

    create_dir(&ctx.manifest.out_dir)?;
    let path = ctx.manifest.out_dir.join("capacity.csv");
    atomic_write(&path, out.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// calibrate (and the curve cache `simulate` shares)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FamilyStatus {
    CacheHit,
    Calibrated,
}

struct FamilySet {
    families: Vec<PdrCurveFamily>,
    statuses: Vec<FamilyStatus>,
    paths: Vec<PathBuf>,
}

/// Content hash identifying one technology's calibration inputs; any
/// change to the profile, propagation, grid, or seed changes the key.
fn family_cache_key(
    index: usize,
    profile: &RatProfile,
    pathloss: &PathlossParams,
    cfg: &CalibrationConfig,
) -> String {
    let mut h = Sha256::new();
    h.update(index.to_le_bytes());
    for part in [
        serde_json::to_vec(profile),
        serde_json::to_vec(pathloss),
        serde_json::to_vec(cfg),
    ] {
        h.update(part.expect("toolkit types serialize"));
        h.update([0u8]);
    }
    hex(&h.finalize())[..16].to_owned()
}

/// Loads a cached family if the file exists, parses, and matches the
/// requested grid exactly; anything else is treated as a miss (with a
/// warning when a file was present but unusable).
fn try_load_cached(index: usize, cfg: &CalibrationConfig, path: &Path) -> Option<PdrCurveFamily> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(_) => return None,
    };
    let stale = |reason: &str| {
        eprintln!(
            "warning: cache file {} {reason}; recalibrating",
            path.display()
        );
        None
    };
    let mut families = match read_families_csv(std::io::BufReader::new(file)) {
        Ok(f) => f,
        Err(e) => return stale(&format!("is unreadable ({e})")),
    };
    if families.len() != 1 {
        return stale(&format!("holds {} families instead of 1", families.len()));
    }
    let family = families.pop().expect("length checked");
    if family.rat_id as usize != index
        || family.cbr_levels != cfg.cbr_levels
        || family.distances_m != cfg.distances_m
        || family.samples != cfg.trials
    {
        return stale("does not match the requested grid");
    }
    Some(family)
}

/// Returns one delivery-ratio family per catalog technology, reusing
/// cache files when their content hash and grid match and calibrating
/// (then caching) the rest. Families come back in catalog order.
fn ensure_families(ctx: &Context) -> Result<FamilySet, CliError> {
    let dir = ctx.cache_dir();
    create_dir(&dir)?;

    let jobs: Vec<(usize, CalibrationConfig, PathBuf)> = ctx
        .catalog
        .iter()
        .enumerate()
        .map(|(i, profile)| {
            let cfg = ctx.manifest.calibration.to_config(ctx.manifest.seed);
            let key = family_cache_key(i, profile, &ctx.pathloss[i], &cfg);
            let path = dir.join(format!("pdr_rat{i}_{key}.csv"));
            (i, cfg, path)
        })
        .collect();

    let results: Vec<Result<(PdrCurveFamily, FamilyStatus), CliError>> = jobs
        .par_iter()
        .map(|(i, cfg, path)| {
            if let Some(family) = try_load_cached(*i, cfg, path) {
                return Ok((family, FamilyStatus::CacheHit));
            }
            let profile = &ctx.catalog[*i];
            let family = calibrate_pdr(profile, &ctx.pathloss[*i], cfg).map_err(|e| {
                CliError::Runtime(format!("calibrating {}: {e}", profile.name))
            })?;
            let mut buf = Vec::new();
            for line in ctx.provenance(cfg.seed) {
                writeln!(buf, "# {line}").expect("writing to memory");
            }
            write_families_csv(&mut buf, std::slice::from_ref(&family))
                .expect("writing to memory");
            atomic_write(path, &buf)?;
            Ok((family, FamilyStatus::Calibrated))
        })
        .collect();

    let mut set = FamilySet {
        families: Vec::with_capacity(jobs.len()),
        statuses: Vec::with_capacity(jobs.len()),
        paths: jobs.into_iter().map(|(_, _, p)| p).collect(),
    };
    for result in results {
        let (family, status) = result?;
        set.families.push(family);
        set.statuses.push(status);
    }
    Ok(set)
}

fn cmd_calibrate(ctx: &Context) -> Result<(), CliError> {
    let set = ensure_families(ctx)?;
    for ((profile, status), path) in ctx
        .catalog
        .iter()
        .zip(&set.statuses)
        .zip(&set.paths)
    {
        let verb = match status {
            FamilyStatus::CacheHit => "cache hit",
            FamilyStatus::Calibrated => "calibrated",
        };
        println!("{}: {verb} -> {}", profile.name, path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(ctx: &Context, scenario: ScenarioArg) -> Result<(), CliError> {
    let block = &ctx.manifest.simulation;
    let schemes: Vec<Scheme> = block
        .schemes
        .iter()
        .map(|s| parse_scheme(s, &ctx.catalog))
        .collect::<Result<_, _>>()?;

    let families = ensure_families(ctx)?.families;

    let app_profiles = match scenario {
        ScenarioArg::Uniform => vec![AppProfile {
            fraction: 1.0,
            rate_bps: block.app_rate_mbps * 1e6,
            target_distance_m: block.target_distance_m,
            reliability: block.reliability,
        }],
        ScenarioArg::Mixed => mixed_preset(),
    };

    let sim_root = ctx.manifest.out_dir.join("sim").join(scenario.name());
    create_dir(&sim_root)?;

    let assets = SimAssets {
        catalog: ctx.catalog.clone(),
        pathloss: ctx.pathloss.clone(),
        families: Some(families),
    };

    struct Cell {
        scheme: Scheme,
        density: f64,
        seed: u64,
    }
    let mut cells = Vec::new();
    for &scheme in &schemes {
        for &density in &block.densities_veh_per_km {
            for rep in 0..block.repetitions {
                cells.push(Cell {
                    scheme,
                    density,
                    seed: ctx.manifest.seed + rep as u64,
                });
            }
        }
    }

    // One run per cell; each cell is internally single-threaded, so the
    // pool's width is the only parallelism.
    let summaries: Vec<Result<(String, String, String), CliError>> = cells
        .par_iter()
        .map(|cell| {
            let cfg = SimConfig {
                road_length_m: block.road_length_m,
                lanes: block.lanes,
                density_veh_per_km: cell.density,
                max_speed_kmh: block.max_speed_kmh,
                sim_time_s: block.sim_time_s,
                warmup_s: block.warmup_s,
                seed: cell.seed,
                scheme: cell.scheme,
                app_profiles: app_profiles.clone(),
                payload_bytes: block.payload_bytes,
                mcs: block.mcs,
                t_meas_s: block.t_meas_s,
                t_update_s: block.t_update_s,
                t_neigh_s: block.t_neigh_s,
                alpha: block.alpha,
                capture_margin_db: block.capture_margin_db,
                metrics_window_s: block.metrics_window_s,
            };
            let label = cell.scheme.label();
            let report = run_simulation(&cfg, &assets).map_err(|e| {
                CliError::Runtime(format!(
                    "simulating {label} at {} veh/km (seed {}): {e}",
                    cell.density, cell.seed
                ))
            })?;

            let run_name = format!("{label}_d{}_s{}", fmt_num(cell.density), cell.seed);
            let dir = sim_root.join(&run_name);
            create_dir(&dir)?;
            let mut prov = ctx.provenance(cell.seed);
            prov.push(format!("scenario={}", scenario.name()));
            prov.push(format!("scheme={label}"));
            prov.push(format!("density_veh_per_km={}", cell.density));

            let mut buf = Vec::new();
            report
                .write_metrics_csv(&mut buf, &prov)
                .expect("writing to memory");
            atomic_write(&dir.join("metrics.csv"), &buf)?;
            buf.clear();
            report
                .write_changes_csv(&mut buf, &prov)
                .expect("writing to memory");
            atomic_write(&dir.join("changes.csv"), &buf)?;
            buf.clear();
            report
                .write_summary_csv(&mut buf, &prov)
                .expect("writing to memory");
            atomic_write(&dir.join("summary.csv"), &buf)?;

            let text = String::from_utf8(buf).expect("summary CSV is UTF-8");
            let mut lines = text.lines().filter(|l| !l.starts_with('#'));
            let header = lines.next().unwrap_or_default().to_owned();
            let row = lines.next().unwrap_or_default().to_owned();
            println!("finished {run_name}");
            Ok((run_name, header, row))
        })
        .collect();

    let mut grid = String::new();
    push_provenance(&mut grid, &ctx.provenance(ctx.manifest.seed));
    let mut header_done = false;
    for summary in summaries {
        let (run_name, header, row) = summary?;
        if !header_done {
            grid.push_str(&format!("run,{header}\n"));
            header_done = true;
        }
        grid.push_str(&format!("{run_name},{row}\n"));
    }
    let grid_path = sim_root.join("summary.csv");
    atomic_write(&grid_path, grid.as_bytes())?;
    println!("wrote {}", grid_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// cost
// ---------------------------------------------------------------------------

fn cmd_cost(ctx: &Context) -> Result<(), CliError> {
    let block = &ctx.manifest.cost;
    let mut out = String::new();
    push_provenance(&mut out, &ctx.provenance(ctx.manifest.seed));
    out.push_str(
        "n_neighbors,cpu_ghz,cycles_per_second,cpu_usage_percent,\
         cis_size_bits,overhead_bps,overhead_share\n",
    );
    for n in 0..=block.n_max {
        for &ghz in &block.cpu_ghz {
            let inputs = CostInputs {
                n_rat: block.n_rat,
                n1: n,
                n2: n,
                t_meas_s: block.t_meas_s,
                t_update_s: block.t_update_s,
                cpu_hz: ghz * 1e9,
                total_bandwidth_hz: block.total_bandwidth_mhz * 1e6,
                ..CostInputs::default()
            };
            let cycles = total_cycles_per_second(&inputs);
            let usage_pct = cpu_usage(&inputs) * 100.0;
            let bits = cis_size_bits(&inputs);
            let (o_v, o_share) = overhead_bps(&inputs);
            out.push_str(&format!(
                "{n},{ghz},{cycles:.3},{usage_pct:.6},{bits},{o_v:.3},{o_share:.9}\n"
            ));
        }
    }

    create_dir(&ctx.manifest.out_dir)?;
    let path = ctx.manifest.out_dir.join("cost.csv");
    atomic_write(&path, out.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
