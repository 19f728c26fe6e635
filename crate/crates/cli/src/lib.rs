//! Configuration schema, subcommand drivers and output writers for `hts`.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use hts_core::diffusion::{self, CostEstimate, DiffusionKind, DiffusionSpec, ReflectedPath, Scheme};
use hts_core::experiments::{self, ao_experiment, ConvergenceReport, LadderConfig};
use hts_core::lp::{self, LpStructure};
use hts_core::queue::policy::case_condition;
use hts_core::queue::sim::{write_ndjson, write_samples_csv};
use hts_core::queue::{
    self, required_policy, PolicyKind, PolicySpec, PrimitiveDistributions, RecordOptions, RenewalSource, ScaledRates,
    SimConfig, TrajectoryRecord,
};
use hts_core::wcp::{symmetry_check, SymmetryReport, WcpSolution};
use hts_core::{Error, SystemParams};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Paths written to CSV are thinned to at most this many rows.
pub const MAX_PATH_ROWS: usize = 10_000;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration (exit code 2).
    Config(String),
    /// The instance is outside the supported regime (exit code 3).
    Refusal(Error),
    /// Anything else (exit code 1).
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Refusal(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Refusal(e) => {
                let dbg = format!("{e:?}");
                let variant = dbg.split([' ', '(', '{']).next().unwrap_or_default();
                write!(f, "refused [{variant}]: {e}")
            }
            CliError::Other(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_refusal() {
            CliError::Refusal(e)
        } else if matches!(e, Error::LpInfeasible) {
            CliError::Other(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    #[serde(default = "default_m")]
    pub m_moment: f64,
    #[serde(default)]
    pub a_bar: Option<f64>,
}

fn default_m() -> f64 {
    3.0
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig { m_moment: default_m(), a_bar: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: f64,
    /// Defaults to `40 / gamma`.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "one")]
    pub replications: usize,
    /// Write the event log of replication 0.
    #[serde(default = "yes")]
    pub event_log: bool,
    /// Sampling period for `paths.csv` (replication 0); `None` disables it.
    #[serde(default)]
    pub sample_period: Option<f64>,
    #[serde(default)]
    pub fidelity_eps: Option<f64>,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Defaults to `40 / gamma`.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub z0: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Explicit process; by default the optimally controlled workload of `system`.
    #[serde(default)]
    pub kind: Option<DiffusionKind>,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_paths() -> usize {
    1000
}
fn default_dt() -> f64 {
    1e-3
}
fn default_tail_tol() -> f64 {
    1e-6
}

/// One instance of an experiment batch (e.g. one row of the case table).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: String,
    pub system: SystemParams,
    #[serde(default)]
    pub policy: Option<PolicyKind>,
    #[serde(default)]
    pub distributions: Option<PrimitiveDistributions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_values: Vec<f64>,
    pub replications: usize,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub confidence: Option<f64>,
    #[serde(default)]
    pub probe_time: Option<f64>,
    #[serde(default)]
    pub ks_paths: Option<usize>,
    #[serde(default)]
    pub tail_tol: Option<f64>,
    /// Run these instances instead of the top-level system, one report each.
    #[serde(default)]
    pub cases: Vec<CaseConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub system: SystemParams,
    #[serde(default)]
    pub scaling: ScalingConfig,
    /// Defaults to the policy the case table prescribes.
    #[serde(default)]
    pub policy: Option<PolicyKind>,
    #[serde(default)]
    pub distributions: PrimitiveDistributions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub diffusion: Option<DiffusionConfig>,
    #[serde(default)]
    pub experiment: Option<ExperimentConfig>,
    /// Output directory for file-producing subcommands.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Parse JSON, reporting the path of the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> CliResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.into_inner()))
    })
}

/// Configuration text and its parsed form.
pub struct LoadedConfig {
    pub text: String,
    pub config: ConfigFile,
}

pub fn load_config(path: &Path, seed: Option<u64>) -> CliResult<LoadedConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut config: ConfigFile = parse_json(&text)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    config.system.validate()?;
    Ok(LoadedConfig { text, config })
}

/// Output of `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub lp: LpStructure,
    pub wcp: WcpSolution,
    pub zstar: Option<f64>,
    pub v0: f64,
    pub policy: PolicyKind,
    pub case_condition: String,
    pub symmetry: SymmetryReport,
}

pub fn analyze(params: &SystemParams) -> CliResult<AnalyzeReport> {
    let lp = lp::analyze(params)?;
    let wcp = WcpSolution::solve(params, &lp)?;
    let policy = required_policy(&lp, &wcp)?;
    Ok(AnalyzeReport {
        zstar: wcp.zstar(),
        v0: wcp.v0(),
        policy,
        case_condition: case_condition(&lp, &wcp),
        symmetry: symmetry_check(params, &lp),
        lp,
        wcp,
    })
}

/// Record of one invocation, written next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub outputs: Vec<String>,
}

impl Manifest {
    fn new(command: &str, cfg: &LoadedConfig) -> Self {
        Manifest {
            tool: "hts".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: sha256_hex(cfg.text.as_bytes()),
            seed: cfg.config.seed,
            outputs: Vec::new(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct OutDir {
    dir: PathBuf,
    manifest: Manifest,
}

impl OutDir {
    fn new(dir: &Path, manifest: Manifest) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutDir { dir: dir.to_path_buf(), manifest })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult<()> {
        let mut w = io::BufWriter::new(fs::File::create(self.dir.join(name))?);
        f(&mut w)?;
        w.flush()?;
        self.manifest.outputs.push(name.into());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, v: &T) -> CliResult<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, v)?;
            w.write_all(b"\n")
        })
    }

    fn finish(self) -> CliResult<PathBuf> {
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| CliError::Other(e.to_string()))?;
        fs::write(&path, text + "\n")?;
        Ok(self.dir)
    }
}

fn out_dir(cfg: &ConfigFile, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf).or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("hts-out"))
}

fn policy_for(params: &SystemParams, chosen: Option<PolicyKind>) -> CliResult<(LpStructure, WcpSolution, PolicySpec)> {
    let lp = lp::analyze(params)?;
    let wcp = WcpSolution::solve(params, &lp)?;
    let kind = match chosen {
        Some(k) => k,
        None => required_policy(&lp, &wcp)?,
    };
    let spec = PolicySpec::from_analysis(kind, &lp, &wcp)?;
    Ok((lp, wcp, spec))
}

/// Every `stride`-th element, plus the last one, so at most `max` remain.
pub fn thin<T: Clone>(xs: &[T], max: usize) -> Vec<T> {
    if xs.len() <= max {
        return xs.to_vec();
    }
    let stride = (xs.len() - 1).div_ceil(max - 1);
    let mut out: Vec<T> = xs.iter().step_by(stride).cloned().collect();
    if !(xs.len() - 1).is_multiple_of(stride) {
        out.push(xs[xs.len() - 1].clone());
    }
    out
}

/// Scalar summary of one replication (the record without logs).
fn summary(r: &TrajectoryRecord) -> TrajectoryRecord {
    TrajectoryRecord { events: None, samples: None, ..r.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub policy: PolicyKind,
    pub config: SimConfig,
    pub v0: f64,
    pub cost: Option<CostEstimate>,
    pub replications: Vec<TrajectoryRecord>,
}

pub fn cmd_simulate(cfg: &LoadedConfig, out: Option<&Path>) -> CliResult<PathBuf> {
    let c = &cfg.config;
    let sc = c.simulate.as_ref().ok_or_else(|| CliError::Config("missing `simulate` section".into()))?;
    if sc.replications == 0 {
        return Err(CliError::Config("simulate.replications must be >= 1".into()));
    }
    c.distributions.validate(c.scaling.m_moment)?;
    for w in c.distributions.scv_mismatches(&c.system) {
        eprintln!("hts: warning: {w}");
    }
    let (lp, wcp, policy) = policy_for(&c.system, c.policy)?;
    let mut ladder = LadderConfig::new(vec![sc.n], 30, c.seed);
    ladder.horizon = sc.horizon;
    ladder.m_moment = c.scaling.m_moment;
    ladder.a_bar = c.scaling.a_bar;
    ladder.epsilon = sc.fidelity_eps;
    let mut base = experiments::sim_config(&c.system, &lp, policy, &ladder, sc.n)?;
    base.record = RecordOptions::default();
    base.validate()?;
    let rates = ScaledRates::new(&c.system, sc.n)?;

    let mut first_cfg = base.clone();
    first_cfg.record = RecordOptions { event_log: sc.event_log, sample_period: sc.sample_period, check_invariants: true, probe_time: None };
    let mut src = RenewalSource::new(rates, &c.distributions, c.seed, hts_core::rng::mix(sc.n.to_bits(), 0));
    let first = queue::run(&first_cfg, &mut src)?;
    let mut records = vec![first];
    if sc.replications > 1 {
        records.extend(experiments::replicate(&c.system, &base, &c.distributions, c.seed, sc.replications)?.into_iter().skip(1));
    }
    let cost = if records.len() >= 2 { Some(queue::cost_estimate(&records, c.system.gamma, sc.tail_tol)?) } else { None };

    let mut dir = OutDir::new(&out_dir(c, out), Manifest::new("simulate", cfg))?;
    if let Some(ev) = &records[0].events {
        dir.write("events.ndjson", |w| write_ndjson(ev, w))?;
    }
    if let Some(s) = &records[0].samples {
        dir.write("paths.csv", |w| write_samples_csv(&thin(s, MAX_PATH_ROWS), w))?;
    }
    let summary = SimulateSummary {
        policy: policy.kind,
        config: base,
        v0: wcp.v0(),
        cost,
        replications: records.iter().map(summary).collect(),
    };
    dir.write_json("summary.json", &summary)?;
    dir.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSummary {
    pub spec: DiffusionSpec,
    pub cost: CostEstimate,
    /// Closed-form discounted cost from `z0` when the process is the optimally
    /// controlled workload of the configured system.
    pub exact: Option<f64>,
}

fn write_path_csv(path: &ReflectedPath, w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "t,z,l")?;
    let rows: Vec<(f64, f64, f64)> = path.times().zip(&path.z).zip(&path.l).map(|((t, &z), &l)| (t, z, l)).collect();
    for (t, z, l) in thin(&rows, MAX_PATH_ROWS) {
        writeln!(w, "{t},{z},{l}")?;
    }
    Ok(())
}

pub fn cmd_diffusion(cfg: &LoadedConfig, out: Option<&Path>) -> CliResult<PathBuf> {
    let c = &cfg.config;
    let dc = c.diffusion.clone().unwrap_or(DiffusionConfig {
        n_paths: default_paths(),
        dt: default_dt(),
        horizon: None,
        z0: 0.0,
        scheme: Scheme::default(),
        kind: None,
        tail_tol: default_tail_tol(),
    });
    let gamma = c.system.gamma;
    let (kind, exact) = match dc.kind {
        Some(k) => (k, None),
        None => {
            let lp = lp::analyze(&c.system)?;
            let wcp = WcpSolution::solve(&c.system, &lp)?;
            (experiments::limit_diffusion(&wcp), Some(wcp.value(dc.z0)?))
        }
    };
    let spec = DiffusionSpec {
        kind,
        z0: dc.z0,
        dt: dc.dt,
        horizon: dc.horizon.unwrap_or(40.0 / gamma),
        gamma,
        scheme: dc.scheme,
    };
    spec.validate()?;
    let cost = diffusion::estimate_cost(&spec, dc.n_paths, c.seed, dc.tail_tol)?;
    let path = diffusion::simulate(&spec, c.seed, 0);
    let mut dir = OutDir::new(&out_dir(c, out), Manifest::new("diffusion", cfg))?;
    dir.write("path.csv", |w| write_path_csv(&path, w))?;
    dir.write_json("summary.json", &DiffusionSummary { spec, cost, exact })?;
    dir.finish()
}

fn ladder_for(c: &ConfigFile, e: &ExperimentConfig, dists: PrimitiveDistributions) -> LadderConfig {
    let mut l = LadderConfig::new(e.n_values.clone(), e.replications, c.seed);
    l.horizon = e.horizon;
    l.epsilon = e.epsilon;
    l.m_moment = c.scaling.m_moment;
    l.a_bar = c.scaling.a_bar;
    l.distributions = dists;
    if let Some(v) = e.confidence {
        l.confidence = v;
    }
    if let Some(v) = e.probe_time {
        l.probe_time = v;
    }
    if let Some(v) = e.ks_paths {
        l.ks_paths = v;
    }
    if let Some(v) = e.tail_tol {
        l.tail_tol = v;
    }
    l
}

fn run_case(ladder: &LadderConfig, params: &SystemParams, policy: Option<PolicyKind>) -> CliResult<ConvergenceReport> {
    let kind = match policy {
        Some(k) => k,
        None => {
            let lp = lp::analyze(params)?;
            let wcp = WcpSolution::solve(params, &lp)?;
            required_policy(&lp, &wcp)?
        }
    };
    Ok(ao_experiment(ladder, params, kind)?)
}

pub fn cmd_experiment(cfg: &LoadedConfig, out: Option<&Path>) -> CliResult<PathBuf> {
    let c = &cfg.config;
    let e = c.experiment.as_ref().ok_or_else(|| CliError::Config("missing `experiment` section".into()))?;
    let mut dir = OutDir::new(&out_dir(c, out), Manifest::new("experiment", cfg))?;
    if e.cases.is_empty() {
        let rep = run_case(&ladder_for(c, e, c.distributions), &c.system, c.policy)?;
        dir.write_json("report.json", &rep)?;
        dir.write("report.csv", |w| w.write_all(rep.to_csv().as_bytes()))?;
    } else {
        for case in &e.cases {
            if !case.name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '-' || ch == '_') {
                return Err(CliError::Config(format!("case name {:?} must be [A-Za-z0-9_-]", case.name)));
            }
            case.system.validate()?;
            let ladder = ladder_for(c, e, case.distributions.unwrap_or(c.distributions));
            let rep = run_case(&ladder, &case.system, case.policy)?;
            dir.write_json(&format!("report_{}.json", case.name), &rep)?;
            dir.write(&format!("report_{}.csv", case.name), |w| w.write_all(rep.to_csv().as_bytes()))?;
        }
    }
    dir.finish()
}

/// `V_WCP(x)` and the optimal mode on `npts` equally spaced points of `[x0, x1]`.
pub fn value_grid(params: &SystemParams, x0: f64, x1: f64, npts: usize) -> CliResult<String> {
    if !(x0 >= 0.0 && x1 >= x0 && npts >= 1) {
        return Err(CliError::Config("need 0 <= x0 <= x1 and npts >= 1".into()));
    }
    let lp = lp::analyze(params)?;
    let wcp = WcpSolution::solve(params, &lp)?;
    let mut s = String::from("x,value,mode\n");
    for j in 0..npts {
        let x = if npts == 1 { x0 } else { x0 + (x1 - x0) * j as f64 / (npts - 1) as f64 };
        s += &format!("{x},{},{}\n", wcp.value(x)?, wcp.optimal_mode(x));
    }
    Ok(s)
}
