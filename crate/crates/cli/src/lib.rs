//! Batch driver: read a TOML run configuration, run one command, write
//! `runs.csv`, `summary.json` and `report.json` into an output directory.
//!
//! Every command first estimates the configured potential on the configured
//! sample, so `runs.csv` and `summary.json` always describe the same grid.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mdim_core::config::{build_potential, build_system, BuiltSystem, PotentialSpec, SampleSpec, SystemSpec};
use mdim_core::error::Error as CoreError;
use mdim_core::estimate::{
    check_properties, estimate_mmdim, power_experiment, product_experiment, EstimatorProxy, MmdimEstimate, MdimProxy,
};
use mdim_core::orbit::{build_table, draw_sample, OrbitTable};
use mdim_core::pressure::check_sandwich;
use mdim_core::system::{Potential, SystemRef};
use mdim_core::variational::{
    bowen_root, bs_consistency, build_dictionary, equilibrium_candidates, make_dict_member, maxmin_variational,
    point_values, tangent_check, Dictionary,
};

pub const CSV_SCHEMA: &str = "# mdim runs.csv schema v1";
pub const JSON_SCHEMA: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verify(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(CoreError::Config(_)) => 2,
            CliError::Verify(_) => 3,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Membership tolerance for dictionary certificates.
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Largest accepted LP optimality gap.
    #[serde(default = "default_gap")]
    pub solver_gap: f64,
    #[serde(default = "default_bisection")]
    pub bisection_tol: f64,
}

fn default_tau() -> f64 {
    mdim_core::variational::DEFAULT_TAU
}
fn default_gap() -> f64 {
    1e-9
}
fn default_bisection() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}
fn default_scale() -> f64 {
    0.2
}
fn default_draws() -> usize {
    10
}
fn default_unit() -> f64 {
    1.0
}
fn default_max_points() -> usize {
    7
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tau: default_tau(),
            solver_gap: default_gap(),
            bisection_tol: default_bisection(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySpec {
    /// Source potentials `h`, each contributing `g_h = m̂(h) − h`.
    #[serde(default)]
    pub sources: Vec<PotentialSpec>,
    /// Put `g_f` for the configured potential first.
    #[serde(default = "default_true")]
    pub include_target: bool,
    /// Sample indices carrying the measures; all points when absent.
    #[serde(default)]
    pub support: Option<Vec<usize>>,
    /// Number of seeded perturbations for the tangent check.
    #[serde(default)]
    pub perturbations: usize,
    #[serde(default = "default_scale")]
    pub perturbation_scale: f64,
}

impl Default for DictionarySpec {
    fn default() -> Self {
        DictionarySpec {
            sources: Vec::new(),
            include_target: true,
            support: None,
            perturbations: 0,
            perturbation_scale: default_scale(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub system: SystemSpec,
    pub potential: PotentialSpec,
    pub sample: SampleSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Seeded `(g, c, p)` draws for the property checks.
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Range of the drawn potentials and constants.
    #[serde(default = "default_unit")]
    pub scale: f64,
    /// Additional seeded random finite systems checked the same way.
    #[serde(default)]
    pub suite_systems: usize,
    #[serde(default = "default_max_points")]
    pub suite_max_points: usize,
    #[serde(default)]
    pub power_k: Option<usize>,
    #[serde(default)]
    pub product: Option<FactorSpec>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            draws: default_draws(),
            scale: default_unit(),
            suite_systems: 0,
            suite_max_points: default_max_points(),
            power_k: None,
            product: None,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub eps_list: Vec<f64>,
    pub n_range: Vec<usize>,
    pub system: SystemSpec,
    pub potential: PotentialSpec,
    pub sample: SampleSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub dictionary: DictionarySpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// 1-based line of the first `key = ...` assignment in the config text.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .map(|rest| rest.trim_start().starts_with('='))
            .unwrap_or(false)
    })
    .map(|i| i + 1)
}

fn at_line(text: &str, key: &str, msg: String) -> CliError {
    match line_of(text, key) {
        Some(l) => CliError::Config(format!("line {l}: {msg}")),
        None => CliError::Config(msg),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn validate(&self, text: &str) -> CliResult<()> {
        if self.eps_list.is_empty() {
            return Err(at_line(text, "eps_list", "eps_list is empty".into()));
        }
        if let Some(e) = self.eps_list.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(at_line(text, "eps_list", format!("scale {e} outside (0, 1)")));
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(at_line(text, "eps_list", "eps_list must be strictly decreasing".into()));
        }
        if self.n_range.len() < 2 || self.n_range[0] == 0 || self.n_range.windows(2).any(|w| w[1] <= w[0]) {
            return Err(at_line(
                text,
                "n_range",
                "n_range needs at least two strictly increasing positive orders".into(),
            ));
        }
        let tol = &self.tolerances;
        for (key, v) in [
            ("tau", tol.tau),
            ("solver_gap", tol.solver_gap),
            ("bisection_tol", tol.bisection_tol),
            ("perturbation_scale", self.dictionary.perturbation_scale),
            ("scale", self.verify.scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(at_line(text, key, format!("{key} must be positive, got {v}")));
            }
        }
        if let SampleSpec::Uniform { size: 0, .. } = self.sample {
            return Err(at_line(text, "size", "sample size must be positive".into()));
        }
        if self.verify.power_k == Some(0) {
            return Err(at_line(text, "power_k", "power_k must be positive".into()));
        }
        if self.verify.suite_max_points == 0 {
            return Err(at_line(text, "suite_max_points", "suite_max_points must be positive".into()));
        }
        Ok(())
    }

    pub fn n_top(&self) -> usize {
        *self.n_range.last().expect("validated")
    }
}

// ---------------------------------------------------------------------------
// Shared setup
// ---------------------------------------------------------------------------

struct Setup {
    built: BuiltSystem,
    f: Potential,
    table: OrbitTable,
}

fn setup(system: &SystemSpec, potential: &PotentialSpec, sample: &SampleSpec, n_max: usize) -> CliResult<Setup> {
    let built = build_system(system).map_err(|e| CliError::Config(format!("[system]: {e}")))?;
    let f = build_potential(potential, &built).map_err(|e| CliError::Config(format!("[potential]: {e}")))?;
    let sys: SystemRef = built.system().clone();
    let (pts, exhaustive) = draw_sample(&sys, sample.kind()).map_err(|e| CliError::Config(format!("[sample]: {e}")))?;
    let table = build_table(sys, pts, n_max, std::slice::from_ref(&f))
        .map_err(|e| match e {
            CoreError::HorizonExceeded { .. } => CliError::Config(format!("[system]: {e}")),
            other => CliError::Core(other),
        })?
        .with_exhaustive(exhaustive);
    Ok(Setup { built, f, table })
}

/// A seeded potential suited to the system's presentation.
pub fn random_potential(built: &BuiltSystem, seed: u64, scale: f64) -> CliResult<Potential> {
    if let Some(fin) = built.finite() {
        return Ok(fin.random_potential(seed, scale)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = rng.gen_range(-scale..=scale);
    let b = rng.gen_range(-scale..=scale);
    let spec = PotentialSpec::Coord0;
    let base = build_potential(&spec, built)?;
    Ok(base.scale(a).add_const(b).with_name(format!("random[{seed}]")))
}

fn witness_hash(w: &[usize]) -> String {
    let mut h = Sha256::new();
    for &i in w {
        h.update((i as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Output(e.to_string())
}

/// `runs.csv` for an estimate: one row per `(n, eps)` cell.
pub fn runs_csv(est: &MmdimEstimate) -> CliResult<String> {
    let mut out = String::from(CSV_SCHEMA);
    out.push('\n');
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "system",
        "potential",
        "n",
        "eps",
        "log_P_lower",
        "log_Q_upper",
        "v",
        "ratio",
        "witness_size",
        "witness_hash",
        "under_resolved",
    ])
    .map_err(csv_err)?;
    for c in &est.cells {
        let row = est.rows.iter().find(|r| r.eps == c.eps).expect("row per scale");
        w.write_record([
            est.system.clone(),
            est.potential.clone(),
            c.n.to_string(),
            c.eps.to_string(),
            c.log_p_lower.to_string(),
            c.log_q_upper.to_string(),
            row.v_upper.to_string(),
            row.ratio_upper.to_string(),
            c.witness.len().to_string(),
            witness_hash(&c.witness),
            c.under_resolved.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(csv_err)?;
    out.push_str(&String::from_utf8(bytes).map_err(csv_err)?);
    Ok(out)
}

#[derive(Serialize)]
struct Summary<'a> {
    schema: u32,
    command: &'a str,
    config: &'a RunConfig,
    estimate: &'a MmdimEstimate,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema: u32,
    command: &'a str,
    passed: bool,
    report: T,
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Output(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn write_outputs<T: Serialize>(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    est: &MmdimEstimate,
    passed: bool,
    report: T,
) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_file(&dir.join("runs.csv"), &runs_csv(est)?)?;
    write_file(
        &dir.join("summary.json"),
        &to_json(&Summary {
            schema: JSON_SCHEMA,
            command,
            config: cfg,
            estimate: est,
        })?,
    )?;
    write_file(
        &dir.join("report.json"),
        &to_json(&Report {
            schema: JSON_SCHEMA,
            command,
            passed,
            report,
        })?,
    )
}

/// What a command did; `passed` is false only for failed verifications.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub passed: bool,
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EstimateReport {
    upper_proxy: f64,
    lower_proxy: f64,
    slope: Option<f64>,
    budget: f64,
    resolved_scales: Vec<f64>,
    warnings: Vec<String>,
}

pub fn cmd_estimate(cfg: &RunConfig, out: &Path) -> CliResult<Outcome> {
    let s = setup(&cfg.system, &cfg.potential, &cfg.sample, cfg.n_top())?;
    let est = estimate_mmdim(&s.table, &s.f, &cfg.eps_list, &cfg.n_range)?;
    let report = EstimateReport {
        upper_proxy: est.upper_proxy,
        lower_proxy: est.lower_proxy,
        slope: est.slope,
        budget: est.budget,
        resolved_scales: est.rows.iter().filter(|r| r.resolved).map(|r| r.eps).collect(),
        warnings: est.warnings.clone(),
    };
    write_outputs(out, "estimate", cfg, &est, true, report)?;
    Ok(Outcome {
        dir: out.to_path_buf(),
        passed: true,
    })
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub instance: String,
    pub item: String,
    pub n: usize,
    pub eps: f64,
    pub passed: bool,
    pub detail: String,
}

fn sandwich_rows(t: &OrbitTable, f: &Potential, cfg: &RunConfig, instance: &str, rows: &mut Vec<CheckRow>) -> CliResult<()> {
    for &n in &cfg.n_range {
        for &eps in &cfg.eps_list {
            let r = check_sandwich(t, f, n, eps)?;
            rows.push(CheckRow {
                check: "sandwich".into(),
                instance: instance.into(),
                item: "Q<=P, half-scale".into(),
                n,
                eps,
                passed: r.passed(),
                detail: r.failure().unwrap_or_default(),
            });
        }
    }
    Ok(())
}

fn property_rows(
    built: &BuiltSystem,
    t: &OrbitTable,
    f: &Potential,
    cfg: &RunConfig,
    instance: &str,
    seed: u64,
    rows: &mut Vec<CheckRow>,
) -> CliResult<()> {
    let cells: Vec<(usize, f64)> = cfg
        .n_range
        .iter()
        .flat_map(|&n| cfg.eps_list.iter().map(move |&e| (n, e)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for d in 0..cfg.verify.draws {
        let g = random_potential(built, rng.gen(), cfg.verify.scale)?;
        let c = rng.gen_range(-2.0 * cfg.verify.scale..=2.0 * cfg.verify.scale);
        let p = rng.gen_range(0.0..=1.0);
        let (n, eps) = cells[d % cells.len()];
        let r = check_properties(t, f, &g, c, p, eps, n)?;
        for item in r.items.iter().filter(|i| i.asserted) {
            rows.push(CheckRow {
                check: "properties".into(),
                instance: format!("{instance} draw {d}"),
                item: item.item.clone(),
                n,
                eps,
                passed: item.passed,
                detail: if item.passed {
                    String::new()
                } else {
                    format!("lhs {} rhs {} ({}), witness {:?}", item.lhs, item.rhs, item.note, r.witness)
                },
            });
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    total: usize,
    failures: usize,
    rows: Vec<CheckRow>,
    power: Option<mdim_core::estimate::PowerReport>,
    product: Option<mdim_core::estimate::ProductReport>,
}

pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> CliResult<Outcome> {
    let k = cfg.verify.power_k.unwrap_or(1);
    let s = setup(&cfg.system, &cfg.potential, &cfg.sample, cfg.n_top() * k)?;
    let est = estimate_mmdim(&s.table, &s.f, &cfg.eps_list, &cfg.n_range)?;
    let mut rows = Vec::new();
    sandwich_rows(&s.table, &s.f, cfg, "configured", &mut rows)?;
    property_rows(&s.built, &s.table, &s.f, cfg, "configured", cfg.seed, &mut rows)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    for _ in 0..cfg.verify.suite_systems {
        let points = rng.gen_range(1..=cfg.verify.suite_max_points);
        let sys_seed: u64 = rng.gen();
        let spec = SystemSpec::RandomFinite { points, seed: sys_seed };
        let pot = PotentialSpec::Random {
            seed: rng.gen(),
            scale: cfg.verify.scale,
        };
        let sample = SampleSpec::Exhaustive { limit: None };
        let sub = setup(&spec, &pot, &sample, cfg.n_top())?;
        let name = format!("random_finite({points}, {sys_seed})");
        sandwich_rows(&sub.table, &sub.f, cfg, &name, &mut rows)?;
        property_rows(&sub.built, &sub.table, &sub.f, cfg, &name, rng.gen(), &mut rows)?;
    }

    let power = match cfg.verify.power_k {
        Some(k) => {
            let r = power_experiment(&s.table, &s.f, k, &cfg.eps_list, &cfg.n_range)?;
            rows.push(CheckRow {
                check: "power".into(),
                instance: "configured".into(),
                item: format!("k = {k}"),
                n: cfg.n_top(),
                eps: cfg.eps_list[0],
                passed: r.passed(),
                detail: String::new(),
            });
            Some(r)
        }
        None => None,
    };
    let product = match &cfg.verify.product {
        Some(spec) => {
            let other = setup(&spec.system, &spec.potential, &spec.sample, cfg.n_top())?;
            let r = product_experiment(&s.table, &s.f, &other.table, &other.f, &cfg.eps_list, &cfg.n_range)?;
            rows.push(CheckRow {
                check: "product".into(),
                instance: "configured".into(),
                item: "Q(product) <= Q Q".into(),
                n: cfg.n_top(),
                eps: cfg.eps_list[0],
                passed: r.passed(),
                detail: String::new(),
            });
            Some(r)
        }
        None => None,
    };

    let failures = rows.iter().filter(|r| !r.passed).count();
    let report = VerifyReport {
        total: rows.len(),
        failures,
        rows,
        power,
        product,
    };
    let passed = failures == 0;
    write_outputs(out, "verify", cfg, &est, passed, &report)?;
    Ok(Outcome {
        dir: out.to_path_buf(),
        passed,
    })
}

// ---------------------------------------------------------------------------
// variational
// ---------------------------------------------------------------------------

fn sources(cfg: &RunConfig, s: &Setup) -> CliResult<Vec<Potential>> {
    let mut out = Vec::new();
    if cfg.dictionary.include_target {
        out.push(s.f.clone());
    }
    for (i, spec) in cfg.dictionary.sources.iter().enumerate() {
        let h = build_potential(spec, &s.built).map_err(|e| CliError::Config(format!("dictionary source {i}: {e}")))?;
        out.push(h.with_name(format!("source[{i}]")));
    }
    Ok(out)
}

fn support(cfg: &RunConfig, t: &OrbitTable) -> CliResult<Vec<usize>> {
    match &cfg.dictionary.support {
        Some(s) => {
            if let Some(&i) = s.iter().find(|&&i| i >= t.len()) {
                return Err(CliError::Config(format!(
                    "support index {i} out of range for a sample of {} points",
                    t.len()
                )));
            }
            Ok(s.clone())
        }
        None => Ok((0..t.len()).collect()),
    }
}

#[derive(Serialize)]
struct SandwichCheck {
    m_hat: f64,
    value: f64,
    target_in_dictionary: bool,
    value_below_m_hat: Option<bool>,
    singleton_equality: Option<bool>,
}

#[derive(Serialize)]
struct VariationalReport {
    dictionary: Vec<mdim_core::variational::MemberSummary>,
    rejected: Vec<(String, String)>,
    support: Vec<usize>,
    maxmin: mdim_core::variational::MaxMin,
    gap_within_tolerance: bool,
    sandwich: SandwichCheck,
    equilibrium: mdim_core::variational::EquilibriumSet,
    /// Max-min value for each dictionary prefix.
    dictionary_growth: Vec<f64>,
    /// Max-min value for each support prefix.
    support_growth: Vec<f64>,
    tangent: Option<mdim_core::variational::TangentReport>,
}

pub fn cmd_variational(cfg: &RunConfig, out: &Path) -> CliResult<Outcome> {
    let s = setup(&cfg.system, &cfg.potential, &cfg.sample, cfg.n_top())?;
    let est = estimate_mmdim(&s.table, &s.f, &cfg.eps_list, &cfg.n_range)?;
    let proxy = EstimatorProxy::new(&s.table, cfg.eps_list.clone(), cfg.n_range.clone());
    let srcs = sources(cfg, &s)?;
    if srcs.is_empty() {
        return Err(CliError::Config("dictionary has no sources and include_target = false".into()));
    }
    let build = build_dictionary(&proxy, &s.table, &srcs, cfg.tolerances.tau)?;
    let dict = build.dictionary;
    if dict.is_empty() {
        return Err(CliError::Core(CoreError::EmptyDictionary));
    }
    let supp = support(cfg, &s.table)?;
    let fv = point_values(&s.table, &s.f)?;
    let mm = maxmin_variational(&dict, &fv, &supp)?;
    let eq = equilibrium_candidates(&dict, &fv, &supp, cfg.tolerances.solver_gap)?;
    let m_hat = proxy.proxy(&s.f)?.value;
    let target_in = cfg.dictionary.include_target && dict.members().first().map(|m| m.source == s.f.name()).unwrap_or(false);
    let round = 1e-12 * m_hat.abs().max(1.0);
    let sandwich = SandwichCheck {
        m_hat,
        value: mm.value,
        target_in_dictionary: target_in,
        value_below_m_hat: target_in.then(|| mm.value <= m_hat + round),
        singleton_equality: (target_in && dict.len() == 1).then(|| (mm.value - m_hat).abs() <= round),
    };
    let dictionary_growth = (1..=dict.len())
        .map(|k| Ok(maxmin_variational(&dict.prefix(k), &fv, &supp)?.value))
        .collect::<CliResult<Vec<_>>>()?;
    let support_growth = (1..=supp.len())
        .map(|k| Ok(maxmin_variational(&dict, &fv, &supp[..k])?.value))
        .collect::<CliResult<Vec<_>>>()?;
    let tangent = if cfg.dictionary.perturbations > 0 {
        let gs = (0..cfg.dictionary.perturbations)
            .map(|i| random_potential(&s.built, cfg.seed.wrapping_add(i as u64), cfg.dictionary.perturbation_scale))
            .collect::<CliResult<Vec<_>>>()?;
        Some(tangent_check(&mm.measure, &s.f, &gs, &proxy, &s.table)?)
    } else {
        None
    };
    let gap_ok = mm.gap <= cfg.tolerances.solver_gap;
    let report = VariationalReport {
        dictionary: dict.summaries(),
        rejected: build.rejected.iter().map(|(n, e)| (n.clone(), e.to_string())).collect(),
        support: supp,
        maxmin: mm,
        gap_within_tolerance: gap_ok,
        sandwich,
        equilibrium: eq,
        dictionary_growth,
        support_growth,
        tangent,
    };
    write_outputs(out, "variational", cfg, &est, true, &report)?;
    Ok(Outcome {
        dir: out.to_path_buf(),
        passed: true,
    })
}

// ---------------------------------------------------------------------------
// bowen
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BowenReport {
    root: mdim_core::variational::BowenRoot,
    equilibrium: Option<mdim_core::variational::MaxMin>,
    consistency: Option<mdim_core::variational::BsReport>,
    note: String,
}

pub fn cmd_bowen(cfg: &RunConfig, out: &Path) -> CliResult<Outcome> {
    let s = setup(&cfg.system, &cfg.potential, &cfg.sample, cfg.n_top())?;
    let est = estimate_mmdim(&s.table, &s.f, &cfg.eps_list, &cfg.n_range)?;
    let proxy = EstimatorProxy::new(&s.table, cfg.eps_list.clone(), cfg.n_range.clone());
    let root = bowen_root(&s.table, &proxy, &s.f, cfg.tolerances.bisection_tol)?;

    // Equilibrium for −s0 f against a dictionary of the configured sources,
    // with g_{−s0 f} in place of the target.
    let scaled = s.f.scale(-root.s0).with_name("-s0 f");
    let mut dict = Dictionary::default();
    let mut note = String::new();
    if cfg.dictionary.include_target {
        match make_dict_member(&proxy, &s.table, &scaled, cfg.tolerances.tau) {
            Ok(m) => dict.push(m),
            Err(e) => note = format!("target member rejected: {e}"),
        }
    }
    for (i, spec) in cfg.dictionary.sources.iter().enumerate() {
        let h = build_potential(spec, &s.built).map_err(|e| CliError::Config(format!("dictionary source {i}: {e}")))?;
        match make_dict_member(&proxy, &s.table, &h.with_name(format!("source[{i}]")), cfg.tolerances.tau) {
            Ok(m) => dict.push(m),
            Err(e) => note.push_str(&format!("source {i} rejected: {e}; ")),
        }
    }
    let (equilibrium, consistency) = if dict.is_empty() {
        (None, None)
    } else {
        let supp = support(cfg, &s.table)?;
        let fv = point_values(&s.table, &s.f)?;
        let neg: Vec<f64> = fv.iter().map(|v| -root.s0 * v).collect();
        let mm = maxmin_variational(&dict, &neg, &supp)?;
        let bs = bs_consistency(&mm.measure, &fv, root.s0, &dict)?;
        (Some(mm), Some(bs))
    };
    let report = BowenReport {
        root,
        equilibrium,
        consistency,
        note,
    };
    write_outputs(out, "bowen", cfg, &est, true, &report)?;
    Ok(Outcome {
        dir: out.to_path_buf(),
        passed: true,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Estimate,
    Verify,
    Variational,
    Bowen,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Verify => "verify",
            Command::Variational => "variational",
            Command::Bowen => "bowen",
        }
    }
}

/// Output directory: the override, else `[output] dir`, else `out`.
pub fn output_dir(cfg: &RunConfig, over: Option<&Path>) -> PathBuf {
    over.map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Loads the config and runs one command; a failed verification is an error.
pub fn run(cmd: Command, config: &Path, out: Option<&Path>) -> CliResult<Outcome> {
    let cfg = RunConfig::load(config)?;
    let dir = output_dir(&cfg, out);
    let outcome = match cmd {
        Command::Estimate => cmd_estimate(&cfg, &dir)?,
        Command::Verify => cmd_verify(&cfg, &dir)?,
        Command::Variational => cmd_variational(&cfg, &dir)?,
        Command::Bowen => cmd_bowen(&cfg, &dir)?,
    };
    if !outcome.passed {
        return Err(CliError::Verify(format!(
            "see {}",
            outcome.dir.join("report.json").display()
        )));
    }
    Ok(outcome)
}
