//! Batch front end: config merging, profile cache, subcommand runners and
//! report files.
//!
//! Precedence is default < `--config` file < flags. Every artifact carries the
//! library version, the config hash and the seed. Floats are written with 17
//! significant digits.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::energy::{
    alpha, beta, expansion_fit, remainder_scaling, CutoffSpec, EnergyError, EnergyReport,
    QuadOptions, RemainderOptions,
};
use crate::geometry::{
    contraction_identity, jet_from_curvature, CurvatureTensor, GeometryError, MetricJet,
    RadialWeight,
};
use crate::groundstate::{linearized_spectrum_with, SpectrumOptions};
use crate::groundstate::{solve_ground_state, GroundStateError, RadialGrid, RadialProfile, Spacing};
use crate::params::{derive_constants, ParamError, ProblemParams};
use crate::reduction::{concentration_sweep, ChartField, ExtremumKind, ReductionError};
use crate::VERSION;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "QSPIKE_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric(_) | CliError::Io(_) => EXIT_NUMERIC,
        }
    }
}

impl From<ParamError> for CliError {
    fn from(e: ParamError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<GroundStateError> for CliError {
    fn from(e: GroundStateError) -> Self {
        match e {
            GroundStateError::Param(_)
            | GroundStateError::BadGrid { .. }
            | GroundStateError::GridTooShort(_)
            | GroundStateError::Spectrum(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::Quadrature { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<EnergyError> for CliError {
    fn from(e: EnergyError) -> Self {
        match e {
            EnergyError::Config(_) => CliError::Config(e.to_string()),
            EnergyError::Geometry(g) => g.into(),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<ReductionError> for CliError {
    fn from(e: ReductionError) -> Self {
        match e {
            ReductionError::Config(_) => CliError::Config(e.to_string()),
            ReductionError::Energy(x) => x.into(),
            ReductionError::Geometry(x) => x.into(),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Constants,
    Ground,
    Spectrum,
    Identities,
    Expansion,
    Remainder,
    Reduce,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Constants => "constants",
            Subcommand::Ground => "ground",
            Subcommand::Spectrum => "spectrum",
            Subcommand::Identities => "identities",
            Subcommand::Expansion => "expansion",
            Subcommand::Remainder => "remainder",
            Subcommand::Reduce => "reduce",
        }
    }
}

/// Random jet families for `expansion` and `remainder`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum JetFamily {
    /// From a random algebraic curvature tensor.
    Curvature,
    /// Random jet projected onto the ricci-flat compatible class.
    Compatible,
    /// Random jet with only the metric symmetries.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Bump,
    FlippedBump,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSettings {
    pub kind: FieldKind,
    /// Samples per side of the plane grid.
    pub side: usize,
    pub spacing: f64,
    pub amplitude: f64,
}

impl Default for FieldSettings {
    fn default() -> Self {
        FieldSettings {
            kind: FieldKind::Bump,
            side: 11,
            spacing: 0.1,
            amplitude: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSettings {
    pub h: f64,
    pub r_max: f64,
    pub ells: Vec<usize>,
    /// Eigenvalues kept per mode.
    pub k: usize,
}

impl Default for SpectrumSettings {
    fn default() -> Self {
        let d = SpectrumOptions::default();
        SpectrumSettings {
            h: d.h,
            r_max: d.r_max,
            ells: vec![0, 1, 2, 3],
            k: 6,
        }
    }
}

/// One run. `out` and `cache_dir` are excluded from the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub n: usize,
    pub p: f64,
    pub a: f64,
    pub b: f64,
    /// Fiber dimension and Einstein constant of the product problem.
    pub m: usize,
    pub lambda0: f64,
    /// Take `p, a, b` from the product constants instead.
    pub use_product: bool,
    pub h: f64,
    pub r_max: Option<f64>,
    pub tol: f64,
    pub eps: Vec<f64>,
    pub chart_radius: f64,
    pub quad: QuadOptions,
    pub remainder_quad: QuadOptions,
    pub jet_file: Option<PathBuf>,
    pub symmetrize: bool,
    pub jets: usize,
    pub jet_family: JetFamily,
    pub jet_scale: f64,
    /// Also run the flat jet.
    pub include_flat: bool,
    pub field_file: Option<PathBuf>,
    pub field: FieldSettings,
    pub extremum: ExtremumKind,
    pub spectrum: SpectrumSettings,
    pub identity_draws: usize,
    pub identity_scale: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            subcommand: Subcommand::Ground,
            n: 5,
            p: 1.5,
            a: 1.0,
            b: 3.0,
            m: 10,
            lambda0: 1.0,
            use_product: false,
            h: 0.05,
            r_max: None,
            tol: 1e-9,
            eps: vec![0.2, 0.1, 0.05, 0.025],
            chart_radius: crate::energy::DEFAULT_CHART_RADIUS,
            quad: QuadOptions::default(),
            remainder_quad: RemainderOptions::default().quad,
            jet_file: None,
            symmetrize: false,
            jets: 10,
            jet_family: JetFamily::Curvature,
            jet_scale: 2e-4,
            include_flat: true,
            field_file: None,
            field: FieldSettings::default(),
            extremum: ExtremumKind::Max,
            spectrum: SpectrumSettings::default(),
            identity_draws: 100,
            identity_scale: 1.0,
            seed: 1,
            out: None,
            cache_dir: None,
        }
    }
}

impl RunConfig {
    /// Problem parameters, from the product constants when `use_product` is set.
    pub fn params(&self) -> Result<ProblemParams, CliError> {
        if self.use_product {
            Ok(derive_constants(self.n, self.m, self.lambda0)?.to_params()?)
        } else {
            Ok(ProblemParams::new(self.n, self.p, self.a, self.b)?)
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.eps.is_empty() || self.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad(format!("ε grid {:?} must be non-empty and positive", self.eps));
        }
        if self.eps.windows(2).any(|w| !(w[1] < w[0])) {
            return bad(format!("ε grid {:?} must be strictly decreasing", self.eps));
        }
        if !(self.h > 0.0) || !(self.tol > 0.0) {
            return bad(format!("h = {} and tol = {} must be positive", self.h, self.tol));
        }
        if let Some(r) = self.r_max {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("r_max = {r} must be positive"));
            }
        }
        for (name, f) in [("jet_file", &self.jet_file), ("field_file", &self.field_file)] {
            if let Some(f) = f {
                if !f.is_file() {
                    return bad(format!("{name} {} does not exist", f.display()));
                }
            }
        }
        if self.jets == 0 || self.identity_draws == 0 || self.spectrum.k == 0 {
            return bad("jets, identity_draws and spectrum.k must be at least 1".into());
        }
        if self.field.side < 3 || !(self.field.spacing > 0.0) {
            return bad("field needs side >= 3 and positive spacing".into());
        }
        if !(self.jet_scale > 0.0) || !(self.identity_scale > 0.0) {
            return bad("jet scales must be positive".into());
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(default_out)
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir().join("cache"))
    }

    fn hashed_value(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("out");
            m.remove("cache_dir");
        }
        v
    }

    /// SHA-256 of the canonical JSON form, output locations excluded.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(render_json(&self.hashed_value(), false).as_bytes()))
    }
}

fn default_out() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("qspike-out"))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON text with floats at 17 significant digits and sorted keys.
pub fn render_json(v: &Value, pretty: bool) -> String {
    let mut s = String::new();
    render_into(v, pretty, 0, &mut s);
    if pretty {
        s.push('\n');
    }
    s
}

fn render_into(v: &Value, pretty: bool, depth: usize, s: &mut String) {
    let pad = |s: &mut String, d: usize| {
        if pretty {
            s.push('\n');
            s.push_str(&"  ".repeat(d));
        }
    };
    match v {
        Value::Null | Value::Bool(_) | Value::String(_) => s.push_str(&v.to_string()),
        Value::Number(x) => {
            if x.is_f64() {
                s.push_str(&fmt_f64(x.as_f64().unwrap()));
            } else {
                s.push_str(&x.to_string());
            }
        }
        Value::Array(a) => {
            if a.is_empty() {
                s.push_str("[]");
                return;
            }
            s.push('[');
            for (k, x) in a.iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                pad(s, depth + 1);
                render_into(x, pretty, depth + 1, s);
            }
            pad(s, depth);
            s.push(']');
        }
        Value::Object(m) => {
            if m.is_empty() {
                s.push_str("{}");
                return;
            }
            s.push('{');
            for (k, (key, x)) in m.iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                pad(s, depth + 1);
                s.push_str(&Value::String(key.clone()).to_string());
                s.push(':');
                if pretty {
                    s.push(' ');
                }
                render_into(x, pretty, depth + 1, s);
            }
            pad(s, depth);
            s.push('}');
        }
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Sets a dotted path such as `quad.angular`.
fn set_path(root: &mut Value, path: &str, v: Value) -> Result<(), CliError> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("`{path}` does not name a config field")))?;
        if k + 1 == parts.len() {
            obj.insert(part.to_string(), v);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

#[derive(Parser, Debug)]
#[command(name = "qspike", version, about = "Ground states, jet energies and concentration sweeps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(ClapSubcommand, Debug)]
pub enum Command {
    /// Product-manifold constants table.
    Constants(Flags),
    /// Solve the radial ground state and cache the profile.
    Ground(Flags),
    /// Spectrum of the linearization, mode by mode.
    Spectrum(Flags),
    /// Contraction ratios over random compatible jets.
    Identities(Flags),
    /// ε-expansion of the spike energy over random jets.
    Expansion(Flags),
    /// Remainder norms and per-term orders.
    Remainder(Flags),
    /// Concentration sweep on a chart field.
    Reduce(Flags),
}

impl Command {
    fn split(self) -> (Subcommand, Flags) {
        match self {
            Command::Constants(f) => (Subcommand::Constants, f),
            Command::Ground(f) => (Subcommand::Ground, f),
            Command::Spectrum(f) => (Subcommand::Spectrum, f),
            Command::Identities(f) => (Subcommand::Identities, f),
            Command::Expansion(f) => (Subcommand::Expansion, f),
            Command::Remainder(f) => (Subcommand::Remainder, f),
            Command::Reduce(f) => (Subcommand::Reduce, f),
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct Flags {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long)]
    pub use_product: bool,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub eps: Option<Vec<f64>>,
    #[arg(long)]
    pub chart_radius: Option<f64>,
    #[arg(long)]
    pub angular: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub jet: Option<PathBuf>,
    #[arg(long)]
    pub symmetrize: bool,
    #[arg(long)]
    pub jets: Option<usize>,
    #[arg(long, value_enum)]
    pub jet_family: Option<JetFamily>,
    #[arg(long)]
    pub jet_scale: Option<f64>,
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub field_kind: Option<FieldKind>,
    #[arg(long)]
    pub side: Option<usize>,
    #[arg(long)]
    pub spacing: Option<f64>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long, value_enum)]
    pub extremum: Option<ExtremumArg>,
    #[arg(long, value_delimiter = ',')]
    pub ells: Option<Vec<usize>>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Any field as `path=json`, e.g. `quad.angular=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ExtremumArg {
    Max,
    Min,
}

impl Flags {
    fn patch(&self) -> Result<Value, CliError> {
        let mut v = json!({});
        macro_rules! put {
            ($key:expr, $val:expr) => {
                if let Some(x) = &$val {
                    set_path(&mut v, $key, serde_json::to_value(x).expect("flag serializes"))?;
                }
            };
        }
        put!("out", self.out);
        put!("cache_dir", self.cache_dir);
        put!("n", self.n);
        put!("p", self.p);
        put!("a", self.a);
        put!("b", self.b);
        put!("m", self.m);
        put!("lambda0", self.lambda0);
        put!("h", self.h);
        put!("r_max", self.r_max);
        put!("tol", self.tol);
        put!("eps", self.eps);
        put!("chart_radius", self.chart_radius);
        put!("quad.angular", self.angular);
        put!("quad.stride", self.stride);
        put!("jet_file", self.jet);
        put!("jets", self.jets);
        put!("jet_family", self.jet_family);
        put!("jet_scale", self.jet_scale);
        put!("field_file", self.field);
        put!("field.kind", self.field_kind);
        put!("field.side", self.side);
        put!("field.spacing", self.spacing);
        put!("field.amplitude", self.amplitude);
        put!("spectrum.ells", self.ells);
        put!("identity_draws", self.draws);
        put!("seed", self.seed);
        if let Some(e) = self.extremum {
            let s = match e {
                ExtremumArg::Max => "max",
                ExtremumArg::Min => "min",
            };
            set_path(&mut v, "extremum", json!(s))?;
        }
        if self.use_product {
            set_path(&mut v, "use_product", json!(true))?;
        }
        if self.symmetrize {
            set_path(&mut v, "symmetrize", json!(true))?;
        }
        for kv in &self.set {
            let (k, raw) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set {kv}: expected KEY=VALUE")))?;
            let val = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut v, k, val)?;
        }
        Ok(v)
    }
}

/// Merges defaults, the optional config file and the flags.
pub fn build_config(sub: Subcommand, flags: &Flags) -> Result<RunConfig, CliError> {
    let mut v = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    if let Some(path) = &flags.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        if !file.is_object() {
            return Err(CliError::Config("config file must hold a JSON object".into()));
        }
        merge(&mut v, file);
    }
    merge(&mut v, flags.patch()?);
    set_path(&mut v, "subcommand", json!(sub.name()))?;
    let cfg: RunConfig =
        serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (sub, flags) = cli.command.split();
    let cfg = match build_config(sub, &flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("qspike: {e}");
            return e.exit_code();
        }
    };
    match run(&cfg) {
        Ok(files) => {
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("qspike: {e}");
            if e.exit_code() == EXIT_NUMERIC {
                match write_diagnostics(&cfg, &e) {
                    Ok(p) => eprintln!("diagnostics in {}", p.display()),
                    Err(w) => eprintln!("qspike: could not write diagnostics: {w}"),
                }
            }
            e.exit_code()
        }
    }
}

struct Meta {
    hash: String,
    seed: u64,
    sub: Subcommand,
    config: Value,
}

impl Meta {
    fn new(cfg: &RunConfig) -> Self {
        Meta {
            hash: cfg.hash(),
            seed: cfg.seed,
            sub: cfg.subcommand,
            config: cfg.hashed_value(),
        }
    }

    fn csv_header(&self) -> String {
        format!(
            "# qspike {VERSION}\n# config_hash {}\n# seed {}\n# subcommand {}\n",
            self.hash,
            self.seed,
            self.sub.name()
        )
    }

    fn wrap(&self, result: Value) -> Value {
        json!({
            "qspike_version": VERSION,
            "config_hash": self.hash,
            "seed": self.seed,
            "subcommand": self.sub.name(),
            "config": self.config,
            "result": result,
        })
    }
}

struct Writer {
    dir: PathBuf,
    meta: Meta,
    files: Vec<PathBuf>,
}

impl Writer {
    fn csv(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, format!("{}{body}", self.meta.csv_header()))?;
        self.files.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, result: Value) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, render_json(&self.meta.wrap(result), true))?;
        self.files.push(path);
        Ok(())
    }
}

fn write_diagnostics(cfg: &RunConfig, e: &CliError) -> Result<PathBuf, std::io::Error> {
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir)?;
    let path = dir.join("diagnostics.json");
    let meta = Meta::new(cfg);
    let body = meta.wrap(json!({ "error": e.to_string(), "exit_code": e.exit_code() }));
    fs::write(&path, render_json(&body, true))?;
    Ok(path)
}

/// Runs one subcommand and returns the files written.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir)?;
    let mut w = Writer {
        dir,
        meta: Meta::new(cfg),
        files: vec![],
    };
    match cfg.subcommand {
        Subcommand::Constants => run_constants(cfg, &mut w)?,
        Subcommand::Ground => run_ground(cfg, &mut w)?,
        Subcommand::Spectrum => run_spectrum(cfg, &mut w)?,
        Subcommand::Identities => run_identities(cfg, &mut w)?,
        Subcommand::Expansion => run_expansion(cfg, &mut w)?,
        Subcommand::Remainder => run_remainder(cfg, &mut w)?,
        Subcommand::Reduce => run_reduce(cfg, &mut w)?,
    }
    Ok(w.files)
}

fn run_constants(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let c = derive_constants(cfg.n, cfg.m, cfg.lambda0)?;
    let sign = |s: crate::params::Sign| match s {
        crate::params::Sign::Negative => "negative",
        crate::params::Sign::Positive => "positive",
    };
    let critical = (c.n as f64 + 4.0) / (c.n as f64 - 4.0);
    let mut s = String::from("n,m,lambda0,N,a,b,p,lambda_eps_sign,bsq_minus_4a,bsq_gt_4a\n");
    s.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{}\n",
        c.n,
        c.m,
        fmt_f64(c.lambda0),
        c.big_n,
        fmt_f64(c.a),
        fmt_f64(c.b),
        fmt_f64(c.p),
        sign(c.lambda_eps_sign),
        fmt_f64(c.b * c.b - 4.0 * c.a),
        c.bsq_gt_4a
    ));
    w.csv("constants.csv", &s)?;
    w.json(
        "constants.json",
        json!({
            "constants": c,
            "bsq_minus_4a": c.b * c.b - 4.0 * c.a,
            "critical_exponent": critical,
            "subcritical": c.p < critical,
            "nondegenerate_range": c.p < (c.n as f64 + 4.0) / c.n as f64,
            "params_valid": c.to_params().is_ok(),
        }),
    )
}

/// File name in the cache directory for a profile solve.
pub fn cache_key(params: &ProblemParams, grid: &RadialGrid, tol: f64) -> String {
    let text = format!(
        "{VERSION}|{}|{}|{}|{}|{}|{}|{}",
        params.n,
        fmt_f64(params.p),
        fmt_f64(params.a),
        fmt_f64(params.b),
        fmt_f64(grid.h),
        fmt_f64(grid.r_max()),
        fmt_f64(tol)
    );
    let d = Sha256::digest(text.as_bytes());
    format!("profile-{}.txt", &hex(&d)[..16])
}

/// Plain-text profile cache: `key value` header lines, then `r,U,U1,U2,U3`.
pub fn write_profile_cache(profile: &RadialProfile, path: &Path) -> Result<(), std::io::Error> {
    let pr = &profile.params;
    let mut s = String::new();
    s.push_str(&format!("version {VERSION}\n"));
    s.push_str(&format!("n {}\n", pr.n));
    s.push_str(&format!("p {}\n", fmt_f64(pr.p)));
    s.push_str(&format!("a {}\n", fmt_f64(pr.a)));
    s.push_str(&format!("b {}\n", fmt_f64(pr.b)));
    s.push_str(&format!(
        "grid uniform {} {}\n",
        fmt_f64(profile.grid.h),
        profile.grid.len()
    ));
    s.push_str(&format!("residual {}\n", fmt_f64(profile.residual)));
    s.push_str(&format!("decay_rate {}\n", fmt_f64(profile.decay_rate)));
    s.push_str(&format!("nehari_gap {}\n", fmt_f64(profile.nehari_gap)));
    s.push_str("r,U,U1,U2,U3\n");
    for i in 0..profile.u.len() {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(profile.grid.nodes[i]),
            fmt_f64(profile.u[i]),
            fmt_f64(profile.u1[i]),
            fmt_f64(profile.u2[i]),
            fmt_f64(profile.u3[i])
        ));
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, s)?;
    fs::rename(tmp, path)
}

pub fn read_profile_cache(path: &Path) -> Result<RadialProfile, CliError> {
    let text = fs::read_to_string(path)?;
    let bad = |m: &str| CliError::Numeric(format!("cache {}: {m}", path.display()));
    let mut lines = text.lines();
    let mut head = std::collections::HashMap::new();
    for line in lines.by_ref() {
        if line == "r,U,U1,U2,U3" {
            break;
        }
        let (k, v) = line.split_once(' ').ok_or_else(|| bad("malformed header"))?;
        head.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| head.get(k).ok_or_else(|| bad(&format!("missing `{k}`")));
    let num = |k: &str| -> Result<f64, CliError> {
        get(k)?.parse::<f64>().map_err(|_| bad(&format!("bad `{k}`")))
    };
    if get("version")? != VERSION {
        return Err(bad("version mismatch"));
    }
    let n: usize = get("n")?.parse().map_err(|_| bad("bad `n`"))?;
    let grid_line: Vec<&str> = get("grid")?.split_whitespace().collect();
    if grid_line.len() != 3 || grid_line[0] != "uniform" {
        return Err(bad("bad `grid`"));
    }
    let h: f64 = grid_line[1].parse().map_err(|_| bad("bad grid spacing"))?;
    let len: usize = grid_line[2].parse().map_err(|_| bad("bad grid length"))?;
    let mut cols: [Vec<f64>; 5] = Default::default();
    for line in lines {
        let vals: Vec<f64> = line
            .split(',')
            .map(|x| x.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("bad data row"))?;
        if vals.len() != 5 {
            return Err(bad("bad data row"));
        }
        for (c, v) in cols.iter_mut().zip(vals) {
            c.push(v);
        }
    }
    if cols[0].len() != len {
        return Err(bad("row count differs from grid length"));
    }
    let [nodes, u, u1, u2, u3] = cols;
    Ok(RadialProfile {
        params: ProblemParams {
            n,
            p: num("p")?,
            a: num("a")?,
            b: num("b")?,
        },
        grid: RadialGrid {
            h,
            spacing: Spacing::Uniform,
            nodes,
        },
        u,
        u1,
        u2,
        u3,
        decay_rate: num("decay_rate")?,
        residual: num("residual")?,
        nehari_gap: num("nehari_gap")?,
    })
}

fn grid_for(cfg: &RunConfig, params: &ProblemParams) -> Result<RadialGrid, CliError> {
    Ok(match cfg.r_max {
        Some(r) => RadialGrid::uniform(cfg.h, r)?,
        None => RadialGrid::for_params(params, cfg.h)?,
    })
}

/// Loads the cached profile for `cfg` or solves and stores it. The flag
/// reports a cache hit.
pub fn load_or_solve(cfg: &RunConfig) -> Result<(RadialProfile, PathBuf, bool), CliError> {
    let params = cfg.params()?;
    let grid = grid_for(cfg, &params)?;
    let dir = cfg.cache_path();
    fs::create_dir_all(&dir)?;
    let path = dir.join(cache_key(&params, &grid, cfg.tol));
    if path.is_file() {
        match read_profile_cache(&path) {
            Ok(p) if p.params == params && p.grid == grid => return Ok((p, path, true)),
            Ok(_) => eprintln!("qspike: stale cache {}, re-solving", path.display()),
            Err(e) => eprintln!("qspike: {e}, re-solving"),
        }
    }
    let profile = solve_ground_state(params, grid, cfg.tol)?;
    write_profile_cache(&profile, &path)?;
    // the in-memory profile must equal what a later run reads back
    let reread = read_profile_cache(&path)?;
    debug_assert_eq!(reread, profile);
    Ok((reread, path, false))
}

fn profile_for(cfg: &RunConfig) -> Result<RadialProfile, CliError> {
    let (p, path, hit) = load_or_solve(cfg)?;
    eprintln!(
        "{} profile {}",
        if hit { "cached" } else { "solved" },
        path.display()
    );
    Ok(p)
}

fn run_ground(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let (profile, path, hit) = load_or_solve(cfg)?;
    eprintln!("{} profile {}", if hit { "cached" } else { "solved" }, path.display());
    let params = profile.params;
    let expected = params.roots().decay_rate;
    let al = alpha(&profile);
    let p = params.p;
    let nehari = (0.5 - 1.0 / (p + 1.0)) * profile.potential_integral();
    let mut s = String::from("r,U,U1,U2,U3\n");
    for i in 0..profile.u.len() {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(profile.grid.nodes[i]),
            fmt_f64(profile.u[i]),
            fmt_f64(profile.u1[i]),
            fmt_f64(profile.u2[i]),
            fmt_f64(profile.u3[i])
        ));
    }
    w.csv("profile.csv", &s)?;
    w.json(
        "ground.json",
        json!({
            "params": params,
            "h": profile.grid.h,
            "r_max": profile.grid.r_max(),
            "nodes": profile.grid.len(),
            "u0": profile.u[0],
            "residual": profile.residual,
            "consistency_residual": profile.consistency_residual(),
            "decay_rate": profile.decay_rate,
            "expected_decay_rate": expected,
            "decay_rel_error": (profile.decay_rate - expected).abs() / expected,
            "nehari_gap": profile.nehari_gap,
            "norm_sq": profile.norm_sq(),
            "potential_integral": profile.potential_integral(),
            "alpha": al,
            "alpha_nehari": nehari,
            "alpha_rel_error": (al - nehari).abs() / al.abs(),
            "beta": beta(&profile),
            "cache_file": path.file_name().map(|f| f.to_string_lossy().into_owned()),
        }),
    )
}

fn run_spectrum(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let profile = profile_for(cfg)?;
    let opts = SpectrumOptions {
        h: cfg.spectrum.h,
        r_max: cfg.spectrum.r_max,
    };
    let mut s = String::from("ell,index,eigenvalue\n");
    let mut modes = vec![];
    for &ell in &cfg.spectrum.ells {
        let rep = linearized_spectrum_with(&profile, ell, cfg.spectrum.k, &opts)?;
        for (k, l) in rep.eigenvalues.iter().enumerate() {
            s.push_str(&format!("{ell},{k},{}\n", fmt_f64(*l)));
        }
        let z = rep.nearest_zero();
        modes.push(json!({
            "ell": ell,
            "eigenvalues": rep.eigenvalues,
            "negative_count": rep.negative_count(),
            "nearest_zero_index": z,
            "nearest_zero": rep.eigenvalues[z],
            "translation_mismatch": if ell == 1 { Some(rep.translation_mismatch(&profile, z)) } else { None },
            "size": rep.size,
        }));
    }
    w.csv("spectrum.csv", &s)?;
    w.json("spectrum.json", json!({ "h": opts.h, "r_max": opts.r_max, "modes": modes }))
}

fn weight_name(wt: RadialWeight) -> String {
    serde_json::to_value(wt)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn run_identities(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let profile = profile_for(cfg)?;
    let n = profile.params.n;
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let jets: Vec<MetricJet> = (0..cfg.identity_draws)
        .map(|_| MetricJet::random_compatible(n, cfg.identity_scale, &mut rng))
        .collect();
    let mut s = String::from("weight,draw,lhs,rhs,ratio\n");
    let mut summary = vec![];
    for wt in RadialWeight::ALL {
        let name = weight_name(wt);
        let mut ratios = vec![];
        for (d, jet) in jets.iter().enumerate() {
            let r = contraction_identity(jet, wt, &profile)?;
            s.push_str(&format!(
                "{name},{d},{},{},{}\n",
                fmt_f64(r.lhs),
                fmt_f64(r.rhs_tau_form),
                r.ratio.map(fmt_f64).unwrap_or_else(|| "nan".into())
            ));
            if let Some(x) = r.ratio {
                ratios.push(x);
            }
        }
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(*x), h.max(*x)));
        let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
        summary.push(json!({
            "weight": name,
            "draws": ratios.len(),
            "mean": mean,
            "min": lo,
            "max": hi,
            "spread": (hi - lo) / mean.abs(),
            "stated_constant": 1.0,
        }));
    }
    w.csv("identities.csv", &s)?;
    w.json("identities.json", json!({ "weights": summary }))
}

/// Jet list for sweeps: the jet file when given, else `count` seeded draws.
pub fn sweep_jets(cfg: &RunConfig, count: usize) -> Result<Vec<MetricJet>, CliError> {
    let n = cfg.n;
    if let Some(path) = &cfg.jet_file {
        let text = fs::read_to_string(path)?;
        let (jet, repaired) = MetricJet::from_json(&text, cfg.symmetrize)?;
        if repaired {
            eprintln!("qspike: jet {} was symmetrized", path.display());
        }
        if jet.n != n {
            return Err(CliError::Config(format!("jet dimension {} differs from n = {n}", jet.n)));
        }
        return Ok(vec![jet]);
    }
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    (0..count)
        .map(|_| {
            Ok(match cfg.jet_family {
                JetFamily::Curvature => {
                    jet_from_curvature(&CurvatureTensor::random(n, cfg.jet_scale, &mut rng))?
                }
                JetFamily::Compatible => MetricJet::random_compatible(n, cfg.jet_scale, &mut rng),
                JetFamily::Symmetric => MetricJet::random_symmetric(n, cfg.jet_scale, &mut rng),
            })
        })
        .collect()
}

/// Ordered parallel map over independent work items.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(items.len().max(1));
    if threads <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

fn report_rows(label: &str, r: &EnergyReport) -> String {
    let mut s = String::new();
    for k in 0..r.eps.len() {
        s.push_str(&format!(
            "{label},{},{},{},{},{},{},{}\n",
            fmt_f64(r.eps[k]),
            fmt_f64(r.j[k]),
            fmt_f64(r.alpha),
            fmt_f64(r.beta),
            fmt_f64(r.tau),
            fmt_f64(r.residual[k]),
            r.order.map(fmt_f64).unwrap_or_else(|| "nan".into())
        ));
    }
    s
}

fn run_expansion(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let profile = profile_for(cfg)?;
    let cutoff = CutoffSpec::new(cfg.chart_radius)?;
    let mut jets: Vec<(String, MetricJet)> = sweep_jets(cfg, cfg.jets)?
        .into_iter()
        .enumerate()
        .map(|(k, j)| (k.to_string(), j))
        .collect();
    if cfg.include_flat {
        jets.push(("flat".into(), MetricJet::zeros(cfg.n)));
    }
    let reports = par_map(&jets, |(_, jet)| {
        expansion_fit(&profile, jet, &cfg.eps, cutoff, cfg.quad)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let mut s = String::from("jet,eps,J,alpha,beta,tau,residual,order\n");
    let mut items = vec![];
    let mut ratios = vec![];
    for ((label, _), r) in jets.iter().zip(&reports) {
        s.push_str(&report_rows(label, r));
        if label != "flat" {
            ratios.extend(r.c2_over_tau);
        }
        items.push(json!({ "jet": label, "report": r }));
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    let spread = ratios
        .iter()
        .map(|x| (x - mean).abs())
        .fold(0.0, f64::max)
        / mean.abs();
    let flat = jets
        .iter()
        .zip(&reports)
        .find(|((l, _), _)| l == "flat")
        .map(|(_, r)| json!({ "c2": r.c2, "c2_error": r.c2_error, "below_error": r.c2.abs() < r.c2_error }));
    w.csv("expansion.csv", &s)?;
    w.json(
        "expansion.json",
        json!({
            "jet_family": cfg.jet_family,
            "c2_over_tau_mean": mean,
            "c2_over_tau_spread": spread,
            "flat": flat,
            "reports": items,
        }),
    )
}

fn run_remainder(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let profile = profile_for(cfg)?;
    let cutoff = CutoffSpec::new(cfg.chart_radius)?;
    let opts = RemainderOptions {
        quad: cfg.remainder_quad,
    };
    let mut jets: Vec<(String, MetricJet)> = vec![("0".into(), sweep_jets(cfg, 1)?.remove(0))];
    if cfg.include_flat {
        jets.push(("flat".into(), MetricJet::zeros(cfg.n)));
    }
    let results = par_map(&jets, |(_, jet)| {
        remainder_scaling(&profile, &cfg.eps, jet, cutoff, &opts)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let mut s = String::from("jet,eps,norm,norm_over_eps2\n");
    let mut t = String::from("jet,term,kind,eps,value,order\n");
    let mut items = vec![];
    for ((label, _), r) in jets.iter().zip(&results) {
        for k in 0..r.eps.len() {
            s.push_str(&format!(
                "{label},{},{},{}\n",
                fmt_f64(r.eps[k]),
                fmt_f64(r.norms[k]),
                fmt_f64(r.scaled[k])
            ));
        }
        for term in &r.table.terms {
            let kind = match term.kind {
                crate::energy::TermKind::Cutoff => "cutoff",
                crate::energy::TermKind::Metric => "metric",
            };
            for (k, v) in term.values.iter().enumerate() {
                t.push_str(&format!(
                    "{label},\"{}\",{kind},{},{},{}\n",
                    term.label,
                    fmt_f64(r.table.eps[k]),
                    fmt_f64(*v),
                    term.order.map(fmt_f64).unwrap_or_else(|| "nan".into())
                ));
            }
        }
        items.push(json!({ "jet": label, "scaling": r }));
    }
    w.csv("remainder.csv", &s)?;
    w.csv("terms.csv", &t)?;
    w.json("remainder.json", json!({ "results": items }))
}

/// Chart field file: `points` with either `tau` or `jets` (paths relative to
/// the file), and an optional `radius`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldFile {
    pub points: Vec<Vec<f64>>,
    pub tau: Option<Vec<f64>>,
    pub jets: Option<Vec<PathBuf>>,
    pub radius: Option<f64>,
}

pub fn load_field(path: &Path, chart_radius: f64, symmetrize: bool) -> Result<ChartField, CliError> {
    let text = fs::read_to_string(path)?;
    let f: FieldFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("field {}: {e}", path.display())))?;
    let radius = f.radius.unwrap_or_else(|| {
        f.points
            .iter()
            .map(|p| p.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    });
    let base = path.parent().unwrap_or(Path::new("."));
    match (f.tau, f.jets) {
        (Some(tau), None) => Ok(ChartField::explicit(f.points, tau, radius, chart_radius)?),
        (None, Some(files)) => {
            let mut jets = vec![];
            for j in files {
                let p = if j.is_absolute() { j } else { base.join(j) };
                if !p.is_file() {
                    return Err(CliError::Config(format!("jet file {} does not exist", p.display())));
                }
                jets.push(MetricJet::from_json(&fs::read_to_string(&p)?, symmetrize)?.0);
            }
            Ok(ChartField::from_jets(f.points, jets, radius, chart_radius)?)
        }
        _ => Err(CliError::Config("field needs exactly one of `tau` or `jets`".into())),
    }
}

fn run_reduce(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let profile = profile_for(cfg)?;
    let cutoff = CutoffSpec::new(cfg.chart_radius)?;
    let f = &cfg.field;
    let field = match &cfg.field_file {
        Some(path) => load_field(path, cfg.chart_radius, cfg.symmetrize)?,
        None => match f.kind {
            FieldKind::Bump | FieldKind::FlippedBump => ChartField::synthetic_bump(
                cfg.n,
                f.side,
                f.spacing,
                f.amplitude,
                f.kind == FieldKind::FlippedBump,
                cfg.chart_radius,
            )?,
            FieldKind::Random => ChartField::synthetic_random(
                cfg.n,
                f.side,
                f.spacing,
                f.amplitude,
                cfg.seed,
                cfg.chart_radius,
            )?,
        },
    };
    let rep = concentration_sweep(&field, &profile, &cfg.eps, cfg.extremum, cutoff, cfg.quad)?;
    w.csv("reduce.csv", &rep.to_csv())?;
    w.json(
        "reduce.json",
        json!({
            "origin": field.origin,
            "samples": field.points.len(),
            "verdict": rep.verdict(),
            "report": rep,
        }),
    )
}
