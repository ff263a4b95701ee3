//! Experiment configuration, canonical hashing, atomic writes and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exponent::{EXPONENT_TOL, LIMIT_TOL};
use crate::levy::{DensityTable, LevyBasisSpec};
use crate::pathsim::{EnsembleFormat, SeriesBudget, XGridOptions};
use crate::regime::Norming;
use crate::trawl::{TimeCombo, TrawlSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevyKindName {
    SymmetricStable,
    PoissonDifference,
    Table,
    /// `h(y) = c y^{-1-α} e^{-λ y}`
    TemperedStable,
}

/// Flat description of the Lévy basis; which fields apply depends on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyConfig {
    pub kind: LevyKindName,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub jump: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub rows: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub alpha_at_infinity: Option<f64>,
    #[serde(default)]
    pub alpha_at_zero: Option<f64>,
    #[serde(default)]
    pub moment_kappa: Option<f64>,
}

fn at(path: &str, e: Error) -> Error {
    match e {
        Error::Validation(m) => Error::Validation(format!("{path}: {m}")),
        other => other,
    }
}

fn need(v: Option<f64>, path: &str) -> Result<f64> {
    v.ok_or_else(|| Error::Validation(format!("{path}: missing field")))
}

impl LevyConfig {
    pub fn to_spec(&self) -> Result<LevyBasisSpec> {
        let allowed: &[&str] = match self.kind {
            LevyKindName::SymmetricStable => &["alpha"],
            LevyKindName::PoissonDifference => &["lambda", "jump"],
            LevyKindName::Table => &["rows"],
            LevyKindName::TemperedStable => &["alpha", "c", "lambda"],
        };
        let present = [
            ("alpha", self.alpha.is_some()),
            ("lambda", self.lambda.is_some()),
            ("jump", self.jump.is_some()),
            ("c", self.c.is_some()),
            ("rows", self.rows.is_some()),
        ];
        for (name, set) in present {
            if set && !allowed.contains(&name) {
                return Err(Error::Validation(format!(
                    "levy.{name}: not used by kind {:?}",
                    self.kind
                )));
            }
        }
        let spec = match self.kind {
            LevyKindName::SymmetricStable => {
                LevyBasisSpec::stable(need(self.alpha, "levy.alpha")?).map_err(|e| at("levy.alpha", e))?
            }
            LevyKindName::PoissonDifference => {
                LevyBasisSpec::poisson_difference(need(self.lambda, "levy.lambda")?, self.jump.unwrap_or(1.0))
                    .map_err(|e| at("levy", e))?
            }
            LevyKindName::Table => {
                let rows = self
                    .rows
                    .as_ref()
                    .ok_or_else(|| Error::Validation("levy.rows: missing field".into()))?;
                LevyBasisSpec::table(DensityTable::new(rows).map_err(|e| at("levy.rows", e))?)
            }
            LevyKindName::TemperedStable => {
                let alpha = need(self.alpha, "levy.alpha")?;
                let lambda = need(self.lambda, "levy.lambda")?;
                let c = self.c.unwrap_or(1.0);
                if !(alpha > 0.0 && alpha < 2.0) {
                    return Err(Error::Validation(format!(
                        "levy.alpha: must lie in (0, 2), got {alpha}"
                    )));
                }
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::Validation(format!(
                        "levy.lambda: must be positive, got {lambda}"
                    )));
                }
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::Validation(format!("levy.c: must be positive, got {c}")));
                }
                LevyBasisSpec::density(move |y: f64| c * y.powf(-1.0 - alpha) * (-lambda * y).exp())
                    .map_err(|e| at("levy", e))?
                    .with_declared(Some(alpha), Some(2.0), None)
            }
        };
        for (name, v) in [
            ("alpha_at_infinity", self.alpha_at_infinity),
            ("alpha_at_zero", self.alpha_at_zero),
            ("moment_kappa", self.moment_kappa),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Validation(format!("levy.{name}: must be positive, got {v}")));
                }
            }
        }
        let spec = spec.with_declared(self.alpha_at_infinity, self.alpha_at_zero, self.moment_kappa);
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrawlFamilyName {
    #[default]
    Canonical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrawlConfig {
    #[serde(default)]
    pub family: TrawlFamilyName,
    #[serde(default = "one")]
    pub c: f64,
    pub gamma: f64,
}

fn one() -> f64 {
    1.0
}

impl TrawlConfig {
    pub fn to_spec(&self) -> Result<TrawlSpec> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Validation(format!(
                "trawl.gamma: must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Validation(format!("trawl.c: must be positive, got {}", self.c)));
        }
        TrawlSpec::canonical(self.c, self.gamma).map_err(|e| at("trawl", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMethod {
    /// Kernel coordinates for finite activity, LePage series for stable bases.
    #[default]
    Auto,
    Kernel,
    StableSeries,
    XGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(rename = "T", default = "default_t")]
    pub big_t: f64,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default)]
    pub method: SimulationMethod,
    /// Overrides the regime norming.
    #[serde(default)]
    pub norming: Option<Norming>,
    #[serde(default)]
    pub x_grid: Option<XGridOptions>,
}

fn default_t() -> f64 {
    1000.0
}

fn default_times() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            big_t: default_t(),
            times: default_times(),
            method: SimulationMethod::Auto,
            norming: None,
            x_grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    /// Defaults to the stable index of `levy`.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Defaults to `trawl.gamma`.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_limit_times")]
    pub times: Vec<f64>,
}

fn default_limit_times() -> Vec<f64> {
    (1..=40).map(|k| k as f64 * 0.05).collect()
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            gamma: None,
            times: default_limit_times(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    /// Stability index of the increment over `increment`.
    #[default]
    Stability,
    /// Self-similarity index from the marginals at `base_time × {1, 2, 4}`.
    Selfsim,
    /// Increment dependence over `intervals` at `theta`.
    Dependence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    #[serde(default)]
    pub method: EstimateMethod,
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// `(s, t)`; defaults to the last two grid times.
    #[serde(default)]
    pub increment: Option<(f64, f64)>,
    #[serde(default)]
    pub base_time: Option<f64>,
    #[serde(default)]
    pub intervals: Option<[(f64, f64); 2]>,
    #[serde(default)]
    pub theta: Option<(f64, f64)>,
    #[serde(default)]
    pub window: Option<(f64, f64)>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

fn default_bootstrap() -> usize {
    200
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            method: EstimateMethod::Stability,
            input: None,
            increment: None,
            base_time: None,
            intervals: None,
            theta: None,
            window: None,
            bootstrap: default_bootstrap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: EnsembleFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default = "default_exponent_tol")]
    pub exponent: f64,
    #[serde(default = "default_limit_tol")]
    pub limit: f64,
}

fn default_exponent_tol() -> f64 {
    EXPONENT_TOL
}

fn default_limit_tol() -> f64 {
    LIMIT_TOL
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            exponent: EXPONENT_TOL,
            limit: LIMIT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub levy: LevyConfig,
    pub trawl: TrawlConfig,
    #[serde(default = "default_combo")]
    pub combo: TimeCombo,
    #[serde(rename = "T_grid", default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub budget: SeriesBudget,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub limit: LimitConfig,
    #[serde(default)]
    pub estimate: EstimateConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerance: ToleranceConfig,
}

fn default_combo() -> TimeCombo {
    TimeCombo::single(1.0).expect("valid combo")
}

fn default_t_grid() -> Vec<f64> {
    vec![1e2, 1e3, 1e4, 1e5]
}

fn default_paths() -> usize {
    1000
}

/// A parsed configuration with the hash of its canonical form.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
    pub canonical: String,
}

impl ExperimentConfig {
    /// Parses, rejects unknown keys with their path, and checks the domain constraints.
    pub fn from_json(text: &str) -> Result<LoadedConfig> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("config is not valid JSON: {e}")))?;
        let canonical = canonical_json(&value);
        let config: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::Validation(format!("{path}: {}", e.into_inner()))
        })?;
        config.validate()?;
        Ok(LoadedConfig {
            hash: sha256_hex(canonical.as_bytes()),
            canonical,
            config,
        })
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.levy.to_spec()?;
        self.trawl.to_spec()?;
        if self.t_grid.is_empty() {
            return Err(Error::Validation("T_grid: must not be empty".into()));
        }
        if self.t_grid.iter().any(|t| !(*t >= 1.0 && t.is_finite())) {
            return Err(Error::Validation("T_grid: every T must be finite and >= 1".into()));
        }
        if self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("T_grid: must be strictly increasing".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::Validation("n_paths: must be positive".into()));
        }
        self.budget.validate().map_err(|e| at("budget", e))?;
        let s = &self.simulation;
        if !(s.big_t >= 1.0 && s.big_t.is_finite()) {
            return Err(Error::Validation(format!(
                "simulation.T: must be >= 1, got {}",
                s.big_t
            )));
        }
        crate::pathsim::check_times(&s.times).map_err(|e| at("simulation.times", e))?;
        crate::pathsim::check_times(&self.limit.times).map_err(|e| at("limit.times", e))?;
        for (name, v) in [
            ("tolerance.exponent", self.tolerance.exponent),
            ("tolerance.limit", self.tolerance.limit),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name}: must be positive")));
            }
        }
        if self.estimate.bootstrap == 0 {
            return Err(Error::Validation("estimate.bootstrap: must be positive".into()));
        }
        Ok(())
    }
}

/// Sorted keys, no insignificant whitespace, shortest round-trip floats.
pub fn canonical_json(value: &Value) -> String {
    // serde_json's default map is ordered by key
    serde_json::to_string(value).expect("JSON values serialize")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to a temporary file beside `path`, syncs it and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Validation(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    pub stage: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub tool_version: String,
    pub files: Vec<FileEntry>,
    pub stages: Vec<StageTiming>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl RunManifest {
    pub fn new(command: &str, config_hash: &str, master_seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            master_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            files: Vec::new(),
            stages: Vec::new(),
        }
    }

    /// Writes `bytes` atomically under `dir` and records its checksum.
    pub fn emit(&mut self, dir: &Path, name: &str, stage: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = dir.join(name);
        atomic_write(&path, bytes)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
            stage: stage.to_string(),
        });
        Ok(path)
    }

    pub fn time_stage(&mut self, stage: &str, seconds: f64) {
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        let path = dir.join(MANIFEST_NAME);
        atomic_write(&path, text.as_bytes())?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))
    }

    /// Recomputes every listed checksum.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for f in &self.files {
            let bytes = fs::read(dir.join(&f.path))?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(Error::Format(format!("checksum mismatch for {}", f.path)));
            }
        }
        Ok(())
    }
}
