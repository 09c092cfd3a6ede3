use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use hamlab_core::entropy::SamplingMode;
use hamlab_core::ModelSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Curvature,
    Conjugate,
    Distributions,
    Anosov,
    Entropy,
    RiccatiLab,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Curvature => "curvature",
            Command::Conjugate => "conjugate",
            Command::Distributions => "distributions",
            Command::Anosov => "anosov",
            Command::Entropy => "entropy",
            Command::RiccatiLab => "riccati-lab",
            Command::Validate => "validate",
        }
    }
}

/// Base point `(x, p)` with `p` rescaled along `direction` onto the level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub x: Vec<f64>,
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Local error tolerance of the flow and frame integrations.
    pub integrator: f64,
    /// Convergence gap of the Riccati limits `U±`.
    pub limit: f64,
    /// Agreement required between independent routes in `validate`.
    pub agreement: f64,
    /// Bound on Darboux and invariance residuals in `validate` and `distributions`.
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { integrator: 1e-12, limit: 1e-8, agreement: 1e-5, residual: 1e-4 }
    }
}

/// Time spans, one per command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Horizons {
    pub curvature: f64,
    pub conjugate: f64,
    /// Shifts `s ∈ [−h, h]` of the invariance check.
    pub distributions: f64,
    /// Fit window of the contraction rates and of the growth profile.
    pub anosov: f64,
    /// Half-width of the non-positive-curvature window.
    pub nonpositive: f64,
    /// Averaging time per trajectory.
    pub entropy: f64,
    pub riccati: f64,
}

impl Default for Horizons {
    fn default() -> Self {
        Self {
            curvature: 5.0,
            conjugate: 10.0,
            distributions: 3.0,
            anosov: 10.0,
            nonpositive: 10.0,
            entropy: 20.0,
            riccati: 5.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub sampling: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub mode: SamplingMode,
    /// Sample points for `anosov`.
    pub anosov_samples: usize,
    /// Sample points for `entropy`.
    pub entropy_samples: usize,
    pub burn_in: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { mode: SamplingMode::LevelSetRejection, anosov_samples: 3, entropy_samples: 16, burn_in: 5.0 }
    }
}

/// Standalone Riccati problem. Without `curvature` the reduced curvature
/// along the orbit of the base point is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiccatiLab {
    /// Constant symmetric curvature matrix, row by row.
    pub curvature: Option<Vec<Vec<f64>>>,
    /// Output step of `S(t)`.
    pub step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
    pub report: String,
}

impl Default for Output {
    fn default() -> Self {
        Self { dir: PathBuf::from("hamlab-out"), report: "report.json".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub model: ModelSpec,
    pub energy: Option<f64>,
    pub point: Option<PointSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub horizons: Horizons,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub riccati: RiccatiLab,
    #[serde(default)]
    pub output: Output,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub horizon: Option<f64>,
    pub tol: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Applies the flags. `--horizon` sets the span of `command`, `--tol` the
    /// limit tolerance.
    pub fn apply(&mut self, command: Command, o: &Overrides) -> Result<()> {
        if let Some(c) = self.command {
            if c != command {
                bail!("config is for `{}` but `{}` was requested", c.name(), command.name());
            }
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seeds.sampling = seed;
        }
        if let Some(tol) = o.tol {
            self.tolerances.limit = tol;
        }
        if let Some(h) = o.horizon {
            let slot = match command {
                Command::Curvature => &mut self.horizons.curvature,
                Command::Conjugate => &mut self.horizons.conjugate,
                Command::Distributions => &mut self.horizons.distributions,
                Command::Anosov => &mut self.horizons.anosov,
                Command::Entropy => &mut self.horizons.entropy,
                Command::RiccatiLab => &mut self.horizons.riccati,
                Command::Validate => bail!("`validate` has no horizon"),
            };
            *slot = h;
        }
        self.command = Some(command);
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        for (name, v) in [("integrator", t.integrator), ("limit", t.limit), ("agreement", t.agreement), ("residual", t.residual)] {
            if !(v > 0.0 && v < 1.0) {
                bail!("tolerances.{name} must lie in (0, 1), got {v}");
            }
        }
        let h = &self.horizons;
        for (name, v) in [
            ("curvature", h.curvature),
            ("conjugate", h.conjugate),
            ("distributions", h.distributions),
            ("anosov", h.anosov),
            ("nonpositive", h.nonpositive),
            ("entropy", h.entropy),
            ("riccati", h.riccati),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("horizons.{name} must be positive, got {v}");
            }
        }
        if let Some(c) = self.energy {
            if !c.is_finite() {
                bail!("energy must be finite");
            }
        }
        if let Some(p) = &self.point {
            let n = self.model.dof();
            if p.x.len() != n || p.direction.len() != n {
                bail!("point.x and point.direction need {n} entries for {}", self.model.name());
            }
        }
        if self.sampling.anosov_samples == 0 || self.sampling.entropy_samples == 0 {
            bail!("sample counts must be positive");
        }
        if !(self.sampling.burn_in >= 0.0) {
            bail!("sampling.burn_in must be non-negative");
        }
        if let Some(r) = &self.riccati.curvature {
            let m = r.len();
            if m == 0 || r.iter().any(|row| row.len() != m) {
                bail!("riccati.curvature must be a non-empty square matrix");
            }
        }
        if let Some(s) = self.riccati.step {
            if !(s > 0.0) {
                bail!("riccati.step must be positive");
            }
        }
        if self.output.report.is_empty() || self.output.report.contains(['/', '\\']) {
            bail!("output.report must be a plain file name");
        }
        Ok(())
    }

    /// Canonical JSON of everything that affects results. Output paths are
    /// excluded so the same run written elsewhere hashes the same.
    pub fn canonical(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("config is a table").remove("output");
        serde_json::to_string(&v).expect("value serializes")
    }
}
