//! JSON run configuration shared by the command-line subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cell::RveConfig;
use crate::effective::{MacroConfig, MACRO_TOL};
use crate::eps::{BoundaryData, EpsProblem, TimeField};
use crate::error::{Error, Result};
use crate::experiments::{AveragingSpec, ErgodicSpec, KornSpec, Statistic, AVERAGING_TOL};
use crate::fem::{mesh_box, mesh_simplex, SimplicialMesh};
use crate::media::{LawSpec, ProbabilityLaw, Realization};
use crate::path::{uniform_grid, StrainPath};
use crate::tensor::Dim;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    /// Corners of a d-simplex.
    Simplex(Vec<Vec<f64>>),
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    /// Maximal element diameter.
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(rename = "T")]
    pub t_end: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RveSpec {
    #[serde(rename = "N")]
    pub cells: usize,
    pub r: usize,
    #[serde(rename = "M")]
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcSpec {
    /// CSV file with rows `t, ξ (Mandel)`, relative to the config file.
    pub xi: PathBuf,
    /// Rate of the additive constant, `a(t) = t·a`.
    #[serde(default)]
    pub a: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroSpec {
    #[serde(default = "default_macro_tol")]
    pub tol: f64,
    pub wall_clock_s: Option<f64>,
    pub max_elements: Option<usize>,
}

fn default_macro_tol() -> f64 {
    MACRO_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AverageSpec {
    pub epsilons: Vec<f64>,
    pub seeds: usize,
    /// Mesh divisions per ε-cell.
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default = "default_averaging_tol")]
    pub tol: f64,
}

fn default_resolution() -> f64 {
    4.0
}

fn default_averaging_tol() -> f64 {
    AVERAGING_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KornBlock {
    #[serde(rename = "N")]
    pub cells: usize,
    #[serde(default = "one")]
    pub r: usize,
    pub samples: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicBlock {
    pub sizes: Vec<f64>,
    pub seeds: usize,
    #[serde(default = "default_statistic")]
    pub statistic: String,
}

fn default_statistic() -> String {
    "E".into()
}

/// One run configuration (see the README for the schema).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    pub domain: Domain,
    pub mesh: MeshSpec,
    pub epsilon: f64,
    pub delta: f64,
    pub time: TimeSpec,
    pub law: LawSpec,
    pub rve: RveSpec,
    pub bc: BcSpec,
    /// Constant load rate, `f(t, x) = t·load`.
    #[serde(default)]
    pub load: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "macro")]
    pub macro_opts: Option<MacroSpec>,
    pub average: Option<AverageSpec>,
    pub korn: Option<KornBlock>,
    pub ergodic: Option<ErgodicBlock>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn point(dim: Dim, v: &[f64], what: &str) -> Result<[f64; 3]> {
    if v.len() != dim.n() || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::config(format!("{what} needs {} finite coordinates", dim.n())));
    }
    let mut p = [0.0; 3];
    p[..v.len()].copy_from_slice(v);
    Ok(p)
}

fn optional_vector(dim: Dim, v: &[f64], what: &str) -> Result<[f64; 3]> {
    if v.is_empty() {
        Ok([0.0; 3])
    } else {
        point(dim, v, what)
    }
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base).map_err(|e| e.context(&path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dimension()?;
        if !(self.mesh.h > 0.0) {
            return Err(Error::config("mesh.h must be positive"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be positive"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::config("delta must be positive"));
        }
        uniform_grid(self.time.t_end, self.time.steps)?;
        optional_vector(dim, &self.bc.a, "bc.a")?;
        optional_vector(dim, &self.load, "load")?;
        self.rve_config()?.validate()?;
        Ok(())
    }

    pub fn dimension(&self) -> Result<Dim> {
        Dim::new(self.dim)
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        uniform_grid(self.time.t_end, self.time.steps)
    }

    pub fn law(&self) -> Result<Arc<ProbabilityLaw>> {
        Ok(Arc::new(ProbabilityLaw::new(self.law.clone(), self.dimension()?)?))
    }

    pub fn corners(&self) -> Result<Vec<[f64; 3]>> {
        let dim = self.dimension()?;
        match &self.domain {
            Domain::Simplex(c) => c.iter().map(|p| point(dim, p, "domain corner")).collect(),
            Domain::Box { .. } => Err(Error::config("this experiment needs a simplex domain")),
        }
    }

    pub fn mesh(&self) -> Result<Arc<SimplicialMesh>> {
        let dim = self.dimension()?;
        let mesh = match &self.domain {
            Domain::Simplex(_) => mesh_simplex(&self.corners()?, dim, self.mesh.h)?,
            Domain::Box { lower, upper } => {
                let (lo, hi) = (point(dim, lower, "domain.box.lower")?, point(dim, upper, "domain.box.upper")?);
                let mut div = [1usize; 3];
                let grid = self.mesh.h / (dim.n() as f64).sqrt();
                for i in 0..dim.n() {
                    if !(hi[i] > lo[i]) {
                        return Err(Error::config("domain.box needs lower < upper"));
                    }
                    div[i] = ((hi[i] - lo[i]) / grid).ceil() as usize;
                }
                mesh_box(dim, lo, hi, div)?
            }
        };
        Ok(Arc::new(mesh))
    }

    pub fn xi(&self) -> Result<StrainPath> {
        StrainPath::read_csv(&self.base_dir.join(&self.bc.xi), self.dimension()?)
    }

    pub fn boundary(&self) -> Result<BoundaryData> {
        Ok(BoundaryData::Affine {
            xi: self.xi()?,
            a_rate: optional_vector(self.dimension()?, &self.bc.a, "bc.a")?,
        })
    }

    pub fn load_field(&self) -> Result<Option<TimeField>> {
        let rate = optional_vector(self.dimension()?, &self.load, "load")?;
        if rate == [0.0; 3] {
            return Ok(None);
        }
        Ok(Some(Arc::new(move |t, _x| [t * rate[0], t * rate[1], t * rate[2]])))
    }

    pub fn rve_config(&self) -> Result<RveConfig> {
        Ok(RveConfig {
            cells: self.rve.cells,
            refinements: self.rve.r,
            samples: self.rve.samples,
            delta: self.delta,
            law: self.law()?,
            base_seed: self.seed,
        })
    }

    pub fn eps_problem(&self) -> Result<EpsProblem> {
        let omega = Realization::new(self.law()?, self.seed);
        EpsProblem::from_realization(
            self.mesh()?,
            &omega,
            self.epsilon,
            self.delta,
            self.times()?,
            self.boundary()?,
            self.load_field()?,
        )
    }

    pub fn macro_config(&self) -> Result<MacroConfig> {
        let mut cfg = MacroConfig::new(self.mesh()?, self.rve_config()?, self.boundary()?, self.times()?);
        cfg.load = self.load_field()?;
        if let Some(m) = &self.macro_opts {
            cfg.tol = m.tol;
            cfg.wall_clock = m.wall_clock_s.map(Duration::from_secs_f64);
            cfg.max_elements = m.max_elements;
        }
        Ok(cfg)
    }

    pub fn averaging_spec(&self) -> Result<AveragingSpec> {
        let avg = self
            .average
            .as_ref()
            .ok_or_else(|| Error::config("the average block is missing"))?;
        Ok(AveragingSpec {
            corners: self.corners()?,
            law: self.law()?,
            epsilons: avg.epsilons.clone(),
            seeds: (0..avg.seeds as u64).map(|s| self.seed.wrapping_add(s)).collect(),
            xi: self.xi()?,
            a_rate: optional_vector(self.dimension()?, &self.bc.a, "bc.a")?,
            times: self.times()?,
            delta: self.delta,
            resolution: avg.resolution,
            rve: self.rve_config()?,
            tol: avg.tol,
        })
    }

    pub fn korn_spec(&self) -> Result<KornSpec> {
        let k = self.korn.as_ref().ok_or_else(|| Error::config("the korn block is missing"))?;
        Ok(KornSpec {
            dim: self.dimension()?,
            cells: k.cells,
            refinements: k.r,
            samples: k.samples,
            seed: self.seed,
        })
    }

    pub fn ergodic_spec(&self) -> Result<ErgodicSpec> {
        let e = self
            .ergodic
            .as_ref()
            .ok_or_else(|| Error::config("the ergodic block is missing"))?;
        Ok(ErgodicSpec {
            law: self.law()?,
            sizes: e.sizes.clone(),
            seeds: e.seeds,
            base_seed: self.seed,
            statistic: Statistic::parse(&e.statistic)?,
        })
    }
}
