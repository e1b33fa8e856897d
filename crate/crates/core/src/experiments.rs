//! Numerical experiments: averaging of ε-solutions, Korn on the torus and
//! ergodic decay. Each returns a [`ReportTable`] whose rows carry the seed, the
//! scale parameter (ε or N/L) and the tolerance used.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cell::{sigma, RveConfig};
use crate::eps::{average_stress, solve_eps, BoundaryData, EpsProblem};
use crate::error::{Error, Result};
use crate::fem::{mesh_simplex_divisions, mesh_torus, Constraint, P1Space};
use crate::mechanics::GLOBAL_TOL;
use crate::media::{CellParams, ProbabilityLaw, Realization};
use crate::path::{validate_grid, StrainPath};
use crate::report::{ReportTable, Value};
use crate::tensor::{Dim, SymTensor};

/// Setup of the averaging experiment on a simplex domain.
#[derive(Clone, Debug)]
pub struct AveragingSpec {
    pub corners: Vec<[f64; 3]>,
    pub law: Arc<ProbabilityLaw>,
    pub epsilons: Vec<f64>,
    pub seeds: Vec<u64>,
    pub xi: StrainPath,
    /// Rate of the additive boundary constant, `a(t) = t·a_rate`.
    pub a_rate: [f64; 3],
    pub times: Vec<f64>,
    pub delta: f64,
    /// Mesh divisions per ε-cell along an edge of the simplex.
    pub resolution: f64,
    /// RVE used for Σ; its δ is overwritten with `delta`.
    pub rve: RveConfig,
    pub tol: f64,
}

#[derive(Clone, Debug)]
pub struct AveragingReport {
    pub table: ReportTable,
    /// `(ε, seed-averaged L²(0,T) discrepancy)` in the order of `spec.epsilons`.
    pub discrepancy: Vec<(f64, f64)>,
    /// Stress averages with `a ≡ 0` and with `a_rate` agreed bitwise (first seed, every ε).
    pub a_invariant: bool,
}

pub const AVERAGING_COLUMNS: [&str; 8] = [
    "epsilon",
    "seed",
    "elements",
    "t",
    "discrepancy",
    "l2_discrepancy",
    "a_invariant",
    "tolerance",
];

fn l2_in_time(times: &[f64], values: &[f64]) -> f64 {
    (1..times.len())
        .map(|m| (times[m] - times[m - 1]) * values[m].powi(2))
        .sum::<f64>()
        .sqrt()
}

/// For each (ε, seed) solves the ε-problem on the simplex with `U = ξ(t)x + a(t)`
/// and `f = 0`, and compares the domain average of σ^ε with Σ(ξ).
pub fn run_averaging_experiment(spec: &AveragingSpec) -> Result<AveragingReport> {
    validate_grid(&spec.times)?;
    if spec.epsilons.is_empty() || spec.seeds.is_empty() {
        return Err(Error::config("averaging needs at least one epsilon and one seed"));
    }
    if !(spec.resolution > 0.0) {
        return Err(Error::config("averaging resolution must be positive"));
    }
    let dim = spec.law.dim();
    let mut rve = spec.rve.clone();
    rve.delta = spec.delta;
    rve.law = spec.law.clone();
    let homogenized = sigma(&rve, &spec.xi, &spec.times)?;

    let jobs: Vec<(usize, usize)> = (0..spec.epsilons.len())
        .flat_map(|e| (0..spec.seeds.len()).map(move |s| (e, s)))
        .collect();
    let runs: Vec<(usize, Vec<f64>, Option<bool>)> = jobs
        .par_iter()
        .map(|&(e, s)| {
            let eps = spec.epsilons[e];
            let seed = spec.seeds[s];
            let ctx = format!("epsilon {eps}, seed {seed}");
            let divisions = (spec.resolution / eps).ceil() as usize;
            let mesh = Arc::new(mesh_simplex_divisions(&spec.corners, dim, divisions)?);
            let omega = Realization::new(spec.law.clone(), seed);
            let solve = |a_rate: [f64; 3]| -> Result<Vec<SymTensor>> {
                let bc = BoundaryData::Affine {
                    xi: spec.xi.clone(),
                    a_rate,
                };
                let problem =
                    EpsProblem::from_realization(mesh.clone(), &omega, eps, spec.delta, spec.times.clone(), bc, None)?
                        .with_tolerance(spec.tol);
                let traj = solve_eps(&problem)?;
                let all: Vec<usize> = (0..mesh.n_elements()).collect();
                average_stress(&traj, &mesh, &all)
            };
            let shifted = solve(spec.a_rate).map_err(|e| e.context(&ctx))?;
            let invariant = if s == 0 {
                let plain = solve([0.0; 3]).map_err(|e| e.context(&ctx))?;
                Some(plain == shifted)
            } else {
                None
            };
            let d = shifted
                .iter()
                .zip(&homogenized.sigma)
                .map(|(a, b)| (*a - *b).norm())
                .collect();
            Ok((mesh.n_elements(), d, invariant))
        })
        .collect::<Result<_>>()?;

    let mut table = ReportTable::new("averaging", &AVERAGING_COLUMNS);
    let mut discrepancy = Vec::new();
    let mut a_invariant = true;
    let steps = spec.times.len();
    for (e, &eps) in spec.epsilons.iter().enumerate() {
        let mut mean_t = vec![0.0; steps];
        let mut mean_l2 = 0.0;
        let mut elements = 0;
        for (s, &seed) in spec.seeds.iter().enumerate() {
            let (n_el, d, inv) = &runs[e * spec.seeds.len() + s];
            elements = *n_el;
            let l2 = l2_in_time(&spec.times, d);
            mean_l2 += l2 / spec.seeds.len() as f64;
            if let Some(ok) = inv {
                a_invariant &= ok;
            }
            let inv_cell = match inv {
                Some(ok) => Value::Text(ok.to_string()),
                None => Value::Text(String::new()),
            };
            for (m, &t) in spec.times.iter().enumerate() {
                mean_t[m] += d[m] / spec.seeds.len() as f64;
                table.push(vec![
                    Value::Float(eps),
                    Value::Seed(seed),
                    Value::from(*n_el),
                    Value::Float(t),
                    Value::Float(d[m]),
                    Value::Float(l2),
                    inv_cell.clone(),
                    Value::Float(spec.tol),
                ])?;
            }
        }
        for (m, &t) in spec.times.iter().enumerate() {
            table.push(vec![
                Value::Float(eps),
                Value::from("mean"),
                Value::from(elements),
                Value::Float(t),
                Value::Float(mean_t[m]),
                Value::Float(mean_l2),
                Value::Text(String::new()),
                Value::Float(spec.tol),
            ])?;
        }
        discrepancy.push((eps, mean_l2));
    }
    Ok(AveragingReport {
        table,
        discrepancy,
        a_invariant,
    })
}

/// Random periodic displacement fields on the torus `[0,N)^d`.
#[derive(Clone, Debug)]
pub struct KornSpec {
    pub dim: Dim,
    pub cells: usize,
    pub refinements: usize,
    pub samples: usize,
    pub seed: u64,
}

pub const KORN_BOUND: f64 = 2.0;
pub const KORN_TOL: f64 = 1e-10;
pub const KORN_COLUMNS: [&str; 6] = ["sample", "seed", "N", "ratio", "bound", "tolerance"];

#[derive(Clone, Debug)]
pub struct KornReport {
    pub table: ReportTable,
    pub max_ratio: f64,
    pub skipped: usize,
}

/// `‖f‖/‖fˢ‖` for `f = ∇φ` minus its mean, or `None` when `fˢ` vanishes.
pub fn korn_ratio(space: &P1Space, full: &[f64]) -> Option<f64> {
    let mesh = space.mesh();
    let n = space.dim().n();
    let grads: Vec<[[f64; 3]; 3]> = (0..mesh.n_elements()).map(|k| space.element_gradient(full, k)).collect();
    let total = mesh.total_volume();
    let mut mean = [[0.0; 3]; 3];
    for (k, g) in grads.iter().enumerate() {
        let w = mesh.geometry(k).volume / total;
        for i in 0..n {
            for j in 0..n {
                mean[i][j] += w * g[i][j];
            }
        }
    }
    let (mut full_sq, mut sym_sq) = (0.0, 0.0);
    for (k, g) in grads.iter().enumerate() {
        let vol = mesh.geometry(k).volume;
        for i in 0..n {
            for j in 0..n {
                let f = g[i][j] - mean[i][j];
                let ft = g[j][i] - mean[j][i];
                full_sq += vol * f * f;
                sym_sq += vol * (0.5 * (f + ft)).powi(2);
            }
        }
    }
    let scale = full_sq.max(f64::MIN_POSITIVE);
    if sym_sq <= 1e-28 * scale || sym_sq == 0.0 {
        return None;
    }
    Some((full_sq / sym_sq).sqrt())
}

pub fn run_korn_check(spec: &KornSpec) -> Result<KornReport> {
    if spec.samples == 0 {
        return Err(Error::config("korn check needs at least one sample"));
    }
    let mesh = Arc::new(mesh_torus(spec.dim, spec.cells, spec.refinements)?);
    let space = P1Space::new(mesh, Constraint::Periodic)?;
    let ratios: Vec<Option<f64>> = (0..spec.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(i as u64));
            let free: Vec<f64> = (0..space.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
            korn_ratio(&space, &space.expand(&free, &vec![0.0; space.n_full()]))
        })
        .collect();
    let mut table = ReportTable::new("korn", &KORN_COLUMNS);
    let mut max_ratio: f64 = 0.0;
    let mut skipped = 0;
    for (i, r) in ratios.iter().enumerate() {
        let cell = match r {
            Some(r) => {
                max_ratio = max_ratio.max(*r);
                Value::Float(*r)
            }
            None => {
                skipped += 1;
                Value::from("skipped")
            }
        };
        table.push(vec![
            Value::from(i),
            Value::Seed(spec.seed.wrapping_add(i as u64)),
            Value::from(spec.cells),
            cell,
            Value::Float(KORN_BOUND),
            Value::Float(KORN_TOL),
        ])?;
    }
    Ok(KornReport {
        table,
        max_ratio,
        skipped,
    })
}

/// Scalar statistic of the cell parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Statistic {
    Young,
    Poisson,
    YieldStress,
    Hardening,
}

impl Statistic {
    pub fn eval(self, p: &CellParams) -> f64 {
        match self {
            Statistic::Young => p.young,
            Statistic::Poisson => p.poisson,
            Statistic::YieldStress => p.yield_stress,
            Statistic::Hardening => p.hardening,
        }
    }

    pub fn expectation(self, law: &ProbabilityLaw) -> f64 {
        let s = law.spec();
        match self {
            Statistic::Young => s.young.mean(),
            Statistic::Poisson => s.nu.mean(),
            Statistic::YieldStress => s.sigma_y.mean(),
            Statistic::Hardening => s.hardening.mean(),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "E" | "young" => Ok(Statistic::Young),
            "nu" | "poisson" => Ok(Statistic::Poisson),
            "sigma_y" | "yield" => Ok(Statistic::YieldStress),
            "H" | "hardening" => Ok(Statistic::Hardening),
            other => Err(Error::config(format!("unknown statistic {other:?}"))),
        }
    }
}

/// Spatial averages over boxes of side `L` (in cell units) against the expectation.
#[derive(Clone, Debug)]
pub struct ErgodicSpec {
    pub law: Arc<ProbabilityLaw>,
    pub sizes: Vec<f64>,
    pub seeds: usize,
    pub base_seed: u64,
    pub statistic: Statistic,
}

pub const ERGODIC_COLUMNS: [&str; 7] = ["L", "seed", "average", "expectation", "error", "exponent", "tolerance"];

#[derive(Clone, Debug)]
pub struct ErgodicReport {
    pub table: ReportTable,
    /// `(L, RMS error over seeds)`.
    pub rms: Vec<(f64, f64)>,
    /// Least-squares slope of `log rms` against `log L` (NaN if any RMS vanishes).
    pub exponent: f64,
}

fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn run_ergodic_check(spec: &ErgodicSpec) -> Result<ErgodicReport> {
    if spec.sizes.len() < 2 || spec.seeds == 0 {
        return Err(Error::config("ergodic check needs two box sizes and at least one seed"));
    }
    if spec.sizes.iter().any(|&l| !(l >= 2.0)) {
        return Err(Error::config("ergodic box sizes must be at least 2"));
    }
    let expectation = spec.statistic.expectation(&spec.law);
    let averages: Vec<Vec<f64>> = spec
        .sizes
        .par_iter()
        .map(|&l| {
            (0..spec.seeds)
                .map(|s| {
                    let omega = Realization::new(spec.law.clone(), spec.base_seed.wrapping_add(s as u64));
                    omega.ergodic_average(|p| spec.statistic.eval(p), l / 2.0)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let rms: Vec<(f64, f64)> = spec
        .sizes
        .iter()
        .zip(&averages)
        .map(|(&l, a)| {
            let ms = a.iter().map(|v| (v - expectation).powi(2)).sum::<f64>() / a.len() as f64;
            (l, ms.sqrt())
        })
        .collect();
    let exponent = if rms.iter().all(|&(_, r)| r > 0.0) { fit_slope(&rms) } else { f64::NAN };
    let mut table = ReportTable::new("ergodic", &ERGODIC_COLUMNS);
    for ((&l, a), &(_, r)) in spec.sizes.iter().zip(&averages).zip(&rms) {
        for (s, v) in a.iter().enumerate() {
            table.push(vec![
                Value::Float(l),
                Value::Seed(spec.base_seed.wrapping_add(s as u64)),
                Value::Float(*v),
                Value::Float(expectation),
                Value::Float(v - expectation),
                Value::Text(String::new()),
                Value::Float(0.5),
            ])?;
        }
        table.push(vec![
            Value::Float(l),
            Value::from("rms"),
            Value::Text(String::new()),
            Value::Float(expectation),
            Value::Float(r),
            Value::Float(exponent),
            Value::Float(0.5),
        ])?;
    }
    Ok(ErgodicReport { table, rms, exponent })
}

/// Default relative equilibrium tolerance of the averaging runs.
pub const AVERAGING_TOL: f64 = GLOBAL_TOL;
