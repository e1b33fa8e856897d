//! The stochastic cell problem on periodized random volumes and the effective
//! hysteretic stress operator Σ (with the plastic operator Π).

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{dot, mesh_torus, Constraint, P1Space, SimplicialMesh};
use crate::mechanics::{ElementLaw, EquilibriumStep};
use crate::media::{ProbabilityLaw, Realization, TorusRealization};
use crate::path::{discrete_h1_norm, validate_grid, StrainPath};
use crate::tensor::{Dim, SymTensor};

/// Relative equilibrium tolerance of the corrector Newton iteration. Tighter than
/// the ε-problem so the per-test-function solenoidality bound holds with margin.
pub const CELL_TOL: f64 = 1e-10;

/// Settings of the RVE/Monte-Carlo approximation of the probability space.
#[derive(Clone, Debug)]
pub struct RveConfig {
    /// Cells per side `N`.
    pub cells: usize,
    /// Mesh subdivisions per cell `r`.
    pub refinements: usize,
    /// Monte-Carlo sample count `M`.
    pub samples: usize,
    pub delta: f64,
    pub law: Arc<ProbabilityLaw>,
    pub base_seed: u64,
}

impl RveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 || self.refinements == 0 || self.samples == 0 {
            return Err(Error::config("RVE needs N >= 1, r >= 1 and M >= 1"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::config("regularization delta must be positive"));
        }
        Ok(())
    }

    pub fn sample_seed(&self, i: usize) -> u64 {
        self.base_seed.wrapping_add(i as u64)
    }
}

/// A torus mesh with one material law per element.
#[derive(Clone, Debug)]
pub struct CellMedium {
    space: P1Space,
    laws: Vec<ElementLaw>,
    volume: f64,
}

impl CellMedium {
    pub fn new(mesh: Arc<SimplicialMesh>, laws: Vec<ElementLaw>) -> Result<Self> {
        if laws.len() != mesh.n_elements() {
            return Err(Error::config("one material law per cell element is required"));
        }
        let space = P1Space::new(mesh, Constraint::Periodic)?;
        let volume = space.mesh().total_volume();
        Ok(CellMedium { space, laws, volume })
    }

    /// Periodized realization on `[0,N)^d` with `r` subdivisions per cell.
    pub fn from_torus(torus: &TorusRealization, refinements: usize, delta: f64) -> Result<Self> {
        let law = torus.base.law();
        let mesh = Arc::new(mesh_torus(law.dim(), torus.cells_per_side, refinements)?);
        let laws = mesh
            .geometries()
            .iter()
            .map(|g| ElementLaw::new(torus.params_at(&g.barycenter).material(law.dim())?, law.flow(), delta))
            .collect::<Result<_>>()?;
        Self::new(mesh, laws)
    }

    /// Medium of Monte-Carlo sample `i` of `cfg`.
    pub fn sample(cfg: &RveConfig, i: usize) -> Result<Self> {
        let omega = Realization::new(cfg.law.clone(), cfg.sample_seed(i));
        Self::from_torus(&TorusRealization::new(omega, cfg.cells)?, cfg.refinements, cfg.delta)
    }

    pub fn space(&self) -> &P1Space {
        &self.space
    }

    pub fn mesh(&self) -> &SimplicialMesh {
        self.space.mesh()
    }

    pub fn laws(&self) -> &[ElementLaw] {
        &self.laws
    }

    pub fn dim(&self) -> Dim {
        self.space.dim()
    }

    /// Volume average over the torus.
    pub fn mean(&self, field: &[SymTensor]) -> SymTensor {
        let mut acc = SymTensor::zero(self.dim());
        for (k, f) in field.iter().enumerate() {
            acc += f.scale(self.mesh().geometry(k).volume);
        }
        acc.scale(1.0 / self.volume)
    }

    /// Volume-normalized L² norm (the discrete stand-in for `L²(Ω)`).
    pub fn rms(&self, field: &[SymTensor]) -> f64 {
        let s: f64 = field
            .iter()
            .enumerate()
            .map(|(k, f)| self.mesh().geometry(k).volume * f.inner(f))
            .sum();
        (s / self.volume).sqrt()
    }

    fn rms_matrix(&self, field: &[[[f64; 3]; 3]]) -> f64 {
        let s: f64 = field
            .iter()
            .enumerate()
            .map(|(k, f)| self.mesh().geometry(k).volume * f.iter().flatten().map(|x| x * x).sum::<f64>())
            .sum();
        (s / self.volume).sqrt()
    }
}

/// State of a cell problem at one instant; cheap to snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub time: f64,
    pub xi: SymTensor,
    /// Corrector unknowns (periodic, mean fixed).
    pub corrector: Vec<f64>,
    pub p: Vec<SymTensor>,
    pub z: Vec<SymTensor>,
}

impl CellState {
    pub fn initial(medium: &CellMedium) -> Self {
        let zero = SymTensor::zero(medium.dim());
        let ne = medium.mesh().n_elements();
        CellState {
            time: 0.0,
            xi: zero,
            corrector: vec![0.0; medium.space.n_dofs()],
            p: vec![zero; ne],
            z: vec![zero; ne],
        }
    }
}

/// Diagnostics of one corrector step.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepInfo {
    pub newton_iterations: usize,
    pub relative_residual: f64,
}

/// Backward-Euler step of the cell problem from `state` to time `t` with
/// macroscopic strain `xi`.
pub fn advance_cell(medium: &CellMedium, state: &CellState, t: f64, xi: SymTensor) -> Result<(CellState, StepInfo)> {
    let dt = t - state.time;
    if !(dt > 0.0) {
        return Err(Error::input("cell time steps must advance"));
    }
    let space = &medium.space;
    let fixed = vec![0.0; space.n_full()];
    let load = vec![0.0; space.n_dofs()];
    let step = EquilibriumStep {
        space,
        laws: &medium.laws,
        dt,
        p_old: &state.p,
        offset: Some(xi),
        fixed: &fixed,
        load: &load,
        tol: CELL_TOL,
    };
    let out = step.solve(state.corrector.clone())?;
    let next = CellState {
        time: t,
        xi,
        corrector: out.free,
        p: out.updates.iter().map(|u| u.p).collect(),
        z: out.updates.iter().map(|u| u.sigma).collect(),
    };
    Ok((
        next,
        StepInfo {
            newton_iterations: out.newton_iterations,
            relative_residual: out.relative_residual,
        },
    ))
}

/// Per-step fields of a cell problem. Index 0 is the initial state.
#[derive(Clone, Debug)]
pub struct CellTrajectory {
    pub times: Vec<f64>,
    pub xi: Vec<SymTensor>,
    pub p: Vec<Vec<SymTensor>>,
    pub z: Vec<Vec<SymTensor>>,
    /// Full gradient of the corrector per element.
    pub v: Vec<Vec<[[f64; 3]; 3]>>,
    /// Corrector as a full nodal vector.
    pub phi: Vec<Vec<f64>>,
    pub steps: Vec<StepInfo>,
}

/// Solves the cell problem along `xi` on `times`.
pub fn solve_cell(medium: &CellMedium, xi: &StrainPath, times: &[f64]) -> Result<CellTrajectory> {
    validate_grid(times)?;
    if xi.dim() != medium.dim() {
        return Err(Error::config("strain path and medium dimensions differ"));
    }
    let space = &medium.space;
    let ne = medium.mesh().n_elements();
    let mut state = CellState::initial(medium);
    let zero_grad = vec![[[0.0; 3]; 3]; ne];
    let mut traj = CellTrajectory {
        times: times.to_vec(),
        xi: vec![state.xi],
        p: vec![state.p.clone()],
        z: vec![state.z.clone()],
        v: vec![zero_grad],
        phi: vec![vec![0.0; space.n_full()]],
        steps: vec![StepInfo::default()],
    };
    let fixed = vec![0.0; space.n_full()];
    for (m, &t) in times.iter().enumerate().skip(1) {
        let (next, info) = advance_cell(medium, &state, t, xi.at(t)).map_err(|e| e.at_step(m))?;
        state = next;
        let phi = space.expand(&state.corrector, &fixed);
        traj.v.push((0..ne).map(|k| space.element_gradient(&phi, k)).collect());
        traj.phi.push(phi);
        traj.xi.push(state.xi);
        traj.p.push(state.p.clone());
        traj.z.push(state.z.clone());
        traj.steps.push(info);
    }
    Ok(traj)
}

/// Worst defects of the cell-problem invariants over all steps.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CellInvariants {
    /// `|Cz − ξ − vˢ + p| / (|Cz| + |ξ| + |vˢ| + |p|)` per element.
    pub closure: f64,
    /// `|∫ z : ∇ψ| / (‖z‖ ‖∇ψ‖)` over every periodic P1 basis function ψ.
    pub solenoidality: f64,
    /// `|⟨v⟩|`, the mean corrector gradient.
    pub mean_gradient: f64,
    /// `max |z(0)|`.
    pub initial_stress: f64,
    /// `|⟨z, Δv⟩| / (‖z‖ ‖Δv‖)`.
    pub orthogonality: f64,
}

impl CellTrajectory {
    pub fn mean_stress(&self, medium: &CellMedium) -> Vec<SymTensor> {
        self.z.iter().map(|z| medium.mean(z)).collect()
    }

    pub fn mean_plastic_strain(&self, medium: &CellMedium) -> Vec<SymTensor> {
        self.p.iter().map(|p| medium.mean(p)).collect()
    }

    /// `(‖p‖ + ‖z‖ + ‖v‖) / ‖ξ‖`, all in discrete `H¹(0,T; L²)` with volume-normalized
    /// spatial norms.
    pub fn bound_ratio(&self, medium: &CellMedium) -> f64 {
        let n = self.times.len();
        let sym_norm = |f: &Vec<Vec<SymTensor>>| {
            let vals: Vec<f64> = f.iter().map(|x| medium.rms(x)).collect();
            let incs: Vec<f64> = (0..n)
                .map(|m| {
                    if m == 0 {
                        0.0
                    } else {
                        let d: Vec<SymTensor> = f[m].iter().zip(&f[m - 1]).map(|(a, b)| *a - *b).collect();
                        medium.rms(&d)
                    }
                })
                .collect();
            discrete_h1_norm(&self.times, &vals, &incs)
        };
        let v_vals: Vec<f64> = self.v.iter().map(|x| medium.rms_matrix(x)).collect();
        let v_incs: Vec<f64> = (0..n)
            .map(|m| {
                if m == 0 {
                    return 0.0;
                }
                let d: Vec<[[f64; 3]; 3]> = self.v[m]
                    .iter()
                    .zip(&self.v[m - 1])
                    .map(|(a, b)| {
                        let mut c = [[0.0; 3]; 3];
                        for i in 0..3 {
                            for j in 0..3 {
                                c[i][j] = a[i][j] - b[i][j];
                            }
                        }
                        c
                    })
                    .collect();
                medium.rms_matrix(&d)
            })
            .collect();
        let xi_vals: Vec<f64> = self.xi.iter().map(|x| x.norm()).collect();
        let xi_incs: Vec<f64> = (0..n).map(|m| if m == 0 { 0.0 } else { (self.xi[m] - self.xi[m - 1]).norm() }).collect();
        let xi_norm = discrete_h1_norm(&self.times, &xi_vals, &xi_incs);
        let total = sym_norm(&self.p) + sym_norm(&self.z) + discrete_h1_norm(&self.times, &v_vals, &v_incs);
        if xi_norm > 0.0 {
            total / xi_norm
        } else {
            0.0
        }
    }

    /// Evaluates every invariant on every step.
    pub fn invariants(&self, medium: &CellMedium) -> CellInvariants {
        let space = &medium.space;
        let mesh = medium.mesh();
        let dim = medium.dim();
        let d = dim.n();
        let ne = mesh.n_elements();
        // ‖∇ψ‖² of every basis function, accumulated on its master vertex
        let mut basis_sq = vec![0.0; space.n_dofs()];
        for k in 0..ne {
            let g = mesh.geometry(k);
            for (a, &v) in mesh.simplex(k).iter().enumerate() {
                let s: f64 = (0..d).map(|j| g.grads[a][j].powi(2)).sum();
                for i in 0..d {
                    if let Some(dof) = space.dof(v, i) {
                        basis_sq[dof] += g.volume * s;
                    }
                }
            }
        }
        let l2 = |f: &[SymTensor]| medium.rms(f) * medium.volume.sqrt();
        let mut inv = CellInvariants {
            initial_stress: self.z[0].iter().map(|z| z.norm()).fold(0.0, f64::max),
            ..Default::default()
        };
        for m in 1..self.times.len() {
            let vs: Vec<SymTensor> = self.v[m].iter().map(|g| SymTensor::sym_of(dim, g)).collect();
            for k in 0..ne {
                let law = &medium.laws[k].material;
                let cz = law.compliance.apply(&self.z[m][k]);
                let defect = cz - self.xi[m] - vs[k] + self.p[m][k];
                let scale = cz.norm() + self.xi[m].norm() + vs[k].norm() + self.p[m][k].norm();
                if scale > 0.0 {
                    inv.closure = inv.closure.max(defect.norm() / scale);
                }
            }
            let zn = l2(&self.z[m]);
            if zn > 0.0 {
                let forces = space.restrict_forces(&space.internal_forces(&self.z[m]));
                for (f, b) in forces.iter().zip(&basis_sq) {
                    inv.solenoidality = inv.solenoidality.max(f.abs() / (zn * b.sqrt()));
                }
            }
            let mut mean = [[0.0; 3]; 3];
            for (k, g) in self.v[m].iter().enumerate() {
                let vol = mesh.geometry(k).volume / medium.volume;
                for i in 0..3 {
                    for j in 0..3 {
                        mean[i][j] += vol * g[i][j];
                    }
                }
            }
            let mn = mean.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
            inv.mean_gradient = inv.mean_gradient.max(mn);
            // ⟨z, Δv⟩ = ⟨z, Δvˢ⟩ since z is symmetric
            let dvs: Vec<SymTensor> = self.v[m]
                .iter()
                .zip(&self.v[m - 1])
                .map(|(a, b)| {
                    let mut c = [[0.0; 3]; 3];
                    for i in 0..3 {
                        for j in 0..3 {
                            c[i][j] = a[i][j] - b[i][j];
                        }
                    }
                    SymTensor::sym_of(dim, &c)
                })
                .collect();
            let pairing: f64 = (0..ne).map(|k| mesh.geometry(k).volume * self.z[m][k].inner(&dvs[k])).sum();
            let dv_full: f64 = (0..ne)
                .map(|k| {
                    let g = &self.v[m][k];
                    let h = &self.v[m - 1][k];
                    let s: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (g[i][j] - h[i][j]).powi(2))).sum();
                    mesh.geometry(k).volume * s
                })
                .sum::<f64>()
                .sqrt();
            if zn > 0.0 && dv_full > 0.0 {
                inv.orthogonality = inv.orthogonality.max(pairing.abs() / (zn * dv_full));
            }
        }
        inv
    }
}

/// Monte-Carlo estimate of Σ(ξ) and Π(ξ).
#[derive(Clone, Debug)]
pub struct SigmaResult {
    pub times: Vec<f64>,
    pub sigma: Vec<SymTensor>,
    pub pi: Vec<SymTensor>,
    /// Component-wise standard error of the sample mean of Σ (zero when `M = 1`).
    pub mc_stderr: Vec<SymTensor>,
    pub pi_stderr: Vec<SymTensor>,
    pub config: RveConfig,
    /// Per-sample volume averages of z, in seed order.
    pub sample_sigma: Vec<Vec<SymTensor>>,
}

fn mean_and_stderr(samples: &[Vec<SymTensor>], dim: Dim) -> (Vec<SymTensor>, Vec<SymTensor>) {
    let m = samples.len();
    let steps = samples[0].len();
    let mut mean = vec![SymTensor::zero(dim); steps];
    for s in samples {
        for (acc, v) in mean.iter_mut().zip(s) {
            *acc += *v;
        }
    }
    mean.iter_mut().for_each(|v| *v = v.scale(1.0 / m as f64));
    let mut err = vec![SymTensor::zero(dim); steps];
    if m > 1 {
        for (t, e) in err.iter_mut().enumerate() {
            let comps = e.mandel_mut();
            for c in 0..dim.k() {
                let var: f64 = samples
                    .iter()
                    .map(|s| (s[t].mandel()[c] - mean[t].mandel()[c]).powi(2))
                    .sum::<f64>()
                    / (m - 1) as f64;
                comps[c] = (var / m as f64).sqrt();
            }
        }
    }
    (mean, err)
}

/// Σ(ξ)(t) and Π(ξ)(t) as means over `M` periodized samples of the volume averages
/// of z and p. Samples run in parallel; the reduction is in seed order.
pub fn sigma(cfg: &RveConfig, xi: &StrainPath, times: &[f64]) -> Result<SigmaResult> {
    cfg.validate()?;
    validate_grid(times)?;
    let per_sample: Vec<(Vec<SymTensor>, Vec<SymTensor>)> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let ctx = format!("sample seed {}", cfg.sample_seed(i));
            let medium = CellMedium::sample(cfg, i).map_err(|e| e.context(&ctx))?;
            let traj = solve_cell(&medium, xi, times).map_err(|e| e.context(&ctx))?;
            Ok((traj.mean_stress(&medium), traj.mean_plastic_strain(&medium)))
        })
        .collect::<Result<_>>()?;
    let dim = cfg.law.dim();
    let (zs, ps): (Vec<_>, Vec<_>) = per_sample.into_iter().unzip();
    let (sigma, mc_stderr) = mean_and_stderr(&zs, dim);
    let (pi, pi_stderr) = mean_and_stderr(&ps, dim);
    Ok(SigmaResult {
        times: times.to_vec(),
        sigma,
        pi,
        mc_stderr,
        pi_stderr,
        config: cfg.clone(),
        sample_sigma: zs,
    })
}

/// `max_{t ≤ t*} |Σ(ξ₁)(t) − Σ(ξ₂)(t)|`.
pub fn causality_check(cfg: &RveConfig, xi1: &StrainPath, xi2: &StrainPath, times: &[f64], t_star: f64) -> Result<f64> {
    let a = sigma(cfg, xi1, times)?;
    let b = sigma(cfg, xi2, times)?;
    Ok(times
        .iter()
        .enumerate()
        .filter(|(_, &t)| t <= t_star)
        .map(|(m, _)| (a.sigma[m] - b.sigma[m]).norm())
        .fold(0.0, f64::max))
}

fn l2_time(times: &[f64], a: &[SymTensor], b: &[SymTensor]) -> f64 {
    (1..times.len())
        .map(|m| (times[m] - times[m - 1]) * (a[m] - b[m]).norm().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `‖Σ(ξ + ηζ) − Σ(ξ)‖_{L²(0,T)}` with ζ normalized to unit discrete H¹ norm.
pub fn continuity_probe(cfg: &RveConfig, xi: &StrainPath, zeta: &StrainPath, eta: f64, times: &[f64]) -> Result<f64> {
    if eta == 0.0 {
        return Ok(0.0);
    }
    let zn = zeta.h1_norm(times);
    if zn == 0.0 {
        return Err(Error::input("perturbation path must be nonzero"));
    }
    let perturbed = xi.plus(&zeta.scale(eta / zn))?;
    let a = sigma(cfg, xi, times)?;
    let b = sigma(cfg, &perturbed, times)?;
    Ok(l2_time(times, &a.sigma, &b.sigma))
}

/// `⟨z, Δv⟩` summed over the torus; exposed for diagnostics.
pub fn corrector_power(medium: &CellMedium, z: &[SymTensor], phi_increment: &[f64]) -> f64 {
    let space = &medium.space;
    let forces = space.internal_forces(z);
    dot(&forces, phi_increment)
}
