//! FE² solver for the effective problem `−div Σ(∇ˢu) = f`: every macro element
//! carries its own cell states, advanced with the element strain.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::cell::{advance_cell, CellMedium, CellState, RveConfig};
use crate::eps::{BoundaryData, TimeField};
use crate::error::{Error, Result};
use crate::fem::{norm, pcg, Constraint, P1Space, SimplicialMesh, CG_MAX_ITER, CG_TOL};
use crate::path::validate_grid;
use crate::tensor::{FourthOrderMap, SymTensor};

/// Default relative residual of the macro Newton iteration.
pub const MACRO_TOL: f64 = 1e-6;
const MAX_MACRO_NEWTON: usize = 50;
const MAX_HALVINGS: usize = 12;

/// Data of the effective problem.
#[derive(Clone)]
pub struct MacroConfig {
    pub mesh: Arc<SimplicialMesh>,
    pub rve: RveConfig,
    pub dirichlet: BoundaryData,
    pub load: Option<TimeField>,
    pub times: Vec<f64>,
    pub tol: f64,
    /// Abort with an error once this much wall-clock time has elapsed.
    pub wall_clock: Option<Duration>,
    pub max_elements: Option<usize>,
}

impl MacroConfig {
    pub fn new(mesh: Arc<SimplicialMesh>, rve: RveConfig, dirichlet: BoundaryData, times: Vec<f64>) -> Self {
        MacroConfig {
            mesh,
            rve,
            dirichlet,
            load: None,
            times,
            tol: MACRO_TOL,
            wall_clock: None,
            max_elements: None,
        }
    }
}

/// Per-step FE² solution. Index 0 is the initial state.
#[derive(Clone, Debug)]
pub struct EffectiveSolution {
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    /// Effective stress Σ per macro element and step.
    pub sigma: Vec<Vec<SymTensor>>,
    /// Effective plastic strain Π per macro element and step.
    pub pi: Vec<Vec<SymTensor>>,
    pub newton_iterations: Vec<usize>,
    pub residuals: Vec<f64>,
    /// Final cell states of every macro element (one per Monte-Carlo sample).
    pub cell_states: Vec<Vec<CellState>>,
}

struct Response {
    states: Vec<CellState>,
    sigma: SymTensor,
    pi: SymTensor,
}

fn element_response(media: &[CellMedium], states: &[CellState], t: f64, xi: SymTensor) -> Result<Response> {
    let mut next = Vec::with_capacity(states.len());
    let mut sigma = SymTensor::zero(xi.dim());
    let mut pi = SymTensor::zero(xi.dim());
    for (medium, s) in media.iter().zip(states) {
        let (n, _) = advance_cell(medium, s, t, xi)?;
        sigma += medium.mean(&n.z);
        pi += medium.mean(&n.p);
        next.push(n);
    }
    let w = 1.0 / media.len() as f64;
    Ok(Response {
        states: next,
        sigma: sigma.scale(w),
        pi: pi.scale(w),
    })
}

/// Forward-difference tangent of the Σ-increment, symmetrized. The committed
/// states are only read, so probes have no side effects.
fn element_tangent(media: &[CellMedium], states: &[CellState], t: f64, xi: SymTensor, base: &SymTensor) -> Result<FourthOrderMap> {
    let dim = xi.dim();
    let h = 1e-6 * xi.norm() + 1e-10;
    let mut tangent = FourthOrderMap::zero(dim);
    for j in 0..dim.k() {
        let mut probe = xi;
        probe.mandel_mut()[j] += h;
        let r = element_response(media, states, t, probe)?;
        for i in 0..dim.k() {
            tangent.set_entry(i, j, (r.sigma.mandel()[i] - base.mandel()[i]) / h);
        }
    }
    Ok(tangent.symmetric_part())
}

struct MacroEval {
    responses: Vec<Response>,
    residual: Vec<f64>,
    scale: f64,
    full: Vec<f64>,
    strains: Vec<SymTensor>,
}

/// Time-incremental FE² solve.
pub fn solve_effective(cfg: &MacroConfig) -> Result<EffectiveSolution> {
    let started = Instant::now();
    validate_grid(&cfg.times)?;
    cfg.rve.validate()?;
    if cfg.rve.law.dim() != cfg.mesh.dim() {
        return Err(Error::config("RVE law and macro mesh dimensions differ"));
    }
    let ne = cfg.mesh.n_elements();
    if let Some(max) = cfg.max_elements {
        if ne > max {
            return Err(Error::config(format!("macro mesh has {ne} elements, budget is {max}")));
        }
    }
    let space = P1Space::new(cfg.mesh.clone(), Constraint::Dirichlet)?;
    for x in cfg.mesh.vertices() {
        if cfg.dirichlet.value(0.0, x).iter().any(|v| v.abs() > 1e-14) {
            return Err(Error::config("boundary data must vanish at t = 0"));
        }
    }
    let media: Vec<CellMedium> = (0..cfg.rve.samples)
        .into_par_iter()
        .map(|i| CellMedium::sample(&cfg.rve, i))
        .collect::<Result<_>>()?;
    let dim = space.dim();
    let zero = vec![SymTensor::zero(dim); ne];
    let initial: Vec<CellState> = media.iter().map(CellState::initial).collect();
    let mut states: Vec<Vec<CellState>> = vec![initial; ne];
    let mut sol = EffectiveSolution {
        times: cfg.times.clone(),
        u: vec![vec![0.0; space.n_full()]],
        sigma: vec![zero.clone()],
        pi: vec![zero],
        newton_iterations: vec![0],
        residuals: vec![0.0],
        cell_states: Vec::new(),
    };
    let mut free = vec![0.0; space.n_dofs()];
    for m in 1..cfg.times.len() {
        if let Some(cap) = cfg.wall_clock {
            if started.elapsed() > cap {
                return Err(Error::numerical(
                    format!("wall-clock budget exceeded; steps 0..{} completed", m - 1),
                    sol.residuals[m - 1],
                )
                .at_step(m));
            }
        }
        let t = cfg.times[m];
        let fixed = space.interpolate(|x| cfg.dirichlet.value(t, x));
        let load = match &cfg.load {
            Some(f) => space.restrict_forces(&space.load_vector(|x| f(t, x))),
            None => vec![0.0; space.n_dofs()],
        };
        let evaluate = |x: &[f64]| -> Result<MacroEval> {
            let full = space.expand(x, &fixed);
            let strains = space.element_strains(&full);
            let responses: Vec<Response> = strains
                .par_iter()
                .zip(states.par_iter())
                .map(|(xi, st)| element_response(&media, st, t, *xi))
                .collect::<Result<_>>()?;
            let stresses: Vec<SymTensor> = responses.iter().map(|r| r.sigma).collect();
            let internal = space.restrict_forces(&space.internal_forces(&stresses));
            let residual: Vec<f64> = internal.iter().zip(&load).map(|(i, l)| i - l).collect();
            let scale = norm(&space.restrict_forces(&space.force_magnitudes(&stresses))) + norm(&load);
            Ok(MacroEval {
                responses,
                residual,
                scale,
                full,
                strains,
            })
        };
        let rel = |ev: &MacroEval| {
            let r = norm(&ev.residual);
            if r == 0.0 {
                0.0
            } else if ev.scale == 0.0 {
                f64::INFINITY
            } else {
                r / ev.scale
            }
        };
        let mut ev = evaluate(&free).map_err(|e| e.at_step(m))?;
        let mut res = rel(&ev);
        let mut iterations = 0;
        while res > cfg.tol {
            if iterations == MAX_MACRO_NEWTON {
                let worst = worst_elements(&space, &ev);
                return Err(Error::numerical(
                    format!("macro Newton iteration did not converge; worst elements {worst:?}"),
                    res,
                )
                .at_step(m));
            }
            let tangents: Vec<FourthOrderMap> = ev
                .strains
                .par_iter()
                .zip(states.par_iter())
                .zip(ev.responses.par_iter())
                .map(|((xi, st), r)| element_tangent(&media, st, t, *xi, &r.sigma))
                .collect::<Result<_>>()
                .map_err(|e| e.at_step(m))?;
            let op = space.assemble(&tangents)?;
            let rhs: Vec<f64> = ev.residual.iter().map(|v| -v).collect();
            let mut dx = vec![0.0; free.len()];
            pcg(&op, &rhs, &mut dx, CG_TOL, CG_MAX_ITER).map_err(|e| e.at_step(m))?;
            let rn = norm(&ev.residual);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let trial: Vec<f64> = free.iter().zip(&dx).map(|(a, b)| a + alpha * b).collect();
                let tev = evaluate(&trial).map_err(|e| e.at_step(m))?;
                if norm(&tev.residual) < rn {
                    accepted = Some((trial, tev));
                    break;
                }
                alpha *= 0.5;
            }
            iterations += 1;
            match accepted {
                Some((x, tev)) => {
                    free = x;
                    ev = tev;
                    res = rel(&ev);
                }
                None => {
                    return Err(Error::numerical("macro Newton step failed to reduce the residual", res).at_step(m));
                }
            }
        }
        // commit: every element's cell states advance exactly once per step
        let mut sig = Vec::with_capacity(ne);
        let mut pis = Vec::with_capacity(ne);
        for (k, r) in ev.responses.into_iter().enumerate() {
            sig.push(r.sigma);
            pis.push(r.pi);
            states[k] = r.states;
        }
        sol.u.push(ev.full);
        sol.sigma.push(sig);
        sol.pi.push(pis);
        sol.newton_iterations.push(iterations);
        sol.residuals.push(res);
    }
    sol.cell_states = states;
    Ok(sol)
}

fn worst_elements(space: &P1Space, ev: &MacroEval) -> Vec<usize> {
    let mesh = space.mesh();
    let d = space.dim().n();
    let mut score: Vec<(f64, usize)> = (0..mesh.n_elements())
        .map(|k| {
            let r: f64 = mesh
                .simplex(k)
                .iter()
                .flat_map(|&v| (0..d).filter_map(move |i| space.dof(v, i)))
                .map(|dof| ev.residual[dof].abs())
                .sum();
            (r, k)
        })
        .collect();
    score.sort_by(|a, b| b.0.total_cmp(&a.0));
    score.into_iter().take(5).map(|(_, k)| k).collect()
}

/// Largest `|∫ Σ:∇φ − ∫ f·φ|` over every basis function φ of the unconstrained
/// space, relative to the force scale; Dirichlet vertices are skipped.
pub fn weak_form_residual(cfg: &MacroConfig, sol: &EffectiveSolution, step: usize) -> Result<f64> {
    let space = P1Space::new(cfg.mesh.clone(), Constraint::Dirichlet)?;
    let t = sol.times[step];
    let load = match &cfg.load {
        Some(f) => space.restrict_forces(&space.load_vector(|x| f(t, x))),
        None => vec![0.0; space.n_dofs()],
    };
    let internal = space.restrict_forces(&space.internal_forces(&sol.sigma[step]));
    let scale = norm(&space.restrict_forces(&space.force_magnitudes(&sol.sigma[step]))) + norm(&load);
    let worst = internal
        .iter()
        .zip(&load)
        .map(|(i, l)| (i - l).abs())
        .fold(0.0, f64::max);
    Ok(if scale > 0.0 { worst / scale } else { worst })
}
