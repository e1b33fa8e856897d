//! Backward-Euler return mapping and the global Newton equilibrium step shared by
//! the ε-problem, the cell problem and the FE² driver.

use rayon::prelude::*;

use crate::convex::{FlowKind, FlowRule, RegularizedFlow};
use crate::error::{Error, Result};
use crate::fem::{norm, pcg, stiffness_operator, P1Space, CG_MAX_ITER, CG_TOL};
use crate::tensor::{FourthOrderMap, MaterialPoint, SymTensor};

/// Relative equilibrium residual accepted by the global Newton iteration.
pub const GLOBAL_TOL: f64 = 1e-8;
/// Absolute tolerance (in strain units) of the element-level plastic update.
pub const LOCAL_TOL: f64 = 1e-12;
pub const MAX_NEWTON: usize = 50;
const MAX_LOCAL_NEWTON: usize = 50;
const MAX_HALVINGS: usize = 12;

/// Material and regularized flow rule of one element.
#[derive(Clone, Copy, Debug)]
pub struct ElementLaw {
    pub material: MaterialPoint,
    pub flow: RegularizedFlow,
}

impl ElementLaw {
    pub fn new(material: MaterialPoint, kind: FlowKind, delta: f64) -> Result<Self> {
        let rule = FlowRule::new(kind, material.yield_stress, material.dim())?;
        Ok(ElementLaw {
            material,
            flow: RegularizedFlow::new(rule, delta)?,
        })
    }
}

/// Outcome of the element-level update.
#[derive(Clone, Copy, Debug)]
pub struct LocalUpdate {
    pub p: SymTensor,
    pub sigma: SymTensor,
    /// Consistent algorithmic tangent `dσ/dε`.
    pub tangent: FourthOrderMap,
    pub iterations: usize,
    /// `|Δp − Δt ∂Ψ^δ(σ − Bp)|` at the returned state.
    pub residual: f64,
}

/// Solves `p = p_old + Δt ∂Ψ^δ(A(ε − p) − Bp)` for `p` and returns the stress
/// `σ = A(ε − p)` with the consistent tangent.
///
/// The Newton iteration is seeded with the radial-return solution, which is exact
/// for isotropic stiffness and scalar hardening.
pub fn local_update(law: &ElementLaw, strain: &SymTensor, p_old: &SymTensor, dt: f64) -> Result<LocalUpdate> {
    let a = law.material.stiffness();
    let b = &law.material.hardening;
    let flow = &law.flow;
    let dim = strain.dim();
    let residual = |p: &SymTensor| -> (SymTensor, SymTensor) {
        let sigma = a.apply(&(*strain - *p));
        let s = sigma - b.apply(p);
        (*p - *p_old - flow.gradient(&s).scale(dt), s)
    };
    let mut p = radial_seed(law, strain, p_old, dt);
    // large strains are limited by round-off rather than by LOCAL_TOL
    let tol = LOCAL_TOL.max(1e-15 * strain.norm().max(p_old.norm()));
    let ab = a.plus(b);
    let mut iterations = 0;
    let (mut r, mut s) = residual(&p);
    while r.norm() > tol {
        if iterations == MAX_LOCAL_NEWTON {
            return Err(Error::numerical("element plastic update did not converge", r.norm()));
        }
        let jac = FourthOrderMap::identity(dim).plus(&flow.hessian(&s).compose(&ab).scale(dt));
        let step = jac.solve(&r)?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial = p - step.scale(alpha);
            let (rt, st) = residual(&trial);
            if rt.norm() < r.norm() {
                p = trial;
                r = rt;
                s = st;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        iterations += 1;
        if !accepted {
            // no further decrease is possible in floating point
            break;
        }
    }
    if !r.is_finite() || r.norm() > 1e3 * tol {
        return Err(Error::numerical("element plastic update stagnated", r.norm()));
    }
    let sigma = a.apply(&(*strain - p));
    let d = flow.hessian(&s);
    let tangent = if d.max_abs() == 0.0 {
        *a
    } else {
        let jac = FourthOrderMap::identity(dim).plus(&d.compose(&ab).scale(dt));
        let dp = jac.inverse()?.compose(&d.compose(a).scale(dt));
        a.minus(&a.compose(&dp)).symmetric_part()
    };
    Ok(LocalUpdate {
        p,
        sigma,
        tangent,
        iterations,
        residual: r.norm(),
    })
}

/// Closed-form backward-Euler step for a radial deviatoric return:
/// `|s| = (|s_tr| + κσ_y)/(1+κ)` with `κ = (2μ+H)Δt/δ` measured along the trial
/// direction (von Mises), or the analogous Huber step (norm type).
fn radial_seed(law: &ElementLaw, strain: &SymTensor, p_old: &SymTensor, dt: f64) -> SymTensor {
    let a = law.material.stiffness();
    let b = &law.material.hardening;
    let trial = a.apply(&(*strain - *p_old)) - b.apply(p_old);
    let dev = trial.deviator();
    let s_tr = dev.norm();
    if s_tr == 0.0 {
        return *p_old;
    }
    let n = dev.scale(1.0 / s_tr);
    let modulus = n.inner(&a.apply(&n)) + n.inner(&b.apply(&n));
    let sy = law.flow.rule.yield_stress;
    let delta = law.flow.delta;
    let kappa = modulus * dt / delta;
    let s = match law.flow.rule.kind {
        FlowKind::VonMisesIndicator => {
            if s_tr <= sy {
                return *p_old;
            }
            (s_tr + kappa * sy) / (1.0 + kappa)
        }
        FlowKind::NormType => {
            // quadratic branch first, Huber branch if it leaves |s| ≤ δσ_y
            let quad = s_tr / (1.0 + kappa);
            if quad <= delta * sy {
                quad
            } else {
                (s_tr - modulus * dt * sy).max(delta * sy)
            }
        }
    };
    *p_old + n.scale((s_tr - s) / modulus)
}

/// Data of one implicit equilibrium step.
pub(crate) struct EquilibriumStep<'a> {
    pub space: &'a P1Space,
    pub laws: &'a [ElementLaw],
    pub dt: f64,
    pub p_old: &'a [SymTensor],
    /// Uniform strain added to `∇ˢu` on every element (the macroscopic strain of a
    /// cell problem).
    pub offset: Option<SymTensor>,
    /// Full nodal vector carrying the constrained values.
    pub fixed: &'a [f64],
    /// External force vector on the unknowns.
    pub load: &'a [f64],
    pub tol: f64,
}

/// Converged state of an equilibrium step.
#[derive(Clone, Debug)]
pub(crate) struct StepState {
    pub free: Vec<f64>,
    pub full: Vec<f64>,
    pub updates: Vec<LocalUpdate>,
    pub newton_iterations: usize,
    pub relative_residual: f64,
}

struct Evaluation {
    full: Vec<f64>,
    updates: Vec<LocalUpdate>,
    residual: Vec<f64>,
    scale: f64,
}

impl EquilibriumStep<'_> {
    fn evaluate(&self, free: &[f64]) -> Result<Evaluation> {
        let full = self.space.expand(free, self.fixed);
        let mut strains = self.space.element_strains(&full);
        if let Some(off) = self.offset {
            strains.iter_mut().for_each(|e| *e += off);
        }
        let updates: Vec<LocalUpdate> = strains
            .par_iter()
            .zip(self.laws.par_iter())
            .zip(self.p_old.par_iter())
            .map(|((e, law), p)| local_update(law, e, p, self.dt))
            .collect::<Result<_>>()?;
        let stresses: Vec<SymTensor> = updates.iter().map(|u| u.sigma).collect();
        let internal = self.space.restrict_forces(&self.space.internal_forces(&stresses));
        let residual: Vec<f64> = internal.iter().zip(self.load).map(|(i, l)| i - l).collect();
        let magnitude = self.space.restrict_forces(&self.space.force_magnitudes(&stresses));
        let scale = norm(&magnitude) + norm(self.load);
        Ok(Evaluation {
            full,
            updates,
            residual,
            scale,
        })
    }

    fn relative(ev: &Evaluation) -> f64 {
        let r = norm(&ev.residual);
        if r == 0.0 {
            0.0
        } else if ev.scale == 0.0 {
            f64::INFINITY
        } else {
            r / ev.scale
        }
    }

    /// Newton iteration with the consistent tangent; steps that do not reduce the
    /// residual are damped by halving.
    pub fn solve(&self, guess: Vec<f64>) -> Result<StepState> {
        let mut x = guess;
        let mut ev = self.evaluate(&x)?;
        let mut rel = Self::relative(&ev);
        let mut best = rel;
        let mut since_best = 0;
        let mut iterations = 0;
        while rel > self.tol {
            if iterations == MAX_NEWTON || since_best >= MAX_NEWTON {
                return Err(Error::numerical("global Newton iteration did not converge", rel));
            }
            let tangents: Vec<FourthOrderMap> = ev.updates.iter().map(|u| u.tangent).collect();
            let op = stiffness_operator(self.space, &tangents)?;
            let rhs: Vec<f64> = ev.residual.iter().map(|v| -v).collect();
            let mut dx = vec![0.0; x.len()];
            pcg(&op, &rhs, &mut dx, CG_TOL, CG_MAX_ITER)?;
            let rnorm = norm(&ev.residual);
            let mut alpha = 1.0;
            let mut next = None;
            for _ in 0..MAX_HALVINGS {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + alpha * b).collect();
                let tev = self.evaluate(&trial)?;
                if norm(&tev.residual) < rnorm {
                    next = Some((trial, tev));
                    break;
                }
                alpha *= 0.5;
            }
            iterations += 1;
            match next {
                Some((trial, tev)) => {
                    x = trial;
                    ev = tev;
                    rel = Self::relative(&ev);
                }
                None => {
                    // the residual is at its floating-point floor
                    if rel <= 1e3 * self.tol {
                        break;
                    }
                    since_best += 1;
                    continue;
                }
            }
            if rel < best {
                best = rel;
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        Ok(StepState {
            free: x,
            full: ev.full,
            updates: ev.updates,
            newton_iterations: iterations,
            relative_residual: rel,
        })
    }
}
