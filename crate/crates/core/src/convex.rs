//! Flow-rule potentials, their Moreau–Yosida envelopes and convex conjugates.
//!
//! Two potentials are provided, both acting on the deviatoric part of the
//! stress only:
//!
//! * [`FlowKind::VonMisesIndicator`]: `Ψ(σ) = 0` if `|dev σ| ≤ σ_y`, else `+∞`.
//!   The envelope `Ψ^δ(σ) = dist(σ, K)²/(2δ)` gives Perzyna-type viscoplasticity.
//! * [`FlowKind::NormType`]: `Ψ(σ) = σ_y |dev σ|`. The envelope is a Huber function.
//!
//! `+∞` is carried by [`Extended::Infinite`], never by an overflowing float.

use std::cmp::Ordering;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Dim, FourthOrderMap, SymTensor};

/// Tolerance on the trace when deciding whether a tensor is deviatoric.
pub const DEVIATORIC_TOL: f64 = 1e-10;

/// A value in `(-∞, +∞]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    /// Subtracts a finite number; `+∞` absorbs.
    pub fn minus(self, v: f64) -> Extended {
        match self {
            Extended::Finite(a) => Extended::Finite(a - v),
            Extended::Infinite => Extended::Infinite,
        }
    }
}

impl Add for Extended {
    type Output = Extended;
    fn add(self, rhs: Extended) -> Extended {
        match (self, rhs) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
            _ => Extended::Infinite,
        }
    }
}

impl PartialOrd for Extended {
    fn partial_cmp(&self, other: &Extended) -> Option<Ordering> {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => a.partial_cmp(b),
            (Extended::Finite(_), Extended::Infinite) => Some(Ordering::Less),
            (Extended::Infinite, Extended::Finite(_)) => Some(Ordering::Greater),
            (Extended::Infinite, Extended::Infinite) => Some(Ordering::Equal),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    VonMisesIndicator,
    NormType,
}

/// A convex flow potential Ψ with yield stress σ_y.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowRule {
    pub kind: FlowKind,
    pub yield_stress: f64,
    pub dim: Dim,
}

impl FlowRule {
    pub fn new(kind: FlowKind, yield_stress: f64, dim: Dim) -> Result<Self> {
        if !(yield_stress > 0.0 && yield_stress.is_finite()) {
            return Err(Error::config(format!(
                "yield stress must be positive, got {yield_stress}"
            )));
        }
        Ok(FlowRule {
            kind,
            yield_stress,
            dim,
        })
    }

    pub fn von_mises(yield_stress: f64, dim: Dim) -> Result<Self> {
        Self::new(FlowKind::VonMisesIndicator, yield_stress, dim)
    }

    pub fn norm_type(yield_stress: f64, dim: Dim) -> Result<Self> {
        Self::new(FlowKind::NormType, yield_stress, dim)
    }

    /// Ψ(σ).
    pub fn value(&self, sigma: &SymTensor) -> Extended {
        let s = sigma.deviator().norm();
        match self.kind {
            FlowKind::VonMisesIndicator => {
                if s <= self.yield_stress {
                    Extended::Finite(0.0)
                } else {
                    Extended::Infinite
                }
            }
            FlowKind::NormType => Extended::Finite(self.yield_stress * s),
        }
    }

    /// Proximal map `argmin_τ { δΨ(τ) + |τ − σ|²/2 }`.
    ///
    /// For the indicator this is the projection onto K and does not depend on δ.
    pub fn prox(&self, sigma: &SymTensor, delta: f64) -> SymTensor {
        let dev = sigma.deviator();
        let s = dev.norm();
        let shrink = match self.kind {
            FlowKind::VonMisesIndicator => (s - self.yield_stress).max(0.0),
            FlowKind::NormType => s.min(delta * self.yield_stress),
        };
        if s == 0.0 || shrink == 0.0 {
            return *sigma;
        }
        *sigma - dev.scale(shrink / s)
    }
}

/// Euclidean projection onto `K = {τ : |dev τ| ≤ σ_y}` (von Mises indicator rule).
pub fn project_yield(rule: &FlowRule, sigma: &SymTensor) -> Result<SymTensor> {
    if rule.kind != FlowKind::VonMisesIndicator {
        return Err(Error::config("project_yield requires the von Mises indicator rule"));
    }
    Ok(rule.prox(sigma, 1.0))
}

/// Legendre–Fenchel conjugate `Ψ*(p) = sup_σ ⟨σ,p⟩ − Ψ(σ)`.
pub fn conjugate_value(rule: &FlowRule, p: &SymTensor) -> Result<Extended> {
    if !p.is_finite() {
        return Err(Error::input("conjugate_value: non-finite argument"));
    }
    let norm = p.norm();
    if p.trace().abs() > DEVIATORIC_TOL * (1.0 + norm) {
        return Ok(Extended::Infinite);
    }
    Ok(match rule.kind {
        FlowKind::VonMisesIndicator => Extended::Finite(rule.yield_stress * norm),
        FlowKind::NormType => {
            if norm <= rule.yield_stress * (1.0 + DEVIATORIC_TOL) {
                Extended::Finite(0.0)
            } else {
                Extended::Infinite
            }
        }
    })
}

/// `Ψ(σ) + Ψ*(p) − ⟨σ,p⟩`; non-negative by Fenchel's inequality.
pub fn fenchel_gap(rule: &FlowRule, sigma: &SymTensor, p: &SymTensor) -> Result<Extended> {
    Ok((rule.value(sigma) + conjugate_value(rule, p)?).minus(sigma.inner(p)))
}

/// Moreau–Yosida regularization `Ψ^δ(σ) = inf_τ { Ψ(τ) + |τ − σ|²/(2δ) }`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularizedFlow {
    pub rule: FlowRule,
    pub delta: f64,
}

impl RegularizedFlow {
    pub fn new(rule: FlowRule, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::config(format!(
                "regularization parameter must be positive, got {delta}"
            )));
        }
        Ok(RegularizedFlow { rule, delta })
    }

    /// Ψ^δ(σ), finite everywhere.
    pub fn value(&self, sigma: &SymTensor) -> f64 {
        let s = sigma.deviator().norm();
        let sy = self.rule.yield_stress;
        let d = self.delta;
        match self.rule.kind {
            FlowKind::VonMisesIndicator => {
                let excess = (s - sy).max(0.0);
                excess * excess / (2.0 * d)
            }
            FlowKind::NormType => {
                if s <= d * sy {
                    s * s / (2.0 * d)
                } else {
                    sy * s - 0.5 * d * sy * sy
                }
            }
        }
    }

    /// ∇Ψ^δ(σ) = (σ − prox_{δΨ}(σ))/δ.
    pub fn gradient(&self, sigma: &SymTensor) -> SymTensor {
        let dev = sigma.deviator();
        let s = dev.norm();
        if s == 0.0 {
            return SymTensor::zero(sigma.dim());
        }
        let sy = self.rule.yield_stress;
        let d = self.delta;
        let factor = match self.rule.kind {
            FlowKind::VonMisesIndicator => (s - sy).max(0.0) / (d * s),
            FlowKind::NormType => {
                if s <= d * sy {
                    1.0 / d
                } else {
                    sy / s
                }
            }
        };
        dev.scale(factor)
    }

    /// Generalized Hessian of Ψ^δ at σ (an element of the Clarke Jacobian of the gradient).
    pub fn hessian(&self, sigma: &SymTensor) -> FourthOrderMap {
        let dim = sigma.dim();
        let dev = sigma.deviator();
        let s = dev.norm();
        let sy = self.rule.yield_stress;
        let d = self.delta;
        let pdev = FourthOrderMap::deviatoric_projector(dim);
        match self.rule.kind {
            FlowKind::VonMisesIndicator => {
                if s <= sy {
                    return FourthOrderMap::zero(dim);
                }
                let n = dev.scale(1.0 / s);
                let nn = FourthOrderMap::outer(&n, &n);
                pdev.scale((1.0 - sy / s) / d).plus(&nn.scale(sy / (s * d)))
            }
            FlowKind::NormType => {
                if s <= d * sy {
                    return pdev.scale(1.0 / d);
                }
                let n = dev.scale(1.0 / s);
                let nn = FourthOrderMap::outer(&n, &n);
                pdev.minus(&nn).scale(sy / s)
            }
        }
    }

    /// Conjugate of the envelope: `(Ψ^δ)*(p) = Ψ*(p) + δ|p|²/2`.
    pub fn conjugate_value(&self, p: &SymTensor) -> Result<Extended> {
        Ok(conjugate_value(&self.rule, p)? + Extended::Finite(0.5 * self.delta * p.inner(p)))
    }

    /// `Ψ^δ(σ) + (Ψ^δ)*(p) − ⟨σ,p⟩`; vanishes when `p = ∇Ψ^δ(σ)`.
    pub fn fenchel_gap(&self, sigma: &SymTensor, p: &SymTensor) -> Result<Extended> {
        Ok((Extended::Finite(self.value(sigma)) + self.conjugate_value(p)?).minus(sigma.inner(p)))
    }
}

/// Ψ^δ(σ).
pub fn my_value(rf: &RegularizedFlow, sigma: &SymTensor) -> f64 {
    rf.value(sigma)
}

/// ∂Ψ^δ(σ), single valued.
pub fn my_subdiff(rf: &RegularizedFlow, sigma: &SymTensor) -> SymTensor {
    rf.gradient(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const D2: Dim = Dim::Two;

    fn random_sym(rng: &mut ChaCha8Rng, dim: Dim, scale: f64) -> SymTensor {
        let v: Vec<f64> = (0..dim.k()).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
        SymTensor::from_mandel(dim, &v).unwrap()
    }

    fn deviatoric_with_norm(rng: &mut ChaCha8Rng, dim: Dim, norm: f64) -> SymTensor {
        loop {
            let d = random_sym(rng, dim, 1.0).deviator();
            if d.norm() > 1e-3 {
                return d.scale(norm / d.norm());
            }
        }
    }

    /// Brute-force Moreau envelope: minimizes over τ = σ − t·n along the deviatoric
    /// direction n of σ (the minimizer lies on that ray by rotational symmetry of
    /// Ψ in deviatoric space). Bisection finds where Ψ becomes finite, then a grid
    /// scan and golden-section refinement minimize the convex objective.
    fn envelope_oracle(rule: &FlowRule, delta: f64, sigma: &SymTensor) -> f64 {
        let dev = sigma.deviator();
        let s = dev.norm();
        if s == 0.0 {
            return 0.0;
        }
        let tau = |t: f64| *sigma - dev.scale(t / s);
        let f = |t: f64| -> f64 {
            match rule.value(&tau(t)) {
                Extended::Finite(v) => v + t * t / (2.0 * delta),
                Extended::Infinite => f64::INFINITY,
            }
        };
        let mut lo_t = 0.0;
        if !rule.value(&tau(0.0)).is_finite() {
            let (mut a, mut b) = (0.0, s);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if rule.value(&tau(m)).is_finite() {
                    b = m;
                } else {
                    a = m;
                }
            }
            lo_t = b;
        }
        let n = 20_000;
        let step = (s - lo_t) / n as f64;
        let (mut best_t, mut best) = (lo_t, f(lo_t));
        for i in 0..=n {
            let t = lo_t + step * i as f64;
            let v = f(t);
            if v < best {
                best = v;
                best_t = t;
            }
        }
        let (mut a, mut b) = ((best_t - step).max(lo_t), (best_t + step).min(s));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) <= f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        best.min(f(a)).min(f(b))
    }

    #[test]
    fn projection_examples() {
        let rule = FlowRule::von_mises(2.0, D2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inner = deviatoric_with_norm(&mut rng, D2, 1.0) + SymTensor::identity(D2).scale(0.7);
        assert_eq!(project_yield(&rule, &inner).unwrap(), inner);
        let hydro = SymTensor::identity(D2).scale(-5.0);
        assert_eq!(project_yield(&rule, &hydro).unwrap(), hydro);
        let outer = deviatoric_with_norm(&mut rng, D2, 4.0);
        let proj = project_yield(&rule, &outer).unwrap();
        assert!((proj - outer.scale(0.5)).norm() < 1e-14);
        assert!(project_yield(&FlowRule::norm_type(1.0, D2).unwrap(), &outer).is_err());
    }

    #[test]
    fn projection_matches_sampled_minimization() {
        // Dense sampling of K ∩ span{Id, dev σ, another deviator}: no sample is closer.
        let rule = FlowRule::von_mises(1.0, D2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sigma = deviatoric_with_norm(&mut rng, D2, 2.0);
        let proj = project_yield(&rule, &sigma).unwrap();
        let best = (proj - sigma).norm();
        for _ in 0..20_000 {
            let r = rng.random::<f64>().sqrt();
            let tau = deviatoric_with_norm(&mut rng, D2, r)
                + SymTensor::identity(D2).scale(rng.random::<f64>() - 0.5);
            assert!((tau - sigma).norm() >= best - 1e-12);
        }
        assert!((proj - sigma.scale(0.5)).norm() < 1e-14);
    }

    #[test]
    fn envelope_examples() {
        for kind in [FlowKind::VonMisesIndicator, FlowKind::NormType] {
            let rf = RegularizedFlow::new(FlowRule::new(kind, 1.5, D2).unwrap(), 0.1).unwrap();
            assert_eq!(my_value(&rf, &SymTensor::zero(D2)), 0.0);
            assert_eq!(my_subdiff(&rf, &SymTensor::zero(D2)), SymTensor::zero(D2));
        }
        let sy = 1.5;
        let delta = 0.1;
        let rule = FlowRule::von_mises(sy, D2).unwrap();
        let rf = RegularizedFlow::new(rule, delta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sigma = deviatoric_with_norm(&mut rng, D2, sy + delta);
        assert!((my_value(&rf, &sigma) - delta / 2.0).abs() < 1e-14);
        let oracle = envelope_oracle(&rule, delta, &sigma);
        assert!((oracle - delta / 2.0).abs() < 1e-9, "oracle {oracle}");
    }

    #[test]
    fn envelope_matches_brute_force_for_both_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in [FlowKind::VonMisesIndicator, FlowKind::NormType] {
            let rule = FlowRule::new(kind, 0.8, Dim::Three).unwrap();
            for &delta in &[0.5, 0.05] {
                let rf = RegularizedFlow::new(rule, delta).unwrap();
                for _ in 0..20 {
                    let sigma = random_sym(&mut rng, Dim::Three, 2.0);
                    let oracle = envelope_oracle(&rule, delta, &sigma);
                    assert!((rf.value(&sigma) - oracle).abs() < 1e-9 * (1.0 + oracle));
                }
            }
        }
    }

    #[test]
    fn subdiff_examples() {
        let sy = 1.0;
        let delta = 0.05;
        let rf = RegularizedFlow::new(FlowRule::von_mises(sy, D2).unwrap(), delta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = 0.3;
        let sigma = deviatoric_with_norm(&mut rng, D2, sy + r);
        let g = my_subdiff(&rf, &sigma);
        let expected = sigma.scale(r / delta / sigma.norm());
        assert!((g - expected).norm() < 1e-12);
        // central differences of the envelope value
        let h = 1e-6;
        for a in 0..D2.k() {
            let mut plus = sigma;
            plus.mandel_mut()[a] += h;
            let mut minus = sigma;
            minus.mandel_mut()[a] -= h;
            let fd = (rf.value(&plus) - rf.value(&minus)) / (2.0 * h);
            assert!((fd - g.mandel()[a]).abs() <= 1e-5 * g.norm());
        }
        let interior = deviatoric_with_norm(&mut rng, D2, 0.5) + SymTensor::identity(D2);
        assert_eq!(my_subdiff(&rf, &interior), SymTensor::zero(D2));
        assert!(g.trace().abs() < 1e-14);
    }

    #[test]
    fn gradient_consistency_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for kind in [FlowKind::VonMisesIndicator, FlowKind::NormType] {
            let rf = RegularizedFlow::new(FlowRule::new(kind, 1.0, Dim::Three).unwrap(), 0.1)
                .unwrap();
            let mut checked = 0;
            while checked < 1000 {
                let sigma = random_sym(&mut rng, Dim::Three, 3.0);
                let s = sigma.deviator().norm();
                // skip points within a step of the kink of the second derivative
                let kink = match kind {
                    FlowKind::VonMisesIndicator => 1.0,
                    FlowKind::NormType => 0.1,
                };
                if (s - kink).abs() < 1e-3 {
                    continue;
                }
                let g = rf.gradient(&sigma);
                let h = 1e-6;
                for a in 0..6 {
                    let mut p = sigma;
                    p.mandel_mut()[a] += h;
                    let mut m = sigma;
                    m.mandel_mut()[a] -= h;
                    let fd = (rf.value(&p) - rf.value(&m)) / (2.0 * h);
                    assert!(
                        (fd - g.mandel()[a]).abs() <= 1e-5 * g.norm().max(1.0),
                        "{kind:?}: fd {fd} vs {}",
                        g.mandel()[a]
                    );
                }
                checked += 1;
            }
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in [FlowKind::VonMisesIndicator, FlowKind::NormType] {
            let rf = RegularizedFlow::new(FlowRule::new(kind, 1.0, D2).unwrap(), 0.2).unwrap();
            for _ in 0..200 {
                let sigma = random_sym(&mut rng, D2, 3.0);
                let hess = rf.hessian(&sigma);
                let h = 1e-7;
                for b in 0..3 {
                    let mut p = sigma;
                    p.mandel_mut()[b] += h;
                    let mut m = sigma;
                    m.mandel_mut()[b] -= h;
                    let col = (rf.gradient(&p) - rf.gradient(&m)).scale(0.5 / h);
                    for a in 0..3 {
                        assert!((col.mandel()[a] - hess.entry(a, b)).abs() < 1e-5 * (1.0 / 0.2));
                    }
                }
            }
        }
    }

    #[test]
    fn conjugate_examples() {
        let rule = FlowRule::von_mises(2.0, D2).unwrap();
        assert_eq!(conjugate_value(&rule, &SymTensor::zero(D2)).unwrap(), Extended::Finite(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = deviatoric_with_norm(&mut rng, D2, 1.0);
        let v = conjugate_value(&rule, &p).unwrap().finite().unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        // sup of ⟨σ, p⟩ over a dense sample of K: the hydrostatic part is irrelevant
        // for deviatoric p, so sample the boundary circle/sphere of the deviatoric ball.
        let mut sup = f64::NEG_INFINITY;
        for _ in 0..50_000 {
            let tau = deviatoric_with_norm(&mut rng, D2, 2.0);
            sup = sup.max(tau.inner(&p));
        }
        assert!((sup - v).abs() < 1e-3 && sup <= v + 1e-12);
        let trace_one = SymTensor::from_mandel(D2, &[0.5, 0.5, 0.0]).unwrap();
        assert_eq!(conjugate_value(&rule, &trace_one).unwrap(), Extended::Infinite);
        let nan = SymTensor::from_mandel(D2, &[f64::NAN, 0.0, 0.0]).unwrap();
        assert!(matches!(conjugate_value(&rule, &nan), Err(Error::Input(_))));
        let norm_rule = FlowRule::norm_type(2.0, D2).unwrap();
        assert_eq!(conjugate_value(&norm_rule, &p).unwrap(), Extended::Finite(0.0));
        assert_eq!(
            conjugate_value(&norm_rule, &p.scale(3.0)).unwrap(),
            Extended::Infinite
        );
    }

    /// sup_σ ⟨σ,p⟩ − Ψ^δ(σ) for deviatoric p, maximized along σ = t·p/|p| plus
    /// an isotropic grid check; the objective is concave in t.
    fn regularized_conjugate_oracle(rf: &RegularizedFlow, p: &SymTensor) -> f64 {
        let dir = p.scale(1.0 / p.norm());
        let f = |t: f64| t * p.norm() - rf.value(&dir.scale(t));
        let (mut a, mut b) = (0.0, 100.0);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..300 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) >= f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        f(0.5 * (a + b))
    }

    #[test]
    fn fenchel_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for kind in [FlowKind::VonMisesIndicator, FlowKind::NormType] {
            let rule = FlowRule::new(kind, 1.0, D2).unwrap();
            let z = SymTensor::zero(D2);
            assert_eq!(fenchel_gap(&rule, &z, &z).unwrap(), Extended::Finite(0.0));
            for _ in 0..1000 {
                let (r1, r2) = (rng.random::<f64>(), rng.random::<f64>());
                let sigma = deviatoric_with_norm(&mut rng, D2, r1)
                    + SymTensor::identity(D2).scale(rng.random::<f64>());
                let p = deviatoric_with_norm(&mut rng, D2, r2);
                let gap = fenchel_gap(&rule, &sigma, &p).unwrap().finite().unwrap();
                assert!(gap >= -1e-12);
            }
            let rf = RegularizedFlow::new(rule, 0.1).unwrap();
            for _ in 0..50 {
                let sigma = random_sym(&mut rng, D2, 3.0);
                let p = rf.gradient(&sigma);
                let gap = rf.fenchel_gap(&sigma, &p).unwrap().finite().unwrap();
                assert!(gap.abs() <= 1e-10, "gap {gap}");
                if p.norm() > 1e-8 {
                    let oracle = regularized_conjugate_oracle(&rf, &p);
                    let closed = rf.conjugate_value(&p).unwrap().finite().unwrap();
                    assert!((oracle - closed).abs() < 1e-8 * (1.0 + closed), "{oracle} vs {closed}");
                }
            }
        }
    }

    #[test]
    fn extended_arithmetic_is_absorbing() {
        assert_eq!(Extended::Infinite + Extended::Finite(1.0), Extended::Infinite);
        assert_eq!(Extended::Infinite.minus(1e300), Extended::Infinite);
        assert!(Extended::Finite(1e308) < Extended::Infinite);
    }

    #[test]
    fn invalid_parameters() {
        assert!(FlowRule::von_mises(0.0, D2).is_err());
        let rule = FlowRule::von_mises(1.0, D2).unwrap();
        assert!(RegularizedFlow::new(rule, 0.0).is_err());
        assert!(RegularizedFlow::new(rule, f64::NAN).is_err());
    }
}
