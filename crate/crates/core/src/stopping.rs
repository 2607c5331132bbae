//! Data perturbation and the a priori stopping rule.
//!
//! The rule compares the cumulative noise bound
//! `e_k^n = δ² Σ_{i≤k} (1/α_i² + γ_{i−1}²)` with the regularization bound
//! `e_k^r = 1 + Σ_{i≤k} α_i^{−1} γ_i^{−κ}` (or `1` under a source condition)
//! and stops at the largest `k` with `e_i^n ≤ τ e_i^r` for all `i ≤ k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::bregman::RegularizationSchedule;
use crate::error::{Error, Result};
use crate::fem::{l2_norm, FeFunction};

/// Regularity assumption that fixes the regularization bound.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularity {
    /// Active-set condition with exponent `kappa > 0`.
    ActiveSet { kappa: f64 },
    SourceCondition,
}

impl Regularity {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::ActiveSet { kappa } if !(kappa > 0.0 && kappa.is_finite()) => Err(
                Error::InvalidParameter(format!("kappa must be positive and finite, got {kappa}")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub delta: f64,
    pub seed: u64,
}

/// `z + δ n/‖n‖` with `n` drawn coefficientwise from `U[−1, 1]` by a ChaCha20
/// stream seeded with `seed`. A zero draw is retried with `seed + 1`.
pub fn perturb(z: &FeFunction, spec: NoiseSpec) -> Result<FeFunction> {
    if !(spec.delta >= 0.0) || !spec.delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise level must be finite and >= 0, got {}",
            spec.delta
        )));
    }
    if spec.delta == 0.0 {
        return Ok(z.clone());
    }
    let space = z.space();
    let mut seed = spec.seed;
    loop {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let noise: Vec<f64> = (0..space.num_dofs())
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        let noise = FeFunction::new(space, noise)?;
        let norm = l2_norm(&noise);
        if norm > 0.0 {
            return z.axpy(spec.delta / norm, &noise);
        }
        seed = seed.wrapping_add(1);
    }
}

/// Running partial sums behind both bounds. The noise sum is kept without
/// the `δ²` factor so one accumulator serves every noise level.
#[derive(Clone, Copy, Debug)]
pub struct BoundAccumulator {
    regularity: Regularity,
    k: usize,
    gamma: f64,
    noise_sum: f64,
    reg_sum: f64,
}

impl BoundAccumulator {
    pub fn new(regularity: Regularity) -> Self {
        Self {
            regularity,
            k: 0,
            gamma: 0.0,
            noise_sum: 0.0,
            reg_sum: 0.0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Adds step `k+1` with parameter `alpha`.
    pub fn push(&mut self, alpha: f64) {
        let gamma_prev = self.gamma;
        self.gamma = gamma_prev + 1.0 / alpha;
        self.noise_sum += 1.0 / (alpha * alpha) + gamma_prev * gamma_prev;
        if let Regularity::ActiveSet { kappa } = self.regularity {
            self.reg_sum += self.gamma.powf(-kappa) / alpha;
        }
        self.k += 1;
    }

    /// `e_k^n` for noise level `delta`.
    pub fn noise_bound(&self, delta: f64) -> f64 {
        delta * delta * self.noise_sum
    }

    /// `e_k^r`.
    pub fn reg_bound(&self) -> f64 {
        match self.regularity {
            Regularity::ActiveSet { .. } => 1.0 + self.reg_sum,
            Regularity::SourceCondition => 1.0,
        }
    }
}

fn accumulate(k: usize, schedule: &RegularizationSchedule, regularity: Regularity) -> BoundAccumulator {
    let mut acc = BoundAccumulator::new(regularity);
    for i in 1..=k {
        acc.push(schedule.alpha(i));
    }
    acc
}

/// `e_k^n = δ² Σ_{i≤k} (1/α_i² + γ_{i−1}²)`.
pub fn noise_bound(k: usize, schedule: &RegularizationSchedule, delta: f64) -> f64 {
    accumulate(k, schedule, Regularity::SourceCondition).noise_bound(delta)
}

/// `e_k^r = 1 + Σ_{i≤k} α_i^{−1} γ_i^{−κ}`, or `1` under a source condition.
pub fn reg_bound(k: usize, schedule: &RegularizationSchedule, regularity: Regularity) -> f64 {
    accumulate(k, schedule, regularity).reg_bound()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    /// Stopping index `k(δ)`; 0 when the very first step already violates.
    pub k: usize,
    /// Set when every `k ≤ k_max` satisfied the bound.
    pub k_max_reached: bool,
}

fn check_rule(delta: f64, tau: f64, regularity: Regularity) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "stopping rule needs delta > 0, got {delta}"
        )));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be > 0, got {tau}")));
    }
    regularity.validate()
}

/// Largest `k ≤ k_max` with `e_i^n ≤ τ e_i^r` for every `i ≤ k`.
pub fn decide_stop(
    schedule: &RegularizationSchedule,
    delta: f64,
    tau: f64,
    regularity: Regularity,
    k_max: usize,
) -> Result<StopDecision> {
    let mut monitor = StoppingMonitor::new(delta, tau, regularity)?;
    for k in 1..=k_max {
        monitor.observe(schedule.alpha(k));
        if monitor.decided().is_some() {
            break;
        }
    }
    Ok(monitor.decision(k_max))
}

/// One step as seen by the monitor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundRow {
    pub k: usize,
    pub noise: f64,
    pub reg: f64,
    /// `e_k^n ≤ τ e_k^r`.
    pub within: bool,
}

/// Evaluates the rule online, one step at a time. The decision freezes at the
/// first violation.
#[derive(Clone, Debug)]
pub struct StoppingMonitor {
    delta: f64,
    tau: f64,
    acc: BoundAccumulator,
    stop: Option<usize>,
}

impl StoppingMonitor {
    pub fn new(delta: f64, tau: f64, regularity: Regularity) -> Result<Self> {
        check_rule(delta, tau, regularity)?;
        Ok(Self {
            delta,
            tau,
            acc: BoundAccumulator::new(regularity),
            stop: None,
        })
    }

    pub fn observe(&mut self, alpha: f64) -> BoundRow {
        self.acc.push(alpha);
        let noise = self.acc.noise_bound(self.delta);
        let reg = self.acc.reg_bound();
        let within = noise <= self.tau * reg;
        if !within && self.stop.is_none() {
            self.stop = Some(self.acc.k() - 1);
        }
        BoundRow {
            k: self.acc.k(),
            noise,
            reg,
            within,
        }
    }

    /// `Some(k(δ))` once the bound has been crossed.
    pub fn decided(&self) -> Option<usize> {
        self.stop
    }

    pub fn steps(&self) -> usize {
        self.acc.k()
    }

    /// Decision given that the run is capped at `k_max`.
    pub fn decision(&self, k_max: usize) -> StopDecision {
        match self.stop {
            Some(k) if k <= k_max => StopDecision {
                k,
                k_max_reached: false,
            },
            _ => StopDecision {
                k: k_max.min(self.acc.k()),
                k_max_reached: true,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{FeSpace, Mesh};
    use proptest::prelude::*;

    fn ones() -> RegularizationSchedule {
        RegularizationSchedule::constant(1.0).unwrap()
    }

    // independent oracle: sums written out directly from the definitions
    fn oracle_sums(alphas: &[f64], delta: f64, kappa: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for k in 1..=alphas.len() {
            let gamma = |i: usize| -> f64 { alphas[..i].iter().map(|a| 1.0 / a).sum() };
            let n: f64 = (1..=k)
                .map(|i| 1.0 / alphas[i - 1].powi(2) + gamma(i - 1).powi(2))
                .sum();
            let r: f64 = (1..=k).map(|i| gamma(i).powf(-kappa) / alphas[i - 1]).sum();
            out.push((delta * delta * n, 1.0 + r));
        }
        out
    }

    #[test]
    fn first_noise_bound() {
        let s = RegularizationSchedule::constant(0.5).unwrap();
        assert!((noise_bound(1, &s, 0.3) - 0.09 * 4.0).abs() < 1e-15);
    }

    #[test]
    fn noise_bound_three_steps() {
        assert!((noise_bound(3, &ones(), 0.1) - 0.08).abs() < 1e-15);
        assert_eq!(noise_bound(7, &ones(), 0.0), 0.0);
    }

    #[test]
    fn reg_bound_values() {
        let r = reg_bound(3, &ones(), Regularity::ActiveSet { kappa: 1.0 });
        assert!((r - 17.0 / 6.0).abs() < 1e-15);
        for k in [1, 5, 100] {
            assert_eq!(reg_bound(k, &ones(), Regularity::SourceCondition), 1.0);
        }
        let r = reg_bound(50, &ones(), Regularity::ActiveSet { kappa: 200.0 });
        assert!((r - 2.0).abs() < 1e-15);
    }

    #[test]
    fn stop_index_eleven() {
        let d = decide_stop(&ones(), 0.1, 1.0, Regularity::ActiveSet { kappa: 1.0 }, 750).unwrap();
        assert_eq!(d, StopDecision { k: 11, k_max_reached: false });
        let sums = oracle_sums(&[1.0; 12], 0.1, 1.0);
        assert!(sums[10].0 <= sums[10].1);
        assert!(sums[11].0 > sums[11].1);
        assert!((sums[11].0 - 5.18).abs() < 1e-12);
    }

    #[test]
    fn huge_noise_stops_at_zero() {
        let d = decide_stop(&ones(), 1e3, 1.0, Regularity::SourceCondition, 10).unwrap();
        assert_eq!(d.k, 0);
        assert!(!d.k_max_reached);
    }

    #[test]
    fn cap_is_flagged() {
        let d = decide_stop(&ones(), 1e-6, 1.0, Regularity::ActiveSet { kappa: 1.0 }, 5).unwrap();
        assert_eq!(d, StopDecision { k: 5, k_max_reached: true });
    }

    #[test]
    fn rule_rejects_bad_parameters() {
        let reg = Regularity::ActiveSet { kappa: 1.0 };
        assert!(decide_stop(&ones(), 0.0, 1.0, reg, 5).is_err());
        assert!(decide_stop(&ones(), 0.1, 0.0, reg, 5).is_err());
        assert!(decide_stop(&ones(), 0.1, 1.0, Regularity::ActiveSet { kappa: 0.0 }, 5).is_err());
    }

    #[test]
    fn strictly_increasing_as_noise_vanishes() {
        let reg = Regularity::ActiveSet { kappa: 1.0 };
        let ks: Vec<usize> = (1..=5)
            .map(|j| decide_stop(&ones(), 10f64.powi(-j), 1.0, reg, 1_000_000).unwrap().k)
            .collect();
        assert!(ks.windows(2).all(|w| w[1] > w[0]), "{ks:?}");
    }

    #[test]
    fn perturb_zero_noise_is_identity() {
        let s = FeSpace::new(Mesh::interval(0.0, 1.0, 16).unwrap()).unwrap();
        let z = s.interpolate(|x| x[0].sin()).unwrap();
        let zd = perturb(&z, NoiseSpec { delta: 0.0, seed: 3 }).unwrap();
        assert_eq!(zd.coeffs(), z.coeffs());
    }

    #[test]
    fn perturb_rejects_negative_noise() {
        let s = FeSpace::new(Mesh::interval(0.0, 1.0, 4).unwrap()).unwrap();
        let z = s.zero_function();
        assert!(perturb(&z, NoiseSpec { delta: -1.0, seed: 0 }).is_err());
    }

    proptest! {
        #[test]
        fn perturb_has_exact_distance(delta in 1e-8f64..10.0, seed in any::<u64>()) {
            let s = FeSpace::new(Mesh::interval(-1.0, 1.0, 40).unwrap()).unwrap();
            let z = s.interpolate(|x| 1.0 - x[0] * x[0]).unwrap();
            let zd = perturb(&z, NoiseSpec { delta, seed }).unwrap();
            let again = perturb(&z, NoiseSpec { delta, seed }).unwrap();
            prop_assert_eq!(zd.coeffs(), again.coeffs());
            let dist = l2_norm(&zd.axpy(-1.0, &z).unwrap());
            prop_assert!(((dist - delta) / delta).abs() <= 1e-13);
        }

        #[test]
        fn bounds_match_direct_sums(
            alphas in proptest::collection::vec(0.05f64..5.0, 1..40),
            delta in 1e-4f64..1.0,
            kappa in 0.1f64..3.0,
        ) {
            let mut acc = BoundAccumulator::new(Regularity::ActiveSet { kappa });
            let oracle = oracle_sums(&alphas, delta, kappa);
            let mut prev = (0.0, 0.0);
            for (a, (n, r)) in alphas.iter().zip(oracle) {
                acc.push(*a);
                let got = (acc.noise_bound(delta), acc.reg_bound());
                prop_assert!((got.0 - n).abs() <= 1e-12 * n.max(1e-300));
                prop_assert!((got.1 - r).abs() <= 1e-12 * r);
                prop_assert!(got.0 >= prev.0 && got.1 >= prev.1);
                prev = got;
            }
        }

        #[test]
        fn smaller_noise_never_stops_earlier(
            d1 in 1e-5f64..1.0,
            shrink in 0.01f64..1.0,
            tau in 0.1f64..1e4,
            kappa in 0.1f64..2.0,
            alpha in 0.1f64..2.0,
        ) {
            let s = RegularizationSchedule::constant(alpha).unwrap();
            let reg = Regularity::ActiveSet { kappa };
            let a = decide_stop(&s, d1, tau, reg, 2000).unwrap();
            let b = decide_stop(&s, d1 * shrink, tau, reg, 2000).unwrap();
            prop_assert!(b.k >= a.k);
            let c = decide_stop(&s, d1, tau * 2.0, reg, 2000).unwrap();
            prop_assert!(c.k >= a.k);
        }
    }
}
