//! Randomized checks of the dynamics' guarantees.
//!
//! Every property is a self-oracle: descent of the energy along standard
//! traces, the `2/√M` residual bound, convergence of the standard iteration
//! to a softmax-consistent point, and over-attraction of converged iterates
//! compared to one damped step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{distance, KeyMatrix, UnitVector};
use crate::hopfield::{
    check_descent, check_residual_bound, demonstrate_over_attraction, iterate_standard,
    iterate_standard_unshifted, standard_update, STANDARD_MAX_STEPS, STANDARD_TOL,
};
use crate::sampling::{random_unit, separated_units};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub instances: usize,
    pub seed: u64,
    pub max_keys: usize,
    pub min_dim: usize,
    pub max_dim: usize,
    pub betas: Vec<f64>,
    pub descent_steps: usize,
    pub residual_ms: Vec<usize>,
    /// Largest `M` is only run on every this-many-th instance.
    pub large_m_stride: usize,
    pub convergence_fraction: f64,
    pub reconstruction_tol: f64,
    pub over_attraction_queries: usize,
    pub over_attraction_ratio: f64,
    /// Runs the descent check through the unshifted softmax at β = 10⁶.
    pub inject_overflow_bug: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            instances: 200,
            seed: 0,
            max_keys: 64,
            min_dim: 2,
            max_dim: 32,
            betas: vec![1.0, 5.0, 20.0],
            descent_steps: 100,
            residual_ms: vec![1, 4, 16, 100, 10_000],
            large_m_stride: 10,
            convergence_fraction: 0.99,
            reconstruction_tol: 1e-6,
            over_attraction_queries: 1000,
            over_attraction_ratio: 10.0,
            inject_overflow_bug: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub checked: usize,
    pub violations: usize,
    /// Largest observed value of the quantity that must stay at or below
    /// `limit`.
    pub worst: f64,
    pub limit: f64,
    pub detail: String,
}

impl PropertyResult {
    pub fn line(&self) -> String {
        format!(
            "{}: {} ({} checked, {} violations, worst {:e}, limit {:?}){}",
            self.name,
            if self.passed { "pass" } else { "FAIL" },
            self.checked,
            self.violations,
            self.worst,
            self.limit,
            if self.detail.is_empty() {
                String::new()
            } else {
                format!("; {}", self.detail)
            }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub properties: Vec<PropertyResult>,
    pub elapsed_secs: f64,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }
}

pub struct Instance {
    pub keys: KeyMatrix,
    pub q0: UnitVector,
    pub beta: f64,
}

/// Random unit keys and query with `C` and `d` drawn uniformly.
pub fn random_instances(cfg: &VerifyConfig) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.instances)
        .map(|_| {
            let c = rng.random_range(1..=cfg.max_keys);
            let d = rng.random_range(cfg.min_dim..=cfg.max_dim);
            let beta = cfg.betas[rng.random_range(0..cfg.betas.len())];
            let mut keys = KeyMatrix::with_capacity(d, c);
            for _ in 0..c {
                keys.push(random_unit(&mut rng, d).as_slice())
                    .expect("dimension fixed above");
            }
            Instance {
                keys,
                q0: random_unit(&mut rng, d),
                beta,
            }
        })
        .collect()
}

fn validate(cfg: &VerifyConfig) -> Result<()> {
    if cfg.instances == 0 || cfg.max_keys == 0 || cfg.min_dim == 0 || cfg.min_dim > cfg.max_dim {
        return Err(Error::InvalidConfig(
            "verification needs instances > 0, max_keys > 0 and 0 < min_dim <= max_dim".into(),
        ));
    }
    if cfg.betas.is_empty() || cfg.betas.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::InvalidConfig("betas must be non-empty and positive".into()));
    }
    if cfg.residual_ms.contains(&0) {
        return Err(Error::InvalidConfig("residual bound M values must be >= 1".into()));
    }
    Ok(())
}

pub fn check_descent_property(instances: &[Instance], cfg: &VerifyConfig) -> PropertyResult {
    let mut checked = 0;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut detail = String::new();
    for (i, inst) in instances.iter().enumerate() {
        let trace = if cfg.inject_overflow_bug {
            iterate_standard_unshifted(&inst.q0, &inst.keys, 1e6, cfg.descent_steps, 0.0)
        } else {
            iterate_standard(&inst.q0, &inst.keys, inst.beta, cfg.descent_steps, 0.0)
        };
        match trace {
            Ok(t) => {
                let r = check_descent(&t);
                checked += r.pairs_checked;
                violations += r.violations + usize::from(!r.cumulative_holds);
                worst = worst.max(r.worst_margin);
            }
            Err(e) => {
                violations += 1;
                if detail.is_empty() {
                    detail = format!("instance {i}: {e:?}");
                }
            }
        }
    }
    PropertyResult {
        name: "descent".into(),
        passed: violations == 0,
        checked,
        violations,
        worst,
        limit: 1e-9,
        detail,
    }
}

pub fn check_residual_property(instances: &[Instance], m: usize, stride: usize) -> PropertyResult {
    let bound = 2.0 / (m as f64).sqrt();
    let mut checked = 0;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut detail = String::new();
    for (i, inst) in instances.iter().enumerate().step_by(stride.max(1)) {
        match iterate_standard(&inst.q0, &inst.keys, inst.beta, m, 0.0) {
            Ok(t) => {
                let r = check_residual_bound(&t);
                checked += 1;
                worst = worst.max(r.min_residual);
                if !(r.min_residual <= bound) {
                    violations += 1;
                }
            }
            Err(e) => {
                violations += 1;
                if detail.is_empty() {
                    detail = format!("instance {i}: {e}");
                }
            }
        }
    }
    PropertyResult {
        name: format!("residual M={m}"),
        passed: violations == 0,
        checked,
        violations,
        worst,
        limit: bound,
        detail: format!("bound {bound:?}{}", if detail.is_empty() { String::new() } else { format!("; {detail}") }),
    }
}

pub fn check_energy_gap_property(instances: &[Instance]) -> PropertyResult {
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for inst in instances {
        if let Ok(t) = iterate_standard(&inst.q0, &inst.keys, inst.beta, 0, 0.0) {
            let r = check_residual_bound(&t);
            worst = worst.max(r.energy_gap);
            violations += usize::from(!r.energy_gap_holds);
        } else {
            violations += 1;
        }
    }
    PropertyResult {
        name: "energy gap".into(),
        passed: violations == 0,
        checked: instances.len(),
        violations,
        worst,
        limit: 2.0,
        detail: String::new(),
    }
}

/// Convergence of the standard iteration and softmax consistency of the
/// limit: `‖softmax(β q*Kᵀ)K − q*‖` for every converged `q*`.
pub fn check_convergence_property(instances: &[Instance], cfg: &VerifyConfig) -> PropertyResult {
    let mut converged = 0;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for inst in instances {
        let Ok(t) = iterate_standard(&inst.q0, &inst.keys, inst.beta, STANDARD_MAX_STEPS, STANDARD_TOL) else {
            violations += 1;
            continue;
        };
        if !t.stopped_early {
            continue;
        }
        converged += 1;
        let q = t.final_iterate().as_slice();
        let err = standard_update(q, &inst.keys, inst.beta)
            .and_then(|tq| distance(tq.as_slice(), q))
            .unwrap_or(f64::INFINITY);
        worst = worst.max(err);
        violations += usize::from(!(err <= cfg.reconstruction_tol));
    }
    let fraction = converged as f64 / instances.len().max(1) as f64;
    PropertyResult {
        name: "convergence".into(),
        passed: violations == 0 && fraction >= cfg.convergence_fraction,
        checked: instances.len(),
        violations,
        worst,
        limit: cfg.reconstruction_tol,
        detail: format!("converged fraction {fraction:?} (need {:?})", cfg.convergence_fraction),
    }
}

/// Converged iterates fall into stored basins far more often than one
/// damped step does.
pub fn check_over_attraction_property(cfg: &VerifyConfig) -> Result<PropertyResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x00a7_7ac7);
    let units = separated_units(&mut rng, 16, 8, 0.3);
    let rows: Vec<&[f64]> = units.iter().map(|u| u.as_slice()).collect();
    let keys = KeyMatrix::from_rows(&rows)?;
    let r = demonstrate_over_attraction(&keys, 20.0, cfg.over_attraction_queries, 0.85, 0.1, cfg.seed)?;
    let passed = r.converged_exceed_fraction > 0.0
        && r.converged_exceed_fraction >= cfg.over_attraction_ratio * r.damped_exceed_fraction;
    Ok(PropertyResult {
        name: "over-attraction".into(),
        passed,
        checked: r.n_queries,
        violations: usize::from(!passed),
        worst: r.damped_exceed_fraction,
        limit: r.converged_exceed_fraction / cfg.over_attraction_ratio,
        detail: format!(
            "converged {:?} vs one damped step {:?}",
            r.converged_exceed_fraction, r.damped_exceed_fraction
        ),
    })
}

pub fn run_verification(cfg: &VerifyConfig) -> Result<VerifyReport> {
    validate(cfg)?;
    let start = std::time::Instant::now();
    let instances = random_instances(cfg);
    let mut properties = vec![check_descent_property(&instances, cfg)];
    let largest = cfg.residual_ms.iter().copied().max().unwrap_or(1);
    for &m in &cfg.residual_ms {
        let stride = if m == largest && m > 100 { cfg.large_m_stride } else { 1 };
        properties.push(check_residual_property(&instances, m, stride));
    }
    properties.push(check_energy_gap_property(&instances));
    properties.push(check_convergence_property(&instances, cfg));
    properties.push(check_over_attraction_property(cfg)?);
    Ok(VerifyReport {
        properties,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}
