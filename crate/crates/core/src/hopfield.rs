//! Hopfield attractor dynamics over a key matrix.
//!
//! Two iterations live here. [`damped_refine`] is what routing uses: each step
//! computes the softmax-weighted recombination of the keys, projects it back
//! onto the sphere, and moves the query a fraction `gamma` toward it.
//! [`iterate_standard`] applies the plain update `T(q) = softmax(β qKᵀ) K`
//! without damping or normalization; it exists so the energy-descent and
//! residual-bound properties of `T` can be checked on concrete traces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    distance_unchecked, dot_unchecked, lse_unchecked, norm, softmax_into, KeyMatrix, UnitVector,
    Vector, ZERO_NORM_FLOOR,
};
use crate::sampling::random_unit;

/// Additive slack on the per-step descent inequality.
pub const DESCENT_SLACK: f64 = 1e-9;
/// Additive slack on the cumulative descent inequality.
pub const CUMULATIVE_SLACK: f64 = 1e-8;

/// Default convergence tolerance and step budget for [`iterate_standard`].
pub const STANDARD_TOL: f64 = 1e-8;
pub const STANDARD_MAX_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HopfieldParams {
    /// Retrieval sharpness.
    pub beta: f64,
    /// Fraction of the way the query moves toward the proposal per step.
    pub gamma: f64,
    /// Maximum refinement steps `M`.
    pub max_steps: usize,
    /// Early-stop tolerance on `‖q_new − q‖₂`.
    pub epsilon: f64,
    /// Cosine matching threshold `c`.
    pub threshold: f64,
}

impl Default for HopfieldParams {
    fn default() -> Self {
        HopfieldParams {
            beta: 20.0,
            gamma: 0.1,
            max_steps: 1,
            epsilon: 1e-4,
            threshold: 0.85,
        }
    }
}

impl HopfieldParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParams(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !self.threshold.is_finite() {
            return Err(Error::InvalidParams("threshold must be finite".into()));
        }
        Ok(())
    }
}

/// Iterates visited by one of the dynamics, with the energy and residual of
/// each. For [`iterate_standard`] the residual is `‖T(q) − q‖₂`; for the
/// damped iteration it is the early-stop statistic `‖q_new − q‖₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub iterates: Vec<Vector>,
    pub energies: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Loop iterations executed, including one that ended in an early stop.
    pub steps_taken: usize,
    pub stopped_early: bool,
    /// Set when a proposal or damped mix had (numerically) zero norm and the
    /// query was held in place.
    pub degenerate: bool,
    pub beta: f64,
    pub n_keys: usize,
}

impl IterationTrace {
    fn start(q0: &[f64], beta: f64, n_keys: usize) -> Self {
        IterationTrace {
            iterates: vec![Vector::new(q0.to_vec()).expect("finite start")],
            energies: Vec::new(),
            residuals: Vec::new(),
            steps_taken: 0,
            stopped_early: false,
            degenerate: false,
            beta,
            n_keys,
        }
    }

    pub fn final_iterate(&self) -> &Vector {
        self.iterates.last().expect("trace always holds the start point")
    }
}

fn require_keys(keys: &KeyMatrix, q: &[f64]) -> Result<()> {
    if keys.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    keys.check_query(q)
}

/// The standard update `T(q) = softmax(β qKᵀ) K`.
pub fn standard_update(q: &[f64], keys: &KeyMatrix, beta: f64) -> Result<Vector> {
    require_keys(keys, q)?;
    let mut scores = vec![0.0; keys.rows()];
    keys.scores_into(q, &mut scores);
    let mut p = vec![0.0; keys.rows()];
    softmax_into(&scores, beta, &mut p);
    let mut out = vec![0.0; keys.dim()];
    keys.combine_into(&p, &mut out);
    Vector::new(out)
}

/// Energy `E(q, K) = ½‖q‖² − lse_β(qKᵀ)`.
pub fn energy(q: &[f64], keys: &KeyMatrix, beta: f64) -> Result<f64> {
    require_keys(keys, q)?;
    let scores = keys.scores(q)?;
    Ok(0.5 * dot_unchecked(q, q) - lse_unchecked(&scores, beta))
}

/// Lower bound `−½ − log(C)/β` on the energy for unit-norm keys.
pub fn energy_floor(n_keys: usize, beta: f64) -> f64 {
    -0.5 - (n_keys as f64).ln() / beta
}

/// Result of the refinement loop, before any matching.
#[derive(Debug, Clone)]
pub(crate) struct Refinement {
    pub query: Vec<f64>,
    /// Scores `qKᵀ` of the final query.
    pub scores: Vec<f64>,
    pub steps_taken: usize,
}

/// Shared loop for the normalized (routing) and unnormalized (ablation)
/// refinements. The early-stop test runs before the damped move.
pub(crate) fn refine_loop(
    q0: &[f64],
    keys: &KeyMatrix,
    params: &HopfieldParams,
    normalized: bool,
    mut trace: Option<&mut IterationTrace>,
) -> Refinement {
    let c = keys.rows();
    let d = keys.dim();
    let mut q = q0.to_vec();
    let mut scores = vec![0.0; c];
    keys.scores_into(&q, &mut scores);
    let mut p = vec![0.0; c];
    let mut proposal = vec![0.0; d];
    let mut steps_taken = 0;
    let mut stopped_early = false;
    let mut degenerate = false;

    for step in 1..=params.max_steps {
        steps_taken = step;
        let lse = softmax_into(&scores, params.beta, &mut p);
        keys.combine_into(&p, &mut proposal);
        let energy = 0.5 * dot_unchecked(&q, &q) - lse;
        if normalized {
            let n = norm(&proposal);
            if n < ZERO_NORM_FLOOR {
                degenerate = true;
                if let Some(t) = trace.as_deref_mut() {
                    t.energies.push(energy);
                    t.residuals.push(distance_unchecked(&proposal, &q));
                }
                break;
            }
            proposal.iter_mut().for_each(|x| *x /= n);
        }
        let residual = distance_unchecked(&proposal, &q);
        if let Some(t) = trace.as_deref_mut() {
            t.energies.push(energy);
            t.residuals.push(residual);
        }
        if residual <= params.epsilon {
            stopped_early = true;
            break;
        }
        let mut mixed: Vec<f64> = q
            .iter()
            .zip(&proposal)
            .map(|(a, b)| (1.0 - params.gamma) * a + params.gamma * b)
            .collect();
        if normalized {
            let n = norm(&mixed);
            if n < ZERO_NORM_FLOOR {
                degenerate = true;
                break;
            }
            mixed.iter_mut().for_each(|x| *x /= n);
        }
        q = mixed;
        keys.scores_into(&q, &mut scores);
        if let Some(t) = trace.as_deref_mut() {
            t.iterates.push(Vector::new(q.clone()).expect("finite iterate"));
        }
    }

    if let Some(t) = trace {
        t.steps_taken = steps_taken;
        t.stopped_early = stopped_early;
        t.degenerate = degenerate;
        if t.energies.len() < t.iterates.len() {
            // Budget exhausted (or M = 0): score the final iterate too.
            let lse = softmax_into(&scores, params.beta, &mut p);
            keys.combine_into(&p, &mut proposal);
            if normalized {
                let n = norm(&proposal);
                if n >= ZERO_NORM_FLOOR {
                    proposal.iter_mut().for_each(|x| *x /= n);
                }
            }
            t.energies.push(0.5 * dot_unchecked(&q, &q) - lse);
            t.residuals.push(distance_unchecked(&proposal, &q));
        }
    }

    Refinement {
        query: q,
        scores,
        steps_taken,
    }
}

/// Damped, normalized refinement of a unit query against the keys.
///
/// Runs at most `params.max_steps` iterations of
/// `q_new = normalize(softmax(β qKᵀ) K)`, stopping before the move once
/// `‖q_new − q‖₂ ≤ ε`, otherwise `q ← normalize((1−γ) q + γ q_new)`.
/// With `max_steps = 0` the query is returned unchanged. A degenerate
/// (zero-norm) proposal or mix leaves `q` where it is and sets
/// [`IterationTrace::degenerate`].
pub fn damped_refine(
    q0: &UnitVector,
    keys: &KeyMatrix,
    params: &HopfieldParams,
) -> Result<(UnitVector, IterationTrace)> {
    require_keys(keys, q0.as_slice())?;
    params.validate()?;
    let mut trace = IterationTrace::start(q0.as_slice(), params.beta, keys.rows());
    let r = refine_loop(q0.as_slice(), keys, params, true, Some(&mut trace));
    // Every accepted iterate was divided by its own norm above.
    let q = UnitVector::from_unit(r.query)?;
    Ok((q, trace))
}

/// Refinement with both normalizations removed: `q_new = softmax(β qKᵀ) K`
/// and `q ← (1−γ) q + γ q_new` on raw vectors. Only used by the
/// normalization ablation.
pub fn refine_unnormalized(
    q0: &[f64],
    keys: &KeyMatrix,
    params: &HopfieldParams,
) -> Result<(Vector, IterationTrace)> {
    require_keys(keys, q0)?;
    params.validate()?;
    let mut trace = IterationTrace::start(q0, params.beta, keys.rows());
    let r = refine_loop(q0, keys, params, false, Some(&mut trace));
    Ok((Vector::new(r.query)?, trace))
}

/// Repeatedly applies the undamped, unnormalized map `T`, recording the
/// energy and residual `‖T(q) − q‖₂` of every iterate. Stops when a residual
/// is at most `tol` (that iterate is kept as the last one) or after
/// `max_steps` applications of `T`.
pub fn iterate_standard(
    q0: &UnitVector,
    keys: &KeyMatrix,
    beta: f64,
    max_steps: usize,
    tol: f64,
) -> Result<IterationTrace> {
    iterate_map(q0.as_slice(), keys, beta, max_steps, tol, false)
}

fn iterate_map(
    q0: &[f64],
    keys: &KeyMatrix,
    beta: f64,
    max_steps: usize,
    tol: f64,
    unshifted_softmax: bool,
) -> Result<IterationTrace> {
    require_keys(keys, q0)?;
    if !(beta > 0.0) {
        return Err(Error::InvalidParams(format!("beta must be > 0, got {beta}")));
    }
    let c = keys.rows();
    let mut trace = IterationTrace::start(q0, beta, c);
    let mut q = q0.to_vec();
    let mut scores = vec![0.0; c];
    let mut p = vec![0.0; c];
    let mut next = vec![0.0; keys.dim()];
    loop {
        keys.scores_into(&q, &mut scores);
        let lse = if unshifted_softmax {
            let naive = crate::geometry::softmax_unshifted(&scores, beta);
            p.copy_from_slice(&naive);
            let total: f64 = scores.iter().map(|x| (beta * x).exp()).sum();
            total.ln() / beta
        } else {
            softmax_into(&scores, beta, &mut p)
        };
        keys.combine_into(&p, &mut next);
        let energy = 0.5 * dot_unchecked(&q, &q) - lse;
        let residual = distance_unchecked(&next, &q);
        if !energy.is_finite() || !residual.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: trace.steps_taken,
            });
        }
        trace.energies.push(energy);
        trace.residuals.push(residual);
        if residual <= tol {
            trace.stopped_early = true;
            break;
        }
        if trace.steps_taken == max_steps {
            break;
        }
        std::mem::swap(&mut q, &mut next);
        trace.steps_taken += 1;
        trace.iterates.push(Vector::new(q.clone())?);
    }
    Ok(trace)
}

/// [`iterate_standard`] with the max-shift removed from the softmax. Exists
/// only so the verification harness can show that its finiteness checks
/// catch overflow.
pub fn iterate_standard_unshifted(
    q0: &UnitVector,
    keys: &KeyMatrix,
    beta: f64,
    max_steps: usize,
    tol: f64,
) -> Result<IterationTrace> {
    iterate_map(q0.as_slice(), keys, beta, max_steps, tol, true)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentReport {
    pub pairs_checked: usize,
    pub violations: usize,
    /// Largest `(E_{s+1} − E_s) + ½‖Δ‖²`; non-positive when descent holds exactly.
    pub worst_margin: f64,
    /// `Σ ‖Δs‖²` over the trace.
    pub sum_sq_steps: f64,
    /// `2 (E_0 − E_last)`.
    pub twice_energy_drop: f64,
    pub cumulative_holds: bool,
}

impl DescentReport {
    pub fn holds(&self) -> bool {
        self.violations == 0 && self.cumulative_holds
    }
}

/// Checks `E_{s+1} − E_s ≤ −½‖q_{s+1} − q_s‖² + 1e-9` for every consecutive
/// pair of a standard trace, and the summed form
/// `Σ‖Δs‖² ≤ 2(E_0 − E_M) + 1e-8`.
pub fn check_descent(trace: &IterationTrace) -> DescentReport {
    let n = trace.iterates.len().min(trace.energies.len());
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut sum_sq = 0.0;
    for s in 0..n.saturating_sub(1) {
        let a = trace.iterates[s].as_slice();
        let b = trace.iterates[s + 1].as_slice();
        let step_sq = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        sum_sq += step_sq;
        let margin = (trace.energies[s + 1] - trace.energies[s]) + 0.5 * step_sq;
        worst = worst.max(margin);
        if !(margin <= DESCENT_SLACK) {
            violations += 1;
        }
    }
    let twice_drop = if n == 0 {
        0.0
    } else {
        2.0 * (trace.energies[0] - trace.energies[n - 1])
    };
    DescentReport {
        pairs_checked: n.saturating_sub(1),
        violations,
        worst_margin: if n > 1 { worst } else { 0.0 },
        sum_sq_steps: sum_sq,
        twice_energy_drop: twice_drop,
        cumulative_holds: sum_sq <= twice_drop + CUMULATIVE_SLACK,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    /// Number of leading iterates the bound is taken over.
    pub m: usize,
    pub min_residual: f64,
    /// `2/√M`.
    pub bound: f64,
    pub residual_holds: bool,
    /// `E(q⁽⁰⁾) − (−½ − log C/β)`.
    pub energy_gap: f64,
    pub energy_gap_holds: bool,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.residual_holds && self.energy_gap_holds
    }
}

/// Checks `min_{s<M} ‖T(q⁽ˢ⁾) − q⁽ˢ⁾‖ ≤ 2/√M` on a standard trace started
/// from a unit query with unit keys, together with the constant chain
/// `E(q⁽⁰⁾) − E_inf ≤ 2`.
///
/// `M` is the number of applications of `T`; when the trace stopped on its
/// tolerance the converged iterate's residual is also a genuine residual, so
/// it is included and `M` grows by one.
pub fn check_residual_bound(trace: &IterationTrace) -> BoundReport {
    let m = (trace.steps_taken + usize::from(trace.stopped_early))
        .max(1)
        .min(trace.residuals.len());
    let min_residual = trace.residuals[..m]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let bound = 2.0 / (m as f64).sqrt();
    let gap = trace.energies[0] - energy_floor(trace.n_keys, trace.beta);
    BoundReport {
        m,
        min_residual,
        bound,
        residual_holds: min_residual <= bound,
        energy_gap: gap,
        energy_gap_holds: gap <= 2.0 + DESCENT_SLACK,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverAttractionReport {
    pub n_queries: usize,
    /// Fraction whose renormalized converged fixed point has cosine above `c`
    /// with some key.
    pub converged_exceed_fraction: f64,
    /// Same fraction after one damped refinement.
    pub damped_exceed_fraction: f64,
    pub mean_converged_displacement: f64,
    pub mean_damped_displacement: f64,
    /// Queries for which the standard iteration hit its step budget.
    pub not_converged: usize,
}

/// Runs random unrelated unit queries through the standard iteration to
/// convergence and through one damped step, and compares how often each ends
/// up inside a stored basin.
pub fn demonstrate_over_attraction(
    keys: &KeyMatrix,
    beta: f64,
    n_queries: usize,
    threshold: f64,
    gamma: f64,
    seed: u64,
) -> Result<OverAttractionReport> {
    if keys.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    let damped = HopfieldParams {
        beta,
        gamma,
        max_steps: 1,
        epsilon: 0.0,
        threshold,
    };
    damped.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut converged_hits = 0usize;
    let mut damped_hits = 0usize;
    let mut conv_disp = 0.0;
    let mut damp_disp = 0.0;
    let mut not_converged = 0usize;
    for _ in 0..n_queries {
        let q0 = random_unit(&mut rng, keys.dim());
        let trace = iterate_standard(&q0, keys, beta, STANDARD_MAX_STEPS, STANDARD_TOL)?;
        if !trace.stopped_early {
            not_converged += 1;
        }
        let fixed = trace.final_iterate().as_slice();
        let n = norm(fixed);
        if n >= ZERO_NORM_FLOOR {
            let dir: Vec<f64> = fixed.iter().map(|x| x / n).collect();
            conv_disp += distance_unchecked(&dir, q0.as_slice());
            if max_cosine(keys, &dir) > threshold {
                converged_hits += 1;
            }
        }
        let (q, _) = damped_refine(&q0, keys, &damped)?;
        damp_disp += distance_unchecked(q.as_slice(), q0.as_slice());
        if max_cosine(keys, q.as_slice()) > threshold {
            damped_hits += 1;
        }
    }
    let n = n_queries.max(1) as f64;
    Ok(OverAttractionReport {
        n_queries,
        converged_exceed_fraction: converged_hits as f64 / n,
        damped_exceed_fraction: damped_hits as f64 / n,
        mean_converged_displacement: conv_disp / n,
        mean_damped_displacement: damp_disp / n,
        not_converged,
    })
}

fn max_cosine(keys: &KeyMatrix, q: &[f64]) -> f64 {
    keys.iter_rows()
        .map(|k| dot_unchecked(k, q))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::normalize;
    use crate::sampling::separated_units;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn keys(rows: &[&[f64]]) -> KeyMatrix {
        KeyMatrix::from_rows(rows).unwrap()
    }

    fn random_keys(rng: &mut ChaCha8Rng, c: usize, d: usize) -> KeyMatrix {
        let rows: Vec<UnitVector> = (0..c).map(|_| random_unit(rng, d)).collect();
        KeyMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn standard_update_examples() {
        let k = keys(&[&[0.6, 0.8]]);
        assert_eq!(standard_update(&[0.3, -2.0], &k, 7.0).unwrap().as_slice(), &[0.6, 0.8]);

        let k = keys(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        let t = standard_update(&[0.0, 1.0], &k, 20.0).unwrap();
        assert_eq!(t.as_slice(), &[0.0, 0.0]);

        // w = 1 / (e^20 + 1) from 50-digit arithmetic.
        let w = 2.061_153_618_190_203_6e-9;
        let k = keys(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let t = standard_update(&[1.0, 0.0], &k, 20.0).unwrap();
        assert_abs_diff_eq!(t.as_slice()[0], 1.0 - w, epsilon = 4e-16);
        assert_abs_diff_eq!(t.as_slice()[1], w, epsilon = 1e-20);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let empty = KeyMatrix::new(2);
        assert!(matches!(standard_update(&[1.0, 0.0], &empty, 1.0), Err(Error::EmptyCodebook)));
        assert!(matches!(energy(&[1.0, 0.0], &empty, 1.0), Err(Error::EmptyCodebook)));
        let k = keys(&[&[1.0, 0.0]]);
        assert!(matches!(
            standard_update(&[1.0, 0.0, 0.0], &k, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn energy_examples() {
        let k = keys(&[&[0.0, 1.0]]);
        assert_abs_diff_eq!(energy(&[0.0, 1.0], &k, 20.0).unwrap(), -0.5, epsilon = 1e-15);
        let k = keys(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        // ½ − log 2
        assert_abs_diff_eq!(energy(&[0.0, 1.0], &k, 1.0).unwrap(), -0.193_147_180_559_945_3, epsilon = 1e-15);
    }

    #[test]
    fn energy_lower_bound_on_random_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = random_keys(&mut rng, 8, 6);
        let floor = energy_floor(8, 20.0);
        assert_abs_diff_eq!(floor, -0.603_972_077_083_991_8, epsilon = 1e-15);
        for _ in 0..1000 {
            let q = random_unit(&mut rng, 6);
            assert!(energy(q.as_slice(), &k, 20.0).unwrap() >= floor);
        }
    }

    #[test]
    fn damped_refine_fixed_point_stops_early() {
        let k = keys(&[&[0.6, 0.8]]);
        let q0 = normalize(&[0.6, 0.8]).unwrap();
        let (q, trace) = damped_refine(&q0, &k, &HopfieldParams::default()).unwrap();
        assert_eq!(q, q0);
        assert!(trace.stopped_early);
        assert_eq!(trace.steps_taken, 1);
        assert_eq!(trace.residuals, vec![0.0]);
    }

    #[test]
    fn damped_refine_single_step_closed_form() {
        let k = keys(&[&[1.0, 0.0, 0.0]]);
        let q0 = UnitVector::basis(3, 1);
        let (q, trace) = damped_refine(&q0, &k, &HopfieldParams::default()).unwrap();
        // normalize(0.9 e2 + 0.1 e1): cosine with e1 is 0.1 / sqrt(0.82).
        assert_abs_diff_eq!(q.as_slice()[0], 0.110_431_526_074_846_56, epsilon = 1e-15);
        assert_eq!(trace.steps_taken, 1);
        assert!(!trace.stopped_early);
        assert_eq!(trace.iterates.len(), 2);
        assert_eq!(trace.energies.len(), 2);
        assert_eq!(trace.residuals.len(), 2);
    }

    #[test]
    fn zero_steps_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = random_keys(&mut rng, 5, 4);
        let q0 = random_unit(&mut rng, 4);
        let p = HopfieldParams { max_steps: 0, ..Default::default() };
        let (q, trace) = damped_refine(&q0, &k, &p).unwrap();
        assert_eq!(q, q0);
        assert_eq!(trace.steps_taken, 0);
        assert_eq!(trace.iterates.len(), 1);
        assert_eq!(trace.energies.len(), 1);
    }

    #[test]
    fn antipodal_cancellation_holds_query() {
        let k = keys(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        let q0 = UnitVector::basis(2, 1);
        let (q, trace) = damped_refine(&q0, &k, &HopfieldParams::default()).unwrap();
        assert_eq!(q, q0);
        assert!(trace.degenerate);
    }

    #[test]
    fn standard_iteration_single_key() {
        let k = keys(&[&[0.0, 1.0]]);
        let q0 = UnitVector::basis(2, 0);
        let trace = iterate_standard(&q0, &k, 20.0, 100, 1e-8).unwrap();
        assert_eq!(trace.steps_taken, 1);
        assert_eq!(trace.final_iterate().as_slice(), &[0.0, 1.0]);
        assert_eq!(*trace.residuals.last().unwrap(), 0.0);
        let d = check_descent(&trace);
        assert!(d.holds());
        // One key jumps the whole way in one step: descent holds with equality.
        assert_abs_diff_eq!(d.worst_margin, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(trace.energies[1], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn standard_iteration_converges_into_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let k = random_keys(&mut rng, 16, 8);
        let q0 = random_unit(&mut rng, 8);
        let trace = iterate_standard(&q0, &k, 20.0, 500, 1e-8).unwrap();
        assert!(*trace.residuals.last().unwrap() <= 1e-8);
        let x = trace.final_iterate().as_slice();
        let t = standard_update(x, &k, 20.0).unwrap();
        let err = distance_unchecked(t.as_slice(), x);
        assert!(err <= 1e-6);
        assert!(trace.energies.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn residual_bound_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = random_keys(&mut rng, 32, 16);
        let q0 = random_unit(&mut rng, 16);
        let t = iterate_standard(&q0, &k, 5.0, 1, 0.0).unwrap();
        let r = check_residual_bound(&t);
        assert_eq!(r.m, 1);
        assert_eq!(r.bound, 2.0);
        assert!(r.holds());
        let t = iterate_standard(&q0, &k, 5.0, 4, 0.0).unwrap();
        let r = check_residual_bound(&t);
        assert_eq!(r.bound, 1.0);
        assert!(r.holds());
    }

    #[test]
    fn over_attraction_single_key() {
        let k = keys(&[&[1.0, 0.0, 0.0]]);
        let r = demonstrate_over_attraction(&k, 20.0, 50, 0.85, 0.1, 1).unwrap();
        assert_eq!(r.converged_exceed_fraction, 1.0);
    }

    #[test]
    fn over_attraction_gap_on_separated_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = KeyMatrix::from_rows(&separated_units(&mut rng, 16, 8, 0.3)).unwrap();
        let r = demonstrate_over_attraction(&k, 20.0, 300, 0.85, 0.1, 2).unwrap();
        assert!(r.converged_exceed_fraction >= 0.9, "{r:?}");
        assert!(r.damped_exceed_fraction <= 0.05, "{r:?}");
    }

    #[test]
    fn full_step_moves_further_than_damped_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = random_keys(&mut rng, 8, 16);
        let slow = HopfieldParams { epsilon: 0.0, ..Default::default() };
        let fast = HopfieldParams { gamma: 1.0, ..slow };
        for _ in 0..200 {
            let q0 = random_unit(&mut rng, 16);
            let (a, _) = damped_refine(&q0, &k, &slow).unwrap();
            let (b, _) = damped_refine(&q0, &k, &fast).unwrap();
            let da = distance_unchecked(a.as_slice(), q0.as_slice());
            let db = distance_unchecked(b.as_slice(), q0.as_slice());
            assert!(db > da);
        }
    }

    #[test]
    fn unshifted_softmax_overflows() {
        let k = keys(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let q0 = UnitVector::basis(2, 0);
        assert!(matches!(
            iterate_standard_unshifted(&q0, &k, 1e6, 10, 1e-8),
            Err(Error::NonFiniteLoss { .. })
        ));
        assert!(iterate_standard(&q0, &k, 1e6, 10, 1e-8).is_ok());
    }

    #[test]
    fn params_validation() {
        assert!(HopfieldParams::default().validate().is_ok());
        for bad in [
            HopfieldParams { beta: 0.0, ..Default::default() },
            HopfieldParams { gamma: 0.0, ..Default::default() },
            HopfieldParams { gamma: 1.5, ..Default::default() },
            HopfieldParams { epsilon: -1.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    fn instance() -> impl Strategy<Value = (u64, usize, usize, f64)> {
        (any::<u64>(), 1usize..24, 2usize..12, prop_oneof![Just(1.0), Just(5.0), Just(20.0)])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn damped_step_displacement_bounded((seed, c, d, _b) in instance(), gamma in 0.01f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = random_keys(&mut rng, c, d);
            let q0 = random_unit(&mut rng, d);
            let p = HopfieldParams { gamma, epsilon: 0.0, ..Default::default() };
            let (q, _) = damped_refine(&q0, &k, &p).unwrap();
            prop_assert!(distance_unchecked(q.as_slice(), q0.as_slice()) <= 4.0 * gamma + 1e-12);
        }

        #[test]
        fn damped_iterates_stay_on_sphere((seed, c, d, beta) in instance(), steps in 0usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = random_keys(&mut rng, c, d);
            let q0 = random_unit(&mut rng, d);
            let p = HopfieldParams { beta, max_steps: steps, gamma: 0.5, ..Default::default() };
            let (_, trace) = damped_refine(&q0, &k, &p).unwrap();
            for it in &trace.iterates {
                prop_assert!((it.norm() - 1.0).abs() <= 1e-9);
            }
            prop_assert_eq!(trace.iterates.len(), trace.energies.len());
            prop_assert_eq!(trace.iterates.len(), trace.residuals.len());
        }

        #[test]
        fn standard_traces_descend((seed, c, d, beta) in instance()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = random_keys(&mut rng, c, d);
            let q0 = random_unit(&mut rng, d);
            let trace = iterate_standard(&q0, &k, beta, 100, 0.0).unwrap();
            let report = check_descent(&trace);
            prop_assert!(report.holds(), "{:?}", report);
            prop_assert!(check_residual_bound(&trace).holds());
        }

        #[test]
        fn fixed_points_are_closed((seed, c, d) in (any::<u64>(), 1usize..8, 2usize..6)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = random_keys(&mut rng, c, d);
            let q0 = random_unit(&mut rng, d);
            let trace = iterate_standard(&q0, &k, 20.0, STANDARD_MAX_STEPS, 1e-13).unwrap();
            prop_assume!(trace.stopped_early);
            let x = trace.final_iterate().as_slice();
            let t = standard_update(x, &k, 20.0).unwrap();
            prop_assert!(distance_unchecked(t.as_slice(), x) <= 1e-10);
        }
    }
}
