//! Synthetic edit streams.
//!
//! Every edit gets a random key direction on the sphere. Its paraphrase is
//! the same direction rotated by a bounded angle, and its locality probe is
//! either a fresh uniform direction or (in hard mode) a direction at a fixed
//! angle from some already-issued edit. Raw queries carry a random gain in
//! `[1, 1 + magnitude_jitter]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adaptor::{EditTarget, EntryLabel};
use crate::error::{Error, Result};
use crate::geometry::Vector;
use crate::sampling::{random_tangent, random_unit, rotate_toward};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    pub n_edits: usize,
    pub dim: usize,
    /// Maximum rotation (radians) between an edit and its paraphrase.
    pub paraphrase_angle: f64,
    pub hard_locality: bool,
    /// Angle of hard-mode locality probes from their anchor edit; defaults
    /// to twice the paraphrase angle.
    pub locality_angle: Option<f64>,
    pub seed: u64,
    pub magnitude_jitter: f64,
    /// Fraction of edits that replay an earlier edit with its own label.
    pub reassert_fraction: f64,
    /// Fraction of edits that replay an earlier edit under a new label.
    pub conflict_fraction: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            n_edits: 1000,
            dim: 64,
            paraphrase_angle: 0.25,
            hard_locality: false,
            locality_angle: None,
            seed: 0,
            magnitude_jitter: 0.0,
            reassert_fraction: 0.0,
            conflict_fraction: 0.0,
        }
    }
}

impl StreamConfig {
    pub fn locality_angle(&self) -> f64 {
        self.locality_angle.unwrap_or(2.0 * self.paraphrase_angle)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_edits == 0 {
            return bad("n_edits must be at least 1".into());
        }
        if self.dim < 2 {
            return bad(format!("dim must be at least 2, got {}", self.dim));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.paraphrase_angle) {
            return bad(format!(
                "paraphrase_angle must lie in [0, pi/2), got {}",
                self.paraphrase_angle
            ));
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.locality_angle()) {
            return bad(format!("locality_angle must lie in [0, pi], got {}", self.locality_angle()));
        }
        if !(self.magnitude_jitter >= 0.0 && self.magnitude_jitter.is_finite()) {
            return bad(format!("magnitude_jitter must be >= 0, got {}", self.magnitude_jitter));
        }
        let (r, c) = (self.reassert_fraction, self.conflict_fraction);
        if !(r >= 0.0 && c >= 0.0 && r + c <= 1.0) {
            return bad(format!("replay fractions must be >= 0 and sum to <= 1, got {r} and {c}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EditSample {
    pub index: usize,
    pub edit_query: Vector,
    pub paraphrase_query: Vector,
    pub locality_query: Vector,
    pub label: EntryLabel,
    pub target: EditTarget,
}

pub fn generate_stream(cfg: &StreamConfig) -> Result<Vec<EditSample>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    // Unit key direction and target of every edit issued so far.
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_edits);
    let mut out: Vec<EditSample> = Vec::with_capacity(cfg.n_edits);
    let mut next_fact = 0usize;

    for t in 0..cfg.n_edits {
        let roll: f64 = rng.random();
        let (direction, label, target_vector) = if t > 0 && roll < cfg.reassert_fraction {
            let s = rng.random_range(0..t);
            let prev = &out[s];
            (directions[s].clone(), prev.label.clone(), prev.target.target_vector.clone())
        } else if t > 0 && roll < cfg.reassert_fraction + cfg.conflict_fraction {
            let s = rng.random_range(0..t);
            let label = EntryLabel(format!("fact-{next_fact}"));
            next_fact += 1;
            (directions[s].clone(), label, random_unit(&mut rng, d).into())
        } else {
            let key = random_unit(&mut rng, d).into_inner();
            let label = EntryLabel(format!("fact-{next_fact}"));
            next_fact += 1;
            (key, label, random_unit(&mut rng, d).into())
        };

        let gain = |rng: &mut ChaCha8Rng| 1.0 + cfg.magnitude_jitter * rng.random::<f64>();
        let g = gain(&mut rng);
        let edit_query: Vec<f64> = direction.iter().map(|x| x * g).collect();

        let angle = cfg.paraphrase_angle * rng.random::<f64>();
        let tangent = random_tangent(&mut rng, &direction);
        let g = gain(&mut rng);
        let paraphrase: Vec<f64> = rotate_toward(&direction, &tangent, angle)
            .into_iter()
            .map(|x| x * g)
            .collect();

        let probe = if cfg.hard_locality {
            let anchor = rng.random_range(0..=t);
            let anchor_dir = if anchor == t { &direction } else { &directions[anchor] };
            let tangent = random_tangent(&mut rng, anchor_dir);
            rotate_toward(anchor_dir, &tangent, cfg.locality_angle())
        } else {
            random_unit(&mut rng, d).into_inner()
        };
        let g = gain(&mut rng);
        let locality: Vec<f64> = probe.into_iter().map(|x| x * g).collect();

        directions.push(direction);
        out.push(EditSample {
            index: t,
            edit_query: Vector::new(edit_query)?,
            paraphrase_query: Vector::new(paraphrase)?,
            locality_query: Vector::new(locality)?,
            target: EditTarget {
                label: label.clone(),
                target_vector,
            },
            label,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dot_unchecked, normalize};

    fn angle(a: &Vector, b: &Vector) -> f64 {
        let ua = normalize(a.as_slice()).unwrap();
        let ub = normalize(b.as_slice()).unwrap();
        dot_unchecked(ua.as_slice(), ub.as_slice()).clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn zero_angle_paraphrase_is_the_edit_direction() {
        let cfg = StreamConfig { n_edits: 1, dim: 3, paraphrase_angle: 0.0, ..Default::default() };
        let s = generate_stream(&cfg).unwrap();
        let a = normalize(s[0].edit_query.as_slice()).unwrap();
        let b = normalize(s[0].paraphrase_query.as_slice()).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn seeded_streams_are_identical() {
        let cfg = StreamConfig { n_edits: 1000, dim: 64, seed: 42, magnitude_jitter: 1.0, ..Default::default() };
        let a = serde_json::to_vec(&generate_stream(&cfg).unwrap()).unwrap();
        let b = serde_json::to_vec(&generate_stream(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = serde_json::to_vec(&generate_stream(&StreamConfig { seed: 43, ..cfg }).unwrap()).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn paraphrase_angles_fill_the_band() {
        let cfg = StreamConfig { n_edits: 10_000, dim: 16, paraphrase_angle: 0.3, seed: 7, magnitude_jitter: 0.5, ..Default::default() };
        let s = generate_stream(&cfg).unwrap();
        let angles: Vec<f64> = s.iter().map(|e| angle(&e.edit_query, &e.paraphrase_query)).collect();
        let max = angles.iter().copied().fold(0.0, f64::max);
        let min = angles.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(max <= 0.3 + 1e-9);
        assert!(max > 0.29 && min < 0.01);
        // Roughly uniform: each tenth of the band gets 10% ± 2%.
        for b in 0..10 {
            let lo = 0.03 * b as f64;
            let n = angles.iter().filter(|&&a| a >= lo && a < lo + 0.03).count();
            assert!((800..=1200).contains(&n), "bin {b}: {n}");
        }
    }

    #[test]
    fn gains_stay_in_range() {
        let cfg = StreamConfig { n_edits: 500, dim: 8, magnitude_jitter: 1.0, seed: 1, ..Default::default() };
        for e in generate_stream(&cfg).unwrap() {
            for v in [&e.edit_query, &e.paraphrase_query, &e.locality_query] {
                assert!((1.0 - 1e-12..=2.0 + 1e-12).contains(&v.norm()));
            }
        }
    }

    #[test]
    fn hard_locality_sits_at_fixed_angle_from_an_edit() {
        let cfg = StreamConfig { n_edits: 200, dim: 32, hard_locality: true, paraphrase_angle: 0.2, seed: 3, ..Default::default() };
        let s = generate_stream(&cfg).unwrap();
        for (t, e) in s.iter().enumerate() {
            let closest = s[..=t]
                .iter()
                .map(|o| angle(&o.edit_query, &e.locality_query))
                .fold(f64::INFINITY, f64::min);
            assert!(closest <= 0.4 + 1e-9);
        }
    }

    #[test]
    fn replays_reuse_directions() {
        let cfg = StreamConfig { n_edits: 300, dim: 16, reassert_fraction: 0.2, conflict_fraction: 0.2, seed: 9, ..Default::default() };
        let s = generate_stream(&cfg).unwrap();
        let repeated = s.iter().filter(|e| s.iter().filter(|o| o.label == e.label).count() > 1).count();
        assert!(repeated > 0);
        let mut labels: Vec<_> = s.iter().map(|e| e.label.clone()).collect();
        labels.sort();
        labels.dedup();
        assert!(labels.len() < s.len());
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            StreamConfig { n_edits: 0, ..Default::default() },
            StreamConfig { dim: 1, ..Default::default() },
            StreamConfig { paraphrase_angle: 2.0, ..Default::default() },
            StreamConfig { magnitude_jitter: -1.0, ..Default::default() },
            StreamConfig { reassert_fraction: 0.7, conflict_fraction: 0.7, ..Default::default() },
        ] {
            assert!(matches!(generate_stream(&cfg), Err(Error::InvalidConfig(_))));
        }
    }
}
