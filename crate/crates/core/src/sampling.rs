//! Seeded random draws on the unit sphere.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::{dot_unchecked, norm, UnitVector};

/// Uniform draw from the unit sphere in `dim` dimensions.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> UnitVector {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-6 {
            return UnitVector::from_unit(v.into_iter().map(|x| x / n).collect())
                .expect("normalized gaussian draw is a unit vector");
        }
    }
}

/// Uniform unit direction orthogonal to `base` (which must be unit norm).
pub fn random_tangent<R: Rng + ?Sized>(rng: &mut R, base: &[f64]) -> Vec<f64> {
    loop {
        let mut t: Vec<f64> = (0..base.len())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let along = dot_unchecked(&t, base);
        t.iter_mut().zip(base).for_each(|(x, b)| *x -= along * b);
        let n = norm(&t);
        if n > 1e-6 {
            t.iter_mut().for_each(|x| *x /= n);
            return t;
        }
    }
}

/// Rotates the unit vector `base` by `angle` radians toward the orthogonal
/// unit direction `tangent`.
pub fn rotate_toward(base: &[f64], tangent: &[f64], angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    base.iter().zip(tangent).map(|(b, t)| c * b + s * t).collect()
}

/// `count` unit vectors whose pairwise |cosine| stays at or below `max_cos`,
/// found by rejection sampling.
pub fn separated_units<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    count: usize,
    max_cos: f64,
) -> Vec<UnitVector> {
    let mut out: Vec<UnitVector> = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        assert!(
            attempts < 1_000_000,
            "could not place {count} keys with |cos| <= {max_cos} in {dim} dimensions"
        );
        let cand = random_unit(rng, dim);
        if out
            .iter()
            .all(|k| dot_unchecked(k.as_slice(), cand.as_slice()).abs() <= max_cos)
        {
            out.push(cand);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rotation_hits_requested_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let b = random_unit(&mut rng, 12);
            let t = random_tangent(&mut rng, b.as_slice());
            let r = rotate_toward(b.as_slice(), &t, 0.3);
            assert!((norm(&r) - 1.0).abs() < 1e-12);
            assert!((dot_unchecked(&r, b.as_slice()) - 0.3f64.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn separated_units_respect_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ks = separated_units(&mut rng, 16, 8, 0.5);
        for i in 0..ks.len() {
            for j in 0..i {
                assert!(dot_unchecked(ks[i].as_slice(), ks[j].as_slice()).abs() <= 0.5);
            }
        }
    }
}
