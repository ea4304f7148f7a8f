use horen::bench::scaling::match_latency;
use horen::bench::linear_fit;
use horen::codebook::Codebook;
use horen::sampling::random_unit;
use horen::{AdaptorConfig, EditTarget, HopfieldParams, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn match_time_is_linear_in_codebook_size() {
    let dim = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    // A near-one threshold keeps every random edit an insertion.
    let params = HopfieldParams { max_steps: 0, threshold: 0.999_999, ..Default::default() };
    let adaptor = AdaptorConfig { max_steps: 1, ..Default::default() };
    let mut book = Codebook::new(dim);
    let target = EditTarget { label: "x".into(), target_vector: Vector::zeros(dim) };
    let sizes = [1_000usize, 2_000, 4_000, 8_000, 12_000, 16_000];
    let probes: Vec<_> = (0..100).map(|_| random_unit(&mut rng, dim)).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &c in &sizes {
        while book.len() < c {
            book.apply_edit(random_unit(&mut rng, dim).as_slice(), &target, &params, &adaptor).unwrap();
        }
        xs.push(c as f64);
        ys.push(match_latency(&book, &probes, 0.85, 9).unwrap());
    }
    let fit = linear_fit(&xs, &ys);
    assert!(fit.r_squared >= 0.95, "r^2 {} for {:?}", fit.r_squared, ys);
    assert!(fit.slope > 0.0);
}
