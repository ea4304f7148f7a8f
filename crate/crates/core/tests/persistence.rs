use horen::bench::{generate_stream, EditRouter, NormalizedRouter, StreamConfig};
use horen::sampling::random_unit;
use horen::{AdaptorConfig, Codebook, Error, HopfieldParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn filled(n: usize, dim: usize) -> (Codebook, HopfieldParams) {
    let params = HopfieldParams::default();
    let cfg = StreamConfig { n_edits: n, dim, seed: 11, conflict_fraction: 0.05, reassert_fraction: 0.05, ..Default::default() };
    let mut router = NormalizedRouter::new(dim, params, AdaptorConfig::default());
    for s in generate_stream(&cfg).unwrap() {
        router.apply_edit(s.edit_query.as_slice(), &s.target).unwrap();
    }
    (router.book().clone(), params)
}

#[test]
fn ten_thousand_entries_round_trip() {
    let (book, params) = filled(10_000, 32);
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("big.hrn");
    book.save(&file).unwrap();
    let loaded = Codebook::load(&file).unwrap();
    assert_eq!(loaded.len(), book.len());
    assert_eq!(loaded.edits_applied(), book.edits_applied());

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..1000 {
        // Half random probes, half stored keys so that matches occur.
        let q = if i % 2 == 0 {
            random_unit(&mut rng, 32).as_slice().to_vec()
        } else {
            book.key(i * 7 % book.len()).to_vec()
        };
        let a = book.route(&q, &params).unwrap();
        let b = loaded.route(&q, &params).unwrap();
        assert_eq!((a.matched, a.best_index), (b.matched, b.best_index));
        assert_eq!(a.best_score.to_bits(), b.best_score.to_bits());
    }
    for i in (0..book.len()).step_by(97) {
        assert_eq!(book.key(i), loaded.key(i));
        assert_eq!(book.entry(i).label, loaded.entry(i).label);
    }
}

#[test]
fn corrupted_files_are_rejected() {
    let (book, _) = filled(50, 8);
    let bytes = book.to_bytes();
    for cut in [0, 7, 8, 30, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(Codebook::from_bytes(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
    }
    for pos in [0, 12, 40, bytes.len() / 2, bytes.len() - 3] {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x20;
        assert!(matches!(Codebook::from_bytes(&bad), Err(Error::Format(_))), "flip at {pos}");
    }
    let mut extended = bytes.clone();
    extended.push(0);
    assert!(matches!(Codebook::from_bytes(&extended), Err(Error::Format(_))));
}
