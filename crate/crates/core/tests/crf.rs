mod common;

use common::oracle::brute_crf;
use mder::crf::{self, CrfParams, NUM_TAGS};
use mder::{Tag, Tape, Tensor};
use proptest::prelude::*;
use rand::Rng;

fn random_instance(rng: &mut impl Rng, t: usize, constrained: bool) -> (Vec<[f64; NUM_TAGS]>, CrfParams) {
    let em: Vec<[f64; NUM_TAGS]> = (0..t)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-3.0..3.0)))
        .collect();
    let mut p = if constrained {
        CrfParams::new_constrained()
    } else {
        CrfParams::new_unconstrained()
    };
    for v in p.transitions.data_mut() {
        *v = rng.gen_range(-2.0..2.0);
    }
    for v in p.start.data_mut().iter_mut().chain(p.end.data_mut()) {
        *v = rng.gen_range(-1.0..1.0);
    }
    (em, p)
}

fn tensor(em: &[[f64; NUM_TAGS]]) -> Tensor {
    Tensor::new(vec![em.len(), NUM_TAGS], em.iter().flatten().copied().collect()).unwrap()
}

#[test]
fn forward_viterbi_and_marginals_match_enumeration() {
    let mut rng = common::rng(17);
    for i in 0..300 {
        let t = 1 + i % 5;
        let (em, p) = random_instance(&mut rng, t, i % 2 == 0);
        let oracle = brute_crf(&em, &p);
        let e = tensor(&em);
        let log_z = crf::log_partition(&e, &p).unwrap();
        assert!((log_z - oracle.log_z).abs() <= 1e-8, "instance {i}");
        let (path, score) = crf::viterbi(&e, &p).unwrap();
        let path: Vec<usize> = path.iter().map(|t| t.index()).collect();
        assert!((score - oracle.best_score).abs() <= 1e-8);
        assert!((crf::path_score(&e, &path, &p).unwrap() - oracle.best_score).abs() <= 1e-8);
        let m = crf::marginals(&e, &p).unwrap();
        for (row, want) in m.data().chunks(NUM_TAGS).zip(&oracle.marginals) {
            for (a, b) in row.iter().zip(want) {
                assert!((a - b).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn nll_gradient_is_marginals_minus_gold() {
    let mut rng = common::rng(3);
    for _ in 0..20 {
        let (em, p) = random_instance(&mut rng, 4, true);
        let gold = [Tag::BeginMethod, Tag::InsideMethod, Tag::Outside, Tag::BeginDataset];
        let tape = Tape::new();
        let e = tape.param(tensor(&em));
        let vars = p.on_tape(&tape);
        let nll = crf::TapeCrf::new(&vars).unwrap().nll(e, &gold).unwrap();
        let grads = tape.backward(nll).unwrap();
        let g = grads.get(e).unwrap();
        let m = crf::marginals(&tensor(&em), &p).unwrap();
        for t in 0..4 {
            for y in 0..NUM_TAGS {
                let indicator = if gold[t].index() == y { 1.0 } else { 0.0 };
                assert!((g.get(&[t, y]) - (m.get(&[t, y]) - indicator)).abs() <= 1e-10);
            }
        }
        // and against central differences
        let eps = 1e-5;
        for t in 0..4 {
            for y in 0..NUM_TAGS {
                let mut plus = em.clone();
                plus[t][y] += eps;
                let mut minus = em.clone();
                minus[t][y] -= eps;
                let fd = (crf::nll(&tensor(&plus), &gold, &p).unwrap()
                    - crf::nll(&tensor(&minus), &gold, &p).unwrap())
                    / (2.0 * eps);
                assert!((fd - g.get(&[t, y])).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn long_sequences_stay_finite() {
    let mut rng = common::rng(5);
    let em: Vec<[f64; NUM_TAGS]> = (0..600)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-50.0..50.0)))
        .collect();
    let p = CrfParams::new_constrained();
    let z = crf::log_partition(&tensor(&em), &p).unwrap();
    assert!(z.is_finite());
    let (path, score) = crf::viterbi(&tensor(&em), &p).unwrap();
    assert_eq!(path.len(), 600);
    assert!(score <= z);
}

#[test]
fn constrained_decoding_is_bio_valid() {
    let mut rng = common::rng(8);
    for _ in 0..200 {
        let (em, p) = random_instance(&mut rng, 6, true);
        let (path, _) = crf::viterbi(&tensor(&em), &p).unwrap();
        assert!(mder::corpus::is_bio_valid(&path), "{path:?}");
    }
}

proptest! {
    #[test]
    fn viterbi_score_never_exceeds_log_partition(seed in 0u64..10_000, t in 1usize..8) {
        let mut rng = common::rng(seed);
        let (em, p) = random_instance(&mut rng, t, seed % 2 == 0);
        let e = tensor(&em);
        let (_, best) = crf::viterbi(&e, &p).unwrap();
        let z = crf::log_partition(&e, &p).unwrap();
        prop_assert!(best <= z + 1e-12);
        prop_assert!(z <= best + (t as f64) * (NUM_TAGS as f64).ln() + 1e-9);
    }
}
