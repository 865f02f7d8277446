use std::sync::Arc;

use chgnn_core::gradcheck::{compare, numeric_gradient};
use chgnn_core::sparse::CsrMatrix;
use chgnn_core::synthetic::toy_instance;
use chgnn_core::viewgen::{apply_augmentation, sample_augmentation, similarity_loss, AugOp, ViewGenerator};
use chgnn_core::{Matrix, ParamStore, RngState, Tape};

fn frequencies(logits: &[f64], draws: usize, seed: u64) -> [f64; 3] {
    let mut rng = RngState::new(seed);
    let mut counts = [0usize; 3];
    let rows = draws / 100;
    for _ in 0..100 {
        let mut tape = Tape::new();
        let l = tape.constant(Matrix::new(rows, 3, logits.repeat(rows)));
        let aug = sample_augmentation(&mut tape, l, 1.0, &mut rng).unwrap();
        for op in aug.ops {
            counts[op as usize] += 1;
        }
    }
    counts.map(|c| c as f64 / draws as f64)
}

#[test]
fn sampling_frequencies() {
    let peaked = frequencies(&[10.0, 0.0, 0.0], 10_000, 1);
    assert!(peaked[0] > 0.99);
    let flat = frequencies(&[0.0, 0.0, 0.0], 10_000, 2);
    for f in flat {
        assert!((f - 1.0 / 3.0).abs() < 0.02, "{flat:?}");
    }
}

#[test]
fn masked_fraction_matches_probabilities() {
    let (h, _) = toy_instance(0);
    let mut stats = h.structural_stats(0.2, 0.8).unwrap();
    stats.mask_prob = (0..8).map(|v| 0.1 * v as f64).collect();
    let ops = vec![AugOp::Mask; h.num_hyperedges()];
    let mut rng = RngState::new(5);
    let mut kept = vec![0usize; 8];
    let mut seen = vec![0usize; 8];
    for _ in 0..10_000 {
        let (surv, eff) = apply_augmentation(&h, &ops, &stats, &mut rng).unwrap();
        for (j, e) in h.hyperedges().iter().enumerate() {
            for &v in e {
                seen[v] += 1;
            }
            if let Some((_, members)) = surv.iter().find(|(k, _)| *k == j) {
                assert_ne!(eff[j], AugOp::Remove);
                for &v in members {
                    kept[v] += 1;
                }
            }
        }
    }
    for v in 0..8 {
        let dropped = 1.0 - kept[v] as f64 / seen[v] as f64;
        assert!((dropped - stats.mask_prob[v]).abs() < 0.02, "node {v}: {dropped}");
    }
}

fn generator_setup() -> (ParamStore, ViewGenerator, Arc<CsrMatrix>, Arc<chgnn_core::sparse::Incidence>) {
    let (h, _) = toy_instance(4);
    let mut params = ParamStore::new();
    let mut rng = RngState::new(6);
    let g = ViewGenerator::new(&mut params, "g", 5, 4, 1.0, &mut rng).unwrap();
    for id in params.ids().collect::<Vec<_>>() {
        params.get_mut(id).data_mut().iter_mut().for_each(|w| *w += 0.05 * rng.normal());
    }
    let f = h.features();
    let feats = Arc::new(CsrMatrix::from_dense(f.rows(), f.cols(), f.data()));
    (params, g, feats, Arc::new(h.incidence()))
}

#[test]
fn shared_generator_and_noise_give_zero_similarity() {
    let (params, g, feats, inc) = generator_setup();
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let logits = g.logits(&mut tape, &bound, &feats, &inc).unwrap();
    let a = sample_augmentation(&mut tape, logits, 1.0, &mut RngState::new(3)).unwrap();
    let b = sample_augmentation(&mut tape, logits, 1.0, &mut RngState::new(3)).unwrap();
    let l = similarity_loss(&mut tape, &a, &b).unwrap();
    assert_eq!(tape.scalar(l), 0.0);
    assert_eq!(a.ops, b.ops);
}

#[test]
fn generator_gradients_match_finite_differences() {
    let (params, g, feats, inc) = generator_setup();
    let other: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 / 5.0).collect();
    let build = |p: &ParamStore, tape: &mut Tape| {
        let bound = p.bind(tape);
        let m_e = g.hyperconv_embed(tape, &bound, &feats, &inc).unwrap();
        let logits = g.head_logits(tape, &bound, m_e);
        let a = sample_augmentation(tape, logits, 1.0, &mut RngState::new(1)).unwrap();
        let target = tape.constant(Matrix::new(4, 3, other.clone()));
        let b = chgnn_core::viewgen::AugmentationVector {
            soft_probs: target,
            op_assignments: target,
            ops: vec![],
        };
        let sim = similarity_loss(tape, &a, &b).unwrap();
        let sq = tape.mul(m_e, m_e);
        let reg = tape.mean(sq);
        (bound, tape.add(sim, reg))
    };
    let mut tape = Tape::new();
    let (bound, loss) = build(&params, &mut tape);
    assert!(tape.value(loss).is_finite());
    tape.backward(loss).unwrap();
    let analytic = bound.grads(&tape);
    let numeric = numeric_gradient(&params, 1e-5, |p| {
        let mut t = Tape::new();
        let (_, l) = build(p, &mut t);
        t.scalar(l)
    });
    let report = compare(&analytic, &numeric, 1e-6);
    assert!(report.passes(1e-4), "{report:?}");
}
