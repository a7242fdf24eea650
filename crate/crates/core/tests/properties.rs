use proptest::prelude::*;
use transduce_core::lm::train_ngram;
use transduce_core::losses::{
    best_alignment, collapse, ctc_loss, ctc_min_frames, ctc_state_posteriors, rnnt_loss, rnnt_node_posteriors,
    AlignmentInput, AlignmentPath, JointLogits,
};
use transduce_core::network::{Model, ModelKind, ModelSpec};
use transduce_core::losses::Alphabet;
use transduce_core::numerics::{logsumexp, RealMatrix};

fn logits_strategy(max_frames: usize, classes: usize) -> impl Strategy<Value = RealMatrix> {
    (1..=max_frames).prop_flat_map(move |t| {
        prop::collection::vec(-4.0f64..4.0, t * classes).prop_map(move |d| RealMatrix::from_vec(t, classes, d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn logsumexp_bounds(v in prop::collection::vec(-50.0f64..50.0, 1..10)) {
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let l = logsumexp(&v).unwrap();
        prop_assert!(l >= m - 1e-12);
        prop_assert!(l <= m + (v.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn ctc_loss_nonnegative_with_zero_sum_rows(
        logits in logits_strategy(7, 4),
        y in prop::collection::vec(0usize..3, 0..4),
    ) {
        match ctc_loss(&logits, &y) {
            Ok(r) => {
                prop_assert!(r.loss >= -1e-12);
                for row in r.grad.iter_rows() {
                    prop_assert!(row.iter().sum::<f64>().abs() < 1e-9);
                }
            }
            Err(_) => prop_assert!(ctc_min_frames(&y) > logits.rows()),
        }
    }

    #[test]
    fn ctc_posteriors_are_per_frame_distributions(
        logits in logits_strategy(7, 3),
        y in prop::collection::vec(0usize..2, 0..3),
    ) {
        prop_assume!(ctc_min_frames(&y) <= logits.rows());
        let post = ctc_state_posteriors(&logits, &y).unwrap();
        prop_assert_eq!(post.cols(), 2 * y.len() + 1);
        for row in post.iter_rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ctc_viterbi_collapses_to_labels(
        logits in logits_strategy(7, 3),
        y in prop::collection::vec(0usize..2, 0..3),
    ) {
        prop_assume!(ctc_min_frames(&y) <= logits.rows());
        let path = best_alignment(AlignmentInput::Ctc(&logits), &y).unwrap();
        prop_assert!(path.is_valid());
        let AlignmentPath::Ctc { frames, blank, log_prob, .. } = &path else { unreachable!() };
        prop_assert_eq!(frames.len(), logits.rows());
        prop_assert_eq!(collapse(frames, *blank), y.clone());
        // The best single path cannot exceed the marginal.
        prop_assert!(-log_prob >= ctc_loss(&logits, &y).unwrap().loss - 1e-9);
    }

    #[test]
    fn rnnt_invariants(
        frames in 1usize..5,
        y in prop::collection::vec(0usize..2, 0..3),
        seed in any::<u64>(),
    ) {
        let mut rng = transduce_core::numerics::SeededRng::new(seed);
        let n = frames * (y.len() + 1) * 3;
        let j = JointLogits::from_vec(frames, y.len() + 1, 3, (0..n).map(|_| 2.0 * rng.normal()).collect()).unwrap();
        let r = rnnt_loss(&j, &y).unwrap();
        prop_assert!(r.loss >= -1e-12);
        for node in r.grad.data().chunks(3) {
            prop_assert!(node.iter().sum::<f64>().abs() < 1e-9);
        }
        // Every path crosses each anti-diagonal t + u = d exactly once.
        let post = rnnt_node_posteriors(&j, &y).unwrap();
        for d in 0..frames + y.len() {
            let s: f64 = (0..frames)
                .filter(|&t| d >= t && d - t <= y.len())
                .map(|t| post.get(t, d - t))
                .sum();
            prop_assert!((s - 1.0).abs() < 1e-9, "diagonal {} sums to {}", d, s);
        }
        let path = best_alignment(AlignmentInput::Rnnt(&j), &y).unwrap();
        prop_assert!(path.is_valid());
        let AlignmentPath::Rnnt { steps, .. } = &path else { unreachable!() };
        prop_assert_eq!(steps.len(), frames + y.len());
        let emitted: Vec<usize> = steps.iter().filter_map(|s| s.label).collect();
        prop_assert_eq!(emitted, y);
    }

    #[test]
    fn ngram_distributions_sum_to_one(
        corpus in prop::collection::vec("[ab ]{0,6}", 1..6),
        order in 1usize..4,
        context in "[ab]{0,3}",
    ) {
        let lm = train_ngram(&corpus, order, 0.5).unwrap();
        let state = lm.state_after(&context);
        let total: f64 = lm.predicted_tokens().map(|t| lm.log_prob(&state, t).exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn model_file_round_trip(seed in any::<u64>(), kind in 0usize..3) {
        let kind = ModelKind::ALL[kind];
        let spec = ModelSpec::standard(kind, Alphabet::new("ab ").unwrap(), 2, 2);
        let m = Model::new(spec, seed).unwrap();
        let back = Model::from_bytes(&m.to_bytes()).unwrap();
        prop_assert_eq!(back.params().values(), m.params().values());
        prop_assert_eq!(back.spec(), m.spec());
    }
}
