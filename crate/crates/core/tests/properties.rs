use biaspipe::corpus::{preprocess_text, Corpus, Document, PreprocessRules, SentimentLabel};
use biaspipe::fixtures::{planted_classes, planted_survey, separated_rho};
use biaspipe::lca::{lca_fit, LcaConfig};
use biaspipe::pipeline::{compare_topic_models, total_variation, TopicModelResult};
use biaspipe::sentiment::{kernel_shap, ConfusionMatrix};
use biaspipe::tune::{tpe_suggest, ParamConfig, SearchSpace, Trial};
use proptest::prelude::*;

fn document() -> impl Strategy<Value = Document> {
    (
        "[a-z ,.!?'-]{0,60}",
        "[a-z]{1,6}",
        proptest::option::of(any::<bool>()),
        proptest::option::of("[A-Z][a-z]{2,8}"),
    )
        .prop_map(|(text, group, label, city)| {
            let mut doc = Document::new("", text, group);
            doc.sentiment_label = label.map(|p| if p { SentimentLabel::Positive } else { SentimentLabel::Negative });
            doc.city = city;
            doc
        })
}

proptest! {
    #[test]
    fn corpus_export_round_trips(docs in proptest::collection::vec(document(), 0..12)) {
        let docs: Vec<Document> = docs
            .into_iter()
            .enumerate()
            .map(|(i, mut d)| { d.id = format!("d{i}"); d })
            .collect();
        let corpus = Corpus::new(docs).unwrap();
        let back = Corpus::from_jsonl(&corpus.to_jsonl()).unwrap();
        prop_assert_eq!(back.documents, corpus.documents);
    }

    #[test]
    fn preprocessing_is_idempotent(text in "[A-Za-z0-9 ,.;:!?'\"-]{0,80}", stem in any::<bool>()) {
        let rules = PreprocessRules { stem, ..Default::default() };
        let once = preprocess_text(&text, &rules);
        let twice = preprocess_text(&once.join(" "), &rules);
        if !stem {
            prop_assert_eq!(twice, once);
        } else {
            prop_assert!(twice.len() <= once.len());
        }
    }

    #[test]
    fn total_variation_is_a_metric(
        raw in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..6),
    ) {
        let norm = |v: Vec<f64>| {
            let s: f64 = v.iter().sum();
            if s == 0.0 { vec![1.0 / v.len() as f64; v.len()] } else { v.iter().map(|x| x / s).collect() }
        };
        let p = norm(raw.iter().map(|r| r.0).collect());
        let q = norm(raw.iter().map(|r| r.1).collect());
        let d = total_variation(&p, &q);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        prop_assert!((d - total_variation(&q, &p)).abs() < 1e-15);
        prop_assert_eq!(total_variation(&p, &p), 0.0);
    }

    #[test]
    fn label_swap_mirrors_metrics(tp in 0u64..50, fn_ in 0u64..50, fp in 0u64..50, tn in 0u64..50) {
        prop_assume!(tp + fn_ + fp + tn > 0);
        let a = ConfusionMatrix::new(tp, fn_, fp, tn).metrics().unwrap();
        let b = ConfusionMatrix::new(tn, fp, fn_, tp).metrics().unwrap();
        prop_assert_eq!(a.accuracy, b.accuracy);
        prop_assert_eq!(a.precision, b.npv);
        prop_assert_eq!(a.npv, b.precision);
        prop_assert_eq!(a.recall, b.specificity);
        prop_assert_eq!(a.specificity, b.recall);
    }

    #[test]
    fn shap_symmetry_and_null_player(
        m in 3usize..=12,
        weight in -2.0f64..2.0,
        inter in -1.0f64..1.0,
    ) {
        // features 0 and 1 enter symmetrically; the last one is ignored
        let value = |z: &[bool]| {
            let (a, b) = (z[0] as u8 as f64, z[1] as u8 as f64);
            let rest: f64 = z[2..z.len() - 1].iter().map(|&x| x as u8 as f64 * 0.5).sum();
            weight * (a + b) + inter * a * b + rest
        };
        let shap = kernel_shap(m, value, 0, 1).unwrap();
        prop_assert!((shap.phi[0] - shap.phi[1]).abs() < 1e-9);
        prop_assert!(shap.phi[m - 1].abs() < 1e-9);
        prop_assert!(shap.local_accuracy_gap() < 1e-9);
    }

    #[test]
    fn compare_is_order_invariant(seed in 0u64..1000) {
        let words = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
        let pick = |s: u64, t: usize| -> Vec<String> {
            (0..3).map(|i| words[((s >> (i * 3 + t * 9)) as usize + i * 7 + t) % words.len()].to_string()).collect()
        };
        let mk = |name: &str, s: u64| TopicModelResult {
            name: name.into(),
            vocabulary_fingerprint: "v".into(),
            topics: (0..3).map(|t| pick(s, t)).collect(),
            coherence: None,
        };
        let a = mk("A", seed);
        let b = mk("B", seed.wrapping_mul(2654435761) % 100_003);
        let ab = compare_topic_models(&[a.clone(), b.clone()], 3).unwrap();
        let ba = compare_topic_models(&[b, a], 3).unwrap();
        prop_assert!((ab.pairs[0].mean_jaccard - ba.pairs[0].mean_jaccard).abs() < 1e-12);
        let mut fwd: Vec<f64> = ab.pairs[0].matches.iter().map(|m| m.jaccard).collect();
        let mut rev: Vec<f64> = ba.pairs[0].matches.iter().map(|m| m.jaccard).collect();
        fwd.sort_by(f64::total_cmp);
        rev.sort_by(f64::total_cmp);
        prop_assert_eq!(fwd, rev);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn em_log_likelihood_never_decreases(seed in 0u64..10_000, k in 1usize..4) {
        let planted = planted_classes(60, 2, 5, 0.6, seed);
        let mut config = LcaConfig::new(k, seed);
        config.max_iterations = 50;
        config.tolerance = 0.0;
        let model = lca_fit(&planted.data, &config).unwrap();
        for w in model.trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn lca_likelihood_ignores_class_labels(seed in 0u64..10_000) {
        let rho = separated_rho(3, 6, 0.5);
        let planted = planted_survey(&rho, &[("a", vec![1.0, 2.0, 1.0])], 50, seed);
        let model = lca_fit(&planted.data, &LcaConfig::new(3, seed)).unwrap();
        let permuted = model.permuted(&[2, 0, 1]);
        prop_assert!((model.evaluate(&planted.data) - permuted.evaluate(&planted.data)).abs() < 1e-9);
    }
}

fn check_quantized(space: &SearchSpace) {
    let history: Vec<Trial> = (0..15)
        .map(|i| {
            let config: ParamConfig = space
                .params
                .iter()
                .map(|p| (p.name.clone(), p.value((i * 7 + 3) % p.levels())))
                .collect();
            Trial {
                index: i,
                config,
                objective: Some(-((i as f64) - 6.0).powi(2)),
                seed: i as u64,
                error: None,
            }
        })
        .collect();
    for seed in 0..10_000u64 {
        let config = tpe_suggest(&history, space, seed).unwrap();
        for p in &space.params {
            let v = config[&p.name];
            assert!(p.is_quantized(v), "{} = {v} off grid", p.name);
        }
    }
}

#[test]
fn tpe_suggestions_lie_on_the_btm_grid() {
    check_quantized(&SearchSpace::btm_default());
}

#[test]
fn tpe_suggestions_lie_on_the_corex_grid() {
    check_quantized(&SearchSpace::corex_default());
}
