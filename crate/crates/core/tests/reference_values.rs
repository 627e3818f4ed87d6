//! Worked examples checked against small independent oracles.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use ats_core::config::ExperimentConfig;
use ats_core::dataset::parse_asap;
use ats_core::features::{avg_unigram_loglik, fit_standardizer, Extractor, FeaturePipeline};
use ats_core::learners::{
    forest_fit, forest_predict, logistic_fit, logistic_predict_proba, ridge_fit, ForestConfig, ForestOutput,
    LogisticParams, Targets,
};
use ats_core::lingproc::{build_unigram_table, Tokenizer, UnigramTable};
use ats_core::metrics::{evaluate_all, pearson, prf1, qwk, Averaging};
use ats_core::profiler::train_from_config;
use ats_core::{LabelSpec, Prediction, TaskKind};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

/// Add-one estimate over the vocabulary plus one unknown slot.
fn laplace_oracle(tokens: &[&str]) -> (BTreeMap<String, f64>, f64) {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.to_string()).or_insert(0.0) += 1.0;
    }
    let denom = tokens.len() as f64 + counts.len() as f64 + 1.0;
    (counts.into_iter().map(|(k, c)| (k, (c + 1.0) / denom)).collect(), 1.0 / denom)
}

#[test]
fn unigram_tables() {
    for tokens in [vec!["a", "a", "b"], vec!["a"]] {
        let table = build_unigram_table([tokens.join(" ")], &Tokenizer::default()).unwrap();
        let (probs, unk) = laplace_oracle(&tokens);
        assert!(close(table.unk_prob(), unk));
        for (t, p) in &probs {
            assert!(close(table.prob(t), *p), "{t}");
        }
    }
    let t = build_unigram_table(["a a b"], &Tokenizer::default()).unwrap();
    assert!(close(t.prob("a"), 0.5) && close(t.prob("b"), 2.0 / 6.0) && close(t.unk_prob(), 1.0 / 6.0));
    let t = build_unigram_table(["a"], &Tokenizer::default()).unwrap();
    assert!(close(t.prob("a"), 2.0 / 3.0) && close(t.unk_prob(), 1.0 / 3.0));
}

#[test]
fn unigram_loglik() {
    let table = UnigramTable::new(
        [("a".to_string(), 0.5), ("b".to_string(), 0.25)].into_iter().collect(),
        0.25,
    )
    .unwrap();
    let oracle = |ps: &[f64]| ps.iter().map(|p| p.ln()).sum::<f64>() / ps.len() as f64;
    let v = avg_unigram_loglik(&["a", "b"], &table);
    assert!(close(v, oracle(&[0.5, 0.25])));
    assert!((v - -1.0397).abs() < 1e-4);
    let v = avg_unigram_loglik(&["c"], &table);
    assert!(close(v, 0.25f64.ln()));
    assert!((v - -1.3863).abs() < 1e-4);
}

#[test]
fn count_and_length_pipeline() {
    let p = FeaturePipeline::new(Tokenizer::default(), vec![Extractor::TokenCount, Extractor::AvgTokenLength]).unwrap();
    let text = "Hello, world!";
    // Oracle: peel one punctuation char off each word by hand.
    let pieces = ["Hello", ",", "world", "!"];
    let mean_len = pieces.iter().map(|s| s.chars().count()).sum::<usize>() as f64 / pieces.len() as f64;
    assert_eq!(p.tokenize(text), pieces);
    assert_eq!(p.extract(text).values, vec![4.0, mean_len]);
    assert_eq!(mean_len, 3.0);
}

#[test]
fn standardizer_population_std() {
    let s = fit_standardizer(&[vec![0.0], vec![0.0], vec![6.0]]).unwrap();
    let mean = 2.0;
    let var = ((0.0f64 - mean).powi(2) * 2.0 + (6.0f64 - mean).powi(2)) / 3.0;
    assert!(close(s.means[0], mean));
    assert!(close(s.stds[0], var.sqrt()));
    assert!(close(s.stds[0], 8f64.sqrt()));
}

#[test]
fn ridge_exact_fit() {
    let x = vec![vec![1.0], vec![2.0], vec![3.0]];
    let y = [2.0, 4.0, 6.0];
    // One-feature least squares: w = cov(x, y) / var(x), b = ybar - w xbar.
    let (xb, yb) = (2.0, 4.0);
    let cov: f64 = x.iter().zip(&y).map(|(r, t)| (r[0] - xb) * (t - yb)).sum();
    let var: f64 = x.iter().map(|r| (r[0] - xb).powi(2)).sum();
    let m = ridge_fit(&x, &y, 0.0).unwrap();
    assert!(close(m.weights[0], cov / var));
    assert!(close(m.bias, yb - cov / var * xb));
    assert!(close(m.weights[0], 2.0) && close(m.bias, 0.0));
}

/// Two-class softmax regression by plain gradient descent.
fn logistic_oracle(xs: &[f64], ys: &[usize], lr: f64, epochs: usize) -> [[f64; 2]; 2] {
    let mut w = [[0.0f64; 2]; 2]; // [class][weight, bias]
    let n = xs.len() as f64;
    for _ in 0..epochs {
        let mut g = [[0.0f64; 2]; 2];
        for (&x, &y) in xs.iter().zip(ys) {
            let z = [w[0][0] * x + w[0][1], w[1][0] * x + w[1][1]];
            let m = z[0].max(z[1]);
            let e = [(z[0] - m).exp(), (z[1] - m).exp()];
            for c in 0..2 {
                let p = e[c] / (e[0] + e[1]);
                let d = p - if c == y { 1.0 } else { 0.0 };
                g[c][0] += d * x / n;
                g[c][1] += d / n;
            }
        }
        for c in 0..2 {
            for k in 0..2 {
                w[c][k] -= lr * g[c][k];
            }
        }
    }
    w
}

#[test]
fn logistic_two_points() {
    let x = vec![vec![-1.0], vec![1.0]];
    let params = LogisticParams {
        lr: 0.5,
        epochs: 500,
        l2: 0.0,
    };
    let m = logistic_fit(&x, &[0, 1], 2, params).unwrap();
    let oracle = logistic_oracle(&[-1.0, 1.0], &[0, 1], 0.5, 500);
    for c in 0..2 {
        assert!((m.weights[c][0] - oracle[c][0]).abs() < 1e-9);
        assert!((m.biases[c] - oracle[c][1]).abs() < 1e-9);
    }
    let p = logistic_predict_proba(&m, &[1.0]).unwrap();
    assert!(p[1] > 0.95, "{p:?}");
}

#[test]
fn forest_learns_a_threshold() {
    let x: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 - 99.5) / 10.0]).collect();
    let y: Vec<usize> = x.iter().map(|r| (r[0] > 0.0) as usize).collect();
    let f = forest_fit(
        &x,
        Targets::Classification {
            labels: &y,
            n_classes: 2,
        },
        &ForestConfig::default(),
    )
    .unwrap();
    let hits = x
        .iter()
        .zip(&y)
        .filter(|(r, &t)| match forest_predict(&f, r).unwrap() {
            ForestOutput::Probs(p) => (p[1] > p[0]) as usize == t,
            ForestOutput::Value(_) => false,
        })
        .count();
    assert!(hits as f64 / 200.0 >= 0.95, "{hits}");
}

#[test]
fn metric_examples() {
    let (g, p) = ([0, 0, 1], [0, 1, 1]);
    let mac = prf1(&p, &g, Averaging::Macro).unwrap();
    // class 0: P=1, R=1/2; class 1: P=1/2, R=1; F1 = 2/3 for both.
    let f1 = |p: f64, r: f64| 2.0 * p * r / (p + r);
    assert!(close(mac.precision, (1.0 + 0.5) / 2.0));
    assert!(close(mac.recall, (0.5 + 1.0) / 2.0));
    assert!(close(mac.f1, (f1(1.0, 0.5) + f1(0.5, 1.0)) / 2.0));
    let mic = prf1(&p, &g, Averaging::Micro).unwrap();
    assert!(close(mic.precision, 2.0 / 3.0) && close(mic.recall, 2.0 / 3.0) && close(mic.f1, 2.0 / 3.0));

    let (xs, ys) = ([1.0, 2.0, 3.0], [1.0, 2.0, 4.0]);
    let r = pearson(&xs, &ys).unwrap();
    let direct = {
        let (mx, my) = (2.0, 7.0 / 3.0);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
        sxy / (sxx * syy).sqrt()
    };
    assert!(close(r, direct));
    assert!((r - 0.98198).abs() < 1e-5);

    assert_eq!(qwk(&[0, 2, 1], &[0, 1, 2], LabelSpec::new(0, 2).unwrap()).unwrap(), 0.5);
}

#[test]
fn evaluate_all_converts_scores() {
    let preds = [
        Prediction {
            score: 2.4,
            label: 2,
            probs: None,
        },
        Prediction {
            score: 0.6,
            label: 1,
            probs: None,
        },
    ];
    let r = evaluate_all(&preds, &[2, 1], TaskKind::Regression, LabelSpec::new(0, 4).unwrap()).unwrap();
    assert_eq!(r.get("accuracy"), Some(1.0));
    assert_eq!(r.get("qwk"), Some(1.0));
    assert!(r.get("pearson").is_some());
}

#[test]
fn asap_single_row() {
    let content = "essay_id\tessay_set\tessay\trater1_domain1\tdomain1_score\n1\t1\tDear local newspaper, computers help.\t4\t8\n";
    let ds = parse_asap(content, "asap", 1, None).unwrap();
    assert_eq!(ds.len(), 1);
    assert_eq!(ds.label_spec(), LabelSpec::new(2, 12).unwrap());
    assert_eq!(ds.instances()[0].label, Some(8));
}

#[test]
fn transformer_profiler_rejected() {
    let text = "task: regression\nprofiler:\n  type: TransformerRegressor\n  params:\n    network:\n      lr: 4e-5\n\
                dataset:\n  type: asap-aes\n  params:\n    path: x.tsv\n";
    let err = ExperimentConfig::from_text(text, Path::new(".")).unwrap_err();
    assert_eq!(err.code(), "UnknownType");
    let msg = err.to_string();
    for name in ats_core::config::PROFILER_TYPES {
        assert!(msg.contains(name), "{msg}");
    }
    assert!(msg.contains("not supported"), "{msg}");
}

#[test]
fn toy_forest_training_accuracy() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy");
    let cfg = ExperimentConfig::from_file(dir.join("classify_forest.yaml")).unwrap();
    let outcome = train_from_config(&cfg).unwrap();
    assert_eq!(outcome.n_train, 60);
    let ds = ats_core::dataset::read_tsv(dir.join("toy.tsv"), None).unwrap();
    let acc = outcome.profiler.evaluate(&ds).unwrap().get("accuracy").unwrap();
    assert!(acc >= 0.8, "{acc}");
}

#[test]
fn artifact_is_self_contained() {
    let tmp = tempfile::tempdir().unwrap();
    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy");
    for f in ["toy.tsv", "corpus.txt", "classify_forest.yaml"] {
        std::fs::copy(toy.join(f), tmp.path().join(f)).unwrap();
    }
    let cfg = ExperimentConfig::from_file(tmp.path().join("classify_forest.yaml")).unwrap();
    let p = train_from_config(&cfg).unwrap().profiler;
    let art = tmp.path().join("art");
    p.save(&art).unwrap();
    std::fs::remove_file(tmp.path().join("corpus.txt")).unwrap();
    assert!(art.join("resources/unigram.tsv").is_file());
    let q = ats_core::Profiler::load(&art).unwrap();
    let Extractor::UnigramLikelihood(t) = &q.pipeline().extractors()[2] else {
        panic!("third extractor should be unigram likelihood");
    };
    let Extractor::UnigramLikelihood(orig) = &p.pipeline().extractors()[2] else {
        unreachable!()
    };
    assert_eq!(Arc::as_ref(t), Arc::as_ref(orig));
    let text = "the garden was quiet .";
    assert_eq!(p.predict(text).unwrap(), q.predict(text).unwrap());
}
