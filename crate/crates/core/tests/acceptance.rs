//! Acceptance criteria, one PASS/FAIL line each. The process exits non-zero
//! if any criterion fails.
//!
//! Criterion 10 runs only when `RGAT_SEMEVAL_DIR` names a directory with
//! `train.jsonl`, `dev.jsonl` and `test.jsonl` and `RGAT_EMBEDDINGS` names a
//! 300-d word-vector file.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::Rng;
use rgat::autodiff::{GradCheckOptions, ParamStore, Tape, Tensor};
use rgat::config::{ModelConfig, Variant};
use rgat::depgraph::{read_jsonl, DepGraph, Instance, Polarity, RelationVocab};
use rgat::model::Model;
use rgat::rgat::GraphLayer;
use rgat::rng;
use rgat::training::{
    evaluate, fit_instance, model_grad_check, run_suite, suite::train_and_score, train, train_with, MetricsReport,
    Suite, SuiteData, SuiteOptions, SuiteReport, SyntheticSpec,
};

const GRAD_TOL: f64 = 1e-4;
/// Loss below which the central-difference noise floor is under 1e-13.
const FIT_LOSS: f64 = 1e-3;
const ROW_SUM_TOL: f64 = 1e-6;
const SHIFT_TOL: f64 = 1e-9;
const REDUCTION_TOL: f64 = 1e-9;
const AGGREGATION_TOL: f64 = 1e-12;
const RGAT_MIN_ACC: f64 = 0.95;
const GAT_MAX_ACC: f64 = 0.60;
const SYNTHETIC_BUDGET: Duration = Duration::from_secs(600);
const GRADCHECK_BUDGET: Duration = Duration::from_secs(60);
/// `GAT ≈ Transformer`: mean accuracies over the seeds within this.
const UNLABELLED_GAP: f64 = 0.05;
const SEEDS: [u64; 3] = [1, 2, 3];
const SYNTHETIC_SIZES: [usize; 3] = [2000, 500, 500];
const DATA_SEED: u64 = 11;
const OVERFIT_N: usize = 50;
const OVERFIT_EPOCHS: usize = 200;
const REFERENCE_ACC: f64 = 83.55;
const REFERENCE_MARGIN: f64 = 2.0;

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Line {
    id: &'static str,
    verdict: Verdict,
    detail: String,
}

fn line(id: &'static str, ok: bool, detail: String) -> Line {
    Line {
        id,
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

fn report(l: &Line) {
    let v = match l.verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Skip => "SKIP",
    };
    println!("criterion {:>2}: {v}  {}", l.id, l.detail);
}

fn desk() -> ModelConfig {
    ModelConfig::desk()
}

fn synthetic() -> SuiteData {
    SuiteData::synthetic(SYNTHETIC_SIZES, &SyntheticSpec::default(), DATA_SEED).unwrap()
}

fn logits(model: &Model, inst: &Instance) -> Vec<f64> {
    let mut tape = Tape::new(model.store());
    let (out, _) = model.forward(&mut tape, inst, None).unwrap();
    tape.value(out.logits).data().to_vec()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_graph(r: &mut impl Rng, n: usize, vocab: &RelationVocab) -> DepGraph {
    let labels: Vec<_> = vocab.non_reserved_ids().collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if r.gen_bool(0.3) {
                edges.push((a, b, labels[r.gen_range(0..labels.len())]));
            }
        }
    }
    DepGraph::from_edges(n, edges, vocab.fingerprint()).unwrap()
}

fn label_ids(g: &DepGraph) -> Vec<usize> {
    g.label_matrix().iter().map(|&l| l as usize).collect()
}

fn small_layer(variant: Variant) -> (ParamStore, GraphLayer, ModelConfig, RelationVocab) {
    let cfg = ModelConfig {
        graph_dim: 12,
        heads: 3,
        relation_dim: 5,
        variant,
        ..ModelConfig::default()
    };
    let mut store = ParamStore::new();
    let layer = GraphLayer::new(&mut store, &cfg, 0);
    let vocab = RelationVocab::from_labels(["nsubj", "obj", "amod", "det", "advmod"]);
    (store, layer, cfg, vocab)
}

fn c1_gradients() -> Vec<Line> {
    let spec = SyntheticSpec {
        min_len: 6,
        max_len: 6,
        ..SyntheticSpec::default()
    };
    let data = SuiteData::synthetic([3, 1, 1], &spec, 21).unwrap();
    let inst = &data.train[0];
    let cfg = ModelConfig {
        layers: 2,
        dropout: 0.0,
        ..desk()
    };
    let opts = GradCheckOptions::default();
    let start = Instant::now();
    let mut model = Model::new(cfg, data.vocab.clone(), None).unwrap();
    let at_init = model_grad_check(&model, inst, &opts).unwrap();
    let fit = fit_instance(&mut model, inst, FIT_LOSS, 200).unwrap();
    let fitted = model_grad_check(&model, inst, &opts).unwrap();
    let elapsed = start.elapsed();
    let ok = fitted.max_rel_error < GRAD_TOL && elapsed < GRADCHECK_BUDGET;
    let worst_init = at_init.worst.as_ref().map_or(0.0, |w| w.analytic.abs());
    vec![
        line(
            "1",
            ok,
            format!(
                "2-layer RGAT+BiLSTM+fusion+CE, 6 tokens, eps {:e}, {} coordinates after {} fitting steps (loss {:.1e}): max rel {:.2e} < {GRAD_TOL:e}; {:.1}s",
                opts.eps,
                fitted.coordinates,
                fit.steps,
                fit.loss,
                fitted.max_rel_error,
                elapsed.as_secs_f64()
            ),
        ),
        Line {
            id: "1i",
            verdict: Verdict::Skip,
            detail: format!(
                "informational, same check at initialisation (loss near ln 3): max rel {:.2e} at |g| = {:.1e}; {} coordinates above {GRAD_TOL:e}, noise-aware failures (abs > 1e-10): {}",
                at_init.max_rel_error,
                worst_init,
                at_init.checks.iter().filter(|c| c.rel_error > GRAD_TOL).count(),
                at_init.failures(GRAD_TOL, 1e-10).len()
            ),
        },
    ]
}

fn c2_attention() -> Line {
    let (store, layer, cfg, vocab) = small_layer(Variant::Rgat);
    let rel = Tensor::uniform(&[vocab.len(), cfg.relation_dim], -1.0, 1.0, &mut rng::stream(0, "rel", 0));
    let mut worst_sum: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    let mut off_graph_nonzero = 0usize;
    let dh = cfg.head_dim();
    for case in 0..100u64 {
        let mut r = rng::stream(2, "c2", case);
        let n = r.gen_range(1..=12);
        let g = random_graph(&mut r, n, &vocab);
        let h = Tensor::uniform(&[n, cfg.graph_dim], -2.0, 2.0, &mut r);
        let shifts: Vec<f64> = (0..n).map(|_| r.gen_range(-50.0..50.0)).collect();
        let mut tape = Tape::new(&store);
        let hv = tape.constant(h);
        let rv = tape.constant(rel.clone());
        let p = layer.project(&mut tape, hv, Some(rv)).unwrap();
        let mask = g.adjacency().to_vec();
        for z in 0..cfg.heads {
            let e_n = layer.node_scores(&mut tape, &p, z, dh).unwrap();
            let e_r = layer.relation_scores(&mut tape, &p, &label_ids(&g), z, dh).unwrap();
            let scores = tape.add(e_n, e_r).unwrap();
            let a = tape.masked_softmax(scores, &mask).unwrap();
            let shifted: Vec<f64> = (0..n * n).map(|k| tape.value(scores).data()[k] + shifts[k / n]).collect();
            let sv = tape.constant(Tensor::matrix(n, n, shifted).unwrap());
            let b = tape.masked_softmax(sv, &mask).unwrap();
            let (a, b) = (tape.value(a).data(), tape.value(b).data());
            for i in 0..n {
                let s: f64 = a[i * n..(i + 1) * n].iter().sum();
                worst_sum = worst_sum.max((s - 1.0).abs());
                for j in 0..n {
                    if !mask[i * n + j] && a[i * n + j] != 0.0 {
                        off_graph_nonzero += 1;
                    }
                }
            }
            worst_shift = worst_shift.max(max_diff(a, b));
        }
    }
    let ok = worst_sum <= ROW_SUM_TOL && off_graph_nonzero == 0 && worst_shift <= SHIFT_TOL;
    line(
        "2",
        ok,
        format!(
            "100 graphs n<=12: max |row sum - 1| {worst_sum:.1e} <= {ROW_SUM_TOL:e}; off-graph non-zeros {off_graph_nonzero}; max shift change {worst_shift:.1e} <= {SHIFT_TOL:e}"
        ),
    )
}

fn c3_reductions() -> Line {
    let data = SuiteData::synthetic([30, 1, 1], &SyntheticSpec::default(), 5).unwrap();
    let base = ModelConfig {
        layers: 2,
        ..desk()
    };
    let with = |variant, weighted| {
        Model::new(
            ModelConfig {
                variant,
                weighted_factors: weighted,
                ..base.clone()
            },
            data.vocab.clone(),
            None,
        )
        .unwrap()
    };

    // (a) zero relation table and W_Vr
    let gat = with(Variant::Gat, false);
    let mut rgat = with(Variant::Rgat, false);
    let table = rgat.embeddings.relation.unwrap();
    let w_vrs: Vec<_> = rgat.graph.layers.iter().map(|l| l.w_vr.unwrap()).collect();
    for id in std::iter::once(table).chain(w_vrs) {
        rgat.store_mut().value_mut(id).data_mut().fill(0.0);
    }
    let a = data
        .train
        .iter()
        .map(|i| max_diff(&logits(&rgat, i), &logits(&gat, i)))
        .fold(0.0, f64::max);

    // (b) β1 = β2 = 1
    let plain = with(Variant::Rgat, false);
    let weighted = with(Variant::Rgat, true);
    let b = data.train.iter().all(|i| {
        logits(&plain, i) == logits(&weighted, i) && plain.attention(i).unwrap() == weighted.attention(i).unwrap()
    });

    // (c) β2 = 0
    let mut ratt = with(Variant::GatRatt, true);
    let mut rgat_w = with(Variant::Rgat, true);
    for m in [&mut ratt, &mut rgat_w] {
        let ids: Vec<_> = m.graph.layers.iter().map(|l| l.beta2.unwrap()).collect();
        for id in ids {
            m.store_mut().value_mut(id).data_mut()[0] = 0.0;
        }
    }
    let c = data.train.iter().all(|i| {
        let vanilla = gat.attention(i).unwrap();
        let all_layers = ratt.attention(i).unwrap() == vanilla;
        let first = rgat_w.attention(i).unwrap().layers[0] == vanilla.layers[0];
        all_layers && first
    });
    line(
        "3",
        a < REDUCTION_TOL && b && c,
        format!(
            "(a) zeroed relations vs GAT max logit diff {a:.1e} < {REDUCTION_TOL:e}; (b) beta=1 identical: {b}; (c) beta2=0 attention identical to GAT: {c}"
        ),
    )
}

fn naive_scores(gold: &[Polarity], pred: &[Polarity]) -> (f64, f64) {
    let mut f1s = [0.0; 3];
    for (k, f1) in f1s.iter_mut().enumerate() {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (g, p) in gold.iter().zip(pred) {
            let (g, p) = (g.class_index() == k, p.class_index() == k);
            match (g, p) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        *f1 = if denom == 0 { 0.0 } else { (2 * tp) as f64 / denom as f64 };
    }
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    (correct as f64 / gold.len() as f64, (f1s[0] + f1s[1] + f1s[2]) / 3.0)
}

fn c4_oracles() -> Line {
    let (store, layer, cfg, vocab) = small_layer(Variant::Rgat);
    let dh = cfg.head_dim();
    let rel = Tensor::uniform(&[vocab.len(), cfg.relation_dim], -1.0, 1.0, &mut rng::stream(0, "rel", 1));
    let w_v = store.value(layer.w_v).clone();
    let w_vr = store.value(layer.w_vr.unwrap()).clone();
    let mut worst: f64 = 0.0;
    for case in 0..50u64 {
        let mut r = rng::stream(4, "c4", case);
        let n = r.gen_range(1..=7);
        let g = random_graph(&mut r, n, &vocab);
        let labels = label_ids(&g);
        let h = Tensor::uniform(&[n, cfg.graph_dim], -1.0, 1.0, &mut r);
        let mut tape = Tape::new(&store);
        let hv = tape.constant(h.clone());
        let rv = tape.constant(rel.clone());
        let p = layer.project(&mut tape, hv, Some(rv)).unwrap();
        for z in 0..cfg.heads {
            let e_n = layer.node_scores(&mut tape, &p, z, dh).unwrap();
            let e_r = layer.relation_scores(&mut tape, &p, &labels, z, dh).unwrap();
            let alpha = layer.mix_normalize(&mut tape, e_n, Some(e_r), g.adjacency()).unwrap();
            let out = layer.aggregate(&mut tape, &p, alpha, &labels, z, dh).unwrap();
            let (alpha, out) = (tape.value(alpha).clone(), tape.value(out).clone());
            for i in 0..n {
                for k in 0..dh {
                    let col = z * dh + k;
                    let mut acc = 0.0;
                    for j in 0..n {
                        let v: f64 = (0..cfg.graph_dim).map(|m| h.at(j, m) * w_v.at(m, col)).sum();
                        let l = labels[i * n + j];
                        let rv: f64 = (0..cfg.relation_dim).map(|m| rel.at(l, m) * w_vr.at(m, k)).sum();
                        acc += alpha.at(i, j) * (v + rv);
                    }
                    let expect = 1.0 / (1.0 + (-acc).exp());
                    worst = worst.max((out.at(i, k) - expect).abs());
                }
            }
        }
    }
    let mut metric_mismatches = 0;
    for case in 0..100u64 {
        let mut r = rng::stream(4, "metrics", case);
        let len = r.gen_range(1..=60);
        let classes = r.gen_range(1..=3);
        let draw = |r: &mut rng::ChaCha8Rng| Polarity::from_class_index(r.gen_range(0..classes)).unwrap();
        let gold: Vec<Polarity> = (0..len).map(|_| draw(&mut r)).collect();
        let pred: Vec<Polarity> = (0..len).map(|_| draw(&mut r)).collect();
        let m = MetricsReport::from_pairs(&gold, &pred).unwrap();
        if (m.accuracy, m.macro_f1) != naive_scores(&gold, &pred) {
            metric_mismatches += 1;
        }
    }
    line(
        "4",
        worst < AGGREGATION_TOL && metric_mismatches == 0,
        format!(
            "aggregation vs loop oracle on 50 graphs: max diff {worst:.1e} < {AGGREGATION_TOL:e}; metrics vs naive scorer on 100 cases: {metric_mismatches} mismatches"
        ),
    )
}

fn c5_label_signal(data: &SuiteData) -> Line {
    let start = Instant::now();
    let score = |variant| {
        train_and_score(
            &ModelConfig {
                variant,
                ..desk()
            },
            data,
        )
        .unwrap()
        .0
    };
    let rgat = score(Variant::Rgat);
    let gat = score(Variant::Gat);
    let elapsed = start.elapsed();
    line(
        "5",
        rgat >= RGAT_MIN_ACC && gat <= GAT_MAX_ACC && elapsed < SYNTHETIC_BUDGET,
        format!(
            "synthetic 2000/500 test: RGAT {rgat:.3} >= {RGAT_MIN_ACC}, GAT {gat:.3} <= {GAT_MAX_ACC}; {:.0}s < {}s",
            elapsed.as_secs_f64(),
            SYNTHETIC_BUDGET.as_secs()
        ),
    )
}

fn mean(report: &SuiteReport, variant: Variant, setting: &str) -> f64 {
    report.summary_for(variant.name(), setting).unwrap().mean_accuracy
}

fn c6_ablation(data: &SuiteData) -> Line {
    let opts = SuiteOptions {
        seeds: SEEDS.to_vec(),
        ..SuiteOptions::default()
    };
    let rep = run_suite(Suite::Ablation, &desk(), data, &opts).unwrap();
    let m = |v| mean(&rep, v, "gold");
    let (rg, ra, ga, tr) = (m(Variant::Rgat), m(Variant::GatRatt), m(Variant::Gat), m(Variant::Transformer));
    let per_seed: Vec<String> = Variant::ALL
        .iter()
        .map(|v| {
            let accs: Vec<String> = rep
                .rows
                .iter()
                .filter(|r| r.variant == v.name())
                .map(|r| format!("{:.3}", r.accuracy))
                .collect();
            format!("{}=[{}]", v.name(), accs.join(","))
        })
        .collect();
    line(
        "6",
        rg >= ra && ra > ga && (ga - tr).abs() <= UNLABELLED_GAP,
        format!(
            "means over seeds {SEEDS:?}: RGAT {rg:.3} >= GAT-Ratt {ra:.3} > GAT {ga:.3} ~ Transformer {tr:.3} (|diff| <= {UNLABELLED_GAP}); {}",
            per_seed.join(" ")
        ),
    )
}

fn c7_perturbation(data: &SuiteData) -> Line {
    let opts = SuiteOptions {
        seeds: vec![SEEDS[0]],
        random_tree_runs: 10,
        ..SuiteOptions::default()
    };
    let rep = run_suite(Suite::ParsePerturb, &desk(), data, &opts).unwrap();
    let gold = mean(&rep, Variant::Rgat, "gold");
    let permuted = mean(&rep, Variant::Rgat, "permuted_labels");
    let trees = rep.summary_for("rgat", "random_tree").unwrap();
    line(
        "7",
        trees.mean_accuracy < permuted && permuted < gold,
        format!(
            "RGAT random trees (mean of {}) {:.3} < permuted labels {permuted:.3} < gold {gold:.3}",
            trees.runs, trees.mean_accuracy
        ),
    )
}

fn c8_overfit(data: &SuiteData) -> Line {
    let subset = &data.train[..OVERFIT_N];
    let cfg = ModelConfig {
        epochs: OVERFIT_EPOCHS,
        patience: OVERFIT_EPOCHS,
        ..desk()
    };
    let model = Model::new(cfg, data.vocab.clone(), None).unwrap();
    let mut first = None;
    let out = train_with(model, subset, subset, |r| {
        if first.is_none() && r.dev.accuracy == 1.0 {
            first = Some(r.epoch + 1);
        }
    })
    .unwrap();
    let (m, _) = evaluate(&out.model, subset).unwrap();
    line(
        "8",
        first.is_some() && m.accuracy == 1.0,
        format!(
            "{OVERFIT_N} training instances: 100% train accuracy first after epoch {} (limit {OVERFIT_EPOCHS}); restored model {:.3}",
            first.map_or("never".to_string(), |e| e.to_string()),
            m.accuracy
        ),
    )
}

fn c9_determinism() -> Line {
    let data = SuiteData::synthetic([150, 60, 60], &SyntheticSpec::default(), 40).unwrap();
    let cfg = ModelConfig {
        epochs: 3,
        ..desk()
    };
    let run = |jobs| {
        let opts = SuiteOptions {
            seeds: vec![1, 2],
            jobs,
            ..SuiteOptions::default()
        };
        run_suite(Suite::Ablation, &cfg, &data, &opts).unwrap().to_csv_string().unwrap()
    };
    let (a, b) = (run(1), run(2));
    line(
        "9",
        a == b,
        format!("two ablation runs (1 and 2 threads), {} CSV bytes, identical: {}", a.len(), a == b),
    )
}

fn c10_benchmark() -> Line {
    let dir = std::env::var_os("RGAT_SEMEVAL_DIR").map(PathBuf::from);
    let emb = std::env::var_os("RGAT_EMBEDDINGS").map(PathBuf::from);
    let (Some(dir), Some(emb)) = (dir, emb) else {
        return Line {
            id: "10",
            verdict: Verdict::Skip,
            detail: "conditional: RGAT_SEMEVAL_DIR and RGAT_EMBEDDINGS not set".into(),
        };
    };
    let read = |name: &str| {
        let f = std::fs::File::open(dir.join(name)).unwrap();
        read_jsonl(std::io::BufReader::new(f)).unwrap()
    };
    let data = SuiteData::from_records(&read("train.jsonl"), &read("dev.jsonl"), &read("test.jsonl")).unwrap();
    let cfg = ModelConfig {
        layers: 6,
        embeddings: Some(emb.to_string_lossy().into_owned()),
        ..ModelConfig::default()
    };
    let model = Model::from_config(cfg, data.vocab.clone()).unwrap();
    let out = train(model, &data.train, &data.dev).unwrap();
    let (m, _) = evaluate(&out.model, &data.test).unwrap();
    let acc = 100.0 * m.accuracy;
    line(
        "10",
        (acc - REFERENCE_ACC).abs() <= REFERENCE_MARGIN,
        format!("Restaurant, 6 layers: accuracy {acc:.2} within {REFERENCE_MARGIN} of {REFERENCE_ACC}"),
    )
}

fn main() {
    // the test harness may pass its own flags; a listing request runs nothing
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut lines = Vec::new();
    let mut emit = |ls: Vec<Line>| {
        for l in ls {
            report(&l);
            lines.push(l);
        }
    };
    emit(c1_gradients());
    emit(vec![c2_attention()]);
    emit(vec![c3_reductions()]);
    emit(vec![c4_oracles()]);
    let data = synthetic();
    emit(vec![c5_label_signal(&data)]);
    emit(vec![c6_ablation(&data)]);
    emit(vec![c7_perturbation(&data)]);
    emit(vec![c8_overfit(&data)]);
    emit(vec![c9_determinism()]);
    emit(vec![c10_benchmark()]);
    let failed: Vec<&str> = lines
        .iter()
        .filter(|l| matches!(l.verdict, Verdict::Fail))
        .map(|l| l.id)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {}", failed.join(", "));
        std::process::exit(1);
    }
}
