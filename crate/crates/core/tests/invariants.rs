use proptest::prelude::*;
use rand::seq::SliceRandom;

use rgat::autodiff::checkpoint::{load_params, save_params};
use rgat::autodiff::{ParamStore, Tape, Tensor};
use rgat::config::{ModelConfig, Variant};
use rgat::depgraph::{mask_label, permute_labels, random_tree, DepGraph, Polarity, RelationVocab};
use rgat::rgat::GraphEncoder;
use rgat::rng;
use rgat::training::synthetic::label_rule;
use rgat::training::{gen_synthetic, MetricsReport, SyntheticSpec};

fn vocab() -> RelationVocab {
    RelationVocab::from_labels(["nsubj", "amod", "det", "obj"])
}

fn small_config(variant: Variant, layers: usize) -> ModelConfig {
    ModelConfig {
        relation_dim: 4,
        graph_dim: 6,
        heads: 2,
        layers,
        variant,
        ..ModelConfig::desk()
    }
}

fn encode(variant: Variant, layers: usize, graph: &DepGraph, x: Tensor, seed: u64) -> Tensor {
    let cfg = ModelConfig { seed, ..small_config(variant, layers) };
    let mut store = ParamStore::new();
    let enc = GraphEncoder::new(&mut store, &cfg, x.cols());
    let rel = store.add_uniform("rel", &[vocab().len(), cfg.relation_dim], 0.5, seed);
    let mut tape = Tape::new(&store);
    let x = tape.constant(x);
    let r = tape.param(rel);
    let (h, _) = enc.encode(&mut tape, x, graph, Some(r)).unwrap();
    tape.value(h).clone()
}

fn variant() -> impl Strategy<Value = Variant> {
    prop::sample::select(Variant::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_trees_are_symmetric_trees(n in 1usize..20, seed in any::<u64>()) {
        let g = random_tree(n, &vocab(), seed).unwrap();
        prop_assert!(g.is_tree());
        g.check_invariants().unwrap();
        for i in 0..n {
            prop_assert!(g.adj(i, i));
            prop_assert_eq!(g.label(i, i), RelationVocab::SELF);
            for j in 0..n {
                prop_assert_eq!(g.adj(i, j), g.adj(j, i));
                prop_assert_eq!(g.label(i, j), g.label(j, i));
            }
        }
        prop_assert_eq!(g.adjacency().iter().filter(|&&a| a).count(), n + 2 * (n - 1));
    }

    #[test]
    fn encoder_is_permutation_equivariant(
        n in 2usize..9,
        seed in any::<u64>(),
        v in variant(),
        layers in 0usize..3,
    ) {
        let g = random_tree(n, &vocab(), seed).unwrap();
        let mut r = rng::stream(seed, "test_perm", 0);
        let x = Tensor::uniform(&[n, 5], -1.0, 1.0, &mut r);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let mut px = vec![0.0; n * 5];
        for i in 0..n {
            px[perm[i] * 5..perm[i] * 5 + 5].copy_from_slice(x.row(i));
        }
        let px = Tensor::matrix(n, 5, px).unwrap();
        let pg = g.permute_nodes(&perm).unwrap();
        let h = encode(v, layers, &g, x, 7);
        let ph = encode(v, layers, &pg, px, 7);
        for i in 0..n {
            for (a, b) in h.row(i).iter().zip(ph.row(perm[i])) {
                prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn label_permutation_keeps_structure_and_label_multiset(n in 1usize..16, seed in any::<u64>(), s2 in any::<u64>()) {
        let g = random_tree(n, &vocab(), seed).unwrap();
        let p = permute_labels(&g, s2);
        prop_assert_eq!(g.adjacency(), p.adjacency());
        let mut a: Vec<_> = g.edges().into_iter().map(|e| e.2).collect();
        let mut b: Vec<_> = p.edges().into_iter().map(|e| e.2).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
        p.check_invariants().unwrap();
    }

    #[test]
    fn masking_removes_exactly_one_label(n in 1usize..16, seed in any::<u64>(), k in 0usize..4) {
        let g = random_tree(n, &vocab(), seed).unwrap();
        let label = (RelationVocab::NUM_RESERVED + k) as u32;
        let m = mask_label(&g, label).unwrap();
        prop_assert_eq!(g.adjacency(), m.adjacency());
        for (before, after) in g.label_matrix().iter().zip(m.label_matrix()) {
            let expected = if *before == label { RelationVocab::REMOVED } else { *before };
            prop_assert_eq!(*after, expected);
        }
    }

    #[test]
    fn metrics_stay_in_range(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..60)) {
        let gold: Vec<Polarity> = pairs.iter().map(|p| Polarity::ALL[p.0]).collect();
        let pred: Vec<Polarity> = pairs.iter().map(|p| Polarity::ALL[p.1]).collect();
        let m = MetricsReport::from_pairs(&gold, &pred).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.accuracy));
        prop_assert!((0.0..=1.0).contains(&m.macro_f1));
        let mean = m.per_class.iter().map(|c| c.f1).sum::<f64>() / 3.0;
        prop_assert_eq!(m.macro_f1, mean);
        prop_assert_eq!(m.total, pairs.len());
        let correct = pairs.iter().filter(|p| p.0 == p.1).count();
        prop_assert_eq!(m.accuracy, correct as f64 / pairs.len() as f64);
    }

    #[test]
    fn synthetic_labels_follow_the_rule(seed in any::<u64>()) {
        for r in gen_synthetic(20, &SyntheticSpec::default(), seed) {
            r.validate().unwrap();
            prop_assert_eq!(label_rule(&r), r.polarity);
        }
    }
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let mut store = ParamStore::new();
    GraphEncoder::new(&mut store, &small_config(Variant::Rgat, 2), 5);
    let mut buf = Vec::new();
    save_params(&mut buf, &store).unwrap();
    let back = load_params(buf.as_slice()).unwrap();
    assert_eq!(back.len(), store.len());
    for ((_, a), (_, b)) in store.iter().zip(back.iter()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.value, b.value);
    }
}
