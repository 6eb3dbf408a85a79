//! Experiment suites: each trains a set of models and scores them on a test
//! split.

use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::synthetic::{gen_synthetic, SyntheticSpec};
use super::trainer::{evaluate, train};
use crate::config::{ModelConfig, Variant};
use crate::depgraph::{mask_label_with, permute_labels, random_tree, DepGraph, Instance, InstanceRecord, Vocabularies};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Ablation,
    ParsePerturb,
    LabelAblation,
    WeightedFactors,
    DepthSweep,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Ablation,
        Suite::ParsePerturb,
        Suite::LabelAblation,
        Suite::WeightedFactors,
        Suite::DepthSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Ablation => "ablation",
            Suite::ParsePerturb => "parse_perturb",
            Suite::LabelAblation => "label_ablation",
            Suite::WeightedFactors => "weighted_factors",
            Suite::DepthSweep => "depth_sweep",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_");
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite {s:?}")))
    }
}

/// Encoded splits sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct SuiteData {
    pub vocab: Vocabularies,
    pub train: Vec<Instance>,
    pub dev: Vec<Instance>,
    pub test: Vec<Instance>,
}

impl SuiteData {
    /// Builds the vocabularies from `train` and encodes all three splits.
    pub fn from_records(train: &[InstanceRecord], dev: &[InstanceRecord], test: &[InstanceRecord]) -> Result<Self> {
        let vocab = Vocabularies::build(train);
        Ok(SuiteData {
            train: vocab.encode_all(train)?,
            dev: vocab.encode_all(dev)?,
            test: vocab.encode_all(test)?,
            vocab,
        })
    }

    /// Synthetic splits of the given sizes drawn with seeds `seed`,
    /// `seed + 1` and `seed + 2`.
    pub fn synthetic(sizes: [usize; 3], spec: &SyntheticSpec, seed: u64) -> Result<Self> {
        let [a, b, c] = sizes;
        Self::from_records(
            &gen_synthetic(a, spec, seed),
            &gen_synthetic(b, spec, seed + 1),
            &gen_synthetic(c, spec, seed + 2),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    /// Model seeds; each setting is trained once per seed.
    pub seeds: Vec<u64>,
    /// Number of random-tree draws in `parse_perturb`.
    pub random_tree_runs: usize,
    /// Labels removed one at a time in `label_ablation`.
    pub mask_labels: Vec<String>,
    /// Largest depth of `depth_sweep`, which runs `1..=max_layers`.
    pub max_layers: usize,
    /// Concurrent trainings.
    pub jobs: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seeds: vec![1],
            random_tree_runs: 10,
            mask_labels: Vec::new(),
            max_layers: 8,
            jobs: 1,
        }
    }
}

/// One trained model scored on the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub suite: String,
    pub variant: String,
    pub setting: String,
    pub seed: u64,
    pub accuracy: f64,
    #[serde(rename = "macro_F1")]
    pub macro_f1: f64,
}

/// Mean over the runs of one `(variant, setting)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub setting: String,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub mean_macro_f1: f64,
    /// Baseline mean accuracy minus this setting's, for `label_ablation`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy_decrement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub config: ModelConfig,
    pub options: SuiteOptions,
    pub rows: Vec<SuiteRow>,
    pub summary: Vec<SummaryRow>,
}

impl SuiteReport {
    pub fn summary_for(&self, variant: &str, setting: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.variant == variant && s.setting == setting)
    }

    /// `suite,variant,setting,seed,accuracy,macro_F1`, one line per run.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Seed for perturbing instance `index` in draw `run`.
fn instance_seed(run: u64, index: usize) -> u64 {
    rng::stream(run, "perturb_instance", index as u64).gen()
}

fn map_graphs(data: &SuiteData, f: impl Fn(&DepGraph, usize) -> Result<DepGraph>) -> Result<SuiteData> {
    let mut offset = 0;
    let mut split = |xs: &[Instance]| -> Result<Vec<Instance>> {
        let out = xs
            .iter()
            .enumerate()
            .map(|(k, inst)| inst.with_graph(f(&inst.graph, offset + k)?))
            .collect();
        offset += xs.len();
        out
    };
    Ok(SuiteData {
        vocab: data.vocab.clone(),
        train: split(&data.train)?,
        dev: split(&data.dev)?,
        test: split(&data.test)?,
    })
}

/// Replaces every graph by a uniformly random labelled tree on the same nodes.
pub fn with_random_trees(data: &SuiteData, run: u64) -> Result<SuiteData> {
    map_graphs(data, |g, k| random_tree(g.n(), &data.vocab.relations, instance_seed(run, k)))
}

/// Shuffles the arc labels of every graph, keeping the structure.
pub fn with_permuted_labels(data: &SuiteData, run: u64) -> Result<SuiteData> {
    map_graphs(data, |g, k| Ok(permute_labels(g, instance_seed(run, k))))
}

/// Removes `label` from every graph according to `cfg.mask_mode`.
pub fn with_masked_label(data: &SuiteData, label: &str, cfg: &ModelConfig) -> Result<SuiteData> {
    let id = data
        .vocab
        .relations
        .get(label)
        .ok_or_else(|| Error::InvalidArgument(format!("label {label:?} is not in the vocabulary")))?;
    map_graphs(data, |g, _| mask_label_with(g, id, cfg.mask_mode))
}

/// Trains on `data.train` with early stopping on `data.dev`, then scores `data.test`.
pub fn train_and_score(cfg: &ModelConfig, data: &SuiteData) -> Result<(f64, f64)> {
    let model = Model::from_config(cfg.clone(), data.vocab.clone())?;
    let outcome = train(model, &data.train, &data.dev)?;
    let (report, _) = evaluate(&outcome.model, &data.test)?;
    Ok((report.accuracy, report.macro_f1))
}

/// Runs `tasks` on up to `jobs` threads, returning results in task order.
pub fn run_parallel<T: Send>(jobs: usize, tasks: Vec<Box<dyn FnOnce() -> T + Send + '_>>) -> Vec<T> {
    let n = tasks.len();
    let queue: Vec<Mutex<Option<Box<dyn FnOnce() -> T + Send + '_>>>> =
        tasks.into_iter().map(|t| Mutex::new(Some(t))).collect();
    let results: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let task = queue[i].lock().unwrap().take().expect("each task runs once");
                let r = task();
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every task finished"))
        .collect()
}

struct Job {
    variant: Variant,
    setting: String,
    seed: u64,
    cfg: ModelConfig,
    data: DataRef,
}

enum DataRef {
    Base,
    RandomTree(u64),
    PermutedLabels,
    Masked(String),
}

pub fn run_suite(suite: Suite, cfg: &ModelConfig, data: &SuiteData, opts: &SuiteOptions) -> Result<SuiteReport> {
    cfg.validate()?;
    if opts.seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    let with = |variant: Variant, seed: u64| ModelConfig {
        variant,
        seed,
        ..cfg.clone()
    };
    let mut jobs = Vec::new();
    let mut push = |variant, setting: String, seed, cfg, data| {
        jobs.push(Job {
            variant,
            setting,
            seed,
            cfg,
            data,
        })
    };
    match suite {
        Suite::Ablation => {
            for variant in Variant::ALL {
                for &s in &opts.seeds {
                    push(variant, "gold".into(), s, with(variant, s), DataRef::Base);
                }
            }
        }
        Suite::ParsePerturb => {
            for &s in &opts.seeds {
                push(cfg.variant, "gold".into(), s, with(cfg.variant, s), DataRef::Base);
                push(
                    cfg.variant,
                    "permuted_labels".into(),
                    s,
                    with(cfg.variant, s),
                    DataRef::PermutedLabels,
                );
            }
            let s = opts.seeds[0];
            for run in 0..opts.random_tree_runs as u64 {
                push(
                    cfg.variant,
                    "random_tree".into(),
                    run,
                    with(cfg.variant, s),
                    DataRef::RandomTree(run),
                );
            }
        }
        Suite::LabelAblation => {
            if opts.mask_labels.is_empty() {
                return Err(Error::InvalidArgument("label_ablation needs labels to mask".into()));
            }
            for &s in &opts.seeds {
                push(cfg.variant, "baseline".into(), s, with(cfg.variant, s), DataRef::Base);
                for l in &opts.mask_labels {
                    push(
                        cfg.variant,
                        format!("mask:{l}"),
                        s,
                        with(cfg.variant, s),
                        DataRef::Masked(l.clone()),
                    );
                }
            }
        }
        Suite::WeightedFactors => {
            for &s in &opts.seeds {
                for weighted in [false, true] {
                    let c = ModelConfig {
                        weighted_factors: weighted,
                        ..with(cfg.variant, s)
                    };
                    let setting = if weighted { "weighted" } else { "unweighted" };
                    push(cfg.variant, setting.into(), s, c, DataRef::Base);
                }
            }
        }
        Suite::DepthSweep => {
            for layers in 1..=opts.max_layers {
                for &s in &opts.seeds {
                    let c = ModelConfig {
                        layers,
                        ..with(cfg.variant, s)
                    };
                    push(cfg.variant, format!("layers={layers}"), s, c, DataRef::Base);
                }
            }
        }
    }

    // perturbed copies are built inside the workers so only `jobs` exist at once
    let tasks: Vec<Box<dyn FnOnce() -> Result<SuiteRow> + Send + '_>> = jobs
        .into_iter()
        .map(|job| {
            let task: Box<dyn FnOnce() -> Result<SuiteRow> + Send + '_> = Box::new(move || {
                let owned;
                let d = match &job.data {
                    DataRef::Base => data,
                    DataRef::RandomTree(run) => {
                        owned = with_random_trees(data, *run)?;
                        &owned
                    }
                    DataRef::PermutedLabels => {
                        owned = with_permuted_labels(data, job.seed)?;
                        &owned
                    }
                    DataRef::Masked(l) => {
                        owned = with_masked_label(data, l, &job.cfg)?;
                        &owned
                    }
                };
                let (accuracy, macro_f1) = train_and_score(&job.cfg, d)?;
                Ok(SuiteRow {
                    suite: suite.name().into(),
                    variant: job.variant.name().into(),
                    setting: job.setting,
                    seed: job.seed,
                    accuracy,
                    macro_f1,
                })
            });
            task
        })
        .collect();
    let rows = run_parallel(opts.jobs, tasks).into_iter().collect::<Result<Vec<_>>>()?;
    let summary = summarise(suite, &rows);
    Ok(SuiteReport {
        suite: suite.name().into(),
        config: cfg.clone(),
        options: opts.clone(),
        rows,
        summary,
    })
}

fn summarise(suite: Suite, rows: &[SuiteRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.variant.clone(), r.setting.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out: Vec<SummaryRow> = keys
        .into_iter()
        .map(|(variant, setting)| {
            let sel: Vec<&SuiteRow> = rows
                .iter()
                .filter(|r| r.variant == variant && r.setting == setting)
                .collect();
            let k = sel.len() as f64;
            SummaryRow {
                runs: sel.len(),
                mean_accuracy: sel.iter().map(|r| r.accuracy).sum::<f64>() / k,
                mean_macro_f1: sel.iter().map(|r| r.macro_f1).sum::<f64>() / k,
                variant,
                setting,
                accuracy_decrement: None,
            }
        })
        .collect();
    if suite == Suite::LabelAblation {
        if let Some(base) = out.iter().find(|s| s.setting == "baseline").map(|s| s.mean_accuracy) {
            for s in &mut out {
                if s.setting != "baseline" {
                    s.accuracy_decrement = Some(base - s.mean_accuracy);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert_eq!("parse-perturb".parse::<Suite>().unwrap(), Suite::ParsePerturb);
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn parallel_keeps_order() {
        let tasks: Vec<Box<dyn FnOnce() -> usize + Send>> =
            (0..20usize).map(|i| Box::new(move || i * i) as Box<dyn FnOnce() -> usize + Send>).collect();
        assert_eq!(run_parallel(4, tasks), (0..20).map(|i| i * i).collect::<Vec<_>>());
        assert!(run_parallel::<usize>(3, Vec::new()).is_empty());
    }

    #[test]
    fn summary_means_and_decrements() {
        let row = |setting: &str, seed, acc| SuiteRow {
            suite: "label_ablation".into(),
            variant: "rgat".into(),
            setting: setting.into(),
            seed,
            accuracy: acc,
            macro_f1: acc / 2.0,
        };
        let rows = vec![
            row("baseline", 1, 0.8),
            row("baseline", 2, 0.6),
            row("mask:amod", 1, 0.5),
            row("mask:amod", 2, 0.5),
        ];
        let s = summarise(Suite::LabelAblation, &rows);
        assert_eq!(s.len(), 2);
        assert!((s[0].mean_accuracy - 0.7).abs() < 1e-15);
        assert!((s[1].accuracy_decrement.unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(s[0].runs, 2);
    }

    #[test]
    fn csv_header() {
        let report = SuiteReport {
            suite: "ablation".into(),
            config: ModelConfig::default(),
            options: SuiteOptions::default(),
            rows: vec![SuiteRow {
                suite: "ablation".into(),
                variant: "gat".into(),
                setting: "gold".into(),
                seed: 3,
                accuracy: 0.5,
                macro_f1: 0.25,
            }],
            summary: Vec::new(),
        };
        let text = report.to_csv_string().unwrap();
        assert_eq!(text, "suite,variant,setting,seed,accuracy,macro_F1\nablation,gat,gold,3,0.5,0.25\n");
    }
}
