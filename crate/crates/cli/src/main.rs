mod manifest;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rgat::autodiff::GradCheckOptions;
use rgat::config::{ModelConfig, Variant};
use rgat::depgraph::{attach_targets, read_conllu, read_jsonl, read_target_labels, write_jsonl, InstanceRecord};
use rgat::model::{Model, CONFIG_FILE, PARAMS_FILE, VOCAB_FILE};
use rgat::training::suite::{with_masked_label, with_permuted_labels, with_random_trees};
use rgat::training::{
    evaluate, fit_instance, gen_synthetic, model_grad_check, run_suite, train_with, Suite, SuiteData, SuiteOptions,
    SyntheticSpec,
};

use manifest::{digest_dir, digest_file, InputDigest, Run, RunManifest};

const GRAD_TOL: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "rgat", version, about = "Relational graph attention for targeted sentiment")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Flat TOML config; unspecified keys take the preset's values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Preset::Default)]
    preset: Preset,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parent directory of run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[arg(long, global = true)]
    variant: Option<Variant>,
    #[arg(long, global = true)]
    layers: Option<usize>,
    #[arg(long, global = true)]
    weighted_factors: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Desk,
}

#[derive(Args, Default)]
struct Perturb {
    /// Replace the label everywhere (see `mask_mode`).
    #[arg(long)]
    mask_label: Option<String>,
    /// Replace every graph by a random labelled tree.
    #[arg(long, conflicts_with = "permute_labels")]
    random_tree: bool,
    /// Shuffle arc labels within each graph.
    #[arg(long)]
    permute_labels: bool,
}

#[derive(Subcommand)]
enum Command {
    /// CoNLL-U sentences plus a target TSV to instance JSONL.
    Ingest { conllu: PathBuf, labels: PathBuf },
    /// Generate a synthetic label-signal dataset.
    Synth {
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
    Train {
        train: PathBuf,
        dev: PathBuf,
        #[command(flatten)]
        perturb: Perturb,
    },
    Eval {
        /// Model directory written by `train`.
        model: PathBuf,
        test: PathBuf,
        #[command(flatten)]
        perturb: Perturb,
    },
    /// Run an experiment suite.
    Suite {
        name: Suite,
        train: PathBuf,
        dev: PathBuf,
        test: PathBuf,
        /// Comma-separated model seeds.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 10)]
        random_tree_runs: usize,
        #[arg(long, default_value_t = 8)]
        max_layers: usize,
        /// Labels for `label_ablation`; repeatable.
        #[arg(long = "mask-label")]
        mask_labels: Vec<String>,
    },
    /// Check analytic gradients against central differences.
    Gradcheck {
        /// Instance JSONL; a synthetic 6-token instance when absent.
        instances: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Fit the instance until its loss is below this before checking.
        #[arg(long, default_value_t = 1e-3)]
        fit_loss: f64,
        /// Check at initialisation.
        #[arg(long)]
        no_fit: bool,
    },
    /// Export attention weights for selected instances.
    Trace {
        model: PathBuf,
        instances: PathBuf,
        /// Instance ids; all instances when absent.
        #[arg(long = "id")]
        ids: Vec<String>,
    },
}

impl Global {
    fn model_config(&self) -> Result<ModelConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                overlay(self.preset_config(), &text).with_context(|| format!("invalid config {}", path.display()))?
            }
            None => self.preset_config(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(l) = self.layers {
            cfg.layers = l;
        }
        if self.weighted_factors {
            cfg.weighted_factors = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn preset_config(&self) -> ModelConfig {
        match self.preset {
            Preset::Default => ModelConfig::default(),
            Preset::Desk => ModelConfig::desk(),
        }
    }
}

/// Keys present in `text` override `base`; unknown keys are rejected.
fn overlay(base: ModelConfig, text: &str) -> Result<ModelConfig> {
    // typed parse of the file alone, so errors point at its own lines
    toml::from_str::<ModelConfig>(text)?;
    let file: toml::Table = text.parse()?;
    let mut merged: toml::Table = base.to_toml_string().parse()?;
    merged.extend(file);
    Ok(ModelConfig::from_toml_str(&toml::to_string(&merged)?)?)
}

fn read_records(path: &Path) -> Result<Vec<InstanceRecord>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_jsonl(BufReader::new(f)).with_context(|| format!("invalid instance file {}", path.display()))
}

fn perturb(data: SuiteData, p: &Perturb, cfg: &ModelConfig) -> Result<SuiteData> {
    let mut data = data;
    if let Some(label) = &p.mask_label {
        data = with_masked_label(&data, label, cfg)?;
    }
    if p.random_tree {
        data = with_random_trees(&data, cfg.seed)?;
    }
    if p.permute_labels {
        data = with_permuted_labels(&data, cfg.seed)?;
    }
    Ok(data)
}

fn perturb_options(p: &Perturb) -> serde_json::Value {
    json!({
        "mask_label": p.mask_label,
        "random_tree": p.random_tree,
        "permute_labels": p.permute_labels,
    })
}

fn ingest(g: &Global, conllu: &Path, labels: &Path) -> Result<PathBuf> {
    let sentences = read_conllu(BufReader::new(
        File::open(conllu).with_context(|| format!("cannot open {}", conllu.display()))?,
    ))
    .with_context(|| format!("invalid CoNLL-U {}", conllu.display()))?;
    let targets = read_target_labels(BufReader::new(
        File::open(labels).with_context(|| format!("cannot open {}", labels.display()))?,
    ))
    .with_context(|| format!("invalid target file {}", labels.display()))?;
    let records = attach_targets(&sentences, &targets)?;
    let inputs = vec![digest_file(conllu)?, digest_file(labels)?];
    let mut run = Run::create(&g.out, RunManifest::new("ingest", 0, None, inputs, json!({})))?;
    let path = run.output("instances.jsonl");
    let mut w = BufWriter::new(File::create(path)?);
    write_jsonl(&mut w, &records)?;
    w.flush()?;
    eprintln!("{} instances from {} sentences", records.len(), sentences.len());
    run.finish()
}

fn synth(g: &Global, n: usize) -> Result<PathBuf> {
    let seed = g.seed.unwrap_or(1);
    let spec = SyntheticSpec::default();
    let records = gen_synthetic(n, &spec, seed);
    let opts = json!({ "n": n, "spec": spec });
    let mut run = Run::create(&g.out, RunManifest::new("synth", seed, None, Vec::new(), opts))?;
    let path = run.output("synthetic.jsonl");
    let mut w = BufWriter::new(File::create(path)?);
    write_jsonl(&mut w, &records)?;
    w.flush()?;
    run.finish()
}

fn train_cmd(g: &Global, train: &Path, dev: &Path, p: &Perturb) -> Result<PathBuf> {
    let cfg = g.model_config()?;
    let data = SuiteData::from_records(&read_records(train)?, &read_records(dev)?, &[])?;
    let data = perturb(data, p, &cfg)?;
    let mut inputs = vec![digest_file(train)?, digest_file(dev)?];
    if let Some(e) = &cfg.embeddings {
        inputs.push(digest_file(Path::new(e))?);
    }
    let manifest = RunManifest::new("train", cfg.seed, Some(cfg.clone()), inputs, perturb_options(p));
    let mut run = Run::create(&g.out, manifest)?;
    let model = Model::from_config(cfg, data.vocab.clone())?;
    let outcome = train_with(model, &data.train, &data.dev, |r| {
        eprintln!("epoch {:>3}  loss {:>12.4}  dev acc {:.4}  dev macro-F1 {:.4}", r.epoch, r.loss, r.dev.accuracy, r.dev.macro_f1);
    })?;
    let model_dir = run.dir().join("model");
    outcome.model.save(&model_dir)?;
    for f in [CONFIG_FILE, VOCAB_FILE, PARAMS_FILE] {
        run.output(&format!("model/{f}"));
    }
    run.write_json("history.json", &outcome.history)?;
    let best = &outcome.history[outcome.best_epoch];
    println!("best epoch {}  dev accuracy {:.4}  dev macro-F1 {:.4}", best.epoch, best.dev.accuracy, best.dev.macro_f1);
    run.finish()
}

fn eval_cmd(g: &Global, model_dir: &Path, test: &Path, p: &Perturb) -> Result<PathBuf> {
    let model = Model::load(model_dir).with_context(|| format!("cannot load model from {}", model_dir.display()))?;
    let mut cfg = model.config().clone();
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    let data = SuiteData {
        vocab: model.vocab().clone(),
        train: Vec::new(),
        dev: Vec::new(),
        test: model.vocab().encode_all(&read_records(test)?)?,
    };
    let data = perturb(data, p, &cfg)?;
    let mut inputs = digest_dir(model_dir)?;
    inputs.push(digest_file(test)?);
    let mut run = Run::create(&g.out, RunManifest::new("eval", cfg.seed, Some(cfg), inputs, perturb_options(p)))?;
    let (metrics, preds) = evaluate(&model, &data.test)?;
    run.write_json("metrics.json", &metrics)?;
    run.write_jsonl("predictions.jsonl", &preds)?;
    println!("accuracy {:.4}  macro-F1 {:.4}  ({} instances)", metrics.accuracy, metrics.macro_f1, metrics.total);
    run.finish()
}

fn suite_cmd(g: &Global, name: Suite, paths: [&Path; 3], opts: SuiteOptions) -> Result<PathBuf> {
    let cfg = g.model_config()?;
    let [tr, dv, te] = paths;
    let data = SuiteData::from_records(&read_records(tr)?, &read_records(dv)?, &read_records(te)?)?;
    let inputs: Vec<InputDigest> = paths.iter().map(|p| digest_file(p)).collect::<Result<_>>()?;
    // thread count does not change results, so it stays out of the manifest
    let recorded = SuiteOptions { jobs: 1, ..opts.clone() };
    let manifest = RunManifest::new(
        &format!("suite-{}", name.name()),
        cfg.seed,
        Some(cfg.clone()),
        inputs,
        serde_json::to_value(&recorded)?,
    );
    let mut run = Run::create(&g.out, manifest)?;
    let report = run_suite(name, &cfg, &data, &opts)?;
    let csv = run.output("report.csv");
    report.write_csv(BufWriter::new(File::create(csv)?))?;
    run.write_json("report.json", &rgat::training::SuiteReport { options: recorded, ..report.clone() })?;
    for s in &report.summary {
        println!(
            "{:<12} {:<20} runs {:>2}  accuracy {:.4}  macro-F1 {:.4}",
            s.variant, s.setting, s.runs, s.mean_accuracy, s.mean_macro_f1
        );
    }
    run.finish()
}

fn gradcheck_cmd(g: &Global, instances: Option<&Path>, index: usize, fit_loss: f64, no_fit: bool) -> Result<(PathBuf, bool)> {
    let (records, inputs) = match instances {
        Some(p) => (read_records(p)?, vec![digest_file(p)?]),
        None => {
            let spec = SyntheticSpec {
                min_len: 6,
                max_len: 6,
                ..SyntheticSpec::default()
            };
            (gen_synthetic(3, &spec, 21), Vec::new())
        }
    };
    let record = records
        .get(index)
        .with_context(|| format!("instance index {index} out of range ({} instances)", records.len()))?;
    let mut cfg = match (&g.config, g.preset) {
        (None, Preset::Default) => ModelConfig {
            layers: 2,
            ..ModelConfig::desk()
        },
        _ => g.model_config()?,
    };
    cfg.dropout = 0.0;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(v) = g.variant {
        cfg.variant = v;
    }
    if let Some(l) = g.layers {
        cfg.layers = l;
    }
    cfg.weighted_factors |= g.weighted_factors;
    cfg.validate()?;
    let data = SuiteData::from_records(&records, &[], &[])?;
    let inst = &data.train[index];
    let opts = json!({ "index": index, "fit_loss": fit_loss, "no_fit": no_fit, "instance": record.id });
    let mut run = Run::create(&g.out, RunManifest::new("gradcheck", cfg.seed, Some(cfg.clone()), inputs, opts))?;
    let mut model = Model::new(cfg, data.vocab.clone(), None)?;
    let fit = if no_fit {
        None
    } else {
        Some(fit_instance(&mut model, inst, fit_loss, 1000)?)
    };
    let report = model_grad_check(&model, inst, &GradCheckOptions::default())?;
    let ok = report.max_rel_error < GRAD_TOL;
    if let Some(f) = fit {
        println!("fitted in {} steps, loss {:.3e}", f.steps, f.loss);
    }
    println!("coordinates {}", report.coordinates);
    println!("max relative error {:.3e}", report.max_rel_error);
    if let Some(w) = &report.worst {
        println!("worst {}[{}] analytic {:.6e} numeric {:.6e}", w.param, w.index, w.analytic, w.numeric);
    }
    run.write_json(
        "gradcheck.json",
        &json!({
            "max_rel_error": report.max_rel_error,
            "coordinates": report.coordinates,
            "fit_steps": fit.map(|f| f.steps),
            "fit_loss": fit.map(|f| f.loss),
            "per_param": report.per_param,
            "pass": ok,
        }),
    )?;
    Ok((run.finish()?, ok))
}

fn trace_cmd(g: &Global, model_dir: &Path, instances: &Path, ids: &[String]) -> Result<PathBuf> {
    let model = Model::load(model_dir).with_context(|| format!("cannot load model from {}", model_dir.display()))?;
    let data = model.vocab().encode_all(&read_records(instances)?)?;
    let chosen: Vec<_> = if ids.is_empty() {
        data.iter().collect()
    } else {
        ids.iter()
            .map(|id| {
                data.iter()
                    .find(|i| &i.id == id)
                    .with_context(|| format!("no instance with id {id:?}"))
            })
            .collect::<Result<_>>()?
    };
    let traces = chosen.iter().map(|i| model.trace(i)).collect::<rgat::Result<Vec<_>>>()?;
    let mut inputs = digest_dir(model_dir)?;
    inputs.push(digest_file(instances)?);
    let cfg = model.config().clone();
    let mut run = Run::create(&g.out, RunManifest::new("trace", cfg.seed, Some(cfg), inputs, json!({ "ids": ids })))?;
    run.write_json("traces.json", &traces)?;
    run.finish()
}

fn run(cli: Cli) -> Result<ExitCode> {
    let g = &cli.global;
    let dir = match &cli.command {
        Command::Ingest { conllu, labels } => ingest(g, conllu, labels)?,
        Command::Synth { n } => synth(g, *n)?,
        Command::Train { train, dev, perturb } => train_cmd(g, train, dev, perturb)?,
        Command::Eval { model, test, perturb } => eval_cmd(g, model, test, perturb)?,
        Command::Suite {
            name,
            train,
            dev,
            test,
            seeds,
            random_tree_runs,
            max_layers,
            mask_labels,
        } => {
            if g.jobs == 0 {
                bail!("--jobs must be at least 1");
            }
            let opts = SuiteOptions {
                seeds: seeds.clone(),
                random_tree_runs: *random_tree_runs,
                mask_labels: mask_labels.clone(),
                max_layers: *max_layers,
                jobs: g.jobs,
            };
            suite_cmd(g, *name, [train, dev, test], opts)?
        }
        Command::Gradcheck {
            instances,
            index,
            fit_loss,
            no_fit,
        } => {
            let (dir, ok) = gradcheck_cmd(g, instances.as_deref(), *index, *fit_loss, *no_fit)?;
            println!("{}", dir.display());
            return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
        Command::Trace { model, instances, ids } => trace_cmd(g, model, instances, ids)?,
    };
    println!("{}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
