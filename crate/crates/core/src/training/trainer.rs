use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::optim::Adamax;
use crate::depgraph::{Instance, Polarity};
use crate::error::{Error, Result};
use crate::model::{Model, Prediction};
use crate::rng::{self, ChaCha8Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sum over batches of the regularised batch loss.
    pub loss: f64,
    pub dev: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev accuracy (earliest on ties).
    pub model: Model,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Scores `model` on `data`.
pub fn evaluate(model: &Model, data: &[Instance]) -> Result<(MetricsReport, Vec<Prediction>)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let preds = data.iter().map(|i| model.predict(i)).collect::<Result<Vec<_>>>()?;
    let gold: Vec<Polarity> = preds.iter().map(|p| p.gold).collect();
    let pred: Vec<Polarity> = preds.iter().map(|p| p.predicted).collect();
    Ok((MetricsReport::from_pairs(&gold, &pred)?, preds))
}

pub fn train(model: Model, train_set: &[Instance], dev_set: &[Instance]) -> Result<TrainOutcome> {
    train_with(model, train_set, dev_set, |_| {})
}

/// Mini-batch Adamax on the summed batch loss, for `config.epochs` epochs or
/// until dev accuracy has not improved for `config.patience` epochs.
///
/// The run is a pure function of the model, the data and `config.seed`: the
/// epoch-`e` shuffle uses stream `("shuffle", e)` and the dropout mask of the
/// `k`-th instance visited in epoch `e` uses `("dropout", e << 32 | k)`.
pub fn train_with(
    mut model: Model,
    train_set: &[Instance],
    dev_set: &[Instance],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::InvalidArgument("training and dev sets must be non-empty".into()));
    }
    let cfg = model.config().clone();
    let mut opt = Adamax::new(model.store(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut best: Option<(f64, usize, crate::autodiff::ParamStore)> = None;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, "shuffle", epoch as u64));
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Instance> = chunk.iter().map(|&i| &train_set[i]).collect();
            let mut rngs: Vec<ChaCha8Rng> = (0..chunk.len())
                .map(|k| {
                    let pos = (b * cfg.batch_size + k) as u64;
                    rng::stream(cfg.seed, "dropout", ((epoch as u64) << 32) | pos)
                })
                .collect();
            let at = |e: Error| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}, batch {b}: {m}")),
                other => other,
            };
            let (loss, grads) = model.batch_gradients(&batch, Some(&mut rngs)).map_err(at)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("epoch {epoch}, batch {b}: loss is {loss}")));
            }
            opt.step(model.store_mut(), &grads).map_err(at)?;
            epoch_loss += loss;
        }
        let (dev, _) = evaluate(&model, dev_set)?;
        let record = EpochRecord {
            epoch,
            loss: epoch_loss,
            dev,
        };
        on_epoch(&record);
        let acc = record.dev.accuracy;
        history.push(record);
        match &best {
            Some((b, _, _)) if acc <= *b => {}
            _ => best = Some((acc, epoch, model.store().clone())),
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.1);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let best_epoch = match best {
        Some((_, e, store)) => {
            model.store_mut().load_values(&store)?;
            e
        }
        None => 0,
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::depgraph::Vocabularies;
    use crate::training::{gen_synthetic, SyntheticSpec};

    fn setup(n: usize, epochs: usize) -> (Model, Vec<Instance>) {
        let records = gen_synthetic(n, &SyntheticSpec::default(), 4);
        let vocab = Vocabularies::build(&records);
        let data = vocab.encode_all(&records).unwrap();
        let cfg = ModelConfig {
            word_dim: 8,
            pos_dim: 4,
            position_dim: 4,
            relation_dim: 6,
            lstm_hidden: 5,
            graph_dim: 8,
            heads: 2,
            fusion_dim: 6,
            batch_size: 4,
            epochs,
            ..ModelConfig::desk()
        };
        (Model::new(cfg, vocab, None).unwrap(), data)
    }

    #[test]
    fn identical_runs_agree_bitwise() {
        let (model, data) = setup(24, 3);
        let a = train(model.clone(), &data[..16], &data[16..]).unwrap();
        let b = train(model, &data[..16], &data[16..]).unwrap();
        assert_eq!(a.history, b.history);
        for ((_, x), (_, y)) in a.model.store().iter().zip(b.model.store().iter()) {
            assert_eq!(x.value.data(), y.value.data());
        }
    }

    #[test]
    fn memorises_one_instance() {
        let (model, data) = setup(1, 60);
        let one = &data[..1];
        let out = train(model, one, one).unwrap();
        let (m, _) = evaluate(&out.model, one).unwrap();
        assert_eq!(m.accuracy, 1.0);
        let first = out.history[0].loss;
        assert!(out.history.last().unwrap().loss < first);
    }

    #[test]
    fn early_stopping_restores_best_epoch() {
        let (mut model, data) = setup(30, 40);
        let cfg = ModelConfig {
            patience: 2,
            ..model.config().clone()
        };
        model = Model::new(cfg, model.vocab().clone(), None).unwrap();
        let out = train(model, &data[..20], &data[20..]).unwrap();
        let best = out.history[out.best_epoch].dev.accuracy;
        assert!(out.history.iter().all(|r| r.dev.accuracy <= best));
        assert!(out.history.len() <= 40);
        if out.history.len() < 40 {
            assert_eq!(out.history.len() - 1 - out.best_epoch, 2);
        }
        let (now, _) = evaluate(&out.model, &data[20..]).unwrap();
        assert_eq!(now.accuracy, best);
    }

    #[test]
    fn empty_sets_are_rejected() {
        let (model, data) = setup(3, 1);
        assert!(train(model.clone(), &[], &data).is_err());
        assert!(train(model.clone(), &data, &[]).is_err());
        assert!(evaluate(&model, &[]).is_err());
    }
}
