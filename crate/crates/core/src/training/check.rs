//! Gradient checks of an assembled model.

use super::optim::Adamax;
use crate::autodiff::{grad_check, GradCheckOptions, GradCheckReport};
use crate::depgraph::Instance;
use crate::error::{Error, Result};
use crate::head::classify_loss;
use crate::model::Model;

/// Central-difference check of the cross-entropy gradient of `inst`,
/// without dropout. `model` is left unchanged.
pub fn model_grad_check(model: &Model, inst: &Instance, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut store = model.store().clone();
    grad_check(
        &mut store,
        |tape| {
            let (out, _) = model.forward(tape, inst, None)?;
            let (_, loss) = classify_loss(tape, out.logits, inst.polarity)?;
            Ok(loss)
        },
        opts,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOutcome {
    pub steps: usize,
    pub loss: f64,
}

/// Adamax steps on `inst` alone, without dropout, until its loss is below
/// `target`. Errors if that takes more than `max_steps`.
///
/// Central differences resolve the loss only to a few ulps of its value
/// divided by `2ε`; at a loss near 1 that is about `1e-11`, coarser than
/// many attention gradients at initialisation. Fitting first shrinks the
/// loss and with it the noise floor, so every coordinate can be compared
/// at relative precision.
pub fn fit_instance(model: &mut Model, inst: &Instance, target: f64, max_steps: usize) -> Result<FitOutcome> {
    let cfg = model.config().clone();
    let mut opt = Adamax::new(model.store(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    for steps in 0..=max_steps {
        let (loss, grads) = model.instance_gradients(inst, None)?;
        if loss < target {
            return Ok(FitOutcome { steps, loss });
        }
        if steps < max_steps {
            opt.step(model.store_mut(), &grads)?;
        }
    }
    Err(Error::InvalidArgument(format!(
        "loss did not fall below {target} within {max_steps} steps"
    )))
}
