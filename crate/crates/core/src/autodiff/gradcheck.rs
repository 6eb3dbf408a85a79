//! Central-difference gradient checking.

use rand::seq::index::sample;

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Coordinates checked per parameter; smaller parameters are checked in full.
    pub samples_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            samples_per_param: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<CoordinateCheck>,
    /// Largest relative error per parameter, in store order.
    pub per_param: Vec<(String, f64)>,
    pub coordinates: usize,
    /// Every checked coordinate, in check order.
    pub checks: Vec<CoordinateCheck>,
}

impl GradCheckReport {
    /// Largest `|analytic - numeric|` over all checked coordinates.
    pub fn max_abs_error(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| (c.analytic - c.numeric).abs())
            .fold(0.0, f64::max)
    }

    /// Coordinates whose relative error exceeds `rel_tol` and whose absolute
    /// error exceeds `abs_floor`. A central difference of a loss near 1 is
    /// only resolved to about `ulp(1) / 2ε`, so `abs_floor` separates wrong
    /// gradients from rounding noise on near-zero ones.
    pub fn failures(&self, rel_tol: f64, abs_floor: f64) -> Vec<&CoordinateCheck> {
        self.checks
            .iter()
            .filter(|c| c.rel_error > rel_tol && (c.analytic - c.numeric).abs() > abs_floor)
            .collect()
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn eval<F>(store: &ParamStore, loss_fn: &F) -> Result<f64>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    let loss = loss_fn(&mut tape)?;
    let v = tape.value(loss).item();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("loss evaluated to {v}")))
    }
}

/// Compares backward-pass gradients of every trainable parameter with
/// `(f(θ + ε) - f(θ - ε)) / 2ε` on a seeded subsample of coordinates.
///
/// `loss_fn` must be deterministic; parameter values are restored afterwards.
pub fn grad_check<F>(store: &mut ParamStore, loss_fn: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new(store);
        let loss = loss_fn(&mut tape)?;
        tape.backward(loss)?.into_params()
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        per_param: Vec::new(),
        coordinates: 0,
        checks: Vec::new(),
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let (name, len, trainable) = {
            let p = store.get(id);
            (p.name.clone(), p.value.len(), p.trainable)
        };
        if !trainable {
            continue;
        }
        let mut rng = rng::stream(opts.seed, "grad_check", id.index() as u64);
        let coords: Vec<usize> = if len <= opts.samples_per_param {
            (0..len).collect()
        } else {
            let mut v = sample(&mut rng, len, opts.samples_per_param).into_vec();
            v.sort_unstable();
            v
        };
        let mut worst_here: f64 = 0.0;
        for idx in coords {
            let a = analytic.get(id).map_or(0.0, |g| g.data()[idx]);
            let orig = store.value(id).data()[idx];
            store.value_mut(id).data_mut()[idx] = orig + opts.eps;
            let plus = eval(store, &loss_fn);
            store.value_mut(id).data_mut()[idx] = orig - opts.eps;
            let minus = eval(store, &loss_fn);
            store.value_mut(id).data_mut()[idx] = orig;
            let numeric = (plus? - minus?) / (2.0 * opts.eps);
            let rel = relative_error(a, numeric);
            let check = CoordinateCheck {
                param: name.clone(),
                index: idx,
                analytic: a,
                numeric,
                rel_error: rel,
            };
            report.coordinates += 1;
            worst_here = worst_here.max(rel);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some(check.clone());
            }
            report.checks.push(check);
        }
        report.per_param.push((name, worst_here));
    }
    Ok(report)
}
