//! Central finite-difference verification of tape gradients.

use rand::seq::index;

use super::params::{Bindings, ParameterSet};
use super::tape::{Tape, Var};
use crate::rng::{domain, rng_for};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub eps: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Coordinates sampled from tensors larger than this; smaller tensors are
    /// checked exhaustively.
    pub coords_per_tensor: usize,
    pub seed: u64,
    /// Coordinates whose analytic and numeric gradients are both below this
    /// magnitude are compared in absolute terms only.
    pub zero_tolerance: f64,
    /// Lower bound on the relative-error denominator.
    pub denominator_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            tolerance: 1e-5,
            coords_per_tensor: 32,
            seed: 0,
            zero_tolerance: 1e-10,
            denominator_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub coords_checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn max_rel_error(&self) -> f64 {
        self.worst().map_or(0.0, |w| w.max_rel_error)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    pub fn coords_checked(&self) -> usize {
        self.params.iter().map(|p| p.coords_checked).sum()
    }
}

fn relative_error(analytic: f64, numeric: f64, config: &GradCheckConfig) -> f64 {
    let diff = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    if scale < config.zero_tolerance {
        return if diff < config.zero_tolerance { 0.0 } else { f64::INFINITY };
    }
    diff / scale.max(config.denominator_floor)
}

/// Compares the gradient produced by backpropagating `analytic` with central
/// differences of `numeric`.
///
/// `numeric(params, name)` returns the objective whose derivative with respect
/// to parameter `name` the analytic gradient should equal. For ordinary losses
/// that is the loss value itself (see [`check_loss_gradients`]); with gradient
/// reversal in the graph it depends on the parameter's group.
pub fn check_gradients<A, N>(
    params: &ParameterSet,
    config: &GradCheckConfig,
    analytic: A,
    numeric: N,
) -> Result<GradCheckReport>
where
    A: Fn(&mut Tape, &Bindings) -> Result<Var>,
    N: Fn(&ParameterSet, &str) -> Result<f64>,
{
    if !(config.eps > 0.0 && config.eps <= 1e-3) {
        return Err(Error::Config(format!(
            "finite-difference step {} outside (0, 1e-3]",
            config.eps
        )));
    }
    let mut tape = Tape::new();
    let bindings = params.bind(&mut tape);
    let loss = analytic(&mut tape, &bindings)?;
    let grads = bindings.gradients(&tape.backward(loss)?);

    let mut report = GradCheckReport {
        params: Vec::with_capacity(params.len()),
        tolerance: config.tolerance,
    };
    let mut probe = params.clone();
    for (pi, (name, p)) in params.iter().enumerate() {
        let numel = p.value.numel();
        let coords: Vec<usize> = if numel <= config.coords_per_tensor {
            (0..numel).collect()
        } else {
            let mut rng = rng_for(config.seed, domain::GRADCHECK, pi as u64);
            let mut picked = index::sample(&mut rng, numel, config.coords_per_tensor).into_vec();
            picked.sort_unstable();
            picked
        };
        let analytic_grad = grads.get(name).ok_or_else(|| Error::MissingGradient(name.into()))?;
        let mut check = ParamCheck {
            name: name.to_string(),
            coords_checked: coords.len(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for &c in &coords {
            let original = p.value.data()[c];
            probe.tensor_mut(name)?.data_mut()[c] = original + config.eps;
            let plus = numeric(&probe, name)?;
            probe.tensor_mut(name)?.data_mut()[c] = original - config.eps;
            let minus = numeric(&probe, name)?;
            probe.tensor_mut(name)?.data_mut()[c] = original;

            let fd = (plus - minus) / (2.0 * config.eps);
            let an = analytic_grad.data()[c];
            let err = relative_error(an, fd, config);
            if err > check.max_rel_error {
                check.max_rel_error = err;
                check.worst_index = c;
                check.analytic = an;
                check.numeric = fd;
            }
        }
        report.params.push(check);
    }
    Ok(report)
}

/// [`check_gradients`] where the numeric objective is the forward value of the
/// same loss graph.
pub fn check_loss_gradients<F>(params: &ParameterSet, config: &GradCheckConfig, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    check_gradients(params, config, &build, |p, _| {
        let mut tape = Tape::new();
        let b = p.bind_frozen(&mut tape);
        let loss = build(&mut tape, &b)?;
        tape.value(loss).item()
    })
}
