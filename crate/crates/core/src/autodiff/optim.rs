use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::params::{GradMap, ParameterSet};
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer hyperparameters plus the per-parameter moment estimates Adam
/// carries between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step_count: u64,
    first_moment: IndexMap<String, Tensor>,
    second_moment: IndexMap<String, Tensor>,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerState {
            kind: OptimizerKind::Sgd,
            learning_rate,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
            step_count: 0,
            first_moment: IndexMap::new(),
            second_moment: IndexMap::new(),
        }
    }

    pub fn adam(learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        OptimizerState {
            kind: OptimizerKind::Adam,
            learning_rate,
            beta1,
            beta2,
            eps,
            step_count: 0,
            first_moment: IndexMap::new(),
            second_moment: IndexMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor> {
        self.first_moment.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Tensor> {
        self.second_moment.get(name)
    }

    /// Applies one update with whichever rule `kind` selects.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &GradMap) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => {
                sgd_step(params, grads, self.learning_rate)?;
                self.step_count += 1;
                Ok(())
            }
            OptimizerKind::Adam => adam_step(params, grads, self),
        }
    }
}

fn validate(params: &ParameterSet, grads: &GradMap) -> Result<()> {
    for (name, p) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::MissingGradient(name.to_string()))?;
        if g.shape() != p.value.shape() {
            return Err(Error::ShapeMismatch {
                op: "optimizer step",
                left: p.value.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// `theta <- theta - lr * grad` for every parameter.
pub fn sgd_step(params: &mut ParameterSet, grads: &GradMap, learning_rate: f64) -> Result<()> {
    validate(params, grads)?;
    for (name, p) in params.iter_mut() {
        let g = grads.get(name).expect("validated");
        for (w, gi) in p.value.data_mut().iter_mut().zip(g.data()) {
            *w -= learning_rate * gi;
        }
    }
    Ok(())
}

/// Bias-corrected Adam update. Rejects non-finite gradients before touching
/// any parameter.
pub fn adam_step(params: &mut ParameterSet, grads: &GradMap, state: &mut OptimizerState) -> Result<()> {
    if state.kind != OptimizerKind::Adam {
        return Err(Error::Config("adam_step called with a non-Adam optimizer state".into()));
    }
    validate(params, grads)?;
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFiniteGradient(name.to_string()));
    }
    state.step_count += 1;
    let t = state.step_count as f64;
    let (b1, b2) = (state.beta1, state.beta2);
    let correction1 = 1.0 - b1.powf(t);
    let correction2 = 1.0 - b2.powf(t);
    for (name, p) in params.iter_mut() {
        let g = grads.get(name).expect("validated");
        let shape = p.value.shape().to_vec();
        let m = state
            .first_moment
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(&shape));
        for (mi, gi) in m.data_mut().iter_mut().zip(g.data()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
        }
        let v = state
            .second_moment
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(&shape));
        for (vi, gi) in v.data_mut().iter_mut().zip(g.data()) {
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
        }
        let m = &state.first_moment[name];
        let v = &state.second_moment[name];
        for ((w, mi), vi) in p.value.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
            let m_hat = mi / correction1;
            let v_hat = vi / correction2;
            *w -= state.learning_rate * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamGroup;

    fn single(value: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("theta", ParamGroup::Extractor, Tensor::vector(vec![value])).unwrap();
        p
    }

    fn grad(value: f64) -> GradMap {
        let mut g = GradMap::new();
        g.insert("theta", Tensor::vector(vec![value]));
        g
    }

    #[test]
    fn sgd_single_step() {
        let mut p = single(1.0);
        sgd_step(&mut p, &grad(0.5), 0.1).unwrap();
        assert!((p.tensor("theta").unwrap().data()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_gradient_is_noop() {
        let mut p = single(1.25);
        sgd_step(&mut p, &grad(0.0), 0.1).unwrap();
        assert_eq!(p.tensor("theta").unwrap().data()[0], 1.25);
    }

    #[test]
    fn missing_gradient_is_reported_by_name() {
        let mut p = single(1.0);
        let err = sgd_step(&mut p, &GradMap::new(), 0.1).unwrap_err();
        assert!(err.to_string().contains("theta"));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        for g in [3.0, -0.02, 1e-3] {
            let mut p = single(0.0);
            let mut s = OptimizerState::adam(0.01, 0.9, 0.999, 1e-8);
            adam_step(&mut p, &grad(g), &mut s).unwrap();
            let moved = p.tensor("theta").unwrap().data()[0];
            assert!((moved + 0.01 * g.signum()).abs() < 1e-7, "g={g} moved={moved}");
            assert_eq!(s.step_count(), 1);
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_parameter() {
        let mut p = single(0.7);
        let mut s = OptimizerState::adam(0.01, 0.9, 0.999, 1e-8);
        adam_step(&mut p, &grad(0.0), &mut s).unwrap();
        assert_eq!(p.tensor("theta").unwrap().data()[0], 0.7);
    }

    #[test]
    fn adam_two_steps_match_hand_expansion() {
        // Hand-expanded recursion for g = 1 on both steps, mu = 0.1.
        // Step 1: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1 -> delta = 0.1 / (1 + 1e-8).
        // Step 2: m = 0.19, v = 0.001999, m_hat = 0.19 / 0.19 = 1,
        //         v_hat = 0.001999 / 0.001999 = 1 -> same delta again.
        let step1 = 0.1 / (1.0 + 1e-8);
        let m2: f64 = 0.9 * 0.1 + 0.1;
        let v2: f64 = 0.999 * 0.001 + 0.001;
        let step2 = 0.1 * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        let expected = 0.0 - step1 - step2;

        let mut p = single(0.0);
        let mut s = OptimizerState::adam(0.1, 0.9, 0.999, 1e-8);
        adam_step(&mut p, &grad(1.0), &mut s).unwrap();
        adam_step(&mut p, &grad(1.0), &mut s).unwrap();
        let got = p.tensor("theta").unwrap().data()[0];
        assert!((got - expected).abs() < 1e-12, "got {got} expected {expected}");
        assert!((got + 0.2).abs() < 1e-7);
        assert_eq!(s.step_count(), 2);
        assert_eq!(s.first_moment("theta").unwrap().shape(), &[1]);
    }

    #[test]
    fn adam_rejects_nan_without_updating() {
        let mut p = single(0.5);
        let mut s = OptimizerState::adam(0.1, 0.9, 0.999, 1e-8);
        let err = adam_step(&mut p, &grad(f64::NAN), &mut s).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(_)));
        assert_eq!(p.tensor("theta").unwrap().data()[0], 0.5);
        assert_eq!(s.step_count(), 0);
    }

    #[test]
    fn sgd_state_counts_steps_without_moments() {
        let mut p = single(1.0);
        let mut s = OptimizerState::sgd(0.1);
        s.step(&mut p, &grad(1.0)).unwrap();
        s.step(&mut p, &grad(1.0)).unwrap();
        assert_eq!(s.step_count(), 2);
        assert!(s.first_moment("theta").is_none());
    }
}
