use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Parameter partition used by the update rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    /// Shared feature extractor.
    Extractor,
    SpoofHead,
    SpeakerHead,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 3] = [
        ParamGroup::Extractor,
        ParamGroup::SpoofHead,
        ParamGroup::SpeakerHead,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamGroup::Extractor => "extractor",
            ParamGroup::SpoofHead => "spoof_head",
            ParamGroup::SpeakerHead => "speaker_head",
        }
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown parameter group `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub group: ParamGroup,
    pub value: Tensor,
}

/// Named, grouped collection of trainable tensors. Iteration follows
/// registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    params: IndexMap<String, Parameter>,
}

impl ParameterSet {
    pub fn new() -> Self {
        ParameterSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, group: ParamGroup, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::DuplicateParameter(name));
        }
        self.params.insert(name, Parameter { group, value });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.get(name)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Parameter)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn group_names(&self, group: ParamGroup) -> impl Iterator<Item = &str> {
        self.iter().filter(move |(_, p)| p.group == group).map(|(n, _)| n)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.numel()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.values().all(|p| p.value.is_finite())
    }

    /// Registers every parameter on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        self.bind_with(tape, true)
    }

    /// Registers every parameter as a constant, for inference.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bindings {
        self.bind_with(tape, false)
    }

    fn bind_with(&self, tape: &mut Tape, trainable: bool) -> Bindings {
        let vars = self
            .params
            .iter()
            .map(|(name, p)| {
                let var = if trainable {
                    tape.param(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                };
                (name.clone(), var)
            })
            .collect();
        Bindings { vars }
    }

    /// Largest elementwise difference over all parameters shared by name.
    pub fn max_abs_diff(&self, other: &ParameterSet) -> f64 {
        self.params
            .iter()
            .filter_map(|(name, p)| other.params.get(name).map(|q| p.value.max_abs_diff(&q.value)))
            .fold(0.0, f64::max)
    }
}

/// Tape handles for the parameters of a [`ParameterSet`].
#[derive(Clone, Debug)]
pub struct Bindings {
    vars: IndexMap<String, Var>,
}

impl Bindings {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// Gradient of every bound parameter, zero where the loss did not reach it.
    pub fn gradients(&self, grads: &Gradients) -> GradMap {
        GradMap {
            grads: self
                .vars
                .iter()
                .map(|(name, &var)| (name.clone(), grads.wrt(var)))
                .collect(),
        }
    }
}

/// Parameter name to gradient tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradMap {
    grads: IndexMap<String, Tensor>,
}

impl GradMap {
    pub fn new() -> Self {
        GradMap::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Tensor) {
        self.grads.insert(name.into(), grad);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// `self + factor * other`, over the names of `self`.
    pub fn axpy(&self, factor: f64, other: &GradMap) -> Result<GradMap> {
        let mut out = self.clone();
        for (name, g) in out.grads.iter_mut() {
            let o = other
                .get(name)
                .ok_or_else(|| Error::MissingGradient(name.clone()))?;
            for (a, b) in g.data_mut().iter_mut().zip(o.data()) {
                *a += factor * b;
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: f64) -> GradMap {
        let mut out = self.clone();
        for g in out.grads.values_mut() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
        out
    }

    /// Name of the first gradient containing NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.grads
            .iter()
            .find(|(_, g)| !g.is_finite())
            .map(|(n, _)| n.as_str())
    }

    pub fn max_abs(&self) -> f64 {
        self.grads
            .values()
            .flat_map(|g| g.data().iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}
