use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};

/// Handle addressing one scalar variable of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub struct ValueReference(pub u32);

impl fmt::Display for ValueReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vr{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Causality {
    Parameter,
    Input,
    Output,
    Local,
}

impl Causality {
    pub fn as_str(self) -> &'static str {
        match self {
            Causality::Parameter => "parameter",
            Causality::Input => "input",
            Causality::Output => "output",
            Causality::Local => "local",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "parameter" => Causality::Parameter,
            "input" => Causality::Input,
            "output" => Causality::Output,
            "local" => Causality::Local,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variability {
    Constant,
    Fixed,
    Continuous,
}

impl Variability {
    pub fn as_str(self) -> &'static str {
        match self {
            Variability::Constant => "constant",
            Variability::Fixed => "fixed",
            Variability::Continuous => "continuous",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "constant" => Variability::Constant,
            "fixed" => Variability::Fixed,
            "continuous" => Variability::Continuous,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScalarVariable {
    pub name: String,
    pub vr: ValueReference,
    pub causality: Causality,
    pub variability: Variability,
    pub start: Option<f64>,
}

impl ScalarVariable {
    pub fn new(
        name: impl Into<String>,
        vr: u32,
        causality: Causality,
        variability: Variability,
        start: Option<f64>,
    ) -> Self {
        Self {
            name: name.into(),
            vr: ValueReference(vr),
            causality,
            variability,
            start,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ModelKind {
    ModelExchange,
    CoSimulation,
    Both,
}

impl ModelKind {
    pub fn supports_me(self) -> bool {
        matches!(self, ModelKind::ModelExchange | ModelKind::Both)
    }

    pub fn supports_cs(self) -> bool {
        matches!(self, ModelKind::CoSimulation | ModelKind::Both)
    }
}

/// Static interface of a model.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ModelDescription {
    pub model_name: String,
    pub guid: String,
    pub kind: ModelKind,
    pub variables: Vec<ScalarVariable>,
    pub state_vrs: Vec<ValueReference>,
    pub derivative_vrs: Vec<ValueReference>,
    pub input_vrs: Vec<ValueReference>,
    pub output_vrs: Vec<ValueReference>,
    pub provides_directional_derivative: bool,
    pub can_get_set_state: bool,
    pub n_event_indicators: usize,
}

impl ModelDescription {
    pub fn n_states(&self) -> usize {
        self.state_vrs.len()
    }

    pub fn variable(&self, vr: ValueReference) -> Option<&ScalarVariable> {
        self.variables.iter().find(|v| v.vr == vr)
    }

    pub fn variable_by_name(&self, name: &str) -> Option<&ScalarVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn vr_of(&self, name: &str) -> Result<ValueReference> {
        self.variable_by_name(name)
            .map(|v| v.vr)
            .ok_or_else(|| Error::InvalidArgument(format!("no variable named `{name}`")))
    }

    /// Map from value reference to position in `variables`.
    pub fn index_map(&self) -> HashMap<ValueReference, usize> {
        self.variables.iter().enumerate().map(|(i, v)| (v.vr, i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDescription(m));
        if self.model_name.is_empty() {
            return bad("empty model name".into());
        }
        if self.guid.is_empty() {
            return bad("empty guid".into());
        }
        let mut vrs = HashSet::new();
        let mut names = HashSet::new();
        for v in &self.variables {
            if v.name.is_empty() {
                return bad(format!("variable {} has an empty name", v.vr));
            }
            if !vrs.insert(v.vr) {
                return bad(format!("duplicate value reference {}", v.vr));
            }
            if !names.insert(v.name.as_str()) {
                return bad(format!("duplicate variable name `{}`", v.name));
            }
            if v.start.is_some_and(|s| !s.is_finite()) {
                return bad(format!("non-finite start value for `{}`", v.name));
            }
        }
        if self.state_vrs.len() != self.derivative_vrs.len() {
            return bad(format!(
                "{} states but {} derivatives",
                self.state_vrs.len(),
                self.derivative_vrs.len()
            ));
        }
        let lists = [
            ("state", &self.state_vrs),
            ("derivative", &self.derivative_vrs),
            ("input", &self.input_vrs),
            ("output", &self.output_vrs),
        ];
        for (what, list) in lists {
            if let Some(vr) = list.iter().find(|vr| !vrs.contains(vr)) {
                return bad(format!("{what} reference {vr} does not resolve to a variable"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelDescription {
        ModelDescription {
            model_name: "m".into(),
            guid: "{g}".into(),
            kind: ModelKind::ModelExchange,
            variables: vec![
                ScalarVariable::new("x", 0, Causality::Local, Variability::Continuous, Some(1.0)),
                ScalarVariable::new("der(x)", 1, Causality::Local, Variability::Continuous, None),
            ],
            state_vrs: vec![ValueReference(0)],
            derivative_vrs: vec![ValueReference(1)],
            input_vrs: vec![],
            output_vrs: vec![],
            provides_directional_derivative: false,
            can_get_set_state: false,
            n_event_indicators: 0,
        }
    }

    #[test]
    fn valid_description_passes() {
        sample().validate().unwrap();
    }

    #[test]
    fn state_derivative_count_mismatch() {
        let mut d = sample();
        d.derivative_vrs.clear();
        assert!(matches!(d.validate(), Err(Error::InvalidDescription(_))));
    }

    #[test]
    fn dangling_reference() {
        let mut d = sample();
        d.output_vrs.push(ValueReference(9));
        assert!(d.validate().is_err());
    }

    #[test]
    fn duplicate_names_and_refs() {
        let mut d = sample();
        d.variables[1].name = "x".into();
        assert!(d.validate().is_err());
        let mut d = sample();
        d.variables[1].vr = ValueReference(0);
        assert!(d.validate().is_err());
    }
}
