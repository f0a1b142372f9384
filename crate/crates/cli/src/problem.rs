//! JSON problem files.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use mmot::gen::RandomInstance;
use mmot::{CostKind, CostSpec, DiscreteMarginal, EntropicConfig, Error, ProductAction, Sense};

use crate::CliError;

/// A cost cell: a number, or the string `"inf"` for a forbidden cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostValue(pub f64);

impl Serialize for CostValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for CostValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Self(v)),
            Raw::Text(t) => match t.as_str() {
                "inf" | "+inf" | "infinity" | "Infinity" => Ok(Self(f64::INFINITY)),
                other => Err(serde::de::Error::custom(format!(
                    "expected a number or \"inf\", found {other:?}"
                ))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Lp,
    Sinkhorn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKindFile {
    Table,
    Determinant,
    Coulomb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalFile {
    #[serde(default)]
    pub label: Option<String>,
    pub points: Vec<Vec<f64>>,
    /// Uniform when absent.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostFile {
    pub kind: CostKindFile,
    /// Defaults to `max` for the determinant and `min` otherwise.
    #[serde(default)]
    pub sense: Option<Sense>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<CostValue>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionFile {
    /// One permutation of support indices per marginal.
    pub maps: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropicFile {
    pub epsilon: Option<f64>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub marginals: Vec<MarginalFile>,
    pub cost: CostFile,
    #[serde(default)]
    pub actions: Vec<ActionFile>,
    #[serde(default)]
    pub sigma: bool,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropic: Option<EntropicFile>,
}

/// A validated problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub marginals: Vec<DiscreteMarginal>,
    pub cost: CostSpec,
    pub actions: Vec<ProductAction>,
    pub sigma: bool,
    pub solver: SolverKind,
    pub entropic: EntropicConfig,
}

fn input(pointer: impl Into<String>, err: impl ToString) -> CliError {
    CliError::Input {
        pointer: pointer.into(),
        message: err.to_string(),
    }
}

fn marginal_pointer(k: usize, err: &Error) -> String {
    match err {
        Error::NonPositiveWeight { index, .. } => format!("/marginals/{k}/weights/{index}"),
        Error::WeightSumMismatch { .. } => format!("/marginals/{k}/weights"),
        Error::DuplicatePoint { second, .. } => format!("/marginals/{k}/points/{second}"),
        Error::MixedDimension { index, .. } => format!("/marginals/{k}/points/{index}"),
        _ => format!("/marginals/{k}"),
    }
}

impl ProblemFile {
    /// Parses JSON, reporting failures with a JSON pointer to the field.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer: String = e
                .path()
                .iter()
                .filter_map(|seg| match seg {
                    serde_path_to_error::Segment::Seq { index } => Some(format!("/{index}")),
                    serde_path_to_error::Segment::Map { key } => Some(format!("/{key}")),
                    serde_path_to_error::Segment::Enum { variant } => Some(format!("/{variant}")),
                    serde_path_to_error::Segment::Unknown => None,
                })
                .collect();
            input(pointer, e.inner())
        })
    }

    pub fn validate(&self) -> Result<Problem, CliError> {
        if self.marginals.len() < 2 {
            return Err(input("/marginals", "at least two marginals are required"));
        }
        let marginals = self
            .marginals
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let label = m.label.clone().unwrap_or_else(|| format!("mu{}", k + 1));
                let built = match &m.weights {
                    Some(w) => DiscreteMarginal::new(label, m.points.clone(), w.clone()),
                    None => DiscreteMarginal::uniform(label, m.points.clone()),
                };
                built.map_err(|e| input(marginal_pointer(k, &e), e))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let default_sense = match self.cost.kind {
            CostKindFile::Determinant => Sense::Max,
            _ => Sense::Min,
        };
        let sense = self.cost.sense.unwrap_or(default_sense);
        let kind = match (self.cost.kind, &self.cost.values) {
            (CostKindFile::Table, Some(values)) => {
                for (i, v) in values.iter().enumerate() {
                    mmot::ExtendedReal::new(v.0).map_err(|e| input(format!("/cost/values/{i}"), e))?;
                }
                CostKind::Table(values.iter().map(|v| v.0).collect())
            }
            (CostKindFile::Table, None) => return Err(input("/cost/values", "a table cost needs values")),
            (_, Some(_)) => return Err(input("/cost/values", "values are only allowed for table costs")),
            (CostKindFile::Determinant, None) => CostKind::Determinant,
            (CostKindFile::Coulomb, None) => CostKind::Coulomb,
        };
        let cost = CostSpec { kind, sense };
        let cost_pointer = if self.cost.values.is_some() { "/cost/values" } else { "/cost" };
        cost.check_compatible(&marginals).map_err(|e| input(cost_pointer, e))?;

        let actions = self
            .actions
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let action = ProductAction::from_perms(a.maps.clone()).map_err(|e| input(format!("/actions/{k}"), e))?;
                action.check_against(&marginals).map_err(|e| match e {
                    Error::NotMeasurePreserving { marginal, .. } => input(format!("/actions/{k}/maps/{marginal}"), e),
                    Error::InvalidPermutation(_) | Error::DimensionMismatch(_) => {
                        input(format!("/actions/{k}/maps"), e)
                    }
                    other => input(format!("/actions/{k}"), other),
                })?;
                Ok(action)
            })
            .collect::<Result<Vec<_>, CliError>>()?;

        let mut entropic = EntropicConfig::default();
        if let Some(e) = &self.entropic {
            entropic.epsilon = e.epsilon.unwrap_or(entropic.epsilon);
            entropic.max_iter = e.max_iter.unwrap_or(entropic.max_iter);
            entropic.tol = e.tol.unwrap_or(entropic.tol);
            entropic.validate().map_err(|e| input("/entropic", e))?;
        }
        Ok(Problem {
            marginals,
            cost,
            actions,
            sigma: self.sigma,
            solver: self.solver,
            entropic,
        })
    }

    pub fn from_instance(inst: &RandomInstance) -> Self {
        let values = match &inst.cost.kind {
            CostKind::Table(v) => Some(v.iter().map(|&x| CostValue(x)).collect()),
            _ => None,
        };
        let kind = match inst.cost.kind {
            CostKind::Table(_) => CostKindFile::Table,
            CostKind::Determinant => CostKindFile::Determinant,
            CostKind::Coulomb => CostKindFile::Coulomb,
        };
        Self {
            marginals: inst
                .marginals
                .iter()
                .map(|m| MarginalFile {
                    label: Some(m.label.clone()),
                    points: m.points.clone(),
                    weights: Some(m.weights.clone()),
                })
                .collect(),
            cost: CostFile {
                kind,
                sense: Some(inst.cost.sense),
                values,
            },
            actions: Vec::new(),
            sigma: false,
            solver: SolverKind::Lp,
            entropic: None,
        }
    }
}
