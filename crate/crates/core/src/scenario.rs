//! The JSON scenario format: one (kb, edit, anchor, universe) bundle.
//!
//! Scenarios are the replay currency of the toolkit — the CLI consumes
//! them, and the theorem-verification harness emits failing instances in
//! the same shape. Formulas travel as strings in the concrete syntax; the
//! anchor field is either an explicit formula list or one of the
//! directives `"auto"` (greedy construction), `"max"` (everything locally
//! compatible with the edit), `"none"` (empty anchor, the default).

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::anchor::{construct_anchor, AnchorError};
use crate::editing::{max_anchor, Anchor, Edit, EditError};
use crate::formula::{parse, render, Formula, SyntaxError};
use crate::knowledge::{KnowledgeBase, KnowledgeError, QueryUniverse};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario JSON: {0}")]
    Json(String),
    #[error("{field}[{index}] ({text:?}): {source}")]
    Formula {
        field: &'static str,
        index: usize,
        text: String,
        #[source]
        source: SyntaxError,
    },
    #[error("order must be a permutation of 0..{len}")]
    InvalidOrder { len: usize },
    #[error("a universe is required to resolve the \"{0}\" anchor directive")]
    UniverseRequired(&'static str),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error(transparent)]
    Anchor(#[from] AnchorError),
}

/// Anchor field of a scenario file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum AnchorDirective {
    /// Empty anchor.
    #[default]
    None,
    /// Construct greedily from the base.
    Auto,
    /// Everything the edit does not contradict on its own.
    Max,
    /// These formulas exactly.
    Explicit(Vec<String>),
}

impl Serialize for AnchorDirective {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            AnchorDirective::None => "none".serialize(serializer),
            AnchorDirective::Auto => "auto".serialize(serializer),
            AnchorDirective::Max => "max".serialize(serializer),
            AnchorDirective::Explicit(formulas) => formulas.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for AnchorDirective {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            List(Vec<String>),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Word(w) => match w.as_str() {
                "none" => Ok(AnchorDirective::None),
                "auto" => Ok(AnchorDirective::Auto),
                "max" => Ok(AnchorDirective::Max),
                other => Err(D::Error::custom(format!(
                    "anchor directive must be \"auto\", \"max\", \"none\", or a formula list, got {other:?}"
                ))),
            },
            Raw::List(list) => Ok(AnchorDirective::Explicit(list)),
        }
    }
}

/// Serialized scenario. `order`, when present, permutes the kb list before
/// loading (indices into the file's kb array) so anchor construction can be
/// replayed under a different base order without editing the list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kb: Vec<String>,
    pub edit: Vec<String>,
    #[serde(default)]
    pub anchor: AnchorDirective,
    #[serde(default)]
    pub universe: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<usize>>,
}

/// A scenario with its formulas parsed and checked.
#[derive(Clone, Debug)]
pub struct LoadedScenario {
    pub kb: KnowledgeBase,
    pub edit: Edit,
    pub universe: Option<QueryUniverse>,
    pub anchor: AnchorChoice,
}

#[derive(Clone, Debug)]
pub enum AnchorChoice {
    Auto,
    Max,
    Explicit(Anchor),
}

fn parse_field(
    field: &'static str,
    texts: &[String],
) -> Result<Vec<Formula>, ScenarioError> {
    texts
        .iter()
        .enumerate()
        .map(|(index, text)| {
            parse(text).map_err(|source| ScenarioError::Formula {
                field,
                index,
                text: text.clone(),
                source,
            })
        })
        .collect()
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Json(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios always serialize")
    }

    /// Builds a scenario from engine values, rendering every formula.
    pub fn from_parts(
        kb: &KnowledgeBase,
        edit: &Edit,
        anchor: AnchorDirective,
        universe: Option<&QueryUniverse>,
    ) -> Self {
        Scenario {
            kb: kb.base().iter().map(render).collect(),
            edit: edit.formulas().iter().map(render).collect(),
            anchor,
            universe: universe
                .map(|u| u.formulas().iter().map(render).collect())
                .unwrap_or_default(),
            order: None,
        }
    }

    /// Parses and checks everything: formula syntax, the kb order
    /// permutation, kb consistency, edit consistency. An empty universe
    /// list loads as `None` (base-only scanning).
    pub fn load(&self) -> Result<LoadedScenario, ScenarioError> {
        let kb_formulas = parse_field("kb", &self.kb)?;
        let kb_formulas = match &self.order {
            None => kb_formulas,
            Some(order) => {
                let len = kb_formulas.len();
                let mut seen = vec![false; len];
                if order.len() != len || order.iter().any(|&i| i >= len) {
                    return Err(ScenarioError::InvalidOrder { len });
                }
                for &i in order {
                    if seen[i] {
                        return Err(ScenarioError::InvalidOrder { len });
                    }
                    seen[i] = true;
                }
                order.iter().map(|&i| kb_formulas[i].clone()).collect()
            }
        };
        let kb = KnowledgeBase::new(kb_formulas)?;
        let edit = Edit::new(parse_field("edit", &self.edit)?)?;
        let universe = if self.universe.is_empty() {
            None
        } else {
            Some(QueryUniverse::new(parse_field("universe", &self.universe)?))
        };
        let anchor = match &self.anchor {
            AnchorDirective::None => AnchorChoice::Explicit(Anchor::empty()),
            AnchorDirective::Auto => AnchorChoice::Auto,
            AnchorDirective::Max => AnchorChoice::Max,
            AnchorDirective::Explicit(texts) => {
                AnchorChoice::Explicit(Anchor::new(parse_field("anchor", texts)?))
            }
        };
        Ok(LoadedScenario {
            kb,
            edit,
            universe,
            anchor,
        })
    }
}

impl LoadedScenario {
    /// Materializes the anchor choice against this scenario's kb and edit.
    pub fn resolve_anchor(&self) -> Result<Anchor, ScenarioError> {
        match &self.anchor {
            AnchorChoice::Explicit(a) => Ok(a.clone()),
            AnchorChoice::Auto => Ok(construct_anchor(&self.kb, &self.edit)?.anchor),
            AnchorChoice::Max => {
                let universe = self
                    .universe
                    .as_ref()
                    .ok_or(ScenarioError::UniverseRequired("max"))?;
                Ok(max_anchor(&self.kb, &self.edit, universe)?)
            }
        }
    }
}
