//! Per-dataset YAML schema: which column is the label, which values are
//! favourable, which attributes may serve as the protected attribute and how
//! every other column is encoded.
//!
//! ```yaml
//! name: german
//! label: credit
//! favorable: [1]
//! protected: sex
//! sensitive_attributes:
//!   sex: { column: personal_status, privileged: [A91, A93, A94] }
//!   age: { column: age_over_25, privileged: 1 }
//! binarize:
//!   - { column: age, predicate: { gt: 25 }, output: age_over_25 }
//! numeric: [month, credit_amount, age]
//! categorical: [status, credit_history]
//! drop: []
//! missing_values: ["?"]
//! drop_missing_rows: true
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::dataset::table::Cell;
use crate::error::{Error, Result};

/// A raw cell value as written in a schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Number(f64),
    Text(String),
}

impl RawValue {
    pub fn matches(&self, cell: &Cell) -> bool {
        match (self, cell) {
            (_, Cell::Missing) => false,
            (RawValue::Number(a), Cell::Number(b)) => a == b,
            (RawValue::Text(a), Cell::Text(b)) => a == b,
            (RawValue::Text(a), Cell::Number(b)) => a.trim().parse::<f64>().ok() == Some(*b),
            (RawValue::Number(a), Cell::Text(b)) => b.trim().parse::<f64>().ok() == Some(*a),
        }
    }
}

impl fmt::Display for RawValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawValue::Number(v) => write!(f, "{v}"),
            RawValue::Text(s) => write!(f, "{s}"),
        }
    }
}

/// Boolean test on a raw cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Predicate {
    Eq(RawValue),
    Ne(RawValue),
    Lt(f64),
    Le(f64),
    Gt(f64),
    Ge(f64),
    In(Vec<RawValue>),
    NotIn(Vec<RawValue>),
}

impl Predicate {
    /// Evaluates the predicate. Order comparisons need a numeric cell.
    pub fn eval(&self, cell: &Cell) -> std::result::Result<bool, String> {
        let numeric = |op: &str| {
            cell.as_number()
                .ok_or_else(|| format!("`{op}` comparison needs a number, found `{cell}`"))
        };
        Ok(match self {
            Predicate::Eq(v) => v.matches(cell),
            Predicate::Ne(v) => !v.matches(cell),
            Predicate::Lt(t) => numeric("lt")? < *t,
            Predicate::Le(t) => numeric("le")? <= *t,
            Predicate::Gt(t) => numeric("gt")? > *t,
            Predicate::Ge(t) => numeric("ge")? >= *t,
            Predicate::In(vs) => vs.iter().any(|v| v.matches(cell)),
            Predicate::NotIn(vs) => !vs.iter().any(|v| v.matches(cell)),
        })
    }
}

/// Accepts an operator map, a list of values, or a single value.
#[derive(Deserialize)]
#[serde(untagged)]
enum RuleRepr {
    Op(Predicate),
    Many(Vec<RawValue>),
    One(RawValue),
}

fn de_rule<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Predicate, D::Error> {
    Ok(match RuleRepr::deserialize(d)? {
        RuleRepr::Op(p) => p,
        RuleRepr::Many(vs) => Predicate::In(vs),
        RuleRepr::One(v) => Predicate::Eq(v),
    })
}

/// Derives a new 0/1 column from a predicate over an existing column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinarizeRule {
    pub column: String,
    #[serde(deserialize_with = "de_rule")]
    pub predicate: Predicate,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitiveAttribute {
    pub column: String,
    #[serde(deserialize_with = "de_rule")]
    pub privileged: Predicate,
}

/// Resolved protected-attribute mapping: privileged rows get indicator 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub attribute: String,
    pub column: String,
    pub privileged: Predicate,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub name: String,
    /// CSV file, relative to the schema file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub label: String,
    #[serde(deserialize_with = "de_rule")]
    pub favorable: Predicate,
    /// Name of the default sensitive attribute.
    pub protected: String,
    pub sensitive_attributes: BTreeMap<String, SensitiveAttribute>,
    #[serde(default)]
    pub numeric: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub drop: Vec<String>,
    #[serde(default)]
    pub binarize: Vec<BinarizeRule>,
    #[serde(default)]
    pub missing_values: Vec<String>,
    #[serde(default = "default_true")]
    pub drop_missing_rows: bool,
    /// Keep the protected column as a model feature.
    #[serde(default)]
    pub keep_protected_feature: bool,
}

impl DatasetSchema {
    pub fn from_yaml(text: &str) -> Result<Self> {
        let de = serde_yaml::Deserializer::from_str(text);
        let schema: DatasetSchema =
            serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        schema.validate()?;
        Ok(schema)
    }

    /// Reads a schema file; a relative `data` path is resolved against the
    /// schema's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut schema =
            Self::from_yaml(&text).map_err(|e| e.context(path.display().to_string()))?;
        if let Some(data) = &schema.data {
            if data.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                schema.data = Some(base.join(data));
            }
        }
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Schema(format!("{}: {m}", self.name)));
        if self.label.is_empty() {
            return bad("label column is empty".into());
        }
        if !self.sensitive_attributes.contains_key(&self.protected) {
            return bad(format!(
                "default protected attribute `{}` is not declared under sensitive_attributes",
                self.protected
            ));
        }
        let sets = [
            ("numeric", &self.numeric),
            ("categorical", &self.categorical),
            ("drop", &self.drop),
        ];
        for (i, (na, a)) in sets.iter().enumerate() {
            for (nb, b) in sets.iter().skip(i + 1) {
                if let Some(c) = a.iter().find(|c| b.contains(c)) {
                    return bad(format!("column `{c}` is listed as both {na} and {nb}"));
                }
            }
        }
        if self.numeric.contains(&self.label) || self.categorical.contains(&self.label) {
            return bad(format!("label column `{}` is also a feature", self.label));
        }
        for attr in self.sensitive_attributes.keys() {
            if self.feature_columns(attr)?.is_empty() {
                return bad(format!("no feature columns remain with protected `{attr}`"));
            }
        }
        Ok(())
    }

    pub fn group_spec(&self, attribute: &str) -> Result<GroupSpec> {
        let attr = self.sensitive_attributes.get(attribute).ok_or_else(|| {
            Error::Schema(format!(
                "{}: unknown sensitive attribute `{attribute}` (declared: {})",
                self.name,
                self.attribute_names().join(", ")
            ))
        })?;
        Ok(GroupSpec {
            attribute: attribute.to_string(),
            column: attr.column.clone(),
            privileged: attr.privileged.clone(),
        })
    }

    pub fn attribute_names(&self) -> Vec<String> {
        self.sensitive_attributes.keys().cloned().collect()
    }

    pub fn has_attribute(&self, attribute: &str) -> bool {
        self.sensitive_attributes.contains_key(attribute)
    }

    /// Encoded feature columns (numeric then categorical, schema order)
    /// when `attribute` is the protected attribute.
    pub fn feature_columns(&self, attribute: &str) -> Result<Vec<(String, bool)>> {
        let protected_col = &self
            .sensitive_attributes
            .get(attribute)
            .ok_or_else(|| Error::Schema(format!("unknown sensitive attribute `{attribute}`")))?
            .column;
        let drop: BTreeSet<&String> = self.drop.iter().collect();
        let keep = |c: &&String| {
            !drop.contains(c)
                && *c != &self.label
                && (self.keep_protected_feature || *c != protected_col)
        };
        Ok(self
            .numeric
            .iter()
            .filter(keep)
            .map(|c| (c.clone(), true))
            .chain(self.categorical.iter().filter(keep).map(|c| (c.clone(), false)))
            .collect())
    }

    /// Columns that must exist in the raw file (derived binarized columns
    /// excluded).
    pub fn referenced_source_columns(&self) -> Vec<&str> {
        let derived: BTreeSet<&str> = self.binarize.iter().map(|b| b.output.as_str()).collect();
        let mut cols: Vec<&str> = std::iter::once(self.label.as_str())
            .chain(self.sensitive_attributes.values().map(|a| a.column.as_str()))
            .chain(self.numeric.iter().map(String::as_str))
            .chain(self.categorical.iter().map(String::as_str))
            .chain(self.binarize.iter().map(|b| b.column.as_str()))
            .filter(|c| !derived.contains(c))
            .collect();
        let mut seen = BTreeSet::new();
        cols.retain(|c| seen.insert(*c));
        cols
    }
}
