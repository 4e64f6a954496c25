use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::recipes::Recipe;
use crate::dataset::{encode_with, load_csv, make_synthetic, DatasetSchema, TabularDataset};
use crate::error::{Error, Result};

/// Environment variable naming the data directory for bundled recipes.
pub const DATA_DIR_ENV: &str = "FAIRBENCH_DATA_DIR";

/// `$FAIRBENCH_DATA_DIR`, else `./data`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Protected attribute name used by synthetic sources.
pub const SYNTHETIC_ATTRIBUTE: &str = "group";

/// Where a stage-one dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Bundled schema. The prepared CSV is `<data_dir>/<name>.csv`; when it
    /// is missing it is built from `<data_dir>/raw`.
    Recipe { recipe: Recipe, data_dir: PathBuf },
    /// User schema whose `data` key points at a CSV file.
    Schema { path: PathBuf },
    Synthetic { n: usize, disparity: f64, seed: u64 },
}

impl DatasetSource {
    pub fn recipe(recipe: Recipe) -> Self {
        DatasetSource::Recipe {
            recipe,
            data_dir: default_data_dir(),
        }
    }

    /// Recipe name, schema file path, or `synthetic`.
    pub fn parse(spec: &str) -> Result<Self> {
        if let Ok(recipe) = spec.parse::<Recipe>() {
            return Ok(DatasetSource::recipe(recipe));
        }
        let path = Path::new(spec);
        if matches!(path.extension().and_then(|e| e.to_str()), Some("yaml" | "yml")) {
            return Ok(DatasetSource::Schema { path: path.into() });
        }
        if spec == "synthetic" {
            return Ok(DatasetSource::Synthetic {
                n: 2000,
                disparity: 0.4,
                seed: 0,
            });
        }
        Err(Error::Param {
            name: "dataset".into(),
            message: format!(
                "`{spec}` is neither a bundled dataset ({}) nor a schema file",
                Recipe::ALL.map(Recipe::name).join(", ")
            ),
        })
    }

    pub fn name(&self) -> String {
        match self {
            DatasetSource::Recipe { recipe, .. } => recipe.name().to_string(),
            DatasetSource::Schema { path } => DatasetSchema::load(path)
                .map(|s| s.name)
                .unwrap_or_else(|_| path.display().to_string()),
            DatasetSource::Synthetic { n, disparity, seed } => {
                format!("synthetic-n{n}-d{disparity}-s{seed}")
            }
        }
    }

    pub fn schema(&self) -> Result<Option<DatasetSchema>> {
        match self {
            DatasetSource::Recipe { recipe, .. } => Ok(Some(recipe.schema())),
            DatasetSource::Schema { path } => DatasetSchema::load(path).map(Some),
            DatasetSource::Synthetic { .. } => Ok(None),
        }
    }

    pub fn attributes(&self) -> Result<Vec<String>> {
        Ok(match self.schema()? {
            Some(schema) => schema.attribute_names(),
            None => vec![SYNTHETIC_ATTRIBUTE.to_string()],
        })
    }

    pub fn default_attribute(&self) -> Result<String> {
        Ok(match self.schema()? {
            Some(schema) => schema.protected,
            None => SYNTHETIC_ATTRIBUTE.to_string(),
        })
    }

    /// Loads and encodes the dataset with `attribute` as the protected
    /// attribute, or the schema default.
    pub fn load(&self, attribute: Option<&str>) -> Result<LoadedDataset> {
        let context = |e: Error| e.context(format!("dataset `{}`", self.name()));
        match self {
            DatasetSource::Synthetic { n, disparity, seed } => {
                if let Some(a) = attribute.filter(|&a| a != SYNTHETIC_ATTRIBUTE) {
                    return Err(unknown_attribute(&self.name(), a));
                }
                Ok(LoadedDataset {
                    name: self.name(),
                    attribute: SYNTHETIC_ATTRIBUTE.into(),
                    data: make_synthetic(*seed, *n, *disparity).map_err(context)?,
                })
            }
            DatasetSource::Recipe { recipe, data_dir } => {
                let csv = prepared_csv(*recipe, data_dir).map_err(context)?;
                encode_file(&self.name(), &recipe.schema(), &csv, attribute).map_err(context)
            }
            DatasetSource::Schema { path } => {
                let schema = DatasetSchema::load(path)?;
                let csv = schema.data.clone().ok_or_else(|| {
                    Error::Schema(format!("{}: no `data` path", path.display()))
                })?;
                encode_file(&schema.name, &schema, &csv, attribute).map_err(context)
            }
        }
    }
}

impl fmt::Display for DatasetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

fn unknown_attribute(dataset: &str, attribute: &str) -> Error {
    Error::Param {
        name: "sensitive_attribute".into(),
        message: format!("dataset `{dataset}` has no sensitive attribute `{attribute}`"),
    }
}

fn encode_file(
    name: &str,
    schema: &DatasetSchema,
    csv: &Path,
    attribute: Option<&str>,
) -> Result<LoadedDataset> {
    let attribute = attribute.unwrap_or(&schema.protected);
    if !schema.has_attribute(attribute) {
        return Err(unknown_attribute(name, attribute));
    }
    let table = load_csv(csv, schema)?;
    let (data, _) = encode_with(&table, schema, attribute)?;
    Ok(LoadedDataset {
        name: name.to_string(),
        attribute: attribute.to_string(),
        data,
    })
}

/// Path of the prepared CSV, building it from raw files when absent.
fn prepared_csv(recipe: Recipe, data_dir: &Path) -> Result<PathBuf> {
    let out = data_dir.join(format!("{}.csv", recipe.name()));
    if out.is_file() {
        return Ok(out);
    }
    let raw = data_dir.join("raw");
    if !recipe.available(&raw) {
        return Err(Error::Dataset(format!(
            "{} not found and raw files {:?} missing from {}",
            out.display(),
            recipe.raw_files(),
            raw.display()
        )));
    }
    // concurrent preparers each write a private file; the rename is atomic
    let tmp = tempfile::Builder::new()
        .prefix(".prepare-")
        .suffix(".csv")
        .tempfile_in(data_dir)
        .map_err(|e| Error::io(data_dir, e))?;
    recipe.prepare(&raw, tmp.path())?;
    tmp.persist(&out).map_err(|e| Error::io(&out, e.error))?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub name: String,
    pub attribute: String,
    pub data: TabularDataset,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert!(matches!(
            DatasetSource::parse("german").unwrap(),
            DatasetSource::Recipe { recipe: Recipe::German, .. }
        ));
        assert!(matches!(
            DatasetSource::parse("my/schema.yaml").unwrap(),
            DatasetSource::Schema { .. }
        ));
        assert!(matches!(DatasetSource::parse("synthetic").unwrap(), DatasetSource::Synthetic { .. }));
        assert!(DatasetSource::parse("iris").is_err());
    }

    #[test]
    fn synthetic_attribute_checked() {
        let src = DatasetSource::Synthetic {
            n: 100,
            disparity: 0.2,
            seed: 1,
        };
        assert_eq!(src.load(None).unwrap().data.n(), 100);
        assert!(src.load(Some("race")).is_err());
        assert_eq!(src.attributes().unwrap(), [SYNTHETIC_ATTRIBUTE]);
    }

    #[test]
    fn schema_source_reads_its_data_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("toy.csv"),
            "age,sex,outcome\n30,M,yes\n40,F,no\n50,M,no\n20,F,yes\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("toy.yaml"),
            "name: toy\ndata: toy.csv\nlabel: outcome\nfavorable: [yes]\nprotected: sex\n\
             sensitive_attributes:\n  sex: { column: sex, privileged: [M] }\nnumeric: [age]\n",
        )
        .unwrap();
        let src = DatasetSource::Schema {
            path: dir.path().join("toy.yaml"),
        };
        let loaded = src.load(None).unwrap();
        assert_eq!(loaded.name, "toy");
        assert_eq!(loaded.data.n(), 4);
        assert_eq!(loaded.data.protected(), [1, 0, 1, 0]);
        assert!(src.load(Some("race")).is_err());
    }

    #[test]
    fn missing_recipe_data_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let src = DatasetSource::Recipe {
            recipe: Recipe::German,
            data_dir: dir.path().into(),
        };
        let err = src.load(None).unwrap_err().to_string();
        assert!(err.contains("german"), "{err}");
    }
}
