use ndarray::Array2;

use crate::dataset::schema::{DatasetSchema, GroupSpec};
use crate::dataset::table::{Cell, RawTable};
use crate::dataset::{FeatureKind, TabularDataset};
use crate::error::{Error, Result};

const MISSING_LEVEL: &str = "<missing>";

/// What the encoder did besides producing the dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncodeReport {
    pub rows_in: usize,
    pub rows_dropped_missing: usize,
    /// Categorical cells whose level was not seen at fit time.
    pub unseen_categories: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
enum ColumnEncoding {
    Numeric { column: String },
    Categorical { column: String, levels: Vec<String> },
}

/// Encoding fitted on one table and reusable on others with the same schema.
///
/// Categorical levels are one-hot encoded in first-seen order. A level that
/// was not seen at fit time encodes as an all-zero block.
#[derive(Debug, Clone)]
pub struct Encoder {
    schema: DatasetSchema,
    group: GroupSpec,
    columns: Vec<ColumnEncoding>,
}

fn level_name(cell: &Cell) -> String {
    match cell {
        Cell::Missing => MISSING_LEVEL.to_string(),
        other => other.to_string(),
    }
}

impl Encoder {
    pub fn fit(table: &RawTable, schema: &DatasetSchema, attribute: &str) -> Result<Self> {
        let group = schema.group_spec(attribute)?;
        let table = apply_binarize(table, schema)?;
        let keep = row_filter(&table, schema, &group)?;
        let mut columns = Vec::new();
        for (name, numeric) in schema.feature_columns(attribute)? {
            let idx = table.require_column(&name, "feature column")?;
            if numeric {
                columns.push(ColumnEncoding::Numeric { column: name });
            } else {
                let mut levels: Vec<String> = Vec::new();
                for (i, row) in table.rows().iter().enumerate() {
                    if !keep[i] {
                        continue;
                    }
                    let level = level_name(&row[idx]);
                    if !levels.contains(&level) {
                        levels.push(level);
                    }
                }
                columns.push(ColumnEncoding::Categorical {
                    column: name,
                    levels,
                });
            }
        }
        Ok(Self {
            schema: schema.clone(),
            group,
            columns,
        })
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.feature_layout().0
    }

    fn feature_layout(&self) -> (Vec<String>, Vec<FeatureKind>) {
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        for col in &self.columns {
            match col {
                ColumnEncoding::Numeric { column } => {
                    names.push(column.clone());
                    kinds.push(FeatureKind::Numeric);
                }
                ColumnEncoding::Categorical { column, levels } => {
                    for level in levels {
                        names.push(format!("{column}={level}"));
                        kinds.push(FeatureKind::OneHot {
                            source: column.clone(),
                            level: level.clone(),
                        });
                    }
                }
            }
        }
        (names, kinds)
    }

    pub fn transform(&self, table: &RawTable) -> Result<(TabularDataset, EncodeReport)> {
        let schema = &self.schema;
        let table = apply_binarize(table, schema)?;
        let keep = row_filter(&table, schema, &self.group)?;
        let mut report = EncodeReport {
            rows_in: table.n(),
            rows_dropped_missing: keep.iter().filter(|k| !**k).count(),
            ..Default::default()
        };
        if report.rows_dropped_missing > 0 {
            let msg = format!(
                "{}: dropped {} of {} rows with missing values",
                schema.name, report.rows_dropped_missing, report.rows_in
            );
            log::warn!("{msg}");
            report.warnings.push(msg);
        }
        let rows: Vec<usize> = (0..table.n()).filter(|&i| keep[i]).collect();
        if rows.is_empty() {
            return Err(Error::Dataset(format!(
                "{}: no rows left after dropping missing values",
                schema.name
            )));
        }

        let label_idx = table.require_column(&schema.label, "label")?;
        let prot_idx = table.require_column(&self.group.column, "protected attribute")?;
        let mut labels = Vec::with_capacity(rows.len());
        let mut protected = Vec::with_capacity(rows.len());
        for &i in &rows {
            let label_cell = table.cell(i, label_idx);
            if label_cell.is_missing() {
                return Err(cell_err(i, &schema.label, "missing label".into()));
            }
            let fav = schema
                .favorable
                .eval(label_cell)
                .map_err(|m| cell_err(i, &schema.label, m))?;
            labels.push(u8::from(fav));
            let priv_ = self
                .group
                .privileged
                .eval(table.cell(i, prot_idx))
                .map_err(|m| cell_err(i, &self.group.column, m))?;
            protected.push(u8::from(priv_));
        }

        let (names, kinds) = self.feature_layout();
        let mut features = Array2::<f64>::zeros((rows.len(), names.len()));
        let mut offset = 0;
        for col in &self.columns {
            match col {
                ColumnEncoding::Numeric { column } => {
                    let idx = table.require_column(column, "numeric feature")?;
                    for (r, &i) in rows.iter().enumerate() {
                        features[[r, offset]] = match table.cell(i, idx) {
                            Cell::Number(v) => *v,
                            Cell::Missing => {
                                return Err(cell_err(i, column, "missing numeric value".into()))
                            }
                            Cell::Text(t) => {
                                return Err(cell_err(i, column, format!("non-numeric value `{t}`")))
                            }
                        };
                    }
                    offset += 1;
                }
                ColumnEncoding::Categorical { column, levels } => {
                    let idx = table.require_column(column, "categorical feature")?;
                    let mut unseen = 0;
                    for (r, &i) in rows.iter().enumerate() {
                        let level = level_name(table.cell(i, idx));
                        match levels.iter().position(|l| *l == level) {
                            Some(k) => features[[r, offset + k]] = 1.0,
                            None => unseen += 1,
                        }
                    }
                    if unseen > 0 {
                        let msg = format!(
                            "{}: {unseen} unseen level(s) in `{column}` encoded as all-zero rows",
                            schema.name
                        );
                        log::warn!("{msg}");
                        report.warnings.push(msg);
                        report.unseen_categories += unseen;
                    }
                    offset += levels.len();
                }
            }
        }

        let n = rows.len();
        let ds = TabularDataset::new(
            features,
            labels,
            protected,
            vec![1.0; n],
            names,
            kinds,
            schema.name.clone(),
        )?;
        Ok((ds, report))
    }
}

fn cell_err(row: usize, column: &str, message: String) -> Error {
    Error::Cell {
        row: row + 1,
        column: column.to_string(),
        message,
    }
}

fn apply_binarize(table: &RawTable, schema: &DatasetSchema) -> Result<RawTable> {
    let mut table = table.clone();
    for rule in &schema.binarize {
        if table.column_index(&rule.output).is_some() {
            continue;
        }
        let idx = table.require_column(&rule.column, "binarization rule")?;
        let mut values = Vec::with_capacity(table.n());
        for i in 0..table.n() {
            let cell = table.cell(i, idx);
            values.push(if cell.is_missing() {
                Cell::Missing
            } else {
                let hit = rule
                    .predicate
                    .eval(cell)
                    .map_err(|m| cell_err(i, &rule.column, m))?;
                Cell::Number(if hit { 1.0 } else { 0.0 })
            });
        }
        table.push_column(rule.output.clone(), values);
    }
    Ok(table)
}

/// Rows kept after the missing-value policy.
fn row_filter(table: &RawTable, schema: &DatasetSchema, group: &GroupSpec) -> Result<Vec<bool>> {
    if !schema.drop_missing_rows {
        return Ok(vec![true; table.n()]);
    }
    let mut used = vec![
        table.require_column(&schema.label, "label")?,
        table.require_column(&group.column, "protected attribute")?,
    ];
    for (c, _) in schema.feature_columns(&group.attribute)? {
        used.push(table.require_column(&c, "feature column")?);
    }
    Ok(table
        .rows()
        .iter()
        .map(|row| used.iter().all(|&j| !row[j].is_missing()))
        .collect())
}

/// Encodes `table` with the schema's default protected attribute.
pub fn encode(table: &RawTable, schema: &DatasetSchema) -> Result<TabularDataset> {
    encode_with(table, schema, &schema.protected).map(|(ds, _)| ds)
}

/// Fits and applies an encoder for the given protected attribute.
pub fn encode_with(
    table: &RawTable,
    schema: &DatasetSchema,
    attribute: &str,
) -> Result<(TabularDataset, EncodeReport)> {
    Encoder::fit(table, schema, attribute)?.transform(table)
}
