//! Preparation recipes that turn the public raw files of the benchmark
//! datasets into header-bearing CSVs matching the bundled schemas.
//!
//! The raw files are not distributed with this crate. Expected inputs:
//!
//! | recipe   | raw file(s) in the input directory        |
//! |----------|-------------------------------------------|
//! | `adult`  | `adult.data`, `adult.test`                |
//! | `bank`   | `bank-additional-full.csv`                |
//! | `compas` | `compas-scores-two-years.csv`             |
//! | `german` | `german.data`                             |
//! | `meps`   | `h192.csv` (MEPS 2016 full-year file)     |

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::dataset::schema::DatasetSchema;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Recipe {
    Adult,
    Bank,
    Compas,
    German,
    Meps,
}

impl Recipe {
    pub const ALL: [Recipe; 5] = [
        Recipe::Adult,
        Recipe::Bank,
        Recipe::Compas,
        Recipe::German,
        Recipe::Meps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::Adult => "adult",
            Recipe::Bank => "bank",
            Recipe::Compas => "compas",
            Recipe::German => "german",
            Recipe::Meps => "meps",
        }
    }

    pub fn schema_yaml(self) -> &'static str {
        match self {
            Recipe::Adult => include_str!("../../schemas/adult.yaml"),
            Recipe::Bank => include_str!("../../schemas/bank.yaml"),
            Recipe::Compas => include_str!("../../schemas/compas.yaml"),
            Recipe::German => include_str!("../../schemas/german.yaml"),
            Recipe::Meps => include_str!("../../schemas/meps.yaml"),
        }
    }

    pub fn schema(self) -> DatasetSchema {
        DatasetSchema::from_yaml(self.schema_yaml()).expect("bundled schemas are valid")
    }

    pub fn raw_files(self) -> &'static [&'static str] {
        match self {
            Recipe::Adult => &["adult.data", "adult.test"],
            Recipe::Bank => &["bank-additional-full.csv"],
            Recipe::Compas => &["compas-scores-two-years.csv"],
            Recipe::German => &["german.data"],
            Recipe::Meps => &["h192.csv"],
        }
    }

    /// Whether every raw file is present in `raw_dir`.
    pub fn available(self, raw_dir: &Path) -> bool {
        self.raw_files().iter().all(|f| raw_dir.join(f).is_file())
    }

    /// Writes the prepared CSV and returns the number of data rows.
    pub fn prepare(self, raw_dir: &Path, out: &Path) -> Result<PrepareReport> {
        let (header, rows, rows_in) = match self {
            Recipe::Adult => adult(raw_dir)?,
            Recipe::Bank => bank(raw_dir)?,
            Recipe::Compas => compas(raw_dir)?,
            Recipe::German => german(raw_dir)?,
            Recipe::Meps => meps(raw_dir)?,
        };
        if let Some(parent) = out.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut w = csv::Writer::from_path(out).map_err(|e| csv_write_err(out, e))?;
        w.write_record(&header).map_err(|e| csv_write_err(out, e))?;
        for row in &rows {
            w.write_record(row).map_err(|e| csv_write_err(out, e))?;
        }
        w.flush().map_err(|e| Error::io(out, e))?;
        Ok(PrepareReport {
            rows_in,
            rows_out: rows.len(),
        })
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Recipe::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Param {
                name: "recipe".into(),
                message: format!("unknown dataset recipe `{s}`"),
            })
    }
}

impl TryFrom<String> for Recipe {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Recipe> for String {
    fn from(r: Recipe) -> String {
        r.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrepareReport {
    pub rows_in: usize,
    pub rows_out: usize,
}

type Prepared = (Vec<String>, Vec<Vec<String>>, usize);

fn csv_write_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

const ADULT_COLUMNS: [&str; 15] = [
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
    "income",
];

/// Concatenates the train and test files. No rows are dropped; the test
/// file's leading comment line and the trailing `.` on its labels are removed.
fn adult(dir: &Path) -> Result<Prepared> {
    let mut rows = Vec::new();
    for file in ["adult.data", "adult.test"] {
        let path = dir.join(file);
        for (lineno, line) in read_text(&path)?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('|') {
                continue;
            }
            let mut fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
            if fields.len() != ADULT_COLUMNS.len() {
                return Err(Error::Csv {
                    path,
                    line: lineno as u64 + 1,
                    message: format!("expected 15 fields, found {}", fields.len()),
                });
            }
            if let Some(label) = fields.last_mut() {
                if let Some(stripped) = label.strip_suffix('.') {
                    *label = stripped.to_string();
                }
            }
            rows.push(fields);
        }
    }
    let n = rows.len();
    Ok((strings(&ADULT_COLUMNS), rows, n))
}

const GERMAN_COLUMNS: [&str; 21] = [
    "status",
    "month",
    "credit_history",
    "purpose",
    "credit_amount",
    "savings",
    "employment",
    "investment_as_income_percentage",
    "personal_status",
    "other_debtors",
    "residence_since",
    "property",
    "age",
    "installment_plans",
    "housing",
    "number_of_credits",
    "skill_level",
    "people_liable_for",
    "telephone",
    "foreign_worker",
    "credit",
];

fn german(dir: &Path) -> Result<Prepared> {
    let path = dir.join("german.data");
    let mut rows = Vec::new();
    for (lineno, line) in read_text(&path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if fields.len() != GERMAN_COLUMNS.len() {
            return Err(Error::Csv {
                path,
                line: lineno as u64 + 1,
                message: format!("expected 21 fields, found {}", fields.len()),
            });
        }
        rows.push(fields);
    }
    let n = rows.len();
    Ok((strings(&GERMAN_COLUMNS), rows, n))
}

fn read_csv(path: &Path, delimiter: u8) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        rows.push(rec.iter().map(|f| f.trim().to_string()).collect());
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn {
            column: name.to_string(),
            context: Some("raw input".into()),
        })
}

/// Semicolon-separated input re-emitted as comma-separated CSV.
fn bank(dir: &Path) -> Result<Prepared> {
    let (header, rows) = read_csv(&dir.join("bank-additional-full.csv"), b';')?;
    let n = rows.len();
    Ok((header, rows, n))
}

const COMPAS_COLUMNS: [&str; 11] = [
    "sex",
    "age",
    "age_cat",
    "race",
    "juv_fel_count",
    "juv_misd_count",
    "juv_other_count",
    "priors_count",
    "c_charge_degree",
    "c_charge_desc",
    "two_year_recid",
];

/// Two-year cohort filter: screening within 30 days of arrest, a known
/// recidivism flag, no ordinary-traffic charges, and the two largest race
/// groups only.
fn compas(dir: &Path) -> Result<Prepared> {
    let (header, rows) = read_csv(&dir.join("compas-scores-two-years.csv"), b',')?;
    let n_in = rows.len();
    let days = column(&header, "days_b_screening_arrest")?;
    let is_recid = column(&header, "is_recid")?;
    let degree = column(&header, "c_charge_degree")?;
    let race = column(&header, "race")?;
    let keep: Vec<usize> = COMPAS_COLUMNS
        .iter()
        .map(|c| column(&header, c))
        .collect::<Result<_>>()?;
    let out = rows
        .into_iter()
        .filter(|r| {
            let d = r[days].parse::<f64>().ok();
            d.is_some_and(|d| (-30.0..=30.0).contains(&d))
                && r[is_recid] != "-1"
                && r[degree] != "O"
                && (r[race] == "African-American" || r[race] == "Caucasian")
        })
        .map(|r| keep.iter().map(|&j| r[j].clone()).collect())
        .collect();
    Ok((strings(&COMPAS_COLUMNS), out, n_in))
}

const MEPS_RENAMES: [(&str, &str); 22] = [
    ("FTSTU53X", "FTSTU"),
    ("ACTDTY53", "ACTDTY"),
    ("HONRDC53", "HONRDC"),
    ("RTHLTH53", "RTHLTH"),
    ("MNHLTH53", "MNHLTH"),
    ("CHBRON53", "CHBRON"),
    ("JTPAIN53", "JTPAIN"),
    ("PREGNT53", "PREGNT"),
    ("WLKLIM53", "WLKLIM"),
    ("ACTLIM53", "ACTLIM"),
    ("SOCLIM53", "SOCLIM"),
    ("COGLIM53", "COGLIM"),
    ("EMPST53", "EMPST"),
    ("REGION53", "REGION"),
    ("MARRY53X", "MARRY"),
    ("AGE53X", "AGE"),
    ("POVCAT16", "POVCAT"),
    ("INSCOV16", "INSCOV"),
    ("SEX", "SEX"),
    ("PCS42", "PCS42"),
    ("MCS42", "MCS42"),
    ("K6SUM42", "K6SUM42"),
];

const MEPS_PASSTHROUGH: [&str; 19] = [
    "HIBPDX", "CHDDX", "ANGIDX", "MIDX", "OHRTDX", "STRKDX", "EMPHDX", "CHOLDX", "CANCERDX",
    "DIABDX", "ARTHDX", "ARTHTYPE", "ASTHDX", "ADHDADDX", "DFHEAR42", "DFSEE42", "ADSMOK42",
    "PHQ242", "EDUCYR",
];

const MEPS_NONNEG_CODED: [&str; 35] = [
    "FTSTU", "ACTDTY", "HONRDC", "RTHLTH", "MNHLTH", "HIBPDX", "CHDDX", "ANGIDX", "EDUCYR",
    "HIDEG", "MIDX", "OHRTDX", "STRKDX", "EMPHDX", "CHBRON", "CHOLDX", "CANCERDX", "DIABDX",
    "JTPAIN", "ARTHDX", "ARTHTYPE", "ASTHDX", "ADHDADDX", "PREGNT", "WLKLIM", "ACTLIM", "SOCLIM",
    "COGLIM", "DFHEAR42", "DFSEE42", "ADSMOK42", "PHQ242", "EMPST", "POVCAT", "INSCOV",
];

const MEPS_VISITS: [&str; 5] = ["OBTOTV16", "OPTOTV16", "ERTOT16", "IPNGTD16", "HHTOTD16"];

/// Panel 21 of the 2016 full-year file. Race is `White` for non-Hispanic
/// white respondents and `Non-White` otherwise; rows with negative
/// (inapplicable/refused) codes in region, age, marital status or asthma
/// diagnosis, or codes below -1 elsewhere, are removed.
fn meps(dir: &Path) -> Result<Prepared> {
    let (header, rows) = read_csv(&dir.join("h192.csv"), b',')?;
    let n_in = rows.len();
    let idx = |c: &str| column(&header, c);
    let panel = idx("PANEL")?;
    let hisp = idx("HISPANX")?;
    let racev = idx("RACEV2X")?;
    let renamed: Vec<(usize, &str)> = MEPS_RENAMES
        .iter()
        .map(|(from, to)| Ok((idx(from)?, *to)))
        .chain(MEPS_PASSTHROUGH.iter().map(|c| Ok((idx(c)?, *c))))
        .chain(std::iter::once(Ok((idx("HIDEG")?, "HIDEG"))))
        .collect::<Result<_>>()?;
    let visits: Vec<usize> = MEPS_VISITS.iter().map(|c| idx(c)).collect::<Result<_>>()?;
    let num = |r: &Vec<String>, j: usize| r[j].parse::<f64>().unwrap_or(f64::NAN);

    let mut out_header: Vec<String> = renamed.iter().map(|(_, n)| n.to_string()).collect();
    out_header.push("RACE".into());
    out_header.push("UTILIZATION".into());
    let pos = |name: &str| renamed.iter().position(|(_, n)| *n == name);

    let mut out = Vec::new();
    for r in rows {
        if num(&r, panel) != 21.0 {
            continue;
        }
        let vals: Vec<f64> = renamed.iter().map(|(j, _)| num(&r, *j)).collect();
        let get = |name: &str| pos(name).map(|p| vals[p]).unwrap_or(f64::NAN);
        if ["REGION", "AGE", "MARRY", "ASTHDX"].iter().any(|c| !(get(c) >= 0.0)) {
            continue;
        }
        if MEPS_NONNEG_CODED.iter().any(|c| !(get(c) >= -1.0)) {
            continue;
        }
        let race = if num(&r, hisp) == 2.0 && num(&r, racev) == 1.0 {
            "White"
        } else {
            "Non-White"
        };
        let utilization: f64 = visits.iter().map(|&j| num(&r, j)).sum();
        let mut row: Vec<String> = renamed.iter().map(|(j, _)| r[*j].clone()).collect();
        row.push(race.into());
        row.push(format!("{utilization}"));
        out.push(row);
    }
    Ok((out_header, out, n_in))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_schemas_parse() {
        for r in Recipe::ALL {
            let s = r.schema();
            assert_eq!(s.name, r.name());
            assert_eq!(r.name().parse::<Recipe>().unwrap(), r);
        }
    }

    #[test]
    fn german_recipe_adds_header() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("german.data"),
            "A11 6 A34 A43 1169 A65 A75 4 A93 A101 4 A121 67 A143 A152 2 A173 1 A192 A201 1\n\
             A12 48 A32 A43 5951 A61 A73 2 A92 A101 2 A121 22 A143 A152 1 A173 1 A191 A201 2\n",
        )
        .unwrap();
        let out = dir.path().join("german.csv");
        let rep = Recipe::German.prepare(dir.path(), &out).unwrap();
        assert_eq!(rep.rows_out, 2);
        let table = crate::dataset::load_csv(&out, &Recipe::German.schema()).unwrap();
        let ds = crate::dataset::encode(&table, &Recipe::German.schema()).unwrap();
        assert_eq!(ds.labels(), &[1, 0]);
        assert_eq!(ds.protected(), &[1, 0]);
    }

    #[test]
    fn adult_recipe_strips_test_label_dot() {
        let dir = tempfile::tempdir().unwrap();
        let row = "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States";
        std::fs::write(dir.path().join("adult.data"), format!("{row}, <=50K\n")).unwrap();
        std::fs::write(
            dir.path().join("adult.test"),
            format!("|1x3 Cross validator\n{row}, >50K.\n"),
        )
        .unwrap();
        let out = dir.path().join("adult.csv");
        assert_eq!(Recipe::Adult.prepare(dir.path(), &out).unwrap().rows_out, 2);
        let schema = Recipe::Adult.schema();
        let ds = crate::dataset::encode(&crate::dataset::load_csv(&out, &schema).unwrap(), &schema)
            .unwrap();
        assert_eq!(ds.labels(), &[0, 1]);
    }

    #[test]
    fn compas_recipe_filters_cohort() {
        let dir = tempfile::tempdir().unwrap();
        let header = "id,sex,age,age_cat,race,juv_fel_count,juv_misd_count,juv_other_count,priors_count,days_b_screening_arrest,c_charge_degree,c_charge_desc,is_recid,two_year_recid";
        let rows = [
            "1,Male,30,25 - 45,Caucasian,0,0,0,1,-1,F,Theft,0,0",
            "2,Male,30,25 - 45,Other,0,0,0,1,-1,F,Theft,0,0",
            "3,Male,30,25 - 45,African-American,0,0,0,1,,F,Theft,1,1",
            "4,Male,30,25 - 45,African-American,0,0,0,1,31,F,Theft,1,1",
            "5,Female,30,25 - 45,African-American,0,0,0,1,0,M,Theft,1,1",
            "6,Female,30,25 - 45,African-American,0,0,0,1,0,O,Theft,1,1",
            "7,Female,30,25 - 45,African-American,0,0,0,1,0,M,Theft,-1,1",
        ];
        std::fs::write(
            dir.path().join("compas-scores-two-years.csv"),
            format!("{header}\n{}\n", rows.join("\n")),
        )
        .unwrap();
        let out = dir.path().join("compas.csv");
        let rep = Recipe::Compas.prepare(dir.path(), &out).unwrap();
        assert_eq!((rep.rows_in, rep.rows_out), (7, 2));
    }
}
