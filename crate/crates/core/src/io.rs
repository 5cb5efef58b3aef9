//! CSV ingestion and emission with schema inference.
//!
//! Values are kept as raw strings so untouched columns round-trip
//! bit-identically; numeric parsing happens against the schema. Floating
//! point output uses Rust's shortest round-trip formatting.

use crate::coupling::CouplingPlan;
use crate::encoder::EncodedColumn;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// One column of the schema; categorical columns carry their sorted categories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub columns: Vec<ColumnSchema>,
    pub row_count: usize,
}

impl DatasetSchema {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSchema> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Parsed dataset: schema plus rows of raw cell strings.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: DatasetSchema,
    pub rows: Vec<Vec<String>>,
}

impl Dataset {
    /// Parses a numeric column into `f64`s.
    pub fn numeric_column(&self, index: usize) -> Result<Vec<f64>> {
        let col = &self.schema.columns[index];
        if col.kind != ColumnKind::Numeric {
            return Err(Error::Schema(format!(
                "column {:?} is not numeric",
                col.name
            )));
        }
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row[index]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::ColumnType {
                        column: col.name.clone(),
                        line: r + 2,
                        reason: format!("not a number: {:?}", row[index]),
                    })
            })
            .collect()
    }

    /// Row indices of the two groups of a binary categorical column,
    /// partitioned by sorted category order (first category is group 0).
    pub fn split_indices(&self, column: &str) -> Result<(Vec<usize>, Vec<usize>)> {
        let idx = self
            .schema
            .column_index(column)
            .ok_or_else(|| Error::Schema(format!("unknown column {column:?}")))?;
        let col = &self.schema.columns[idx];
        if col.kind != ColumnKind::Categorical || col.categories.len() != 2 {
            return Err(Error::NotBinary(column.to_string()));
        }
        let first = &col.categories[0];
        let mut g0 = Vec::new();
        let mut g1 = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            if &row[idx] == first {
                g0.push(r);
            } else {
                g1.push(r);
            }
        }
        Ok((g0, g1))
    }
}

/// Rows of one sensitive group, cloned out of the dataset.
pub type GroupRows = Vec<Vec<String>>;

/// Partition rows by a binary sensitive column; both groups are returned
/// even when one is empty.
pub fn split_by_sensitive(dataset: &Dataset, column: &str) -> Result<(GroupRows, GroupRows)> {
    let (i0, i1) = dataset.split_indices(column)?;
    let take = |idx: &[usize]| idx.iter().map(|&r| dataset.rows[r].clone()).collect();
    Ok((take(&i0), take(&i1)))
}

/// Optional per-column schema declarations supplied to [`read_csv`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SchemaDeclaration {
    #[serde(default)]
    pub numeric: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Pinned category lists, keyed by column name.
    #[serde(default)]
    pub categories: BTreeMap<String, Vec<String>>,
}

impl SchemaDeclaration {
    fn declared_kind(&self, name: &str) -> Option<ColumnKind> {
        if self.numeric.iter().any(|c| c == name) {
            Some(ColumnKind::Numeric)
        } else if self.categorical.iter().any(|c| c == name) || self.categories.contains_key(name) {
            Some(ColumnKind::Categorical)
        } else {
            None
        }
    }
}

fn parse_finite(cell: &str) -> Option<f64> {
    let v: f64 = cell.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Reads an RFC 4180 CSV with a header row.
///
/// Kinds are inferred per column (every cell parses as a finite number →
/// numeric, otherwise categorical with lexicographically sorted categories)
/// unless declared. Ragged rows and missing values are rejected.
pub fn read_csv(path: &Path, declared: Option<&SchemaDeclaration>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv_from_reader(file, declared)
}

pub fn read_csv_from_reader<R: std::io::Read>(
    reader: R,
    declared: Option<&SchemaDeclaration>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_string()).collect();
    if headers.is_empty() {
        return Err(Error::Parse {
            line: 1,
            reason: "empty header row".into(),
        });
    }
    {
        let mut seen = std::collections::BTreeSet::new();
        for h in &headers {
            if !seen.insert(h) {
                return Err(Error::Schema(format!("duplicate column name {h:?}")));
            }
        }
    }

    let n_cols = headers.len();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let line = r + 2;
        if record.len() != n_cols {
            return Err(Error::Parse {
                line,
                reason: format!("expected {n_cols} fields, found {}", record.len()),
            });
        }
        let row: Vec<String> = record.iter().map(|c| c.to_string()).collect();
        for (c, cell) in row.iter().enumerate() {
            if cell.trim().is_empty() {
                return Err(Error::Parse {
                    line,
                    reason: format!("missing value in column {:?}", headers[c]),
                });
            }
        }
        rows.push(row);
    }

    let mut columns = Vec::with_capacity(n_cols);
    for (c, name) in headers.iter().enumerate() {
        let declared_kind = declared.and_then(|d| d.declared_kind(name));
        let kind = match declared_kind {
            Some(k) => k,
            None => {
                if rows.iter().all(|row| parse_finite(&row[c]).is_some()) {
                    ColumnKind::Numeric
                } else {
                    ColumnKind::Categorical
                }
            }
        };
        let categories = match kind {
            ColumnKind::Numeric => {
                for (r, row) in rows.iter().enumerate() {
                    if parse_finite(&row[c]).is_none() {
                        return Err(Error::ColumnType {
                            column: name.clone(),
                            line: r + 2,
                            reason: format!("not a number: {:?}", row[c]),
                        });
                    }
                }
                Vec::new()
            }
            ColumnKind::Categorical => {
                let pinned = declared.and_then(|d| d.categories.get(name));
                match pinned {
                    Some(cats) => {
                        if cats.len() < 2 {
                            return Err(Error::Schema(format!(
                                "column {name:?} declares fewer than 2 categories"
                            )));
                        }
                        let mut cats = cats.clone();
                        cats.sort();
                        for (r, row) in rows.iter().enumerate() {
                            if !cats.iter().any(|cat| cat == &row[c]) {
                                return Err(Error::ColumnType {
                                    column: name.clone(),
                                    line: r + 2,
                                    reason: format!(
                                        "value {:?} not among declared categories",
                                        row[c]
                                    ),
                                });
                            }
                        }
                        cats
                    }
                    None => {
                        let mut cats: Vec<String> = rows
                            .iter()
                            .map(|row| row[c].clone())
                            .collect::<std::collections::BTreeSet<_>>()
                            .into_iter()
                            .collect();
                        cats.sort();
                        if cats.len() < 2 {
                            return Err(Error::Schema(format!(
                                "categorical column {name:?} has fewer than 2 distinct values; declare its categories explicitly"
                            )));
                        }
                        cats
                    }
                }
            }
        };
        columns.push(ColumnSchema {
            name: name.clone(),
            kind,
            categories,
        });
    }

    let row_count = rows.len();
    Ok(Dataset {
        schema: DatasetSchema { columns, row_count },
        rows,
    })
}

/// Shortest decimal representation that round-trips through `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v}")
}

/// Writes a dataset back to CSV, cells verbatim.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    write_dataset_with_scores(path, dataset, &[])
}

/// Writes a dataset with per-category score columns `<col>__<category>`
/// appended after the original columns.
pub fn write_dataset_with_scores(
    path: &Path,
    dataset: &Dataset,
    scores: &[EncodedColumn],
) -> Result<()> {
    for col in scores {
        if col.scores.len() != dataset.rows.len() {
            return Err(Error::DimensionMismatch(
                dataset.rows.len(),
                col.scores.len(),
            ));
        }
    }
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = dataset
        .schema
        .columns
        .iter()
        .map(|c| c.name.clone())
        .collect();
    for col in scores {
        for cat in &col.categories {
            header.push(format!("{}__{}", col.name, cat));
        }
    }
    wtr.write_record(&header)?;
    for (r, row) in dataset.rows.iter().enumerate() {
        let mut record: Vec<String> = row.clone();
        for col in scores {
            for &p in col.scores[r].parts() {
                record.push(format_float(p));
            }
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes only score columns (used for transported compositions).
pub fn write_score_table(path: &Path, scores: &[EncodedColumn]) -> Result<()> {
    let Some(first) = scores.first() else {
        return Err(Error::DegenerateInput("no score columns to write".into()));
    };
    for col in scores {
        if col.scores.len() != first.scores.len() {
            return Err(Error::DimensionMismatch(
                first.scores.len(),
                col.scores.len(),
            ));
        }
    }
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header = Vec::new();
    for col in scores {
        for cat in &col.categories {
            header.push(format!("{}__{}", col.name, cat));
        }
    }
    wtr.write_record(&header)?;
    for r in 0..first.scores.len() {
        let mut record = Vec::new();
        for col in scores {
            for &p in col.scores[r].parts() {
                record.push(format_float(p));
            }
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Emits a coupling plan as sparse triplets with header `i,j,weight`.
pub fn write_plan_triplets(path: &Path, plan: &CouplingPlan) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "i,j,weight")?;
    for (i, j, w) in plan.support() {
        writeln!(file, "{i},{j},{}", format_float(w))?;
    }
    file.flush()?;
    Ok(())
}

/// Sparse plan triplets `(i, j, weight)`.
pub type PlanTriplets = Vec<(usize, usize, f64)>;

/// Reads a triplet plan file back: `(max_i + 1, max_j + 1, triplets)`.
pub fn read_plan_triplets(path: &Path) -> Result<(usize, usize, PlanTriplets)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut triplets = Vec::new();
    let (mut n0, mut n1) = (0usize, 0usize);
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let line = r + 2;
        let parse_idx = |s: &str| -> Result<usize> {
            s.trim().parse().map_err(|_| Error::Parse {
                line,
                reason: format!("bad index {s:?}"),
            })
        };
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                reason: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let i = parse_idx(&record[0])?;
        let j = parse_idx(&record[1])?;
        let w: f64 = record[2].trim().parse().map_err(|_| Error::Parse {
            line,
            reason: format!("bad weight {:?}", &record[2]),
        })?;
        n0 = n0.max(i + 1);
        n1 = n1.max(j + 1);
        triplets.push((i, j, w));
    }
    if triplets.is_empty() {
        return Err(Error::DegenerateInput("empty plan file".into()));
    }
    Ok((n0, n1, triplets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::solve_coupling;
    use nalgebra::DMatrix;

    fn read_str(text: &str, declared: Option<&SchemaDeclaration>) -> Result<Dataset> {
        read_csv_from_reader(text.as_bytes(), declared)
    }

    #[test]
    fn basic_inference() {
        let ds = read_str("a,b,c\n1,x,0.5\n2,y,0.25\n", None).unwrap();
        assert_eq!(ds.schema.row_count, 2);
        assert_eq!(ds.schema.columns.len(), 3);
        assert_eq!(ds.schema.columns[0].kind, ColumnKind::Numeric);
        assert_eq!(ds.schema.columns[1].kind, ColumnKind::Categorical);
        assert_eq!(ds.schema.columns[1].categories, vec!["x", "y"]);
        assert_eq!(ds.schema.columns[2].kind, ColumnKind::Numeric);
    }

    #[test]
    fn category_order_is_lexicographic() {
        let ds = read_str("c\nB\nA\nB\nA\nC\n", None).unwrap();
        assert_eq!(ds.schema.columns[0].categories, vec!["A", "B", "C"]);
    }

    #[test]
    fn ragged_and_missing_rejected() {
        assert!(matches!(
            read_str("a,b\n1,2\n3\n", None),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            read_str("a,b\n1,\n", None),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn declared_numeric_with_bad_token() {
        let decl = SchemaDeclaration {
            numeric: vec!["a".into()],
            ..Default::default()
        };
        let err = read_str("a\n1\nabc\n", Some(&decl)).unwrap_err();
        match err {
            Error::ColumnType { column, line, .. } => {
                assert_eq!(column, "a");
                assert_eq!(line, 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn declared_categories_allow_absent_levels() {
        let mut decl = SchemaDeclaration::default();
        decl.categories
            .insert("s".into(), vec!["F".into(), "M".into()]);
        let ds = read_str("s\nF\nF\n", Some(&decl)).unwrap();
        assert_eq!(ds.schema.columns[0].categories, vec!["F", "M"]);
        let (g0, g1) = ds.split_indices("s").unwrap();
        assert_eq!(g0, vec![0, 1]);
        assert!(g1.is_empty());
    }

    #[test]
    fn split_by_sorted_category_order() {
        let ds = read_str("sex,v\nMale,1\nFemale,2\nMale,3\n", None).unwrap();
        let (g0, g1) = split_by_sensitive(&ds, "sex").unwrap();
        // Lexicographic: Female is group 0.
        assert_eq!(g0.len(), 1);
        assert_eq!(g0[0][1], "2");
        assert_eq!(g1.len(), 2);

        let ds = read_str("c,v\na,1\nb,2\nc,3\n", None).unwrap();
        assert!(matches!(
            split_by_sensitive(&ds, "c"),
            Err(Error::NotBinary(_))
        ));
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let ds = read_str("a,b\n1.5,x\n0.30000000000000004,y\n", None).unwrap();
        write_dataset(&path, &ds).unwrap();
        let again = read_csv(&path, None).unwrap();
        assert_eq!(again.rows, ds.rows);
        assert_eq!(again.schema.columns.len(), 2);
    }

    #[test]
    fn score_columns_round_trip_exactly() {
        use crate::encoder::{EncodedColumn, Provenance};
        use crate::simplex::Composition;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let ds = read_str("id\n1\n2\n", None).unwrap();
        let col = EncodedColumn {
            name: "purpose".into(),
            categories: vec!["C".into(), "E".into(), "O".into()],
            scores: vec![
                Composition::new(vec![0.1, 0.2, 0.7]).unwrap(),
                Composition::new(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap(),
            ],
            provenance: Provenance::FittedMlr,
        };
        write_dataset_with_scores(&path, &ds, std::slice::from_ref(&col)).unwrap();

        let again = read_csv(&path, None).unwrap();
        assert_eq!(
            again.schema.columns[1].name, "purpose__C",
            "score headers appended"
        );
        let loaded = crate::encoder::load_external_scores(
            &path,
            "purpose",
            &col.categories,
            crate::simplex::DEFAULT_EPSILON,
        )
        .unwrap();
        for (a, b) in loaded.scores.iter().zip(&col.scores) {
            for (x, y) in a.parts().iter().zip(b.parts()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn plan_triplets_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.csv");
        let c = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        let plan = solve_coupling(&c).unwrap();
        write_plan_triplets(&path, &plan).unwrap();
        let (n0, n1, triplets) = read_plan_triplets(&path).unwrap();
        assert_eq!((n0, n1), (3, 3));
        // Permutation plan of size 3: exactly 3 triplet rows.
        assert_eq!(triplets.len(), 3);
    }
}
