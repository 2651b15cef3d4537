//! Table loading, validation, and attribute alignment.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attribute type tag driving the similarity bank selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttrType {
    ShortString,
    LongString,
    Numeric,
    Categorical,
}

impl fmt::Display for AttrType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AttrType::ShortString => "short-string",
            AttrType::LongString => "long-string",
            AttrType::Numeric => "numeric",
            AttrType::Categorical => "categorical",
        };
        f.write_str(s)
    }
}

/// An immutable relation loaded from a delimited file.
///
/// Values are canonicalized at load time (trimmed, case-folded) and nulls
/// are represented as `None`. Row order is the file order.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub attributes: Vec<String>,
    pub id_column: usize,
    tuples: Vec<Vec<Option<String>>>,
    id_index: HashMap<String, usize>,
}

impl Table {
    /// Build a table from in-memory records. The first column layout must
    /// match `attributes`; `id_column` names the unique-id attribute.
    pub fn from_rows(
        name: &str,
        attributes: Vec<String>,
        id_column: &str,
        rows: Vec<Vec<Option<String>>>,
    ) -> Result<Table> {
        let id_ix = attributes
            .iter()
            .position(|a| a == id_column)
            .ok_or_else(|| Error::UnknownAttribute {
                table: name.to_string(),
                attribute: id_column.to_string(),
            })?;
        let mut id_index = HashMap::with_capacity(rows.len());
        for (row_ix, row) in rows.iter().enumerate() {
            if row.len() != attributes.len() {
                return Err(Error::Parse(format!(
                    "row {} of table {name:?} has {} fields, expected {}",
                    row_ix + 1,
                    row.len(),
                    attributes.len()
                )));
            }
            let id = row[id_ix].clone().unwrap_or_default();
            if id.is_empty() {
                return Err(Error::Parse(format!(
                    "row {} of table {name:?} has an empty id",
                    row_ix + 1
                )));
            }
            if let Some(first) = id_index.insert(id.clone(), row_ix) {
                return Err(Error::DuplicateId {
                    table: name.to_string(),
                    id,
                    first: first + 1,
                    second: row_ix + 1,
                });
            }
        }
        Ok(Table {
            name: name.to_string(),
            attributes,
            id_column: id_ix,
            tuples: rows,
            id_index,
        })
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn rows(&self) -> &[Vec<Option<String>>] {
        &self.tuples
    }

    pub fn value(&self, row: usize, col: usize) -> Option<&str> {
        self.tuples[row][col].as_deref()
    }

    pub fn id_of(&self, row: usize) -> &str {
        self.tuples[row][self.id_column].as_deref().unwrap_or("")
    }

    pub fn row_by_id(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == name)
    }

    /// Column values for one attribute, in row order.
    pub fn column(&self, col: usize) -> impl Iterator<Item = Option<&str>> {
        self.tuples.iter().map(move |r| r[col].as_deref())
    }

    /// Write the table back out as a delimited file. Nulls become empty
    /// cells, so `load -> serialize -> load` preserves content and order.
    pub fn serialize(&self, path: &Path, delimiter: u8) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        w.write_record(&self.attributes)
            .map_err(|e| csv_error(path, e))?;
        for row in &self.tuples {
            w.write_record(row.iter().map(|v| v.as_deref().unwrap_or("")))
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(())
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                Error::Io {
                    path: path.to_path_buf(),
                    source: io,
                }
            } else {
                unreachable!()
            }
        }
        _ => Error::Parse(format!("{}: {e}", path.display())),
    }
}

/// Canonicalize a raw cell: trim, case-fold, map empty / "null" to None.
fn canonicalize(raw: &str) -> Option<String> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return None;
    }
    let folded = trimmed.to_lowercase();
    if folded == "null" {
        return None;
    }
    Some(folded)
}

/// Load a delimited UTF-8 file with a header row into a [`Table`].
///
/// Empty cells and the literal `NULL`/`null` are treated as nulls; all
/// other values are whitespace-trimmed and case-folded. Duplicate ids and
/// ragged rows are hard errors.
pub fn load_table(path: &Path, id_column: &str, delimiter: u8) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let n_cols = headers.len();

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != n_cols {
            let line = record
                .position()
                .map(|p| p.line())
                .unwrap_or(rows.len() as u64 + 2);
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                line,
                expected: n_cols,
                got: record.len(),
            });
        }
        rows.push(record.iter().map(canonicalize).collect());
    }

    Table::from_rows(&name, headers, &id_column.trim().to_lowercase(), rows)
}

/// One aligned attribute pair plus its inferred type tag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignedAttr {
    pub left: String,
    pub right: String,
    pub tag: AttrType,
}

/// The attribute correspondence between the two input tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignedSchema {
    pub pairs: Vec<AlignedAttr>,
}

/// Fraction of non-null values that must parse as numbers for the numeric tag.
pub const NUMERIC_FRACTION: f64 = 0.95;
/// Average token count above which a column is tagged long-string.
pub const LONG_STRING_TOKENS: f64 = 6.0;
/// Distinct-value ratio below which a column is tagged categorical.
pub const CATEGORICAL_RATIO: f64 = 0.05;

/// Infer the type tag for one aligned column from its pooled values.
fn infer_type<'a>(values: impl Iterator<Item = &'a str>) -> AttrType {
    let mut total = 0usize;
    let mut numeric = 0usize;
    let mut tokens = 0usize;
    let mut distinct = std::collections::HashSet::new();
    for v in values {
        total += 1;
        if v.parse::<f64>().is_ok() {
            numeric += 1;
        }
        tokens += v.split_whitespace().count();
        distinct.insert(v);
    }
    if total == 0 {
        return AttrType::ShortString;
    }
    if numeric as f64 >= NUMERIC_FRACTION * total as f64 {
        return AttrType::Numeric;
    }
    if tokens as f64 / total as f64 > LONG_STRING_TOKENS {
        return AttrType::LongString;
    }
    if (distinct.len() as f64) / (total as f64) < CATEGORICAL_RATIO {
        return AttrType::Categorical;
    }
    AttrType::ShortString
}

/// Match attributes between the two tables and tag each aligned pair.
///
/// Without hints, attributes are matched by exact (case-folded) name; the
/// id columns never participate. Hints map a left attribute name to a
/// right attribute name and override name matching for those columns.
pub fn align_schemas(
    left: &Table,
    right: &Table,
    hints: Option<&[(String, String)]>,
) -> Result<AlignedSchema> {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut used_right: Vec<bool> = vec![false; right.attributes.len()];

    if let Some(hints) = hints {
        for (l, r) in hints {
            let l = l.trim().to_lowercase();
            let r = r.trim().to_lowercase();
            let li = left
                .attribute_index(&l)
                .ok_or_else(|| Error::UnknownAttribute {
                    table: left.name.clone(),
                    attribute: l.clone(),
                })?;
            let ri = right
                .attribute_index(&r)
                .ok_or_else(|| Error::UnknownAttribute {
                    table: right.name.clone(),
                    attribute: r.clone(),
                })?;
            if li != left.id_column && ri != right.id_column {
                pairs.push((li, ri));
                used_right[ri] = true;
            }
        }
    }

    for (li, attr) in left.attributes.iter().enumerate() {
        if li == left.id_column || pairs.iter().any(|&(pl, _)| pl == li) {
            continue;
        }
        if let Some(ri) = right.attribute_index(attr) {
            if ri != right.id_column && !used_right[ri] {
                pairs.push((li, ri));
                used_right[ri] = true;
            }
        }
    }
    pairs.sort_by_key(|&(li, _)| li);

    if pairs.is_empty() {
        return Err(Error::EmptySchema {
            left: left.name.clone(),
            right: right.name.clone(),
        });
    }

    let aligned = pairs
        .into_iter()
        .map(|(li, ri)| {
            let tag = infer_type(
                left.column(li)
                    .chain(right.column(ri))
                    .flatten(),
            );
            AlignedAttr {
                left: left.attributes[li].clone(),
                right: right.attributes[ri].clone(),
                tag,
            }
        })
        .collect();

    Ok(AlignedSchema { pairs: aligned })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_rows_with_unique_ids() {
        let f = write_tmp("id,name,city\n1,Alpha,Rome\n2,Beta,Pisa\n3,Gamma,Bari\n");
        let t = load_table(f.path(), "id", b',').unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.attributes.len(), 3);
        assert_eq!(t.value(0, 1), Some("alpha"));
        assert_eq!(t.id_of(2), "3");
    }

    #[test]
    fn duplicate_id_is_named_in_error() {
        let f = write_tmp("id,name\n1,a\n7,b\n3,c\n7,d\n");
        let err = load_table(f.path(), "id", b',').unwrap_err();
        match err {
            Error::DuplicateId { id, .. } => assert_eq!(id, "7"),
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn ragged_row_reports_line() {
        let f = write_tmp("id,name,city\n1,a,x\n2,b\n");
        let err = load_table(f.path(), "id", b',').unwrap_err();
        match err {
            Error::RaggedRow { line, .. } => assert_eq!(line, 3),
            other => panic!("expected RaggedRow, got {other:?}"),
        }
    }

    #[test]
    fn nulls_are_preserved() {
        let f = write_tmp("id,name,phone\n1,alpha,\n2,NULL,555\n");
        let t = load_table(f.path(), "id", b',').unwrap();
        assert_eq!(t.value(0, 2), None);
        assert_eq!(t.value(1, 1), None);
        assert_eq!(t.value(1, 2), Some("555"));
    }

    #[test]
    fn serialize_round_trips_content_and_order() {
        let f = write_tmp("id,name,city\n2,Beta,\n1,alpha,rome\n3,NULL,bari\n");
        let t = load_table(f.path(), "id", b',').unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        t.serialize(out.path(), b',').unwrap();
        let t2 = load_table(out.path(), "id", b',').unwrap();
        assert_eq!(t.rows(), t2.rows());
        assert_eq!(t.attributes, t2.attributes);
    }

    #[test]
    fn aligns_identical_headers() {
        let hdr = "id,name,addr,city,phone,cuisine,class,site\n";
        let f1 = write_tmp(&format!("{hdr}1,a,b,c,d,e,f,g\n"));
        let f2 = write_tmp(&format!("{hdr}9,a,b,c,d,e,f,g\n"));
        let l = load_table(f1.path(), "id", b',').unwrap();
        let r = load_table(f2.path(), "id", b',').unwrap();
        let s = align_schemas(&l, &r, None).unwrap();
        // every non-id header aligns
        assert_eq!(s.pairs.len(), 7);
    }

    #[test]
    fn hint_overrides_name_mismatch() {
        let f1 = write_tmp("id,title\n1,a\n");
        let f2 = write_tmp("id,name\n9,a\n");
        let l = load_table(f1.path(), "id", b',').unwrap();
        let r = load_table(f2.path(), "id", b',').unwrap();
        assert!(align_schemas(&l, &r, None).is_err());
        let hints = vec![("title".to_string(), "name".to_string())];
        let s = align_schemas(&l, &r, Some(&hints)).unwrap();
        assert_eq!(s.pairs.len(), 1);
        assert_eq!(s.pairs[0].left, "title");
        assert_eq!(s.pairs[0].right, "name");
    }

    #[test]
    fn phone_strings_tag_short_string() {
        // formatted US phone numbers do not parse as numbers and have one
        // token each, so the inference rules land on short-string
        let rows = "id,phone\n1,310/246-1501\n2,213/467-1108\n3,818/762-1221\n4,310/652-4025\n5,213/483-6000\n";
        let f1 = write_tmp(rows);
        let f2 = write_tmp(rows);
        let l = load_table(f1.path(), "id", b',').unwrap();
        let r = load_table(f2.path(), "id", b',').unwrap();
        let s = align_schemas(&l, &r, None).unwrap();
        assert_eq!(s.pairs[0].tag, AttrType::ShortString);
    }

    #[test]
    fn numeric_and_categorical_tags() {
        let mut num = String::from("id,year,genre\n");
        for i in 0..100 {
            num.push_str(&format!("{i},{},{}\n", 1990 + (i % 20), if i % 2 == 0 { "a" } else { "b" }));
        }
        let f1 = write_tmp(&num);
        let f2 = write_tmp(&num);
        let l = load_table(f1.path(), "id", b',').unwrap();
        let r = load_table(f2.path(), "id", b',').unwrap();
        let s = align_schemas(&l, &r, None).unwrap();
        assert_eq!(s.pairs[0].tag, AttrType::Numeric);
        assert_eq!(s.pairs[1].tag, AttrType::Categorical);
    }

    #[test]
    fn alignment_is_deterministic() {
        let hdr = "id,name,addr,city\n";
        let f1 = write_tmp(&format!("{hdr}1,a,b,c\n"));
        let f2 = write_tmp(&format!("{hdr}9,a,b,c\n"));
        let l = load_table(f1.path(), "id", b',').unwrap();
        let r = load_table(f2.path(), "id", b',').unwrap();
        let s1 = align_schemas(&l, &r, None).unwrap();
        let s2 = align_schemas(&l, &r, None).unwrap();
        let names1: Vec<_> = s1.pairs.iter().map(|p| p.left.clone()).collect();
        let names2: Vec<_> = s2.pairs.iter().map(|p| p.left.clone()).collect();
        assert_eq!(names1, names2);
    }
}
