use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::{AttributeKind, AttributeSchema, AttributeValue, CategorySet, Dataset, DatasetError};

/// Input encodings accepted by [`parse_dataset`].
#[derive(Debug, Clone)]
pub enum DatasetFormat {
    /// `{"schema": [...], "rows": [[...]], "labels": [...]}`
    JsonV1,
    /// One column per scalar/categorical attribute, header row of attribute
    /// names. Types come from the sidecar schema.
    CsvWithSchema(Vec<AttributeSchema>),
}

#[derive(Deserialize)]
struct JsonDocument {
    #[serde(default)]
    id: Option<String>,
    schema: Vec<AttributeSchema>,
    rows: Vec<Vec<Value>>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    metadata: Option<JsonMetadata>,
}

#[derive(Deserialize)]
struct JsonMetadata {
    #[serde(default, rename = "groundTruth")]
    ground_truth: Option<Vec<usize>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SchemaDocument {
    Wrapped { schema: Vec<AttributeSchema> },
    Bare(Vec<AttributeSchema>),
}

pub fn parse_dataset(bytes: &[u8], format: DatasetFormat) -> Result<Dataset, DatasetError> {
    match format {
        DatasetFormat::JsonV1 => parse_json(bytes),
        DatasetFormat::CsvWithSchema(schema) => parse_csv(bytes, schema),
    }
}

/// Reads a sidecar schema file, either `{"schema": [...]}` or a bare array.
pub fn parse_schema(bytes: &[u8]) -> Result<Vec<AttributeSchema>, DatasetError> {
    let doc: SchemaDocument = serde_json::from_slice(bytes)?;
    let schema = match doc {
        SchemaDocument::Wrapped { schema } | SchemaDocument::Bare(schema) => schema,
    };
    for attr in &schema {
        attr.validate()?;
    }
    Ok(schema)
}

fn parse_json(bytes: &[u8]) -> Result<Dataset, DatasetError> {
    let doc: JsonDocument = serde_json::from_slice(bytes)?;
    for attr in &doc.schema {
        attr.validate()?;
    }
    let mut points = Vec::with_capacity(doc.rows.len());
    for (row, cells) in doc.rows.iter().enumerate() {
        if cells.len() != doc.schema.len() {
            return Err(DatasetError::SchemaMismatch {
                row,
                attribute: "*".into(),
                detail: format!("expected {} values, found {}", doc.schema.len(), cells.len()),
            });
        }
        let values = cells
            .iter()
            .zip(&doc.schema)
            .map(|(cell, attr)| json_cell(cell, attr, row))
            .collect::<Result<Vec<_>, _>>()?;
        points.push(values);
    }
    let dataset = Dataset::new(
        doc.id.unwrap_or_else(|| "dataset".to_string()),
        doc.schema,
        points,
        doc.labels,
    )?;
    match doc.metadata.and_then(|m| m.ground_truth) {
        Some(truth) => dataset.with_ground_truth(truth),
        None => Ok(dataset),
    }
}

fn json_cell(cell: &Value, attr: &AttributeSchema, row: usize) -> Result<AttributeValue, DatasetError> {
    let name = &attr.name;
    let missing = || DatasetError::Missing {
        row,
        attribute: name.clone(),
    };
    let mismatch = |detail: &str| DatasetError::SchemaMismatch {
        row,
        attribute: name.clone(),
        detail: detail.to_string(),
    };
    if cell.is_null() {
        return Err(missing());
    }
    let number = |v: &Value| -> Result<f64, DatasetError> {
        match v {
            Value::Null => Err(missing()),
            Value::Number(n) => n.as_f64().ok_or_else(|| mismatch("number out of range")),
            _ => Err(mismatch("expected a number")),
        }
    };
    let numbers = |v: &Value| -> Result<Vec<f64>, DatasetError> {
        v.as_array()
            .ok_or_else(|| mismatch("expected an array of numbers"))?
            .iter()
            .map(number)
            .collect()
    };
    match &attr.kind {
        AttributeKind::Scalar => Ok(AttributeValue::Scalar(number(cell)?)),
        AttributeKind::Point { .. } => Ok(AttributeValue::Point(numbers(cell)?)),
        AttributeKind::Function { .. } => Ok(AttributeValue::Function(numbers(cell)?)),
        AttributeKind::Curve { .. } => {
            let steps = cell
                .as_array()
                .ok_or_else(|| mismatch("expected an array of positions"))?;
            Ok(AttributeValue::Curve(
                steps.iter().map(numbers).collect::<Result<_, _>>()?,
            ))
        }
        AttributeKind::CategoricalSet { universe } => {
            let labels: Vec<&str> = match cell {
                Value::String(s) => vec![s.as_str()],
                Value::Array(items) => items
                    .iter()
                    .map(|v| v.as_str().ok_or_else(|| mismatch("category labels must be strings")))
                    .collect::<Result<_, _>>()?,
                _ => return Err(mismatch("expected a category label or list of labels")),
            };
            category_set(universe, labels, row, name)
        }
    }
}

fn category_set<'a>(
    universe: &[String],
    labels: impl IntoIterator<Item = &'a str>,
    row: usize,
    attribute: &str,
) -> Result<AttributeValue, DatasetError> {
    let mut set = CategorySet::empty(universe.len());
    for label in labels {
        let idx = universe
            .iter()
            .position(|u| u == label)
            .ok_or_else(|| DatasetError::UnknownCategory {
                row,
                attribute: attribute.to_string(),
                label: label.to_string(),
            })?;
        set.insert(idx);
    }
    Ok(AttributeValue::CategoricalSet(set))
}

/// Separator between members of a multi-valued categorical CSV cell.
const CSV_SET_SEPARATOR: char = '|';
/// Spelling of the empty set in CSV (an empty cell means "missing").
const CSV_EMPTY_SET: &str = "{}";

fn parse_csv(bytes: &[u8], schema: Vec<AttributeSchema>) -> Result<Dataset, DatasetError> {
    for attr in &schema {
        attr.validate()?;
        if matches!(attr.kind, AttributeKind::Function { .. } | AttributeKind::Curve { .. }) {
            return Err(DatasetError::InvalidSchema(format!(
                "`{}`: {} attributes are not representable in CSV",
                attr.name,
                attr.kind.type_name()
            )));
        }
        if matches!(attr.kind, AttributeKind::Point { .. }) {
            return Err(DatasetError::InvalidSchema(format!(
                "`{}`: point attributes are not representable in CSV",
                attr.name
            )));
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| DatasetError::Csv(e.to_string()))?
        .clone();
    // Column position of every schema attribute. An optional `label` column
    // not in the schema carries display names.
    let mut columns = Vec::with_capacity(schema.len());
    for attr in &schema {
        let col = headers.iter().position(|h| h == attr.name).ok_or_else(|| {
            DatasetError::SchemaMismatch {
                row: 0,
                attribute: attr.name.clone(),
                detail: "column missing from CSV header".into(),
            }
        })?;
        columns.push(col);
    }
    let label_col = if schema.iter().any(|a| a.name == "label") {
        None
    } else {
        headers.iter().position(|h| h == "label")
    };

    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DatasetError::Csv(e.to_string()))?;
        let mut values = Vec::with_capacity(schema.len());
        for (attr, &col) in schema.iter().zip(&columns) {
            let cell = record.get(col).unwrap_or("");
            if cell.is_empty() {
                return Err(DatasetError::Missing {
                    row,
                    attribute: attr.name.clone(),
                });
            }
            let value = match &attr.kind {
                AttributeKind::Scalar => {
                    let v: f64 = cell.parse().map_err(|_| DatasetError::SchemaMismatch {
                        row,
                        attribute: attr.name.clone(),
                        detail: format!("`{cell}` is not a number"),
                    })?;
                    AttributeValue::Scalar(v)
                }
                AttributeKind::CategoricalSet { universe } => {
                    if cell == CSV_EMPTY_SET {
                        AttributeValue::CategoricalSet(CategorySet::empty(universe.len()))
                    } else {
                        category_set(universe, cell.split(CSV_SET_SEPARATOR).map(str::trim), row, &attr.name)?
                    }
                }
                _ => unreachable!("rejected above"),
            };
            values.push(value);
        }
        if let Some(col) = label_col {
            labels.push(record.get(col).unwrap_or("").to_string());
        }
        points.push(values);
    }
    let labels = label_col.map(|_| labels);
    Dataset::new("dataset", schema, points, labels)
}

fn cell_json(value: &AttributeValue, attr: &AttributeSchema) -> Value {
    match value {
        AttributeValue::Scalar(v) => json!(v),
        AttributeValue::Point(p) | AttributeValue::Function(p) => json!(p),
        AttributeValue::Curve(c) => json!(c),
        AttributeValue::CategoricalSet(s) => {
            let AttributeKind::CategoricalSet { universe } = &attr.kind else {
                unreachable!("validated at construction")
            };
            Value::Array(s.iter().map(|i| Value::String(universe[i].clone())).collect())
        }
    }
}

/// Canonical JSON v1 document for `dataset`.
pub fn to_json_value(dataset: &Dataset) -> Value {
    let mut doc = Map::new();
    doc.insert("id".into(), json!(dataset.id()));
    doc.insert(
        "schema".into(),
        serde_json::to_value(dataset.schema()).expect("schema is always serializable"),
    );
    let rows: Vec<Value> = dataset
        .points()
        .iter()
        .map(|row| {
            Value::Array(
                row.iter()
                    .zip(dataset.schema())
                    .map(|(v, a)| cell_json(v, a))
                    .collect(),
            )
        })
        .collect();
    doc.insert("rows".into(), Value::Array(rows));
    if let Some(labels) = dataset.labels() {
        doc.insert("labels".into(), json!(labels));
    }
    if let Some(truth) = dataset.ground_truth() {
        doc.insert("metadata".into(), json!({ "groundTruth": truth }));
    }
    Value::Object(doc)
}

pub fn to_json_bytes(dataset: &Dataset) -> Vec<u8> {
    serde_json::to_vec(&to_json_value(dataset)).expect("dataset JSON is always serializable")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_two_scalars_three_rows() {
        let doc = br#"{"schema":[{"name":"a","kind":"scalar"},{"name":"b","kind":"scalar"}],
                       "rows":[[1,2],[3,4],[5,6.5]]}"#;
        let d = parse_dataset(doc, DatasetFormat::JsonV1).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.schema().len(), 2);
        assert_eq!(d.point(2)[1], AttributeValue::Scalar(6.5));
        let again = parse_dataset(&to_json_bytes(&d), DatasetFormat::JsonV1).unwrap();
        assert_eq!(again, d);
    }

    #[test]
    fn json_all_kinds() {
        let doc = br#"{"schema":[
            {"name":"p","kind":"point","dim":2},
            {"name":"c","kind":"categorical","universe":["a","b","c"]},
            {"name":"f","kind":"function","grid":[0,0.5,1]},
            {"name":"t","kind":"curve","dim":2,"timePoints":2}],
          "rows":[
            [[0,0],["a"],[1,2,3],[[0,0],[1,1]]],
            [[1,0],"b",[1,2,3],[[0,1],[1,2]]],
            [[0,1],["a","c"],[1,2,3],[[0,2],[1,3]]]],
          "labels":["x","y","z"]}"#;
        let d = parse_dataset(doc, DatasetFormat::JsonV1).unwrap();
        assert_eq!(d.labels().unwrap()[1], "y");
        match &d.point(2)[1] {
            AttributeValue::CategoricalSet(s) => assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 2]),
            other => panic!("unexpected {other:?}"),
        }
        let again = parse_dataset(&to_json_bytes(&d), DatasetFormat::JsonV1).unwrap();
        assert_eq!(again, d);
    }

    #[test]
    fn json_missing_value_rejected() {
        let doc = br#"{"schema":[{"name":"a","kind":"scalar"}],"rows":[[1],[null],[3]]}"#;
        let err = parse_dataset(doc, DatasetFormat::JsonV1).unwrap_err();
        assert!(matches!(err, DatasetError::Missing { row: 1, .. }), "{err}");
    }

    #[test]
    fn json_ragged_function_rejected() {
        let doc = br#"{"schema":[{"name":"f","kind":"function","grid":[0,1]}],
                       "rows":[[[1,2]],[[1,2,3]],[[0,0]]]}"#;
        let err = parse_dataset(doc, DatasetFormat::JsonV1).unwrap_err();
        assert!(
            matches!(err, DatasetError::Ragged { row: 1, expected: 2, found: 3, .. }),
            "{err}"
        );
    }

    #[test]
    fn json_wrong_type_names_row_and_attribute() {
        let doc = br#"{"schema":[{"name":"a","kind":"scalar"}],"rows":[[1],["x"],[3]]}"#;
        let err = parse_dataset(doc, DatasetFormat::JsonV1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("`a`"), "{msg}");
    }

    #[test]
    fn csv_unknown_category() {
        let schema = vec![
            AttributeSchema::new("x", AttributeKind::Scalar),
            AttributeSchema::new(
                "c",
                AttributeKind::CategoricalSet {
                    universe: vec!["a".into(), "b".into(), "c".into()],
                },
            ),
        ];
        let csv = b"x,c\n1,a\n2,b|c\n3,z\n";
        let err = parse_dataset(csv, DatasetFormat::CsvWithSchema(schema)).unwrap_err();
        assert!(err.to_string().contains("unknown category"), "{err}");
    }

    #[test]
    fn csv_with_sidecar_schema() {
        let schema = parse_schema(
            br#"{"schema":[{"name":"x","kind":"scalar"},
                {"name":"c","kind":"categorical","universe":["a","b"]}]}"#,
        )
        .unwrap();
        let csv = b"label,c,x\nfirst,a,1\nsecond,a|b,2.5\nthird,{},3\n";
        let d = parse_dataset(csv, DatasetFormat::CsvWithSchema(schema)).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.point(1)[0], AttributeValue::Scalar(2.5));
        assert_eq!(d.labels().unwrap(), ["first", "second", "third"]);
        match &d.point(2)[1] {
            AttributeValue::CategoricalSet(s) => assert!(s.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_empty_cell_is_missing() {
        let schema = vec![AttributeSchema::new("x", AttributeKind::Scalar)];
        let err = parse_dataset(b"x\n1\n\"\"\n3\n", DatasetFormat::CsvWithSchema(schema)).unwrap_err();
        assert!(matches!(err, DatasetError::Missing { .. }), "{err}");
    }

    #[test]
    fn csv_rejects_functions() {
        let schema = vec![AttributeSchema::new("f", AttributeKind::Function { grid: vec![0.0, 1.0] })];
        let err = parse_dataset(b"f\n", DatasetFormat::CsvWithSchema(schema)).unwrap_err();
        assert!(matches!(err, DatasetError::InvalidSchema(_)));
    }

    #[test]
    fn schema_invariants() {
        let dup = AttributeSchema::new(
            "c",
            AttributeKind::CategoricalSet {
                universe: vec!["a".into(), "a".into()],
            },
        );
        assert!(dup.validate().is_err());
        let grid = AttributeSchema::new("f", AttributeKind::Function { grid: vec![0.0, 0.0] });
        assert!(grid.validate().is_err());
        let dim = AttributeSchema::new("p", AttributeKind::Point { dim: 4 });
        assert!(dim.validate().is_err());
        let tp = AttributeSchema::new("t", AttributeKind::Curve { dim: 2, time_points: 1 });
        assert!(tp.validate().is_err());
    }

    #[test]
    fn too_few_points() {
        let doc = br#"{"schema":[{"name":"a","kind":"scalar"}],"rows":[[1],[2]]}"#;
        assert!(matches!(
            parse_dataset(doc, DatasetFormat::JsonV1),
            Err(DatasetError::TooFewPoints(2))
        ));
    }
}
