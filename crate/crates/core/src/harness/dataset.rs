use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{BoundingBox, Query, TaskKind};

/// Reference answer: text for VQA, a box for grounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gold {
    Box(BoundingBox),
    Text(String),
}

impl Gold {
    pub fn display(&self) -> String {
        match self {
            Gold::Text(t) => t.clone(),
            Gold::Box(b) => b.to_csv(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub id: String,
    pub query: String,
    /// Scene or image reference, resolved by the toolkit provider.
    pub image: String,
    pub task: TaskKind,
    pub gold: Gold,
}

impl DatasetRow {
    pub fn validate(&self) -> Result<()> {
        let fail = |message: &str| Err(Error::Dataset { id: self.id.clone(), message: message.to_string() });
        if self.id.trim().is_empty() {
            return fail("empty id");
        }
        if self.query.trim().is_empty() {
            return fail("empty query");
        }
        match (&self.task, &self.gold) {
            (TaskKind::Vqa, Gold::Text(t)) if !t.trim().is_empty() => Ok(()),
            (TaskKind::Vqa, _) => fail("vqa rows need a non-empty text gold answer"),
            (TaskKind::Grounding, Gold::Box(_)) => Ok(()),
            (TaskKind::Grounding, _) => fail("grounding rows need a gold box [x1, y1, x2, y2]"),
        }
    }

    pub fn to_query(&self) -> Result<Query> {
        Query::new(&self.query, &self.image, self.task)
            .map_err(|e| Error::Dataset { id: self.id.clone(), message: e.to_string() })
    }
}

/// Parses JSONL rows; errors name the offending row id (or line number).
pub fn parse_dataset(text: &str) -> Result<Vec<DatasetRow>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::Dataset { id: format!("line {}", n + 1), message: e.to_string() })?;
        let id = value
            .get("id")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .unwrap_or_else(|| format!("line {}", n + 1));
        let row: DatasetRow =
            serde_json::from_value(value).map_err(|e| Error::Dataset { id: id.clone(), message: e.to_string() })?;
        row.validate()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read dataset {}: {e}", path.display())))?;
    parse_dataset(&text)
}

pub fn write_dataset(path: impl AsRef<Path>, rows: &[DatasetRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_tasks() {
        let text = r#"{"id": "a", "query": "What color is the bus?", "image": "s.json", "task": "vqa", "gold": "yellow"}

{"id": "b", "query": "the left girl", "image": "s.json", "task": "grounding", "gold": [10, 10, 20, 30]}"#;
        let rows = parse_dataset(text).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].gold, Gold::Box(BoundingBox::new(10.0, 10.0, 20.0, 30.0).unwrap()));
    }

    #[test]
    fn mismatched_gold_names_row() {
        let text = r#"{"id": "row-7", "query": "q", "image": "s.json", "task": "grounding", "gold": "yellow"}"#;
        match parse_dataset(text) {
            Err(Error::Dataset { id, .. }) => assert_eq!(id, "row-7"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_json_names_line() {
        let text = "{\"id\": \"ok\", \"query\": \"q\", \"image\": \"s\", \"task\": \"vqa\", \"gold\": \"x\"}\n{oops";
        match parse_dataset(text) {
            Err(Error::Dataset { id, .. }) => assert_eq!(id, "line 2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn write_then_read() {
        let rows = parse_dataset(r#"{"id": "a", "query": "q?", "image": "s.json", "task": "vqa", "gold": "two"}"#).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_dataset(&path, &rows).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), rows);
    }
}
