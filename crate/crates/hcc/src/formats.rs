//! Taxonomy documents and score tables.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use hcc_core::{LeafScores, NodeId, SimplexPolicy, Taxonomy};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// On-disk taxonomy: node names plus parent-to-child edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxonomyDoc {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

impl TaxonomyDoc {
    pub fn from_taxonomy(t: &Taxonomy) -> Self {
        Self {
            nodes: t.names().to_vec(),
            edges: t
                .edges()
                .map(|(p, c)| (t.name(p).to_string(), t.name(c).to_string()))
                .collect(),
        }
    }

    pub fn build(&self) -> Result<Taxonomy, hcc_core::TaxonomyError> {
        Taxonomy::new(&self.nodes, &self.edges)
    }
}

pub fn parse_taxonomy(text: &str, path: &Path) -> Result<Taxonomy, CliError> {
    let doc: TaxonomyDoc = serde_json::from_str(text)
        .map_err(|e| CliError::input(path, format!("invalid taxonomy document: {e}")))?;
    doc.build()
        .map_err(|e| CliError::input(path, format!("invalid taxonomy: {e}")))
}

pub fn load_taxonomy(path: &Path) -> Result<Taxonomy, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_taxonomy(&text, path)
}

/// One validated row of a score table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub scores: LeafScores,
    pub true_leaf: Option<NodeId>,
}

impl ScoreRow {
    pub fn instance_id(&self) -> &str {
        self.scores.instance_id()
    }
}

/// Validated score table, columns reordered to the taxonomy's leaf order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
    pub has_truth: bool,
}

impl ScoreTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// True leaves of every row; fails if the table has no truth column.
    pub fn truths(&self, path: &Path) -> Result<Vec<NodeId>, CliError> {
        if !self.has_truth {
            return Err(CliError::input(path, "score table has no true_leaf column"));
        }
        Ok(self
            .rows
            .iter()
            .map(|r| r.true_leaf.expect("truth column present"))
            .collect())
    }
}

const ID_COLUMN: &str = "instance_id";
const TRUTH_COLUMN: &str = "true_leaf";

/// Reads a score table whose header is `instance_id[,true_leaf],<leaf names>`
/// with the leaf columns in any order.
pub fn parse_scores<R: std::io::Read>(
    reader: R,
    path: &Path,
    t: &Taxonomy,
    renormalize: bool,
) -> Result<ScoreTable, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| CliError::input(path, format!("unreadable header: {e}")))?
        .clone();
    let err = |msg: String| CliError::input(path, msg);

    let mut id_col = None;
    let mut truth_col = None;
    // position in the file -> leaf column in taxonomy order
    let mut leaf_cols: Vec<(usize, usize)> = Vec::new();
    let mut seen = vec![false; t.num_leaves()];
    for (i, name) in header.iter().enumerate() {
        match name {
            ID_COLUMN if id_col.is_none() => id_col = Some(i),
            TRUTH_COLUMN if truth_col.is_none() => truth_col = Some(i),
            _ => {
                let leaf = t
                    .id(name)
                    .and_then(|v| t.leaf_column(v))
                    .ok_or_else(|| err(format!("column `{name}` is not a leaf of the taxonomy")))?;
                if std::mem::replace(&mut seen[leaf], true) {
                    return Err(err(format!("column `{name}` appears twice")));
                }
                leaf_cols.push((i, leaf));
            }
        }
    }
    let id_col = id_col.ok_or_else(|| err(format!("missing `{ID_COLUMN}` column")))?;
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(err(format!(
            "missing column for leaf `{}`",
            t.name(t.leaves()[missing])
        )));
    }

    let policy = if renormalize {
        SimplexPolicy::Renormalize
    } else {
        SimplexPolicy::Reject
    };
    let mut rows = Vec::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    for (r, record) in rdr.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| err(format!("line {line}: {e}")))?;
        let id = record[id_col].to_string();
        let at = |msg: String| err(format!("line {line} (instance `{id}`): {msg}"));
        if let Some(prev) = ids.insert(id.clone(), line) {
            return Err(at(format!(
                "duplicate instance id, first seen on line {prev}"
            )));
        }
        let mut values = vec![0.0; t.num_leaves()];
        for &(i, leaf) in &leaf_cols {
            let cell = &record[i];
            values[leaf] = cell
                .parse::<f64>()
                .map_err(|_| at(format!("`{}` is not a number: `{cell}`", &header[i])))?;
        }
        let true_leaf = match truth_col {
            Some(c) => {
                let name = &record[c];
                let v = t
                    .id(name)
                    .filter(|&v| t.is_leaf(v))
                    .ok_or_else(|| at(format!("true_leaf `{name}` is not a leaf")))?;
                Some(v)
            }
            None => None,
        };
        let scores =
            LeafScores::new(t, values, id.clone(), policy).map_err(|e| at(e.to_string()))?;
        rows.push(ScoreRow { scores, true_leaf });
    }
    if rows.is_empty() {
        return Err(err("score table has no rows".to_string()));
    }
    Ok(ScoreTable {
        rows,
        has_truth: truth_col.is_some(),
    })
}

pub fn load_scores(path: &Path, t: &Taxonomy, renormalize: bool) -> Result<ScoreTable, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_scores(std::io::BufReader::new(file), path, t, renormalize)
}

/// Writes rows in the taxonomy's leaf order with a truth column when every
/// row has one.
pub fn write_scores<W: Write>(w: W, t: &Taxonomy, rows: &[ScoreRow]) -> csv::Result<()> {
    let with_truth = rows.iter().all(|r| r.true_leaf.is_some());
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![ID_COLUMN];
    if with_truth {
        header.push(TRUTH_COLUMN);
    }
    header.extend(t.leaves().iter().map(|&l| t.name(l)));
    wtr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.instance_id().to_string()];
        if let (true, Some(leaf)) = (with_truth, r.true_leaf) {
            rec.push(t.name(leaf).to_string());
        }
        rec.extend(r.scores.values().iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
