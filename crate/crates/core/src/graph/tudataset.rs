//! Reader and writer for the TU plain-text graph dataset layout.
//!
//! A dataset `DS` is a directory holding `DS_A.txt` (1-indexed global edge
//! list, both directions), `DS_graph_indicator.txt` (graph id per node),
//! `DS_graph_labels.txt` (class per graph) and optionally
//! `DS_node_labels.txt` / `DS_node_attributes.txt`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Graph, GraphDataset, RawNodeData};
use crate::error::{GpaError, Result};

struct TextFile {
    name: String,
    contents: String,
}

impl TextFile {
    fn open(path: &Path, required: bool) -> Result<Option<Self>> {
        if !path.is_file() {
            return if required {
                Err(GpaError::FormatMissing(path.to_path_buf()))
            } else {
                Ok(None)
            };
        }
        Ok(Some(Self {
            name: path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            contents: fs::read_to_string(path)?,
        }))
    }

    /// Non-blank lines split on commas and whitespace, with 1-based line numbers.
    fn rows(&self) -> impl Iterator<Item = (usize, Vec<&str>)> {
        self.contents.lines().enumerate().filter_map(|(i, line)| {
            let tokens: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .collect();
            (!tokens.is_empty()).then_some((i + 1, tokens))
        })
    }

    fn error(&self, line: usize, msg: impl Into<String>) -> GpaError {
        GpaError::ParseError {
            file: self.name.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn int(&self, line: usize, token: &str) -> Result<i64> {
        token
            .parse::<i64>()
            .map_err(|_| self.error(line, format!("expected an integer, found `{token}`")))
    }

    fn real(&self, line: usize, token: &str) -> Result<f64> {
        token
            .parse::<f64>()
            .map_err(|_| self.error(line, format!("expected a number, found `{token}`")))
    }

    /// One integer per line.
    fn int_column(&self) -> Result<Vec<(usize, i64)>> {
        self.rows()
            .map(|(line, tokens)| {
                if tokens.len() != 1 {
                    return Err(self.error(line, "expected exactly one value"));
                }
                Ok((line, self.int(line, tokens[0])?))
            })
            .collect()
    }
}

fn file_path(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

/// Parses a TU-format dataset. Node features are the node attributes when
/// present and empty otherwise; use [`super::build_features`] to construct
/// one-hot inputs from the retained raw data.
pub fn parse_tudataset(dir: impl AsRef<Path>, name: &str) -> Result<GraphDataset> {
    let dir = dir.as_ref();
    let edges_file = TextFile::open(&file_path(dir, name, "A"), true)?.unwrap();
    let indicator_file = TextFile::open(&file_path(dir, name, "graph_indicator"), true)?.unwrap();
    let labels_file = TextFile::open(&file_path(dir, name, "graph_labels"), true)?.unwrap();
    let node_labels_file = TextFile::open(&file_path(dir, name, "node_labels"), false)?;
    let attributes_file = TextFile::open(&file_path(dir, name, "node_attributes"), false)?;

    let graph_labels = labels_file.int_column()?;
    let num_graphs = graph_labels.len();
    if num_graphs == 0 {
        return Err(GpaError::InvalidDataset(format!("{name} has no graph labels")));
    }

    // node -> (graph, local index)
    let indicator = indicator_file.int_column()?;
    let mut node_graph = Vec::with_capacity(indicator.len());
    let mut node_local = Vec::with_capacity(indicator.len());
    let mut graph_sizes = vec![0usize; num_graphs];
    for &(line, gid) in &indicator {
        if gid < 1 || gid as usize > num_graphs {
            return Err(indicator_file.error(line, format!("graph id {gid} outside 1..={num_graphs}")));
        }
        let g = gid as usize - 1;
        node_graph.push(g);
        node_local.push(graph_sizes[g]);
        graph_sizes[g] += 1;
    }
    if let Some(g) = graph_sizes.iter().position(|&s| s == 0) {
        return Err(GpaError::InvalidDataset(format!("graph {} has no nodes", g + 1)));
    }
    let num_nodes_total = node_graph.len();

    let mut graph_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    let mut dropped_self_loops = 0usize;
    for (line, tokens) in edges_file.rows() {
        if tokens.len() != 2 {
            return Err(edges_file.error(line, "expected two node ids"));
        }
        let mut ends = [0usize; 2];
        for (slot, token) in ends.iter_mut().zip(&tokens) {
            let id = edges_file.int(line, token)?;
            if id < 1 || id as usize > num_nodes_total {
                return Err(edges_file.error(line, format!("node id {id} outside 1..={num_nodes_total}")));
            }
            *slot = id as usize - 1;
        }
        let [u, v] = ends;
        if node_graph[u] != node_graph[v] {
            return Err(GpaError::CrossGraphEdge {
                line,
                u: u + 1,
                v: v + 1,
            });
        }
        if u == v {
            dropped_self_loops += 1;
            continue;
        }
        graph_edges[node_graph[u]].push((node_local[u], node_local[v]));
    }
    if dropped_self_loops > 0 {
        log::warn!("{name}: dropped {dropped_self_loops} self-loop entries");
    }

    let node_labels = match &node_labels_file {
        Some(f) => {
            let column = f.int_column()?;
            if column.len() != num_nodes_total {
                return Err(GpaError::InvalidDataset(format!(
                    "{} has {} rows for {num_nodes_total} nodes",
                    f.name,
                    column.len()
                )));
            }
            Some(column.into_iter().map(|(_, v)| v).collect::<Vec<_>>())
        }
        None => None,
    };

    let (attributes, attribute_dim) = match &attributes_file {
        Some(f) => {
            let mut values = Vec::new();
            let mut width = None;
            let mut rows = 0usize;
            for (line, tokens) in f.rows() {
                match width {
                    None => width = Some(tokens.len()),
                    Some(w) if w != tokens.len() => {
                        return Err(f.error(line, format!("expected {w} values")));
                    }
                    _ => {}
                }
                for t in tokens {
                    values.push(f.real(line, t)?);
                }
                rows += 1;
            }
            if rows != num_nodes_total {
                return Err(GpaError::InvalidDataset(format!(
                    "{} has {rows} rows for {num_nodes_total} nodes",
                    f.name
                )));
            }
            (Some(values), width.unwrap_or(0))
        }
        None => (None, 0),
    };

    // dense class ids by sorted original value
    let class_ids: BTreeMap<i64, usize> = graph_labels
        .iter()
        .map(|&(_, l)| l)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();

    // global node ranges per graph, in file order
    let mut members: Vec<Vec<usize>> = graph_sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
    for (node, &g) in node_graph.iter().enumerate() {
        members[g].push(node);
    }

    let mut graphs = Vec::with_capacity(num_graphs);
    let mut raw = Vec::with_capacity(num_graphs);
    for g in 0..num_graphs {
        let nodes = &members[g];
        let raw_attrs = attributes.as_ref().map(|a| {
            nodes
                .iter()
                .flat_map(|&v| a[v * attribute_dim..(v + 1) * attribute_dim].iter().copied())
                .collect::<Vec<_>>()
        });
        let features = raw_attrs.clone().unwrap_or_default();
        let label = class_ids[&graph_labels[g].1];
        graphs.push(Graph::from_edges(
            nodes.len(),
            &graph_edges[g],
            attribute_dim,
            features,
            Some(label),
        )?);
        raw.push(RawNodeData {
            labels: node_labels.as_ref().map(|l| nodes.iter().map(|&v| l[v]).collect()),
            attributes: raw_attrs,
            attribute_dim,
        });
    }

    let mut dataset = GraphDataset::new(name, graphs, class_ids.len())?;
    dataset.raw = raw;
    dataset.dropped_self_loops = dropped_self_loops;
    Ok(dataset)
}

/// Writes `dataset` in TU layout. Raw node labels/attributes are written when
/// retained; otherwise non-empty feature matrices are written as attributes.
/// Graph labels are written as their dense class ids (unlabeled graphs as 0).
pub fn write_tudataset(dataset: &GraphDataset, dir: impl AsRef<Path>, name: &str) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut edges = String::new();
    let mut indicator = String::new();
    let mut labels = String::new();
    let mut node_labels = String::new();
    let mut attributes = String::new();
    let has_raw = dataset.raw.len() == dataset.len();
    let write_labels = has_raw && dataset.raw.iter().all(|r| r.labels.is_some());
    let write_raw_attrs = has_raw && dataset.raw.iter().all(|r| r.attributes.is_some());
    let write_features = !has_raw && dataset.feature_dim > 0;

    let mut offset = 0usize;
    for (gi, g) in dataset.graphs.iter().enumerate() {
        for u in 0..g.num_nodes() {
            for &v in g.neighbors(u) {
                writeln!(edges, "{}, {}", offset + u + 1, offset + v + 1).unwrap();
            }
            writeln!(indicator, "{}", gi + 1).unwrap();
        }
        writeln!(labels, "{}", g.label().unwrap_or(0)).unwrap();
        if write_labels {
            for l in dataset.raw[gi].labels.as_ref().unwrap() {
                writeln!(node_labels, "{l}").unwrap();
            }
        }
        let attr_rows: Option<(&[f64], usize)> = if write_raw_attrs {
            let r = &dataset.raw[gi];
            Some((r.attributes.as_deref().unwrap(), r.attribute_dim))
        } else if write_features {
            Some((g.features(), g.feature_dim()))
        } else {
            None
        };
        if let Some((values, dim)) = attr_rows {
            for row in values.chunks(dim.max(1)) {
                let line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
                writeln!(attributes, "{}", line.join(", ")).unwrap();
            }
        }
        offset += g.num_nodes();
    }
    fs::write(file_path(dir, name, "A"), edges)?;
    fs::write(file_path(dir, name, "graph_indicator"), indicator)?;
    fs::write(file_path(dir, name, "graph_labels"), labels)?;
    if write_labels {
        fs::write(file_path(dir, name, "node_labels"), node_labels)?;
    }
    if write_raw_attrs || write_features {
        fs::write(file_path(dir, name, "node_attributes"), attributes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, suffix: &str, body: &str) {
        fs::write(file_path(dir, name, suffix), body).unwrap();
    }

    /// Triangle (nodes 1-3) and a 2-node path (nodes 4-5).
    fn toy_fixture(dir: &Path) {
        write(dir, "TOY", "A", "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n");
        write(dir, "TOY", "graph_indicator", "1\n1\n1\n2\n2\n");
        write(dir, "TOY", "graph_labels", "1\n-1\n");
        write(dir, "TOY", "node_labels", "0\n1\n2\n0\n0\n");
    }

    #[test]
    fn parses_toy_fixture() {
        let dir = tempfile::tempdir().unwrap();
        toy_fixture(dir.path());
        let ds = parse_tudataset(dir.path(), "TOY").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.num_classes, 2);
        // -1 < 1, so -1 maps to class 0
        assert_eq!(ds.graphs[0].label(), Some(1));
        assert_eq!(ds.graphs[1].label(), Some(0));
        let s = ds.stats();
        assert_eq!(s.avg_nodes, 2.5);
        assert_eq!(s.avg_edges, 2.0);
        assert_eq!(ds.raw[0].labels.as_deref(), Some(&[0, 1, 2][..]));
        for g in &ds.graphs {
            g.validate().unwrap();
        }
    }

    #[test]
    fn single_node_no_edges() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "ONE", "A", "");
        write(dir.path(), "ONE", "graph_indicator", "1\n");
        write(dir.path(), "ONE", "graph_labels", "0\n");
        let ds = parse_tudataset(dir.path(), "ONE").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.graphs[0].num_nodes(), 1);
        assert_eq!(ds.graphs[0].num_edges(), 0);
    }

    #[test]
    fn missing_mandatory_file() {
        let dir = tempfile::tempdir().unwrap();
        toy_fixture(dir.path());
        fs::remove_file(file_path(dir.path(), "TOY", "graph_labels")).unwrap();
        assert!(matches!(
            parse_tudataset(dir.path(), "TOY"),
            Err(GpaError::FormatMissing(_))
        ));
    }

    #[test]
    fn cross_graph_edge_rejected() {
        let dir = tempfile::tempdir().unwrap();
        toy_fixture(dir.path());
        write(dir.path(), "TOY", "A", "1, 2\n2, 1\n3, 4\n");
        match parse_tudataset(dir.path(), "TOY") {
            Err(GpaError::CrossGraphEdge { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_integer_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        toy_fixture(dir.path());
        write(dir.path(), "TOY", "graph_indicator", "1\n1\nx\n2\n2\n");
        match parse_tudataset(dir.path(), "TOY") {
            Err(GpaError::ParseError { line, file, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(file, "TOY_graph_indicator.txt");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_and_self_loops_cleaned() {
        let dir = tempfile::tempdir().unwrap();
        toy_fixture(dir.path());
        write(dir.path(), "TOY", "A", "1, 2\n2, 1\n1, 2\n1, 1\n4, 5\n5, 4\n");
        let ds = parse_tudataset(dir.path(), "TOY").unwrap();
        assert_eq!(ds.graphs[0].num_edges(), 1);
        assert_eq!(ds.dropped_self_loops, 1);
    }

    #[test]
    fn attributes_become_features() {
        let dir = tempfile::tempdir().unwrap();
        toy_fixture(dir.path());
        write(
            dir.path(),
            "TOY",
            "node_attributes",
            "0.5, 1\n1.5, 2\n2.5, 3\n3.5, 4\n4.5, 5\n",
        );
        let ds = parse_tudataset(dir.path(), "TOY").unwrap();
        assert_eq!(ds.feature_dim, 2);
        assert_eq!(ds.graphs[1].feature_row(1), &[4.5, 5.0]);
    }

    #[test]
    fn roundtrip_toy() {
        let dir = tempfile::tempdir().unwrap();
        toy_fixture(dir.path());
        let ds = parse_tudataset(dir.path(), "TOY").unwrap();
        let out = tempfile::tempdir().unwrap();
        write_tudataset(&ds, out.path(), "TOY").unwrap();
        assert_eq!(parse_tudataset(out.path(), "TOY").unwrap(), ds);
    }
}
