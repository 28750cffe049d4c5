//! Undirected graphs with binary sensitive attributes, file ingestion and
//! adjacency-row features.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary group label of a node under one sensitive attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub fn as_char(self) -> char {
        match self {
            Group::A => 'A',
            Group::B => 'B',
        }
    }
}

/// Undirected simple graph on nodes `0..n` with raw and binarized attributes.
///
/// Immutable once built apart from attribute installation; all mutators
/// return a fresh value.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    n: usize,
    // canonical (u < v), sorted, unique
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    raw: BTreeMap<String, Vec<String>>,
    attribute_names: Vec<String>,
    labels: BTreeMap<String, Vec<Group>>,
}

impl AttributedGraph {
    /// Builds a graph from unordered pairs. Duplicates (in either
    /// orientation) collapse; self-loops and out-of-range endpoints are
    /// rejected.
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in pairs {
            if u >= n || v >= n {
                return Err(Error::InvalidParam(format!(
                    "edge ({u},{v}) has an endpoint outside [0,{n})"
                )));
            }
            if u == v {
                return Err(Error::InvalidParam(format!("self-loop on node {u}")));
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(Self::from_canonical(n, set.into_iter().collect()))
    }

    fn from_canonical(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self {
            n,
            edges,
            adjacency,
            raw: BTreeMap::new(),
            attribute_names: Vec::new(),
            labels: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(u, v)` with `u < v`, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Names of binarized attributes, in installation order.
    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn raw_attribute_names(&self) -> impl Iterator<Item = &str> {
        self.raw.keys().map(String::as_str)
    }

    pub fn raw_attribute(&self, name: &str) -> Result<&[String]> {
        self.raw
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    pub fn labels(&self, attr: &str) -> Result<&[Group]> {
        self.labels
            .get(attr)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownAttribute(attr.to_string()))
    }

    /// `(|A|, |B|)` for a binarized attribute.
    pub fn group_sizes(&self, attr: &str) -> Result<(usize, usize)> {
        let labels = self.labels(attr)?;
        let a = labels.iter().filter(|&&g| g == Group::A).count();
        Ok((a, labels.len() - a))
    }

    /// Ascending A-nodes and B-nodes of a binarized attribute.
    pub fn group_nodes(&self, attr: &str) -> Result<(Vec<usize>, Vec<usize>)> {
        let labels = self.labels(attr)?;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (u, g) in labels.iter().enumerate() {
            match g {
                Group::A => a.push(u),
                Group::B => b.push(u),
            }
        }
        Ok((a, b))
    }

    pub fn with_raw_attribute(mut self, name: &str, values: Vec<String>) -> Result<Self> {
        if values.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: values.len(),
            });
        }
        self.raw.insert(name.to_string(), values);
        Ok(self)
    }

    /// Installs binary labels under `name`, replacing any previous labels.
    pub fn with_labels(mut self, name: &str, labels: Vec<Group>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: labels.len(),
            });
        }
        if !self.labels.contains_key(name) {
            self.attribute_names.push(name.to_string());
        }
        self.labels.insert(name.to_string(), labels);
        Ok(self)
    }

    /// Induced subgraph on `keep` (any order; duplicates ignored). Node `keep[i]`
    /// becomes node `i` after sorting; attributes are carried over.
    pub fn induced_subgraph(&self, keep: &[usize]) -> Result<(Self, Vec<usize>)> {
        let kept: Vec<usize> = keep
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if let Some(&bad) = kept.iter().find(|&&u| u >= self.n) {
            return Err(Error::UnknownNode(bad.to_string()));
        }
        let mut remap = vec![usize::MAX; self.n];
        for (new, &old) in kept.iter().enumerate() {
            remap[old] = new;
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&(u, v)| remap[u] != usize::MAX && remap[v] != usize::MAX)
            .map(|&(u, v)| (remap[u], remap[v]))
            .collect();
        let mut sub = Self::from_canonical(kept.len(), edges);
        for (name, values) in &self.raw {
            sub.raw.insert(
                name.clone(),
                kept.iter().map(|&u| values[u].clone()).collect(),
            );
        }
        for name in &self.attribute_names {
            let labels = &self.labels[name];
            sub.attribute_names.push(name.clone());
            sub.labels
                .insert(name.clone(), kept.iter().map(|&u| labels[u]).collect());
        }
        Ok((sub, kept))
    }
}

/// Rule mapping a raw attribute value to a group; values satisfying the rule
/// go to [`Group::A`].
///
/// Textual form: `le:<number>`, `ge:<number>`, `eq:<value>` or
/// `in:<v1>,<v2>,...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Predicate {
    AtMost(f64),
    AtLeast(f64),
    Equals(String),
    OneOf(Vec<String>),
}

impl Predicate {
    /// `None` when the value cannot be evaluated (non-numeric for a numeric rule).
    pub fn classify(&self, value: &str) -> Option<Group> {
        let hit = match self {
            Predicate::AtMost(t) => value.trim().parse::<f64>().ok()? <= *t,
            Predicate::AtLeast(t) => value.trim().parse::<f64>().ok()? >= *t,
            Predicate::Equals(s) => value.trim() == s,
            Predicate::OneOf(set) => set.iter().any(|s| s == value.trim()),
        };
        Some(if hit { Group::A } else { Group::B })
    }
}

impl FromStr for Predicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (op, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("predicate `{s}` must look like `op:value`")))?;
        let number = |a: &str| {
            a.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("predicate `{s}`: `{a}` is not a number")))
        };
        match op.trim() {
            "le" => Ok(Predicate::AtMost(number(arg)?)),
            "ge" => Ok(Predicate::AtLeast(number(arg)?)),
            "eq" => Ok(Predicate::Equals(arg.trim().to_string())),
            "in" => Ok(Predicate::OneOf(
                arg.split(',').map(|v| v.trim().to_string()).collect(),
            )),
            other => Err(Error::Config(format!(
                "predicate `{s}`: unknown operator `{other}` (expected le, ge, eq or in)"
            ))),
        }
    }
}

impl TryFrom<String> for Predicate {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Predicate> for String {
    fn from(p: Predicate) -> String {
        p.to_string()
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::AtMost(t) => write!(f, "le:{t}"),
            Predicate::AtLeast(t) => write!(f, "ge:{t}"),
            Predicate::Equals(v) => write!(f, "eq:{v}"),
            Predicate::OneOf(vs) => write!(f, "in:{}", vs.join(",")),
        }
    }
}

/// Applies `predicate` to the raw column `attr` and installs the resulting
/// labels under the same name.
pub fn binarize_attribute(
    g: AttributedGraph,
    attr: &str,
    predicate: &Predicate,
) -> Result<AttributedGraph> {
    let labels = g
        .raw_attribute(attr)?
        .iter()
        .enumerate()
        .map(|(node, value)| {
            predicate.classify(value).ok_or_else(|| Error::Predicate {
                attr: attr.to_string(),
                node,
                value: value.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    g.with_labels(attr, labels)
}

/// Adjacency-row features: row `u` is the 0/1 indicator of `u`'s neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn row(&self, u: usize) -> ndarray::ArrayView1<'_, f64> {
        self.0.row(u)
    }
}

pub fn feature_matrix(g: &AttributedGraph) -> FeatureMatrix {
    let mut x = Array2::zeros((g.n(), g.n()));
    for &(u, v) in g.edges() {
        x[[u, v]] = 1.0;
        x[[v, u]] = 1.0;
    }
    FeatureMatrix(x)
}

/// Dense id → original identifier, as written to the `original_id,dense_id`
/// sidecar.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    original: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn identity(n: usize) -> Self {
        let mut map = Self::default();
        for u in 0..n {
            map.intern(&u.to_string());
        }
        map
    }

    fn intern(&mut self, id: &str) -> usize {
        if let Some(&d) = self.index.get(id) {
            return d;
        }
        let d = self.original.len();
        self.original.push(id.to_string());
        self.index.insert(id.to_string(), d);
        d
    }

    pub fn len(&self) -> usize {
        self.original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.original.is_empty()
    }

    pub fn dense(&self, original: &str) -> Option<usize> {
        self.index.get(original).copied()
    }

    pub fn original(&self, dense: usize) -> Option<&str> {
        self.original.get(dense).map(String::as_str)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["original_id", "dense_id"])?;
        for (d, o) in self.original.iter().enumerate() {
            w.write_record([o.as_str(), &d.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut pairs = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse_err = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                msg: msg.to_string(),
            };
            let orig = rec.get(0).ok_or_else(|| parse_err("missing original_id"))?;
            let dense: usize = rec
                .get(1)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| parse_err("dense_id is not a non-negative integer"))?;
            pairs.push((dense, orig.to_string()));
        }
        pairs.sort();
        let mut map = Self::default();
        for (expect, (dense, orig)) in pairs.into_iter().enumerate() {
            if dense != expect {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 0,
                    msg: format!("dense ids are not contiguous (missing {expect})"),
                });
            }
            map.intern(&orig);
        }
        Ok(map)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Reads a whitespace-separated edge list of dense non-negative integer ids.
///
/// Blank lines and `#` comments are skipped; a `#n <count>` header fixes the
/// node count (otherwise `1 + max id`).
pub fn load_edge_list(path: &Path) -> Result<AttributedGraph> {
    parse_edge_list(open(path)?, path)
}

pub fn parse_edge_list(reader: impl Read, path: &Path) -> Result<AttributedGraph> {
    let mut declared = None;
    let mut max_id: Option<usize> = None;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(count) = rest.strip_prefix('n') {
                let count = count.trim();
                if !count.is_empty() {
                    declared = Some(count.parse::<usize>().map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno,
                        msg: format!("bad node-count header `{line}`"),
                    })?);
                }
            }
            continue;
        }
        let mut tokens = line.split_whitespace();
        let mut next = || -> Result<usize> {
            let tok = tokens.next().ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: "expected two node ids".into(),
            })?;
            tok.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: format!("`{tok}` is not a non-negative integer"),
            })
        };
        let (u, v) = (next()?, next()?);
        if tokens.next().is_some() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: "trailing tokens after edge".into(),
            });
        }
        if u == v {
            return Err(Error::SelfLoop {
                path: path.to_path_buf(),
                line: lineno,
                node: u,
            });
        }
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        pairs.push((u, v));
    }
    let seen = max_id.map_or(0, |m| m + 1);
    let n = match declared {
        Some(d) if d < seen => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("header declares {d} nodes but id {} appears", seen - 1),
            })
        }
        Some(d) => d,
        None => seen,
    };
    AttributedGraph::new(n, pairs)
}

/// Reads an edge list with arbitrary string ids, assigning dense ids in
/// order of first appearance.
pub fn load_edge_list_remapped(path: &Path) -> Result<(AttributedGraph, IdMap)> {
    let mut map = IdMap::default();
    let mut pairs = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "expected two node ids".into(),
            });
        }
        if toks[0] == toks[1] {
            return Err(Error::SelfLoop {
                path: path.to_path_buf(),
                line: i + 1,
                node: map.intern(toks[0]),
            });
        }
        pairs.push((map.intern(toks[0]), map.intern(toks[1])));
    }
    Ok((AttributedGraph::new(map.len(), pairs)?, map))
}

/// Writes the canonical edge list with a `#n` header so isolated nodes survive
/// a round trip.
pub fn write_edge_list(g: &AttributedGraph, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "#n {}", g.n())?;
        for &(u, v) in g.edges() {
            writeln!(w, "{u} {v}")?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

/// Reads `node_id,<attr>...` and stores every column verbatim.
///
/// With an `id_map`, `node_id` values are original identifiers; otherwise
/// they are dense ids.
pub fn load_attributes(
    path: &Path,
    g: AttributedGraph,
    id_map: Option<&IdMap>,
) -> Result<AttributedGraph> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("node_id") {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "header must start with `node_id`".into(),
        });
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut columns: Vec<Vec<Option<String>>> = vec![vec![None; g.n()]; names.len()];
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let raw_id = rec.get(0).unwrap_or_default();
        let node = match id_map {
            Some(map) => map.dense(raw_id),
            None => raw_id.parse::<usize>().ok(),
        }
        .filter(|&u| u < g.n())
        .ok_or_else(|| Error::UnknownNode(raw_id.to_string()))?;
        for (c, col) in columns.iter_mut().enumerate() {
            if col[node].is_some() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 2,
                    msg: format!("duplicate row for node {raw_id}"),
                });
            }
            col[node] = Some(rec.get(c + 1).unwrap_or_default().to_string());
        }
    }
    let mut g = g;
    for (name, col) in names.iter().zip(columns) {
        let values = col
            .into_iter()
            .enumerate()
            .map(|(u, v)| {
                v.ok_or_else(|| {
                    let label = id_map
                        .and_then(|m| m.original(u))
                        .map_or_else(|| u.to_string(), str::to_string);
                    Error::MissingNode(label)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        g = g.with_raw_attribute(name, values)?;
    }
    Ok(g)
}

/// Writes `node_id,<attr>...`. Binarized attributes are written as `A`/`B`;
/// raw-only columns verbatim.
pub fn write_attributes(g: &AttributedGraph, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut cols: Vec<(String, Vec<String>)> = Vec::new();
    for name in g.attribute_names() {
        let labels = g.labels(name)?;
        cols.push((
            name.clone(),
            labels.iter().map(|l| l.as_char().to_string()).collect(),
        ));
    }
    for name in g.raw_attribute_names() {
        if !g.attribute_names().iter().any(|a| a == name) {
            cols.push((name.to_string(), g.raw_attribute(name)?.to_vec()));
        }
    }
    let mut header = vec!["node_id".to_string()];
    header.extend(cols.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    for u in 0..g.n() {
        let mut row = vec![u.to_string()];
        row.extend(cols.iter().map(|(_, v)| v[u].clone()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<AttributedGraph> {
        parse_edge_list(text.as_bytes(), Path::new("mem"))
    }

    #[test]
    fn edge_list_basic() {
        let g = parse("0 1\n1 2").unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn edge_list_header_isolated_nodes() {
        let g = parse("#n 5\n0 1").unwrap();
        assert_eq!(g.n(), 5);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.degree(4), 0);
    }

    #[test]
    fn edge_list_self_loop() {
        match parse("0 0") {
            Err(Error::SelfLoop {
                line: 1, node: 0, ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn edge_list_bad_token_reports_line() {
        match parse("# comment\n0 1\n\n1 x") {
            Err(Error::Parse { line: 4, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn edge_list_collapses_duplicates() {
        let g = parse("0 1\n1 0\n0 1").unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    fn write_tmp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn attributes_verbatim() {
        let g = parse("0 1\n1 2").unwrap();
        let f = write_tmp("node_id,age\n0,18\n1,19\n2,20\n");
        let g = load_attributes(f.path(), g, None).unwrap();
        assert_eq!(g.raw_attribute("age").unwrap(), &["18", "19", "20"]);
    }

    #[test]
    fn attributes_missing_node() {
        let g = parse("0 1\n1 2").unwrap();
        let f = write_tmp("node_id,age\n0,18\n1,19\n");
        assert!(matches!(
            load_attributes(f.path(), g, None),
            Err(Error::MissingNode(ref n)) if n == "2"
        ));
    }

    #[test]
    fn attributes_unknown_node() {
        let g = parse("0 1\n1 2").unwrap();
        let f = write_tmp("node_id,age\n0,18\n1,19\n2,20\n99,21\n");
        assert!(matches!(
            load_attributes(f.path(), g, None),
            Err(Error::UnknownNode(ref n)) if n == "99"
        ));
    }

    fn with_ages(ages: &[&str]) -> AttributedGraph {
        AttributedGraph::new(ages.len(), [])
            .unwrap()
            .with_raw_attribute("age", ages.iter().map(|s| s.to_string()).collect())
            .unwrap()
    }

    #[test]
    fn binarize_age() {
        let g = binarize_attribute(
            with_ages(&["18", "19", "20"]),
            "age",
            &"le:19".parse().unwrap(),
        )
        .unwrap();
        assert_eq!(g.labels("age").unwrap(), &[Group::A, Group::A, Group::B]);
        assert_eq!(g.group_sizes("age").unwrap(), (2, 1));
    }

    #[test]
    fn binarize_all_a() {
        let g =
            binarize_attribute(with_ages(&["18", "18"]), "age", &Predicate::AtMost(19.0)).unwrap();
        assert_eq!(g.group_sizes("age").unwrap(), (2, 0));
        assert_eq!(g.group_nodes("age").unwrap(), (vec![0, 1], vec![]));
    }

    #[test]
    fn binarize_non_numeric() {
        let err = binarize_attribute(with_ages(&["18", "old"]), "age", &Predicate::AtMost(19.0))
            .unwrap_err();
        assert!(matches!(err, Error::Predicate { node: 1, ref value, .. } if value == "old"));
    }

    #[test]
    fn predicate_text_round_trip() {
        for s in ["le:19", "ge:2.5", "eq:A", "in:18,19"] {
            assert_eq!(s.parse::<Predicate>().unwrap().to_string(), s);
        }
        assert!("lt:3".parse::<Predicate>().is_err());
    }

    #[test]
    fn features_path() {
        let g = parse("0 1\n1 2").unwrap();
        let x = feature_matrix(&g);
        assert_eq!(x.row(1).to_vec(), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn features_edgeless_and_complete() {
        let x = feature_matrix(&AttributedGraph::new(4, []).unwrap());
        assert!(x.as_array().iter().all(|&v| v == 0.0));
        let k3 = AttributedGraph::new(3, [(0, 1), (0, 2), (1, 2)]).unwrap();
        let x = feature_matrix(&k3);
        for u in 0..3 {
            for v in 0..3 {
                assert_eq!(x.as_array()[[u, v]], if u == v { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn group_nodes_split() {
        let g = AttributedGraph::new(3, [])
            .unwrap()
            .with_labels("g", vec![Group::A, Group::A, Group::B])
            .unwrap();
        assert_eq!(g.group_nodes("g").unwrap(), (vec![0, 1], vec![2]));
        assert!(matches!(
            g.group_nodes("x"),
            Err(Error::UnknownAttribute(_))
        ));
    }

    #[test]
    fn induced_subgraph_keeps_internal_edges() {
        let g = AttributedGraph::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let (sub, kept) = g.induced_subgraph(&[3, 1, 2]).unwrap();
        assert_eq!(kept, vec![1, 2, 3]);
        assert_eq!(sub.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn remapped_loader_and_sidecar() {
        let f = write_tmp("u7 x\nx q\n");
        let (g, map) = load_edge_list_remapped(f.path()).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(map.dense("q"), Some(2));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ids.csv");
        map.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "original_id,dense_id\nu7,0\nx,1\nq,2\n");
        assert_eq!(IdMap::read_csv(&p).unwrap(), map);
    }

    fn arb_graph() -> impl Strategy<Value = AttributedGraph> {
        (1usize..25).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..60).prop_map(move |pairs| {
                AttributedGraph::new(n, pairs.into_iter().filter(|(u, v)| u != v)).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn features_symmetric_zero_diagonal(g in arb_graph()) {
            let x = feature_matrix(&g);
            let a = x.as_array();
            for u in 0..g.n() {
                prop_assert_eq!(a[[u, u]], 0.0);
                for v in 0..g.n() {
                    prop_assert_eq!(a[[u, v]], a[[v, u]]);
                    prop_assert_eq!(a[[u, v]] == 1.0, g.has_edge(u, v));
                }
            }
        }

        #[test]
        fn write_then_load_is_identity(g in arb_graph()) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("g.txt");
            write_edge_list(&g, &p).unwrap();
            let back = load_edge_list(&p).unwrap();
            prop_assert_eq!(back.n(), g.n());
            prop_assert_eq!(back.edges(), g.edges());
        }

        #[test]
        fn group_nodes_partition(labels in proptest::collection::vec(any::<bool>(), 1..40)) {
            let n = labels.len();
            let g = AttributedGraph::new(n, []).unwrap()
                .with_labels("g", labels.iter().map(|&b| if b { Group::A } else { Group::B }).collect())
                .unwrap();
            let (a, b) = g.group_nodes("g").unwrap();
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert!(a.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(b.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
