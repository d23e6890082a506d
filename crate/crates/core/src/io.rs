//! Plain-text file formats: tensors, hypergraph edge lists, clusterings and
//! JSON documents.
//!
//! Tensor files (`DTENSOR 1`):
//!
//! ```text
//! DTENSOR 1
//! 3
//! 2 2 2
//! 1.5e0
//! ...
//! ```
//!
//! followed by one value per line in storage order (last index fastest).
//! Clustering files hold one section per mode, `mode <k> <r>` then one
//! 1-based label per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{DtbmError, Result};
use crate::model::Clustering;
use crate::tensor::DenseTensor;

pub const TENSOR_MAGIC: &str = "DTENSOR 1";

fn parse_err(source: &str, line: usize, message: impl Into<String>) -> DtbmError {
    DtbmError::Parse {
        source_name: source.to_string(),
        line,
        message: message.into(),
    }
}

fn source_name(path: &Path) -> String {
    path.display().to_string()
}

/// Render a tensor in the `DTENSOR 1` format. Values use the shortest
/// representation that parses back to the same double.
pub fn format_tensor(t: &DenseTensor) -> String {
    let mut out = String::with_capacity(t.len() * 24 + 64);
    out.push_str(TENSOR_MAGIC);
    out.push('\n');
    let _ = writeln!(out, "{}", t.order());
    let dims: Vec<String> = t.dims().iter().map(ToString::to_string).collect();
    let _ = writeln!(out, "{}", dims.join(" "));
    for v in t.values() {
        let _ = writeln!(out, "{v:e}");
    }
    out
}

fn parse_value(token: &str, source: &str, line: usize) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| parse_err(source, line, format!("not a number: {token:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(source, line, format!("non-finite value {token:?}")));
    }
    Ok(v)
}

fn parse_count(token: &str, what: &str, source: &str, line: usize) -> Result<usize> {
    match token.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(parse_err(source, line, format!("{what} must be a positive integer, got {token:?}"))),
    }
}

/// Parse a `DTENSOR 1` document; `source` names it in error messages.
pub fn parse_tensor(text: &str, source: &str) -> Result<DenseTensor> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| parse_err(source, text.lines().count() + 1, format!("missing {what}")))
    };
    let (ln, header) = next("header")?;
    if header != TENSOR_MAGIC {
        return Err(parse_err(source, ln, format!("expected {TENSOR_MAGIC:?}, got {header:?}")));
    }
    let (ln, order_line) = next("order")?;
    let order = parse_count(order_line, "order", source, ln)?;
    let (ln, dims_line) = next("dimensions")?;
    let dims = dims_line
        .split_whitespace()
        .map(|t| parse_count(t, "dimension", source, ln))
        .collect::<Result<Vec<_>>>()?;
    if dims.len() != order {
        return Err(parse_err(source, ln, format!("order {order} but {} dimensions", dims.len())));
    }
    let n: usize = dims.iter().product();
    let mut values = Vec::with_capacity(n);
    let mut last = ln;
    for (ln, line) in lines {
        last = ln;
        if line.is_empty() {
            continue;
        }
        if values.len() == n {
            return Err(parse_err(source, ln, format!("more than {n} values")));
        }
        values.push(parse_value(line, source, ln)?);
    }
    if values.len() != n {
        return Err(parse_err(
            source,
            last + 1,
            format!("expected {n} values, found {}", values.len()),
        ));
    }
    DenseTensor::new(dims, values)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    fs::write(path, format_tensor(t))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let path = path.as_ref();
    parse_tensor(&fs::read_to_string(path)?, &source_name(path))
}

/// Order-`K` hyperedges over nodes `1..=num_nodes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypergraphEdgeList {
    pub num_nodes: usize,
    pub order: usize,
    /// 1-based node ids, `order` per edge.
    pub edges: Vec<Vec<usize>>,
}

impl HypergraphEdgeList {
    pub fn new(num_nodes: usize, order: usize, edges: Vec<Vec<usize>>) -> Result<Self> {
        if num_nodes == 0 || order == 0 {
            return Err(DtbmError::InvalidParameter("edge list needs nodes and a positive order".into()));
        }
        for e in &edges {
            if e.len() != order {
                return Err(DtbmError::InvalidParameter(format!("edge {e:?} does not have {order} nodes")));
            }
            if let Some(&id) = e.iter().find(|&&id| id == 0 || id > num_nodes) {
                return Err(DtbmError::InvalidParameter(format!("node id {id} outside 1..={num_nodes}")));
            }
        }
        Ok(Self { num_nodes, order, edges })
    }
}

/// Parse whitespace-separated 1-based ids, one edge per line. `#` starts a
/// comment; blank lines are skipped. Without `num_nodes`, the largest id is
/// used. An empty list needs both `num_nodes` and `order`.
pub fn parse_edge_list(text: &str, num_nodes: Option<usize>, order: Option<usize>, source: &str) -> Result<HypergraphEdgeList> {
    let mut edges = Vec::new();
    let mut k = order;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let ids = line
            .split_whitespace()
            .map(|t| parse_count(t, "node id", source, ln))
            .collect::<Result<Vec<_>>>()?;
        match k {
            None => k = Some(ids.len()),
            Some(k) if k != ids.len() => {
                return Err(parse_err(source, ln, format!("edge has {} nodes, expected {k}", ids.len())));
            }
            _ => {}
        }
        if let Some(p) = num_nodes {
            if let Some(&id) = ids.iter().find(|&&id| id > p) {
                return Err(parse_err(source, ln, format!("node id {id} exceeds {p}")));
            }
        }
        edges.push(ids);
    }
    let order = k.ok_or_else(|| parse_err(source, 1, "empty edge list without an order"))?;
    let p = match num_nodes {
        Some(p) => p,
        None => edges
            .iter()
            .flatten()
            .copied()
            .max()
            .ok_or_else(|| parse_err(source, 1, "empty edge list without a node count"))?,
    };
    HypergraphEdgeList::new(p, order, edges)
}

pub fn read_edge_list(path: impl AsRef<Path>, num_nodes: Option<usize>, order: Option<usize>) -> Result<HypergraphEdgeList> {
    let path = path.as_ref();
    parse_edge_list(&fs::read_to_string(path)?, num_nodes, order, &source_name(path))
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Binary adjacency tensor. With `symmetrize`, every ordering of each edge
/// is set; otherwise only the listed tuple.
pub fn hypergraph_to_tensor(edges: &HypergraphEdgeList, symmetrize: bool) -> Result<DenseTensor> {
    let dims = vec![edges.num_nodes; edges.order];
    let mut values = vec![0.0; dims.iter().product()];
    let offset = |idx: &[usize]| idx.iter().fold(0, |acc, &i| acc * edges.num_nodes + (i - 1));
    for e in &edges.edges {
        if symmetrize {
            for perm in permutations(e) {
                values[offset(&perm)] = 1.0;
            }
        } else {
            values[offset(e)] = 1.0;
        }
    }
    DenseTensor::new(dims, values)
}

/// Render a clustering with 1-based labels.
pub fn format_clustering(z: &Clustering) -> String {
    let mut out = String::new();
    for k in 0..z.order() {
        let _ = writeln!(out, "mode {} {}", k + 1, z.num_clusters(k));
        for &a in z.labels(k) {
            let _ = writeln!(out, "{}", a + 1);
        }
    }
    out
}

pub fn parse_clustering(text: &str, source: &str) -> Result<Clustering> {
    let mut assignments: Vec<Vec<usize>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("mode") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(parse_err(source, ln, "expected `mode <k> <r>`"));
            }
            let k = parse_count(parts[0], "mode", source, ln)?;
            if k != assignments.len() + 1 {
                return Err(parse_err(source, ln, format!("expected mode {}, got {k}", assignments.len() + 1)));
            }
            counts.push(parse_count(parts[1], "cluster count", source, ln)?);
            assignments.push(Vec::new());
            continue;
        }
        let (Some(labels), Some(&r)) = (assignments.last_mut(), counts.last()) else {
            return Err(parse_err(source, ln, "label before any `mode` header"));
        };
        let a = parse_count(line, "label", source, ln)?;
        if a > r {
            return Err(parse_err(source, ln, format!("label {a} exceeds {r}")));
        }
        labels.push(a - 1);
    }
    if assignments.is_empty() {
        return Err(parse_err(source, 1, "no clustering sections"));
    }
    if let Some(k) = assignments.iter().position(Vec::is_empty) {
        return Err(parse_err(source, text.lines().count(), format!("mode {} has no labels", k + 1)));
    }
    Clustering::new(assignments, counts)
}

pub fn write_clustering(path: impl AsRef<Path>, z: &Clustering) -> Result<()> {
    fs::write(path, format_clustering(z))?;
    Ok(())
}

pub fn read_clustering(path: impl AsRef<Path>) -> Result<Clustering> {
    let path = path.as_ref();
    parse_clustering(&fs::read_to_string(path)?, &source_name(path))
}

/// Pretty-printed JSON.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_text_roundtrip_is_exact() {
        let t = DenseTensor::new(vec![2, 3], vec![0.1, -2.5e-300, 1.0 / 3.0, 7.0, f64::MAX, -0.0]).unwrap();
        let back = parse_tensor(&format_tensor(&t), "mem").unwrap();
        assert_eq!(
            t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let s = DenseTensor::new(vec![1], vec![4.0]).unwrap();
        assert_eq!(parse_tensor(&format_tensor(&s), "mem").unwrap(), s);
    }

    #[test]
    fn tensor_errors_carry_line_numbers() {
        let err = parse_tensor("DTENSOR 1\n2\n2 2\n1\n2\n3\n", "f").unwrap_err();
        assert!(matches!(err, DtbmError::Parse { line: 7, .. }), "{err}");
        let err = parse_tensor("DTENSOR 1\n1\n2\n1\nNaN\n", "f").unwrap_err();
        assert!(matches!(err, DtbmError::Parse { line: 5, .. }), "{err}");
        let err = parse_tensor("DTENSOR 2\n", "f").unwrap_err();
        assert!(matches!(err, DtbmError::Parse { line: 1, .. }));
        let err = parse_tensor("DTENSOR 1\n1\n2\n1\nx\n", "f").unwrap_err();
        assert!(matches!(err, DtbmError::Parse { line: 5, .. }));
    }

    #[test]
    fn hyperedges() {
        let el = parse_edge_list("# triangle\n1 2 3\n\n1 2 3 # dup\n", Some(3), None, "e").unwrap();
        let t = hypergraph_to_tensor(&el, true).unwrap();
        assert_eq!(t.values().iter().sum::<f64>(), 6.0);
        let t = hypergraph_to_tensor(&el, false).unwrap();
        assert_eq!(t.values().iter().sum::<f64>(), 1.0);
        assert_eq!(t.get(&[0, 1, 2]), 1.0);
        let empty = parse_edge_list("", Some(4), Some(3), "e").unwrap();
        assert_eq!(hypergraph_to_tensor(&empty, true).unwrap().values().iter().sum::<f64>(), 0.0);
        assert!(parse_edge_list("1 2 9\n", Some(3), None, "e").is_err());
        assert!(parse_edge_list("1 2 3\n1 2\n", None, None, "e").is_err());
    }

    #[test]
    fn clustering_roundtrip_and_errors() {
        let z = Clustering::new(vec![vec![0, 1, 1], vec![2, 0]], vec![2, 3]).unwrap();
        let text = format_clustering(&z);
        assert!(text.starts_with("mode 1 2\n1\n2\n2\nmode 2 3\n3\n1\n"));
        assert_eq!(parse_clustering(&text, "c").unwrap(), z);
        assert!(parse_clustering("", "c").is_err());
        assert!(matches!(parse_clustering("mode 1 2\n1\n3\n", "c"), Err(DtbmError::Parse { line: 3, .. })));
        assert!(parse_clustering("1\n", "c").is_err());
    }
}
