use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::{Graph, NodeId};
use crate::{Error, Result};

/// Incremental parser for whitespace-separated edge lists.
///
/// Lines starting with `#` are comments; every other non-blank line holds two
/// integer ids. External ids are remapped densely in ascending order and the
/// map is kept on the resulting graph. A `# nodes: N` comment pins the node
/// count and keeps ids as-is, so isolated nodes survive a write/read cycle.
#[derive(Debug, Default)]
pub struct EdgeListBuilder {
    edges: Vec<(u64, u64)>,
    declared_nodes: Option<usize>,
    line: usize,
}

impl EdgeListBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_line(&mut self, raw: &str) -> Result<()> {
        self.line += 1;
        let line = raw.trim();
        if line.is_empty() {
            return Ok(());
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(count) = comment.trim().strip_prefix("nodes:") {
                let n = count
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| self.error(e.to_string()))?;
                self.declared_nodes = Some(n);
            }
            return Ok(());
        }
        let mut fields = line.split_whitespace();
        let (Some(u), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(self.error(format!("expected two node ids, got {line:?}")));
        };
        let u = u
            .parse::<u64>()
            .map_err(|e| self.error(format!("{u:?}: {e}")))?;
        let v = v
            .parse::<u64>()
            .map_err(|e| self.error(format!("{v:?}: {e}")))?;
        self.edges.push((u, v));
        Ok(())
    }

    pub fn push_str(&mut self, text: &str) -> Result<()> {
        text.lines().try_for_each(|l| self.push_line(l))
    }

    pub fn finish(self) -> Result<Graph> {
        if let Some(n) = self.declared_nodes {
            if let Some(&(u, v)) = self.edges.iter().find(|&&(u, v)| u.max(v) >= n as u64) {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("edge ({u}, {v}) exceeds declared node count {n}"),
                });
            }
            if n == 0 {
                return Err(Error::EmptyInput);
            }
            let edges = self.edges.iter().map(|&(u, v)| (u as NodeId, v as NodeId));
            return Graph::from_edges(n, edges);
        }
        if self.edges.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut labels: Vec<u64> = self.edges.iter().flat_map(|&(u, v)| [u, v]).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() > NodeId::MAX as usize {
            return Err(Error::SizeOverflow);
        }
        let index = |x: u64| labels.binary_search(&x).expect("label present") as NodeId;
        let edges: Vec<(NodeId, NodeId)> = self
            .edges
            .iter()
            .map(|&(u, v)| (index(u), index(v)))
            .collect();
        Ok(Graph::from_edges(labels.len(), edges)?.with_labels(labels))
    }

    fn error(&self, message: alloc::string::String) -> Error {
        Error::Parse {
            line: self.line,
            message,
        }
    }
}

/// Parses a complete edge list held in memory.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut builder = EdgeListBuilder::new();
    builder.push_str(text)?;
    builder.finish()
}

impl Graph {
    pub fn from_edge_list(text: &str) -> Result<Self> {
        parse_edge_list(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_of_three() {
        let g = Graph::from_edge_list("0 1\n1 2").unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (3, 2));
    }

    #[test]
    fn duplicates_merged_and_loops_dropped() {
        let g = Graph::from_edge_list("# c\n5 7\n7 5\n5 5").unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (2, 1));
        assert_eq!(g.label(0), 5);
        assert_eq!(g.node_for_label(7), Some(1));
        assert_eq!(g.node_for_label(6), None);
    }

    #[test]
    fn tabs_and_blank_lines() {
        let g = Graph::from_edge_list("1\t2\n\n2 3\n").unwrap();
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = Graph::from_edge_list("# header\n0 1\n0 x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let err = Graph::from_edge_list("0 1 2").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(Graph::from_edge_list(""), Err(Error::EmptyInput));
        assert_eq!(
            Graph::from_edge_list("# only comments\n"),
            Err(Error::EmptyInput)
        );
    }

    #[test]
    fn declared_node_count_keeps_isolated_nodes() {
        let g = Graph::from_edge_list("# nodes: 4\n0 2\n").unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.degree(3), 0);
        assert!(Graph::from_edge_list("# nodes: 2\n0 2\n").is_err());
    }
}
