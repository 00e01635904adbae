//! Edge lists, scripted placements and CSV exports.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{Context, Result};
use fflab_core::dynamics::Trajectory;
use fflab_core::graph::EdgeListBuilder;
use fflab_core::growth::GrowthProfile;
use fflab_core::{Graph, NodeSet};

pub fn read_edge_list(path: &Path) -> Result<Graph> {
    let file =
        File::open(path).with_context(|| format!("cannot open edge list {}", path.display()))?;
    read_edge_list_from(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

pub fn read_edge_list_from<R: BufRead>(reader: R) -> Result<Graph> {
    let mut builder = EdgeListBuilder::new();
    for line in reader.lines() {
        builder.push_line(&line?)?;
    }
    Ok(builder.finish()?)
}

/// Writes internal ids under a `# nodes: N` header so that isolated nodes
/// and ids survive a round trip.
pub fn write_edge_list<W: Write>(g: &Graph, mut w: W) -> Result<()> {
    writeln!(w, "# nodes: {}", g.node_count())?;
    for (u, v) in g.edges() {
        writeln!(w, "{u}\t{v}")?;
    }
    w.flush()?;
    Ok(())
}

/// A JSON array of arrays of node ids; entry `t` is vaccinated at step `t`.
pub fn read_script(path: &Path) -> Result<Vec<NodeSet>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read script {}", path.display()))?;
    parse_script(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn parse_script(text: &str) -> Result<Vec<NodeSet>> {
    let steps: Vec<Vec<u32>> = serde_json::from_str(text)?;
    Ok(steps.into_iter().map(NodeSet::from_iter).collect())
}

/// Rows `(t, infected, vaccinated, budget)`; the final state has no budget.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "infected", "vaccinated", "budget"])?;
    let (inf, vac) = (traj.infected_sizes(), traj.vaccinated_sizes());
    for t in 0..traj.state_count() {
        let budget = traj
            .budgets
            .get(t)
            .map(|b| b.to_string())
            .unwrap_or_default();
        out.write_record([
            t.to_string(),
            inf[t].to_string(),
            vac[t].to_string(),
            budget,
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Rows `(cardinality, value, samples)`.
pub fn write_profile_csv<W: Write>(profile: &GrowthProfile, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["cardinality", "value", "samples"])?;
    for (k, e) in &profile.entries {
        out.write_record([k.to_string(), e.value.to_string(), e.samples.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_list_round_trip_keeps_isolated_nodes() {
        let g = Graph::from_edges(5, [(0, 3), (3, 1)]).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let back = read_edge_list_from(buf.as_slice()).unwrap();
        assert_eq!(back.node_count(), 5);
        assert_eq!(
            back.edges().collect::<Vec<_>>(),
            g.edges().collect::<Vec<_>>()
        );
    }

    #[test]
    fn script_parsing() {
        let s = parse_script("[[3, 1], [], [2]]").unwrap();
        assert_eq!(
            s,
            [NodeSet::from([1, 3]), NodeSet::new(), NodeSet::singleton(2)]
        );
        assert!(parse_script("[[1, -2]]").is_err());
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let err = read_edge_list_from("0 1\n1 x\n".as_bytes()).unwrap_err();
        assert!(format!("{err:#}").contains("line 2"), "{err:#}");
    }
}
