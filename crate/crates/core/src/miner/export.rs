use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{MethodGraph, MinerError, Ranking};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    GraphMl,
    EdgeCsv,
    RankCsv,
}

impl ExportFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            ExportFormat::Dot => "dot",
            ExportFormat::GraphMl => "graphml",
            ExportFormat::EdgeCsv => "edge-csv",
            ExportFormat::RankCsv => "rank-csv",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Dot => "dot",
            ExportFormat::GraphMl => "graphml",
            ExportFormat::EdgeCsv | ExportFormat::RankCsv => "csv",
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExportFormat {
    type Err = MinerError;

    fn from_str(s: &str) -> Result<Self, MinerError> {
        match s {
            "dot" => Ok(ExportFormat::Dot),
            "graphml" => Ok(ExportFormat::GraphMl),
            "edge-csv" => Ok(ExportFormat::EdgeCsv),
            "rank-csv" => Ok(ExportFormat::RankCsv),
            other => Err(MinerError::UnknownFormat(other.to_string())),
        }
    }
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Graphviz text: nodes first, then edges, both sorted.
pub fn dot(graph: &MethodGraph) -> String {
    let mut out = format!("graph \"{}\" {{\n", graph.year);
    for n in graph.nodes() {
        let _ = writeln!(out, "  {};", dot_quote(n));
    }
    for (a, b, w) in graph.edges() {
        let _ = writeln!(out, "  {} -- {} [weight={w}];", dot_quote(a), dot_quote(b));
    }
    out.push_str("}\n");
    out
}

pub fn graphml(graph: &MethodGraph) -> String {
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n  \
         <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"int\"/>\n",
    );
    let _ = writeln!(out, "  <graph id=\"y{}\" edgedefault=\"undirected\">", graph.year);
    for n in graph.nodes() {
        let _ = writeln!(out, "    <node id=\"{}\"/>", xml_escape(n));
    }
    for (a, b, w) in graph.edges() {
        let _ = writeln!(
            out,
            "    <edge source=\"{}\" target=\"{}\"><data key=\"weight\">{w}</data></edge>",
            xml_escape(a),
            xml_escape(b)
        );
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

pub fn edge_csv<'a>(graphs: impl IntoIterator<Item = &'a MethodGraph>) -> String {
    let mut out = String::from("year,src,dst,weight\n");
    for g in graphs {
        for (a, b, w) in g.edges() {
            let _ = writeln!(out, "{},{},{},{w}", g.year, csv_field(a), csv_field(b));
        }
    }
    out
}

pub fn rank_csv(rankings: &[Ranking]) -> String {
    let mut out = String::from("year,rank,method,betweenness\n");
    for r in rankings {
        for (i, (name, score)) in r.entries.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{score}", r.year, i + 1, csv_field(name));
        }
    }
    out
}

fn write(path: &Path, text: String) -> Result<(), MinerError> {
    fs::write(path, text).map_err(|e| MinerError::io(path, e))
}

/// Writes one graph as dot, graphml or edge-csv.
pub fn export_graph(
    graph: &MethodGraph,
    format: ExportFormat,
    path: impl AsRef<Path>,
) -> Result<(), MinerError> {
    let text = match format {
        ExportFormat::Dot => dot(graph),
        ExportFormat::GraphMl => graphml(graph),
        ExportFormat::EdgeCsv => edge_csv([graph]),
        ExportFormat::RankCsv => return Err(MinerError::WrongFormat(format)),
    };
    write(path.as_ref(), text)
}

pub fn export_rankings(rankings: &[Ranking], path: impl AsRef<Path>) -> Result<(), MinerError> {
    write(path.as_ref(), rank_csv(rankings))
}

fn unquote(s: &str) -> Option<(String, &str)> {
    let mut chars = s.strip_prefix('"')?.char_indices();
    let mut out = String::new();
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => out.push(chars.next()?.1),
            '"' => return Some((out, &s[i + 2..])),
            c => out.push(c),
        }
    }
    None
}

/// Reads back the subset of Graphviz produced by [`dot`]. Returns `None` on
/// anything else.
pub fn parse_dot(text: &str) -> Option<MethodGraph> {
    let mut lines = text.lines();
    let (year, rest) = unquote(lines.next()?.strip_prefix("graph ")?)?;
    if rest.trim() != "{" {
        return None;
    }
    let mut g = MethodGraph::new(year.parse().ok()?);
    for line in lines {
        let line = line.trim();
        if line == "}" {
            return Some(g);
        }
        let (a, rest) = unquote(line)?;
        if rest == ";" {
            g.add_node(&a);
            continue;
        }
        let (b, rest) = unquote(rest.strip_prefix(" -- ")?)?;
        let w = rest.strip_prefix(" [weight=")?.strip_suffix("];")?.parse().ok()?;
        g.add_edge(&a, &b, w);
    }
    None
}
