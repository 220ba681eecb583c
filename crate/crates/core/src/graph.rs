//! Artist networks built from maximum cosine similarity.
//!
//! Every artist is linked to the one other artist whose mean embedding is
//! most cosine-similar. The undirected version is the similarity network;
//! the lineage version orients each link from the earlier artist to the
//! later one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{pairwise, ArtistProfile, EmbedError, Metric};
use crate::manifest::StyleClass;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("need at least 2 artists, got {0}")]
    TooFewProfiles(usize),
    #[error("artist {0:?} appears more than once")]
    DuplicateArtist(String),
    #[error("artist {0:?} has a zero mean vector")]
    ZeroNorm(String),
    #[error("artist {0:?} has no mean year; lineage needs one for every artist")]
    MissingYear(String),
    #[error("unknown export format {0:?} (expected dot or json)")]
    UnknownFormat(String),
    #[error("graph JSON: {0}")]
    Json(String),
    #[error("artist index: {0}")]
    Index(String),
    #[error(transparent)]
    Embed(EmbedError),
}

impl From<EmbedError> for GraphError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::ZeroNorm(Some(id)) => GraphError::ZeroNorm(id),
            EmbedError::TooFewProfiles(n) => GraphError::TooFewProfiles(n),
            other => GraphError::Embed(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    #[serde(with = "style_name")]
    pub style: StyleClass,
    pub mean_year: Option<f64>,
    pub degree: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: String,
    pub dst: String,
    pub weight: f64,
}

/// Nodes sorted by id; edges sorted by `(src, dst)`. Undirected edges keep
/// the smaller id in `src`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtistGraph {
    pub directed: bool,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

/// Several candidates shared the maximum similarity for `artist`; `chosen`
/// is the smallest id among `tied`.
#[derive(Debug, Clone, PartialEq)]
pub struct TieReport {
    pub artist: String,
    pub chosen: String,
    pub tied: Vec<String>,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBuild {
    pub graph: ArtistGraph,
    /// Per artist, in node order, the id it selected.
    pub selections: Vec<(String, String)>,
    pub ties: Vec<TieReport>,
    /// Lineage only: edges whose endpoints share a mean year and were
    /// oriented by id.
    pub equal_year_edges: Vec<(String, String)>,
}

mod style_name {
    use super::StyleClass;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: &StyleClass, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(s.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<StyleClass, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn sorted_profiles(profiles: &[ArtistProfile]) -> Result<Vec<ArtistProfile>, GraphError> {
    if profiles.len() < 2 {
        return Err(GraphError::TooFewProfiles(profiles.len()));
    }
    let mut sorted = profiles.to_vec();
    sorted.sort_by(|a, b| a.artist_id.cmp(&b.artist_id));
    for w in sorted.windows(2) {
        if w[0].artist_id == w[1].artist_id {
            return Err(GraphError::DuplicateArtist(w[0].artist_id.clone()));
        }
    }
    Ok(sorted)
}

/// Index of the most cosine-similar other artist for each artist, scanning
/// in id order so the first maximum is the smallest id.
fn argmax_selections(sim: &[Vec<f64>], ids: &[&str]) -> (Vec<usize>, Vec<TieReport>) {
    let n = sim.len();
    let mut picks = Vec::with_capacity(n);
    let mut ties = Vec::new();
    for i in 0..n {
        let mut best = usize::MAX;
        let mut best_sim = f64::NEG_INFINITY;
        let mut tied = Vec::new();
        for j in (0..n).filter(|&j| j != i) {
            let s = sim[i][j];
            if s > best_sim || best == usize::MAX {
                best = j;
                best_sim = s;
                tied.clear();
                tied.push(j);
            } else if s == best_sim {
                tied.push(j);
            }
        }
        if tied.len() > 1 {
            ties.push(TieReport {
                artist: ids[i].to_string(),
                chosen: ids[best].to_string(),
                tied: tied.iter().map(|&j| ids[j].to_string()).collect(),
                similarity: best_sim,
            });
        }
        picks.push(best);
    }
    (picks, ties)
}

fn assemble(
    profiles: &[ArtistProfile],
    directed: bool,
    edges: BTreeMap<(usize, usize), f64>,
) -> ArtistGraph {
    let mut degree = vec![0; profiles.len()];
    for &(a, b) in edges.keys() {
        degree[a] += 1;
        degree[b] += 1;
    }
    let nodes = profiles
        .iter()
        .zip(degree)
        .map(|(p, degree)| GraphNode {
            id: p.artist_id.clone(),
            style: p.style,
            mean_year: p.mean_year,
            degree,
        })
        .collect();
    // index order equals id order because profiles are sorted
    let edges = edges
        .into_iter()
        .map(|((a, b), weight)| GraphEdge {
            src: profiles[a].artist_id.clone(),
            dst: profiles[b].artist_id.clone(),
            weight,
        })
        .collect();
    ArtistGraph {
        directed,
        nodes,
        edges,
    }
}

/// Undirected network: each artist contributes an edge to its argmax
/// cosine partner; mutual picks collapse to one edge.
pub fn build_similarity_network(profiles: &[ArtistProfile]) -> Result<NetworkBuild, GraphError> {
    let profiles = sorted_profiles(profiles)?;
    let sim = pairwise(&profiles, Metric::Cosine)?;
    let ids: Vec<&str> = profiles.iter().map(|p| p.artist_id.as_str()).collect();
    let (picks, ties) = argmax_selections(&sim, &ids);
    let mut edges = BTreeMap::new();
    for (i, &j) in picks.iter().enumerate() {
        edges.insert((i.min(j), i.max(j)), sim[i][j]);
    }
    Ok(NetworkBuild {
        selections: selections(&ids, &picks),
        graph: assemble(&profiles, false, edges),
        ties,
        equal_year_edges: Vec::new(),
    })
}

fn selections(ids: &[&str], picks: &[usize]) -> Vec<(String, String)> {
    picks
        .iter()
        .enumerate()
        .map(|(i, &j)| (ids[i].to_string(), ids[j].to_string()))
        .collect()
}

/// Directed lineage: the same pairs as the similarity network, each
/// pointing from the earlier mean year to the later. Equal years point from
/// the smaller id and are listed in `equal_year_edges`.
pub fn build_lineage(profiles: &[ArtistProfile]) -> Result<NetworkBuild, GraphError> {
    if let Some(p) = profiles.iter().find(|p| p.mean_year.is_none()) {
        return Err(GraphError::MissingYear(p.artist_id.clone()));
    }
    let profiles = sorted_profiles(profiles)?;
    let sim = pairwise(&profiles, Metric::Cosine)?;
    let ids: Vec<&str> = profiles.iter().map(|p| p.artist_id.as_str()).collect();
    let (picks, ties) = argmax_selections(&sim, &ids);
    let year = |i: usize| profiles[i].mean_year.expect("checked above");
    let mut edges = BTreeMap::new();
    let mut equal = BTreeSet::new();
    for (i, &j) in picks.iter().enumerate() {
        let (src, dst) = match year(i).total_cmp(&year(j)) {
            std::cmp::Ordering::Less => (i, j),
            std::cmp::Ordering::Greater => (j, i),
            std::cmp::Ordering::Equal => {
                let pair = (i.min(j), i.max(j));
                equal.insert(pair);
                pair
            }
        };
        edges.insert((src, dst), sim[i][j]);
    }
    Ok(NetworkBuild {
        selections: selections(&ids, &picks),
        graph: assemble(&profiles, true, edges),
        ties,
        equal_year_edges: equal
            .into_iter()
            .map(|(a, b)| (ids[a].to_string(), ids[b].to_string()))
            .collect(),
    })
}

/// Rows separate nodes whose years fall within this many years of each
/// other.
pub const TIMELINE_WINDOW: f64 = 5.0;

/// `x = mean_year`; `y` is the lowest integer row whose previous occupant is
/// at least [`TIMELINE_WINDOW`] years earlier. Any two placed nodes are
/// therefore at least 1 apart. Nodes without a year are left out.
pub fn layout_timeline(graph: &ArtistGraph) -> BTreeMap<String, (f64, f64)> {
    let mut order: Vec<(f64, &str)> = graph
        .nodes
        .iter()
        .filter_map(|n| n.mean_year.map(|y| (y, n.id.as_str())))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    let mut row_last: Vec<f64> = Vec::new();
    let mut out = BTreeMap::new();
    for (x, id) in order {
        let row = match row_last.iter().position(|&last| x - last >= TIMELINE_WINDOW) {
            Some(r) => r,
            None => {
                row_last.push(f64::NEG_INFINITY);
                row_last.len() - 1
            }
        };
        row_last[row] = x;
        out.insert(id.to_string(), (x, row as f64));
    }
    out
}

/// Fill colour per style class, shared by graph and scatter exports.
pub fn style_color(style: StyleClass) -> &'static str {
    match style {
        StyleClass::EarlyRenaissance => "#8c564b",
        StyleClass::HighRenaissance => "#d62728",
        StyleClass::Baroque => "#ff7f0e",
        StyleClass::Realism => "#bcbd22",
        StyleClass::Impressionism => "#2ca02c",
        StyleClass::Cubism => "#17becf",
        StyleClass::AbstractArt => "#1f77b4",
        StyleClass::PopArt => "#e377c2",
        StyleClass::Ukiyoe => "#9467bd",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

impl FromStr for ExportFormat {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(ExportFormat::Dot),
            "json" => Ok(ExportFormat::Json),
            _ => Err(GraphError::UnknownFormat(s.to_string())),
        }
    }
}

pub fn export_graph(
    graph: &ArtistGraph,
    format: ExportFormat,
    labels: &BTreeMap<String, String>,
) -> Vec<u8> {
    match format {
        ExportFormat::Dot => to_dot(graph, labels).into_bytes(),
        ExportFormat::Json => to_json(graph).into_bytes(),
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz text. `labels` overrides the node label (defaults to the id).
pub fn to_dot(graph: &ArtistGraph, labels: &BTreeMap<String, String>) -> String {
    let (kind, name, arrow) = if graph.directed {
        ("digraph", "lineage", "->")
    } else {
        ("graph", "artists", "--")
    };
    let mut out = format!("{kind} {name} {{\n  node [shape=circle, style=filled];\n");
    for n in &graph.nodes {
        let label = labels.get(&n.id).map(String::as_str).unwrap_or(&n.id);
        let _ = writeln!(
            out,
            "  {} [label={}, class={}, fillcolor={}, width={:.2}];",
            quote(&n.id),
            quote(label),
            quote(n.style.name()),
            quote(style_color(n.style)),
            0.3 + 0.15 * n.degree as f64,
        );
    }
    for e in &graph.edges {
        let _ = writeln!(
            out,
            "  {} {arrow} {} [weight={}];",
            quote(&e.src),
            quote(&e.dst),
            e.weight
        );
    }
    out.push_str("}\n");
    out
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
}

pub fn to_json(graph: &ArtistGraph) -> String {
    let doc = GraphJson {
        nodes: graph.nodes.clone(),
        edges: graph.edges.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("graph serializes");
    s.push('\n');
    s
}

/// Parses [`to_json`] output. Directedness is not stored in the file.
pub fn from_json(bytes: &[u8], directed: bool) -> Result<ArtistGraph, GraphError> {
    let doc: GraphJson = serde_json::from_slice(bytes).map_err(|e| GraphError::Json(e.to_string()))?;
    Ok(ArtistGraph {
        directed,
        nodes: doc.nodes,
        edges: doc.edges,
    })
}

/// `index,artist_name` CSV to a name -> index map.
pub fn read_artist_index(bytes: &[u8]) -> Result<BTreeMap<String, String>, GraphError> {
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| GraphError::Index(e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "index" || &headers[1] != "artist_name" {
        return Err(GraphError::Index("header must be index,artist_name".into()));
    }
    let mut out = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| GraphError::Index(e.to_string()))?;
        out.insert(rec[1].to_string(), rec[0].to_string());
    }
    Ok(out)
}

/// Artist pairs the full-scale analysis links, as lowercase name fragments.
pub const EXPECTED_LINKAGES: [(&str, &str); 5] = [
    ("picasso", "braque"),
    ("duccio", "ambrogio lorenzetti"),
    ("ambrogio lorenzetti", "pietro lorenzetti"),
    ("klee", "kandinsky"),
    ("dobson", "caravaggio"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinkageStatus {
    Linked,
    NotLinked,
    /// One or both artists are not in the graph.
    Absent,
}

/// Informational check of [`EXPECTED_LINKAGES`] against `graph`, matching
/// artist names (id -> name) by case-insensitive fragment.
pub fn expected_linkage_report(
    graph: &ArtistGraph,
    names: &BTreeMap<String, String>,
) -> Vec<(&'static str, &'static str, LinkageStatus)> {
    let find = |frag: &str| -> Vec<&str> {
        graph
            .nodes
            .iter()
            .filter(|n| {
                names
                    .get(&n.id)
                    .unwrap_or(&n.id)
                    .to_lowercase()
                    .contains(frag)
            })
            .map(|n| n.id.as_str())
            .collect()
    };
    EXPECTED_LINKAGES
        .iter()
        .map(|&(a, b)| {
            let (xs, ys) = (find(a), find(b));
            let status = if xs.is_empty() || ys.is_empty() {
                LinkageStatus::Absent
            } else if graph.edges.iter().any(|e| {
                (xs.contains(&e.src.as_str()) && ys.contains(&e.dst.as_str()))
                    || (ys.contains(&e.src.as_str()) && xs.contains(&e.dst.as_str()))
            }) {
                LinkageStatus::Linked
            } else {
                LinkageStatus::NotLinked
            };
            (a, b, status)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn profile(id: &str, v: Vec<f64>, year: Option<f64>) -> ArtistProfile {
        ArtistProfile {
            artist_id: id.into(),
            mean_vector: v,
            mean_year: year,
            n_paintings: 1,
            style: StyleClass::Baroque,
        }
    }

    /// Unit vectors with cos(A,B)=0.9, cos(B,C)=0.8, cos(A,C)=0.5. (0.1 for
    /// A,C is not reachable: the angles would violate the triangle inequality.)
    fn three() -> Vec<ArtistProfile> {
        let a = vec![1.0, 0.0, 0.0];
        let b = vec![0.9, (1.0f64 - 0.81).sqrt(), 0.0];
        // c . a = 0.5, c . b = 0.8
        let c0 = 0.5;
        let c1 = (0.8 - 0.9 * c0) / b[1];
        let c2 = (1.0 - c0 * c0 - c1 * c1).sqrt();
        vec![
            profile("A", a, Some(1500.0)),
            profile("B", b, Some(1550.0)),
            profile("C", vec![c0, c1, c2], Some(1600.0)),
        ]
    }

    #[test]
    fn three_artist_fixture() {
        let b = build_similarity_network(&three()).unwrap();
        let g = &b.graph;
        let pairs: Vec<_> = g.edges.iter().map(|e| (e.src.as_str(), e.dst.as_str())).collect();
        assert_eq!(pairs, vec![("A", "B"), ("B", "C")]);
        let deg: Vec<_> = g.nodes.iter().map(|n| n.degree).collect();
        assert_eq!(deg, vec![1, 2, 1]);
        assert!((g.edges[0].weight - 0.9).abs() < 1e-12);
        assert!(b.ties.is_empty());

        let json = to_json(g);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["edges"].as_array().unwrap().len(), 2);
        let degrees: Vec<_> = v["nodes"]
            .as_array()
            .unwrap()
            .iter()
            .map(|n| n["degree"].as_u64().unwrap())
            .collect();
        assert_eq!(degrees, vec![1, 2, 1]);
        let first = json.find("\"id\"").unwrap();
        assert!(first < json.find("\"style\"").unwrap());
        assert!(json.find("\"mean_year\"").unwrap() < json.find("\"degree\"").unwrap());
    }

    #[test]
    fn two_artists_single_edge() {
        let ps = vec![profile("x", vec![1.0, 2.0], None), profile("y", vec![2.0, 1.0], None)];
        let g = build_similarity_network(&ps).unwrap().graph;
        assert_eq!(g.edges.len(), 1);
        assert!(g.nodes.iter().all(|n| n.degree == 1));
    }

    #[test]
    fn ties_go_to_smaller_id_and_are_reported() {
        let ps = vec![
            profile("m", vec![1.0, 0.0], None),
            profile("z", vec![0.0, 1.0], None),
            profile("b", vec![0.0, 1.0], None),
        ];
        let b = build_similarity_network(&ps).unwrap();
        let m_pick = b.selections.iter().find(|s| s.0 == "m").unwrap();
        assert_eq!(m_pick.1, "b");
        let tie = b.ties.iter().find(|t| t.artist == "m").unwrap();
        assert_eq!(tie.tied, vec!["b".to_string(), "z".to_string()]);
    }

    #[test]
    fn input_errors() {
        assert_eq!(
            build_similarity_network(&[profile("a", vec![1.0], None)]).unwrap_err(),
            GraphError::TooFewProfiles(1)
        );
        let zero = vec![profile("a", vec![1.0], None), profile("b", vec![0.0], None)];
        assert_eq!(
            build_similarity_network(&zero).unwrap_err(),
            GraphError::ZeroNorm("b".into())
        );
        let dup = vec![profile("a", vec![1.0], None), profile("a", vec![2.0], None)];
        assert_eq!(
            build_similarity_network(&dup).unwrap_err(),
            GraphError::DuplicateArtist("a".into())
        );
        let mut ps = three();
        ps[1].mean_year = None;
        assert_eq!(build_lineage(&ps).unwrap_err(), GraphError::MissingYear("B".into()));
    }

    #[test]
    fn lineage_orients_by_year() {
        let mut ps = three();
        ps[0].mean_year = Some(1650.0);
        ps[1].mean_year = Some(1601.0);
        ps[2].mean_year = Some(1700.0);
        let b = build_lineage(&ps).unwrap();
        let pairs: Vec<_> = b
            .graph
            .edges
            .iter()
            .map(|e| (e.src.as_str(), e.dst.as_str()))
            .collect();
        assert_eq!(pairs, vec![("B", "A"), ("B", "C")]);
        assert!(b.equal_year_edges.is_empty());

        ps[2].mean_year = Some(1601.0);
        let b = build_lineage(&ps).unwrap();
        assert_eq!(b.equal_year_edges, vec![("B".to_string(), "C".to_string())]);
        assert!(b.graph.edges.iter().any(|e| e.src == "B" && e.dst == "C"));
    }

    #[test]
    fn timeline_layout() {
        let single = build_similarity_network(&three()).unwrap().graph;
        let mut one = single.clone();
        one.nodes.truncate(1);
        one.nodes[0].mean_year = Some(1503.0);
        assert_eq!(layout_timeline(&one)["A"], (1503.0, 0.0));

        let mut g = single;
        g.nodes[0].mean_year = Some(1500.0);
        g.nodes[1].mean_year = Some(1502.0);
        g.nodes[2].mean_year = Some(1510.0);
        let pos = layout_timeline(&g);
        assert_eq!(pos["A"], (1500.0, 0.0));
        assert_eq!(pos["B"], (1502.0, 1.0));
        assert_eq!(pos["C"], (1510.0, 0.0));
    }

    #[test]
    fn dot_export() {
        let g = build_similarity_network(&three()).unwrap().graph;
        let dot = to_dot(&g, &BTreeMap::from([("A".to_string(), "7".to_string())]));
        assert!(dot.starts_with("graph artists {"));
        assert!(dot.contains("\"A\" [label=\"7\", class=\"Baroque\""));
        assert!(dot.contains("\"A\" -- \"B\" [weight="));
        assert_eq!(dot, to_dot(&g, &BTreeMap::from([("A".to_string(), "7".to_string())])));

        let mut lone = g.clone();
        lone.nodes.truncate(1);
        lone.edges.clear();
        let dot = to_dot(&lone, &BTreeMap::new());
        assert_eq!(dot.matches(" [label=").count(), 1);
        assert!(dot.trim_end().ends_with('}'));

        assert_eq!("DOT".parse::<ExportFormat>().unwrap(), ExportFormat::Dot);
        assert!("png".parse::<ExportFormat>().is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut ps = three();
        ps[1].mean_year = None;
        let g = build_similarity_network(&ps).unwrap().graph;
        let back = from_json(to_json(&g).as_bytes(), false).unwrap();
        assert_eq!(back, g);
        assert!(from_json(b"{\"nodes\": 3}", false).is_err());
    }

    #[test]
    fn artist_index_and_linkage_report() {
        let idx = read_artist_index(b"index,artist_name\n1,Pablo Picasso\n2,Georges Braque\n").unwrap();
        assert_eq!(idx["Georges Braque"], "2");
        assert!(read_artist_index(b"a,b\n1,x\n").is_err());

        let ps = vec![
            profile("p", vec![1.0, 0.1], None),
            profile("b", vec![1.0, 0.2], None),
            profile("k", vec![0.0, 1.0], None),
        ];
        let g = build_similarity_network(&ps).unwrap().graph;
        let names = BTreeMap::from([
            ("p".to_string(), "Pablo Picasso".to_string()),
            ("b".to_string(), "Georges Braque".to_string()),
            ("k".to_string(), "Paul Klee".to_string()),
        ]);
        let report = expected_linkage_report(&g, &names);
        assert_eq!(report[0].2, LinkageStatus::Linked);
        assert_eq!(report[3].2, LinkageStatus::Absent);
    }
}
