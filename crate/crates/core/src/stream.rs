//! The graph text format, multi-pass edge streams, space accounting and
//! synthetic instance generators.
//!
//! File format, one record per line, `#` starts a comment:
//!
//! ```text
//! p lb <numClients> <numServers> <numEdges>
//! w <clientIndex> <weight>        # optional, weight defaults to 1
//! e <clientIndex> <serverIndex>   # stream order is file order
//! ```

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Edge, GraphSpec};

/// Peak-tracking word counter. One word is one stored edge entry, vertex
/// scalar or counter.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SpaceAccountant {
    current: usize,
    peak: usize,
}

impl SpaceAccountant {
    pub fn charge(&mut self, words: usize) {
        self.current += words;
        self.peak = self.peak.max(self.current);
    }

    pub fn release(&mut self, words: usize) {
        debug_assert!(words <= self.current, "releasing more words than charged");
        self.current = self.current.saturating_sub(words);
    }

    pub fn current_words(&self) -> usize {
        self.current
    }

    pub fn peak_words(&self) -> usize {
        self.peak
    }
}

#[derive(Clone, Debug)]
enum EdgeSource {
    Memory(Arc<[Edge]>),
    File(PathBuf),
}

/// A re-readable edge stream over a known vertex set.
///
/// Every call to [`EdgeStream::pass`] replays the same edges in the same
/// order and bumps the pass counter once the pass completes.
#[derive(Clone, Debug)]
pub struct EdgeStream {
    source: EdgeSource,
    num_clients: usize,
    num_servers: usize,
    passes: usize,
    space: SpaceAccountant,
}

impl EdgeStream {
    /// An in-memory stream replaying `graph`'s edges in stream order.
    pub fn from_graph(graph: &GraphSpec) -> Self {
        EdgeStream {
            source: EdgeSource::Memory(graph.edges().into()),
            num_clients: graph.num_clients(),
            num_servers: graph.num_servers(),
            passes: 0,
            space: SpaceAccountant::default(),
        }
    }

    /// The same stream with its edge order permuted once by `seed`.
    pub fn shuffled(&self, seed: u64) -> Result<Self> {
        let mut edges = Vec::new();
        let mut probe = self.clone();
        probe.pass(|e| edges.push(e))?;
        edges.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(EdgeStream {
            source: EdgeSource::Memory(edges.into()),
            num_clients: self.num_clients,
            num_servers: self.num_servers,
            passes: self.passes,
            space: self.space.clone(),
        })
    }

    pub fn num_clients(&self) -> usize {
        self.num_clients
    }

    pub fn num_servers(&self) -> usize {
        self.num_servers
    }

    /// Completed passes so far.
    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn space(&self) -> &SpaceAccountant {
        &self.space
    }

    pub fn space_mut(&mut self) -> &mut SpaceAccountant {
        &mut self.space
    }

    /// Runs one full pass, handing each edge to `visit` in stream order.
    pub fn pass(&mut self, mut visit: impl FnMut(Edge)) -> Result<()> {
        match &self.source {
            EdgeSource::Memory(edges) => edges.iter().copied().for_each(&mut visit),
            EdgeSource::File(path) => {
                let file = fs::File::open(path).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
                for (idx, line) in BufReader::new(file).lines().enumerate() {
                    let line = line.map_err(|source| Error::Io {
                        path: path.clone(),
                        source,
                    })?;
                    if let Record::Edge(e) = parse_record(idx + 1, &line)? {
                        visit(e);
                    }
                }
            }
        }
        self.passes += 1;
        Ok(())
    }
}

#[derive(Debug)]
enum Record {
    Blank,
    Header {
        clients: usize,
        servers: usize,
        edges: usize,
    },
    Weight {
        client: usize,
        weight: u64,
    },
    Edge(Edge),
}

fn parse_record(line_no: usize, line: &str) -> Result<Record> {
    let body = line.split('#').next().unwrap_or("");
    let fields: Vec<&str> = body.split_whitespace().collect();
    let num = |i: usize| -> Result<u64> {
        fields
            .get(i)
            .ok_or_else(|| Error::parse(line_no, "missing field"))?
            .parse::<u64>()
            .map_err(|_| Error::parse(line_no, format!("expected an integer, found {:?}", fields[i])))
    };
    let arity = |n: usize| -> Result<()> {
        if fields.len() == n {
            Ok(())
        } else {
            Err(Error::parse(
                line_no,
                format!("expected {} fields, found {}", n, fields.len()),
            ))
        }
    };
    match fields.first().copied() {
        None => Ok(Record::Blank),
        Some("p") => {
            arity(5)?;
            if fields[1] != "lb" {
                return Err(Error::parse(line_no, format!("unknown problem kind {:?}", fields[1])));
            }
            Ok(Record::Header {
                clients: num(2)? as usize,
                servers: num(3)? as usize,
                edges: num(4)? as usize,
            })
        }
        Some("w") => {
            arity(3)?;
            Ok(Record::Weight {
                client: num(1)? as usize,
                weight: num(2)?,
            })
        }
        Some("e") => {
            arity(3)?;
            Ok(Record::Edge(Edge::new(num(1)? as usize, num(2)? as usize)))
        }
        Some(other) => Err(Error::parse(line_no, format!("unknown record type {other:?}"))),
    }
}

fn parse_lines<I>(lines: I) -> Result<GraphSpec>
where
    I: IntoIterator<Item = Result<String>>,
{
    let mut header: Option<(usize, usize, usize)> = None;
    let mut weights: Vec<Option<u64>> = Vec::new();
    let mut edges = Vec::new();
    for (idx, line) in lines.into_iter().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        match parse_record(line_no, &line)? {
            Record::Blank => {}
            Record::Header {
                clients,
                servers,
                edges: m,
            } => {
                if header.is_some() {
                    return Err(Error::parse(line_no, "repeated header"));
                }
                if clients == 0 || servers == 0 {
                    return Err(Error::parse(line_no, "need at least one client and one server"));
                }
                header = Some((clients, servers, m));
                weights = vec![None; clients];
            }
            Record::Weight { client, weight } => {
                let (clients, _, _) =
                    header.ok_or_else(|| Error::parse(line_no, "weight before header"))?;
                if client >= clients {
                    return Err(Error::parse(line_no, format!("client {client} out of range")));
                }
                if weight < 1 {
                    return Err(Error::InvalidWeight { client, weight });
                }
                if weights[client].replace(weight).is_some() {
                    return Err(Error::parse(line_no, format!("repeated weight for client {client}")));
                }
            }
            Record::Edge(e) => {
                let (clients, servers, _) =
                    header.ok_or_else(|| Error::parse(line_no, "edge before header"))?;
                if e.client >= clients || e.server >= servers {
                    return Err(Error::parse(
                        line_no,
                        format!("edge ({}, {}) out of range", e.client, e.server),
                    ));
                }
                edges.push(e);
            }
        }
    }
    let (clients, servers, m) = header.ok_or_else(|| Error::parse(1, "missing header line"))?;
    if edges.len() != m {
        return Err(Error::Validation(format!(
            "header declares {m} edges, file has {}",
            edges.len()
        )));
    }
    let weights = weights.into_iter().map(|w| w.unwrap_or(1)).collect();
    GraphSpec::new(clients, servers, weights, edges)
}

/// Parses a graph held in memory; the returned stream replays it from memory.
pub fn parse_graph_str(text: &str) -> Result<(GraphSpec, EdgeStream)> {
    let graph = parse_lines(text.lines().map(|l| Ok(l.to_owned())))?;
    let stream = EdgeStream::from_graph(&graph);
    Ok((graph, stream))
}

/// Parses and validates a graph file. The returned stream re-reads the file
/// on every pass.
pub fn parse_graph(path: impl AsRef<Path>) -> Result<(GraphSpec, EdgeStream)> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_owned(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let graph = parse_lines(
        BufReader::new(file)
            .lines()
            .map(|l| l.map_err(|source| Error::Io { path: path.to_owned(), source })),
    )?;
    let stream = EdgeStream {
        source: EdgeSource::File(path.to_owned()),
        num_clients: graph.num_clients(),
        num_servers: graph.num_servers(),
        passes: 0,
        space: SpaceAccountant::default(),
    };
    Ok((graph, stream))
}

/// Instance families produced by [`generate_instance`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Every client gets a uniformly random nonempty neighbor set.
    Random,
    Complete,
    /// Complete `n x n` graph with unit weights whose stream starts with a
    /// half matching followed by a star on the first server.
    NestedStar,
    /// Every client gets `degree` distinct uniformly chosen servers.
    Regular { degree: usize },
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "random" => return Ok(GeneratorKind::Random),
            "complete" => return Ok(GeneratorKind::Complete),
            "nested-star" => return Ok(GeneratorKind::NestedStar),
            _ => {}
        }
        let degree = s
            .strip_prefix("regular(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("regular:"))
            .ok_or_else(|| Error::Validation(format!("unknown generator kind {s:?}")))?;
        let degree = degree
            .parse()
            .map_err(|_| Error::Validation(format!("bad degree in {s:?}")))?;
        Ok(GeneratorKind::Regular { degree })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeneratorParams {
    pub clients: usize,
    pub servers: usize,
    /// Client weights are drawn uniformly from `1..=max_weight`.
    pub max_weight: u64,
}

/// Deterministic synthetic instance for `(kind, params, seed)`.
pub fn generate_instance(kind: GeneratorKind, params: GeneratorParams, seed: u64) -> Result<GraphSpec> {
    let GeneratorParams {
        clients,
        servers,
        max_weight,
    } = params;
    if clients == 0 || servers == 0 || max_weight == 0 {
        return Err(Error::Validation("sizes and weights must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights: Vec<u64> = (0..clients).map(|_| rng.gen_range(1..=max_weight)).collect();
    let edges = match kind {
        GeneratorKind::Random => {
            let mut edges = Vec::new();
            for c in 0..clients {
                loop {
                    let picked: Vec<usize> = (0..servers).filter(|_| rng.gen_bool(0.5)).collect();
                    if !picked.is_empty() {
                        edges.extend(picked.into_iter().map(|s| Edge::new(c, s)));
                        break;
                    }
                }
            }
            edges.shuffle(&mut rng);
            edges
        }
        GeneratorKind::Regular { degree } => {
            if degree == 0 || degree > servers {
                return Err(Error::Validation(format!(
                    "degree {degree} is infeasible with {servers} servers"
                )));
            }
            let all: Vec<usize> = (0..servers).collect();
            let mut edges: Vec<Edge> = (0..clients)
                .flat_map(|c| {
                    all.choose_multiple(&mut rng, degree)
                        .map(move |&s| Edge::new(c, s))
                        .collect::<Vec<_>>()
                })
                .collect();
            edges.shuffle(&mut rng);
            edges
        }
        GeneratorKind::Complete => (0..clients)
            .flat_map(|c| (0..servers).map(move |s| Edge::new(c, s)))
            .collect(),
        GeneratorKind::NestedStar => {
            let n = clients;
            if servers != n || !n.is_power_of_two() {
                return Err(Error::Validation(format!(
                    "nested-star needs n clients and n servers with n a power of two, got {clients}x{servers}"
                )));
            }
            weights = vec![1; n];
            let half = (n / 2).max(1);
            let mut edges: Vec<Edge> = (0..half).map(|k| Edge::new(k, k)).collect();
            edges.extend((half..n).map(|k| Edge::new(k, 0)));
            let lead: std::collections::HashSet<Edge> = edges.iter().copied().collect();
            edges.extend(
                (0..n)
                    .flat_map(|c| (0..n).map(move |s| Edge::new(c, s)))
                    .filter(|e| !lead.contains(e)),
            );
            edges
        }
    };
    GraphSpec::new(clients, servers, weights, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_instance() {
        let (g, mut s) = parse_graph_str("p lb 1 1 1\nw 0 1\ne 0 0\n").unwrap();
        assert_eq!((g.num_clients(), g.num_servers(), g.edges().len()), (1, 1, 1));
        let mut seen = vec![];
        s.pass(|e| seen.push(e)).unwrap();
        assert_eq!(seen, vec![Edge::new(0, 0)]);
        assert_eq!(s.passes(), 1);
    }

    #[test]
    fn complete_two_by_two_with_weights() {
        let text = "# comment\np lb 2 2 4\nw 0 2\nw 1 3\ne 0 0\ne 0 1 # trailing\ne 1 0\ne 1 1\n";
        let (g, _) = parse_graph_str(text).unwrap();
        assert_eq!(g.weights(), &[2, 3]);
        assert_eq!(g.edges().len(), 4);
        assert!(g.has_edge(Edge::new(1, 0)));
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            parse_graph_str("p lb 1 1 2\ne 0 0\ne 0 0\n"),
            Err(Error::DuplicateEdge(_))
        ));
        assert!(matches!(
            parse_graph_str("p lb 1 1 1\nw 0 0\ne 0 0\n"),
            Err(Error::InvalidWeight { .. })
        ));
        assert!(matches!(
            parse_graph_str("p lb 1 1 1\ne 0 x\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_graph_str("e 0 0\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_graph_str("p lb 1 1 2\ne 0 0\n"),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_graph_str("p lb 1 1 1\nq 0 0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn file_stream_replays_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        std::fs::write(&path, "p lb 2 2 3\ne 1 0\ne 0 1\ne 0 0\n").unwrap();
        let (_, mut s) = parse_graph(&path).unwrap();
        let mut runs = vec![];
        for _ in 0..3 {
            let mut seen = vec![];
            s.pass(|e| seen.push(e)).unwrap();
            runs.push(seen);
        }
        assert_eq!(s.passes(), 3);
        assert!(runs.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(runs[0][0], Edge::new(1, 0));
    }

    #[test]
    fn shuffle_is_a_fixed_permutation() {
        let g = generate_instance(GeneratorKind::Complete, GeneratorParams { clients: 4, servers: 4, max_weight: 1 }, 0).unwrap();
        let s = EdgeStream::from_graph(&g).shuffled(9).unwrap();
        let (mut a, mut b) = (vec![], vec![]);
        let mut s1 = s.clone();
        s1.pass(|e| a.push(e)).unwrap();
        s1.pass(|e| b.push(e)).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, g.sorted_edges());
    }

    #[test]
    fn space_accountant_tracks_peak() {
        let mut acc = SpaceAccountant::default();
        acc.charge(10);
        acc.release(4);
        acc.charge(2);
        assert_eq!(acc.current_words(), 8);
        assert_eq!(acc.peak_words(), 10);
    }

    #[test]
    fn generators() {
        let p = |c, s| GeneratorParams { clients: c, servers: s, max_weight: 1 };
        let g = generate_instance(GeneratorKind::Complete, p(2, 2), 0).unwrap();
        assert_eq!(g.sorted_edges(), &[Edge::new(0, 0), Edge::new(0, 1), Edge::new(1, 0), Edge::new(1, 1)]);

        let g = generate_instance(GeneratorKind::NestedStar, p(4, 4), 0).unwrap();
        assert_eq!(g.edges().len(), 16);
        assert_eq!(g.weights(), &[1; 4]);
        assert_eq!(&g.edges()[..4], &[Edge::new(0, 0), Edge::new(1, 1), Edge::new(2, 0), Edge::new(3, 0)]);
        assert!(generate_instance(GeneratorKind::NestedStar, p(3, 3), 0).is_err());

        let rp = GeneratorParams { clients: 5, servers: 3, max_weight: 4 };
        let a = generate_instance(GeneratorKind::Random, rp, 7).unwrap();
        let b = generate_instance(GeneratorKind::Random, rp, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.client_degrees().iter().all(|&d| d >= 1));

        let r = generate_instance(GeneratorKind::Regular { degree: 2 }, p(6, 3), 1).unwrap();
        assert!(r.client_degrees().iter().all(|&d| d == 2));
        assert!(generate_instance(GeneratorKind::Regular { degree: 4 }, p(6, 3), 1).is_err());
    }

    #[test]
    fn generator_kind_parsing() {
        assert_eq!("regular(3)".parse::<GeneratorKind>().unwrap(), GeneratorKind::Regular { degree: 3 });
        assert_eq!("nested-star".parse::<GeneratorKind>().unwrap(), GeneratorKind::NestedStar);
        assert!("bogus".parse::<GeneratorKind>().is_err());
    }
}
