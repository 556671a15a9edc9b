//! Thresholded causal graph over scan results, cause-effect pair
//! enumeration, and flat-file exports (JSON document and RDF N-Triples).

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::granger::PairScan;
use crate::series::TimeSeriesMatrix;

const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
const XSD_DOUBLE: &str = "http://www.w3.org/2001/XMLSchema#double";

/// How the best-lag p-value of a scan is compared with `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagCorrection {
    /// Compare directly with `alpha`.
    None,
    /// Compare with `alpha / L` for a scan over `L` lags. The best of `L`
    /// null p-values falls below a raw `alpha` far more often than `alpha`.
    #[default]
    Bonferroni,
}

impl LagCorrection {
    pub fn threshold(self, alpha: f64, lags_scanned: usize) -> f64 {
        match self {
            LagCorrection::None => alpha,
            LagCorrection::Bonferroni => alpha / lags_scanned.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEdge {
    pub cause: usize,
    pub effect: usize,
    pub lag: usize,
    pub p_value: f64,
    pub f_stat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalGraph {
    pub nodes: Vec<String>,
    pub alpha: f64,
    #[serde(default)]
    pub correction: LagCorrection,
    pub edges: Vec<GraphEdge>,
}

/// Keeps the best lag of every scan whose p-value passes the (corrected)
/// threshold. Edges come out sorted by `(effect, cause)`.
pub fn build_graph(
    scans: &[PairScan],
    nodes: &[String],
    alpha: f64,
    correction: LagCorrection,
) -> Result<CausalGraph> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for s in scans {
        if s.cause >= nodes.len() || s.effect >= nodes.len() {
            return Err(Error::Invalid(format!(
                "scan ({} -> {}) references a variable outside the {} nodes",
                s.cause,
                s.effect,
                nodes.len()
            )));
        }
        if s.cause == s.effect {
            return Err(Error::Invalid(format!("self-pair scan for variable {}", s.cause)));
        }
        if !seen.insert((s.cause, s.effect)) {
            return Err(Error::Invalid(format!("duplicate scan for pair ({} -> {})", s.cause, s.effect)));
        }
        let best = s.scan.best();
        if best.p_value <= correction.threshold(alpha, s.scan.max_lag()) {
            edges.push(GraphEdge {
                cause: s.cause,
                effect: s.effect,
                lag: s.scan.best_lag,
                p_value: best.p_value,
                f_stat: best.f_stat,
            });
        }
    }
    edges.sort_by_key(|e| (e.effect, e.cause));
    let graph = CausalGraph {
        nodes: nodes.to_vec(),
        alpha,
        correction,
        edges,
    };
    graph.validate()?;
    Ok(graph)
}

impl CausalGraph {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::schema("alpha", format!("{} not in (0, 1)", self.alpha)));
        }
        let mut names = HashSet::new();
        for (k, n) in self.nodes.iter().enumerate() {
            if n.is_empty() || !names.insert(n.as_str()) {
                return Err(Error::schema(format!("nodes[{k}]"), "names must be non-empty and unique"));
            }
        }
        let mut pairs = HashSet::new();
        for (k, e) in self.edges.iter().enumerate() {
            let at = |f: &str| format!("edges[{k}].{f}");
            if e.cause >= self.nodes.len() {
                return Err(Error::schema(at("cause"), format!("index {} has no node", e.cause)));
            }
            if e.effect >= self.nodes.len() {
                return Err(Error::schema(at("effect"), format!("index {} has no node", e.effect)));
            }
            if e.cause == e.effect {
                return Err(Error::schema(at("effect"), "self-edges are not allowed"));
            }
            if e.lag == 0 {
                return Err(Error::schema(at("lag"), "must be >= 1"));
            }
            if !(0.0..=1.0).contains(&e.p_value) {
                return Err(Error::schema(at("p_value"), format!("{} not in [0, 1]", e.p_value)));
            }
            if e.p_value > self.alpha {
                return Err(Error::schema(at("p_value"), format!("{} exceeds alpha {}", e.p_value, self.alpha)));
            }
            if !(e.f_stat.is_finite() && e.f_stat >= 0.0) {
                return Err(Error::schema(at("f_stat"), format!("{} must be finite and >= 0", e.f_stat)));
            }
            if !pairs.insert((e.cause, e.effect)) {
                return Err(Error::schema(at("cause"), "more than one edge for this ordered pair"));
            }
        }
        Ok(())
    }

    pub fn export_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn import_json(text: &str) -> Result<Self> {
        let graph: CausalGraph = serde_json::from_str(text)?;
        graph.validate()?;
        Ok(graph)
    }

    /// One edge resource per edge with four triples (cause, effect, lag,
    /// p-value); lines sorted, newline-terminated.
    pub fn export_ntriples(&self) -> String {
        let mut lines = Vec::with_capacity(4 * self.edges.len());
        for e in &self.edges {
            let subject = format!("<urn:cts:edge/{}-{}>", e.cause, e.effect);
            lines.push(format!("{subject} <urn:cts:cause> <urn:cts:var/{}> .", e.cause));
            lines.push(format!("{subject} <urn:cts:effect> <urn:cts:var/{}> .", e.effect));
            lines.push(format!("{subject} <urn:cts:lag> \"{}\"^^<{XSD_INTEGER}> .", e.lag));
            lines.push(format!("{subject} <urn:cts:pValue> \"{:e}\"^^<{XSD_DOUBLE}> .", e.p_value));
        }
        lines.sort();
        let mut out = String::new();
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }

    /// The part of each edge carried by the N-Triples export.
    pub fn edge_triples(&self) -> Vec<EdgeTriples> {
        let mut v: Vec<EdgeTriples> = self
            .edges
            .iter()
            .map(|e| EdgeTriples {
                cause: e.cause,
                effect: e.effect,
                lag: e.lag,
                p_value: e.p_value,
            })
            .collect();
        v.sort_by_key(|e| (e.effect, e.cause));
        v
    }
}

/// Edge fields recoverable from N-Triples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTriples {
    pub cause: usize,
    pub effect: usize,
    pub lag: usize,
    pub p_value: f64,
}

#[derive(Default)]
struct PartialEdge {
    cause: Option<usize>,
    effect: Option<usize>,
    lag: Option<usize>,
    p_value: Option<f64>,
}

/// Line-level reader for the N-Triples produced by
/// [`CausalGraph::export_ntriples`].
pub fn parse_ntriples(text: &str) -> Result<Vec<EdgeTriples>> {
    let mut edges: BTreeMap<String, PartialEdge> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = format!("line {}", k + 1);
        let (subject, rest) = take_iri(line).ok_or_else(|| Error::schema(&at, "expected subject IRI"))?;
        let (predicate, rest) = take_iri(rest.trim_start()).ok_or_else(|| Error::schema(&at, "expected predicate IRI"))?;
        let rest = rest.trim_start();
        let (object, rest) = take_object(rest).ok_or_else(|| Error::schema(&at, "expected object"))?;
        if rest.trim() != "." {
            return Err(Error::schema(&at, "triple must end with ` .`"));
        }
        let edge = edges.entry(subject.to_string()).or_default();
        let bad = |what: &str| Error::schema(&at, format!("malformed {what}"));
        match (predicate, object) {
            ("urn:cts:cause", Object::Iri(o)) => edge.cause = Some(var_index(o).ok_or_else(|| bad("cause"))?),
            ("urn:cts:effect", Object::Iri(o)) => edge.effect = Some(var_index(o).ok_or_else(|| bad("effect"))?),
            ("urn:cts:lag", Object::Literal(v, dt)) if dt == XSD_INTEGER => {
                edge.lag = Some(v.parse().map_err(|_| bad("lag"))?)
            }
            ("urn:cts:pValue", Object::Literal(v, dt)) if dt == XSD_DOUBLE => {
                edge.p_value = Some(v.parse().map_err(|_| bad("p-value"))?)
            }
            _ => return Err(Error::schema(&at, format!("unexpected predicate/object for `{predicate}`"))),
        }
    }
    let mut out = Vec::with_capacity(edges.len());
    for (subject, e) in edges {
        match (e.cause, e.effect, e.lag, e.p_value) {
            (Some(cause), Some(effect), Some(lag), Some(p_value)) => out.push(EdgeTriples {
                cause,
                effect,
                lag,
                p_value,
            }),
            _ => return Err(Error::schema(subject, "edge resource is missing triples")),
        }
    }
    out.sort_by_key(|e| (e.effect, e.cause));
    Ok(out)
}

enum Object<'a> {
    Iri(&'a str),
    Literal(&'a str, &'a str),
}

fn take_iri(s: &str) -> Option<(&str, &str)> {
    let s = s.strip_prefix('<')?;
    let end = s.find('>')?;
    Some((&s[..end], &s[end + 1..]))
}

fn take_object(s: &str) -> Option<(Object<'_>, &str)> {
    if s.starts_with('<') {
        let (iri, rest) = take_iri(s)?;
        return Some((Object::Iri(iri), rest));
    }
    let s = s.strip_prefix('"')?;
    let end = s.find('"')?;
    let lexical = &s[..end];
    let rest = s[end + 1..].strip_prefix("^^")?;
    let (dt, rest) = take_iri(rest)?;
    Some((Object::Literal(lexical, dt), rest))
}

fn var_index(iri: &str) -> Option<usize> {
    iri.strip_prefix("urn:cts:var/")?.parse().ok()
}

/// An effect series, one of its causes, and the lag between them, borrowed
/// from the data they were discovered in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauseEffectPair<'a> {
    pub effect_index: usize,
    pub cause_index: usize,
    pub effect_name: &'a str,
    pub cause_name: &'a str,
    pub effect: &'a [f64],
    pub cause: &'a [f64],
    pub lag: usize,
}

/// One pair per graph edge, in edge order. Variables are matched by name so
/// a graph discovered on one span can be applied to a longer series.
pub fn enumerate_pairs<'a>(graph: &CausalGraph, data: &'a TimeSeriesMatrix) -> Result<Vec<CauseEffectPair<'a>>> {
    graph
        .edges
        .iter()
        .map(|e| {
            let lookup = |idx: usize| {
                let name = &graph.nodes[idx];
                data.index_of(name)
                    .ok_or_else(|| Error::Invalid(format!("variable `{name}` not present in the data")))
            };
            let effect_index = lookup(e.effect)?;
            let cause_index = lookup(e.cause)?;
            Ok(CauseEffectPair {
                effect_index,
                cause_index,
                effect_name: &data.names()[effect_index],
                cause_name: &data.names()[cause_index],
                effect: data.column(effect_index),
                cause: data.column(cause_index),
                lag: e.lag,
            })
        })
        .collect()
}
