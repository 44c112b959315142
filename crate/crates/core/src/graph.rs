//! Weighted undirected networks: construction, geodesic distances,
//! connectivity, Louvain communities and weighted stochastic block models.
//!
//! Edge weights are path costs. Geodesics sum them along a path; Louvain uses
//! unit weights unless asked to treat the stored values as affinities.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::{BufRead, Write};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::rng_for;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GraphError {
    #[error("duplicate edge between {0} and {1}")]
    DuplicateEdge(usize, usize),
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("vertex id {id} out of range for {n} vertices")]
    IdOutOfRange { id: usize, n: usize },
    #[error("edge ({u},{v}) has negative or non-finite weight {weight}")]
    NegativeWeight { u: usize, v: usize, weight: f64 },
    #[error("network must have at least one vertex")]
    Empty,
    #[error("invalid block model: {0}")]
    InvalidSbm(String),
    #[error("sampled network still disconnected after {0} attempts")]
    ConnectivityFailure(usize),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Undirected weighted graph over vertices `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    n: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl Network {
    /// Builds a network, rejecting self-loops, duplicates and negative weights.
    pub fn new(n: usize, edge_list: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut seen = BTreeMap::new();
        let mut adjacency = vec![Vec::new(); n];
        let mut edges = Vec::with_capacity(edge_list.len());
        for &(u, v, weight) in edge_list {
            for id in [u, v] {
                if id >= n {
                    return Err(GraphError::IdOutOfRange { id, n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if !weight.is_finite() || weight < 0.0 {
                return Err(GraphError::NegativeWeight { u, v, weight });
            }
            let key = (u.min(v), u.max(v));
            if seen.insert(key, ()).is_some() {
                return Err(GraphError::DuplicateEdge(key.0, key.1));
            }
            adjacency[u].push((v, weight));
            adjacency[v].push((u, weight));
            edges.push(Edge { u, v, weight });
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(v, _)| v);
        }
        Ok(Self { n, edges, adjacency })
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[(usize, f64)] {
        &self.adjacency[u]
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        let list = self.adjacency.get(u)?;
        list.binary_search_by_key(&v, |&(w, _)| w).ok().map(|i| list[i].1)
    }

    /// Component label per vertex, labels assigned in order of smallest member.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..self.n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adjacency[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }

    /// All-pairs shortest path costs; `+inf` marks unreachable pairs.
    pub fn geodesic_matrix(&self) -> DistanceMatrix {
        let rows: Vec<Vec<f64>> = (0..self.n).into_par_iter().map(|s| self.dijkstra(s)).collect();
        let mut data = Vec::with_capacity(self.n * self.n);
        for row in rows {
            data.extend(row);
        }
        // Symmetrize: Dijkstra from both ends may differ in the last ulp.
        let n = self.n;
        for i in 0..n {
            for j in (i + 1)..n {
                let m = data[i * n + j].min(data[j * n + i]);
                data[i * n + j] = m;
                data[j * n + i] = m;
            }
        }
        DistanceMatrix { n, data }
    }

    fn dijkstra(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapItem { cost: 0.0, vertex: source });
        while let Some(HeapItem { cost, vertex }) = heap.pop() {
            if cost > dist[vertex] {
                continue;
            }
            for &(next, w) in &self.adjacency[vertex] {
                let c = cost + w;
                if c < dist[next] {
                    dist[next] = c;
                    heap.push(HeapItem { cost: c, vertex: next });
                }
            }
        }
        dist
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem {
    cost: f64,
    vertex: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dense symmetric matrix of geodesic distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Wraps a row-major `n x n` matrix; checks shape, zero diagonal and symmetry.
    pub fn from_rows(n: usize, data: Vec<f64>) -> Option<Self> {
        if data.len() != n * n {
            return None;
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return None;
            }
            for j in 0..n {
                let d = data[i * n + j];
                if d.is_nan() || d < 0.0 || d != data[j * n + i] {
                    return None;
                }
            }
        }
        Some(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Largest finite off-diagonal distance.
    pub fn diameter(&self) -> f64 {
        self.data.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max)
    }

    /// Smallest strictly positive finite distance, if any.
    pub fn min_positive(&self) -> Option<f64> {
        self.data
            .iter()
            .copied()
            .filter(|d| d.is_finite() && *d > 0.0)
            .min_by(|a, b| a.total_cmp(b))
    }
}

/// Community label per vertex with contiguous labels `0..n_communities`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    n_communities: usize,
}

impl Partition {
    /// Relabels arbitrary ids to `0..k` in order of first appearance.
    pub fn from_labels(raw: &[usize]) -> Self {
        let mut map = BTreeMap::new();
        let labels: Vec<usize> = raw
            .iter()
            .map(|r| {
                let next = map.len();
                *map.entry(*r).or_insert(next)
            })
            .collect();
        Self { n_communities: map.len(), labels }
    }

    pub fn singletons(n: usize) -> Self {
        Self { labels: (0..n).collect(), n_communities: n }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn n_communities(&self) -> usize {
        self.n_communities
    }

    pub fn members(&self, community: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&v| self.labels[v] == community).collect()
    }
}

/// Newman modularity of `partition` with unit or stored edge weights.
pub fn modularity(g: &Network, partition: &Partition, use_edge_weights: bool) -> f64 {
    let w = |e: &Edge| if use_edge_weights { e.weight } else { 1.0 };
    let m: f64 = g.edges().iter().map(w).sum();
    if m <= 0.0 {
        return 0.0;
    }
    let k = partition.n_communities();
    let mut inside = vec![0.0; k];
    let mut total = vec![0.0; k];
    for e in g.edges() {
        let (cu, cv) = (partition.labels[e.u], partition.labels[e.v]);
        let we = w(e);
        if cu == cv {
            inside[cu] += we;
        }
        total[cu] += we;
        total[cv] += we;
    }
    (0..k).map(|c| inside[c] / m - (total[c] / (2.0 * m)).powi(2)).sum()
}

/// Multi-level Louvain modularity optimization.
///
/// Node sweeps follow a seed-shuffled order; candidate communities are
/// scanned in ascending id and a node only moves on a strict gain.
pub fn louvain_communities(g: &Network, seed: u64, use_edge_weights: bool) -> Partition {
    let n = g.n_vertices();
    let mut level = LouvainGraph::from_network(g, use_edge_weights);
    if level.total_weight <= 0.0 {
        return Partition::singletons(n);
    }
    let mut membership: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(seed, &[0x10_u64]);
    loop {
        let (community, moved) = level.local_moving(&mut rng);
        if !moved {
            break;
        }
        let relabeled = Partition::from_labels(&community);
        for m in membership.iter_mut() {
            *m = relabeled.labels[*m];
        }
        level = level.aggregate(&relabeled);
        if level.n == 1 {
            break;
        }
    }
    Partition::from_labels(&membership)
}

struct LouvainGraph {
    n: usize,
    adjacency: Vec<Vec<(usize, f64)>>,
    self_weight: Vec<f64>,
    degree: Vec<f64>,
    total_weight: f64,
}

impl LouvainGraph {
    fn from_network(g: &Network, use_edge_weights: bool) -> Self {
        let n = g.n_vertices();
        let mut adjacency = vec![Vec::new(); n];
        for e in g.edges() {
            let w = if use_edge_weights { e.weight } else { 1.0 };
            if w > 0.0 {
                adjacency[e.u].push((e.v, w));
                adjacency[e.v].push((e.u, w));
            }
        }
        Self::assemble(adjacency, vec![0.0; n])
    }

    fn assemble(adjacency: Vec<Vec<(usize, f64)>>, self_weight: Vec<f64>) -> Self {
        let n = adjacency.len();
        let degree: Vec<f64> = (0..n)
            .map(|i| 2.0 * self_weight[i] + adjacency[i].iter().map(|&(_, w)| w).sum::<f64>())
            .collect();
        let total_weight = degree.iter().sum::<f64>() / 2.0;
        Self { n, adjacency, self_weight, degree, total_weight }
    }

    fn local_moving(&self, rng: &mut impl Rng) -> (Vec<usize>, bool) {
        let m = self.total_weight;
        let mut community: Vec<usize> = (0..self.n).collect();
        let mut tot = self.degree.clone();
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(rng);
        let mut any_move = false;
        let mut links: BTreeMap<usize, f64> = BTreeMap::new();
        for _sweep in 0..1000 {
            let mut moved = false;
            for &i in &order {
                let own = community[i];
                let ki = self.degree[i];
                links.clear();
                links.insert(own, 0.0);
                for &(j, w) in &self.adjacency[i] {
                    *links.entry(community[j]).or_insert(0.0) += w;
                }
                tot[own] -= ki;
                let gain = |c: usize, kic: f64| kic / m - tot[c] * ki / (2.0 * m * m);
                let mut best = own;
                let mut best_gain = gain(own, links[&own]);
                for (&c, &kic) in links.iter() {
                    let g = gain(c, kic);
                    if g > best_gain + 1e-12 {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += ki;
                if best != own {
                    community[i] = best;
                    moved = true;
                    any_move = true;
                }
            }
            if !moved {
                break;
            }
        }
        (community, any_move)
    }

    fn aggregate(&self, partition: &Partition) -> Self {
        let k = partition.n_communities();
        let mut self_weight = vec![0.0; k];
        let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        for i in 0..self.n {
            let ci = partition.labels[i];
            self_weight[ci] += self.self_weight[i];
            for &(j, w) in &self.adjacency[i] {
                let cj = partition.labels[j];
                if ci == cj {
                    // each internal edge is visited from both ends
                    self_weight[ci] += w / 2.0;
                } else {
                    *maps[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        let adjacency = maps.into_iter().map(|m| m.into_iter().collect()).collect();
        Self::assemble(adjacency, self_weight)
    }
}

/// How edge weights of a sampled block model are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WeightRule {
    One,
    Random { lo: f64, hi: f64 },
    InOut { intra: (f64, f64), inter: (f64, f64) },
}

impl WeightRule {
    pub fn random_default() -> Self {
        WeightRule::Random { lo: 0.1, hi: 0.9 }
    }

    pub fn in_out_default() -> Self {
        WeightRule::InOut { intra: (0.3, 0.6), inter: (0.6, 0.9) }
    }

    fn draw(&self, same_block: bool, rng: &mut impl Rng) -> f64 {
        match *self {
            WeightRule::One => 1.0,
            WeightRule::Random { lo, hi } => rng.random_range(lo..=hi),
            WeightRule::InOut { intra, inter } => {
                let (lo, hi) = if same_block { intra } else { inter };
                rng.random_range(lo..=hi)
            }
        }
    }

    fn validate(&self) -> Result<(), GraphError> {
        let ok = |(lo, hi): (f64, f64)| lo > 0.0 && hi >= lo && hi.is_finite();
        let valid = match *self {
            WeightRule::One => true,
            WeightRule::Random { lo, hi } => ok((lo, hi)),
            WeightRule::InOut { intra, inter } => ok(intra) && ok(inter),
        };
        if valid {
            Ok(())
        } else {
            Err(GraphError::InvalidSbm(format!("weight ranges must lie in (0, inf): {self:?}")))
        }
    }
}

/// Weighted stochastic block model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub block_sizes: Vec<usize>,
    /// Link probability inside each block.
    pub intra_p: Vec<f64>,
    pub inter_p: f64,
    pub weight_rule: WeightRule,
}

/// Resampling attempts before bridging components.
pub const SBM_MAX_RESAMPLES: usize = 20;

impl SbmSpec {
    pub fn n_vertices(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    /// Block index per vertex; blocks occupy contiguous id ranges.
    pub fn block_labels(&self) -> Vec<usize> {
        self.block_sizes
            .iter()
            .enumerate()
            .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
            .collect()
    }

    fn validate(&self) -> Result<(), GraphError> {
        if self.block_sizes.is_empty() || self.block_sizes.contains(&0) {
            return Err(GraphError::InvalidSbm("block sizes must be positive".into()));
        }
        if self.intra_p.len() != self.block_sizes.len() {
            return Err(GraphError::InvalidSbm(format!(
                "{} intra probabilities for {} blocks",
                self.intra_p.len(),
                self.block_sizes.len()
            )));
        }
        let in_unit = |p: f64| (0.0..=1.0).contains(&p);
        if !self.intra_p.iter().all(|&p| in_unit(p)) || !in_unit(self.inter_p) {
            return Err(GraphError::InvalidSbm("probabilities must lie in [0, 1]".into()));
        }
        self.weight_rule.validate()
    }
}

/// Samples a connected weighted SBM network.
///
/// Up to [`SBM_MAX_RESAMPLES`] independent draws are tried; if all are
/// disconnected the last draw is bridged with one edge per extra component.
pub fn generate_wsbm(spec: &SbmSpec, seed: u64) -> Result<Network, GraphError> {
    spec.validate()?;
    let labels = spec.block_labels();
    let n = labels.len();
    let mut last = None;
    for attempt in 0..SBM_MAX_RESAMPLES {
        let mut rng = rng_for(seed, &[0x5B, attempt as u64]);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                let same = labels[u] == labels[v];
                let p = if same { spec.intra_p[labels[u]] } else { spec.inter_p };
                if rng.random::<f64>() < p {
                    edges.push((u, v, spec.weight_rule.draw(same, &mut rng)));
                }
            }
        }
        let g = Network::new(n, &edges)?;
        if g.is_connected() {
            return Ok(g);
        }
        last = Some((edges, g));
    }
    let (mut edges, g) = last.expect("at least one attempt");
    let mut rng = rng_for(seed, &[0x5B, SBM_MAX_RESAMPLES as u64]);
    let comp = g.components();
    let n_comp = comp.iter().max().map_or(0, |m| m + 1);
    let members: Vec<Vec<usize>> = (0..n_comp)
        .map(|c| (0..n).filter(|&v| comp[v] == c).collect())
        .collect();
    for c in 1..n_comp {
        let u = *members[c - 1].choose(&mut rng).expect("nonempty component");
        let v = *members[c].choose(&mut rng).expect("nonempty component");
        let same = labels[u] == labels[v];
        edges.push((u, v, spec.weight_rule.draw(same, &mut rng)));
    }
    let bridged = Network::new(n, &edges)?;
    if bridged.is_connected() {
        Ok(bridged)
    } else {
        Err(GraphError::ConnectivityFailure(SBM_MAX_RESAMPLES))
    }
}

/// Writes the `u,v,weight` edge-list CSV.
pub fn write_edge_csv<W: Write>(g: &Network, mut out: W) -> std::io::Result<()> {
    writeln!(out, "u,v,weight")?;
    for e in g.edges() {
        writeln!(out, "{},{},{}", e.u, e.v, e.weight)?;
    }
    Ok(())
}

/// Reads a `u,v,weight` edge-list CSV. When `n_vertices` is `None` the vertex
/// count is one more than the largest id seen.
pub fn read_edge_csv<R: BufRead>(input: R, n_vertices: Option<usize>) -> Result<Network, GraphError> {
    let mut edges = Vec::new();
    let mut saw_header = false;
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| GraphError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !saw_header {
            let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if cols != ["u", "v", "weight"] {
                return Err(GraphError::Malformed {
                    line: lineno,
                    reason: format!("expected header `u,v,weight`, found `{trimmed}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(GraphError::Malformed {
                line: lineno,
                reason: format!("expected 3 columns, found {}", cols.len()),
            });
        }
        let parse_id = |s: &str| {
            s.parse::<usize>().map_err(|_| GraphError::Malformed {
                line: lineno,
                reason: format!("invalid vertex id `{s}`"),
            })
        };
        let u = parse_id(cols[0])?;
        let v = parse_id(cols[1])?;
        let w = cols[2].parse::<f64>().map_err(|_| GraphError::Malformed {
            line: lineno,
            reason: format!("invalid weight `{}`", cols[2]),
        })?;
        edges.push((u, v, w));
    }
    if !saw_header {
        return Err(GraphError::Malformed { line: 1, reason: "missing header `u,v,weight`".into() });
    }
    let n = n_vertices.unwrap_or_else(|| edges.iter().map(|&(u, v, _)| u.max(v) + 1).max().unwrap_or(0));
    Network::new(n, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Network {
        Network::new(3, &[(0, 1, 0.5), (1, 2, 0.5)]).unwrap()
    }

    #[test]
    fn build_graph_is_symmetric() {
        let g = Network::new(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(g.n_edges(), 1);
        assert_eq!(g.weight(1, 0), Some(1.0));
        assert_eq!(g.weight(0, 1), Some(1.0));
    }

    #[test]
    fn build_graph_rejects_invalid_edges() {
        assert_eq!(
            Network::new(3, &[(0, 1, 0.5), (0, 1, 0.7)]),
            Err(GraphError::DuplicateEdge(0, 1))
        );
        assert_eq!(Network::new(3, &[(1, 0, 0.5), (0, 1, 0.7)]), Err(GraphError::DuplicateEdge(0, 1)));
        assert_eq!(Network::new(3, &[(0, 0, 1.0)]), Err(GraphError::SelfLoop(0)));
        assert_eq!(Network::new(3, &[(0, 3, 1.0)]), Err(GraphError::IdOutOfRange { id: 3, n: 3 }));
        assert!(matches!(Network::new(3, &[(0, 1, -1.0)]), Err(GraphError::NegativeWeight { .. })));
        assert!(matches!(Network::new(3, &[(0, 1, f64::NAN)]), Err(GraphError::NegativeWeight { .. })));
    }

    #[test]
    fn geodesic_examples() {
        let d = path3().geodesic_matrix();
        assert_eq!(d.get(0, 2), 1.0);
        let tri = Network::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]).unwrap();
        assert_eq!(tri.geodesic_matrix().get(0, 2), 2.0);
        let iso = Network::new(2, &[]).unwrap();
        assert_eq!(iso.geodesic_matrix().get(0, 1), f64::INFINITY);
        assert_eq!(iso.geodesic_matrix().diameter(), 0.0);
    }

    #[test]
    fn connectivity() {
        assert!(path3().is_connected());
        assert!(!Network::new(2, &[]).unwrap().is_connected());
    }

    #[test]
    fn louvain_trivial_cases() {
        let k4 = Network::new(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)])
            .unwrap();
        let p = louvain_communities(&k4, 1, false);
        assert_eq!(p.n_communities(), 1);
        let empty = Network::new(3, &[]).unwrap();
        let p = louvain_communities(&empty, 1, false);
        assert_eq!(p.labels(), &[0, 1, 2]);
    }

    #[test]
    fn wsbm_degenerate_is_complete() {
        let spec = SbmSpec {
            block_sizes: vec![2, 2],
            intra_p: vec![1.0, 1.0],
            inter_p: 1.0,
            weight_rule: WeightRule::One,
        };
        let g = generate_wsbm(&spec, 3).unwrap();
        assert_eq!(g.n_edges(), 6);
        assert!(g.edges().iter().all(|e| e.weight == 1.0));
    }

    #[test]
    fn wsbm_bridges_empty_model() {
        let spec = SbmSpec {
            block_sizes: vec![3, 3],
            intra_p: vec![0.0, 0.0],
            inter_p: 0.0,
            weight_rule: WeightRule::in_out_default(),
        };
        let g = generate_wsbm(&spec, 9).unwrap();
        assert!(g.is_connected());
        assert_eq!(g.n_edges(), 5);
    }

    #[test]
    fn wsbm_rejects_bad_specs() {
        let mut spec = SbmSpec {
            block_sizes: vec![2, 2],
            intra_p: vec![0.5, 0.5],
            inter_p: 1.5,
            weight_rule: WeightRule::One,
        };
        assert!(matches!(generate_wsbm(&spec, 0), Err(GraphError::InvalidSbm(_))));
        spec.inter_p = 0.5;
        spec.weight_rule = WeightRule::Random { lo: 0.0, hi: 0.5 };
        assert!(matches!(generate_wsbm(&spec, 0), Err(GraphError::InvalidSbm(_))));
        spec.weight_rule = WeightRule::One;
        spec.intra_p = vec![0.5];
        assert!(matches!(generate_wsbm(&spec, 0), Err(GraphError::InvalidSbm(_))));
    }

    #[test]
    fn edge_csv_round_trip_and_errors() {
        let g = Network::new(4, &[(0, 1, 0.25), (2, 3, 1.5)]).unwrap();
        let mut buf = Vec::new();
        write_edge_csv(&g, &mut buf).unwrap();
        let back = read_edge_csv(buf.as_slice(), Some(4)).unwrap();
        assert_eq!(back, g);

        let bad = "u,v,weight\n0,1,0.5\n1,x,0.2\n";
        assert_eq!(
            read_edge_csv(bad.as_bytes(), None),
            Err(GraphError::Malformed { line: 3, reason: "invalid vertex id `x`".into() })
        );
        let short = "u,v,weight\n0,1\n";
        assert!(matches!(read_edge_csv(short.as_bytes(), None), Err(GraphError::Malformed { line: 2, .. })));
        assert!(matches!(read_edge_csv("a,b\n".as_bytes(), None), Err(GraphError::Malformed { line: 1, .. })));
    }

    #[test]
    fn partition_relabels_contiguously() {
        let p = Partition::from_labels(&[7, 7, 2, 9, 2]);
        assert_eq!(p.labels(), &[0, 0, 1, 2, 1]);
        assert_eq!(p.n_communities(), 3);
        assert_eq!(p.members(1), vec![2, 4]);
    }
}
