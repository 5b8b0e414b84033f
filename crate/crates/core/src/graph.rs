//! Directed communication graphs.
//!
//! An edge `(i, j)` means node `i` receives the broadcasts of node `j`. Node
//! indices are zero-based in the API; the edge-list file format is one-based.
//!
//! The in-neighbours of `i` are the nodes it hears from, the out-neighbours are
//! the nodes that hear it. Degrees follow the same convention: `in_degree(i)`
//! counts transmitters audible at `i`, `out_degree(i)` counts receivers of `i`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

/// Default number of wholesale redraws before a generator gives up.
pub const DEFAULT_RETRY_BUDGET: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("no acceptable graph after {attempts} attempts; the radius or asymmetry is too aggressive")]
    RetryExhausted { attempts: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("node {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("edge list line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A directed graph with optional planar node positions.
#[derive(Debug, Clone, PartialEq)]
pub struct DiGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    in_nbrs: Vec<Vec<usize>>,
    out_nbrs: Vec<Vec<usize>>,
    coords: Option<Vec<(f64, f64)>>,
}

impl DiGraph {
    /// Builds a graph from `(receiver, transmitter)` pairs.
    pub fn new<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n {
                return Err(GraphError::NodeOutOfRange { node: i, n });
            }
            if j >= n {
                return Err(GraphError::NodeOutOfRange { node: j, n });
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            set.insert((i, j));
        }
        Ok(Self::from_set(n, set, None))
    }

    fn from_set(n: usize, edges: BTreeSet<(usize, usize)>, coords: Option<Vec<(f64, f64)>>) -> Self {
        let mut in_nbrs = vec![Vec::new(); n];
        let mut out_nbrs = vec![Vec::new(); n];
        for &(i, j) in &edges {
            in_nbrs[i].push(j);
            out_nbrs[j].push(i);
        }
        for list in out_nbrs.iter_mut() {
            list.sort_unstable();
        }
        Self {
            n,
            edges,
            in_nbrs,
            out_nbrs,
            coords,
        }
    }

    /// Complete graph: every ordered pair of distinct nodes.
    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        Self::from_set(n, edges, None)
    }

    /// Directed cycle where node `i + 1` hears node `i`.
    pub fn directed_cycle(n: usize) -> Self {
        let edges = (0..n).map(|i| ((i + 1) % n, i)).filter(|(a, b)| a != b).collect();
        Self::from_set(n, edges, None)
    }

    pub fn with_coords(mut self, coords: Vec<(f64, f64)>) -> Result<Self, GraphError> {
        if coords.len() != self.n {
            return Err(GraphError::InvalidParameter(format!(
                "{} coordinates for {} nodes",
                coords.len(),
                self.n
            )));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in lexicographic `(receiver, transmitter)` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, receiver: usize, transmitter: usize) -> bool {
        self.edges.contains(&(receiver, transmitter))
    }

    /// Nodes that `i` hears from.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_nbrs[i]
    }

    /// Nodes that hear `i`.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_nbrs[i]
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_nbrs[i].len()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_nbrs[i].len()
    }

    pub fn coords(&self) -> Option<&[(f64, f64)]> {
        self.coords.as_deref()
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(i, j)| self.edges.contains(&(j, i)))
    }

    /// True when every node reaches every other node along directed edges.
    ///
    /// One forward and one backward breadth-first search from node 0.
    pub fn is_strongly_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        // Information flows transmitter -> receiver, i.e. along out-neighbour lists.
        reaches_all(self.n, &self.out_nbrs) && reaches_all(self.n, &self.in_nbrs)
    }

    /// Connectivity of the undirected skeleton.
    pub fn is_weakly_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let merged: Vec<Vec<usize>> = (0..self.n)
            .map(|i| {
                let mut v = self.in_nbrs[i].clone();
                v.extend_from_slice(&self.out_nbrs[i]);
                v
            })
            .collect();
        reaches_all(self.n, &merged)
    }

    /// 0/1 adjacency matrix with entry `(i, j)` set for each edge.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
        }
        a
    }

    /// Serializes to the plain-text edge-list format.
    ///
    /// ```text
    /// n 3
    /// 1 2
    /// 2 1
    /// coord 1 0.25 0.5
    /// ```
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        writeln!(out, "n {}", self.n).unwrap();
        for &(i, j) in &self.edges {
            writeln!(out, "{} {}", i + 1, j + 1).unwrap();
        }
        if let Some(coords) = &self.coords {
            for (i, (x, y)) in coords.iter().enumerate() {
                // `{:?}` prints the shortest representation that round-trips.
                writeln!(out, "coord {} {:?} {:?}", i + 1, x, y).unwrap();
            }
        }
        out
    }

    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }

    pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        std::fs::read_to_string(path)?.parse()
    }
}

impl FromStr for DiGraph {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut n: Option<usize> = None;
        let mut edges = BTreeSet::new();
        let mut coords: Vec<Option<(f64, f64)>> = Vec::new();
        let mut any_coord = false;

        for (idx, raw) in s.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: &str| GraphError::Parse {
                line: line_no,
                msg: msg.to_string(),
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            match (n, toks.as_slice()) {
                (None, ["n", count]) => {
                    let count: usize = count.parse().map_err(|_| parse_err("bad node count"))?;
                    n = Some(count);
                    coords = vec![None; count];
                }
                (None, _) => return Err(parse_err("expected header `n <count>`")),
                (Some(nn), ["coord", i, x, y]) => {
                    let i = parse_node(i, nn).map_err(|m| parse_err(&m))?;
                    let x: f64 = x.parse().map_err(|_| parse_err("bad x coordinate"))?;
                    let y: f64 = y.parse().map_err(|_| parse_err("bad y coordinate"))?;
                    coords[i] = Some((x, y));
                    any_coord = true;
                }
                (Some(nn), [i, j]) => {
                    let i = parse_node(i, nn).map_err(|m| parse_err(&m))?;
                    let j = parse_node(j, nn).map_err(|m| parse_err(&m))?;
                    if i == j {
                        return Err(GraphError::SelfLoop(i));
                    }
                    edges.insert((i, j));
                }
                (Some(_), _) => return Err(parse_err("unrecognized line")),
            }
        }

        let n = n.ok_or(GraphError::Parse {
            line: 0,
            msg: "empty edge list".into(),
        })?;
        let coords = if any_coord {
            let full: Option<Vec<_>> = coords.into_iter().collect();
            Some(full.ok_or(GraphError::Parse {
                line: 0,
                msg: "coordinates given for some nodes but not all".into(),
            })?)
        } else {
            None
        };
        Ok(Self::from_set(n, edges, coords))
    }
}

fn parse_node(tok: &str, n: usize) -> Result<usize, String> {
    let id: usize = tok.parse().map_err(|_| format!("bad node id `{tok}`"))?;
    if id == 0 || id > n {
        return Err(format!("node id {id} outside 1..={n}"));
    }
    Ok(id - 1)
}

fn reaches_all(n: usize, adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}

/// Connectivity radius `sqrt(2 ln n / n)` for random geometric graphs.
pub fn auto_radius(n: usize) -> f64 {
    let n = n as f64;
    (2.0 * n.ln() / n).sqrt()
}

/// Random geometric graph on the unit square.
///
/// Nodes are placed uniformly; two nodes are linked in both directions when
/// their distance is at most `radius`. Placements are redrawn wholesale until
/// the graph is connected.
pub fn random_geometric_graph<R: Rng + ?Sized>(
    n: usize,
    radius: f64,
    rng: &mut R,
) -> Result<DiGraph, GraphError> {
    random_geometric_graph_with_budget(n, radius, DEFAULT_RETRY_BUDGET, rng)
}

pub fn random_geometric_graph_with_budget<R: Rng + ?Sized>(
    n: usize,
    radius: f64,
    budget: usize,
    rng: &mut R,
) -> Result<DiGraph, GraphError> {
    if n < 2 {
        return Err(GraphError::InvalidParameter(format!("need n >= 2, got {n}")));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(GraphError::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    let r2 = radius * radius;
    for _ in 0..budget {
        let coords: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        let mut edges = BTreeSet::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = coords[i].0 - coords[j].0;
                let dy = coords[i].1 - coords[j].1;
                if dx * dx + dy * dy <= r2 {
                    edges.insert((i, j));
                    edges.insert((j, i));
                }
            }
        }
        let g = DiGraph::from_set(n, edges, Some(coords));
        if g.is_strongly_connected() {
            return Ok(g);
        }
    }
    Err(GraphError::RetryExhausted { attempts: budget })
}

/// Makes a symmetric graph asymmetric.
///
/// Each undirected pair independently becomes one-directional with probability
/// `p_asym` (direction chosen by a fair coin), otherwise it stays
/// bidirectional. Coin flips are redrawn wholesale until the result is
/// strongly connected. Coordinates are carried over.
pub fn directify<R: Rng + ?Sized>(g: &DiGraph, p_asym: f64, rng: &mut R) -> Result<DiGraph, GraphError> {
    directify_with_budget(g, p_asym, DEFAULT_RETRY_BUDGET, rng)
}

pub fn directify_with_budget<R: Rng + ?Sized>(
    g: &DiGraph,
    p_asym: f64,
    budget: usize,
    rng: &mut R,
) -> Result<DiGraph, GraphError> {
    if !(0.0..1.0).contains(&p_asym) {
        return Err(GraphError::InvalidParameter(format!("p_asym must lie in [0, 1), got {p_asym}")));
    }
    if !g.is_symmetric() {
        return Err(GraphError::InvalidParameter("directify needs a symmetric input graph".into()));
    }
    if p_asym == 0.0 {
        return Ok(g.clone());
    }
    let pairs: Vec<(usize, usize)> = g.edges().filter(|&(i, j)| i < j).collect();
    for _ in 0..budget {
        let mut edges = BTreeSet::new();
        for &(i, j) in &pairs {
            if rng.random::<f64>() < p_asym {
                if rng.random::<bool>() {
                    edges.insert((i, j));
                } else {
                    edges.insert((j, i));
                }
            } else {
                edges.insert((i, j));
                edges.insert((j, i));
            }
        }
        let out = DiGraph::from_set(g.n, edges, g.coords.clone());
        if out.is_strongly_connected() {
            return Ok(out);
        }
    }
    Err(GraphError::RetryExhausted { attempts: budget })
}

/// Weighted Laplacian `diag(A 1) - A`.
///
/// The diagonal is the off-diagonal row sum, so each row of the result sums to
/// zero up to the rounding of that one summation.
pub fn laplacian(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut l = -a.clone();
    for i in 0..n {
        let row_sum: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)]).sum();
        l[(i, i)] = row_sum - a[(i, i)];
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn strong_connectivity_basics() {
        for n in 1..6 {
            assert!(DiGraph::complete(n).is_strongly_connected());
            assert!(DiGraph::directed_cycle(n).is_strongly_connected());
        }
        let one_way = DiGraph::new(2, [(0, 1)]).unwrap();
        assert!(!one_way.is_strongly_connected());
        assert!(one_way.is_weakly_connected());
    }

    #[test]
    fn rejects_self_loops_and_bad_ids() {
        assert!(matches!(DiGraph::new(3, [(1, 1)]), Err(GraphError::SelfLoop(1))));
        assert!(matches!(
            DiGraph::new(3, [(0, 3)]),
            Err(GraphError::NodeOutOfRange { node: 3, n: 3 })
        ));
    }

    #[test]
    fn neighbour_conventions() {
        // 0 hears 1, 2 hears 0.
        let g = DiGraph::new(3, [(0, 1), (2, 0)]).unwrap();
        assert_eq!(g.in_neighbors(0), &[1]);
        assert_eq!(g.out_neighbors(0), &[2]);
        assert_eq!(g.in_degree(2), 1);
        assert_eq!(g.out_degree(1), 1);
        assert_eq!(g.out_degree(2), 0);
    }

    #[test]
    fn rgg_two_nodes_is_complete() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_geometric_graph(2, 2f64.sqrt(), &mut rng).unwrap();
        assert_eq!(g, DiGraph::complete(2).with_coords(g.coords().unwrap().to_vec()).unwrap());
    }

    #[test]
    fn rgg_sixteen_nodes_auto_radius() {
        let r = auto_radius(16);
        assert!((r - 0.588_705).abs() < 1e-6, "radius {r}");
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let g = random_geometric_graph(16, r, &mut rng).unwrap();
        assert!(g.is_symmetric());
        assert!(g.is_strongly_connected());
        assert_eq!(g.coords().unwrap().len(), 16);

        let mut rng2 = ChaCha8Rng::seed_from_u64(42);
        let again = random_geometric_graph(16, r, &mut rng2).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn rgg_retry_exhaustion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = random_geometric_graph_with_budget(30, 1e-3, 5, &mut rng).unwrap_err();
        assert!(matches!(err, GraphError::RetryExhausted { attempts: 5 }));
    }

    #[test]
    fn rgg_parameter_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            random_geometric_graph(1, 0.5, &mut rng),
            Err(GraphError::InvalidParameter(_))
        ));
        assert!(matches!(
            random_geometric_graph(4, 0.0, &mut rng),
            Err(GraphError::InvalidParameter(_))
        ));
    }

    #[test]
    fn directify_identity_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_geometric_graph(12, auto_radius(12), &mut rng).unwrap();
        let d = directify(&g, 0.0, &mut rng).unwrap();
        assert_eq!(g, d);
    }

    #[test]
    fn directify_two_nodes_stays_bidirectional() {
        let g = DiGraph::complete(2);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = directify(&g, 0.9, &mut rng).unwrap();
            assert_eq!(d.edge_count(), 2);
        }
    }

    #[test]
    fn directify_sixteen_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let g = random_geometric_graph(16, auto_radius(16), &mut rng).unwrap();
        let d = directify(&g, 0.3, &mut rng).unwrap();
        assert!(d.is_strongly_connected());
        assert!(d.edge_count() < g.edge_count());
        assert!(d.edges().all(|(i, j)| g.has_edge(i, j)));
        assert_eq!(d.coords(), g.coords());
    }

    #[test]
    fn directify_rejects_asymmetric_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = DiGraph::directed_cycle(4);
        assert!(directify(&g, 0.2, &mut rng).is_err());
        assert!(directify(&DiGraph::complete(3), 1.0, &mut rng).is_err());
    }

    #[test]
    fn laplacian_two_nodes() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let l = laplacian(&a);
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn edge_list_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_geometric_graph(10, auto_radius(10), &mut rng).unwrap();
        let g = directify(&g, 0.4, &mut rng).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("n 10\n"));
        let back: DiGraph = text.parse().unwrap();
        assert_eq!(back, g);

        let bare = DiGraph::directed_cycle(3);
        assert_eq!(bare.to_edge_list(), "n 3\n1 3\n2 1\n3 2\n");
        assert_eq!(bare.to_edge_list().parse::<DiGraph>().unwrap(), bare);
    }

    #[test]
    fn edge_list_errors() {
        assert!(matches!("1 2\n".parse::<DiGraph>(), Err(GraphError::Parse { line: 1, .. })));
        assert!(matches!("n 2\n1 3\n".parse::<DiGraph>(), Err(GraphError::Parse { line: 2, .. })));
        assert!(matches!("n 2\n1 1\n".parse::<DiGraph>(), Err(GraphError::SelfLoop(0))));
        assert!("n 2\n1 2\ncoord 1 0.1 0.2\n".parse::<DiGraph>().is_err());
    }
}
