//! Undirected switching topologies with dwell times: graphs, leader-follower
//! extensions, schedules, union graphs, and joint-connectivity validation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("edge ({i},{j}) out of range for {n} nodes")]
    InvalidEdge { i: usize, j: usize, n: usize },
    #[error("self-loop at node {0} is not allowed")]
    SelfLoop(usize),
    #[error("node index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("leader-link vector has length {got}, expected {want}")]
    LeaderLinkLength { got: usize, want: usize },
    #[error("graph library is empty")]
    EmptyLibrary,
    #[error("graph library mixes leaderless and leader-follower graphs")]
    MixedKinds,
    #[error("graphs disagree on agent count")]
    AgentCountMismatch,
    #[error("graph index {index} out of range for library of {len}")]
    GraphIndexOutOfRange { index: usize, len: usize },
    #[error("interval index {index} out of range ({len} intervals)")]
    IntervalIndexOutOfRange { index: usize, len: usize },
    #[error("dwell time must be positive, got {0}")]
    InvalidDwell(f64),
    #[error("period bound must be positive, got {0}")]
    InvalidPeriodBound(f64),
    #[error(
        "subinterval {sub} of interval {interval} lasts {len} s, below the dwell time {dwell} s"
    )]
    SubintervalTooShort {
        interval: usize,
        sub: usize,
        len: f64,
        dwell: f64,
    },
    #[error("interval {interval} lasts {len} s, above the period bound {bound} s")]
    IntervalTooLong {
        interval: usize,
        len: f64,
        bound: f64,
    },
    #[error("schedule has no intervals")]
    EmptySchedule,
    #[error("time {t} outside the scheduled range [0, {end})")]
    TimeOutOfRange { t: f64, end: f64 },
}

/// Undirected unweighted graph on `n` agents; adjacency is symmetric 0/1 with
/// zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UGraph {
    n: usize,
    adj: Vec<u8>,
}

impl UGraph {
    pub fn empty(n: usize) -> Self {
        UGraph {
            n,
            adj: vec![0; n * n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = UGraph::empty(n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(GraphError::InvalidEdge { i, j, n });
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            g.adj[i * n + j] = 1;
            g.adj[j * n + i] = 1;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j] != 0
    }

    pub fn adjacency_row(&self, i: usize) -> &[u8] {
        &self.adj[i * self.n..(i + 1) * self.n]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Number of neighbors of agent `i`.
    pub fn degree(&self, i: usize) -> Result<usize, GraphError> {
        if i >= self.n {
            return Err(GraphError::IndexOutOfRange {
                index: i,
                n: self.n,
            });
        }
        Ok(self.adjacency_row(i).iter().map(|&a| a as usize).sum())
    }

    /// Graph Laplacian `L` with `l_ii = deg(i)` and `l_ij = -a_ij`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.adjacency_row(i).iter().map(|&a| a as i64).sum::<i64>() as f64
            } else {
                -(self.adj[i * n + j] as f64)
            }
        })
    }

    /// Edge-set union with another graph on the same nodes.
    pub fn union(&self, other: &UGraph) -> Result<UGraph, GraphError> {
        if self.n != other.n {
            return Err(GraphError::AgentCountMismatch);
        }
        let adj = self
            .adj
            .iter()
            .zip(&other.adj)
            .map(|(&a, &b)| a | b)
            .collect();
        Ok(UGraph { n: self.n, adj })
    }

    /// Breadth-first connectivity.
    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for (j, &a) in self.adjacency_row(i).iter().enumerate() {
                if a != 0 && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    /// Second-smallest Laplacian eigenvalue (algebraic connectivity).
    pub fn algebraic_connectivity(&self) -> f64 {
        if self.n <= 1 {
            return f64::INFINITY;
        }
        let se = nalgebra::SymmetricEigen::new(self.laplacian());
        let mut ev: Vec<f64> = se.eigenvalues.iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        ev[1]
    }
}

/// Leader-follower topology: an undirected follower graph plus 0/1 links from
/// the leader to individual followers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderGraph {
    pub followers: UGraph,
    leader_links: Vec<u8>,
}

impl LeaderGraph {
    pub fn new(followers: UGraph, leader_linked: &[usize]) -> Result<Self, GraphError> {
        let n = followers.n();
        let mut links = vec![0u8; n];
        for &i in leader_linked {
            if i >= n {
                return Err(GraphError::IndexOutOfRange { index: i, n });
            }
            links[i] = 1;
        }
        Ok(LeaderGraph {
            followers,
            leader_links: links,
        })
    }

    pub fn n(&self) -> usize {
        self.followers.n()
    }

    pub fn leader_link(&self, i: usize) -> bool {
        self.leader_links[i] != 0
    }

    pub fn leader_links(&self) -> &[u8] {
        &self.leader_links
    }

    /// `H = L + Delta`: follower Laplacian plus the diagonal of leader links.
    pub fn hmatrix(&self) -> DMatrix<f64> {
        let mut h = self.followers.laplacian();
        for i in 0..self.n() {
            h[(i, i)] += self.leader_links[i] as f64;
        }
        h
    }

    pub fn union(&self, other: &LeaderGraph) -> Result<LeaderGraph, GraphError> {
        let followers = self.followers.union(&other.followers)?;
        let leader_links = self
            .leader_links
            .iter()
            .zip(&other.leader_links)
            .map(|(&a, &b)| a | b)
            .collect();
        Ok(LeaderGraph {
            followers,
            leader_links,
        })
    }

    /// Whether the leader reaches every follower through this fixed graph.
    pub fn leader_reaches_all(&self) -> bool {
        let n = self.n();
        if n == 0 {
            return true;
        }
        let mut seen: Vec<bool> = self.leader_links.iter().map(|&l| l != 0).collect();
        let mut queue: std::collections::VecDeque<usize> = seen
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| i)
            .collect();
        let mut count = queue.len();
        while let Some(i) = queue.pop_front() {
            for (j, &a) in self.followers.adjacency_row(i).iter().enumerate() {
                if a != 0 && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }
}

/// A graph in the schedule library: either leaderless or leader-follower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Topology {
    Undirected(UGraph),
    Leader(LeaderGraph),
}

impl Topology {
    pub fn n(&self) -> usize {
        match self {
            Topology::Undirected(g) => g.n(),
            Topology::Leader(g) => g.n(),
        }
    }

    fn union(&self, other: &Topology) -> Result<Topology, GraphError> {
        match (self, other) {
            (Topology::Undirected(a), Topology::Undirected(b)) => {
                Ok(Topology::Undirected(a.union(b)?))
            }
            (Topology::Leader(a), Topology::Leader(b)) => Ok(Topology::Leader(a.union(b)?)),
            _ => Err(GraphError::MixedKinds),
        }
    }
}

/// Per-interval joint-connectivity verdict.
#[derive(Debug, Clone, Serialize)]
pub struct IntervalReport {
    pub interval: usize,
    pub start: f64,
    pub end: f64,
    pub connected: bool,
    /// lambda_2 of the union Laplacian, or the smallest eigenvalue of the
    /// union H-matrix in the leader-follower case.
    pub connectivity_eigenvalue: f64,
}

/// Timed sequence of library graphs: contiguous intervals split into
/// subintervals of at least the dwell time, one active graph per subinterval.
#[derive(Debug, Clone)]
pub struct SwitchingSchedule {
    library: Vec<Topology>,
    /// (start, end, library index), contiguous from t = 0.
    subintervals: Vec<(f64, f64, usize)>,
    /// Interval boundaries `t_0 = 0 < t_1 < ... < t_K`.
    interval_bounds: Vec<f64>,
    dwell: f64,
    period_bound: f64,
}

impl SwitchingSchedule {
    /// Build a schedule from explicit intervals, each a list of
    /// `(library index, duration)` subintervals.
    pub fn new(
        library: Vec<Topology>,
        intervals: &[Vec<(usize, f64)>],
        dwell: f64,
        period_bound: Option<f64>,
    ) -> Result<Self, GraphError> {
        if library.is_empty() {
            return Err(GraphError::EmptyLibrary);
        }
        let n = library[0].n();
        let leader_kind = matches!(library[0], Topology::Leader(_));
        for g in &library {
            if g.n() != n {
                return Err(GraphError::AgentCountMismatch);
            }
            if matches!(g, Topology::Leader(_)) != leader_kind {
                return Err(GraphError::MixedKinds);
            }
        }
        if !(dwell > 0.0) || !dwell.is_finite() {
            return Err(GraphError::InvalidDwell(dwell));
        }
        if intervals.is_empty() || intervals.iter().any(|iv| iv.is_empty()) {
            return Err(GraphError::EmptySchedule);
        }

        let mut subintervals = Vec::new();
        let mut interval_bounds = vec![0.0f64];
        let mut t = 0.0f64;
        let mut max_interval = 0.0f64;
        for (k, iv) in intervals.iter().enumerate() {
            let start = t;
            for (s, &(gidx, len)) in iv.iter().enumerate() {
                if gidx >= library.len() {
                    return Err(GraphError::GraphIndexOutOfRange {
                        index: gidx,
                        len: library.len(),
                    });
                }
                if len < dwell - 1e-12 || !len.is_finite() {
                    return Err(GraphError::SubintervalTooShort {
                        interval: k,
                        sub: s,
                        len,
                        dwell,
                    });
                }
                subintervals.push((t, t + len, gidx));
                t += len;
            }
            max_interval = max_interval.max(t - start);
            interval_bounds.push(t);
        }
        let period_bound = period_bound.unwrap_or(max_interval);
        if !(period_bound > 0.0) {
            return Err(GraphError::InvalidPeriodBound(period_bound));
        }
        for k in 0..interval_bounds.len() - 1 {
            let len = interval_bounds[k + 1] - interval_bounds[k];
            if len > period_bound + 1e-12 {
                return Err(GraphError::IntervalTooLong {
                    interval: k,
                    len,
                    bound: period_bound,
                });
            }
        }
        Ok(SwitchingSchedule {
            library,
            subintervals,
            interval_bounds,
            dwell,
            period_bound,
        })
    }

    /// Cycle `order` with one subinterval of `dwell` seconds per entry; one
    /// interval per full pass, repeated until `total` seconds are covered.
    pub fn cyclic(
        library: Vec<Topology>,
        order: &[usize],
        dwell: f64,
        total: f64,
    ) -> Result<Self, GraphError> {
        if order.is_empty() {
            return Err(GraphError::EmptySchedule);
        }
        if !(dwell > 0.0) || !dwell.is_finite() {
            return Err(GraphError::InvalidDwell(dwell));
        }
        let cycle = dwell * order.len() as f64;
        let reps = (total / cycle).ceil().max(1.0) as usize;
        let interval: Vec<(usize, f64)> = order.iter().map(|&g| (g, dwell)).collect();
        let intervals = vec![interval; reps];
        SwitchingSchedule::new(library, &intervals, dwell, None)
    }

    pub fn library(&self) -> &[Topology] {
        &self.library
    }

    pub fn n(&self) -> usize {
        self.library[0].n()
    }

    pub fn dwell(&self) -> f64 {
        self.dwell
    }

    pub fn period_bound(&self) -> f64 {
        self.period_bound
    }

    pub fn end_time(&self) -> f64 {
        *self.interval_bounds.last().unwrap()
    }

    pub fn interval_count(&self) -> usize {
        self.interval_bounds.len() - 1
    }

    pub fn is_leader_follower(&self) -> bool {
        matches!(self.library[0], Topology::Leader(_))
    }

    /// Active graph at time `t`; right-continuous (a subinterval `[a, b)`
    /// owns its left endpoint).
    pub fn graph_at(&self, t: f64) -> Result<&Topology, GraphError> {
        let end = self.end_time();
        if !(0.0..=end).contains(&t) {
            return Err(GraphError::TimeOutOfRange { t, end });
        }
        // Binary search for the subinterval with start <= t < end; the final
        // grid instant t == end maps to the last subinterval.
        let idx = self
            .subintervals
            .partition_point(|&(start, _, _)| start <= t)
            .saturating_sub(1);
        Ok(&self.library[self.subintervals[idx].2])
    }

    /// Union of the subinterval graphs of interval `k`.
    pub fn union_graph(&self, k: usize) -> Result<Topology, GraphError> {
        if k >= self.interval_count() {
            return Err(GraphError::IntervalIndexOutOfRange {
                index: k,
                len: self.interval_count(),
            });
        }
        let (lo, hi) = (self.interval_bounds[k], self.interval_bounds[k + 1]);
        let mut acc: Option<Topology> = None;
        for &(start, _, gidx) in &self.subintervals {
            if start >= lo - 1e-12 && start < hi - 1e-12 {
                acc = Some(match acc {
                    None => self.library[gidx].clone(),
                    Some(u) => u.union(&self.library[gidx])?,
                });
            }
        }
        Ok(acc.expect("interval has at least one subinterval"))
    }

    /// Joint connectivity: each interval's union graph must be connected
    /// (leaderless), or its union H-matrix positive definite (leader case).
    /// Returns the overall verdict and the per-interval report.
    pub fn is_jointly_connected(&self) -> (bool, Vec<IntervalReport>) {
        let mut reports = Vec::with_capacity(self.interval_count());
        let mut all = true;
        for k in 0..self.interval_count() {
            let union = self.union_graph(k).expect("index in range");
            let (connected, eig) = match &union {
                Topology::Undirected(g) => {
                    let bfs = g.is_connected();
                    let l2 = g.algebraic_connectivity();
                    debug_assert_eq!(bfs, l2 > 1e-9, "BFS and lambda_2 disagree");
                    (bfs, l2)
                }
                Topology::Leader(g) => {
                    let reach = g.leader_reaches_all();
                    let se = nalgebra::SymmetricEigen::new(g.hmatrix());
                    let min = se.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                    debug_assert_eq!(reach, min > 1e-9, "reachability and H-matrix disagree");
                    (reach, min)
                }
            };
            all &= connected;
            reports.push(IntervalReport {
                interval: k,
                start: self.interval_bounds[k],
                end: self.interval_bounds[k + 1],
                connected,
                connectivity_eigenvalue: eig,
            });
        }
        (all, reports)
    }
}
