//! Scenario files: a TOML description of one simulation (system matrices,
//! protocol parameters, graph library, switching schedule, grid) that can be
//! validated against the modeling assumptions, run, and serialized to CSV and
//! JSON outputs.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::engine::{
    run_heterogeneous, run_homogeneous, zeno_report, EngineError, InitialCondition, MetricsSummary,
    SimulationConfig, SimulationTrace, ZenoReport,
};
use crate::graph::{LeaderGraph, SwitchingSchedule, Topology, UGraph};
use crate::heterogeneous::{DegreeMode, Exosystem, HeteroAgent};
use crate::homogeneous::HomoParams;
use crate::linalg::{
    closed_loop_abscissa, compute_k2, consensus_gain, neutral_stable_decompose, solve_regulator,
    spectral_norm, stabilizing_feedback, RegulatorAgent, RegulatorSolution,
};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario is invalid:\n{0}")]
    Invalid(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("output serialization failed: {0}")]
    Output(String),
}

// ---------------------------------------------------------------------------
// File schema
// ---------------------------------------------------------------------------

type RawMatrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Homogeneous,
    Heterogeneous,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    a: RawMatrix,
    b: RawMatrix,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProtocolSection {
    c: f64,
    #[serde(default)]
    delta: Option<f64>,
    mu: f64,
    nu: f64,
    /// Explicit consensus gain; computed from the system when absent.
    #[serde(default)]
    gain: Option<RawMatrix>,
    #[serde(default)]
    degree_mode: Option<DegreeMode>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExoSection {
    s: RawMatrix,
    w0: Vec<f64>,
    /// Reference output map pinning the regulator solution; when absent the
    /// stacked equations are solved with the output map free.
    #[serde(default)]
    output_map: Option<RawMatrix>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentSection {
    a: RawMatrix,
    b: RawMatrix,
    c: RawMatrix,
    e: RawMatrix,
    f: RawMatrix,
    #[serde(default)]
    k1: Option<RawMatrix>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphSection {
    #[serde(default)]
    edges: Vec<[usize; 2]>,
    #[serde(default)]
    leader_links: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleSection {
    dwell: f64,
    /// Cyclic interval pattern: one interval per pass over these graph
    /// indices, each active for one dwell time.
    #[serde(default)]
    order: Option<Vec<usize>>,
    /// Explicit intervals as lists of `[graph_index, duration]` pairs.
    #[serde(default)]
    intervals: Option<Vec<Vec<(usize, f64)>>>,
    #[serde(default)]
    period_bound: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationSection {
    horizon: f64,
    step: f64,
    #[serde(default)]
    seed: u64,
    init: InitialCondition,
    #[serde(default = "default_stride")]
    record_stride: usize,
    /// Explicit agent count; inferred from edges/agents when absent.
    #[serde(default)]
    agent_count: Option<usize>,
    /// Broadcast only on topology switches; see the engine option.
    #[serde(default)]
    topology_triggers_only: bool,
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackSection {
    #[serde(default = "default_margin")]
    margin: f64,
}

fn default_margin() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    mode: Mode,
    #[serde(default)]
    system: Option<SystemSection>,
    protocol: ProtocolSection,
    #[serde(default)]
    exosystem: Option<ExoSection>,
    #[serde(default)]
    agents: Option<Vec<AgentSection>>,
    graphs: Vec<GraphSection>,
    schedule: ScheduleSection,
    simulation: SimulationSection,
    #[serde(default)]
    feedback: Option<FeedbackSection>,
}

fn to_matrix(raw: &RawMatrix, what: &str) -> Result<DMatrix<f64>, String> {
    if raw.is_empty() {
        return Err(format!("{what}: matrix must have at least one row"));
    }
    let cols = raw[0].len();
    if cols == 0 {
        return Err(format!("{what}: matrix must have at least one column"));
    }
    for (i, row) in raw.iter().enumerate() {
        if row.len() != cols {
            return Err(format!(
                "{what}: row {i} has {} entries, expected {cols}",
                row.len()
            ));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(format!("{what}: row {i} contains a non-finite entry"));
        }
    }
    Ok(DMatrix::from_fn(raw.len(), cols, |i, j| raw[i][j]))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// Validation report
// ---------------------------------------------------------------------------

/// One named validation check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of validating a scenario against the modeling assumptions.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl ValidationReport {
    fn push(&mut self, name: &str, outcome: Result<String, String>) {
        match outcome {
            Ok(detail) => self.checks.push(CheckResult {
                name: name.into(),
                passed: true,
                detail,
            }),
            Err(detail) => {
                self.passed = false;
                self.checks.push(CheckResult {
                    name: name.into(),
                    passed: false,
                    detail,
                });
            }
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("[{mark}] {}: {}\n", c.name, c.detail));
        }
        out.push_str(&format!(
            "validation {}\n",
            if self.passed { "passed" } else { "FAILED" }
        ));
        out
    }
}

/// PBH stabilizability test: `rank [A - lambda I, B] = n` at every eigenvalue
/// with nonnegative real part (within tolerance).
fn pbh_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(), String> {
    let n = a.nrows();
    let tol = 1e-8 * (1.0 + spectral_norm(a));
    for l in a.complex_eigenvalues().iter() {
        if l.re < -tol {
            continue;
        }
        let rank = shifted_pencil_rank(a, b, l.re, l.im);
        if rank < n {
            return Err(format!(
                "uncontrollable critical mode at {:.6}+{:.6}i (PBH rank {rank} < {n})",
                l.re, l.im
            ));
        }
    }
    Ok(())
}

/// Rank of the complex pencil `[A - (sr + i si) I, B]` via the real embedding.
fn shifted_pencil_rank(a: &DMatrix<f64>, b: &DMatrix<f64>, sr: f64, si: f64) -> usize {
    let n = a.nrows();
    let m = b.ncols();
    let mut big = DMatrix::<f64>::zeros(2 * n, 2 * (n + m));
    let shifted = {
        let mut s = a.clone();
        for i in 0..n {
            s[(i, i)] -= sr;
        }
        s
    };
    big.view_mut((0, 0), (n, n)).copy_from(&shifted);
    big.view_mut((n, n + m), (n, n)).copy_from(&shifted);
    for i in 0..n {
        big[(i, n + m + i)] = si;
        big[(n + i, i)] = -si;
    }
    big.view_mut((0, n), (n, m)).copy_from(b);
    big.view_mut((n, 2 * n + m), (n, m)).copy_from(b);
    let sv = big.svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-8 * smax).count() / 2
}

/// Transmission-zeros rank test at one eigenvalue of the exosystem:
/// `rank [[A - lambda I, B], [C, 0]] = n + p`.
fn transmission_rank(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    sr: f64,
    si: f64,
) -> usize {
    let n = a.nrows();
    let m = b.ncols();
    let p = c.nrows();
    let rows = n + p;
    let cols = n + m;
    let mut pencil = DMatrix::<f64>::zeros(2 * rows, 2 * cols);
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= sr;
    }
    // Real embedding [[Re, Im], [-Im, Re]] of the complex block pencil.
    pencil.view_mut((0, 0), (n, n)).copy_from(&shifted);
    pencil.view_mut((rows, cols), (n, n)).copy_from(&shifted);
    for i in 0..n {
        pencil[(i, cols + i)] = si;
        pencil[(rows + i, i)] = -si;
    }
    pencil.view_mut((0, n), (n, m)).copy_from(b);
    pencil.view_mut((rows, cols + n), (n, m)).copy_from(b);
    pencil.view_mut((n, 0), (p, n)).copy_from(c);
    pencil.view_mut((rows + n, cols), (p, n)).copy_from(c);
    let sv = pencil.svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-8 * smax).count() / 2
}

// ---------------------------------------------------------------------------
// Built scenario
// ---------------------------------------------------------------------------

/// Ready-to-run simulation assembled from a scenario file.
pub enum BuiltScenario {
    Homogeneous {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        params: HomoParams,
        schedule: SwitchingSchedule,
        config: SimulationConfig,
        gain_overridden: bool,
        n1: usize,
    },
    Heterogeneous {
        agents: Vec<HeteroAgent>,
        exo: Exosystem,
        c: f64,
        mu: f64,
        nu: f64,
        degree_mode: DegreeMode,
        schedule: SwitchingSchedule,
        config: SimulationConfig,
        regulator: RegulatorSolution,
    },
}

/// Gains written alongside a run.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum GainsReport {
    Homogeneous {
        g: Vec<Vec<f64>>,
        n1: usize,
        gain_overridden: bool,
    },
    Heterogeneous {
        pi: Vec<Vec<Vec<f64>>>,
        u: Vec<Vec<Vec<f64>>>,
        r: Vec<Vec<f64>>,
        residual: f64,
        unique: bool,
        family_dim: usize,
        k1: Vec<Vec<Vec<f64>>>,
        k2: Vec<Vec<Vec<f64>>>,
    },
}

/// A parsed scenario, with override setters for the command line.
#[derive(Debug, Clone)]
pub struct Scenario {
    file: ScenarioFile,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Ok(Scenario { file })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_toml_str(&text)
    }

    pub fn mode(&self) -> Mode {
        self.file.mode
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.file.simulation.seed = seed;
    }

    pub fn set_step(&mut self, step: f64) {
        self.file.simulation.step = step;
    }

    pub fn set_horizon(&mut self, horizon: f64) {
        self.file.simulation.horizon = horizon;
    }

    pub fn set_degree_mode(&mut self, mode: DegreeMode) {
        self.file.protocol.degree_mode = Some(mode);
    }

    fn agent_count(&self) -> usize {
        if let Some(n) = self.file.simulation.agent_count {
            return n;
        }
        match self.file.mode {
            Mode::Heterogeneous => self.file.agents.as_ref().map(Vec::len).unwrap_or(0),
            Mode::Homogeneous => {
                let from_edges = self
                    .file
                    .graphs
                    .iter()
                    .flat_map(|g| g.edges.iter().flat_map(|e| e.iter().copied()))
                    .max()
                    .map(|m| m + 1)
                    .unwrap_or(0);
                match &self.file.simulation.init {
                    InitialCondition::Explicit(vs) => from_edges.max(vs.len()),
                    _ => from_edges,
                }
            }
        }
    }

    fn build_schedule(&self, leader: bool) -> Result<SwitchingSchedule, String> {
        let n = self.agent_count();
        if n == 0 {
            return Err("cannot infer the agent count (no edges, no agents)".into());
        }
        let mut library = Vec::with_capacity(self.file.graphs.len());
        for (k, gs) in self.file.graphs.iter().enumerate() {
            let edges: Vec<(usize, usize)> = gs.edges.iter().map(|e| (e[0], e[1])).collect();
            let g = UGraph::from_edges(n, &edges).map_err(|e| format!("graph {k}: {e}"))?;
            if leader {
                let links = gs.leader_links.clone().unwrap_or_default();
                let lg = LeaderGraph::new(g, &links).map_err(|e| format!("graph {k}: {e}"))?;
                library.push(Topology::Leader(lg));
            } else {
                if gs.leader_links.is_some() {
                    return Err(format!(
                        "graph {k}: leader_links are only valid in heterogeneous mode"
                    ));
                }
                library.push(Topology::Undirected(g));
            }
        }
        let sched = &self.file.schedule;
        match (&sched.order, &sched.intervals) {
            (Some(order), None) => {
                SwitchingSchedule::cyclic(library, order, sched.dwell, self.file.simulation.horizon)
                    .map_err(|e| e.to_string())
            }
            (None, Some(intervals)) => {
                SwitchingSchedule::new(library, intervals, sched.dwell, sched.period_bound)
                    .map_err(|e| e.to_string())
            }
            _ => Err("schedule needs exactly one of `order` or `intervals`".into()),
        }
    }

    fn config(&self) -> SimulationConfig {
        SimulationConfig {
            horizon: self.file.simulation.horizon,
            step: self.file.simulation.step,
            seed: self.file.simulation.seed,
            init: self.file.simulation.init.clone(),
            record_stride: self.file.simulation.record_stride,
            topology_triggers_only: self.file.simulation.topology_triggers_only,
        }
    }

    /// Run every assumption check and report pass/fail per check.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport {
            checks: vec![],
            passed: true,
        };
        match self.file.mode {
            Mode::Homogeneous => self.validate_homogeneous(&mut report),
            Mode::Heterogeneous => self.validate_heterogeneous(&mut report),
        }
        report
    }

    fn validate_grid(&self, report: &mut ValidationReport, schedule: Option<&SwitchingSchedule>) {
        let sim = &self.file.simulation;
        let mut problems = Vec::new();
        if !(sim.step > 0.0) {
            problems.push(format!("step {} must be positive", sim.step));
        }
        if !(sim.horizon > 0.0) {
            problems.push(format!("horizon {} must be positive", sim.horizon));
        }
        if let Some(s) = schedule {
            if sim.step > s.dwell() / 10.0 + 1e-12 {
                problems.push(format!(
                    "step {} exceeds a tenth of the dwell time {}",
                    sim.step,
                    s.dwell()
                ));
            }
            if s.end_time() + 1e-9 < sim.horizon {
                problems.push(format!(
                    "schedule covers [0, {}) but horizon is {}",
                    s.end_time(),
                    sim.horizon
                ));
            }
            if s.interval_count() < 2 {
                problems.push("schedule must contain at least two intervals".into());
            }
        }
        if sim.record_stride == 0 {
            problems.push("record_stride must be >= 1".into());
        }
        report.push(
            "simulation.grid",
            if problems.is_empty() {
                Ok(format!(
                    "horizon {} s, step {} s, seed {}",
                    sim.horizon, sim.step, sim.seed
                ))
            } else {
                Err(problems.join("; "))
            },
        );
    }

    fn validate_connectivity(&self, report: &mut ValidationReport, schedule: &SwitchingSchedule) {
        let (ok, intervals) = schedule.is_jointly_connected();
        let detail = if ok {
            format!("all {} intervals jointly connected", intervals.len())
        } else {
            let failing: Vec<String> = intervals
                .iter()
                .filter(|r| !r.connected)
                .map(|r| format!("interval {} [{}, {})", r.interval, r.start, r.end))
                .collect();
            format!("union graph not connected on {}", failing.join(", "))
        };
        report.push(
            "schedule.joint-connectivity",
            if ok { Ok(detail) } else { Err(detail) },
        );
    }

    fn validate_homogeneous(&self, report: &mut ValidationReport) {
        let system = match &self.file.system {
            Some(s) => s,
            None => {
                report.push(
                    "system.matrices",
                    Err("homogeneous mode requires a [system] section".into()),
                );
                return;
            }
        };
        let (a, b) = match (
            to_matrix(&system.a, "system.a"),
            to_matrix(&system.b, "system.b"),
        ) {
            (Ok(a), Ok(b)) => {
                if a.nrows() != a.ncols() || b.nrows() != a.nrows() {
                    report.push(
                        "system.matrices",
                        Err("A must be square and B must have matching rows".into()),
                    );
                    return;
                }
                report.push(
                    "system.matrices",
                    Ok(format!("n = {}, inputs = {}", a.nrows(), b.ncols())),
                );
                (a, b)
            }
            (a, bm) => {
                let msg = [a.err(), bm.err()]
                    .into_iter()
                    .flatten()
                    .collect::<Vec<_>>()
                    .join("; ");
                report.push("system.matrices", Err(msg));
                return;
            }
        };

        let decomposition = neutral_stable_decompose(&a);
        match &decomposition {
            Ok(d) => report.push(
                "assumption.neutral-stability",
                Ok(format!(
                    "{} imaginary-axis eigenvalues, stable part {}",
                    d.n1,
                    a.nrows() - d.n1
                )),
            ),
            Err(e) => report.push("assumption.neutral-stability", Err(e.to_string())),
        }
        report.push(
            "assumption.stabilizability",
            pbh_stabilizable(&a, &b).map(|_| "PBH rank full at all critical eigenvalues".into()),
        );

        let proto = &self.file.protocol;
        let delta = proto.delta.unwrap_or(f64::NAN);
        let params_ok =
            proto.c > 0.0 && delta > 0.0 && delta < 1.0 && proto.mu > 0.0 && proto.nu > 0.0;
        report.push(
            "protocol.parameters",
            if params_ok {
                Ok(format!(
                    "c = {}, delta = {}, mu = {}, nu = {}",
                    proto.c, delta, proto.mu, proto.nu
                ))
            } else {
                Err(format!(
                    "need c > 0, 0 < delta < 1, mu > 0, nu > 0; got c = {}, delta = {}, mu = {}, nu = {}",
                    proto.c, delta, proto.mu, proto.nu
                ))
            },
        );
        match &proto.gain {
            Some(raw) => match to_matrix(raw, "protocol.gain") {
                Ok(g) => {
                    if g.ncols() == a.nrows() && g.nrows() == b.ncols() {
                        report.push("protocol.gain", Ok("explicit gain override".into()));
                    } else {
                        report.push(
                            "protocol.gain",
                            Err(format!(
                                "gain must be {} x {}, got {} x {}",
                                b.ncols(),
                                a.nrows(),
                                g.nrows(),
                                g.ncols()
                            )),
                        );
                    }
                }
                Err(e) => report.push("protocol.gain", Err(e)),
            },
            None => match &decomposition {
                Ok(_) => report.push("protocol.gain", Ok("computed as -B^T E^T E".into())),
                Err(_) => report.push(
                    "protocol.gain",
                    Err("no explicit gain and the decomposition failed".into()),
                ),
            },
        }

        match self.build_schedule(false) {
            Ok(schedule) => {
                report.push(
                    "schedule.structure",
                    Ok(format!(
                        "{} graphs on {} agents, {} intervals, dwell {} s",
                        schedule.library().len(),
                        schedule.n(),
                        schedule.interval_count(),
                        schedule.dwell()
                    )),
                );
                if schedule.n() < 2 {
                    report.push(
                        "schedule.agents",
                        Err("consensus needs at least two agents".into()),
                    );
                }
                self.validate_connectivity(report, &schedule);
                self.validate_grid(report, Some(&schedule));
            }
            Err(e) => {
                report.push("schedule.structure", Err(e));
                self.validate_grid(report, None);
            }
        }
    }

    fn validate_heterogeneous(&self, report: &mut ValidationReport) {
        let exo_section = match &self.file.exosystem {
            Some(e) => e,
            None => {
                report.push(
                    "exosystem.matrices",
                    Err("heterogeneous mode requires an [exosystem] section".into()),
                );
                return;
            }
        };
        let agents_section = match &self.file.agents {
            Some(a) if !a.is_empty() => a,
            _ => {
                report.push(
                    "agents.matrices",
                    Err("heterogeneous mode requires at least one [[agents]] entry".into()),
                );
                return;
            }
        };

        let s = match to_matrix(&exo_section.s, "exosystem.s") {
            Ok(s) if s.nrows() == s.ncols() => s,
            Ok(_) => {
                report.push("exosystem.matrices", Err("S must be square".into()));
                return;
            }
            Err(e) => {
                report.push("exosystem.matrices", Err(e));
                return;
            }
        };
        let q = s.nrows();
        if exo_section.w0.len() != q {
            report.push(
                "exosystem.matrices",
                Err(format!(
                    "w0 has {} entries, expected {q}",
                    exo_section.w0.len()
                )),
            );
            return;
        }
        report.push("exosystem.matrices", Ok(format!("q = {q}")));

        let exo = Exosystem::new(s.clone(), DVector::from_vec(exo_section.w0.clone()));
        match &exo {
            Ok(_) => report.push(
                "assumption.exosystem-spectrum",
                Ok("no eigenvalue with positive real part".into()),
            ),
            Err(e) => report.push("assumption.exosystem-spectrum", Err(e.to_string())),
        }

        let mut plants: Vec<RegulatorAgent> = Vec::new();
        let mut p_common: Option<usize> = None;
        for (i, ag) in agents_section.iter().enumerate() {
            let parsed = (
                to_matrix(&ag.a, &format!("agents[{i}].a")),
                to_matrix(&ag.b, &format!("agents[{i}].b")),
                to_matrix(&ag.c, &format!("agents[{i}].c")),
                to_matrix(&ag.e, &format!("agents[{i}].e")),
                to_matrix(&ag.f, &format!("agents[{i}].f")),
            );
            match parsed {
                (Ok(a), Ok(b), Ok(c), Ok(e), Ok(f)) => {
                    let ni = a.nrows();
                    let p = c.nrows();
                    let shape_ok = a.ncols() == ni
                        && b.nrows() == ni
                        && c.ncols() == ni
                        && e.shape() == (ni, q)
                        && f.shape() == (p, q)
                        && *p_common.get_or_insert(p) == p;
                    if !shape_ok {
                        report.push(
                            "agents.matrices",
                            Err(format!("agent {i}: inconsistent matrix shapes")),
                        );
                        return;
                    }
                    plants.push(RegulatorAgent { a, b, c, e, f });
                }
                (a, b, c, e, f) => {
                    let msg = [a.err(), b.err(), c.err(), e.err(), f.err()]
                        .into_iter()
                        .flatten()
                        .collect::<Vec<_>>()
                        .join("; ");
                    report.push("agents.matrices", Err(msg));
                    return;
                }
            }
        }
        report.push(
            "agents.matrices",
            Ok(format!(
                "{} agents, common output dim {}",
                plants.len(),
                p_common.unwrap()
            )),
        );

        let mut stab_failures = Vec::new();
        for (i, plant) in plants.iter().enumerate() {
            if let Err(e) = pbh_stabilizable(&plant.a, &plant.b) {
                stab_failures.push(format!("agent {i}: {e}"));
            }
        }
        report.push(
            "assumption.stabilizability",
            if stab_failures.is_empty() {
                Ok("all pairs stabilizable".into())
            } else {
                Err(stab_failures.join("; "))
            },
        );

        let mut tz_failures = Vec::new();
        for l in s.complex_eigenvalues().iter() {
            for (i, plant) in plants.iter().enumerate() {
                let want = plant.a.nrows() + plant.c.nrows();
                let rank = transmission_rank(&plant.a, &plant.b, &plant.c, l.re, l.im);
                if rank < want {
                    tz_failures.push(format!(
                        "agent {i} at lambda = {:.6}+{:.6}i: rank {rank} < {want}",
                        l.re, l.im
                    ));
                }
            }
        }
        report.push(
            "assumption.transmission-zeros",
            if tz_failures.is_empty() {
                Ok("full rank at every exosystem eigenvalue".into())
            } else {
                Err(tz_failures.join("; "))
            },
        );

        let output_map = match &exo_section.output_map {
            Some(raw) => match to_matrix(raw, "exosystem.output_map") {
                Ok(m) => Some(m),
                Err(e) => {
                    report.push("regulator.solvability", Err(e));
                    return;
                }
            },
            None => None,
        };
        let regulator = solve_regulator(&plants, &s, output_map.as_ref());
        match &regulator {
            Ok(sol) => report.push(
                "regulator.solvability",
                Ok(format!(
                    "residual {:.3e}{}",
                    sol.residual,
                    if sol.unique {
                        String::new()
                    } else {
                        format!(", solution family of dimension {}", sol.family_dim)
                    }
                )),
            ),
            Err(e) => report.push("regulator.solvability", Err(e.to_string())),
        }

        let margin = self.file.feedback.as_ref().map(|f| f.margin).unwrap_or(0.5);
        let mut gain_failures = Vec::new();
        for (i, (section, plant)) in agents_section.iter().zip(&plants).enumerate() {
            match &section.k1 {
                Some(raw) => match to_matrix(raw, &format!("agents[{i}].k1")) {
                    Ok(k1) => {
                        if k1.shape() != (plant.b.ncols(), plant.a.nrows()) {
                            gain_failures.push(format!("agent {i}: k1 has the wrong shape"));
                        } else {
                            let alpha = closed_loop_abscissa(&plant.a, &plant.b, &k1);
                            if alpha >= -1e-9 {
                                gain_failures.push(format!(
                                    "agent {i}: supplied k1 leaves spectral abscissa {alpha:.3e}"
                                ));
                            }
                        }
                    }
                    Err(e) => gain_failures.push(e),
                },
                None => {
                    if let Err(e) = stabilizing_feedback(&plant.a, &plant.b, margin) {
                        gain_failures.push(format!("agent {i}: synthesis failed: {e}"));
                    }
                }
            }
        }
        report.push(
            "gains.state-feedback",
            if gain_failures.is_empty() {
                Ok(format!("all closed loops Hurwitz (margin {margin})"))
            } else {
                Err(gain_failures.join("; "))
            },
        );

        let proto = &self.file.protocol;
        let proto_ok = proto.c > 0.0 && proto.mu > 0.0 && proto.nu > 0.0;
        report.push(
            "protocol.parameters",
            if proto_ok {
                Ok(format!(
                    "c = {}, mu = {}, nu = {}, degree mode {:?}",
                    proto.c,
                    proto.mu,
                    proto.nu,
                    proto.degree_mode.unwrap_or(DegreeMode::Literal)
                ))
            } else {
                Err("c, mu, nu must all be positive".into())
            },
        );

        match self.build_schedule(true) {
            Ok(schedule) => {
                report.push(
                    "schedule.structure",
                    Ok(format!(
                        "{} graphs on {} followers, {} intervals, dwell {} s",
                        schedule.library().len(),
                        schedule.n(),
                        schedule.interval_count(),
                        schedule.dwell()
                    )),
                );
                self.validate_connectivity(report, &schedule);
                self.validate_grid(report, Some(&schedule));
            }
            Err(e) => {
                report.push("schedule.structure", Err(e));
                self.validate_grid(report, None);
            }
        }
    }

    /// Assemble the runtime objects, failing with the rendered report when
    /// any validation check fails.
    pub fn build(&self) -> Result<BuiltScenario, ScenarioError> {
        let report = self.validate();
        if !report.passed {
            return Err(ScenarioError::Invalid(report.render()));
        }
        match self.file.mode {
            Mode::Homogeneous => {
                let system = self.file.system.as_ref().expect("validated");
                let a = to_matrix(&system.a, "system.a").expect("validated");
                let b = to_matrix(&system.b, "system.b").expect("validated");
                let dec = neutral_stable_decompose(&a).expect("validated");
                let proto = &self.file.protocol;
                let (gain, overridden) = match &proto.gain {
                    Some(raw) => (to_matrix(raw, "protocol.gain").expect("validated"), true),
                    None => (consensus_gain(&a, &b).expect("validated"), false),
                };
                let params = HomoParams::new(
                    proto.c,
                    proto.delta.unwrap_or(f64::NAN),
                    proto.mu,
                    proto.nu,
                    gain,
                )
                .expect("validated");
                let schedule = self.build_schedule(false).expect("validated");
                Ok(BuiltScenario::Homogeneous {
                    a,
                    b,
                    params,
                    schedule,
                    config: self.config(),
                    gain_overridden: overridden,
                    n1: dec.n1,
                })
            }
            Mode::Heterogeneous => {
                let exo_section = self.file.exosystem.as_ref().expect("validated");
                let s = to_matrix(&exo_section.s, "exosystem.s").expect("validated");
                let exo = Exosystem::new(s.clone(), DVector::from_vec(exo_section.w0.clone()))
                    .expect("validated");
                let agents_section = self.file.agents.as_ref().expect("validated");
                let plants: Vec<RegulatorAgent> = agents_section
                    .iter()
                    .map(|ag| RegulatorAgent {
                        a: to_matrix(&ag.a, "a").expect("validated"),
                        b: to_matrix(&ag.b, "b").expect("validated"),
                        c: to_matrix(&ag.c, "c").expect("validated"),
                        e: to_matrix(&ag.e, "e").expect("validated"),
                        f: to_matrix(&ag.f, "f").expect("validated"),
                    })
                    .collect();
                let output_map = exo_section
                    .output_map
                    .as_ref()
                    .map(|raw| to_matrix(raw, "output_map").expect("validated"));
                let regulator =
                    solve_regulator(&plants, &s, output_map.as_ref()).expect("validated");
                let margin = self.file.feedback.as_ref().map(|f| f.margin).unwrap_or(0.5);

                let mut agents = Vec::with_capacity(plants.len());
                for (i, (section, plant)) in agents_section.iter().zip(&plants).enumerate() {
                    let k1 = match &section.k1 {
                        Some(raw) => to_matrix(raw, "k1").expect("validated"),
                        None => {
                            stabilizing_feedback(&plant.a, &plant.b, margin).expect("validated")
                        }
                    };
                    let k2 = compute_k2(&k1, &regulator, i).expect("validated");
                    agents.push(HeteroAgent {
                        a: plant.a.clone(),
                        b: plant.b.clone(),
                        c: plant.c.clone(),
                        e: plant.e.clone(),
                        f: plant.f.clone(),
                        k1,
                        k2,
                    });
                }
                let proto = &self.file.protocol;
                let schedule = self.build_schedule(true).expect("validated");
                Ok(BuiltScenario::Heterogeneous {
                    agents,
                    exo,
                    c: proto.c,
                    mu: proto.mu,
                    nu: proto.nu,
                    degree_mode: proto.degree_mode.unwrap_or(DegreeMode::Literal),
                    schedule,
                    config: self.config(),
                    regulator,
                })
            }
        }
    }

    /// Build and simulate, returning the trace, gains, and the Zeno bound
    /// table (homogeneous runs).
    pub fn run(&self) -> Result<RunResult, ScenarioError> {
        let built = self.build()?;
        match &built {
            BuiltScenario::Homogeneous {
                a,
                b,
                params,
                schedule,
                config,
                gain_overridden,
                n1,
            } => {
                let trace = run_homogeneous(a, b, params, schedule, config)?;
                let zeno = zeno_report(&trace, params, a, b, schedule)?;
                Ok(RunResult {
                    trace,
                    gains: GainsReport::Homogeneous {
                        g: matrix_rows(&params.g),
                        n1: *n1,
                        gain_overridden: *gain_overridden,
                    },
                    zeno: Some(zeno),
                })
            }
            BuiltScenario::Heterogeneous {
                agents,
                exo,
                c,
                mu,
                nu,
                degree_mode,
                schedule,
                config,
                regulator,
            } => {
                let trace =
                    run_heterogeneous(agents, exo, *c, *mu, *nu, *degree_mode, schedule, config)?;
                Ok(RunResult {
                    trace,
                    gains: GainsReport::Heterogeneous {
                        pi: regulator.pi.iter().map(matrix_rows).collect(),
                        u: regulator.u.iter().map(matrix_rows).collect(),
                        r: matrix_rows(&regulator.r),
                        residual: regulator.residual,
                        unique: regulator.unique,
                        family_dim: regulator.family_dim,
                        k1: agents.iter().map(|ag| matrix_rows(&ag.k1)).collect(),
                        k2: agents.iter().map(|ag| matrix_rows(&ag.k2)).collect(),
                    },
                    zeno: None,
                })
            }
        }
    }

    /// Run and write `states.csv`, `events.csv`, `metrics.json`, and
    /// `gains.json` into `out_dir`.
    pub fn run_to_dir(&self, out_dir: impl AsRef<Path>) -> Result<RunArtifacts, ScenarioError> {
        let result = self.run()?;
        let dir = out_dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let stride = self.file.simulation.record_stride;

        let states_path = dir.join("states.csv");
        write_states_csv(&states_path, &result.trace, stride)?;
        let events_path = dir.join("events.csv");
        write_events_csv(&events_path, &result.trace)?;
        let metrics_path = dir.join("metrics.json");
        write_json(
            &metrics_path,
            &MetricsFile {
                metrics: &result.trace.metrics,
                bound_check: result.zeno.as_ref(),
            },
        )?;
        let gains_path = dir.join("gains.json");
        write_json(&gains_path, &result.gains)?;

        Ok(RunArtifacts {
            metrics: result.trace.metrics.clone(),
            zeno: result.zeno,
            files: vec![states_path, events_path, metrics_path, gains_path],
        })
    }
}

/// In-memory result of a scenario run.
pub struct RunResult {
    pub trace: SimulationTrace,
    pub gains: GainsReport,
    pub zeno: Option<ZenoReport>,
}

/// Files and summary produced by `run_to_dir`.
pub struct RunArtifacts {
    pub metrics: MetricsSummary,
    pub zeno: Option<ZenoReport>,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    #[serde(flatten)]
    metrics: &'a MetricsSummary,
    bound_check: Option<&'a ZenoReport>,
}

fn write_states_csv(
    path: &Path,
    trace: &SimulationTrace,
    stride: usize,
) -> Result<(), ScenarioError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let n_agents = trace.states[0].len();
    let mut header = String::from("t");
    for (i, x) in trace.states[0].iter().enumerate() {
        for d in 0..x.len() {
            header.push_str(&format!(",agent_{i}_x{d}"));
        }
    }
    writeln!(out, "{header}")?;
    for j in (0..trace.times.len()).step_by(stride) {
        let mut line = format!("{}", trace.times[j]);
        for i in 0..n_agents {
            for v in trace.states[j][i].iter() {
                line.push_str(&format!(",{v}"));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn write_events_csv(path: &Path, trace: &SimulationTrace) -> Result<(), ScenarioError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "agent,time,reason")?;
    for e in &trace.events {
        writeln!(out, "{},{},{}", e.agent, e.time, e.reason)?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ScenarioError> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| ScenarioError::Output(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
