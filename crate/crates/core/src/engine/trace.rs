//! Trace and metrics containers produced by the simulation loop.

use nalgebra::DVector;
use serde::Serialize;

use crate::homogeneous::TriggerReason;

/// A logged broadcast event.
#[derive(Debug, Clone, Serialize)]
pub struct Event {
    pub agent: usize,
    pub time: f64,
    pub reason: TriggerReason,
}

/// Summary statistics of a completed run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MetricsSummary {
    /// Times at which the error series below are recorded (strided grid).
    pub recorded_times: Vec<f64>,
    /// Stacked consensus-error norm (homogeneous) or max pairwise output
    /// error (heterogeneous) on the recorded grid.
    pub consensus_error_norm: Vec<f64>,
    /// Stacked observer error norm `||w - 1 (x) w0||`; heterogeneous only.
    pub observer_error: Option<Vec<f64>>,
    pub event_count: Vec<usize>,
    /// Smallest gap between consecutive events per agent; `None` with fewer
    /// than two events.
    pub min_interevent_gap: Vec<Option<f64>>,
    /// Total events over all agent-steps.
    pub communication_ratio: f64,
    pub grid_steps: usize,
    pub final_error: f64,
}

/// Full-resolution record of one simulation run. Everything the post-run
/// audits need is kept: memory grows with grid steps times agents, which is
/// a few megabytes at the benchmark scales (30 s at 1 ms steps).
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    /// Physical states per step and agent.
    pub states: Vec<Vec<DVector<f64>>>,
    /// Broadcast estimates per step and agent (post-reset values).
    pub estimates: Vec<Vec<DVector<f64>>>,
    /// Observer states per step and agent; heterogeneous runs only.
    pub observers: Option<Vec<Vec<DVector<f64>>>>,
    /// Exogenous signal per step; heterogeneous runs only.
    pub exo: Option<Vec<DVector<f64>>>,
    /// Agent outputs per step; heterogeneous runs only.
    pub outputs: Option<Vec<Vec<DVector<f64>>>>,
    pub events: Vec<Event>,
    pub metrics: MetricsSummary,
    error_series: Vec<f64>,
    observer_error_series: Vec<f64>,
}

impl SimulationTrace {
    pub(crate) fn with_capacity(steps: usize) -> Self {
        SimulationTrace {
            times: Vec::with_capacity(steps),
            states: Vec::with_capacity(steps),
            estimates: Vec::with_capacity(steps),
            observers: None,
            exo: None,
            outputs: None,
            events: Vec::new(),
            metrics: MetricsSummary::default(),
            error_series: Vec::with_capacity(steps),
            observer_error_series: Vec::new(),
        }
    }

    pub(crate) fn push_step(
        &mut self,
        t: f64,
        states: &[DVector<f64>],
        estimates: &[DVector<f64>],
        error_norm: f64,
    ) {
        self.times.push(t);
        self.states.push(states.to_vec());
        self.estimates.push(estimates.to_vec());
        self.error_series.push(error_norm);
    }

    pub(crate) fn push_hetero_step(
        &mut self,
        t: f64,
        states: &[DVector<f64>],
        estimates: &[DVector<f64>],
        observers: &[DVector<f64>],
        w0: &DVector<f64>,
        outputs: &[DVector<f64>],
    ) {
        let mut worst = 0.0f64;
        for i in 0..outputs.len() {
            for j in i + 1..outputs.len() {
                worst = worst.max((&outputs[i] - &outputs[j]).norm());
            }
        }
        let z: f64 = observers
            .iter()
            .map(|w| (w - w0).norm_squared())
            .sum::<f64>()
            .sqrt();
        self.times.push(t);
        self.states.push(states.to_vec());
        self.estimates.push(estimates.to_vec());
        self.observers
            .get_or_insert_with(Vec::new)
            .push(observers.to_vec());
        self.exo.get_or_insert_with(Vec::new).push(w0.clone());
        self.outputs
            .get_or_insert_with(Vec::new)
            .push(outputs.to_vec());
        self.error_series.push(worst);
        self.observer_error_series.push(z);
    }

    pub(crate) fn finish_homogeneous(&mut self, events: Vec<Event>, stride: usize, steps: usize) {
        self.events = events;
        self.metrics = self.summarize(stride, steps, false);
    }

    pub(crate) fn finish_heterogeneous(&mut self, events: Vec<Event>, stride: usize, steps: usize) {
        self.events = events;
        self.metrics = self.summarize(stride, steps, true);
    }

    fn summarize(&self, stride: usize, steps: usize, hetero: bool) -> MetricsSummary {
        let n_agents = self.states.first().map(Vec::len).unwrap_or(0);
        let mut event_count = vec![0usize; n_agents];
        let mut last_time: Vec<Option<f64>> = vec![None; n_agents];
        let mut min_gap: Vec<Option<f64>> = vec![None; n_agents];
        for ev in &self.events {
            event_count[ev.agent] += 1;
            if let Some(prev) = last_time[ev.agent] {
                let gap = ev.time - prev;
                min_gap[ev.agent] = Some(match min_gap[ev.agent] {
                    Some(g) => g.min(gap),
                    None => gap,
                });
            }
            last_time[ev.agent] = Some(ev.time);
        }
        let recorded: Vec<usize> = (0..self.times.len()).step_by(stride).collect();
        MetricsSummary {
            recorded_times: recorded.iter().map(|&k| self.times[k]).collect(),
            consensus_error_norm: recorded.iter().map(|&k| self.error_series[k]).collect(),
            observer_error: hetero.then(|| {
                recorded
                    .iter()
                    .map(|&k| self.observer_error_series[k])
                    .collect()
            }),
            event_count,
            min_interevent_gap: min_gap,
            communication_ratio: self.events.len() as f64 / (n_agents * steps.max(1)) as f64,
            grid_steps: steps,
            final_error: *self.error_series.last().unwrap_or(&f64::NAN),
        }
    }

    /// Error series on the full grid (consensus error norm or max pairwise
    /// output error, by mode).
    pub fn error_series(&self) -> &[f64] {
        &self.error_series
    }

    /// Observer error series on the full grid; empty for homogeneous runs.
    pub fn observer_error_series(&self) -> &[f64] {
        &self.observer_error_series
    }
}
