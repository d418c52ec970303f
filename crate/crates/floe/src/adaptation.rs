//! Core-allocation strategies: static look-ahead from pipeline hints,
//! reactive adjustment from live metrics, and a hybrid that follows the
//! static plan until the observed rate veers off the hint.

use crate::engine::FlakeMetrics;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// One pellet on the critical path, as hinted by the user.
#[derive(Debug, Clone, PartialEq)]
pub struct StageProfile {
    pub pellet: String,
    /// Seconds per message with a single instance.
    pub latency: f64,
    /// Output messages per input message.
    pub selectivity: f64,
}

impl StageProfile {
    pub fn new(pellet: impl Into<String>, latency: f64, selectivity: f64) -> Self {
        StageProfile {
            pellet: pellet.into(),
            latency,
            selectivity,
        }
    }
}

/// Workload hints for a pipeline: per-stage latency and selectivity, the
/// message volume per period, and the deadline it must be processed within.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineProfile {
    /// Critical-path pellets in flow order.
    pub stages: Vec<StageProfile>,
    /// Messages arriving at the first stage within one data period.
    pub messages_per_period: f64,
    /// Seconds over which those messages arrive.
    pub data_duration: f64,
    /// Extra seconds allowed beyond the data duration to finish processing.
    pub tolerance: f64,
    /// Instances run per allocated core.
    pub alpha: u32,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("stage `{0}` has non-positive latency")]
    BadLatency(String),
    #[error("stage `{0}` has negative selectivity")]
    BadSelectivity(String),
    #[error("data duration plus tolerance must be positive")]
    BadDeadline,
    #[error("alpha must be at least 1")]
    BadAlpha,
}

impl PipelineProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        for s in &self.stages {
            if !(s.latency > 0.0) || !s.latency.is_finite() {
                return Err(ProfileError::BadLatency(s.pellet.clone()));
            }
            if !(s.selectivity >= 0.0) || !s.selectivity.is_finite() {
                return Err(ProfileError::BadSelectivity(s.pellet.clone()));
            }
        }
        if !(self.data_duration + self.tolerance > 0.0) {
            return Err(ProfileError::BadDeadline);
        }
        if self.alpha == 0 {
            return Err(ProfileError::BadAlpha);
        }
        Ok(())
    }

    /// Mean arrival rate at the first stage while data is flowing.
    pub fn expected_rate(&self) -> f64 {
        if self.data_duration > 0.0 {
            self.messages_per_period / self.data_duration
        } else {
            0.0
        }
    }
}

/// Static plan for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageAllocation {
    pub pellet: String,
    /// Messages this stage receives per period (selectivity recurrence).
    pub messages: f64,
    /// Instances needed to clear them within the deadline.
    pub instances: u64,
    pub cores: u32,
}

/// Instances and cores per stage so each stage clears its period volume
/// within `data_duration + tolerance` seconds.
///
/// Stage i receives `m_i = m_{i-1} * s_{i-1}` messages (the previous stage's
/// input scaled by its selectivity), needs `P_i = ceil(l_i * m_i / (t + e))`
/// instances and `C_i = ceil(P_i / alpha)` cores. A stage that receives no
/// messages gets 0 cores; keeping an idle-path flake responsive is the
/// engine's call, not the planner's.
pub fn static_lookahead_allocate(
    profile: &PipelineProfile,
) -> Result<Vec<StageAllocation>, ProfileError> {
    profile.validate()?;
    let deadline = profile.data_duration + profile.tolerance;
    let mut messages = profile.messages_per_period;
    let mut plan = Vec::with_capacity(profile.stages.len());
    for stage in &profile.stages {
        let instances = (stage.latency * messages / deadline).ceil() as u64;
        let cores = instances.div_ceil(u64::from(profile.alpha)) as u32;
        plan.push(StageAllocation {
            pellet: stage.pellet.clone(),
            messages,
            instances,
            cores,
        });
        messages *= stage.selectivity;
    }
    Ok(plan)
}

/// Tuning for the reactive controller and the hybrid mode switches.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    /// Rate surplus (messages/second) that triggers a core increment.
    pub tau1: f64,
    /// Rate deficit (<= 0) that arms a core decrement.
    pub tau2: f64,
    /// Seconds between controller evaluations.
    pub interval: f64,
    /// Per-flake core cap: adaptation stays within one machine.
    pub max_cores: u32,
    /// Instances per core.
    pub alpha: u32,
    /// Decrement guard variant. The default guard `delta < -(N-1)/L` removes
    /// capacity one instance at a time even though a core decrement removes
    /// alpha instances; the strict variant `D < (N-alpha)/L` only decrements
    /// when the post-decrement capacity still covers the observed rate.
    pub strict_decrement: bool,
    pub hybrid: HybridParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridParams {
    /// Relative deviation from the hinted rate that hands control to the
    /// reactive algorithm.
    pub rate_band: f64,
    /// Relative deviation below which control returns to the static plan...
    pub stabilize_band: f64,
    /// ...provided the queue is also below this many messages.
    pub queue_threshold: u64,
}

impl Default for HybridParams {
    fn default() -> Self {
        HybridParams {
            rate_band: 0.25,
            stabilize_band: 0.1,
            queue_threshold: 10,
        }
    }
}

impl Default for ControllerParams {
    fn default() -> Self {
        ControllerParams {
            tau1: 0.1,
            tau2: -0.1,
            interval: 1.0,
            max_cores: 8,
            alpha: 4,
            strict_decrement: false,
            hybrid: HybridParams::default(),
        }
    }
}

impl ControllerParams {
    /// Scale the rate thresholds to a workload: 10% of the expected rate
    /// (floored at the 1 msg/s defaults).
    pub fn scaled_to_rate(rate: f64) -> Self {
        let tau = 0.1 * rate.max(1.0);
        ControllerParams {
            tau1: tau,
            tau2: -tau,
            ..ControllerParams::default()
        }
    }
}

/// One core-count adjustment from a metrics sample: +1, 0 or -1 cores.
///
/// delta = D - N/L compares the arrival rate against the flake's processing
/// capacity. A surplus of at least tau1 adds a core (capped at max_cores).
/// A deficit of at least |tau2| removes one, but only when the configured
/// guard agrees that the remaining capacity still suffices; the guard is what
/// keeps the allocation from oscillating. Cores never drop below 1 while
/// messages are queued or arriving, and never below 0.
pub fn dynamic_step(m: &FlakeMetrics, p: &ControllerParams) -> i32 {
    if m.mean_latency <= 0.0 {
        return 0;
    }
    let cores = m.instances / p.alpha.max(1);
    let n = f64::from(m.instances);
    let delta = m.arrival_rate - n / m.mean_latency;
    if delta >= p.tau1 {
        if cores >= p.max_cores {
            return 0;
        }
        return 1;
    }
    if delta <= p.tau2 {
        let guard = if p.strict_decrement {
            m.arrival_rate < (n - f64::from(p.alpha)) / m.mean_latency
        } else {
            delta < -(n - 1.0) / m.mean_latency
        };
        if guard {
            // Hold one core while anything is queued or arriving; release
            // the last core only when fully idle.
            let idle = m.queue_length == 0 && m.arrival_rate == 0.0;
            let floor = if idle { 0 } else { 1 };
            if cores > floor {
                return -1;
            }
        }
    }
    0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HybridMode {
    /// Follow the static plan while the rate tracks the hint.
    StaticFollow,
    /// The rate veered off; run the reactive controller.
    DynamicActive,
}

impl fmt::Display for HybridMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HybridMode::StaticFollow => write!(f, "static-follow"),
            HybridMode::DynamicActive => write!(f, "dynamic-active"),
        }
    }
}

/// Per-flake controller bookkeeping across intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub mode: HybridMode,
    /// Cores currently applied to the flake.
    pub cores: u32,
    /// Area under the cores-over-time curve.
    pub core_seconds: f64,
}

impl ControllerState {
    pub fn new(initial_cores: u32) -> Self {
        ControllerState {
            mode: HybridMode::StaticFollow,
            cores: initial_cores,
            core_seconds: 0.0,
        }
    }

    /// Account for `dt` seconds at the current allocation.
    pub fn accrue(&mut self, dt: f64) {
        self.core_seconds += f64::from(self.cores) * dt;
    }
}

/// Core target for one flake under the hybrid strategy.
///
/// In static-follow mode the target is the stage's planned cores while the
/// flake has traffic (arrivals or backlog) and 0 once drained, so a periodic
/// workload costs nothing between bursts. Control hands over to the reactive
/// algorithm when the observed rate deviates from the hint by more than
/// rate_band, and returns to the plan once the deviation falls inside
/// stabilize_band with the queue nearly empty. Deviation is measured against
/// the hinted rate while data arrives and against zero when the stream goes
/// quiet, so the gap between bursts doesn't read as a deviation.
pub fn hybrid_step(
    st: &mut ControllerState,
    m: &FlakeMetrics,
    static_cores: u32,
    expected_rate: f64,
    p: &ControllerParams,
) -> u32 {
    let active = m.arrival_rate > 0.0 || m.queue_length > 0;
    let phase_rate = if m.arrival_rate > 0.0 { expected_rate } else { 0.0 };
    let deviation = if phase_rate > 0.0 {
        (m.arrival_rate - phase_rate).abs() / phase_rate
    } else if m.arrival_rate > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };

    match st.mode {
        HybridMode::StaticFollow => {
            if m.arrival_rate > 0.0 && deviation > p.hybrid.rate_band {
                st.mode = HybridMode::DynamicActive;
            } else {
                st.cores = if active { static_cores } else { 0 };
                return st.cores;
            }
        }
        HybridMode::DynamicActive => {
            if deviation < p.hybrid.stabilize_band && m.queue_length < p.hybrid.queue_threshold {
                st.mode = HybridMode::StaticFollow;
                st.cores = if active { static_cores } else { 0 };
                return st.cores;
            }
        }
    }

    // Reactive: adjust from the current allocation.
    let delta = dynamic_step(m, p);
    let next = st.cores.saturating_add_signed(delta).min(p.max_cores);
    st.cores = next;
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Static,
    Dynamic,
    Hybrid,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Static => write!(f, "static"),
            Strategy::Dynamic => write!(f, "dynamic"),
            Strategy::Hybrid => write!(f, "hybrid"),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(Strategy::Static),
            "dynamic" => Ok(Strategy::Dynamic),
            "hybrid" => Ok(Strategy::Hybrid),
            other => Err(format!("unknown strategy `{other}` (static|dynamic|hybrid)")),
        }
    }
}

/// One controller evaluation, as logged to the decision CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub time: f64,
    pub pellet: String,
    pub strategy: Strategy,
    pub mode: HybridMode,
    pub arrival_rate: f64,
    pub mean_latency: f64,
    pub instances: u32,
    pub delta: i64,
    pub cores: u32,
    pub core_seconds: f64,
}

pub const DECISION_CSV_HEADER: &str = "time,pellet,strategy,mode,D,L,N,delta,cores,core_seconds";

impl Decision {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.time,
            self.pellet,
            self.strategy,
            self.mode,
            self.arrival_rate,
            self.mean_latency,
            self.instances,
            self.delta,
            self.cores,
            self.core_seconds
        )
    }
}
