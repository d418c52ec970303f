//! Deterministic discrete-time simulation of a pellet pipeline under a
//! synthetic workload, driving the core-allocation strategies.
//!
//! One tick is one second. Each tick, arrivals enter the first stage's
//! queue, every stage processes up to its capacity (instances / latency,
//! with fractional capacity banked in a work-credit carry while a backlog
//! exists), outputs scaled by selectivity feed the next stage the same tick,
//! and the controller runs at the end of every interval. Everything is
//! single-threaded and fully determined by the config and seed.

mod config;
mod workload;

pub use config::{parse_sim_config, SimConfig, SimConfigError};
pub use workload::{generate_workload, Lcg64, WorkloadError, WorkloadProfile, WorkloadSpec};

use crate::adaptation::{
    dynamic_step, hybrid_step, static_lookahead_allocate, ControllerParams, ControllerState,
    PipelineProfile, ProfileError, StageAllocation, Strategy,
};
use crate::engine::FlakeMetrics;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("controller interval must be a positive whole number of ticks")]
    BadInterval,
}

/// One stage's state for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickSample {
    /// Messages that entered this stage's queue this tick.
    pub rate_in: u64,
    /// Queue length at the end of the tick.
    pub queue_len: u64,
    /// Cores applied during the tick.
    pub cores: u32,
    /// Messages processed this tick.
    pub processed: u64,
}

pub const TRACE_CSV_HEADER: &str = "tick,pellet,rate_in,queue_len,cores,processed";

/// Full record of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub strategy: Strategy,
    pub pellets: Vec<String>,
    /// samples[stage][tick]
    pub samples: Vec<Vec<TickSample>>,
    /// Seconds from each burst start until the first stage's queue emptied,
    /// one entry per completed period. At least the burst duration by
    /// definition; capped at the period length when the queue never emptied.
    pub drain_times: Vec<u64>,
    /// Drains that exceeded data_duration + tolerance.
    pub deadline_violations: u64,
    /// Core-seconds summed over all stages.
    pub total_core_seconds: f64,
}

impl SimTrace {
    pub fn horizon(&self) -> u64 {
        self.samples.first().map(|s| s.len() as u64).unwrap_or(0)
    }

    pub fn max_queue(&self, stage: usize) -> u64 {
        self.samples[stage]
            .iter()
            .map(|s| s.queue_len)
            .max()
            .unwrap_or(0)
    }

    /// Maximum queue length of `stage` over ticks [from, to).
    pub fn max_queue_in(&self, stage: usize, from: u64, to: u64) -> u64 {
        self.samples[stage][from as usize..(to as usize).min(self.samples[stage].len())]
            .iter()
            .map(|s| s.queue_len)
            .max()
            .unwrap_or(0)
    }

    /// Cores trace for one stage.
    pub fn cores_series(&self, stage: usize) -> Vec<u32> {
        self.samples[stage].iter().map(|s| s.cores).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for tick in 0..self.horizon() as usize {
            for (stage, pellet) in self.pellets.iter().enumerate() {
                let s = &self.samples[stage][tick];
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    tick, pellet, s.rate_in, s.queue_len, s.cores, s.processed
                ));
            }
        }
        out
    }
}

struct StageState {
    queue: u64,
    cores: u32,
    /// Banked fractional processing capacity; reset when the queue empties
    /// so an idle stage cannot pre-pay for future bursts.
    credit: f64,
    /// Fractional emitted output awaiting a whole message.
    out_acc: f64,
    /// Arrivals since the last controller evaluation.
    arrivals_in_interval: u64,
    ctl: ControllerState,
}

/// Run one strategy over one workload. The profile supplies both the static
/// plan and the per-stage latency/selectivity the pipeline executes with.
pub fn simulate(
    profile: &PipelineProfile,
    workload: &WorkloadSpec,
    strategy: Strategy,
    params: &ControllerParams,
) -> Result<SimTrace, SimError> {
    let plan = static_lookahead_allocate(profile)?;
    let rates = generate_workload(workload)?;
    if !(params.interval > 0.0 && params.interval.fract() == 0.0) {
        return Err(SimError::BadInterval);
    }
    let interval_ticks = params.interval as u64;
    let deadline = profile.data_duration + profile.tolerance;
    let n = profile.stages.len();

    let initial_cores = |stage: usize| -> u32 {
        match strategy {
            // The reactive strategy starts from a minimal allocation and
            // discovers the workload; the others start on the plan.
            Strategy::Dynamic => 1,
            Strategy::Static | Strategy::Hybrid => plan[stage].cores,
        }
    };
    let mut stages: Vec<StageState> = (0..n)
        .map(|i| StageState {
            queue: 0,
            cores: initial_cores(i),
            credit: 0.0,
            out_acc: 0.0,
            arrivals_in_interval: 0,
            ctl: ControllerState::new(initial_cores(i)),
        })
        .collect();

    // Expected per-stage rate during a burst, for the hybrid deviation check.
    let expected_rates: Vec<f64> = plan
        .iter()
        .map(|s: &StageAllocation| {
            if profile.data_duration > 0.0 {
                s.messages / profile.data_duration
            } else {
                0.0
            }
        })
        .collect();

    let mut samples: Vec<Vec<TickSample>> = vec![Vec::with_capacity(rates.len()); n];
    let mut arrival_acc = 0.0f64;
    let mut total_core_seconds = 0.0f64;

    let periodic = matches!(
        workload.profile,
        WorkloadProfile::Periodic | WorkloadProfile::PeriodicSpiky
    ) && workload.duration > 0;
    let mut drain_times: Vec<u64> = Vec::new();
    let mut current_period_drained = false;

    for (t, &rate) in rates.iter().enumerate() {
        let t = t as u64;

        // Period bookkeeping for drain measurement.
        if periodic && t % workload.period == 0 {
            if t > 0 {
                if !current_period_drained {
                    drain_times.push(workload.period);
                }
                current_period_drained = false;
            }
        }

        // External arrivals; fractional rates accumulate to whole messages.
        arrival_acc += rate;
        let mut incoming = arrival_acc.floor() as u64;
        arrival_acc -= incoming as f64;

        for (i, st) in stages.iter_mut().enumerate() {
            st.queue += incoming;
            st.arrivals_in_interval += incoming;
            let rate_in = incoming;

            st.credit += f64::from(st.cores * profile.alpha) / profile.stages[i].latency;
            let processed = st.queue.min(st.credit.floor() as u64);
            st.queue -= processed;
            if st.queue == 0 {
                st.credit = 0.0;
            } else {
                st.credit -= processed as f64;
            }

            st.out_acc += processed as f64 * profile.stages[i].selectivity;
            incoming = st.out_acc.floor() as u64;
            st.out_acc -= incoming as f64;

            total_core_seconds += f64::from(st.cores);
            st.ctl.accrue(1.0);
            samples[i].push(TickSample {
                rate_in,
                queue_len: st.queue,
                cores: st.cores,
                processed,
            });
        }

        // Drain: queue empty at or after the end of the burst's arrivals.
        if periodic && !current_period_drained {
            let offset = t % workload.period;
            if offset + 1 >= workload.duration && stages[0].queue == 0 {
                drain_times.push(offset + 1);
                current_period_drained = true;
            }
        }

        // Controller acts at interval boundaries; new cores apply next tick.
        if (t + 1) % interval_ticks == 0 && strategy != Strategy::Static {
            for (i, st) in stages.iter_mut().enumerate() {
                let metrics = FlakeMetrics::sample(
                    st.queue,
                    st.arrivals_in_interval as f64 / params.interval,
                    profile.stages[i].latency,
                    st.cores * profile.alpha,
                );
                st.arrivals_in_interval = 0;
                match strategy {
                    Strategy::Static => unreachable!(),
                    Strategy::Dynamic => {
                        let delta = dynamic_step(&metrics, params);
                        st.cores = st
                            .cores
                            .saturating_add_signed(delta)
                            .min(params.max_cores);
                    }
                    Strategy::Hybrid => {
                        st.cores = hybrid_step(
                            &mut st.ctl,
                            &metrics,
                            plan[i].cores,
                            expected_rates[i],
                            params,
                        );
                    }
                }
            }
        }
    }
    if periodic && !current_period_drained && rates.len() as u64 % workload.period == 0 {
        drain_times.push(workload.period);
    }

    let deadline_violations = drain_times
        .iter()
        .filter(|&&d| d as f64 > deadline)
        .count() as u64;

    Ok(SimTrace {
        strategy,
        pellets: profile.stages.iter().map(|s| s.pellet.clone()).collect(),
        samples,
        drain_times,
        deadline_violations,
        total_core_seconds,
    })
}

/// One strategy's headline numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub violations: u64,
    pub total_core_seconds: f64,
    /// Core-seconds normalized to the dynamic run.
    pub ratio_vs_dynamic: f64,
    pub drain_times: Vec<u64>,
    pub max_queue_stage0: u64,
}

pub const SUMMARY_CSV_HEADER: &str = "strategy,violations,total_core_seconds,ratio_vs_dynamic";

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub outcomes: Vec<StrategyOutcome>,
    pub traces: Vec<SimTrace>,
}

impl ComparisonReport {
    pub fn outcome(&self, strategy: Strategy) -> &StrategyOutcome {
        self.outcomes
            .iter()
            .find(|o| o.strategy == strategy)
            .expect("all three strategies present")
    }

    pub fn trace(&self, strategy: Strategy) -> &SimTrace {
        self.traces
            .iter()
            .find(|t| t.strategy == strategy)
            .expect("all three strategies present")
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_CSV_HEADER);
        out.push('\n');
        for o in &self.outcomes {
            out.push_str(&format!(
                "{},{},{},{:.3}\n",
                o.strategy, o.violations, o.total_core_seconds, o.ratio_vs_dynamic
            ));
        }
        out
    }
}

/// Run static, dynamic and hybrid over the identical workload series and
/// report their cost and deadline behavior side by side.
pub fn compare_strategies(
    profile: &PipelineProfile,
    workload: &WorkloadSpec,
    params: &ControllerParams,
) -> Result<ComparisonReport, SimError> {
    let strategies = [Strategy::Static, Strategy::Dynamic, Strategy::Hybrid];
    let mut traces = Vec::with_capacity(3);
    for s in strategies {
        traces.push(simulate(profile, workload, s, params)?);
    }
    let dynamic_cost = traces[1].total_core_seconds;
    let outcomes = traces
        .iter()
        .map(|t| StrategyOutcome {
            strategy: t.strategy,
            violations: t.deadline_violations,
            total_core_seconds: t.total_core_seconds,
            ratio_vs_dynamic: if dynamic_cost > 0.0 {
                t.total_core_seconds / dynamic_cost
            } else {
                0.0
            },
            drain_times: t.drain_times.clone(),
            max_queue_stage0: t.max_queue(0),
        })
        .collect();
    Ok(ComparisonReport { outcomes, traces })
}
