//! Line-oriented simulation config: workload shape, pipeline stages, and
//! controller knobs in one file. `#` starts a comment; keys are one per
//! line; stages appear in flow order.

use super::workload::{WorkloadProfile, WorkloadSpec};
use crate::adaptation::{ControllerParams, PipelineProfile, StageProfile};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("sim config line {line}: {message}")]
pub struct SimConfigError {
    pub line: usize,
    pub message: String,
}

/// Everything needed to run a comparison: the workload series, the pipeline
/// the stages execute, and the controller parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub workload: WorkloadSpec,
    pub profile: PipelineProfile,
    pub params: ControllerParams,
}

fn err(line: usize, message: impl Into<String>) -> SimConfigError {
    SimConfigError {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, SimConfigError> {
    value
        .parse()
        .map_err(|_| err(line, format!("invalid value for {key}: {value}")))
}

pub fn parse_sim_config(input: &str) -> Result<SimConfig, SimConfigError> {
    let mut workload = WorkloadSpec::default();
    let mut params = ControllerParams::default();
    let mut stages: Vec<StageProfile> = Vec::new();
    let mut messages: Option<f64> = None;
    let mut data_duration: Option<f64> = None;
    let mut tolerance = 20.0f64;

    for (idx, raw) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let mut tokens = line.split_whitespace();
        let Some(key) = tokens.next() else { continue };
        let rest: Vec<&str> = tokens.collect();
        let one = |what: &str| -> Result<&str, SimConfigError> {
            if rest.len() == 1 {
                Ok(rest[0])
            } else {
                Err(err(lineno, format!("{what} expects exactly one value")))
            }
        };
        match key {
            "workload" => {
                let v = one("workload")?;
                workload.profile = WorkloadProfile::parse(v)
                    .ok_or_else(|| err(lineno, format!("unknown workload profile: {v}")))?;
            }
            "rate" => workload.base_rate = parse_num(lineno, key, one(key)?)?,
            "period" => workload.period = parse_num(lineno, key, one(key)?)?,
            "duration" => workload.duration = parse_num(lineno, key, one(key)?)?,
            "spike_probability" => {
                workload.spike_probability = parse_num(lineno, key, one(key)?)?
            }
            "spike_multiplier" => workload.spike_multiplier = parse_num(lineno, key, one(key)?)?,
            "walk_step" => workload.walk_step = parse_num(lineno, key, one(key)?)?,
            "seed" => workload.seed = parse_num(lineno, key, one(key)?)?,
            "horizon" => workload.horizon = parse_num(lineno, key, one(key)?)?,
            "stage" => {
                if rest.is_empty() {
                    return Err(err(lineno, "stage expects an id"));
                }
                let id = rest[0];
                let mut latency: Option<f64> = None;
                let mut selectivity = 1.0f64;
                for attr in &rest[1..] {
                    let Some((k, v)) = attr.split_once('=') else {
                        return Err(err(lineno, format!("malformed stage attribute: {attr}")));
                    };
                    match k {
                        "latency" => latency = Some(parse_num(lineno, k, v)?),
                        "selectivity" => selectivity = parse_num(lineno, k, v)?,
                        _ => return Err(err(lineno, format!("unknown stage attribute: {k}"))),
                    }
                }
                let latency =
                    latency.ok_or_else(|| err(lineno, format!("stage {id} needs latency=")))?;
                stages.push(StageProfile::new(id, latency, selectivity));
            }
            "messages" => messages = Some(parse_num(lineno, key, one(key)?)?),
            "data_duration" => data_duration = Some(parse_num(lineno, key, one(key)?)?),
            "tolerance" => tolerance = parse_num(lineno, key, one(key)?)?,
            "alpha" => params.alpha = parse_num(lineno, key, one(key)?)?,
            "tau1" => params.tau1 = parse_num(lineno, key, one(key)?)?,
            "tau2" => params.tau2 = parse_num(lineno, key, one(key)?)?,
            "interval" => params.interval = parse_num(lineno, key, one(key)?)?,
            "max_cores" => params.max_cores = parse_num(lineno, key, one(key)?)?,
            "strict_decrement" => {
                params.strict_decrement = parse_num(lineno, key, one(key)?)?
            }
            "rate_band" => params.hybrid.rate_band = parse_num(lineno, key, one(key)?)?,
            "stabilize_band" => params.hybrid.stabilize_band = parse_num(lineno, key, one(key)?)?,
            "queue_threshold" => {
                params.hybrid.queue_threshold = parse_num(lineno, key, one(key)?)?
            }
            other => return Err(err(lineno, format!("unknown key: {other}"))),
        }
    }

    if stages.is_empty() {
        return Err(err(0, "config declares no stages"));
    }
    let data_duration = data_duration.unwrap_or(workload.duration as f64);
    let messages = messages.unwrap_or(workload.base_rate * data_duration);
    let profile = PipelineProfile {
        stages,
        messages_per_period: messages,
        data_duration,
        tolerance,
        alpha: params.alpha,
    };
    Ok(SimConfig {
        workload,
        profile,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PERIODIC: &str = "\
# three-stage pipeline under a periodic burst
workload periodic
rate 4
period 300
duration 60
horizon 900

stage I1 latency=5 selectivity=1
stage I2 latency=0.5 selectivity=1
stage I3 latency=0.25

tolerance 20
interval 1
tau1 0.4
tau2 -0.4
";

    #[test]
    fn parses_full_config() {
        let cfg = parse_sim_config(PERIODIC).unwrap();
        assert_eq!(cfg.workload.profile, WorkloadProfile::Periodic);
        assert_eq!(cfg.workload.base_rate, 4.0);
        assert_eq!(cfg.workload.horizon, 900);
        assert_eq!(cfg.profile.stages.len(), 3);
        assert_eq!(cfg.profile.stages[0].latency, 5.0);
        assert_eq!(cfg.profile.stages[2].selectivity, 1.0);
        // Derived defaults: messages = rate * duration, data_duration = duration.
        assert_eq!(cfg.profile.messages_per_period, 240.0);
        assert_eq!(cfg.profile.data_duration, 60.0);
        assert_eq!(cfg.profile.tolerance, 20.0);
        assert_eq!(cfg.params.tau1, 0.4);
        assert_eq!(cfg.params.interval, 1.0);
        assert!(!cfg.params.strict_decrement);
    }

    #[test]
    fn explicit_messages_override_derived() {
        let cfg = parse_sim_config("stage a latency=1\nmessages 99\nduration 10\n").unwrap();
        assert_eq!(cfg.profile.messages_per_period, 99.0);
    }

    #[test]
    fn strict_decrement_flag() {
        let cfg =
            parse_sim_config("stage a latency=1\nstrict_decrement true\nmax_cores 3\n").unwrap();
        assert!(cfg.params.strict_decrement);
        assert_eq!(cfg.params.max_cores, 3);
    }

    #[test]
    fn rejects_unknown_key() {
        let e = parse_sim_config("stage a latency=1\nbogus 3\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("unknown key"));
    }

    #[test]
    fn rejects_missing_stage_latency() {
        let e = parse_sim_config("stage a selectivity=2\n").unwrap_err();
        assert!(e.message.contains("needs latency"));
    }

    #[test]
    fn rejects_empty_config() {
        let e = parse_sim_config("# nothing\n").unwrap_err();
        assert!(e.message.contains("no stages"));
    }
}
