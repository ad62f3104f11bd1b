//! Line-oriented scenario files for the simulator.
//!
//! ```text
//! # reference n = 4 setup
//! authorities 4
//! quorum 3
//! round_duration 12
//! seed 42
//! max_rounds 30
//! max_batch 64
//! workload 20 per_round 2
//! fault 2 crash rounds 3-5
//! fault 1 equivocate
//! ```
//!
//! A `fault` without `rounds` applies to every round.

use thiserror::Error;

use super::sim::{Behavior, Fault, FaultSchedule, Scenario, Workload};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

fn number<T: std::str::FromStr>(word: Option<&str>, what: &str, line: usize) -> Result<T, ScenarioError> {
    let w = word.ok_or_else(|| ScenarioError {
        line,
        message: format!("missing {what}"),
    })?;
    w.parse().map_err(|_| ScenarioError {
        line,
        message: format!("invalid {what} {w:?}"),
    })
}

fn behavior(word: Option<&str>, line: usize) -> Result<Behavior, ScenarioError> {
    match word {
        Some("crash") => Ok(Behavior::Crashed),
        Some("equivocate") => Ok(Behavior::Equivocating),
        Some("partition") => Ok(Behavior::Partitioned),
        Some("honest") => Ok(Behavior::Honest),
        other => Err(ScenarioError {
            line,
            message: format!("unknown fault kind {other:?}"),
        }),
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut s = Scenario::default();
    let mut faults = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut words = content.split_whitespace();
        let directive = words.next().expect("non-empty line");
        match directive {
            "authorities" => s.authorities = number(words.next(), "authority count", line)?,
            "quorum" => s.quorum = Some(number(words.next(), "quorum", line)?),
            "round_duration" => s.round_duration = number(words.next(), "round duration", line)?,
            "seed" => s.seed = number(words.next(), "seed", line)?,
            "max_rounds" => s.max_rounds = number(words.next(), "max_rounds", line)?,
            "max_batch" => s.max_batch = number(words.next(), "max_batch", line)?,
            "workload" => {
                let count = number(words.next(), "workload size", line)?;
                let per_round = match words.next() {
                    None => 0,
                    Some("per_round") => number(words.next(), "per_round", line)?,
                    Some(w) => {
                        return Err(ScenarioError {
                            line,
                            message: format!("unexpected {w:?} after workload size"),
                        })
                    }
                };
                s.workload = Workload { count, per_round };
            }
            "fault" => {
                let node = number(words.next(), "node index", line)?;
                let behavior = behavior(words.next(), line)?;
                let (from_round, to_round) = match words.next() {
                    None => (0, u64::MAX),
                    Some("rounds") => {
                        let range: String = number(words.next(), "round range", line)?;
                        let (a, b) = range.split_once('-').unwrap_or((&range, &range));
                        let from: u64 = number(Some(a), "range start", line)?;
                        let to: u64 = number(Some(b), "range end", line)?;
                        if to < from {
                            return Err(ScenarioError {
                                line,
                                message: format!("empty round range {range}"),
                            });
                        }
                        (from, to)
                    }
                    Some(w) => {
                        return Err(ScenarioError {
                            line,
                            message: format!("unexpected {w:?} in fault directive"),
                        })
                    }
                };
                faults.push(Fault {
                    node,
                    behavior,
                    from_round,
                    to_round,
                });
            }
            other => {
                return Err(ScenarioError {
                    line,
                    message: format!("unknown directive {other:?}"),
                })
            }
        }
        if let Some(extra) = words.next() {
            return Err(ScenarioError {
                line,
                message: format!("unexpected trailing {extra:?}"),
            });
        }
    }
    s.faults = FaultSchedule::new(faults);
    Ok(s)
}
