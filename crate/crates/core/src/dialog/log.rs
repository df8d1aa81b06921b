use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{BeliefState, DialogAct, DialogEnv, EpisodeConfig, EpisodeResult};
use crate::error::{Error, Result};
use crate::ontology::{Ontology, UserGoal};

/// One exchange of a logged episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub t: usize,
    pub system_acts: Vec<DialogAct>,
    pub user_acts: Vec<DialogAct>,
    pub reward: f64,
    /// Digest of the belief the system acted on.
    pub belief_digest: String,
    /// The belief the system acted on, without dialog history. Needed to
    /// resume the episode from this turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief: Option<BeliefState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl TurnRecord {
    pub fn new(belief: &BeliefState, system_acts: Vec<DialogAct>, user_acts: Vec<DialogAct>, reward: f64) -> Self {
        TurnRecord {
            t: belief.turn,
            system_acts,
            user_acts,
            reward,
            belief_digest: belief.digest(),
            belief: None,
            source: None,
            confidence: None,
            reason: None,
        }
    }

    pub fn with_snapshot(mut self, belief: &BeliefState) -> Self {
        self.belief = Some(BeliefState {
            history: Vec::new(),
            ..belief.clone()
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Header {
        episode: usize,
        goal: UserGoal,
        config: EpisodeConfig,
    },
    Turn(TurnRecord),
    Trailer {
        success: bool,
        turns_used: usize,
        cumulative_reward: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub goal: UserGoal,
    pub config: EpisodeConfig,
    pub turns: Vec<TurnRecord>,
    pub success: bool,
    pub cumulative_reward: f64,
}

impl EpisodeLog {
    pub fn new(episode: usize, goal: UserGoal, config: EpisodeConfig) -> Self {
        EpisodeLog {
            episode,
            goal,
            config,
            turns: Vec::new(),
            success: false,
            cumulative_reward: 0.0,
        }
    }

    pub fn finish(&mut self, result: &EpisodeResult) {
        self.success = result.success;
        self.cumulative_reward = result.cumulative_reward;
    }

    pub fn records(&self) -> Vec<LogRecord> {
        let mut out = Vec::with_capacity(self.turns.len() + 2);
        out.push(LogRecord::Header {
            episode: self.episode,
            goal: self.goal.clone(),
            config: self.config.clone(),
        });
        out.extend(self.turns.iter().cloned().map(LogRecord::Turn));
        out.push(LogRecord::Trailer {
            success: self.success,
            turns_used: self.turns.len(),
            cumulative_reward: self.cumulative_reward,
        });
        out
    }

    /// Header, one line per turn, then the trailer.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in self.records() {
            s.push_str(&serde_json::to_string(&r).expect("log record serializes"));
            s.push('\n');
        }
        s
    }

    /// Parses every episode in a line-delimited log.
    pub fn parse_jsonl(text: &str) -> Result<Vec<EpisodeLog>> {
        let mut logs = Vec::new();
        let mut current: Option<EpisodeLog> = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: LogRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let orphan = || Error::Parse {
                line: i + 1,
                message: "record outside an episode".into(),
            };
            match record {
                LogRecord::Header { episode, goal, config } => {
                    if current.is_some() {
                        return Err(Error::Parse {
                            line: i + 1,
                            message: "header before previous trailer".into(),
                        });
                    }
                    current = Some(EpisodeLog::new(episode, goal, config));
                }
                LogRecord::Turn(t) => current.as_mut().ok_or_else(orphan)?.turns.push(t),
                LogRecord::Trailer {
                    success,
                    cumulative_reward,
                    ..
                } => {
                    let mut log = current.take().ok_or_else(orphan)?;
                    log.success = success;
                    log.cumulative_reward = cumulative_reward;
                    logs.push(log);
                }
            }
        }
        if current.is_some() {
            return Err(Error::Parse {
                line: text.lines().count(),
                message: "episode without trailer".into(),
            });
        }
        Ok(logs)
    }

    /// Realized discounted return from turn `index` to the end.
    pub fn return_from(&self, index: usize, gamma: f64) -> f64 {
        self.turns[index..]
            .iter()
            .rev()
            .fold(0.0, |acc, t| t.reward + gamma * acc)
    }

    /// Environment positioned just before the system acts of turn `index`.
    pub fn resume_at(&self, ontology: Arc<Ontology>, index: usize, rng_seed: u64) -> Result<DialogEnv> {
        let record = self
            .turns
            .get(index)
            .ok_or_else(|| Error::Input(format!("episode {} has no turn {index}", self.episode)))?;
        let belief = record.belief.clone().ok_or_else(|| {
            Error::Input(format!(
                "episode {} turn {index} has no belief snapshot",
                self.episode
            ))
        })?;
        let system_log = self.turns[..index]
            .iter()
            .flat_map(|t| t.system_acts.iter().cloned())
            .collect();
        let rewards = self.turns[..index].iter().map(|t| t.reward).collect();
        DialogEnv::resume(
            ontology,
            self.goal.clone(),
            self.config.clone(),
            belief,
            system_log,
            rewards,
            rng_seed,
        )
    }
}
