//! Reading agent replies and, for mock agents and dataset checks, reading
//! numbers back out of rendered prompts.

use serde::{Deserialize, Serialize};

use crate::classical::{ArmValue, Bonus};
use crate::{Error, Result};

use super::Scenario;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum ReplyError {
    #[error("reply names no known action: {reply:?}")]
    Unparseable { reply: String },
    #[error("reply names several actions {candidates:?}: {reply:?}")]
    Ambiguous { reply: String, candidates: Vec<String> },
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn bounded(hay: &str, start: usize, end: usize) -> bool {
    let before = hay[..start].chars().next_back().is_none_or(|c| !is_word(c));
    let after = hay[end..].chars().next().is_none_or(|c| !is_word(c));
    before && after
}

/// Finds the action named in a free-text reply. Matching is
/// case-insensitive on word boundaries; a match lying inside a longer match
/// (`A` inside `AI`) is discarded. Exactly one distinct action must remain.
pub fn parse_action(reply: &str, action_names: &[String]) -> std::result::Result<usize, ReplyError> {
    let hay = reply.to_lowercase();
    let mut spans: Vec<(usize, usize, usize)> = Vec::new();
    for (arm, name) in action_names.iter().enumerate() {
        let needle = name.trim().to_lowercase();
        if needle.is_empty() {
            continue;
        }
        let mut from = 0;
        while let Some(pos) = hay[from..].find(&needle) {
            let start = from + pos;
            let end = start + needle.len();
            if bounded(&hay, start, end) {
                spans.push((start, end, arm));
            }
            from = start + hay[start..].chars().next().map_or(1, char::len_utf8);
        }
    }
    let kept: Vec<usize> = spans
        .iter()
        .filter(|&&(s, e, _)| {
            !spans
                .iter()
                .any(|&(s2, e2, _)| s2 <= s && e <= e2 && (e2 - s2) > (e - s))
        })
        .map(|&(_, _, arm)| arm)
        .collect();
    let mut arms = kept;
    arms.sort_unstable();
    arms.dedup();
    match arms.as_slice() {
        [] => Err(ReplyError::Unparseable { reply: reply.to_string() }),
        [arm] => Ok(*arm),
        many => Err(ReplyError::Ambiguous {
            reply: reply.to_string(),
            candidates: many.iter().map(|&a| action_names[a].clone()).collect(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedArm {
    pub count: u64,
    pub mean: f64,
    pub value: Option<ArmValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSummary {
    pub steps: u64,
    pub arms: Vec<ParsedArm>,
}

const HISTORY_MARKERS: [&str; 2] = ["So far you have played ", "So far you have interacted "];

/// Text after the last history header, so few-shot demonstrations placed
/// before it are ignored. Returns the header's step count too.
fn live_section(prompt: &str) -> Result<(u64, &str)> {
    let (pos, marker) = HISTORY_MARKERS
        .iter()
        .filter_map(|m| prompt.rfind(m).map(|p| (p, *m)))
        .max_by_key(|(p, _)| *p)
        .ok_or_else(|| Error::Invalid("prompt has no history header".into()))?;
    let rest = &prompt[pos + marker.len()..];
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    let steps = digits
        .parse()
        .map_err(|_| Error::Invalid("history header has no step count".into()))?;
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    Ok((steps, body))
}

fn num(text: &str) -> Result<f64> {
    text.trim()
        .parse()
        .map_err(|_| Error::Invalid(format!("not a number: {text:?}")))
}

fn bonus(text: &str) -> Result<Bonus> {
    if text.trim() == "inf" {
        Ok(Bonus::Unbounded)
    } else {
        num(text).map(Bonus::Finite)
    }
}

fn arm_line<'a>(line: &'a str, scenario: &Scenario, noun: &str) -> Option<(usize, &'a str)> {
    scenario.action_names.iter().enumerate().find_map(|(arm, name)| {
        line.strip_prefix(name.as_str())
            .and_then(|r| r.strip_prefix(' '))
            .and_then(|r| r.strip_prefix(noun))
            .and_then(|r| r.strip_prefix(", "))
            .map(|r| (arm, r))
    })
}

/// Per-arm statistics from an SH or AG prompt.
pub fn parse_summary(prompt: &str, scenario: &Scenario) -> Result<ParsedSummary> {
    let noun = scenario.templates().section("noun")?.text().to_string();
    let (steps, body) = live_section(prompt)?;
    let mut arms: Vec<Option<ParsedArm>> = vec![None; scenario.num_actions()];
    for line in body.lines() {
        let Some((arm, rest)) = arm_line(line, scenario, &noun) else {
            continue;
        };
        let mut parsed = ParsedArm::default();
        let (mut explore, mut exploit) = (None, None);
        for field in rest.split(", ") {
            if let Some(v) = field.strip_prefix("avg reward ") {
                parsed.mean = num(v)?;
            } else if let Some(v) = field.strip_prefix("exploration bonus ") {
                explore = Some(bonus(v)?);
            } else if let Some(v) = field.strip_prefix("exploitation value ") {
                exploit = Some(num(v)?);
            } else if let Some(n) = field.strip_suffix(" times").or_else(|| field.strip_suffix(" time")) {
                parsed.count = n
                    .trim()
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad count in {line:?}")))?;
            }
        }
        if let (Some(explore), Some(exploit)) = (explore, exploit) {
            parsed.value = Some(ArmValue { exploit, explore });
        }
        arms[arm] = Some(parsed);
    }
    let arms = arms
        .into_iter()
        .enumerate()
        .map(|(a, p)| p.ok_or_else(|| Error::Invalid(format!("summary has no line for {}", scenario.action_names[a]))))
        .collect::<Result<Vec<_>>>()?;
    Ok(ParsedSummary { steps, arms })
}

/// `(arm, reward)` pairs from the live history of a raw-history prompt, for
/// both multi-armed and contextual scenarios.
pub fn parse_raw_history(prompt: &str, scenario: &Scenario) -> Result<Vec<(usize, f64)>> {
    let (_, body) = live_section(prompt)?;
    let mut out = Vec::new();
    if scenario.kind.is_contextual() {
        let mut pending: Option<usize> = None;
        for line in body.lines() {
            if let Some(name) = line.strip_prefix("Action: ") {
                pending = scenario.action_index(name);
            } else if let Some(r) = line.strip_prefix("Reward: ").and_then(|r| r.strip_suffix(" out of 5")) {
                if let Some(arm) = pending.take() {
                    out.push((arm, num(r)?));
                }
            } else if line.starts_with("You have a new user") {
                break;
            }
        }
    } else {
        let noun = scenario.templates().section("noun")?.text().to_string();
        for line in body.lines() {
            if let Some((arm, rest)) = arm_line(line, scenario, &noun) {
                if let Some(r) = rest.strip_prefix("reward ") {
                    out.push((arm, num(r)?));
                }
            }
        }
    }
    Ok(out)
}

/// Side-information values shown for the current user of a contextual AG
/// prompt.
pub fn parse_side_info(prompt: &str, scenario: &Scenario) -> Result<Vec<ArmValue>> {
    let tail = prompt
        .rfind("You have a new user")
        .map(|p| &prompt[p..])
        .ok_or_else(|| Error::Invalid("contextual prompt has no current user".into()))?;
    let mut values: Vec<Option<ArmValue>> = vec![None; scenario.num_actions()];
    const MID: &str = "\": {\"exploration value\": ";
    const EXPLOIT: &str = "}, {\"exploitation value\":";
    for line in tail.lines() {
        let Some(inner) = line.strip_prefix("{\"").and_then(|l| l.strip_suffix("}}")) else {
            continue;
        };
        let (Some(m), Some(x)) = (inner.rfind(MID), inner.rfind(EXPLOIT)) else {
            continue;
        };
        if x < m {
            continue;
        }
        let name = &inner[..m];
        let Some(arm) = scenario.action_index(name) else {
            continue;
        };
        values[arm] = Some(ArmValue {
            explore: bonus(&inner[m + MID.len()..x])?,
            exploit: num(&inner[x + EXPLOIT.len()..])?,
        });
    }
    values
        .into_iter()
        .enumerate()
        .map(|(a, v)| v.ok_or_else(|| Error::Invalid(format!("no side information for {}", scenario.action_names[a]))))
        .collect()
}
