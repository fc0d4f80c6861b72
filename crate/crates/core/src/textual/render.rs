use crate::classical::{ArmValue, Bonus};
use crate::env::CbContext;
use crate::{Error, Result};

use super::{HistoryRecord, Scenario, ScenarioKind, SummaryStats, Textualization};

pub const FEWSHOT_SEPARATOR: &str = "========================";

const FEWSHOT_HEADER: &str =
    "Here are some examples of optimal actions under different scenarios. Use them as hints to help you come up with better actions.";

const SIDE_INFO_HEADER: &str = "Side Information for decision making:";

pub fn fewshot_header() -> &'static str {
    FEWSHOT_HEADER
}

/// Contextual prompt input: the visible history, the user to serve now, and
/// for AG the oracle values for that user.
#[derive(Debug, Clone, Copy)]
pub struct CbView<'a> {
    pub history: &'a [HistoryRecord],
    pub current: &'a CbContext,
    pub current_values: Option<&'a [ArmValue]>,
    /// Interaction count printed in the header; defaults to the history length.
    pub interactions: Option<usize>,
}

pub(crate) fn fmt_value(v: f64, decimals: Option<usize>) -> String {
    match decimals {
        Some(d) => format!("{v:.d$}"),
        None => format!("{v}"),
    }
}

fn fmt_bonus(b: Bonus, decimals: Option<usize>) -> String {
    match b {
        Bonus::Finite(v) => fmt_value(v, decimals),
        Bonus::Unbounded => "inf".to_string(),
    }
}

/// Average reward with trailing zeros dropped ("0", "1", "0.5", "0.33").
pub(crate) fn fmt_avg(v: f64, decimals: Option<usize>) -> String {
    let Some(d) = decimals else {
        return format!("{v}");
    };
    let mut s = format!("{v:.d$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

fn check_record(scenario: &Scenario, r: &HistoryRecord) -> Result<()> {
    match scenario.action_names.get(r.arm) {
        Some(name) if *name == r.action => Ok(()),
        _ => Err(Error::Render(format!(
            "action {:?} (arm {}) is not in the scenario's action list",
            r.action, r.arm
        ))),
    }
}

fn require_mab(scenario: &Scenario) -> Result<()> {
    if scenario.kind.is_contextual() {
        return Err(Error::Render("contextual scenarios render through render_cb".into()));
    }
    Ok(())
}

fn section<'a>(scenario: &'a Scenario, name: &str) -> Result<&'a str> {
    Ok(scenario.templates().section(name)?.text())
}

fn raw_question(scenario: &Scenario) -> Result<String> {
    let list = scenario.action_names.join(", ");
    scenario
        .templates()
        .section("question")?
        .render(&[("action_list", &list)])
}

fn raw_history_lines(scenario: &Scenario, history: &[HistoryRecord]) -> Result<String> {
    let noun = section(scenario, "noun")?;
    let mut lines = Vec::with_capacity(history.len());
    for r in history {
        check_record(scenario, r)?;
        lines.push(format!("{} {noun}, reward {}", r.action, r.reward));
    }
    Ok(lines.join("\n"))
}

/// Raw-history prompt for a multi-armed scenario.
pub fn render_rh(scenario: &Scenario, history: &[HistoryRecord], fewshot: &str) -> Result<String> {
    require_mab(scenario)?;
    super::validate_history(history)?;
    let lines = raw_history_lines(scenario, history)?;
    let question = raw_question(scenario)?;
    let k = scenario.num_actions().to_string();
    let list = scenario.action_names.join(", ");
    let steps = history.len().to_string();
    scenario.templates().section("raw")?.render(&[
        ("num_actions", &k),
        ("action_list", &list),
        ("fewshot", fewshot),
        ("steps", &steps),
        ("history", &lines),
        ("question", &question),
    ])
}

fn summary_lines(scenario: &Scenario, stats: &SummaryStats, with_values: bool) -> Result<String> {
    if stats.arms.len() != scenario.num_actions() {
        return Err(Error::Shape {
            what: "summary arms",
            expected: scenario.num_actions(),
            got: stats.arms.len(),
        });
    }
    stats.validate()?;
    let noun = section(scenario, "noun")?;
    let dec = scenario.value_decimals;
    let mut out = String::new();
    for (name, arm) in scenario.action_names.iter().zip(&stats.arms) {
        out.push_str(name);
        out.push(' ');
        out.push_str(noun);
        out.push_str(", ");
        match arm.count {
            0 => {}
            1 => out.push_str("1 time, "),
            n => out.push_str(&format!("{n} times, ")),
        }
        out.push_str("avg reward ");
        out.push_str(&fmt_avg(arm.mean.unwrap_or(0.0), dec));
        if with_values {
            let v = arm
                .value
                .ok_or_else(|| Error::Render(format!("missing exploration/exploitation values for {name}")))?;
            out.push_str(", exploration bonus ");
            out.push_str(&fmt_bonus(v.explore, dec));
            out.push_str(", exploitation value ");
            out.push_str(&fmt_value(v.exploit, dec));
        }
        out.push('\n');
    }
    Ok(out)
}

fn render_summary(scenario: &Scenario, stats: &SummaryStats, with_values: bool, fewshot: &str) -> Result<String> {
    require_mab(scenario)?;
    let arm_lines = summary_lines(scenario, stats, with_values)?;
    let sep = format!("{}\n", section(scenario, "list_separator")?);
    let action_lines = scenario.action_names.join(&sep);
    let k = scenario.num_actions().to_string();
    let steps = stats.steps.to_string();
    let question = section(scenario, "summary_question")?;
    scenario.templates().section("summary")?.render(&[
        ("num_actions", &k),
        ("action_lines", &action_lines),
        ("fewshot", fewshot),
        ("steps", &steps),
        ("arm_lines", &arm_lines),
        ("summary_question", question),
    ])
}

/// Summarized-history prompt: per-arm counts and average rewards.
pub fn render_sh(scenario: &Scenario, stats: &SummaryStats, fewshot: &str) -> Result<String> {
    render_summary(scenario, stats, false, fewshot)
}

/// Algorithm-guided prompt: the summary plus per-arm exploration bonus and
/// exploitation value.
pub fn render_ag(scenario: &Scenario, stats: &SummaryStats, fewshot: &str) -> Result<String> {
    render_summary(scenario, stats, true, fewshot)
}

fn preference_text(p: &[f64]) -> String {
    p.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(", ")
}

fn context_line(scenario: &Scenario, section_name: &str, ctx: &CbContext) -> Result<String> {
    let pref = preference_text(&ctx.preference);
    let age = ctx.profile.age_text();
    scenario.templates().section(section_name)?.render(&[
        ("age", &age),
        ("gender", ctx.profile.gender.noun()),
        ("occupation", &ctx.profile.occupation),
        ("location", &ctx.profile.location),
        ("preference", &pref),
    ])
}

fn side_info(scenario: &Scenario, values: &[ArmValue]) -> Result<String> {
    if values.len() != scenario.num_actions() {
        return Err(Error::Shape {
            what: "side information values",
            expected: scenario.num_actions(),
            got: values.len(),
        });
    }
    let dec = scenario.value_decimals;
    let mut out = String::from(SIDE_INFO_HEADER);
    for (name, v) in scenario.action_names.iter().zip(values) {
        out.push_str(&format!(
            "\n{{\"{name}\": {{\"exploration value\": {}}}, {{\"exploitation value\":{}}}}}",
            fmt_bonus(v.explore, dec),
            fmt_value(v.exploit, dec)
        ));
    }
    Ok(out)
}

fn cb_history(scenario: &Scenario, history: &[HistoryRecord], with_values: bool) -> Result<String> {
    let mut records = Vec::with_capacity(history.len());
    for r in history {
        check_record(scenario, r)?;
        let ctx = r
            .context
            .as_ref()
            .ok_or_else(|| Error::Render(format!("contextual history step {} has no context", r.step)))?;
        let mut rec = context_line(scenario, "history_context", ctx)?;
        rec.push('\n');
        if with_values {
            let values = r
                .values
                .as_deref()
                .ok_or_else(|| Error::Render(format!("history step {} has no side information", r.step)))?;
            rec.push_str(&side_info(scenario, values)?);
            rec.push('\n');
        }
        rec.push_str(&format!("Action: {}\nReward: {} out of 5\n", r.action, r.reward));
        records.push(rec);
    }
    Ok(records.join("\n"))
}

fn cb_current(scenario: &Scenario, view: &CbView<'_>, with_values: bool) -> Result<String> {
    let mut current = context_line(scenario, "current_context", view.current)?;
    if with_values {
        let values = view
            .current_values
            .ok_or_else(|| Error::Render("AG prompt needs values for the current user".into()))?;
        current.push('\n');
        current.push_str(&side_info(scenario, values)?);
    }
    Ok(current)
}

fn visible<'a>(scenario: &Scenario, history: &'a [HistoryRecord]) -> &'a [HistoryRecord] {
    match scenario.history_window {
        Some(w) if history.len() > w => &history[history.len() - w..],
        _ => history,
    }
}

/// Contextual prompt (RH or AG) over the most recent interactions.
pub fn render_cb(scenario: &Scenario, textualization: Textualization, view: &CbView<'_>, fewshot: &str) -> Result<String> {
    if scenario.kind != ScenarioKind::CbMovies {
        return Err(Error::Render("render_cb needs a contextual scenario".into()));
    }
    let with_values = match textualization {
        Textualization::Rh => false,
        Textualization::Ag => true,
        Textualization::Sh => {
            return Err(Error::Render("contextual tasks have no summarized-history schema".into()))
        }
    };
    super::validate_history(view.history)?;
    let shown = visible(scenario, view.history);
    let history = cb_history(scenario, shown, with_values)?;
    let current = cb_current(scenario, view, with_values)?;
    let k = scenario.num_actions().to_string();
    let descriptions = scenario.action_descriptions.join(",\n");
    let steps = view.interactions.unwrap_or(view.history.len()).to_string();
    scenario.templates().section("raw")?.render(&[
        ("num_actions", &k),
        ("action_descriptions", &descriptions),
        ("fewshot", fewshot),
        ("steps", &steps),
        ("history", &history),
        ("current", &current),
    ])
}

/// Everything a textual agent may be shown at one step.
#[derive(Debug, Clone, Copy)]
pub struct PromptInput<'a> {
    pub history: &'a [HistoryRecord],
    pub stats: Option<&'a SummaryStats>,
    pub current: Option<&'a CbContext>,
    pub current_values: Option<&'a [ArmValue]>,
}

/// Dispatches to the renderer matching the scenario and schema.
pub fn render_prompt(
    scenario: &Scenario,
    textualization: Textualization,
    input: &PromptInput<'_>,
    fewshot: &str,
) -> Result<String> {
    if scenario.kind.is_contextual() {
        let current = input
            .current
            .ok_or_else(|| Error::Render("contextual prompt without a current user".into()))?;
        let view = CbView {
            history: input.history,
            current,
            current_values: input.current_values,
            interactions: None,
        };
        return render_cb(scenario, textualization, &view, fewshot);
    }
    match textualization {
        Textualization::Rh => render_rh(scenario, input.history, fewshot),
        Textualization::Sh | Textualization::Ag => {
            let stats = input
                .stats
                .ok_or_else(|| Error::Render("summary prompt without statistics".into()))?;
            if textualization == Textualization::Sh {
                render_sh(scenario, stats, fewshot)
            } else {
                render_ag(scenario, stats, fewshot)
            }
        }
    }
}

/// The body of a few-shot demonstration: what the agent saw, ending with the
/// question, without the preamble.
pub fn render_excerpt(scenario: &Scenario, textualization: Textualization, input: &PromptInput<'_>) -> Result<String> {
    if scenario.kind.is_contextual() {
        let with_values = textualization == Textualization::Ag;
        let current = input
            .current
            .ok_or_else(|| Error::Render("contextual excerpt without a current user".into()))?;
        let view = CbView {
            history: input.history,
            current,
            current_values: input.current_values,
            interactions: None,
        };
        let history = cb_history(scenario, visible(scenario, input.history), with_values)?;
        return Ok(format!("{history}\n{}", cb_current(scenario, &view, with_values)?));
    }
    let body = match textualization {
        Textualization::Rh => raw_history_lines(scenario, input.history)?,
        Textualization::Sh | Textualization::Ag => {
            let stats = input
                .stats
                .ok_or_else(|| Error::Render("summary excerpt without statistics".into()))?;
            let mut lines = summary_lines(scenario, stats, textualization == Textualization::Ag)?;
            lines.pop();
            lines
        }
    };
    Ok(format!("{body}\n\n{}", raw_question(scenario)?))
}
