//! Periodic landscape summaries over the archive's strategies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{Archive, ArchiveEntry};
use crate::prompt::{render, section};

pub const SLN_TEMPLATE: &str = include_str!("../templates/sln.txt");

/// Default cap on entries listed in a landscape prompt.
pub const DEFAULT_PROMPT_BUDGET: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeGuidance {
    pub effective: String,
    pub saturated: String,
    pub underexplored: String,
    pub concrete: String,
    pub refreshed_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GuidanceParseFailure {
    #[error("guidance response is missing the {0} section")]
    Missing(&'static str),
}

pub fn should_refresh(generation: u64, delta: u64) -> bool {
    delta > 0 && generation.is_multiple_of(delta)
}

fn stanza(e: &ArchiveEntry) -> String {
    let description = e.strategy_description.split_whitespace().collect::<Vec<_>>().join(" ");
    format!("- [generation {}, fitness {}] {}", e.generation, e.fitness, description)
}

/// Lists live entries by generation (id breaks ties). Over `budget`, only the
/// most recent `budget` entries are listed, after a count of those omitted.
pub fn build_sln_prompt(archive: &Archive, task_brief: &str, budget: usize) -> String {
    let mut entries: Vec<&ArchiveEntry> = archive.entries().iter().collect();
    entries.sort_by_key(|e| (e.generation, e.id));
    let omitted = entries.len().saturating_sub(budget);
    let mut lines = Vec::with_capacity(entries.len() - omitted + 1);
    if omitted > 0 {
        lines.push(format!("{omitted} older entries omitted"));
    }
    lines.extend(entries[omitted..].iter().map(|e| stanza(e)));
    render(SLN_TEMPLATE, &[("task_brief", task_brief.trim()), ("entries", &lines.join("\n"))])
}

const SECTIONS: [(&str, &str); 4] = [
    ("EFFECTIVE", "effective"),
    ("SATURATED", "saturated"),
    ("UNEXPLORED", "unexplored"),
    ("GUIDANCE", "guidance"),
];

/// Recognizes a heading line such as `**Saturated**`, `## Unexplored:` or
/// `Guidance`, returning the section index and any text after a colon.
fn heading(line: &str) -> Option<(usize, &str)> {
    let stripped = line.trim().trim_start_matches(['#', '*', ' ']);
    for (i, (_, name)) in SECTIONS.iter().enumerate() {
        if stripped.len() >= name.len() && stripped[..name.len()].eq_ignore_ascii_case(name) {
            let rest = stripped[name.len()..].trim_start_matches(['*', ' ']);
            if rest.is_empty() {
                return Some((i, ""));
            }
            if let Some(after) = rest.strip_prefix(':') {
                return Some((i, after.trim_start_matches(['*', ' '])));
            }
        }
    }
    None
}

fn heading_sections(text: &str) -> [Option<String>; 4] {
    let mut bodies: [Option<Vec<&str>>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for line in text.lines() {
        if let Some((i, rest)) = heading(line) {
            current = Some(i);
            let body = bodies[i].get_or_insert_with(Vec::new);
            if !rest.is_empty() {
                body.push(rest);
            }
        } else if let Some(i) = current {
            bodies[i].as_mut().expect("open section").push(line);
        }
    }
    bodies.map(|b| b.map(|lines| lines.join("\n").trim().to_string()).filter(|s| !s.is_empty()))
}

/// Parses the four guidance sections, preferring tagged fences and falling
/// back to heading-style sections.
pub fn parse_guidance(text: &str, generation: u64) -> Result<LandscapeGuidance, GuidanceParseFailure> {
    let fenced = SECTIONS.map(|(tag, _)| section(text, tag).filter(|s| !s.is_empty()));
    let parsed = if fenced.iter().all(Option::is_some) {
        fenced
    } else {
        let headed = heading_sections(text);
        let found = |s: &[Option<String>; 4]| s.iter().filter(|v| v.is_some()).count();
        if found(&headed) > found(&fenced) {
            headed
        } else {
            fenced
        }
    };
    let mut fields = Vec::with_capacity(4);
    for (value, (tag, _)) in parsed.into_iter().zip(SECTIONS) {
        fields.push(value.ok_or(GuidanceParseFailure::Missing(tag))?);
    }
    let mut it = fields.into_iter();
    Ok(LandscapeGuidance {
        effective: it.next().unwrap(),
        saturated: it.next().unwrap(),
        underexplored: it.next().unwrap(),
        concrete: it.next().unwrap(),
        refreshed_at: generation,
    })
}
