//! Diagnose/direct/implement mutation prompts and their parsing, plus the
//! describe-only call used on the base path.

use thiserror::Error;

use crate::archive::ArchiveEntry;
use crate::navigation::LandscapeGuidance;
use crate::prompt::{fence, render, section, strip_fences};
use crate::providers::{ChatExchange, ChatProvider, ChatRequest, ProviderError, Purpose};
use crate::strategy_space::InspirationSet;

pub const SYSTEM_PROMPT: &str = include_str!("../templates/system.txt");
pub const SA_TEMPLATE: &str = include_str!("../templates/sa.txt");
pub const DESCRIBE_TEMPLATE: &str = include_str!("../templates/describe.txt");

/// Stored when the describe call comes back empty, so the entry stays embeddable.
pub const UNDESCRIBED: &str = "UNDESCRIBED CANDIDATE";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaResponse {
    /// Transient reasoning; never archived.
    pub diagnosis: String,
    pub strategy: String,
    pub program: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error("response has no non-empty {0} section")]
    MissingSection(&'static str),
}

fn inspiration_block(set: &InspirationSet) -> String {
    if set.picks.is_empty() {
        return String::new();
    }
    let mut out = String::from("\n## Inspirations\nStrategies of other archive entries (code withheld):\n");
    for pick in &set.picks {
        out.push_str(&format!(
            "\n[{}] fitness {}\nStrategy: {}\n",
            pick.role.label(),
            pick.entry.fitness,
            pick.entry.strategy_description
        ));
    }
    out
}

fn guidance_block(guidance: &LandscapeGuidance) -> String {
    format!(
        "\n## Landscape guidance (generation {})\n\
         Treat this as a constraint: avoid the saturated directions and consider the underexplored ones.\n\n\
         Effective:\n{}\n\nSaturated (avoid):\n{}\n\nUnderexplored (consider):\n{}\n\nConcrete guidance:\n{}\n",
        guidance.refreshed_at,
        guidance.effective,
        guidance.saturated,
        guidance.underexplored,
        guidance.concrete
    )
}

/// Builds the strategy-articulation prompt.
///
/// Only the parent's source is rendered; inspirations contribute their
/// strategy, fitness and role.
pub fn build_sa_prompt(
    parent: &ArchiveEntry,
    inspirations: &InspirationSet,
    guidance: Option<&LandscapeGuidance>,
    task_brief: &str,
) -> String {
    debug_assert_eq!(parent.id, inspirations.parent.id);
    let fitness = parent.fitness.to_string();
    let inspirations = inspiration_block(inspirations);
    let guidance = guidance.map(guidance_block).unwrap_or_default();
    render(
        SA_TEMPLATE,
        &[
            ("task_brief", task_brief.trim()),
            ("parent_fitness", &fitness),
            ("parent_strategy", &parent.strategy_description),
            ("parent_program", parent.program_source.trim_end()),
            ("inspirations", &inspirations),
            ("guidance", &guidance),
        ],
    )
}

pub fn parse_sa_response(text: &str) -> Result<SaResponse, ParseFailure> {
    let strategy = section(text, "STRATEGY")
        .filter(|s| !s.is_empty())
        .ok_or(ParseFailure::MissingSection("STRATEGY"))?;
    let program = section(text, "PROGRAM")
        .filter(|s| !s.is_empty())
        .ok_or(ParseFailure::MissingSection("PROGRAM"))?;
    let diagnosis = section(text, "DIAGNOSIS").unwrap_or_default();
    Ok(SaResponse { diagnosis, strategy, program })
}

/// Inverse of [`parse_sa_response`] for well-formed responses.
pub fn render_sa_response(response: &SaResponse) -> String {
    [
        fence("DIAGNOSIS", &response.diagnosis),
        fence("STRATEGY", &response.strategy),
        fence("PROGRAM", &response.program),
    ]
    .join("\n")
}

pub fn build_describe_prompt(program: &str, task_brief: &str) -> String {
    render(DESCRIBE_TEMPLATE, &[("task_brief", task_brief.trim()), ("program", program.trim_end())])
}

/// Extracts a description from a describe reply; falls back to the sentinel.
pub fn parse_description(text: &str) -> String {
    let body = section(text, "DESCRIPTION").unwrap_or_else(|| strip_fences(text));
    if body.trim().is_empty() {
        UNDESCRIBED.to_string()
    } else {
        body.trim().to_string()
    }
}

/// One chat call producing a strategy description for `program`.
pub fn describe_program(
    program: &str,
    task_brief: &str,
    chat: &dyn ChatProvider,
    temperature: f64,
    max_tokens: u32,
) -> Result<(String, ChatExchange), ProviderError> {
    let request = ChatRequest {
        system: SYSTEM_PROMPT.trim().to_string(),
        user: build_describe_prompt(program, task_brief),
        temperature,
        max_tokens,
        purpose: Purpose::Describe,
    };
    let exchange = chat.chat(&request)?;
    Ok((parse_description(&exchange.response.text), exchange))
}
