//! Fenced-section parsing and prompt template rendering shared by the
//! articulation, navigation and base-mutation prompts.

/// One fenced block: the info-string tag and the enclosed text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fence {
    pub tag: String,
    pub body: String,
}

const FENCE: &str = "```";

/// Splits `text` into fenced blocks, ignoring everything outside them.
///
/// A block opens on a line starting with three backticks (the first word after
/// them is the tag) and closes on a line that is exactly three backticks. An
/// unclosed final block runs to the end of the text.
pub fn fences(text: &str) -> Vec<Fence> {
    let mut out = Vec::new();
    let mut open: Option<(String, Vec<&str>)> = None;
    for line in text.lines() {
        match open.as_mut() {
            Some((_, body)) => {
                if line.trim() == FENCE {
                    let (tag, body) = open.take().unwrap();
                    out.push(Fence { tag, body: body.join("\n") });
                } else {
                    body.push(line);
                }
            }
            None => {
                if let Some(rest) = line.trim_start().strip_prefix(FENCE) {
                    let tag = rest.split_whitespace().next().unwrap_or("").to_string();
                    open = Some((tag, Vec::new()));
                }
            }
        }
    }
    if let Some((tag, body)) = open {
        out.push(Fence { tag, body: body.join("\n") });
    }
    out
}

/// Body of the first fence tagged `tag` (case-insensitive), trimmed.
pub fn section(text: &str, tag: &str) -> Option<String> {
    fences(text)
        .into_iter()
        .find(|f| f.tag.eq_ignore_ascii_case(tag))
        .map(|f| f.body.trim().to_string())
}

/// Renders a fenced block.
pub fn fence(tag: &str, body: &str) -> String {
    format!("{FENCE}{tag}\n{body}\n{FENCE}")
}

/// Whether `text` contains a fence opener with the given tag.
pub fn has_fence_marker(text: &str, tag: &str) -> bool {
    text.lines().any(|line| {
        line.trim_start()
            .strip_prefix(FENCE)
            .and_then(|rest| rest.split_whitespace().next())
            .is_some_and(|t| t.eq_ignore_ascii_case(tag))
    })
}

/// Single-pass `{{name}}` substitution. Substituted values are never rescanned,
/// so program text containing braces passes through untouched. Unbound
/// placeholders are left in place.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = after[..end].trim();
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, value)) => out.push_str(value),
                    None => out.push_str(&rest[start..start + 2 + end + 2]),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Placeholder names appearing in a template.
pub fn placeholders(template: &str) -> Vec<String> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else { break };
        names.push(after[..end].trim().to_string());
        rest = &after[end + 2..];
    }
    names
}

/// Strips one surrounding fence (any tag) if the whole text is fenced.
pub fn strip_fences(text: &str) -> String {
    let trimmed = text.trim();
    if trimmed.starts_with(FENCE) {
        if let Some(first) = fences(trimmed).into_iter().next() {
            return first.body.trim().to_string();
        }
    }
    trimmed.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_tagged_fences_and_ignores_chatter() {
        let text = "Sure! Here you go.\n```STRATEGY\nhex rows\n```\nsome words\n```python\nprint(1)\n```\nbye";
        let all = fences(text);
        assert_eq!(all.len(), 2);
        assert_eq!(all[0], Fence { tag: "STRATEGY".into(), body: "hex rows".into() });
        assert_eq!(all[1].tag, "python");
        assert_eq!(section(text, "strategy").as_deref(), Some("hex rows"));
        assert_eq!(section(text, "PROGRAM"), None);
    }

    #[test]
    fn unclosed_fence_runs_to_end() {
        let all = fences("```PROGRAM\nline1\nline2");
        assert_eq!(all[0].body, "line1\nline2");
    }

    #[test]
    fn render_is_single_pass() {
        let out = render("a {{x}} b {{ y }} c {{missing}}", &[("x", "{{y}}"), ("y", "Y")]);
        assert_eq!(out, "a {{y}} b Y c {{missing}}");
        assert_eq!(placeholders("{{a}} and {{ b }}"), vec!["a", "b"]);
    }

    #[test]
    fn marker_detection_requires_fence_opener() {
        assert!(has_fence_marker("x\n```DIAGNOSIS\n", "diagnosis"));
        assert!(!has_fence_marker("mentions DIAGNOSIS inline", "DIAGNOSIS"));
    }

    #[test]
    fn strip_fences_handles_bare_and_fenced() {
        assert_eq!(strip_fences("  plain text \n"), "plain text");
        assert_eq!(strip_fences("```DESCRIPTION\nIdea.\n```"), "Idea.");
    }
}
