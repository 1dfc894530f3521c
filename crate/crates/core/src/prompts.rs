//! Prompt templates, their builders, and the inverse parsers used by the
//! scripted backends to read a prompt back into its parts.

pub const DECOMPOSITION: &str = include_str!("../prompts/decomposition.txt");
pub const SEED_SELECTION: &str = include_str!("../prompts/seed_selection.txt");
pub const QUERY_GENERATION: &str = include_str!("../prompts/query_generation.txt");
/// Extension template; not part of the published prompt set.
pub const VERIFICATION_UNIT: &str = include_str!("../prompts/verification_unit.txt");
/// Extension template; not part of the published prompt set.
pub const VERIFICATION_BATCH: &str = include_str!("../prompts/verification_batch.txt");

/// Header separating the query from the context block in a rollout prompt.
pub const CONTEXT_HEADER: &str = "Context:";

const DECOMPOSITION_TAIL: &str = "\n\nOutput each atomic item separated by \"###\"";
const SEED_HEAD: &str = "Task: Select 3-5 guidelines";
const QUERY_HEAD: &str = "Generate a realistic question where";
const VERIFY_UNIT_MARK: &str = "Answer Yes or No: is this guideline necessary";
const VERIFY_BATCH_MARK: &str = "List the ids of the guidelines above";
const SELECTED_MARK: &str = "Selected guidelines:";

/// Substitutes `{name}` placeholders in one left-to-right pass.
///
/// Unknown placeholders are left as-is. Substituted values are not rescanned.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let template = template.strip_suffix('\n').unwrap_or(template);
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let name = &after[..close];
            vars.iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Formats texts as `- item` bullets; continuation lines are indented by two
/// spaces so multi-line items stay attached to their bullet.
pub fn bullet_list<S: AsRef<str>>(items: &[S]) -> String {
    items
        .iter()
        .map(|t| format!("- {}", t.as_ref().replace('\n', "\n  ")))
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_bullets(block: &str) -> Vec<String> {
    let mut items: Vec<String> = Vec::new();
    for line in block.lines() {
        if let Some(item) = line.strip_prefix("- ") {
            items.push(item.to_string());
        } else if let Some(cont) = line.strip_prefix("  ") {
            if let Some(last) = items.last_mut() {
                last.push('\n');
                last.push_str(cont);
            }
        } else if line == "-" {
            items.push(String::new());
        }
    }
    items
}

/// The "examples section" shared by the seed-selection and query-generation
/// prompts. Empty when there are no examples.
pub fn examples_section<S: AsRef<str>>(examples: &[S]) -> String {
    if examples.is_empty() {
        return String::new();
    }
    let body = examples
        .iter()
        .enumerate()
        .map(|(i, e)| format!("Example {}:\n{}", i + 1, e.as_ref().trim()))
        .collect::<Vec<_>>()
        .join("\n\n");
    format!("Example questions:\n{body}\n")
}

pub fn decomposition_prompt(chunk: &str) -> String {
    fill(DECOMPOSITION, &[("chunk", chunk)])
}

pub fn seed_selection_prompt<S: AsRef<str>, E: AsRef<str>>(units: &[S], examples: &[E]) -> String {
    let feedback = bullet_list(units);
    let examples = examples_section(examples);
    fill(
        SEED_SELECTION,
        &[("feedback", &feedback), ("examples section", &examples)],
    )
}

pub fn query_generation_prompt<S: AsRef<str>, E: AsRef<str>>(selected: &[S], examples: &[E]) -> String {
    let feedback = bullet_list(selected);
    let examples = examples_section(examples);
    fill(
        QUERY_GENERATION,
        &[("selected feedback", &feedback), ("examples section", &examples)],
    )
}

pub fn verification_unit_prompt(query: &str, unit: &str) -> String {
    fill(VERIFICATION_UNIT, &[("query", query), ("unit", unit)])
}

pub fn verification_batch_prompt(query: &str, units: &[(usize, &str)]) -> String {
    let listed = units
        .iter()
        .map(|(id, text)| format!("[{id}] {}", text.replace('\n', "\n  ")))
        .collect::<Vec<_>>()
        .join("\n");
    fill(VERIFICATION_BATCH, &[("query", query), ("units", &listed)])
}

/// Teacher input: the query followed by the context block. An empty context
/// yields the bare query.
pub fn rollout_prompt<S: AsRef<str>>(query: &str, context: &[S]) -> String {
    if context.is_empty() {
        return query.to_string();
    }
    format!("{query}\n\n{CONTEXT_HEADER}\n{}", bullet_list(context))
}

/// Which pipeline stage a prompt belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Decomposition,
    SeedSelection,
    QueryGeneration,
    VerifyUnit,
    VerifyBatch,
    Rollout,
}

impl PromptKind {
    pub fn detect(prompt: &str) -> Self {
        if prompt.starts_with("Break down the following") {
            PromptKind::Decomposition
        } else if prompt.starts_with(SEED_HEAD) {
            PromptKind::SeedSelection
        } else if prompt.starts_with(QUERY_HEAD) {
            PromptKind::QueryGeneration
        } else if prompt.starts_with("Question:\n") && prompt.contains(VERIFY_UNIT_MARK) {
            PromptKind::VerifyUnit
        } else if prompt.starts_with("Question:\n") && prompt.contains(VERIFY_BATCH_MARK) {
            PromptKind::VerifyBatch
        } else {
            PromptKind::Rollout
        }
    }
}

pub fn parse_decomposition(prompt: &str) -> Option<&str> {
    let start = prompt.find("Content:\n")? + "Content:\n".len();
    let end = prompt.rfind(DECOMPOSITION_TAIL)?;
    (start <= end).then(|| &prompt[start..end])
}

/// Unit texts listed under "Guidelines:" in a seed-selection prompt.
pub fn parse_seed_selection(prompt: &str) -> Vec<String> {
    let Some(start) = prompt.find("Guidelines:\n") else {
        return Vec::new();
    };
    let body = &prompt[start + "Guidelines:\n".len()..];
    let end = body
        .find("\nExample questions:\n")
        .or_else(|| body.rfind(&format!("\n{SELECTED_MARK}")))
        .unwrap_or(body.len());
    parse_bullets(&body[..end])
}

/// Selected unit texts in a query-generation prompt.
pub fn parse_query_generation(prompt: &str) -> Vec<String> {
    let Some(head_end) = prompt.find(":\n\n") else {
        return Vec::new();
    };
    let body = &prompt[head_end + 3..];
    let end = body.find("\n\nInstructions:\n").unwrap_or(body.len());
    parse_bullets(&body[..end])
}

/// `(query, unit text)` from a per-unit verification prompt.
pub fn parse_verify_unit(prompt: &str) -> Option<(String, String)> {
    let body = prompt.strip_prefix("Question:\n")?;
    let split = body.rfind("\n\nGuideline:\n")?;
    let query = &body[..split];
    let rest = &body[split + "\n\nGuideline:\n".len()..];
    let end = rest.rfind(&format!("\n\n{VERIFY_UNIT_MARK}"))?;
    Some((query.to_string(), rest[..end].to_string()))
}

/// `(query, [(id, unit text)])` from a batched verification prompt.
pub fn parse_verify_batch(prompt: &str) -> Option<(String, Vec<(usize, String)>)> {
    let body = prompt.strip_prefix("Question:\n")?;
    let split = body.rfind("\n\nGuidelines:\n")?;
    let query = &body[..split];
    let rest = &body[split + "\n\nGuidelines:\n".len()..];
    let end = rest.rfind(&format!("\n\n{VERIFY_BATCH_MARK}"))?;
    let mut units: Vec<(usize, String)> = Vec::new();
    for line in rest[..end].lines() {
        if let Some(tail) = line.strip_prefix('[') {
            let close = tail.find("] ")?;
            let id = tail[..close].parse().ok()?;
            units.push((id, tail[close + 2..].to_string()));
        } else if let Some(cont) = line.strip_prefix("  ") {
            let last = units.last_mut()?;
            last.1.push('\n');
            last.1.push_str(cont);
        }
    }
    Some((query.to_string(), units))
}

/// `(query, context unit texts)` from a rollout prompt.
pub fn parse_rollout(prompt: &str) -> (String, Vec<String>) {
    let marker = format!("\n\n{CONTEXT_HEADER}\n");
    match prompt.rfind(&marker) {
        Some(split) => (
            prompt[..split].to_string(),
            parse_bullets(&prompt[split + marker.len()..]),
        ),
        None => (prompt.to_string(), Vec::new()),
    }
}

/// Reads the bullet list a base model produced after "Selected guidelines:".
///
/// The prompt ends with a dangling "-", so the reply usually starts mid-bullet.
/// Parsing stops at the first blank line after at least one item.
pub fn parse_selected_lines(reply: &str) -> Vec<String> {
    let body = match reply.find(SELECTED_MARK) {
        Some(i) => &reply[i + SELECTED_MARK.len()..],
        None => reply,
    };
    let mut out = Vec::new();
    for line in body.lines() {
        let t = line.trim();
        if t.is_empty() {
            if out.is_empty() {
                continue;
            }
            break;
        }
        let t = t.trim_start_matches(['-', '*', '•']).trim();
        if !t.is_empty() {
            out.push(t.to_string());
        }
    }
    out
}
