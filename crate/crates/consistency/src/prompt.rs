//! Prompt templates and rendering.
//!
//! A template file is a sequence of chat messages. Each message starts with
//! a delimiter line of the form `---role: system---` or `---role: user---`;
//! the lines until the next delimiter are the message body. Bodies may
//! contain `{{placeholder}}` markers that rendering replaces verbatim with
//! bound values. Rendering makes a single pass, so placeholder-like text
//! inside a bound value is never expanded again.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Message, Question, Role};

/// Names of the built-in templates, which are also the file stems under the
/// template override directory.
pub const TEMPLATE_NAMES: [&str; 7] = [
    "solve_cot",
    "extract_answer",
    "majority_judge",
    "agreement_judge",
    "truth_judge",
    "reflect_critique",
    "reflect_revise",
];

const BUILTIN_SOURCES: [(&str, &str); 7] = [
    ("solve_cot", include_str!("../templates/solve_cot.txt")),
    (
        "extract_answer",
        include_str!("../templates/extract_answer.txt"),
    ),
    (
        "majority_judge",
        include_str!("../templates/majority_judge.txt"),
    ),
    (
        "agreement_judge",
        include_str!("../templates/agreement_judge.txt"),
    ),
    ("truth_judge", include_str!("../templates/truth_judge.txt")),
    (
        "reflect_critique",
        include_str!("../templates/reflect_critique.txt"),
    ),
    (
        "reflect_revise",
        include_str!("../templates/reflect_revise.txt"),
    ),
];

/// A parsed template: an ordered list of (role, body-with-placeholders).
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    messages: Vec<(Role, String)>,
}

impl Template {
    /// Parses template text into role-tagged message bodies.
    pub fn parse(name: &str, text: &str) -> Result<Template> {
        let mut messages: Vec<(Role, String)> = Vec::new();
        let mut current: Option<(Role, Vec<&str>)> = None;

        for line in text.lines() {
            if let Some(role) = parse_role_delimiter(line) {
                let role = role.map_err(|bad| {
                    Error::Config(format!("template {name}: unknown role {bad:?}"))
                })?;
                if let Some((prev_role, body)) = current.take() {
                    messages.push((prev_role, finish_body(&body)));
                }
                current = Some((role, Vec::new()));
            } else {
                match current.as_mut() {
                    Some((_, body)) => body.push(line),
                    None => {
                        if !line.trim().is_empty() {
                            return Err(Error::Config(format!(
                                "template {name}: content before the first role delimiter"
                            )));
                        }
                    }
                }
            }
        }
        if let Some((role, body)) = current.take() {
            messages.push((role, finish_body(&body)));
        }
        if messages.is_empty() {
            return Err(Error::Config(format!("template {name}: no messages found")));
        }
        Ok(Template { messages })
    }

    /// Substitutes bindings into every message body.
    ///
    /// Placeholder names must consist of ASCII lowercase letters and
    /// underscores. A placeholder without a binding is an error; bindings
    /// without placeholders are allowed.
    pub fn render(&self, name: &str, bindings: &BTreeMap<&str, &str>) -> Result<Vec<Message>> {
        self.messages
            .iter()
            .map(|(role, body)| {
                Ok(Message {
                    role: *role,
                    content: substitute(name, body, bindings)?,
                })
            })
            .collect()
    }
}

/// Returns Some(Ok(role)) for a valid delimiter line, Some(Err(text)) for a
/// delimiter with an unknown role, and None for an ordinary line.
fn parse_role_delimiter(line: &str) -> Option<std::result::Result<Role, String>> {
    let trimmed = line.trim();
    let inner = trimmed.strip_prefix("---role:")?.strip_suffix("---")?;
    Some(match inner.trim() {
        "system" => Ok(Role::System),
        "user" => Ok(Role::User),
        other => Err(other.to_string()),
    })
}

fn finish_body(lines: &[&str]) -> String {
    let mut body = lines.join("\n");
    while body.ends_with('\n') {
        body.pop();
    }
    body
}

fn substitute(name: &str, body: &str, bindings: &BTreeMap<&str, &str>) -> Result<String> {
    let mut out = String::with_capacity(body.len());
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end)
                if !after[..end].is_empty()
                    && after[..end]
                        .bytes()
                        .all(|b| b.is_ascii_lowercase() || b == b'_') =>
            {
                let key = &after[..end];
                match bindings.get(key) {
                    Some(value) => out.push_str(value),
                    None => {
                        return Err(Error::Config(format!(
                            "template {name}: no binding for placeholder {{{{{key}}}}}"
                        )))
                    }
                }
                rest = &after[end + 2..];
            }
            _ => {
                // Not a well-formed placeholder; emit the braces literally.
                out.push_str("{{");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// The full set of templates a run renders from: the built-ins, with any
/// per-name overrides loaded from a directory.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, Template>,
}

impl TemplateSet {
    /// The compiled-in default templates.
    pub fn builtin() -> TemplateSet {
        let mut templates = BTreeMap::new();
        for (name, source) in BUILTIN_SOURCES {
            let template = Template::parse(name, source)
                .unwrap_or_else(|e| panic!("built-in template {name} is invalid: {e}"));
            templates.insert(name.to_string(), template);
        }
        TemplateSet { templates }
    }

    /// Built-ins plus overrides: for each known template name, a file
    /// `<name>.txt` in `dir` replaces the built-in.
    pub fn with_overrides(dir: &Path) -> Result<TemplateSet> {
        let mut set = TemplateSet::builtin();
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "template directory {} does not exist",
                dir.display()
            )));
        }
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            if path.is_file() {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))?;
                set.templates
                    .insert(name.to_string(), Template::parse(name, &text)?);
            }
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Result<&Template> {
        self.templates
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown template {name:?}")))
    }

    /// Renders a named template against a question plus stage-specific
    /// bindings. The question contributes `input` and `instruction`
    /// (empty string when absent); entries in `extra` add to or override
    /// those.
    pub fn render(
        &self,
        name: &str,
        question: &Question,
        extra: &BTreeMap<&str, &str>,
    ) -> Result<Vec<Message>> {
        let template = self.get(name)?;
        let mut bindings: BTreeMap<&str, &str> = BTreeMap::new();
        bindings.insert("input", question.input.as_str());
        bindings.insert("instruction", question.instruction.as_deref().unwrap_or(""));
        for (k, v) in extra {
            bindings.insert(k, v);
        }
        template.render(name, &bindings)
    }
}

/// Renders one prompt from a template set. Free-function form of
/// [`TemplateSet::render`], for callers holding the set behind a reference.
pub fn render_prompt(
    templates: &TemplateSet,
    name: &str,
    question: &Question,
    extra: &BTreeMap<&str, &str>,
) -> Result<Vec<Message>> {
    templates.render(name, question, extra)
}
