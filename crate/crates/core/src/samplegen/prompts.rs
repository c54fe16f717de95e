use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use regex::Regex;
use thiserror::Error;

use super::Task;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt pool for {0} is empty")]
    EmptyPool(Task),
    #[error("template for {task} uses undeclared placeholder {{{name}}}")]
    UndeclaredPlaceholder { task: Task, name: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn placeholder_re() -> Regex {
    Regex::new(r"\{([a-z_]+)\}").expect("static regex")
}

/// Placeholders a task's templates may use.
pub fn declared_placeholders(task: Task) -> &'static [&'static str] {
    match task {
        Task::Text2Bbox | Task::Bbox2Text | Task::Function2Bbox => &[],
        Task::Bbox2Dom => &["region"],
        Task::Navigation => &["task", "history", "action_space"],
    }
}

/// Instruction templates per task; one is drawn at random for each sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPool {
    pools: BTreeMap<Task, Vec<String>>,
}

impl PromptPool {
    /// Pools shipped with the crate.
    pub fn builtin() -> Self {
        let files = [
            (Task::Text2Bbox, include_str!("../../assets/prompts/text2bbox.txt")),
            (Task::Bbox2Text, include_str!("../../assets/prompts/bbox2text.txt")),
            (Task::Bbox2Dom, include_str!("../../assets/prompts/bbox2dom.txt")),
            (
                Task::Function2Bbox,
                include_str!("../../assets/prompts/function2bbox.txt"),
            ),
            (Task::Navigation, include_str!("../../assets/prompts/navigation.txt")),
        ];
        let mut pools = BTreeMap::new();
        for (task, text) in files {
            pools.insert(task, split_paragraphs(text));
        }
        let pool = Self { pools };
        pool.check().expect("builtin prompt pools are valid");
        pool
    }

    /// Builds a pool from explicit templates, validating placeholders.
    pub fn from_templates(pools: BTreeMap<Task, Vec<String>>) -> Result<Self, PromptError> {
        let pool = Self { pools };
        pool.check()?;
        Ok(pool)
    }

    /// Loads `<task>.txt` files from `dir`; tasks without a file keep the
    /// builtin templates.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut pools = Self::builtin().pools;
        for task in Task::ALL {
            let path = dir.join(format!("{}.txt", task.as_str()));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })?;
            pools.insert(task, split_paragraphs(&text));
        }
        Self::from_templates(pools)
    }

    fn check(&self) -> Result<(), PromptError> {
        let re = placeholder_re();
        for task in Task::ALL {
            let templates = self
                .pools
                .get(&task)
                .filter(|t| !t.is_empty())
                .ok_or(PromptError::EmptyPool(task))?;
            let allowed = declared_placeholders(task);
            for t in templates {
                for cap in re.captures_iter(t) {
                    let name = &cap[1];
                    if !allowed.contains(&name) {
                        return Err(PromptError::UndeclaredPlaceholder {
                            task,
                            name: name.to_string(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn templates(&self, task: Task) -> &[String] {
        self.pools.get(&task).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn choose<R: Rng + ?Sized>(&self, task: Task, rng: &mut R) -> &str {
        let t = self.templates(task);
        &t[rng.random_range(0..t.len())]
    }

    /// True when `rendered` is one of the task's templates with its
    /// placeholders filled in.
    pub fn matches(&self, task: Task, rendered: &str) -> bool {
        self.templates(task)
            .iter()
            .any(|t| template_regex(t).is_match(rendered))
    }
}

fn split_paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line.trim_end());
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n"));
    }
    out
}

/// Anchored regex matching `template` with any text in its placeholders.
pub fn template_regex(template: &str) -> Regex {
    let re = placeholder_re();
    let mut pattern = String::from("^");
    let mut last = 0;
    for m in re.find_iter(template) {
        pattern.push_str(&regex::escape(&template[last..m.start()]));
        pattern.push_str("(?s:.*)");
        last = m.end();
    }
    pattern.push_str(&regex::escape(&template[last..]));
    pattern.push('$');
    Regex::new(&pattern).expect("escaped template is a valid regex")
}

/// Substitutes `{name}` placeholders in a single pass, so substituted values
/// are never re-scanned.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    placeholder_re()
        .replace_all(template, |cap: &regex::Captures<'_>| {
            let name = &cap[1];
            values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| v.to_string())
                .unwrap_or_else(|| cap[0].to_string())
        })
        .into_owned()
}
