//! Prompt templates shipped as data files.
//!
//! A template file starts with a `name: <template>` front-matter line, a
//! `---` separator, then the system text. An optional one-shot example
//! follows behind `===ONE-SHOT INPUT===` / `===ONE-SHOT OUTPUT===` markers.
//! The built-in files are embedded at compile time; edited copies can be
//! loaded from disk to re-run samples under a refined prompt.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::corpus::Platform;

use super::OrchestratorError;

pub const REDDIT_P1_SOURCE: &str = include_str!("../../prompts/reddit_p1.txt");
pub const TWITTER_P2_SOURCE: &str = include_str!("../../prompts/twitter_p2.txt");
pub const JUDGE_SOURCE: &str = include_str!("../../prompts/judge.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemplateName {
    RedditP1,
    TwitterP2,
    Judge,
}

impl TemplateName {
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::RedditP1 => "reddit_p1",
            TemplateName::TwitterP2 => "twitter_p2",
            TemplateName::Judge => "judge",
        }
    }

    /// The platform this template translates, if it is a translation prompt.
    pub fn platform(self) -> Option<Platform> {
        match self {
            TemplateName::RedditP1 => Some(Platform::Reddit),
            TemplateName::TwitterP2 => Some(Platform::Twitter),
            TemplateName::Judge => None,
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reddit_p1" => Ok(TemplateName::RedditP1),
            "twitter_p2" => Ok(TemplateName::TwitterP2),
            "judge" => Ok(TemplateName::Judge),
            other => Err(format!("unknown template `{other}`")),
        }
    }
}

/// A parsed prompt template: system text plus an optional one-shot
/// (input, output) pair sent as a user/assistant exchange.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub system_text: String,
    pub one_shot: Option<(String, String)>,
}

const INPUT_MARKER: &str = "\n===ONE-SHOT INPUT===\n";
const OUTPUT_MARKER: &str = "\n===ONE-SHOT OUTPUT===\n";

impl PromptTemplate {
    pub fn builtin(name: TemplateName) -> PromptTemplate {
        let source = match name {
            TemplateName::RedditP1 => REDDIT_P1_SOURCE,
            TemplateName::TwitterP2 => TWITTER_P2_SOURCE,
            TemplateName::Judge => JUDGE_SOURCE,
        };
        Self::parse(source).expect("built-in templates parse")
    }

    pub fn from_file(path: &Path) -> Result<PromptTemplate, OrchestratorError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(source: &str) -> Result<PromptTemplate, OrchestratorError> {
        let template_err = |reason: String| OrchestratorError::Template { reason };

        let mut lines = source.splitn(3, '\n');
        let name_line = lines.next().unwrap_or("");
        let name = name_line
            .strip_prefix("name: ")
            .ok_or_else(|| template_err("first line must be `name: <template>`".into()))?
            .trim()
            .parse::<TemplateName>()
            .map_err(template_err)?;
        let sep = lines.next().unwrap_or("");
        if sep.trim_end() != "---" {
            return Err(template_err("second line must be `---`".into()));
        }
        let body = lines.next().unwrap_or("");

        let (system_text, one_shot) = match body.split_once(INPUT_MARKER) {
            None => (trim_final_newline(body).to_string(), None),
            Some((system, rest)) => {
                let (input, output) = rest.split_once(OUTPUT_MARKER).ok_or_else(|| {
                    template_err("one-shot input without a one-shot output".into())
                })?;
                (
                    system.to_string(),
                    Some((input.to_string(), trim_final_newline(output).to_string())),
                )
            }
        };
        if system_text.trim().is_empty() {
            return Err(template_err("system text is empty".into()));
        }
        Ok(PromptTemplate { name, system_text, one_shot })
    }
}

fn trim_final_newline(s: &str) -> &str {
    s.strip_suffix('\n').unwrap_or(s)
}
