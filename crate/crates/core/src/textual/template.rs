//! Plain-text prompt templates with `{name}` placeholders.
//!
//! A catalog file is split into sections by lines of the form `[[section]]`;
//! a section's text is every line up to the next marker, joined by `\n`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    text: String,
}

impl Template {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Substitutes every `{name}`; a placeholder without a value is an
    /// error. Braces that do not enclose an identifier are copied verbatim.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String> {
        let mut out = String::with_capacity(self.text.len() + 256);
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let ident_len = after
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .unwrap_or(after.len());
            if ident_len > 0 && after[ident_len..].starts_with('}') {
                let name = &after[..ident_len];
                let value = vars
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| Error::Render(format!("no value for placeholder {{{name}}}")))?;
                out.push_str(value);
                rest = &after[ident_len + 1..];
            } else {
                out.push('{');
                rest = after;
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TemplateFile {
    sections: BTreeMap<String, Template>,
}

impl TemplateFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections = BTreeMap::new();
        let mut current: Option<(String, Vec<&str>)> = None;
        for line in text.lines() {
            let marker = line
                .strip_prefix("[[")
                .and_then(|l| l.strip_suffix("]]"))
                .filter(|name| !name.is_empty() && !name.contains(' '));
            if let Some(name) = marker {
                if let Some((prev, body)) = current.take() {
                    sections.insert(prev, Template::new(body.join("\n")));
                }
                current = Some((name.to_string(), Vec::new()));
            } else if let Some((_, body)) = current.as_mut() {
                body.push(line);
            } else if !line.trim().is_empty() {
                return Err(Error::Render(format!("text before first section marker: {line:?}")));
            }
        }
        if let Some((prev, body)) = current {
            sections.insert(prev, Template::new(body.join("\n")));
        }
        Ok(Self { sections })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn section(&self, name: &str) -> Result<&Template> {
        self.sections
            .get(name)
            .ok_or_else(|| Error::Render(format!("template section [[{name}]] missing")))
    }
}

pub const MAB_VIDEOS: &str = include_str!("../../templates/mab_videos.txt");
pub const MAB_CLOTHES: &str = include_str!("../../templates/mab_clothes.txt");
pub const CB_MOVIES: &str = include_str!("../../templates/cb_movies.txt");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_and_keeps_literal_braces() {
        let t = Template::new("{a} and {b}; {\"x\": 1} {}");
        assert_eq!(t.render(&[("a", "1"), ("b", "2")]).unwrap(), "1 and 2; {\"x\": 1} {}");
        assert!(t.render(&[("a", "1")]).is_err());
    }

    #[test]
    fn sections_split_on_markers() {
        let f = TemplateFile::parse("[[one]]\nline 1\nline 2 \n[[two]]\n\n").unwrap();
        assert_eq!(f.section("one").unwrap().text(), "line 1\nline 2 ");
        assert_eq!(f.section("two").unwrap().text(), "");
        assert!(f.section("three").is_err());
    }

    #[test]
    fn builtin_catalogs_parse() {
        for text in [MAB_VIDEOS, MAB_CLOTHES] {
            let f = TemplateFile::parse(text).unwrap();
            for s in ["raw", "question", "summary", "summary_question", "noun", "list_separator"] {
                f.section(s).unwrap();
            }
        }
        let cb = TemplateFile::parse(CB_MOVIES).unwrap();
        for s in ["raw", "history_context", "current_context"] {
            cb.section(s).unwrap();
        }
    }
}
