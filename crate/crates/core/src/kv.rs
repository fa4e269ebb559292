//! Flat `key = value` configuration files; `#` starts a comment.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// One `key = value` assignment with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub line: usize,
    pub key: String,
    pub value: String,
}

impl Pair {
    pub fn error(&self, message: impl Into<String>) -> ConfigError {
        ConfigError::Line {
            line: self.line,
            message: message.into(),
        }
    }

    pub fn parse<T: std::str::FromStr>(&self) -> Result<T, ConfigError> {
        self.value
            .parse()
            .map_err(|_| self.error(format!("{}: cannot parse '{}'", self.key, self.value)))
    }
}

pub fn parse_pairs(text: &str) -> Result<Vec<Pair>, ConfigError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Line {
            line: i + 1,
            message: format!("expected key = value, found '{line}'"),
        })?;
        pairs.push(Pair {
            line: i + 1,
            key: k.trim().to_string(),
            value: v.trim().to_string(),
        });
    }
    Ok(pairs)
}

pub fn read_pairs(path: &Path) -> Result<Vec<Pair>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_pairs(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines() {
        let p = parse_pairs("# header\n\na = 1 # trailing\n b=two words \n").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!((p[0].line, p[0].key.as_str(), p[0].value.as_str()), (3, "a", "1"));
        assert_eq!(p[1].value, "two words");
        assert!(matches!(parse_pairs("x"), Err(ConfigError::Line { line: 1, .. })));
    }
}
