//! Skip-rule matching for specification filtering.
//!
//! Rules are an editable config: glob patterns over project-relative paths,
//! regexes over enclosing-function names, and an explicit list of CLI-tool
//! source files. Every exclusion reports the rule that matched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("bad glob pattern {pattern:?}: {message}")]
    BadGlob { pattern: String, message: String },
    #[error("bad function regex {pattern:?}: {message}")]
    BadRegex { pattern: String, message: String },
    #[error("cannot read filter rules {path:?}: {message}")]
    Unreadable { path: String, message: String },
}

/// On-disk shape of the filter rules file (TOML).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FilterRulesFile {
    #[serde(default)]
    pub skip_path_globs: Vec<String>,
    #[serde(default)]
    pub skip_function_regexes: Vec<String>,
    #[serde(default)]
    pub cli_tool_files: Vec<String>,
}

/// Compiled skip rules.
pub struct FilterRules {
    path_rules: Vec<(String, regex::Regex)>,
    function_rules: Vec<(String, regex::Regex)>,
    cli_tool_files: Vec<String>,
}

/// Default rules shipped with the crate.
pub const DEFAULT_RULES_TOML: &str = include_str!("../assets/filter_rules.toml");

impl FilterRules {
    pub fn from_file_shape(shape: &FilterRulesFile) -> Result<Self, FilterError> {
        let mut path_rules = Vec::new();
        for pattern in &shape.skip_path_globs {
            let re = glob_to_regex(pattern).map_err(|message| FilterError::BadGlob {
                pattern: pattern.clone(),
                message,
            })?;
            path_rules.push((pattern.clone(), re));
        }
        let mut function_rules = Vec::new();
        for pattern in &shape.skip_function_regexes {
            let re = regex::Regex::new(pattern).map_err(|e| FilterError::BadRegex {
                pattern: pattern.clone(),
                message: e.to_string(),
            })?;
            function_rules.push((pattern.clone(), re));
        }
        Ok(Self {
            path_rules,
            function_rules,
            cli_tool_files: shape.cli_tool_files.clone(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, FilterError> {
        let shape: FilterRulesFile =
            toml::from_str(text).map_err(|e| FilterError::Unreadable {
                path: "<inline>".into(),
                message: e.to_string(),
            })?;
        Self::from_file_shape(&shape)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, FilterError> {
        let text = std::fs::read_to_string(path).map_err(|e| FilterError::Unreadable {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    /// The rules shipped in `assets/filter_rules.toml`.
    pub fn shipped_defaults() -> Self {
        Self::from_toml(DEFAULT_RULES_TOML).expect("shipped rules are valid")
    }

    /// Why a path should be skipped, if any rule matches.
    pub fn match_path(&self, path: &str) -> Option<String> {
        if self.cli_tool_files.iter().any(|f| f == path) {
            return Some("file listed as CLI tool source".to_string());
        }
        let basename = path.rsplit('/').next().unwrap_or(path);
        for (pattern, re) in &self.path_rules {
            let subject = if pattern.contains('/') { path } else { basename };
            if re.is_match(subject) {
                return Some(format!("path matches skip pattern `{pattern}`"));
            }
        }
        None
    }

    /// Why a function name should be skipped, if any rule matches.
    pub fn match_function(&self, name: &str) -> Option<String> {
        for (pattern, re) in &self.function_rules {
            if re.is_match(name) {
                return Some(format!("function matches skip pattern `{pattern}`"));
            }
        }
        None
    }
}

/// Translate a glob into an anchored regex. `**` crosses directory
/// separators, `*` and `?` do not; `**/` also matches the empty prefix.
fn glob_to_regex(glob: &str) -> Result<regex::Regex, String> {
    let mut re = String::from("^");
    let bytes = glob.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'*' => {
                if bytes.get(i + 1) == Some(&b'*') {
                    if i == 0 && bytes.get(i + 2) == Some(&b'/') {
                        re.push_str("(?:.*/)?");
                        i += 3;
                        continue;
                    }
                    if bytes.get(i + 2) == Some(&b'/') {
                        re.push_str("(?:.*/)?");
                        i += 3;
                        continue;
                    }
                    re.push_str(".*");
                    i += 2;
                    continue;
                }
                re.push_str("[^/]*");
            }
            b'?' => re.push_str("[^/]"),
            c => {
                let ch = c as char;
                if "\\.+()[]{}^$|".contains(ch) {
                    re.push('\\');
                }
                re.push(ch);
            }
        }
        i += 1;
    }
    re.push('$');
    regex::Regex::new(&re).map_err(|e| e.to_string())
}
