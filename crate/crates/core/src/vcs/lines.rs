//! Line classification into code, comment and whitespace.
//!
//! Heuristic and line-based: a per-extension table of line-comment prefixes
//! and block-comment delimiters. A line that carries any code outside a
//! comment is code. Unknown extensions classify every nonblank line as code.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineKind {
    Code,
    Comment,
    Whitespace,
}

impl LineKind {
    pub fn is_cosmetic(self) -> bool {
        !matches!(self, LineKind::Code)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CommentSyntax {
    pub line: &'static [&'static str],
    pub block: &'static [(&'static str, &'static str)],
}

const C_LIKE: CommentSyntax = CommentSyntax {
    line: &["//"],
    block: &[("/*", "*/")],
};
const HASH: CommentSyntax = CommentSyntax {
    line: &["#"],
    block: &[],
};
const PYTHON: CommentSyntax = CommentSyntax {
    line: &["#"],
    block: &[],
};
const DASH: CommentSyntax = CommentSyntax {
    line: &["--"],
    block: &[],
};
const SQL: CommentSyntax = CommentSyntax {
    line: &["--"],
    block: &[("/*", "*/")],
};
const MARKUP: CommentSyntax = CommentSyntax {
    line: &[],
    block: &[("<!--", "-->")],
};
const INI: CommentSyntax = CommentSyntax {
    line: &[";", "#"],
    block: &[],
};
const TEX: CommentSyntax = CommentSyntax {
    line: &["%"],
    block: &[],
};
const HASKELL: CommentSyntax = CommentSyntax {
    line: &["--"],
    block: &[("{-", "-}")],
};

/// Comment syntax for a path, keyed by extension (or a few well-known file names).
pub fn syntax_for_path(path: &str) -> Option<CommentSyntax> {
    let file = path.rsplit('/').next().unwrap_or(path);
    match file {
        "Makefile" | "Dockerfile" | "CMakeLists.txt" | "Gemfile" | "Rakefile" => return Some(HASH),
        _ => {}
    }
    let ext = file.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase())?;
    let syntax = match ext.as_str() {
        "c" | "h" | "cc" | "cpp" | "cxx" | "hpp" | "hh" | "java" | "js" | "jsx" | "ts" | "tsx"
        | "go" | "rs" | "cs" | "swift" | "kt" | "kts" | "scala" | "php" | "m" | "mm" | "dart"
        | "groovy" | "proto" | "css" | "scss" | "less" => C_LIKE,
        "py" | "pyx" | "pyi" => PYTHON,
        "sh" | "bash" | "zsh" | "rb" | "pl" | "pm" | "r" | "yaml" | "yml" | "toml" | "cfg"
        | "conf" | "cmake" | "mk" | "tf" | "ps1" | "jl" | "nix" | "exs" | "ex" => HASH,
        "ini" | "properties" => INI,
        "sql" => SQL,
        "lua" | "ada" | "adb" | "ads" | "elm" => DASH,
        "hs" | "lhs" => HASKELL,
        "html" | "htm" | "xml" | "xhtml" | "svg" | "vue" | "md" | "rst" => MARKUP,
        "tex" | "sty" | "erl" | "hrl" => TEX,
        _ => return None,
    };
    Some(syntax)
}

/// Classifies every line of `text` (as split by [`split_lines`]) for `path`.
pub fn classify_file(path: &str, lines: &[&str]) -> Vec<LineKind> {
    match syntax_for_path(path) {
        Some(syntax) => classify_with(&syntax, lines),
        None => lines
            .iter()
            .map(|l| {
                if l.trim().is_empty() {
                    LineKind::Whitespace
                } else {
                    LineKind::Code
                }
            })
            .collect(),
    }
}

pub fn classify_with(syntax: &CommentSyntax, lines: &[&str]) -> Vec<LineKind> {
    let mut out = Vec::with_capacity(lines.len());
    // closing delimiter of the block comment we are inside, if any
    let mut open_block: Option<&'static str> = None;
    for line in lines {
        if line.trim().is_empty() {
            out.push(if open_block.is_some() {
                LineKind::Comment
            } else {
                LineKind::Whitespace
            });
            continue;
        }
        let mut rest: &str = line;
        let mut has_code = false;
        let mut has_comment = false;
        loop {
            if let Some(close) = open_block {
                has_comment = true;
                match rest.find(close) {
                    Some(pos) => {
                        rest = &rest[pos + close.len()..];
                        open_block = None;
                    }
                    None => break,
                }
                continue;
            }
            let trimmed = rest.trim_start();
            if trimmed.is_empty() {
                break;
            }
            // earliest comment opener in the remainder
            let mut earliest: Option<(usize, Option<&'static str>, usize)> = None;
            for prefix in syntax.line {
                if let Some(pos) = find_outside_strings(trimmed, prefix) {
                    if earliest.is_none_or(|(p, _, _)| pos < p) {
                        earliest = Some((pos, None, prefix.len()));
                    }
                }
            }
            for (open, close) in syntax.block {
                if let Some(pos) = find_outside_strings(trimmed, open) {
                    if earliest.is_none_or(|(p, _, _)| pos < p) {
                        earliest = Some((pos, Some(*close), open.len()));
                    }
                }
            }
            match earliest {
                None => {
                    has_code = true;
                    break;
                }
                Some((pos, close, open_len)) => {
                    if !trimmed[..pos].trim().is_empty() {
                        has_code = true;
                    }
                    has_comment = true;
                    match close {
                        None => break,
                        Some(close) => {
                            rest = &trimmed[pos + open_len..];
                            open_block = Some(close);
                        }
                    }
                }
            }
        }
        out.push(if has_code {
            LineKind::Code
        } else if has_comment {
            LineKind::Comment
        } else {
            LineKind::Whitespace
        });
    }
    out
}

/// Position of `needle` in `s` ignoring occurrences inside simple '…' or "…" literals.
fn find_outside_strings(s: &str, needle: &str) -> Option<usize> {
    let bytes = s.as_bytes();
    let mut quote: Option<u8> = None;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match quote {
            Some(q) => {
                if b == b'\\' {
                    i += 2;
                    continue;
                }
                if b == q {
                    quote = None;
                }
            }
            None => {
                if s[i..].starts_with(needle) {
                    return Some(i);
                }
                if b == b'"' || b == b'\'' {
                    quote = Some(b);
                }
            }
        }
        i += 1;
    }
    None
}

/// Splits blob content into lines the way git numbers them.
pub fn split_lines(text: &str) -> Vec<&str> {
    if text.is_empty() {
        return Vec::new();
    }
    let body = text.strip_suffix('\n').unwrap_or(text);
    body.split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect()
}
