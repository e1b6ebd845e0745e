//! Line splitting shared by the whitespace-delimited file formats.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unterminated quoted field")]
pub struct UnterminatedQuote;

/// Strips a trailing `#` comment that is not inside a quoted field.
pub fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Splits a line into whitespace-separated fields. A field wrapped in double
/// quotes may contain whitespace; quotes have no escapes.
pub fn split_fields(line: &str) -> Result<Vec<String>, UnterminatedQuote> {
    let mut fields = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        while chars.next_if(|c| c.is_whitespace()).is_some() {}
        let Some(&first) = chars.peek() else {
            return Ok(fields);
        };
        let mut field = String::new();
        if first == '"' {
            chars.next();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some(c) => field.push(c),
                    None => return Err(UnterminatedQuote),
                }
            }
        } else {
            while let Some(c) = chars.next_if(|c| !c.is_whitespace()) {
                field.push(c);
            }
        }
        fields.push(field);
    }
}

/// Iterates over `(line_number, fields)` for non-blank, non-comment lines.
pub fn records(
    text: &str,
) -> impl Iterator<Item = (usize, Result<Vec<String>, UnterminatedQuote>)> + '_ {
    text.lines().enumerate().filter_map(|(i, line)| {
        let body = strip_comment(line);
        if body.trim().is_empty() {
            None
        } else {
            Some((i + 1, split_fields(body)))
        }
    })
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// values are trimmed but otherwise kept verbatim.
pub fn key_values(text: &str) -> Result<Vec<(usize, String, String)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = strip_comment(line).trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses a comma-separated list of double-quoted strings:
/// `"/O=x/CN=A", "/O=x/CN=B C"`.
pub fn quoted_list(value: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut rest = value.trim();
    while !rest.is_empty() {
        let inner = rest
            .strip_prefix('"')
            .ok_or_else(|| format!("expected '\"' at {rest:?}"))?;
        let end = inner.find('"').ok_or_else(|| UnterminatedQuote.to_string())?;
        out.push(inner[..end].to_string());
        rest = inner[end + 1..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
            if rest.is_empty() {
                return Err("trailing comma".into());
            }
        } else if !rest.is_empty() {
            return Err(format!("expected ',' at {rest:?}"));
        }
    }
    Ok(out)
}
