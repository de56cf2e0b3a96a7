use crate::codecs::{ParseError, SourceSpan};
use crate::error::{NidmError, Result};
use crate::model::{Attribute, AttributeValue, Document, QualifiedName, Timestamp};

use super::Builder;

/// Reads a synthetic SPM batch log (see docs/spm-log-format.md).
pub fn extract_spm_batch(log: &str) -> Result<Document> {
    let mut b = Builder::new();
    let mut open_line: Option<usize> = None;

    for (i, raw) in log.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (directive, rest) = match line.split_once(char::is_whitespace) {
            Some((d, r)) => (d, r.trim()),
            None => (line, ""),
        };
        let err = |expected: &str, found: &str| -> NidmError {
            ParseError::new(SourceSpan::new(line_no, 1, raw.len()), expected, format!("`{found}`")).into()
        };
        let in_step = |what: &str| -> Result<()> {
            if open_line.is_none() {
                Err(err(&format!("BEGIN before {what}"), line))
            } else {
                Ok(())
            }
        };
        match directive {
            "COUNTERS" => {
                for pair in rest.split_whitespace() {
                    let parsed = pair
                        .split_once('=')
                        .and_then(|(k, v)| Some((k.chars().next()?, k.len() == 1, v.parse::<u64>().ok()?)));
                    match parsed {
                        Some((c, true, n)) if "aeug".contains(c) => b.set_counter(c, n),
                        _ => return Err(err("<a|e|u|g>=<number>", pair)),
                    }
                }
            }
            "BEGIN" => {
                if open_line.is_some() {
                    return Err(err("END before the next BEGIN", line));
                }
                let Some((module, time)) = rest.split_once(char::is_whitespace) else {
                    return Err(err("BEGIN <module-path> <timestamp>", line));
                };
                let start = Timestamp::parse(time.trim()).ok_or_else(|| err("a timestamp", time.trim()))?;
                let label = Attribute::new(QualifiedName::prov("label"), AttributeValue::Text(module.to_string()));
                b.open_activity(Some(start), vec![label]);
                open_line = Some(line_no);
            }
            "END" => {
                in_step("END")?;
                let end = Timestamp::parse(rest).ok_or_else(|| err("a timestamp", rest))?;
                if b.open_start().is_some_and(|s| end < s) {
                    return Err(err("an END time not before BEGIN", rest));
                }
                b.close_activity(Some(end));
                open_line = None;
            }
            "PARAM" => {
                in_step("PARAM")?;
                let (name, value) = match rest.split_once(char::is_whitespace) {
                    Some((n, v)) => (n, v.trim()),
                    None => (rest, ""),
                };
                if name.is_empty() {
                    return Err(err("PARAM <name> <value>", line));
                }
                b.parameter(name, value, Vec::new());
            }
            "IN" | "OUT" => {
                in_step(directive)?;
                if rest.is_empty() {
                    return Err(err("a path", line));
                }
                if directive == "IN" {
                    b.input(rest, Vec::new());
                } else {
                    b.output(rest, Vec::new());
                }
            }
            other => return Err(err("BEGIN, END, PARAM, IN, OUT or COUNTERS", other)),
        }
    }
    if let Some(line) = open_line {
        return Err(NidmError::UnbalancedStep(line));
    }
    Ok(b.finish())
}
