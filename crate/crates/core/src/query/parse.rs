use crate::codecs::{ParseError, SourceSpan};
use crate::error::Result;
use crate::model::{parse_decimal, AttributeValue, Category, QualifiedName, RelationKind};

use super::{AttrFilter, Comparator, Direction, PathConstraint, PathStep, Query, RecordFilter};

/// Parses the text form of a query. Syntax errors carry the column of the
/// offending token.
pub fn parse_query(text: &str) -> Result<Query> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
    };
    let q = p.query()?;
    p.skip_ws();
    if p.pos < p.chars.len() {
        return Err(p.error("end of query"));
    }
    Ok(q)
}

/// Parses a single literal as written on the right of a comparator:
/// a number, a qualified name, `"text"` or `<uri>`.
pub fn parse_literal(text: &str) -> Result<AttributeValue> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
    };
    let v = p.value()?;
    p.skip_ws();
    if p.pos < p.chars.len() {
        return Err(p.error("end of value"));
    }
    Ok(v)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

const COMPARATORS: [(&str, Comparator); 10] = [
    ("!=", Comparator::Ne),
    ("≠", Comparator::Ne),
    ("<=", Comparator::Le),
    ("≤", Comparator::Le),
    (">=", Comparator::Ge),
    ("≥", Comparator::Ge),
    ("=", Comparator::Eq),
    ("<", Comparator::Lt),
    (">", Comparator::Gt),
    ("contains", Comparator::Contains),
];

impl Parser {
    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn rest_starts_with(&self, s: &str) -> bool {
        let mut i = self.pos;
        for c in s.chars() {
            if self.chars.get(i) != Some(&c) {
                return false;
            }
            i += 1;
        }
        true
    }

    fn is_word_char(&self, i: usize) -> bool {
        match self.chars.get(i) {
            Some(c) if c.is_alphanumeric() || matches!(c, '_' | ':' | '.') => true,
            Some('-') => self.chars.get(i + 1) != Some(&'>'),
            _ => false,
        }
    }

    fn found(&self) -> String {
        match self.chars.get(self.pos) {
            None => "end of query".into(),
            Some(_) if self.is_word_char(self.pos) => {
                let end = (self.pos..).find(|&i| !self.is_word_char(i)).unwrap();
                format!("`{}`", self.chars[self.pos..end].iter().collect::<String>())
            }
            Some(c) => format!("`{c}`"),
        }
    }

    fn error(&self, expected: &str) -> crate::error::NidmError {
        let len = if self.pos < self.chars.len() { 1 } else { 0 };
        ParseError::new(SourceSpan::new(1, self.pos + 1, len), expected, self.found()).into()
    }

    /// Consumes `s` (after whitespace) when present.
    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.rest_starts_with(s) {
            self.pos += s.chars().count();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<()> {
        if self.eat(s) {
            Ok(())
        } else {
            Err(self.error(&format!("`{s}`")))
        }
    }

    fn peek_word(&mut self) -> Option<String> {
        self.skip_ws();
        let end = (self.pos..).find(|&i| !self.is_word_char(i)).unwrap();
        (end > self.pos).then(|| self.chars[self.pos..end].iter().collect())
    }

    fn word(&mut self, expected: &str) -> Result<String> {
        match self.peek_word() {
            Some(w) => {
                self.pos += w.chars().count();
                Ok(w)
            }
            None => Err(self.error(expected)),
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_word().as_deref() == Some(kw) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn qname(&mut self) -> Result<QualifiedName> {
        let start = self.pos_after_ws();
        let w = self.word("a qualified name")?;
        w.parse().map_err(|_| {
            self.pos = start;
            self.error("a qualified name")
        })
    }

    fn pos_after_ws(&mut self) -> usize {
        self.skip_ws();
        self.pos
    }

    fn category(&mut self, allow_any: bool) -> Result<Option<Category>> {
        let start = self.pos_after_ws();
        let expected = if allow_any {
            "entity, activity, agent or any"
        } else {
            "entity, activity or agent"
        };
        let w = self.word(expected)?;
        match Category::from_name(&w) {
            Some(c) => Ok(Some(c)),
            None if allow_any && w == "any" => Ok(None),
            None => {
                self.pos = start;
                Err(self.error(expected))
            }
        }
    }

    fn query(&mut self) -> Result<Query> {
        if !self.eat_keyword("select") {
            return Err(self.error("`select`"));
        }
        let select = self.category(false)?.expect("any is not allowed here");
        let mut q = Query::select(select);
        if self.peek_word().is_none() && self.pos_after_ws() == self.chars.len() {
            return Ok(q);
        }
        if !self.eat_keyword("where") {
            return Err(self.error("`where` or end of query"));
        }
        loop {
            let start = self.pos_after_ws();
            match self.peek_word().as_deref() {
                Some("type") => q.types.push(self.type_condition()?),
                Some("attr") => q.attrs.push(self.attr_condition()?),
                Some("path") => {
                    self.pos += 4;
                    q.paths.push(self.path()?);
                }
                _ => {
                    self.pos = start;
                    return Err(self.error("type=, attr[...] or path(...)"));
                }
            }
            if !self.eat_keyword("and") {
                return Ok(q);
            }
        }
    }

    fn type_condition(&mut self) -> Result<QualifiedName> {
        self.eat_keyword("type");
        self.expect("=")?;
        self.qname()
    }

    fn attr_condition(&mut self) -> Result<AttrFilter> {
        self.eat_keyword("attr");
        self.expect("[")?;
        let key = self.qname()?;
        self.expect("]")?;
        self.skip_ws();
        let cmp = COMPARATORS.iter().find(|(sym, _)| {
            if *sym == "contains" {
                self.peek_word_at_pos().as_deref() == Some("contains")
            } else {
                self.rest_starts_with(sym)
            }
        });
        let Some(&(sym, cmp)) = cmp else {
            return Ok(AttrFilter::exists(key));
        };
        self.pos += sym.chars().count();
        let value = self.value()?;
        Ok(AttrFilter::new(key, cmp, value))
    }

    fn peek_word_at_pos(&self) -> Option<String> {
        let end = (self.pos..).find(|&i| !self.is_word_char(i)).unwrap();
        (end > self.pos).then(|| self.chars[self.pos..end].iter().collect())
    }

    fn value(&mut self) -> Result<AttributeValue> {
        self.skip_ws();
        match self.chars.get(self.pos) {
            Some('"') => {
                let start = self.pos;
                self.pos += 1;
                let mut s = String::new();
                loop {
                    match self.chars.get(self.pos) {
                        None => {
                            self.pos = start;
                            return Err(self.error("closing `\"`"));
                        }
                        Some('"') => break,
                        Some('\\') => {
                            self.pos += 1;
                            match self.chars.get(self.pos) {
                                Some('n') => s.push('\n'),
                                Some(&c) => s.push(c),
                                None => continue,
                            }
                        }
                        Some(&c) => s.push(c),
                    }
                    self.pos += 1;
                }
                self.pos += 1;
                Ok(AttributeValue::Text(s))
            }
            Some('<') => {
                let start = self.pos;
                let end = (self.pos..self.chars.len()).find(|&i| self.chars[i] == '>');
                match end {
                    Some(end) if end > start + 1 => {
                        let uri: String = self.chars[start + 1..end].iter().collect();
                        self.pos = end + 1;
                        Ok(AttributeValue::Uri(uri))
                    }
                    _ => Err(self.error("`<uri>`")),
                }
            }
            _ => {
                let start = self.pos;
                let w = self.word("a value")?;
                if let Some(d) = parse_decimal(&w) {
                    return Ok(AttributeValue::Number(d));
                }
                match w.parse::<QualifiedName>() {
                    Ok(q) => Ok(AttributeValue::Term(q)),
                    Err(_) => {
                        self.pos = start;
                        Err(self.error("a number, qualified name, \"text\" or <uri>"))
                    }
                }
            }
        }
    }

    fn filter_conditions(&mut self, filter: &mut RecordFilter) -> Result<()> {
        self.expect("[")?;
        loop {
            let start = self.pos_after_ws();
            match self.peek_word().as_deref() {
                Some("type") => filter.types.push(self.type_condition()?),
                Some("attr") => filter.attrs.push(self.attr_condition()?),
                _ => {
                    self.pos = start;
                    return Err(self.error("type= or attr[...]"));
                }
            }
            if !self.eat_keyword("and") {
                break;
            }
        }
        self.expect("]")
    }

    fn path(&mut self) -> Result<PathConstraint> {
        self.expect("(")?;
        let mut steps = Vec::new();
        let mut target = RecordFilter::default();
        loop {
            let start = self.pos_after_ws();
            let w = self.word("a relation step or target")?;
            if let Some((kind, dir)) = w.split_once('.') {
                let kind = RelationKind::from_name(kind);
                let dir = match dir {
                    "forward" => Some(Direction::Forward),
                    "backward" => Some(Direction::Backward),
                    _ => None,
                };
                let (Some(kind), Some(direction)) = (kind, dir) else {
                    self.pos = start;
                    return Err(self.error("<relation>.forward or <relation>.backward"));
                };
                let mut step = PathStep::new(kind, direction);
                self.skip_ws();
                if self.rest_starts_with("[") {
                    self.filter_conditions(&mut step.filter)?;
                }
                steps.push(step);
            } else {
                if steps.is_empty() {
                    self.pos = start;
                    return Err(self.error("<relation>.forward or <relation>.backward"));
                }
                self.pos = start;
                target.category = self.category(true)?;
                self.skip_ws();
                if self.rest_starts_with("[") {
                    self.filter_conditions(&mut target)?;
                }
                self.expect(")")?;
                break;
            }
            if self.eat(")") {
                break;
            }
            self.expect("->")?;
        }
        Ok(PathConstraint { steps, target })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::NidmError;

    fn roundtrip(text: &str) {
        let q = parse_query(text).unwrap();
        assert_eq!(q.to_string(), text);
        assert_eq!(parse_query(&q.to_string()).unwrap(), q);
    }

    #[test]
    fn canonical_forms_round_trip() {
        roundtrip("select entity");
        roundtrip("select entity where type=neurolex:Handedness and attr[prov:value]=neurolex:right_handed");
        roundtrip("select entity where type=neurolex:T1 and attr[prov:value]>6000 and path(wasGeneratedBy.backward -> activity[type=fs:FreeSurfer])");
        roundtrip("select agent where attr[nidm:age]<18 and path(wasAttributedTo.backward[type=fs:left_putamen_volume and attr[prov:value]>6000] -> wasGeneratedBy.backward -> activity[type=fs:FreeSurfer])");
        roundtrip("select entity where path(hadMember.forward -> entity[attr[prov:value]])");
        roundtrip("select activity where attr[prov:label] contains \"spm.temporal\" and attr[nidm:url]!=<http://x.org/a> and attr[a:b]>=-2.50");
        roundtrip("select entity where path(used.backward)");
        roundtrip("select entity where path(used.backward -> any[type=a:b])");
    }

    #[test]
    fn loose_spacing_and_unicode_comparators() {
        let q = parse_query("  select   agent where attr [ nidm:age ] ≤ 15 and path ( wasAssociatedWith.forward -> agent )").unwrap();
        assert_eq!(q.to_string(), "select agent where attr[nidm:age]<=15 and path(wasAssociatedWith.forward -> agent)");
        let q = parse_query("select entity where attr[x:y] ≠ \"a \\\"b\\\"\"").unwrap();
        assert_eq!(q.attrs[0].test.as_ref().unwrap().1, AttributeValue::Text("a \"b\"".into()));
    }

    fn err_col(text: &str) -> (usize, String) {
        match parse_query(text) {
            Err(NidmError::Parse(p)) => (p.span.column, p.expected),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_point_at_token() {
        assert_eq!(err_col("choose entity").0, 1);
        assert_eq!(err_col("select thing").0, 8);
        assert_eq!(err_col("select entity where colour=red").0, 21);
        assert_eq!(err_col("select entity where type=").0, 26);
        assert_eq!(err_col("select entity where path(used.sideways)").0, 26);
        assert_eq!(err_col("select entity where path(entity)").0, 26);
        assert_eq!(err_col("select entity where attr[a:b]=\"open").0, 31);
        assert_eq!(err_col("select entity where type=a:b extra").0, 30);
        assert_eq!(err_col("select entity where path(used.forward").1, "`->`");
    }
}
