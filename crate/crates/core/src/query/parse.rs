//! Text form of query registration:
//!
//! ```text
//! COUNT OVER stream WHERE objectType IN (bicycle) WINDOWED BY 60 WITH SIGMA 1 MODE trusted
//! SUM(value) OVER stream WHERE objectType = car AND value > 5 WINDOWED BY 60s
//!     WITH SIGMA 2 VMAX 30 SCOPE cumulative 4 MODE untrusted BOUND 100
//! ```
//!
//! Keywords are case-insensitive; clauses after `OVER <name>` may appear in
//! any order.

use std::collections::BTreeSet;

use super::spec::{Aggregate, CmpOp, FrameScope, Mode, Predicate, QuerySpec};
use super::QueryError;
use crate::model::ObjectType;

fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, out: &mut Vec<String>| {
        if !cur.is_empty() {
            out.push(std::mem::take(cur));
        }
    };
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => flush(&mut cur, &mut out),
            '(' | ')' | ',' => {
                flush(&mut cur, &mut out);
                out.push(c.to_string());
            }
            '<' | '>' | '=' | '!' => {
                flush(&mut cur, &mut out);
                if chars.get(i + 1) == Some(&'=') {
                    out.push(format!("{c}="));
                    i += 1;
                } else {
                    out.push(c.to_string());
                }
            }
            _ => cur.push(c),
        }
        i += 1;
    }
    flush(&mut cur, &mut out);
    out
}

struct Cursor {
    toks: Vec<String>,
    pos: usize,
}

impl Cursor {
    fn peek(&self) -> Option<&str> {
        self.toks.get(self.pos).map(String::as_str)
    }

    fn next(&mut self) -> Result<String, QueryError> {
        let t = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| QueryError::Parse("unexpected end of query".into()))?;
        self.pos += 1;
        Ok(t)
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.eq_ignore_ascii_case(kw))
    }

    fn expect(&mut self, kw: &str) -> Result<(), QueryError> {
        let t = self.next()?;
        if t.eq_ignore_ascii_case(kw) {
            Ok(())
        } else {
            Err(QueryError::Parse(format!("expected `{kw}`, found `{t}`")))
        }
    }

    fn number(&mut self) -> Result<f64, QueryError> {
        let t = self.next()?;
        t.parse()
            .map_err(|_| QueryError::Parse(format!("expected a number, found `{t}`")))
    }
}

fn parse_op(t: &str) -> Result<CmpOp, QueryError> {
    Ok(match t {
        "<" => CmpOp::Lt,
        "<=" => CmpOp::Le,
        ">" => CmpOp::Gt,
        ">=" => CmpOp::Ge,
        "=" => CmpOp::Eq,
        "!=" => CmpOp::Ne,
        _ => return Err(QueryError::Parse(format!("unknown comparison `{t}`"))),
    })
}

fn parse_duration(t: &str) -> Result<u64, QueryError> {
    let digits = t.strip_suffix(['s', 'S']).unwrap_or(t);
    digits
        .parse()
        .map_err(|_| QueryError::Parse(format!("expected a duration in seconds, found `{t}`")))
}

fn parse_condition(c: &mut Cursor, types: &mut BTreeSet<ObjectType>, preds: &mut Vec<Predicate>) -> Result<(), QueryError> {
    let field = c.next()?;
    if field.eq_ignore_ascii_case("objecttype") {
        if c.at_kw("in") {
            c.next()?;
            c.expect("(")?;
            loop {
                types.insert(c.next()?.parse()?);
                match c.next()?.as_str() {
                    "," => continue,
                    ")" => break,
                    t => return Err(QueryError::Parse(format!("expected `,` or `)`, found `{t}`"))),
                }
            }
        } else {
            c.expect("=")?;
            types.insert(c.next()?.parse()?);
        }
        Ok(())
    } else if field.eq_ignore_ascii_case("value") {
        let op = parse_op(&c.next()?)?;
        let constant = c.number()?;
        preds.push(Predicate { op, constant });
        Ok(())
    } else {
        Err(QueryError::Parse(format!("unknown field `{field}`")))
    }
}

/// Parses the text form into a [`QuerySpec`]; semantic validation happens at
/// registration.
pub fn parse_query(text: &str) -> Result<QuerySpec, QueryError> {
    let mut c = Cursor {
        toks: tokenize(text),
        pos: 0,
    };
    let agg = c.next()?;
    let aggregate = match agg.to_ascii_lowercase().as_str() {
        "count" => Aggregate::Count,
        "sum" => Aggregate::Sum,
        "avg" => Aggregate::Avg,
        _ => return Err(QueryError::Parse(format!("unknown aggregate `{agg}`"))),
    };
    if c.peek() == Some("(") {
        while c.next()? != ")" {}
    }
    c.expect("over")?;
    c.next()?;

    let mut object_types = BTreeSet::new();
    let mut predicates = Vec::new();
    let mut aw_duration = None;
    let mut sigma = None;
    let mut mode = Mode::Trusted;
    let mut declared_s = None;
    let mut v_max = None;
    let mut scope = FrameScope::LastFrame;

    while let Some(kw) = c.peek().map(str::to_ascii_lowercase) {
        c.next()?;
        match kw.as_str() {
            "where" => loop {
                parse_condition(&mut c, &mut object_types, &mut predicates)?;
                if c.at_kw("and") {
                    c.next()?;
                } else {
                    break;
                }
            },
            "windowed" => {
                c.expect("by")?;
                aw_duration = Some(parse_duration(&c.next()?)?);
            }
            "with" => {
                c.expect("sigma")?;
                sigma = Some(c.number()?);
            }
            "vmax" => v_max = Some(c.number()?),
            "bound" => declared_s = Some(c.number()?),
            "scope" => {
                let s = c.next()?.to_ascii_lowercase();
                scope = match s.as_str() {
                    "last" => FrameScope::LastFrame,
                    "all" => FrameScope::AllFrames,
                    "cumulative" => FrameScope::Cumulative(c.number()? as u64),
                    _ => return Err(QueryError::Parse(format!("unknown scope `{s}`"))),
                };
            }
            "mode" => {
                let m = c.next()?.to_ascii_lowercase();
                mode = match m.as_str() {
                    "trusted" => Mode::Trusted,
                    "untrusted" => Mode::Untrusted,
                    _ => return Err(QueryError::Parse(format!("unknown mode `{m}`"))),
                };
                if c.at_kw("bound") {
                    c.next()?;
                    declared_s = Some(c.number()?);
                }
            }
            other => return Err(QueryError::Parse(format!("unexpected `{other}`"))),
        }
    }

    Ok(QuerySpec {
        aggregate,
        object_types,
        predicates,
        aw_duration: aw_duration.ok_or_else(|| QueryError::Parse("missing WINDOWED BY".into()))?,
        sigma: sigma.ok_or_else(|| QueryError::Parse("missing WITH SIGMA".into()))?,
        mode,
        declared_s,
        v_max,
        scope,
    })
}
