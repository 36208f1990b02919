//! Prefix-notation patterns over operator symbols, e.g. `(mul (neg ?a) ?b)`.
//! Used both by algebraic rewrite rules and by implementation matchers.

use crate::ir::Op;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    /// `?name` — binds an e-class.
    Var(String),
    /// `(op p1 p2 ...)` — an operator application.
    Node { op: Op, args: Vec<Pattern> },
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
#[error("pattern `{src}`: {msg}")]
pub struct PatternError {
    pub src: String,
    pub msg: String,
}

impl Pattern {
    pub fn parse(src: &str) -> Result<Pattern, PatternError> {
        let err = |msg: &str| PatternError { src: src.to_string(), msg: msg.to_string() };
        let mut toks = tokenize(src);
        toks.reverse();
        let pat = parse_tokens(&mut toks).map_err(|m| err(&m))?;
        if !toks.is_empty() {
            return Err(err("trailing tokens"));
        }
        Ok(pat)
    }

    /// Pattern variables in first-occurrence order (this is the port order
    /// for implementation matchers).
    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Pattern::Var(v) => {
                if !out.iter().any(|x| x == v) {
                    out.push(v.clone());
                }
            }
            Pattern::Node { args, .. } => {
                for a in args {
                    a.collect_vars(out);
                }
            }
        }
    }

    /// Number of operator applications in the pattern.
    pub fn op_count(&self) -> usize {
        match self {
            Pattern::Var(_) => 0,
            Pattern::Node { args, .. } => 1 + args.iter().map(|a| a.op_count()).sum::<usize>(),
        }
    }

    /// True when the pattern is a single operator applied to bare variables.
    pub fn is_single_op(&self) -> bool {
        match self {
            Pattern::Var(_) => false,
            Pattern::Node { args, .. } => args.iter().all(|a| matches!(a, Pattern::Var(_))),
        }
    }

    /// True when every operator in the pattern has mod-2^w ring semantics.
    pub fn all_ring(&self) -> bool {
        match self {
            Pattern::Var(_) => true,
            Pattern::Node { op, args } => op.is_ring() && args.iter().all(|a| a.all_ring()),
        }
    }
}

fn tokenize(src: &str) -> Vec<String> {
    let mut toks = Vec::new();
    let mut cur = String::new();
    for c in src.chars() {
        match c {
            '(' | ')' => {
                if !cur.is_empty() {
                    toks.push(std::mem::take(&mut cur));
                }
                toks.push(c.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    toks.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        toks.push(cur);
    }
    toks
}

fn parse_tokens(toks: &mut Vec<String>) -> Result<Pattern, String> {
    let tok = toks.pop().ok_or("unexpected end of pattern")?;
    match tok.as_str() {
        "(" => {
            let head = toks.pop().ok_or("missing operator after `(`")?;
            let op = Op::parse(&head).ok_or(format!("unknown operator `{head}`"))?;
            let mut args = Vec::new();
            loop {
                match toks.last().map(|s| s.as_str()) {
                    Some(")") => {
                        toks.pop();
                        break;
                    }
                    Some(_) => args.push(parse_tokens(toks)?),
                    None => return Err("missing `)`".into()),
                }
            }
            if args.len() != op.arity() {
                return Err(format!(
                    "{} takes {} argument(s), got {}",
                    op.name(),
                    op.arity(),
                    args.len()
                ));
            }
            Ok(Pattern::Node { op, args })
        }
        ")" => Err("unexpected `)`".into()),
        v if v.starts_with('?') => {
            if v.len() < 2 {
                return Err("empty variable name".into());
            }
            Ok(Pattern::Var(v[1..].to_string()))
        }
        other => Err(format!("expected `(` or variable, got `{other}`")),
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Var(v) => write!(f, "?{v}"),
            Pattern::Node { op, args } => {
                write!(f, "({}", op.name())?;
                for a in args {
                    write!(f, " {a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl serde::Serialize for Pattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for Pattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text: String = serde::Deserialize::deserialize(d)?;
        Pattern::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested() {
        let p = Pattern::parse("(mul (add ?A ?D) ?B)").unwrap();
        assert_eq!(p.to_string(), "(mul (add ?A ?D) ?B)");
        assert_eq!(p.vars(), vec!["A", "D", "B"]);
        assert_eq!(p.op_count(), 2);
        assert!(!p.is_single_op());
        assert!(p.all_ring());
    }

    #[test]
    fn parses_bare_var() {
        assert_eq!(Pattern::parse("?x").unwrap(), Pattern::Var("x".into()));
    }

    #[test]
    fn rejects_arity_errors() {
        assert!(Pattern::parse("(add ?a)").is_err());
        assert!(Pattern::parse("(neg ?a ?b)").is_err());
        assert!(Pattern::parse("(bogus ?a)").is_err());
        assert!(Pattern::parse("(add ?a ?b) junk").is_err());
    }

    #[test]
    fn single_op_detection() {
        assert!(Pattern::parse("(div ?a ?b)").unwrap().is_single_op());
        assert!(!Pattern::parse("(mul (neg ?a) ?b)").unwrap().is_single_op());
        assert!(!Pattern::parse("(div ?a ?b)").unwrap().all_ring());
    }
}
