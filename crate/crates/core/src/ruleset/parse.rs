//! Line-oriented rule DSL.
//!
//! ```text
//! ruleset   := (rule NEWLINE)*
//! rule      := [INT ":"] "if" condition ("and" condition)* "then" LABEL
//! condition := NAME CMP VALUE | NAME "in" BRACKET NUMBER "," NUMBER BRACKET
//! CMP       := "<=" | "<" | ">=" | ">" | "=="
//! ```
//!
//! Keywords are case-insensitive, `#` starts a comment, names and labels may
//! be double-quoted. `==` also accepts a quoted string or bare word for
//! categorical features. Numbers accept `inf`/`-inf`.

use super::{Bounds, Condition, Rule, Ruleset, Test};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Num(f64, String),
    Cmp(&'static str),
    Punct(char),
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    col: usize,
}

const KEYWORDS: [&str; 4] = ["if", "and", "then", "in"];

fn is_keyword(w: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(w))
}

fn is_word_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn parse_inf(w: &str) -> Option<f64> {
    let (sign, body) = match w.as_bytes().first() {
        Some(b'-') => (-1.0, &w[1..]),
        Some(b'+') => (1.0, &w[1..]),
        _ => (1.0, w),
    };
    (body.eq_ignore_ascii_case("inf") || body.eq_ignore_ascii_case("infinity"))
        .then_some(sign * f64::INFINITY)
}

pub(super) fn is_bare_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if is_word_start(c)) && chars.all(is_word_char) && !is_keyword(s)
}

pub(super) fn is_bare_label(s: &str) -> bool {
    match tokenize(s, 1) {
        Ok(toks) if toks.len() == 1 => match &toks[0].tok {
            Tok::Word(w) => w == s && !is_keyword(w),
            Tok::Num(_, raw) => raw == s,
            _ => false,
        },
        _ => false,
    }
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column: col,
        message: message.into(),
    }
}

fn tokenize(text: &str, line: usize) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            break;
        }
        if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(syntax(line, col, "unterminated string")),
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        match chars.get(i + 1) {
                            Some(&e @ ('"' | '\\')) => s.push(e),
                            _ => return Err(syntax(line, i + 1, "invalid escape")),
                        }
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            out.push(Spanned {
                tok: Tok::Str(s),
                col,
            });
            continue;
        }
        let next = chars.get(i + 1).copied();
        let starts_number = c.is_ascii_digit()
            || (c == '.' && next.is_some_and(|n| n.is_ascii_digit()))
            || ((c == '-' || c == '+')
                && next.is_some_and(|n| n.is_ascii_digit() || n == '.' || n == 'i' || n == 'I'));
        if starts_number {
            let start = i;
            if c == '-' || c == '+' {
                i += 1;
            }
            if chars[i].is_ascii_alphabetic() {
                while i < chars.len() && chars[i].is_ascii_alphabetic() {
                    i += 1;
                }
            } else {
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
            }
            let raw: String = chars[start..i].iter().collect();
            let value = parse_inf(&raw)
                .or_else(|| raw.parse::<f64>().ok().filter(|x| x.is_finite()))
                .ok_or_else(|| syntax(line, col, format!("invalid number `{raw}`")))?;
            out.push(Spanned {
                tok: Tok::Num(value, raw),
                col,
            });
            continue;
        }
        if is_word_start(c) {
            let start = i;
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
            out.push(Spanned {
                tok: Tok::Word(chars[start..i].iter().collect()),
                col,
            });
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let cmp = match two.as_str() {
            "<=" => Some("<="),
            ">=" => Some(">="),
            "==" => Some("=="),
            _ => match c {
                '<' => Some("<"),
                '>' => Some(">"),
                _ => None,
            },
        };
        if let Some(op) = cmp {
            i += op.len();
            out.push(Spanned {
                tok: Tok::Cmp(op),
                col,
            });
            continue;
        }
        if matches!(c, '[' | ']' | '(' | ')' | ',' | ':') {
            i += 1;
            out.push(Spanned {
                tok: Tok::Punct(c),
                col,
            });
            continue;
        }
        return Err(syntax(line, col, format!("unexpected character `{c}`")));
    }
    Ok(out)
}

struct LineParser {
    toks: Vec<Spanned>,
    pos: usize,
    line: usize,
    end_col: usize,
}

impl LineParser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |s| s.col)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        self.pos += 1;
        t
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn err(&self, message: impl Into<String>) -> Error {
        syntax(self.line, self.col(), message)
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.at_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{kw}`")))
        }
    }

    fn rule(&mut self) -> Result<(Option<usize>, Rule)> {
        let mut explicit_id = None;
        if let (Some(Tok::Num(_, raw)), Some(Tok::Punct(':'))) =
            (self.peek(), self.toks.get(self.pos + 1).map(|s| &s.tok))
        {
            let id = raw
                .parse::<usize>()
                .map_err(|_| self.err(format!("invalid rule id `{raw}`")))?;
            explicit_id = Some(id);
            self.pos += 2;
        }
        self.expect_keyword("if")?;
        if self.at_keyword("then") || self.peek().is_none() {
            return Err(Error::EmptyPremise { line: self.line });
        }
        let mut premise = vec![self.condition()?];
        loop {
            if self.at_keyword("and") {
                self.pos += 1;
                premise.push(self.condition()?);
            } else if self.at_keyword("then") {
                self.pos += 1;
                break;
            } else {
                return Err(self.err("expected `and` or `then`"));
            }
        }
        let consequence = match self.bump() {
            Some(Tok::Word(w)) if !is_keyword(&w) => w,
            Some(Tok::Num(_, raw)) => raw,
            Some(Tok::Str(s)) => s,
            _ => {
                self.pos -= 1;
                return Err(self.err("expected a class label after `then`"));
            }
        };
        if self.peek().is_some() {
            return Err(self.err("unexpected trailing input"));
        }
        Ok((
            explicit_id,
            Rule {
                id: 0,
                premise,
                consequence,
            },
        ))
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        match self.bump() {
            Some(Tok::Num(x, _)) => Ok(x),
            Some(Tok::Word(w)) if parse_inf(&w).is_some() => Ok(parse_inf(&w).unwrap_or_default()),
            _ => {
                self.pos -= 1;
                Err(self.err(format!("expected a number for {what}")))
            }
        }
    }

    fn condition(&mut self) -> Result<Condition> {
        let feature = match self.bump() {
            Some(Tok::Word(w)) if !is_keyword(&w) => w,
            Some(Tok::Str(s)) => s,
            _ => {
                self.pos -= 1;
                return Err(self.err("expected a feature name"));
            }
        };
        if self.at_keyword("in") {
            self.pos += 1;
            return Ok(Condition {
                feature,
                test: Test::In(self.interval()?),
            });
        }
        let op = match self.bump() {
            Some(Tok::Cmp(op)) => op,
            _ => {
                self.pos -= 1;
                return Err(self.err("expected a comparison operator or `in`"));
            }
        };
        let test = if op == "==" {
            match self.bump() {
                Some(Tok::Num(x, _)) => Test::Eq(x),
                Some(Tok::Str(s)) => Test::EqText(s),
                Some(Tok::Word(w)) if parse_inf(&w).is_some() => {
                    Test::Eq(parse_inf(&w).unwrap_or_default())
                }
                Some(Tok::Word(w)) if !is_keyword(&w) => Test::EqText(w),
                _ => {
                    self.pos -= 1;
                    return Err(self.err("expected a value after `==`"));
                }
            }
        } else {
            let t = self.number("the threshold")?;
            match op {
                "<" => Test::Lt(t),
                "<=" => Test::Le(t),
                ">" => Test::Gt(t),
                _ => Test::Ge(t),
            }
        };
        Ok(Condition { feature, test })
    }

    fn interval(&mut self) -> Result<Bounds> {
        let start_col = self.col();
        let malformed = |p: &Self, msg: &str| Error::MalformedInterval {
            line: p.line,
            column: p.col(),
            message: msg.to_owned(),
        };
        let lo_closed = match self.bump() {
            Some(Tok::Punct('[')) => true,
            Some(Tok::Punct('(' | ']')) => false,
            _ => {
                self.pos -= 1;
                return Err(malformed(self, "expected an opening bracket"));
            }
        };
        let lo = self
            .number("the lower bound")
            .map_err(|_| malformed(self, "expected a lower bound"))?;
        if self.bump() != Some(Tok::Punct(',')) {
            self.pos -= 1;
            return Err(malformed(self, "expected `,` between bounds"));
        }
        let hi = self
            .number("the upper bound")
            .map_err(|_| malformed(self, "expected an upper bound"))?;
        let hi_closed = match self.bump() {
            Some(Tok::Punct(']')) => true,
            Some(Tok::Punct(')' | '[')) => false,
            _ => {
                self.pos -= 1;
                return Err(malformed(self, "expected a closing bracket"));
            }
        };
        if lo > hi {
            return Err(Error::MalformedInterval {
                line: self.line,
                column: start_col,
                message: format!("lower bound {lo} exceeds upper bound {hi}"),
            });
        }
        Ok(Bounds {
            lo,
            hi,
            lo_closed,
            hi_closed,
        })
    }
}

/// Parses rule text into a [`Ruleset`] with ids `1..=N_r` in textual order.
pub fn parse_ruleset(text: &str) -> Result<Ruleset> {
    let mut rules = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let toks = tokenize(raw_line, line)?;
        if toks.is_empty() {
            continue;
        }
        let mut p = LineParser {
            toks,
            pos: 0,
            line,
            end_col: raw_line.chars().count() + 1,
        };
        let (explicit, rule) = p.rule()?;
        let expected = rules.len() + 1;
        if let Some(id) = explicit {
            if id < expected && id >= 1 {
                return Err(Error::DuplicateRuleId { id, line });
            }
            if id != expected {
                return Err(Error::RuleIdOutOfSequence {
                    expected,
                    found: id,
                    line,
                });
            }
        }
        rules.push(rule);
    }
    Ruleset::new(rules)
}
