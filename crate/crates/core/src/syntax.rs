//! Canonical text form of formulae.
//!
//! ```text
//! formula  := "tt"
//!           | atom
//!           | "not" "(" formula ")"
//!           | ("F" | "G") interval "(" formula ")"
//!           | "(" formula ")" binop "(" formula ")"
//! binop    := "and" | "or" | "U" interval
//! atom     := "x_" digits (">=" | "<=") number
//! interval := "[" digits "," (digits | "inf") "]"
//! number   := ["-"] digits ["." digits]
//! ```
//!
//! The printer emits single spaces between tokens and fully parenthesizes
//! operands; the parser tolerates arbitrary whitespace between tokens.

use std::fmt;

use crate::formula::{round_sig4, Atom, Comparison, Formula, Interval};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    /// Byte offset into the input.
    pub offset: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "syntax error at offset {}: expected one of [{}], found {}",
            self.offset,
            self.expected.join(", "),
            self.found
        )
    }
}

impl std::error::Error for SyntaxError {}

pub fn print(f: &Formula) -> String {
    let mut out = String::new();
    write_formula(f, &mut out);
    out
}

pub fn format_threshold(x: f64) -> String {
    let s = format!("{}", round_sig4(x));
    if s.contains('.') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        s + ".0"
    }
}

fn write_formula(f: &Formula, out: &mut String) {
    match f {
        Formula::True => out.push_str("tt"),
        Formula::Atom(Atom { var, cmp, threshold }) => {
            out.push_str(&format!("x_{var} {} {}", cmp.symbol(), format_threshold(*threshold)));
        }
        Formula::Not(g) => {
            out.push_str("not ( ");
            write_formula(g, out);
            out.push_str(" )");
        }
        Formula::Eventually(i, g) | Formula::Globally(i, g) => {
            out.push(if matches!(f, Formula::Eventually(..)) { 'F' } else { 'G' });
            out.push_str(&i.to_string());
            out.push_str(" ( ");
            write_formula(g, out);
            out.push_str(" )");
        }
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
            out.push_str("( ");
            write_formula(a, out);
            out.push_str(" ) ");
            match f {
                Formula::And(..) => out.push_str("and"),
                Formula::Or(..) => out.push_str("or"),
                Formula::Until(i, ..) => {
                    out.push('U');
                    out.push_str(&i.to_string());
                }
                _ => unreachable!(),
            }
            out.push_str(" ( ");
            write_formula(b, out);
            out.push_str(" )");
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Ge,
    Le,
    Var(usize),
    Word(&'a str),
    Number(&'a str),
    Eof,
}

impl Tok<'_> {
    fn describe(&self) -> String {
        match self {
            Tok::LParen => "\"(\"".into(),
            Tok::RParen => "\")\"".into(),
            Tok::LBracket => "\"[\"".into(),
            Tok::RBracket => "\"]\"".into(),
            Tok::Comma => "\",\"".into(),
            Tok::Ge => "\">=\"".into(),
            Tok::Le => "\"<=\"".into(),
            Tok::Var(i) => format!("\"x_{i}\""),
            Tok::Word(w) => format!("\"{w}\""),
            Tok::Number(n) => format!("number {n}"),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn err(&self, offset: usize, expected: &[&str], found: String) -> SyntaxError {
        SyntaxError {
            offset,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        }
    }

    /// Returns the token and its starting offset.
    fn next(&mut self) -> Result<(Tok<'a>, usize), SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let Some(c) = rest.chars().next() else {
            return Ok((Tok::Eof, start));
        };
        let single = |t| Ok((t, start));
        match c {
            '(' => {
                self.pos += 1;
                single(Tok::LParen)
            }
            ')' => {
                self.pos += 1;
                single(Tok::RParen)
            }
            '[' => {
                self.pos += 1;
                single(Tok::LBracket)
            }
            ']' => {
                self.pos += 1;
                single(Tok::RBracket)
            }
            ',' => {
                self.pos += 1;
                single(Tok::Comma)
            }
            '>' | '<' => {
                if rest[1..].starts_with('=') {
                    self.pos += 2;
                    single(if c == '>' { Tok::Ge } else { Tok::Le })
                } else {
                    Err(self.err(start + 1, &["\"=\""], describe_char(&rest[1..])))
                }
            }
            '-' | '0'..='9' => {
                let bytes = rest.as_bytes();
                let mut i = usize::from(c == '-');
                let digits_from = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i == digits_from {
                    return Err(self.err(start + i, &["digit"], describe_char(&rest[i..])));
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    let frac_from = i;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    if i == frac_from {
                        return Err(self.err(start + i, &["digit"], describe_char(&rest[i..])));
                    }
                }
                self.pos += i;
                Ok((Tok::Number(&rest[..i]), start))
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                if let Some(tail) = rest.strip_prefix("x_") {
                    let n = tail.bytes().take_while(|b| b.is_ascii_digit()).count();
                    if n == 0 {
                        return Err(self.err(start + 2, &["digit"], describe_char(tail)));
                    }
                    let var = tail[..n]
                        .parse()
                        .map_err(|_| self.err(start + 2, &["variable index"], tail[..n].to_string()))?;
                    self.pos += 2 + n;
                    return Ok((Tok::Var(var), start));
                }
                let n = rest
                    .bytes()
                    .take_while(|b| b.is_ascii_alphabetic())
                    .count();
                self.pos += n;
                Ok((Tok::Word(&rest[..n]), start))
            }
            _ => Err(self.err(start, &["token"], describe_char(rest))),
        }
    }
}

fn describe_char(s: &str) -> String {
    match s.chars().next() {
        Some(c) => format!("{c:?}"),
        None => "end of input".into(),
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: Option<(Tok<'a>, usize)>,
}

impl<'a> Parser<'a> {
    fn peek(&mut self) -> Result<&(Tok<'a>, usize), SyntaxError> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lexer.next()?);
        }
        Ok(self.peeked.as_ref().unwrap())
    }

    fn bump(&mut self) -> Result<(Tok<'a>, usize), SyntaxError> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lexer.next(),
        }
    }

    fn unexpected(tok: &Tok<'_>, offset: usize, expected: &[&str]) -> SyntaxError {
        SyntaxError {
            offset,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: tok.describe(),
        }
    }

    fn expect(&mut self, want: Tok<'static>, label: &str) -> Result<(), SyntaxError> {
        let (tok, off) = self.bump()?;
        if tok == want {
            Ok(())
        } else {
            Err(Self::unexpected(&tok, off, &[label]))
        }
    }

    fn formula(&mut self) -> Result<Formula, SyntaxError> {
        const START: &[&str] = &["\"(\"", "\"tt\"", "\"x_\"", "\"not\"", "\"F\"", "\"G\""];
        let (tok, off) = self.bump()?;
        match tok {
            Tok::Word("tt") => Ok(Formula::True),
            Tok::Var(var) => {
                let (cmp_tok, cmp_off) = self.bump()?;
                let cmp = match cmp_tok {
                    Tok::Ge => Comparison::Ge,
                    Tok::Le => Comparison::Le,
                    other => return Err(Self::unexpected(&other, cmp_off, &["\">=\"", "\"<=\""])),
                };
                let (num, num_off) = self.bump()?;
                match num {
                    Tok::Number(text) => {
                        let threshold: f64 = text
                            .parse()
                            .map_err(|_| Self::unexpected(&num, num_off, &["number"]))?;
                        Ok(Formula::Atom(Atom { var, cmp, threshold }))
                    }
                    other => Err(Self::unexpected(&other, num_off, &["number"])),
                }
            }
            Tok::Word("not") => Ok(Formula::not(self.parenthesized()?)),
            Tok::Word(w @ ("F" | "G")) => {
                let interval = self.interval()?;
                let body = self.parenthesized()?;
                Ok(if w == "F" {
                    Formula::eventually(interval, body)
                } else {
                    Formula::globally(interval, body)
                })
            }
            Tok::LParen => {
                let lhs = self.formula()?;
                self.expect(Tok::RParen, "\")\"")?;
                let (op, op_off) = self.bump()?;
                match op {
                    Tok::Word("and") => Ok(Formula::and(lhs, self.parenthesized()?)),
                    Tok::Word("or") => Ok(Formula::or(lhs, self.parenthesized()?)),
                    Tok::Word("U") => {
                        let interval = self.interval()?;
                        Ok(Formula::until(interval, lhs, self.parenthesized()?))
                    }
                    other => Err(Self::unexpected(&other, op_off, &["\"and\"", "\"or\"", "\"U\""])),
                }
            }
            other => Err(Self::unexpected(&other, off, START)),
        }
    }

    fn parenthesized(&mut self) -> Result<Formula, SyntaxError> {
        self.expect(Tok::LParen, "\"(\"")?;
        let f = self.formula()?;
        self.expect(Tok::RParen, "\")\"")?;
        Ok(f)
    }

    fn step(&mut self, allow_inf: bool) -> Result<Option<usize>, SyntaxError> {
        let (tok, off) = self.bump()?;
        match tok {
            Tok::Number(text) if !text.starts_with('-') && !text.contains('.') => text
                .parse()
                .map(Some)
                .map_err(|_| Self::unexpected(&tok, off, &["time step"])),
            Tok::Word("inf") if allow_inf => Ok(None),
            other => Err(Self::unexpected(
                &other,
                off,
                if allow_inf { &["time step", "\"inf\""] } else { &["time step"] },
            )),
        }
    }

    fn interval(&mut self) -> Result<Interval, SyntaxError> {
        self.expect(Tok::LBracket, "\"[\"")?;
        let lower_off = self.peek()?.1;
        let lower = self.step(false)?.expect("lower bound is finite");
        self.expect(Tok::Comma, "\",\"")?;
        let upper = self.step(true)?;
        self.expect(Tok::RBracket, "\"]\"")?;
        Interval::new(lower, upper).ok_or_else(|| SyntaxError {
            offset: lower_off,
            expected: vec!["lower bound <= upper bound".into()],
            found: format!("[{lower},{}]", upper.map_or("inf".into(), |u| u.to_string())),
        })
    }
}

pub fn parse(text: &str) -> Result<Formula, SyntaxError> {
    let mut p = Parser {
        lexer: Lexer { src: text, pos: 0 },
        peeked: None,
    };
    let f = p.formula()?;
    let (tok, off) = p.bump()?;
    if tok != Tok::Eof {
        return Err(Parser::unexpected(&tok, off, &["end of input"]));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_mined_requirement() {
        let f = parse("G[3,inf] ( x_0 >= -11.44 )").unwrap();
        assert_eq!(f, Formula::globally(Interval::unbounded(3), Formula::ge(0, -11.44)));
    }

    #[test]
    fn parses_negated_constant() {
        assert_eq!(parse("not ( tt )").unwrap(), Formula::not(Formula::True));
    }

    #[test]
    fn temperature_requirement_shape() {
        let f = parse("F[0,10] ( ( x_0 >= 25 ) and ( G[0,60] ( x_0 >= 22 ) ) )").unwrap();
        assert_eq!(f.depth(), 4);
        let operators = f.n_nodes() - f.atoms().len();
        assert_eq!(operators, 3);
        assert_eq!(
            f,
            Formula::eventually(
                Interval::bounded(0, 10),
                Formula::and(
                    Formula::ge(0, 25.0),
                    Formula::globally(Interval::bounded(0, 60), Formula::ge(0, 22.0))
                )
            )
        );
    }

    #[test]
    fn truncated_input_reports_offset() {
        let e = parse("G[3").unwrap_err();
        assert_eq!(e.offset, 3);
        assert_eq!(e.expected, vec!["\",\"".to_string()]);
        assert_eq!(e.found, "end of input");
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse("").is_err());
        assert!(parse("x_0 >= ").is_err());
        assert!(parse("( x_0 >= 1.0 )").is_err());
        assert!(parse("x_0 >= 1.0 )").is_err());
        assert!(parse("F[4,2] ( tt )").is_err());
        assert!(parse("F[-1,2] ( tt )").is_err());
        assert!(parse("F[1.5,2] ( tt )").is_err());
        assert!(parse("F[1,inf ( tt )").is_err());
        assert!(parse("x_ >= 1").is_err());
        assert!(parse("x_0 = 1").is_err());
        assert!(parse("§").is_err());
    }

    #[test]
    fn prints_canonical_forms() {
        assert_eq!(
            print(&Formula::globally(Interval::unbounded(3), Formula::ge(0, -11.44))),
            "G[3,inf] ( x_0 >= -11.44 )"
        );
        assert_eq!(print(&Formula::True), "tt");
        assert_eq!(print(&Formula::not(Formula::le(1, 0.0))), "not ( x_1 <= 0.0 )");
        let u = Formula::until(Interval::bounded(0, 2), Formula::ge(0, 0.0), Formula::ge(0, 2.0));
        assert_eq!(print(&u), "( x_0 >= 0.0 ) U[0,2] ( x_0 >= 2.0 )");
        assert_eq!(parse(&print(&u)).unwrap(), u);
        let o = Formula::or(Formula::True, Formula::le(3, 1234.5678));
        assert_eq!(print(&o), "( tt ) or ( x_3 <= 1235.0 )");
    }

    #[test]
    fn tolerates_whitespace() {
        let a = parse("G[3,inf](x_0>=-11.44)").unwrap();
        let b = parse("  G [ 3 , inf ]  (  x_0  >=  -11.44 ) ").unwrap();
        assert_eq!(a, b);
    }
}
