//! Propositional formula AST: construction, evaluation, printing, parsing.
//!
//! Connectives bind in the order `!` > `&` > `|` > `->` > `<->`. Implication
//! is right-associative; the other binary connectives fold left. `~` is an
//! accepted alias for `!` on input; the printer always emits `!`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

// TYPES

/// A propositional atom. Names match `[A-Za-z_][A-Za-z0-9_]*` and are never
/// the reserved words `true` / `false`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom(String);

impl Atom {
    /// Panics on names the parser could not read back; atoms should come from
    /// `parse` or from fixed generator alphabets.
    pub fn new(name: &str) -> Self {
        assert!(is_valid_atom_name(name), "invalid atom name: {name:?}");
        Atom(name.to_string())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn is_valid_atom_name(name: &str) -> bool {
    let mut chars = name.chars();
    let head_ok = chars
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
    head_ok
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && name != "true"
        && name != "false"
}

/// Propositional formula over named atoms.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Const(bool),
    Var(Atom),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn var(name: &str) -> Self {
        Formula::Var(Atom::new(name))
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(l: Formula, r: Formula) -> Self {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Formula, r: Formula) -> Self {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: Formula, r: Formula) -> Self {
        Formula::Implies(Box::new(l), Box::new(r))
    }

    pub fn iff(l: Formula, r: Formula) -> Self {
        Formula::Iff(Box::new(l), Box::new(r))
    }

    /// Conjunction of a nonempty sequence, folded left; empty yields `true`.
    pub fn conjoin<I: IntoIterator<Item = Formula>>(fs: I) -> Self {
        let mut it = fs.into_iter();
        match it.next() {
            None => Formula::Const(true),
            Some(first) => it.fold(first, Formula::and),
        }
    }

    /// Every atom occurring in the formula, sorted by name.
    pub fn free_atoms(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<Atom>) {
        match self {
            Formula::Const(_) => {}
            Formula::Var(a) => {
                out.insert(a.clone());
            }
            Formula::Not(x) => x.collect_atoms(out),
            Formula::And(l, r)
            | Formula::Or(l, r)
            | Formula::Implies(l, r)
            | Formula::Iff(l, r) => {
                l.collect_atoms(out);
                r.collect_atoms(out);
            }
        }
    }
}

/// Atoms shared by a slice of formulas, sorted by name.
pub fn free_atoms_of(fs: &[Formula]) -> BTreeSet<Atom> {
    let mut out = BTreeSet::new();
    for f in fs {
        f.collect_atoms(&mut out);
    }
    out
}

// EVALUATION

/// Total truth-value assignment for a set of atoms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment(BTreeMap<Atom, bool>);

impl Assignment {
    pub fn new() -> Self {
        Assignment(BTreeMap::new())
    }

    pub fn set(&mut self, atom: Atom, value: bool) {
        self.0.insert(atom, value);
    }

    pub fn get(&self, atom: &Atom) -> Option<bool> {
        self.0.get(atom).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Atom, bool)> {
        self.0.iter().map(|(a, v)| (a, *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(Atom, bool)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (Atom, bool)>>(iter: I) -> Self {
        Assignment(iter.into_iter().collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("assignment is missing atom `{0}`")]
pub struct MissingAtom(pub String);

/// Classical two-valued evaluation under a total assignment.
pub fn evaluate(f: &Formula, asg: &Assignment) -> Result<bool, MissingAtom> {
    Ok(match f {
        Formula::Const(b) => *b,
        Formula::Var(a) => asg
            .get(a)
            .ok_or_else(|| MissingAtom(a.name().to_string()))?,
        Formula::Not(x) => !evaluate(x, asg)?,
        Formula::And(l, r) => evaluate(l, asg)? && evaluate(r, asg)?,
        Formula::Or(l, r) => evaluate(l, asg)? || evaluate(r, asg)?,
        Formula::Implies(l, r) => !evaluate(l, asg)? || evaluate(r, asg)?,
        Formula::Iff(l, r) => evaluate(l, asg)? == evaluate(r, asg)?,
    })
}

// PRINTING

const PREC_IFF: u8 = 1;
const PREC_IMP: u8 = 2;
const PREC_OR: u8 = 3;
const PREC_AND: u8 = 4;
const PREC_NOT: u8 = 5;

/// Renders with minimal parentheses; `parse(render(f))` is structurally `f`.
pub fn render(f: &Formula) -> String {
    let mut out = String::new();
    render_prec(f, 0, &mut out);
    out
}

fn render_prec(f: &Formula, min_prec: u8, out: &mut String) {
    match f {
        Formula::Const(true) => out.push_str("true"),
        Formula::Const(false) => out.push_str("false"),
        Formula::Var(a) => out.push_str(a.name()),
        Formula::Not(x) => {
            out.push('!');
            render_prec(x, PREC_NOT, out);
        }
        Formula::And(l, r) => render_binary(l, "&", r, PREC_AND, false, min_prec, out),
        Formula::Or(l, r) => render_binary(l, "|", r, PREC_OR, false, min_prec, out),
        Formula::Implies(l, r) => render_binary(l, "->", r, PREC_IMP, true, min_prec, out),
        Formula::Iff(l, r) => render_binary(l, "<->", r, PREC_IFF, false, min_prec, out),
    }
}

fn render_binary(
    l: &Formula,
    op: &str,
    r: &Formula,
    prec: u8,
    right_assoc: bool,
    min_prec: u8,
    out: &mut String,
) {
    let wrap = prec < min_prec;
    if wrap {
        out.push('(');
    }
    let (lp, rp) = if right_assoc {
        (prec + 1, prec)
    } else {
        (prec, prec + 1)
    };
    render_prec(l, lp, out);
    out.push(' ');
    out.push_str(op);
    out.push(' ');
    render_prec(r, rp, out);
    if wrap {
        out.push(')');
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}

// PARSING

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("syntax error at byte {position}: expected {expected}, found {found}")]
pub struct SyntaxError {
    pub position: usize,
    pub expected: String,
    pub found: String,
}

impl SyntaxError {
    fn new(position: usize, expected: &str, found: impl Into<String>) -> Self {
        SyntaxError {
            position,
            expected: expected.to_string(),
            found: found.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Token {
    Ident(String),
    True,
    False,
    Bang,
    Amp,
    Pipe,
    Arrow,
    DArrow,
    LParen,
    RParen,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Ident(name) => format!("`{name}`"),
            Token::True => "`true`".into(),
            Token::False => "`false`".into(),
            Token::Bang => "`!`".into(),
            Token::Amp => "`&`".into(),
            Token::Pipe => "`|`".into(),
            Token::Arrow => "`->`".into(),
            Token::DArrow => "`<->`".into(),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
        }
    }
}

fn lex(input: &str) -> Result<Vec<(usize, Token)>, SyntaxError> {
    let bytes = input.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'(' => {
                tokens.push((i, Token::LParen));
                i += 1;
            }
            b')' => {
                tokens.push((i, Token::RParen));
                i += 1;
            }
            b'!' | b'~' => {
                tokens.push((i, Token::Bang));
                i += 1;
            }
            b'&' => {
                tokens.push((i, Token::Amp));
                i += 1;
            }
            b'|' => {
                tokens.push((i, Token::Pipe));
                i += 1;
            }
            b'-' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    tokens.push((i, Token::Arrow));
                    i += 2;
                } else {
                    return Err(SyntaxError::new(i, "`->`", "`-`"));
                }
            }
            b'<' => {
                if bytes.get(i + 1) == Some(&b'-') && bytes.get(i + 2) == Some(&b'>') {
                    tokens.push((i, Token::DArrow));
                    i += 3;
                } else {
                    return Err(SyntaxError::new(i, "`<->`", "`<`"));
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &input[start..i];
                let tok = match word {
                    "true" => Token::True,
                    "false" => Token::False,
                    _ => Token::Ident(word.to_string()),
                };
                tokens.push((start, tok));
            }
            other => {
                return Err(SyntaxError::new(
                    i,
                    "a formula token",
                    format!("`{}`", other as char),
                ));
            }
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [(usize, Token)],
    pos: usize,
    input_len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map_or(self.input_len, |(at, _)| *at)
    }

    fn found(&self) -> String {
        self.tokens
            .get(self.pos)
            .map_or_else(|| "end of input".to_string(), |(_, t)| t.describe())
    }

    fn bump(&mut self) -> &Token {
        let t = &self.tokens[self.pos].1;
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Token, expected: &str) -> Result<(), SyntaxError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(SyntaxError::new(self.here(), expected, self.found()))
        }
    }

    // iff := imp ("<->" imp)*
    fn parse_iff(&mut self) -> Result<Formula, SyntaxError> {
        let mut acc = self.parse_imp()?;
        while self.peek() == Some(&Token::DArrow) {
            self.pos += 1;
            let rhs = self.parse_imp()?;
            acc = Formula::iff(acc, rhs);
        }
        Ok(acc)
    }

    // imp := or ("->" imp)?   (right-associative)
    fn parse_imp(&mut self) -> Result<Formula, SyntaxError> {
        let lhs = self.parse_or()?;
        if self.peek() == Some(&Token::Arrow) {
            self.pos += 1;
            let rhs = self.parse_imp()?;
            Ok(Formula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    // or := and ("|" and)*
    fn parse_or(&mut self) -> Result<Formula, SyntaxError> {
        let mut acc = self.parse_and()?;
        while self.peek() == Some(&Token::Pipe) {
            self.pos += 1;
            let rhs = self.parse_and()?;
            acc = Formula::or(acc, rhs);
        }
        Ok(acc)
    }

    // and := not ("&" not)*
    fn parse_and(&mut self) -> Result<Formula, SyntaxError> {
        let mut acc = self.parse_unary()?;
        while self.peek() == Some(&Token::Amp) {
            self.pos += 1;
            let rhs = self.parse_unary()?;
            acc = Formula::and(acc, rhs);
        }
        Ok(acc)
    }

    // not := ("!" | "~") not | atom | "true" | "false" | "(" iff ")"
    fn parse_unary(&mut self) -> Result<Formula, SyntaxError> {
        match self.peek() {
            Some(Token::Bang) => {
                self.pos += 1;
                Ok(Formula::not(self.parse_unary()?))
            }
            Some(Token::True) => {
                self.pos += 1;
                Ok(Formula::Const(true))
            }
            Some(Token::False) => {
                self.pos += 1;
                Ok(Formula::Const(false))
            }
            Some(Token::Ident(_)) => {
                let Token::Ident(name) = self.bump().clone() else {
                    unreachable!()
                };
                Ok(Formula::Var(Atom(name)))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.parse_iff()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(inner)
            }
            _ => Err(SyntaxError::new(self.here(), "a formula", self.found())),
        }
    }
}

/// Parses one formula; the whole input must be consumed.
pub fn parse(input: &str) -> Result<Formula, SyntaxError> {
    let tokens = lex(input)?;
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        input_len: input.len(),
    };
    let formula = parser.parse_iff()?;
    if parser.pos != tokens.len() {
        return Err(SyntaxError::new(
            parser.here(),
            "end of input",
            parser.found(),
        ));
    }
    Ok(formula)
}

impl FromStr for Formula {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

#[cfg(test)]
mod parsing_tests {
    use super::*;

    fn p(s: &str) -> Formula {
        parse(s).unwrap()
    }

    fn v(name: &str) -> Formula {
        Formula::var(name)
    }

    #[test]
    fn precedence_and_binds_before_implies() {
        assert_eq!(p("a & b -> c"), Formula::implies(Formula::and(v("a"), v("b")), v("c")));
    }

    #[test]
    fn parentheses_and_negation() {
        assert_eq!(
            p("a <-> (b | !c)"),
            Formula::iff(v("a"), Formula::or(v("b"), Formula::not(v("c"))))
        );
    }

    #[test]
    fn tilde_is_an_alias_for_bang() {
        assert_eq!(p("~a & ~~b"), p("!a & !!b"));
    }

    #[test]
    fn implies_is_right_associative() {
        assert_eq!(
            p("a -> b -> c"),
            Formula::implies(v("a"), Formula::implies(v("b"), v("c")))
        );
    }

    #[test]
    fn iterated_connectives_fold_left() {
        assert_eq!(p("a & b & c"), Formula::and(Formula::and(v("a"), v("b")), v("c")));
        assert_eq!(p("a | b | c"), Formula::or(Formula::or(v("a"), v("b")), v("c")));
        assert_eq!(
            p("a <-> b <-> c"),
            Formula::iff(Formula::iff(v("a"), v("b")), v("c"))
        );
    }

    #[test]
    fn constants_parse() {
        assert_eq!(p("true | false"), Formula::or(Formula::Const(true), Formula::Const(false)));
    }

    #[test]
    fn error_reports_position_and_expectation() {
        let err = parse("a &").unwrap_err();
        assert_eq!(err.position, 3);
        assert_eq!(err.expected, "a formula");
        assert_eq!(err.found, "end of input");

        let err = parse("(a").unwrap_err();
        assert_eq!(err.position, 2);
        assert_eq!(err.expected, "`)`");

        let err = parse("a b").unwrap_err();
        assert_eq!(err.position, 2);
        assert_eq!(err.expected, "end of input");
        assert_eq!(err.found, "`b`");
    }

    #[test]
    fn error_on_empty_and_illegal_tokens() {
        assert!(parse("").is_err());
        assert!(parse("   ").is_err());
        let err = parse("a # b").unwrap_err();
        assert_eq!(err.position, 2);
        let err = parse("a - b").unwrap_err();
        assert_eq!(err.expected, "`->`");
    }

    #[test]
    fn reserved_words_are_not_atoms() {
        // `true` lexes as a constant, so it cannot start an implication chain
        // as an atom would; `truex` is an ordinary atom.
        assert_eq!(p("truex"), v("truex"));
        assert_eq!(p("true"), Formula::Const(true));
    }
}

#[cfg(test)]
mod printing_tests {
    use super::*;

    fn p(s: &str) -> Formula {
        parse(s).unwrap()
    }

    #[test]
    fn minimal_parentheses() {
        for (input, printed) in [
            ("a & b -> c", "a & b -> c"),
            ("(a & b) -> c", "a & b -> c"),
            ("a & (b -> c)", "a & (b -> c)"),
            ("(a | b) & c", "(a | b) & c"),
            ("a | b & c", "a | b & c"),
            ("!(a & b)", "!(a & b)"),
            ("!!a", "!!a"),
            ("~a", "!a"),
            ("(a -> b) -> c", "(a -> b) -> c"),
            ("a -> (b -> c)", "a -> b -> c"),
            ("a <-> b <-> c", "a <-> b <-> c"),
            ("a <-> (b <-> c)", "a <-> (b <-> c)"),
            ("a & (b & c)", "a & (b & c)"),
            ("true | false", "true | false"),
        ] {
            assert_eq!(render(&p(input)), printed, "rendering {input:?}");
        }
    }

    #[test]
    fn round_trip_on_hand_picked_shapes() {
        for s in [
            "a",
            "!a",
            "a & b | c -> d <-> e",
            "((a | !b) & (c -> d)) <-> !(e & true)",
            "!(a <-> b) -> (c | (d & !e))",
        ] {
            let f = p(s);
            assert_eq!(parse(&render(&f)).unwrap(), f, "round-tripping {s:?}");
        }
    }
}
