//! Modal mu-calculus formulas: concrete-syntax parser, action-set
//! resolution against an alphabet, elimination of regular modalities and
//! the infinite-looping operator, conversion to disjunctive form, block
//! labelling, and the alternation-freeness check.

use crate::lts::Label;
use std::collections::BTreeSet;
use thiserror::Error;

/// A set of action labels in a modality: one concrete label, every label,
/// or every label outside a non-empty exclusion set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ActionFormula {
    One(Label),
    Any,
    NotIn(BTreeSet<Label>),
}

impl ActionFormula {
    pub fn matches(&self, label: &Label) -> bool {
        match self {
            ActionFormula::One(l) => l == label,
            ActionFormula::Any => true,
            ActionFormula::NotIn(set) => !set.contains(label),
        }
    }
}

/// Regular expression over action sets, used inside diamond modalities and
/// the infinite-looping operator.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RegularFormula {
    Atom(ActionFormula),
    Concat(Box<RegularFormula>, Box<RegularFormula>),
    Choice(Box<RegularFormula>, Box<RegularFormula>),
    Star(Box<RegularFormula>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    False,
    True,
    Var {
        name: String,
        block: Option<u32>,
        marked: bool,
    },
    Not(Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Dia(ActionFormula, Box<Formula>),
    BoxMod(ActionFormula, Box<Formula>),
    Mu {
        name: String,
        block: Option<u32>,
        marked: bool,
        body: Box<Formula>,
    },
    Nu {
        name: String,
        body: Box<Formula>,
    },
    DiaReg(RegularFormula, Box<Formula>),
    Delta(RegularFormula),
}

impl Formula {
    pub fn var(name: &str) -> Formula {
        Formula::Var {
            name: name.into(),
            block: None,
            marked: false,
        }
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn dia(a: ActionFormula, f: Formula) -> Formula {
        Formula::Dia(a, Box::new(f))
    }

    pub fn boxm(a: ActionFormula, f: Formula) -> Formula {
        Formula::BoxMod(a, Box::new(f))
    }

    pub fn mu(name: &str, body: Formula) -> Formula {
        Formula::Mu {
            name: name.into(),
            block: None,
            marked: false,
            body: Box::new(body),
        }
    }

    pub fn nu(name: &str, body: Formula) -> Formula {
        Formula::Nu {
            name: name.into(),
            body: Box::new(body),
        }
    }

    /// Every label mentioned in modalities, exclusion sets, or regular
    /// expressions.
    pub fn labels(&self) -> BTreeSet<Label> {
        fn act(a: &ActionFormula, out: &mut BTreeSet<Label>) {
            match a {
                ActionFormula::One(l) => {
                    out.insert(l.clone());
                }
                ActionFormula::Any => {}
                ActionFormula::NotIn(set) => out.extend(set.iter().cloned()),
            }
        }
        fn reg(r: &RegularFormula, out: &mut BTreeSet<Label>) {
            match r {
                RegularFormula::Atom(a) => act(a, out),
                RegularFormula::Concat(a, b) | RegularFormula::Choice(a, b) => {
                    reg(a, out);
                    reg(b, out);
                }
                RegularFormula::Star(a) => reg(a, out),
            }
        }
        fn go(f: &Formula, out: &mut BTreeSet<Label>) {
            match f {
                Formula::False | Formula::True | Formula::Var { .. } => {}
                Formula::Not(g) => go(g, out),
                Formula::Or(a, b) | Formula::And(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                Formula::Dia(a, g) | Formula::BoxMod(a, g) => {
                    act(a, out);
                    go(g, out);
                }
                Formula::Mu { body, .. } | Formula::Nu { body, .. } => go(body, out),
                Formula::DiaReg(r, g) => {
                    reg(r, out);
                    go(g, out);
                }
                Formula::Delta(r) => reg(r, out),
            }
        }
        let mut out = BTreeSet::new();
        go(self, &mut out);
        out
    }
}

/// Negation that collapses double negations on the fly.
pub fn neg(f: Formula) -> Formula {
    match f {
        Formula::Not(g) => *g,
        other => Formula::Not(Box::new(other)),
    }
}

#[derive(Debug, Error)]
pub enum MucalcError {
    #[error("offset {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("free variable {name}")]
    FreeVariable { name: String },
    #[error("variable {name} occurs under an odd number of negations")]
    NonMonotonic { name: String },
}

// ---------------------------------------------------------------------------
// Concrete syntax.

#[derive(Clone, Debug, PartialEq)]
enum Token {
    True,
    False,
    Not,
    Or,
    And,
    Mu,
    Nu,
    Any,
    Ident(String),
    Quoted(String),
    LAngle,
    RAngle,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Dot,
    Pipe,
    Star,
    Comma,
    At,
}

fn lex(text: &str) -> Result<Vec<(usize, Token)>, MucalcError> {
    let mut out = Vec::new();
    let bytes: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let pos = i;
        match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '<' => out.push((pos, Token::LAngle)),
            '>' => out.push((pos, Token::RAngle)),
            '[' => out.push((pos, Token::LBracket)),
            ']' => out.push((pos, Token::RBracket)),
            '(' => out.push((pos, Token::LParen)),
            ')' => out.push((pos, Token::RParen)),
            '.' => out.push((pos, Token::Dot)),
            '|' => out.push((pos, Token::Pipe)),
            '*' => out.push((pos, Token::Star)),
            ',' => out.push((pos, Token::Comma)),
            '@' => out.push((pos, Token::At)),
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match bytes.get(i) {
                        Some('"') => break,
                        Some('\\') => {
                            match bytes.get(i + 1) {
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                _ => {
                                    return Err(MucalcError::Syntax {
                                        pos,
                                        message: "bad escape in label".into(),
                                    })
                                }
                            }
                            i += 2;
                            continue;
                        }
                        Some(c) => s.push(*c),
                        None => {
                            return Err(MucalcError::Syntax {
                                pos,
                                message: "unterminated label".into(),
                            })
                        }
                    }
                    i += 1;
                }
                if s.is_empty() || s == "-" {
                    return Err(MucalcError::Syntax {
                        pos,
                        message: "label must be non-empty and not `-`".into(),
                    });
                }
                out.push((pos, Token::Quoted(s)));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    s.push(bytes[i]);
                    i += 1;
                }
                let tok = match s.as_str() {
                    "true" => Token::True,
                    "false" => Token::False,
                    "not" => Token::Not,
                    "or" => Token::Or,
                    "and" => Token::And,
                    "mu" => Token::Mu,
                    "nu" => Token::Nu,
                    "any" => Token::Any,
                    _ => Token::Ident(s),
                };
                out.push((pos, tok));
                continue;
            }
            other => {
                return Err(MucalcError::Syntax {
                    pos,
                    message: format!("unexpected character {other:?}"),
                })
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or_else(|| self.tokens.last().map(|(p, _)| p + 1).unwrap_or(0))
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, MucalcError> {
        Err(MucalcError::Syntax {
            pos: self.here(),
            message: message.into(),
        })
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), MucalcError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected {what}"))
        }
    }

    // `or` binds loosest.
    fn parse_or(&mut self) -> Result<Formula, MucalcError> {
        let mut f = self.parse_and()?;
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            let g = self.parse_and()?;
            f = Formula::or(f, g);
        }
        Ok(f)
    }

    fn parse_and(&mut self) -> Result<Formula, MucalcError> {
        let mut f = self.parse_prefix()?;
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            let g = self.parse_prefix()?;
            f = Formula::and(f, g);
        }
        Ok(f)
    }

    // Prefix operators bind tightest; `mu`/`nu` swallow everything to
    // their right.
    fn parse_prefix(&mut self) -> Result<Formula, MucalcError> {
        match self.peek() {
            Some(Token::Not) => {
                self.pos += 1;
                Ok(Formula::not(self.parse_prefix()?))
            }
            Some(Token::Mu) | Some(Token::Nu) => {
                let is_mu = self.peek() == Some(&Token::Mu);
                self.pos += 1;
                let name = match self.next() {
                    Some(Token::Ident(name)) => name,
                    _ => return self.fail("expected a variable name after the binder"),
                };
                self.expect(Token::Dot, "`.` after the bound variable")?;
                let body = self.parse_or()?;
                Ok(if is_mu {
                    Formula::mu(&name, body)
                } else {
                    Formula::nu(&name, body)
                })
            }
            Some(Token::LAngle) => {
                self.pos += 1;
                let r = self.parse_regex()?;
                self.expect(Token::RAngle, "`>` closing the modality")?;
                if self.peek() == Some(&Token::At) {
                    self.pos += 1;
                    return Ok(Formula::Delta(r));
                }
                let body = self.parse_prefix()?;
                Ok(match single_atom(&r) {
                    Some(a) => Formula::dia(a, body),
                    None => Formula::DiaReg(r, Box::new(body)),
                })
            }
            Some(Token::LBracket) => {
                self.pos += 1;
                let r = self.parse_regex()?;
                self.expect(Token::RBracket, "`]` closing the modality")?;
                let a = match single_atom(&r) {
                    Some(a) => a,
                    None => {
                        return self.fail(
                            "box modalities take a plain action set; use not < R > not φ",
                        )
                    }
                };
                Ok(Formula::boxm(a, self.parse_prefix()?))
            }
            _ => self.parse_primary(),
        }
    }

    fn parse_primary(&mut self) -> Result<Formula, MucalcError> {
        match self.next() {
            Some(Token::True) => Ok(Formula::True),
            Some(Token::False) => Ok(Formula::False),
            Some(Token::Ident(name)) => Ok(Formula::var(&name)),
            Some(Token::LParen) => {
                let f = self.parse_or()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(f)
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.fail("expected a formula")
            }
        }
    }

    fn parse_regex(&mut self) -> Result<RegularFormula, MucalcError> {
        let mut r = self.parse_regex_seq()?;
        while self.peek() == Some(&Token::Pipe) {
            self.pos += 1;
            let s = self.parse_regex_seq()?;
            r = RegularFormula::Choice(Box::new(r), Box::new(s));
        }
        Ok(r)
    }

    fn parse_regex_seq(&mut self) -> Result<RegularFormula, MucalcError> {
        let mut r = self.parse_regex_post()?;
        while self.peek() == Some(&Token::Dot) {
            self.pos += 1;
            let s = self.parse_regex_post()?;
            r = RegularFormula::Concat(Box::new(r), Box::new(s));
        }
        Ok(r)
    }

    fn parse_regex_post(&mut self) -> Result<RegularFormula, MucalcError> {
        let mut r = self.parse_regex_atom()?;
        while self.peek() == Some(&Token::Star) {
            self.pos += 1;
            r = RegularFormula::Star(Box::new(r));
        }
        Ok(r)
    }

    fn parse_regex_atom(&mut self) -> Result<RegularFormula, MucalcError> {
        match self.next() {
            Some(Token::Quoted(l)) => Ok(RegularFormula::Atom(ActionFormula::One(Label::new(l)))),
            Some(Token::Any) => Ok(RegularFormula::Atom(ActionFormula::Any)),
            Some(Token::Not) => {
                self.expect(Token::LParen, "`(` after `not` in an action set")?;
                let mut set = BTreeSet::new();
                loop {
                    match self.next() {
                        Some(Token::Quoted(l)) => {
                            set.insert(Label::new(l));
                        }
                        _ => return self.fail("expected a quoted label in the exclusion set"),
                    }
                    match self.next() {
                        Some(Token::Comma) => continue,
                        Some(Token::RParen) => break,
                        _ => return self.fail("expected `,` or `)` in the exclusion set"),
                    }
                }
                Ok(RegularFormula::Atom(ActionFormula::NotIn(set)))
            }
            Some(Token::LParen) => {
                let r = self.parse_regex()?;
                self.expect(Token::RParen, "`)` in the regular expression")?;
                Ok(r)
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.fail("expected an action set or regular expression")
            }
        }
    }
}

/// A regular formula that is just one action set, possibly parenthesised.
fn single_atom(r: &RegularFormula) -> Option<ActionFormula> {
    match r {
        RegularFormula::Atom(a) => Some(a.clone()),
        _ => None,
    }
}

/// Highest `#n` suffix over all variable names in the formula; fresh names
/// pick counters above it. `#` cannot appear in parsed identifiers, so a
/// name containing it is generated by construction.
fn max_fresh_counter(f: &Formula) -> u32 {
    fn of_name(name: &str, best: &mut u32) {
        if let Some(ix) = name.rfind('#') {
            if let Ok(n) = name[ix + 1..].parse::<u32>() {
                *best = (*best).max(n);
            }
        }
    }
    fn go(f: &Formula, best: &mut u32) {
        match f {
            Formula::Var { name, .. } => of_name(name, best),
            Formula::Mu { name, body, .. } | Formula::Nu { name, body } => {
                of_name(name, best);
                go(body, best);
            }
            Formula::Not(g) | Formula::Dia(_, g) | Formula::BoxMod(_, g) | Formula::DiaReg(_, g) => {
                go(g, best)
            }
            Formula::Or(a, b) | Formula::And(a, b) => {
                go(a, best);
                go(b, best);
            }
            Formula::False | Formula::True | Formula::Delta(_) => {}
        }
    }
    let mut best = 0;
    go(f, &mut best);
    best
}

/// Renames binders so all bound names are pairwise distinct, and collects
/// free variables.
fn uniquify(f: &Formula) -> Result<Formula, MucalcError> {
    fn go(
        f: &Formula,
        scope: &mut Vec<(String, String)>,
        used: &mut BTreeSet<String>,
        counter: &mut u32,
    ) -> Result<Formula, MucalcError> {
        Ok(match f {
            Formula::Var { name, marked, .. } => {
                let bound = scope.iter().rev().find(|(orig, _)| orig == name);
                match bound {
                    Some((_, fresh)) => Formula::Var {
                        name: fresh.clone(),
                        block: None,
                        marked: *marked,
                    },
                    None => return Err(MucalcError::FreeVariable { name: name.clone() }),
                }
            }
            Formula::Mu { name, body, .. } | Formula::Nu { name, body } => {
                let fresh = if used.insert(name.clone()) {
                    name.clone()
                } else {
                    loop {
                        *counter += 1;
                        let cand = format!("{name}#{counter}");
                        if used.insert(cand.clone()) {
                            break cand;
                        }
                    }
                };
                scope.push((name.clone(), fresh.clone()));
                let body = go(body, scope, used, counter)?;
                scope.pop();
                match f {
                    Formula::Mu { marked, .. } => Formula::Mu {
                        name: fresh,
                        block: None,
                        marked: *marked,
                        body: Box::new(body),
                    },
                    _ => Formula::Nu {
                        name: fresh,
                        body: Box::new(body),
                    },
                }
            }
            Formula::Not(g) => Formula::not(go(g, scope, used, counter)?),
            Formula::Or(a, b) => Formula::or(go(a, scope, used, counter)?, go(b, scope, used, counter)?),
            Formula::And(a, b) => {
                Formula::and(go(a, scope, used, counter)?, go(b, scope, used, counter)?)
            }
            Formula::Dia(a, g) => Formula::dia(a.clone(), go(g, scope, used, counter)?),
            Formula::BoxMod(a, g) => Formula::boxm(a.clone(), go(g, scope, used, counter)?),
            Formula::DiaReg(r, g) => {
                Formula::DiaReg(r.clone(), Box::new(go(g, scope, used, counter)?))
            }
            Formula::False => Formula::False,
            Formula::True => Formula::True,
            Formula::Delta(r) => Formula::Delta(r.clone()),
        })
    }
    let mut counter = max_fresh_counter(f);
    go(f, &mut Vec::new(), &mut BTreeSet::new(), &mut counter)
}

/// Checks that every variable occurrence sits under an even number of
/// negations relative to its binder.
fn check_monotonic(f: &Formula) -> Result<(), MucalcError> {
    fn go(
        f: &Formula,
        scope: &mut Vec<(String, bool)>,
        even: bool,
    ) -> Result<(), MucalcError> {
        match f {
            Formula::Var { name, .. } => {
                if let Some((_, at_binder)) = scope.iter().rev().find(|(n, _)| n == name) {
                    if *at_binder != even {
                        return Err(MucalcError::NonMonotonic { name: name.clone() });
                    }
                }
                Ok(())
            }
            Formula::Not(g) => go(g, scope, !even),
            Formula::Or(a, b) | Formula::And(a, b) => {
                go(a, scope, even)?;
                go(b, scope, even)
            }
            Formula::Dia(_, g) | Formula::BoxMod(_, g) | Formula::DiaReg(_, g) => {
                go(g, scope, even)
            }
            Formula::Mu { name, body, .. } | Formula::Nu { name, body } => {
                scope.push((name.clone(), even));
                go(body, scope, even)?;
                scope.pop();
                Ok(())
            }
            Formula::False | Formula::True | Formula::Delta(_) => Ok(()),
        }
    }
    go(f, &mut Vec::new(), true)
}

/// Parses the concrete syntax; the result is closed, monotonic, and has
/// pairwise distinct bound names.
pub fn parse_formula(text: &str) -> Result<Formula, MucalcError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let f = parser.parse_or()?;
    if parser.peek().is_some() {
        return parser.fail("trailing input after the formula");
    }
    let f = uniquify(&f)?;
    check_monotonic(&f)?;
    Ok(f)
}

// ---------------------------------------------------------------------------
// Action resolution.

fn matching_labels(a: &ActionFormula, alphabet: &BTreeSet<Label>) -> Vec<Label> {
    alphabet.iter().filter(|l| a.matches(l)).cloned().collect()
}

/// ε/∅-normal form of a regular expression whose payloads never accept the
/// empty word and mention only single-label atoms.
enum NormReg {
    Empty,
    Eps,
    Plain(RegularFormula),
    EpsOr(RegularFormula),
}

fn choice_chain(mut labels: Vec<Label>) -> RegularFormula {
    let last = labels.pop().expect("non-empty label list");
    let mut r = RegularFormula::Atom(ActionFormula::One(last));
    while let Some(l) = labels.pop() {
        r = RegularFormula::Choice(
            Box::new(RegularFormula::Atom(ActionFormula::One(l))),
            Box::new(r),
        );
    }
    r
}

fn normalize_regex(r: &RegularFormula, alphabet: &BTreeSet<Label>) -> NormReg {
    use NormReg::*;
    use RegularFormula::{Concat, Choice, Star};
    match r {
        RegularFormula::Atom(a) => {
            let labels = matching_labels(a, alphabet);
            if labels.is_empty() {
                Empty
            } else {
                Plain(choice_chain(labels))
            }
        }
        Concat(a, b) => match (normalize_regex(a, alphabet), normalize_regex(b, alphabet)) {
            (Empty, _) | (_, Empty) => Empty,
            (Eps, x) | (x, Eps) => x,
            (Plain(p), Plain(q)) => Plain(Concat(Box::new(p), Box::new(q))),
            (Plain(p), EpsOr(q)) => Plain(Choice(
                Box::new(p.clone()),
                Box::new(Concat(Box::new(p), Box::new(q))),
            )),
            (EpsOr(p), Plain(q)) => Plain(Choice(
                Box::new(q.clone()),
                Box::new(Concat(Box::new(p), Box::new(q))),
            )),
            (EpsOr(p), EpsOr(q)) => EpsOr(Choice(
                Box::new(Choice(Box::new(p.clone()), Box::new(q.clone()))),
                Box::new(Concat(Box::new(p), Box::new(q))),
            )),
        },
        Choice(a, b) => match (normalize_regex(a, alphabet), normalize_regex(b, alphabet)) {
            (Empty, x) | (x, Empty) => x,
            (Eps, Eps) => Eps,
            (Eps, Plain(p)) | (Plain(p), Eps) => EpsOr(p),
            (Eps, EpsOr(p)) | (EpsOr(p), Eps) => EpsOr(p),
            (Plain(p), Plain(q)) => Plain(Choice(Box::new(p), Box::new(q))),
            (Plain(p), EpsOr(q)) | (EpsOr(p), Plain(q)) => {
                EpsOr(Choice(Box::new(p), Box::new(q)))
            }
            (EpsOr(p), EpsOr(q)) => EpsOr(Choice(Box::new(p), Box::new(q))),
        },
        Star(a) => match normalize_regex(a, alphabet) {
            Empty | Eps => Eps,
            Plain(p) | EpsOr(p) => EpsOr(Concat(
                Box::new(p.clone()),
                Box::new(Star(Box::new(p))),
            )),
        },
    }
}

fn regex_has_empty_atom(r: &RegularFormula, alphabet: &BTreeSet<Label>) -> bool {
    match r {
        RegularFormula::Atom(a) => matching_labels(a, alphabet).is_empty(),
        RegularFormula::Concat(a, b) | RegularFormula::Choice(a, b) => {
            regex_has_empty_atom(a, alphabet) || regex_has_empty_atom(b, alphabet)
        }
        RegularFormula::Star(a) => regex_has_empty_atom(a, alphabet),
    }
}

/// Expands atoms into choices of single labels, keeping the surrounding
/// structure. All atoms must have a non-empty expansion.
fn expand_atoms(r: &RegularFormula, alphabet: &BTreeSet<Label>) -> RegularFormula {
    match r {
        RegularFormula::Atom(a) => choice_chain(matching_labels(a, alphabet)),
        RegularFormula::Concat(a, b) => RegularFormula::Concat(
            Box::new(expand_atoms(a, alphabet)),
            Box::new(expand_atoms(b, alphabet)),
        ),
        RegularFormula::Choice(a, b) => RegularFormula::Choice(
            Box::new(expand_atoms(a, alphabet)),
            Box::new(expand_atoms(b, alphabet)),
        ),
        RegularFormula::Star(a) => RegularFormula::Star(Box::new(expand_atoms(a, alphabet))),
    }
}

/// Replaces every action set by the labels of `alphabet` it matches:
/// diamonds become disjunctions, boxes conjunctions, regex atoms choices.
/// Modalities with an empty expansion collapse to their constant value;
/// regular expressions that can match nothing or only the empty word are
/// resolved algebraically.
pub fn resolve_actions(f: &Formula, alphabet: &BTreeSet<Label>) -> Formula {
    match f {
        Formula::False | Formula::True | Formula::Var { .. } => f.clone(),
        Formula::Not(g) => Formula::not(resolve_actions(g, alphabet)),
        Formula::Or(a, b) => Formula::or(resolve_actions(a, alphabet), resolve_actions(b, alphabet)),
        Formula::And(a, b) => {
            Formula::and(resolve_actions(a, alphabet), resolve_actions(b, alphabet))
        }
        Formula::Dia(a, g) => {
            let body = resolve_actions(g, alphabet);
            let labels = matching_labels(a, alphabet);
            let mut out = Formula::False;
            for l in labels.into_iter().rev() {
                let d = Formula::dia(ActionFormula::One(l), body.clone());
                out = if matches!(out, Formula::False) {
                    d
                } else {
                    Formula::or(d, out)
                };
            }
            out
        }
        Formula::BoxMod(a, g) => {
            let body = resolve_actions(g, alphabet);
            let labels = matching_labels(a, alphabet);
            let mut out = Formula::True;
            for l in labels.into_iter().rev() {
                let b = Formula::boxm(ActionFormula::One(l), body.clone());
                out = if matches!(out, Formula::True) {
                    b
                } else {
                    Formula::and(b, out)
                };
            }
            out
        }
        Formula::Mu { name, marked, body, block } => Formula::Mu {
            name: name.clone(),
            block: *block,
            marked: *marked,
            body: Box::new(resolve_actions(body, alphabet)),
        },
        Formula::Nu { name, body } => Formula::Nu {
            name: name.clone(),
            body: Box::new(resolve_actions(body, alphabet)),
        },
        Formula::DiaReg(r, g) => {
            let body = resolve_actions(g, alphabet);
            if !regex_has_empty_atom(r, alphabet) {
                return Formula::DiaReg(expand_atoms(r, alphabet), Box::new(body));
            }
            match normalize_regex(r, alphabet) {
                NormReg::Empty => Formula::False,
                NormReg::Eps => body,
                NormReg::EpsOr(p) => {
                    Formula::or(body.clone(), Formula::DiaReg(p, Box::new(body)))
                }
                NormReg::Plain(p) => Formula::DiaReg(p, Box::new(body)),
            }
        }
        Formula::Delta(r) => {
            if !regex_has_empty_atom(r, alphabet) {
                return Formula::Delta(expand_atoms(r, alphabet));
            }
            match normalize_regex(r, alphabet) {
                NormReg::Empty => Formula::False,
                // An empty-word loop can repeat forever in place.
                NormReg::Eps | NormReg::EpsOr(_) => Formula::True,
                NormReg::Plain(p) => Formula::Delta(p),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Regular-modality expansion.

/// ⟨R⟩φ by the standard identities: concatenation nests modalities, choice
/// splits into a disjunction, star introduces a least fixpoint.
fn expand_dia(r: &RegularFormula, body: Formula, counter: &mut u32) -> Formula {
    match r {
        RegularFormula::Atom(a) => Formula::dia(a.clone(), body),
        RegularFormula::Concat(r1, r2) => {
            let inner = expand_dia(r2, body, counter);
            expand_dia(r1, inner, counter)
        }
        RegularFormula::Choice(r1, r2) => {
            let left = expand_dia(r1, body.clone(), counter);
            let right = expand_dia(r2, body, counter);
            Formula::or(left, right)
        }
        RegularFormula::Star(r1) => {
            *counter += 1;
            let y = format!("Y#{counter}");
            let rec = expand_dia(r1, Formula::var(&y), counter);
            Formula::mu(&y, Formula::or(body, rec))
        }
    }
}

/// Eliminates regular modalities and the infinite-looping operator. The
/// looping operator becomes a greatest fixpoint whose recursion variable is
/// marked; the mark is the residue that later drives cycle detection.
pub fn expand_regular(f: &Formula) -> Formula {
    fn go(f: &Formula, counter: &mut u32) -> Formula {
        match f {
            Formula::False | Formula::True | Formula::Var { .. } => f.clone(),
            Formula::Not(g) => Formula::not(go(g, counter)),
            Formula::Or(a, b) => Formula::or(go(a, counter), go(b, counter)),
            Formula::And(a, b) => Formula::and(go(a, counter), go(b, counter)),
            Formula::Dia(a, g) => Formula::dia(a.clone(), go(g, counter)),
            Formula::BoxMod(a, g) => Formula::boxm(a.clone(), go(g, counter)),
            Formula::Mu { name, marked, body, block } => Formula::Mu {
                name: name.clone(),
                block: *block,
                marked: *marked,
                body: Box::new(go(body, counter)),
            },
            Formula::Nu { name, body } => Formula::Nu {
                name: name.clone(),
                body: Box::new(go(body, counter)),
            },
            Formula::DiaReg(r, g) => {
                let body = go(g, counter);
                expand_dia(r, body, counter)
            }
            Formula::Delta(r) => {
                *counter += 1;
                let x = format!("X#{counter}");
                let body = expand_dia(
                    r,
                    Formula::Var {
                        name: x.clone(),
                        block: None,
                        marked: true,
                    },
                    counter,
                );
                Formula::Nu {
                    name: x,
                    body: Box::new(body),
                }
            }
        }
    }
    let mut counter = max_fresh_counter(f);
    go(f, &mut counter)
}

// ---------------------------------------------------------------------------
// Disjunctive form.

/// True when the formula uses only the disjunctive-form constructors:
/// falsity, disjunction, negation, single-label diamonds, least fixpoints,
/// and variables.
pub fn is_disjunctive(f: &Formula) -> bool {
    match f {
        Formula::False | Formula::Var { .. } => true,
        Formula::Not(g) => is_disjunctive(g),
        Formula::Or(a, b) => is_disjunctive(a) && is_disjunctive(b),
        Formula::Dia(ActionFormula::One(_), g) => is_disjunctive(g),
        Formula::Mu { body, .. } => is_disjunctive(body),
        _ => false,
    }
}

fn body_marks_var(f: &Formula, name: &str) -> bool {
    match f {
        Formula::Var { name: n, marked, .. } => *marked && n == name,
        Formula::Not(g) | Formula::Dia(_, g) | Formula::BoxMod(_, g) | Formula::DiaReg(_, g) => {
            body_marks_var(g, name)
        }
        Formula::Or(a, b) | Formula::And(a, b) => {
            body_marks_var(a, name) || body_marks_var(b, name)
        }
        Formula::Mu { body, .. } | Formula::Nu { body, .. } => body_marks_var(body, name),
        Formula::False | Formula::True | Formula::Delta(_) => false,
    }
}

/// Rewrites into disjunctive form using the dualities, collapsing double
/// negations eagerly. A greatest fixpoint whose variable is marked is kept
/// as a least fixpoint with the mark transferred to the binder instead of
/// being dualized; the cycle rules of the evaluation stage restore its
/// greatest-fixpoint meaning.
pub fn to_disjunctive(f: &Formula) -> Formula {
    // `scope` records, per bound variable, whether occurrences must be
    // inverted (the ¬X substitution of the duality).
    fn conv(f: &Formula, positive: bool, scope: &mut Vec<(String, bool)>) -> Formula {
        match f {
            Formula::False => {
                if positive {
                    Formula::False
                } else {
                    neg(Formula::False)
                }
            }
            Formula::True => {
                if positive {
                    neg(Formula::False)
                } else {
                    Formula::False
                }
            }
            Formula::Var { name, marked, .. } => {
                let inverted = scope
                    .iter()
                    .rev()
                    .find(|(n, _)| n == name)
                    .map(|(_, inv)| *inv)
                    .expect("closed formula");
                let flips = usize::from(!positive) + usize::from(inverted);
                let v = Formula::Var {
                    name: name.clone(),
                    block: None,
                    marked: *marked,
                };
                if flips % 2 == 0 {
                    v
                } else {
                    neg(v)
                }
            }
            Formula::Not(g) => conv(g, !positive, scope),
            Formula::Or(a, b) => {
                let out = Formula::or(conv(a, true, scope), conv(b, true, scope));
                if positive {
                    out
                } else {
                    neg(out)
                }
            }
            Formula::And(a, b) => {
                let out = Formula::or(conv(a, false, scope), conv(b, false, scope));
                if positive {
                    neg(out)
                } else {
                    out
                }
            }
            Formula::Dia(a, g) => {
                let out = Formula::dia(a.clone(), conv(g, true, scope));
                if positive {
                    out
                } else {
                    neg(out)
                }
            }
            Formula::BoxMod(a, g) => {
                let out = Formula::dia(a.clone(), conv(g, false, scope));
                if positive {
                    neg(out)
                } else {
                    out
                }
            }
            Formula::Mu { name, marked, body, .. } => {
                scope.push((name.clone(), false));
                let body = conv(body, true, scope);
                scope.pop();
                let out = Formula::Mu {
                    name: name.clone(),
                    block: None,
                    marked: *marked,
                    body: Box::new(body),
                };
                if positive {
                    out
                } else {
                    neg(out)
                }
            }
            Formula::Nu { name, body } => {
                if body_marks_var(body, name) {
                    // Keep the fixpoint un-dualized; the mark records that
                    // its real meaning is the greatest fixpoint.
                    scope.push((name.clone(), false));
                    let body = conv(body, true, scope);
                    scope.pop();
                    let out = Formula::Mu {
                        name: name.clone(),
                        block: None,
                        marked: true,
                        body: Box::new(body),
                    };
                    return if positive { out } else { neg(out) };
                }
                scope.push((name.clone(), true));
                let body = conv(body, false, scope);
                scope.pop();
                let out = Formula::Mu {
                    name: name.clone(),
                    block: None,
                    marked: false,
                    body: Box::new(body),
                };
                if positive {
                    neg(out)
                } else {
                    out
                }
            }
            Formula::DiaReg(..) | Formula::Delta(_) => {
                panic!("regular modalities must be expanded before disjunctive conversion")
            }
        }
    }
    let out = conv(f, true, &mut Vec::new());
    debug_assert!(is_disjunctive(&out));
    out
}

// ---------------------------------------------------------------------------
// Block labelling.

/// Assigns block numbers: a binder keeps the current block when the
/// negation flag is positive and opens block k+1 otherwise; the flag resets
/// inside the binder body and flips at negations. Every group of binders
/// reached from a marked binder is then renumbered to its own fresh block,
/// keeping the parity so unmarked fixpoint edges still satisfy the parity
/// condition.
pub fn block_label(f: &Formula) -> Formula {
    fn go(f: &Formula, flag: bool, k: u32, scope: &mut Vec<(String, u32)>) -> Formula {
        match f {
            Formula::False => Formula::False,
            Formula::Var { name, marked, .. } => {
                let block = scope
                    .iter()
                    .rev()
                    .find(|(n, _)| n == name)
                    .map(|(_, b)| *b)
                    .expect("closed formula");
                Formula::Var {
                    name: name.clone(),
                    block: Some(block),
                    marked: *marked,
                }
            }
            Formula::Not(g) => Formula::not(go(g, !flag, k, scope)),
            Formula::Or(a, b) => Formula::or(go(a, flag, k, scope), go(b, flag, k, scope)),
            Formula::Dia(a, g) => Formula::dia(a.clone(), go(g, flag, k, scope)),
            Formula::Mu { name, marked, body, .. } => {
                let block = if flag { k } else { k + 1 };
                scope.push((name.clone(), block));
                let body = go(body, true, block, scope);
                scope.pop();
                Formula::Mu {
                    name: name.clone(),
                    block: Some(block),
                    marked: *marked,
                    body: Box::new(body),
                }
            }
            other => panic!("block labelling needs disjunctive form, found {other:?}"),
        }
    }

    fn max_block(f: &Formula, best: &mut u32) {
        match f {
            Formula::Mu { block, body, .. } => {
                *best = (*best).max(block.unwrap_or(0));
                max_block(body, best);
            }
            Formula::Not(g) | Formula::Dia(_, g) => max_block(g, best),
            Formula::Or(a, b) => {
                max_block(a, best);
                max_block(b, best);
            }
            _ => {}
        }
    }

    fn set_blocks(f: &mut Formula, block: u32) {
        match f {
            Formula::Mu { block: b, body, .. } => {
                *b = Some(block);
                set_blocks(body, block);
            }
            Formula::Var { block: b, .. } => *b = Some(block),
            Formula::Not(g) | Formula::Dia(_, g) => set_blocks(g, block),
            Formula::Or(a, b) => {
                set_blocks(a, block);
                set_blocks(b, block);
            }
            Formula::False => {}
            other => panic!("disjunctive form expected, found {other:?}"),
        }
    }

    fn renumber_marked(f: &mut Formula, next: &mut u32) {
        match f {
            Formula::Mu { marked, block, body, .. } => {
                if *marked {
                    let old = block.expect("labelled");
                    if *next % 2 != old % 2 {
                        *next += 1;
                    }
                    let fresh = *next;
                    *next += 1;
                    *block = Some(fresh);
                    // The body of a looping-operator fixpoint is closed and
                    // negation-free, so all its binders shared the old
                    // block; move the whole group together.
                    set_blocks(body, fresh);
                } else {
                    renumber_marked(body, next);
                }
            }
            Formula::Not(g) | Formula::Dia(_, g) => renumber_marked(g, next),
            Formula::Or(a, b) => {
                renumber_marked(a, next);
                renumber_marked(b, next);
            }
            _ => {}
        }
    }

    let mut labelled = go(f, true, 0, &mut Vec::new());
    let mut best = 0;
    max_block(&labelled, &mut best);
    let mut next = best + 1;
    renumber_marked(&mut labelled, &mut next);
    labelled
}

/// Checks the three well-formedness conditions on a labelled formula:
/// occurrences carry their binder's block, binders sharing a block have the
/// same sign (even blocks positive), and free variables of a binder body
/// have a block no larger than the binder's.
pub fn well_formed_blocks(f: &Formula) -> Result<(), String> {
    fn go(f: &Formula, even: bool, scope: &mut Vec<(String, u32)>) -> Result<(), String> {
        match f {
            Formula::False => Ok(()),
            Formula::Var { name, block, .. } => {
                let block = block.ok_or_else(|| format!("variable {name} lacks a block"))?;
                let bound = scope
                    .iter()
                    .rev()
                    .find(|(n, _)| n == name)
                    .map(|(_, b)| *b)
                    .ok_or_else(|| format!("unbound variable {name}"))?;
                if bound != block {
                    return Err(format!(
                        "variable {name} has block {block} but its binder has {bound}"
                    ));
                }
                Ok(())
            }
            Formula::Not(g) => go(g, !even, scope),
            Formula::Or(a, b) => {
                go(a, even, scope)?;
                go(b, even, scope)
            }
            Formula::Dia(_, g) => go(g, even, scope),
            Formula::Mu { name, block, body, .. } => {
                let block = block.ok_or_else(|| format!("binder {name} lacks a block"))?;
                // Block parity encodes the sign: even blocks sit under an
                // even number of negations. Two binders sharing a block
                // therefore share a sign. Marked groups satisfy this too:
                // their bodies are negation-free and the fresh group block
                // is chosen with the original parity.
                if (block % 2 == 0) != even {
                    return Err(format!(
                        "block {block} parity disagrees with its negation depth"
                    ));
                }
                for (outer, b) in scope.iter() {
                    // Outer binders visible here may occur free in this
                    // body; they must not exceed this binder's block.
                    if *b > block {
                        return Err(format!(
                            "binder {name} (block {block}) can capture {outer} of larger block {b}"
                        ));
                    }
                }
                scope.push((name.clone(), block));
                let r = go(body, even, scope);
                scope.pop();
                r
            }
            other => Err(format!("not in disjunctive form: {other:?}")),
        }
    }
    go(f, true, &mut Vec::new())
}

/// True when, for every binder, the variables free in its body all carry
/// the binder's own block.
pub fn is_alternation_free(f: &Formula) -> bool {
    fn go(f: &Formula, scope: &mut Vec<(String, u32)>) -> bool {
        match f {
            Formula::False => true,
            Formula::Var { name, .. } => {
                let ix = scope
                    .iter()
                    .rposition(|(n, _)| n == name)
                    .expect("closed formula");
                let block = scope[ix].1;
                scope[ix..].iter().all(|(_, b)| *b == block)
            }
            Formula::Not(g) | Formula::Dia(_, g) => go(g, scope),
            Formula::Or(a, b) => go(a, scope) && go(b, scope),
            Formula::Mu { name, block, body, .. } => {
                scope.push((name.clone(), block.expect("labelled")));
                let r = go(body, scope);
                scope.pop();
                r
            }
            other => panic!("alternation check needs disjunctive form, found {other:?}"),
        }
    }
    go(f, &mut Vec::new())
}

/// Randomised semantic equality: both formulas are evaluated on
/// pseudo-random LTSs over their mentioned labels, with a fixed seed.
pub fn semantically_equal(f1: &Formula, f2: &Formula, samples: usize) -> bool {
    use rand::SeedableRng;
    let mut labels: Vec<Label> = f1.labels().union(&f2.labels()).cloned().collect();
    if labels.is_empty() {
        labels.push(Label::new("a"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x0f0e_d15c);
    for _ in 0..samples {
        let lts = crate::randgen::random_lts(&mut rng, &labels, 6);
        for s in 0..lts.state_count() {
            if crate::eval::holds_at(&lts, s, f1) != crate::eval::holds_at(&lts, s, f2) {
                return false;
            }
        }
    }
    true
}
