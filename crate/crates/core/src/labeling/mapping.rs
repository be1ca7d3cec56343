//! Ordered, first-match mapping from success profiles to complexity levels.
//!
//! Each entry carries a `when` expression over the success counts:
//!
//! ```text
//! expr := conj ( ("||" | "or") conj )*
//! conj := unary ( ("&&" | "and") unary )*
//! unary := ("!" | "not") unary | "(" expr ")" | "true" | "otherwise" | cmp
//! cmp  := sum ("==" | "!=" | ">=" | "<=" | ">" | "<") sum
//! sum  := atom ( ("+" | "-") atom )*
//! atom := X<k> | M | <integer>
//! ```
//!
//! `X1` is the success count of the smallest tier and `M` the trial count.
//! Earlier entries take precedence, so later conditions implicitly assume
//! every earlier one failed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ComplexityLabel, LabelError, Scheme, SuccessProfile};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MappingError {
    #[error("entry {entry}: cannot parse {source_text:?}: {message}")]
    Parse {
        entry: usize,
        source_text: String,
        message: String,
    },
    #[error("entry {entry}: X{index} is outside 1..={tiers}")]
    TierOutOfRange { entry: usize, index: usize, tiers: usize },
    #[error("entry {entry}: level {level} is outside 1..=5")]
    LevelOutOfRange { entry: usize, level: u8 },
    #[error("mapping table has no entries")]
    Empty,
    #[error("last entry {when:?} is not a catch-all (fails on counts {counts:?})")]
    NoCatchAll { when: String, counts: Vec<u32> },
    #[error("tier count must be >= 1 and trial count M >= 1")]
    BadShape,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub when: String,
    pub level: u8,
}

/// Serialized form of a table: `{tiers, trials, entries: [{when, level}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingSpec {
    pub tiers: usize,
    pub trials: u32,
    pub entries: Vec<MappingEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cmp {
    Eq,
    Ne,
    Ge,
    Le,
    Gt,
    Lt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Term {
    Count(usize),
    Trials,
    Const(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Predicate {
    True,
    Not(Box<Predicate>),
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
    Compare(Vec<(i64, Term)>, Cmp, Vec<(i64, Term)>),
}

impl Predicate {
    fn eval(&self, counts: &[u32], trials: u32) -> bool {
        match self {
            Predicate::True => true,
            Predicate::Not(p) => !p.eval(counts, trials),
            Predicate::And(ps) => ps.iter().all(|p| p.eval(counts, trials)),
            Predicate::Or(ps) => ps.iter().any(|p| p.eval(counts, trials)),
            Predicate::Compare(lhs, op, rhs) => {
                let sum = |side: &[(i64, Term)]| -> i64 {
                    side.iter()
                        .map(|(sign, t)| {
                            sign * match t {
                                Term::Count(k) => counts[*k] as i64,
                                Term::Trials => trials as i64,
                                Term::Const(c) => *c,
                            }
                        })
                        .sum()
                };
                let (l, r) = (sum(lhs), sum(rhs));
                match op {
                    Cmp::Eq => l == r,
                    Cmp::Ne => l != r,
                    Cmp::Ge => l >= r,
                    Cmp::Le => l <= r,
                    Cmp::Gt => l > r,
                    Cmp::Lt => l < r,
                }
            }
        }
    }

    fn max_tier(&self) -> usize {
        let side_max = |s: &[(i64, Term)]| {
            s.iter()
                .filter_map(|(_, t)| match t {
                    Term::Count(k) => Some(k + 1),
                    _ => None,
                })
                .max()
                .unwrap_or(0)
        };
        match self {
            Predicate::True => 0,
            Predicate::Not(p) => p.max_tier(),
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().map(Predicate::max_tier).max().unwrap_or(0),
            Predicate::Compare(l, _, r) => side_max(l).max(side_max(r)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Count(usize),
    Trials,
    Int(i64),
    Word(String),
    Op(&'static str),
}

fn tokenize(src: &str) -> Result<Vec<Token>, String> {
    const OPS: &[&str] = &["||", "&&", "==", "!=", ">=", "<=", ">", "<", "+", "-", "!", "(", ")"];
    let mut out = Vec::new();
    let b = src.as_bytes();
    let mut i = 0;
    'outer: while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        for op in OPS {
            if src[i..].starts_with(op) {
                out.push(Token::Op(op));
                i += op.len();
                continue 'outer;
            }
        }
        if c.is_ascii_digit() {
            let len = b[i..].iter().take_while(|c| c.is_ascii_digit()).count();
            let n = src[i..i + len].parse().map_err(|e| format!("bad integer: {e}"))?;
            out.push(Token::Int(n));
            i += len;
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let len = b[i..]
                .iter()
                .take_while(|c| c.is_ascii_alphanumeric() || **c == b'_')
                .count();
            let word = &src[i..i + len];
            i += len;
            let tok = match word {
                "M" => Token::Trials,
                w if (w.starts_with('X') || w.starts_with('x'))
                    && w.len() > 1
                    && w[1..].bytes().all(|c| c.is_ascii_digit()) =>
                {
                    let k: usize = w[1..].parse().map_err(|e| format!("bad tier index: {e}"))?;
                    if k == 0 {
                        return Err("tier indices start at X1".to_string());
                    }
                    Token::Count(k - 1)
                }
                w => Token::Word(w.to_string()),
            };
            out.push(tok);
            continue;
        }
        return Err(format!("unexpected character {:?}", c as char));
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(Token::Op(o)) if *o == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, word: &str) -> bool {
        if matches!(self.peek(), Some(Token::Word(w)) if w == word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Predicate, String> {
        let mut parts = vec![self.conj()?];
        while self.eat_op("||") || self.eat_word("or") {
            parts.push(self.conj()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Predicate::Or(parts)
        })
    }

    fn conj(&mut self) -> Result<Predicate, String> {
        let mut parts = vec![self.unary()?];
        while self.eat_op("&&") || self.eat_word("and") {
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Predicate::And(parts)
        })
    }

    fn unary(&mut self) -> Result<Predicate, String> {
        if self.eat_op("!") || self.eat_word("not") {
            return Ok(Predicate::Not(Box::new(self.unary()?)));
        }
        if self.eat_op("(") {
            let inner = self.expr()?;
            if !self.eat_op(")") {
                return Err("missing ')'".to_string());
            }
            return Ok(inner);
        }
        if self.eat_word("true") || self.eat_word("otherwise") {
            return Ok(Predicate::True);
        }
        let lhs = self.sum()?;
        let op = match self.peek() {
            Some(Token::Op("==")) => Cmp::Eq,
            Some(Token::Op("!=")) => Cmp::Ne,
            Some(Token::Op(">=")) => Cmp::Ge,
            Some(Token::Op("<=")) => Cmp::Le,
            Some(Token::Op(">")) => Cmp::Gt,
            Some(Token::Op("<")) => Cmp::Lt,
            other => return Err(format!("expected comparison operator, found {other:?}")),
        };
        self.pos += 1;
        let rhs = self.sum()?;
        Ok(Predicate::Compare(lhs, op, rhs))
    }

    fn sum(&mut self) -> Result<Vec<(i64, Term)>, String> {
        let mut terms = vec![(1, self.atom()?)];
        loop {
            if self.eat_op("+") {
                terms.push((1, self.atom()?));
            } else if self.eat_op("-") {
                terms.push((-1, self.atom()?));
            } else {
                return Ok(terms);
            }
        }
    }

    fn atom(&mut self) -> Result<Term, String> {
        let tok = self.peek().cloned();
        self.pos += 1;
        match tok {
            Some(Token::Count(k)) => Ok(Term::Count(k)),
            Some(Token::Trials) => Ok(Term::Trials),
            Some(Token::Int(n)) => Ok(Term::Const(n)),
            other => Err(format!("expected X<k>, M or integer, found {other:?}")),
        }
    }
}

fn parse(src: &str) -> Result<Predicate, String> {
    let mut p = Parser {
        tokens: tokenize(src)?,
        pos: 0,
    };
    let pred = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(format!("trailing input at token {}", p.pos + 1));
    }
    Ok(pred)
}

/// Largest profile space enumerated when checking the catch-all.
const ENUMERATION_LIMIT: u64 = 1 << 20;

#[derive(Debug, Clone)]
pub struct MappingTable {
    spec: MappingSpec,
    predicates: Vec<Predicate>,
}

impl PartialEq for MappingTable {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl MappingTable {
    /// Compiles and validates a table for profiles with `tiers` counts out of
    /// `trials`. The last entry must hold for every profile.
    pub fn new(spec: MappingSpec) -> Result<Self, MappingError> {
        if spec.tiers == 0 || spec.trials == 0 {
            return Err(MappingError::BadShape);
        }
        if spec.entries.is_empty() {
            return Err(MappingError::Empty);
        }
        let mut predicates = Vec::with_capacity(spec.entries.len());
        for (i, e) in spec.entries.iter().enumerate() {
            let entry = i + 1;
            let pred = parse(&e.when).map_err(|message| MappingError::Parse {
                entry,
                source_text: e.when.clone(),
                message,
            })?;
            let max = pred.max_tier();
            if max > spec.tiers {
                return Err(MappingError::TierOutOfRange {
                    entry,
                    index: max,
                    tiers: spec.tiers,
                });
            }
            if !Scheme::FiveLevel.contains(e.level) {
                return Err(MappingError::LevelOutOfRange { entry, level: e.level });
            }
            predicates.push(pred);
        }
        let table = MappingTable { spec, predicates };
        table.check_catch_all()?;
        Ok(table)
    }

    fn check_catch_all(&self) -> Result<(), MappingError> {
        let last = self.predicates.last().expect("non-empty");
        let when = self.spec.entries.last().expect("non-empty").when.clone();
        if *last == Predicate::True {
            return Ok(());
        }
        let space = (self.spec.trials as u64 + 1).checked_pow(self.spec.tiers as u32);
        match space {
            Some(n) if n <= ENUMERATION_LIMIT => {
                for counts in all_profiles(self.spec.tiers, self.spec.trials) {
                    if !last.eval(&counts, self.spec.trials) {
                        return Err(MappingError::NoCatchAll { when, counts });
                    }
                }
                Ok(())
            }
            _ => Err(MappingError::NoCatchAll {
                when,
                counts: Vec::new(),
            }),
        }
    }

    /// The ordering mapping for three tiers and five trials:
    /// level 1 when the small tier solved 5/5 or small plus medium reached 7;
    /// level 2 when medium solved 5/5; level 3 when large solved 5/5;
    /// level 4 when medium or large solved at least twice; level 5 otherwise.
    pub fn default_five_trial() -> Self {
        let entries = [
            ("X1 == 5 || X1 + X2 >= 7", 1),
            ("X2 == 5", 2),
            ("X3 == 5", 3),
            ("X2 >= 2 || X3 >= 2", 4),
            ("true", 5),
        ]
        .into_iter()
        .map(|(when, level)| MappingEntry {
            when: when.to_string(),
            level,
        })
        .collect();
        MappingTable::new(MappingSpec {
            tiers: 3,
            trials: 5,
            entries,
        })
        .expect("built-in table is valid")
    }

    pub fn spec(&self) -> &MappingSpec {
        &self.spec
    }

    pub fn tiers(&self) -> usize {
        self.spec.tiers
    }

    pub fn trials(&self) -> u32 {
        self.spec.trials
    }

    /// First matching entry's level for raw counts.
    pub fn level_for(&self, counts: &[u32]) -> u8 {
        for (pred, entry) in self.predicates.iter().zip(&self.spec.entries) {
            if pred.eval(counts, self.spec.trials) {
                return entry.level;
            }
        }
        unreachable!("catch-all verified at construction")
    }

    pub fn label(&self, profile: &SuccessProfile) -> Result<ComplexityLabel, LabelError> {
        if profile.counts.len() != self.spec.tiers || profile.m != self.spec.trials {
            return Err(LabelError::ShapeMismatch {
                task_id: profile.task_id.clone(),
                expected: (self.spec.tiers, self.spec.trials),
                found: (profile.counts.len(), profile.m),
            });
        }
        Ok(ComplexityLabel {
            level: self.level_for(&profile.counts),
            scheme: Scheme::FiveLevel,
        })
    }
}

/// Every count vector in {0..=trials}^tiers, in lexicographic order.
pub fn all_profiles(tiers: usize, trials: u32) -> impl Iterator<Item = Vec<u32>> {
    let total = (trials as u64 + 1).pow(tiers as u32);
    (0..total).map(move |mut n| {
        let mut counts = vec![0; tiers];
        for slot in counts.iter_mut().rev() {
            *slot = (n % (trials as u64 + 1)) as u32;
            n /= trials as u64 + 1;
        }
        counts
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(counts: [u32; 3]) -> u8 {
        MappingTable::default_five_trial().level_for(&counts)
    }

    #[test]
    fn stated_examples() {
        assert_eq!(level([5, 0, 0]), 1);
        assert_eq!(level([3, 4, 0]), 1);
        assert_eq!(level([0, 5, 1]), 2);
        assert_eq!(level([0, 1, 5]), 3);
        assert_eq!(level([1, 2, 1]), 4);
        assert_eq!(level([1, 1, 1]), 5);
        assert_eq!(level([5, 5, 5]), 1);
        assert_eq!(level([0, 0, 0]), 5);
    }

    #[test]
    fn enumeration_order() {
        let all: Vec<_> = all_profiles(3, 5).collect();
        assert_eq!(all.len(), 216);
        assert_eq!(all[0], vec![0, 0, 0]);
        assert_eq!(all[1], vec![0, 0, 1]);
        assert_eq!(all[215], vec![5, 5, 5]);
    }

    #[test]
    fn expression_syntax() {
        let cases = [
            ("X1 + X2 - 1 >= M", vec![3, 3], true),
            ("not (X1 == 0) and X2 < 3", vec![1, 2], true),
            ("!(X1 == 0) && X2 < 3", vec![0, 2], false),
            ("X1 != X2 or 1 > 2", vec![2, 2], false),
            ("otherwise", vec![0, 0], true),
            ("X2 <= 2 && (X1 > 4 || X1 == 0)", vec![0, 1], true),
        ];
        for (src, counts, want) in cases {
            assert_eq!(parse(src).unwrap().eval(&counts, 5), want, "{src}");
        }
    }

    #[test]
    fn invalid_tables() {
        let spec = |entries: &[(&str, u8)]| MappingSpec {
            tiers: 2,
            trials: 3,
            entries: entries
                .iter()
                .map(|(w, l)| MappingEntry {
                    when: w.to_string(),
                    level: *l,
                })
                .collect(),
        };
        assert!(matches!(
            MappingTable::new(spec(&[("X1 ==", 1), ("true", 5)])),
            Err(MappingError::Parse { entry: 1, .. })
        ));
        assert!(matches!(
            MappingTable::new(spec(&[("X3 == 1", 1), ("true", 5)])),
            Err(MappingError::TierOutOfRange { index: 3, .. })
        ));
        assert!(matches!(
            MappingTable::new(spec(&[("true", 6)])),
            Err(MappingError::LevelOutOfRange { level: 6, .. })
        ));
        assert_eq!(MappingTable::new(spec(&[])), Err(MappingError::Empty));
        match MappingTable::new(spec(&[("X1 == 3", 1), ("X2 >= 1", 2)])) {
            Err(MappingError::NoCatchAll { counts, .. }) => assert_eq!(counts, vec![0, 0]),
            other => panic!("unexpected {other:?}"),
        }
        // A tautology written as a comparison is accepted after enumeration.
        assert!(MappingTable::new(spec(&[("X1 == 3", 1), ("X1 + X2 >= 0", 2)])).is_ok());
    }

    #[test]
    fn spec_round_trips_as_json() {
        let table = MappingTable::default_five_trial();
        let json = serde_json::to_string(table.spec()).unwrap();
        let back = MappingTable::new(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, table);
    }
}
