//! Knowledge bases and their deductive closure.
//!
//! A `KnowledgeBase` is a finite, consistent, ordered set of formulas; the
//! knowledge it stands for is everything those formulas entail. Closure is
//! always enumerated against a caller-supplied `QueryUniverse` — a finite
//! list of query formulas — because the full deductive closure is infinite.
//! Universes never contain tautologies: a tautology is in every closure and
//! its negation is entailed by nothing consistent, so it can only pad query
//! results (and would make every consistent edit trivially survivable).

use thiserror::Error;

use crate::entail::{entails, is_satisfiable, is_tautology};
use crate::formula::{parse, Formula, SyntaxError};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum KnowledgeError {
    #[error("knowledge base is inconsistent")]
    InconsistentKB,
    #[error("query universe is empty")]
    EmptyUniverse,
    #[error("{which} operand of the consistency relation is itself inconsistent")]
    InconsistentOperand { which: &'static str },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: SyntaxError,
    },
}

// KNOWLEDGE BASE

/// Finite consistent base, deduplicated structurally with order preserved.
/// Order is load order and determines scan order downstream (anchors and
/// witnesses are reported relative to it).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeBase {
    base: Vec<Formula>,
}

impl KnowledgeBase {
    pub fn new(formulas: impl IntoIterator<Item = Formula>) -> Result<Self, KnowledgeError> {
        let mut base: Vec<Formula> = Vec::new();
        for f in formulas {
            if !base.contains(&f) {
                base.push(f);
            }
        }
        if !is_satisfiable(&base).is_sat() {
            return Err(KnowledgeError::InconsistentKB);
        }
        Ok(KnowledgeBase { base })
    }

    /// Loads the plain-text format: one formula per line, `#` starts a
    /// comment, blank lines are ignored.
    pub fn from_text(text: &str) -> Result<Self, KnowledgeError> {
        Self::new(parse_formula_lines(text)?)
    }

    pub fn base(&self) -> &[Formula] {
        &self.base
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }
}

/// Parses the line-oriented formula format shared by KB and universe files.
pub fn parse_formula_lines(text: &str) -> Result<Vec<Formula>, KnowledgeError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let formula = parse(line).map_err(|source| KnowledgeError::Parse {
            line: idx + 1,
            source,
        })?;
        out.push(formula);
    }
    Ok(out)
}

// QUERY UNIVERSE

/// Ordered, deduplicated list of query formulas with tautologies filtered
/// out at construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryUniverse {
    formulas: Vec<Formula>,
}

impl QueryUniverse {
    pub fn new(formulas: impl IntoIterator<Item = Formula>) -> Self {
        let mut kept: Vec<Formula> = Vec::new();
        for f in formulas {
            if !kept.contains(&f) && !is_tautology(&f) {
                kept.push(f);
            }
        }
        QueryUniverse { formulas: kept }
    }

    pub fn formulas(&self) -> &[Formula] {
        &self.formulas
    }

    pub fn len(&self) -> usize {
        self.formulas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formulas.is_empty()
    }

    pub fn contains(&self, f: &Formula) -> bool {
        self.formulas.contains(f)
    }
}

// CLOSURE

/// Whether `p` is in the deductive closure of the base.
pub fn in_closure(kb: &KnowledgeBase, p: &Formula) -> bool {
    entails(kb.base(), p)
}

/// The entailed subset of the universe, in universe order.
pub fn closure_over(
    kb: &KnowledgeBase,
    universe: &QueryUniverse,
) -> Result<Vec<Formula>, KnowledgeError> {
    if universe.is_empty() {
        return Err(KnowledgeError::EmptyUniverse);
    }
    Ok(universe
        .formulas()
        .iter()
        .filter(|p| in_closure(kb, p))
        .cloned()
        .collect())
}

/// The finite stand-in for the kb's knowledge that editing operations scan:
/// the base followed by the entailed universe formulas not already in it,
/// both in their own load order. `None` scans the base alone.
pub fn scan_domain(
    kb: &KnowledgeBase,
    universe: Option<&QueryUniverse>,
) -> Result<Vec<Formula>, KnowledgeError> {
    let mut domain = kb.base().to_vec();
    if let Some(u) = universe {
        for p in closure_over(kb, u)? {
            if !domain.contains(&p) {
                domain.push(p);
            }
        }
    }
    Ok(domain)
}

// CONSISTENCY RELATION

/// Whether two individually consistent formula sets are jointly satisfiable.
/// This single satisfiability check is equivalent to "no formula entailed by
/// one side has its negation entailed by the other", quantified over all
/// formulas.
pub fn mutually_consistent(x: &[Formula], y: &[Formula]) -> Result<bool, KnowledgeError> {
    if !is_satisfiable(x).is_sat() {
        return Err(KnowledgeError::InconsistentOperand { which: "left" });
    }
    if !is_satisfiable(y).is_sat() {
        return Err(KnowledgeError::InconsistentOperand { which: "right" });
    }
    let mut joint: Vec<Formula> = x.to_vec();
    joint.extend_from_slice(y);
    Ok(is_satisfiable(&joint).is_sat())
}

#[cfg(test)]
mod knowledge_tests {
    use super::*;

    fn p(s: &str) -> Formula {
        parse(s).unwrap()
    }

    fn kb(inputs: &[&str]) -> KnowledgeBase {
        KnowledgeBase::new(inputs.iter().map(|s| p(s))).unwrap()
    }

    fn universe(inputs: &[&str]) -> QueryUniverse {
        QueryUniverse::new(inputs.iter().map(|s| p(s)))
    }

    #[test]
    fn loading_rejects_inconsistent_bases() {
        let err = KnowledgeBase::new([p("a"), p("!a")]).unwrap_err();
        assert_eq!(err, KnowledgeError::InconsistentKB);
        let err = KnowledgeBase::new([p("a"), p("a -> b"), p("!b")]).unwrap_err();
        assert_eq!(err, KnowledgeError::InconsistentKB);
    }

    #[test]
    fn loading_deduplicates_and_preserves_order() {
        let base = kb(&["a", "a", "a -> b", "a"]);
        assert_eq!(base.base(), [p("a"), p("a -> b")]);
    }

    #[test]
    fn text_format_skips_comments_and_blanks() {
        let base = KnowledgeBase::from_text("# header\n\na\na -> b  # trailing note\n").unwrap();
        assert_eq!(base.base(), [p("a"), p("a -> b")]);
    }

    #[test]
    fn text_format_reports_the_offending_line() {
        let err = KnowledgeBase::from_text("a\nb &&\n").unwrap_err();
        match err {
            KnowledgeError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn universes_filter_tautologies_and_duplicates() {
        let u = universe(&["a", "a | !a", "b", "a", "(a -> b) | (b -> a)", "true"]);
        assert_eq!(u.formulas(), [p("a"), p("b")]);
    }

    #[test]
    fn closure_membership_is_entailment() {
        let base = kb(&["a", "a -> b"]);
        assert!(in_closure(&base, &p("b")));
        assert!(in_closure(&base, &p("a & b")));
        assert!(in_closure(&base, &p("a | c")));
        assert!(!in_closure(&base, &p("!a")));
        assert!(!in_closure(&base, &p("c")));
    }

    #[test]
    fn closure_over_keeps_universe_order() {
        let base = kb(&["a", "a -> b"]);
        let u = universe(&["b", "c", "a", "!b"]);
        assert_eq!(closure_over(&base, &u).unwrap(), [p("b"), p("a")]);
    }

    #[test]
    fn closure_over_an_empty_universe_is_an_error() {
        let base = kb(&["a"]);
        let err = closure_over(&base, &universe(&[])).unwrap_err();
        assert_eq!(err, KnowledgeError::EmptyUniverse);
        // a universe of nothing but tautologies filters down to empty
        let err = closure_over(&base, &universe(&["a | !a"])).unwrap_err();
        assert_eq!(err, KnowledgeError::EmptyUniverse);
    }

    #[test]
    fn scan_domain_is_base_then_new_closure_elements() {
        let base = kb(&["a", "a -> b"]);
        let u = universe(&["a", "b", "a -> b"]);
        assert_eq!(
            scan_domain(&base, Some(&u)).unwrap(),
            [p("a"), p("a -> b"), p("b")]
        );
        assert_eq!(scan_domain(&base, None).unwrap(), [p("a"), p("a -> b")]);
    }

    #[test]
    fn mutual_consistency_is_joint_satisfiability() {
        assert!(mutually_consistent(&[p("a -> b")], &[p("!b")]).unwrap());
        assert!(!mutually_consistent(&[p("a")], &[p("!a")]).unwrap());
        assert!(!mutually_consistent(&[p("a"), p("a -> b")], &[p("!b")]).unwrap());
    }

    #[test]
    fn mutual_consistency_rejects_inconsistent_operands() {
        let err = mutually_consistent(&[p("a & !a")], &[p("b")]).unwrap_err();
        assert_eq!(err, KnowledgeError::InconsistentOperand { which: "left" });
        let err = mutually_consistent(&[p("b")], &[p("a & !a")]).unwrap_err();
        assert_eq!(err, KnowledgeError::InconsistentOperand { which: "right" });
    }
}
