//! Clause-set encoding of formula sets.
//!
//! Each input formula is asserted true. Conjunctions and disjunction-shaped
//! connectives are flattened into clauses directly; only subformulas that
//! cannot sit inside a clause get a defined auxiliary variable (with full
//! two-way defining clauses), so the result is equisatisfiable and every
//! satisfying assignment restricts to a model of the inputs over the source
//! atoms. Auxiliary variables live in their own index range past the source
//! atoms and can never collide with them.

use std::collections::HashMap;
use std::ops::Not;

use crate::formula::{free_atoms_of, Atom, Formula};

// TYPES

/// A literal over a clause-set variable index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Lit {
    pub var: usize,
    pub positive: bool,
}

impl Lit {
    pub fn pos(var: usize) -> Self {
        Lit {
            var,
            positive: true,
        }
    }

    pub fn neg(var: usize) -> Self {
        Lit {
            var,
            positive: false,
        }
    }
}

impl Not for Lit {
    type Output = Lit;

    fn not(self) -> Lit {
        Lit {
            var: self.var,
            positive: !self.positive,
        }
    }
}

pub type Clause = Vec<Lit>;

/// CNF clause set over source atoms plus defined auxiliaries. Variables
/// `0..source_atoms.len()` are the source atoms in sorted name order; the
/// remaining `aux_count` indices are auxiliaries.
#[derive(Clone, Debug)]
pub struct ClauseSet {
    source_atoms: Vec<Atom>,
    aux_count: usize,
    clauses: Vec<Clause>,
}

impl ClauseSet {
    pub fn source_atoms(&self) -> &[Atom] {
        &self.source_atoms
    }

    pub fn aux_count(&self) -> usize {
        self.aux_count
    }

    pub fn num_vars(&self) -> usize {
        self.source_atoms.len() + self.aux_count
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn is_source_var(&self, var: usize) -> bool {
        var < self.source_atoms.len()
    }
}

// CONSTANT FOLDING

/// Removes `true`/`false` from every strict subformula; the result is either
/// a lone constant or entirely constant-free.
pub(crate) fn fold_consts(f: &Formula) -> Formula {
    match f {
        Formula::Const(_) | Formula::Var(_) => f.clone(),
        Formula::Not(x) => match fold_consts(x) {
            Formula::Const(b) => Formula::Const(!b),
            x => Formula::not(x),
        },
        Formula::And(l, r) => match (fold_consts(l), fold_consts(r)) {
            (Formula::Const(a), Formula::Const(b)) => Formula::Const(a && b),
            (Formula::Const(true), y) | (y, Formula::Const(true)) => y,
            (Formula::Const(false), _) | (_, Formula::Const(false)) => Formula::Const(false),
            (l, r) => Formula::and(l, r),
        },
        Formula::Or(l, r) => match (fold_consts(l), fold_consts(r)) {
            (Formula::Const(a), Formula::Const(b)) => Formula::Const(a || b),
            (Formula::Const(false), y) | (y, Formula::Const(false)) => y,
            (Formula::Const(true), _) | (_, Formula::Const(true)) => Formula::Const(true),
            (l, r) => Formula::or(l, r),
        },
        Formula::Implies(l, r) => match (fold_consts(l), fold_consts(r)) {
            (Formula::Const(a), Formula::Const(b)) => Formula::Const(!a || b),
            (Formula::Const(false), _) | (_, Formula::Const(true)) => Formula::Const(true),
            (Formula::Const(true), y) => y,
            (x, Formula::Const(false)) => Formula::not(x),
            (l, r) => Formula::implies(l, r),
        },
        Formula::Iff(l, r) => match (fold_consts(l), fold_consts(r)) {
            (Formula::Const(a), Formula::Const(b)) => Formula::Const(a == b),
            (Formula::Const(true), y) | (y, Formula::Const(true)) => y,
            (Formula::Const(false), y) | (y, Formula::Const(false)) => Formula::not(y),
            (l, r) => Formula::iff(l, r),
        },
    }
}

// ENCODING

struct Encoder {
    atom_index: HashMap<Atom, usize>,
    next_var: usize,
    defs: HashMap<Formula, Lit>,
    clauses: Vec<Clause>,
}

impl Encoder {
    /// Asserts a constant-folded formula, splitting conjunctions and emitting
    /// one clause per disjunction-shaped conjunct.
    fn assert_top(&mut self, f: Formula) {
        match f {
            Formula::Const(true) => {}
            Formula::Const(false) => self.clauses.push(Vec::new()),
            Formula::And(l, r) => {
                self.assert_top(*l);
                self.assert_top(*r);
            }
            other => {
                let mut clause = Vec::new();
                self.collect_disjuncts(other, &mut clause);
                self.clauses.push(clause);
            }
        }
    }

    fn collect_disjuncts(&mut self, f: Formula, out: &mut Clause) {
        match f {
            Formula::Or(l, r) => {
                self.collect_disjuncts(*l, out);
                self.collect_disjuncts(*r, out);
            }
            Formula::Implies(l, r) => {
                let antecedent = self.lit_of(&l);
                out.push(!antecedent);
                self.collect_disjuncts(*r, out);
            }
            other => {
                let lit = self.lit_of(&other);
                out.push(lit);
            }
        }
    }

    fn lit_of(&mut self, f: &Formula) -> Lit {
        match f {
            Formula::Const(_) => unreachable!("constants are folded away before encoding"),
            Formula::Var(a) => Lit::pos(self.atom_index[a]),
            Formula::Not(x) => !self.lit_of(x),
            composite => self.define(composite),
        }
    }

    /// Introduces (or reuses) an auxiliary variable `v` with clauses for
    /// `v <-> composite`.
    fn define(&mut self, composite: &Formula) -> Lit {
        if let Some(&lit) = self.defs.get(composite) {
            return lit;
        }
        let v = Lit::pos(self.next_var);
        self.next_var += 1;
        self.defs.insert(composite.clone(), v);
        match composite {
            Formula::And(l, r) => {
                let a = self.lit_of(l);
                let b = self.lit_of(r);
                self.clauses.push(vec![!v, a]);
                self.clauses.push(vec![!v, b]);
                self.clauses.push(vec![v, !a, !b]);
            }
            Formula::Or(l, r) => {
                let a = self.lit_of(l);
                let b = self.lit_of(r);
                self.clauses.push(vec![!v, a, b]);
                self.clauses.push(vec![v, !a]);
                self.clauses.push(vec![v, !b]);
            }
            Formula::Implies(l, r) => {
                let a = self.lit_of(l);
                let b = self.lit_of(r);
                self.clauses.push(vec![!v, !a, b]);
                self.clauses.push(vec![v, a]);
                self.clauses.push(vec![v, !b]);
            }
            Formula::Iff(l, r) => {
                let a = self.lit_of(l);
                let b = self.lit_of(r);
                self.clauses.push(vec![!v, !a, b]);
                self.clauses.push(vec![!v, a, !b]);
                self.clauses.push(vec![v, a, b]);
                self.clauses.push(vec![v, !a, !b]);
            }
            Formula::Const(_) | Formula::Var(_) | Formula::Not(_) => {
                unreachable!("only binary composites are defined")
            }
        }
        v
    }
}

/// Encodes a set of formulas, all asserted true, as a CNF clause set.
pub fn to_cnf(fs: &[Formula]) -> ClauseSet {
    let source_atoms: Vec<Atom> = free_atoms_of(fs).into_iter().collect();
    let atom_index = source_atoms
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, a)| (a, i))
        .collect();
    let mut enc = Encoder {
        atom_index,
        next_var: source_atoms.len(),
        defs: HashMap::new(),
        clauses: Vec::new(),
    };
    for f in fs {
        enc.assert_top(fold_consts(f));
    }
    ClauseSet {
        aux_count: enc.next_var - source_atoms.len(),
        source_atoms,
        clauses: enc.clauses,
    }
}

#[cfg(test)]
mod cnf_tests {
    use super::*;
    use crate::formula::parse;

    fn cnf(inputs: &[&str]) -> ClauseSet {
        let fs: Vec<Formula> = inputs.iter().map(|s| parse(s).unwrap()).collect();
        to_cnf(&fs)
    }

    #[test]
    fn implication_needs_no_auxiliaries() {
        let cs = cnf(&["a -> b"]);
        assert_eq!(cs.aux_count(), 0);
        assert_eq!(cs.clauses(), [vec![Lit::neg(0), Lit::pos(1)]]);
    }

    #[test]
    fn conjunctions_split_into_unit_clauses() {
        let cs = cnf(&["a & b"]);
        assert_eq!(cs.aux_count(), 0);
        assert_eq!(cs.clauses(), [vec![Lit::pos(0)], vec![Lit::pos(1)]]);
    }

    #[test]
    fn disjunction_chains_flatten_into_one_clause() {
        let cs = cnf(&["a -> !b | c | d"]);
        assert_eq!(cs.aux_count(), 0);
        assert_eq!(cs.clauses().len(), 1);
        assert_eq!(cs.clauses()[0].len(), 4);
    }

    #[test]
    fn constant_false_is_the_empty_clause() {
        let cs = cnf(&["false"]);
        assert_eq!(cs.clauses(), [Vec::<Lit>::new()]);
        let cs = cnf(&["a & false"]);
        assert!(cs.clauses().iter().any(Clause::is_empty));
    }

    #[test]
    fn constant_true_adds_nothing() {
        let cs = cnf(&["true", "a | true"]);
        assert!(cs.clauses().is_empty());
        assert_eq!(cs.aux_count(), 0);
    }

    #[test]
    fn nested_conjunctions_under_disjunction_get_definitions() {
        let cs = cnf(&["(a & b) | (c & d)"]);
        assert_eq!(cs.aux_count(), 2);
        assert_eq!(cs.source_atoms().len(), 4);
        // one top clause over the two definitions, three clauses per definition
        assert_eq!(cs.clauses().len(), 7);
    }

    #[test]
    fn shared_subformulas_share_one_definition() {
        let cs = cnf(&["(a & b) | c", "(a & b) | d"]);
        assert_eq!(cs.aux_count(), 1);
    }

    #[test]
    fn source_atoms_are_sorted_and_shared_across_inputs() {
        let cs = cnf(&["b -> c", "a & c"]);
        let names: Vec<_> = cs.source_atoms().iter().map(Atom::name).collect();
        assert_eq!(names, ["a", "b", "c"]);
    }
}
