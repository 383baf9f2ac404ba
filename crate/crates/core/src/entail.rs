//! Satisfiability and entailment over formula sets.
//!
//! `is_satisfiable`/`entails` run a DPLL search with unit propagation over
//! the clause-set encoding. Branching is deterministic (lowest variable
//! index first, `false` before `true`), so the reported model is
//! reproducible. `bf_entails` answers the same question by exhaustive
//! truth-table enumeration and never touches the clause path; it exists as
//! an independent cross-check for everything the search-based path claims.

use thiserror::Error;

use crate::cnf::{to_cnf, Clause, ClauseSet, Lit};
use crate::formula::{free_atoms_of, Assignment, Atom, Formula};

/// Default atom cap for truth-table enumeration.
pub const BF_ATOM_LIMIT: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("decision budget of {budget} exceeded")]
    ResourceLimit { budget: u64 },
    #[error("{atoms} atoms exceed the brute-force enumeration limit of {limit}")]
    TooManyAtoms { atoms: usize, limit: usize },
}

/// Outcome of a satisfiability query. A `Sat` model is total over the source
/// atoms of the query (auxiliary encoding variables are dropped).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Sat(Assignment),
    Unsat,
}

impl Verdict {
    pub fn is_sat(&self) -> bool {
        matches!(self, Verdict::Sat(_))
    }

    pub fn model(&self) -> Option<&Assignment> {
        match self {
            Verdict::Sat(m) => Some(m),
            Verdict::Unsat => None,
        }
    }
}

// DPLL

struct Search<'a> {
    clauses: &'a [Clause],
    assign: Vec<Option<bool>>,
    trail: Vec<usize>,
    decisions: u64,
    budget: Option<u64>,
}

impl<'a> Search<'a> {
    fn new(cs: &'a ClauseSet, budget: Option<u64>) -> Self {
        Search {
            clauses: cs.clauses(),
            assign: vec![None; cs.num_vars()],
            trail: Vec::new(),
            decisions: 0,
            budget,
        }
    }

    fn value(&self, lit: Lit) -> Option<bool> {
        self.assign[lit.var].map(|v| v == lit.positive)
    }

    fn push(&mut self, lit: Lit) {
        self.assign[lit.var] = Some(lit.positive);
        self.trail.push(lit.var);
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let var = self.trail.pop().expect("trail shrinks to mark");
            self.assign[var] = None;
        }
    }

    /// Exhaustive unit propagation; false means a clause became empty.
    fn propagate(&mut self) -> bool {
        loop {
            let mut changed = false;
            for clause in self.clauses {
                let mut pending = None;
                let mut open = 0usize;
                let mut satisfied = false;
                for &lit in clause {
                    match self.value(lit) {
                        Some(true) => {
                            satisfied = true;
                            break;
                        }
                        Some(false) => {}
                        None => {
                            open += 1;
                            pending = Some(lit);
                        }
                    }
                }
                if satisfied {
                    continue;
                }
                match open {
                    0 => return false,
                    1 => {
                        self.push(pending.expect("one open literal"));
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return true;
            }
        }
    }

    fn all_satisfied(&self) -> bool {
        self.clauses
            .iter()
            .all(|c| c.iter().any(|&l| self.value(l) == Some(true)))
    }

    fn search(&mut self) -> Result<bool, SolverError> {
        let mark = self.trail.len();
        if !self.propagate() {
            self.undo_to(mark);
            return Ok(false);
        }
        if self.all_satisfied() {
            return Ok(true);
        }
        let var = (0..self.assign.len())
            .find(|&v| self.assign[v].is_none())
            .expect("an unsatisfied clause has an unassigned literal");
        self.decisions += 1;
        if let Some(budget) = self.budget {
            if self.decisions > budget {
                return Err(SolverError::ResourceLimit { budget });
            }
        }
        for value in [false, true] {
            let decision_mark = self.trail.len();
            self.push(Lit {
                var,
                positive: value,
            });
            match self.search() {
                Ok(true) => return Ok(true),
                Ok(false) => self.undo_to(decision_mark),
                Err(e) => return Err(e),
            }
        }
        self.undo_to(mark);
        Ok(false)
    }
}

fn solve(cs: &ClauseSet, budget: Option<u64>) -> Result<Verdict, SolverError> {
    let mut search = Search::new(cs, budget);
    if search.search()? {
        // Variables the search never touched are pinned false so the model
        // stays deterministic and total over the source atoms.
        let model = cs
            .source_atoms()
            .iter()
            .enumerate()
            .map(|(var, atom)| (atom.clone(), search.assign[var].unwrap_or(false)))
            .collect();
        Ok(Verdict::Sat(model))
    } else {
        Ok(Verdict::Unsat)
    }
}

/// Decides satisfiability of a formula set (all members asserted true).
/// The empty set is satisfiable with the empty model.
pub fn is_satisfiable(fs: &[Formula]) -> Verdict {
    solve(&to_cnf(fs), None).expect("unbounded search cannot hit a budget")
}

/// As `is_satisfiable`, but gives up with `ResourceLimit` once the search
/// has made more than `decision_budget` branching decisions.
pub fn is_satisfiable_bounded(
    fs: &[Formula],
    decision_budget: u64,
) -> Result<Verdict, SolverError> {
    solve(&to_cnf(fs), Some(decision_budget))
}

/// Classical entailment by refutation: `fs ⊨ p` iff `fs ∪ {!p}` is
/// unsatisfiable.
pub fn entails(fs: &[Formula], p: &Formula) -> bool {
    let mut refutation: Vec<Formula> = fs.to_vec();
    refutation.push(Formula::not(p.clone()));
    !is_satisfiable(&refutation).is_sat()
}

/// True when `f` holds under every assignment.
pub fn is_tautology(f: &Formula) -> bool {
    entails(&[], f)
}

// TRUTH-TABLE ORACLE

fn eval_masked(f: &Formula, atoms: &[Atom], mask: u64) -> bool {
    match f {
        Formula::Const(b) => *b,
        Formula::Var(a) => {
            let idx = atoms
                .binary_search(a)
                .expect("atom collected from the same formulas");
            mask >> idx & 1 == 1
        }
        Formula::Not(x) => !eval_masked(x, atoms, mask),
        Formula::And(l, r) => eval_masked(l, atoms, mask) && eval_masked(r, atoms, mask),
        Formula::Or(l, r) => eval_masked(l, atoms, mask) || eval_masked(r, atoms, mask),
        Formula::Implies(l, r) => !eval_masked(l, atoms, mask) || eval_masked(r, atoms, mask),
        Formula::Iff(l, r) => eval_masked(l, atoms, mask) == eval_masked(r, atoms, mask),
    }
}

/// Entailment by exhaustive truth-table enumeration over the free atoms of
/// `fs` and `p`, capped at `max_atoms` (errors with `TooManyAtoms` above it).
pub fn bf_entails_limited(
    fs: &[Formula],
    p: &Formula,
    max_atoms: usize,
) -> Result<bool, SolverError> {
    let mut all: Vec<Formula> = fs.to_vec();
    all.push(p.clone());
    let atoms: Vec<Atom> = free_atoms_of(&all).into_iter().collect();
    if atoms.len() > max_atoms.min(63) {
        return Err(SolverError::TooManyAtoms {
            atoms: atoms.len(),
            limit: max_atoms.min(63),
        });
    }
    for mask in 0..1u64 << atoms.len() {
        let premises_hold = fs.iter().all(|f| eval_masked(f, &atoms, mask));
        if premises_hold && !eval_masked(p, &atoms, mask) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `bf_entails_limited` at the default 16-atom cap.
pub fn bf_entails(fs: &[Formula], p: &Formula) -> Result<bool, SolverError> {
    bf_entails_limited(fs, p, BF_ATOM_LIMIT)
}
