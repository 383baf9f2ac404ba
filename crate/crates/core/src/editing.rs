//! Knowledge-base editing: deletions, anchors, boundaries, and outcomes.
//!
//! An edit replaces part of what a base entails. The deletion set collects
//! every scanned piece of knowledge whose negation follows from the anchor
//! together with the edit; the anchor is the knowledge designated to
//! survive. An anchor is valid (the editing boundary holds) exactly when the
//! surviving knowledge is jointly satisfiable with the anchor and the edit —
//! one satisfiability check that stands in for quantifying "no surviving
//! consequence is contradicted" over all formulas. An invalid anchor that is
//! forced through leaves an inconsistent post-base, and an inconsistent base
//! entails everything: the post-closure is the whole universe.

use thiserror::Error;

use crate::entail::{entails, is_satisfiable};
use crate::formula::Formula;
use crate::knowledge::{scan_domain, KnowledgeBase, KnowledgeError, QueryUniverse};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EditError {
    #[error("edit has no formulas")]
    EmptyEdit,
    #[error("edit is internally inconsistent")]
    InconsistentEdit,
    #[error("anchor formula `{formula}` is not entailed by the knowledge base")]
    AnchorNotSubset { formula: String },
    #[error("anchor violates the editing boundary (witness `{witness}`); apply with force to explode anyway")]
    BoundaryViolated { witness: String },
    #[error("anchor is jointly inconsistent with the edit; nothing can survive it")]
    DegenerateAnchor,
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
}

// TYPES

/// The incoming update: a nonempty, internally consistent set of formulas
/// that must hold after the edit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edit {
    formulas: Vec<Formula>,
}

impl Edit {
    pub fn new(formulas: impl IntoIterator<Item = Formula>) -> Result<Self, EditError> {
        let mut kept: Vec<Formula> = Vec::new();
        for f in formulas {
            if !kept.contains(&f) {
                kept.push(f);
            }
        }
        if kept.is_empty() {
            return Err(EditError::EmptyEdit);
        }
        if !is_satisfiable(&kept).is_sat() {
            return Err(EditError::InconsistentEdit);
        }
        Ok(Edit { formulas: kept })
    }

    pub fn formulas(&self) -> &[Formula] {
        &self.formulas
    }
}

/// Knowledge designated to survive an edit. Emptiness is legal (and, for
/// counterfactual edits with entangled knowledge, famously insufficient).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Anchor {
    formulas: Vec<Formula>,
}

impl Anchor {
    pub fn new(formulas: impl IntoIterator<Item = Formula>) -> Self {
        let mut kept: Vec<Formula> = Vec::new();
        for f in formulas {
            if !kept.contains(&f) {
                kept.push(f);
            }
        }
        Anchor { formulas: kept }
    }

    pub fn empty() -> Self {
        Anchor::default()
    }

    pub fn formulas(&self) -> &[Formula] {
        &self.formulas
    }

    pub fn is_empty(&self) -> bool {
        self.formulas.is_empty()
    }

    pub fn len(&self) -> usize {
        self.formulas.len()
    }
}

/// How an edit relates to what the base already knows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EditClass {
    /// The edit contradicts the base: something it entails is denied by the
    /// knowledge. Witness `p` has `edit ⊨ p` and `kb ⊨ !p`.
    pub counterfactual: bool,
    pub counterfactual_witness: Option<Formula>,
    /// Some scanned knowledge survives the edit on its own (its negation is
    /// not entailed by the edit alone).
    pub non_global: bool,
    pub non_global_witness: Option<Formula>,
    /// Two scanned survivors cannot survive jointly: the edit entails the
    /// disjunction of their negations without entailing either one.
    pub non_local: bool,
    pub non_local_witnesses: Option<(Formula, Formula)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryStatus {
    Ok,
    Violated,
}

/// Verdict of the editing-boundary check for one (kb, anchor, edit) triple.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnchorValidity {
    pub status: BoundaryStatus,
    /// Present exactly when violated: a formula the surviving knowledge
    /// entails whose negation follows from anchor ∪ edit. For a degenerate
    /// anchor the recorded witness is `true` — the one constant-true formula
    /// these reports are allowed to carry.
    pub witness: Option<Formula>,
    /// anchor ∪ edit is itself unsatisfiable.
    pub degenerate: bool,
}

impl AnchorValidity {
    pub fn is_ok(&self) -> bool {
        self.status == BoundaryStatus::Ok
    }
}

/// Result of applying an edit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EditOutcome {
    /// Scanned knowledge whose negation follows from anchor ∪ edit.
    pub deleted: Vec<Formula>,
    /// Surviving scanned knowledge plus the edit; its closure is the
    /// post-edit knowledge.
    pub post_base: Vec<Formula>,
    /// Universe members entailed post-edit, when a universe was supplied.
    /// Under explosion this is the entire universe.
    pub post_closure: Option<Vec<Formula>>,
    /// The post-base is unsatisfiable, so it entails every formula.
    pub explosion: bool,
}

// OPERATIONS

fn check_anchor_subset(kb: &KnowledgeBase, anchor: &Anchor) -> Result<(), EditError> {
    for f in anchor.formulas() {
        if !entails(kb.base(), f) {
            return Err(EditError::AnchorNotSubset {
                formula: f.to_string(),
            });
        }
    }
    Ok(())
}

fn anchor_and_edit(anchor: &Anchor, edit: &Edit) -> Vec<Formula> {
    let mut out = anchor.formulas().to_vec();
    for f in edit.formulas() {
        if !out.contains(f) {
            out.push(f.clone());
        }
    }
    out
}

fn deleted_from(domain: &[Formula], against: &[Formula]) -> Vec<Formula> {
    domain
        .iter()
        .filter(|p| entails(against, &Formula::not((*p).clone())))
        .cloned()
        .collect()
}

/// Every scanned formula whose negation is entailed by anchor ∪ edit. The
/// scan domain is the base plus the entailed universe members (base alone
/// when no universe is given); deletions of unscanned consequences are
/// implicit in the post-base semantics.
pub fn compute_deleted(
    kb: &KnowledgeBase,
    anchor: &Anchor,
    edit: &Edit,
    universe: Option<&QueryUniverse>,
) -> Result<Vec<Formula>, EditError> {
    check_anchor_subset(kb, anchor)?;
    let domain = scan_domain(kb, universe)?;
    Ok(deleted_from(&domain, &anchor_and_edit(anchor, edit)))
}

/// Checks the editing boundary: do the survivors, the anchor, and the edit
/// fit in one model? On violation the witness is the first deleted formula
/// the survivors still entail; when no single scanned formula certifies the
/// conflict, it is the conjunction of a minimized unsatisfiable core of the
/// survivors. A degenerate anchor (anchor ∪ edit unsatisfiable) is violated
/// with witness `true`.
pub fn validate_anchor(
    kb: &KnowledgeBase,
    anchor: &Anchor,
    edit: &Edit,
    universe: Option<&QueryUniverse>,
) -> Result<AnchorValidity, EditError> {
    check_anchor_subset(kb, anchor)?;
    let against = anchor_and_edit(anchor, edit);
    if !is_satisfiable(&against).is_sat() {
        return Ok(AnchorValidity {
            status: BoundaryStatus::Violated,
            witness: Some(Formula::Const(true)),
            degenerate: true,
        });
    }
    let domain = scan_domain(kb, universe)?;
    let deleted = deleted_from(&domain, &against);
    // Containment lemma: a consistent anchor ∪ edit never deletes its own
    // anchor (that would need `anchor ∪ edit ⊨ !p` for an anchor member p).
    assert!(
        deleted.iter().all(|d| !anchor.formulas().contains(d)),
        "anchor members must survive their own edit"
    );
    let survivors: Vec<Formula> = domain
        .iter()
        .filter(|p| !deleted.contains(p))
        .cloned()
        .collect();

    let mut joint = survivors.clone();
    for f in &against {
        if !joint.contains(f) {
            joint.push(f.clone());
        }
    }
    if is_satisfiable(&joint).is_sat() {
        return Ok(AnchorValidity {
            status: BoundaryStatus::Ok,
            witness: None,
            degenerate: false,
        });
    }

    let witness = deleted
        .iter()
        .find(|k| entails(&survivors, k))
        .cloned()
        .unwrap_or_else(|| Formula::conjoin(shrink_conflict(&survivors, &against)));
    Ok(AnchorValidity {
        status: BoundaryStatus::Violated,
        witness: Some(witness),
        degenerate: false,
    })
}

/// Minimizes the surviving-knowledge side of the conflict: drops survivors
/// (later scan positions first, so early ones are kept) while the rest still
/// clash with anchor ∪ edit.
fn shrink_conflict(survivors: &[Formula], against: &[Formula]) -> Vec<Formula> {
    let mut kept = survivors.to_vec();
    let mut i = kept.len();
    while i > 0 {
        i -= 1;
        let mut candidate: Vec<Formula> = kept.clone();
        candidate.remove(i);
        candidate.extend_from_slice(against);
        if !is_satisfiable(&candidate).is_sat() {
            kept.remove(i);
        }
    }
    kept
}

/// Applies the edit. Refuses a violated boundary unless `force` (the
/// outcome then reports the explosion rather than a partial edit) and
/// refuses a degenerate anchor even with `force`.
pub fn apply_edit(
    kb: &KnowledgeBase,
    anchor: &Anchor,
    edit: &Edit,
    universe: Option<&QueryUniverse>,
    force: bool,
) -> Result<EditOutcome, EditError> {
    let validity = validate_anchor(kb, anchor, edit, universe)?;
    if validity.degenerate {
        return Err(EditError::DegenerateAnchor);
    }
    if !validity.is_ok() && !force {
        let witness = validity.witness.expect("violated verdicts carry a witness");
        return Err(EditError::BoundaryViolated {
            witness: witness.to_string(),
        });
    }

    let domain = scan_domain(kb, universe)?;
    let deleted = deleted_from(&domain, &anchor_and_edit(anchor, edit));
    let mut post_base: Vec<Formula> = domain
        .iter()
        .filter(|p| !deleted.contains(p))
        .cloned()
        .collect();
    for f in edit.formulas() {
        if !post_base.contains(f) {
            post_base.push(f.clone());
        }
    }
    let explosion = check_explosion(&post_base);
    // Entailment from an inconsistent post-base holds for every formula, so
    // under explosion this is the whole universe with no special casing.
    let post_closure = universe.map(|u| {
        u.formulas()
            .iter()
            .filter(|p| entails(&post_base, p))
            .cloned()
            .collect()
    });
    Ok(EditOutcome {
        deleted,
        post_base,
        post_closure,
        explosion,
    })
}

/// Whether a post-base entails everything (is unsatisfiable).
pub fn check_explosion(post_base: &[Formula]) -> bool {
    !is_satisfiable(post_base).is_sat()
}

/// Classifies an edit against the base over a universe. All three
/// properties are read off the scan domain; witnesses are the first
/// qualifying formulas (pairs: first by both scan positions).
pub fn classify_edit(
    kb: &KnowledgeBase,
    edit: &Edit,
    universe: &QueryUniverse,
) -> Result<EditClass, EditError> {
    let domain = scan_domain(kb, Some(universe))?;

    let mut joint = kb.base().to_vec();
    joint.extend_from_slice(edit.formulas());
    let counterfactual = !is_satisfiable(&joint).is_sat();
    let counterfactual_witness = if counterfactual {
        Some(
            universe
                .formulas()
                .iter()
                .find(|p| entails(edit.formulas(), p) && entails(kb.base(), &Formula::not((*p).clone())))
                .cloned()
                .unwrap_or_else(|| Formula::conjoin(edit.formulas().to_vec())),
        )
    } else {
        None
    };

    let survivors: Vec<Formula> = domain
        .iter()
        .filter(|p| !entails(edit.formulas(), &Formula::not((*p).clone())))
        .cloned()
        .collect();
    let non_global = !survivors.is_empty();
    let non_global_witness = survivors.first().cloned();

    let mut non_local_witnesses = None;
    'pairs: for i in 0..survivors.len() {
        for j in i + 1..survivors.len() {
            let either_dies = Formula::or(
                Formula::not(survivors[i].clone()),
                Formula::not(survivors[j].clone()),
            );
            if entails(edit.formulas(), &either_dies) {
                non_local_witnesses = Some((survivors[i].clone(), survivors[j].clone()));
                break 'pairs;
            }
        }
    }
    Ok(EditClass {
        counterfactual,
        counterfactual_witness,
        non_global,
        non_global_witness,
        non_local: non_local_witnesses.is_some(),
        non_local_witnesses,
    })
}

/// The largest anchor that looks locally safe: every scanned formula the
/// edit does not contradict on its own. For non-local edits this
/// over-collects — the members clash jointly with the edit, making the
/// anchor degenerate.
pub fn max_anchor(
    kb: &KnowledgeBase,
    edit: &Edit,
    universe: &QueryUniverse,
) -> Result<Anchor, EditError> {
    let domain = scan_domain(kb, Some(universe))?;
    Ok(Anchor::new(domain.into_iter().filter(|p| {
        !entails(edit.formulas(), &Formula::not(p.clone()))
    })))
}

#[cfg(test)]
mod editing_tests {
    use super::*;
    use crate::formula::parse;

    fn p(s: &str) -> Formula {
        parse(s).unwrap()
    }

    fn fs(inputs: &[&str]) -> Vec<Formula> {
        inputs.iter().map(|s| p(s)).collect()
    }

    fn kb(inputs: &[&str]) -> KnowledgeBase {
        KnowledgeBase::new(fs(inputs)).unwrap()
    }

    fn edit(inputs: &[&str]) -> Edit {
        Edit::new(fs(inputs)).unwrap()
    }

    fn anchor(inputs: &[&str]) -> Anchor {
        Anchor::new(fs(inputs))
    }

    fn universe(inputs: &[&str]) -> QueryUniverse {
        QueryUniverse::new(fs(inputs))
    }

    /// Chain fixture: a fact, a rule, and an edit denying the consequence.
    fn chain() -> (KnowledgeBase, Edit, QueryUniverse) {
        (kb(&["a", "a -> b"]), edit(&["!b"]), universe(&["a", "b", "a -> b"]))
    }

    #[test]
    fn edit_construction_rejects_empty_and_inconsistent() {
        assert_eq!(Edit::new([]).unwrap_err(), EditError::EmptyEdit);
        assert_eq!(
            Edit::new(fs(&["a", "!a"])).unwrap_err(),
            EditError::InconsistentEdit
        );
    }

    #[test]
    fn chain_deletions_depend_on_scan_breadth() {
        let (kb, e, u) = chain();
        // scanning the base alone, nothing is deleted by the bare edit
        assert!(compute_deleted(&kb, &Anchor::empty(), &e, None).unwrap().is_empty());
        // the universe brings the entailed consequence b into scope
        assert_eq!(
            compute_deleted(&kb, &Anchor::empty(), &e, Some(&u)).unwrap(),
            [p("b")]
        );
    }

    #[test]
    fn chain_anchored_deletions() {
        let (kb, e, u) = chain();
        assert_eq!(
            compute_deleted(&kb, &anchor(&["a"]), &e, Some(&u)).unwrap(),
            [p("a -> b"), p("b")]
        );
    }

    #[test]
    fn anchor_members_must_be_entailed() {
        let (kb, e, u) = chain();
        let err = compute_deleted(&kb, &anchor(&["c"]), &e, Some(&u)).unwrap_err();
        assert_eq!(
            err,
            EditError::AnchorNotSubset {
                formula: "c".into()
            }
        );
        // entailed-but-not-in-base members are fine
        assert!(compute_deleted(&kb, &anchor(&["a & a"]), &e, Some(&u)).is_ok());
    }

    #[test]
    fn empty_anchor_violates_the_chain_boundary_with_witness_b() {
        let (kb, e, u) = chain();
        let v = validate_anchor(&kb, &Anchor::empty(), &e, Some(&u)).unwrap();
        assert_eq!(v.status, BoundaryStatus::Violated);
        assert!(!v.degenerate);
        assert_eq!(v.witness, Some(p("b")));
    }

    #[test]
    fn anchoring_the_fact_satisfies_the_chain_boundary() {
        let (kb, e, u) = chain();
        let v = validate_anchor(&kb, &anchor(&["a"]), &e, Some(&u)).unwrap();
        assert!(v.is_ok());
        assert_eq!(v.witness, None);
        assert!(!v.degenerate);
    }

    #[test]
    fn base_only_scan_still_detects_the_chain_violation() {
        // without the universe, the survivors {a, a -> b} clash with !b and
        // no single scanned formula names the conflict: the witness is the
        // minimized survivor conjunction
        let (kb, e, _) = chain();
        let v = validate_anchor(&kb, &Anchor::empty(), &e, None).unwrap();
        assert_eq!(v.status, BoundaryStatus::Violated);
        assert_eq!(v.witness, Some(p("a & (a -> b)")));
    }

    #[test]
    fn applying_with_a_valid_anchor_rewrites_the_chain() {
        let (kb, e, u) = chain();
        let out = apply_edit(&kb, &anchor(&["a"]), &e, Some(&u), false).unwrap();
        assert_eq!(out.deleted, fs(&["a -> b", "b"]));
        assert_eq!(out.post_base, fs(&["a", "!b"]));
        assert!(!out.explosion);
        assert_eq!(out.post_closure, Some(fs(&["a"])));
    }

    #[test]
    fn applying_the_empty_anchor_requires_force_and_explodes() {
        let (kb, e, u) = chain();
        let err = apply_edit(&kb, &Anchor::empty(), &e, Some(&u), false).unwrap_err();
        assert_eq!(
            err,
            EditError::BoundaryViolated {
                witness: "b".into()
            }
        );
        let out = apply_edit(&kb, &Anchor::empty(), &e, Some(&u), true).unwrap();
        assert!(out.explosion);
        assert_eq!(out.deleted, [p("b")]);
        assert_eq!(out.post_base, fs(&["a", "a -> b", "!b"]));
        // an exploded base entails everything: the whole universe
        assert_eq!(out.post_closure, Some(fs(&["a", "b", "a -> b"])));
    }

    #[test]
    fn the_max_anchor_of_the_chain_is_degenerate() {
        let (kb, e, u) = chain();
        let m = max_anchor(&kb, &e, &u).unwrap();
        assert_eq!(m.formulas(), fs(&["a", "a -> b"]));
        let v = validate_anchor(&kb, &m, &e, Some(&u)).unwrap();
        assert_eq!(v.status, BoundaryStatus::Violated);
        assert!(v.degenerate);
        assert_eq!(v.witness, Some(Formula::Const(true)));
        // degenerate anchors cannot be forced through
        let err = apply_edit(&kb, &m, &e, Some(&u), true).unwrap_err();
        assert_eq!(err, EditError::DegenerateAnchor);
    }

    #[test]
    fn chain_classification() {
        let (kb, e, u) = chain();
        let class = classify_edit(&kb, &e, &u).unwrap();
        assert!(class.counterfactual);
        assert!(class.non_global);
        assert!(class.non_local);
        assert_eq!(class.non_local_witnesses, Some((p("a"), p("a -> b"))));
    }

    /// Transfer fixture: a player at one club, a league rule, and an
    /// exclusivity axiom; the edit asserts the excluded membership.
    fn transfer() -> (KnowledgeBase, Edit, QueryUniverse) {
        let kb = kb(&[
            "m_psg",
            "inter_mls",
            "(m_inter & inter_mls) -> m_mls",
            "!(m_psg & m_inter)",
        ]);
        let e = edit(&["m_inter"]);
        let u = universe(&[
            "m_psg", "m_inter", "inter_mls", "m_mls", "!m_psg", "!m_inter", "!inter_mls",
            "!m_mls",
        ]);
        (kb, e, u)
    }

    #[test]
    fn transfer_classification_finds_the_exclusion_pair() {
        let (kb, e, u) = transfer();
        let class = classify_edit(&kb, &e, &u).unwrap();
        assert!(class.counterfactual);
        assert_eq!(class.counterfactual_witness, Some(p("m_inter")));
        assert!(class.non_global);
        assert_eq!(class.non_global_witness, Some(p("m_psg")));
        assert!(class.non_local);
        assert_eq!(
            class.non_local_witnesses,
            Some((p("m_psg"), p("!(m_psg & m_inter)")))
        );
    }

    #[test]
    fn transfer_edit_ripples_through_the_rule() {
        let (kb, e, u) = transfer();
        let a = anchor(&["inter_mls", "(m_inter & inter_mls) -> m_mls", "!(m_psg & m_inter)"]);
        let v = validate_anchor(&kb, &a, &e, Some(&u)).unwrap();
        assert!(v.is_ok());
        let out = apply_edit(&kb, &a, &e, Some(&u), false).unwrap();
        assert_eq!(out.deleted, fs(&["m_psg", "!m_inter"]));
        assert!(!out.explosion);
        let post = out.post_closure.expect("universe supplied");
        // the consequence of the new membership is entailed post-edit
        assert!(post.contains(&p("m_mls")));
        assert!(post.contains(&p("!m_psg")));
        assert!(!post.contains(&p("m_psg")));
    }

    #[test]
    fn globally_contradicted_edit_has_no_survivors() {
        let base = kb(&["a", "b"]);
        let e = edit(&["!a & !b"]);
        let u = universe(&["a", "b"]);
        let class = classify_edit(&base, &e, &u).unwrap();
        assert!(class.counterfactual);
        assert_eq!(class.counterfactual_witness, Some(p("!a & !b")));
        assert!(!class.non_global);
        assert!(!class.non_local);
        assert_eq!(class.non_global_witness, None);
    }

    #[test]
    fn non_counterfactual_edit_classifies_clean() {
        let base = kb(&["a"]);
        let e = edit(&["b"]);
        let u = universe(&["a", "b"]);
        let class = classify_edit(&base, &e, &u).unwrap();
        assert!(!class.counterfactual);
        assert_eq!(class.counterfactual_witness, None);
        assert!(class.non_global);
        assert!(!class.non_local);
    }

    #[test]
    fn empty_universe_is_rejected_where_a_universe_is_required() {
        let (kb, e, _) = chain();
        let u = QueryUniverse::new([]);
        assert_eq!(
            classify_edit(&kb, &e, &u).unwrap_err(),
            EditError::Knowledge(KnowledgeError::EmptyUniverse)
        );
        assert_eq!(
            max_anchor(&kb, &e, &u).unwrap_err(),
            EditError::Knowledge(KnowledgeError::EmptyUniverse)
        );
    }
}
