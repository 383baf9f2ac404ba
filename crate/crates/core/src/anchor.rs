//! Anchor construction and randomized theorem verification.
//!
//! `construct_anchor` runs the greedy pass that keeps every base element
//! individually compatible with the edit *and* with what has been kept so
//! far; the result is always a valid anchor for this base order.
//! `gen_instance` draws random (kb, edit, universe) triples from a seeded
//! generator, and `verify_theorems` replays the four boundary claims —
//! violation means explosion, the greedy anchor always passes, the empty
//! anchor always fails on non-local edits, the maximal anchor degenerates —
//! over many instances, reporting per-claim pass rates with replayable
//! failure exemplars.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::editing::{
    apply_edit, classify_edit, max_anchor, validate_anchor, Anchor, BoundaryStatus, Edit,
    EditClass,
};
use crate::formula::{render, Atom, Formula};
use crate::knowledge::{KnowledgeBase, QueryUniverse};
use crate::scenario::{AnchorDirective, Scenario};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AnchorError {
    #[error("no base element is individually consistent with the edit")]
    NoAnchorExists,
    #[error("gave up after {budget} candidate instances")]
    GenerationExhausted { budget: u32 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

// ---------- greedy construction ----------

/// One scan step of the greedy pass, in base order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnchorStep {
    /// Index into the base.
    pub index: usize,
    pub formula: Formula,
    /// Whether the formula stayed consistent with the edit plus everything
    /// accepted before it.
    pub accepted: bool,
}

/// Result of the greedy pass: the anchor plus the full decision trace.
#[derive(Clone, Debug)]
pub struct AnchorConstruction {
    pub anchor: Anchor,
    pub trace: Vec<AnchorStep>,
}

/// Scans the base in order, keeping each element that is jointly
/// satisfiable with the edit and the elements kept so far. The outcome
/// depends on base order: an early acceptance can force a later rejection.
/// Fails only when no base element at all can coexist with the edit.
pub fn construct_anchor(
    kb: &KnowledgeBase,
    edit: &Edit,
) -> Result<AnchorConstruction, AnchorError> {
    let mut kept: Vec<Formula> = edit.formulas().to_vec();
    let mut anchor = Vec::new();
    let mut trace = Vec::with_capacity(kb.len());
    for (index, formula) in kb.base().iter().enumerate() {
        kept.push(formula.clone());
        let accepted = crate::entail::is_satisfiable(&kept).is_sat();
        if accepted {
            anchor.push(formula.clone());
        } else {
            kept.pop();
        }
        trace.push(AnchorStep {
            index,
            formula: formula.clone(),
            accepted,
        });
    }
    if anchor.is_empty() {
        return Err(AnchorError::NoAnchorExists);
    }
    Ok(AnchorConstruction {
        anchor: Anchor::new(anchor),
        trace,
    })
}

// ---------- instance generation ----------

/// Knobs for the seeded generator. Bases are literals and implications
/// between literals; edits negate something the base entails (when
/// counterfactual) and may carry one extra literal conjunct.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InstanceConfig {
    pub seed: u64,
    /// Distinct atoms to draw from, 2..=12.
    pub atom_count: usize,
    /// Base formulas per instance, 1..=10.
    pub base_size: usize,
    /// Only emit edits that contradict the base.
    pub require_counterfactual: bool,
    /// Only emit edits with a non-local conflict pair among the survivors.
    pub require_non_local: bool,
}

impl InstanceConfig {
    pub fn new(seed: u64) -> Self {
        InstanceConfig {
            seed,
            atom_count: 5,
            base_size: 5,
            require_counterfactual: true,
            require_non_local: true,
        }
    }

    fn validate(&self) -> Result<(), AnchorError> {
        if !(2..=12).contains(&self.atom_count) {
            return Err(AnchorError::InvalidConfig(format!(
                "atom_count must be in 2..=12, got {}",
                self.atom_count
            )));
        }
        if !(1..=10).contains(&self.base_size) {
            return Err(AnchorError::InvalidConfig(format!(
                "base_size must be in 1..=10, got {}",
                self.base_size
            )));
        }
        Ok(())
    }
}

/// A generated (kb, edit, universe) triple with its classification.
#[derive(Clone, Debug)]
pub struct GeneratedInstance {
    pub kb: KnowledgeBase,
    pub edit: Edit,
    pub universe: QueryUniverse,
    pub class: EditClass,
}

impl GeneratedInstance {
    /// Serializes the instance for replay, under the given anchor directive.
    pub fn to_scenario(&self, anchor: AnchorDirective) -> Scenario {
        Scenario::from_parts(&self.kb, &self.edit, anchor, Some(&self.universe))
    }
}

const ATOM_NAMES: [&str; 12] = [
    "a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l",
];
const GENERATION_BUDGET: u32 = 10_000;

fn literal(atom: &Atom, positive: bool) -> Formula {
    let var = Formula::Var(atom.clone());
    if positive {
        var
    } else {
        Formula::not(var)
    }
}

fn negate_literal(lit: &Formula) -> Formula {
    match lit {
        Formula::Not(inner) => (**inner).clone(),
        other => Formula::not(other.clone()),
    }
}

fn random_literal(rng: &mut ChaCha8Rng, atoms: &[Atom]) -> Formula {
    let atom = &atoms[rng.gen_range(0..atoms.len())];
    literal(atom, rng.gen_bool(0.5))
}

fn random_base_formula(rng: &mut ChaCha8Rng, atoms: &[Atom]) -> Formula {
    if rng.gen_bool(0.35) {
        return random_literal(rng, atoms);
    }
    let i = rng.gen_range(0..atoms.len());
    let mut j = rng.gen_range(0..atoms.len() - 1);
    if j >= i {
        j += 1;
    }
    Formula::implies(
        literal(&atoms[i], rng.gen_bool(0.5)),
        literal(&atoms[j], rng.gen_bool(0.5)),
    )
}

/// Draws instances until one matches the configured class flags.
/// Deterministic in `cfg` (including the seed); fails with
/// `GenerationExhausted` after 10,000 candidates.
pub fn gen_instance(cfg: &InstanceConfig) -> Result<GeneratedInstance, AnchorError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let atoms: Vec<Atom> = ATOM_NAMES[..cfg.atom_count]
        .iter()
        .map(|name| Atom::new(name))
        .collect();
    let mut attempts: u32 = 0;
    loop {
        attempts += 1;
        if attempts > GENERATION_BUDGET {
            return Err(AnchorError::GenerationExhausted {
                budget: GENERATION_BUDGET,
            });
        }
        let candidate: Vec<Formula> = (0..cfg.base_size)
            .map(|_| random_base_formula(&mut rng, &atoms))
            .collect();
        let Ok(kb) = KnowledgeBase::new(candidate) else {
            continue;
        };

        let mut universe: Vec<Formula> = Vec::new();
        for atom in &atoms {
            universe.push(literal(atom, true));
            universe.push(literal(atom, false));
        }
        universe.extend(kb.base().iter().cloned());
        let universe = QueryUniverse::new(universe);

        // Candidate focal literals, in a seed-determined order.
        let mut literals: Vec<Formula> = Vec::new();
        for atom in &atoms {
            literals.push(literal(atom, true));
            literals.push(literal(atom, false));
        }
        for pick in (1..literals.len() + 1).rev() {
            literals.swap(pick - 1, rng.gen_range(0..pick));
        }

        for focal in &literals {
            let core = if cfg.require_counterfactual {
                // Contradict an entailed literal.
                if !crate::knowledge::in_closure(&kb, focal) {
                    continue;
                }
                negate_literal(focal)
            } else {
                // Assert something the base leaves open.
                let mut joint = kb.base().to_vec();
                joint.push(focal.clone());
                if !crate::entail::is_satisfiable(&joint).is_sat() {
                    continue;
                }
                focal.clone()
            };
            attempts += 1;
            if attempts > GENERATION_BUDGET {
                return Err(AnchorError::GenerationExhausted {
                    budget: GENERATION_BUDGET,
                });
            }
            let mut parts = vec![core.clone()];
            if rng.gen_bool(0.3) {
                parts.push(random_literal(&mut rng, &atoms));
            }
            let edit = match Edit::new(parts) {
                Ok(edit) => edit,
                Err(_) => Edit::new(vec![core]).expect("a single literal is consistent"),
            };
            let class = classify_edit(&kb, &edit, &universe)
                .expect("generated universes are nonempty");
            if cfg.require_counterfactual && !class.counterfactual {
                continue;
            }
            if cfg.require_non_local && !class.non_local {
                continue;
            }
            return Ok(GeneratedInstance {
                kb,
                edit,
                universe,
                class,
            });
        }
    }
}

// ---------- theorem verification ----------

/// The four boundary claims the harness replays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TheoremId {
    /// Applying an edit across a violated boundary wipes the post-edit
    /// base into inconsistency, and its closure into the whole universe.
    ExplosionOnViolation,
    /// The empty anchor fails the boundary check for non-local edits.
    EmptyAnchorFails,
    /// The greedy anchor always passes the boundary check.
    GreedyAnchorHolds,
    /// Anchoring everything the edit does not directly contradict is
    /// self-defeating: the anchor as a whole clashes with the edit.
    MaxAnchorDegenerates,
}

impl TheoremId {
    pub const ALL: [TheoremId; 4] = [
        TheoremId::ExplosionOnViolation,
        TheoremId::EmptyAnchorFails,
        TheoremId::GreedyAnchorHolds,
        TheoremId::MaxAnchorDegenerates,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TheoremId::ExplosionOnViolation => "explosion-on-violation",
            TheoremId::EmptyAnchorFails => "empty-anchor-fails",
            TheoremId::GreedyAnchorHolds => "greedy-anchor-holds",
            TheoremId::MaxAnchorDegenerates => "max-anchor-degenerates",
        }
    }
}

/// A replayable counterexample: the instance as a scenario (anchor set to
/// the directive that failed) plus what went wrong.
#[derive(Clone, Debug)]
pub struct FailureExemplar {
    pub trial: u32,
    pub theorem: TheoremId,
    pub detail: String,
    pub scenario: Scenario,
}

/// Outcome of a verification run.
#[derive(Clone, Debug)]
pub struct TheoremReport {
    pub trials: u32,
    /// Pass counts, indexed like `TheoremId::ALL`.
    pub passes: [u32; 4],
    pub failures: Vec<FailureExemplar>,
    pub elapsed: Duration,
}

impl TheoremReport {
    pub fn rate(&self, theorem: TheoremId) -> f64 {
        let idx = TheoremId::ALL
            .iter()
            .position(|t| *t == theorem)
            .expect("all theorems are indexed");
        self.passes[idx] as f64 / self.trials as f64
    }

    pub fn all_pass(&self) -> bool {
        self.passes.iter().all(|&p| p == self.trials)
    }
}

/// Seed for one trial, mixed so the stream is independent of worker count
/// and schedule (splitmix64 over the master seed and trial index).
fn trial_seed(master: u64, trial: u32) -> u64 {
    let mut z = master ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Checks one side of the violation/explosion equivalence: a violated
/// boundary must explode into the full universe under forced application,
/// a clean one must not explode at all. Returns the mismatch, if any.
fn explosion_mismatch(
    kb: &KnowledgeBase,
    anchor: &Anchor,
    edit: &Edit,
    u: &QueryUniverse,
    violated: bool,
) -> Option<String> {
    let outcome = apply_edit(kb, anchor, edit, Some(u), true)
        .expect("forced application only refuses degenerate anchors");
    if outcome.explosion != violated {
        return Some(format!(
            "boundary violated={violated} but explosion={}",
            outcome.explosion
        ));
    }
    if violated {
        let covered = outcome.post_closure.as_ref().map_or(0, Vec::len);
        if covered != u.len() {
            return Some(format!(
                "exploded base closes over {covered}/{} of the universe",
                u.len()
            ));
        }
    }
    None
}

fn check_trial(
    trial: u32,
    cfg: &InstanceConfig,
) -> Result<([bool; 4], Vec<FailureExemplar>), AnchorError> {
    let instance = gen_instance(cfg)?;
    let kb = &instance.kb;
    let edit = &instance.edit;
    let u = &instance.universe;
    let mut passes = [false; 4];
    let mut failures = Vec::new();
    let mut fail = |theorem: TheoremId, anchor: AnchorDirective, detail: String| {
        failures.push(FailureExemplar {
            trial,
            theorem,
            detail,
            scenario: instance.to_scenario(anchor),
        });
    };

    // Empty anchor: the boundary check must flag non-local edits.
    let empty = Anchor::empty();
    let empty_validity =
        validate_anchor(kb, &empty, edit, Some(u)).expect("empty anchor is always legal");
    let empty_violated = empty_validity.status == BoundaryStatus::Violated;
    if empty_violated {
        passes[1] = true;
    } else {
        fail(
            TheoremId::EmptyAnchorFails,
            AnchorDirective::None,
            "boundary check passed an empty anchor for a non-local edit".to_string(),
        );
    }

    // Greedy anchor: must exist and pass the boundary check.
    let greedy = match construct_anchor(kb, edit) {
        Ok(construction) => {
            match validate_anchor(kb, &construction.anchor, edit, Some(u)) {
                Ok(validity) if validity.status == BoundaryStatus::Ok => {
                    passes[2] = true;
                    Some(construction.anchor)
                }
                Ok(validity) => {
                    fail(
                        TheoremId::GreedyAnchorHolds,
                        AnchorDirective::Auto,
                        format!(
                            "constructed anchor violated the boundary, witness {:?}",
                            validity.witness.as_ref().map(render)
                        ),
                    );
                    Some(construction.anchor)
                }
                Err(e) => {
                    fail(
                        TheoremId::GreedyAnchorHolds,
                        AnchorDirective::Auto,
                        format!("validation refused the constructed anchor: {e}"),
                    );
                    None
                }
            }
        }
        Err(e) => {
            fail(
                TheoremId::GreedyAnchorHolds,
                AnchorDirective::Auto,
                format!("construction failed: {e}"),
            );
            None
        }
    };

    // Violation and explosion must coincide, on both anchors we can apply:
    // the empty anchor exercises the violated side, the greedy anchor the
    // clean side.
    let mut equivalence_holds = true;
    if let Some(detail) = explosion_mismatch(kb, &empty, edit, u, empty_violated) {
        equivalence_holds = false;
        fail(
            TheoremId::ExplosionOnViolation,
            AnchorDirective::None,
            detail,
        );
    }
    if let Some(greedy) = &greedy {
        let violated = !passes[2];
        if let Some(detail) = explosion_mismatch(kb, greedy, edit, u, violated) {
            equivalence_holds = false;
            fail(
                TheoremId::ExplosionOnViolation,
                AnchorDirective::Auto,
                detail,
            );
        }
    }
    passes[0] = equivalence_holds;

    // Maximal anchor: jointly incompatible with a non-local edit.
    let maximal = max_anchor(kb, edit, u).expect("generated universes are nonempty");
    let validity = validate_anchor(kb, &maximal, edit, Some(u))
        .expect("the maximal anchor is base-entailed by construction");
    if validity.degenerate {
        passes[3] = true;
    } else {
        fail(
            TheoremId::MaxAnchorDegenerates,
            AnchorDirective::Max,
            format!(
                "maximal anchor of {} formulas stayed jointly consistent with the edit",
                maximal.len()
            ),
        );
    }

    Ok((passes, failures))
}

/// Replays the four claims over `trials` generated instances. The master
/// seed is `cfg.seed`; each trial reseeds independently, so reports are
/// identical for any `workers` count. `workers` of 0 means 1.
pub fn verify_theorems(
    cfg: &InstanceConfig,
    trials: u32,
    workers: usize,
) -> Result<TheoremReport, AnchorError> {
    if trials == 0 {
        return Err(AnchorError::InvalidConfig(
            "trials must be positive".to_string(),
        ));
    }
    cfg.validate()?;
    let started = Instant::now();
    let workers = workers.max(1).min(trials as usize);
    let mut results: Vec<Result<([bool; 4], Vec<FailureExemplar>), AnchorError>> =
        Vec::with_capacity(trials as usize);

    if workers == 1 {
        for trial in 0..trials {
            let trial_cfg = InstanceConfig {
                seed: trial_seed(cfg.seed, trial),
                ..*cfg
            };
            results.push(check_trial(trial, &trial_cfg));
        }
    } else {
        let mut slots: Vec<Option<Result<([bool; 4], Vec<FailureExemplar>), AnchorError>>> =
            (0..trials).map(|_| None).collect();
        std::thread::scope(|scope| {
            let mut handles = Vec::with_capacity(workers);
            for worker in 0..workers {
                handles.push(scope.spawn(move || {
                    let mut mine = Vec::new();
                    let mut trial = worker as u32;
                    while trial < trials {
                        let trial_cfg = InstanceConfig {
                            seed: trial_seed(cfg.seed, trial),
                            ..*cfg
                        };
                        mine.push((trial, check_trial(trial, &trial_cfg)));
                        trial += workers as u32;
                    }
                    mine
                }));
            }
            for handle in handles {
                for (trial, result) in handle.join().expect("verification workers never panic") {
                    slots[trial as usize] = Some(result);
                }
            }
        });
        results.extend(slots.into_iter().map(|s| s.expect("every trial ran")));
    }

    let mut passes = [0u32; 4];
    let mut failures = Vec::new();
    for result in results {
        let (trial_passes, trial_failures) = result?;
        for (total, passed) in passes.iter_mut().zip(trial_passes) {
            *total += passed as u32;
        }
        failures.extend(trial_failures);
    }
    Ok(TheoremReport {
        trials,
        passes,
        failures,
        elapsed: started.elapsed(),
    })
}



#[cfg(test)]
mod verification_tests {
    use super::*;

    #[test]
    fn small_run_passes_every_claim() {
        let report = verify_theorems(&InstanceConfig::new(3), 25, 1).unwrap();
        assert_eq!(report.trials, 25);
        assert!(report.all_pass(), "failures: {:?}", report.failures);
        for theorem in TheoremId::ALL {
            assert_eq!(report.rate(theorem), 1.0, "{}", theorem.label());
        }
    }

    #[test]
    fn worker_count_does_not_change_the_report() {
        let solo = verify_theorems(&InstanceConfig::new(11), 12, 1).unwrap();
        let team = verify_theorems(&InstanceConfig::new(11), 12, 3).unwrap();
        assert_eq!(solo.passes, team.passes);
        assert_eq!(solo.failures.len(), team.failures.len());
    }

    #[test]
    fn zero_trials_is_a_config_error() {
        assert!(matches!(
            verify_theorems(&InstanceConfig::new(0), 0, 1),
            Err(AnchorError::InvalidConfig(_))
        ));
    }
}
