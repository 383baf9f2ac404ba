//! Command-line surface for the editing engine: scenario execution,
//! theorem verification, LM probing, and the self-edit data pipeline.
//!
//! Exit codes separate three situations — 0: the tool ran and found
//! nothing wrong; 1: the tool itself failed (usage, missing file, parse
//! error, endpoint trouble); 2: the tool ran fine and the math found a
//! violation (boundary violated, explosion, missing anchor, a theorem
//! rate below 100%, or a score under the `--min-f1` gate).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use edikt::anchor::{construct_anchor, verify_theorems, AnchorError, InstanceConfig, TheoremId};
use edikt::editing::{
    apply_edit, classify_edit, max_anchor, validate_anchor, Anchor, BoundaryStatus,
};
use edikt::formula::{render, Formula};
use edikt::lmprobe::{
    sequence_probability, serialize_context, uncertainty_report, CertaintyRow, HttpLm, LmClient,
    MockLm, Probe, UncertaintyCase,
};
use edikt::scenario::{AnchorChoice, LoadedScenario, Scenario};
use edikt::selfedit::{
    augment_event, build_selfedit_dataset, filter_feasible, gen_qa, qa_to_completion,
    read_input_edits, score_unknown, write_jsonl, CompletionItem, DatasetOptions, EventEdit,
    Feasibility, InputEdit, QAPair, TrainingInstance,
};
use serde::Serialize;

const EXIT_FINDING: u8 = 2;

/// Environment variable holding the bearer token for `--endpoint`.
const API_KEY_VAR: &str = "EDIKT_API_KEY";

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version land here too; only real usage
            // errors take the error path.
            let code = u8::from(err.use_stderr());
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

// ---------- argument grammar ----------

#[derive(Parser)]
#[command(
    name = "edikt",
    version,
    about = "Deductive knowledge-editing toolkit: apply and classify edits, \
             verify the fallacy theorems, probe a language model, and build \
             self-edit training data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a scenario's edit to its knowledge base
    Apply(ApplyArgs),
    /// Classify a scenario's edit: counterfactual, non-global, non-local
    Classify(ScenarioArgs),
    /// Construct an anchor for a scenario (greedy scan, or --max)
    Anchor(AnchorArgs),
    /// Check the editing boundary for a scenario's anchor
    Validate(ScenarioArgs),
    /// Replay the theorem suite over generated instances
    Verify(VerifyArgs),
    /// Probe a language model's knowledge state
    Probe(ProbeArgs),
    /// Run the self-edit data pipeline stages
    Selfedit(SelfeditArgs),
    /// Score abstention quality against gold undecidability labels
    ScoreUnknown(ScoreArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file: {"kb": [..], "edit": [..], "anchor": [..]|"auto"|"max"|"none", "universe": [..], "order": [..]?}
    #[arg(long)]
    scenario: PathBuf,
    /// Emit machine-readable JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ApplyArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Override the scenario's anchor: "auto", "max", "none", or formulas separated by commas
    #[arg(long)]
    anchor: Option<String>,
    /// Apply even when the boundary check fails
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct AnchorArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Compute the maximal anchor instead of the greedy one (needs a universe)
    #[arg(long)]
    max: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Number of generated instances to replay
    #[arg(long)]
    trials: u32,
    /// Master seed; each trial reseeds independently of worker count
    #[arg(long)]
    seed: u64,
    /// Distinct atoms per generated instance (2..=12)
    #[arg(long, default_value_t = 5)]
    vars: usize,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Emit machine-readable JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ClientArgs {
    /// Completions-style endpoint URL (reads the API key from EDIKT_API_KEY)
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name to request from the endpoint
    #[arg(long)]
    model: Option<String>,
    /// Offline fixture file replaying scores and samples
    #[arg(long)]
    mock: Option<PathBuf>,
}

impl ClientArgs {
    fn client(&self) -> Result<Box<dyn LmClient>> {
        match (&self.endpoint, &self.mock) {
            (Some(url), None) => {
                let model = self.model.clone().unwrap_or_else(|| "default".to_string());
                let mut lm = HttpLm::new(url.clone(), model);
                if let Ok(key) = std::env::var(API_KEY_VAR) {
                    if !key.is_empty() {
                        lm = lm.with_api_key(key);
                    }
                }
                Ok(Box::new(lm))
            }
            (None, Some(path)) => Ok(Box::new(MockLm::from_file(path)?)),
            _ => bail!("exactly one of --endpoint or --mock is required"),
        }
    }
}

#[derive(Args)]
struct ProbeArgs {
    #[command(subcommand)]
    command: ProbeCommand,
}

#[derive(Subcommand)]
enum ProbeCommand {
    /// Score prompt/continuation probes against the knowledge threshold
    Knows(ProbeKnowsArgs),
    /// Score probes with a serialized context prepended (in-context closure)
    Closure(ProbeClosureArgs),
    /// Measure how answer certainty moves when edits are prepended
    Certainty(ProbeCertaintyArgs),
}

#[derive(Args)]
struct ProbeKnowsArgs {
    #[command(flatten)]
    client: ClientArgs,
    /// JSON file with probes: [{"x": prompt, "y": continuation, "label": id}]
    #[arg(long)]
    probes: PathBuf,
    /// Knowledge threshold ε in [0, 0.5): known means P(y|x) >= 1-ε
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    /// Emit machine-readable JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ProbeClosureArgs {
    #[command(flatten)]
    client: ClientArgs,
    /// JSON file: {"context": [statements], "probes": [{"x", "y", "label"}]}
    #[arg(long)]
    cases: PathBuf,
    /// Knowledge threshold ε in [0, 0.5)
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    /// Emit machine-readable JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ProbeCertaintyArgs {
    #[command(flatten)]
    client: ClientArgs,
    /// JSON file with cases: [{"id", "query", "candidates": [..], "edits": [[id, text], ..]}]
    #[arg(long)]
    cases: PathBuf,
    /// Emit machine-readable JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SelfeditArgs {
    #[command(subcommand)]
    command: SelfeditCommand,
}

#[derive(Subcommand)]
enum SelfeditCommand {
    /// Ask the model which edits any future event could make true
    Filter(SelfeditFilterArgs),
    /// Expand feasible edits into explaining events
    Augment(SelfeditAugmentArgs),
    /// Generate the five probing QA pairs per event (last one abstains)
    Qa(SelfeditQaArgs),
    /// Build fine-tuning data by letting the model quiz itself
    Dataset(SelfeditDatasetArgs),
}

#[derive(Args)]
struct SelfeditFilterArgs {
    #[command(flatten)]
    client: ClientArgs,
    /// JSONL benchmark edits: {"id","subject","relation","object","past","latest"}
    #[arg(long)]
    edits: PathBuf,
    /// Emit machine-readable JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SelfeditAugmentArgs {
    #[command(flatten)]
    client: ClientArgs,
    /// JSONL benchmark edits
    #[arg(long)]
    edits: PathBuf,
    /// Emit machine-readable JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SelfeditQaArgs {
    #[command(flatten)]
    client: ClientArgs,
    /// JSONL benchmark edits (provides past/latest per id)
    #[arg(long)]
    edits: PathBuf,
    /// Events file: output of `selfedit augment --json` or a bare event list
    #[arg(long)]
    events: PathBuf,
    /// Also recast each pair as a text-completion item
    #[arg(long)]
    completions: bool,
    /// Emit machine-readable JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SelfeditDatasetArgs {
    #[command(flatten)]
    client: ClientArgs,
    /// Events file: output of `selfedit augment --json` or a bare event list
    #[arg(long)]
    events: PathBuf,
    /// Self-generated questions per event
    #[arg(long, default_value_t = 5)]
    questions: usize,
    /// Write training JSONL here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit machine-readable JSON instead of bare training JSONL
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ScoreArgs {
    /// JSONL predictions: {"id", "answer"}
    #[arg(long)]
    predictions: PathBuf,
    /// JSONL gold labels: {"id", "undecidable"}
    #[arg(long)]
    gold: PathBuf,
    /// Exit 2 when F1 falls below this gate
    #[arg(long)]
    min_f1: Option<f64>,
    /// Emit machine-readable JSON
    #[arg(long)]
    json: bool,
}

// ---------- dispatch ----------

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Apply(args) => run_apply(args),
        Command::Classify(args) => run_classify(args),
        Command::Anchor(args) => run_anchor(args),
        Command::Validate(args) => run_validate(args),
        Command::Verify(args) => run_verify(args),
        Command::Probe(args) => match args.command {
            ProbeCommand::Knows(args) => run_probe_knows(args),
            ProbeCommand::Closure(args) => run_probe_closure(args),
            ProbeCommand::Certainty(args) => run_probe_certainty(args),
        },
        Command::Selfedit(args) => match args.command {
            SelfeditCommand::Filter(args) => run_selfedit_filter(args),
            SelfeditCommand::Augment(args) => run_selfedit_augment(args),
            SelfeditCommand::Qa(args) => run_selfedit_qa(args),
            SelfeditCommand::Dataset(args) => run_selfedit_dataset(args),
        },
        Command::ScoreUnknown(args) => run_score_unknown(args),
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_scenario(path: &Path) -> Result<LoadedScenario> {
    let text = read_file(path)?;
    let scenario =
        Scenario::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    scenario
        .load()
        .with_context(|| format!("loading {}", path.display()))
}

/// An `--anchor` override uses the same grammar as the scenario field,
/// with explicit formulas separated by commas.
fn parse_anchor_override(text: &str) -> Result<AnchorChoice> {
    match text {
        "auto" => Ok(AnchorChoice::Auto),
        "max" => Ok(AnchorChoice::Max),
        "none" => Ok(AnchorChoice::Explicit(Anchor::empty())),
        list => {
            let formulas = list
                .split(',')
                .map(|part| {
                    edikt::formula::parse(part.trim())
                        .with_context(|| format!("parsing anchor formula {:?}", part.trim()))
                })
                .collect::<Result<Vec<Formula>>>()?;
            Ok(AnchorChoice::Explicit(Anchor::new(formulas)))
        }
    }
}

fn resolve_anchor(loaded: &LoadedScenario, choice: &AnchorChoice) -> Result<Anchor> {
    match choice {
        AnchorChoice::Explicit(anchor) => Ok(anchor.clone()),
        AnchorChoice::Auto => Ok(construct_anchor(&loaded.kb, &loaded.edit)?.anchor),
        AnchorChoice::Max => {
            let universe = loaded
                .universe
                .as_ref()
                .context("the \"max\" anchor needs a universe in the scenario")?;
            Ok(max_anchor(&loaded.kb, &loaded.edit, universe)?)
        }
    }
}

fn render_all(formulas: &[Formula]) -> Vec<String> {
    formulas.iter().map(render).collect()
}

fn emit<T: Serialize>(json: bool, payload: &T, human: impl FnOnce()) {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(payload).expect("outputs serialize")
        );
    } else {
        human();
    }
}

// ---------- apply ----------

#[derive(Serialize)]
struct ApplyOutput {
    schema: &'static str,
    anchor: Vec<String>,
    force: bool,
    /// False when the boundary check blocked the edit.
    applied: bool,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<String>,
    degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    deleted: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    post_base: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    post_closure: Option<Vec<String>>,
    explosion: bool,
}

fn run_apply(args: ApplyArgs) -> Result<ExitCode> {
    let loaded = load_scenario(&args.scenario.scenario)?;
    let choice = match &args.anchor {
        Some(text) => parse_anchor_override(text)?,
        None => loaded.anchor.clone(),
    };
    let anchor = resolve_anchor(&loaded, &choice)?;
    let validity = validate_anchor(
        &loaded.kb,
        &anchor,
        &loaded.edit,
        loaded.universe.as_ref(),
    )?;
    let status = match validity.status {
        BoundaryStatus::Ok => "ok",
        BoundaryStatus::Violated => "violated",
    };

    let mut output = ApplyOutput {
        schema: "edikt/apply/v1",
        anchor: render_all(anchor.formulas()),
        force: args.force,
        applied: false,
        status,
        witness: validity.witness.as_ref().map(render),
        degenerate: validity.degenerate,
        deleted: None,
        post_base: None,
        post_closure: None,
        explosion: false,
    };

    let blocked = !validity.is_ok() && (!args.force || validity.degenerate);
    if !blocked {
        let outcome = apply_edit(
            &loaded.kb,
            &anchor,
            &loaded.edit,
            loaded.universe.as_ref(),
            args.force,
        )?;
        output.applied = true;
        output.deleted = Some(render_all(&outcome.deleted));
        output.post_base = Some(render_all(&outcome.post_base));
        output.post_closure = outcome.post_closure.as_deref().map(render_all);
        output.explosion = outcome.explosion;
    }

    emit(args.scenario.json, &output, || {
        println!("anchor: [{}]", output.anchor.join(", "));
        match (&output.witness, output.degenerate) {
            (Some(witness), true) => {
                println!("status: violated (degenerate anchor, witness {witness})")
            }
            (Some(witness), false) => println!("status: violated (witness {witness})"),
            (None, _) => println!("status: ok"),
        }
        if output.applied {
            let deleted = output.deleted.as_deref().unwrap_or_default();
            let post_base = output.post_base.as_deref().unwrap_or_default();
            println!("deleted: [{}]", deleted.join(", "));
            println!("post_base: [{}]", post_base.join(", "));
            if let Some(closure) = &output.post_closure {
                println!("post_closure: [{}]", closure.join(", "));
            }
            println!("explosion: {}", output.explosion);
        } else {
            println!("edit not applied");
        }
    });

    let finding = !output.applied || output.explosion;
    Ok(exit_for(finding))
}

fn exit_for(finding: bool) -> ExitCode {
    if finding {
        ExitCode::from(EXIT_FINDING)
    } else {
        ExitCode::SUCCESS
    }
}

// ---------- classify ----------

#[derive(Serialize)]
struct ClassifyOutput {
    schema: &'static str,
    counterfactual: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    counterfactual_witness: Option<String>,
    non_global: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    non_global_witness: Option<String>,
    non_local: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    non_local_witnesses: Option<[String; 2]>,
}

fn run_classify(args: ScenarioArgs) -> Result<ExitCode> {
    let loaded = load_scenario(&args.scenario)?;
    let universe = loaded
        .universe
        .as_ref()
        .context("classify needs a universe in the scenario")?;
    let class = classify_edit(&loaded.kb, &loaded.edit, universe)?;
    let output = ClassifyOutput {
        schema: "edikt/classify/v1",
        counterfactual: class.counterfactual,
        counterfactual_witness: class.counterfactual_witness.as_ref().map(render),
        non_global: class.non_global,
        non_global_witness: class.non_global_witness.as_ref().map(render),
        non_local: class.non_local,
        non_local_witnesses: class
            .non_local_witnesses
            .as_ref()
            .map(|(p, q)| [render(p), render(q)]),
    };
    emit(args.json, &output, || {
        match &output.counterfactual_witness {
            Some(w) => println!("counterfactual: true (witness {w})"),
            None => println!("counterfactual: {}", output.counterfactual),
        }
        match &output.non_global_witness {
            Some(w) => println!("non_global: true (witness {w})"),
            None => println!("non_global: {}", output.non_global),
        }
        match &output.non_local_witnesses {
            Some([p, q]) => println!("non_local: true (witnesses {p}; {q})"),
            None => println!("non_local: {}", output.non_local),
        }
    });
    Ok(ExitCode::SUCCESS)
}

// ---------- anchor ----------

#[derive(Serialize)]
struct AnchorOutput {
    schema: &'static str,
    mode: &'static str,
    found: bool,
    anchor: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    trace: Vec<TraceStep>,
}

#[derive(Serialize)]
struct TraceStep {
    index: usize,
    formula: String,
    accepted: bool,
}

fn run_anchor(args: AnchorArgs) -> Result<ExitCode> {
    let loaded = load_scenario(&args.scenario.scenario)?;
    let output = if args.max {
        let universe = loaded
            .universe
            .as_ref()
            .context("--max needs a universe in the scenario")?;
        let anchor = max_anchor(&loaded.kb, &loaded.edit, universe)?;
        AnchorOutput {
            schema: "edikt/anchor/v1",
            mode: "max",
            found: true,
            anchor: render_all(anchor.formulas()),
            trace: Vec::new(),
        }
    } else {
        match construct_anchor(&loaded.kb, &loaded.edit) {
            Ok(construction) => AnchorOutput {
                schema: "edikt/anchor/v1",
                mode: "greedy",
                found: true,
                anchor: render_all(construction.anchor.formulas()),
                trace: construction
                    .trace
                    .iter()
                    .map(|step| TraceStep {
                        index: step.index,
                        formula: render(&step.formula),
                        accepted: step.accepted,
                    })
                    .collect(),
            },
            Err(AnchorError::NoAnchorExists) => AnchorOutput {
                schema: "edikt/anchor/v1",
                mode: "greedy",
                found: false,
                anchor: Vec::new(),
                trace: Vec::new(),
            },
            Err(err) => return Err(err.into()),
        }
    };
    emit(args.scenario.json, &output, || {
        if output.found {
            println!("anchor ({}): [{}]", output.mode, output.anchor.join(", "));
            for step in &output.trace {
                let verdict = if step.accepted { "kept" } else { "dropped" };
                println!("  [{}] {}: {verdict}", step.index, step.formula);
            }
        } else {
            println!("no anchor exists: every base element contradicts the edit");
        }
    });
    Ok(exit_for(!output.found))
}

// ---------- validate ----------

#[derive(Serialize)]
struct ValidateOutput {
    schema: &'static str,
    anchor: Vec<String>,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<String>,
    degenerate: bool,
}

fn run_validate(args: ScenarioArgs) -> Result<ExitCode> {
    let loaded = load_scenario(&args.scenario)?;
    let anchor = resolve_anchor(&loaded, &loaded.anchor)?;
    let validity = validate_anchor(
        &loaded.kb,
        &anchor,
        &loaded.edit,
        loaded.universe.as_ref(),
    )?;
    let output = ValidateOutput {
        schema: "edikt/validate/v1",
        anchor: render_all(anchor.formulas()),
        status: match validity.status {
            BoundaryStatus::Ok => "ok",
            BoundaryStatus::Violated => "violated",
        },
        witness: validity.witness.as_ref().map(render),
        degenerate: validity.degenerate,
    };
    emit(args.json, &output, || {
        println!("anchor: [{}]", output.anchor.join(", "));
        match (&output.witness, output.degenerate) {
            (Some(witness), true) => {
                println!("status: violated (degenerate anchor, witness {witness})")
            }
            (Some(witness), false) => println!("status: violated (witness {witness})"),
            (None, _) => println!("status: ok"),
        }
    });
    Ok(exit_for(output.status == "violated"))
}

// ---------- verify ----------

#[derive(Serialize)]
struct VerifyOutput {
    schema: &'static str,
    trials: u32,
    seed: u64,
    vars: usize,
    workers: usize,
    elapsed_ms: u128,
    all_pass: bool,
    theorems: Vec<TheoremRateOutput>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    failures: Vec<FailureOutput>,
}

#[derive(Serialize)]
struct TheoremRateOutput {
    theorem: &'static str,
    passes: u32,
    rate: f64,
}

#[derive(Serialize)]
struct FailureOutput {
    trial: u32,
    theorem: &'static str,
    detail: String,
    scenario: Scenario,
}

fn run_verify(args: VerifyArgs) -> Result<ExitCode> {
    let mut cfg = InstanceConfig::new(args.seed);
    cfg.atom_count = args.vars;
    let report = verify_theorems(&cfg, args.trials, args.workers)?;
    let output = VerifyOutput {
        schema: "edikt/verify/v1",
        trials: args.trials,
        seed: args.seed,
        vars: args.vars,
        workers: args.workers,
        elapsed_ms: report.elapsed.as_millis(),
        all_pass: report.all_pass(),
        theorems: TheoremId::ALL
            .iter()
            .zip(report.passes)
            .map(|(theorem, passes)| TheoremRateOutput {
                theorem: theorem.label(),
                passes,
                rate: report.rate(*theorem),
            })
            .collect(),
        failures: report
            .failures
            .iter()
            .map(|failure| FailureOutput {
                trial: failure.trial,
                theorem: failure.theorem.label(),
                detail: failure.detail.clone(),
                scenario: failure.scenario.clone(),
            })
            .collect(),
    };
    emit(args.json, &output, || {
        for rate in &output.theorems {
            println!(
                "{}: {}/{} (rate {:.3})",
                rate.theorem, rate.passes, output.trials, rate.rate
            );
        }
        println!("elapsed: {:.2}s", output.elapsed_ms as f64 / 1000.0);
        for failure in &output.failures {
            println!(
                "FAIL trial {} [{}] {} — replay: {}",
                failure.trial,
                failure.theorem,
                failure.detail,
                serde_json::to_string(&failure.scenario).expect("scenarios serialize")
            );
        }
    });
    Ok(exit_for(!output.all_pass))
}

// ---------- probe ----------

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..0.5).contains(&epsilon) {
        bail!("epsilon must lie in [0, 0.5), got {epsilon}");
    }
    Ok(())
}

fn load_probes(path: &Path) -> Result<Vec<Probe>> {
    let text = read_file(path)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Serialize)]
struct KnowsOutput {
    schema: &'static str,
    epsilon: f64,
    probes: Vec<KnowsRow>,
}

#[derive(Serialize)]
struct KnowsRow {
    label: String,
    probability: f64,
    knows: bool,
}

fn knows_rows(
    client: &dyn LmClient,
    probes: &[Probe],
    epsilon: f64,
    contextualize: impl Fn(&str) -> String,
) -> Result<Vec<KnowsRow>> {
    probes
        .iter()
        .map(|probe| {
            let prompt = contextualize(&probe.x);
            let probability = sequence_probability(client, &prompt, &probe.y)?;
            Ok(KnowsRow {
                label: probe.label.clone(),
                probability,
                knows: probability >= 1.0 - epsilon,
            })
        })
        .collect()
}

fn print_knows_rows(rows: &[KnowsRow]) {
    for row in rows {
        println!(
            "{}: p={:.4} knows={}",
            row.label, row.probability, row.knows
        );
    }
}

fn run_probe_knows(args: ProbeKnowsArgs) -> Result<ExitCode> {
    check_epsilon(args.epsilon)?;
    let client = args.client.client()?;
    let probes = load_probes(&args.probes)?;
    let output = KnowsOutput {
        schema: "edikt/probe-knows/v1",
        epsilon: args.epsilon,
        probes: knows_rows(client.as_ref(), &probes, args.epsilon, |x| x.to_string())?,
    };
    emit(args.json, &output, || print_knows_rows(&output.probes));
    Ok(ExitCode::SUCCESS)
}

#[derive(serde::Deserialize)]
struct ClosureCases {
    context: Vec<String>,
    probes: Vec<Probe>,
}

#[derive(Serialize)]
struct ClosureOutput {
    schema: &'static str,
    epsilon: f64,
    context: Vec<String>,
    probes: Vec<KnowsRow>,
}

fn run_probe_closure(args: ProbeClosureArgs) -> Result<ExitCode> {
    check_epsilon(args.epsilon)?;
    let client = args.client.client()?;
    let text = read_file(&args.cases)?;
    let cases: ClosureCases =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.cases.display()))?;
    let rows = knows_rows(client.as_ref(), &cases.probes, args.epsilon, |x| {
        serialize_context(&cases.context, x)
    })?;
    let output = ClosureOutput {
        schema: "edikt/probe-closure/v1",
        epsilon: args.epsilon,
        context: cases.context.clone(),
        probes: rows,
    };
    emit(args.json, &output, || {
        println!("context: {} statements", output.context.len());
        print_knows_rows(&output.probes);
    });
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct CertaintyOutput {
    schema: &'static str,
    rows: Vec<CertaintyRow>,
}

fn run_probe_certainty(args: ProbeCertaintyArgs) -> Result<ExitCode> {
    let client = args.client.client()?;
    let text = read_file(&args.cases)?;
    let cases: Vec<UncertaintyCase> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.cases.display()))?;
    let output = CertaintyOutput {
        schema: "edikt/probe-certainty/v1",
        rows: uncertainty_report(client.as_ref(), &cases),
    };
    emit(args.json, &output, || {
        for row in &output.rows {
            let pre = row
                .pre
                .map(|p| format!("{p:.4}"))
                .unwrap_or_else(|| "-".to_string());
            let post = row
                .post
                .iter()
                .map(|m| {
                    let p = m
                        .probability
                        .map(|p| format!("{p:.4}"))
                        .unwrap_or_else(|| "-".to_string());
                    format!("post[{}]={p}", m.edit_id)
                })
                .collect::<Vec<_>>()
                .join(" ");
            match &row.error {
                Some(error) => println!("{}: pre={pre} {post} error: {error}", row.id),
                None => println!("{}: pre={pre} {post}", row.id),
            }
        }
    });
    Ok(ExitCode::SUCCESS)
}

// ---------- selfedit ----------

fn load_edits(path: &Path) -> Result<Vec<InputEdit>> {
    let text = read_file(path)?;
    Ok(read_input_edits(&text)?)
}

/// Accepts either a bare event list or the wrapped output of
/// `selfedit augment --json`, so stages chain without reshaping.
fn load_events(path: &Path) -> Result<Vec<EventEdit>> {
    let text = read_file(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let events = match value {
        serde_json::Value::Object(mut map) => map
            .remove("events")
            .with_context(|| format!("{} has no \"events\" field", path.display()))?,
        other => other,
    };
    serde_json::from_value(events).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Serialize)]
struct FilterOutput {
    schema: &'static str,
    verdicts: Vec<FilterRow>,
}

#[derive(Serialize)]
struct FilterRow {
    id: String,
    feasibility: Feasibility,
}

fn run_selfedit_filter(args: SelfeditFilterArgs) -> Result<ExitCode> {
    let client = args.client.client()?;
    let edits = load_edits(&args.edits)?;
    let verdicts = edits
        .iter()
        .map(|edit| {
            let feasibility = filter_feasible(client.as_ref(), edit)
                .with_context(|| format!("filtering edit {:?}", edit.id))?;
            Ok(FilterRow {
                id: edit.id.clone(),
                feasibility,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let output = FilterOutput {
        schema: "edikt/selfedit-filter/v1",
        verdicts,
    };
    emit(args.json, &output, || {
        for row in &output.verdicts {
            let word = match row.feasibility {
                Feasibility::Possible => "possible",
                Feasibility::Impossible => "impossible",
            };
            println!("{}: {word}", row.id);
        }
    });
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct AugmentOutput {
    schema: &'static str,
    events: Vec<EventEdit>,
}

fn run_selfedit_augment(args: SelfeditAugmentArgs) -> Result<ExitCode> {
    let client = args.client.client()?;
    let edits = load_edits(&args.edits)?;
    let events = edits
        .iter()
        .map(|edit| {
            augment_event(client.as_ref(), edit)
                .with_context(|| format!("augmenting edit {:?}", edit.id))
        })
        .collect::<Result<Vec<_>>>()?;
    let output = AugmentOutput {
        schema: "edikt/selfedit-augment/v1",
        events,
    };
    emit(args.json, &output, || {
        for event in &output.events {
            println!(
                "{}: {} triplet events; paragraph {} chars",
                event.id,
                event.triples.len(),
                event.paragraph.len()
            );
        }
    });
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct QaOutput {
    schema: &'static str,
    items: Vec<QaRow>,
}

#[derive(Serialize)]
struct QaRow {
    edit_id: String,
    pairs: Vec<QAPair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    completions: Option<Vec<CompletionItem>>,
}

fn run_selfedit_qa(args: SelfeditQaArgs) -> Result<ExitCode> {
    let client = args.client.client()?;
    let edits = load_edits(&args.edits)?;
    let events = load_events(&args.events)?;
    let mut items = Vec::with_capacity(events.len());
    for event in &events {
        let edit = edits
            .iter()
            .find(|edit| edit.id == event.id)
            .with_context(|| format!("no edit with id {:?} in {}", event.id, args.edits.display()))?;
        let pairs = gen_qa(client.as_ref(), &edit.past, &edit.latest, event)
            .with_context(|| format!("generating pairs for {:?}", event.id))?;
        let completions = if args.completions {
            Some(
                pairs
                    .iter()
                    .map(|pair| {
                        qa_to_completion(client.as_ref(), pair)
                            .with_context(|| format!("recasting a pair for {:?}", event.id))
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        items.push(QaRow {
            edit_id: event.id.clone(),
            pairs,
            completions,
        });
    }
    let output = QaOutput {
        schema: "edikt/selfedit-qa/v1",
        items,
    };
    emit(args.json, &output, || {
        for item in &output.items {
            println!("{}:", item.edit_id);
            for (index, pair) in item.pairs.iter().enumerate() {
                println!("  Question {}: {}", index + 1, pair.question);
                println!("  Answer {}: {}", index + 1, pair.answer);
            }
            if let Some(completions) = &item.completions {
                for completion in completions {
                    println!("  completion: {} | {}", completion.prefix, completion.target);
                }
            }
        }
    });
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct DatasetOutput {
    schema: &'static str,
    instances: Vec<TrainingInstance>,
    skipped: Vec<SkippedRow>,
}

#[derive(Serialize)]
struct SkippedRow {
    id: String,
    reason: String,
}

fn run_selfedit_dataset(args: SelfeditDatasetArgs) -> Result<ExitCode> {
    let client = args.client.client()?;
    let events = load_events(&args.events)?;
    let options = DatasetOptions {
        questions_per_event: args.questions,
    };
    let build = build_selfedit_dataset(client.as_ref(), &events, &options)?;
    for skip in &build.skipped {
        eprintln!("skipped {}: {}", skip.id, skip.reason);
    }
    let jsonl = write_jsonl(&build.instances);
    if let Some(path) = &args.out {
        fs::write(path, &jsonl).with_context(|| format!("writing {}", path.display()))?;
        eprintln!(
            "wrote {} instances to {} ({} events skipped)",
            build.instances.len(),
            path.display(),
            build.skipped.len()
        );
    }
    let output = DatasetOutput {
        schema: "edikt/selfedit-dataset/v1",
        instances: build.instances.clone(),
        skipped: build
            .skipped
            .iter()
            .map(|skip| SkippedRow {
                id: skip.id.clone(),
                reason: skip.reason.clone(),
            })
            .collect(),
    };
    emit(args.json, &output, || {
        if args.out.is_none() {
            print!("{jsonl}");
        }
    });
    Ok(ExitCode::SUCCESS)
}

// ---------- score-unknown ----------

#[derive(serde::Deserialize)]
struct PredictionLine {
    id: String,
    answer: String,
}

#[derive(serde::Deserialize)]
struct GoldLine {
    id: String,
    undecidable: bool,
}

fn read_jsonl_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_file(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(offset, line)| {
            serde_json::from_str(line)
                .with_context(|| format!("{} line {}", path.display(), offset + 1))
        })
        .collect()
}

#[derive(Serialize)]
struct ScoreOutput {
    schema: &'static str,
    precision: f64,
    recall: f64,
    f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_f1: Option<f64>,
    pass: bool,
}

fn run_score_unknown(args: ScoreArgs) -> Result<ExitCode> {
    let predictions: Vec<PredictionLine> = read_jsonl_records(&args.predictions)?;
    let gold: Vec<GoldLine> = read_jsonl_records(&args.gold)?;
    let predictions: Vec<(String, String)> = predictions
        .into_iter()
        .map(|line| (line.id, line.answer))
        .collect();
    let gold: Vec<(String, bool)> = gold
        .into_iter()
        .map(|line| (line.id, line.undecidable))
        .collect();
    let score = score_unknown(&predictions, &gold)?;
    let pass = args.min_f1.is_none_or(|gate| score.f1 >= gate);
    let output = ScoreOutput {
        schema: "edikt/score-unknown/v1",
        precision: score.precision,
        recall: score.recall,
        f1: score.f1,
        min_f1: args.min_f1,
        pass,
    };
    emit(args.json, &output, || {
        println!("precision: {:.3}", output.precision);
        println!("recall: {:.3}", output.recall);
        println!("f1: {:.3}", output.f1);
        if let Some(gate) = output.min_f1 {
            let verdict = if output.pass { "pass" } else { "fail" };
            println!("gate: f1 >= {gate:.3} — {verdict}");
        }
    });
    Ok(exit_for(!pass))
}
