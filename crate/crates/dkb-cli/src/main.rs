//! Command-line front end: validate, rewrite, explore, query, check
//! consistency, and certify paths.
//!
//! Exit codes: 0 success, 1 negative domain verdict (inconsistent state,
//! path not certified), 2 usage or parse error, 3 internal invariant
//! violation. Verdicts go to stdout, diagnostics to stderr. Every
//! command accepts `--json` for machine-readable output; setting
//! `DKB_COLOR=0` disables ANSI styling.

use std::collections::BTreeSet;
use std::io::IsTerminal;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use dkb_core::model::Severity;
use dkb_core::{
    adom, parse_abox, parse_dkb, parse_path, parse_query, sorted_answers,
    Binding, ConsistencyChecker, Diagnostic, DkbDocument, ExploreError, ExploreMode,
    ExploreOptions, FocusPolicy, Individual, Name, PathError, ReplayOutcome, UnionQuery,
};

const EXIT_OK: u8 = 0;
const EXIT_NEGATIVE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "dkb", version, about = "Dynamic knowledge bases: guarded actions over DL-Lite ontologies")]
struct Cli {
    /// Emit machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a document and report well-formedness diagnostics.
    Validate {
        kb: String,
        /// Treat DL-Lite restriction warnings as errors.
        #[arg(long)]
        strict: bool,
    },
    /// Print the rewritten action set with blocking queries.
    Rewrite { kb: String },
    /// Build the (partial) transition system breadth-first.
    Explore {
        kb: String,
        #[command(flatten)]
        bounds: BoundsArgs,
        /// Explore the partial system instead of the complete one.
        #[arg(long)]
        partial: bool,
        /// Partial initial state (ABox file); requires --partial.
        #[arg(long)]
        init: Option<String>,
        /// Focus policy: `all`, `sig:Name,...`, `ind:name,...` or
        /// `sig:...;ind:...`.
        #[arg(long)]
        focus: Option<String>,
        /// Write a DOT rendering to this file.
        #[arg(long)]
        dot: Option<String>,
        /// Canonicalize generator-created names in states.
        #[arg(long)]
        quotient_iso: bool,
        /// Record blocked instantiations (dashed in DOT output).
        #[arg(long)]
        explain: bool,
        /// Re-check every state with the consistency oracle.
        #[arg(long)]
        audit: bool,
        /// Worker threads for frontier expansion; the result is
        /// identical for any value.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Certain answers of a query under the ontology.
    Query { kb: String, query: String },
    /// Decide consistency of the knowledge base.
    Consistent { kb: String },
    /// Build a path's global blocking query and certify its completion.
    CheckPath {
        kb: String,
        path: String,
        /// Partial initial state (ABox file); defaults to the full ABox.
        #[arg(long)]
        partial_init: Option<String>,
        /// Focus policy used to build the partial path (see explore).
        #[arg(long)]
        focus: Option<String>,
        /// Also replay the labels on the complete initial state.
        #[arg(long)]
        replay: bool,
    },
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, default_value_t = 8)]
    depth: usize,
    #[arg(long, default_value_t = 10_000)]
    max_states: usize,
    #[arg(long, default_value_t = 8)]
    fresh_pool: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(run(cli))
}

fn run(cli: Cli) -> u8 {
    match cli.command {
        Command::Validate { ref kb, strict } => cmd_validate(kb, strict, cli.json),
        Command::Rewrite { ref kb } => cmd_rewrite(kb, cli.json),
        Command::Explore {
            ref kb,
            ref bounds,
            partial,
            ref init,
            ref focus,
            ref dot,
            quotient_iso,
            explain,
            audit,
            threads,
        } => cmd_explore(
            kb,
            bounds,
            partial,
            init.as_deref(),
            focus.as_deref(),
            dot.as_deref(),
            quotient_iso,
            explain,
            audit,
            threads,
            cli.json,
        ),
        Command::Query { ref kb, ref query } => cmd_query(kb, query, cli.json),
        Command::Consistent { ref kb } => cmd_consistent(kb, cli.json),
        Command::CheckPath { ref kb, ref path, ref partial_init, ref focus, replay } => {
            cmd_check_path(kb, path, partial_init.as_deref(), focus.as_deref(), replay, cli.json)
        }
    }
}

fn styled(text: &str, code: &str) -> String {
    let colored = std::io::stdout().is_terminal()
        && std::env::var("DKB_COLOR").map(|v| v != "0").unwrap_or(true);
    if colored {
        format!("\x1b[{}m{}\x1b[0m", code, text)
    } else {
        text.to_string()
    }
}

fn read_file(path: &str) -> Result<String, u8> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {}", path, e);
        EXIT_USAGE
    })
}

fn report_diagnostics(diags: &[Diagnostic]) {
    for diag in diags {
        eprintln!("{}", diag);
    }
}

fn load_document(path: &str) -> Result<DkbDocument, u8> {
    let text = read_file(path)?;
    parse_dkb(&text).map_err(|diags| {
        report_diagnostics(&diags);
        EXIT_USAGE
    })
}

fn diag_json(diag: &Diagnostic) -> Value {
    json!({
        "severity": diag.severity.to_string(),
        "message": diag.message,
        "line": diag.span.map(|s| s.line),
        "column": diag.span.map(|s| s.column),
    })
}

fn cmd_validate(kb: &str, strict: bool, as_json: bool) -> u8 {
    let text = match read_file(kb) {
        Ok(text) => text,
        Err(code) => return code,
    };
    let (diags, parsed) = match parse_dkb(&text) {
        Ok(doc) => (dkb_core::validate_kb(&doc.kb, strict), true),
        Err(diags) => (diags, false),
    };
    let has_errors = !parsed || diags.iter().any(|d| d.severity == Severity::Error);
    if as_json {
        println!(
            "{}",
            json!({
                "ok": !has_errors,
                "diagnostics": diags.iter().map(diag_json).collect::<Vec<_>>(),
            })
        );
    } else {
        report_diagnostics(&diags);
        if has_errors {
            println!("{}", styled("invalid", "31"));
        } else {
            println!("{}", styled("valid", "32"));
        }
    }
    if has_errors {
        EXIT_USAGE
    } else {
        EXIT_OK
    }
}

fn render_atoms(atoms: &[dkb_core::QueryAtom]) -> String {
    atoms.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
}

fn cmd_rewrite(kb: &str, as_json: bool) -> u8 {
    let doc = match load_document(kb) {
        Ok(doc) => doc,
        Err(code) => return code,
    };
    let gamma = dkb_core::rewrite_actions(&doc.actions, &doc.kb.tbox);
    if as_json {
        let actions: Vec<Value> = gamma
            .iter()
            .map(|ra| {
                json!({
                    "name": ra.to_string(),
                    "base": ra.base.to_string(),
                    "guard": ra.guard.to_string(),
                    "new": ra.fresh_vars.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                    "add": ra.add_effects.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                    "del": ra.del_effects.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                    "ent": ra.ent_set.atoms().map(|a| a.to_string()).collect::<Vec<_>>(),
                    "blocking": ra.blocking.to_string(),
                })
            })
            .collect();
        println!("{}", json!({ "actions": actions }));
    } else {
        let field = |key: &str, value: String| {
            if value.is_empty() {
                println!("  {}:", key);
            } else {
                println!("  {}: {}", key, value);
            }
        };
        for ra in &gamma {
            println!("action {}", ra);
            field("guard", ra.guard.to_string());
            field(
                "new",
                ra.fresh_vars.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "),
            );
            field("add", render_atoms(&ra.add_effects));
            field("del", render_atoms(&ra.del_effects));
            field("ent", ra.ent_set.atoms().map(|a| a.to_string()).collect::<Vec<_>>().join(", "));
            field("blocking", ra.blocking.to_string());
        }
    }
    EXIT_OK
}

fn parse_focus(spec: Option<&str>) -> Result<FocusPolicy, u8> {
    let Some(spec) = spec else { return Ok(FocusPolicy::KeepAll) };
    if spec == "all" {
        return Ok(FocusPolicy::KeepAll);
    }
    let mut signature: Option<BTreeSet<Name>> = None;
    let mut individuals: Option<BTreeSet<Individual>> = None;
    for part in spec.split(';') {
        if let Some(rest) = part.strip_prefix("sig:") {
            signature =
                Some(rest.split(',').filter(|s| !s.is_empty()).map(Name::from).collect());
        } else if let Some(rest) = part.strip_prefix("ind:") {
            individuals = Some(
                rest.split(',').filter(|s| !s.is_empty()).map(Individual::from).collect(),
            );
        } else {
            eprintln!(
                "error: bad focus `{}`; expected `all`, `sig:...`, `ind:...` or `sig:...;ind:...`",
                part
            );
            return Err(EXIT_USAGE);
        }
    }
    Ok(match (signature, individuals) {
        (Some(sig), Some(ind)) => FocusPolicy::Both { signature: sig, individuals: ind },
        (Some(sig), None) => FocusPolicy::Signature(sig),
        (None, Some(ind)) => FocusPolicy::Individuals(ind),
        (None, None) => FocusPolicy::KeepAll,
    })
}

fn load_abox(path: &str) -> Result<dkb_core::ABox, u8> {
    let text = read_file(path)?;
    parse_abox(&text).map_err(|diags| {
        report_diagnostics(&diags);
        EXIT_USAGE
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_explore(
    kb: &str,
    bounds: &BoundsArgs,
    partial: bool,
    init: Option<&str>,
    focus: Option<&str>,
    dot: Option<&str>,
    quotient_iso: bool,
    explain: bool,
    audit: bool,
    threads: usize,
    as_json: bool,
) -> u8 {
    let doc = match load_document(kb) {
        Ok(doc) => doc,
        Err(code) => return code,
    };
    let mode = if partial {
        let initial = match init {
            Some(path) => match load_abox(path) {
                Ok(abox) => abox,
                Err(code) => return code,
            },
            None => {
                eprintln!("error: --partial requires --init <abox-file>");
                return EXIT_USAGE;
            }
        };
        let focus = match parse_focus(focus) {
            Ok(focus) => focus,
            Err(code) => return code,
        };
        ExploreMode::Partial { focus, initial }
    } else {
        if init.is_some() || focus.is_some() {
            eprintln!("error: --init/--focus require --partial");
            return EXIT_USAGE;
        }
        ExploreMode::Complete
    };
    let options = ExploreOptions {
        bounds: dkb_core::Bounds {
            max_depth: bounds.depth,
            max_states: bounds.max_states,
            fresh_pool: bounds.fresh_pool,
        },
        mode,
        audit,
        quotient_iso,
        record_blocked: explain,
        threads,
    };
    let ts = match dkb_core::explore(&doc.kb, &doc.actions, &options) {
        Ok(ts) => ts,
        Err(err @ ExploreError::InconsistentInitial) => {
            eprintln!("error: {}", err);
            return EXIT_NEGATIVE;
        }
        Err(err @ ExploreError::AuditFailure { .. }) => {
            eprintln!("internal error: {}", err);
            return EXIT_INTERNAL;
        }
        Err(err) => {
            eprintln!("error: {}", err);
            return EXIT_USAGE;
        }
    };
    if ts.truncated {
        eprintln!(
            "note: exploration truncated ({}); bounds were depth={}, max-states={}, fresh-pool={}",
            ts.truncation_reason.as_deref().unwrap_or("bound reached"),
            bounds.depth,
            bounds.max_states,
            bounds.fresh_pool
        );
    }
    if let Some(path) = dot {
        if let Err(e) = std::fs::write(path, ts.to_dot()) {
            eprintln!("error: cannot write {}: {}", path, e);
            return EXIT_USAGE;
        }
    }
    if as_json {
        let states: Vec<Value> = ts
            .states
            .iter()
            .map(|s| {
                json!({
                    "id": s.id,
                    "depth": s.depth,
                    "assertions": s.abox.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
                })
            })
            .collect();
        let edges: Vec<Value> = ts
            .edges
            .iter()
            .map(|e| {
                json!({
                    "source": e.source,
                    "target": e.target,
                    "action": e.action.to_string(),
                    "binding": binding_json(&e.binding),
                })
            })
            .collect();
        let blocked: Vec<Value> = ts
            .blocked
            .iter()
            .map(|b| {
                json!({
                    "source": b.source,
                    "action": b.action.to_string(),
                    "binding": binding_json(&b.binding),
                    "reason": b.reason,
                    "false_block": b.false_block,
                })
            })
            .collect();
        println!(
            "{}",
            json!({
                "states": states,
                "edges": edges,
                "blocked": blocked,
                "truncated": ts.truncated,
                "reason": ts.truncation_reason,
            })
        );
    } else {
        print!("{}", ts.serialize());
    }
    EXIT_OK
}

fn binding_json(binding: &Binding) -> Value {
    let map: serde_json::Map<String, Value> = binding
        .iter()
        .map(|(var, ind)| (var.to_string(), Value::String(ind.to_string())))
        .collect();
    Value::Object(map)
}

fn cmd_query(kb: &str, query_text: &str, as_json: bool) -> u8 {
    let doc = match load_document(kb) {
        Ok(doc) => doc,
        Err(code) => return code,
    };
    let known = adom(&doc.kb.abox);
    let query = match parse_query(query_text, &known) {
        Ok(q) => q,
        Err(diags) => {
            report_diagnostics(&diags);
            return EXIT_USAGE;
        }
    };
    // Certain answers via reformulation: rewrite every disjunct, evaluate
    // the union TBox-free.
    let mut rewritten = Vec::new();
    for cq in query.disjuncts() {
        match dkb_core::perfect_ref(cq, &doc.kb.tbox) {
            UnionQuery::Union(ds) => rewritten.extend(ds),
            UnionQuery::Top => unreachable!("reformulation never yields the true marker"),
        }
    }
    let rewritten = UnionQuery::Union(rewritten);
    let answers = match dkb_core::eval_ucq(&rewritten, &doc.kb.abox) {
        Ok(answers) => answers,
        Err(err) => {
            eprintln!("error: {}", err);
            return EXIT_USAGE;
        }
    };
    let free = query.disjuncts().first().map(|cq| cq.free_vars.clone()).unwrap_or_default();
    if free.is_empty() {
        let truth = !answers.is_empty();
        if as_json {
            println!("{}", json!({ "boolean": truth }));
        } else {
            println!("{}", truth);
        }
    } else if as_json {
        let rows: Vec<Value> = sorted_answers(&free, &answers).iter().map(binding_json).collect();
        println!("{}", json!({ "answers": rows }));
    } else {
        for answer in sorted_answers(&free, &answers) {
            println!("{}", answer);
        }
    }
    EXIT_OK
}

fn cmd_consistent(kb: &str, as_json: bool) -> u8 {
    let doc = match load_document(kb) {
        Ok(doc) => doc,
        Err(code) => return code,
    };
    let checker = ConsistencyChecker::new(&doc.kb.tbox);
    match checker.witness(&doc.kb.abox) {
        None => {
            if as_json {
                println!("{}", json!({ "consistent": true }));
            } else {
                println!("{}", styled("consistent", "32"));
            }
            EXIT_OK
        }
        Some((disjunct, binding)) => {
            if as_json {
                println!(
                    "{}",
                    json!({
                        "consistent": false,
                        "witness": {
                            "disjunct": disjunct.to_string(),
                            "binding": binding_json(&binding),
                        }
                    })
                );
            } else {
                println!("{}", styled("inconsistent", "31"));
                println!("witness: {} with {}", disjunct, binding);
            }
            EXIT_NEGATIVE
        }
    }
}

fn cmd_check_path(
    kb: &str,
    path_file: &str,
    partial_init: Option<&str>,
    focus: Option<&str>,
    with_replay: bool,
    as_json: bool,
) -> u8 {
    let doc = match load_document(kb) {
        Ok(doc) => doc,
        Err(code) => return code,
    };
    let labels = match read_file(path_file).and_then(|text| {
        parse_path(&text).map_err(|diags| {
            report_diagnostics(&diags);
            EXIT_USAGE
        })
    }) {
        Ok(labels) => labels,
        Err(code) => return code,
    };
    let label_pairs: Vec<(Name, Binding)> =
        labels.iter().map(|l| (l.action.clone(), l.binding.clone())).collect();
    let initial = match partial_init {
        Some(path) => match load_abox(path) {
            Ok(abox) => abox,
            Err(code) => return code,
        },
        None => doc.kb.abox.clone(),
    };
    let focus = match parse_focus(focus) {
        Ok(focus) => focus,
        Err(code) => return code,
    };
    let gamma = dkb_core::rewrite_actions(&doc.actions, &doc.kb.tbox);
    let path = match dkb_core::build_partial_path(initial, &label_pairs, &gamma, &focus) {
        Ok(path) => path,
        Err(err @ PathError::NotSubset) => {
            eprintln!("error: {}", err);
            return EXIT_USAGE;
        }
        Err(err) => {
            eprintln!("error: the labels do not form a partial path: {}", err);
            return EXIT_USAGE;
        }
    };
    let (gbq, verdict) = match dkb_core::check_completion(&path, &doc.kb.abox) {
        Ok(result) => result,
        Err(err) => {
            eprintln!("error: {}", err);
            return EXIT_USAGE;
        }
    };

    let replay_outcome = with_replay.then(|| {
        let checker = ConsistencyChecker::new(&doc.kb.tbox);
        dkb_core::replay(&doc.kb.abox, &label_pairs, &gamma, &checker)
    });

    let (verdict_word, code) = match &verdict {
        dkb_core::CompletionVerdict::Certified => ("certified", EXIT_OK),
        dkb_core::CompletionVerdict::NotCertified { .. } => ("not-certified", EXIT_NEGATIVE),
        dkb_core::CompletionVerdict::Tautology => ("tautology", EXIT_NEGATIVE),
    };

    if as_json {
        let replay_json = replay_outcome.as_ref().map(|outcome| match outcome {
            ReplayOutcome::Completed(states) => json!({
                "outcome": "completed",
                "states": states
                    .iter()
                    .map(|s| s.iter().map(|f| f.to_string()).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
            }),
            ReplayOutcome::InconsistentAt { step, .. } => {
                json!({ "outcome": "inconsistent", "step": step })
            }
            ReplayOutcome::GuardFailedAt { step, reason } => {
                json!({ "outcome": "guard-failed", "step": step, "reason": reason })
            }
        });
        let witness_json = match &verdict {
            dkb_core::CompletionVerdict::NotCertified { disjunct, witness } => {
                json!({ "disjunct": disjunct, "binding": binding_json(witness) })
            }
            _ => Value::Null,
        };
        println!(
            "{}",
            json!({
                "blocking_query": gbq.to_string(),
                "verdict": verdict_word,
                "witness": witness_json,
                "replay": replay_json,
            })
        );
    } else {
        println!("blocking query: {}", gbq);
        let painted = if code == EXIT_OK {
            styled(verdict_word, "32")
        } else {
            styled(verdict_word, "31")
        };
        println!("verdict: {}", painted);
        if let dkb_core::CompletionVerdict::NotCertified { disjunct, witness } = &verdict {
            println!("witness: {} with {}", disjunct, witness);
        }
        match &replay_outcome {
            Some(ReplayOutcome::Completed(states)) => {
                println!("replay: completed, all {} states consistent", states.len());
            }
            Some(ReplayOutcome::InconsistentAt { step, .. }) => {
                println!("replay: inconsistent at step {}", step);
            }
            Some(ReplayOutcome::GuardFailedAt { step, reason }) => {
                println!("replay: guard failed at step {} ({})", step, reason);
            }
            None => {}
        }
    }
    code
}
