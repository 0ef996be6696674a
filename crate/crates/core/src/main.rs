use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use imds::analysis::{analyze, render_report_text};
use imds::canonical::{canonical_decomposition, CanonicalMode};
use imds::decomposition::{classify, is_decomposition, tally, CommForm, Decomposition, Scope};
use imds::engine::{reach, run, EngineError, Policy, ReachBounds, ReachGraph};
use imds::io::{decomposition_to_docs, parse_decomposition, parse_model, render_trace_json, render_trace_text};
use imds::model::{validate_system, SystemSpec};
use imds::petri::{
    check_safe, colored_replay, export_net_dot, export_reach_dot, extract_processes, to_petri,
    ColoredTrace, DotColoring, End, ProcessRole, Start,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_BOUND: u8 = 3;

#[derive(Parser)]
#[command(name = "imds", version, about = "Item-based distributed system models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Interleaving,
    Max,
    Intermediate,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Traveler,
    Resident,
    Custom,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Dot,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum GraphArg {
    Net,
    Reach,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ColorBy {
    Marking,
    Tag,
    Location,
}

#[derive(Args)]
struct Common {
    /// Model file (JSON).
    model: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long, value_enum, default_value = "interleaving")]
    policy: PolicyArg,
    /// Number of nodes per step under the intermediate policy.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    max_steps: usize,
}

#[derive(Args)]
struct StateBound {
    #[arg(long, default_value_t = 1_000_000)]
    max_states: usize,
}

#[derive(Args)]
struct DecompArgs {
    #[arg(long, value_enum, default_value = "traveler")]
    mode: ModeArg,
    /// Decomposition file, required with --mode custom.
    #[arg(long)]
    decomposition: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model against the static rules.
    Validate(Common),
    /// Run the system under a concurrency policy and print the trace.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Print the colored token-game trace (JSON) instead.
        #[arg(long)]
        colored: bool,
    },
    /// Build the reachability graph (interleaving edges; every policy's
    /// steps serialize into these).
    Reach {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        bound: StateBound,
    },
    /// Print a decomposition and check it.
    Decompose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        decomp: DecompArgs,
    },
    /// Classify the communication events of every reachability edge.
    Classify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        decomp: DecompArgs,
        #[command(flatten)]
        bound: StateBound,
    },
    /// Terminal-state verdicts and per-tag progress.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        bound: StateBound,
    },
    /// DOT export of the Petri net or the reachability graph.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "net")]
        graph: GraphArg,
        #[arg(long, value_enum, default_value = "marking")]
        color_by: ColorBy,
        #[command(flatten)]
        bound: StateBound,
    },
    /// Extract traveler and resident processes from a colored trace
    /// recorded with `run --colored`.
    Extract {
        /// Colored trace file (JSON).
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check 1-safety of the Petri net over all reachable markings.
    Safety {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        bound: StateBound,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

type Outcome = Result<(String, u8), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<SystemSpec, Failure> {
    let text = read(path)?;
    parse_model(&text).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))
}

/// Parses and validates; invalid models fail with the diagnostics.
fn load_valid(path: &Path) -> Result<SystemSpec, Failure> {
    let spec = load(path)?;
    let report = validate_system(&spec);
    if !report.is_ok() {
        let lines: Vec<String> = report.diagnostics.iter().map(|d| d.to_string()).collect();
        return Err(Failure::new(EXIT_FAILURE, lines.join("\n")));
    }
    Ok(spec)
}

fn engine_failure(e: EngineError) -> Failure {
    match e {
        EngineError::BoundExceeded { .. } => Failure::new(EXIT_BOUND, e.to_string()),
        other => Failure::new(EXIT_FAILURE, other.to_string()),
    }
}

fn build_reach(spec: &SystemSpec, bound: &StateBound) -> Result<ReachGraph, Failure> {
    reach(
        spec,
        ReachBounds {
            max_states: bound.max_states,
        },
    )
    .map_err(engine_failure)
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

fn unsupported(format: Format, command: &str) -> Failure {
    Failure::new(
        EXIT_FAILURE,
        format!("format {format:?} is not supported by {command}").to_lowercase(),
    )
}

fn decomposition(spec: &SystemSpec, args: &DecompArgs) -> Result<Decomposition, Failure> {
    match args.mode {
        ModeArg::Traveler => Ok(canonical_decomposition(spec, CanonicalMode::Traveler)),
        ModeArg::Resident => Ok(canonical_decomposition(spec, CanonicalMode::Resident)),
        ModeArg::Custom => {
            let path = args
                .decomposition
                .as_ref()
                .ok_or_else(|| Failure::new(EXIT_PARSE, "--mode custom needs --decomposition"))?;
            let text = read(path)?;
            parse_decomposition(&text, spec)
                .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))
        }
    }
}

fn cmd_validate(c: &Common) -> Outcome {
    let spec = load(&c.model)?;
    let report = validate_system(&spec);
    let code = if report.is_ok() { 0 } else { EXIT_FAILURE };
    let out = match c.format {
        Format::Text => {
            if report.is_ok() {
                "ok\n".to_string()
            } else {
                report.diagnostics.iter().map(|d| format!("{d}\n")).collect()
            }
        }
        Format::Json => {
            let v: Vec<serde_json::Value> = report
                .diagnostics
                .iter()
                .map(|d| {
                    serde_json::json!({
                        "action": d.action,
                        "clause": d.clause.code(),
                        "message": d.message,
                    })
                })
                .collect();
            json(&serde_json::json!({ "ok": report.is_ok(), "diagnostics": v }))
        }
        Format::Dot => return Err(unsupported(c.format, "validate")),
    };
    Ok((out, code))
}

fn cmd_run(c: &Common, p: &PolicyArgs, colored: bool) -> Outcome {
    let spec = load_valid(&c.model)?;
    let policy = match p.policy {
        PolicyArg::Interleaving => Policy::interleaving(p.seed),
        PolicyArg::Max => Policy::max_concurrency(p.seed),
        PolicyArg::Intermediate => {
            if p.k == 0 {
                return Err(Failure::new(EXIT_PARSE, "--k must be positive"));
            }
            Policy::intermediate(p.k, p.seed)
        }
    };
    let trace = run(&spec, policy, p.max_steps).map_err(engine_failure)?;
    if colored {
        let ct = colored_replay(&spec, &trace).map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?;
        return match c.format {
            Format::Dot => Err(unsupported(c.format, "run --colored")),
            _ => Ok((json(&ct), 0)),
        };
    }
    let out = match c.format {
        Format::Text => render_trace_text(&trace, spec.symbols()),
        Format::Json => render_trace_json(&trace, spec.symbols()),
        Format::Dot => return Err(unsupported(c.format, "run")),
    };
    Ok((out, 0))
}

fn cmd_reach(c: &Common, bound: &StateBound) -> Outcome {
    let spec = load_valid(&c.model)?;
    let g = build_reach(&spec, bound)?;
    let sym = spec.symbols();
    let out = match c.format {
        Format::Text => {
            let mut out = format!(
                "{} states, {} transitions, {} terminal\n",
                g.states.len(),
                g.edges.len(),
                g.terminal.len()
            );
            for (i, s) in g.states.iter().enumerate() {
                out.push_str(&format!("s{i} {{{}}}\n", s.render(sym).join(", ")));
            }
            for e in &g.edges {
                out.push_str(&format!("s{} -{}-> s{}\n", e.source, e.fired.action_id, e.target));
            }
            out
        }
        Format::Json => json(&serde_json::json!({
            "states": g.states.iter().map(|s| s.render(sym)).collect::<Vec<_>>(),
            "edges": g.edges.iter().map(|e| serde_json::json!({
                "source": e.source, "target": e.target, "action": e.fired.action_id,
            })).collect::<Vec<_>>(),
            "terminal": g.terminal,
        })),
        Format::Dot => export_reach_dot(&g, sym),
    };
    Ok((out, 0))
}

fn cmd_decompose(c: &Common, args: &DecompArgs) -> Outcome {
    let spec = load_valid(&c.model)?;
    let d = decomposition(&spec, args)?;
    let report = is_decomposition(&d, &spec);
    let code = if report.is_decomposition() { 0 } else { EXIT_FAILURE };
    let sym = spec.symbols();
    let out = match c.format {
        Format::Text => {
            let mut out = String::new();
            for q in &d.quotas {
                let items: Vec<String> = q.items().map(|i| sym.show(&i)).collect();
                out.push_str(&format!("{}: {{{}}}\n", q.name, items.join(", ")));
            }
            if report.is_decomposition() {
                out.push_str("decomposition: yes\n");
            } else {
                out.push_str("decomposition: no\n");
                for l in report.render(&spec) {
                    out.push_str(&format!("  {l}\n"));
                }
            }
            out
        }
        Format::Json => json(&serde_json::json!({
            "quotas": decomposition_to_docs(&d, sym),
            "decomposition": report.is_decomposition(),
            "issues": report.render(&spec),
        })),
        Format::Dot => return Err(unsupported(c.format, "decompose")),
    };
    Ok((out, code))
}

fn cmd_classify(c: &Common, args: &DecompArgs, bound: &StateBound) -> Outcome {
    let spec = load_valid(&c.model)?;
    let d = decomposition(&spec, args)?;
    let g = build_reach(&spec, bound)?;
    let sym = spec.symbols();
    let mut all = Vec::new();
    let mut lines = String::new();
    let mut records = Vec::new();
    for e in &g.edges {
        let events = classify(&e.fired, &d);
        for ev in &events {
            let item = ev.item.map(|i| sym.show(&i));
            lines.push_str(&format!(
                "s{}->s{} {} {} {} {}{} -> {}\n",
                e.source,
                e.target,
                ev.action_id,
                ev.scope,
                ev.form,
                item.as_deref().map(|i| format!("{i} ")).unwrap_or_default(),
                ev.from,
                ev.to
            ));
            records.push(serde_json::json!({
                "source": e.source, "target": e.target, "action": ev.action_id,
                "scope": ev.scope.to_string(), "form": ev.form.to_string(),
                "item": item, "from": ev.from, "to": ev.to,
            }));
        }
        all.extend(events);
    }
    let counts = tally(&all);
    let count = |f: CommForm, s: Scope| counts.get(&(f, s)).copied().unwrap_or(0);
    let forms = [CommForm::Synchronous, CommForm::Passing, CommForm::Sharing];
    let out = match c.format {
        Format::Text => {
            for s in [Scope::External, Scope::Internal] {
                for f in forms {
                    lines.push_str(&format!("{s} {f}: {}\n", count(f, s)));
                }
            }
            lines
        }
        Format::Json => {
            let mut totals = serde_json::Map::new();
            for s in [Scope::External, Scope::Internal] {
                for f in forms {
                    totals.insert(format!("{s}_{f}"), count(f, s).into());
                }
            }
            json(&serde_json::json!({ "events": records, "totals": totals }))
        }
        Format::Dot => return Err(unsupported(c.format, "classify")),
    };
    Ok((out, 0))
}

fn cmd_analyze(c: &Common, bound: &StateBound) -> Outcome {
    let spec = load_valid(&c.model)?;
    let g = build_reach(&spec, bound)?;
    let r = analyze(&g, &spec).map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?;
    let out = match c.format {
        Format::Text => render_report_text(&r),
        Format::Json => json(&r),
        Format::Dot => return Err(unsupported(c.format, "analyze")),
    };
    Ok((out, 0))
}

fn cmd_export(c: &Common, graph: GraphArg, color_by: ColorBy, bound: &StateBound) -> Outcome {
    let spec = load_valid(&c.model)?;
    if c.format == Format::Json {
        return Err(unsupported(c.format, "export"));
    }
    let out = match graph {
        GraphArg::Net => {
            let coloring = match color_by {
                ColorBy::Marking => DotColoring::Marking,
                ColorBy::Tag => DotColoring::ByTag,
                ColorBy::Location => DotColoring::ByLocation,
            };
            export_net_dot(&to_petri(&spec), spec.symbols(), coloring)
        }
        GraphArg::Reach => export_reach_dot(&build_reach(&spec, bound)?, spec.symbols()),
    };
    Ok((out, 0))
}

fn cmd_extract(trace: &Path, format: Format) -> Outcome {
    let text = read(trace)?;
    let ct: ColoredTrace = serde_json::from_str(&text).map_err(|e| {
        Failure::new(
            EXIT_PARSE,
            format!("{}: line {}, column {}: {e}", trace.display(), e.line(), e.column()),
        )
    })?;
    let procs = extract_processes(&ct);
    let out = match format {
        Format::Text => {
            let mut out = String::new();
            for p in &procs {
                let start = match p.start {
                    Start::Static => "static".to_string(),
                    Start::Dynamic { step } => format!("born@{step}"),
                };
                let end = match p.end {
                    End::Open => "open".to_string(),
                    End::Terminated { step } => format!("terminated@{step}"),
                };
                let actions: Vec<&str> = p.trace.iter().map(|f| f.action.as_str()).collect();
                let role = match p.role {
                    ProcessRole::Traveler => "traveler",
                    ProcessRole::Resident => "resident",
                };
                out.push_str(&format!(
                    "{} {} {} {} {} [{}]\n",
                    role,
                    p.subject,
                    p.color,
                    start,
                    end,
                    actions.join(", ")
                ));
            }
            out
        }
        Format::Json => json(&procs),
        Format::Dot => return Err(unsupported(format, "extract")),
    };
    Ok((out, 0))
}

fn cmd_safety(c: &Common, bound: &StateBound) -> Outcome {
    let spec = load_valid(&c.model)?;
    let r = check_safe(&spec, bound.max_states).map_err(|e| match e {
        imds::petri::PetriError::BoundExceeded(_) => Failure::new(EXIT_BOUND, e.to_string()),
        other => Failure::new(EXIT_FAILURE, other.to_string()),
    })?;
    let code = if r.safe { 0 } else { EXIT_FAILURE };
    let growth = r.growth.as_ref().map(|g| format!("{} needs a fresh {}", g.action, g.kind));
    let out = match c.format {
        Format::Text => {
            let mut out = format!(
                "{}: {} markings, max {} live tags, max {} live locations\n",
                if r.safe { "1-safe" } else { "not 1-safe" },
                r.markings,
                r.max_live_tags,
                r.max_live_locations
            );
            if let Some(p) = &r.unsafe_place {
                out.push_str(&format!("two tokens on {p}\n"));
            }
            if let Some(g) = &growth {
                out.push_str(&format!("growth beyond pool: {g}\n"));
            }
            out
        }
        Format::Json => json(&serde_json::json!({
            "safe": r.safe, "markings": r.markings, "unsafe_place": r.unsafe_place,
            "max_live_tags": r.max_live_tags, "max_live_locations": r.max_live_locations,
            "growth": growth,
        })),
        Format::Dot => return Err(unsupported(c.format, "safety")),
    };
    Ok((out, code))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (outcome, out_path) = match &cli.command {
        Command::Validate(c) => (cmd_validate(c), &c.out),
        Command::Run { common, policy, colored } => (cmd_run(common, policy, *colored), &common.out),
        Command::Reach { common, bound } => (cmd_reach(common, bound), &common.out),
        Command::Decompose { common, decomp } => (cmd_decompose(common, decomp), &common.out),
        Command::Classify { common, decomp, bound } => {
            (cmd_classify(common, decomp, bound), &common.out)
        }
        Command::Analyze { common, bound } => (cmd_analyze(common, bound), &common.out),
        Command::Export { common, graph, color_by, bound } => {
            (cmd_export(common, *graph, *color_by, bound), &common.out)
        }
        Command::Extract { trace, format, out } => (cmd_extract(trace, *format), out),
        Command::Safety { common, bound } => (cmd_safety(common, bound), &common.out),
    };
    match outcome {
        Ok((text, code)) => {
            match out_path {
                Some(path) => {
                    if let Err(e) = fs::write(path, &text) {
                        eprintln!("{}: {e}", path.display());
                        return ExitCode::from(EXIT_FAILURE);
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
