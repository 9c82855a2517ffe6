//! Command-line driver: analyze `.tl` files, check the inferred contracts
//! against the interpreter, and reproduce the corpus table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use abducer_core::biabduction::{canonical_contract, Contract};
use abducer_core::engine::{analyze_program, Analysis, Fault, FunctionSummary, Options, Status};
use abducer_core::frontend::{compile, FnKind, Program};
use abducer_core::interpreter::oracle::{check_contract, OracleOptions, SoundnessReport};
use abducer_core::seplogic::Var;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_UNSOUND: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "abducer", version, about = "Shape analysis with contract inference for a small heap language")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Infer contracts for every function in a file.
    Analyze {
        path: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Infer contracts, then run them against the interpreter.
    Check {
        path: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Analyze and check every `.tl` file in a directory against its `.expect` file.
    Corpus {
        dir: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Args, Clone, Debug)]
pub struct Flags {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// 1 adds diagnostics and certificates, 2 adds the engine trace.
    #[arg(long, default_value_t = 0)]
    pub verbose: u8,
    #[arg(long, env = "ABDUCER_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 5)]
    pub max_cells: usize,
    #[arg(long, default_value_t = 8)]
    pub loop_bound: usize,
    #[arg(long, default_value_t = 64)]
    pub max_worlds: usize,
    /// Deliberately break the analysis: no-shared-learning or skip-verification.
    #[arg(long)]
    pub fault: Option<Fault>,
}

impl Default for Flags {
    fn default() -> Self {
        Flags {
            format: Format::Text,
            verbose: 0,
            seed: 0,
            samples: 200,
            max_cells: 5,
            loop_bound: 8,
            max_worlds: 64,
            fault: None,
        }
    }
}

impl Flags {
    pub fn engine(&self) -> Options {
        Options { max_worlds: self.max_worlds, trace: self.verbose >= 2, fault: self.fault, ..Options::default() }
    }

    pub fn oracle(&self) -> OracleOptions {
        OracleOptions {
            samples: self.samples,
            max_cells: self.max_cells,
            loop_bound: self.loop_bound,
            seed: self.seed,
            ..OracleOptions::default()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum InputError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {msg}")]
    Frontend { path: String, msg: String },
}

pub fn load(path: &Path) -> Result<Program, InputError> {
    let shown = path.display().to_string();
    let src = std::fs::read_to_string(path).map_err(|e| InputError::Io { path: shown.clone(), source: e })?;
    compile(&src).map_err(|e| InputError::Frontend { path: shown, msg: e.to_string() })
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct VarsJson {
    pub anchors: Vec<String>,
    pub logicals: Vec<String>,
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct ContractJson {
    pub pre: String,
    pub post: Vec<String>,
    pub vars: VarsJson,
}

impl ContractJson {
    pub fn of(c: &Contract) -> ContractJson {
        let c = canonical_contract(c);
        let mut all: BTreeSet<Var> = c.pre.vars();
        for q in &c.posts {
            all.extend(q.vars());
        }
        ContractJson {
            pre: c.pre.to_string(),
            post: c.posts.iter().map(|q| q.to_string()).collect(),
            vars: VarsJson {
                anchors: all.iter().filter(|v| v.is_anchor()).map(|v| v.to_string()).collect(),
                logicals: all.iter().filter(|v| v.is_plain_logical()).map(|v| v.to_string()).collect(),
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FunctionReport {
    pub function: String,
    pub contracts: Vec<ContractJson>,
    pub status: &'static str,
    pub diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<SoundnessReport>,
}

impl FunctionReport {
    pub fn of(s: &FunctionSummary) -> FunctionReport {
        let mut diagnostics: Vec<String> = s.failure.iter().map(|f| f.to_string()).collect();
        diagnostics.extend(s.diagnostics.iter().cloned());
        FunctionReport {
            function: s.name.clone(),
            contracts: s.contracts.iter().map(ContractJson::of).collect(),
            status: match s.status {
                Status::Analyzed => "analyzed",
                Status::Failed => "failed",
            },
            diagnostics,
            iterations: s.iterations,
            oracle: None,
        }
    }
}

/// Summaries in program order, callees first.
pub fn ordered<'a>(prog: &Program, a: &'a Analysis) -> Vec<&'a FunctionSummary> {
    prog.order.iter().filter_map(|f| a.summaries.get(f)).collect()
}

pub fn check_summaries(prog: &Program, a: &Analysis, opts: &OracleOptions) -> BTreeMap<String, SoundnessReport> {
    ordered(prog, a)
        .into_iter()
        .filter(|s| s.status == Status::Analyzed)
        .map(|s| (s.name.clone(), check_contract(prog, &s.name, &s.contracts, opts)))
        .collect()
}

fn render_text(
    prog: &Program,
    a: &Analysis,
    oracle: Option<&BTreeMap<String, SoundnessReport>>,
    verbose: u8,
) -> String {
    let mut out = String::new();
    for s in ordered(prog, a) {
        let kind = match (s.kind, s.iterations) {
            (FnKind::Loop, Some(n)) => format!(" [loop, {n} body analyses]"),
            (FnKind::Loop, None) => " [loop]".to_string(),
            _ => String::new(),
        };
        match &s.failure {
            Some(f) if s.status == Status::Failed => {
                let _ = writeln!(out, "function {}{kind}: failed ({f})", s.name);
            }
            _ => {
                let _ = writeln!(out, "function {}{kind}: analyzed", s.name);
            }
        }
        for (k, c) in s.contracts.iter().enumerate() {
            let j = ContractJson::of(c);
            let _ = writeln!(out, "  contract {}", k + 1);
            let _ = writeln!(out, "    pre:  {}", j.pre);
            for q in &j.post {
                let _ = writeln!(out, "    post: {q}");
            }
        }
        if verbose >= 1 {
            for d in &s.diagnostics {
                let _ = writeln!(out, "  note: {d}");
            }
            for c in &s.certificates {
                let _ = writeln!(out, "  condition ({}) by {}: {} |- {}", c.condition, c.method, c.lhs, c.rhs);
            }
        }
        if verbose >= 2 {
            for t in &s.trace {
                let _ = writeln!(out, "  {t}");
            }
        }
        if let Some(r) = oracle.and_then(|o| o.get(&s.name)) {
            let _ = writeln!(
                out,
                "  oracle: {} runs, {} violations, {} inconclusive, {} without models",
                r.runs,
                r.violations.len(),
                r.inconclusive,
                r.vacuous
            );
            for v in &r.violations {
                let _ = writeln!(out, "    violation in contract {}: {} from {}", v.contract + 1, v.reason, v.model);
            }
        }
    }
    let used: Vec<String> = a.blocks.blocks().iter().map(|b| b.render_def()).collect();
    if !used.is_empty() {
        let _ = writeln!(out, "blocks:");
        for b in used {
            let _ = writeln!(out, "  {b}");
        }
    }
    out
}

fn render_json(prog: &Program, a: &Analysis, oracle: Option<&BTreeMap<String, SoundnessReport>>) -> String {
    let reports: Vec<FunctionReport> = ordered(prog, a)
        .into_iter()
        .map(|s| {
            let mut r = FunctionReport::of(s);
            r.oracle = oracle.and_then(|o| o.get(&s.name)).cloned();
            r
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&reports).expect("report serializes");
    s.push('\n');
    s
}

pub fn cmd_analyze(path: &Path, flags: &Flags, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let prog = match load(path) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    let a = analyze_program(&prog, flags.engine());
    let text = match flags.format {
        Format::Text => render_text(&prog, &a, None, flags.verbose),
        Format::Json => render_json(&prog, &a, None),
    };
    let _ = out.write_all(text.as_bytes());
    if a.summaries.values().all(|s| s.status == Status::Analyzed) {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

pub fn cmd_check(path: &Path, flags: &Flags, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let prog = match load(path) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    let a = analyze_program(&prog, flags.engine());
    if flags.samples == 0 {
        let text = match flags.format {
            Format::Text => render_text(&prog, &a, None, flags.verbose),
            Format::Json => render_json(&prog, &a, None),
        };
        let _ = out.write_all(text.as_bytes());
        let _ = writeln!(err, "note: no samples requested, soundness check skipped");
        return EXIT_OK;
    }
    let reports = check_summaries(&prog, &a, &flags.oracle());
    let text = match flags.format {
        Format::Text => render_text(&prog, &a, Some(&reports), flags.verbose),
        Format::Json => render_json(&prog, &a, Some(&reports)),
    };
    let _ = out.write_all(text.as_bytes());
    if reports.values().any(|r| !r.sound()) {
        let _ = writeln!(err, "error: inferred contracts violated by concrete runs");
        EXIT_UNSOUND
    } else if reports.is_empty() {
        let _ = writeln!(err, "error: no function could be analyzed");
        EXIT_FAILED
    } else {
        EXIT_OK
    }
}

/// Expected outcome of one corpus file, read from its `.expect` sidecar:
/// `outcome: ok` or `outcome: fail`, optionally `stage: <stage>`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Expectation {
    pub ok: bool,
    pub stage: Option<String>,
}

pub fn parse_expectation(text: &str) -> Result<Expectation, String> {
    let mut e = Expectation::default();
    let mut seen = false;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once(':').ok_or_else(|| format!("expected `key: value`, got `{line}`"))?;
        match (k.trim(), v.trim()) {
            ("outcome", "ok") => {
                e.ok = true;
                seen = true;
            }
            ("outcome", "fail") => {
                e.ok = false;
                seen = true;
            }
            ("stage", s) => e.stage = Some(s.to_string()),
            (k, v) => return Err(format!("unknown entry `{k}: {v}`")),
        }
    }
    if !seen {
        return Err("missing `outcome`".into());
    }
    Ok(e)
}

#[derive(Clone, Debug, Serialize)]
pub struct CorpusRow {
    pub file: String,
    pub expected_ok: bool,
    pub ok: bool,
    /// Stage of the first failing loop, when the failure came from extrapolation.
    pub stage: Option<String>,
    /// Body analyses per loop function, in program order.
    pub iterations: Vec<usize>,
    pub violations: usize,
    pub matches: bool,
    pub notes: Vec<String>,
}

pub fn corpus_row(path: &Path, flags: &Flags) -> Result<CorpusRow, String> {
    let file = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let exp_path = path.with_extension("expect");
    let exp_text = std::fs::read_to_string(&exp_path).map_err(|e| format!("{}: {e}", exp_path.display()))?;
    let exp = parse_expectation(&exp_text).map_err(|e| format!("{}: {e}", exp_path.display()))?;
    let prog = load(path).map_err(|e| e.to_string())?;
    let a = analyze_program(&prog, flags.engine());
    let sums = ordered(&prog, &a);
    let failed = sums.iter().find(|s| s.status == Status::Failed);
    let stage = failed.and_then(|s| s.failure.as_ref()).and_then(|f| f.stage).map(|s| s.to_string());
    let iterations: Vec<usize> = sums.iter().filter(|s| s.kind == FnKind::Loop).filter_map(|s| s.iterations).collect();
    let mut notes = Vec::new();
    if let Some(s) = failed {
        notes.push(format!("{}: {}", s.name, s.failure.as_ref().map(|f| f.to_string()).unwrap_or_default()));
    }
    let violations = if flags.samples == 0 {
        0
    } else {
        check_summaries(&prog, &a, &flags.oracle()).values().map(|r| r.violations.len()).sum()
    };
    if violations > 0 {
        notes.push(format!("{violations} oracle violations"));
    }
    let ok = failed.is_none() && violations == 0;
    let mut matches = ok == exp.ok;
    if !exp.ok && exp.stage.is_some() && exp.stage != stage {
        matches = false;
        notes.push(format!("expected stage {}", exp.stage.as_deref().unwrap_or("")));
    }
    for s in sums.iter().filter(|s| s.kind == FnKind::Loop && s.status == Status::Analyzed) {
        if s.iterations != Some(2) {
            matches = false;
            notes.push(format!("{}: {} body analyses instead of 2", s.name, s.iterations.unwrap_or(0)));
        }
    }
    Ok(CorpusRow { file, expected_ok: exp.ok, ok, stage, iterations, violations, matches, notes })
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "✓"
    } else {
        "×"
    }
}

pub fn corpus_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tl"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn cmd_corpus(dir: &Path, flags: &Flags, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let files = match corpus_files(dir) {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", dir.display());
            return EXIT_INPUT;
        }
    };
    let mut rows = Vec::new();
    for f in &files {
        match corpus_row(f, flags) {
            Ok(r) => rows.push(r),
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return EXIT_INPUT;
            }
        }
    }
    match flags.format {
        Format::Json => {
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&rows).expect("rows serialize"));
        }
        Format::Text => {
            let width = rows.iter().map(|r| r.file.len()).max().unwrap_or(4).max(4);
            let _ = writeln!(out, "{:width$}  expected  result  iterations  stage", "file");
            for r in &rows {
                let iters = if r.iterations.is_empty() {
                    "-".to_string()
                } else {
                    r.iterations.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
                };
                let _ = writeln!(
                    out,
                    "{:width$}  {:8}  {:6}  {:10}  {}{}",
                    r.file,
                    mark(r.expected_ok),
                    mark(r.ok),
                    iters,
                    r.stage.as_deref().unwrap_or("-"),
                    if r.matches { "" } else { "  MISMATCH" }
                );
                if flags.verbose >= 1 {
                    for n in &r.notes {
                        let _ = writeln!(out, "    {n}");
                    }
                }
            }
            let good = rows.iter().filter(|r| r.matches).count();
            let _ = writeln!(out, "{good}/{} rows match", rows.len());
        }
    }
    if rows.iter().all(|r| r.matches) {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match &cli.command {
        Command::Analyze { path, flags } => cmd_analyze(path, flags, out, err),
        Command::Check { path, flags } => cmd_check(path, flags, out, err),
        Command::Corpus { dir, flags } => cmd_corpus(dir, flags, out, err),
    }
}
