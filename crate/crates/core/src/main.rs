use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use evmdiff::bytecode::{disassemble, op, parse_hex};
use evmdiff::campaign::{
    self, generate, llm_adapter_from, parse_opcode_list, run_campaign, scan_dir, CampaignConfig, ReportDocument,
};
use evmdiff::differ::compare;
use evmdiff::engine::context::ExecContext;
use evmdiff::engine::{engine_from_id, execute, parse_jsonl};
use evmdiff::generator::{CorpusDir, CorpusMeta};

#[derive(Parser)]
#[command(name = "evmdiff")]
#[command(about = "Opcode-level differential testing for EVM implementations")]
#[command(version)]
struct Cli {
    /// Log filter, e.g. `info` or `evmdiff=debug`
    #[arg(long, global = true, default_value = "warn")]
    log: String,

    #[command(subcommand)]
    command: Commands,
}

#[derive(clap::Args, Debug, Default)]
struct CampaignArgs {
    /// TOML config file; flags override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated engine ids; the first is the baseline unless set in the config
    #[arg(long)]
    engines: Option<String>,
    /// `all` or comma-separated mnemonics / 0x-bytes
    #[arg(long)]
    opcodes: Option<String>,
    /// Seeds per opcode
    #[arg(long)]
    seeds: Option<usize>,
    /// Boundary-operand probability
    #[arg(long)]
    p: Option<f64>,
    /// Mutation rounds per candidate
    #[arg(long)]
    t: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core)
    #[arg(long)]
    parallelism: Option<usize>,
    /// Code-generation adapter: fixture | fallback | external
    #[arg(long)]
    llm_adapter: Option<String>,
    /// Fixture directory for `--llm-adapter fixture`
    #[arg(long)]
    llm_fixtures: Option<PathBuf>,
    /// Command for `--llm-adapter external`
    #[arg(long, num_args = 1.., value_delimiter = ' ')]
    llm_command: Option<Vec<String>>,
    /// Keep running passes for this many seconds
    #[arg(long)]
    duration: Option<u64>,
}

#[derive(Subcommand)]
enum Commands {
    /// Generate the test corpus without executing it
    Gen(CampaignArgs),
    /// Run a full differential campaign
    Run(CampaignArgs),
    /// Compare stored JSON-lines trace files; the first is the baseline
    Diff {
        #[arg(required = true, num_args = 2..)]
        traces: Vec<PathBuf>,
    },
    /// Count buggy-opcode occurrences in a directory of .hex files
    Scan {
        dir: PathBuf,
        /// Comma-separated mnemonics / 0x-bytes
        #[arg(long)]
        buggy: String,
        /// Print the full result as JSON
        #[arg(long)]
        json: bool,
    },
    /// Re-render report.md from a campaign's report.json
    Report { out: PathBuf },
    /// Execute one program and print its trace as JSON lines
    Exec {
        /// Program as hex
        #[arg(long, conflicts_with = "code_file")]
        code: Option<String>,
        /// File holding the program as hex
        #[arg(long)]
        code_file: Option<PathBuf>,
        /// Context JSON file; the baseline context when absent
        #[arg(long)]
        context: Option<PathBuf>,
        #[arg(long, default_value = "reference")]
        engine: String,
    },
}

/// Failure that maps to exit code 2.
struct Fatal(String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

fn config_from(args: &CampaignArgs) -> Result<CampaignConfig, Fatal> {
    let mut c = match &args.config {
        Some(path) => CampaignConfig::from_file(path)?,
        None => CampaignConfig::default(),
    };
    if let Some(list) = &args.engines {
        c.engines = list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if args.config.is_none() || !c.engines.contains(&c.baseline) {
            c.baseline = c.engines.first().cloned().unwrap_or_default();
        }
    }
    if let Some(o) = &args.opcodes {
        c.opcodes = parse_opcode_list(o)?;
    }
    if let Some(v) = args.seed {
        c.rng_seed = v;
    }
    if let Some(v) = args.seeds {
        c.seeds = v;
    }
    if let Some(v) = args.p {
        c.p = v;
    }
    if let Some(v) = args.t {
        c.t = v;
    }
    if let Some(v) = &args.out {
        c.out_dir = v.clone();
    }
    if let Some(v) = args.parallelism {
        c.parallelism = v;
    }
    if let Some(name) = &args.llm_adapter {
        c.llm = llm_adapter_from(name, args.llm_fixtures.clone(), args.llm_command.clone())?;
    }
    if let Some(v) = args.duration {
        c.duration = Some(Duration::from_secs(v));
    }
    c.validate()?;
    Ok(c)
}

fn cmd_gen(args: &CampaignArgs) -> Result<ExitCode, Fatal> {
    let config = config_from(args)?;
    let g = generate(&config, config.rng_seed);
    let corpus = CorpusDir::new(config.out_dir.join("corpus"))?;
    let contexts = config.out_dir.join("contexts");
    std::fs::create_dir_all(&contexts)?;
    for it in &g.items {
        corpus.put(
            &it.program,
            &CorpusMeta {
                opcode: op(it.opcode).mnemonic.to_string(),
                intended_path: it.target,
                provenance: it.origin.clone(),
                rng_seed: it.ctx.rng_seed,
            },
        )?;
        std::fs::write(contexts.join(format!("{}.json", it.ctx.key())), it.ctx.to_json() + "\n")?;
    }
    println!("{} programs written to {}", g.items.len(), corpus.root().display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(args: &CampaignArgs) -> Result<ExitCode, Fatal> {
    let config = config_from(args)?;
    let out = run_campaign(&config)?;
    println!(
        "{} programs, {} confirmed divergences, {} reports, coverage {:.2}% -> {}",
        out.summary.programs,
        out.summary.confirmed,
        out.summary.reports,
        out.coverage.fraction * 100.0,
        config.out_dir.display()
    );
    Ok(if out.summary.confirmed > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_diff(paths: &[PathBuf]) -> Result<ExitCode, Fatal> {
    let mut traces = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p).map_err(|e| Fatal(format!("{}: {e}", p.display())))?;
        let t = parse_jsonl(&text).map_err(|e| Fatal(format!("{}: {e}", p.display())))?;
        traces.push((p.display().to_string(), t));
    }
    let ds = compare(&traces, 0)?;
    for d in &ds {
        println!("{}", serde_json::to_string(d)?);
    }
    Ok(if ds.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_scan(dir: &Path, buggy: &str, json: bool) -> Result<ExitCode, Fatal> {
    let set: BTreeSet<u8> = parse_opcode_list(buggy)?
        .ok_or_else(|| Fatal("the buggy set must list opcodes".into()))?
        .into_iter()
        .collect();
    if set.is_empty() {
        return Err(Fatal("the buggy set is empty".into()));
    }
    let r = scan_dir(dir, &set)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&r)?);
    } else {
        println!(
            "{} instructions, {} buggy ({}), {} of {} contracts affected, {} skipped",
            r.total_opcodes,
            r.buggy_opcodes,
            r.percent(),
            r.affected_contracts,
            r.contracts.len(),
            r.skipped.len()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(out: &Path) -> Result<ExitCode, Fatal> {
    let doc: ReportDocument = campaign::report::load_report(&out.join("report.json"))?;
    std::fs::write(out.join("report.md"), campaign::report::render_markdown(&doc))?;
    println!("{} reports rendered to {}", doc.reports.len(), out.join("report.md").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_exec(code: Option<&str>, code_file: Option<&Path>, context: Option<&Path>, engine: &str) -> Result<ExitCode, Fatal> {
    let hex = match (code, code_file) {
        (Some(h), _) => h.to_string(),
        (None, Some(p)) => std::fs::read_to_string(p)?,
        (None, None) => return Err(Fatal("pass --code or --code-file".into())),
    };
    let program = disassemble(&parse_hex(hex.trim())?);
    let ctx = match context {
        Some(p) => ExecContext::from_json(&std::fs::read_to_string(p)?)?,
        None => ExecContext::baseline(),
    };
    let e = engine_from_id(engine, &Default::default())?;
    print!("{}", execute(e.as_ref(), &program, &ctx).to_jsonl());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    let result = match &cli.command {
        Commands::Gen(a) => cmd_gen(a),
        Commands::Run(a) => cmd_run(a),
        Commands::Diff { traces } => cmd_diff(traces),
        Commands::Scan { dir, buggy, json } => cmd_scan(dir, buggy, *json),
        Commands::Report { out } => cmd_report(out),
        Commands::Exec { code, code_file, context, engine } => {
            cmd_exec(code.as_deref(), code_file.as_deref(), context.as_deref(), engine)
        }
    };
    match result {
        Ok(code) => code,
        Err(Fatal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
