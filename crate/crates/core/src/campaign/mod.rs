//! End-to-end campaigns: generation, parallel execution on every engine,
//! comparison, confirmation, localization, deduplication and reporting.

pub mod coverage;
pub mod report;
pub mod scan;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bytecode::{op, op_by_mnemonic, BytecodeProgram, Fork};
use crate::differ::{compare, reproduce, Divergence, MemoryStore};
use crate::engine::context::{make_context, ExecContext};
use crate::engine::{engine_from_id, execute, smoke_test, AdapterConfig, Engine, EngineError, FaultId, Interpreter, Trace, REFERENCE};
use crate::generator::{
    build_seed, llm_generate, mutate_arguments, mutate_control_flow, Candidate, CorpusDir, CorpusMeta, GeneratorError,
    LlmAdapter, LlmRequest, MutationConfig,
};
use crate::opspec::{all_specs, spec_for, PathId};
use crate::rootcause::{extract_func_map, localize, FuncMap, FuncMapAdapter, RootCause};

pub use coverage::{classify, path_coverage, Classification, CorpusResult, CoverageStats, Miss};
pub use report::{emit_report, BugReport, CampaignSummary, DedupKey, ReportDocument, ReportError};
pub use scan::{scan_corpus_impact, scan_dir, ScanResult};

pub const DEFAULT_SEEDS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    /// Engine ids: `reference`, `mutant:F1`..`mutant:F8`, `external:<name>`.
    pub engines: Vec<String>,
    pub baseline: String,
    pub adapters: BTreeMap<String, AdapterConfig>,
    /// `None` selects every opcode of the fork.
    pub opcodes: Option<Vec<u8>>,
    pub seeds: usize,
    /// Queries per seed for code-generation adapters that are not
    /// deterministic.
    pub rounds: usize,
    pub p: f64,
    pub t: usize,
    pub rng_seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub parallelism: usize,
    pub out_dir: PathBuf,
    pub llm: LlmAdapter,
    pub func_map: FuncMapAdapter,
    pub fork: Fork,
    /// Keep starting new passes until this much time has passed.
    pub duration: Option<Duration>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        let mut engines = vec![REFERENCE.to_string()];
        engines.extend(FaultId::ALL.iter().map(|f| format!("mutant:{f}")));
        CampaignConfig {
            engines,
            baseline: REFERENCE.into(),
            adapters: BTreeMap::new(),
            opcodes: None,
            seeds: DEFAULT_SEEDS,
            rounds: 1,
            p: 0.3,
            t: 64,
            rng_seed: 0,
            parallelism: 0,
            out_dir: PathBuf::from("evmdiff-out"),
            llm: LlmAdapter::DeterministicFallback,
            func_map: FuncMapAdapter::Static,
            fork: Fork::Cancun,
            duration: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("bad config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OpcodesField {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdapterEntry {
    argv: Vec<String>,
    timeout_ms: Option<u64>,
}

/// On-disk TOML form of [`CampaignConfig`]; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    engines: Option<Vec<String>>,
    baseline: Option<String>,
    opcodes: Option<OpcodesField>,
    seeds: Option<usize>,
    rounds: Option<usize>,
    p: Option<f64>,
    t: Option<usize>,
    seed: Option<u64>,
    parallelism: Option<usize>,
    out: Option<PathBuf>,
    llm_adapter: Option<String>,
    llm_fixtures: Option<PathBuf>,
    llm_command: Option<Vec<String>>,
    func_map_fixture: Option<PathBuf>,
    func_map_command: Option<Vec<String>>,
    fork: Option<String>,
    duration_secs: Option<u64>,
    adapters: Option<BTreeMap<String, AdapterEntry>>,
}

/// Parses `all` or a comma-separated list of mnemonics and `0x`-bytes.
pub fn parse_opcode_list(text: &str) -> Result<Option<Vec<u8>>, ConfigError> {
    let items: Vec<String> = text.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    opcodes_from(&items)
}

fn opcodes_from(items: &[String]) -> Result<Option<Vec<u8>>, ConfigError> {
    if items.len() == 1 && items[0].eq_ignore_ascii_case("all") {
        return Ok(None);
    }
    let mut out = Vec::new();
    for s in items {
        let byte = if let Some(h) = s.strip_prefix("0x") {
            u8::from_str_radix(h, 16).map_err(|_| ConfigError::Invalid(format!("bad opcode `{s}`")))?
        } else {
            op_by_mnemonic(&s.to_ascii_uppercase())
                .map(|o| o.byte)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown mnemonic `{s}`")))?
        };
        out.push(byte);
    }
    out.sort_unstable();
    out.dedup();
    Ok(Some(out))
}

/// Builds the code-generation adapter named `name`.
pub fn llm_adapter_from(name: &str, fixtures: Option<PathBuf>, command: Option<Vec<String>>) -> Result<LlmAdapter, ConfigError> {
    match name {
        "fallback" => Ok(LlmAdapter::DeterministicFallback),
        "fixture" => Ok(LlmAdapter::FixtureReplay {
            dir: fixtures.ok_or_else(|| ConfigError::Invalid("fixture adapter needs llm_fixtures".into()))?,
        }),
        "external" => Ok(LlmAdapter::External {
            argv: command.ok_or_else(|| ConfigError::Invalid("external adapter needs llm_command".into()))?,
        }),
        other => Err(ConfigError::Invalid(format!("unknown code-generation adapter `{other}`"))),
    }
}

impl CampaignConfig {
    /// Defaults overridden by the keys present in a TOML file.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let f: ConfigFile = toml::from_str(text)?;
        let mut c = CampaignConfig::default();
        if let Some(v) = f.engines {
            c.engines = v;
        }
        if let Some(v) = f.baseline {
            c.baseline = v;
        }
        if let Some(v) = f.opcodes {
            c.opcodes = match v {
                OpcodesField::One(s) => parse_opcode_list(&s)?,
                OpcodesField::Many(list) => opcodes_from(&list)?,
            };
        }
        c.seeds = f.seeds.unwrap_or(c.seeds);
        c.rounds = f.rounds.unwrap_or(c.rounds);
        c.p = f.p.unwrap_or(c.p);
        c.t = f.t.unwrap_or(c.t);
        c.rng_seed = f.seed.unwrap_or(c.rng_seed);
        c.parallelism = f.parallelism.unwrap_or(c.parallelism);
        if let Some(v) = f.out {
            c.out_dir = v;
        }
        if let Some(name) = f.llm_adapter {
            c.llm = llm_adapter_from(&name, f.llm_fixtures, f.llm_command)?;
        }
        c.func_map = match (f.func_map_fixture, f.func_map_command) {
            (Some(path), _) => FuncMapAdapter::Fixture { path },
            (None, Some(argv)) => FuncMapAdapter::Llm { argv },
            (None, None) => FuncMapAdapter::Static,
        };
        if let Some(v) = f.fork {
            c.fork = v.parse().map_err(|_| ConfigError::Invalid(format!("unknown fork `{v}`")))?;
        }
        c.duration = f.duration_secs.map(Duration::from_secs);
        for (name, a) in f.adapters.unwrap_or_default() {
            let cfg = AdapterConfig {
                name: name.clone(),
                argv: a.argv,
                dialect: crate::engine::external::TraceDialect::Jsonl,
                timeout_ms: a.timeout_ms.unwrap_or(10_000),
            };
            c.adapters.insert(name, cfg);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.engines.len() < 2 {
            return Err(ConfigError::Invalid("need at least two engines".into()));
        }
        if !self.engines.contains(&self.baseline) {
            return Err(ConfigError::Invalid(format!("baseline `{}` is not among the engines", self.baseline)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(ConfigError::Invalid(format!("p = {} outside [0, 1]", self.p)));
        }
        Ok(())
    }

    /// Selected opcodes that have a spec at the configured fork, by byte.
    pub fn opcode_list(&self) -> Vec<u8> {
        match &self.opcodes {
            None => all_specs(self.fork).iter().map(|s| s.opcode.byte).collect(),
            Some(list) => list.iter().copied().filter(|&b| spec_for(b, self.fork).is_ok()).collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// An engine under a different id, so one engine can appear twice.
struct Aliased {
    id: String,
    inner: Arc<dyn Engine>,
}

impl Engine for Aliased {
    fn id(&self) -> &str {
        &self.id
    }

    fn run(&self, program: &BytecodeProgram, ctx: &ExecContext) -> Trace {
        self.inner.run(program, ctx)
    }

    fn handler_for(&self, opcode: u8) -> Option<String> {
        self.inner.handler_for(opcode)
    }
}

/// Resolves engine ids; repeated ids get a `#n` suffix.
pub fn build_engines(ids: &[String], adapters: &BTreeMap<String, AdapterConfig>) -> Result<Vec<Arc<dyn Engine>>, EngineError> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for id in ids {
        let e = engine_from_id(id, adapters)?;
        let n = seen.entry(id).or_default();
        *n += 1;
        if *n == 1 {
            out.push(e);
        } else {
            out.push(Arc::new(Aliased { id: format!("{id}#{n}"), inner: e }) as Arc<dyn Engine>);
        }
    }
    Ok(out)
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined input.
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One program under one context, to run on every engine.
#[derive(Debug, Clone)]
pub struct WorkItem {
    pub opcode: u8,
    pub target: Option<PathId>,
    pub target_pc: usize,
    pub program: BytecodeProgram,
    pub ctx: ExecContext,
    pub origin: String,
}

/// Generated work for a campaign pass plus generation-side bookkeeping.
#[derive(Debug, Default)]
pub struct Generated {
    pub items: Vec<WorkItem>,
    pub notes: BTreeMap<(u8, PathId), String>,
    pub invalid_candidates: usize,
}

fn candidates_for(config: &CampaignConfig, seed: &crate::generator::Seed, ctx: &ExecContext, notes: &mut BTreeMap<(u8, PathId), String>, invalid: &mut usize) -> Vec<Candidate> {
    let spec = spec_for(seed.opcode, config.fork).expect("seeded opcodes have specs");
    let cf = mutate_control_flow(seed, spec, ctx);
    for s in &cf.skipped {
        notes.entry((s.opcode, s.path)).or_insert_with(|| s.reason.clone());
    }
    if config.llm == LlmAdapter::DeterministicFallback {
        return cf.candidates;
    }
    let request = LlmRequest::new(seed, spec);
    let rounds = if matches!(config.llm, LlmAdapter::External { .. }) { config.rounds.max(1) } else { 1 };
    let mut out = Vec::new();
    for _ in 0..rounds {
        match llm_generate(&request, seed, spec, ctx, &config.llm) {
            Ok(o) => {
                *invalid += o.invalid;
                out.extend(o.candidates);
            }
            Err(e @ GeneratorError::AdapterUnavailable(_)) | Err(e @ GeneratorError::Fixture(_)) => {
                log::warn!("{e}; using the built-in construction for {}", spec.mnemonic());
                return cf.candidates;
            }
            Err(e) => log::warn!("{e}"),
        }
    }
    out
}

/// Seeds, path variants and operand mutations for every selected opcode.
pub fn generate(config: &CampaignConfig, master: u64) -> Generated {
    let mut g = Generated::default();
    let mut seen = BTreeSet::new();
    for byte in config.opcode_list() {
        for s in 0..config.seeds {
            let seed_rng = mix(master, ((byte as u64) << 32) | s as u64);
            let mut ctx = make_context(seed_rng);
            ctx.fork = config.fork;
            let seed = match build_seed(byte, config.fork, seed_rng) {
                Ok(seed) => seed,
                Err(e) => {
                    log::warn!("{e}");
                    break;
                }
            };
            let cands = candidates_for(config, &seed, &ctx, &mut g.notes, &mut g.invalid_candidates);
            for (ci, c) in cands.iter().enumerate() {
                let cctx = c.context(&ctx);
                let mut push = |program: BytecodeProgram, origin: String| {
                    if seen.insert((crate::engine::program_key(&program), cctx.key())) {
                        g.items.push(WorkItem {
                            opcode: byte,
                            target: c.target,
                            target_pc: c.target_pc,
                            program,
                            ctx: cctx.clone(),
                            origin,
                        });
                    }
                };
                push(c.program.clone(), c.origin.clone());
                // Overflow programs are a thousand PUSH0s; nothing to mutate.
                if c.target == Some(PathId::StackOverflow) || config.t == 0 {
                    continue;
                }
                let mc = MutationConfig { p: config.p, t: config.t, rng_seed: mix(seed_rng, ci as u64 + 1) };
                for m in mutate_arguments(&c.program, &mc).unwrap_or_default() {
                    push(m, format!("{}+args", c.origin));
                }
            }
        }
    }
    g
}

#[derive(Debug, Clone)]
struct Executed {
    classification: Classification,
    divergences: Vec<Divergence>,
}

/// Pair-level outcome after confirmation and localization.
#[derive(Debug, Clone)]
struct Triaged {
    item: usize,
    suspect: usize,
    confirmed: Vec<Divergence>,
    quarantined: Vec<Divergence>,
    root_cause: Option<RootCause>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignOutcome {
    pub reports: Vec<BugReport>,
    pub coverage: CoverageStats,
    pub summary: CampaignSummary,
}

impl CampaignOutcome {
    pub fn document(&self) -> ReportDocument {
        ReportDocument { summary: self.summary.clone(), reports: self.reports.clone(), coverage: self.coverage.clone() }
    }
}

#[derive(Debug, Serialize)]
struct QuarantineEntry<'a> {
    program: String,
    divergence: &'a Divergence,
}

/// Runs a full campaign and writes its artifacts under `config.out_dir`.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignOutcome, CampaignError> {
    config.validate()?;
    let engines = build_engines(&config.engines, &config.adapters)?;
    for e in &engines {
        smoke_test(e.as_ref())?;
    }
    let base = config.engines.iter().position(|e| *e == config.baseline).expect("validated");
    // The baseline goes first; compare treats the first trace as baseline.
    let mut order: Vec<usize> = vec![base];
    order.extend((0..engines.len()).filter(|&i| i != base));
    let ref_idx = engines.iter().position(|e| e.id() == REFERENCE);
    let opcodes = config.opcode_list();
    let func_maps: Vec<FuncMap> =
        engines.iter().map(|e| extract_func_map(e.as_ref(), &opcodes, &config.func_map)).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| std::io::Error::other(e.to_string()))?;

    let started = Instant::now();
    let mut gen = Generated::default();
    let mut executed: Vec<Executed> = Vec::new();
    let mut pass = 0u64;
    loop {
        let master = if pass == 0 { config.rng_seed } else { mix(config.rng_seed, pass) };
        let mut g = generate(config, master);
        log::info!("pass {pass}: {} programs", g.items.len());
        let run: Vec<Executed> = pool.install(|| {
            g.items
                .par_iter()
                .map(|it| {
                    let traces: Vec<(String, Trace)> = order
                        .iter()
                        .map(|&i| (engines[i].id().to_string(), execute(engines[i].as_ref(), &it.program, &it.ctx)))
                        .collect();
                    let reference = match ref_idx {
                        Some(r) => traces.iter().find(|(id, _)| id == engines[r].id()).map(|(_, t)| t.clone()),
                        None => None,
                    }
                    .unwrap_or_else(|| Interpreter::reference().run(&it.program, &it.ctx));
                    let divergences = compare(&traces, it.ctx.rng_seed).unwrap_or_else(|e| {
                        log::error!("comparison failed: {e}");
                        Vec::new()
                    });
                    Executed { classification: classify(&reference, it.target_pc), divergences }
                })
                .collect()
        });
        gen.items.append(&mut g.items);
        for (k, v) in g.notes {
            gen.notes.entry(k).or_insert(v);
        }
        gen.invalid_candidates += g.invalid_candidates;
        executed.extend(run);
        pass += 1;
        match config.duration {
            Some(d) if started.elapsed() < d => continue,
            _ => break,
        }
    }

    let mut store = MemoryStore::default();
    for it in &gen.items {
        store.insert(&it.program, &it.ctx);
    }
    let engine_refs: Vec<&dyn Engine> = engines.iter().map(|e| e.as_ref()).collect();
    let find = |id: &str| engines.iter().position(|e| e.id() == id).expect("engine ids come from the list");

    // Confirm and localize every diverging (item, engine pair).
    let work: Vec<(usize, usize, Vec<Divergence>)> = executed
        .iter()
        .enumerate()
        .flat_map(|(i, ex)| {
            let mut by_suspect: BTreeMap<usize, Vec<Divergence>> = BTreeMap::new();
            for d in &ex.divergences {
                by_suspect.entry(find(&d.engines.1)).or_default().push(d.clone());
            }
            by_suspect.into_iter().map(move |(s, ds)| (i, s, ds))
        })
        .collect();
    let triaged: Vec<Triaged> = pool.install(|| {
        work.par_iter()
            .map(|(i, s, ds)| {
                let mut confirmed = Vec::new();
                let mut quarantined = Vec::new();
                for d in ds {
                    match reproduce(d, &engine_refs, &store) {
                        Ok(r) if r.confirmed => confirmed.push(d.clone()),
                        Ok(_) => quarantined.push(d.clone()),
                        Err(e) => {
                            log::warn!("reproduction failed: {e}");
                            quarantined.push(d.clone());
                        }
                    }
                }
                let it = &gen.items[*i];
                let root_cause = if confirmed.is_empty() {
                    None
                } else {
                    match localize(&it.program, &it.ctx, engines[base].as_ref(), engines[*s].as_ref(), &func_maps[*s]) {
                        Ok(rc) => Some(rc),
                        Err(e) => {
                            log::warn!("localization failed: {e}");
                            quarantined.append(&mut confirmed);
                            None
                        }
                    }
                };
                Triaged { item: *i, suspect: *s, confirmed, quarantined, root_cause }
            })
            .collect()
    });

    // Deduplicate in canonical (generation) order.
    let mut reports: BTreeMap<DedupKey, BugReport> = BTreeMap::new();
    let mut report_items: BTreeMap<DedupKey, usize> = BTreeMap::new();
    let mut quarantine: Vec<(usize, &Divergence)> = Vec::new();
    let mut confirmed_total = 0;
    for t in &triaged {
        confirmed_total += t.confirmed.len();
        quarantine.extend(t.quarantined.iter().map(|d| (t.item, d)));
        let Some(rc) = &t.root_cause else { continue };
        let it = &gen.items[t.item];
        let key = DedupKey {
            opcode: rc.opcode,
            op_name: rc.op_name.clone(),
            phase: rc.phase_label(),
            engines: (engines[base].id().to_string(), engines[t.suspect].id().to_string()),
        };
        if let Some(r) = reports.get_mut(&key) {
            r.duplicates += 1;
            continue;
        }
        report_items.insert(key.clone(), t.item);
        reports.insert(
            key.clone(),
            BugReport {
                dedup_key: key.clone(),
                divergence: t.confirmed[0].clone(),
                root_cause: rc.clone(),
                reproduction: report::Reproduction {
                    program_hex: it.program.to_hex(),
                    mnemonics: it.program.mnemonics(),
                    context_seed: it.ctx.rng_seed,
                    context_key: it.ctx.key(),
                    gas_limit: it.ctx.tx.gas_limit,
                    static_call: it.ctx.tx.static_flag,
                    engines: vec![key.engines.0.clone(), key.engines.1.clone()],
                    tool_version: env!("CARGO_PKG_VERSION").to_string(),
                },
                duplicates: 0,
            },
        );
    }
    let reports: Vec<BugReport> = reports.into_values().collect();

    let results: Vec<CorpusResult> = gen
        .items
        .iter()
        .zip(&executed)
        .map(|(it, ex)| CorpusResult { opcode: it.opcode, target: it.target, classification: ex.classification })
        .collect();
    let coverage = path_coverage(&results, &opcodes, config.fork, &gen.notes);
    let summary = CampaignSummary {
        rng_seed: config.rng_seed,
        engines: engines.iter().map(|e| e.id().to_string()).collect(),
        baseline: config.baseline.clone(),
        opcodes: opcodes.len(),
        programs: gen.items.len(),
        executions: gen.items.len() * engines.len(),
        divergences: executed.iter().map(|e| e.divergences.len()).sum(),
        confirmed: confirmed_total,
        quarantined: quarantine.len(),
        reports: reports.len(),
        invalid_candidates: gen.invalid_candidates,
        coverage: coverage.fraction,
    };
    log::info!(
        "{} programs, {} confirmed divergences, {} reports in {:.1?}",
        summary.programs,
        summary.confirmed,
        summary.reports,
        started.elapsed()
    );

    // Persist the inputs behind reports and quarantined divergences.
    std::fs::create_dir_all(&config.out_dir)?;
    let corpus = CorpusDir::new(config.out_dir.join("corpus"))?;
    let contexts = config.out_dir.join("contexts");
    std::fs::create_dir_all(&contexts)?;
    let mut keep: Vec<usize> = report_items.values().copied().collect();
    keep.extend(quarantine.iter().map(|(i, _)| *i));
    keep.sort_unstable();
    keep.dedup();
    for i in keep {
        let it = &gen.items[i];
        corpus.put(
            &it.program,
            &CorpusMeta { opcode: op(it.opcode).mnemonic.to_string(), intended_path: it.target, provenance: it.origin.clone(), rng_seed: it.ctx.rng_seed },
        )?;
        std::fs::write(contexts.join(format!("{}.json", it.ctx.key())), it.ctx.to_json() + "\n")?;
    }
    let q: Vec<QuarantineEntry> = quarantine
        .iter()
        .map(|(i, d)| QuarantineEntry { program: gen.items[*i].program.to_hex(), divergence: d })
        .collect();
    std::fs::write(config.out_dir.join("quarantine.json"), report::to_json(&q))?;

    let outcome = CampaignOutcome { reports, coverage, summary };
    emit_report(&config.out_dir, &outcome.document())?;
    Ok(outcome)
}

/// Reads the programs and contexts a campaign persisted.
#[derive(Debug, Clone)]
pub struct DirStore {
    corpus: CorpusDir,
    contexts: PathBuf,
}

impl DirStore {
    pub fn open(out_dir: &Path) -> std::io::Result<Self> {
        Ok(DirStore { corpus: CorpusDir::new(out_dir.join("corpus"))?, contexts: out_dir.join("contexts") })
    }
}

impl crate::differ::ArtifactStore for DirStore {
    fn program(&self, key: &str) -> Option<BytecodeProgram> {
        self.corpus.get(key)
    }

    fn context(&self, key: &str) -> Option<ExecContext> {
        let text = std::fs::read_to_string(self.contexts.join(format!("{key}.json"))).ok()?;
        ExecContext::from_json(&text).ok()
    }
}
