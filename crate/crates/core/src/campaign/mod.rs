//! Campaign orchestration: the master (coverage, throughput) and helper
//! (structured generation, novelty) roles, their queue synchronization,
//! metrics and reports.

mod report;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

pub use report::{emit_report, read_bugs_csv};

use crate::executor::{
    dedup_crash, execute, write_crash_artifact, BugId, CoverageBitmap, ExecError, ExecutionRecord, Limits, Outcome,
    Target,
};
use crate::mutation::{
    build_context_from_trace, build_prompt, generate, havoc, repair, validate, valid_input_rate, CandidateInput,
    FormatSchema, GenerationRequest, Generator, MutationError, MutationHint, Objective, Origin, RemoteGenerator,
    ValidityWindow, DEFAULT_K, DEFAULT_TEMPERATURE,
};
use crate::scheduler::{Admission, Provenance, QueueEntry, SeedPool, Source};
use crate::semantic::{
    Embedder, EngineSettings, NoveltyConfig, RemoteEmbedder, SemanticEngine, SemanticError, PCA_WARMUP,
};
use crate::signals::{canonicalize, extract_signals};
use crate::sync::{scan_new, select_inspirational, QueueDirLayout, QueueWriter, SyncCursor, SyncError};
use crate::target_model::{
    annotate_seed, load_manifest_with_table, ApiCategoryTable, ManifestError, SeedAnnotation, TargetManifest,
};
use crate::testbed;

pub const MASTER_ID: &str = "master";
pub const HELPER_ID: &str = "helper";
const MAX_PATH_DEPTH: usize = 32;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("format schema: {0}")]
    Schema(MutationError),
    #[error("I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

impl CampaignError {
    /// Whether the error comes from the configuration rather than from the
    /// environment at run time.
    pub fn is_config(&self) -> bool {
        matches!(self, CampaignError::Config(_) | CampaignError::Manifest(_) | CampaignError::Schema(_))
    }
}

impl From<SemanticError> for CampaignError {
    fn from(e: SemanticError) -> Self {
        CampaignError::Config(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Master,
    Helper,
    /// Both roles in one process, round-robin, synchronizing every
    /// `sync_rounds` rounds. Deterministic under a fixed seed and an
    /// execution budget.
    SingleCombined,
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub target_id: String,
    pub manifest: PathBuf,
    /// Defaults to `schema.json` next to the manifest.
    pub schema: Option<PathBuf>,
    /// Defaults to `seeds/` next to the manifest.
    pub seeds: Option<PathBuf>,
    pub api_table: Option<PathBuf>,
    pub mode: Mode,
    pub tau: f64,
    pub d_prime: usize,
    pub k: usize,
    pub temperature: f64,
    pub time_budget: Duration,
    pub exec_budget: Option<u64>,
    pub rng_seed: u64,
    pub outdir: PathBuf,
    /// Shared queue root; combined mode defaults to `<outdir>/queue`.
    pub queue_root: Option<PathBuf>,
    pub fuzzer_id: Option<String>,
    pub llm_endpoint: Option<String>,
    pub embed_endpoint: Option<String>,
    pub semantic_off: bool,
    pub llm_off: bool,
    /// Wall-clock sync period for the two-process modes.
    pub sync_interval: Duration,
    /// Sync period, in rounds, for combined mode.
    pub sync_rounds: u64,
    /// Master havoc executions per round in combined mode.
    pub master_execs_per_round: u32,
    /// Executions between two report samples.
    pub sample_every: u64,
    pub limits: Limits,
    pub engine: EngineSettings,
}

impl CampaignConfig {
    pub fn new(target_id: &str, manifest: impl Into<PathBuf>, outdir: impl Into<PathBuf>) -> Self {
        CampaignConfig {
            target_id: target_id.to_string(),
            manifest: manifest.into(),
            schema: None,
            seeds: None,
            api_table: None,
            mode: Mode::SingleCombined,
            tau: NoveltyConfig::default().tau,
            d_prime: NoveltyConfig::default().d_prime,
            k: DEFAULT_K,
            temperature: DEFAULT_TEMPERATURE,
            time_budget: Duration::from_secs(60),
            exec_budget: None,
            rng_seed: 0,
            outdir: outdir.into(),
            queue_root: None,
            fuzzer_id: None,
            llm_endpoint: None,
            embed_endpoint: None,
            semantic_off: false,
            llm_off: false,
            sync_interval: Duration::from_secs(crate::sync::DEFAULT_SYNC_INTERVAL_SECS),
            sync_rounds: 50,
            master_execs_per_round: 5,
            sample_every: 2000,
            limits: Limits::default(),
            engine: EngineSettings::default(),
        }
    }

    /// A combined-mode config for a bundled testbed target.
    pub fn testbed(target_id: &str, outdir: impl Into<PathBuf>) -> Option<Self> {
        let t = testbed::lookup(target_id)?;
        Some(Self::new(target_id, t.dir().join("manifest.json"), outdir))
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let fail = |m: &str| Err(CampaignError::Config(m.to_string()));
        if self.time_budget.is_zero() {
            return fail("time budget must be positive");
        }
        if self.exec_budget == Some(0) {
            return fail("execution budget must be positive");
        }
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return fail("temperature must lie in [0, 2]");
        }
        if self.sync_rounds == 0 || self.master_execs_per_round == 0 || self.sample_every == 0 {
            return fail("sync_rounds, master_execs_per_round and sample_every must be positive");
        }
        if self.mode == Mode::Helper && self.queue_root.is_none() {
            return fail("helper mode needs a queue root shared with a master");
        }
        if !self.semantic_off {
            NoveltyConfig {
                tau: self.tau,
                d_prime: self.d_prime,
                ..NoveltyConfig::default()
            }
            .validate()?;
        }
        if testbed::lookup(&self.target_id).is_none() {
            return Err(CampaignError::Config(format!("unknown target {:?}", self.target_id)));
        }
        Ok(())
    }

    fn tau(&self) -> Option<f64> {
        (!self.semantic_off).then_some(self.tau)
    }

    fn manifest_dir(&self) -> PathBuf {
        self.manifest.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

/// One deduplicated bug.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BugRecord {
    pub bug_id: String,
    pub ttfb_secs: f64,
    pub ttfb_execs: u64,
    /// Role whose execution found it.
    pub found_by: Source,
    /// Admissions from the triggering input's parent back to the initial
    /// corpus, e.g. `novelty>novelty>coverage>initial`.
    pub admission_path: String,
    pub input_id: String,
    /// Planted testbed bug this matches, if any.
    pub planted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CampaignStats {
    pub executions: u64,
    pub elapsed_secs: f64,
    pub execs_per_sec: f64,
    pub llm_queries: u64,
    pub llm_queries_per_hour: f64,
    pub valid_input_rate: Option<f64>,
    pub generated_candidates: u64,
    pub unique_bugs: usize,
    pub ttfb: Option<f64>,
    pub ttfb_execs: Option<u64>,
    pub edges: usize,
    pub corpus_size: usize,
    pub novelty_admissions: u64,
    pub retained_variance: Option<f64>,
    /// `(t, mean novelty of helper executions since the previous sample)`.
    pub mean_novelty_series: Vec<(f64, f64)>,
    pub coverage_series: Vec<(f64, usize)>,
    /// Execution count at each series sample.
    pub exec_series: Vec<u64>,
    pub bugs_series: Vec<usize>,
    pub bugs: Vec<BugRecord>,
    pub semantic_off: bool,
}

pub fn snapshot(stats: &CampaignStats) -> CampaignStats {
    stats.clone()
}

struct Role {
    /// Queue directory name.
    name: String,
    source: Source,
    pool: SeedPool,
    engine: Option<SemanticEngine>,
    writer: Option<QueueWriter>,
    cursor: SyncCursor,
    rng: ChaCha8Rng,
    inspirational: Option<QueueEntry>,
    traces: HashMap<String, Vec<String>>,
    iterations: u64,
}

impl Role {
    fn publish(&mut self, entry: &QueueEntry) -> Result<(), CampaignError> {
        if let Some(w) = self.writer.as_mut() {
            w.publish(entry)?;
        }
        Ok(())
    }

    fn admission_path(&self, parent: Option<&str>) -> String {
        let mut parts = Vec::new();
        let mut cur = parent.and_then(|p| self.pool.get(p));
        while let Some(e) = cur {
            if parts.len() == MAX_PATH_DEPTH {
                parts.push("...");
                break;
            }
            parts.push(e.admission.as_str());
            cur = e.parent.as_deref().and_then(|p| self.pool.get(p));
        }
        if parts.is_empty() {
            "none".to_string()
        } else {
            parts.join(">")
        }
    }
}

/// What happened to one executed input.
struct Ran {
    record: ExecutionRecord,
    novelty: Option<crate::semantic::Scored>,
}

pub struct Campaign {
    config: CampaignConfig,
    target: Target,
    manifest: TargetManifest,
    schema: FormatSchema,
    layout: Option<QueueDirLayout>,
    master: Option<Role>,
    helper: Option<Role>,
    generator: Generator,
    validity: ValidityWindow,
    planted: HashMap<BugId, String>,
    union: CoverageBitmap,
    bug_index: BTreeMap<BugId, usize>,
    stats: CampaignStats,
    start: Instant,
    novelty_sum: f64,
    novelty_n: u64,
    last_sample: u64,
    last_sync: Instant,
    rounds: u64,
    started: bool,
    done: bool,
}

fn read_seeds(dir: &Path) -> Result<Vec<Vec<u8>>, CampaignError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| std::fs::read(p).map_err(io_err(p)))
        .collect()
}

/// Static annotation narrowed to the functions a run actually entered.
fn annotate_run(bytes: &[u8], record: &ExecutionRecord, manifest: &TargetManifest) -> SeedAnnotation {
    let entry = manifest.entry_function().id.clone();
    let mut a = annotate_seed(bytes, &entry, manifest).unwrap_or_else(|_| SeedAnnotation::empty(""));
    a.reachable_functions.retain(|f| record.call_trace.contains(f));
    a.touched_api_categories = manifest
        .api_sites
        .iter()
        .filter(|s| a.reachable_functions.contains(&s.function_id))
        .map(|s| s.category)
        .collect();
    a
}

impl Campaign {
    pub fn new(config: CampaignConfig) -> Result<Self, CampaignError> {
        config.validate()?;
        let tb = testbed::lookup(&config.target_id).expect("validated");
        let table = match &config.api_table {
            Some(p) => ApiCategoryTable::load(p).map_err(|e| CampaignError::Config(e.to_string()))?,
            None => ApiCategoryTable::builtin(),
        };
        let manifest = load_manifest_with_table(&config.manifest, &table)?;
        if manifest.target_id != config.target_id {
            return Err(CampaignError::Config(format!(
                "manifest describes {:?}, not {:?}",
                manifest.target_id, config.target_id
            )));
        }
        let schema_path = config.schema.clone().unwrap_or_else(|| config.manifest_dir().join("schema.json"));
        let schema = FormatSchema::load(&schema_path).map_err(CampaignError::Schema)?;
        if schema.format_id != manifest.input_format {
            return Err(CampaignError::Config(format!(
                "schema format {:?} does not match manifest input format {:?}",
                schema.format_id, manifest.input_format
            )));
        }
        std::fs::create_dir_all(&config.outdir).map_err(io_err(&config.outdir))?;

        let layout = match (config.mode, &config.queue_root) {
            (_, Some(root)) => Some(QueueDirLayout::new(root)),
            (Mode::SingleCombined, None) => Some(QueueDirLayout::new(config.outdir.join("queue"))),
            (_, None) => None,
        };
        let mut generator = Generator::offline(schema.clone(), config.rng_seed ^ 0x6765_6e65);
        if let (Some(url), false) = (&config.llm_endpoint, config.llm_off) {
            generator = generator.with_remote(RemoteGenerator::new(url, Some(&config.outdir.join("cache").join("gen"))));
        }

        let make_role = |id: &'static str, source: Source, salt: u64, tau: Option<f64>| -> Result<Role, CampaignError> {
            let name = config
                .fuzzer_id
                .clone()
                .filter(|_| config.mode != Mode::SingleCombined)
                .unwrap_or_else(|| id.to_string());
            let writer = match &layout {
                Some(l) => Some(QueueWriter::open(l, &name)?),
                None => None,
            };
            let engine = match tau {
                Some(tau) => {
                    let embedder = match &config.embed_endpoint {
                        Some(url) => Embedder::remote(RemoteEmbedder::new(
                            url,
                            Some(config.outdir.join("cache").join("embed")),
                        )),
                        None => Embedder::builtin(),
                    };
                    let nc = NoveltyConfig {
                        tau,
                        d_prime: config.d_prime,
                        ..NoveltyConfig::default()
                    };
                    Some(SemanticEngine::with_settings(nc, embedder, config.engine)?)
                }
                None => None,
            };
            Ok(Role {
                name,
                source,
                pool: SeedPool::new(tau, config.rng_seed ^ salt),
                engine,
                writer,
                cursor: SyncCursor::default(),
                rng: ChaCha8Rng::seed_from_u64(config.rng_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt),
                inspirational: None,
                traces: HashMap::new(),
                iterations: 0,
            })
        };
        let master = match config.mode {
            Mode::Master | Mode::SingleCombined => Some(make_role(MASTER_ID, Source::Master, 0x11, None)?),
            Mode::Helper => None,
        };
        let helper = match config.mode {
            Mode::Helper | Mode::SingleCombined => Some(make_role(HELPER_ID, Source::Helper, 0x22, config.tau())?),
            Mode::Master => None,
        };
        let planted = tb
            .bug_ids()
            .into_iter()
            .map(|(id, b)| (id, b.bug_id.to_string()))
            .collect();

        let c = Campaign {
            target: tb.target,
            manifest,
            schema,
            layout,
            master,
            helper,
            generator,
            validity: ValidityWindow::default(),
            planted,
            union: CoverageBitmap::new(),
            bug_index: BTreeMap::new(),
            stats: CampaignStats {
                semantic_off: config.semantic_off,
                ..CampaignStats::default()
            },
            start: Instant::now(),
            novelty_sum: 0.0,
            novelty_n: 0,
            last_sample: 0,
            last_sync: Instant::now(),
            rounds: 0,
            started: false,
            done: false,
            config,
        };
        Ok(c)
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    /// Point-in-time copy. Times refer to the latest execution, so two
    /// snapshots with no work in between are equal.
    pub fn snapshot(&self) -> CampaignStats {
        let mut s = snapshot(&self.stats);
        self.fill_totals(&mut s);
        s
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Final corpus of the helper, or of the master when there is no helper.
    pub fn corpus(&self) -> Vec<Vec<u8>> {
        let mut out: Vec<Vec<u8>> = Vec::new();
        for role in [&self.master, &self.helper].into_iter().flatten() {
            out.extend(role.pool.entries().iter().map(|e| e.bytes.clone()));
        }
        out
    }

    fn budget_left(&mut self) -> bool {
        if self.done {
            return false;
        }
        let over_execs = self.config.exec_budget.is_some_and(|b| self.stats.executions >= b);
        if over_execs || self.start.elapsed() >= self.config.time_budget {
            self.done = true;
        }
        !self.done
    }

    fn load_initial(&mut self) -> Result<(), CampaignError> {
        let dir = self.config.seeds.clone().unwrap_or_else(|| self.config.manifest_dir().join("seeds"));
        let mut seeds = read_seeds(&dir)?;
        if seeds.is_empty() {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.rng_seed);
            seeds = (0..8).map(|_| self.schema.generate(&mut rng)).collect();
        }
        for slot in [0, 1] {
            let Some(mut role) = self.take_role(slot) else { continue };
            for s in &seeds {
                if let Some(ran) = self.run_input(s, &mut role, None)? {
                    let a = annotate_run(s, &ran.record, &self.manifest);
                    if let Some(e) = role.pool.add_initial(s, &ran.record, a) {
                        role.traces.insert(e.seed_id.clone(), ran.record.call_trace.clone());
                        role.publish(&e)?;
                    }
                    if let (Some(engine), Some(scored)) = (role.engine.as_mut(), ran.novelty) {
                        engine.observe(scored, true);
                    }
                }
            }
            self.put_role(slot, role);
        }
        Ok(())
    }

    fn take_role(&mut self, slot: usize) -> Option<Role> {
        if slot == 0 {
            self.master.take()
        } else {
            self.helper.take()
        }
    }

    fn put_role(&mut self, slot: usize, role: Role) {
        if slot == 0 {
            self.master = Some(role);
        } else {
            self.helper = Some(role);
        }
    }

    /// Executes one input for `role`, recording coverage, crashes and (for
    /// a role with a semantic engine) its novelty. `None` once the budget
    /// is spent or when the target harness itself panicked.
    fn run_input(&mut self, input: &[u8], role: &mut Role, parent: Option<&str>) -> Result<Option<Ran>, CampaignError> {
        if !self.budget_left() {
            return Ok(None);
        }
        let record = execute(input, &self.target, &self.config.limits);
        self.stats.executions += 1;
        self.stats.elapsed_secs = self.start.elapsed().as_secs_f64();
        let record = match record {
            Ok(r) => r,
            Err(e @ ExecError::Harness { .. }) => {
                log::warn!("skipping input {}: {e}", crate::executor::input_id(input));
                return Ok(None);
            }
            Err(e) => return Err(e.into()),
        };
        self.union.merge_bucketed(&record.bitmap);
        if record.outcome == Outcome::Crash {
            self.record_bug(input, &record, role, parent)?;
        }
        let novelty = match role.engine.as_mut() {
            Some(engine) => {
                let scored = engine.score(&canonicalize(&extract_signals(&record)));
                self.novelty_sum += scored.novelty;
                self.novelty_n += 1;
                Some(scored)
            }
            None => None,
        };
        if self.stats.executions - self.last_sample >= self.config.sample_every {
            self.sample();
        }
        Ok(Some(Ran { record, novelty }))
    }

    fn record_bug(
        &mut self,
        input: &[u8],
        record: &ExecutionRecord,
        role: &Role,
        parent: Option<&str>,
    ) -> Result<(), CampaignError> {
        let id = dedup_crash(record)?;
        if self.bug_index.contains_key(&id) {
            return Ok(());
        }
        write_crash_artifact(&self.config.outdir, &id, record, input)?;
        let bug = BugRecord {
            bug_id: id.to_string(),
            ttfb_secs: self.start.elapsed().as_secs_f64(),
            ttfb_execs: self.stats.executions,
            found_by: role.source,
            admission_path: role.admission_path(parent),
            input_id: record.input_id.clone(),
            planted: self.planted.get(&id).cloned(),
        };
        log::info!(
            "bug {} after {} execs ({})",
            bug.bug_id,
            bug.ttfb_execs,
            bug.planted.as_deref().unwrap_or("unplanted")
        );
        if self.stats.ttfb.is_none() {
            self.stats.ttfb = Some(bug.ttfb_secs);
            self.stats.ttfb_execs = Some(bug.ttfb_execs);
        }
        self.bug_index.insert(id, self.stats.bugs.len());
        self.stats.bugs.push(bug);
        self.stats.unique_bugs = self.stats.bugs.len();
        Ok(())
    }

    fn sample(&mut self) {
        let t = self.start.elapsed().as_secs_f64();
        if self.stats.coverage_series.last().is_some_and(|&(last, _)| t <= last) {
            return;
        }
        self.last_sample = self.stats.executions;
        self.stats.coverage_series.push((t, self.union.count_nonzero()));
        if !self.config.semantic_off {
            let mean = if self.novelty_n > 0 {
                self.novelty_sum / self.novelty_n as f64
            } else {
                0.0
            };
            self.stats.mean_novelty_series.push((t, mean));
        }
        self.stats.exec_series.push(self.stats.executions);
        self.stats.bugs_series.push(self.stats.unique_bugs);
        self.novelty_sum = 0.0;
        self.novelty_n = 0;
    }

    /// Offers an executed input to `role`'s pool and publishes it if
    /// admitted.
    fn offer(
        &mut self,
        input: &[u8],
        ran: Ran,
        role: &mut Role,
        provenance: Provenance,
    ) -> Result<Option<QueueEntry>, CampaignError> {
        let score = ran.novelty.as_ref().map(|s| s.novelty);
        let entry = role.pool.admit(input, &ran.record, score, provenance);
        if let Some(e) = &entry {
            role.traces.insert(e.seed_id.clone(), ran.record.call_trace.clone());
            if matches!(e.admission, Admission::Novelty) {
                self.stats.novelty_admissions += 1;
            }
            role.publish(e)?;
        }
        if let (Some(engine), Some(scored)) = (role.engine.as_mut(), ran.novelty) {
            engine.observe(scored, entry.is_some());
        }
        Ok(entry)
    }

    /// Workflow A: one havoc mutation of an energy-selected seed, admitted
    /// on coverage alone.
    fn master_step(&mut self, role: &mut Role) -> Result<(), CampaignError> {
        let (seed, seed_id) = {
            let e = role.pool.select_next().expect("pool holds the initial corpus");
            (e.bytes.clone(), e.seed_id.clone())
        };
        let other = {
            let entries = role.pool.entries();
            entries[role.rng.random_range(0..entries.len())].bytes.clone()
        };
        let input = havoc(&seed, Some(&other), &mut role.rng, self.schema.max_len());
        let Some(ran) = self.run_input(&input, role, Some(&seed_id))? else {
            return Ok(());
        };
        let annotation = annotate_run(&input, &ran.record, &self.manifest);
        let provenance = Provenance {
            source: Source::Master,
            parent: Some(seed_id.clone()),
            annotation,
        };
        let admitted = self.offer(&input, ran, role, provenance)?.is_some();
        role.pool.update_energy(&seed_id, admitted as u32).expect("seed is pooled");
        role.iterations += 1;
        Ok(())
    }

    fn helper_candidates(&mut self, role: &mut Role, seed: &QueueEntry) -> Vec<CandidateInput> {
        let objective = Objective::nth(role.iterations);
        if self.config.llm_off {
            let max = self.schema.max_len();
            return (0..self.config.k)
                .map(|_| {
                    let bytes = havoc(&seed.bytes, None, &mut role.rng, max);
                    CandidateInput::checked(bytes, Origin::GrammarFallback, &self.schema)
                })
                .collect();
        }
        let hint = MutationHint {
            seed: &seed.bytes,
            objective,
        };
        let req = if self.generator.remote.is_some() {
            let trace = role.traces.get(&seed.seed_id).map(Vec::as_slice);
            build_context_from_trace(seed, &seed.annotation, trace, &self.manifest)
                .and_then(|ctx| build_prompt(&ctx, &objective.instruction(self.config.k), &self.schema))
                .and_then(|p| GenerationRequest::new(p, self.config.temperature, self.config.k))
        } else {
            // The offline generator never reads the prompt.
            Err(MutationError::EmptyObjective)
        };
        match req {
            Ok(req) => generate(&req, &mut self.generator, hint),
            Err(_) => {
                self.generator.stats.fallbacks += 1;
                self.generator
                    .grammar
                    .candidates(&seed.bytes, objective, self.config.k)
                    .into_iter()
                    .map(|b| CandidateInput::checked(b, Origin::GrammarFallback, &self.schema))
                    .collect()
            }
        }
    }

    /// Workflow B1 to C1: pick a seed, generate `k` structured candidates,
    /// validate and repair them, execute, score and admit.
    fn helper_step(&mut self, role: &mut Role) -> Result<(), CampaignError> {
        let seed = match role.inspirational.take() {
            Some(e) => e,
            None => role.pool.select_next().expect("pool holds the initial corpus").clone(),
        };
        let candidates = self.helper_candidates(role, &seed);
        let mut children = 0;
        for c in candidates {
            let c = match validate(&c, &self.schema) {
                Ok(()) => c,
                Err(v) => {
                    let remote = if self.config.llm_off { None } else { self.generator.remote.as_mut() };
                    repair(&c, &v, &self.schema, remote).unwrap_or(c)
                }
            };
            self.validity.record(c.valid);
            if !c.valid {
                continue;
            }
            let Some(ran) = self.run_input(&c.bytes, role, Some(&seed.seed_id))? else {
                continue;
            };
            let annotation = annotate_run(&c.bytes, &ran.record, &self.manifest);
            let provenance = Provenance {
                source: Source::Helper,
                parent: Some(seed.seed_id.clone()),
                annotation,
            };
            if self.offer(&c.bytes, ran, role, provenance)?.is_some() {
                children += 1;
            }
        }
        if role.pool.get(&seed.seed_id).is_some() {
            role.pool.update_energy(&seed.seed_id, children).expect("seed is pooled");
        }
        role.iterations += 1;
        Ok(())
    }

    /// Workflow C2: pull peers' new entries into `role`. The master
    /// re-evaluates them on coverage alone; the helper scores them as usual
    /// and keeps the best as its next inspirational seed.
    fn sync_role(&mut self, role: &mut Role) -> Result<(), CampaignError> {
        let Some(layout) = self.layout.clone() else {
            return Ok(());
        };
        let synced = scan_new(&layout, &role.name, &mut role.cursor)?;
        let mut fresh = Vec::new();
        for s in synced {
            if role.pool.contains_bytes(&s.bytes) {
                continue;
            }
            let Some(ran) = self.run_input(&s.bytes, role, s.name.src.as_deref())? else {
                continue;
            };
            let new_edges = role.pool.global_map().count_new(&ran.record.bitmap);
            let annotation = annotate_run(&s.bytes, &ran.record, &self.manifest);
            let source = if s.peer.starts_with(HELPER_ID) { Source::Helper } else { Source::Master };
            let provenance = Provenance {
                source,
                parent: s.name.src.clone(),
                annotation: annotation.clone(),
            };
            let entry = match self.offer(&s.bytes, ran, role, provenance)? {
                Some(e) => e,
                None => QueueEntry {
                    seed_id: crate::executor::input_id(&s.bytes),
                    bytes: s.bytes.clone(),
                    source,
                    admission: s.name.admission,
                    novelty_score: None,
                    new_edges,
                    annotation,
                    energy: 1.0,
                    created_at: s.name.seq,
                    parent: s.name.src.clone(),
                },
            };
            fresh.push(entry);
        }
        if role.source == Source::Helper && !fresh.is_empty() {
            role.inspirational = select_inspirational(&fresh).ok().cloned();
        }
        Ok(())
    }

    /// One scheduling round: in combined mode `master_execs_per_round`
    /// master steps then one helper step, syncing every `sync_rounds`.
    pub fn step(&mut self) -> Result<(), CampaignError> {
        if !self.started {
            self.started = true;
            self.load_initial()?;
        }
        if !self.budget_left() {
            return Ok(());
        }
        if let Some(mut m) = self.master.take() {
            for _ in 0..self.config.master_execs_per_round {
                if self.done {
                    break;
                }
                self.master_step(&mut m)?;
            }
            self.master = Some(m);
        }
        if let Some(mut h) = self.helper.take() {
            if !self.done {
                self.helper_step(&mut h)?;
            }
            self.helper = Some(h);
        }
        self.rounds += 1;
        let due = match self.config.mode {
            Mode::SingleCombined => self.rounds % self.config.sync_rounds == 0,
            _ => self.last_sync.elapsed() >= self.config.sync_interval,
        };
        if due && !self.done {
            self.last_sync = Instant::now();
            for slot in [0, 1] {
                if let Some(mut r) = self.take_role(slot) {
                    let res = self.sync_role(&mut r);
                    self.put_role(slot, r);
                    res?;
                }
            }
        }
        Ok(())
    }

    fn fill_totals(&self, s: &mut CampaignStats) {
        s.execs_per_sec = if s.elapsed_secs > 0.0 {
            s.executions as f64 / s.elapsed_secs
        } else {
            0.0
        };
        s.llm_queries = self.generator.remote.as_ref().map_or(0, |r| r.queries);
        s.llm_queries_per_hour = if s.elapsed_secs > 0.0 {
            s.llm_queries as f64 * 3600.0 / s.elapsed_secs
        } else {
            0.0
        };
        s.valid_input_rate = valid_input_rate(&self.validity).ok();
        s.generated_candidates = self.validity.generated;
        s.edges = self.union.count_nonzero();
        s.corpus_size = [&self.master, &self.helper].into_iter().flatten().map(|r| r.pool.len()).sum();
        s.retained_variance = self
            .helper
            .as_ref()
            .and_then(|h| h.engine.as_ref())
            .filter(|e| e.pca().samples_seen() >= PCA_WARMUP)
            .and_then(|e| e.pca().retained_variance(self.config.d_prime).ok());
    }

    /// Runs until the budget is spent and returns the final stats.
    pub fn finish(mut self) -> Result<(CampaignStats, Campaign), CampaignError> {
        while !self.done {
            self.step()?;
        }
        self.sample();
        self.stats.elapsed_secs = self.start.elapsed().as_secs_f64();
        let mut s = self.stats.clone();
        self.fill_totals(&mut s);
        self.stats = s.clone();
        Ok((s, self))
    }
}

/// Runs a whole campaign and writes its reports to `config.outdir`.
pub fn run(config: CampaignConfig) -> Result<CampaignStats, CampaignError> {
    let outdir = config.outdir.clone();
    let (stats, _) = Campaign::new(config)?.finish()?;
    emit_report(&stats, &outdir)?;
    Ok(stats)
}

#[cfg(test)]
mod tests;
