use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{PoolChoice, RunConfig, ScorerConfig, TeacherConfig, API_KEY_ENV};
use super::{CliError, Outcome};
use crate::annotator::{
    aggregate, audit_sample, generate_corpus, read_corpus, write_corpus, AnnotationCache, Annotator,
    AnnotatorConfig, AnnotatorStats, AuditSheet, CorpusManifest, DeterministicTeacher, FixtureTeacher,
    GenerationConfig, HttpTeacher, PromptSet, SlotSource, TeacherClient,
};
use crate::catalog::io::{
    read_catalog, read_loo_split, read_sequences, write_catalog, write_loo_split, write_search_split,
    write_sequences, ManifestHeader,
};
use crate::catalog::{
    build_sequences, ingest, kcore_filter, leave_one_out_split, product_search_split, Catalog, IngestOptions,
    LeaveOneOutSplit, QueryPair,
};
use crate::digest::sha256_hex;
use crate::eval::{
    evaluate_scenario, heldout_scenario_run, read_curve, render_curve_svg, write_curve, EvalContext,
    EvalScenario, PoolSource,
};
use crate::matcher::{build_retriever_index, training_sequences, RetrieverIndex};
use crate::retry::RetryPolicy;
use crate::scorer::{
    FixtureScorer, LexicalScorer, OracleScorer, RandomScorer, RecordingScorer, RemoteScorer, ScoreError,
    Scorer,
};
use crate::templates::{builtin_registry, AspectTags, Registry};

/// Counters written by `annotate` to `annotate-report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateReport {
    pub teacher: String,
    /// Distinct requests the configured parts need.
    pub requests: usize,
    pub failed: usize,
    pub budget_exhausted: bool,
    pub stats: AnnotatorStats,
    /// Calls that reached the teacher backend, retries included.
    pub backend_calls: usize,
}

pub(super) struct EvalRequest {
    pub scenarios: Vec<String>,
    pub template: Option<String>,
    pub pool: Option<PoolChoice>,
    pub scorer: Option<ScorerConfig>,
    pub record: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

enum TeacherBackend {
    Deterministic(DeterministicTeacher),
    Fixture(FixtureTeacher),
    Live(HttpTeacher),
}

impl TeacherBackend {
    fn client(&self) -> &dyn TeacherClient {
        match self {
            TeacherBackend::Deterministic(t) => t,
            TeacherBackend::Fixture(t) => t,
            TeacherBackend::Live(t) => t,
        }
    }

    fn backend_calls(&self, stats: &AnnotatorStats) -> usize {
        match self {
            TeacherBackend::Fixture(t) => t.calls(),
            _ => stats.upstream_calls,
        }
    }
}

fn short(digest: &str) -> &str {
    &digest[..16]
}

fn digest_of<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("serialisable"))
}

fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| io_at(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn io_at(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| io_at(path, e))
}

/// Write through a temporary sibling and rename, so an interrupted command
/// never leaves a truncated artifact under its final name.
fn write_atomic<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
{
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut w = BufWriter::new(File::create(&tmp).map_err(|e| io_at(&tmp, e))?);
    fill(&mut w)?;
    w.flush()?;
    drop(w);
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_reader(open(path)?).map_err(|e| {
        CliError::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("{}: {e}", path.display()),
        ))
    })
}

fn build_scorer(config: &ScorerConfig) -> Result<Box<dyn Scorer>, ScoreError> {
    Ok(match config {
        ScorerConfig::Lexical => Box::new(LexicalScorer),
        ScorerConfig::MockOracle => Box::new(OracleScorer::perfect()),
        ScorerConfig::MockInverseOracle => Box::new(OracleScorer::inverse()),
        ScorerConfig::MockRandom { seed } => Box::new(RandomScorer::new(*seed)),
        ScorerConfig::Fixture { path } => Box::new(FixtureScorer::load(path)?),
        ScorerConfig::Remote { endpoint } => Box::new(
            RemoteScorer::new(endpoint, RetryPolicy::default())?
                .with_api_key(std::env::var(API_KEY_ENV).ok()),
        ),
    })
}

/// Paths of the ingest and split artifacts plus the digest chaining them.
struct Prepared {
    catalog: PathBuf,
    split: PathBuf,
    split_digest: String,
}

pub struct Pipeline {
    config: RunConfig,
    force: bool,
}

impl Pipeline {
    pub fn new(config: RunConfig, force: bool) -> Self {
        Pipeline { config, force }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn fresh(&self, paths: &[&Path]) -> bool {
        !self.force && paths.iter().all(|p| p.exists())
    }

    fn registry(&self) -> Result<Registry, CliError> {
        Ok(builtin_registry()?)
    }

    fn prompts(&self) -> Result<PromptSet, CliError> {
        match &self.config.prompts {
            None => Ok(PromptSet::builtin()),
            Some(p) => Ok(PromptSet::from_json(
                &std::fs::read_to_string(p).map_err(|e| io_at(p, e))?,
            )?),
        }
    }

    fn cache(&self) -> Result<AnnotationCache, CliError> {
        std::fs::create_dir_all(&self.config.output_dir)?;
        let path = self.out("annotations.jsonl");
        AnnotationCache::open(&path).map_err(|e| io_at(&path, e))
    }

    /// `for_eval` swaps a live teacher for an empty fixture, so evaluation
    /// reads teacher slots from the cache only.
    fn teacher(&self, for_eval: bool) -> Result<TeacherBackend, CliError> {
        Ok(match &self.config.teacher {
            TeacherConfig::Deterministic => TeacherBackend::Deterministic(DeterministicTeacher),
            TeacherConfig::Fixture { path } => {
                TeacherBackend::Fixture(FixtureTeacher::load(path).map_err(|e| io_at(path, e))?)
            }
            TeacherConfig::Live { .. } if for_eval => {
                TeacherBackend::Fixture(FixtureTeacher::new("cache-only", []))
            }
            TeacherConfig::Live { endpoint } => TeacherBackend::Live(
                HttpTeacher::new(endpoint, std::env::var(API_KEY_ENV).ok())
                    .map_err(|e| CliError::Teacher(e.to_string()))?,
            ),
        })
    }

    fn annotator_config(&self) -> AnnotatorConfig {
        AnnotatorConfig {
            retry: RetryPolicy::default(),
            max_upstream_calls: self.config.annotate.max_upstream_calls,
            concurrency: self.config.annotate.concurrency,
        }
    }

    fn ingest_digest(&self) -> Result<String, CliError> {
        let d = &self.config.dataset;
        Ok(digest_of(&serde_json::json!({
            "name": d.name,
            "interactions": file_digest(&d.interactions)?,
            "items": file_digest(&d.items)?,
            "max_error_rate": d.max_error_rate,
            "kcore": self.config.kcore,
            "max_sequence_len": self.config.max_sequence_len,
        })))
    }

    fn ensure_ingest(&self) -> Result<(PathBuf, PathBuf, String), CliError> {
        let digest = self.ingest_digest()?;
        let catalog_path = self.out(&format!("catalog-{}.jsonl", short(&digest)));
        let seq_path = self.out(&format!("sequences-{}.jsonl", short(&digest)));
        if self.fresh(&[&catalog_path, &seq_path]) {
            log::info!("reusing {}", catalog_path.display());
            return Ok((catalog_path, seq_path, digest));
        }
        let d = &self.config.dataset;
        let options = IngestOptions {
            max_error_rate: d.max_error_rate,
            provenance: d.name.clone(),
        };
        let (raw, report) = ingest(open(&d.interactions)?, open(&d.items)?, &options)?;
        let catalog = kcore_filter(&raw, self.config.kcore)?;
        let sequences = build_sequences(&catalog, self.config.max_sequence_len);
        log::info!(
            "ingested {} lines ({} malformed); {} users and {} items after {}-core filtering",
            report.total_lines,
            report.malformed.len(),
            catalog.num_users(),
            catalog.items.len(),
            self.config.kcore
        );
        write_json(
            &self.out(&format!("ingest-report-{}.json", short(&digest))),
            &report,
        )?;
        write_atomic(&catalog_path, |w| {
            Ok(write_catalog(
                w,
                &catalog,
                &ManifestHeader::new("catalog", None, &d.name, &digest),
            )?)
        })?;
        write_atomic(&seq_path, |w| {
            Ok(write_sequences(
                w,
                &sequences,
                &ManifestHeader::new("sequences", None, &d.name, &digest),
            )?)
        })?;
        Ok((catalog_path, seq_path, digest))
    }

    fn ensure_split(&self) -> Result<Prepared, CliError> {
        let (catalog, sequences, ingest_digest) = self.ensure_ingest()?;
        let digest = digest_of(&("leave-one-out", &ingest_digest));
        let split = self.out(&format!("split-loo-{}.jsonl", short(&digest)));
        if !self.fresh(&[&split]) {
            let (_, seqs) = read_sequences(open(&sequences)?)?;
            let loo = leave_one_out_split(&seqs);
            let header = ManifestHeader::new("split_leave_one_out", None, &self.config.dataset.name, &digest);
            write_atomic(&split, |w| Ok(write_loo_split(w, &loo, &header)?))?;
        }
        Ok(Prepared {
            catalog,
            split,
            split_digest: digest,
        })
    }

    fn ensure_search_split(&self, queries: &Path) -> Result<PathBuf, CliError> {
        let digest = digest_of(&("product-search", file_digest(queries)?, self.config.seed));
        let path = self.out(&format!("split-search-{}.jsonl", short(&digest)));
        if self.fresh(&[&path]) {
            return Ok(path);
        }
        let mut pairs = Vec::new();
        for (n, line) in open(queries)?.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let pair: QueryPair = serde_json::from_str(&line)
                .map_err(|e| CliError::Config(format!("{} line {}: {e}", queries.display(), n + 1)))?;
            pairs.push(pair);
        }
        let split = product_search_split(&pairs, self.config.seed)?;
        let header = ManifestHeader::new(
            "split_product_search",
            Some(self.config.seed),
            &self.config.dataset.name,
            &digest,
        );
        write_atomic(&path, |w| Ok(write_search_split(w, &split, &header)?))?;
        Ok(path)
    }

    fn load(&self, prepared: &Prepared) -> Result<(Catalog, LeaveOneOutSplit), CliError> {
        let (_, catalog) = read_catalog(open(&prepared.catalog)?)?;
        let (_, split) = read_loo_split(open(&prepared.split)?)?;
        Ok((catalog, split))
    }

    pub fn cmd_ingest(&self) -> Result<Outcome, CliError> {
        let (catalog, sequences, _) = self.ensure_ingest()?;
        Ok(Outcome::new(vec![catalog, sequences], String::new()))
    }

    pub fn cmd_split(&self) -> Result<Outcome, CliError> {
        let prepared = self.ensure_split()?;
        let mut artifacts = vec![prepared.split];
        if let Some(q) = &self.config.dataset.queries {
            artifacts.push(self.ensure_search_split(q)?);
        }
        Ok(Outcome::new(artifacts, String::new()))
    }

    /// Prefetch every teacher completion the configured split parts need.
    pub fn cmd_annotate(&self) -> Result<(Outcome, AnnotateReport), CliError> {
        let prepared = self.ensure_split()?;
        let (catalog, split) = self.load(&prepared)?;
        let backend = self.teacher(false)?;
        let cache = self.cache()?;
        let prompts = self.prompts()?;
        let annotator = Annotator::new(backend.client(), &cache, &prompts, self.annotator_config());

        let mut requests = Vec::new();
        for user in &split.users {
            for &part in &self.config.annotate.parts {
                let source = SlotSource {
                    catalog: &catalog,
                    annotator: Some(&annotator),
                    user,
                    part,
                };
                requests.extend(source.explicit_preference_request().ok());
                requests.extend(source.vague_intention_request().ok());
            }
        }
        let mut digests: Vec<String> = requests.iter().map(|r| r.digest()).collect();
        digests.sort();
        digests.dedup();
        let (failed, budget_exhausted) = match annotator.prefetch(&requests) {
            Ok(n) => (n, false),
            Err(crate::annotator::AnnotatorError::BudgetExhausted) => (0, true),
            Err(e) => return Err(e.into()),
        };
        let stats = annotator.stats();
        let report = AnnotateReport {
            teacher: backend.client().identity(),
            requests: digests.len(),
            failed,
            budget_exhausted,
            backend_calls: backend.backend_calls(&stats),
            stats,
        };
        let path = self.out("annotate-report.json");
        write_json(&path, &report)?;
        let text = format!(
            "{} requests, {} upstream calls, {} cache hits, {} failed{}",
            report.requests,
            report.stats.upstream_calls,
            report.stats.cache_hits,
            report.failed,
            if budget_exhausted {
                ", budget exhausted"
            } else {
                ""
            }
        );
        Ok((
            Outcome {
                degraded: budget_exhausted,
                ..Outcome::new(vec![path], text)
            },
            report,
        ))
    }

    /// Generate (or reuse) the corpus; returns its path and manifest.
    fn ensure_corpus(&self) -> Result<(PathBuf, CorpusManifest), CliError> {
        if self.config.corpus.scenarios.is_empty() {
            return Err(CliError::Config(
                "at `corpus.scenarios`: no scenarios configured".into(),
            ));
        }
        let prepared = self.ensure_split()?;
        let registry = self.registry()?;
        let prompts = self.prompts()?;
        let backend = self.teacher(false)?;
        let gen = GenerationConfig {
            seed: self.config.seed,
            scenarios: self.config.corpus.scenarios.clone(),
            part: self.config.corpus.part,
            purpose: self.config.corpus.purpose,
            negatives: self.config.corpus.negatives,
        };
        let teacher_id = backend.client().identity();
        let digest = digest_of(&(
            &prepared.split_digest,
            &gen,
            &teacher_id,
            digest_of(&prompts),
            registry.checksum(),
        ));
        let path = self.out(&format!("corpus-{}.jsonl", short(&digest)));
        let manifest_path = self.out(&format!("corpus-{}.manifest.json", short(&digest)));
        if self.fresh(&[&path, &manifest_path]) {
            log::info!("reusing {}", path.display());
            return Ok((path, read_json(&manifest_path)?));
        }

        let (catalog, split) = self.load(&prepared)?;
        let cache = self.cache()?;
        let annotator = Annotator::new(backend.client(), &cache, &prompts, self.annotator_config());
        let corpus = generate_corpus(&gen, &catalog, &split, &registry, &annotator)?;
        let manifest = CorpusManifest {
            purpose: corpus.purpose,
            partial: corpus.partial,
            seed: gen.seed,
            prompt_version: prompts.version.clone(),
            teacher: teacher_id,
            template_checksum: registry.checksum().to_string(),
            input_digest: prepared.split_digest.clone(),
            stats: corpus.stats.clone(),
        };
        write_atomic(&path, |w| Ok(write_corpus(w, &corpus)?))?;
        write_json(&manifest_path, &manifest)?;
        Ok((path, manifest))
    }

    pub fn cmd_corpus(&self) -> Result<Outcome, CliError> {
        let (path, manifest) = self.ensure_corpus()?;
        if manifest.partial {
            log::warn!("corpus is partial: the teacher call budget ran out");
        }
        Ok(Outcome {
            degraded: manifest.partial,
            ..Outcome::new(vec![path], manifest.stats.to_string())
        })
    }

    pub fn cmd_audit(&self, n: Option<usize>) -> Result<Outcome, CliError> {
        let (corpus_path, _) = self.ensure_corpus()?;
        let instances = read_corpus(open(&corpus_path)?)?;
        let n = n.unwrap_or(self.config.audit.n_per_kind);
        let sheet = audit_sample(&instances, n, self.config.seed);
        let digest = digest_of(&(file_digest(&corpus_path)?, n, self.config.seed));
        let path = self.out(&format!("audit-{}.json", short(&digest)));
        write_json(&path, &sheet)?;
        let text = format!("{} rows to review", sheet.rows.len());
        Ok(Outcome::new(vec![path], text))
    }

    fn pool_source<'a>(&self, choice: PoolChoice, index: Option<&'a RetrieverIndex>) -> PoolSource<'a> {
        match (choice, index) {
            (PoolChoice::Hard, Some(index)) => PoolSource::Hard {
                index,
                negatives: self.config.pool.negatives,
            },
            (PoolChoice::Large, _) => PoolSource::Large,
            _ => PoolSource::Uniform {
                negatives: self.config.pool.negatives,
            },
        }
    }

    fn ensure_retriever(
        &self,
        prepared: &Prepared,
        catalog: &Catalog,
        split: &LeaveOneOutSplit,
    ) -> Result<RetrieverIndex, CliError> {
        let digest = digest_of(&(
            &prepared.split_digest,
            self.config.pool.window,
            self.config.pool.alpha,
        ));
        let path = self.out(&format!("retriever-{}.json", short(&digest)));
        if self.fresh(&[&path]) {
            return Ok(RetrieverIndex::read_json(open(&path)?)?);
        }
        let index = build_retriever_index(&training_sequences(split), catalog, self.config.pool.window)
            .with_alpha(self.config.pool.alpha);
        write_atomic(&path, |w| Ok(index.write_json(w)?))?;
        Ok(index)
    }

    fn eval_scenarios(&self, req: &EvalRequest) -> Result<Vec<EvalScenario>, CliError> {
        let mut scenarios = if req.scenarios.is_empty() {
            self.config.eval.scenarios.clone()
        } else {
            req.scenarios
                .iter()
                .map(|s| {
                    s.parse::<AspectTags>()
                        .map(EvalScenario::new)
                        .map_err(|e| CliError::Usage(format!("--scenario {s}: {e}")))
                })
                .collect::<Result<_, _>>()?
        };
        if scenarios.is_empty() {
            return Err(CliError::Usage(
                "no scenarios: pass --scenario or set eval.scenarios".into(),
            ));
        }
        if let Some(t) = &req.template {
            scenarios = scenarios.into_iter().map(|s| s.with_template(t)).collect();
        }
        Ok(scenarios)
    }

    pub(super) fn cmd_eval(&self, req: &EvalRequest) -> Result<Outcome, CliError> {
        let scenarios = self.eval_scenarios(req)?;
        if req.out.is_some() && scenarios.len() > 1 {
            return Err(CliError::Usage("--out needs exactly one scenario".into()));
        }
        let prepared = self.ensure_split()?;
        let (catalog, split) = self.load(&prepared)?;
        let registry = self.registry()?;
        let prompts = self.prompts()?;
        let backend = self.teacher(true)?;
        let cache = self.cache()?;
        let annotator = Annotator::new(backend.client(), &cache, &prompts, self.annotator_config());
        let options = &self.config.eval.options;
        let ctx = EvalContext::new(&catalog, &split, &registry, Some(&annotator), options)?;

        let scorer_config = req.scorer.clone().unwrap_or_else(|| self.config.scorer.clone());
        let recorder = RecordingScorer::new(build_scorer(&scorer_config)?);
        let pool_choice = req.pool.unwrap_or(self.config.pool.kind);
        let index = match pool_choice {
            PoolChoice::Hard => Some(self.ensure_retriever(&prepared, &catalog, &split)?),
            _ => None,
        };
        let pool = self.pool_source(pool_choice, index.as_ref());

        let mut outcome = Outcome::default();
        for scenario in &scenarios {
            let e = evaluate_scenario(&ctx, scenario, &recorder, &pool, self.config.seed)?;
            let path = match &req.out {
                Some(p) => p.clone(),
                None => {
                    let digest = digest_of(&(
                        &prepared.split_digest,
                        scenario,
                        &scorer_config,
                        &self.config.pool,
                        pool_choice,
                        options,
                        self.config.seed,
                        digest_of(&prompts),
                    ));
                    self.out(&format!(
                        "eval/{}-{}-{}.json",
                        scenario.scenario_id(),
                        pool.kind().as_str(),
                        short(&digest)
                    ))
                }
            };
            write_json(&path, &e.manifest)?;
            outcome.report.push_str(&format!("{}\n", e.report));
            if !e.is_valid() {
                log::warn!(
                    "{}: invalid, {} of {} instances skipped",
                    scenario.scenario_id(),
                    e.manifest.skipped,
                    e.manifest.n + e.manifest.skipped
                );
                outcome.degraded = true;
            }
            outcome.artifacts.push(path);
        }
        if let Some(record) = &req.record {
            write_atomic(record, |w| Ok(recorder.write(w)?))?;
            outcome.artifacts.push(record.clone());
        }
        Ok(outcome)
    }

    pub fn cmd_heldout(&self, pool_choice: Option<PoolChoice>) -> Result<Outcome, CliError> {
        let heldout = self
            .config
            .heldout
            .clone()
            .ok_or_else(|| CliError::Config("at `heldout`: not configured".into()))?;
        let prepared = self.ensure_split()?;
        let (catalog, split) = self.load(&prepared)?;
        let registry = self.registry()?;
        let prompts = self.prompts()?;
        let backend = self.teacher(true)?;
        let cache = self.cache()?;
        let annotator = Annotator::new(backend.client(), &cache, &prompts, self.annotator_config());
        let ctx = EvalContext::new(
            &catalog,
            &split,
            &registry,
            Some(&annotator),
            &self.config.eval.options,
        )?;
        let pool_choice = pool_choice.unwrap_or(self.config.pool.kind);
        let index = match pool_choice {
            PoolChoice::Hard => Some(self.ensure_retriever(&prepared, &catalog, &split)?),
            _ => None,
        };
        let pool = self.pool_source(pool_choice, index.as_ref());

        let ids: Vec<String> = heldout.subsets.iter().map(|s| s.id.clone()).collect();
        let scorer_for = |id: &str| {
            let subset = heldout
                .subsets
                .iter()
                .find(|s| s.id == id)
                .expect("configured subset");
            build_scorer(&subset.scorer)
        };
        let points = heldout_scenario_run(
            &ctx,
            &ids,
            &heldout.scenario,
            &scorer_for,
            &pool,
            self.config.seed,
        )?;
        let digest = digest_of(&(&prepared.split_digest, &heldout, pool_choice, self.config.seed));
        let path = self.out(&format!("curve-{}.jsonl", short(&digest)));
        write_atomic(&path, |w| Ok(write_curve(w, &points)?))?;
        let svg = path.with_extension("svg");
        write_atomic(&svg, |w| {
            Ok(w.write_all(render_curve_svg(&points, "ndcg@5").as_bytes())?)
        })?;
        Ok(Outcome {
            degraded: points.iter().any(|p| p.metrics.is_none()),
            ..Outcome::new(vec![path, svg], String::new())
        })
    }
}

pub(super) fn plot(curve: &Path, metric: &str) -> Result<Outcome, CliError> {
    let points = read_curve(open(curve)?)?;
    let known = points
        .iter()
        .flat_map(|p| p.metrics.iter())
        .any(|m| m.contains_key(metric));
    if !known && points.iter().any(|p| p.metrics.is_some()) {
        return Err(CliError::Usage(format!(
            "metric {metric} not in {}",
            curve.display()
        )));
    }
    let svg = curve.with_extension("svg");
    write_atomic(&svg, |w| {
        Ok(w.write_all(render_curve_svg(&points, metric).as_bytes())?)
    })?;
    Ok(Outcome::new(vec![svg], String::new()))
}

pub(super) fn aggregate_sheet(path: &Path) -> Result<Outcome, CliError> {
    let sheet: AuditSheet = read_json(path)?;
    let summary = aggregate(&sheet)?;
    Ok(Outcome::new(Vec::new(), summary.to_string()))
}

/// Serve the fixture until the process is killed. Prints the bound URL on
/// stdout first, so callers that pass port 0 can discover it.
pub(super) fn serve_fixture(path: &Path, host: &str, port: u16) -> Result<Outcome, CliError> {
    let scorer = FixtureScorer::load(path)?;
    let addr: SocketAddr = (host, port)
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| CliError::Usage(format!("cannot resolve {host}")))?;
    let handle = crate::server::spawn(Arc::new(scorer), addr)?;
    println!("listening on {}", handle.url());
    std::io::stdout().flush()?;
    handle.join()?;
    Ok(Outcome::default())
}
