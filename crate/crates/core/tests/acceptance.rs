//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so every line is printed even when the run passes.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recprompt::annotator::{derive_implicit_preference, derive_specific_intention, SlotSource};
use recprompt::catalog::{kcore_filter, Catalog, Event, InteractionRecord, ItemRecord, SplitPart};
use recprompt::eval::{
    evaluate_scenario, grouped_rerank, Assembler, EvalContext, EvalOptions, EvalScenario, PoolSource,
    TargetRank,
};
use recprompt::matcher::{
    build_retriever_index, sample_large_pool, training_sequences, LARGE_POOL_NEGATIVES,
};
use recprompt::scorer::{
    LexicalScorer, LogLikelihood, OracleScorer, RandomScorer, ScoreError, ScoreMode, ScoreRequest, Scorer,
};
use recprompt::synth::{synthetic_dataset, SynthConfig, SynthData};
use recprompt::templates::{builtin_registry, TemplateCategory};

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn dataset(users: usize, items_per_genre: usize) -> SynthData {
    synthetic_dataset(&SynthConfig {
        users,
        items_per_genre,
        review_rate: 1.0,
        ..Default::default()
    })
}

fn c1_registry() -> Result<String, String> {
    let start = Instant::now();
    let registry = builtin_registry().map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut counts: BTreeMap<TemplateCategory, usize> = BTreeMap::new();
    let mut words = 0usize;
    for t in registry.templates() {
        *counts.entry(t.category).or_default() += 1;
        words += t.body.split_whitespace().count();
    }
    let mean = words as f64 / registry.templates().len() as f64;
    ensure(registry.len() == 39, || format!("{} templates", registry.len()))?;
    let got = [
        counts.get(&TemplateCategory::Preference).copied().unwrap_or(0),
        counts.get(&TemplateCategory::Intention).copied().unwrap_or(0),
        counts.get(&TemplateCategory::Combined).copied().unwrap_or(0),
    ];
    ensure(got == [17, 9, 13], || format!("category counts {got:?}"))?;
    ensure((mean - 41.4).abs() <= 4.0, || {
        format!("mean body length {mean:.2}")
    })?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!(
        "39 templates, 17/9/13, mean {mean:.1} words, loaded in {elapsed:.1?}"
    ))
}

fn c2_annotations() -> Result<String, String> {
    let item = ItemRecord::new(
        "m",
        "Gaming Mouse",
        &["Video Games", "PC", "Accessories", "Gaming Mice"],
    );
    let specific = derive_specific_intention(&item).map_err(|e| e.to_string())?;
    ensure(
        specific.text == "Video Games, PC, Accessories, Gaming Mice.",
        || format!("specific intention {:?}", specific.text),
    )?;

    let mut catalog = Catalog::default();
    let titles = [
        ("re2", "Resident Evil: Revelations 2 - PlayStation 4"),
        ("re4", "Resident Evil 4 - PlayStation 4 Standard Edition"),
    ];
    for (id, title) in titles {
        catalog
            .items
            .insert(id.into(), ItemRecord::new(id, title, &["Video Games"]));
    }
    let events: Vec<Event> = titles
        .iter()
        .enumerate()
        .map(|(t, (id, _))| Event {
            item_id: id.to_string(),
            timestamp: t as i64,
            review_text: None,
        })
        .collect();
    let history = derive_implicit_preference(&events, &catalog).map_err(|e| e.to_string())?;
    // The reference line ends its sentence with a period; the rendered
    // history is embedded mid-sentence and carries none.
    let expected = "1. Resident Evil: Revelations 2 - PlayStation 4 \u{2192} 2. Resident Evil 4 - PlayStation 4 Standard Edition.";
    ensure(format!("{}.", history.text) == expected, || {
        format!("history {:?}", history.text)
    })?;
    Ok("specific intention and arrow history match the reference strings".into())
}

/// Scores uniformly at random and remembers every request with its answer.
struct ProbeScorer {
    rng: Mutex<ChaCha8Rng>,
    seen: Mutex<Vec<(usize, Vec<f64>)>>,
}

impl Scorer for ProbeScorer {
    fn identity(&self) -> String {
        "probe".into()
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<Vec<LogLikelihood>, ScoreError> {
        let mut rng = self.rng.lock().unwrap();
        let totals: Vec<f64> = request
            .candidate_outputs
            .iter()
            .map(|_| -rng.gen::<f64>() * 20.0)
            .collect();
        self.seen.lock().unwrap().push((
            request.target_hint.expect("eval passes the target"),
            totals.clone(),
        ));
        Ok(totals.into_iter().map(|t| LogLikelihood::new(t, 1)).collect())
    }
}

fn oracle_metrics(ranks: &[usize]) -> ([f64; 3], [f64; 3]) {
    let mut hr = [0.0; 3];
    let mut nd = [0.0; 3];
    for &r in ranks {
        for (slot, k) in [1usize, 3, 5].into_iter().enumerate() {
            if r <= k {
                hr[slot] += 1.0;
                nd[slot] += 1.0 / (r as f64 + 1.0).log2();
            }
        }
    }
    let n = ranks.len() as f64;
    (hr.map(|v| v / n), nd.map(|v| v / n))
}

fn c3_metric_oracle() -> Result<String, String> {
    let start = Instant::now();
    let data = dataset(500, 20);
    let registry = builtin_registry().unwrap();
    let options = EvalOptions::default();
    let ctx =
        EvalContext::new(&data.catalog, &data.split, &registry, None, &options).map_err(|e| e.to_string())?;
    let scenario = EvalScenario::new("P1-I0-T3".parse().unwrap()).with_template("pref-07");
    let mut total = 0;
    for (negatives, seed) in [(4usize, 1u64), (11, 2)] {
        let probe = ProbeScorer {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            seen: Mutex::new(Vec::new()),
        };
        let e = evaluate_scenario(&ctx, &scenario, &probe, &PoolSource::Uniform { negatives }, seed)
            .map_err(|e| e.to_string())?;
        let seen = probe.seen.into_inner().unwrap();
        ensure(seen.len() == e.outcomes.len(), || {
            format!("{} requests for {} outcomes", seen.len(), e.outcomes.len())
        })?;
        let ranks: Vec<usize> = seen
            .iter()
            .map(|(t, s)| 1 + s.iter().filter(|&&x| x > s[*t]).count())
            .collect();
        for (o, &r) in e.outcomes.iter().zip(&ranks) {
            ensure(o.target_rank == TargetRank::Ranked(r), || {
                format!("user {}: pipeline {:?}, oracle {r}", o.user_id, o.target_rank)
            })?;
            ensure(o.pool_size == negatives + 1 && o.pool_size <= 12, || {
                format!("pool {}", o.pool_size)
            })?;
        }
        let (hr, nd) = oracle_metrics(&ranks);
        ensure(e.report.hr == hr && e.report.ndcg == nd, || {
            format!(
                "report {:?}/{:?}, oracle {hr:?}/{nd:?}",
                e.report.hr, e.report.ndcg
            )
        })?;
        total += ranks.len();
    }
    ensure(total == 1000, || format!("{total} instances"))?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "{total} instances, ranks and metrics identical, {:.1?}",
        start.elapsed()
    ))
}

fn c4_random_statistics() -> Result<String, String> {
    let start = Instant::now();
    let data = synthetic_dataset(&SynthConfig {
        users: 10_000,
        items_per_genre: 20,
        events_per_user: 5,
        review_rate: 0.0,
        ..Default::default()
    });
    let registry = builtin_registry().unwrap();
    let options = EvalOptions::default();
    let ctx =
        EvalContext::new(&data.catalog, &data.split, &registry, None, &options).map_err(|e| e.to_string())?;
    let scenario = EvalScenario::new("P1-I0-T3".parse().unwrap()).with_template("pref-07");
    let e = evaluate_scenario(&ctx, &scenario, &RandomScorer::new(11), &PoolSource::default(), 3)
        .map_err(|e| e.to_string())?;
    let (hr1, hr5, nd3) = (e.report.hr_at(1), e.report.hr_at(5), e.report.ndcg_at(3));
    ensure(e.report.n_instances >= 10_000, || {
        format!("{} instances", e.report.n_instances)
    })?;
    ensure((hr1 - 0.1).abs() <= 0.02, || format!("HR@1 {hr1:.4}"))?;
    ensure((hr5 - 0.5).abs() <= 0.03, || format!("HR@5 {hr5:.4}"))?;
    ensure((0.19..=0.23).contains(&nd3), || format!("NDCG@3 {nd3:.4}"))?;
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "n={} HR@1 {hr1:.4} HR@5 {hr5:.4} NDCG@3 {nd3:.4}, {:.1?}",
        e.report.n_instances,
        start.elapsed()
    ))
}

fn c5_grouped() -> Result<String, String> {
    let start = Instant::now();
    let data = dataset(4, 20);
    let registry = builtin_registry().unwrap();
    let template = registry
        .get("pref-07")
        .unwrap()
        .specialize("P1-I0-T3".parse().unwrap())
        .unwrap();
    let user = &data.split.users[0];
    let source = SlotSource {
        catalog: &data.catalog,
        annotator: None,
        user,
        part: SplitPart::Test,
    };
    let assembler = Assembler::for_user(&template, &source, ScoreMode::Sum).map_err(|e| e.to_string())?;
    let history: Vec<&str> = source.history_ids();
    let pool = |seed: u64| {
        sample_large_pool(
            &data.catalog,
            &history,
            &user.test.item_id,
            LARGE_POOL_NEGATIVES,
            seed,
        )
        .unwrap()
    };

    let oracle = OracleScorer::perfect();
    for trial in 0..1_000u64 {
        let o = grouped_rerank(&pool(trial), &data.catalog, &assembler, &oracle, trial, "s", "u")
            .map_err(|e| e.to_string())?;
        ensure(o.target_rank == TargetRank::Ranked(1), || {
            format!("trial {trial}: {:?}", o.target_rank)
        })?;
    }

    let trials = 50_000u64;
    let random = RandomScorer::new(5);
    let (mut survived, mut first) = (0u64, 0u64);
    for trial in 0..trials {
        let o = grouped_rerank(&pool(trial), &data.catalog, &assembler, &random, trial, "s", "u")
            .map_err(|e| e.to_string())?;
        match o.target_rank {
            TargetRank::Eliminated => {}
            TargetRank::Ranked(r) => {
                survived += 1;
                first += u64::from(r == 1);
            }
        }
    }
    let survival = survived as f64 / trials as f64;
    let hr1 = first as f64 / trials as f64;
    ensure((survival - 0.1).abs() <= 0.01, || {
        format!("group survival {survival:.4}")
    })?;
    ensure((hr1 - 0.01).abs() <= 0.003, || format!("HR@1 {hr1:.4}"))?;
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "oracle rank 1 in 1000/1000; random survival {survival:.4}, HR@1 {hr1:.4} over {trials} trials, {:.1?}",
        start.elapsed()
    ))
}

/// Repeatedly drop interactions whose user or item has fewer than `k`
/// interactions until nothing changes.
fn brute_kcore(rows: &[InteractionRecord], k: usize) -> BTreeSet<(String, String)> {
    let mut alive: BTreeSet<(String, String)> = rows
        .iter()
        .map(|r| (r.user_id.clone(), r.item_id.clone()))
        .collect();
    loop {
        let mut users: BTreeMap<&str, usize> = BTreeMap::new();
        let mut items: BTreeMap<&str, usize> = BTreeMap::new();
        for (u, i) in &alive {
            *users.entry(u).or_default() += 1;
            *items.entry(i).or_default() += 1;
        }
        let next: BTreeSet<(String, String)> = alive
            .iter()
            .filter(|(u, i)| users[u.as_str()] >= k && items[i.as_str()] >= k)
            .cloned()
            .collect();
        if next == alive {
            return alive;
        }
        alive = next;
    }
}

fn c6_kcore() -> Result<String, String> {
    let mut nonempty = 0;
    for case in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
        let (n_users, n_items) = (rng.gen_range(6..=20), rng.gen_range(6..=14));
        let density = rng.gen_range(0.3..0.9);
        let mut catalog = Catalog::default();
        for i in 0..n_items {
            let id = format!("i{i}");
            catalog
                .items
                .insert(id.clone(), ItemRecord::new(id, format!("Item {i}"), &[]));
        }
        'fill: for u in 0..n_users {
            for i in 0..n_items {
                if catalog.interactions.len() == 200 {
                    break 'fill;
                }
                if rng.gen_bool(density) {
                    catalog.interactions.push(InteractionRecord {
                        user_id: format!("u{u}"),
                        item_id: format!("i{i}"),
                        timestamp: catalog.interactions.len() as i64,
                        rating: None,
                        review_text: None,
                    });
                }
            }
        }
        let want = brute_kcore(&catalog.interactions, 5);
        let got = match kcore_filter(&catalog, 5) {
            Ok(c) => c,
            Err(_) if want.is_empty() => continue,
            Err(e) => return Err(format!("case {case}: {e}")),
        };
        let pairs: BTreeSet<(String, String)> = got
            .interactions
            .iter()
            .map(|r| (r.user_id.clone(), r.item_id.clone()))
            .collect();
        ensure(pairs == want, || {
            format!("case {case}: {} vs {} interactions", pairs.len(), want.len())
        })?;
        let item_ids: BTreeSet<String> = want.iter().map(|(_, i)| i.clone()).collect();
        let kept: BTreeSet<String> = got.items.keys().cloned().collect();
        ensure(kept == item_ids, || format!("case {case}: item table differs"))?;
        let mut users: BTreeMap<&str, usize> = BTreeMap::new();
        let mut items: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &got.interactions {
            *users.entry(&r.user_id).or_default() += 1;
            *items.entry(&r.item_id).or_default() += 1;
        }
        ensure(users.values().chain(items.values()).all(|&d| d >= 5), || {
            format!("case {case}: degree below 5 survived")
        })?;
        nonempty += usize::from(!want.is_empty());
    }
    ensure(nonempty >= 10, || format!("only {nonempty} non-empty cores"))?;
    Ok(format!(
        "20 catalogs match the fixpoint oracle ({nonempty} non-empty cores)"
    ))
}

fn c7_leave_one_out() -> Result<String, String> {
    let data = synthetic_dataset(&SynthConfig {
        users: 1_000,
        events_per_user: 6,
        ..Default::default()
    });
    let mut by_user: BTreeMap<&str, Vec<&InteractionRecord>> = BTreeMap::new();
    for r in &data.catalog.interactions {
        by_user.entry(&r.user_id).or_default().push(r);
    }
    let mut violations = 0;
    for u in &data.split.users {
        let mut rows = by_user[u.user_id.as_str()].clone();
        rows.sort_by_key(|r| r.timestamp);
        let n = rows.len();
        if u.test.item_id != rows[n - 1].item_id || u.validation.item_id != rows[n - 2].item_id {
            violations += 1;
        }
        if u.train.iter().any(|e| e.timestamp >= u.validation.timestamp) {
            violations += 1;
        }
    }
    ensure(data.split.users.len() == 1_000, || {
        format!("{} users", data.split.users.len())
    })?;
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok("1000 users, 0 violations".into())
}

fn shared_terms(a: &str, b: &str) -> usize {
    let a: BTreeSet<String> = a.split_whitespace().map(str::to_lowercase).collect();
    b.split_whitespace()
        .map(str::to_lowercase)
        .collect::<BTreeSet<_>>()
        .intersection(&a)
        .count()
}

fn c8_hardness() -> Result<String, String> {
    let mut data = dataset(400, 36);
    // Store-style titles: every item names its genre and platform, so items
    // from one shelf share at least two title terms.
    for item in data.catalog.items.values_mut() {
        item.title = format!("{} {} {}", item.title, item.categories[2], item.categories[1]);
    }
    let registry = builtin_registry().unwrap();
    let options = EvalOptions::default();
    let ctx =
        EvalContext::new(&data.catalog, &data.split, &registry, None, &options).map_err(|e| e.to_string())?;
    let index = build_retriever_index(&training_sequences(&data.split), &data.catalog, 5);
    let scenario = EvalScenario::new("P1-I0-T2".parse().unwrap()).with_template("pref-01");
    let hard_pools = PoolSource::Hard {
        index: &index,
        negatives: 9,
    };

    let (mut sharing, mut total) = (0usize, 0usize);
    for u in &data.split.users {
        let history: Vec<&str> = u
            .history(SplitPart::Test)
            .iter()
            .map(|e| e.item_id.as_str())
            .collect();
        let pool = hard_pools
            .build(&data.catalog, &history, &u.test.item_id, 0)
            .map_err(|e| e.to_string())?;
        let target = &data.catalog.items[&u.test.item_id].title;
        for n in &pool.negatives {
            total += 1;
            sharing += usize::from(shared_terms(target, &data.catalog.items[n].title) >= 2);
        }
    }
    let share = sharing as f64 / total as f64;

    let hard =
        evaluate_scenario(&ctx, &scenario, &LexicalScorer, &hard_pools, 9).map_err(|e| e.to_string())?;
    let uniform = evaluate_scenario(&ctx, &scenario, &LexicalScorer, &PoolSource::default(), 9)
        .map_err(|e| e.to_string())?;
    let (h, r) = (hard.report.hr_at(5), uniform.report.hr_at(5));
    ensure(share >= 0.75, || {
        format!("only {:.0}% of hard negatives share 2+ terms", share * 100.0)
    })?;
    ensure(h < r, || format!("HR@5 hard {h:.4} vs uniform {r:.4}"))?;
    Ok(format!(
        "HR@5 hard {h:.4} < uniform {r:.4}; {:.0}% of hard negatives share 2+ title terms with the target",
        share * 100.0
    ))
}

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy")
}

/// The toy config with absolute input paths and a fresh output directory.
fn toy_config(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(toy().join("config.json")).unwrap();
    let mut config: serde_json::Value = serde_json::from_str(&text).unwrap();
    let abs = |v: &mut serde_json::Value| {
        let p = toy().join(v.as_str().unwrap());
        *v = serde_json::Value::String(p.to_str().unwrap().to_string());
    };
    for key in ["interactions", "items", "queries"] {
        abs(&mut config["dataset"][key]);
    }
    abs(&mut config["teacher"]["path"]);
    abs(&mut config["scorer"]["path"]);
    config["output_dir"] = serde_json::Value::String(dir.join("out").to_str().unwrap().to_string());
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn cli(config: &Path, args: &[&str]) -> Result<recprompt::cli::Outcome, String> {
    let mut argv = vec!["recprompt", "-c", config.to_str().unwrap()];
    argv.extend_from_slice(args);
    recprompt::cli::run(argv).map_err(|e| format!("{}: {e}", args.join(" ")))
}

fn c9_determinism_and_cache() -> Result<String, String> {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut corpora = Vec::new();
    for dir in [a.path(), b.path()] {
        let config = toy_config(dir);
        let out = cli(&config, &["corpus"])?;
        corpora.push(std::fs::read(&out.artifacts[0]).unwrap());
    }
    ensure(corpora[0] == corpora[1], || "corpora differ".into())?;
    ensure(!corpora[0].is_empty(), || "empty corpus".into())?;

    let config = toy_config(a.path());
    let report = |dir: &Path| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.join("out/annotate-report.json")).unwrap()).unwrap()
    };
    cli(&config, &["annotate"])?;
    cli(&config, &["annotate"])?;
    let second = report(a.path());
    ensure(
        second["backend_calls"] == 0 && second["stats"]["upstream_calls"] == 0,
        || format!("second annotate run: {second}"),
    )?;
    Ok(format!(
        "{} corpus bytes identical across runs; warm annotate made 0 backend calls for {} requests",
        corpora[0].len(),
        second["requests"]
    ))
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn c10_wire_protocol() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config(dir.path());
    let fixture = toy().join("scorer-fixture.jsonl");
    let mut child = Command::new(env!("CARGO_BIN_EXE_recprompt"))
        .args([
            "serve-fixture",
            "--port",
            "0",
            "--fixture",
            fixture.to_str().unwrap(),
        ])
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let stdout = child.stdout.take().unwrap();
    let server = Server(child);
    let mut line = String::new();
    BufReader::new(stdout)
        .read_line(&mut line)
        .map_err(|e| e.to_string())?;
    let url = line
        .trim()
        .strip_prefix("listening on ")
        .ok_or_else(|| format!("unexpected server output {line:?}"))?
        .to_string();

    let local = dir.path().join("local.json");
    let remote = dir.path().join("remote.json");
    cli(&config, &["eval", "--out", local.to_str().unwrap()])?;
    let flag = format!("remote:{url}");
    cli(
        &config,
        &["eval", "--scorer", &flag, "--out", remote.to_str().unwrap()],
    )?;
    drop(server);

    let load = |p: &Path| -> serde_json::Value {
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("scorer");
        v
    };
    let (l, r) = (load(&local), load(&remote));
    ensure(l == r, || format!("manifests differ:\n{l}\n{r}"))?;
    Ok(format!(
        "manifests equal apart from the scorer name (ndcg@5 {})",
        l["metrics"]["ndcg@5"]
    ))
}

fn main() {
    let checks: [(u8, &str, Check); 10] = [
        (1, "template registry", c1_registry),
        (2, "deterministic annotations", c2_annotations),
        (3, "metric oracle equivalence", c3_metric_oracle),
        (4, "random-scorer statistics", c4_random_statistics),
        (5, "grouped reranking", c5_grouped),
        (6, "k-core fixpoint", c6_kcore),
        (7, "leave-one-out fidelity", c7_leave_one_out),
        (8, "hard-negative hardness", c8_hardness),
        (9, "determinism and caching", c9_determinism_and_cache),
        (10, "wire-protocol conformance", c10_wire_protocol),
    ];
    let only: Option<u8> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (n, name, check) in checks {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why} [{secs:.2}s]");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
