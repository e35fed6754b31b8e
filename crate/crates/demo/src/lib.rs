//! Browser demo: generate instructions, evaluate a scenario, and compute
//! ranking metrics, all on a synthetic catalog built in the page.
//!
//! Every entry point takes and returns plain strings so the page can stay
//! free of bindings glue beyond what wasm-bindgen emits.

use recprompt::annotator::{
    generate_corpus, AnnotationCache, Annotator, AnnotatorConfig, DeterministicTeacher, GenerationConfig,
    PromptSet, ScenarioSpec,
};
use recprompt::catalog::SplitPart;
use recprompt::eval::{
    evaluate_scenario, hit, ndcg, EvalContext, EvalOptions, EvalScenario, PoolSource, TargetRank,
};
use recprompt::matcher::{build_retriever_index, training_sequences, DEFAULT_NEGATIVES, DEFAULT_WINDOW};
use recprompt::scorer::{LexicalScorer, OracleScorer, RandomScorer, Scorer};
use recprompt::synth::{synthetic_dataset, SynthConfig, SynthData};
use recprompt::templates::builtin_registry;
use recprompt::AspectTags;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_USERS: usize = 400;

fn dataset(seed: u64, users: usize) -> Result<SynthData, String> {
    if users == 0 || users > MAX_USERS {
        return Err(format!("users must be between 1 and {MAX_USERS}"));
    }
    let mut data = synthetic_dataset(&SynthConfig {
        seed,
        users,
        items_per_genre: 20,
        review_rate: 1.0,
        ..SynthConfig::default()
    });
    // Store-style titles give a lexical scorer something to confuse hard
    // negatives with.
    for item in data.catalog.items.values_mut() {
        item.title = format!("{} {} {}", item.title, item.categories[2], item.categories[1]);
    }
    Ok(data)
}

fn aspects(scenario: &str) -> Result<AspectTags, String> {
    scenario.parse().map_err(|e| format!("{e}"))
}

fn annotator_config() -> AnnotatorConfig {
    // Single-threaded: the browser has no threads to spare.
    AnnotatorConfig {
        concurrency: 1,
        ..AnnotatorConfig::default()
    }
}

#[derive(Debug, Serialize)]
pub struct DemoInstance {
    pub user: String,
    pub template_id: String,
    pub instruction: String,
    pub output: String,
}

/// Up to `count` instruction instances for `scenario` (e.g. `P1-I0-T3`).
pub fn generate(seed: u64, users: usize, scenario: &str, count: usize) -> Result<Vec<DemoInstance>, String> {
    let data = dataset(seed, users)?;
    let registry = builtin_registry().map_err(|e| e.to_string())?;
    let cache = AnnotationCache::in_memory();
    let prompts = PromptSet::builtin();
    let annotator = Annotator::new(&DeterministicTeacher, &cache, &prompts, annotator_config());
    let config = GenerationConfig {
        seed,
        scenarios: vec![ScenarioSpec {
            aspects: aspects(scenario)?,
            strategy: None,
            quota: count,
            id: None,
        }],
        part: SplitPart::Train,
        purpose: Default::default(),
        negatives: DEFAULT_NEGATIVES,
    };
    let corpus = generate_corpus(&config, &data.catalog, &data.split, &registry, &annotator)
        .map_err(|e| e.to_string())?;
    Ok(corpus
        .instances
        .into_iter()
        .map(|i| DemoInstance {
            user: i.user_id,
            template_id: i.rendered.template_id,
            instruction: i.rendered.instruction_text,
            output: i.rendered.target_output,
        })
        .collect())
}

#[derive(Debug, Serialize)]
pub struct DemoEvaluation {
    pub scenario: String,
    pub template_id: String,
    pub scorer: String,
    pub n: usize,
    pub skipped: usize,
    pub valid: bool,
    pub metrics: std::collections::BTreeMap<String, f64>,
}

/// Evaluate `scenario` on the test part with `scorer` (`lexical`,
/// `oracle`, `inverse` or `random`) over `pool` (`uniform`, `hard`,
/// `large`).
pub fn evaluate(
    seed: u64,
    users: usize,
    scenario: &str,
    scorer: &str,
    pool: &str,
) -> Result<DemoEvaluation, String> {
    let data = dataset(seed, users)?;
    let registry = builtin_registry().map_err(|e| e.to_string())?;
    let cache = AnnotationCache::in_memory();
    let prompts = PromptSet::builtin();
    let annotator = Annotator::new(&DeterministicTeacher, &cache, &prompts, annotator_config());
    let options = EvalOptions::default();
    let ctx = EvalContext::new(&data.catalog, &data.split, &registry, Some(&annotator), &options)
        .map_err(|e| e.to_string())?;
    let scorer: Box<dyn Scorer> = match scorer {
        "lexical" => Box::new(LexicalScorer),
        "oracle" => Box::new(OracleScorer::perfect()),
        "inverse" => Box::new(OracleScorer::inverse()),
        "random" => Box::new(RandomScorer::new(seed)),
        other => return Err(format!("unknown scorer {other:?}")),
    };
    let index;
    let pool = match pool {
        "uniform" => PoolSource::default(),
        "hard" => {
            index = build_retriever_index(&training_sequences(&data.split), &data.catalog, DEFAULT_WINDOW);
            PoolSource::Hard {
                index: &index,
                negatives: DEFAULT_NEGATIVES,
            }
        }
        "large" => PoolSource::Large,
        other => return Err(format!("unknown pool {other:?}")),
    };
    let scenario = EvalScenario::new(aspects(scenario)?);
    let eval = evaluate_scenario(&ctx, &scenario, scorer.as_ref(), &pool, seed).map_err(|e| e.to_string())?;
    let m = eval.manifest;
    Ok(DemoEvaluation {
        scenario: m.scenario,
        template_id: m.template_id,
        scorer: m.scorer,
        n: m.n,
        skipped: m.skipped,
        valid: m.valid,
        metrics: m.metrics,
    })
}

#[derive(Debug, Serialize, PartialEq)]
pub struct RankMetrics {
    pub n: usize,
    pub hr: f64,
    pub ndcg: f64,
}

/// Mean HR@k and NDCG@k for 1-based target ranks separated by commas or
/// whitespace; `x` marks an eliminated target.
pub fn rank_metrics(ranks: &str, k: usize) -> Result<RankMetrics, String> {
    if k == 0 {
        return Err("k must be positive".into());
    }
    let ranks = ranks
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "x" | "X" => Ok(TargetRank::Eliminated),
            _ => match s.parse::<usize>() {
                Ok(r) if r >= 1 => Ok(TargetRank::Ranked(r)),
                _ => Err(format!("bad rank {s:?}")),
            },
        })
        .collect::<Result<Vec<_>, _>>()?;
    if ranks.is_empty() {
        return Err("no ranks given".into());
    }
    let n = ranks.len() as f64;
    Ok(RankMetrics {
        n: ranks.len(),
        hr: ranks.iter().map(|&r| hit(r, k)).sum::<f64>() / n,
        ndcg: ranks.iter().map(|&r| ndcg(r, k)).sum::<f64>() / n,
    })
}

fn json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = generateInstructions)]
pub fn generate_instructions(seed: u32, users: u32, scenario: &str, count: u32) -> Result<String, JsError> {
    json(generate(seed as u64, users as usize, scenario, count as usize))
}

#[wasm_bindgen(js_name = evaluateScenario)]
pub fn evaluate_scenario_js(
    seed: u32,
    users: u32,
    scenario: &str,
    scorer: &str,
    pool: &str,
) -> Result<String, JsError> {
    json(evaluate(seed as u64, users as usize, scenario, scorer, pool))
}

#[wasm_bindgen(js_name = rankMetrics)]
pub fn rank_metrics_js(ranks: &str, k: u32) -> Result<String, JsError> {
    json(rank_metrics(ranks, k as usize))
}
