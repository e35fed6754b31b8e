//! Writes the toy dataset under `data/toy/` (or the directory given as the
//! first argument): raw interactions and items, search queries, a run config,
//! a teacher fixture and a scorer fixture.
//!
//! The fixtures are recorded by running the pipeline once with the offline
//! teacher and the lexical scorer, so the shipped config replays them
//! without any network access.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use recprompt::synth::{synthetic_dataset, write_raw, SynthConfig};

fn config(teacher: serde_json::Value, output_dir: &str) -> serde_json::Value {
    let aspects = |p: &str, i: &str, t: &str| serde_json::json!({"p": p, "i": i, "t": t});
    serde_json::json!({
        "dataset": {
            "name": "toy-games",
            "interactions": "interactions.jsonl",
            "items": "items.jsonl",
            "queries": "queries.jsonl"
        },
        "seed": 42,
        "output_dir": output_dir,
        "teacher": teacher,
        "corpus": {
            "scenarios": [
                {"aspects": aspects("P1", "I0", "T3"), "quota": 40},
                {"aspects": aspects("P2", "I0", "T2"), "quota": 30},
                {"aspects": aspects("P0", "I1", "T2"), "quota": 30},
                {"aspects": aspects("P0", "I2", "T3"), "quota": 30},
                {"aspects": aspects("P1", "I1", "T3"), "quota": 30},
                {"aspects": aspects("P1", "I0", "T0"), "quota": 20},
                {"aspects": aspects("P1", "I0", "T2"), "strategy": "cot", "quota": 10},
                {"aspects": aspects("P0", "I1", "T2"), "strategy": "task_reversal", "quota": 10}
            ]
        },
        "scorer": {"kind": "fixture", "path": "scorer-fixture.jsonl"},
        "eval": {
            "scenarios": [
                {"aspects": aspects("P1", "I0", "T3"), "template_id": "pref-07"}
            ]
        },
        "audit": {"n_per_kind": 20},
        "heldout": {
            "scenario": {"aspects": aspects("P1", "I0", "T3"), "template_id": "pref-07"},
            "subsets": [
                {"id": "pref", "scorer": {"kind": "mock-random", "seed": 1}},
                {"id": "pref+intent", "scorer": {"kind": "lexical"}},
                {"id": "all", "scorer": {"kind": "fixture", "path": "scorer-fixture.jsonl"}}
            ]
        }
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()
}

fn run(args: &[&str]) {
    if let Err(e) = recprompt::cli::run(std::iter::once("recprompt").chain(args.iter().copied())) {
        panic!("recprompt {}: {e}", args.join(" "));
    }
}

fn main() -> std::io::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy"));
    std::fs::create_dir_all(&dir)?;

    let data = synthetic_dataset(&SynthConfig {
        seed: 42,
        users: 150,
        items_per_genre: 15,
        events_per_user: 10,
        ..Default::default()
    });
    let mut inter = BufWriter::new(File::create(dir.join("interactions.jsonl"))?);
    let mut items = BufWriter::new(File::create(dir.join("items.jsonl"))?);
    write_raw(&data.catalog, &mut inter, &mut items)?;
    inter.flush()?;
    items.flush()?;

    let mut queries = BufWriter::new(File::create(dir.join("queries.jsonl"))?);
    for item in data.catalog.items.values() {
        let query = format!(
            "{} game for {}",
            item.categories[2].to_lowercase(),
            item.categories[1]
        );
        serde_json::to_writer(
            &mut queries,
            &serde_json::json!({"item": item.item_id, "query": query}),
        )?;
        queries.write_all(b"\n")?;
    }
    queries.flush()?;

    let scratch = tempfile::tempdir()?;
    let bootstrap = dir.join("bootstrap.json");
    let out = scratch.path().to_str().expect("utf-8 temp path");
    let mut boot = config(serde_json::json!({"kind": "deterministic"}), out);
    boot["scorer"] = serde_json::json!({"kind": "lexical"});
    write_json(&bootstrap, &boot)?;
    let boot_path = bootstrap.to_str().expect("utf-8 path");
    run(&["-c", boot_path, "annotate"]);
    let record = dir.join("scorer-fixture.jsonl");
    run(&[
        "-c",
        boot_path,
        "eval",
        "--record",
        record.to_str().expect("utf-8 path"),
    ]);
    std::fs::remove_file(&bootstrap)?;
    std::fs::copy(
        scratch.path().join("annotations.jsonl"),
        dir.join("teacher-fixture.jsonl"),
    )?;

    write_json(
        &dir.join("config.json"),
        &config(
            serde_json::json!({"kind": "fixture", "path": "teacher-fixture.jsonl"}),
            "out",
        ),
    )?;
    println!("toy dataset written to {}", dir.display());
    Ok(())
}
