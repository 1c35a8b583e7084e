//! Regenerate the mock fixtures from `fixtures/script.toml`.
//!
//! Runs the full build and the fixture questions against a scripted
//! backend that answers from the script, records the reply for every
//! prompt digest, then writes `fixtures/mock/<digest>.txt` and
//! `fixtures/golden.snap`. Run after changing a prompt template, the
//! corpus or the script:
//!
//! ```text
//! cargo run -p akg --example scaffold_fixtures
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use akg::config::Config;
use akg::pipeline::{build, load_corpus, make_embedder};
use akg_core::evaluation::{load_qa_dataset, DatasetFormat};
use akg_core::llm::{FixtureBackend, Gateway, ScriptedBackend};
use akg_core::qa::QaEngine;

#[derive(Debug, Deserialize)]
struct Script {
    reply: Vec<Reply>,
}

#[derive(Debug, Deserialize)]
struct Reply {
    template: String,
    #[serde(rename = "match")]
    needle: String,
    text: String,
}

#[derive(Default)]
struct Recorder {
    answered: BTreeMap<String, String>,
    unmatched: Vec<(String, String)>,
}

fn main() -> Result<()> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let script: Script = toml::from_str(&std::fs::read_to_string(root.join("script.toml"))?)
        .context("script.toml does not parse")?;
    let replies = Arc::new(script.reply);
    let recorder = Arc::new(Mutex::new(Recorder::default()));

    let backend = {
        let replies = replies.clone();
        let recorder = recorder.clone();
        ScriptedBackend::responder(move |call| {
            let found = replies
                .iter()
                .find(|r| r.template == call.template_id && call.prompt.contains(&r.needle));
            let mut rec = recorder.lock().unwrap();
            match found {
                Some(r) => {
                    let text = r.text.trim().to_string();
                    rec.answered.insert(call.digest.to_string(), text.clone());
                    text
                }
                None => {
                    rec.unmatched.push((call.template_id.to_string(), call.prompt.to_string()));
                    String::new()
                }
            }
        })
    };
    let gateway = Gateway::new(Arc::new(backend));
    let config = Config::default();
    let loaded = load_corpus(&root.join("corpus.ndjson"))?;
    let embedder = make_embedder(&config)?;
    let built = build(&loaded, &gateway, embedder.as_ref(), &config);

    let mut answers = Vec::new();
    if let Ok((graph, _)) = &built {
        let engine = QaEngine::new(&gateway, graph);
        for item in load_qa_dataset(&root.join("qa.jsonl"), DatasetFormat::Jsonl)? {
            match engine.ask(&item.question) {
                Ok(trace) => answers.push(format!(
                    "{}: {:?}, {} completion(s): {}",
                    item.item_id,
                    trace.mode,
                    trace.completions(),
                    trace.global_answer
                )),
                Err(e) => answers.push(format!("{}: error {e}", item.item_id)),
            }
        }
    }

    let rec = recorder.lock().unwrap();
    if !rec.unmatched.is_empty() {
        for (template, prompt) in &rec.unmatched {
            eprintln!("--- no reply for template `{template}`:\n{prompt}\n");
        }
        bail!("{} call(s) had no scripted reply", rec.unmatched.len());
    }
    let (graph, report) = built?;

    let mock = root.join("mock");
    write_fixtures(&mock, &rec.answered)?;
    graph.save(&root.join("golden.snap"))?;

    println!("{} fixture(s) written to {}", rec.answered.len(), mock.display());
    println!("{}", serde_json::to_string_pretty(&graph.stats())?);
    println!("{}", serde_json::to_string_pretty(&report.clean)?);
    println!("{}", serde_json::to_string_pretty(&report.disambiguation)?);
    for line in answers {
        println!("{line}");
    }
    Ok(())
}

fn write_fixtures(dir: &Path, answered: &BTreeMap<String, String>) -> Result<()> {
    if dir.is_dir() {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "txt") {
                std::fs::remove_file(path)?;
            }
        }
    }
    std::fs::create_dir_all(dir)?;
    for (digest, text) in answered {
        std::fs::write(FixtureBackend::fixture_path(dir, digest), format!("{text}\n"))?;
    }
    Ok(())
}
