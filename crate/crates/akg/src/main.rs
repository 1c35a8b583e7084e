use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use akg::config::{BackendKind, Config, ConfigLayer, DisambiguationLayer, ServiceLayer};
use akg::manifest::RunManifest;
use akg::pipeline::{self, StageError};
use akg::service::{serve_blocking, AskResponse, ServiceState};
use akg::views::{lookup_entity, paper_detail, EntityView};
use akg_core::evaluation::{load_qa_dataset, run_eval, DatasetFormat, Scorer};
use akg_core::extraction::{read_dump, write_records};
use akg_core::graph::{EntityId, GraphStore};
use akg_core::llm::Gateway;
use akg_core::qa::QaEngine;
use akg_core::schema::{canonical_path, Direction, EntityKind, RelationKind};

#[derive(Parser)]
#[command(name = "akg", version, about = "Build, curate and query an academic knowledge graph")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML configuration file (overridden by AKG_* variables and flags).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Completion backend: mock (fixture replay) or live.
    #[arg(long, global = true)]
    backend: Option<BackendKind>,
    /// Fixture directory for the mock backend.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Embedding provider: mock or live.
    #[arg(long, global = true)]
    embedder: Option<BackendKind>,
    #[arg(long, global = true)]
    max_reasks: Option<u32>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Manifest file to append to (default: next to the main output).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct ClusterArgs {
    /// Clustering seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cosine distance above which surfaces stay apart.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Kinds to disambiguate (repeatable); default Task, Dataset, Metric.
    #[arg(long = "kind")]
    kinds: Vec<EntityKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus, resolve citations and write the normalized corpus.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract candidate entities and triples into an NDJSON dump.
    Extract {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Judge and repair the element candidates of a dump.
    Clean {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON report of labels and repairs.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Cluster Task/Dataset/Metric surfaces and rewrite them to canonical forms.
    Disambiguate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory for the canonical maps (one TSV per kind).
        #[arg(long)]
        maps: Option<PathBuf>,
        #[command(flatten)]
        cluster: ClusterArgs,
    },
    /// Add inter-paper relations from a corpus's citations to a snapshot.
    LinkCitations {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline from corpus to snapshot.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Start from an already cleaned candidate dump instead of extracting.
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// JSON build report.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        cluster: ClusterArgs,
    },
    /// Entity and triple counts of a snapshot.
    Stats {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Lookups and adjacency walks over a snapshot.
    Query {
        #[arg(long)]
        graph: PathBuf,
        #[command(subcommand)]
        query: QueryCommand,
    },
    /// Answer a question over a snapshot.
    Ask {
        #[arg(long)]
        graph: PathBuf,
        question: String,
        /// Write the full answer trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Print the answer as the service's `/ask` JSON body.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        context_cap: Option<usize>,
    },
    /// Score answers to a QA dataset.
    Eval {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// jsonl or tsv (default: from the extension).
        #[arg(long)]
        format: Option<DatasetFormat>,
        /// exact (token equality) or embedding (token-embedding cosine).
        #[arg(long, default_value = "exact")]
        scorer: String,
        /// NDJSON record stream of the results.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Serve read-only queries over a snapshot.
    Serve {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        max_question_chars: Option<usize>,
        #[arg(long)]
        ask_per_minute: Option<usize>,
    },
}

#[derive(Subcommand)]
enum QueryCommand {
    /// Entities by kind and surface (exact, then normalized).
    Entity {
        #[arg(long)]
        kind: EntityKind,
        #[arg(long)]
        surface: String,
    },
    /// Neighbours of an entity id.
    Neighbors {
        #[arg(long)]
        id: u64,
        #[arg(long)]
        relation: Option<RelationKind>,
        #[arg(long, default_value = "both")]
        direction: Direction,
    },
    /// Elements of a kind reached from an entity through its paper's title.
    Path {
        #[arg(long)]
        start: u64,
        #[arg(long)]
        to: EntityKind,
    },
    /// All elements and facts of one paper.
    Paper {
        #[arg(long)]
        id: String,
    },
}

/// Failure with its exit status: usage problems exit 2, stage failures 1.
enum Failure {
    Usage(anyhow::Error),
    Stage(anyhow::Error),
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        Failure::Stage(anyhow!(e))
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Stage(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("usage error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn flags(global: &GlobalArgs, cluster: Option<&ClusterArgs>) -> ConfigLayer {
    let cluster = cluster.cloned().unwrap_or_default();
    ConfigLayer {
        backend: global.backend,
        fixtures: global.fixtures.clone(),
        embedder: global.embedder,
        max_reasks: global.max_reasks,
        parallelism: global.parallelism,
        context_cap: None,
        disambiguation: DisambiguationLayer {
            kinds: (!cluster.kinds.is_empty()).then_some(cluster.kinds),
            threshold: cluster.threshold,
            k_max: cluster.k_max,
            seed: cluster.seed,
            sample_cap: None,
        },
        service: ServiceLayer::default(),
    }
}

fn read_graph(path: &Path) -> Result<GraphStore, StageError> {
    GraphStore::load(path).map_err(|e| StageError::new("load", e))
}

fn write_graph(graph: &GraphStore, path: &Path) -> Result<(), StageError> {
    graph.save(path).map_err(|e| StageError::new("save", e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

/// Write to stdout; a closed pipe (`akg ... | head`) is not an error.
fn emit(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"))
}

struct Run {
    manifest: RunManifest,
    manifest_path: Option<PathBuf>,
}

impl Run {
    fn new(command: &str, config: &Config, explicit: Option<&Path>) -> Run {
        Run {
            manifest: RunManifest::new(command, std::env::args().skip(1).collect(), config),
            manifest_path: explicit.map(Path::to_path_buf),
        }
    }

    fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.manifest
            .input(path)
            .with_context(|| format!("cannot hash {}", path.display()))
    }

    fn output(&mut self, path: &Path) -> anyhow::Result<()> {
        if self.manifest_path.is_none() {
            let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            self.manifest_path = Some(dir.join("akg-manifest.jsonl"));
        }
        self.manifest
            .output(path)
            .with_context(|| format!("cannot hash {}", path.display()))
    }

    fn finish(mut self, gateway: Option<&Gateway>) -> anyhow::Result<()> {
        if let Some(g) = gateway {
            self.manifest.ledger_summary = g.ledger_summary();
        }
        if let Some(path) = &self.manifest_path {
            self.manifest
                .append_to(path)
                .with_context(|| format!("cannot append manifest {}", path.display()))?;
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let global = &cli.global;
    let cluster = match &cli.command {
        Command::Disambiguate { cluster, .. } | Command::Build { cluster, .. } => Some(cluster),
        _ => None,
    };
    let mut layer = flags(global, cluster);
    match &cli.command {
        Command::Ask { context_cap, .. } => layer.context_cap = *context_cap,
        Command::Serve {
            bind,
            max_question_chars,
            ask_per_minute,
            ..
        } => {
            layer.service = ServiceLayer {
                bind: bind.clone(),
                max_question_chars: *max_question_chars,
                ask_per_minute: *ask_per_minute,
            }
        }
        _ => {}
    }
    let config = Config::resolve(global.config.as_deref(), |k| std::env::var(k).ok(), layer)
        .map_err(|e| Failure::Usage(anyhow!(e)))?;
    let manifest = global.manifest.as_deref();

    match cli.command {
        Command::Ingest { corpus, out } => {
            let mut run = Run::new("ingest", &config, manifest);
            run.input(&corpus)?;
            let loaded = pipeline::load_corpus(&corpus)?;
            fs::write(&out, loaded.corpus.to_text()).with_context(|| format!("cannot write {}", out.display()))?;
            run.output(&out)?;
            print_json(&loaded.report)?;
            eprintln!("{} record(s), {} citation(s) newly resolved", loaded.corpus.records.len(), loaded.newly_resolved);
            run.finish(None)?;
        }
        Command::Extract { corpus, out } => {
            let mut run = Run::new("extract", &config, manifest);
            run.input(&corpus)?;
            let loaded = pipeline::load_corpus(&corpus)?;
            let gateway = pipeline::make_gateway(&config)?;
            let (records, summary) = pipeline::extract(&loaded.corpus, &gateway, config.max_reasks)?;
            let file = fs::File::create(&out).with_context(|| format!("cannot create {}", out.display()))?;
            let mut writer = BufWriter::new(file);
            write_records(&mut writer, &records).and_then(|_| writer.flush()).context("cannot write dump")?;
            run.output(&out)?;
            print_json(&summary)?;
            run.finish(Some(&gateway))?;
        }
        Command::Clean { candidates, out, report } => {
            let mut run = Run::new("clean", &config, manifest);
            run.input(&candidates)?;
            let file = fs::File::open(&candidates).with_context(|| format!("cannot open {}", candidates.display()))?;
            let records = read_dump(BufReader::new(file)).map_err(|e| StageError::new("clean", e))?;
            let gateway = pipeline::make_gateway(&config)?;
            let (cleaned, clean_report) = pipeline::clean(&records, &gateway, config.max_reasks)?;
            let file = fs::File::create(&out).with_context(|| format!("cannot create {}", out.display()))?;
            let mut writer = BufWriter::new(file);
            write_records(&mut writer, &cleaned).and_then(|_| writer.flush()).context("cannot write dump")?;
            run.output(&out)?;
            if let Some(path) = &report {
                write_json(path, &clean_report)?;
                run.output(path)?;
            }
            eprintln!(
                "judged {}, deleted {}, repaired {}, dropped {}",
                clean_report.judged, clean_report.deleted, clean_report.repaired, clean_report.dropped
            );
            run.finish(Some(&gateway))?;
        }
        Command::Disambiguate { graph, out, maps, .. } => {
            let mut run = Run::new("disambiguate", &config, manifest);
            run.input(&graph)?;
            let mut store = read_graph(&graph)?;
            let embedder = pipeline::make_embedder(&config)?;
            let outcomes = pipeline::disambiguate_graph(&mut store, embedder.as_ref(), &config.disambiguation)?;
            write_graph(&store, &out)?;
            run.output(&out)?;
            if let Some(dir) = &maps {
                fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
                for o in &outcomes {
                    let path = dir.join(format!("{}.tsv", o.map.kind()));
                    o.map.save(&path).map_err(|e| StageError::new("disambiguate", e))?;
                    run.output(&path)?;
                }
            }
            print_json(&outcomes)?;
            run.finish(None)?;
        }
        Command::LinkCitations { corpus, graph, out } => {
            let mut run = Run::new("link-citations", &config, manifest);
            run.input(&corpus)?;
            run.input(&graph)?;
            let loaded = pipeline::load_corpus(&corpus)?;
            let mut store = read_graph(&graph)?;
            let report = pipeline::link_citations(&mut store, &loaded.corpus)?;
            write_graph(&store, &out)?;
            run.output(&out)?;
            print_json(&report)?;
            run.finish(None)?;
        }
        Command::Build {
            corpus,
            out,
            candidates,
            report,
            ..
        } => {
            let mut run = Run::new("build", &config, manifest);
            run.input(&corpus)?;
            let loaded = pipeline::load_corpus(&corpus)?;
            let embedder = pipeline::make_embedder(&config)?;
            let (store, gateway, summary) = match &candidates {
                Some(path) => {
                    run.input(path)?;
                    let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
                    let records = read_dump(BufReader::new(file)).map_err(|e| StageError::new("build", e))?;
                    let (mut store, import) = pipeline::import(&records);
                    let outcomes = pipeline::disambiguate_graph(&mut store, embedder.as_ref(), &config.disambiguation)?;
                    store.set_metadata(akg_core::graph::BuildMetadata {
                        corpus_hash: loaded.sha256.clone(),
                        pipeline_version: pipeline::pipeline_version(),
                    });
                    let summary = serde_json::json!({"import": import, "disambiguation": outcomes});
                    (store, None, summary)
                }
                None => {
                    let gateway = pipeline::make_gateway(&config)?;
                    let (store, build_report) = pipeline::build(&loaded, &gateway, embedder.as_ref(), &config)?;
                    run.manifest.timings(&build_report.timings);
                    let summary = serde_json::to_value(&build_report).context("cannot encode report")?;
                    (store, Some(gateway), summary)
                }
            };
            write_graph(&store, &out)?;
            run.output(&out)?;
            if let Some(path) = &report {
                write_json(path, &summary)?;
                run.output(path)?;
            }
            emit(&store.stats().render())?;
            run.finish(gateway.as_ref())?;
        }
        Command::Stats { graph, json } => {
            let store = read_graph(&graph)?;
            if json {
                print_json(&store.stats())?;
            } else {
                emit(&store.stats().render())?;
            }
        }
        Command::Query { graph, query } => {
            let store = read_graph(&graph)?;
            run_query(&store, query)?;
        }
        Command::Ask {
            graph,
            question,
            trace,
            json,
            ..
        } => {
            let mut run = Run::new("ask", &config, manifest);
            run.input(&graph)?;
            let store = read_graph(&graph)?;
            let gateway = pipeline::make_gateway(&config)?;
            let mut engine = QaEngine::new(&gateway, &store);
            engine.context_cap = config.context_cap;
            engine.max_reasks = config.max_reasks;
            let answer = engine
                .ask(&question)
                .map_err(|e| anyhow!("stage {}: {e}", e.stage()))?;
            if json {
                print_json(&AskResponse::from(answer.clone()))?;
            } else {
                emit(&format!("{}\n", answer.global_answer))?;
            }
            if let Some(path) = &trace {
                write_json(path, &answer)?;
                run.output(path)?;
                run.finish(Some(&gateway))?;
            }
        }
        Command::Eval {
            graph,
            dataset,
            format,
            scorer,
            report,
        } => {
            let mut run = Run::new("eval", &config, manifest);
            run.input(&graph)?;
            run.input(&dataset)?;
            let store = read_graph(&graph)?;
            let format = format.unwrap_or_else(|| DatasetFormat::from_path(&dataset));
            let items = load_qa_dataset(&dataset, format).map_err(|e| StageError::new("eval", e))?;
            let gateway = pipeline::make_gateway(&config)?;
            let mut engine = QaEngine::new(&gateway, &store);
            engine.context_cap = config.context_cap;
            engine.max_reasks = config.max_reasks;
            let embedder;
            let scorer = match scorer.as_str() {
                "exact" => Scorer::ExactToken,
                "embedding" => {
                    embedder = pipeline::make_embedder(&config)?;
                    Scorer::EmbeddingCosine(embedder.as_ref())
                }
                other => return Err(Failure::Usage(anyhow!("unknown scorer `{other}` (exact or embedding)"))),
            };
            let result = run_eval(
                |item| engine.ask(&item.question).map(|t| t.global_answer).map_err(|e| e.to_string()),
                &items,
                &scorer,
            )
            .map_err(|e| StageError::new("eval", e))?;
            emit(&result.render_table())?;
            if let Some(path) = &report {
                fs::write(path, result.to_ndjson()).with_context(|| format!("cannot write {}", path.display()))?;
                run.output(path)?;
                run.finish(Some(&gateway))?;
            }
        }
        Command::Serve { graph, .. } => {
            let gateway = pipeline::make_gateway(&config)?;
            let state = ServiceState::load(&graph, gateway, &config)?;
            serve_blocking(state, &config.service.bind)?;
        }
    }
    Ok(())
}

fn run_query(store: &GraphStore, query: QueryCommand) -> Result<(), Failure> {
    let missing = |id: u64| StageError::new("query", format!("no entity with id {id}"));
    match query {
        QueryCommand::Entity { kind, surface } => {
            let found = lookup_entity(store, kind, &surface);
            if found.is_empty() {
                return Err(StageError::new("query", format!("no {kind} entity `{surface}`")).into());
            }
            print_json(&found)?;
        }
        QueryCommand::Neighbors { id, relation, direction } => {
            let ids = store
                .neighbors(EntityId(id), relation, direction)
                .map_err(|_| missing(id))?;
            let views: Vec<EntityView> = ids.iter().filter_map(|n| store.entity(*n)).map(EntityView::from).collect();
            print_json(&views)?;
        }
        QueryCommand::Path { start, to } => {
            let record = store.entity(EntityId(start)).ok_or_else(|| missing(start))?;
            let path = canonical_path(record.kind, to).map_err(|e| StageError::new("query", e))?;
            let ids = store
                .walk_path(EntityId(start), &path)
                .map_err(|e| StageError::new("query", e))?;
            let views: Vec<EntityView> = ids.iter().filter_map(|n| store.entity(*n)).map(EntityView::from).collect();
            eprintln!("path: {path}");
            print_json(&views)?;
        }
        QueryCommand::Paper { id } => {
            let detail = paper_detail(store, &id).ok_or_else(|| StageError::new("query", format!("no paper `{id}`")))?;
            print_json(&detail)?;
        }
    }
    Ok(())
}
