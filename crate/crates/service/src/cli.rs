//! Command-line interface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use demo2plan::affordance::{ground, GroundingReport};
use demo2plan::compiler::{compile, validate_document, CompileOptions, Provenance};
use demo2plan::eval::{format_table, run_ablation, AblationMode, Corpus, MetricOptions, Normalizer, TransportSource};
use demo2plan::gateway::{
    list_frames, load_frame, sample_frames, FixtureStore, LiveTransport, PromptSet, RecordingTransport, ScriptedTransport,
    SessionState, Transport, TransportMode,
};
use demo2plan::perception::parse_stream;
use demo2plan::planner::{InstructionText, PlannerOutput, SymbolicPlanner};
use demo2plan::task_model::SceneDescription;

use crate::config::Config;
use crate::pipeline::{JobInputs, Pipeline};
use crate::store::canonical_json;
use crate::JobState;

#[derive(Debug, Parser)]
#[command(name = "demo2plan", version, about = "Turn a demonstration into an executable robot task plan")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Model transport: live, record or replay.
    #[arg(long, global = true)]
    pub transport: Option<TransportMode>,
    /// Fixture directory for record and replay.
    #[arg(long, global = true)]
    pub fixtures: Option<PathBuf>,
    /// Job directory root.
    #[arg(long, global = true)]
    pub jobs: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transcribe sampled frames of a demonstration into an instruction.
    Analyze {
        frames: PathBuf,
        /// Write the session transcript here.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Plan from an instruction, with scene analysis when frames are given.
    Plan {
        #[arg(long)]
        instruction: String,
        #[arg(long)]
        frames: Option<PathBuf>,
        /// Corrective feedback, applied in order.
        #[arg(long)]
        feedback: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        scene_out: Option<PathBuf>,
        /// Continue the conversation saved by `analyze --transcript`.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Ground a plan in a detection stream.
    Ground {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compile a plan and grounding report into an executable document.
    Compile {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        instruction: String,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        anchors: Option<PathBuf>,
        /// Session transcript whose request hashes go into provenance.
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        override_mismatch: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Create a job and run it to completion, approving as it goes.
    Run {
        #[command(flatten)]
        job: JobArgs,
    },
    /// Score planner output against annotations.
    Eval {
        corpus: PathBuf,
        /// planner, planner_fb, planner_sa_fb or all.
        #[arg(long, default_value = "all")]
        mode: String,
        /// Also compare the first argument of each step.
        #[arg(long)]
        strict: bool,
        /// Normalize by the sum of lengths instead of the maximum.
        #[arg(long)]
        sum_of_lengths: bool,
        /// Answer from the responses stored in the stage fixtures.
        #[arg(long)]
        scripted: bool,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Manage recorded model exchanges.
    Fixtures {
        #[command(subcommand)]
        command: FixturesCommand,
    },
    /// Check an executable document against the schema and plan invariants.
    Validate { document: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum FixturesCommand {
    /// Run a job end to end, recording every model exchange.
    Record {
        #[command(flatten)]
        job: JobArgs,
        /// JSON array of responses answered in order instead of calling the endpoint.
        #[arg(long)]
        responses: Option<PathBuf>,
    },
    /// List recorded fixtures.
    List,
}

#[derive(Debug, clap::Args)]
pub struct JobArgs {
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long)]
    pub stream: Option<PathBuf>,
    #[arg(long)]
    pub instruction: Option<String>,
    /// Copy the compiled document here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(t) = cli.transport {
        config.transport = t;
    }
    if let Some(f) = &cli.fixtures {
        config.fixtures_dir = f.clone();
    }
    if let Some(j) = &cli.jobs {
        config.jobs_dir = j.clone();
    }
    config.check()?;
    Ok(config)
}

/// Writes to stdout; a closed pipe (`| head`) ends output quietly.
fn stdout(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

macro_rules! say {
    ($($arg:tt)*) => { stdout(&format!("{}\n", format_args!($($arg)*)))? };
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => crate::store::write_atomic(p, text.as_bytes()).with_context(|| format!("writing {}", p.display())),
        None => stdout(&format!("{text}\n")),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

struct Planning {
    planner: SymbolicPlanner,
    transport: Box<dyn Transport>,
    config: Config,
}

impl Planning {
    fn new(config: Config) -> anyhow::Result<Self> {
        Ok(Planning {
            planner: SymbolicPlanner::new(PromptSet::load(config.prompts_dir.as_deref())?),
            transport: config.build_transport()?,
            config,
        })
    }

    fn session(&self) -> SessionState {
        self.planner.new_session(self.config.token_budget).with_model(self.config.model_id.clone(), self.config.temperature)
    }

    fn frames(&self, dir: &Path) -> anyhow::Result<Vec<demo2plan::gateway::ImageRef>> {
        let files = list_frames(dir)?;
        sample_frames(files.len(), self.config.frame_samples)?
            .into_iter()
            .map(|i| Ok(load_frame(&files[i], self.config.max_edge)?))
            .collect()
    }
}

fn run_job(pipeline: &Pipeline, job: &JobArgs) -> anyhow::Result<ExitCode> {
    let inputs = JobInputs::from_paths(job.frames.as_deref(), job.stream.as_deref(), job.instruction.clone())?;
    let created = pipeline.create_job(inputs)?;
    let record = pipeline.run_to_completion(&created.job_id, true)?;
    eprintln!("job {} is {}", record.job_id, record.state);
    if let Some(e) = &record.last_error {
        eprintln!("  {e}");
    }
    for v in &record.violations {
        eprintln!("  violation: {v}");
    }
    if record.state != JobState::Compiled {
        return Ok(ExitCode::FAILURE);
    }
    let doc = pipeline.artifact(&record.job_id, crate::ArtifactKind::Document)?;
    match &job.out {
        Some(p) => emit(&doc, Some(p))?,
        None => say!("{}", pipeline.store().job_dir(&record.job_id).join(crate::pipeline::DOCUMENT_FILE).display()),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Analyze { frames, transcript } => {
            let p = Planning::new(config)?;
            let images = p.frames(&frames)?;
            let mut session = p.session();
            let instruction = p.planner.analyze_video(&images, &mut session, p.transport.as_ref())?;
            if let Some(t) = transcript {
                emit(&canonical_json(&session), Some(&t))?;
            }
            say!("{}", canonical_json(&instruction));
        }
        Command::Plan { instruction, frames, feedback, out, scene_out, resume, transcript } => {
            let p = Planning::new(config)?;
            let instruction = InstructionText::human(instruction)?;
            let mut session = match &resume {
                Some(path) => read_json::<SessionState>(path)?,
                None => p.session(),
            };
            let transport = p.transport.as_ref();
            let scene = match &frames {
                Some(dir) => {
                    let first = p.frames(dir)?.into_iter().next().context("no frames")?;
                    Some(p.planner.analyze_scene(&first, &instruction, &mut session, transport)?)
                }
                None => None,
            };
            let mut plan = p.planner.plan_tasks(&instruction, scene.as_ref(), &mut session, transport)?;
            for fb in &feedback {
                plan = p.planner.apply_feedback(fb, &plan, scene.as_ref(), &mut session, transport)?;
            }
            for v in &plan.violations {
                eprintln!("violation at step {}: {}", v.step_index, v.kind);
            }
            if let (Some(path), Some(s)) = (&scene_out, &scene) {
                emit(&canonical_json(s), Some(path))?;
            }
            if let Some(t) = transcript {
                emit(&canonical_json(&session), Some(&t))?;
            }
            emit(&canonical_json(&plan), out.as_deref())?;
        }
        Command::Ground { stream, plan, out } => {
            let plan: PlannerOutput = read_json(&plan)?;
            let stream = parse_stream(&stream)?;
            let report = ground(&stream, &plan.steps, &config.grounding())?;
            if let Some(e) = &report.alignment_error {
                eprintln!("needs review: {e}");
            }
            emit(&canonical_json(&report), out.as_deref())?;
        }
        Command::Compile { plan, instruction, scene, anchors, transcript, strict, override_mismatch, out } => {
            let plan: PlannerOutput = read_json(&plan)?;
            let scene: SceneDescription = match scene {
                Some(p) => read_json(&p)?,
                None => SceneDescription::implied_by(&plan.steps),
            };
            let grounding: Option<GroundingReport> = anchors.map(|p| read_json(&p)).transpose()?;
            let fixture_hashes = match transcript {
                Some(p) => read_json::<SessionState>(&p)?.exchanges.into_iter().map(|e| e.request_hash).collect(),
                None => Vec::new(),
            };
            let options = CompileOptions {
                strict: strict || config.strict_compile,
                mismatch_override: override_mismatch,
                provenance: Provenance {
                    transport: config.transport.to_string(),
                    model_id: config.model_id.clone(),
                    fixture_hashes,
                    ..Default::default()
                },
            };
            let doc = compile(&instruction, &scene, &plan, grounding.as_ref(), &options)?;
            emit(&doc.to_canonical_json(), out.as_deref())?;
        }
        Command::Run { job } => {
            let pipeline = Pipeline::new(config.clone(), Arc::from(config.build_transport()?))?;
            return run_job(&pipeline, &job);
        }
        Command::Eval { corpus, mode, strict, sum_of_lengths, scripted, json } => {
            let corpus = Corpus::load(&corpus)?;
            let modes: Vec<AblationMode> = if mode == "all" {
                AblationMode::ALL.to_vec()
            } else {
                vec![mode.parse().map_err(anyhow::Error::msg)?]
            };
            let metric = MetricOptions {
                strict,
                normalizer: if sum_of_lengths { Normalizer::SumOfLengths } else { Normalizer::MaxLength },
            };
            let planner = SymbolicPlanner::new(PromptSet::load(config.prompts_dir.as_deref())?);
            let shared: Arc<dyn Transport> = Arc::from(config.build_transport()?);
            let per_video = move |_: &demo2plan::eval::CorpusEntry| -> Box<dyn Transport> { Box::new(shared.clone()) };
            let source = if scripted { TransportSource::Scripted } else { TransportSource::PerVideo(&per_video) };
            let reports = modes
                .iter()
                .map(|&m| run_ablation(&corpus, m, metric, &planner, &source))
                .collect::<Result<Vec<_>, _>>()?;
            for r in &reports {
                for s in &r.skipped {
                    eprintln!("{}: skipped {}: {}", r.mode.label(), s.video_id, s.reason);
                }
            }
            stdout(&format_table(&reports))?;
            if let Some(path) = json {
                emit(&canonical_json(&reports), Some(&path))?;
            }
        }
        Command::Serve { bind } => {
            let bind = bind.unwrap_or_else(|| config.bind.clone());
            let pipeline = Arc::new(Pipeline::new(config.clone(), Arc::from(config.build_transport()?))?);
            for id in pipeline.recover_interrupted()? {
                log::warn!("job {id} was interrupted and is marked failed");
            }
            crate::api::serve(pipeline.clone(), &bind)?;
        }
        Command::Fixtures { command: FixturesCommand::List } => {
            for f in FixtureStore::new(&config.fixtures_dir).list()? {
                let preview: String = f.response_text.chars().take(60).collect();
                say!("{}  {}  {}  {}", f.request_hash, f.metadata.model_id, f.metadata.recorded_at, preview.replace('\n', " "));
            }
        }
        Command::Fixtures { command: FixturesCommand::Record { job, responses } } => {
            let store = FixtureStore::new(&config.fixtures_dir);
            let transport: Arc<dyn Transport> = match responses {
                Some(path) => {
                    let answers: Vec<String> = read_json(&path)?;
                    Arc::new(RecordingTransport::new(ScriptedTransport::new(answers), store))
                }
                None => Arc::new(RecordingTransport::new(LiveTransport::from_env(&config.endpoint)?, store)),
            };
            let pipeline = Pipeline::new(config, transport)?;
            return run_job(&pipeline, &job);
        }
        Command::Validate { document } => {
            let report = validate_document(&document);
            for e in report.schema_errors.iter().chain(&report.invariant_errors) {
                say!("{e}");
            }
            if !report.is_valid() {
                bail!("{} is not a valid executable document", document.display());
            }
            say!("{} is valid", document.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
