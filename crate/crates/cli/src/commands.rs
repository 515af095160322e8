use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use neuroadapt::adapt::{ChatBackend, DirectiveSet, EchoBackend, HttpBackend};
use neuroadapt::classifier::{cross_validate, evaluate, read_dataset_file, write_dataset, Dataset, MlpModel};
use neuroadapt::features::{FeatureConfig, FEATURE_NAMES};
use neuroadapt::latency;
use neuroadapt::pipeline::{
    default_training_set, feature_config_for, Pipeline, SimStreams, DEFAULT_MODEL_SEEDS,
};
use neuroadapt::preprocess::LowPassFir;
use neuroadapt::session::{replay, Archive, Session, SessionConfig, SessionSource};
use neuroadapt::sim::{ScenarioPlayer, ScenarioScript, SimEvent};
use neuroadapt::stream::{write_record_line, Merger, MergerConfig, US_PER_SEC};
use neuroadapt_service::ServiceConfig;

use crate::config::BackendKind;
use crate::{CliError, Command, Settings};

pub fn dispatch(cmd: &Command, s: &Settings) -> Result<(), CliError> {
    match cmd {
        Command::Generate { out } => generate(s, out),
        Command::Train { data, out, cv } => train(s, data.as_deref(), out, *cv),
        Command::Evaluate { data, cv } => evaluate_cmd(s, data.as_deref(), *cv),
        Command::Bench { windows } => bench(s, *windows),
        Command::Serve => serve(s),
        Command::Replay { archive } => replay_cmd(s, archive),
        Command::Taps { out } => taps(out),
        Command::Session { out, say } => session(s, out, say),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(format!("{}: {e}", path.display()))
}

pub fn load_script(s: &Settings) -> Result<ScenarioScript, CliError> {
    let mut script = match &s.scenario {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(io_err(p))?;
            ScenarioScript::parse(&text)
                .map_err(|e| CliError::new("scenario", format!("{}: {e}", p.display())))?
        }
        None => ScenarioScript::default_script(0),
    };
    if let Some(seed) = s.seed {
        script.seed = seed;
    }
    Ok(script)
}

/// The configured model, or the default model trained on the spot.
pub fn load_model(s: &Settings) -> Result<Arc<MlpModel>, CliError> {
    match &s.model {
        Some(p) if p.as_os_str().is_empty() => Err(CliError::usage("--model path is empty")),
        Some(p) => MlpModel::load(p)
            .map(Arc::new)
            .map_err(|e| CliError::new("model", format!("{}: {e}", p.display()))),
        None => {
            eprintln!("no --model given; training the default model");
            let data = default_training_set(DEFAULT_MODEL_SEEDS, FeatureConfig::default());
            neuroadapt::classifier::train(&data, &s.train)
                .map(|(m, _)| Arc::new(m))
                .map_err(|e| CliError::new("train", e.to_string()))
        }
    }
}

fn directives(s: &Settings) -> Result<Arc<DirectiveSet>, CliError> {
    match &s.templates {
        Some(p) => DirectiveSet::load(p)
            .map(Arc::new)
            .map_err(|e| CliError::new("templates", format!("{}: {e}", p.display()))),
        None => Ok(Arc::new(DirectiveSet::builtin())),
    }
}

fn backend(s: &Settings) -> Result<Arc<dyn ChatBackend>, CliError> {
    Ok(match s.backend {
        BackendKind::Stub => Arc::new(EchoBackend),
        BackendKind::Http => Arc::new(
            HttpBackend::new(s.llm.clone()).map_err(|e| CliError::new("backend", e.to_string()))?,
        ),
    })
}

fn generate(s: &Settings, out: &Path) -> Result<(), CliError> {
    let script = load_script(s)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(format!("cannot create {}: {e}", out.display())))?;
    let raw_path = out.join("raw.ndjson");
    let mut raw = create(&raw_path)?;
    let cfg = FeatureConfig::default();
    let pipeline = Pipeline::new(cfg);
    let mut merger = Merger::new(MergerConfig::default());
    let streams = SimStreams::open(&mut merger).expect("fresh merger");
    let mut rows = Vec::new();
    let mut samples = 0usize;
    let started = Instant::now();
    for (i, batch) in ScenarioPlayer::new(&script).enumerate() {
        for event in batch {
            if let SimEvent::Sample(d) = event {
                write_record_line(&mut raw, d.stream, &d.sample).map_err(io_err(&raw_path))?;
                samples += 1;
                let _ = streams.push(&mut merger, &d);
            }
        }
        for w in merger.poll().into_iter().flatten() {
            if let Ok(r) = pipeline.process(&w, None) {
                rows.push((w.end_us, r.features.vector.to_vec(), w.label));
            }
        }
        if let Some(a) = s.accel {
            let due = Duration::from_secs_f64((i + 1) as f64 / a);
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                std::thread::sleep(wait);
            }
        }
    }
    raw.flush().map_err(io_err(&raw_path))?;

    let feat_path = out.join("features.csv");
    write_dataset(
        create(&feat_path)?,
        cfg.names(),
        rows.iter().map(|(t, x, l)| (*t, x.clone(), l.map(|s| s.index()))),
    )
    .map_err(|e| CliError::io(format!("{}: {e}", feat_path.display())))?;

    let label_path = out.join("labels.csv");
    let mut labels = create(&label_path)?;
    writeln!(labels, "window_end_us,label,state").map_err(io_err(&label_path))?;
    for (t, _, l) in &rows {
        match l {
            Some(st) => writeln!(labels, "{t},{},{}", st.index(), st.name()),
            None => writeln!(labels, "{t},,rest"),
        }
        .map_err(io_err(&label_path))?;
    }
    labels.flush().map_err(io_err(&label_path))?;

    let distinct: BTreeSet<_> = rows.iter().filter_map(|r| r.2).collect();
    println!(
        "samples {samples}  windows {}  labels {}  wall {:.2}s  session {}s",
        rows.len(),
        distinct.len(),
        started.elapsed().as_secs_f64(),
        script.session_length_us() / US_PER_SEC
    );
    Ok(())
}

/// Reads a feature CSV; the fixation-count column is used when present.
fn read_data(path: &Path) -> Result<Dataset, CliError> {
    let header = std::fs::read_to_string(path)
        .map_err(io_err(path))?
        .lines()
        .next()
        .unwrap_or("")
        .to_string();
    let cfg = FeatureConfig {
        include_fixation_count: header.split(',').any(|c| c.trim() == FEATURE_NAMES[9]),
        ..FeatureConfig::default()
    };
    read_dataset_file(path, cfg.names()).map_err(|e| CliError::new("dataset", format!("{}: {e}", path.display())))
}

fn data_or_default(data: Option<&Path>) -> Result<Dataset, CliError> {
    match data {
        Some(p) => read_data(p),
        None => Ok(default_training_set(DEFAULT_MODEL_SEEDS, FeatureConfig::default())),
    }
}

fn run_cv(s: &Settings, data: &Dataset, k: usize) -> Result<(), CliError> {
    if k < 2 {
        return Err(CliError::usage("--cv needs at least 2 folds"));
    }
    let cv = cross_validate(data, k, &s.train).map_err(|e| CliError::new("train", e.to_string()))?;
    let folds: Vec<String> = cv.fold_accuracy.iter().map(|a| format!("{a:.4}")).collect();
    println!("cv {k}-fold accuracy {:.4}  folds [{}]", cv.mean_accuracy, folds.join(", "));
    Ok(())
}

fn train(s: &Settings, data: Option<&Path>, out: &Path, cv: Option<usize>) -> Result<(), CliError> {
    let data = data_or_default(data)?;
    // fail on an unwritable path before spending time on training
    create(out)?;
    let (model, report) =
        neuroadapt::classifier::train(&data, &s.train).map_err(|e| CliError::new("train", e.to_string()))?;
    model.save(out).map_err(io_err(out))?;
    println!(
        "examples {}  train {}  validation {}  epochs {} (best {})",
        data.len(),
        report.train_size,
        report.val_size,
        report.epochs_run,
        report.best_epoch
    );
    if !report.degenerate_features.is_empty() {
        println!("degenerate features: {}", report.degenerate_features.join(", "));
    }
    println!("{}", report.validation.table());
    println!("accuracy {:.4}", report.validation.accuracy);
    println!("sha256 {}", model.hash_hex());
    if let Some(k) = cv {
        run_cv(s, &data, k)?;
    }
    Ok(())
}

fn evaluate_cmd(s: &Settings, data: Option<&Path>, cv: Option<usize>) -> Result<(), CliError> {
    let data = data_or_default(data)?;
    if let Some(k) = cv {
        return run_cv(s, &data, k);
    }
    if s.model.is_none() {
        return Err(CliError::usage("evaluate needs --model or --cv"));
    }
    let model = load_model(s)?;
    let m = evaluate(&model, &data).map_err(|e| CliError::new("dataset", e.to_string()))?;
    println!("{}", m.table());
    println!("accuracy {:.4}", m.accuracy);
    Ok(())
}

fn bench(s: &Settings, windows: usize) -> Result<(), CliError> {
    if s.model.is_none() {
        return Err(CliError::usage("bench needs --model"));
    }
    if windows == 0 {
        return Err(CliError::usage("--windows must be positive"));
    }
    let model = load_model(s)?;
    let report = latency::measure(&model, windows, s.seed.unwrap_or(0));
    println!("{}", report.table());
    let verdict = if report.total.p99_us < 100_000 { "within" } else { "OVER" };
    println!("p99 {:.3} ms {verdict} the 100 ms budget", report.total.p99_us as f64 / 1000.0);
    Ok(())
}

fn serve(s: &Settings) -> Result<(), CliError> {
    let model = load_model(s)?;
    let mut cfg = ServiceConfig::new(model, backend(s)?);
    cfg.directives = directives(s)?;
    cfg.accel = s.accel.unwrap_or(1.0);
    let port = s.port;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::io(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
            .await
            .map_err(|e| CliError::io(format!("bind port {port}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| CliError::io(e.to_string()))?;
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
        neuroadapt_service::serve(listener, cfg)
            .await
            .map_err(|e| CliError::new("serve", e.to_string()))
    })
}

fn replay_cmd(s: &Settings, path: &Path) -> Result<(), CliError> {
    let archive = Archive::read_file(path).map_err(|e| CliError::new("archive", format!("{}: {e}", path.display())))?;
    let model = load_model(s)?;
    let report = replay(&archive, model, directives(s)?).map_err(|e| CliError::new("replay", e.to_string()))?;
    println!("{}", report.summary());
    if !report.model_matches_header {
        println!("note: model hash differs from the archive header");
    }
    if report.is_match() {
        Ok(())
    } else {
        Err(CliError {
            status: 1,
            ..CliError::new("mismatch", "derived events differ from the archive")
        })
    }
}

fn taps(out: &Path) -> Result<(), CliError> {
    let fir = LowPassFir::eeg_default();
    let mut w = create(out)?;
    fir.write_taps(&mut w).map_err(io_err(out))?;
    w.flush().map_err(io_err(out))?;
    println!("{} taps, group delay {} us", fir.taps().len(), fir.group_delay_us());
    Ok(())
}

fn session(s: &Settings, out: &Path, say: &[String]) -> Result<(), CliError> {
    let script = load_script(s)?;
    let model = load_model(s)?;
    let backend = backend(s)?;
    let mut w = create(out)?;
    let mut session = Session::new(
        "cli",
        SessionConfig {
            mode: s.mode,
            ..SessionConfig::default()
        },
        model.clone(),
        directives(s)?,
        SessionSource::Scripted(script),
    )
    .map_err(|e| CliError::new("session", e.to_string()))?;
    debug_assert_eq!(feature_config_for(&model), session.header().features);
    // spread the messages evenly over the run
    let steps = session_steps(&session);
    let every = (steps / (say.len() + 1)).max(1);
    let mut pending = say.iter();
    let mut step = 0;
    while session
        .step()
        .map_err(|e| CliError::new("session", e.to_string()))?
        .is_some()
    {
        step += 1;
        if step % every == 0 {
            if let Some(text) = pending.next() {
                session
                    .chat(text, backend.as_ref())
                    .map_err(|e| CliError::new("session", e.to_string()))?;
            }
        }
    }
    session.close();
    w.write_all(session.archive().expect("closed session has an archive"))
        .and_then(|_| w.flush())
        .map_err(io_err(out))?;
    let metrics = serde_json::to_string(&session.metrics()).expect("metrics serialize");
    println!("events {}  directives {}", session.events().len(), session.log().directive_changes());
    println!("{metrics}");
    Ok(())
}

fn session_steps(s: &Session) -> usize {
    s.header()
        .scenario
        .map_or(0, |sc| (sc.session_length_us() / US_PER_SEC) as usize)
}
