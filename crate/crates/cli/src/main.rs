//! `voxmag` command line.
//!
//! Every subcommand exits 0 on success. Failures print one JSON object
//! `{"error":{"kind":..,"message":..}}` on stderr and exit with a code that
//! depends only on the error kind (see [`AppError::exit_code`]).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use voxmag_core::codec::{compile_timeline_with, BroadcastMode, CommandTimeline, CompileOptions};
use voxmag_core::dynamics::{simulate_maneuver, trajectory_csv, DynParams, ForceSource};
use voxmag_core::force::{
    force_current_sweep, force_distance_sweep_with, CoilSpec, Execution, ForceCurve, ForceLaw, KernelOptions,
    PermeabilityModel, SweepOptions,
};
use voxmag_core::planner::ManeuverKind;
use voxmag_core::scenario::{
    format_step, load_scenario, run_script, run_steps, Scenario, CORPUS_FURNITURE, CORPUS_THREE_CUBE, CORPUS_TWO_CUBE,
};
use voxmag_core::service::{serve, Service, SessionHandle, SessionSettings};

#[derive(Debug)]
enum AppError {
    Io(String),
    Scenario(String),
    Plan(String),
    Physics(String),
    Codec(String),
    Verify(String),
    Service(String),
}

impl AppError {
    fn kind(&self) -> &'static str {
        match self {
            AppError::Io(_) => "io",
            AppError::Scenario(_) => "scenario",
            AppError::Plan(_) => "plan",
            AppError::Physics(_) => "physics",
            AppError::Codec(_) => "codec",
            AppError::Verify(_) => "verify",
            AppError::Service(_) => "service",
        }
    }

    /// Stable process exit codes; 2 is left to argument parsing.
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Io(_) => 3,
            AppError::Scenario(_) => 4,
            AppError::Plan(_) => 5,
            AppError::Physics(_) => 6,
            AppError::Codec(_) => 7,
            AppError::Verify(_) => 8,
            AppError::Service(_) => 9,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Io(m)
            | AppError::Scenario(m)
            | AppError::Plan(m)
            | AppError::Physics(m)
            | AppError::Codec(m)
            | AppError::Verify(m)
            | AppError::Service(m) => m,
        }
    }
}

type Result<T> = std::result::Result<T, AppError>;

#[derive(Parser)]
#[command(name = "voxmag", version, about = "Plan, compile and simulate electromagnetic pivoting-cube maneuvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TimelineFormat {
    Text,
    Binary,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Pivot,
    Traversal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Law {
    Neumann,
    Grassmann,
}

#[derive(clap::Args, Clone)]
struct CoilArgs {
    /// Elements per coil.
    #[arg(long, default_value_t = 8000)]
    elements: usize,
    /// Drive current in amperes for both coils.
    #[arg(long, default_value_t = 1.2)]
    current: f64,
    /// Constant relative permeability instead of the current-dependent table.
    #[arg(long)]
    mu: Option<f64>,
    /// Permeability table as `amps:mu,amps:mu,...`.
    #[arg(long, conflicts_with = "mu")]
    mu_table: Option<String>,
    /// Extra center distance between the coils, in millimeters.
    #[arg(long, default_value_t = 0.0)]
    lateral_offset_mm: f64,
    #[arg(long, value_enum, default_value_t = Law::Neumann)]
    law: Law,
    /// Run the kernel on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Resolve every script step of a scenario and print the plans and final state.
    Plan {
        scenario: PathBuf,
        /// Only run this script (earlier scripts still run first).
        #[arg(long)]
        script: Option<String>,
    },
    /// Compile a scenario's maneuvers into a timed command file.
    Timeline {
        scenario: PathBuf,
        #[arg(long)]
        script: Option<String>,
        #[arg(long, value_enum, default_value_t = TimelineFormat::Text)]
        format: TimelineFormat,
        /// Idle time between consecutive maneuvers.
        #[arg(long, default_value_t = 100)]
        gap_ms: u32,
        /// Re-send every active electromagnet at each phase boundary.
        #[arg(long)]
        full_broadcast: bool,
        /// Send this PWM duty to each participating cube before launch.
        #[arg(long)]
        pwm: Option<u8>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Force against surface separation for two side-by-side coils.
    ForceSweep {
        #[command(flatten)]
        coil: CoilArgs,
        #[arg(long, default_value_t = 0.5)]
        from_mm: f64,
        #[arg(long, default_value_t = 20.0)]
        to_mm: f64,
        #[arg(long, default_value_t = 0.5)]
        step_mm: f64,
        /// Drive the second coil with reversed current (attraction).
        #[arg(long)]
        antiparallel: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Force against drive current at a fixed separation.
    ForceCurrent {
        #[command(flatten)]
        coil: CoilArgs,
        #[arg(long, default_value_t = 0.5)]
        separation_mm: f64,
        #[arg(long, default_value_t = 0.05)]
        step_a: f64,
        #[arg(long, default_value_t = 1.2)]
        max_a: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Simulate one maneuver with the two-link model.
    Dynamics {
        #[arg(long, value_enum, default_value_t = Kind::Pivot)]
        kind: Kind,
        /// Force curve file from `force-sweep`; computed when absent.
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Elements per coil when computing the curve.
        #[arg(long, default_value_t = 8000)]
        elements: usize,
        /// Multiply both pair forces.
        #[arg(long, default_value_t = 1.0)]
        force_scale: f64,
        /// Keep the catch pair energized from the start.
        #[arg(long)]
        catch_always_on: bool,
        #[arg(long, default_value_t = 1.0)]
        step_ms: f64,
        #[arg(long, default_value_t = 5.0)]
        timeout_s: f64,
        /// Write the trajectory as CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Serve sessions over line-delimited JSON on TCP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Default scenario for new sessions.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Settle maneuvers immediately instead of in animated time.
        #[arg(long)]
        headless: bool,
        #[arg(long, default_value_t = 1.0)]
        animation_speed: f64,
        /// Run the scenario's scripts through a session, write its timeline here and exit.
        #[arg(long, requires = "scenario")]
        timeline_export: Option<PathBuf>,
    },
    /// Run the shipped scenarios and check their maneuver counts and final shapes.
    CorpusVerify,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Scenario> {
    load_scenario(&read(path)?).map_err(|e| AppError::Scenario(e.to_string()))
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match output {
        Some(p) => fs::write(p, bytes).map_err(|e| AppError::Io(format!("{}: {e}", p.display()))),
        None => io::stdout().write_all(bytes).map_err(|e| AppError::Io(e.to_string())),
    }
}

fn print_json(v: &Value) -> Result<()> {
    emit(None, format!("{}\n", serde_json::to_string_pretty(v).expect("json")).as_bytes())
}

/// Scripts to run: all of them, or everything up to and including `name`.
fn scripts_through(s: &Scenario, name: Option<&str>) -> Result<(usize, usize)> {
    match name {
        None => Ok((0, s.scripts.len())),
        Some(n) => s
            .scripts
            .iter()
            .position(|sc| sc.name == n)
            .map(|i| (i, i + 1))
            .ok_or_else(|| AppError::Scenario(format!("no script named {n:?}"))),
    }
}

fn plans_for(s: &Scenario, script: Option<&str>) -> Result<(Vec<voxmag_core::planner::ManeuverPlan>, Value)> {
    let (first, end) = scripts_through(s, script)?;
    let mut state = s.initial_state();
    let mut selected = Vec::new();
    for (i, sc) in s.scripts[..end].iter().enumerate() {
        let (next, plans) = run_steps(&state, &sc.steps, &s.timings)
            .map_err(|(step, e)| AppError::Plan(format!("script {:?} step {step}: {e}", sc.name)))?;
        state = next;
        if i >= first {
            selected.extend(plans);
        }
    }
    let final_state = json!({
        "state_hash": state.state_hash(),
        "cubes": state.cubes().map(|c| json!({"id": c.id, "at": [c.address.x, c.address.y, c.address.z]})).collect::<Vec<_>>(),
    });
    Ok((selected, final_state))
}

fn cmd_plan(path: &Path, script: Option<&str>) -> Result<()> {
    let s = load(path)?;
    let (plans, final_state) = plans_for(&s, script)?;
    let steps: Vec<Value> = plans
        .iter()
        .map(|p| {
            json!({
                "step": format_step(&p.request),
                "kind": p.kind,
                "origin": p.origin,
                "destination": p.destination,
                "landing": [p.landing.x, p.landing.y, p.landing.z],
                "total_ms": p.total_ms(),
                "phases": p.phases.iter().map(|ph| json!({
                    "phase": ph.kind,
                    "duration_ms": ph.duration_ms,
                    "assignments": ph.assignments.iter().map(|a| json!([a.cube, a.em, p.body_polarity(a)])).collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
                "warnings": p.warnings,
            })
        })
        .collect();
    print_json(&json!({ "scenario": s.name, "maneuvers": steps.len(), "steps": steps, "final": final_state }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_timeline(
    path: &Path,
    script: Option<&str>,
    format: TimelineFormat,
    gap_ms: u32,
    full: bool,
    pwm: Option<u8>,
    output: Option<&Path>,
) -> Result<()> {
    let s = load(path)?;
    let (plans, _) = plans_for(&s, script)?;
    let options = CompileOptions { mode: if full { BroadcastMode::Full } else { BroadcastMode::Delta }, pwm_duty: pwm };
    let mut tl = CommandTimeline::default();
    for p in &plans {
        let one = compile_timeline_with(p, &s.timings, options).map_err(|e| AppError::Codec(e.to_string()))?;
        if tl.is_empty() {
            tl = one;
        } else {
            tl.append(&one, gap_ms);
        }
    }
    tl.validate().map_err(|e| AppError::Codec(e.to_string()))?;
    match format {
        TimelineFormat::Text => emit(output, tl.to_text().as_bytes()),
        TimelineFormat::Binary => emit(output, &tl.to_binary()),
        TimelineFormat::Json => emit(output, format!("{}\n", serde_json::to_string(&tl).expect("json")).as_bytes()),
    }
}

fn permeability(c: &CoilArgs) -> Result<PermeabilityModel> {
    let m = match (&c.mu, &c.mu_table) {
        (Some(mu), _) => PermeabilityModel::constant(*mu),
        (None, Some(table)) => {
            let mut knots = Vec::new();
            for part in table.split(',') {
                let (a, m) = part
                    .split_once(':')
                    .ok_or_else(|| AppError::Physics(format!("bad permeability knot {part:?}")))?;
                let num = |s: &str| s.trim().parse::<f64>().map_err(|e| AppError::Physics(format!("{s:?}: {e}")));
                knots.push((num(a)?, num(m)?));
            }
            PermeabilityModel { table: knots }
        }
        (None, None) => PermeabilityModel::default(),
    };
    m.validate().map_err(|e| AppError::Physics(e.to_string()))?;
    Ok(m)
}

fn sweep_options(c: &CoilArgs) -> SweepOptions {
    SweepOptions {
        elements: c.elements,
        lateral_offset: c.lateral_offset_mm * 1e-3,
        kernel: KernelOptions {
            law: match c.law {
                Law::Neumann => ForceLaw::Neumann,
                Law::Grassmann => ForceLaw::Grassmann,
            },
            execution: if c.sequential { Execution::Sequential } else { Execution::Parallel },
        },
    }
}

fn separations(from_mm: f64, to_mm: f64, step_mm: f64) -> Result<Vec<f64>> {
    if !(from_mm > 0.0 && step_mm > 0.0 && to_mm >= from_mm) {
        return Err(AppError::Physics("separations need 0 < from <= to and a positive step".into()));
    }
    let n = ((to_mm - from_mm) / step_mm + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| (from_mm + k as f64 * step_mm) * 1e-3).collect())
}

fn cmd_force_sweep(c: &CoilArgs, from: f64, to: f64, step: f64, antiparallel: bool, out: Option<&Path>) -> Result<()> {
    let spec1 = CoilSpec::default().with_current(c.current);
    let spec2 = spec1.with_current(if antiparallel { -c.current } else { c.current });
    let curve = force_distance_sweep_with(&spec1, &spec2, &permeability(c)?, &separations(from, to, step)?, sweep_options(c))
        .map_err(|e| AppError::Physics(e.to_string()))?;
    emit(out, curve.to_csv().as_bytes())
}

fn cmd_force_current(c: &CoilArgs, sep_mm: f64, step_a: f64, max_a: f64, out: Option<&Path>) -> Result<()> {
    if step_a.is_nan() || step_a <= 0.0 {
        return Err(AppError::Physics("current step must be positive".into()));
    }
    let n = (max_a / step_a + 1e-9).floor() as usize;
    // Clamp so accumulated rounding cannot push the last step past `max_a`.
    let currents: Vec<f64> = (0..=n).map(|k| (k as f64 * step_a).min(max_a)).collect();
    let spec = CoilSpec::default();
    let curve = force_current_sweep(&spec, &spec, &permeability(c)?, &currents, sep_mm * 1e-3, sweep_options(c))
        .map_err(|e| AppError::Physics(e.to_string()))?;
    emit(out, curve.to_csv().as_bytes())
}

#[allow(clippy::too_many_arguments)]
fn cmd_dynamics(
    kind: Kind,
    curve: Option<&Path>,
    elements: usize,
    scale: f64,
    always_on: bool,
    step_ms: f64,
    timeout_s: f64,
    trajectory: Option<&Path>,
) -> Result<()> {
    let phys = |e: &dyn std::fmt::Display| AppError::Physics(e.to_string());
    let curve = match curve {
        Some(p) => ForceCurve::from_csv(&read(p)?).map_err(|e| phys(&e))?,
        None => {
            let spec = CoilSpec::default();
            let options = SweepOptions { elements, ..Default::default() };
            force_distance_sweep_with(&spec, &spec, &PermeabilityModel::default(), &ForceCurve::default_separations(), options)
                .map_err(|e| phys(&e))?
        }
    };
    let base = DynParams::with_curve(&curve).map_err(|e| phys(&e))?;
    let params = DynParams {
        launch: base.launch.scaled(scale),
        catch: base.catch.scaled(scale),
        catch_always_on: always_on,
        step: step_ms * 1e-3,
        timeout: timeout_s,
        ..base
    };
    let kind = match kind {
        Kind::Pivot => ManeuverKind::Pivot,
        Kind::Traversal => ManeuverKind::Traversal,
    };
    let out = simulate_maneuver(kind, &params).map_err(|e| phys(&e))?;
    if let Some(p) = trajectory {
        emit(Some(p), trajectory_csv(&out.trajectory).as_bytes())?;
    }
    let constant = matches!(params.launch, ForceSource::Constant(_));
    print_json(&json!({
        "kind": out.kind,
        "completed": out.completed,
        "duration_s": out.duration,
        "captured": out.captured,
        "approach_speed_m_s": out.approach_speed,
        "samples": out.trajectory.len(),
        "constant_force": constant,
    }))
}

fn cmd_serve(
    listen: &str,
    scenario: Option<&Path>,
    headless: bool,
    speed: f64,
    export: Option<&Path>,
) -> Result<()> {
    let scenario = scenario.map(load).transpose()?;
    let settings = SessionSettings { headless, animation_speed: speed, ..Default::default() };
    if let (Some(path), Some(s)) = (export, scenario.as_ref()) {
        // Batch mode: drive one headless session and export its history.
        let h = SessionHandle::spawn(1, s, SessionSettings { headless: true, ..settings });
        for (i, req) in s.requests().enumerate() {
            h.request_maneuver(*req)
                .map_err(|e| AppError::Plan(format!("step {}: {e}", i + 1)))?;
        }
        let n = h.snapshot().map_err(|e| AppError::Service(e.to_string()))?.history_len;
        let tl = h.export_timeline(0..n, 100).map_err(|e| AppError::Service(e.to_string()))?;
        h.shutdown();
        return emit(Some(path), tl.to_text().as_bytes());
    }
    let server = serve(listen, Service::new(scenario, settings)).map_err(|e| AppError::Service(e.to_string()))?;
    eprintln!("{}", json!({ "listening": server.local_addr().to_string() }));
    server.join();
    Ok(())
}

fn cmd_corpus_verify() -> Result<()> {
    let expected: [(&str, &str, &[usize]); 3] = [
        ("two_cube_pivot", CORPUS_TWO_CUBE, &[1]),
        ("three_cube_traversal", CORPUS_THREE_CUBE, &[1]),
        ("chair_table_couch", CORPUS_FURNITURE, &[22, 40]),
    ];
    let mut report = Vec::new();
    let mut failures = Vec::new();
    for (name, text, counts) in expected {
        let s = load_scenario(text).map_err(|e| AppError::Scenario(format!("{name}: {e}")))?;
        let lengths: Vec<usize> = s.scripts.iter().map(|sc| sc.steps.len()).collect();
        let run = run_script(&s);
        let ok_counts = lengths == counts;
        let (ok_run, hash) = match &run {
            Ok(r) => (true, Some(r.final_state.state_hash())),
            Err(e) => {
                failures.push(format!("{name}: {e}"));
                (false, None)
            }
        };
        if !ok_counts {
            failures.push(format!("{name}: script lengths {lengths:?}, expected {counts:?}"));
        }
        report.push(json!({
            "scenario": name,
            "cubes": s.cubes.len(),
            "script_lengths": lengths,
            "replayed": ok_run,
            "final_state_hash": hash,
        }));
    }
    print_json(&json!({ "scenarios": report, "ok": failures.is_empty() }))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(AppError::Verify(failures.join("; ")))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Plan { scenario, script } => cmd_plan(&scenario, script.as_deref()),
        Command::Timeline { scenario, script, format, gap_ms, full_broadcast, pwm, output } => {
            cmd_timeline(&scenario, script.as_deref(), format, gap_ms, full_broadcast, pwm, output.as_deref())
        }
        Command::ForceSweep { coil, from_mm, to_mm, step_mm, antiparallel, output } => {
            cmd_force_sweep(&coil, from_mm, to_mm, step_mm, antiparallel, output.as_deref())
        }
        Command::ForceCurrent { coil, separation_mm, step_a, max_a, output } => {
            cmd_force_current(&coil, separation_mm, step_a, max_a, output.as_deref())
        }
        Command::Dynamics { kind, curve, elements, force_scale, catch_always_on, step_ms, timeout_s, trajectory } => {
            cmd_dynamics(
                kind,
                curve.as_deref(),
                elements,
                force_scale,
                catch_always_on,
                step_ms,
                timeout_s,
                trajectory.as_deref(),
            )
        }
        Command::Serve { listen, scenario, headless, animation_speed, timeline_export } => {
            cmd_serve(&listen, scenario.as_deref(), headless, animation_speed, timeline_export.as_deref())
        }
        Command::CorpusVerify => cmd_corpus_verify(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": e.kind(), "message": e.message() } }));
            ExitCode::from(e.exit_code())
        }
    }
}
