//! Command-line entry point and the line-delimited JSON wire protocol.
//!
//! `serve` speaks one JSON object per line on stdin/stdout:
//!
//! ```text
//! {"kind":"hello","payload":{"space":{"params":[...]},"config":{...}}}   -> ack
//! {"kind":"suggest_request"}                                           -> suggestions {points}
//! {"kind":"observe","payload":{"points":[...],"values":[1.5,null]}}    -> ack
//! {"kind":"best"}                                                      -> best {point, value}
//! ```
//!
//! Any failure produces `{"kind":"error","payload":{"message":...}}` and the
//! session continues. Blank lines are ignored.

use std::fs;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bench::{self, Arm};
use crate::error::{Error, Result};
use crate::optimizer::{Optimizer, OptimizerConfig};
use crate::space::{Point, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub space: SearchSpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<OptimizerConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum WireMessage {
    Hello(Hello),
    SuggestRequest,
    Suggestions {
        points: Vec<Point>,
    },
    Observe {
        points: Vec<Point>,
        /// `null` marks a failed evaluation.
        values: Vec<Option<f64>>,
    },
    Ack,
    /// Sent empty as a request; the response carries the incumbent.
    Best(BestPayload),
    Error {
        message: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BestPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Point>,
    /// `null` when every observation failed.
    #[serde(default)]
    pub value: Option<f64>,
}

impl WireMessage {
    pub fn error(message: impl Into<String>) -> Self {
        Self::Error { message: message.into() }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }
}

/// Parses one line; a `best` request may omit its payload.
pub fn parse_message(line: &str) -> serde_json::Result<WireMessage> {
    let mut v: serde_json::Value = serde_json::from_str(line)?;
    if let Some(obj) = v.as_object_mut() {
        if obj.get("kind").and_then(|k| k.as_str()) == Some("best")
            && obj.get("payload").is_none_or(|p| p.is_null())
        {
            obj.insert("payload".into(), serde_json::json!({}));
        }
    }
    serde_json::from_value(v)
}

/// One serve session: the optimizer created by `hello` plus protocol state.
#[derive(Debug, Default)]
pub struct Session {
    optimizer: Option<Optimizer>,
    default_config: Option<OptimizerConfig>,
}

impl Session {
    pub fn new(default_config: Option<OptimizerConfig>) -> Self {
        Self { optimizer: None, default_config }
    }

    pub fn optimizer(&self) -> Option<&Optimizer> {
        self.optimizer.as_ref()
    }

    /// Response to one raw input line, or `None` for blank lines.
    pub fn handle_bytes(&mut self, line: &[u8]) -> Option<WireMessage> {
        match std::str::from_utf8(line) {
            Ok(s) => self.handle_line(s),
            Err(e) => Some(WireMessage::error(format!("line is not valid UTF-8: {e}"))),
        }
    }

    pub fn handle_line(&mut self, line: &str) -> Option<WireMessage> {
        let line = line.trim();
        if line.is_empty() {
            return None;
        }
        let msg = match parse_message(line) {
            Ok(m) => m,
            Err(e) => return Some(WireMessage::error(format!("malformed message: {e}"))),
        };
        Some(self.handle(msg).unwrap_or_else(|e| WireMessage::error(e.to_string())))
    }

    fn expected(&self) -> &'static str {
        match &self.optimizer {
            None => "hello",
            Some(o) if o.has_pending() => "observe",
            Some(_) => "suggest_request",
        }
    }

    fn unexpected(&self, got: &str) -> Error {
        Error::Protocol(format!("expected {}, got {got}", self.expected()))
    }

    pub fn handle(&mut self, msg: WireMessage) -> Result<WireMessage> {
        match msg {
            WireMessage::Hello(h) => {
                if self.optimizer.is_some() {
                    return Err(self.unexpected("hello"));
                }
                let config = h.config.or_else(|| self.default_config.clone()).unwrap_or_default();
                self.optimizer = Some(Optimizer::new(h.space, config)?);
                Ok(WireMessage::Ack)
            }
            WireMessage::SuggestRequest => {
                let expected = self.expected();
                let opt = self.optimizer.as_mut().filter(|o| !o.has_pending());
                match opt {
                    Some(o) => Ok(WireMessage::Suggestions { points: o.suggest()? }),
                    None => Err(Error::Protocol(format!("expected {expected}, got suggest_request"))),
                }
            }
            WireMessage::Observe { points, values } => {
                let expected = self.expected();
                let opt = self.optimizer.as_mut().filter(|o| o.has_pending());
                let Some(opt) = opt else {
                    return Err(Error::Protocol(format!("expected {expected}, got observe")));
                };
                let points = points.iter().map(|p| opt.space().validate(p)).collect::<Result<Vec<_>>>()?;
                let values: Vec<f64> = values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
                opt.observe(&points, &values)?;
                Ok(WireMessage::Ack)
            }
            WireMessage::Best(_) => {
                let opt = self.optimizer.as_ref().ok_or_else(|| self.unexpected("best"))?;
                let (point, value) = opt.best()?;
                Ok(WireMessage::Best(BestPayload { point: Some(point), value: value.is_finite().then_some(value) }))
            }
            other @ (WireMessage::Suggestions { .. } | WireMessage::Ack | WireMessage::Error { .. }) => {
                let kind = serde_json::to_value(&other).ok().and_then(|v| v["kind"].as_str().map(String::from));
                Err(Error::Protocol(format!(
                    "`{}` is a response kind; expected {}",
                    kind.unwrap_or_default(),
                    self.expected()
                )))
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mixbo", version, about = "Mixed-variable batch Bayesian optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run the ablation over the builtin suite, or a single arm on one objective.
    Bench(BenchArgs),
    /// Drive an optimizer over line-delimited JSON on stdin/stdout.
    Serve(ServeArgs),
    /// Optimize an external program that reads a point on stdin and prints a value.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "builtin")]
    pub suite: String,
    /// Seed count (seeds 0..N) or a comma-separated seed list.
    #[arg(long, default_value = "10")]
    pub seeds: String,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Single arm: baseline, tuning, arp, full or random.
    #[arg(long)]
    pub arm: Option<String>,
    #[arg(long)]
    pub objective: Option<String>,
    /// Write measured wall time into traces.csv (makes it non-reproducible).
    #[arg(long)]
    pub record_wall_time: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Default optimizer config when `hello` carries none.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Shell command evaluated once per point.
    #[arg(long)]
    pub cmd: String,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

fn parse_seeds(s: &str) -> Option<Vec<u64>> {
    if s.contains(',') {
        s.split(',').map(|t| t.trim().parse().ok()).collect()
    } else {
        let n: u64 = s.trim().parse().ok()?;
        (n > 0).then(|| (0..n).collect())
    }
}

fn load_config(path: Option<&PathBuf>, seed: Option<u64>) -> Result<OptimizerConfig> {
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            OptimizerConfig::from_json(&text)?
        }
        None => OptimizerConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.check()?;
    Ok(config)
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if args.suite != "builtin" {
        let _ = writeln!(err, "error: unknown suite `{}` (available: builtin)", args.suite);
        return EXIT_USAGE;
    }
    let Some(seeds) = parse_seeds(&args.seeds) else {
        let _ = writeln!(err, "error: --seeds expects a positive count or a comma-separated list, got `{}`", args.seeds);
        return EXIT_USAGE;
    };
    let single = args.arm.is_some() || args.objective.is_some();
    let report = if single {
        let arm_name = args.arm.as_deref().unwrap_or("full");
        let Some(arm) = Arm::by_name(arm_name) else {
            let _ = writeln!(err, "error: unknown arm `{arm_name}` (available: baseline, tuning, arp, full, random)");
            return EXIT_USAGE;
        };
        let objectives = match &args.objective {
            Some(name) => match bench::objective_by_name(name) {
                Some(o) => vec![o],
                None => {
                    let names: Vec<String> = bench::builtin_objectives().into_iter().map(|o| o.name).collect();
                    let _ = writeln!(err, "error: unknown objective `{name}` (available: {})", names.join(", "));
                    return EXIT_USAGE;
                }
            },
            None => bench::builtin_suite(),
        };
        let mut report = bench::run_arms(std::slice::from_ref(&arm), &Arm::random(), &objectives, &seeds);
        if arm.name != "random" {
            report.traces.retain(|t| t.optimizer == arm.name);
        }
        report
    } else {
        bench::run_ablation(&seeds)
    };
    if let Err(e) = bench::write_report(&args.out, &report, args.record_wall_time) {
        let _ = writeln!(err, "error: {e}");
        return EXIT_FAILURE;
    }
    let _ = write!(out, "{}", report.table());
    let _ = writeln!(out, "{}", report.note);
    let _ = writeln!(out, "wrote {} and {}", args.out.join("traces.csv").display(), args.out.join("scores.json").display());
    if !report.failures.is_empty() {
        for f in &report.failures {
            let _ = writeln!(err, "study failed: {} / {} / seed {}: {}", f.optimizer, f.objective, f.seed, f.message);
        }
        return EXIT_FAILURE;
    }
    EXIT_OK
}

/// Serves one session until EOF.
pub fn cmd_serve(args: &ServeArgs, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let default = if args.config.is_some() || args.seed.is_some() {
        match load_config(args.config.as_ref(), args.seed) {
            Ok(c) => Some(c),
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return EXIT_USAGE;
            }
        }
    } else {
        None
    };
    let mut session = Session::new(default);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        match input.read_until(b'\n', &mut buf) {
            Ok(0) => return EXIT_OK,
            Ok(_) => {}
            Err(e) => {
                let _ = writeln!(err, "error: reading input: {e}");
                return EXIT_FAILURE;
            }
        }
        if let Some(resp) = session.handle_bytes(&buf) {
            if writeln!(out, "{}", resp.to_line()).and_then(|_| out.flush()).is_err() {
                return EXIT_FAILURE;
            }
        }
    }
}

/// Evaluates `point` with `sh -c cmd`, point JSON on stdin. Failures map to
/// `None`.
fn evaluate_external(cmd: &str, point: &Point) -> std::result::Result<f64, String> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| format!("cannot start program: {e}"))?;
    let json = serde_json::to_string(point).expect("points serialize");
    if let Some(mut stdin) = child.stdin.take() {
        // a program that ignores stdin may close it early
        let _ = writeln!(stdin, "{json}");
    }
    let output = child.wait_with_output().map_err(|e| format!("program failed: {e}"))?;
    if !output.status.success() {
        return Err(format!("program exited with {}", output.status));
    }
    let text = String::from_utf8_lossy(&output.stdout);
    let v: f64 = text.trim().parse().map_err(|_| format!("unparseable output `{}`", text.trim()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite value `{}`", text.trim()))
    }
}

#[derive(Debug, Serialize)]
struct RunResult {
    point: Point,
    value: Option<f64>,
    evaluations: usize,
    warnings: usize,
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let space = match fs::read_to_string(&args.space).map_err(|e| Error::Space(format!("{}: {e}", args.space.display())))
        .and_then(|t| SearchSpace::from_json(&t))
    {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let config = match load_config(args.config.as_ref(), args.seed) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let iterations = config.max_iterations;
    let mut opt = match Optimizer::new(space, config) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let mut warnings = 0;
    let mut evaluations = 0;
    for _ in 0..iterations {
        let result = opt.suggest().and_then(|points| {
            let values: Vec<f64> = points
                .iter()
                .map(|p| {
                    evaluations += 1;
                    evaluate_external(&args.cmd, p).unwrap_or_else(|msg| {
                        warnings += 1;
                        let _ = writeln!(err, "warning: evaluation {evaluations}: {msg}; recorded as +inf");
                        f64::INFINITY
                    })
                })
                .collect();
            opt.observe(&points, &values)
        });
        if let Err(e) = result {
            let _ = writeln!(err, "error: {e}");
            return EXIT_FAILURE;
        }
    }
    let (point, value) = match opt.best() {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_FAILURE;
        }
    };
    let result = RunResult { point, value: value.is_finite().then_some(value), evaluations, warnings };
    let _ = writeln!(out, "{}", serde_json::to_string(&result).expect("result serializes"));
    EXIT_OK
}

/// Parses `args` (including the program name) and dispatches; returns the
/// process exit code.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    match &cli.command {
        Cmd::Bench(a) => cmd_bench(a, out, err),
        Cmd::Serve(a) => cmd_serve(a, input, out, err),
        Cmd::Run(a) => cmd_run(a, out, err),
    }
}
