//! Command-line front end.
//!
//! Exit codes: 0 success, 1 malformed input or usage, 2 the instance is
//! outside the region or a verification step failed.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detour::{apply_best, find_mgc, DetourPlan};
use crate::model::{GainProfile, RateTuple, ReducedRateTuple};
use crate::reduction::{reduce, ReducedNetwork};
use crate::region::{eval_lemma1, eval_theorem1, eval_theorem2, sos_feasible, InequalityReport};
use crate::sim::{enumerate_verify, simulate_5node, EnumerationReport};
use crate::sos::{build_sos_schedule, LevelSchedule};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_REJECTED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "detrelay", version, about = "Deterministic 4-user relay network with relay messages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the 5-node capacity region.
    Check {
        #[arg(long)]
        input: PathBuf,
    },
    /// Serve the relay's streams and print the reduced 4-user network.
    Reduce {
        #[arg(long)]
        input: PathBuf,
    },
    /// Build the level schedule, with detours when needed.
    Schedule {
        #[arg(long)]
        input: PathBuf,
        /// Print the level table instead of JSON.
        #[arg(long)]
        text: bool,
    },
    /// Simulate the scheme bit by bit.
    Simulate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        rounds: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exhaustively verify the reduced network for small gains and rates.
    Enumerate {
        #[arg(long)]
        gain_max: u32,
        #[arg(long)]
        rate_max: u32,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Replay one of the two worked examples with reference values.
    Demo {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        example: u8,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: field `{field}`: {message}")]
    Field {
        path: String,
        field: &'static str,
        message: String,
    },
}

/// Input document: gains of the four users and the 20 rates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub uplink: [u32; 4],
    pub downlink: [u32; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RateTuple>,
    /// 20 rates in `(1,2), (1,3), ..., (5,4)` order, or the 12 user rates
    /// with every relay rate zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates_flat: Option<Vec<u32>>,
}

impl NetworkFile {
    pub fn gains(&self) -> GainProfile {
        GainProfile::new(self.uplink, self.downlink)
    }
}

pub fn parse_network(text: &str, path: &str) -> Result<(GainProfile, RateTuple), InputError> {
    let file: NetworkFile = serde_json::from_str(text).map_err(|e| InputError::Parse {
        path: path.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let field_err = |field, message: String| InputError::Field {
        path: path.to_string(),
        field,
        message,
    };
    let rates = match (&file.rates, &file.rates_flat) {
        (Some(r), None) => *r,
        (None, Some(flat)) => match flat.len() {
            20 => RateTuple::from_flat(flat).unwrap(),
            12 => ReducedRateTuple::from_flat(flat).unwrap().to_full(),
            n => return Err(field_err("rates_flat", format!("expected 20 or 12 values, got {n}"))),
        },
        (Some(_), Some(_)) => {
            return Err(field_err("rates", "give either `rates` or `rates_flat`, not both".into()));
        }
        (None, None) => return Err(field_err("rates", "missing (or give `rates_flat`)".into())),
    };
    Ok((file.gains(), rates))
}

fn load(path: &Path) -> Result<(GainProfile, RateTuple), InputError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| InputError::Io {
        path: shown.clone(),
        source,
    })?;
    parse_network(&text, &shown)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckRecord {
    pub in_region: bool,
    pub report: InequalityReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScheduleRecord {
    pub reduced: ReducedNetwork,
    pub plan: Option<DetourPlan>,
    pub schedule: LevelSchedule,
}

#[derive(Debug, Serialize, Deserialize)]
struct EnumerationRow {
    gain_max: u32,
    rate_max: u32,
    profiles: u64,
    evaluated: u64,
    members: u64,
    sos_direct: u64,
    detoured: u64,
    failures: u64,
    lemma1_mismatches: u64,
    exhausted: u64,
    non_decreasing_plans: u64,
    max_moves: u64,
}

impl From<&EnumerationReport> for EnumerationRow {
    fn from(r: &EnumerationReport) -> Self {
        Self {
            gain_max: r.gain_max,
            rate_max: r.rate_max,
            profiles: r.profiles,
            evaluated: r.evaluated,
            members: r.members,
            sos_direct: r.sos_direct,
            detoured: r.detoured,
            failures: r.failures,
            lemma1_mismatches: r.lemma1_mismatches,
            exhausted: r.exhausted,
            non_decreasing_plans: r.non_decreasing_plans,
            max_moves: r.max_moves,
        }
    }
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn json<T: Serialize>(&mut self, value: &T) -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut *self.out, value)?;
        writeln!(self.out)
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{rendered}")
            } else {
                write!(out, "{rendered}")
            };
            return code;
        }
    };
    let mut io = Io { out, err };
    match dispatch(cli.command, &mut io) {
        Ok(code) => code,
        Err(Failure::Input(e)) => {
            let _ = writeln!(io.err, "error: {e}");
            EXIT_INPUT
        }
        Err(Failure::Rejected(msg)) => {
            let _ = writeln!(io.err, "error: {msg}");
            EXIT_REJECTED
        }
        Err(Failure::Io(e)) => {
            let _ = writeln!(io.err, "error: {e}");
            EXIT_INPUT
        }
    }
}

enum Failure {
    Input(InputError),
    Rejected(String),
    Io(std::io::Error),
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        Failure::Input(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

fn rejected(e: impl fmt::Display) -> Failure {
    Failure::Rejected(e.to_string())
}

fn dispatch(command: Command, io: &mut Io) -> Result<i32, Failure> {
    match command {
        Command::Check { input } => {
            let (g, r) = load(&input)?;
            let report = eval_theorem1(&g, &r);
            let in_region = report.satisfied;
            io.json(&CheckRecord { in_region, report })?;
            Ok(if in_region { EXIT_OK } else { EXIT_REJECTED })
        }
        Command::Reduce { input } => {
            let (g, r) = load(&input)?;
            let reduced = reduce(&g, &r).map_err(rejected)?;
            io.json(&reduced)?;
            Ok(EXIT_OK)
        }
        Command::Schedule { input, text } => {
            let (g, r) = load(&input)?;
            let record = schedule(&g, &r)?;
            if text {
                if let Some(plan) = &record.plan {
                    for m in &plan.moves {
                        writeln!(io.out, "detour: {m}")?;
                    }
                    writeln!(io.out, "equivalent rates: {}", plan.equivalent)?;
                }
                write!(io.out, "{}", record.schedule.render())?;
            } else {
                io.json(&record)?;
            }
            Ok(EXIT_OK)
        }
        Command::Simulate { input, rounds, seed } => {
            let (g, r) = load(&input)?;
            let report = simulate_5node(&g, &r, rounds, seed).map_err(rejected)?;
            io.json(&report)?;
            Ok(if report.complete() { EXIT_OK } else { EXIT_REJECTED })
        }
        Command::Enumerate {
            gain_max,
            rate_max,
            jobs,
            format,
        } => {
            let report = match jobs {
                Some(j) => rayon::ThreadPoolBuilder::new()
                    .num_threads(j)
                    .build()
                    .map_err(|e| Failure::Rejected(e.to_string()))?
                    .install(|| enumerate_verify(gain_max, rate_max)),
                None => enumerate_verify(gain_max, rate_max),
            };
            emit_enumeration(&report, format, io)?;
            Ok(if report.passed() { EXIT_OK } else { EXIT_REJECTED })
        }
        Command::Demo { example } => demo(example, io),
    }
}

fn schedule(g: &GainProfile, r: &RateTuple) -> Result<ScheduleRecord, Failure> {
    if let Some(w) = eval_theorem1(g, r).worst().filter(|e| e.is_violated()) {
        return Err(Failure::Rejected(format!(
            "outside the capacity region: {} exceeded by {}",
            w.id,
            w.excess()
        )));
    }
    let reduced = reduce(g, r).map_err(rejected)?;
    let plan = apply_best(&reduced.gains, &reduced.rates).map_err(rejected)?;
    let schedule = build_sos_schedule(&reduced.gains, &plan.equivalent).map_err(rejected)?;
    Ok(ScheduleRecord {
        plan: (!plan.is_empty()).then_some(plan),
        reduced,
        schedule,
    })
}

fn emit_enumeration(report: &EnumerationReport, format: Format, io: &mut Io) -> Result<(), Failure> {
    match format {
        Format::Json => io.json(report)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *io.out);
            w.serialize(EnumerationRow::from(report))
                .map_err(|e| Failure::Rejected(e.to_string()))?;
            w.flush()?;
        }
        Format::Table => {
            let row = serde_json::to_value(EnumerationRow::from(report)).expect("plain record");
            for (k, v) in row.as_object().expect("record is an object") {
                writeln!(io.out, "{k:<22}{v}")?;
            }
            if let Some(f) = &report.first_failure {
                writeln!(io.out, "first failure: {} {} [{}] {}", f.gains, f.rates, f.kind, f.detail)?;
            }
        }
    }
    if let Some(f) = &report.first_failure {
        writeln!(io.err, "replay: {}", serde_json::to_string(f).expect("plain record"))?;
    }
    Ok(())
}

/// The two worked instances: 5-node gains and rates in 20-rate order.
pub fn example_instance(example: u8) -> (GainProfile, RateTuple) {
    let (up, down, flat): ([u32; 4], [u32; 4], [u32; 20]) = match example {
        1 => (
            [11, 5, 7, 1],
            [2, 8, 5, 11],
            [2, 0, 1, 2, 0, 2, 1, 1, 1, 0, 1, 0, 0, 0, 0, 1, 1, 1, 1, 1],
        ),
        2 => (
            [11, 10, 5, 3],
            [3, 6, 10, 11],
            [2, 1, 0, 1, 0, 2, 1, 0, 0, 0, 1, 1, 2, 0, 0, 1, 0, 2, 1, 1],
        ),
        _ => panic!("no example {example}"),
    };
    (GainProfile::new(up, down), RateTuple::from_flat(&flat).unwrap())
}

struct Demo<'a, 'b> {
    io: &'a mut Io<'b>,
    mismatches: usize,
}

impl Demo<'_, '_> {
    fn line(&mut self, label: &str, got: impl fmt::Display) -> std::io::Result<()> {
        writeln!(self.io.out, "{label:<34}{got}")
    }

    fn expect(&mut self, label: &str, got: impl fmt::Display, expected: impl fmt::Display) -> std::io::Result<()> {
        let (got, expected) = (got.to_string(), expected.to_string());
        let verdict = if got == expected {
            "ok"
        } else {
            self.mismatches += 1;
            "MISMATCH"
        };
        writeln!(self.io.out, "{label:<34}{got:<30}reference {expected:<26}{verdict}")
    }
}

fn edge_set(edges: impl Iterator<Item = crate::region::Edge>) -> String {
    let mut v: Vec<String> = edges.map(|e| e.to_string()).collect();
    v.sort();
    format!("{{{}}}", v.join(","))
}

fn demo(example: u8, io: &mut Io) -> Result<i32, Failure> {
    let (g, r) = example_instance(example);
    let mut d = Demo { io, mismatches: 0 };
    d.line("gains", g)?;
    d.line("rates", &r)?;
    d.expect("in capacity region", eval_theorem1(&g, &r).satisfied, true)?;
    let reduced = reduce(&g, &r).map_err(rejected)?;
    let red_g = reduced.gains;
    let up = crate::model::tuple(&red_g.uplink);
    let down = crate::model::tuple(&red_g.downlink);
    match example {
        1 => {
            d.expect("reduced uplink gains", &up, "(7,3,5,0)")?;
            d.line(
                "",
                "note: the reference listing gives 4 for node 2; reserved levels 5 and 1",
            )?;
            d.line("", "lie inside its reach of 5, so 3 levels remain free")?;
            d.expect("reduced downlink gains", &down, "(1,5,3,7)")?;
        }
        _ => {
            d.expect("reduced uplink gains", &up, "(8,8,3,2)")?;
            d.expect("reduced downlink gains", &down, "(3,4,7,7)")?;
        }
    }
    d.line("beta / gamma (raw)", format!(
        "{} ({}) / {} ({})",
        reduced.derivation.beta, reduced.derivation.beta_raw, reduced.derivation.gamma, reduced.derivation.gamma_raw
    ))?;
    let user_rates = reduced.rates;
    d.expect("4-user rates in region", eval_theorem2(&red_g, &user_rates).satisfied, true)?;
    d.expect("directly schedulable", sos_feasible(&red_g, &user_rates), false)?;
    let mgc = find_mgc(&red_g, &user_rates).map_err(rejected)?;
    let (excess, edges) = match example {
        1 => (1, "{12,14,23,24,31,34}"),
        _ => (2, "{12,13,23,24,34,41}"),
    };
    d.line("maximum gap condition", &mgc.condition.id)?;
    d.expect("  excess", mgc.excess, excess)?;
    d.expect("  edges", edge_set(mgc.condition.edges.iter().copied()), edges)?;
    let plan = apply_best(&red_g, &user_rates).map_err(rejected)?;
    for m in &plan.moves {
        d.line("detour", m)?;
    }
    if example == 1 {
        d.expect("equivalent rates", plan.equivalent, "(1,1,1,0,2,1,1,1,1,0,0,0)")?;
    } else {
        let reference = ReducedRateTuple::from_flat(&[2, 1, 1, 1, 2, 0, 1, 0, 1, 1, 0, 1]).unwrap();
        d.line("reference equivalent rates", reference)?;
        d.expect("  directly schedulable", sos_feasible(&red_g, &reference), true)?;
        d.line("equivalent rates", plan.equivalent)?;
    }
    d.expect(
        "  region and extra conditions",
        eval_theorem2(&red_g, &plan.equivalent).satisfied && eval_lemma1(&red_g, &plan.equivalent).satisfied,
        true,
    )?;
    d.expect("  per-stream delivery conserved", plan.conserves(), true)?;
    for rb in plan.routing_table() {
        d.line("  routed bit", format!("{} via {:?}, {} round(s) late", rb.bit, rb.path, rb.latency))?;
    }
    let schedule = build_sos_schedule(&red_g, &plan.equivalent).map_err(rejected)?;
    writeln!(d.io.out, "\nreduced-network level schedule:\n{}", schedule.render())?;
    let report = simulate_5node(&g, &r, 5, 1).map_err(rejected)?;
    d.line("5-round delivery (bits)", format!("{}/{}", report.delivered_bits, report.due_bits))?;
    d.expect("  delivered", format!("{:.0}%", report.delivery_ratio() * 100.0), "100%")?;
    d.expect("steady state at full rate", report.steady_state_ok(), true)?;
    let latency = report.streams.iter().map(|s| s.latency).max().unwrap_or(0);
    d.expect("detour latency (rounds)", latency, 1)?;
    Ok(if d.mismatches == 0 { EXIT_OK } else { EXIT_REJECTED })
}
