//! Subcommand execution and CSV output for the `v2i` binary.
//!
//! Every output starts with `#` metadata lines (tool version, scenario hash,
//! seed, and the resolved scenario), followed by a CSV header and rows in a
//! deterministic order. Nothing time-dependent is written, so identical
//! inputs produce byte-identical files.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optimize::{optimize_retry, OptimizationResult};
use crate::pipeline::{evaluate_stations, Metrics, Model};
use crate::scenario::Scenario;
use crate::sim::{compare, run_simulation, ComparisonTable, SimReport, Tolerances};
use crate::traffic::KMH_TO_MS;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Solve,
    Sweep,
    Optimize,
    Simulate,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Optimize => "optimize",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// `compare` finished but at least one gated metric was out of tolerance.
    ToleranceExceeded,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Done => EXIT_OK,
            Outcome::ToleranceExceeded => EXIT_TOLERANCE,
        }
    }
}

pub fn exit_code_for(err: &Error) -> i32 {
    if err.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_NUMERIC
    }
}

/// Applies command-line overrides so the echoed scenario shows them.
pub fn apply_overrides(sc: &mut Scenario, seed: Option<u64>, tolerance_pct: Option<f64>) -> Result<()> {
    if let Some(seed) = seed {
        sc.sim.seed = seed;
    }
    if let Some(t) = tolerance_pct {
        sc.sim.tolerance_pct = t;
    }
    sc.validate()
}

const METRIC_COLUMNS: [&str; 17] = [
    "v_kmh",
    "k_veh_km",
    "lambda_tag_veh_s",
    "n_mean",
    "n",
    "tau",
    "p_c",
    "p_tran",
    "p_s",
    "e_t_slot_s",
    "rho",
    "p_b",
    "s_bps",
    "s_classic_bps",
    "t_delay_s",
    "t_delay_weighted_s",
    "s_clamped",
];

/// Shortest round-trip form; switches to scientific notation at the extremes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn metric_fields(model: &Model, m: &Metrics) -> Vec<String> {
    let clamped = m.throughput >= model.mac.channel_rate;
    [
        model.speed / KMH_TO_MS,
        m.density * 1000.0,
        m.flow,
        m.n_mean,
        m.stations,
        m.tau,
        m.p_c,
        m.p_tran,
        m.p_s,
        m.mean_slot,
        m.rho,
        m.p_block,
        m.throughput,
        m.throughput_classic,
        m.t_delay,
        m.t_delay_weighted,
    ]
    .iter()
    .map(|&x| num(x))
    .chain(std::iter::once(clamped.to_string()))
    .collect()
}

fn write_metadata(out: &mut dyn Write, cmd: Command, sc: &Scenario) -> Result<()> {
    writeln!(out, "# v2i {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "# command: {}", cmd.name())?;
    writeln!(out, "# scenario_hash: {}", sc.hash())?;
    writeln!(out, "# seed: {}", sc.sim.seed)?;
    writeln!(out, "# scenario:")?;
    for line in sc.echo().lines() {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

/// Extracts the echoed scenario from an output's metadata block.
pub fn scenario_from_output(text: &str) -> Result<Scenario> {
    let body: String = text
        .lines()
        .skip_while(|l| *l != "# scenario:")
        .skip(1)
        .map_while(|l| l.strip_prefix("# "))
        .flat_map(|l| [l, "\n"])
        .collect();
    Scenario::parse(&body)
}

type Table = (Vec<String>, Vec<Vec<String>>);

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn write_table(out: &mut dyn Write, (header, rows): Table) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn solve_table(sc: &Scenario) -> Result<Table> {
    let model = sc.model()?;
    let metrics = model.evaluate()?;
    let mut header: Vec<String> = METRIC_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.push("m".into());
    let mut row = metric_fields(&model, &metrics);
    row.push(model.mac.max_stage.to_string());
    Ok((header, vec![row]))
}

fn sweep_table(sc: &Scenario) -> Result<Table> {
    let var = sc
        .sweep
        .variable
        .clone()
        .ok_or_else(|| Error::UnitViolation("sweep needs [sweep] variable".into()))?;
    let values = sc.sweep_values();
    let points = values
        .iter()
        .map(|&v| sc.at_sweep_value(v))
        .collect::<Result<Vec<_>>>()?;
    let optimize = sc.sweep.optimize_m;
    let rows = points
        .par_iter()
        .zip(values.par_iter())
        .map(|(point, &value)| -> Result<Vec<String>> {
            let mut row = vec![num(value)];
            if optimize {
                let req = point.optimization_request()?;
                let res = optimize_retry(&req)?;
                let mut model = req.model;
                model.mac.max_stage = res.m_star;
                row.extend(metric_fields(&model, &res.best().metrics));
                row.push(res.m_star.to_string());
                row.push(res.feasible.to_string());
            } else {
                let model = point.model()?;
                row.extend(metric_fields(&model, &model.evaluate()?));
                row.push(model.mac.max_stage.to_string());
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut header = vec![var];
    header.extend(METRIC_COLUMNS.iter().map(|s| s.to_string()));
    if optimize {
        header.push("m_star".into());
        header.push("feasible".into());
    } else {
        header.push("m".into());
    }
    Ok((header, rows))
}

pub fn optimize_table(res: &OptimizationResult, model: &Model) -> Table {
    let mut header = vec!["row".to_string(), "m".into(), "feasible".into()];
    header.extend(METRIC_COLUMNS.iter().map(|s| s.to_string()));
    let render = |label: &str, r: &crate::optimize::RetryRow| {
        let mut model = *model;
        model.mac.max_stage = r.m;
        let mut row = vec![label.to_string(), r.m.to_string(), r.feasible.to_string()];
        row.extend(metric_fields(&model, &r.metrics));
        row
    };
    let mut rows: Vec<Vec<String>> = res.per_m.iter().map(|r| render("per_m", r)).collect();
    let mut best = render("m_star", res.best());
    // the m_star row reports whether the search as a whole was feasible
    best[2] = res.feasible.to_string();
    rows.push(best);
    (header, rows)
}

pub fn simulate_table(rep: &SimReport) -> Table {
    let header = [
        "n",
        "cw_min",
        "m",
        "horizon_slots",
        "replications",
        "seed",
        "tau_hat",
        "tau_ci95",
        "pc_hat",
        "pc_ci95",
        "throughput_bps",
        "throughput_ci95",
        "delay_s",
        "delay_ci95",
        "discard_rate",
        "discard_ci95",
    ];
    let c = &rep.config;
    let mut row = vec![
        c.n.to_string(),
        c.mac.cw_min.to_string(),
        c.mac.max_stage.to_string(),
        c.horizon_slots.to_string(),
        c.replications.to_string(),
        c.seed.to_string(),
    ];
    for e in [&rep.tau_hat, &rep.pc_hat, &rep.throughput_hat, &rep.delay_hat, &rep.discard_rate] {
        row.push(num(e.mean));
        row.push(num(e.ci95));
    }
    (header.iter().map(|s| s.to_string()).collect(), vec![row])
}

pub fn compare_table(table: &ComparisonTable) -> Table {
    let header = ["metric", "analytic", "simulated", "ci95", "rel_error", "tolerance", "pass"];
    let rows = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.metric.to_string(),
                num(r.analytic),
                num(r.simulated),
                num(r.ci95),
                num(r.rel_error),
                r.tolerance.map_or("none".into(), num),
                r.pass.to_string(),
            ]
        })
        .collect();
    (header.iter().map(|s| s.to_string()).collect(), rows)
}

/// Tolerances used by `compare` for a scenario.
pub fn scenario_tolerances(sc: &Scenario) -> Tolerances {
    Tolerances::uniform(sc.sim.tolerance_pct / 100.0)
}

/// Runs the model and the simulator on the scenario's point-mode station
/// count and lines them up.
pub fn compare_scenario(sc: &Scenario) -> Result<ComparisonTable> {
    let cfg = sc.sim_config()?;
    let model = sc.model()?;
    let report = run_simulation(&cfg)?;
    let ev = evaluate_stations(cfg.n, &cfg.mac, &model.queue, model.tolerance)?;
    compare(&report, &ev.fixed_point, &ev.perf, &scenario_tolerances(sc))
}

/// Runs one subcommand and writes its CSV (with metadata) to `out`.
pub fn run(cmd: Command, sc: &Scenario, out: &mut dyn Write) -> Result<Outcome> {
    let mut outcome = Outcome::Done;
    let table = match cmd {
        Command::Solve => solve_table(sc)?,
        Command::Sweep => sweep_table(sc)?,
        Command::Optimize => {
            let req = sc.optimization_request()?;
            optimize_table(&optimize_retry(&req)?, &req.model)
        }
        Command::Simulate => simulate_table(&run_simulation(&sc.sim_config()?)?),
        Command::Compare => {
            let table = compare_scenario(sc)?;
            if !table.passed() {
                outcome = Outcome::ToleranceExceeded;
            }
            compare_table(&table)
        }
    };
    write_metadata(out, cmd, sc)?;
    write_table(out, table)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_to_string(cmd: Command, sc: &Scenario) -> (Outcome, String) {
        let mut buf = Vec::new();
        let outcome = run(cmd, sc, &mut buf).unwrap();
        (outcome, String::from_utf8(buf).unwrap())
    }

    fn rows(text: &str) -> Vec<Vec<String>> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        r.records()
            .map(|rec| rec.unwrap().iter().map(String::from).collect())
            .collect()
    }

    #[test]
    fn solve_single_station_has_zero_collisions() {
        let sc = Scenario::parse("[traffic]\nn_stations = 1\n").unwrap();
        let (_, text) = run_to_string(Command::Solve, &sc);
        let r = rows(&text);
        assert_eq!(r.len(), 1);
        let p_c = METRIC_COLUMNS.iter().position(|c| *c == "p_c").unwrap();
        assert_eq!(r[0][p_c], "0.0");
    }

    #[test]
    fn metadata_echo_round_trips() {
        let sc = Scenario::parse("[mac]\ncw_min = 64\n[sim]\nseed = 99\n").unwrap();
        let (_, text) = run_to_string(Command::Solve, &sc);
        assert!(text.starts_with("# v2i "));
        assert!(text.contains(&format!("# scenario_hash: {}", sc.hash())));
        assert!(text.contains("# seed: 99"));
        assert_eq!(scenario_from_output(&text).unwrap(), sc);
    }

    #[test]
    fn sweep_without_variable_is_usage_error() {
        let err = run(Command::Sweep, &Scenario::default(), &mut Vec::new()).unwrap_err();
        assert_eq!(exit_code_for(&err), EXIT_USAGE);
    }

    #[test]
    fn optimize_lists_every_m_and_the_choice() {
        let sc = Scenario::parse("[mac]\nm_min = 2\nm_max = 6\n").unwrap();
        let (_, text) = run_to_string(Command::Optimize, &sc);
        let r = rows(&text);
        assert_eq!(r.len(), 6);
        assert!(r[..5].iter().all(|row| row[0] == "per_m"));
        assert_eq!(r[5][0], "m_star");
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code_for(&Error::Convergence("x".into())), EXIT_NUMERIC);
        assert_eq!(exit_code_for(&Error::DegenerateDenominator), EXIT_NUMERIC);
        assert_eq!(exit_code_for(&Error::UnitViolation("x".into())), EXIT_USAGE);
        assert_eq!(Outcome::ToleranceExceeded.exit_code(), EXIT_TOLERANCE);
    }

    #[test]
    fn overrides_show_up_in_echo() {
        let mut sc = Scenario::default();
        apply_overrides(&mut sc, Some(42), Some(2.5)).unwrap();
        assert_eq!(sc.sim.seed, 42);
        assert_eq!(sc.sim.tolerance_pct, 2.5);
        assert!(apply_overrides(&mut sc, None, Some(-1.0)).is_err());
    }
}
