//! Seeded batch execution over scenario files and scoring of externally
//! supplied solutions.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fd_channel_rows, fd_wmmse, grid_oracle, uniform_pass};
use crate::error::{PassError, Result};
use crate::io::{
    join_rates, read_json, Method, RunRecord, ScenarioEntry, ScenarioFile, SCHEMA_VERSION,
};
use crate::kkt::{dual_search, KktParams, SearchConfig};
use crate::mmpdd::{self, SolverConfig, TraceRow};
use crate::model::{
    check_feasibility, rates_from_rows, watts_to_dbm, Placement, Scenario, TransmitBeam, C64,
};

/// Solver settings for a batch; omitted fields take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    pub method: Method,
    pub solver: SolverConfig,
    pub search: SearchConfig,
    /// Grid step of the oracle in meters.
    pub oracle_resolution: f64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self::new(Method::Mmpdd)
    }
}

impl BatchConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            solver: SolverConfig::default(),
            search: SearchConfig::default(),
            oracle_resolution: 1e-3,
        }
    }
}

/// Placement and beamformer of one solved scenario. The beam is `N_t × K`
/// with entries stored as `[re, im]`; `placement` is absent for the fixed
/// feed array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionEntry {
    pub scenario_id: String,
    pub method: Method,
    pub placement: Option<Vec<Vec<f64>>>,
    pub beam: Vec<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub schema_version: u32,
    pub entries: Vec<SolutionEntry>,
}

/// KKT parameters per scenario, as produced by a learner or `kdl-search`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktEntry {
    pub scenario_id: String,
    pub params: KktParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktFile {
    pub schema_version: u32,
    pub entries: Vec<KktEntry>,
}

pub fn beam_to_pairs(beam: &TransmitBeam) -> Vec<Vec<[f64; 2]>> {
    (0..beam.d.nrows())
        .map(|n| {
            (0..beam.d.ncols())
                .map(|k| [beam.d[(n, k)].re, beam.d[(n, k)].im])
                .collect()
        })
        .collect()
}

pub fn beam_from_pairs(pairs: &[Vec<[f64; 2]>]) -> Result<TransmitBeam> {
    let rows = pairs.len();
    let cols = pairs.first().map_or(0, |r| r.len());
    if pairs.iter().any(|r| r.len() != cols) {
        return Err(PassError::InvalidInput(
            "beam rows have unequal lengths".into(),
        ));
    }
    Ok(TransmitBeam::new(DMatrix::from_fn(rows, cols, |n, k| {
        C64::new(pairs[n][k][0], pairs[n][k][1])
    })))
}

/// Outcome of one scenario: the CSV row plus the solution when one exists.
#[derive(Clone, Debug)]
pub struct BatchItem {
    pub record: RunRecord,
    pub solution: Option<SolutionEntry>,
    pub kkt: Option<KktEntry>,
    /// Outer-iteration trace of MM-PDD runs.
    pub trace: Option<Vec<TraceRow>>,
}

fn base_record(entry: &ScenarioEntry, method: Method) -> RunRecord {
    let s = &entry.scenario;
    RunRecord {
        scenario_id: entry.id.clone(),
        seed: entry.seed,
        method,
        sum_rate: f64::NAN,
        per_user_rates: String::new(),
        wall_time_s: 0.0,
        converged: false,
        residual_inf: f64::NAN,
        iterations: 0,
        p_dbm: round_dbm(watts_to_dbm(s.max_power)),
        n_users: s.n_users,
        pas_per_waveguide: s.pas_per_waveguide,
        span_x: s.span_x,
        error: String::new(),
    }
}

/// dBm values come from a round trip through watts; snap to 1e-9 dB.
fn round_dbm(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

struct Solved {
    placement: Option<Placement>,
    beam: TransmitBeam,
    rates: Vec<f64>,
    converged: bool,
    residual_inf: f64,
    iterations: usize,
    kkt: Option<KktParams>,
    trace: Option<Vec<TraceRow>>,
}

fn solve_entry(entry: &ScenarioEntry, config: &BatchConfig) -> Result<Solved> {
    let s = &entry.scenario;
    Ok(match config.method {
        Method::Mmpdd => {
            let out = mmpdd::solve(s, &config.solver)?;
            Solved {
                converged: out.converged(),
                residual_inf: out.residual_inf,
                iterations: out.outer_iterations,
                placement: Some(out.placement),
                beam: out.beam,
                rates: out.rates,
                kkt: None,
                trace: Some(out.trace),
            }
        }
        Method::KdlSearch => {
            let out = dual_search(s, &config.search, entry.seed)?;
            Solved {
                converged: true,
                residual_inf: 0.0,
                iterations: out.evaluations,
                placement: Some(out.placement),
                beam: out.beam,
                rates: out.rates,
                kkt: Some(out.params),
                trace: None,
            }
        }
        Method::FdMimo => {
            let out = fd_wmmse(s)?;
            Solved {
                converged: out.converged,
                residual_inf: 0.0,
                iterations: out.iterations,
                placement: None,
                beam: out.beam,
                rates: out.rates,
                kkt: None,
                trace: None,
            }
        }
        Method::Uniform | Method::Oracle => {
            let out = if config.method == Method::Uniform {
                uniform_pass(s)?
            } else {
                grid_oracle(s, config.oracle_resolution)?
            };
            Solved {
                converged: out.converged,
                residual_inf: 0.0,
                iterations: out.iterations,
                placement: Some(out.placement),
                beam: out.beam,
                rates: out.rates,
                kkt: None,
                trace: None,
            }
        }
        Method::Transformer => {
            return Err(PassError::InvalidInput(
                "transformer outputs are scored with eval, not solved".into(),
            ))
        }
    })
}

/// Solves every scenario with the configured method. Scenarios run in
/// parallel; output order follows the file, and failures become rows with a
/// non-empty `error` field.
pub fn run_batch(file: &ScenarioFile, config: &BatchConfig) -> Vec<BatchItem> {
    file.scenarios
        .par_iter()
        .map(|entry| {
            let mut record = base_record(entry, config.method);
            let start = Instant::now();
            let result = solve_entry(entry, config);
            record.wall_time_s = start.elapsed().as_secs_f64();
            match result {
                Ok(sol) => {
                    record.sum_rate = sol.rates.iter().sum();
                    record.per_user_rates = join_rates(&sol.rates);
                    record.converged = sol.converged;
                    record.residual_inf = sol.residual_inf;
                    record.iterations = sol.iterations;
                    let solution = SolutionEntry {
                        scenario_id: entry.id.clone(),
                        method: config.method,
                        placement: sol.placement.as_ref().map(Placement::to_rows),
                        beam: beam_to_pairs(&sol.beam),
                    };
                    let kkt = sol.kkt.map(|params| KktEntry {
                        scenario_id: entry.id.clone(),
                        params,
                    });
                    BatchItem {
                        record,
                        solution: Some(solution),
                        kkt,
                        trace: sol.trace,
                    }
                }
                Err(err) => {
                    record.error = err.to_string();
                    BatchItem {
                        record,
                        solution: None,
                        kkt: None,
                        trace: None,
                    }
                }
            }
        })
        .collect()
}

/// Sum rate of `(X, D)` after a feasibility check, or of the fixed feed
/// array when `placement` is `None`.
pub fn score_solution(
    scenario: &Scenario,
    placement: Option<&Placement>,
    beam: &TransmitBeam,
) -> Result<Vec<f64>> {
    let rows = match placement {
        Some(p) => {
            let violations = check_feasibility(scenario, p, beam);
            if !violations.is_empty() {
                return Err(PassError::InvalidInput(format!(
                    "infeasible solution: {violations:?}"
                )));
            }
            crate::model::effective_channel(scenario, p)?.rows
        }
        None => {
            if beam.d.shape() != (scenario.n_pas(), scenario.n_users) {
                return Err(PassError::InvalidInput(
                    "beam shape does not match the feed array".into(),
                ));
            }
            if beam.power() > scenario.max_power + crate::model::FEASIBILITY_TOL {
                return Err(PassError::InvalidInput(
                    "beam exceeds the power budget".into(),
                ));
            }
            fd_channel_rows(scenario)?
        }
    };
    Ok(rates_from_rows(&rows, beam, scenario.noise_power).rates)
}

fn find<'a>(file: &'a ScenarioFile, id: &str) -> Result<&'a ScenarioEntry> {
    file.scenarios
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| PassError::InvalidInput(format!("scenario {id:?} not in the scenario file")))
}

fn scored_record(entry: &ScenarioEntry, method: Method, rates: Result<Vec<f64>>) -> RunRecord {
    let mut record = base_record(entry, method);
    match rates {
        Ok(rates) => {
            record.sum_rate = rates.iter().sum();
            record.per_user_rates = join_rates(&rates);
            record.converged = true;
            record.residual_inf = 0.0;
        }
        Err(err) => record.error = err.to_string(),
    }
    record
}

/// Scores a solution file against its scenarios, one row per entry.
pub fn eval_solutions(file: &ScenarioFile, solutions: &SolutionFile) -> Result<Vec<RunRecord>> {
    check_version(solutions.schema_version)?;
    solutions
        .entries
        .iter()
        .map(|sol| {
            let entry = find(file, &sol.scenario_id)?;
            let rates = (|| {
                let beam = beam_from_pairs(&sol.beam)?;
                let placement = sol
                    .placement
                    .as_deref()
                    .map(Placement::from_rows)
                    .transpose()?;
                score_solution(&entry.scenario, placement.as_ref(), &beam)
            })();
            Ok(scored_record(entry, sol.method, rates))
        })
        .collect()
}

/// Decodes and scores KKT parameters, one row per entry.
pub fn eval_kkt(file: &ScenarioFile, kkt: &KktFile, method: Method) -> Result<Vec<RunRecord>> {
    check_version(kkt.schema_version)?;
    kkt.entries
        .iter()
        .map(|k| {
            let entry = find(file, &k.scenario_id)?;
            let rates = k
                .params
                .solution(&entry.scenario)
                .and_then(|(p, b)| score_solution(&entry.scenario, Some(&p), &b));
            Ok(scored_record(entry, method, rates))
        })
        .collect()
}

fn check_version(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(PassError::Schema(format!(
            "schema_version {v} is not supported (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

/// Either kind of solution file, told apart by its entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EvalInput {
    Solutions(SolutionFile),
    Kkt(KktFile),
}

pub fn read_eval_input<P: AsRef<Path>>(path: P) -> Result<EvalInput> {
    read_json(path)
}
