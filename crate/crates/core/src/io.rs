//! Scenario generation and the on-disk formats: scenario and dataset files
//! (JSON with a `schema_version`), result CSVs and report series.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{PassError, Result};
use crate::model::{dbm_to_watts, BetaConvention, Scenario, SPEED_OF_LIGHT};

pub const SCHEMA_VERSION: u32 = 1;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-scenario seed `splitmix64(master ⊕ splitmix64(index))`.
pub fn scenario_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index))
}

/// Generation parameters; defaults are the reference simulation constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    pub n_users: usize,
    pub pas_per_waveguide: usize,
    pub span_x: f64,
    pub span_y: f64,
    pub pass_height: f64,
    pub carrier_freq: f64,
    pub refractive_index: f64,
    pub beta_convention: BetaConvention,
    pub max_power_dbm: f64,
    pub noise_power_dbm: f64,
    /// Meters; half a free-space wavelength when absent.
    pub min_spacing: Option<f64>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n_users: 2,
            pas_per_waveguide: 4,
            span_x: 20.0,
            span_y: 10.0,
            pass_height: 2.5,
            carrier_freq: 30e9,
            refractive_index: 1.4,
            beta_convention: BetaConvention::PaperLinear,
            max_power_dbm: 10.0,
            noise_power_dbm: -90.0,
            min_spacing: None,
        }
    }
}

impl ScenarioParams {
    pub fn min_spacing(&self) -> f64 {
        self.min_spacing
            .unwrap_or(0.5 * SPEED_OF_LIGHT / self.carrier_freq)
    }

    /// Scenario with the given user positions and evenly spread waveguides
    /// at `y_n = (n + 1/2) S_y / N`.
    pub fn build(&self, users: Vec<[f64; 2]>) -> Result<Scenario> {
        let n = self.n_users;
        let s = Scenario {
            n_waveguides: n,
            n_users: n,
            pas_per_waveguide: self.pas_per_waveguide,
            span_x: self.span_x,
            span_y: self.span_y,
            pass_height: self.pass_height,
            carrier_freq: self.carrier_freq,
            refractive_index: self.refractive_index,
            beta_convention: self.beta_convention,
            max_power: dbm_to_watts(self.max_power_dbm),
            noise_power: dbm_to_watts(self.noise_power_dbm),
            min_spacing: self.min_spacing(),
            waveguide_y: (0..n)
                .map(|i| (i as f64 + 0.5) * self.span_y / n as f64)
                .collect(),
            users,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.max_power_dbm.is_finite() || !self.noise_power_dbm.is_finite() {
            return Err(PassError::InvalidInput(
                "power levels must be finite".into(),
            ));
        }
        let probe = vec![[0.0, 0.0]; self.n_users];
        self.build(probe).map(|_| ())
    }
}

/// One generated scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub id: String,
    pub index: u64,
    pub seed: u64,
    pub scenario: Scenario,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub master_seed: u64,
    pub params: ScenarioParams,
    pub scenarios: Vec<ScenarioEntry>,
}

/// Scenario `index` of a batch: users i.i.d. uniform over the area, drawn as
/// `(x, y)` pairs in user order from a ChaCha20 stream seeded with
/// [`scenario_seed`].
pub fn gen_scenario(
    params: &ScenarioParams,
    master_seed: u64,
    index: u64,
) -> Result<ScenarioEntry> {
    let seed = scenario_seed(master_seed, index);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let users = (0..params.n_users)
        .map(|_| {
            let x = rng.random::<f64>() * params.span_x;
            let y = rng.random::<f64>() * params.span_y;
            [x, y]
        })
        .collect();
    Ok(ScenarioEntry {
        id: format!("s{index:05}"),
        index,
        seed,
        scenario: params.build(users)?,
    })
}

pub fn gen_scenarios(
    count: usize,
    params: &ScenarioParams,
    master_seed: u64,
) -> Result<ScenarioFile> {
    params.validate()?;
    let scenarios = (0..count as u64)
        .map(|i| gen_scenario(params, master_seed, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioFile {
        schema_version: SCHEMA_VERSION,
        master_seed,
        params: params.clone(),
        scenarios,
    })
}

fn check_version(found: u32, what: &str) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(PassError::Schema(format!(
            "{what} has schema_version {found}, expected {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

pub fn write_json<T: Serialize, P: AsRef<Path>>(value: &T, path: P) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned, P: AsRef<Path>>(path: P) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn read_scenario_file<P: AsRef<Path>>(path: P) -> Result<ScenarioFile> {
    let f: ScenarioFile = read_json(path)?;
    check_version(f.schema_version, "scenario file")?;
    for e in &f.scenarios {
        e.scenario.validate()?;
    }
    Ok(f)
}

/// Flat trainer record: features `z = [x_1..x_K, y_1..y_K]` followed by the
/// scenario constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub scenario_id: String,
    pub seed: u64,
    pub z: Vec<f64>,
    pub n_waveguides: usize,
    pub n_users: usize,
    pub pas_per_waveguide: usize,
    pub span_x: f64,
    pub span_y: f64,
    pub pass_height: f64,
    pub carrier_freq: f64,
    pub refractive_index: f64,
    pub beta_convention: BetaConvention,
    pub path_gain_beta: f64,
    pub max_power: f64,
    pub noise_power: f64,
    pub min_spacing: f64,
    pub waveguide_y: Vec<f64>,
}

impl DatasetRecord {
    pub fn from_entry(e: &ScenarioEntry) -> Self {
        let s = &e.scenario;
        let mut z: Vec<f64> = s.users.iter().map(|u| u[0]).collect();
        z.extend(s.users.iter().map(|u| u[1]));
        Self {
            scenario_id: e.id.clone(),
            seed: e.seed,
            z,
            n_waveguides: s.n_waveguides,
            n_users: s.n_users,
            pas_per_waveguide: s.pas_per_waveguide,
            span_x: s.span_x,
            span_y: s.span_y,
            pass_height: s.pass_height,
            carrier_freq: s.carrier_freq,
            refractive_index: s.refractive_index,
            beta_convention: s.beta_convention,
            path_gain_beta: s.path_gain_beta(),
            max_power: s.max_power,
            noise_power: s.noise_power,
            min_spacing: s.min_spacing,
            waveguide_y: s.waveguide_y.clone(),
        }
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        let k = self.n_users;
        if self.z.len() != 2 * k {
            return Err(PassError::Schema(format!(
                "record {} has {} features, expected {}",
                self.scenario_id,
                self.z.len(),
                2 * k
            )));
        }
        let s = Scenario {
            n_waveguides: self.n_waveguides,
            n_users: k,
            pas_per_waveguide: self.pas_per_waveguide,
            span_x: self.span_x,
            span_y: self.span_y,
            pass_height: self.pass_height,
            carrier_freq: self.carrier_freq,
            refractive_index: self.refractive_index,
            beta_convention: self.beta_convention,
            max_power: self.max_power,
            noise_power: self.noise_power,
            min_spacing: self.min_spacing,
            waveguide_y: self.waveguide_y.clone(),
            users: (0..k).map(|i| [self.z[i], self.z[k + i]]).collect(),
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub schema_version: u32,
    pub feature_layout: String,
    pub records: Vec<DatasetRecord>,
}

pub const FEATURE_LAYOUT: &str = "x_1..x_K (ascending user index), then y_1..y_K";

pub fn export_dataset(file: &ScenarioFile) -> DatasetFile {
    DatasetFile {
        schema_version: SCHEMA_VERSION,
        feature_layout: FEATURE_LAYOUT.to_string(),
        records: file
            .scenarios
            .iter()
            .map(DatasetRecord::from_entry)
            .collect(),
    }
}

pub fn read_dataset_file<P: AsRef<Path>>(path: P) -> Result<DatasetFile> {
    let f: DatasetFile = read_json(path)?;
    check_version(f.schema_version, "dataset file")?;
    Ok(f)
}

/// Solver methods recorded in result files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mmpdd,
    KdlSearch,
    FdMimo,
    Uniform,
    Oracle,
    Transformer,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mmpdd => "mmpdd",
            Method::KdlSearch => "kdl_search",
            Method::FdMimo => "fd_mimo",
            Method::Uniform => "uniform",
            Method::Oracle => "oracle",
            Method::Transformer => "transformer",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = PassError;

    /// Accepts the recorded names and their hyphenated forms.
    fn from_str(s: &str) -> Result<Self> {
        let all = [
            Method::Mmpdd,
            Method::KdlSearch,
            Method::FdMimo,
            Method::Uniform,
            Method::Oracle,
            Method::Transformer,
        ];
        let name = s.replace('-', "_");
        all.into_iter()
            .find(|m| m.as_str() == name)
            .ok_or_else(|| PassError::InvalidInput(format!("unknown method {s:?}")))
    }
}

/// One row of a result CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario_id: String,
    pub seed: u64,
    pub method: Method,
    pub sum_rate: f64,
    /// Per-user rates joined with `;`.
    pub per_user_rates: String,
    pub wall_time_s: f64,
    pub converged: bool,
    pub residual_inf: f64,
    pub iterations: usize,
    pub p_dbm: f64,
    pub n_users: usize,
    #[serde(rename = "L")]
    pub pas_per_waveguide: usize,
    pub span_x: f64,
    /// Empty unless the solve failed.
    pub error: String,
}

pub fn join_rates(rates: &[f64]) -> String {
    rates
        .iter()
        .map(|r| format!("{r:?}"))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn split_rates(s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| PassError::Schema(format!("bad per-user rate {t:?}: {e}")))
        })
        .collect()
}

pub const RECORD_HEADER: [&str; 14] = [
    "scenario_id",
    "seed",
    "method",
    "sum_rate",
    "per_user_rates",
    "wall_time_s",
    "converged",
    "residual_inf",
    "iterations",
    "p_dbm",
    "n_users",
    "L",
    "span_x",
    "error",
];

pub fn write_records<W: Write>(records: &[RunRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if records.is_empty() {
        w.write_record(RECORD_HEADER)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_reader(reader);
    let header = rd.headers()?.clone();
    if header.iter().ne(RECORD_HEADER.iter().copied()) {
        return Err(PassError::Schema(format!(
            "unexpected result header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    rd.deserialize()
        .map(|r| r.map_err(PassError::from))
        .collect()
}

/// Independent variable of a report series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportAxis {
    PDbm,
    L,
    SpanX,
    NUsers,
}

impl ReportAxis {
    fn value(&self, r: &RunRecord) -> f64 {
        match self {
            ReportAxis::PDbm => r.p_dbm,
            ReportAxis::L => r.pas_per_waveguide as f64,
            ReportAxis::SpanX => r.span_x,
            ReportAxis::NUsers => r.n_users as f64,
        }
    }
}

/// One point of a report series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub method: Method,
    pub x: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Mean and population standard deviation of the sum rate per
/// `(method, axis value)`, skipping failed rows; ordered by method then x.
pub fn report(records: &[RunRecord], axis: ReportAxis) -> Vec<SeriesPoint> {
    let mut groups: BTreeMap<(Method, u64), (f64, Vec<f64>)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.error.is_empty()) {
        let x = axis.value(r);
        // Order-preserving key for finite floats.
        let bits = x.to_bits();
        let key = if x >= 0.0 { bits | (1 << 63) } else { !bits };
        groups
            .entry((r.method, key))
            .or_insert((x, Vec::new()))
            .1
            .push(r.sum_rate);
    }
    groups
        .into_iter()
        .map(|((method, _), (x, v))| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            SeriesPoint {
                method,
                x,
                mean,
                std: var.sqrt(),
                count: v.len(),
            }
        })
        .collect()
}

pub fn write_series<W: Write>(points: &[SeriesPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if points.is_empty() {
        w.write_record(["method", "x", "mean", "std", "count"])?;
    }
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
