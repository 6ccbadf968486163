//! C-MAPSS text format: 26 whitespace-separated columns per row (unit, cycle,
//! three operational settings, 21 sensors), plus one-integer-per-line RUL
//! files for the test split.

use std::fmt::{self, Write as _};
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_SETTINGS: usize = 3;
pub const NUM_SENSORS: usize = 21;
pub const NUM_COLUMNS: usize = 2 + NUM_SETTINGS + NUM_SENSORS;

/// Sensor mnemonics in column order.
pub const SENSOR_NAMES: [&str; NUM_SENSORS] = [
    "T2", "T24", "T30", "T50", "P2", "P15", "P30", "Nf", "Nc", "epr", "Ps30", "phi", "NRf",
    "NRc", "BPR", "farB", "htBleed", "Nf_dmd", "PCNfR_dmd", "W31", "W32",
];

#[derive(Clone, Debug, PartialEq)]
pub struct CycleRecord {
    pub cycle: u32,
    pub settings: [f64; NUM_SETTINGS],
    pub sensors: [f64; NUM_SENSORS],
}

/// One engine's run, cycles `1..=T` in order.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineTrajectory {
    pub unit: u32,
    pub records: Vec<CycleRecord>,
}

impl EngineTrajectory {
    /// Last observed cycle.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn parse_token<T: FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("{what}: {tok:?} is not a valid number"),
    })
}

/// Parses a trajectory file. Rows are grouped by unit in order of first
/// appearance and each unit's cycles must run 1, 2, 3, ...
pub fn parse_trajectory_file(reader: impl BufRead) -> Result<Vec<EngineTrajectory>> {
    let mut units: Vec<EngineTrajectory> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != NUM_COLUMNS {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {NUM_COLUMNS} columns, found {}", toks.len()),
            });
        }
        let unit: u32 = parse_token(toks[0], lineno, "unit id")?;
        let cycle: u32 = parse_token(toks[1], lineno, "cycle")?;
        let mut values = [0.0f64; NUM_SETTINGS + NUM_SENSORS];
        for (v, tok) in values.iter_mut().zip(&toks[2..]) {
            *v = parse_token(tok, lineno, "measurement")?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("non-finite measurement {tok:?}"),
                });
            }
        }
        let mut record = CycleRecord {
            cycle,
            settings: [0.0; NUM_SETTINGS],
            sensors: [0.0; NUM_SENSORS],
        };
        record.settings.copy_from_slice(&values[..NUM_SETTINGS]);
        record.sensors.copy_from_slice(&values[NUM_SETTINGS..]);

        let traj = match units.iter().position(|u| u.unit == unit) {
            Some(i) => &mut units[i],
            None => {
                units.push(EngineTrajectory {
                    unit,
                    records: Vec::new(),
                });
                units.last_mut().expect("just pushed")
            }
        };
        let expected = traj.records.len() as u32 + 1;
        if cycle != expected {
            return Err(Error::Validation(format!(
                "unit {unit}: expected cycle {expected}, found cycle {cycle} (line {lineno})"
            )));
        }
        traj.records.push(record);
    }
    Ok(units)
}

pub fn parse_trajectory_str(text: &str) -> Result<Vec<EngineTrajectory>> {
    parse_trajectory_file(text.as_bytes())
}

/// Parses terminal RUL offsets, one non-negative integer per line.
pub fn parse_rul_file(reader: impl BufRead, expected_units: usize) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let tok = line.trim();
        if tok.is_empty() {
            continue;
        }
        let value: i64 = parse_token(tok, lineno, "RUL")?;
        if value < 0 {
            return Err(Error::Validation(format!(
                "negative RUL {value} at line {lineno}"
            )));
        }
        let value = u32::try_from(value).map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("RUL {value} out of range"),
        })?;
        out.push(value);
    }
    if out.len() != expected_units {
        return Err(Error::Validation(format!(
            "RUL file lists {} units, expected {expected_units}",
            out.len()
        )));
    }
    Ok(out)
}

/// Writes trajectories in the 26-column text format. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_trajectories(units: &[EngineTrajectory]) -> String {
    let mut out = String::new();
    for u in units {
        for r in &u.records {
            write!(out, "{} {}", u.unit, r.cycle).expect("string write");
            for v in r.settings.iter().chain(&r.sensors) {
                write!(out, " {v}").expect("string write");
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_rul(offsets: &[u32]) -> String {
    offsets.iter().map(|v| format!("{v}\n")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subset {
    FD001,
    FD002,
    FD003,
    FD004,
}

impl Subset {
    pub const ALL: [Subset; 4] = [Subset::FD001, Subset::FD002, Subset::FD003, Subset::FD004];

    pub fn meta(self) -> SubsetMeta {
        subset_meta(self)
    }

    pub fn is_multi_condition(self) -> bool {
        self.meta().operating_conditions > 1
    }

    pub fn train_file(self) -> String {
        format!("train_{self}.txt")
    }

    pub fn test_file(self) -> String {
        format!("test_{self}.txt")
    }

    pub fn rul_file(self) -> String {
        format!("RUL_{self}.txt")
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subset::ALL
            .into_iter()
            .find(|v| v.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Usage(format!("unknown subset {s:?}; expected FD001..FD004")))
    }
}

/// Published size and condition statistics of one benchmark subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SubsetMeta {
    pub subset: Subset,
    pub train_engines: usize,
    pub test_engines: usize,
    /// Reference count only; it does not follow from any windowing rule.
    pub train_trajectories: usize,
    pub test_trajectories: usize,
    pub train_max_cycle: usize,
    pub train_min_cycle: usize,
    pub test_max_cycle: usize,
    pub test_min_cycle: usize,
    pub operating_conditions: usize,
    pub fault_modes: usize,
}

pub fn subset_meta(subset: Subset) -> SubsetMeta {
    let row = |train, test, traj, tr_max, tr_min, te_max, te_min, cond, faults| SubsetMeta {
        subset,
        train_engines: train,
        test_engines: test,
        train_trajectories: traj,
        test_trajectories: test,
        train_max_cycle: tr_max,
        train_min_cycle: tr_min,
        test_max_cycle: te_max,
        test_min_cycle: te_min,
        operating_conditions: cond,
        fault_modes: faults,
    };
    match subset {
        Subset::FD001 => row(100, 100, 17_731, 362, 128, 303, 31, 1, 1),
        Subset::FD002 => row(260, 259, 48_558, 378, 128, 367, 21, 6, 1),
        Subset::FD003 => row(100, 100, 21_120, 525, 145, 475, 38, 1, 2),
        Subset::FD004 => row(249, 248, 56_815, 543, 128, 486, 19, 6, 2),
    }
}

/// Differences between parsed files and the published engine counts. These
/// are warnings: trimmed or augmented copies of the data are legitimate.
pub fn check_against_meta(
    subset: Subset,
    train: &[EngineTrajectory],
    test: &[EngineTrajectory],
) -> Vec<String> {
    let meta = subset_meta(subset);
    let mut warnings = Vec::new();
    if train.len() != meta.train_engines {
        warnings.push(format!(
            "{subset}: {} training engines, published count is {}",
            train.len(),
            meta.train_engines
        ));
    }
    if test.len() != meta.test_engines {
        warnings.push(format!(
            "{subset}: {} test engines, published count is {}",
            test.len(),
            meta.test_engines
        ));
    }
    warnings
}

/// Train, test and terminal offsets of one data set.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetData {
    pub train: Vec<EngineTrajectory>,
    pub test: Vec<EngineTrajectory>,
    pub test_rul: Vec<u32>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads `train_*.txt`, `test_*.txt` and `RUL_*.txt` for `tag` from `dir`.
pub fn load_files(dir: &Path, tag: &str) -> Result<SubsetData> {
    let path = |prefix: &str| -> PathBuf { dir.join(format!("{prefix}_{tag}.txt")) };
    let train = parse_trajectory_str(&read_text(&path("train"))?)?;
    let test = parse_trajectory_str(&read_text(&path("test"))?)?;
    let test_rul = parse_rul_file(read_text(&path("RUL"))?.as_bytes(), test.len())?;
    Ok(SubsetData {
        train,
        test,
        test_rul,
    })
}

/// Writes the three files that [`load_files`] reads.
pub fn save_files(dir: &Path, tag: &str, data: &SubsetData) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("train", write_trajectories(&data.train)),
        ("test", write_trajectories(&data.test)),
        ("RUL", write_rul(&data.test_rul)),
    ];
    for (prefix, text) in files {
        let path = dir.join(format!("{prefix}_{tag}.txt"));
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
