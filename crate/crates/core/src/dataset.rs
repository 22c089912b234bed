//! Transaction datasets: CSV loading and writing, and the synthetic generator
//! that stands in for measured contract transactions.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;
use crate::workload::{TransactionRecord, DEFAULT_BLOCK_LIMIT, MIN_TX_GAS};

pub const CSV_HEADER: [&str; 4] = ["used_gas", "gas_limit", "gas_price", "cpu_time_s"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Creation,
    #[default]
    Execution,
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Creation => "creation",
            Partition::Execution => "execution",
        })
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "creation" => Ok(Partition::Creation),
            "execution" => Ok(Partition::Execution),
            other => Err(Error::param(format!("unknown partition `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File(PathBuf),
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<TransactionRecord>,
    pub partition: Partition,
    pub source: Source,
}

impl Dataset {
    pub fn new(records: Vec<TransactionRecord>, partition: Partition, source: Source) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (i, r) in records.iter().enumerate() {
            if let Err((field, message)) = r.check(DEFAULT_BLOCK_LIMIT) {
                return Err(Error::Field {
                    line: i as u64 + 2,
                    field,
                    message,
                });
            }
        }
        Ok(Self {
            records,
            partition,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn used_gas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.used_gas as f64).collect()
    }

    pub fn gas_prices(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gas_price).collect()
    }

    pub fn cpu_times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cpu_time).collect()
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    used_gas: u64,
    gas_limit: u64,
    gas_price: f64,
    cpu_time_s: f64,
}

pub fn load_dataset(path: &Path, partition: Partition) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut records = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            },
        })?;
        let line = records.len() as u64 + 2;
        let record = TransactionRecord {
            used_gas: row.used_gas,
            gas_limit: row.gas_limit,
            gas_price: row.gas_price,
            cpu_time: row.cpu_time_s,
            conflicting: false,
        };
        record
            .check(DEFAULT_BLOCK_LIMIT)
            .map_err(|(field, message)| Error::Field { line, field, message })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Dataset {
        records,
        partition,
        source: Source::File(path.to_path_buf()),
    })
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(CSV_HEADER)?;
    for r in &dataset.records {
        writer.serialize((r.used_gas, r.gas_limit, r.gas_price, r.cpu_time))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Generator constants. CPU time follows a concave map of used gas,
/// `a * ln(1 + gas / g0)`, scaled by mean-one lognormal noise whose spread
/// grows with gas, so CPU time is monotone in expectation but far from
/// proportional to gas. Execution constants are calibrated so that greedily
/// packed 8M-gas blocks take 0.23 s to verify on average.
pub mod profile {
    pub struct Profile {
        /// (weight, median gas, log-sd) per used-gas component.
        pub gas_components: [(f64, f64, f64); 2],
        pub cpu_scale: f64,
        pub cpu_knee: f64,
        /// Log-sd of the CPU noise at `cpu_knee` gas; grows with log gas.
        pub cpu_noise: f64,
        pub cpu_noise_slope: f64,
        pub price_median: f64,
        pub price_log_sd: f64,
    }

    pub const EXECUTION: Profile = Profile {
        gas_components: [(0.6, 40_000.0, 0.25), (0.4, 140_000.0, 0.4)],
        cpu_scale: 1.0990e-3,
        cpu_knee: 8_000.0,
        cpu_noise: 0.04,
        cpu_noise_slope: 0.01,
        price_median: 2e-8,
        price_log_sd: 0.5,
    };

    pub const CREATION: Profile = Profile {
        gas_components: [(0.7, 250_000.0, 0.6), (0.3, 1_200_000.0, 0.5)],
        cpu_scale: 1.6e-3,
        cpu_knee: 20_000.0,
        cpu_noise: 0.1,
        cpu_noise_slope: 0.02,
        price_median: 2e-8,
        price_log_sd: 0.5,
    };
}

pub fn profile_for(partition: Partition) -> &'static profile::Profile {
    match partition {
        Partition::Execution => &profile::EXECUTION,
        Partition::Creation => &profile::CREATION,
    }
}

const GENERATOR_STREAM: u64 = 0x6765_6e65;

/// Expected CPU time of a transaction using `gas` under `p`.
pub fn cpu_time_curve(p: &profile::Profile, gas: f64) -> f64 {
    p.cpu_scale * (gas / p.cpu_knee).ln_1p()
}

pub fn generate_synthetic_dataset(n: usize, partition: Partition, seed: u64) -> Result<Dataset> {
    if n < 100 {
        return Err(Error::InsufficientSamples { needed: 100, got: n });
    }
    let p = profile_for(partition);
    let mut rng = seed::rng(seed, &[GENERATOR_STREAM, partition as u64]);
    let limit = DEFAULT_BLOCK_LIMIT;
    let records = (0..n)
        .map(|_| {
            let used_gas = loop {
                let (w0, m0, s0) = p.gas_components[0];
                let (_, m1, s1) = p.gas_components[1];
                let (m, s) = if rng.random::<f64>() < w0 { (m0, s0) } else { (m1, s1) };
                let g = (m.ln() + s * f64::standard_normal(&mut rng)).exp().round();
                if (MIN_TX_GAS as f64..=limit as f64).contains(&g) {
                    break g as u64;
                }
            };
            let gas_limit = rng.random_range(used_gas..=limit);
            let gas_price = (p.price_median.ln() + p.price_log_sd * f64::standard_normal(&mut rng)).exp();
            let sigma = (p.cpu_noise + p.cpu_noise_slope * (used_gas as f64 / p.cpu_knee).ln().max(0.0)).max(0.0);
            let noise = (sigma * f64::standard_normal(&mut rng) - 0.5 * sigma * sigma).exp();
            TransactionRecord {
                used_gas,
                gas_limit,
                gas_price,
                cpu_time: cpu_time_curve(p, used_gas as f64) * noise,
                conflicting: false,
            }
        })
        .collect();
    Dataset::new(records, partition, Source::Synthetic { seed })
}

/// Sequential verification time of each block formed by packing `records`
/// in order: a record that does not fit closes the block and is dropped.
/// The trailing partial block is discarded.
pub fn packed_block_times(records: &[TransactionRecord], block_limit: u64) -> Vec<f64> {
    let mut out = Vec::new();
    let (mut gas, mut time) = (0u64, 0.0);
    for r in records {
        if gas + r.used_gas > block_limit {
            out.push(time);
            gas = 0;
            time = 0.0;
            continue;
        }
        gas += r.used_gas;
        time += r.cpu_time;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, pearson, spearman};
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, body: &str) -> PathBuf {
        let path = dir.path().join("tx.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn loads_well_formed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "used_gas,gas_limit,gas_price,cpu_time_s\n\
             21000,21000,2e-8,0.0004\n\
             50000,90000,1.5e-8,0.001\n\
             120000,400000,3e-8,0.0021\n",
        );
        let ds = load_dataset(&path, Partition::Execution).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.records[1].gas_limit, 90_000);
        assert_eq!(ds.source, Source::File(path));
    }

    #[test]
    fn invariant_violation_names_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "used_gas,gas_limit,gas_price,cpu_time_s\n21000,21000,2e-8,0.0004\n50000,40000,1e-8,0.001\n",
        );
        match load_dataset(&path, Partition::Execution).unwrap_err() {
            Error::Field { line, field, .. } => assert_eq!((line, field), (3, "gas_limit")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "used_gas,gas_limit,gas_price,cpu_time_s\n21000,21000,2e-8,0.0004\n21000,abc,2e-8,0.1\n",
        );
        match load_dataset(&path, Partition::Execution).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "used_gas,gas_limit,gas_price,cpu_time_s\n");
        let err = load_dataset(&path, Partition::Creation).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset));
        assert_eq!(err.to_string(), "empty dataset");
        let path = write_file(&dir, "gas,limit,price,cpu\n1,1,1,1\n");
        assert!(matches!(
            load_dataset(&path, Partition::Creation),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_synthetic_dataset(500, Partition::Creation, 3).unwrap();
        let path = dir.path().join("out.csv");
        write_dataset(&path, &ds).unwrap();
        let back = load_dataset(&path, Partition::Creation).unwrap();
        assert_eq!(back.records, ds.records);
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let a = generate_synthetic_dataset(1000, Partition::Execution, 9).unwrap();
        let b = generate_synthetic_dataset(1000, Partition::Execution, 9).unwrap();
        assert_eq!(a, b);
        assert!(generate_synthetic_dataset(99, Partition::Execution, 9).is_err());
    }

    #[test]
    fn execution_set_matches_calibration_targets() {
        let ds = generate_synthetic_dataset(100_000, Partition::Execution, 2024).unwrap();
        let tv = mean(&packed_block_times(&ds.records, 8_000_000));
        assert!((0.21..=0.25).contains(&tv), "mean 8M verification time {tv}");

        let gas = ds.used_gas();
        let cpu = ds.cpu_times();
        assert!(pearson(&gas, &cpu).unwrap() < spearman(&gas, &cpu).unwrap());
        assert!(pearson(&ds.gas_prices(), &gas).unwrap().abs() <= 0.05);
    }

    #[test]
    fn packing_closes_blocks_on_overflow() {
        let tx = |g, t| TransactionRecord {
            used_gas: g,
            gas_limit: g,
            gas_price: 1e-8,
            cpu_time: t,
            conflicting: false,
        };
        let recs = [
            tx(40, 1.0),
            tx(50, 2.0),
            tx(30, 4.0),
            tx(90, 8.0),
            tx(100, 16.0),
            tx(1, 0.5),
        ];
        assert_eq!(packed_block_times(&recs, 100), vec![3.0, 8.0]);
    }
}
