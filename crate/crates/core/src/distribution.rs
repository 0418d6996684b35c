//! Empirical distribution of KPI vectors across a model family.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::Path;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulation::KpiVector;

pub const DEFAULT_ROUND_DECIMALS: u32 = 6;
pub const MAX_ROUND_DECIMALS: u32 = 12;

#[derive(Debug, Error)]
pub enum DistributionError {
    #[error("no KPI vectors supplied")]
    EmptyInput,
    #[error("round_decimals must be at most {MAX_ROUND_DECIMALS}, got {0}")]
    BadRounding(u32),
    #[error("entropy {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("only one KPI class is present; nothing to compare")]
    SingleClass,
    #[error("combo {0} has no member models")]
    MissingMembers(usize),
    #[error("cannot read KPI input: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed KPI input {source_name}: {message}")]
    Malformed { source_name: String, message: String },
    #[error("duplicate model id `{0}`")]
    DuplicateModel(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Combo {
    pub kpis: KpiVector,
    pub count: usize,
    /// Exact `count / total`.
    pub probability: Decimal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    /// Sorted by descending count, then canonical print.
    pub combos: Vec<Combo>,
    pub total: usize,
    pub round_decimals: u32,
}

impl EmpiricalDistribution {
    pub fn k(&self) -> usize {
        self.combos.len()
    }

    pub fn index_of(&self, quantized: &KpiVector) -> Option<usize> {
        self.combos.iter().position(|c| &c.kpis == quantized)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyCategory {
    VeryHigh,
    High,
    Moderate,
    Low,
}

impl fmt::Display for ConsistencyCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConsistencyCategory::VeryHigh => "very_high",
            ConsistencyCategory::High => "high",
            ConsistencyCategory::Moderate => "moderate",
            ConsistencyCategory::Low => "low",
        })
    }
}

/// Groups vectors after per-component half-to-even rounding.
pub fn build_distribution(
    vectors: &[KpiVector],
    round_decimals: u32,
) -> Result<EmpiricalDistribution, DistributionError> {
    Ok(group(vectors, round_decimals)?.0)
}

/// Like [`build_distribution`], also returning the input indices in each combo.
fn group(
    vectors: &[KpiVector],
    round_decimals: u32,
) -> Result<(EmpiricalDistribution, Vec<Vec<usize>>), DistributionError> {
    if vectors.is_empty() {
        return Err(DistributionError::EmptyInput);
    }
    if round_decimals > MAX_ROUND_DECIMALS {
        return Err(DistributionError::BadRounding(round_decimals));
    }
    // Keyed by canonical print; equal prints imply equal quantized vectors.
    let mut buckets: BTreeMap<String, (KpiVector, Vec<usize>)> = BTreeMap::new();
    for (i, v) in vectors.iter().enumerate() {
        let q = v.quantized(round_decimals);
        buckets.entry(q.to_string()).or_insert_with(|| (q, Vec::new())).1.push(i);
    }
    let mut entries: Vec<(String, KpiVector, Vec<usize>)> = buckets.into_iter().map(|(k, (v, m))| (k, v, m)).collect();
    entries.sort_by(|a, b| b.2.len().cmp(&a.2.len()).then_with(|| a.0.cmp(&b.0)));
    let total = vectors.len();
    let mut combos = Vec::with_capacity(entries.len());
    let mut members = Vec::with_capacity(entries.len());
    for (_, kpis, idx) in entries {
        combos.push(Combo {
            kpis,
            count: idx.len(),
            probability: (Decimal::from(idx.len()) / Decimal::from(total)).normalize(),
        });
        members.push(idx);
    }
    Ok((EmpiricalDistribution { combos, total, round_decimals }, members))
}

/// Distribution over labelled vectors plus the model ids behind each combo,
/// each member list sorted.
pub fn build_labeled_distribution(
    runs: &[(String, KpiVector)],
    round_decimals: u32,
) -> Result<(EmpiricalDistribution, Vec<Vec<String>>), DistributionError> {
    let vectors: Vec<KpiVector> = runs.iter().map(|(_, v)| v.clone()).collect();
    let (dist, idx) = group(&vectors, round_decimals)?;
    let members = idx
        .into_iter()
        .map(|ix| {
            let mut ids: Vec<String> = ix.into_iter().map(|i| runs[i].0.clone()).collect();
            ids.sort();
            ids
        })
        .collect();
    Ok((dist, members))
}

/// Shannon entropy of the combo probabilities, in bits.
pub fn entropy_bits(d: &EmpiricalDistribution) -> f64 {
    if d.total == 0 {
        return 0.0;
    }
    let n = d.total as f64;
    d.combos
        .iter()
        .filter(|c| c.count > 0)
        .map(|c| {
            let p = c.count as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// [`entropy_bits`] divided by log2 K; 0 when K = 1.
pub fn normalized_entropy(d: &EmpiricalDistribution) -> f64 {
    let k = d.combos.len();
    if k <= 1 {
        return 0.0;
    }
    (entropy_bits(d) / (k as f64).log2()).clamp(0.0, 1.0)
}

/// Upper bounds are inclusive.
pub fn consistency_category(h: f64) -> Result<ConsistencyCategory, DistributionError> {
    if !(0.0..=1.0).contains(&h) {
        return Err(DistributionError::OutOfRange(h));
    }
    Ok(if h <= 0.30 {
        ConsistencyCategory::VeryHigh
    } else if h <= 0.50 {
        ConsistencyCategory::High
    } else if h <= 0.70 {
        ConsistencyCategory::Moderate
    } else {
        ConsistencyCategory::Low
    })
}

/// Smallest model id from each of the two most frequent combos, in
/// dominance order. The pair carries no orientation.
pub fn select_representatives(
    d: &EmpiricalDistribution,
    members: &[Vec<String>],
) -> Result<(String, String), DistributionError> {
    if d.k() < 2 {
        return Err(DistributionError::SingleClass);
    }
    let pick =
        |i: usize| members.get(i).and_then(|m| m.iter().min().cloned()).ok_or(DistributionError::MissingMembers(i));
    Ok((pick(0)?, pick(1)?))
}

/// Histogram rows (canonical combo print, count) in combo order.
pub fn histogram(d: &EmpiricalDistribution) -> Vec<(String, usize)> {
    d.combos.iter().map(|c| (c.kpis.to_string(), c.count)).collect()
}

/// Per-model KPI file as written by the `simulate` command; unknown fields
/// are ignored.
#[derive(Debug, Deserialize)]
struct KpiFile {
    model_id: String,
    kpis: KpiVector,
}

/// Reads every `*.json` file in `dir` (sorted by file name) as a per-model
/// KPI record, or a single CSV file with a `model_id` column followed by
/// one column per KPI.
pub fn load_kpi_vectors(path: &Path) -> Result<Vec<(String, KpiVector)>, DistributionError> {
    let mut out = if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut out = Vec::with_capacity(files.len());
        for f in files {
            let text = fs::read_to_string(&f)?;
            let rec: KpiFile = serde_json::from_str(&text).map_err(|e| DistributionError::Malformed {
                source_name: f.display().to_string(),
                message: e.to_string(),
            })?;
            out.push((rec.model_id, rec.kpis));
        }
        out
    } else {
        read_kpi_csv(fs::File::open(path)?, &path.display().to_string())?
    };
    if out.is_empty() {
        return Err(DistributionError::EmptyInput);
    }
    let mut seen = std::collections::BTreeSet::new();
    for (id, _) in &out {
        if !seen.insert(id.as_str()) {
            return Err(DistributionError::DuplicateModel(id.clone()));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

pub fn read_kpi_csv<R: Read>(r: R, source_name: &str) -> Result<Vec<(String, KpiVector)>, DistributionError> {
    let bad = |message: String| DistributionError::Malformed { source_name: source_name.to_string(), message };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.get(0) != Some("model_id") {
        return Err(bad("first column must be `model_id`".into()));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let mut values = Vec::with_capacity(headers.len() - 1);
        for (h, cell) in headers.iter().zip(row.iter()).skip(1) {
            let v: Decimal = cell.parse().map_err(|_| bad(format!("`{cell}` in column {h} is not a decimal")))?;
            values.push((h.to_string(), v));
        }
        out.push((row[0].to_string(), KpiVector::new(values)));
    }
    Ok(out)
}
