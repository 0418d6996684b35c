//! Case populations: one record per simulated case.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use thiserror::Error;

use crate::condition::Value;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseRecord {
    pub case_id: String,
    pub attributes: BTreeMap<String, Value>,
}

impl CaseRecord {
    pub fn new(case_id: impl Into<String>) -> Self {
        CaseRecord { case_id: case_id.into(), attributes: BTreeMap::new() }
    }

    pub fn with(mut self, name: impl Into<String>, value: Value) -> Self {
        self.attributes.insert(name.into(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.attributes.get(name)
    }
}

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("cannot read population: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed population CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("population header must start with `case_id`")]
    MissingCaseId,
    #[error("duplicate case_id `{0}`")]
    DuplicateCase(String),
    #[error("population is empty")]
    Empty,
}

/// Reads a population CSV whose first column is `case_id`. Cells parse as
/// decimals, then `true`/`false`, else strings.
pub fn read_population<R: std::io::Read>(reader: R) -> Result<Vec<CaseRecord>, PopulationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("case_id") {
        return Err(PopulationError::MissingCaseId);
    }
    let mut seen = HashSet::new();
    let mut cases = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let case_id = row.get(0).unwrap_or_default().to_string();
        if !seen.insert(case_id.clone()) {
            return Err(PopulationError::DuplicateCase(case_id));
        }
        let attributes =
            headers.iter().zip(row.iter()).skip(1).map(|(h, cell)| (h.to_string(), Value::from_cell(cell))).collect();
        cases.push(CaseRecord { case_id, attributes });
    }
    if cases.is_empty() {
        return Err(PopulationError::Empty);
    }
    Ok(cases)
}

pub fn load_population(path: &Path) -> Result<Vec<CaseRecord>, PopulationError> {
    read_population(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_typed_cells() {
        let csv = "case_id,HbA1c,Treated,Region\nc1,7.1,true,north\nc2,5.9,false,south\n";
        let cases = read_population(csv.as_bytes()).unwrap();
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[0].get("HbA1c"), Some(&Value::Number("7.1".parse().unwrap())));
        assert_eq!(cases[1].get("Treated"), Some(&Value::Bool(false)));
        assert_eq!(cases[0].get("Region"), Some(&Value::Str("north".into())));
    }

    #[test]
    fn rejects_bad_headers_and_duplicates() {
        assert!(matches!(read_population("id,x\n1,2\n".as_bytes()), Err(PopulationError::MissingCaseId)));
        assert!(matches!(
            read_population("case_id,x\na,1\na,2\n".as_bytes()),
            Err(PopulationError::DuplicateCase(id)) if id == "a"
        ));
        assert!(matches!(read_population("case_id,x\n".as_bytes()), Err(PopulationError::Empty)));
    }
}
