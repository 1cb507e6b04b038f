//! Trial data from CSV: UTF-8, header row, comma delimiter. Columns not
//! named on the command line (such as an `id` column) are ignored.

use std::io::Read;
use std::path::Path;

use riskdiff_core::{Covariate, Error, TrialDataset};

use crate::error::{AppError, AppResult};

fn column(headers: &csv::StringRecord, name: &str) -> AppResult<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema { column: name.to_string() }.into())
}

fn binary(cell: &str, row: usize, what: &str) -> AppResult<u8> {
    if cell.is_empty() {
        return Err(Error::Parse { row, message: format!("missing {what}") }.into());
    }
    match cell.parse::<f64>() {
        Ok(v) if v == 0.0 => Ok(0),
        Ok(v) if v == 1.0 => Ok(1),
        _ => Err(Error::Parse { row, message: format!("{what} must be 0 or 1") }.into()),
    }
}

/// Reads a dataset; `row` numbers in errors count data rows from 1.
pub fn read_csv<R: Read>(reader: R, outcome: &str, arm: &str, covariates: &[&str]) -> AppResult<TrialDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let yi = column(&headers, outcome)?;
    let ai = column(&headers, arm)?;
    let ci: Vec<usize> = covariates.iter().map(|c| column(&headers, c)).collect::<AppResult<_>>()?;

    let (mut y, mut a) = (Vec::new(), Vec::new());
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); covariates.len()];
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let cell = |j: usize| rec.get(j).unwrap_or("");
        y.push(binary(cell(yi), row, "outcome")?);
        a.push(binary(cell(ai), row, "arm")?);
        for (k, &j) in ci.iter().enumerate() {
            let v = cell(j);
            let value = v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::Parse {
                row,
                message: if v.is_empty() {
                    format!("missing value in {}", covariates[k])
                } else {
                    format!("cannot parse \"{v}\" in {}", covariates[k])
                },
            })?;
            cols[k].push(value);
        }
    }
    let covs = covariates.iter().zip(cols).map(|(name, v)| Covariate::infer(name, v)).collect();
    Ok(TrialDataset::new(y, a, covs)?)
}

pub fn load_csv(path: &Path, outcome: &str, arm: &str, covariates: &[&str]) -> AppResult<TrialDataset> {
    let f = std::fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    read_csv(f, outcome, arm, covariates)
}
