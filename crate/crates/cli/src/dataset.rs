use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use rvefield::data::{io, pre_trim, Family, SequenceRecord, FLAG_CYCLIC, FLAG_PATH, FLAG_TRUNCATED};

fn max_of(values: &[f64]) -> Option<f64> {
    values.iter().copied().reduce(f64::max)
}

pub fn stats(file: &Path) -> Result<String> {
    let records = io::read_records(file)?;
    let mut lengths: Vec<usize> = records.iter().map(|r| r.length).collect();
    lengths.sort_unstable();
    let count = |flag: u8| records.iter().filter(|r| r.flags & flag != 0).count();
    let mut out = format!("file            {}\n", file.display());
    out += &format!("records         {}\n", records.len());
    if let Some(r) = records.first() {
        out += &format!("dims            n_in {} d_gamma {} d_tau {}\n", r.n_in, r.d_gamma, r.d_tau);
    }
    if !lengths.is_empty() {
        out += &format!(
            "length          min {} median {} max {} total {}\n",
            lengths[0],
            lengths[lengths.len() / 2],
            lengths[lengths.len() - 1],
            lengths.iter().sum::<usize>()
        );
    }
    out += &format!("loading paths   {}\n", count(FLAG_PATH));
    out += &format!("cyclic          {}\n", count(FLAG_CYCLIC));
    out += &format!("truncated       {}\n", count(FLAG_TRUNCATED));
    let gammas: Vec<f64> = records.iter().filter_map(|r| max_of(&r.gamma)).collect();
    if let Some(g) = max_of(&gammas) {
        out += &format!("max gamma       {g}\n");
    }
    let taus: Vec<f64> = records.iter().filter_map(|r| max_of(&r.tau)).collect();
    if let Some(t) = max_of(&taus) {
        out += &format!("max tau         {t}\n");
    }
    Ok(out)
}

/// Cut every record where `family` first exceeds `crit`; returns how many were shortened.
pub fn trim(input: &Path, output: &Path, crit: f64, family: Family) -> Result<usize> {
    let records = io::read_records(input)?;
    let mut shortened = 0;
    let trimmed = records
        .iter()
        .map(|r| {
            let cut = pre_trim(r, crit, family)?;
            shortened += usize::from(cut.length < r.length);
            Ok(cut)
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_records(output, &trimmed)?;
    Ok(shortened)
}

/// Concatenate record files with identical dimensions.
pub fn pack(output: &Path, inputs: &[PathBuf]) -> Result<usize> {
    let mut all: Vec<SequenceRecord> = Vec::new();
    for f in inputs {
        for r in io::read_records(f)? {
            if let Some(first) = all.first() {
                if (first.n_in, first.d_gamma, first.d_tau) != (r.n_in, r.d_gamma, r.d_tau) {
                    bail!(
                        "{} holds records of dims ({}, {}, {}) but earlier inputs have ({}, {}, {})",
                        f.display(),
                        r.n_in,
                        r.d_gamma,
                        r.d_tau,
                        first.n_in,
                        first.d_gamma,
                        first.d_tau
                    );
                }
            }
            all.push(r);
        }
    }
    io::write_records(output, &all)?;
    Ok(all.len())
}
