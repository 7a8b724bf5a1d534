//! Dataset ingestion: comma-separated binary matrices with fixed
//! train/valid/test splits, whitespace-separated basket files, and a seeded
//! 70/10/20 splitter.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Datasets with fewer variables than this get a warning from the CLI,
/// mirroring the usual exclusion rule for tiny basket categories.
pub const MIN_RECOMMENDED_VARS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub train: Vec<Vec<bool>>,
    pub valid: Vec<Vec<bool>>,
    pub test: Vec<Vec<bool>>,
}

/// Parse a comma-separated 0/1 matrix; every row must have the same width.
pub fn parse_binary_csv(text: &str) -> Result<Vec<Vec<bool>>> {
    let mut rows: Vec<Vec<bool>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split(',') {
            match tok.trim() {
                "0" => row.push(false),
                "1" => row.push(true),
                other => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected 0 or 1, got `{other}`"),
                    })
                }
            }
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("row has {} columns, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::refused("empty dataset file"));
    }
    Ok(rows)
}

/// Load the standard `.train.data` / `.valid.data` / `.test.data` triple.
pub fn load_binary_csv(
    train_path: &Path,
    valid_path: &Path,
    test_path: &Path,
) -> Result<Dataset> {
    let train = parse_binary_csv(&std::fs::read_to_string(train_path)?)?;
    let valid = parse_binary_csv(&std::fs::read_to_string(valid_path)?)?;
    let test = parse_binary_csv(&std::fs::read_to_string(test_path)?)?;
    let n = train[0].len();
    if valid[0].len() != n || test[0].len() != n {
        return Err(Error::contract(format!(
            "splits disagree on variable count: train {}, valid {}, test {}",
            n,
            valid[0].len(),
            test[0].len()
        )));
    }
    Ok(Dataset { n, train, valid, test })
}

/// Parse a basket file: each line lists the 1-based item indices present in
/// one basket; an empty line is an empty basket and duplicates collapse.
pub fn parse_baskets(text: &str, n: usize) -> Result<Vec<Vec<bool>>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let mut row = vec![false; n];
        for tok in line.split_whitespace() {
            let i: usize = tok.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("expected an item index, got `{tok}`"),
            })?;
            if i == 0 || i > n {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("item index {i} outside 1..{n}"),
                });
            }
            row[i - 1] = true;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::refused("empty basket file"));
    }
    Ok(rows)
}

pub fn load_baskets(path: &Path, n: usize) -> Result<Vec<Vec<bool>>> {
    parse_baskets(&std::fs::read_to_string(path)?, n)
}

/// Shuffle with the given seed, then split 70/10/20 (sizes floor(0.7 N),
/// floor(0.1 N), remainder).
pub fn split(rows: Vec<Vec<bool>>, seed: u64) -> Result<Dataset> {
    if rows.len() < 10 {
        return Err(Error::refused(format!(
            "{} rows are too few to split 70/10/20",
            rows.len()
        )));
    }
    let n = rows[0].len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::contract("rows must have equal width"));
    }
    let mut rows = rows;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);
    let n_train = rows.len() * 7 / 10;
    let n_valid = rows.len() / 10;
    let test = rows.split_off(n_train + n_valid);
    let valid = rows.split_off(n_train);
    Ok(Dataset { n, train: rows, valid, test })
}
