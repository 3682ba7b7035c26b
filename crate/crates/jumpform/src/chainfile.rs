//! Chain and field file ingestion. A chain file is JSON in one of two
//! forms: explicit `{"n": .., "m": [..], "R": [[..]], "kappa": [..]}` or a
//! preset `{"preset": "brown_chain", "n": ..}`. Field files hold one value
//! per line.

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::brown::build_brown_chain;
use crate::model::{
    build_generator, build_kernel, Field, Generator, JumpKernel, StateSpace,
};
use crate::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum ChainFile {
    Preset {
        preset: String,
        n: usize,
    },
    Explicit {
        n: usize,
        m: Vec<f64>,
        #[serde(rename = "R")]
        r: Vec<Vec<f64>>,
        #[serde(default)]
        kappa: Option<Vec<f64>>,
    },
}

/// Parses a chain description from JSON text.
pub fn parse_chain(text: &str) -> Result<(StateSpace, JumpKernel, Generator)> {
    let file: ChainFile = serde_json::from_str(text)
        .map_err(|e| Error::BadConfig(format!("malformed chain file: {e}")))?;
    match file {
        ChainFile::Preset { preset, n } => {
            if preset != "brown_chain" {
                return Err(Error::BadConfig(format!("unknown preset '{preset}'")));
            }
            let (space, kernel, gen, _) = build_brown_chain(n)?;
            Ok((space, kernel, gen))
        }
        ChainFile::Explicit { n, m, r, kappa } => {
            if m.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: m.len(),
                });
            }
            if r.len() != n || r.iter().any(|row| row.len() != n) {
                return Err(Error::BadConfig(format!(
                    "rate matrix must be {n}x{n}"
                )));
            }
            let space = StateSpace::new(m)?;
            let rates = DMatrix::from_fn(n, n, |i, j| r[i][j]);
            let kernel = build_kernel(&space, rates)?;
            let gen = build_generator(&space, &kernel, kappa.unwrap_or_else(|| vec![0.0; n]))?;
            Ok((space, kernel, gen))
        }
    }
}

/// Reads and parses a chain file from disk.
pub fn load_chain(path: &std::path::Path) -> Result<(StateSpace, JumpKernel, Generator)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::BadConfig(format!("cannot read {}: {e}", path.display())))?;
    parse_chain(&text)
}

/// Parses a field file: one decimal value per line, blank lines ignored.
pub fn parse_field(text: &str, n: usize) -> Result<Field> {
    let values: Vec<f64> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| Error::BadConfig(format!("bad field value '{l}': {e}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: values.len(),
        });
    }
    Ok(values)
}

pub fn load_field(path: &std::path::Path, n: usize) -> Result<Field> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::BadConfig(format!("cannot read {}: {e}", path.display())))?;
    parse_field(&text, n)
}
