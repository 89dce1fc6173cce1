//! Plain-text value-function artifact.
//!
//! One `key = value…` entry per line; matrices are row-major on a single
//! line. Floats are written with 17 significant digits so a write/read cycle
//! is bit-exact.
//!
//! ```text
//! # ampc value function
//! format = 1
//! n = 2
//! P = 1.0000000000000000e0 0.0000000000000000e0 ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::cost::DesiredMap;
use crate::error::{Error, Result};
use crate::fitting::QuadraticValueFunction;

const HEADER: &str = "# ampc value function";
const FORMAT_VERSION: u32 = 1;

/// Fit provenance stored next to the value function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArtifactMeta {
    pub lambda: f64,
    pub seed: u64,
    pub sample_count: usize,
    pub fit_mse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VfArtifact {
    pub vf: QuadraticValueFunction,
    pub meta: ArtifactMeta,
}

fn push_floats<'a>(out: &mut String, key: &str, vals: impl IntoIterator<Item = &'a f64>) {
    out.push_str(key);
    out.push_str(" =");
    for v in vals {
        let _ = write!(out, " {v:.16e}");
    }
    out.push('\n');
}

impl VfArtifact {
    pub fn to_text(&self) -> String {
        let vf = &self.vf;
        let n = vf.dim();
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "format = {FORMAT_VERSION}");
        let _ = writeln!(out, "n = {n}");
        let p = vf.p();
        let p_rows: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| p[(i, j)])).collect();
        push_floats(&mut out, "P", &p_rows);
        push_floats(&mut out, "r", [vf.r()].iter());
        push_floats(&mut out, "alpha", [vf.alpha()].iter());
        let c = vf.map().c();
        let c_rows: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| c[(i, j)])).collect();
        push_floats(&mut out, "C_des", &c_rows);
        push_floats(&mut out, "d_des", vf.map().d().iter());
        push_floats(&mut out, "lambda", [self.meta.lambda].iter());
        let _ = writeln!(out, "seed = {}", self.meta.seed);
        let _ = writeln!(out, "sample_count = {}", self.meta.sample_count);
        push_floats(&mut out, "fit_mse", [self.meta.fit_mse].iter());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields: Vec<(usize, &str, &str)> = Vec::new();
        let mut saw_header = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('#') {
                saw_header |= line == HEADER;
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Artifact {
                line: line_no,
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            if fields.iter().any(|(_, k, _)| *k == key) {
                return Err(Error::Artifact {
                    line: line_no,
                    message: format!("duplicate field `{key}`"),
                });
            }
            fields.push((line_no, key, value.trim()));
        }
        if !saw_header {
            return Err(Error::Artifact {
                line: 1,
                message: "missing artifact header".into(),
            });
        }
        let last_line = text.lines().count().max(1);
        let get = |key: &str| -> Result<(usize, &str)> {
            fields
                .iter()
                .find(|(_, k, _)| *k == key)
                .map(|(l, _, v)| (*l, *v))
                .ok_or_else(|| Error::Artifact {
                    line: last_line,
                    message: format!("missing field `{key}`"),
                })
        };
        let int = |key: &str| -> Result<u64> {
            let (line, v) = get(key)?;
            v.parse::<u64>().map_err(|e| Error::Artifact {
                line,
                message: format!("field `{key}`: {e}"),
            })
        };
        let floats = |key: &str, expected: usize| -> Result<(usize, Vec<f64>)> {
            let (line, v) = get(key)?;
            let vals = v
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Artifact {
                    line,
                    message: format!("field `{key}`: {e}"),
                })?;
            if vals.len() != expected {
                return Err(Error::Artifact {
                    line,
                    message: format!("field `{key}`: expected {expected} values, got {}", vals.len()),
                });
            }
            Ok((line, vals))
        };

        for (line, key, _) in &fields {
            const KNOWN: [&str; 11] = [
                "format", "n", "P", "r", "alpha", "C_des", "d_des", "lambda", "seed",
                "sample_count", "fit_mse",
            ];
            if !KNOWN.contains(key) {
                return Err(Error::Artifact {
                    line: *line,
                    message: format!("unknown field `{key}`"),
                });
            }
        }
        let (fline, _) = get("format")?;
        let version = int("format")?;
        if version != FORMAT_VERSION as u64 {
            return Err(Error::Artifact {
                line: fline,
                message: format!("unsupported format version {version}"),
            });
        }
        let (nline, _) = get("n")?;
        let n = int("n")? as usize;
        if n == 0 {
            return Err(Error::Artifact {
                line: nline,
                message: "n must be positive".into(),
            });
        }
        let (pline, p) = floats("P", n * n)?;
        let (_, r) = floats("r", 1)?;
        let (_, alpha) = floats("alpha", 1)?;
        let (cline, c) = floats("C_des", n * n)?;
        let (_, d) = floats("d_des", n)?;
        let (_, lambda) = floats("lambda", 1)?;
        let (_, mse) = floats("fit_mse", 1)?;
        let meta = ArtifactMeta {
            lambda: lambda[0],
            seed: int("seed")?,
            sample_count: int("sample_count")? as usize,
            fit_mse: mse[0],
        };
        let map = DesiredMap::affine(DMatrix::from_row_slice(n, n, &c), DVector::from_vec(d))
            .map_err(|e| Error::Artifact {
                line: cline,
                message: e.to_string(),
            })?;
        let vf = QuadraticValueFunction::new(DMatrix::from_row_slice(n, n, &p), r[0], map, alpha[0])
            .map_err(|e| Error::Artifact {
                line: pline,
                message: e.to_string(),
            })?;
        Ok(VfArtifact { vf, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}
