//! Feature tables on disk: `crop_id,lai,f0,...,f{d-1}` CSV.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! table read back is bit-identical to the one written.

use std::fs;
use std::path::Path;

use crate::dataset::{check_samples, LabeledSample};
use crate::error::{Error, Result};

pub fn render_features(samples: &[LabeledSample]) -> Result<String> {
    let d = check_samples(samples)?;
    let mut out = String::from("crop_id,lai");
    for j in 0..d {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for s in samples {
        if s.id.contains([',', '"', '\n', '\r']) {
            return Err(Error::InvalidArgument(format!(
                "crop id `{}` cannot be stored in a feature table",
                s.id
            )));
        }
        out.push_str(&s.id);
        out.push_str(&format!(",{}", s.lai));
        for v in &s.features {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_features(samples: &[LabeledSample], path: &Path) -> Result<()> {
    let text = render_features(samples)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<Vec<LabeledSample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features(&text, path)
}

pub fn parse_features(text: &str, origin: &Path) -> Result<Vec<LabeledSample>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty feature table".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "crop_id" || cols[1] != "lai" {
        return Err(parse_err(1, format!("expected header `crop_id,lai,f0,...`, got `{header}`")));
    }
    for (j, c) in cols[2..].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(parse_err(1, format!("expected column `f{j}`, got `{c}`")));
        }
    }
    let d = cols.len() - 2;

    let mut samples = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 2 {
            return Err(parse_err(
                lineno,
                format!("expected {} fields, found {}", d + 2, fields.len()),
            ));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(lineno, format!("`{s}` is not a finite number")))
        };
        let lai = num(fields[1])?;
        let features = fields[2..].iter().map(|f| num(f)).collect::<Result<Vec<_>>>()?;
        samples.push(LabeledSample::new(fields[0], features, lai));
    }
    if samples.is_empty() {
        return Err(parse_err(1, "feature table has no rows".into()));
    }
    Ok(samples)
}
