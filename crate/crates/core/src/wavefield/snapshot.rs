use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use super::{Grid, WaveField};
use crate::error::{Error, Result};

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `x,re,im` rows below a `#` header with `epsilon`, `t` and the grid.
pub fn write_field_csv(field: &WaveField, path: &Path) -> Result<()> {
    let g = &field.grid;
    let mut out = format!(
        "# epsilon={:.16e} t={:.16e} x_lo={:.16e} dx={:.16e} n={}\nx,re,im\n",
        field.epsilon, field.t, g.x_lo, g.dx, g.n
    );
    for (j, v) in field.values.iter().enumerate() {
        writeln!(out, "{:.16e},{:.16e},{:.16e}", g.x(j), v.re, v.im).expect("write to string");
    }
    std::fs::write(path, out).map_err(|e| io_error(path, e))
}

pub fn read_field_csv(path: &Path) -> Result<WaveField> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let bad = |msg: &str| Error::Config(format!("{}: {msg}", path.display()));
    let mut lines = text.lines();
    let header = lines
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .ok_or_else(|| bad("missing header line"))?;
    let mut meta = std::collections::HashMap::new();
    for item in header.split_whitespace() {
        let (k, v) = item.split_once('=').ok_or_else(|| bad("malformed header"))?;
        meta.insert(k, v);
    }
    let num = |key: &str| -> Result<f64> {
        meta.get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(&format!("header lacks {key}")))
    };
    let n: usize = meta
        .get("n")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("header lacks n"))?;
    let grid = Grid {
        x_lo: num("x_lo")?,
        dx: num("dx")?,
        n,
    };
    if lines.next() != Some("x,re,im") {
        return Err(bad("missing column line"));
    }
    let mut values = Vec::with_capacity(n);
    for line in lines {
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(&format!("bad row {line:?}")))?;
        if cols.len() != 3 {
            return Err(bad(&format!("bad row {line:?}")));
        }
        values.push(Complex64::new(cols[1], cols[2]));
    }
    if values.len() != n {
        return Err(bad("row count does not match the header"));
    }
    Ok(WaveField {
        epsilon: num("epsilon")?,
        t: num("t")?,
        grid,
        values,
    })
}
