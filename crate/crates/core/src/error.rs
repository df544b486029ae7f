use std::path::PathBuf;

/// Errors raised anywhere in the beam/band/reference pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("eigensolver failed at k = {k} with plane-wave cutoff {cutoff}")]
    Eigensolver { k: f64, cutoff: usize },

    #[error("band gap {gap:.3e} between bands {band} and {other} at k = {k} is below gap_min = {gap_min:.1e}")]
    GapViolation {
        k: f64,
        band: usize,
        other: usize,
        gap: f64,
        gap_min: f64,
    },

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("numerical consistency check failed: {0}")]
    Consistency(String),

    #[error("finite-difference step too large at k = {k}: gauge-fixed overlap {overlap:.6} < 0.99")]
    StepTooLarge { k: f64, overlap: f64 },

    #[error("cannot launch beam at x0 = {x0}: {source}")]
    Launch {
        x0: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("Riccati positivity lost at t = {t}: Im(M) = {im_m:.3e}")]
    PositivityLoss { t: f64, im_m: f64 },

    #[error("solvability residual {residual:.3e} exceeds tolerance at t = {t} (amplitude ODE and Berry term disagree)")]
    Solvability { t: f64, residual: f64 },

    #[error("non-finite values in reference solution at step {step}")]
    Instability { step: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}", format_issues(.0))]
    Schema(Vec<ConfigIssue>),
}

/// One problem found while parsing a study config.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    /// 1-based line number, 0 when the issue is not tied to a line.
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            write!(f, "{}", self.message)
        }
    }
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    let mut out = format!("{} config error(s)", issues.len());
    for issue in issues {
        out.push_str("\n  ");
        out.push_str(&issue.to_string());
    }
    out
}

pub type Result<T> = std::result::Result<T, Error>;
