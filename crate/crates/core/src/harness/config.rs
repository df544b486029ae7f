use std::collections::BTreeMap;
use std::path::PathBuf;

use num_complex::Complex64;

use crate::beam_dynamics::{BandEnvelope, Envelope, ExternalPotential, InitialDataSpec, PhaseProfile};
use crate::cell_spectral::{
    CellProblem, GaugeRule, PeriodicPotential, PlaneWaveBasis, DEFAULT_GAP_MIN, DEFAULT_GAUGE_RANGE,
};
use crate::error::{ConfigIssue, Error, Result};
use crate::reference_solver::DEFAULT_DT_FACTOR;
use crate::wavefield::{Grid, SuperpositionSpec, MIN_RCUT_FACTOR};

/// Largest admissible ε on a study ladder.
pub const MAX_EPSILON: f64 = 0.125;
pub const DEFAULT_CUTOFF: usize = 10;
pub const DEFAULT_POINTS_PER_CELL: usize = 32;
pub const DEFAULT_DX0_FACTOR: f64 = 0.25;

const FIXED_KEYS: &[&str] = &[
    "basis.cutoff",
    "gap_min",
    "gauge.range",
    "external.form",
    "external.omega",
    "external.depth",
    "external.width",
    "external.center",
    "external.amplitude",
    "external.wavenumber",
    "S0.form",
    "S0.c",
    "S0.alpha",
    "S0.beta",
    "S0.sigma",
    "bands",
    "K0",
    "epsilons",
    "T",
    "with_A1",
    "parallel",
    "beam.dt",
    "beam.rcut_factor",
    "reference.dt_factor",
    "reference.resolution_gate",
    "reference.step_gate",
    "quadrature.dx0_factor",
    "grid.points_per_cell",
    "grid.box_length",
    "grid.center",
    "output",
];

const ENVELOPE_FIELDS: &[&str] = &["form", "amplitude", "sigma", "width", "center"];

/// A validated convergence study.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub potential: PeriodicPotential,
    pub cutoff: usize,
    pub gap_min: f64,
    pub gauge_range: f64,
    pub external: ExternalPotential,
    pub initial: InitialDataSpec,
    /// Strictly decreasing, consecutive ratio 2.
    pub epsilons: Vec<f64>,
    pub t_final: f64,
    pub with_a1: bool,
    pub parallel: bool,
    /// Beam RK4 step; `None` means `1e-3 · min(1, T)`.
    pub beam_dt: Option<f64>,
    pub ref_dt_factor: f64,
    pub dx0_factor: f64,
    pub rcut_factor: f64,
    pub points_per_cell: usize,
    pub box_length: f64,
    pub grid_center: f64,
    pub output: PathBuf,
    pub resolution_gate: bool,
    pub step_gate: bool,
    /// Non-fatal remarks such as overridden duplicate keys.
    pub warnings: Vec<ConfigIssue>,
}

impl StudyConfig {
    pub fn cell(&self) -> Result<CellProblem> {
        let mut cell = CellProblem::new(self.potential.clone(), PlaneWaveBasis::new(self.cutoff)?)?
            .with_gauge(GaugeRule::Continued, self.gauge_range);
        cell.gap_min = self.gap_min;
        Ok(cell)
    }

    pub fn beam_dt(&self) -> f64 {
        self.beam_dt.unwrap_or(1e-3 * self.t_final.min(1.0).max(f64::MIN_POSITIVE))
    }

    pub fn grid(&self, epsilon: f64) -> Result<Grid> {
        Grid::commensurate(self.grid_center, self.box_length, epsilon, self.points_per_cell)
    }

    pub fn superposition(&self, epsilon: f64) -> SuperpositionSpec {
        SuperpositionSpec {
            dx0: self.dx0_factor * epsilon.sqrt(),
            bands: self.initial.bands(),
            with_a1: self.with_a1,
            rcut_factor: self.rcut_factor,
            parallel: self.parallel,
        }
    }
}

struct Entry {
    line: usize,
    value: String,
}

struct Reader {
    entries: BTreeMap<String, Entry>,
    issues: Vec<ConfigIssue>,
}

fn issue(line: usize, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue {
        line,
        message: message.into(),
    }
}

/// Parses a number, allowing a fraction `a/b`.
pub fn parse_number(text: &str) -> std::result::Result<f64, String> {
    let text = text.trim();
    let value = match text.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("malformed number `{text}`"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("malformed number `{text}`"))?;
            if b == 0.0 {
                return Err(format!("zero denominator in `{text}`"));
            }
            a / b
        }
        None => text.parse().map_err(|_| format!("malformed number `{text}`"))?,
    };
    if !value.is_finite() {
        return Err(format!("non-finite number `{text}`"));
    }
    Ok(value)
}

fn parse_bool(text: &str) -> std::result::Result<bool, String> {
    match text.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(format!("expected a boolean, got `{other}`")),
    }
}

fn parse_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split(',').map(parse_number).collect()
}

/// `potential.vN` or `potential.vN.im`.
fn potential_key(key: &str) -> Option<(usize, bool)> {
    let rest = key.strip_prefix("potential.v")?;
    let (index, imag) = match rest.strip_suffix(".im") {
        Some(i) => (i, true),
        None => (rest, false),
    };
    if index.is_empty() || !index.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((index.parse().ok()?, imag))
}

/// `envelope.N.field`.
fn envelope_key(key: &str) -> Option<(usize, &str)> {
    let rest = key.strip_prefix("envelope.")?;
    let (index, field) = rest.split_once('.')?;
    let band: usize = index.parse().ok()?;
    ENVELOPE_FIELDS.contains(&field).then_some((band, field))
}

fn known_key(key: &str) -> bool {
    FIXED_KEYS.contains(&key) || potential_key(key).is_some() || envelope_key(key).is_some()
}

impl Reader {
    fn new(text: &str) -> (Self, Vec<ConfigIssue>) {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        let mut issues = Vec::new();
        let mut warnings = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                issues.push(issue(line, format!("expected `key = value`, got `{content}`")));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if !known_key(key) {
                issues.push(issue(line, format!("unknown key `{key}`")));
                continue;
            }
            if value.is_empty() {
                issues.push(issue(line, format!("empty value for `{key}`")));
                continue;
            }
            if let Some(prev) = entries.get(key) {
                warnings.push(issue(
                    line,
                    format!("duplicate key `{key}` overrides line {}", prev.line),
                ));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    line,
                    value: value.to_string(),
                },
            );
        }
        (Reader { entries, issues }, warnings)
    }

    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn with<T>(
        &mut self,
        key: &str,
        parse: impl FnOnce(&str) -> std::result::Result<T, String>,
    ) -> Option<T> {
        let entry = self.entries.get(key)?;
        match parse(&entry.value) {
            Ok(v) => Some(v),
            Err(msg) => {
                let line = entry.line;
                self.issues.push(issue(line, format!("`{key}`: {msg}")));
                None
            }
        }
    }

    fn number(&mut self, key: &str) -> Option<f64> {
        self.with(key, parse_number)
    }

    fn number_or(&mut self, key: &str, default: f64) -> f64 {
        self.number(key).unwrap_or(default)
    }

    fn required(&mut self, key: &str, context: &str) -> Option<f64> {
        if self.entries.contains_key(key) {
            self.number(key)
        } else {
            self.issues.push(issue(0, format!("missing `{key}` ({context})")));
            None
        }
    }

    fn positive(&mut self, key: &str, default: Option<f64>, context: &str) -> Option<f64> {
        let value = match default {
            Some(d) => Some(self.number_or(key, d)),
            None => self.required(key, context),
        }?;
        if !(value > 0.0) {
            let line = self.line(key);
            self.issues.push(issue(line, format!("`{key}` must be positive, got {value}")));
            return None;
        }
        Some(value)
    }

    fn boolean(&mut self, key: &str, default: bool) -> bool {
        self.with(key, parse_bool).unwrap_or(default)
    }

    fn count(&mut self, key: &str, default: usize) -> usize {
        self.with(key, |s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| format!("expected a non-negative integer, got `{s}`"))
        })
        .unwrap_or(default)
    }

    fn push(&mut self, line: usize, message: impl Into<String>) {
        self.issues.push(issue(line, message));
    }
}

fn read_potential(r: &mut Reader) -> Option<PeriodicPotential> {
    let keys: Vec<(String, usize, bool)> = r
        .entries
        .keys()
        .filter_map(|k| potential_key(k).map(|(n, im)| (k.clone(), n, im)))
        .collect();
    let top = keys.iter().map(|(_, n, _)| *n).max().unwrap_or(0);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); top + 1];
    let mut ok = true;
    for (key, n, imag) in keys {
        match r.number(&key) {
            Some(v) if imag => coeffs[n].im = v,
            Some(v) => coeffs[n].re = v,
            None => ok = false,
        }
    }
    if coeffs[0].im != 0.0 {
        let line = r.line("potential.v0.im");
        r.push(line, "`potential.v0.im` must be zero for a real potential");
        return None;
    }
    if !ok {
        return None;
    }
    match PeriodicPotential::from_nonnegative(coeffs) {
        Ok(p) => Some(p),
        Err(e) => {
            r.push(0, e.to_string());
            None
        }
    }
}

fn read_external(r: &mut Reader) -> Option<ExternalPotential> {
    let form = r.raw("external.form").unwrap_or("zero").to_string();
    let line = r.line("external.form");
    match form.as_str() {
        "zero" | "none" => Some(ExternalPotential::Zero),
        "harmonic" => Some(ExternalPotential::Harmonic {
            omega: r.number_or("external.omega", 1.0),
        }),
        "gaussian_well" => {
            let depth = r.required("external.depth", "gaussian_well external potential");
            let width = r.positive("external.width", None, "gaussian_well external potential");
            let center = r.number_or("external.center", 0.0);
            Some(ExternalPotential::GaussianWell {
                depth: depth?,
                width: width?,
                center,
            })
        }
        "cosine" => {
            let amplitude = r.required("external.amplitude", "cosine external potential");
            let wavenumber = r.required("external.wavenumber", "cosine external potential");
            Some(ExternalPotential::Cosine {
                amplitude: amplitude?,
                wavenumber: wavenumber?,
            })
        }
        other => {
            r.push(
                line,
                format!("unknown external.form `{other}` (zero, harmonic, gaussian_well, cosine)"),
            );
            None
        }
    }
}

fn read_phase(r: &mut Reader) -> Option<PhaseProfile> {
    let form = r.raw("S0.form").unwrap_or("linear").to_string();
    let line = r.line("S0.form");
    match form.as_str() {
        "linear" => Some(PhaseProfile::Linear {
            c: r.number_or("S0.c", 0.0),
        }),
        "quadratic" => r
            .required("S0.alpha", "quadratic S0")
            .map(|alpha| PhaseProfile::Quadratic { alpha }),
        "gaussian" => {
            let beta = r.required("S0.beta", "gaussian S0");
            let sigma = r.positive("S0.sigma", None, "gaussian S0");
            Some(PhaseProfile::GaussianPhase {
                beta: beta?,
                sigma: sigma?,
            })
        }
        other => {
            r.push(line, format!("unknown S0.form `{other}` (linear, quadratic, gaussian)"));
            None
        }
    }
}

fn read_envelope(r: &mut Reader, band: usize) -> Option<Envelope> {
    let key = |f: &str| format!("envelope.{band}.{f}");
    let form = r.raw(&key("form")).unwrap_or("gaussian").to_string();
    let amplitude = r.number_or(&key("amplitude"), 1.0);
    let center = r.number_or(&key("center"), 0.0);
    match form.as_str() {
        "gaussian" => r
            .positive(&key("sigma"), None, "gaussian envelope")
            .map(|sigma| Envelope::Gaussian {
                amplitude,
                sigma,
                center,
            }),
        "cosine_bump" => r
            .positive(&key("width"), None, "cosine_bump envelope")
            .map(|width| Envelope::CosineBump {
                amplitude,
                width,
                center,
            }),
        other => {
            let line = r.line(&key("form"));
            r.push(line, format!("unknown envelope form `{other}` (gaussian, cosine_bump)"));
            None
        }
    }
}

fn read_bands(r: &mut Reader) -> Option<Vec<usize>> {
    let mut envelope_bands: Vec<usize> = r
        .entries
        .keys()
        .filter_map(|k| envelope_key(k).map(|(b, _)| b))
        .collect();
    envelope_bands.sort_unstable();
    envelope_bands.dedup();
    let line = r.line("bands");
    let bands = match r.raw("bands") {
        Some(text) => {
            let mut out = Vec::new();
            for token in text.split(',') {
                match token.trim().parse::<usize>() {
                    Ok(b) if b >= 1 => out.push(b),
                    _ => {
                        r.push(line, format!("`bands`: `{}` is not a band index >= 1", token.trim()));
                        return None;
                    }
                }
            }
            out
        }
        None => envelope_bands.clone(),
    };
    if bands.is_empty() {
        r.push(0, "no bands selected (set `bands` and `envelope.N.*`)");
        return None;
    }
    let mut sorted = bands.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != bands.len() {
        r.push(line, "`bands` lists a band twice");
        return None;
    }
    for b in envelope_bands {
        if !sorted.contains(&b) {
            let line = r.line(&format!("envelope.{b}.form")).max(r.line(&format!("envelope.{b}.sigma")));
            r.push(line, format!("envelope given for band {b}, which is not in `bands`"));
        }
    }
    Some(sorted)
}

fn ladder_token(text: &str, i: usize) -> String {
    text.split(',').nth(i).map_or(String::new(), |s| s.trim().to_string())
}

fn read_ladder(r: &mut Reader) -> Option<Vec<f64>> {
    if !r.entries.contains_key("epsilons") {
        r.push(0, "missing `epsilons` (the ε ladder)");
        return None;
    }
    let line = r.line("epsilons");
    let text = r.raw("epsilons").unwrap_or_default().to_string();
    let ladder = r.with("epsilons", parse_list)?;
    let mut ok = true;
    for (i, &e) in ladder.iter().enumerate() {
        if !(e > 0.0 && e <= MAX_EPSILON) {
            r.push(line, format!("ε = {} must lie in (0, 1/8]", ladder_token(&text, i)));
            ok = false;
        }
    }
    for i in 1..ladder.len() {
        let (a, b) = (ladder[i - 1], ladder[i]);
        let (ta, tb) = (ladder_token(&text, i - 1), ladder_token(&text, i));
        if !(b < a) {
            r.push(line, format!("ladder must be strictly decreasing: {ta} is followed by {tb}"));
            ok = false;
        } else if ((a / b) - 2.0).abs() > 1e-9 {
            r.push(
                line,
                format!("ladder pair ({ta}, {tb}) has ratio {:.6}, expected 2", a / b),
            );
            ok = false;
        }
    }
    ok.then_some(ladder)
}

/// Parses a study config, collecting every schema violation.
pub fn parse_config(text: &str) -> Result<StudyConfig> {
    let (mut r, warnings) = Reader::new(text);
    let potential = read_potential(&mut r);
    let external = read_external(&mut r);
    let phase = read_phase(&mut r);
    let bands = read_bands(&mut r);
    let envelopes: Option<Vec<BandEnvelope>> = bands.as_ref().and_then(|bands| {
        let list: Vec<Option<BandEnvelope>> = bands
            .iter()
            .map(|&band| read_envelope(&mut r, band).map(|envelope| BandEnvelope { band, envelope }))
            .collect();
        list.into_iter().collect()
    });
    let k0 = match r.raw("K0") {
        Some(_) => {
            let line = r.line("K0");
            match r.with("K0", parse_list) {
                Some(v) if v.len() == 2 && v[0] < v[1] => Some((v[0], v[1])),
                Some(_) => {
                    r.push(line, "`K0` must be `lo, hi` with lo < hi");
                    None
                }
                None => None,
            }
        }
        None => envelopes.as_ref().map(|envs| {
            envs.iter()
                .map(|e| e.envelope.effective_support())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, s| {
                    (acc.0.min(s.0), acc.1.max(s.1))
                })
        }),
    };
    let epsilons = read_ladder(&mut r);
    let t_final = r.required("T", "final time");
    if let Some(t) = t_final {
        if t < 0.0 {
            let line = r.line("T");
            r.push(line, format!("`T` must be non-negative, got {t}"));
        }
    }
    let with_a1 = r.boolean("with_A1", true);
    let parallel = r.boolean("parallel", true);
    let beam_dt = if r.raw("beam.dt").is_some() {
        r.positive("beam.dt", None, "beam step")
    } else {
        None
    };
    let ref_dt_factor = r.positive("reference.dt_factor", Some(DEFAULT_DT_FACTOR), "").unwrap_or(DEFAULT_DT_FACTOR);
    let dx0_factor = r
        .positive("quadrature.dx0_factor", Some(DEFAULT_DX0_FACTOR), "")
        .unwrap_or(DEFAULT_DX0_FACTOR);
    if dx0_factor > DEFAULT_DX0_FACTOR {
        let line = r.line("quadrature.dx0_factor");
        r.push(line, format!("`quadrature.dx0_factor` must be <= 1/4, got {dx0_factor}"));
    }
    let rcut_factor = r.number_or("beam.rcut_factor", MIN_RCUT_FACTOR);
    if rcut_factor < MIN_RCUT_FACTOR {
        let line = r.line("beam.rcut_factor");
        r.push(line, format!("`beam.rcut_factor` must be >= {MIN_RCUT_FACTOR}, got {rcut_factor}"));
    }
    let points_per_cell = r.count("grid.points_per_cell", DEFAULT_POINTS_PER_CELL);
    if !points_per_cell.is_power_of_two() || points_per_cell < 16 {
        let line = r.line("grid.points_per_cell");
        r.push(line, format!("`grid.points_per_cell` must be a power of two >= 16, got {points_per_cell}"));
    }
    let v_cutoff = potential.as_ref().map_or(0, |p| p.cutoff());
    let cutoff = r.count("basis.cutoff", DEFAULT_CUTOFF.max(v_cutoff + 2));
    if cutoff < v_cutoff + 2 {
        let line = r.line("basis.cutoff");
        r.push(line, format!("`basis.cutoff` must be at least {} for this potential", v_cutoff + 2));
    }
    let gap_min = r.positive("gap_min", Some(DEFAULT_GAP_MIN), "").unwrap_or(DEFAULT_GAP_MIN);
    let gauge_range = r.positive("gauge.range", Some(DEFAULT_GAUGE_RANGE), "").unwrap_or(DEFAULT_GAUGE_RANGE);
    let (box_length, grid_center) = match k0 {
        Some((lo, hi)) => {
            let length = r.positive("grid.box_length", Some(2.0 * (hi - lo)), "").unwrap_or(0.0);
            let center = r.number_or("grid.center", 0.5 * (lo + hi));
            if center - 0.5 * length > lo || center + 0.5 * length < hi {
                let line = r.line("grid.box_length").max(r.line("grid.center"));
                r.push(line, format!("grid box of length {length} around {center} does not contain K0 = [{lo}, {hi}]"));
            }
            (length, center)
        }
        None => (0.0, 0.0),
    };
    let resolution_gate = r.boolean("reference.resolution_gate", true);
    let step_gate = r.boolean("reference.step_gate", true);
    let output = PathBuf::from(r.raw("output").unwrap_or("out"));

    let initial = match (phase, envelopes, k0) {
        (Some(phase), Some(envelopes), Some(k0)) => match InitialDataSpec::new(phase, envelopes, k0) {
            Ok(spec) => Some(spec),
            Err(e) => {
                let line = r.line("K0");
                r.push(line, e.to_string());
                None
            }
        },
        _ => None,
    };
    if !r.issues.is_empty() {
        let mut issues = r.issues;
        issues.sort_by_key(|i| i.line);
        return Err(Error::Schema(issues));
    }
    let missing = || Error::Schema(vec![issue(0, "incomplete config")]);
    Ok(StudyConfig {
        potential: potential.ok_or_else(missing)?,
        cutoff,
        gap_min,
        gauge_range,
        external: external.ok_or_else(missing)?,
        initial: initial.ok_or_else(missing)?,
        epsilons: epsilons.ok_or_else(missing)?,
        t_final: t_final.ok_or_else(missing)?,
        with_a1,
        parallel,
        beam_dt,
        ref_dt_factor,
        dx0_factor,
        rcut_factor,
        points_per_cell,
        box_length,
        grid_center,
        output,
        resolution_gate,
        step_gate,
        warnings,
    })
}

/// Reads and parses a config file.
pub fn load_config(path: &std::path::Path) -> Result<StudyConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
