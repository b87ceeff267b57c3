//! Parameter-grid scans, period reports, pixmap rendering and export.
//!
//! Cells are sampled at their centers: column `i`, row `j` (row 0 at the top)
//! is `λ = left + (i + ½)·dx + i·(top − (j + ½)·dy)`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::activity::activity_indicator;
use crate::config::OrbitConfig;
use crate::error::{Error, Result};
use crate::families::{singular_value, Family};
use crate::orbit::{iterate_orbit, OrbitFate};
use crate::sphere::complex_json;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanTask {
    FateMap,
    PeriodMap,
    MultiplierMap,
    ActivityMap,
}

impl FromStr for ScanTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fate" | "FateMap" => Ok(ScanTask::FateMap),
            "period" | "PeriodMap" => Ok(ScanTask::PeriodMap),
            "multiplier" | "MultiplierMap" => Ok(ScanTask::MultiplierMap),
            "activity" | "ActivityMap" => Ok(ScanTask::ActivityMap),
            _ => Err(Error::InvalidArgument(format!("unknown scan task: {s}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(with = "complex_json")]
    pub center: Complex64,
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub task: ScanTask,
    pub orbit: OrbitConfig,
}

impl GridSpec {
    pub fn new(center: Complex64, width: f64, height: f64, nx: usize, ny: usize, task: ScanTask) -> Self {
        GridSpec { center, width, height, nx, ny, task, orbit: OrbitConfig::default() }
    }

    /// Grid over the rectangle `[re0, re1] × [im0, im1]`.
    pub fn from_bounds(re: (f64, f64), im: (f64, f64), nx: usize, ny: usize, task: ScanTask) -> Self {
        let center = Complex64::new((re.0 + re.1) / 2.0, (im.0 + im.1) / 2.0);
        GridSpec::new(center, re.1 - re.0, im.1 - im.0, nx, ny, task)
    }

    /// Square grid bounding the disk `B(center, radius)`.
    pub fn disk_box(center: Complex64, radius: f64, n: usize, task: ScanTask) -> Self {
        GridSpec::new(center, 2.0 * radius, 2.0 * radius, n, n, task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidArgument("nx and ny must be >= 1".into()));
        }
        if !(self.width > 0.0 && self.height > 0.0 && self.width.is_finite() && self.height.is_finite()) {
            return Err(Error::InvalidArgument("width and height must be positive".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.width / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.height / self.ny as f64
    }

    pub fn left(&self) -> f64 {
        self.center.re - self.width / 2.0
    }

    pub fn top(&self) -> f64 {
        self.center.im + self.height / 2.0
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.left() + (i as f64 + 0.5) * self.dx(), self.top() - (j as f64 + 0.5) * self.dy())
    }

    /// Row-major index of the cell containing `λ`, if any.
    pub fn cell_of(&self, lambda: Complex64) -> Option<(usize, usize)> {
        let fi = ((lambda.re - self.left()) / self.dx()).floor();
        let fj = ((self.top() - lambda.im) / self.dy()).floor();
        (fi >= 0.0 && fj >= 0.0 && (fi as usize) < self.nx && (fj as usize) < self.ny)
            .then_some((fi as usize, fj as usize))
    }
}

/// Per-cell output. `code`/`value` meaning depends on the task:
/// FateMap — fate code (0 undecided, 1 captured, 2 captured at ∞,
/// 3 escaping, 4 truncated) and |ρ|, truncation/exit step or `max_iter`;
/// PeriodMap — attracting period (0 none) and |ρ| (0 when none);
/// MultiplierMap — period and |ρ| (1.0 when none);
/// ActivityMap — capture period and the activity indicator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub code: u32,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub family: String,
    pub sv_index: usize,
    pub config_hash: String,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub spec: GridSpec,
    pub cells: Vec<Cell>,
    pub metadata: GridMetadata,
}

impl GridResult {
    pub fn cell(&self, i: usize, j: usize) -> Cell {
        self.cells[j * self.spec.nx + i]
    }

    pub fn cell_at(&self, lambda: Complex64) -> Option<Cell> {
        self.spec.cell_of(lambda).map(|(i, j)| self.cell(i, j))
    }
}

pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// Hex prefix of the SHA-256 of the family, singular value and spec.
pub fn config_hash(family: &str, sv_index: usize, spec: &GridSpec) -> String {
    let payload = serde_json::json!({ "family": family, "sv_index": sv_index, "spec": spec });
    let digest = Sha256::digest(payload.to_string().as_bytes());
    hex::encode(digest)[..16].to_string()
}

fn eval_cell(fam: &dyn Family, sv_index: usize, lambda: Complex64, spec: &GridSpec) -> Result<Cell> {
    let cfg = &spec.orbit;
    if spec.task == ScanTask::ActivityMap {
        let ind = activity_indicator(fam, sv_index, lambda, cfg)?;
        return Ok(Cell { code: ind.capture_period.unwrap_or(0) as u32, value: ind.value });
    }
    let sv = singular_value(fam, sv_index)?;
    let fate = iterate_orbit(fam, lambda, sv.value(lambda), cfg)?.fate;
    let captured = fate.captured_cycle().map(|c| (c.period as u32, c.multiplier_modulus()));
    Ok(match spec.task {
        ScanTask::FateMap => {
            let value = match &fate {
                OrbitFate::Captured { cycle, .. } => cycle.multiplier_modulus(),
                OrbitFate::Truncated { step } => *step as f64,
                OrbitFate::Escaping { first_exit_step } => *first_exit_step as f64,
                OrbitFate::Undecided { max_iter } => *max_iter as f64,
            };
            Cell { code: fate.code() as u32, value }
        }
        ScanTask::PeriodMap => captured.map_or(Cell { code: 0, value: 0.0 }, |(p, m)| Cell { code: p, value: m }),
        ScanTask::MultiplierMap => {
            captured.map_or(Cell { code: 0, value: 1.0 }, |(p, m)| Cell { code: p, value: m })
        }
        ScanTask::ActivityMap => unreachable!(),
    })
}

/// Evaluates the task at every cell center. `threads = 0` uses the
/// available parallelism; rows are split into contiguous chunks.
pub fn scan_grid_threads(fam: &dyn Family, sv_index: usize, spec: &GridSpec, threads: usize) -> Result<GridResult> {
    spec.validate()?;
    singular_value(fam, sv_index)?;
    let workers = if threads == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        threads
    }
    .clamp(1, spec.ny);
    let rows_per = spec.ny.div_ceil(workers);
    let mut cells = vec![Cell { code: 0, value: 0.0 }; spec.nx * spec.ny];
    let results: Vec<Result<()>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cells
            .chunks_mut(rows_per * spec.nx)
            .enumerate()
            .map(|(chunk, out)| {
                scope.spawn(move || -> Result<()> {
                    for (k, cell) in out.iter_mut().enumerate() {
                        let (i, j) = (k % spec.nx, chunk * rows_per + k / spec.nx);
                        *cell = eval_cell(fam, sv_index, spec.cell_center(i, j), spec)?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("scan worker panicked")).collect()
    });
    results.into_iter().collect::<Result<()>>()?;
    Ok(GridResult {
        spec: *spec,
        cells,
        metadata: GridMetadata {
            family: fam.id().to_string(),
            sv_index,
            config_hash: config_hash(fam.id(), sv_index, spec),
            version: version_string(),
        },
    })
}

pub fn scan_grid(fam: &dyn Family, sv_index: usize, spec: &GridSpec) -> Result<GridResult> {
    scan_grid_threads(fam, sv_index, spec, 0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub max_period: usize,
    pub histogram: BTreeMap<usize, usize>,
    pub undecided: usize,
}

pub fn period_report(result: &GridResult) -> Result<PeriodReport> {
    if result.spec.task != ScanTask::PeriodMap {
        return Err(Error::InvalidArgument("period report needs a PeriodMap".into()));
    }
    let mut histogram = BTreeMap::new();
    let mut undecided = 0;
    for c in &result.cells {
        if c.code == 0 {
            undecided += 1;
        } else {
            *histogram.entry(c.code as usize).or_insert(0) += 1;
        }
    }
    let max_period = histogram.keys().next_back().copied().unwrap_or(0);
    Ok(PeriodReport { max_period, histogram, undecided })
}

pub fn period_bound_report(fam: &dyn Family, sv_index: usize, region: &GridSpec) -> Result<PeriodReport> {
    if region.task != ScanTask::PeriodMap {
        return Err(Error::InvalidArgument("period report needs a PeriodMap".into()));
    }
    period_report(&scan_grid(fam, sv_index, region)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoherenceReport {
    /// 3×3 blocks whose nine cells share one attracting period.
    pub blocks: usize,
    /// Such blocks whose center has a nonzero activity indicator.
    pub violations: usize,
}

/// Checks that uniform-period 3×3 blocks have passive centers.
pub fn period_coherence(period: &GridResult, activity: &GridResult) -> Result<CoherenceReport> {
    let (s, a) = (&period.spec, &activity.spec);
    if s.task != ScanTask::PeriodMap || a.task != ScanTask::ActivityMap {
        return Err(Error::InvalidArgument("need a PeriodMap and an ActivityMap".into()));
    }
    if (s.center, s.width, s.height, s.nx, s.ny) != (a.center, a.width, a.height, a.nx, a.ny) {
        return Err(Error::InvalidArgument("grids differ".into()));
    }
    let mut report = CoherenceReport { blocks: 0, violations: 0 };
    for j in 1..s.ny.saturating_sub(1) {
        for i in 1..s.nx.saturating_sub(1) {
            let code = period.cell(i, j).code;
            let uniform = code != 0
                && (j - 1..=j + 1).all(|jj| (i - 1..=i + 1).all(|ii| period.cell(ii, jj).code == code));
            if uniform {
                report.blocks += 1;
                if activity.cell(i, j).value != 0.0 {
                    report.violations += 1;
                }
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Palette {
    Period,
    Fate,
    LogMultiplier,
    Activity,
}

impl FromStr for Palette {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "period" => Ok(Palette::Period),
            "fate" => Ok(Palette::Fate),
            "log-multiplier" => Ok(Palette::LogMultiplier),
            "activity" => Ok(Palette::Activity),
            _ => Err(Error::InvalidArgument(format!("unknown palette: {s}"))),
        }
    }
}

impl fmt::Display for Palette {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Palette::Period => "period",
            Palette::Fate => "fate",
            Palette::LogMultiplier => "log-multiplier",
            Palette::Activity => "activity",
        })
    }
}

/// Period colors: index `(p − 1) mod 12`; period 0 (undecided) is black.
pub const PERIOD_COLORS: [[u8; 3]; 12] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
    [174, 199, 232],
    [255, 187, 120],
];

/// Fate colors indexed by fate code.
pub const FATE_COLORS: [[u8; 3]; 5] = [[0, 0, 0], [44, 160, 44], [31, 119, 180], [255, 127, 14], [214, 39, 40]];

pub fn period_color(code: u32) -> [u8; 3] {
    if code == 0 {
        [0, 0, 0]
    } else {
        PERIOD_COLORS[(code as usize - 1) % PERIOD_COLORS.len()]
    }
}

fn shade(t: f64) -> u8 {
    (t.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn pixel(palette: Palette, cell: Cell) -> [u8; 3] {
    match palette {
        Palette::Period => period_color(cell.code),
        Palette::Fate => FATE_COLORS.get(cell.code as usize).copied().unwrap_or([255, 255, 255]),
        Palette::LogMultiplier => {
            if cell.code == 0 {
                return [0, 0, 0];
            }
            // white at |ρ| ≤ 1e-16, dark near |ρ| = 1
            let t = if cell.value > 0.0 { (-cell.value.log10() / 16.0).clamp(0.0, 1.0) } else { 1.0 };
            let g = shade(0.15 + 0.85 * t);
            [g, g, g]
        }
        Palette::Activity => {
            if cell.value == 0.0 {
                return [8, 24, 88];
            }
            let t = cell.value;
            [shade(t.sqrt()), shade(t * t), shade(0.2 * (1.0 - t))]
        }
    }
}

/// Binary P6 bytes for `result`.
pub fn pixmap_bytes(result: &GridResult, palette: Palette) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", result.spec.nx, result.spec.ny);
    let mut out = Vec::with_capacity(header.len() + 3 * result.cells.len());
    out.extend_from_slice(header.as_bytes());
    for &c in &result.cells {
        out.extend_from_slice(&pixel(palette, c));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Georeference {
    pub left: f64,
    pub top: f64,
    pub dx: f64,
    pub dy: f64,
    /// Offset of a pixel's sample point from its top-left corner, in cells.
    pub sample_offset: [f64; 2],
    pub convention: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub spec: GridSpec,
    pub metadata: GridMetadata,
    pub palette: Palette,
    pub georeference: Georeference,
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the pixmap to `out` and its sidecar to `<out>.json`.
pub fn render(result: &GridResult, palette: Palette, out: &Path) -> Result<()> {
    std::fs::write(out, pixmap_bytes(result, palette))?;
    let s = &result.spec;
    let sidecar = Sidecar {
        spec: *s,
        metadata: result.metadata.clone(),
        palette,
        georeference: Georeference {
            left: s.left(),
            top: s.top(),
            dx: s.dx(),
            dy: s.dy(),
            sample_offset: [0.5, 0.5],
            convention: "pixel (i, j), row 0 at the top, samples re = left + (i + 0.5)*dx, im = top - (j + 0.5)*dy"
                .into(),
        },
    };
    let mut json = serde_json::to_string_pretty(&sidecar)?;
    json.push('\n');
    std::fs::write(sidecar_path(out), json)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExportFormat {
    Json,
    Csv,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            _ => Err(Error::InvalidArgument(format!("unknown export format: {s}"))),
        }
    }
}

impl ExportFormat {
    /// Guesses the format from a file extension (default JSON).
    pub fn from_path(p: &Path) -> Self {
        match p.extension().and_then(|e| e.to_str()) {
            Some("csv") => ExportFormat::Csv,
            _ => ExportFormat::Json,
        }
    }
}

pub fn to_csv(result: &GridResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["re", "im", "code", "value"]).expect("in-memory write");
    let s = &result.spec;
    for j in 0..s.ny {
        for i in 0..s.nx {
            let l = s.cell_center(i, j);
            let c = result.cell(i, j);
            w.write_record([l.re.to_string(), l.im.to_string(), c.code.to_string(), c.value.to_string()])
                .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn export(result: &GridResult, format: ExportFormat, out: &Path) -> Result<()> {
    let mut f = std::fs::File::create(out)?;
    match format {
        ExportFormat::Json => {
            serde_json::to_writer_pretty(&mut f, result)?;
            f.write_all(b"\n")?;
        }
        ExportFormat::Csv => f.write_all(to_csv(result).as_bytes())?,
    }
    Ok(())
}

pub fn import_json(path: &Path) -> Result<GridResult> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Rows of an exported CSV as `(λ, cell)`.
pub fn import_csv(path: &Path) -> Result<Vec<(Complex64, Cell)>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    if r.headers().map_err(csv_error)? != vec!["re", "im", "code", "value"] {
        return Err(Error::InvalidArgument("unexpected CSV header".into()));
    }
    r.deserialize::<(f64, f64, u32, f64)>()
        .map(|row| {
            let (re, im, code, value) = row.map_err(csv_error)?;
            Ok((Complex64::new(re, im), Cell { code, value }))
        })
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}
