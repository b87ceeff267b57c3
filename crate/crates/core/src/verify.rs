//! Acceptance suite: each criterion is a list of named checks with a
//! measured runtime.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::activity::{classify, ActiveEvidence, PassiveReason, Verdict, VerdictKind};
use crate::config::RunConfig;
use crate::continuation::{continue_backward_orbit, continue_cycle, stability_probe, AbortReason, ProbeConfig, TraceStatus};
use crate::error::Result;
use crate::families::{builtin, evaluate, Family};
use crate::orbit::{backward_sample, find_cycle_newton, iterate_orbit, CycleRecord, OrbitFate};
use crate::scan::{
    export, pixmap_bytes, period_bound_report, period_coherence, render, scan_grid_threads, ExportFormat, GridSpec,
    Palette, ScanTask,
};
use crate::shooting::{find_misiurewicz, find_truncation_parameters, verify_attracting_near_virtual};
use crate::sphere::{chordal_distance, SpherePoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Suite {
    Quadratic,
    Tangent,
    All,
}

impl Suite {
    pub fn criteria(self) -> &'static [u8] {
        match self {
            Suite::Quadratic => &[1, 2, 4, 5, 7, 8],
            Suite::Tangent => &[3, 6],
            Suite::All => &[1, 2, 3, 4, 5, 6, 7, 8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: String,
    pub checks: Vec<Check>,
    pub elapsed_secs: f64,
    pub runtime_limit_secs: Option<f64>,
}

impl CriterionOutcome {
    pub fn within_time(&self) -> bool {
        self.runtime_limit_secs.is_none_or(|l| self.elapsed_secs < l)
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed) && self.within_time()
    }

    /// One-line summary, e.g. `criterion 4 PASS holomorphic motion (0.21 s)`.
    pub fn summary_line(&self) -> String {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.passed).map(|c| c.label.as_str()).collect();
        let mut line = format!(
            "criterion {} {} {} ({:.2} s)",
            self.id,
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.elapsed_secs
        );
        if !failed.is_empty() {
            line.push_str(&format!(" failed: {}", failed.join(", ")));
        }
        if !self.within_time() {
            line.push_str(&format!(" over time limit {} s", self.runtime_limit_secs.unwrap_or_default()));
        }
        line
    }
}

struct Checks(Vec<Check>);

impl Checks {
    fn push(&mut self, label: &str, passed: bool, detail: impl Into<String>) {
        self.0.push(Check { label: label.into(), passed, detail: detail.into() });
    }

    /// Records a failed check when a step errors.
    fn attempt<T>(&mut self, label: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.push(label, false, format!("error: {e}"));
                None
            }
        }
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn criterion_name(id: u8) -> &'static str {
    match id {
        1 => "quadratic sanity",
        2 => "misiurewicz shooting",
        3 => "virtual cycle confirmation",
        4 => "holomorphic motion",
        5 => "stability dichotomy",
        6 => "tangent passivity",
        7 => "invariance and determinism",
        8 => "backward orbits",
        _ => "unknown",
    }
}

fn runtime_limit(id: u8) -> Option<f64> {
    match id {
        1 => Some(10.0),
        2 => Some(5.0),
        3 => Some(30.0),
        4 => Some(5.0),
        _ => None,
    }
}

pub fn run_criterion(id: u8, cfg: &RunConfig) -> CriterionOutcome {
    let start = Instant::now();
    let mut checks = Checks(Vec::new());
    match id {
        1 => quadratic_sanity(&mut checks, cfg),
        2 => misiurewicz_shooting(&mut checks, cfg),
        3 => virtual_cycles(&mut checks, cfg),
        4 => holomorphic_motion(&mut checks, cfg),
        5 => stability_dichotomy(&mut checks, cfg),
        6 => tangent_passivity(&mut checks, cfg),
        7 => invariance(&mut checks, cfg),
        8 => backward_orbits(&mut checks, cfg),
        _ => checks.push("criterion exists", false, format!("no criterion {id}")),
    }
    CriterionOutcome {
        id,
        name: criterion_name(id).to_string(),
        checks: checks.0,
        elapsed_secs: start.elapsed().as_secs_f64(),
        runtime_limit_secs: runtime_limit(id),
    }
}

pub fn run_suite(suite: Suite, cfg: &RunConfig) -> Vec<CriterionOutcome> {
    suite.criteria().iter().map(|&id| run_criterion(id, cfg)).collect()
}

/// Plain or ANSI-colored pass/fail table.
pub fn render_table(outcomes: &[CriterionOutcome], color: bool) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<4} {:<30} {:<6} {:>9}\n", "id", "criterion", "result", "seconds"));
    for o in outcomes {
        let status = if o.passed() { "PASS" } else { "FAIL" };
        let status = if color {
            format!("{}{status}\x1b[0m  ", if o.passed() { "\x1b[32m" } else { "\x1b[31m" })
        } else {
            format!("{status:<6}")
        };
        out.push_str(&format!("{:<4} {:<30} {} {:>9.2}\n", o.id, o.name, status, o.elapsed_secs));
        for ch in o.checks.iter().filter(|ch| !ch.passed) {
            out.push_str(&format!("       - {}: {}\n", ch.label, ch.detail));
        }
    }
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    out.push_str(&format!("{passed}/{} criteria passed\n", outcomes.len()));
    out
}

fn family(checks: &mut Checks, id: &str) -> Option<std::sync::Arc<dyn Family>> {
    checks.attempt("family", builtin(id))
}

/// First repelling cycle of the given period found from a grid of seeds.
fn repelling_cycle(fam: &dyn Family, lambda: Complex64, period: usize, cfg: &RunConfig) -> Option<CycleRecord> {
    (-8..=8).flat_map(|i| (-8..=8).map(move |j| c(0.25 * i as f64 + 0.01, 0.25 * j as f64 + 0.02))).find_map(|s| {
        find_cycle_newton(fam, lambda, period, SpherePoint::Finite(s), &cfg.orbit()).filter(|cy| cy.is_repelling())
    })
}

fn quadratic_sanity(checks: &mut Checks, cfg: &RunConfig) {
    let Some(q) = family(checks, "quadratic") else { return };
    let spec = GridSpec { orbit: cfg.orbit(), ..GridSpec::from_bounds((-2.5, 1.5), (-2.0, 2.0), 64, 64, ScanTask::PeriodMap) };
    if let Some(grid) = checks.attempt("period map", scan_grid_threads(q.as_ref(), 0, &spec, cfg.threads)) {
        for (lambda, period) in [(c(0.0, 0.0), 1), (c(-1.0, 0.0), 2)] {
            let code = grid.cell_at(lambda).map(|cell| cell.code);
            checks.push(&format!("period at {lambda}"), code == Some(period), format!("code {code:?}"));
        }
    }
    // multipliers at the exact parameters (cell centers are offset by half a cell)
    for lambda in [c(0.0, 0.0), c(-1.0, 0.0)] {
        let one = GridSpec { orbit: cfg.orbit(), ..GridSpec::new(lambda, 1e-3, 1e-3, 1, 1, ScanTask::MultiplierMap) };
        if let Some(g) = checks.attempt("multiplier cell", scan_grid_threads(q.as_ref(), 0, &one, 1)) {
            let v = g.cells[0].value;
            checks.push(&format!("|rho| at {lambda}"), v < 1e-9, format!("{v:e}"));
        }
    }
    let l = c(-1.1, 0.0);
    if let Some(rec) = checks.attempt("orbit at -1.1", iterate_orbit(q.as_ref(), l, SpherePoint::Finite(l), &cfg.orbit())) {
        let expected = 4.0 * (l + 1.0);
        match rec.fate.captured_cycle() {
            Some(cy) if cy.period == 2 => {
                let err = cy.multiplier.finite().map_or(f64::INFINITY, |m| (m - expected).norm());
                checks.push("2-cycle multiplier at -1.1", err < 1e-9, format!("error {err:e}"));
            }
            _ => checks.push("2-cycle multiplier at -1.1", false, format!("fate {:?}", rec.fate.code())),
        }
    }
}

fn misiurewicz_shooting(checks: &mut Checks, cfg: &RunConfig) {
    let Some(q) = family(checks, "quadratic") else { return };
    let l0 = c(0.2, 0.95);
    match repelling_cycle(q.as_ref(), l0, 2, cfg) {
        None => checks.push("2-cycle at seed", false, "no repelling 2-cycle found"),
        Some(cycle) => {
            let found =
                find_misiurewicz(q.as_ref(), 0, l0, 3, &cycle, 0.3, &cfg.step_control(), cfg.rng_seed);
            if let Some(found) = checks.attempt("find_misiurewicz", found) {
                let best = found.iter().map(|l| (l - c(0.0, 1.0)).norm()).fold(f64::INFINITY, f64::min);
                checks.push("recovers i", best < 1e-8, format!("|lambda* - i| = {best:e}"));
            }
        }
    }
    if let Some(v) = checks.attempt("classify at i", classify(q.as_ref(), 0, c(0.0, 1.0), 0.02, &cfg.classify())) {
        checks.push("active at i", v.verdict.kind() == VerdictKind::Active, format!("{:?}", v.verdict));
    }
}

fn virtual_cycles(checks: &mut Checks, cfg: &RunConfig) {
    let Some(t) = family(checks, "tangent") else { return };
    let target = c(0.0, -FRAC_PI_2);
    let recs = find_truncation_parameters(t.as_ref(), 0, c(0.0, -1.5), &[1], 0.5, cfg.rng_seed);
    let Some(recs) = checks.attempt("find_truncation_parameters", recs) else { return };
    let Some(vc) = recs.iter().find(|r| (r.lambda_vc - target).norm() < 1e-10) else {
        checks.push("recovers -i pi/2", false, format!("{} records, none at -i pi/2", recs.len()));
        return;
    };
    checks.push("recovers -i pi/2", true, format!("{}", vc.lambda_vc));
    checks.push("residual < 1e-10", vc.residual < 1e-10, format!("{:e}", vc.residual));
    let Some(entries) = checks.attempt("verify_attracting_near_virtual", verify_attracting_near_virtual(t.as_ref(), vc, 4, &cfg.orbit())) else {
        return;
    };
    checks.push("at least 3 entries", entries.len() >= 3, format!("{}", entries.len()));
    checks.push("period exactly 2", entries.iter().all(|e| e.period == 2), "");
    let decreasing = entries.windows(2).all(|w| w[1].multiplier_modulus < w[0].multiplier_modulus);
    checks.push("|rho| strictly decreasing", decreasing, "");
    if let (Some(first), Some(last)) = (entries.first(), entries.last()) {
        checks.push(
            "|rho_last| < |rho_first|/10",
            last.multiplier_modulus < first.multiplier_modulus / 10.0,
            format!("{:e} vs {:e}", last.multiplier_modulus, first.multiplier_modulus),
        );
    }
    let sv = &t.singular_values()[0];
    let captures = entries.iter().all(|e| {
        iterate_orbit(t.as_ref(), e.lambda, sv.value(e.lambda), &cfg.orbit()).is_ok_and(|r| {
            matches!(&r.fate, OrbitFate::Captured { cycle, .. } if cycle.period == 2 && cycle.is_attracting())
        })
    });
    checks.push("each captures the asymptotic value", captures, "");
}

fn beta(l: Complex64) -> Complex64 {
    (1.0 + (1.0 - 4.0 * l).sqrt()) / 2.0
}

fn holomorphic_motion(checks: &mut Checks, cfg: &RunConfig) {
    let Some(q) = family(checks, "quadratic") else { return };
    let ctl = cfg.step_control();
    let Some(b0) = find_cycle_newton(q.as_ref(), c(0.0, 0.0), 1, SpherePoint::new(0.9, 0.0), &cfg.orbit()) else {
        checks.push("beta at 0", false, "not found");
        return;
    };
    if let Some(tr) = checks.attempt("continue 0 -> -2", continue_cycle(q.as_ref(), &b0, &[c(0.0, 0.0), c(-2.0, 0.0)], &ctl)) {
        checks.push("completed 0 -> -2", tr.status.is_completed(), format!("{:?}", tr.status));
        let err = tr.tracked[0]
            .samples
            .iter()
            .map(|s| s.z.finite().map_or(f64::INFINITY, |z| (z - beta(s.lambda)).norm()))
            .fold(0.0, f64::max);
        checks.push("closed form at every sample", err < 1e-9, format!("max error {err:e}"));
        if let Some(end) = trace_end_cycle(q.as_ref(), &tr, cfg) {
            let back = continue_cycle(q.as_ref(), &end, &[c(-2.0, 0.0), c(0.0, 0.0)], &ctl);
            if let Some(back) = checks.attempt("reverse path", back) {
                let d = back.endpoints()[0].finite().map_or(f64::INFINITY, |z| (z - 1.0).norm());
                checks.push("path reversal", back.status.is_completed() && d < 1e-8, format!("distance {d:e}"));
            }
        }
    }
    if let Some(tr) = checks.attempt("continue 0 -> 0.25", continue_cycle(q.as_ref(), &b0, &[c(0.0, 0.0), c(0.25, 0.0)], &ctl)) {
        let ok = matches!(tr.status, TraceStatus::Aborted { reason: AbortReason::MultiplierCrossed, at_lambda }
            if (at_lambda - 0.25).norm() < 1e-3);
        checks.push("MultiplierCrossed near 0.25", ok, format!("{:?}", tr.status));
    }
}

fn trace_end_cycle(fam: &dyn Family, tr: &crate::continuation::MotionTrace, cfg: &RunConfig) -> Option<CycleRecord> {
    let l = tr.last_lambda()?;
    find_cycle_newton(fam, l, tr.period, tr.endpoints()[0], &cfg.orbit())
}

fn stability_dichotomy(checks: &mut Checks, cfg: &RunConfig) {
    let Some(q) = family(checks, "quadratic") else { return };
    let probe = ProbeConfig { step: cfg.step_control(), classify: cfg.classify(), ..ProbeConfig::default() };
    if let Some(r) = checks.attempt("probe at 0", stability_probe(q.as_ref(), c(0.0, 0.0), 0.05, &probe)) {
        checks.push("stable at 0", r.stable, format!("{:?}", r.witness));
    }
    if let Some(r) = checks.attempt("probe at 0.25", stability_probe(q.as_ref(), c(0.25, 0.0), 0.05, &probe)) {
        checks.push("unstable at 0.25", !r.stable && r.witness.is_some(), format!("{:?}", r.witness));
    }
    for (center, radius, expected) in [(c(0.0, 0.0), 0.2, 1), (c(-1.0, 0.0), 0.1, 2)] {
        let spec = GridSpec { orbit: cfg.orbit(), ..GridSpec::disk_box(center, radius, 32, ScanTask::PeriodMap) };
        if let Some(rep) = checks.attempt("period report", period_bound_report(q.as_ref(), 0, &spec)) {
            checks.push(
                &format!("max period {expected} on B({center}, {radius})"),
                rep.max_period == expected,
                format!("max {} undecided {}", rep.max_period, rep.undecided),
            );
        }
    }
    let spec = GridSpec { orbit: cfg.orbit(), ..GridSpec::from_bounds((-2.5, 1.5), (-2.0, 2.0), 64, 64, ScanTask::PeriodMap) };
    let period = checks.attempt("period map", scan_grid_threads(q.as_ref(), 0, &spec, cfg.threads));
    let activity = checks.attempt(
        "activity map",
        scan_grid_threads(q.as_ref(), 0, &GridSpec { task: ScanTask::ActivityMap, ..spec }, cfg.threads),
    );
    if let (Some(p), Some(a)) = (period, activity) {
        if let Some(rep) = checks.attempt("coherence", period_coherence(&p, &a)) {
            checks.push(
                "3x3 period coherence",
                rep.blocks > 0 && rep.violations == 0,
                format!("{} blocks, {} violations", rep.blocks, rep.violations),
            );
        }
    }
}

fn tangent_passivity(checks: &mut Checks, cfg: &RunConfig) {
    let Some(t) = family(checks, "tangent") else { return };
    for sv in 0..t.singular_values().len() {
        if let Some(v) = checks.attempt("classify at 0.5", classify(t.as_ref(), sv, c(0.5, 0.0), 0.05, &cfg.classify())) {
            checks.push(
                &format!("sv {sv} passive at 0.5"),
                v.verdict == Verdict::Passive { reason: PassiveReason::AttractingCapture },
                format!("{:?}", v.verdict),
            );
        }
    }
    let l = c(0.0, -FRAC_PI_2);
    if let Some(v) = checks.attempt("classify at -i pi/2", classify(t.as_ref(), 0, l, 0.02, &cfg.classify())) {
        checks.push(
            "sv 0 active at -i pi/2",
            v.verdict == Verdict::Active { evidence: ActiveEvidence::NonPersistentTruncation },
            format!("{:?}", v.verdict),
        );
    }
}

/// Grid and radius used by the conjugation-invariance check.
pub const INVARIANCE_GRID: usize = 16;
pub const INVARIANCE_RADIUS: f64 = 0.05;

/// Verdict kinds of `quadratic` and `quadratic-conjugated` on the 16×16
/// grid over `[−2.5, 1.5] × [−2, 2]`: `(decided pairs, agreements)`.
pub fn conjugation_agreement(cfg: &RunConfig) -> Result<(usize, usize, Vec<Complex64>)> {
    let q = builtin("quadratic")?;
    let qc = builtin("quadratic-conjugated")?;
    let spec = GridSpec::from_bounds((-2.5, 1.5), (-2.0, 2.0), INVARIANCE_GRID, INVARIANCE_GRID, ScanTask::FateMap);
    let (mut decided, mut agree, mut mismatched) = (0, 0, Vec::new());
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let l = spec.cell_center(i, j);
            let a = classify(q.as_ref(), 0, l, INVARIANCE_RADIUS, &cfg.classify())?.verdict.kind();
            let b = classify(qc.as_ref(), 0, l, INVARIANCE_RADIUS, &cfg.classify())?.verdict.kind();
            if a != VerdictKind::Unknown && b != VerdictKind::Unknown {
                decided += 1;
                if a == b {
                    agree += 1;
                } else {
                    mismatched.push(l);
                }
            }
        }
    }
    Ok((decided, agree, mismatched))
}

fn invariance(checks: &mut Checks, cfg: &RunConfig) {
    if let Some((decided, agree, bad)) = checks.attempt("conjugation grid", conjugation_agreement(cfg)) {
        checks.push(
            "conjugation invariance",
            decided > 0 && agree == decided,
            format!("{agree}/{decided} decided cells agree; mismatches at {bad:?}"),
        );
    }
    let Some(q) = family(checks, "quadratic") else { return };
    let spec = GridSpec { orbit: cfg.orbit(), ..GridSpec::from_bounds((-2.5, 1.5), (-2.0, 2.0), 64, 64, ScanTask::PeriodMap) };
    let dir = std::env::temp_dir().join(format!("bifloc-verify-{}", std::process::id()));
    let run = |k: usize| -> Result<(Vec<u8>, Vec<u8>, Vec<u8>)> {
        let g = scan_grid_threads(q.as_ref(), 0, &spec, cfg.threads)?;
        std::fs::create_dir_all(&dir)?;
        let ppm = dir.join(format!("run{k}.ppm"));
        let json = dir.join(format!("run{k}.json"));
        render(&g, Palette::Period, &ppm)?;
        export(&g, ExportFormat::Json, &json)?;
        Ok((std::fs::read(&ppm)?, std::fs::read(crate::scan::sidecar_path(&ppm))?, std::fs::read(&json)?))
    };
    if let (Some(a), Some(b)) = (checks.attempt("scan run 1", run(1)), checks.attempt("scan run 2", run(2))) {
        checks.push("byte-identical pixmap", a.0 == b.0, format!("{} bytes", a.0.len()));
        checks.push("byte-identical JSON", a.1 == b.1 && a.2 == b.2, "");
    }
    let _ = std::fs::remove_dir_all(&dir);
    let serial = checks.attempt("serial scan", scan_grid_threads(q.as_ref(), 0, &spec, 1));
    let parallel = checks.attempt("parallel scan", scan_grid_threads(q.as_ref(), 0, &spec, 8));
    if let (Some(s), Some(p)) = (serial, parallel) {
        let same = s.cells.len() == p.cells.len()
            && s.cells.iter().zip(&p.cells).all(|(x, y)| x.code == y.code && x.value.to_bits() == y.value.to_bits());
        checks.push("parallel equals serial", same, "");
        checks.push("pixmap equal", pixmap_bytes(&s, Palette::Period) == pixmap_bytes(&p, Palette::Period), "");
    }
}

fn backward_orbits(checks: &mut Checks, cfg: &RunConfig) {
    let Some(q) = family(checks, "quadratic") else { return };
    let circle = backward_sample(q.as_ref(), c(0.0, 0.0), SpherePoint::new(1.0, 0.0), 1000, cfg.rng_seed, cfg.branch_bound);
    if let Some(pts) = checks.attempt("samples at 0", circle) {
        let err = pts.iter().map(|p| p.finite().map_or(f64::INFINITY, |z| (z.norm() - 1.0).abs())).fold(0.0, f64::max);
        checks.push("1000 samples on |z| = 1", pts.len() == 1000 && err < 1e-9, format!("max error {err:e}"));
    }
    let segment = backward_sample(q.as_ref(), c(-2.0, 0.0), SpherePoint::new(2.0, 0.0), 1000, cfg.rng_seed, cfg.branch_bound);
    if let Some(pts) = checks.attempt("samples at -2", segment) {
        let err = pts
            .iter()
            .map(|p| p.finite().map_or(f64::INFINITY, |z| z.im.abs().max(z.re.abs() - 2.0).max(0.0)))
            .fold(0.0, f64::max);
        checks.push("1000 samples on [-2, 2]", pts.len() == 1000 && err < 1e-6, format!("max distance {err:e}"));
    }
    let path = [c(0.0, 0.0), c(0.1, 0.0), c(0.1, 0.1)];
    let trace = continue_backward_orbit(
        q.as_ref(),
        c(0.0, 0.0),
        SpherePoint::new(1.0, 0.0),
        3,
        &path,
        &cfg.step_control(),
        &cfg.orbit(),
        cfg.branch_bound,
    );
    if let Some(tr) = checks.attempt("backward-orbit motion", trace) {
        checks.push("completed", tr.status.is_completed(), format!("{:?}", tr.status));
        let mut worst: f64 = 0.0;
        for t in &tr.tracked {
            let Some(parent) = t.parent.map(|p| &tr.tracked[p]) else { continue };
            for (s, ps) in t.samples.iter().zip(&parent.samples) {
                let d = evaluate(q.as_ref(), s.lambda, s.z).map_or(f64::INFINITY, |w| chordal_distance(w, ps.z));
                worst = worst.max(d);
            }
        }
        checks.push(
            "dynamics preserved at every sample",
            tr.tracked.len() > 1 && worst < 1e-9,
            format!("{} points, max defect {worst:e}", tr.tracked.len()),
        );
    }
}
