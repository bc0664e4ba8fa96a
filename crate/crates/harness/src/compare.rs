//! Curve comparison against shipped reference tables, plus the sweep
//! invariant checks that decide the exit status.

use std::fmt::Write as _;
use std::path::Path;

use evrobust_core::metrics::{compare_curves, CurveComparison, RobustnessCurve};
use evrobust_core::rps::binomial_tolerance;

use crate::error::{Error, Result};

pub const DEFAULT_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnderReportRow {
    pub level: f64,
    pub empirical: f64,
    pub nonzero_before: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub result_label: String,
    pub reference_label: String,
    pub result: RobustnessCurve,
    pub reference: RobustnessCurve,
    pub comparison: CurveComparison,
    /// Invariant violations; empty on success.
    pub failures: Vec<String>,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "result:    {}", self.result_label);
        let _ = writeln!(out, "reference: {}", self.reference_label);
        let _ = writeln!(
            out,
            "{:>8} {:>10} {:>10} {:>10} {:>9} {:>9} {:>9}",
            "level", "psnr", "ref_psnr", "d_psnr", "ssim", "ref_ssim", "d_ssim"
        );
        for ((a, b), d) in self.result.rows().iter().zip(self.reference.rows()).zip(&self.comparison.deltas) {
            let _ = writeln!(
                out,
                "{:>8} {:>10.4} {:>10.4} {:>10.4} {:>9.4} {:>9.4} {:>9.4}",
                a.level, a.psnr, b.psnr, d.psnr, a.ssim, b.ssim, d.ssim
            );
        }
        let verdict = |ok: bool| if ok { "non-increasing" } else { "NOT non-increasing" };
        let _ = writeln!(out, "result psnr:    {}", verdict(self.comparison.first_psnr_non_increasing));
        let _ = writeln!(out, "reference psnr: {}", verdict(self.comparison.second_psnr_non_increasing));
        let _ = writeln!(out, "max |delta|:    {:.6}", self.comparison.max_abs_delta());
        if self.failures.is_empty() {
            out.push_str("invariants: ok\n");
        }
        for f in &self.failures {
            let _ = writeln!(out, "FAIL {f}");
        }
        out
    }
}

/// Rows of a sweep CSV in `under_report` mode; empty for plain curves.
pub fn under_report_rows(path: &Path) -> Result<Vec<UnderReportRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?
        .clone();
    let col = |n: &str| headers.iter().position(|h| h == n);
    let (Some(li), Some(mi), Some(ei), Some(ni)) = (col("level"), col("mode"), col("empirical"), col("nonzero_before"))
    else {
        return Ok(Vec::new());
    };
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        if rec.get(mi) != Some("under_report") {
            continue;
        }
        let bad = |what: &str| Error::Input(format!("{}: record {}: invalid {what}", path.display(), i + 1));
        rows.push(UnderReportRow {
            level: rec.get(li).and_then(|v| v.parse().ok()).ok_or_else(|| bad("level"))?,
            empirical: rec.get(ei).and_then(|v| v.parse().ok()).ok_or_else(|| bad("empirical"))?,
            nonzero_before: rec.get(ni).and_then(|v| v.parse().ok()).ok_or_else(|| bad("nonzero_before"))?,
        });
    }
    Ok(rows)
}

/// Each empirical rate must lie within `sigmas` binomial standard errors
/// of its level, and rates must be non-decreasing in the level.
pub fn check_under_report(rows: &[UnderReportRow], sigmas: f64) -> Vec<String> {
    let mut failures = Vec::new();
    for r in rows {
        let tol = binomial_tolerance(r.level, r.nonzero_before, sigmas);
        if (r.empirical - r.level).abs() > tol {
            failures.push(format!(
                "level {}: empirical UR {} outside {} +/- {:.6} ({} cells, {sigmas} sigma)",
                r.level, r.empirical, r.level, tol, r.nonzero_before
            ));
        }
    }
    for w in rows.windows(2) {
        if w[1].empirical < w[0].empirical {
            failures.push(format!(
                "level {}: empirical UR {} below level {} ({})",
                w[1].level, w[1].empirical, w[0].level, w[0].empirical
            ));
        }
    }
    failures
}

pub fn compare_files(result: &Path, reference: &Path, sigmas: f64) -> Result<CompareReport> {
    let res = RobustnessCurve::read_csv(result)?;
    let refc = RobustnessCurve::read_csv(reference)?;
    let comparison = compare_curves(&res, &refc)?;
    let failures = check_under_report(&under_report_rows(result)?, sigmas);
    Ok(CompareReport {
        result_label: result.display().to_string(),
        reference_label: reference.display().to_string(),
        result: res,
        reference: refc,
        comparison,
        failures,
    })
}
