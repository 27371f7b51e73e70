//! Campaign summaries, rendered reports and the failing-test suite.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::harness::{FailureClass, TrialRecord};
use crate::{Error, Result};

/// Trial counts per outcome column. Compile crashes (`C*`) and compile
/// timeouts (`T*`) are split by the level(s) they hit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub label: String,
    #[serde(rename = "C0")]
    pub c0: u64,
    #[serde(rename = "C3")]
    pub c3: u64,
    #[serde(rename = "C03")]
    pub c03: u64,
    #[serde(rename = "T0")]
    pub t0: u64,
    #[serde(rename = "T3")]
    pub t3: u64,
    #[serde(rename = "T03")]
    pub t03: u64,
    #[serde(rename = "MC")]
    pub mc: u64,
    pub passes: u64,
    pub inconclusive: u64,
    pub skipped: u64,
    pub total: u64,
}

impl CampaignSummary {
    pub fn new(label: &str) -> Self {
        CampaignSummary {
            label: label.into(),
            ..Default::default()
        }
    }

    /// Adds one record. Skipped trials carry no class.
    pub fn add(&mut self, record: &TrialRecord) {
        self.add_class(record.failure_class);
    }

    pub fn add_class(&mut self, class: Option<FailureClass>) {
        let slot = match class {
            None => &mut self.skipped,
            Some(FailureClass::Pass) => &mut self.passes,
            Some(FailureClass::CrashO0Only) => &mut self.c0,
            Some(FailureClass::CrashO3Only) => &mut self.c3,
            Some(FailureClass::CrashBoth) => &mut self.c03,
            Some(FailureClass::TimeoutO0Only) => &mut self.t0,
            Some(FailureClass::TimeoutO3Only) => &mut self.t3,
            Some(FailureClass::TimeoutBoth) => &mut self.t03,
            Some(FailureClass::Miscompilation) => &mut self.mc,
            Some(FailureClass::ExecInconclusive) => &mut self.inconclusive,
        };
        *slot += 1;
        self.total += 1;
    }

    /// C0 + C3 + MC. Crashing at both levels is no differential failure,
    /// and timeouts are reported on their own.
    pub fn differential_failures(&self) -> u64 {
        self.c0 + self.c3 + self.mc
    }

    /// Every column summed; equals `total` for any tally.
    pub fn column_sum(&self) -> u64 {
        self.c0
            + self.c3
            + self.c03
            + self.t0
            + self.t3
            + self.t03
            + self.mc
            + self.passes
            + self.inconclusive
            + self.skipped
    }

    pub fn validate(&self) -> Result<()> {
        if self.column_sum() != self.total {
            return Err(Error::Validation(format!(
                "summary columns sum to {} but total is {}",
                self.column_sum(),
                self.total
            )));
        }
        Ok(())
    }

    /// `C0=.. C3=.. C03=.. T0=.. T3=.. T03=.. MC=..`
    pub fn columns_line(&self) -> String {
        format!(
            "C0={} C3={} C03={} T0={} T3={} T03={} MC={}",
            self.c0, self.c3, self.c03, self.t0, self.t3, self.t03, self.mc
        )
    }

    fn cells(&self) -> [u64; 11] {
        [
            self.c0,
            self.c3,
            self.c03,
            self.t0,
            self.t3,
            self.t03,
            self.mc,
            self.passes,
            self.inconclusive,
            self.skipped,
            self.total,
        ]
    }
}

/// Tallies a records log, one JSON record per line. Lines that do not parse
/// count as skipped trials.
pub fn tally<R: BufRead>(log: R, label: &str) -> Result<CampaignSummary> {
    let mut summary = CampaignSummary::new(label);
    for (n, line) in log.split(b'\n').enumerate() {
        let line = line.map_err(|e| Error::format("records log", e))?;
        let text = String::from_utf8_lossy(&line);
        if text.trim().is_empty() {
            continue;
        }
        match TrialRecord::from_json_line(&text) {
            Ok(record) => summary.add(&record),
            Err(e) => {
                log::warn!("records line {}: {e}; counted as skipped", n + 1);
                summary.add_class(None);
            }
        }
    }
    Ok(summary)
}

pub fn tally_records<'a>(records: impl IntoIterator<Item = &'a TrialRecord>, label: &str) -> CampaignSummary {
    let mut summary = CampaignSummary::new(label);
    for r in records {
        summary.add(r);
    }
    summary
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Machine,
}

const HEADERS: [&str; 11] = [
    "C0", "C3", "C03", "T0", "T3", "T03", "MC", "pass", "inconcl", "skipped", "total",
];

fn table_rows(rows: &[(String, Vec<String>)]) -> String {
    let label_width = rows
        .iter()
        .map(|r| r.0.len())
        .chain(std::iter::once("strategy".len()))
        .max()
        .unwrap_or(0);
    let mut widths: Vec<usize> = HEADERS.iter().map(|h| h.len()).collect();
    for (_, cells) in rows {
        for (w, c) in widths.iter_mut().zip(cells) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = format!("{:<label_width$}", "strategy");
    for (h, w) in HEADERS.iter().zip(&widths) {
        out.push_str(&format!("  {h:>w$}"));
    }
    out.push('\n');
    for (label, cells) in rows {
        out.push_str(&format!("{label:<label_width$}"));
        for (c, w) in cells.iter().zip(&widths) {
            out.push_str(&format!("  {c:>w$}"));
        }
        out.push('\n');
    }
    out
}

/// Renders one summary.
///
/// The table has a header, one row, the `C0=..` column line and the
/// differential-failure headline. The machine format is pretty JSON that
/// [`parse_machine`] reads back.
pub fn report(summary: &CampaignSummary, format: ReportFormat) -> String {
    match format {
        ReportFormat::Machine => serde_json::to_string_pretty(summary).expect("summary serializes") + "\n",
        ReportFormat::Table => {
            let cells = summary.cells().iter().map(u64::to_string).collect();
            let mut out = table_rows(&[(summary.label.clone(), cells)]);
            out.push_str(&summary.columns_line());
            out.push('\n');
            let found = summary.differential_failures();
            out.push_str(&format!(
                "differential failures (C0 + C3 + MC): {found}{}\n",
                if found > 0 { ", found differential failures" } else { "" }
            ));
            out
        }
    }
}

pub fn parse_machine(text: &str) -> Result<CampaignSummary> {
    let summary: CampaignSummary =
        serde_json::from_str(text).map_err(|e| Error::format("summary", e))?;
    summary.validate()?;
    Ok(summary)
}

/// Table of several runs, one row each, followed by a row of column means.
/// Means are taken over the raw counts and printed with one decimal.
pub fn report_runs(summaries: &[CampaignSummary]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = summaries
        .iter()
        .map(|s| (s.label.clone(), s.cells().iter().map(u64::to_string).collect()))
        .collect();
    if summaries.len() > 1 {
        let n = summaries.len() as f64;
        let means = (0..HEADERS.len())
            .map(|j| {
                let sum: u64 = summaries.iter().map(|s| s.cells()[j]).sum();
                format!("{:.1}", sum as f64 / n)
            })
            .collect();
        rows.push(("mean".into(), means));
    }
    table_rows(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub trial_index: u64,
    pub class: FailureClass,
    pub generator_seed: u64,
    /// Generator arguments that regenerate the program.
    pub flags: Vec<String>,
    pub decisions: Vec<bool>,
    pub centroid_index: Option<usize>,
    /// File name inside the suite directory; absent when unrecoverable.
    pub program: Option<String>,
    pub unrecoverable: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub entries: Vec<SuiteEntry>,
}

/// Copies the source of every failing trial (anything but pass,
/// inconclusive and skipped) from `workdir` into `outdir`, and writes
/// `outdir/manifest.json`. A source that is gone is flagged unrecoverable;
/// its seed and flags still regenerate it.
pub fn collect_failing_suite<'a>(
    records: impl IntoIterator<Item = &'a TrialRecord>,
    workdir: &Path,
    outdir: &Path,
) -> Result<SuiteManifest> {
    std::fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let mut manifest = SuiteManifest::default();
    for r in records {
        let Some(class) = r.failure_class else { continue };
        if matches!(class, FailureClass::Pass | FailureClass::ExecInconclusive) {
            continue;
        }
        let source: PathBuf = workdir.join(&r.program_path);
        let name = format!("trial-{}.c", r.trial_index);
        let copied = std::fs::copy(&source, outdir.join(&name)).is_ok();
        if !copied {
            log::warn!("trial {}: source {} is gone", r.trial_index, source.display());
        }
        manifest.entries.push(SuiteEntry {
            trial_index: r.trial_index,
            class,
            generator_seed: r.config.generator_seed,
            flags: r.flags.clone(),
            decisions: r.config.decisions.clone(),
            centroid_index: r.config.centroid_index,
            program: copied.then_some(name),
            unrecoverable: !copied,
        });
    }
    let path = outdir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> CampaignSummary {
        let mut classes = vec![Some(FailureClass::CrashO0Only); 2];
        classes.push(Some(FailureClass::CrashBoth));
        classes.extend([Some(FailureClass::TimeoutBoth); 3]);
        classes.push(Some(FailureClass::Miscompilation));
        classes.extend([Some(FailureClass::Pass); 5]);
        let mut s = CampaignSummary::new("fixture");
        for c in classes {
            s.add_class(c);
        }
        s
    }

    #[test]
    fn hand_tally() {
        let s = fixture();
        assert_eq!((s.c0, s.c03, s.t03, s.mc, s.passes, s.total), (2, 1, 3, 1, 5, 12));
        assert_eq!((s.c3, s.t0, s.t3, s.inconclusive, s.skipped), (0, 0, 0, 0, 0));
        assert_eq!(s.differential_failures(), 3);
        let table = report(&s, ReportFormat::Table);
        assert!(table.contains("C0=2 C3=0 C03=1 T0=0 T3=0 T03=3 MC=1"), "{table}");
        assert!(table.contains("found differential failures"));
    }

    #[test]
    fn empty_stream() {
        let s = tally("".as_bytes(), "x").unwrap();
        assert_eq!(s, CampaignSummary::new("x"));
        let table = report(&s, ReportFormat::Table);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].starts_with("strategy"));
        assert!(lines[1].split_whitespace().skip(1).all(|c| c == "0"));
        assert!(!table.contains("found differential"));
    }

    #[test]
    fn malformed_lines_are_skipped() {
        let s = tally("{not json\n\n{\"schema\": 1}\n".as_bytes(), "x").unwrap();
        assert_eq!((s.skipped, s.total), (2, 2));
    }

    #[test]
    fn means_row() {
        let a = fixture();
        let mut b = CampaignSummary::new("fixture");
        b.add_class(Some(FailureClass::Miscompilation));
        let text = report_runs(&[a, b]);
        let mean = text.lines().last().unwrap();
        assert!(mean.starts_with("mean"));
        // MC: (1 + 1) / 2, total: (12 + 1) / 2.
        let cells: Vec<&str> = mean.split_whitespace().collect();
        assert_eq!(cells[7], "1.0");
        assert_eq!(cells[11], "6.5");
    }

    fn arb_class() -> impl Strategy<Value = Option<FailureClass>> {
        (0usize..10).prop_map(|i| FailureClass::ALL.get(i).copied())
    }

    proptest! {
        #[test]
        fn partition_and_order_invariance(classes in prop::collection::vec(arb_class(), 0..200), seed in any::<u64>()) {
            let mut a = CampaignSummary::new("p");
            for c in &classes {
                a.add_class(*c);
            }
            a.validate().unwrap();
            let mut shuffled = classes.clone();
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = crate::rng::mix64(s);
                shuffled.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let mut b = CampaignSummary::new("p");
            for c in &shuffled {
                b.add_class(*c);
            }
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(parse_machine(&report(&a, ReportFormat::Machine)).unwrap(), a);
        }
    }
}
