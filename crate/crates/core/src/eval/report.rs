use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::Split;
use crate::error::{Error, Result};
use crate::model::ABLATION_VARIANTS;

/// How every number in a report was measured.
pub const CONVENTION: &str =
    "Y channel (BT.601 full range), mean over all UxV views, full frame without border crop, PSNR capped at 100 dB";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMetrics {
    /// `U x V` grid of per-view PSNR in dB.
    pub psnr: Vec<Vec<f64>>,
    pub ssim: Vec<Vec<f64>>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant_label: String,
    pub config_fingerprint: String,
    pub scale: u32,
    pub split: Split,
    pub convention: String,
    pub per_scene: BTreeMap<String, SceneMetrics>,
    /// Unweighted mean of the per-scene means.
    pub aggregate: Aggregate,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

impl SceneMetrics {
    pub fn new(psnr: Vec<Vec<f64>>, ssim: Vec<Vec<f64>>) -> Self {
        let mean_psnr = mean(psnr.iter().flatten().copied());
        let mean_ssim = mean(ssim.iter().flatten().copied());
        Self {
            psnr,
            ssim,
            mean_psnr,
            mean_ssim,
        }
    }
}

impl MetricsReport {
    pub fn new(
        variant_label: impl Into<String>,
        config_fingerprint: impl Into<String>,
        scale: u32,
        split: Split,
        per_scene: BTreeMap<String, SceneMetrics>,
    ) -> Self {
        let aggregate = Aggregate {
            mean_psnr: mean(per_scene.values().map(|s| s.mean_psnr)),
            mean_ssim: mean(per_scene.values().map(|s| s.mean_ssim)),
        };
        Self {
            variant_label: variant_label.into(),
            config_fingerprint: config_fingerprint.into(),
            scale,
            split,
            convention: CONVENTION.into(),
            per_scene,
            aggregate,
        }
    }

    /// Same measurements under another label.
    pub fn relabeled(mut self, label: impl Into<String>) -> Self {
        self.variant_label = label.into();
        self
    }

    /// Writes `report_<variant>.csv` and `report_<variant>.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let stem = format!("report_{}", file_label(&self.variant_label));
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&csv_path).map_err(csv_err)?;
        w.write_record(["scene", "u", "v", "psnr_db", "ssim"])
            .map_err(csv_err)?;
        for (scene, m) in &self.per_scene {
            for (u, (prow, srow)) in m.psnr.iter().zip(&m.ssim).enumerate() {
                for (v, (p, s)) in prow.iter().zip(srow).enumerate() {
                    w.write_record([
                        scene.clone(),
                        u.to_string(),
                        v.to_string(),
                        p.to_string(),
                        s.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
            w.write_record([
                scene.clone(),
                "mean".into(),
                "mean".into(),
                m.mean_psnr.to_string(),
                m.mean_ssim.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.write_record([
            "all".to_string(),
            "mean".into(),
            "mean".into(),
            self.aggregate.mean_psnr.to_string(),
            self.aggregate.mean_ssim.to_string(),
        ])
        .map_err(csv_err)?;
        w.flush()?;

        let txt_path = dir.join(format!("{stem}.txt"));
        std::fs::write(&txt_path, self.render_text())?;
        Ok((csv_path, txt_path))
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variant: {}", self.variant_label);
        let _ = writeln!(s, "config:  {}", self.config_fingerprint);
        let _ = writeln!(s, "split:   {:?} x{}", self.split, self.scale);
        let _ = writeln!(s, "metrics: {}", self.convention);
        let _ = writeln!(s);
        let width = self
            .per_scene
            .keys()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(5);
        let _ = writeln!(s, "{:<width$}  {:>9}  {:>7}", "scene", "PSNR(dB)", "SSIM");
        for (scene, m) in &self.per_scene {
            let _ = writeln!(
                s,
                "{scene:<width$}  {:>9.4}  {:>7.4}",
                m.mean_psnr, m.mean_ssim
            );
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:>9.4}  {:>7.4}",
            "mean", self.aggregate.mean_psnr, self.aggregate.mean_ssim
        );
        s
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Report(e.to_string())
}

/// Report label as a file-name fragment.
pub fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Shapes of the result tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableLayout {
    /// Methods as columns, (metric, scale) as rows, P-style test set.
    Table1,
    /// Same shape, O-style test set after fine-tuning.
    Table2,
    /// Ablation rows: frequency components, interaction, FP, PSNR.
    Table3,
}

impl std::str::FromStr for TableLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(TableLayout::Table1),
            "table2" => Ok(TableLayout::Table2),
            "table3" => Ok(TableLayout::Table3),
            other => Err(Error::Report(format!("unknown table layout {other:?}"))),
        }
    }
}

impl TableLayout {
    fn name(self) -> &'static str {
        match self {
            TableLayout::Table1 => "table1",
            TableLayout::Table2 => "table2",
            TableLayout::Table3 => "table3",
        }
    }
}

/// Check marks for one ablation row: F_l, F_m, F_h, interactions, FP.
fn ablation_marks(label: &str) -> Option<[&'static str; 5]> {
    const Y: &str = "yes";
    const N: &str = "no";
    const D: &str = "-";
    Some(match label {
        "freq:h" => [N, N, Y, D, D],
        "freq:mh" => [N, Y, Y, D, D],
        "freq:lmh" => [Y, Y, Y, D, D],
        "proj:none" => [D, D, D, N, N],
        "proj:interact" => [D, D, D, Y, N],
        "proj:fp" => [D, D, D, N, Y],
        "proj:full" => [D, D, D, Y, Y],
        _ => return None,
    })
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(String::len)
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:<w$}", w = widths[c]))
            .collect();
        out.push_str(cells.join(" | ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            out.push_str(&rule.join("-+-"));
            out.push('\n');
        }
    }
    out
}

/// Renders `reports` as `<layout>.csv` and `<layout>.txt` in `out_dir`.
pub fn emit_table(
    reports: &[MetricsReport],
    layout: TableLayout,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    if reports.is_empty() {
        return Err(Error::Report("no reports to tabulate".into()));
    }
    let rows = match layout {
        TableLayout::Table1 | TableLayout::Table2 => {
            let mut seen = BTreeSet::new();
            for r in reports {
                if !seen.insert((r.variant_label.as_str(), r.scale)) {
                    return Err(Error::Report(format!(
                        "duplicate report for {} at x{}",
                        r.variant_label, r.scale
                    )));
                }
            }
            let mut methods: Vec<&str> = Vec::new();
            for r in reports {
                if !methods.contains(&r.variant_label.as_str()) {
                    methods.push(&r.variant_label);
                }
            }
            let scales: BTreeSet<u32> = reports.iter().map(|r| r.scale).collect();
            let mut rows = vec![["Metric".to_string(), "Scale".to_string()]
                .into_iter()
                .chain(methods.iter().map(|m| m.to_string()))
                .collect::<Vec<_>>()];
            for metric in ["PSNR", "SSIM"] {
                for &scale in &scales {
                    let mut row = vec![metric.to_string(), format!("x{scale}")];
                    for m in &methods {
                        let cell = reports
                            .iter()
                            .find(|r| r.variant_label == *m && r.scale == scale)
                            .map(|r| match metric {
                                "PSNR" => format!("{:.2}", r.aggregate.mean_psnr),
                                _ => format!("{:.4}", r.aggregate.mean_ssim),
                            })
                            .unwrap_or_else(|| "-".into());
                        row.push(cell);
                    }
                    rows.push(row);
                }
            }
            rows
        }
        TableLayout::Table3 => {
            let mut seen = BTreeSet::new();
            for r in reports {
                if !seen.insert(r.variant_label.as_str()) {
                    return Err(Error::Report(format!(
                        "duplicate variant label {}",
                        r.variant_label
                    )));
                }
                if ablation_marks(&r.variant_label).is_none() {
                    return Err(Error::Report(format!(
                        "{} is not an ablation variant; expected one of {}",
                        r.variant_label,
                        ABLATION_VARIANTS.join(", ")
                    )));
                }
            }
            let mut rows = vec![[
                "Variant",
                "F_l",
                "F_m",
                "F_h",
                "Interactions",
                "FP operation",
                "PSNR",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()];
            for label in ABLATION_VARIANTS {
                if let Some(r) = reports.iter().find(|r| r.variant_label == label) {
                    let marks = ablation_marks(label).expect("known variant");
                    let mut row = vec![label.to_string()];
                    row.extend(marks.iter().map(|m| m.to_string()));
                    row.push(format!("{:.2}", r.aggregate.mean_psnr));
                    rows.push(row);
                }
            }
            rows
        }
    };
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", layout.name()));
    let mut w = csv::Writer::from_path(&csv_path).map_err(csv_err)?;
    for row in &rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    let txt_path = out_dir.join(format!("{}.txt", layout.name()));
    std::fs::write(&txt_path, aligned(&rows))?;
    Ok((csv_path, txt_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(label: &str, scale: u32, psnr: f64) -> MetricsReport {
        let scene = SceneMetrics::new(vec![vec![psnr, psnr + 2.0]], vec![vec![0.5, 0.7]]);
        let other = SceneMetrics::new(vec![vec![psnr + 4.0, psnr + 4.0]], vec![vec![0.9, 0.9]]);
        MetricsReport::new(
            label,
            "abc",
            scale,
            Split::Test,
            BTreeMap::from([("a".to_string(), scene), ("b".to_string(), other)]),
        )
    }

    #[test]
    fn aggregate_is_mean_of_scene_means() {
        let r = report("m", 4, 30.0);
        assert_eq!(r.per_scene["a"].mean_psnr, 31.0);
        assert_eq!(r.aggregate.mean_psnr, (31.0 + 34.0) / 2.0);
        assert!((r.aggregate.mean_ssim - 0.75).abs() < 1e-12);
    }

    #[test]
    fn writes_report_files() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, txt) = report("freq:h", 4, 30.0).write(dir.path()).unwrap();
        assert!(csv.ends_with("report_freq_h.csv"));
        let text = std::fs::read_to_string(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 3 + 1);
        assert!(std::fs::read_to_string(txt)
            .unwrap()
            .contains("PSNR capped at 100 dB"));
    }

    #[test]
    fn table3_has_a_row_per_variant() {
        let dir = tempfile::tempdir().unwrap();
        let reports: Vec<_> = ABLATION_VARIANTS
            .iter()
            .map(|v| report(v, 4, 29.0))
            .collect();
        let (csv, txt) = emit_table(&reports, TableLayout::Table3, dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 8);
        assert!(std::fs::read_to_string(txt)
            .unwrap()
            .contains("proj:interact"));
    }

    #[test]
    fn table1_single_report_has_one_method_column() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, _) = emit_table(
            &[report("OFPNet", 4, 30.0)],
            TableLayout::Table1,
            dir.path(),
        )
        .unwrap();
        let text = std::fs::read_to_string(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "Metric,Scale,OFPNet");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn table_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_table(&[], TableLayout::Table1, dir.path()),
            Err(Error::Report(_))
        ));
        let dup = [report("freq:h", 4, 1.0), report("freq:h", 4, 2.0)];
        assert!(matches!(
            emit_table(&dup, TableLayout::Table3, dir.path()),
            Err(Error::Report(_))
        ));
        assert!(matches!(
            emit_table(&dup, TableLayout::Table2, dir.path()),
            Err(Error::Report(_))
        ));
        assert!(matches!(
            emit_table(&[report("mine", 4, 1.0)], TableLayout::Table3, dir.path()),
            Err(Error::Report(_))
        ));
    }
}
