//! Metrics rows, CSV output and the grouped text summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "variant,task,M_ft,M_inf,placement,seed,EM,token_accuracy,steps,wall_seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub variant: String,
    pub task: String,
    pub m_ft: usize,
    pub m_inf: usize,
    pub placement: String,
    pub seed: u64,
    pub em: f64,
    pub token_accuracy: f64,
    pub steps: usize,
    pub wall_seconds: f64,
}

impl MetricsRow {
    fn sort_key(&self) -> (&str, &str, usize, usize, &str, u64) {
        (&self.variant, &self.task, self.m_ft, self.m_inf, &self.placement, self.seed)
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.variant,
            self.task,
            self.m_ft,
            self.m_inf,
            self.placement,
            self.seed,
            self.em,
            self.token_accuracy,
            self.steps,
            self.wall_seconds
        )
    }
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn format_mean_std(values: &[f64]) -> String {
    let (m, s) = mean_std(values);
    format!("{m:.2} ± {s:.2}")
}

/// Rows in canonical order, so output does not depend on execution order.
pub fn sorted_rows(rows: &[MetricsRow]) -> Vec<MetricsRow> {
    let mut out = rows.to_vec();
    out.sort_by(|a, b| {
        a.sort_key()
            .cmp(&b.sort_key())
            .then(a.em.total_cmp(&b.em))
    });
    out
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in sorted_rows(rows) {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

fn aligned(table: &[Vec<String>]) -> String {
    let cols = table.first().map_or(0, Vec::len);
    let widths: Vec<usize> = (0..cols)
        .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in table {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Mean ± std per (variant, task, M_ft, M_inf, placement) group.
pub fn summary_text(rows: &[MetricsRow]) -> String {
    let mut groups: BTreeMap<(String, String, usize, usize, String), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.variant.clone(), r.task.clone(), r.m_ft, r.m_inf, r.placement.clone()))
            .or_default()
            .push(r);
    }
    let mut table = vec![vec![
        "variant".to_string(),
        "task".into(),
        "M_ft".into(),
        "M_inf".into(),
        "placement".into(),
        "seeds".into(),
        "EM".into(),
        "token_accuracy".into(),
    ]];
    for ((variant, task, m_ft, m_inf, placement), rs) in &groups {
        let em: Vec<f64> = rs.iter().map(|r| r.em).collect();
        let acc: Vec<f64> = rs.iter().map(|r| r.token_accuracy).collect();
        table.push(vec![
            variant.clone(),
            task.clone(),
            m_ft.to_string(),
            m_inf.to_string(),
            placement.clone(),
            rs.len().to_string(),
            format_mean_std(&em),
            format_mean_std(&acc),
        ]);
    }
    aligned(&table)
}

/// "Best of" lines over M_ft, one per (variant, task): every M_ft mean is listed
/// alongside the maximum so the selection is visible.
pub fn best_mft_text(rows: &[MetricsRow]) -> String {
    let mut by_cell: BTreeMap<(String, String), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        by_cell
            .entry((r.variant.clone(), r.task.clone()))
            .or_default()
            .entry(r.m_ft)
            .or_default()
            .push(r.em);
    }
    let mut out = String::new();
    for ((variant, task), per_m) in by_cell {
        let means: Vec<(usize, f64)> = per_m.iter().map(|(&m, v)| (m, mean_std(v).0)).collect();
        let listed: Vec<String> = means.iter().map(|(m, e)| format!("M_ft={m}: {e:.2}")).collect();
        let best = means
            .iter()
            .copied()
            .fold(None, |acc: Option<(usize, f64)>, x| match acc {
                Some(a) if a.1 >= x.1 => Some(a),
                _ => Some(x),
            });
        if let Some((m, e)) = best {
            let _ = writeln!(
                out,
                "{variant} {task}: {}; max over M_ft = {e:.2} (M_ft={m})",
                listed.join(", ")
            );
        }
    }
    out
}

/// Writes `metrics.csv` and `summary.txt` under `dir`.
pub fn emit_report(rows: &[MetricsRow], dir: &Path, extra_summary: &str) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Usage("no metrics rows to report".into()));
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.csv"), metrics_csv(rows))?;
    let mut summary = summary_text(&sorted_rows(rows));
    if !extra_summary.is_empty() {
        summary.push('\n');
        summary.push_str(extra_summary);
    }
    fs::write(dir.join("summary.txt"), summary)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(variant: &str, seed: u64, em: f64) -> MetricsRow {
        MetricsRow {
            variant: variant.into(),
            task: "lookup8".into(),
            m_ft: 0,
            m_inf: 0,
            placement: "append".into(),
            seed,
            em,
            token_accuracy: em,
            steps: 10,
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn header_is_exact() {
        let csv = metrics_csv(&[row("StdPT_StdFT", 0, 0.5)]);
        assert_eq!(
            csv.lines().next().unwrap(),
            "variant,task,M_ft,M_inf,placement,seed,EM,token_accuracy,steps,wall_seconds"
        );
        assert_eq!(csv.lines().nth(1).unwrap(), "StdPT_StdFT,lookup8,0,0,append,0,0.5,0.5,10,0");
    }

    #[test]
    fn population_std_example() {
        assert_eq!(format_mean_std(&[0.2, 0.4]), "0.30 ± 0.10");
    }

    #[test]
    fn order_independent_output() {
        let a = vec![row("B", 1, 0.1), row("A", 0, 0.2), row("A", 1, 0.3)];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(metrics_csv(&a), metrics_csv(&b));
        assert_eq!(summary_text(&sorted_rows(&a)), summary_text(&sorted_rows(&b)));
    }

    #[test]
    fn empty_rows_are_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_report(&[], dir.path(), ""), Err(Error::Usage(_))));
    }

    #[test]
    fn emit_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row("A", 0, 0.2), row("A", 1, 0.4)];
        emit_report(&rows, dir.path(), "").unwrap();
        let first = fs::read(dir.path().join("metrics.csv")).unwrap();
        let first_sum = fs::read(dir.path().join("summary.txt")).unwrap();
        emit_report(&rows, dir.path(), "").unwrap();
        assert_eq!(first, fs::read(dir.path().join("metrics.csv")).unwrap());
        assert_eq!(first_sum, fs::read(dir.path().join("summary.txt")).unwrap());
        assert!(String::from_utf8(first_sum).unwrap().contains("0.30 ± 0.10"));
    }

    #[test]
    fn best_of_lists_every_setting() {
        let mut a = row("StdPT_PauseFT", 0, 0.2);
        a.m_ft = 10;
        let mut b = row("StdPT_PauseFT", 0, 0.6);
        b.m_ft = 50;
        let text = best_mft_text(&[a, b]);
        assert!(text.contains("M_ft=10: 0.20"));
        assert!(text.contains("M_ft=50: 0.60"));
        assert!(text.contains("max over M_ft = 0.60 (M_ft=50)"));
    }
}
