// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

//! Result tables and their CSV form.

use std::fmt::Write as _;

pub const CSV_HEADER: &str = "time_us,method,mean,stderr,fidelity,mean_jumps,C1_total,cost_C2";

/// One `(time, method)` row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub time_us: f64,
    pub method: String,
    pub mean: f64,
    pub stderr: f64,
    pub fidelity: f64,
    pub mean_jumps: f64,
    pub c1_total: f64,
    pub cost_c2: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    /// Written as `# key: value` lines before the header.
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn push_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.push((key.into(), value.into()));
    }

    /// Rows of one method in time order.
    pub fn series(&self, method: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.method == method).collect()
    }

    /// Largest `|mean − ideal|` of `method` over the time grid.
    pub fn max_error(&self, method: &str) -> Option<f64> {
        let ideal = self.series("ideal");
        let rows = self.series(method);
        if rows.is_empty() || rows.len() != ideal.len() {
            return None;
        }
        Some(
            rows.iter()
                .zip(&ideal)
                .map(|(r, i)| (r.mean - i.mean).abs())
                .fold(0.0, f64::max),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.time_us, r.method, r.mean, r.stderr, r.fidelity, r.mean_jumps, r.c1_total, r.cost_c2
            );
        }
        s
    }

    /// Parses the output of [`ResultTable::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut table = ResultTable::default();
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            if let Some(meta) = line.strip_prefix("# ") {
                let (k, v) = meta.split_once(": ").ok_or(format!("line {}: bad metadata", i + 1))?;
                table.push_meta(k, v);
                continue;
            }
            if !header_seen {
                if line != CSV_HEADER {
                    return Err(format!("line {}: expected header `{CSV_HEADER}`", i + 1));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(format!("line {}: expected 8 fields, got {}", i + 1, f.len()));
            }
            let num = |k: usize| -> Result<f64, String> {
                f[k].parse::<f64>()
                    .map_err(|e| format!("line {}: field {k}: {e}", i + 1))
            };
            table.rows.push(ResultRow {
                time_us: num(0)?,
                method: f[1].to_string(),
                mean: num(2)?,
                stderr: num(3)?,
                fidelity: num(4)?,
                mean_jumps: num(5)?,
                c1_total: num(6)?,
                cost_c2: num(7)?,
            });
        }
        if !header_seen {
            return Err("missing header".into());
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut t = ResultTable::default();
        t.push_meta("seed", "7");
        for (m, mean) in [("ideal", 0.5), ("none", 0.25)] {
            t.rows.push(ResultRow {
                time_us: 0.125,
                method: m.into(),
                mean,
                stderr: 0.0,
                fidelity: 1.0,
                mean_jumps: 0.0,
                c1_total: 0.18,
                cost_c2: 1.0 / 3.0,
            });
        }
        let csv = t.to_csv();
        assert!(csv.starts_with("# seed: 7\ntime_us,method,"));
        let back = ResultTable::from_csv(&csv).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.max_error("none"), Some(0.25));
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(ResultTable::from_csv("time,method\n").is_err());
    }
}
