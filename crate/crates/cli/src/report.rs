//! Consolidated table over several run directories.

use std::path::PathBuf;

use fraclab_core::functionals::fmt_f64;

use crate::manifest::RunManifest;
use crate::pipeline::Status;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub run: String,
    pub check: String,
    pub criterion: String,
    pub threshold: String,
    pub observed: String,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub all_pass: bool,
}

pub fn build(dirs: &[PathBuf]) -> Report {
    let mut rows = Vec::new();
    let mut all_pass = true;
    for dir in dirs {
        let run = dir.display().to_string();
        match RunManifest::read(dir) {
            Ok(m) => {
                if m.checks.is_empty() {
                    all_pass = false;
                    rows.push(ReportRow {
                        run,
                        check: "-".into(),
                        criterion: "-".into(),
                        threshold: "-".into(),
                        observed: "-".into(),
                        status: "no checks".into(),
                    });
                    continue;
                }
                for c in &m.checks {
                    if c.status == Status::Fail {
                        all_pass = false;
                    }
                    rows.push(ReportRow {
                        run: run.clone(),
                        check: c.check.clone(),
                        criterion: c.name.clone(),
                        threshold: if c.relation.is_empty() { "-".into() } else { format!("{} {}", c.relation, fmt_f64(c.threshold)) },
                        observed: c.observed.map(fmt_f64).unwrap_or_else(|| "-".into()),
                        status: c.status.to_string(),
                    });
                }
            }
            Err(e) => {
                all_pass = false;
                rows.push(ReportRow {
                    run,
                    check: "-".into(),
                    criterion: "-".into(),
                    threshold: "-".into(),
                    observed: e,
                    status: "unreadable".into(),
                });
            }
        }
    }
    Report { rows, all_pass }
}

fn cells(r: &ReportRow) -> [&str; 6] {
    [&r.run, &r.check, &r.criterion, &r.threshold, &r.observed, &r.status]
}

const HEADER: [&str; 6] = ["run", "check", "criterion", "threshold", "observed", "status"];

impl Report {
    pub fn to_text(&self) -> String {
        let mut width = HEADER.map(str::len);
        for r in &self.rows {
            for (w, c) in width.iter_mut().zip(cells(r)) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |c: [&str; 6]| {
            let parts: Vec<String> = c.iter().zip(width).map(|(s, w)| format!("{s:<w$}")).collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(HEADER);
        for r in &self.rows {
            out.push_str(&line(cells(r)));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let quote = |s: &str| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        let mut out = HEADER.join(",") + "\n";
        for r in &self.rows {
            let c: Vec<String> = cells(r).iter().map(|s| quote(s)).collect();
            out.push_str(&c.join(","));
            out.push('\n');
        }
        out
    }
}
