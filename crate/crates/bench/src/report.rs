//! Leaderboard, pivoted summary and curve files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::BenchError;
use crate::runner::{write_atomic, RunResult};

pub const LEADERBOARD_COLUMNS: [&str; 10] = [
    "task",
    "arch",
    "nonlinearity",
    "encoding",
    "seed",
    "metric_name",
    "metric_value",
    "steps",
    "wall_time_s",
    "diverged",
];

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn metric_text(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:?}"))
}

/// One row per run. Diverged or failed runs show `NA`. With
/// `wall_time = false` the wall-time column is omitted so that repeated
/// executions compare byte for byte.
pub fn leaderboard_csv(results: &[RunResult], wall_time: bool) -> String {
    let cols: Vec<&str> = LEADERBOARD_COLUMNS.iter().copied().filter(|c| wall_time || *c != "wall_time_s").collect();
    let mut out = cols.join(",");
    out.push('\n');
    for r in results {
        let mut row = vec![
            csv_field(&r.task),
            csv_field(&r.arch),
            csv_field(&r.nonlinearity),
            csv_field(&r.encoding),
            r.seed.to_string(),
            csv_field(&r.metric_name),
            metric_text(r.metric_value),
            r.steps.to_string(),
        ];
        if wall_time {
            row.push(format!("{:.3}", r.wall_time_s));
        }
        row.push(r.diverged.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Mean metric per (task, model) over replicates that produced a value.
pub struct Summary {
    pub tasks: Vec<String>,
    pub models: Vec<String>,
    /// `cells[task][model]`.
    pub cells: Vec<Vec<Option<f64>>>,
}

impl Summary {
    pub fn from_results(results: &[RunResult]) -> Self {
        let mut tasks: Vec<String> = Vec::new();
        let mut models: Vec<String> = Vec::new();
        for r in results {
            if !tasks.contains(&r.task) {
                tasks.push(r.task.clone());
            }
            let key = r.model_key();
            if !models.contains(&key) {
                models.push(key);
            }
        }
        let mut sums = vec![vec![(0.0, 0usize); models.len()]; tasks.len()];
        for r in results {
            if let Some(v) = r.metric_value {
                let t = tasks.iter().position(|x| *x == r.task).unwrap();
                let m = models.iter().position(|x| *x == r.model_key()).unwrap();
                sums[t][m].0 += v;
                sums[t][m].1 += 1;
            }
        }
        let cells =
            sums.into_iter().map(|row| row.into_iter().map(|(s, n)| (n > 0).then(|| s / n as f64)).collect()).collect();
        Self { tasks, models, cells }
    }

    /// Column index of the best (highest) mean per task.
    pub fn best(&self, task: usize) -> Option<usize> {
        self.cells[task]
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// Tasks as rows, models as columns; the best cell of each row ends in `*`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task");
        for m in &self.models {
            out.push(',');
            out.push_str(&csv_field(m));
        }
        out.push('\n');
        for (t, task) in self.tasks.iter().enumerate() {
            out.push_str(&csv_field(task));
            let best = self.best(t);
            for (m, v) in self.cells[t].iter().enumerate() {
                out.push(',');
                match v {
                    Some(v) => {
                        let _ = write!(out, "{v:.4}");
                        if best == Some(m) {
                            out.push('*');
                        }
                    }
                    None => out.push_str("NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// `step value` lines.
pub fn curve_text(points: &[(usize, f64)]) -> String {
    let mut out = String::new();
    for (s, v) in points {
        let _ = writeln!(out, "{s} {v:?}");
    }
    out
}

pub fn read_curve(path: &Path) -> Result<Vec<(usize, f64)>, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::io(format!("reading {}", path.display()), e))?;
    let bad =
        |line: &str| BenchError::Result { path: path.display().to_string(), message: format!("bad line {line:?}") };
    text.lines()
        .map(|line| {
            let (s, v) = line.split_once(' ').ok_or_else(|| bad(line))?;
            Ok((s.parse().map_err(|_| bad(line))?, v.parse().map_err(|_| bad(line))?))
        })
        .collect()
}

/// Writes `leaderboard.csv` and `summary.csv` into `dir`.
pub fn write_reports(dir: &Path, results: &[RunResult]) -> Result<(), BenchError> {
    write_atomic(&dir.join("leaderboard.csv"), leaderboard_csv(results, true).as_bytes())?;
    write_atomic(&dir.join("summary.csv"), Summary::from_results(results).to_csv().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn result(seed: u64, value: Option<f64>) -> RunResult {
        RunResult {
            run_id: format!("run-{seed:05}"),
            index: seed as usize,
            task: "image_reg".into(),
            arch: "mlp".into(),
            nonlinearity: "relu".into(),
            encoding: "identity".into(),
            model: "mlp/relu/identity".into(),
            seed,
            replicate: 0,
            sweep: BTreeMap::new(),
            steps: 100,
            metric_name: "psnr_db".into(),
            metric_value: value,
            secondary: BTreeMap::new(),
            wall_time_s: 1.25,
            diverged: value.is_none(),
            error: None,
            loss_curve_path: String::new(),
            metric_curve_path: String::new(),
            loss_curve: Vec::new(),
            metric_curve: Vec::new(),
        }
    }

    #[test]
    fn single_row() {
        let csv = leaderboard_csv(&[result(1, Some(20.0))], true);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], LEADERBOARD_COLUMNS.join(","));
        assert_eq!(lines[1], "image_reg,mlp,relu,identity,1,psnr_db,20.0,100,1.250,false");
    }

    #[test]
    fn diverged_is_na() {
        let csv = leaderboard_csv(&[result(1, None)], false);
        assert!(csv.lines().nth(1).unwrap().ends_with(",NA,100,true"));
    }

    #[test]
    fn summary_means_and_marks_best() {
        let mut other = result(3, Some(30.0));
        other.model = "mlp/sine/identity".into();
        let s = Summary::from_results(&[result(1, Some(20.0)), result(2, Some(22.0)), other]);
        assert_eq!(s.cells[0], vec![Some(21.0), Some(30.0)]);
        let csv = s.to_csv();
        assert!(csv.contains("21.0000,30.0000*"), "{csv}");
    }

    #[test]
    fn labels_with_commas_are_quoted() {
        let mut r = result(1, Some(1.0));
        r.nonlinearity = "gabor[omega=20,a=100]".into();
        assert!(leaderboard_csv(&[r], false).contains("\"gabor[omega=20,a=100]\""));
    }

    #[test]
    fn curve_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pts = vec![(0, 0.5), (10, 1.0 / 3.0), (20, f64::NAN)];
        let p = dir.path().join("c.txt");
        fs::write(&p, curve_text(&pts)).unwrap();
        let back = read_curve(&p).unwrap();
        assert_eq!(back[0].0, 0);
        assert!(pts.iter().zip(&back).all(|(a, b)| a.1.to_bits() == b.1.to_bits() || (a.1.is_nan() && b.1.is_nan())));
    }
}
