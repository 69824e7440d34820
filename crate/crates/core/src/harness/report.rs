use super::{read_records, summarize, EvalRecord, EVAL_HEADER};
use crate::agents::TrainingLog;
use crate::{Error, Result};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const SMOOTHING_WINDOW: usize = 25;

/// Trailing mean over the last `window` points (fewer at the start).
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= window {
            sum -= xs[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

fn optional(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// Reads evaluation CSVs and training logs (told apart by their header) and
/// writes tab-separated tables into `out`:
///
/// * `summary.tsv`: one row per `(env, agent, attack, ε, norm)` group;
/// * `loss.tsv`: mean performance loss per attack and radius;
/// * `curve_<name>.tsv`: each training log with its moving average.
///
/// Returns the written paths.
pub fn report(paths: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut records: Vec<EvalRecord> = Vec::new();
    let mut written = Vec::new();
    for path in paths {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
        let header = text.lines().next().unwrap_or("");
        if header.trim() == EVAL_HEADER.join(",") {
            records.extend(read_records(text.as_bytes())?);
            continue;
        }
        let log = TrainingLog::read_csv(text.as_bytes())?;
        let returns = log.returns();
        let smooth = moving_average(&returns, SMOOTHING_WINDOW);
        let mut tsv = String::from("episode\treturn\tsmoothed\n");
        for (e, (r, s)) in log.episodes.iter().zip(returns.iter().zip(&smooth)) {
            writeln!(tsv, "{}\t{r}\t{s}", e.episode).expect("string write");
        }
        let target = unique(out, &curve_name(path), &written);
        fs::write(&target, tsv)?;
        written.push(target);
    }
    if !records.is_empty() {
        let rows = summarize(&records)?;
        let mut summary = String::from(
            "env\tagent_algo\tattack_algo\tepsilon\tnorm\tepisodes\tmean\tstd\tmin\tmax\tclean_mean\treward_floor\tloss_pct\n",
        );
        let mut loss = String::from("env\tagent_algo\tattack_algo\tnorm\tepsilon\tloss_pct\n");
        for r in &rows {
            writeln!(
                summary,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.env,
                r.agent_algo,
                r.attack_algo,
                r.epsilon,
                r.norm,
                r.episodes,
                r.mean,
                r.std,
                r.min,
                r.max,
                r.clean_mean,
                r.reward_floor,
                optional(r.loss_pct)
            )
            .expect("string write");
            if r.attack_algo != "none" {
                writeln!(
                    loss,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    r.env,
                    r.agent_algo,
                    r.attack_algo,
                    r.norm,
                    r.epsilon,
                    optional(r.loss_pct)
                )
                .expect("string write");
            }
        }
        for (name, body) in [("summary.tsv", summary), ("loss.tsv", loss)] {
            let target = out.join(name);
            fs::write(&target, body)?;
            written.push(target);
        }
    }
    Ok(written)
}

/// `log.csv` files are named after their directory.
fn curve_name(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("curve");
    let name = if stem == "log" {
        path.parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
            .unwrap_or(stem)
    } else {
        stem
    };
    format!("curve_{name}")
}

fn unique(out: &Path, base: &str, taken: &[PathBuf]) -> PathBuf {
    let mut candidate = out.join(format!("{base}.tsv"));
    let mut k = 1;
    while taken.contains(&candidate) {
        candidate = out.join(format!("{base}_{k}.tsv"));
        k += 1;
    }
    candidate
}
