use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::domain::Vocabulary;
use crate::error::{Error, Result};

use super::{EpisodeLogRow, ExperimentResult, SweepCell};

fn f(v: f64) -> String {
    format!("{v:.6}")
}

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

/// `agent,batch,cum_cost_hours,accuracy,mean_test_cost_seconds,aborted`.
pub fn learning_curve_csv(result: &ExperimentResult) -> String {
    to_csv(
        &["agent", "batch", "cum_cost_hours", "accuracy", "mean_test_cost_seconds", "aborted"],
        result.runs.iter().flat_map(|r| {
            r.metrics.iter().map(move |m| {
                vec![
                    r.agent.clone(),
                    m.batch.to_string(),
                    f(m.cum_cost_hours()),
                    f(m.accuracy),
                    f(m.mean_cost_seconds),
                    m.aborted.to_string(),
                ]
            })
        }),
    )
}

/// Final-batch accuracy of one attribute under each agent; `None` when the
/// attribute was never evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct PerAttributeRow {
    pub attribute: String,
    pub accuracy: Vec<Option<f64>>,
}

/// Rows sorted by descending ITRS accuracy (stable; missing values last).
/// Without an ITRS agent the attribute order is kept.
pub fn per_attribute_report(result: &ExperimentResult) -> (Vec<String>, Vec<PerAttributeRow>) {
    let agents: Vec<String> = result.runs.iter().map(|r| r.agent.clone()).collect();
    let mut rows: Vec<PerAttributeRow> = result
        .attributes
        .iter()
        .map(|&p| PerAttributeRow {
            attribute: result.vocab.attribute_name(p).to_string(),
            accuracy: result
                .runs
                .iter()
                .map(|r| r.metrics.last().and_then(|m| m.per_attribute.get(&p)).and_then(|t| t.accuracy()))
                .collect(),
        })
        .collect();
    if let Some(col) = agents.iter().position(|a| a == "itrs") {
        rows.sort_by(|a, b| match (a.accuracy[col], b.accuracy[col]) {
            (Some(x), Some(y)) => y.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Equal),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        });
    }
    (agents, rows)
}

pub fn per_attribute_csv(result: &ExperimentResult) -> String {
    let (agents, rows) = per_attribute_report(result);
    let mut header = vec!["attribute"];
    header.extend(agents.iter().map(String::as_str));
    to_csv(
        &header,
        rows.into_iter().map(|r| {
            let mut v = vec![r.attribute];
            v.extend(r.accuracy.into_iter().map(|a| a.map(f).unwrap_or_default()));
            v
        }),
    )
}

fn episode_fields(r: &EpisodeLogRow) -> Vec<String> {
    vec![
        r.batch.to_string(),
        r.trial.to_string(),
        r.query.clone(),
        r.object.clone(),
        r.actions.clone(),
        r.report.clone(),
        u8::from(r.correct).to_string(),
        f(r.cost_seconds),
    ]
}

const EPISODE_HEADER: [&str; 8] = ["batch", "trial", "query", "object", "actions", "report", "correct", "cost_seconds"];

/// One agent's episode log.
pub fn episode_log_csv(rows: &[EpisodeLogRow]) -> String {
    to_csv(&EPISODE_HEADER, rows.iter().map(episode_fields))
}

fn all_episodes_csv(result: &ExperimentResult) -> String {
    let mut header = vec!["agent"];
    header.extend(EPISODE_HEADER);
    to_csv(
        &header,
        result.runs.iter().flat_map(|run| {
            run.episodes.iter().map(move |e| {
                let mut v = vec![run.agent.clone()];
                v.extend(episode_fields(e));
                v
            })
        }),
    )
}

/// `alpha,beta,early,middle,late,error`.
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    to_csv(
        &["alpha", "beta", "early", "middle", "late", "error"],
        cells.iter().map(|c| {
            let mut v = vec![f(c.alpha), f(c.beta)];
            match c.phases {
                Some(p) => v.extend(p.iter().map(|&a| f(a))),
                None => v.extend(std::iter::repeat_n(String::new(), 3)),
            }
            v.push(c.error.clone().unwrap_or_default());
            v
        }),
    )
}

fn confusions_csv(result: &ExperimentResult, batch: usize, vocab: &Vocabulary) -> String {
    to_csv(
        &["agent", "attribute", "behavior", "tn", "fp", "fn", "tp"],
        result.runs.iter().flat_map(|run| {
            run.confusions.get(batch).into_iter().flatten().map(move |t| {
                vec![
                    run.agent.clone(),
                    vocab.attribute_name(t.attribute).to_string(),
                    vocab.behavior_name(t.behavior).to_string(),
                    f(t.prob(false, false)),
                    f(t.prob(false, true)),
                    f(t.prob(true, false)),
                    f(t.prob(true, true)),
                ]
            })
        }),
    )
}

fn policy_csv(result: &ExperimentResult, batch: usize) -> String {
    to_csv(
        &["agent", "query", "manip_state", "action", "alpha_values"],
        result.runs.iter().flat_map(|run| {
            run.policies.get(batch).into_iter().flatten().map(move |p| {
                vec![
                    run.agent.clone(),
                    p.query.clone(),
                    p.manip_state.clone(),
                    p.action.clone(),
                    p.values.iter().map(|&v| f(v)).collect::<Vec<_>>().join(";"),
                ]
            })
        }),
    )
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Accuracy against cumulative training cost, one polyline per agent.
pub fn learning_curve_svg(result: &ExperimentResult) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let max_x = result
        .runs
        .iter()
        .flat_map(|r| r.metrics.iter().map(|m| m.cum_cost_hours()))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let px = |x: f64| m + x / max_x * (w - 2.0 * m);
    let py = |y: f64| h - m - y * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#,
        h - m,
        w - m,
        h - m,
        h - m
    );
    for t in 0..=4 {
        let y = t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.2}</text>"#,
            m - 6.0,
            py(y) + 4.0
        );
        let x = max_x * t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{x:.2}</text>"#,
            px(x),
            h - m + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">training cost (hours)</text>"#,
        w / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">accuracy</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (i, run) in result.runs.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = run
            .metrics
            .iter()
            .map(|mm| format!("{:.1},{:.1}", px(mm.cum_cost_hours()), py(mm.accuracy)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            w - m - 120.0,
            m + 16.0 * i as f64,
            run.agent
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

/// Writes every result file for one experiment into `dir`.
pub fn emit_outputs(result: &ExperimentResult, dir: &Path, plots: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir, "learning_curve.csv", &learning_curve_csv(result))?;
    write(dir, "per_attribute.csv", &per_attribute_csv(result))?;
    write(dir, "episodes.csv", &all_episodes_csv(result))?;
    let batches = result.runs.iter().map(|r| r.metrics.len()).max().unwrap_or(0);
    for b in 0..batches {
        if result.runs.iter().any(|r| !r.confusions.is_empty()) {
            write(dir, &format!("confusions_{b}.csv"), &confusions_csv(result, b, &result.vocab))?;
        }
        if result.runs.iter().any(|r| !r.policies.is_empty()) {
            write(dir, &format!("policy_{b}.csv"), &policy_csv(result, b))?;
        }
    }
    if plots {
        write(dir, "learning_curve.svg", &learning_curve_svg(result))?;
    }
    Ok(())
}

pub fn emit_sweep(cells: &[SweepCell], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir, "sweep.csv", &sweep_csv(cells))
}
