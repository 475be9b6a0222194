//! On-disk layout of an experiment:
//!
//! ```text
//! out/
//!   manifest.json
//!   summary.csv
//!   <cell id>/episodes.csv
//!   <cell id>/profile.csv
//!   <cell id>/trial<k>.ckpt      (only with checkpoints enabled)
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::experiment::{
    run_experiment_with, CellResult, CellSummary, Comparison, ExperimentResults, RunManifest, FORMAT_VERSION,
};
use super::rollout::{trial_seed, AgentFactory, PpoFactory, TrialResult};
use crate::error::{Error, Result};

/// `%.9g`-style formatting: nine significant digits, trailing zeros dropped.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (8 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn parse_opt(field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| Error::Format(format!("not a number: {field:?}")))
}

/// Writes through a temporary file so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub const EPISODE_COLUMNS: &[&str] = &["trial", "episode", "length", "social_welfare", "jain", "gini", "done_reason"];

pub fn episodes_csv(trials: &[TrialResult]) -> Result<Vec<u8>> {
    let rows = trials.iter().flat_map(|t| {
        t.episodes.iter().map(move |e| {
            vec![
                t.trial.to_string(),
                e.episode.to_string(),
                fmt_float(e.length),
                fmt_float(e.social_welfare),
                fmt_opt(e.jain),
                fmt_opt(e.gini),
                e.done_reason.map_or("Extrapolated", |r| r.as_str()).to_string(),
            ]
        })
    });
    csv_bytes(EPISODE_COLUMNS, rows)
}

pub const PROFILE_COLUMNS: &[&str] = &["trial", "signal", "agent", "mean_effort"];

pub fn profile_csv(trials: &[TrialResult]) -> Result<Vec<u8>> {
    let rows = trials.iter().flat_map(|t| {
        t.profile.iter().flat_map(move |p| {
            p.means.iter().enumerate().flat_map(move |(g, row)| {
                row.iter()
                    .enumerate()
                    .map(move |(n, m)| vec![t.trial.to_string(), g.to_string(), n.to_string(), fmt_opt(*m)])
            })
        })
    });
    csv_bytes(PROFILE_COLUMNS, rows)
}

pub const SUMMARY_COLUMNS: &[&str] = &[
    "cell",
    "n_agents",
    "m_s",
    "signal",
    "s_eq",
    "trials",
    "failed",
    "social_welfare",
    "length",
    "convergence_time",
    "jain",
    "gini",
    "cic",
    "idle",
    "moderate",
    "active",
    "rel_social_welfare",
    "p_social_welfare",
    "rel_length",
    "p_length",
    "rel_convergence_time",
    "p_convergence_time",
    "rel_jain",
    "p_jain",
    "rel_gini",
    "p_gini",
];

fn summary_row(s: &CellSummary) -> Vec<String> {
    let mut r = vec![
        s.cell.clone(),
        s.n_agents.to_string(),
        fmt_float(s.m_s),
        s.signal.to_string(),
        fmt_float(s.s_eq),
        s.trials.to_string(),
        s.failed.to_string(),
    ];
    r.extend(
        [
            s.social_welfare,
            s.length,
            s.convergence_time,
            s.jain,
            s.gini,
            s.cic,
            s.idle,
            s.moderate,
            s.active,
        ]
        .map(fmt_opt),
    );
    for c in [
        s.social_welfare_vs_no_signal,
        s.length_vs_no_signal,
        s.convergence_time_vs_no_signal,
        s.jain_vs_no_signal,
        s.gini_vs_no_signal,
    ] {
        r.push(fmt_opt(c.relative_difference));
        r.push(fmt_opt(c.p_value));
    }
    r
}

pub fn summary_csv(summaries: &[CellSummary]) -> Result<Vec<u8>> {
    csv_bytes(SUMMARY_COLUMNS, summaries.iter().map(summary_row))
}

/// Parses a summary table written by [`summary_csv`].
pub fn read_summary_csv(bytes: &[u8]) -> Result<Vec<CellSummary>> {
    let mut rd = csv::Reader::from_reader(bytes);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != SUMMARY_COLUMNS {
        return Err(Error::Format(format!("unexpected summary header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let f = |i: usize| parse_opt(&rec[i]);
        let int = |i: usize| {
            rec[i]
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("not an integer: {:?}", &rec[i])))
        };
        let req = |i: usize| f(i)?.ok_or_else(|| Error::Format(format!("missing {}", SUMMARY_COLUMNS[i])));
        let cmp = |i: usize| -> Result<Comparison> {
            Ok(Comparison {
                relative_difference: f(i)?,
                p_value: f(i + 1)?,
            })
        };
        out.push(CellSummary {
            cell: rec[0].to_string(),
            n_agents: int(1)?,
            m_s: req(2)?,
            signal: int(3)?,
            s_eq: req(4)?,
            trials: int(5)?,
            failed: int(6)?,
            social_welfare: f(7)?,
            length: f(8)?,
            convergence_time: f(9)?,
            jain: f(10)?,
            gini: f(11)?,
            cic: f(12)?,
            idle: f(13)?,
            moderate: f(14)?,
            active: f(15)?,
            social_welfare_vs_no_signal: cmp(16)?,
            length_vs_no_signal: cmp(18)?,
            convergence_time_vs_no_signal: cmp(20)?,
            jain_vs_no_signal: cmp(22)?,
            gini_vs_no_signal: cmp(24)?,
        });
    }
    Ok(out)
}

pub fn cell_dir(out_dir: &Path, cell: &CellResult) -> PathBuf {
    out_dir.join(cell.id())
}

/// Writes every artifact of `results` below `out_dir` and returns the manifest.
pub fn persist(results: &ExperimentResults, out_dir: &Path) -> Result<RunManifest> {
    fs::create_dir_all(out_dir)?;
    for cell in &results.cells {
        fs::create_dir_all(cell_dir(out_dir, cell))?;
    }
    // render everything before touching any file
    let summaries: Vec<CellSummary> = results.cells.iter().map(|c| c.summary.clone()).collect();
    let summary = summary_csv(&summaries)?;
    let manifest = results.manifest();
    let manifest_json = serde_json::to_vec_pretty(&manifest)?;

    for cell in &results.cells {
        let dir = cell_dir(out_dir, cell);
        write_atomic(&dir.join("episodes.csv"), &episodes_csv(&cell.trials)?)?;
        write_atomic(&dir.join("profile.csv"), &profile_csv(&cell.trials)?)?;
        for t in &cell.trials {
            if let Some(c) = &t.checkpoint {
                c.save(&dir.join(format!("trial{}.ckpt", t.trial)))?;
            }
        }
    }
    write_atomic(&out_dir.join("summary.csv"), &summary)?;
    write_atomic(&out_dir.join("manifest.json"), &manifest_json)?;
    Ok(manifest)
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let m: RunManifest = serde_json::from_slice(&fs::read(path)?)?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "manifest format version {} is not supported (expected {FORMAT_VERSION})",
            m.format_version
        )));
    }
    Ok(m)
}

/// Re-runs the experiment recorded in a manifest and writes it to `out_dir`.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> Result<ExperimentResults> {
    replay_with(manifest_path, out_dir, &PpoFactory::from_config(&load_manifest(manifest_path)?.config))
}

pub fn replay_with(manifest_path: &Path, out_dir: &Path, factory: &dyn AgentFactory) -> Result<ExperimentResults> {
    let manifest = load_manifest(manifest_path)?;
    let config = &manifest.config;
    for cell in &manifest.cells {
        let expected: Vec<u64> = (0..cell.trial_seeds.len())
            .map(|t| trial_seed(config.seed, &cell.spec.seed_key(), t))
            .collect();
        if expected != cell.trial_seeds {
            return Err(Error::Format(format!(
                "trial seeds of cell {} do not match this build's seeding",
                cell.id
            )));
        }
    }
    let results = run_experiment_with(config, factory)?;
    persist(&results, out_dir)?;
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_matches_printf_g9() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (0.578258821374833, "0.578258821"),
            (99999999.95, "100000000"),
            (999999999.5, "1e+09"),
            (f64::NAN, "NaN"),
        ];
        for (x, s) in cases {
            assert_eq!(fmt_float(x), s, "{x}");
        }
    }

    #[test]
    fn empty_tables_are_header_only() {
        assert_eq!(episodes_csv(&[]).unwrap(), b"trial,episode,length,social_welfare,jain,gini,done_reason\r\n");
        let s = summary_csv(&[]).unwrap();
        assert_eq!(s.iter().filter(|b| **b == b'\n').count(), 1);
        assert!(read_summary_csv(&s).unwrap().is_empty());
    }
}
