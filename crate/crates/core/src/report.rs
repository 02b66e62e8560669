//! Output artifacts: CSV tables, the JSON-lines chain dump, the run
//! manifest and gnuplot scripts.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::SweepRow;
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::identity::NodeId;
use crate::ledger::Blockchain;
use crate::sim::{ConsensusRow, MetricsRow, RunOutput};

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const METRICS_COLUMNS: &[&str] = &[
    "time_s",
    "height",
    "attempt",
    "avg_rep_legit",
    "avg_rep_malicious",
    "accepted_tx",
    "rejected_tx",
    "blacklisted_tx",
    "active_legit",
    "active_malicious",
    "malicious_accept_share",
    "legit_tx",
    "legit_accepted_tx",
    "malicious_tx",
    "malicious_accepted_tx",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub csv_schema_version: u32,
    pub seed: u64,
    pub blocks: u64,
    pub tip_hash: String,
    pub attackers: Vec<NodeId>,
    pub config: ScenarioConfig,
}

impl Manifest {
    pub fn new(config: &ScenarioConfig, output: &RunOutput) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            csv_schema_version: CSV_SCHEMA_VERSION,
            seed: config.seed,
            blocks: output.chain.height(),
            tip_hash: output.chain.tip().hash().to_hex(),
            attackers: output.attackers.iter().copied().collect(),
            config: config.clone(),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    if rows.is_empty() {
        // keep the header so downstream tools see the schema
        let mut w = create(path)?;
        writeln!(w, "{}", METRICS_COLUMNS.join(",")).map_err(|e| Error::io(path, e))?;
        return w.flush().map_err(|e| Error::io(path, e));
    }
    write_csv(path, rows)
}

pub fn write_consensus(path: &Path, rows: &[ConsensusRow]) -> Result<()> {
    write_csv(path, rows)
}

/// Chain as one JSON object per block, genesis first.
pub fn chain_jsonl(chain: &Blockchain) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for block in chain.blocks() {
        serde_json::to_writer(&mut out, block)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_chain(path: &Path, chain: &Blockchain) -> Result<()> {
    let bytes = chain_jsonl(chain)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_chain(path: &Path) -> Result<Vec<crate::ledger::Block>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[derive(Serialize)]
struct ReputationRow {
    height: u64,
    node: String,
    kind: &'static str,
    malicious: bool,
    reputation: u64,
    active: bool,
}

/// Long-format reputation snapshot of every participant after every block.
pub fn write_reputation(path: &Path, chain: &Blockchain, attackers: &BTreeSet<NodeId>) -> Result<()> {
    let mut rows = Vec::new();
    for block in chain.blocks() {
        for (node, score) in block.reputation_table.iter() {
            rows.push(ReputationRow {
                height: block.height,
                node: crate::crypto::Hash32(node.id).to_hex(),
                kind: if node.is_rsu() { "rsu" } else { "vehicle" },
                malicious: attackers.contains(node),
                reputation: *score,
                active: block.activity_flags.get(node),
            });
        }
    }
    write_csv(path, &rows)
}

/// Writes every artifact of one run into `dir`.
pub fn write_run(dir: &Path, config: &ScenarioConfig, output: &RunOutput, dump_reputation: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_metrics(&dir.join("metrics.csv"), &output.metrics)?;
    write_consensus(&dir.join("consensus.csv"), &output.consensus)?;
    write_chain(&dir.join("chain.jsonl"), &output.chain)?;
    let manifest = serde_json::to_vec_pretty(&Manifest::new(config, output))?;
    let path = dir.join("manifest.json");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    if dump_reputation {
        write_reputation(&dir.join("reputation.csv"), &output.chain, &output.attackers)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepCsvRow<'a> {
    param: &'a str,
    value: &'a str,
    #[serde(flatten)]
    row: &'a MetricsRow,
}

/// Combined comparison table of a sweep: the metrics of every run prefixed
/// with the swept parameter and its value.
pub fn write_sweep(path: &Path, param: &str, runs: &[(String, Vec<MetricsRow>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["param", "value"];
    header.extend_from_slice(METRICS_COLUMNS);
    w.write_record(&header)?;
    for (value, rows) in runs {
        for row in rows {
            let record = SweepCsvRow { param, value, row };
            // flatten is not supported by the csv serializer, so go through JSON
            let json = serde_json::to_value(&record)?;
            let fields: Vec<String> = header
                .iter()
                .map(|k| match &json[*k] {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            w.write_record(&fields)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_fig4(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_csv(path, rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    /// Attack success probability against attacker share, one curve per f.
    Fig4,
    /// Average legitimate reputation over time, one curve per swept value.
    Fig5,
    /// Legitimate and malicious average reputation over time.
    Fig6,
    Fig7,
}

impl std::str::FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig4" => Ok(Figure::Fig4),
            "fig5" => Ok(Figure::Fig5),
            "fig6" => Ok(Figure::Fig6),
            "fig7" => Ok(Figure::Fig7),
            other => Err(Error::config(format!("unknown figure {other}; expected fig4, fig5, fig6 or fig7"))),
        }
    }
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
        }
    }

    pub fn required_columns(self) -> &'static [&'static str] {
        match self {
            Figure::Fig4 => &["p", "f", "analytic"],
            Figure::Fig5 => &["time_s", "avg_rep_legit"],
            Figure::Fig6 | Figure::Fig7 => &["time_s", "avg_rep_legit", "avg_rep_malicious"],
        }
    }
}

/// Checks the CSV against the figure and writes a gnuplot script next to
/// it (or at `out`). Returns the script path.
pub fn plot(csv_path: &Path, figure: Figure, out: Option<&Path>) -> Result<PathBuf> {
    let mut reader = csv::Reader::from_path(csv_path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::config(format!("{}: {e}", csv_path.display())),
        _ => Error::from(e),
    })?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let missing: Vec<&str> = figure
        .required_columns()
        .iter()
        .filter(|c| !header.iter().any(|h| h == *c))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(Error::config(format!(
            "{} lacks columns required by {}: {}",
            csv_path.display(),
            figure.name(),
            missing.join(", ")
        )));
    }
    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(Error::config(format!("{} has no data rows", csv_path.display())));
    }
    let column = |name: &str| header.iter().position(|h| h == name);
    let data = csv_path.display().to_string().replace('\'', "''");

    let mut gp = String::new();
    gp.push_str("set datafile separator ','\nset key outside right\nset grid\n");
    gp.push_str(&format!("set terminal pngcairo size 900,600\nset output '{data}.{}.png'\n", figure.name()));
    match figure {
        Figure::Fig4 => {
            let fcol = column("f").expect("checked");
            let fs: BTreeSet<u64> = records.iter().filter_map(|r| r.get(fcol)?.parse().ok()).collect();
            gp.push_str("set xlabel 'attacker reputation share p'\nset ylabel 'malicious block probability'\n");
            let mut clauses = Vec::new();
            for f in &fs {
                clauses.push(format!(
                    "'{data}' using (column('f')=={f} ? column('p') : 1/0):(column('analytic')) with lines title 'f={f}'"
                ));
                if column("monte_carlo").is_some() {
                    clauses.push(format!(
                        "'{data}' using (column('f')=={f} ? column('p') : 1/0):(column('monte_carlo')) with points pt 7 ps 0.5 notitle"
                    ));
                }
            }
            gp.push_str(&format!("set datafile columnheaders\nplot {}\n", clauses.join(", \\\n     ")));
        }
        Figure::Fig5 => {
            gp.push_str("set xlabel 'time (s)'\nset ylabel 'average reputation (active legitimate)'\nset datafile columnheaders\n");
            match column("value") {
                Some(vcol) => {
                    let values: Vec<String> = {
                        let mut seen = Vec::new();
                        for r in &records {
                            let v = r.get(vcol).unwrap_or_default().to_string();
                            if !seen.contains(&v) {
                                seen.push(v);
                            }
                        }
                        seen
                    };
                    let clauses: Vec<String> = values
                        .iter()
                        .map(|v| {
                            format!("'{data}' using (strcol('value') eq '{v}' ? column('time_s') : 1/0):(column('avg_rep_legit')) with lines title '{v}'")
                        })
                        .collect();
                    gp.push_str(&format!("plot {}\n", clauses.join(", \\\n     ")));
                }
                None => gp.push_str(&format!(
                    "plot '{data}' using (column('time_s')):(column('avg_rep_legit')) with lines title 'legitimate'\n"
                )),
            }
        }
        Figure::Fig6 | Figure::Fig7 => {
            gp.push_str("set xlabel 'time (s)'\nset ylabel 'average reputation (active)'\nset datafile columnheaders\n");
            gp.push_str(&format!(
                "plot '{data}' using (column('time_s')):(column('avg_rep_legit')) with lines title 'legitimate', \\\n     '{data}' using (column('time_s')):(column('avg_rep_malicious')) with lines title 'malicious'\n"
            ));
        }
    }

    let script = match out {
        Some(p) => p.to_path_buf(),
        None => {
            let mut p = csv_path.as_os_str().to_owned();
            p.push(format!(".{}.gp", figure.name()));
            PathBuf::from(p)
        }
    };
    fs::write(&script, gp).map_err(|e| Error::io(&script, e))?;
    Ok(script)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::run_scenario;

    fn short_run() -> (ScenarioConfig, RunOutput) {
        let config = ScenarioConfig {
            duration_s: 180,
            ..ScenarioConfig::desk()
        };
        let out = run_scenario(&config).unwrap();
        (config, out)
    }

    #[test]
    fn empty_metrics_keep_the_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics(&path, &[]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim_end(), METRICS_COLUMNS.join(","));
    }

    #[test]
    fn metrics_columns_match_rows() {
        let (_, out) = short_run();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics(&path, &out.metrics).unwrap();
        let mut reader = csv::Reader::from_path(&path).unwrap();
        let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
        assert_eq!(header, METRICS_COLUMNS);
        assert_eq!(reader.records().count(), out.metrics.len());
    }

    #[test]
    fn chain_round_trips() {
        let (config, out) = short_run();
        let dir = tempfile::tempdir().unwrap();
        write_run(dir.path(), &config, &out, true).unwrap();
        let blocks = read_chain(&dir.path().join("chain.jsonl")).unwrap();
        assert_eq!(blocks, out.chain.blocks());
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest.tip_hash, out.chain.tip().hash().to_hex());
        assert_eq!(manifest.config, config);
        assert_eq!(manifest.csv_schema_version, CSV_SCHEMA_VERSION);
        // reloading a manifest gives back the exact scenario
        assert_eq!(ScenarioConfig::load(&dir.path().join("manifest.json")).unwrap(), config);
        assert!(dir.path().join("reputation.csv").is_file());
    }

    #[test]
    fn sweep_rows_are_prefixed() {
        let (_, out) = short_run();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let runs = vec![("0.1".to_string(), out.metrics.clone()), ("2048".to_string(), out.metrics)];
        write_sweep(&path, "threshold", &runs).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("param,value,time_s,height"));
        assert_eq!(lines.clone().count(), 6);
        assert!(lines.all(|l| l.starts_with("threshold,")));
    }

    #[test]
    fn plot_checks_columns_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        write_metrics(&empty, &[]).unwrap();
        assert!(matches!(plot(&empty, Figure::Fig6, None), Err(Error::Config(_))));

        let (_, out) = short_run();
        let metrics = dir.path().join("metrics.csv");
        write_metrics(&metrics, &out.metrics).unwrap();
        assert!(matches!(plot(&metrics, Figure::Fig4, None), Err(Error::Config(_))));
        let script = plot(&metrics, Figure::Fig6, None).unwrap();
        assert!(script.ends_with("metrics.csv.fig6.gp"));
        let gp = fs::read_to_string(script).unwrap();
        assert!(gp.contains("avg_rep_malicious"));

        assert!(matches!(plot(&dir.path().join("nope.csv"), Figure::Fig5, None), Err(Error::Config(_))));
        assert!("fig9".parse::<Figure>().is_err());
    }
}
