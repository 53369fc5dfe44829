//! Reading and writing trajectories, traces and reports.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use lpbound::harness::{write_plot_data, write_reports_csv, BenchConfig, BoundReport, Failure};
use lpbound::predictors::PredictionTrace;
use lpbound::processes::{GeneratorTag, Trajectory, TrajectoryMetadata};
use serde::{Deserialize, Serialize};

pub fn load_config(path: &Path) -> Result<BenchConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: BenchConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    for s in &cfg.scenarios {
        s.validate()?;
    }
    Ok(cfg)
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64> {
    field.trim().parse().with_context(|| format!("line {line}: column {column}: not a number: {field:?}"))
}

/// Reads a trajectory CSV (`step, x_0…, y[, mask]`) and its JSON side-car if present.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let y_col = headers.iter().position(|h| h == "y").context("trajectory CSV has no `y` column")?;
    let mask_col = headers.iter().position(|h| h == "mask");
    let x_cols: Vec<usize> = (0..).map_while(|i| headers.iter().position(|h| h == format!("x_{i}"))).collect();
    let (mut inputs, mut outputs, mut mask) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let line = i + 2;
        for &c in &x_cols {
            inputs.push(parse_f64(&rec[c], line, &headers[c])?);
        }
        outputs.push(parse_f64(&rec[y_col], line, "y")?);
        if let Some(c) = mask_col {
            mask.push(match rec[c].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => bail!("line {line}: mask must be 0 or 1, got {other:?}"),
            });
        }
    }
    let label_mask = (mask_col.is_some() && mask.iter().any(|&b| !b)).then_some(mask);
    let meta_path = sidecar(path);
    let (generator, seed, presample) = if meta_path.exists() {
        let meta: TrajectoryMetadata = serde_json::from_str(&fs::read_to_string(&meta_path)?)
            .with_context(|| format!("parsing {}", meta_path.display()))?;
        ensure!(
            meta.length == outputs.len() && meta.input_dim == x_cols.len(),
            "{} describes {} steps of dimension {}, CSV has {} of dimension {}",
            meta_path.display(),
            meta.length,
            meta.input_dim,
            outputs.len(),
            x_cols.len()
        );
        (meta.generator, meta.seed, meta.presample)
    } else {
        (GeneratorTag::External { source: path.display().to_string() }, 0, Vec::new())
    };
    let mut t = Trajectory::from_parts(x_cols.len(), inputs, outputs, label_mask, seed, generator)?;
    t.presample = presample;
    Ok(t)
}

pub fn write_trajectory(t: &Trajectory, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    t.write_csv(&mut w)?;
    w.flush()?;
    write_json(&t.metadata(), &sidecar(path))
}

/// Reads a trace CSV (`step, y, y_hat, innovation`); the predictor tag is the file stem.
pub fn read_trace(path: &Path) -> Result<PredictionTrace> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).with_context(|| format!("trace CSV has no `{name}` column"));
    let (p_col, e_col) = (col("y_hat")?, col("innovation")?);
    let (mut predictions, mut innovations) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        predictions.push(parse_f64(&rec[p_col], i + 2, "y_hat")?);
        innovations.push(parse_f64(&rec[e_col], i + 2, "innovation")?);
    }
    let predictor = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace").trim_end_matches(".trace").to_string();
    Ok(PredictionTrace { predictor, predictions, innovations })
}

pub fn write_trace(trace: &PredictionTrace, outputs: &[f64], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    trace.write_csv(outputs, &mut w)?;
    Ok(w.flush()?)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(w.flush()?)
}

/// Everything `bench` writes to `reports.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct BenchOutput {
    pub reports: Vec<BoundReport>,
    pub failures: Vec<Failure>,
}

pub fn write_bench_output(out: &BenchOutput, dir: &Path) -> Result<()> {
    write_json(out, &dir.join("reports.json"))?;
    let mut csv = BufWriter::new(File::create(dir.join("reports.csv"))?);
    write_reports_csv(&out.reports, &mut csv)?;
    csv.flush()?;
    let mut plot = BufWriter::new(File::create(dir.join("plot_data.csv"))?);
    write_plot_data(&out.reports, &mut plot)?;
    Ok(plot.flush()?)
}

pub fn read_bench_output(path: &Path) -> Result<BenchOutput> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
