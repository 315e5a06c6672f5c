//! Command-line front end: `synth`, `recover`, `bench` and `sweep`.
//!
//! Every option may also be given as a flat key in a JSON file passed with
//! `--config`; flags win over the file. Matrices travel as the
//! `(kind, m, n, seed)` tuple.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};

use crate::baselines::BompConfig;
use crate::error::Error;
use crate::estimator::EstimatorConfig;
use crate::harness::{
    match_frequencies, normalized_l2_error, run_experiment, timing_table, write_atomic,
    ExperimentSpec, Method, SweepAxis,
};
use crate::model::{add_noise, draw_model, NoiseSpec, Preset, SignalModel};
use crate::recovery::{recover, RecoveryConfig};
use crate::sensing::{MatrixKind, MatrixSpec, Measurement};

#[derive(Debug, Parser)]
#[command(
    name = "spectral-mds",
    version,
    about = "Recover frequency-sparse signals from compressed measurements"
)]
pub struct Cli {
    /// Flat JSON file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random model and write its samples (and optionally measurements).
    Synth(SynthArgs),
    /// Recover K sinusoids from a measurement file.
    Recover(RecoverArgs),
    /// Average recovery time per method.
    Bench(BenchArgs),
    /// Monte Carlo error sweep over M or SNR.
    Sweep(SweepArgs),
}

/// Options shared by every subcommand that runs recovery.
#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub freq_tol: Option<f64>,
    #[arg(long)]
    pub max_refinements: Option<usize>,
    #[arg(long)]
    pub gram_det_tol: Option<f64>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    #[arg(long)]
    pub residual_rel_tol: Option<f64>,
    #[arg(long)]
    pub collapse_duplicates: Option<bool>,
    #[arg(long)]
    pub warm_start: Option<bool>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Minimum frequency separation (defaults to pi / n).
    #[arg(long)]
    pub min_sep: Option<f64>,
    /// Add white Gaussian noise at this SNR before measuring.
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub noise_seed: Option<u64>,
    /// Also write `m` measurements of the (noisy) signal.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub matrix_kind: Option<MatrixKind>,
    #[arg(long)]
    pub matrix_seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RecoverArgs {
    /// Measurement CSV as written by `synth`.
    #[arg(long)]
    pub measurements: Option<PathBuf>,
    #[arg(long)]
    pub matrix_kind: Option<MatrixKind>,
    /// Rows of the sensing matrix; must match the measurement count.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub matrix_seed: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Ground-truth model JSON to score against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Result JSON path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the recovered samples as CSV.
    #[arg(long)]
    pub signal_out: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub matrix_kind: Option<MatrixKind>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of mds,bomp,oracle_ls.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub min_sep: Option<f64>,
    /// Measurements per trial when sweeping SNR.
    #[arg(long)]
    pub m: Option<usize>,
    /// SNR in dB when sweeping M; noiseless when omitted.
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub band_radius: Option<f64>,
    #[arg(long)]
    pub frame_c: Option<usize>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub axis: Option<SweepAxis>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// Full-size protocol: 600 trials, M = 15..65 step 5 or SNR 0..60 step 5.
    #[arg(long)]
    pub paper_scale: bool,
    /// Output prefix; writes `<out>.csv`, `<out>.json` and `<out>.svg`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_svg: bool,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// SNR of the noisy timing column.
    #[arg(long)]
    pub noisy_snr: Option<f64>,
    /// JSON output path; the table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

/// A failure together with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    fn io(msg: impl std::fmt::Display) -> Self {
        Self {
            code: 1,
            message: msg.to_string(),
        }
    }

    fn usage(msg: impl std::fmt::Display) -> Self {
        Self {
            code: 2,
            message: msg.to_string(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Json(_) => CliError::io(e),
            _ => CliError::usage(e),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Flag values layered over the `--config` file.
struct Resolver {
    file: Map<String, Value>,
}

impl Resolver {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self { file: Map::new() });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(file)) => Ok(Self { file }),
            Ok(_) => Err(CliError::io("config file must hold a JSON object")),
            Err(e) => Err(CliError::io(format!("config {}: {e}", path.display()))),
        }
    }

    fn get<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::io(format!("config key `{key}`: {e}"))),
        }
    }

    fn or<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T> {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }

    fn require<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> CliResult<T> {
        self.get(flag, key)?.ok_or_else(|| {
            CliError::usage(format!(
                "missing required option --{}",
                key.replace('_', "-")
            ))
        })
    }

    fn recovery(&self, k: usize, a: &SolverArgs) -> CliResult<RecoveryConfig> {
        let d = RecoveryConfig::new(k);
        let e = EstimatorConfig::default();
        let cfg = RecoveryConfig {
            k,
            max_sweeps: self.or(a.max_sweeps, "max_sweeps", d.max_sweeps)?,
            residual_rel_tol: self.or(
                a.residual_rel_tol,
                "residual_rel_tol",
                d.residual_rel_tol,
            )?,
            collapse_duplicates: self.or(
                a.collapse_duplicates,
                "collapse_duplicates",
                d.collapse_duplicates,
            )?,
            warm_start: self.or(a.warm_start, "warm_start", d.warm_start)?,
            estimator: EstimatorConfig {
                grid_points: self.get(a.grid_points, "grid_points")?,
                freq_tol: self.or(a.freq_tol, "freq_tol", e.freq_tol)?,
                max_refinements: self.or(
                    a.max_refinements,
                    "max_refinements",
                    e.max_refinements,
                )?,
                gram_det_tol: self.or(a.gram_det_tol, "gram_det_tol", e.gram_det_tol)?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn experiment(
        &self,
        a: &ExperimentArgs,
        template: ExperimentSpec,
    ) -> CliResult<ExperimentSpec> {
        let k = self.or(a.k, "k", template.k)?;
        let d = BompConfig::default();
        Ok(ExperimentSpec {
            n: self.or(a.n, "n", template.n)?,
            k,
            preset: self.or(a.preset, "preset", template.preset)?,
            matrix_kind: self.or(a.matrix_kind, "matrix_kind", template.matrix_kind)?,
            trials: self.or(a.trials, "trials", template.trials)?,
            base_seed: self.or(a.seed, "seed", template.base_seed)?,
            methods: self.or(a.methods.clone(), "methods", template.methods.clone())?,
            min_sep: self.get(a.min_sep, "min_sep")?,
            fixed_m: self.or(a.m, "m", template.fixed_m)?,
            fixed_snr_db: self.get(a.snr, "snr")?,
            recovery: self.recovery(k, &a.solver)?,
            bomp: BompConfig {
                k,
                band_radius: self.get(a.band_radius, "band_radius")?,
                frame_c: self.or(a.frame_c, "frame_c", d.frame_c)?,
            },
            ..template
        })
    }
}

/// Parses `args` (including the program name) and runs the chosen subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let resolver = Resolver::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(&resolver, a),
        Command::Recover(a) => cmd_recover(&resolver, a),
        Command::Bench(a) => cmd_bench(&resolver, a),
        Command::Sweep(a) => cmd_sweep(&resolver, a),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    write_atomic(path, contents)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn to_json(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s.into_bytes()
}

fn column_csv(header: &str, columns: &[&[f64]]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec![header.split(',').next().unwrap_or("index").to_string()];
    head.extend(header.split(',').skip(1).map(str::to_string));
    w.write_record(&head).expect("in-memory write");
    for i in 0..columns[0].len() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(columns.iter().map(|c| c[i].to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

/// Reads the last column of a headed CSV as measurement values.
pub fn read_measurements(path: &Path) -> CliResult<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        let field = rec
            .iter()
            .next_back()
            .ok_or_else(|| CliError::io(format!("{}: empty row {}", path.display(), line + 2)))?;
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|e| CliError::io(format!("{}: row {}: {e}", path.display(), line + 2)))?;
        values.push(v);
    }
    Ok(values)
}

fn cmd_synth(r: &Resolver, a: &SynthArgs) -> CliResult<()> {
    let k: usize = r.require(a.k, "k")?;
    let n = r.or(a.n, "n", 128)?;
    let preset = r.or(a.preset, "preset", Preset::Freq)?;
    let seed = r.or(a.seed, "seed", 0)?;
    if k == 0 {
        return Err(CliError::usage("--k must be at least 1"));
    }
    let min_sep = r.or(a.min_sep, "min_sep", std::f64::consts::PI / n.max(1) as f64)?;
    let snr = r.get(a.snr, "snr")?;
    let noise_seed = r.or(a.noise_seed, "noise_seed", seed.wrapping_add(1))?;
    let m = r.get(a.m, "m")?;
    let matrix_kind = r.or(a.matrix_kind, "matrix_kind", MatrixKind::Gaussian)?;
    let matrix_seed = r.or(a.matrix_seed, "matrix_seed", seed)?;
    let out_dir = r.or(a.out_dir.clone(), "out_dir", PathBuf::from("."))?;

    let model = draw_model(k, n, min_sep, preset, seed)?;
    let s = model.synthesize();
    let noise = match snr {
        Some(db) => NoiseSpec::with_snr(db, noise_seed)?,
        None => NoiseSpec::noiseless(),
    };
    let x = add_noise(&s, &noise)?;
    let matrix = m.map(|m| MatrixSpec {
        kind: matrix_kind,
        m,
        n,
        seed: matrix_seed,
    });
    let measurement = match matrix {
        Some(spec) => Some(spec.build()?.measure(&x)?),
        None => None,
    };

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", out_dir.display())))?;
    let signal_csv = if snr.is_some() {
        column_csv("t,signal,noisy", &[&s, &x])
    } else {
        column_csv("t,signal", &[&s])
    };
    write_file(&out_dir.join("signal.csv"), &signal_csv)?;
    if let Some(meas) = &measurement {
        write_file(
            &out_dir.join("measurements.csv"),
            &column_csv("i,value", &[&meas.values]),
        )?;
    }
    let mut record = serde_json::to_value(&model).map_err(Error::from)?;
    record["config"] = json!({
        "k": k, "n": n, "preset": preset, "seed": seed, "min_sep": min_sep,
        "snr": snr, "noise_seed": snr.map(|_| noise_seed), "matrix": matrix,
    });
    write_file(&out_dir.join("model.json"), &to_json(&record))?;
    Ok(())
}

fn cmd_recover(r: &Resolver, a: &RecoverArgs) -> CliResult<()> {
    let path: PathBuf = r.require(a.measurements.clone(), "measurements")?;
    let values = read_measurements(&path)?;
    let k: usize = r.require(a.k, "k")?;
    let n: usize = r.require(a.n, "n")?;
    let kind = r.or(a.matrix_kind, "matrix_kind", MatrixKind::Gaussian)?;
    let seed: u64 = r.require(a.matrix_seed, "matrix_seed")?;
    let m = r.or(a.m, "m", values.len())?;
    if m != values.len() {
        return Err(Error::DimensionMismatch {
            what: "measurement count",
            expected: m,
            actual: values.len(),
        }
        .into());
    }
    let cfg = r.recovery(k, &a.solver)?;
    let truth: Option<SignalModel> = match r.get(a.truth.clone(), "truth")? {
        Some(p) => {
            let text = std::fs::read_to_string(&p)
                .map_err(|e| CliError::io(format!("cannot read {}: {e}", p.display())))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| CliError::io(format!("{}: {e}", p.display())))?,
            )
        }
        None => None,
    };

    let spec = MatrixSpec { kind, m, n, seed };
    let phi = spec.build()?;
    let meas = Measurement::new(values, seed);
    let result = recover(&phi, &meas, &cfg)?;

    let mut out = serde_json::to_value(&result).map_err(Error::from)?;
    if let Some(truth) = &truth {
        if truth.n() != n {
            return Err(Error::DimensionMismatch {
                what: "truth model length",
                expected: n,
                actual: truth.n(),
            }
            .into());
        }
        let err = normalized_l2_error(&truth.synthesize(), &result.signal)?;
        out["nl2_error"] = json!(err);
        if let Ok(fm) = match_frequencies(&truth.frequencies(), &result.model.frequencies()) {
            out["frequency_errors"] = json!(fm.errors);
            out["freq_err_total"] = json!(fm.total);
        }
    }
    out["config"] = json!({ "matrix": spec, "recovery": cfg, "measurements": path });
    let bytes = to_json(&out);
    match r.get(a.out.clone(), "out")? {
        Some(p) => write_file(&p, &bytes)?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    if let Some(p) = r.get(a.signal_out.clone(), "signal_out")? {
        write_file(&p, &column_csv("t,signal", &[&result.signal]))?;
    }
    Ok(())
}

fn with_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        Some(0) => Err(CliError::usage("--threads must be at least 1")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map(|pool| pool.install(job))
            .map_err(CliError::io),
        None => Ok(job()),
    }
}

fn cmd_sweep(r: &Resolver, a: &SweepArgs) -> CliResult<()> {
    let axis = r.or(a.axis, "axis", SweepAxis::M)?;
    let full = a.paper_scale || r.or(None, "paper_scale", false)?;
    let template = match (axis, full) {
        (SweepAxis::M, false) => ExperimentSpec::desk_m_sweep(),
        (SweepAxis::Snr, false) => ExperimentSpec::desk_snr_sweep(),
        (SweepAxis::M, true) => ExperimentSpec::full_m_sweep(),
        (SweepAxis::Snr, true) => ExperimentSpec::full_snr_sweep(),
    };
    let values = r.or(a.values.clone(), "values", template.values.clone())?;
    let mut spec = r.experiment(&a.experiment, ExperimentSpec { values, ..template })?;
    if axis == SweepAxis::Snr {
        spec.fixed_snr_db = None;
    }
    spec.validate().map_err(CliError::io)?;
    let out = r.or(a.out.clone(), "out", PathBuf::from("sweep"))?;
    let threads = r.get(a.experiment.threads, "threads")?;

    let result = with_threads(threads, || run_experiment(&spec))?.map_err(CliError::io)?;
    let with_ext = |ext: &str| {
        let mut p = out.clone().into_os_string();
        p.push(ext);
        PathBuf::from(p)
    };
    write_file(&with_ext(".csv"), result.to_csv().as_bytes())?;
    write_file(&with_ext(".json"), &to_json(&result.summary_json()))?;
    if !a.no_svg {
        write_file(&with_ext(".svg"), result.to_svg().as_bytes())?;
    }
    for c in &result.cells {
        println!(
            "{:>8} {:<10} mean={:.3e} median={:.3e} time={:.3e}s failures={}",
            c.sweep_value,
            c.method.id(),
            c.mean_error,
            c.median_error,
            c.mean_time_s,
            c.failures
        );
    }
    Ok(())
}

fn cmd_bench(r: &Resolver, a: &BenchArgs) -> CliResult<()> {
    let template = ExperimentSpec {
        trials: 10,
        ..ExperimentSpec::desk_m_sweep()
    };
    let spec = r.experiment(&a.experiment, template)?;
    let noisy = r.or(a.noisy_snr, "noisy_snr", 30.0)?;
    let threads = r.get(a.experiment.threads, "threads")?.or(Some(1));
    let rows = with_threads(threads, || timing_table(&spec, noisy))?.map_err(CliError::io)?;
    println!(
        "{:<12} {:>14} {:>14}",
        "method", "noiseless (s)", "noisy (s)"
    );
    for row in &rows {
        println!(
            "{:<12} {:>14.6} {:>14.6}",
            row.label, row.noiseless_s, row.noisy_s
        );
    }
    if let Some(p) = r.get(a.out.clone(), "out")? {
        let doc = json!({ "spec": spec, "noisy_snr_db": noisy, "rows": rows });
        write_file(&p, &to_json(&doc))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("spectral-mds").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(
            &cfg,
            r#"{"k": 2, "n": 64, "max_sweeps": 3, "grid_points": 32}"#,
        )
        .unwrap();
        let r = Resolver::load(Some(&cfg)).unwrap();
        assert_eq!(r.or(Some(5usize), "k", 1).unwrap(), 5);
        assert_eq!(r.or(None::<usize>, "n", 1).unwrap(), 64);
        let rc = r.recovery(2, &SolverArgs::default()).unwrap();
        assert_eq!(rc.max_sweeps, 3);
        assert_eq!(rc.estimator.grid_points, Some(32));
        assert!(r.get(None::<String>, "k").is_err());
    }

    #[test]
    fn sweep_flags_parse() {
        let cli = parse(&[
            "sweep",
            "--axis",
            "snr",
            "--values",
            "0,20",
            "--methods",
            "mds,oracle_ls",
            "--m",
            "48",
        ]);
        let Command::Sweep(a) = cli.command else {
            panic!()
        };
        assert_eq!(a.axis, Some(SweepAxis::Snr));
        assert_eq!(a.values, Some(vec![0.0, 20.0]));
        assert_eq!(
            a.experiment.methods,
            Some(vec![Method::Mds, Method::OracleLs])
        );
        assert_eq!(a.experiment.m, Some(48));
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::invalid("x")).code, 2);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(CliError::from(Error::Io(io)).code, 1);
        assert_eq!(run(["spectral-mds", "synth", "--k", "0"]), 2);
        assert_eq!(run(["spectral-mds", "bogus"]), 2);
    }

    #[test]
    fn csv_layout() {
        let bytes = column_csv("t,signal", &[&[0.5, -1.0]]);
        assert_eq!(String::from_utf8(bytes).unwrap(), "t,signal\n1,0.5\n2,-1\n");
    }
}
