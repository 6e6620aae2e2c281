use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use copula_stream::cpd::{online_cpd_loop, CpdLoopConfig};
use copula_stream::em::{batch_bounds, fit_offline, ModelSnapshot, OFFLINE_MAX_ITER, OFFLINE_TOL};
use copula_stream::metrics::{column_medians, score, KindGroup};
use copula_stream::synth::{generate_stream, Mechanism, SynthConfig};
use copula_stream::{ColumnKind, CopulaModel, DataMatrix, EmConfig, OnlineEmState, StepSize};
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::io::{default_names, matrix_rows, read_table, write_table, write_text, Table};
use crate::{CliError, DetectArgs, ImputeArgs, MechanismArg, Mode, ModelArgs, SimulateArgs};

/// Canonical `key=value` list hashed into every output banner. Paths and the
/// worker count are left out since they do not change results.
struct Fingerprint {
    command: &'static str,
    fields: Vec<(&'static str, String)>,
    seed: u64,
}

impl Fingerprint {
    fn new(command: &'static str, seed: u64) -> Self {
        Self {
            command,
            fields: Vec::new(),
            seed,
        }
    }

    fn add(&mut self, key: &'static str, value: impl ToString) -> &mut Self {
        self.fields.push((key, value.to_string()));
        self
    }

    fn banner(&self) -> String {
        let mut canon = format!("command={}\nseed={}\n", self.command, self.seed);
        for (k, v) in &self.fields {
            let _ = writeln!(canon, "{k}={v}");
        }
        let hash = hex::encode(Sha256::digest(canon.as_bytes()));
        format!("# config_hash={hash}, seed={}", self.seed)
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = SynthConfig {
        p_cont: a.p_cont,
        p_ord: a.p_ord,
        p_bin: a.p_bin,
        ordinal_levels: a.levels,
        missing_ratio: a.missing_ratio,
        mechanism: match a.mechanism {
            MechanismArg::Mcar => Mechanism::Mcar,
            MechanismArg::Mnar => Mechanism::Mnar,
        },
        ..SynthConfig::segmented(a.n_per_segment, a.changes, a.seed)
    };
    cfg.validate()?;
    let stream = generate_stream(&cfg)?;

    let mut fp = Fingerprint::new("simulate", a.seed);
    fp.add("n_per_segment", a.n_per_segment)
        .add("changes", a.changes)
        .add("p_cont", a.p_cont)
        .add("p_ord", a.p_ord)
        .add("p_bin", a.p_bin)
        .add("levels", a.levels)
        .add("missing_ratio", a.missing_ratio)
        .add("mechanism", format!("{:?}", a.mechanism));
    let banner = fp.banner();

    ensure_dir(&a.out)?;
    let p = stream.kinds.len();
    let names = default_names(p);
    let kinds = Some(stream.kinds.as_slice());
    write_table(&a.out.join("data.csv"), &banner, kinds, &names, matrix_rows(&stream.observed()))?;
    write_table(&a.out.join("truth.csv"), &banner, kinds, &names, matrix_rows(&stream.truth))?;
    let mask_rows = stream
        .mask
        .chunks(p)
        .map(|r| r.iter().map(|&m| u8::from(m).to_string()).collect());
    write_table(&a.out.join("mask.csv"), &banner, None, &names, mask_rows)?;
    let label_rows = stream
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| vec![i.to_string(), l.to_string()]);
    write_table(
        &a.out.join("labels.csv"),
        &banner,
        None,
        &["row".into(), "segment".into()],
        label_rows,
    )?;
    eprintln!(
        "wrote {} rows x {p} columns to {}",
        stream.truth.nrows(),
        a.out.display()
    );
    Ok(())
}

fn step_size(m: &ModelArgs, default: StepSize) -> Result<StepSize, CliError> {
    let step = match (m.gamma, m.gamma_c) {
        (Some(g), _) => StepSize::Constant(g),
        (None, Some(c)) => StepSize::Decaying { c },
        (None, None) => default,
    };
    step.validate()?;
    Ok(step)
}

fn describe_step(s: StepSize) -> String {
    match s {
        StepSize::Constant(g) => format!("constant:{g}"),
        StepSize::Decaying { c } => format!("decaying:{c}"),
    }
}

fn init_workers(m: &ModelArgs) -> Result<(), CliError> {
    if let Some(n) = m.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn check_batch(batch: usize, table: &Table) -> Result<(), CliError> {
    let p = table.kinds.len();
    if batch <= p {
        return Err(CliError::Config(format!(
            "batch size {batch} must exceed the {p} columns"
        )));
    }
    if table.data.nrows() < batch {
        return Err(CliError::Config(format!(
            "batch size {batch} exceeds the {} input rows",
            table.data.nrows()
        )));
    }
    Ok(())
}

fn load_snapshot(path: &Path, kinds: &[ColumnKind]) -> Result<(CopulaModel, usize), CliError> {
    let json = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let snap = ModelSnapshot::from_json(&json)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let model = snap
        .restore()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if model.kinds() != kinds {
        return Err(CliError::Config(format!(
            "{}: snapshot schema `{}` does not match input schema `{}`",
            path.display(),
            ColumnKind::format_schema(&model.kinds()),
            ColumnKind::format_schema(kinds)
        )));
    }
    Ok((model, snap.updates))
}

fn save_snapshot(path: &Path, model: &CopulaModel, updates: usize) -> Result<(), CliError> {
    fs::write(path, ModelSnapshot::capture(model, updates).to_json())
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn online_state(
    m: &ModelArgs,
    kinds: &[ColumnKind],
    step: StepSize,
) -> Result<OnlineEmState, CliError> {
    let config = EmConfig {
        step,
        ..EmConfig::default()
    };
    match &m.snapshot_in {
        Some(path) => {
            let (model, updates) = load_snapshot(path, kinds)?;
            let mut st = OnlineEmState::new(model, config)?;
            st.t = updates;
            Ok(st)
        }
        None => Ok(OnlineEmState::new(CopulaModel::new(kinds, m.window)?, config)?),
    }
}

fn model_fingerprint(fp: &mut Fingerprint, m: &ModelArgs, kinds: &[ColumnKind], batch: usize) {
    fp.add("schema", ColumnKind::format_schema(kinds))
        .add("window", m.window)
        .add("batch", batch)
        .add("snapshot_in", m.snapshot_in.is_some());
}

/// Upper-triangle entries of Σ, row-major.
fn upper_triangle(s: &DMatrix<f64>) -> Vec<String> {
    let p = s.nrows();
    (0..p)
        .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
        .map(|(i, j)| format!("{}", s[(i, j)]))
        .collect()
}

fn trace_header(names: &[String]) -> Vec<String> {
    let mut h = vec!["batch".to_string(), "end_row".to_string()];
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            h.push(format!("{}:{}", names[i], names[j]));
        }
    }
    h
}

pub fn impute(a: &ImputeArgs) -> Result<(), CliError> {
    let m = &a.model;
    let table = read_table(&m.input, m.schema.as_deref())?;
    let kinds = &table.kinds;
    let p = kinds.len();
    let batch = m.batch.unwrap_or(match a.mode {
        Mode::Online => 40,
        Mode::Minibatch | Mode::Offline => 100,
    });
    check_batch(batch, &table)?;
    let step = step_size(
        m,
        match a.mode {
            Mode::Online => StepSize::ONLINE_DEFAULT,
            Mode::Minibatch | Mode::Offline => StepSize::OFFLINE_DEFAULT,
        },
    )?;
    if m.snapshot_in.is_some() && a.mode != Mode::Online {
        return Err(CliError::Config("--snapshot-in requires --mode online".into()));
    }
    let truth = match &a.truth {
        Some(path) => {
            let t = read_table(path, m.schema.as_deref())?;
            if t.kinds != *kinds || t.data.nrows() != table.data.nrows() {
                return Err(CliError::Config(format!(
                    "{}: truth shape or schema differs from the input",
                    path.display()
                )));
            }
            Some(t.data)
        }
        None => None,
    };
    init_workers(m)?;

    let mut fp = Fingerprint::new("impute", m.seed);
    model_fingerprint(&mut fp, m, kinds, batch);
    fp.add("mode", format!("{:?}", a.mode))
        .add("step", describe_step(step));
    let banner = fp.banner();

    let data = &table.data;
    let bounds = batch_bounds(data.nrows(), batch, p);
    let mut imputed = DataMatrix::empty(p);
    let mut trace: Vec<Vec<String>> = Vec::new();
    let push_trace = |trace: &mut Vec<Vec<String>>, t: usize, end: usize, s: &DMatrix<f64>| {
        let mut row = vec![t.to_string(), end.to_string()];
        row.extend(upper_triangle(s));
        trace.push(row);
    };
    let (model, updates) = match a.mode {
        Mode::Online => {
            let mut st = online_state(m, kinds, step)?;
            for (k, &(s, e)) in bounds.iter().enumerate() {
                let out = st
                    .process_batch(data.slice(s, e))
                    .map_err(|err| CliError::from(err_at(err, s)))?;
                for i in 0..out.imputed.nrows() {
                    imputed.push_row(out.imputed.row(i));
                }
                push_trace(&mut trace, k + 1, e, &st.model.sigma);
            }
            (st.model, st.t)
        }
        Mode::Minibatch => {
            let model = CopulaModel::with_offline_marginals(kinds, data.view())?;
            let config = EmConfig {
                step,
                ..EmConfig::default()
            };
            let mut st = OnlineEmState::new(model, config)?.with_fixed_marginals();
            for (k, &(s, e)) in bounds.iter().enumerate() {
                st.online_update(data.slice(s, e))
                    .map_err(|err| CliError::from(err_at(err, s)))?;
                push_trace(&mut trace, k + 1, e, &st.model.sigma);
            }
            imputed = st.model.impute_batch(data.view())?.0;
            (st.model, st.t)
        }
        Mode::Offline => {
            let fit = fit_offline(kinds, data.view(), OFFLINE_MAX_ITER, OFFLINE_TOL)?;
            if !fit.converged {
                eprintln!(
                    "warning: offline EM stopped after {} iterations without converging",
                    fit.iterations
                );
            }
            push_trace(&mut trace, fit.iterations, data.nrows(), &fit.model.sigma);
            imputed = fit.model.impute_batch(data.view())?.0;
            (fit.model, 0)
        }
    };

    ensure_dir(&m.out)?;
    write_table(
        &m.out.join("imputed.csv"),
        &banner,
        Some(kinds),
        &table.names,
        matrix_rows(&imputed),
    )?;
    let trace_name = if a.mode == Mode::Offline { "iteration" } else { "batch" };
    let mut header = trace_header(&table.names);
    header[0] = trace_name.to_string();
    write_table(
        &m.out.join("sigma_trace.csv"),
        &banner,
        None,
        &header,
        trace.into_iter(),
    )?;
    if let Some(truth) = truth {
        write_scores(&m.out, &banner, data, &imputed, &truth, kinds, &bounds)?;
    }
    if let Some(path) = &m.snapshot_out {
        save_snapshot(path, &model, updates)?;
    }
    Ok(())
}

fn err_at(e: copula_stream::Error, row: usize) -> copula_stream::Error {
    copula_stream::Error::Row {
        row,
        source: Box::new(e),
    }
}

/// Scores the input's missing cells. The median baseline comes from the
/// observed input cells.
fn write_scores(
    dir: &Path,
    banner: &str,
    input: &DataMatrix,
    imputed: &DataMatrix,
    truth: &DataMatrix,
    kinds: &[ColumnKind],
    bounds: &[(usize, usize)],
) -> Result<(), CliError> {
    let mask: Vec<bool> = input.values().iter().map(|v| v.is_nan()).collect();
    let scorable = mask
        .iter()
        .zip(truth.values())
        .any(|(&m, t)| m && !t.is_nan());
    if !scorable {
        eprintln!("note: no missing cells with known truth; skipping scores");
        return Ok(());
    }
    let report = score(imputed, truth, &mask, kinds, input.view())?;
    write_text(&dir.join("score.tsv"), banner, &report.to_delimited())?;
    write_text(&dir.join("score.txt"), banner, &report.to_key_value())?;

    let p = kinds.len();
    let medians = column_medians(input.view());
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
    let mut body = String::from("batch\tstart_row\tend_row");
    for g in KindGroup::ALL {
        let _ = write!(body, "\tsmae_{}", g.name());
    }
    body.push_str("\tsmae_mean\n");
    for (k, &(s, e)) in bounds.iter().enumerate() {
        let r = copula_stream::metrics::smae(
            &imputed.slice(s, e).to_owned(),
            &truth.slice(s, e).to_owned(),
            &mask[s * p..e * p],
            kinds,
            &medians,
        )?;
        let _ = write!(body, "{}\t{s}\t{e}", k + 1);
        for g in KindGroup::ALL {
            let _ = write!(body, "\t{}", fmt(r.get(g)));
        }
        let _ = writeln!(body, "\t{}", fmt(r.mean_present()));
    }
    write_text(&dir.join("batch_smae.tsv"), banner, &body)
}

pub fn detect(a: &DetectArgs) -> Result<(), CliError> {
    let m = &a.model;
    let table = read_table(&m.input, m.schema.as_deref())?;
    let kinds = &table.kinds;
    let batch = m.batch.unwrap_or(40);
    check_batch(batch, &table)?;
    let step = step_size(m, StepSize::ONLINE_DEFAULT)?;
    if a.mc_samples == 0 {
        return Err(CliError::Config("--mc-samples must be at least 1".into()));
    }
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Config(format!("--alpha {} outside (0, 1)", a.alpha)));
    }
    init_workers(m)?;

    let mut fp = Fingerprint::new("detect", m.seed);
    model_fingerprint(&mut fp, m, kinds, batch);
    fp.add("step", describe_step(step))
        .add("mc_samples", a.mc_samples)
        .add("alpha", a.alpha)
        .add("burn_in", a.burn_in)
        .add("initial_burn_in", a.initial_burn_in)
        .add("biased_p", a.biased_p);
    let banner = fp.banner();

    let state = online_state(m, kinds, step)?;
    let cfg = CpdLoopConfig {
        batch_size: batch,
        replicates: a.mc_samples,
        alpha: a.alpha,
        burn_in: a.burn_in,
        initial_burn_in: a.initial_burn_in,
        seed: m.seed,
        biased_p: a.biased_p,
    };
    let report = online_cpd_loop(state, table.data.view(), &cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    ensure_dir(&m.out)?;
    write_text(&m.out.join("detection.tsv"), &banner, &report.to_delimited())?;
    let hits = report.detections();
    if hits.is_empty() {
        eprintln!("no change points detected");
    } else {
        let list: Vec<String> = hits.iter().map(ToString::to_string).collect();
        eprintln!("change points detected at batches {}", list.join(", "));
    }
    if let Some(path) = &m.snapshot_out {
        save_snapshot(path, &report.state.model, report.state.t)?;
    }
    Ok(())
}
