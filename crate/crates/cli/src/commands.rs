//! The five pipeline commands. Each one loads the resolved config, runs
//! one stage, writes its artifacts under the output directory, and prints
//! a short summary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use softfail_core::aging::{self, SimulatedTrace};
use softfail_core::dataset::{self, Provenance, SequenceDataset};
use softfail_core::forecaster::{
    self, EdLstmModel, ModelForecaster, OracleForecaster, SequenceForecaster,
};
use softfail_core::policy;

use crate::config::RunConfig;
use crate::CliError;

fn prepare_output(config: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let resolved = config.to_toml()?;
    fs::write(out.join("config_resolved.toml"), resolved)
        .context("writing config_resolved.toml")?;
    Ok(())
}

pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<()> {
    prepare_output(config, out)?;
    let physics = config.physics_params()?;
    let geom = config.geometry.to_geometry(&physics)?;
    let mut weibull = config.aging.to_params();

    if config.calibration.enabled {
        let target = config.calibration.to_target();
        weibull = aging::calibrate_trace(&weibull, &physics, &geom, target, config.seed)?;
        log::info!(
            "calibrated units_per_event = {:.6e}",
            weibull.units_per_event
        );
    }

    let trace = aging::simulate_trace(&weibull, &physics, &geom, config.seed)?;
    let path = out.join("trace.csv");
    aging::write_trace_file(&path, &trace)?;

    let n = trace.ber.bers.len();
    let spec = config.policy.to_spec();
    let crossing = policy::hard_failure_time(&trace.ber, &spec);
    println!("trace: {n} samples -> {}", path.display());
    println!(
        "gain: {:.4} dB initial, {:.4} dB final ({:.4} dB total reduction){}",
        trace.gain.initial_gain_db,
        trace.gain.gains[n - 1],
        trace.gain.reduction_db(n - 1),
        if trace.gain.truncated {
            ", truncated at the gain floor"
        } else {
            ""
        }
    );
    match crossing {
        Some(idx) => println!(
            "hard failure (BER > {:.1e}) at sample {idx} ({:.1}% of horizon, day {:.2})",
            spec.ber_threshold,
            100.0 * idx as f64 / weibull.horizon_samples as f64,
            idx as f64 * weibull.sample_interval_minutes / 1440.0
        ),
        None => println!(
            "no hard failure (BER > {:.1e}) within the horizon",
            spec.ber_threshold
        ),
    }
    Ok(())
}

fn load_trace(path: &Path) -> Result<SimulatedTrace> {
    aging::read_trace_file(path).with_context(|| format!("reading trace {}", path.display()))
}

pub fn cmd_dataset(config: &RunConfig, out: &Path, trace_path: &Path) -> Result<()> {
    prepare_output(config, out)?;
    let trace = load_trace(trace_path)?;
    let spec = config.window.to_spec();
    let transform = config.dataset.target_transform()?;

    let series = dataset::resample(&trace.ber, spec.tau_minutes)?;
    let provenance = Provenance::of_series(&trace.ber.bers, trace.ber.source_seed);
    let mut ds = dataset::build_dataset(&series.values, &spec, transform, provenance)?;
    dataset::split(
        &mut ds,
        config.dataset.train_frac,
        config.dataset.val_frac_of_train,
    )?;
    dataset::fit_normalizer(&mut ds, config.dataset.normalizer_kind()?)?;

    let path = out.join("dataset.txt");
    dataset::write_dataset_file(&path, &ds)?;
    let split = ds.split.as_ref().expect("split was just set");
    println!(
        "dataset: {} τ-samples -> {} sequences of {} -> {}",
        series.values.len(),
        ds.len(),
        ds.spec.seq_len(),
        path.display()
    );
    println!(
        "split: train {} (validation tail {}), test {}",
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}

fn load_dataset(path: &Path) -> Result<SequenceDataset> {
    dataset::read_dataset_file(path).with_context(|| format!("reading dataset {}", path.display()))
}

pub fn cmd_train(
    config: &RunConfig,
    out: &Path,
    dataset_path: &Path,
    init_model: Option<&Path>,
) -> Result<()> {
    prepare_output(config, out)?;
    let ds = load_dataset(dataset_path)?;
    let model = match init_model {
        Some(path) => forecaster::read_model_file(path)
            .with_context(|| format!("reading checkpoint {}", path.display()))?,
        None => forecaster::init_model(&config.train.to_arch(), config.model_seed()),
    };
    let train_config = config.train.to_train_config(config.shuffle_seed());
    let (trained, history) = forecaster::train(model, &ds, &train_config)?;

    let model_path = out.join("model.txt");
    forecaster::write_model_file(&model_path, &trained)?;
    let history_path = out.join("history.csv");
    forecaster::write_history_file(&history_path, &history)?;

    let last = history.epochs.last().expect("at least one epoch");
    let best = &history.epochs[history.best_epoch - 1];
    let total_secs: f64 = history.epochs.iter().map(|e| e.seconds).sum();
    println!(
        "trained {} epochs in {total_secs:.1} s -> {}",
        history.epochs.len(),
        model_path.display()
    );
    println!(
        "epoch 1 val MSE {:.6e}; final val MSE {:.6e}; best epoch {} (val MSE {:.6e})",
        history.epochs[0].val_mse, last.val_mse, history.best_epoch, best.val_mse
    );
    Ok(())
}

pub fn cmd_evaluate(
    config: &RunConfig,
    out: &Path,
    model_path: &Path,
    dataset_path: &Path,
    history_path: Option<&Path>,
) -> Result<()> {
    prepare_output(config, out)?;
    let ds = load_dataset(dataset_path)?;
    let model = forecaster::read_model_file(model_path)
        .with_context(|| format!("reading model {}", model_path.display()))?;
    let split = ds
        .split
        .clone()
        .ok_or_else(|| CliError::Config("dataset has no split; rebuild it".into()))?;
    let report = forecaster::evaluate(&model, &ds, split.test.clone())?;

    let per_pattern = out.join("per_pattern_loss.csv");
    let mut text = String::from("pattern_index,mse_normalized,mse_ber\n");
    for p in &report.per_pattern {
        text.push_str(&format!(
            "{},{:.16e},{:.16e}\n",
            p.index, p.mse_norm, p.mse_ber
        ));
    }
    fs::write(&per_pattern, text)?;

    let metrics = out.join("metrics.csv");
    fs::write(
        &metrics,
        format!(
            "metric,value\ntest_mse_normalized,{:.16e}\ntest_mse_ber,{:.16e}\ntest_sequences,{}\n",
            report.mean_norm,
            report.mean_ber,
            report.per_pattern.len()
        ),
    )?;

    if let Some(history) = history_path {
        let parsed = forecaster::read_history_file(history)
            .with_context(|| format!("reading history {}", history.display()))?;
        forecaster::write_history_file(out.join("training_curve.csv"), &parsed)?;
    }

    println!(
        "test MSE: {:.6e} (normalized), {:.6e} (BER units) over {} sequences",
        report.mean_norm,
        report.mean_ber,
        report.per_pattern.len()
    );
    println!("per-pattern losses -> {}", per_pattern.display());
    Ok(())
}

pub struct CompareArgs {
    pub trace: PathBuf,
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub oracle: bool,
    pub reductions: Option<Vec<f64>>,
}

pub fn cmd_compare(config: &RunConfig, out: &Path, args: &CompareArgs) -> Result<()> {
    prepare_output(config, out)?;
    let trace = load_trace(&args.trace)?;
    let spec = config.policy.to_spec();
    let window = config.window.to_spec();
    let reductions = args
        .reductions
        .clone()
        .unwrap_or_else(|| config.policy.fixed_gain_reductions_db.clone());

    // the prediction row needs a forecaster: either the perfect oracle or a
    // trained model plus the dataset whose normalizer it was trained with
    let loaded: Option<(EdLstmModel, SequenceDataset)> =
        match (&args.model, &args.dataset) {
            (Some(m), Some(d)) => Some((
                forecaster::read_model_file(m)
                    .with_context(|| format!("reading model {}", m.display()))?,
                load_dataset(d)?,
            )),
            (Some(_), None) | (None, Some(_)) => return Err(CliError::Config(
                "--model and --dataset must be given together (the dataset carries the normalizer)"
                    .into(),
            )
            .into()),
            (None, None) => None,
        };
    if loaded.is_some() && args.oracle {
        return Err(CliError::Config("--oracle conflicts with --model".into()).into());
    }

    let model_forecaster;
    let forecaster_ref: Option<&dyn SequenceForecaster> = if let Some((model, ds)) = &loaded {
        let normalizer = ds
            .normalizer
            .as_ref()
            .ok_or_else(|| CliError::Config("dataset has no fitted normalizer".into()))?;
        model_forecaster = ModelForecaster {
            model,
            normalizer,
            transform: ds.transform,
            past_len: ds.spec.past_len,
        };
        Some(&model_forecaster)
    } else if args.oracle {
        Some(&OracleForecaster)
    } else {
        None
    };

    let report = policy::compare(
        &trace.ber,
        &trace.gain,
        &spec,
        &reductions,
        forecaster_ref,
        &window,
    )?;
    fs::write(out.join("report.csv"), report.to_csv())?;
    let table = report.to_table();
    fs::write(out.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}
