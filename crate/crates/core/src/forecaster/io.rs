//! Model and history files.
//!
//! Models are stored as a self-describing text container: a header with
//! format version, shapes, seeds and training config, then one line per
//! parameter block with row-major values at 17 significant digits (decimal
//! that round-trips IEEE-754 f64 exactly). Histories are plain CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{
    CellBiases, DenseHead, EdLstmModel, EpochStats, LstmCellParams, ModelArch, TrainConfig,
    TrainHistory,
};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_TAG: &str = "softfail-model v1";

fn write_block<W: Write>(w: &mut W, name: &str, values: &[f64]) -> Result<()> {
    write!(w, "{name} {}", values.len())?;
    for v in values {
        write!(w, " {v:.16e}")?;
    }
    writeln!(w)?;
    Ok(())
}

fn cell_blocks(prefix: &str, p: &LstmCellParams) -> Vec<(String, Vec<f64>)> {
    let mut blocks = vec![
        (format!("{prefix}.u_i"), p.u_i.to_vec()),
        (format!("{prefix}.u_f"), p.u_f.to_vec()),
        (format!("{prefix}.u_o"), p.u_o.to_vec()),
        (format!("{prefix}.u_g"), p.u_g.to_vec()),
        (format!("{prefix}.w_i"), p.w_i.iter().copied().collect()),
        (format!("{prefix}.w_f"), p.w_f.iter().copied().collect()),
        (format!("{prefix}.w_o"), p.w_o.iter().copied().collect()),
        (format!("{prefix}.w_g"), p.w_g.iter().copied().collect()),
    ];
    if let Some(b) = &p.biases {
        blocks.push((format!("{prefix}.b_i"), b.b_i.to_vec()));
        blocks.push((format!("{prefix}.b_f"), b.b_f.to_vec()));
        blocks.push((format!("{prefix}.b_o"), b.b_o.to_vec()));
        blocks.push((format!("{prefix}.b_g"), b.b_g.to_vec()));
    }
    blocks
}

pub fn write_model<W: Write>(mut w: W, model: &EdLstmModel) -> Result<()> {
    writeln!(w, "# {MODEL_FORMAT_TAG}")?;
    writeln!(w, "# init_seed {}", model.init_seed)?;
    writeln!(w, "# hidden_units {}", model.arch.hidden_units)?;
    writeln!(w, "# dense_units {}", model.arch.dense_units)?;
    writeln!(w, "# input_features {}", model.arch.input_features)?;
    writeln!(w, "# use_biases {}", model.arch.use_biases)?;
    match model.trained_future_len {
        Some(s) => writeln!(w, "# trained_future_len {s}")?,
        None => writeln!(w, "# trained_future_len none")?,
    }
    match &model.training_config {
        Some(c) => writeln!(
            w,
            "# training_config {:.16e} {} {} {:.16e} {:.16e} {:.16e} {}",
            c.learning_rate, c.batch_size, c.epochs, c.beta1, c.beta2, c.epsilon, c.rng_seed
        )?,
        None => writeln!(w, "# training_config none")?,
    }
    for (name, values) in cell_blocks("encoder", &model.encoder) {
        write_block(&mut w, &name, &values)?;
    }
    for (name, values) in cell_blocks("decoder", &model.decoder) {
        write_block(&mut w, &name, &values)?;
    }
    write_block(
        &mut w,
        "dense.w1",
        &model.dense.w1.iter().copied().collect::<Vec<_>>(),
    )?;
    write_block(&mut w, "dense.b1", &model.dense.b1.to_vec())?;
    write_block(&mut w, "dense.w2", &model.dense.w2.to_vec())?;
    write_block(&mut w, "dense.b2", &[model.dense.b2])?;
    Ok(())
}

pub fn write_model_file<P: AsRef<Path>>(path: P, model: &EdLstmModel) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn read_model_file<P: AsRef<Path>>(path: P) -> Result<EdLstmModel> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let head = lines
        .next()
        .ok_or_else(|| Error::Format("empty model file".into()))??;
    if head.trim() != format!("# {MODEL_FORMAT_TAG}") {
        return Err(Error::Format(format!("unrecognized model header: {head}")));
    }

    let mut arch = ModelArch::default();
    let mut init_seed = 0u64;
    let mut trained_future_len = None;
    let mut training_config = None;
    let mut blocks: Vec<(String, Vec<f64>)> = Vec::new();

    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            let (key, value) = rest
                .split_once(' ')
                .ok_or_else(|| Error::Format(format!("bad header line: {line}")))?;
            let bad = || Error::Format(format!("bad header line: {line}"));
            match key {
                "init_seed" => init_seed = value.parse().map_err(|_| bad())?,
                "hidden_units" => arch.hidden_units = value.parse().map_err(|_| bad())?,
                "dense_units" => arch.dense_units = value.parse().map_err(|_| bad())?,
                "input_features" => arch.input_features = value.parse().map_err(|_| bad())?,
                "use_biases" => arch.use_biases = value.parse().map_err(|_| bad())?,
                "trained_future_len" => {
                    trained_future_len = if value == "none" {
                        None
                    } else {
                        Some(value.parse().map_err(|_| bad())?)
                    }
                }
                "training_config" => {
                    if value != "none" {
                        let parts: Vec<&str> = value.split(' ').collect();
                        if parts.len() != 7 {
                            return Err(bad());
                        }
                        training_config = Some(TrainConfig {
                            learning_rate: parts[0].parse().map_err(|_| bad())?,
                            batch_size: parts[1].parse().map_err(|_| bad())?,
                            epochs: parts[2].parse().map_err(|_| bad())?,
                            beta1: parts[3].parse().map_err(|_| bad())?,
                            beta2: parts[4].parse().map_err(|_| bad())?,
                            epsilon: parts[5].parse().map_err(|_| bad())?,
                            rng_seed: parts[6].parse().map_err(|_| bad())?,
                        });
                    }
                }
                _ => {}
            }
            continue;
        }
        let mut parts = line.split(' ');
        let name = parts
            .next()
            .ok_or_else(|| Error::Format(format!("bad block line: {line}")))?
            .to_string();
        let count: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad block count: {line}")))?;
        let values: Vec<f64> = parts
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Format(format!("bad value in block {name}: {s}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != count {
            return Err(Error::Format(format!(
                "block {name} declares {count} values but holds {}",
                values.len()
            )));
        }
        blocks.push((name, values));
    }

    let u = arch.hidden_units;
    let take = |name: &str| -> Result<Vec<f64>> {
        blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::Format(format!("model file missing block {name}")))
    };
    let vec1 = |name: &str, len: usize| -> Result<Array1<f64>> {
        let v = take(name)?;
        if v.len() != len {
            return Err(Error::Format(format!(
                "block {name} has length {}, want {len}",
                v.len()
            )));
        }
        Ok(Array1::from_vec(v))
    };
    let mat = |name: &str, rows: usize, cols: usize| -> Result<Array2<f64>> {
        let v = take(name)?;
        Array2::from_shape_vec((rows, cols), v)
            .map_err(|e| Error::Format(format!("block {name}: {e}")))
    };
    let cell = |prefix: &str| -> Result<LstmCellParams> {
        let biases = if arch.use_biases {
            Some(CellBiases {
                b_i: vec1(&format!("{prefix}.b_i"), u)?,
                b_f: vec1(&format!("{prefix}.b_f"), u)?,
                b_o: vec1(&format!("{prefix}.b_o"), u)?,
                b_g: vec1(&format!("{prefix}.b_g"), u)?,
            })
        } else {
            None
        };
        Ok(LstmCellParams {
            u_i: vec1(&format!("{prefix}.u_i"), u)?,
            u_f: vec1(&format!("{prefix}.u_f"), u)?,
            u_o: vec1(&format!("{prefix}.u_o"), u)?,
            u_g: vec1(&format!("{prefix}.u_g"), u)?,
            w_i: mat(&format!("{prefix}.w_i"), u, u)?,
            w_f: mat(&format!("{prefix}.w_f"), u, u)?,
            w_o: mat(&format!("{prefix}.w_o"), u, u)?,
            w_g: mat(&format!("{prefix}.w_g"), u, u)?,
            biases,
            hidden_units: u,
            input_features: arch.input_features,
        })
    };

    let model = EdLstmModel {
        encoder: cell("encoder")?,
        decoder: cell("decoder")?,
        dense: DenseHead {
            w1: mat("dense.w1", u, arch.dense_units)?,
            b1: vec1("dense.b1", arch.dense_units)?,
            w2: vec1("dense.w2", arch.dense_units)?,
            b2: take("dense.b2")?
                .first()
                .copied()
                .ok_or_else(|| Error::Format("empty dense.b2 block".into()))?,
        },
        arch,
        trained_future_len,
        training_config,
        init_seed,
    };
    model.validate()?;
    Ok(model)
}

/// History CSV: `epoch,train_mse,val_mse`.
pub fn write_history_file<P: AsRef<Path>>(path: P, history: &TrainHistory) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "epoch,train_mse,val_mse")?;
    for e in &history.epochs {
        writeln!(w, "{},{:.16e},{:.16e}", e.epoch, e.train_mse, e.val_mse)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history_file<P: AsRef<Path>>(path: P) -> Result<TrainHistory> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut epochs = Vec::new();
    for (row, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if row == 0 {
            if line != "epoch,train_mse,val_mse" {
                return Err(Error::Format(format!(
                    "unrecognized history header: {line}"
                )));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Format(format!("bad history row: {line}")));
        }
        let bad = || Error::Format(format!("bad history row: {line}"));
        epochs.push(EpochStats {
            epoch: cols[0].parse().map_err(|_| bad())?,
            train_mse: cols[1].parse().map_err(|_| bad())?,
            val_mse: cols[2].parse().map_err(|_| bad())?,
            seconds: 0.0,
        });
    }
    Ok(TrainHistory {
        epochs,
        best_epoch: 0,
    })
}
