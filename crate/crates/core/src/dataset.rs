//! Windowed sequence dataset construction from a BER trace.
//!
//! The raw trace is first down-sampled to the observation period τ by
//! keeping the last sample of each τ-window, then cut into overlapping
//! sequences of `past_len + 1` observations and `future_len` targets with a
//! fixed stride. Splits are contiguous in time (train first, test last,
//! validation as the tail of the train range) and the normalizer is fitted
//! on the train range only.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::aging::BerTrace;
use crate::error::{Error, Result};

/// Windowing constants.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpec {
    /// Observation period τ (minutes).
    pub tau_minutes: f64,
    /// Number of past observations k; inputs carry k+1 values.
    pub past_len: usize,
    /// Number of future prediction steps s.
    pub future_len: usize,
    /// Start-offset stride between consecutive sequences.
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            tau_minutes: 90.0,
            past_len: 50,
            future_len: 70,
            stride: 2,
        }
    }
}

impl WindowSpec {
    /// Total sequence length, k + 1 + s.
    pub fn seq_len(&self) -> usize {
        self.past_len + 1 + self.future_len
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_minutes <= 0.0 {
            return Err(Error::InvalidParameter("tau must be positive".into()));
        }
        if self.future_len == 0 {
            return Err(Error::InvalidParameter("future_len must be >= 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidParameter("stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// A BER series down-sampled to the τ grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledSeries {
    pub values: Vec<f64>,
    /// Raw samples per τ-window.
    pub window_raw: usize,
    pub tau_minutes: f64,
    /// Seed of the source trace.
    pub source_seed: u64,
}

impl ResampledSeries {
    /// Raw-trace index that τ-sample `m` was taken from (the last raw
    /// sample of window m).
    pub fn raw_index(&self, m: usize) -> usize {
        (m + 1) * self.window_raw - 1
    }
}

/// Keeps the last raw sample of each consecutive τ-window. τ must be an
/// integer multiple of the raw sampling tick.
pub fn resample(trace: &BerTrace, tau_minutes: f64) -> Result<ResampledSeries> {
    if tau_minutes <= 0.0 {
        return Err(Error::InvalidParameter("tau must be positive".into()));
    }
    let ratio = tau_minutes / trace.sample_interval_minutes;
    let window = ratio.round();
    if (ratio - window).abs() > 1e-9 || window < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "tau = {tau_minutes} min is not an integer multiple of the {} min raw tick",
            trace.sample_interval_minutes
        )));
    }
    let window = window as usize;
    let n_windows = trace.bers.len() / window;
    if n_windows == 0 {
        return Err(Error::Dataset(format!(
            "trace with {} samples is shorter than one τ-window of {window}",
            trace.bers.len()
        )));
    }
    let values = (0..n_windows)
        .map(|m| trace.bers[(m + 1) * window - 1])
        .collect();
    Ok(ResampledSeries {
        values,
        window_raw: window,
        tau_minutes,
        source_seed: trace.source_seed,
    })
}

/// Representation the model trains on: raw BER values or their log10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetTransform {
    #[default]
    Ber,
    Log10Ber,
}

impl TargetTransform {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            TargetTransform::Ber => x,
            TargetTransform::Log10Ber => x.log10(),
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            TargetTransform::Ber => y,
            TargetTransform::Log10Ber => 10f64.powf(y),
        }
    }

    pub fn forward_slice(self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.forward(x)).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            TargetTransform::Ber => "ber",
            TargetTransform::Log10Ber => "log10-ber",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ber" => Ok(TargetTransform::Ber),
            "log10-ber" => Ok(TargetTransform::Log10Ber),
            _ => Err(Error::InvalidParameter(format!(
                "unknown target transform: {s}"
            ))),
        }
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub trace_seed: u64,
    /// SHA-256 over the little-endian bytes of the source BER series.
    pub trace_hash: String,
}

impl Provenance {
    pub fn of_series(values: &[f64], seed: u64) -> Self {
        let mut hasher = Sha256::new();
        for v in values {
            hasher.update(v.to_le_bytes());
        }
        let digest = hasher.finalize();
        let trace_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Self {
            trace_seed: seed,
            trace_hash,
        }
    }
}

/// Value-wise normalization fitted on the training range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizerKind {
    MinMax,
    ZScore,
    None,
}

impl NormalizerKind {
    pub fn name(self) -> &'static str {
        match self {
            NormalizerKind::MinMax => "min-max",
            NormalizerKind::ZScore => "z-score",
            NormalizerKind::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "min-max" => Ok(NormalizerKind::MinMax),
            "z-score" => Ok(NormalizerKind::ZScore),
            "none" => Ok(NormalizerKind::None),
            _ => Err(Error::InvalidParameter(format!(
                "unknown normalizer kind: {s}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub kind: NormalizerKind,
    offset: f64,
    scale: f64,
    /// Row range the statistics were fitted on (leakage audit trail).
    pub fit_rows: Range<usize>,
}

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            kind: NormalizerKind::None,
            offset: 0.0,
            scale: 1.0,
            fit_rows: 0..0,
        }
    }

    fn fit(kind: NormalizerKind, rows: &[Vec<f64>], fit_rows: Range<usize>) -> Result<Self> {
        let values = rows[fit_rows.clone()].iter().flatten().copied();
        match kind {
            NormalizerKind::None => Ok(Self {
                kind,
                offset: 0.0,
                scale: 1.0,
                fit_rows,
            }),
            NormalizerKind::MinMax => {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for v in values {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                let mut scale = hi - lo;
                if scale == 0.0 {
                    log::warn!("constant training range; min-max normalizer falls back to identity scaling");
                    scale = 1.0;
                }
                Ok(Self {
                    kind,
                    offset: lo,
                    scale,
                    fit_rows,
                })
            }
            NormalizerKind::ZScore => {
                let vals: Vec<f64> = values.collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let std = var.sqrt();
                if std == 0.0 {
                    return Err(Error::Normalizer(
                        "constant training range; z-score statistics are degenerate".into(),
                    ));
                }
                Ok(Self {
                    kind,
                    offset: mean,
                    scale: std,
                    fit_rows,
                })
            }
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.offset) / self.scale
    }

    pub fn invert(&self, y: f64) -> f64 {
        y * self.scale + self.offset
    }

    pub fn apply_slice(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }

    pub fn invert_slice(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.invert(y)).collect()
    }

    pub fn stats(&self) -> (f64, f64) {
        (self.offset, self.scale)
    }

    pub fn from_stats(
        kind: NormalizerKind,
        offset: f64,
        scale: f64,
        fit_rows: Range<usize>,
    ) -> Self {
        Self {
            kind,
            offset,
            scale,
            fit_rows,
        }
    }
}

/// Contiguous, ordered, non-overlapping row ranges. Validation is the tail
/// of the train range.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitSpec {
    /// Train rows excluding the validation tail.
    pub fn train_proper(&self) -> Range<usize> {
        self.train.start..self.val.start
    }
}

/// Windowed sequences plus the bookkeeping to use them honestly: the
/// normalizer, the temporal split, and the provenance of the source trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub spec: WindowSpec,
    /// Each row holds past_len+1 input values followed by future_len
    /// targets, in the `transform` representation.
    pub rows: Vec<Vec<f64>>,
    /// Observation features per time step; BER-only pipelines use 1.
    pub feature_count: usize,
    pub transform: TargetTransform,
    pub normalizer: Option<Normalizer>,
    pub split: Option<SplitSpec>,
    pub provenance: Provenance,
}

impl SequenceDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn input_of(&self, row: usize) -> &[f64] {
        &self.rows[row][..self.spec.past_len + 1]
    }

    pub fn target_of(&self, row: usize) -> &[f64] {
        &self.rows[row][self.spec.past_len + 1..]
    }

    /// Verifies that neither the normalizer statistics nor the split
    /// boundaries observed test-range rows.
    pub fn audit_no_leakage(&self) -> Result<()> {
        let split = self
            .split
            .as_ref()
            .ok_or_else(|| Error::Dataset("dataset has no split to audit".into()))?;
        if split.train.end > split.test.start {
            return Err(Error::Dataset("train range overlaps test range".into()));
        }
        if let Some(n) = &self.normalizer {
            if n.fit_rows.end > split.test.start {
                return Err(Error::Dataset(format!(
                    "normalizer was fitted on rows {:?}, which reach into the test range starting at {}",
                    n.fit_rows, split.test.start
                )));
            }
        }
        Ok(())
    }
}

/// Cuts a series into overlapping sequences of length k+1+s at offsets
/// 0, stride, 2·stride, ...
pub fn windowize(
    series: &[f64],
    spec: &WindowSpec,
    provenance: Provenance,
) -> Result<SequenceDataset> {
    spec.validate()?;
    let len = spec.seq_len();
    if series.len() < len {
        return Err(Error::Dataset(format!(
            "series of {} τ-samples is shorter than one sequence of {len}",
            series.len()
        )));
    }
    let mut rows = Vec::new();
    let mut start = 0;
    while start + len <= series.len() {
        rows.push(series[start..start + len].to_vec());
        start += spec.stride;
    }
    Ok(SequenceDataset {
        spec: spec.clone(),
        rows,
        feature_count: 1,
        transform: TargetTransform::default(),
        normalizer: None,
        split: None,
        provenance,
    })
}

/// Windowizes a raw BER series under the chosen target representation.
pub fn build_dataset(
    series_raw: &[f64],
    spec: &WindowSpec,
    transform: TargetTransform,
    provenance: Provenance,
) -> Result<SequenceDataset> {
    let transformed = transform.forward_slice(series_raw);
    let mut ds = windowize(&transformed, spec, provenance)?;
    ds.transform = transform;
    Ok(ds)
}

/// Expected sequence count for a series of length `l`.
pub fn window_count(l: usize, spec: &WindowSpec) -> usize {
    if l < spec.seq_len() {
        0
    } else {
        (l - spec.seq_len()) / spec.stride + 1
    }
}

/// Annotates the dataset with a contiguous temporal split: the first
/// ⌊train_frac·n⌋ rows train, the remainder tests, and the last
/// ⌊val_frac·train⌋ train rows are held out for validation.
pub fn split(ds: &mut SequenceDataset, train_frac: f64, val_frac_of_train: f64) -> Result<()> {
    if !(train_frac > 0.0 && train_frac < 1.0)
        || !(val_frac_of_train > 0.0 && val_frac_of_train < 1.0)
    {
        return Err(Error::InvalidParameter(format!(
            "split fractions must lie in (0,1), got {train_frac} and {val_frac_of_train}"
        )));
    }
    let n = ds.rows.len();
    let train_n = (train_frac * n as f64).floor() as usize;
    let test_n = n - train_n;
    let val_n = (val_frac_of_train * train_n as f64).floor() as usize;
    if train_n == 0 || test_n == 0 || val_n == 0 || train_n - val_n == 0 {
        return Err(Error::Dataset(format!(
            "degenerate split for n={n}: train {train_n} (val {val_n}), test {test_n}"
        )));
    }
    ds.split = Some(SplitSpec {
        train: 0..train_n,
        val: train_n - val_n..train_n,
        test: train_n..n,
    });
    Ok(())
}

/// Fits the normalizer on the train range (validation tail included; test
/// rows never observed).
pub fn fit_normalizer(ds: &mut SequenceDataset, kind: NormalizerKind) -> Result<()> {
    let split = ds
        .split
        .as_ref()
        .ok_or_else(|| Error::Dataset("split the dataset before fitting a normalizer".into()))?;
    let norm = Normalizer::fit(kind, &ds.rows, split.train.clone())?;
    ds.normalizer = Some(norm);
    ds.audit_no_leakage()
}

// ---------------------------------------------------------------------------
// Dataset file format: header then one comma-separated row per sequence,
// floats at 17 significant digits (exact f64 round-trip).
// ---------------------------------------------------------------------------

pub const DATASET_FORMAT_TAG: &str = "softfail-dataset v1";

pub fn write_dataset<W: Write>(mut w: W, ds: &SequenceDataset) -> Result<()> {
    writeln!(w, "# {DATASET_FORMAT_TAG}")?;
    writeln!(w, "# trace_seed {}", ds.provenance.trace_seed)?;
    writeln!(w, "# trace_hash {}", ds.provenance.trace_hash)?;
    writeln!(w, "# tau_minutes {:.16e}", ds.spec.tau_minutes)?;
    writeln!(w, "# past_len {}", ds.spec.past_len)?;
    writeln!(w, "# future_len {}", ds.spec.future_len)?;
    writeln!(w, "# stride {}", ds.spec.stride)?;
    writeln!(w, "# features {}", ds.feature_count)?;
    writeln!(w, "# transform {}", ds.transform.name())?;
    match &ds.normalizer {
        Some(n) => {
            let (offset, scale) = n.stats();
            writeln!(
                w,
                "# normalizer {} {:.16e} {:.16e} {} {}",
                n.kind.name(),
                offset,
                scale,
                n.fit_rows.start,
                n.fit_rows.end
            )?;
        }
        None => writeln!(w, "# normalizer unfitted")?,
    }
    match &ds.split {
        Some(s) => writeln!(
            w,
            "# split {} {} {} {} {} {}",
            s.train.start, s.train.end, s.val.start, s.val.end, s.test.start, s.test.end
        )?,
        None => writeln!(w, "# split unsplit")?,
    }
    writeln!(w, "# sequences {}", ds.rows.len())?;
    for row in &ds.rows {
        let mut line = String::with_capacity(row.len() * 24);
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:.16e}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn write_dataset_file<P: AsRef<Path>>(path: P, ds: &SequenceDataset) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_dataset(&mut w, ds)?;
    w.flush()?;
    Ok(())
}

pub fn read_dataset_file<P: AsRef<Path>>(path: P) -> Result<SequenceDataset> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let head = lines
        .next()
        .ok_or_else(|| Error::Format("empty dataset file".into()))??;
    if head.trim() != format!("# {DATASET_FORMAT_TAG}") {
        return Err(Error::Format(format!(
            "unrecognized dataset header: {head}"
        )));
    }

    let mut spec = WindowSpec::default();
    let mut feature_count = 1usize;
    let mut transform = TargetTransform::default();
    let mut provenance = Provenance {
        trace_seed: 0,
        trace_hash: String::new(),
    };
    let mut normalizer = None;
    let mut split = None;
    let mut expected_rows: Option<usize> = None;
    let mut rows = Vec::new();

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
                "trace_seed" => provenance.trace_seed = value.parse().map_err(|_| bad())?,
                "trace_hash" => provenance.trace_hash = value.to_string(),
                "tau_minutes" => spec.tau_minutes = value.parse().map_err(|_| bad())?,
                "past_len" => spec.past_len = value.parse().map_err(|_| bad())?,
                "future_len" => spec.future_len = value.parse().map_err(|_| bad())?,
                "stride" => spec.stride = value.parse().map_err(|_| bad())?,
                "features" => feature_count = value.parse().map_err(|_| bad())?,
                "transform" => transform = TargetTransform::parse(value)?,
                "normalizer" => {
                    if value != "unfitted" {
                        let parts: Vec<&str> = value.split(' ').collect();
                        if parts.len() != 5 {
                            return Err(bad());
                        }
                        let kind = NormalizerKind::parse(parts[0])?;
                        let offset: f64 = parts[1].parse().map_err(|_| bad())?;
                        let scale: f64 = parts[2].parse().map_err(|_| bad())?;
                        let fit_start: usize = parts[3].parse().map_err(|_| bad())?;
                        let fit_end: usize = parts[4].parse().map_err(|_| bad())?;
                        normalizer = Some(Normalizer::from_stats(
                            kind,
                            offset,
                            scale,
                            fit_start..fit_end,
                        ));
                    }
                }
                "split" => {
                    if value != "unsplit" {
                        let idx: Vec<usize> = value
                            .split(' ')
                            .map(|s| s.parse().map_err(|_| bad()))
                            .collect::<Result<_>>()?;
                        if idx.len() != 6 {
                            return Err(bad());
                        }
                        split = Some(SplitSpec {
                            train: idx[0]..idx[1],
                            val: idx[2]..idx[3],
                            test: idx[4]..idx[5],
                        });
                    }
                }
                "sequences" => expected_rows = Some(value.parse().map_err(|_| bad())?),
                _ => {}
            }
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Format(format!("bad value in row: {s}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != spec.seq_len() {
            return Err(Error::Format(format!(
                "row with {} values, expected {}",
                row.len(),
                spec.seq_len()
            )));
        }
        rows.push(row);
    }

    if let Some(n) = expected_rows {
        if n != rows.len() {
            return Err(Error::Format(format!(
                "header declares {n} sequences but file holds {}",
                rows.len()
            )));
        }
    }
    if feature_count != 1 {
        return Err(Error::Format(format!(
            "single-feature datasets only, file declares {feature_count} features"
        )));
    }
    Ok(SequenceDataset {
        spec,
        rows,
        feature_count,
        transform,
        normalizer,
        split,
        provenance,
    })
}
