//! Repair-trigger policies and their comparison.
//!
//! Hard-failure detection is a plain threshold on the BER trace. The
//! fixed-margin policies fire once the cumulative gain reduction of the
//! degrading EDFA passes a preset number of dB; the prediction policy walks
//! the τ-sampled BER stream and fires as soon as the multi-step forecast
//! contains a threshold violation. All policies report lead time relative
//! to the hard failure and the QoT margin held at the trigger instant.

use std::fmt::Write as _;

use crate::aging::{BerTrace, GainTrace};
use crate::dataset::{self, WindowSpec};
use crate::error::{Error, Result};
use crate::forecaster::SequenceForecaster;

/// The hard-failure boundary: the pre-FEC BER threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardFailureSpec {
    pub ber_threshold: f64,
}

impl Default for HardFailureSpec {
    fn default() -> Self {
        Self {
            ber_threshold: 1e-3,
        }
    }
}

const MINUTES_PER_DAY: f64 = 24.0 * 60.0;

/// Outcome of one policy on one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerEvent {
    pub policy_name: String,
    /// Raw-trace sample of the trigger; `None` when the policy never fired.
    pub trigger_sample_index: Option<usize>,
    pub trigger_time_days: Option<f64>,
    pub ber_at_trigger: Option<f64>,
    pub gain_reduction_at_trigger_db: Option<f64>,
    /// Hard-failure time minus trigger time; negative when the trigger came
    /// after the hard failure.
    pub lead_time_days: Option<f64>,
    pub qot_margin_percent: Option<f64>,
    /// The repair action came at or after the hard failure (or never).
    pub late: bool,
}

impl TriggerEvent {
    fn no_trigger(policy_name: String, hard_failure: Option<usize>) -> Self {
        Self {
            policy_name,
            trigger_sample_index: None,
            trigger_time_days: None,
            ber_at_trigger: None,
            gain_reduction_at_trigger_db: None,
            lead_time_days: None,
            qot_margin_percent: None,
            late: hard_failure.is_some(),
        }
    }
}

/// First sample whose BER exceeds the threshold; `None` when the trace
/// never crosses within the horizon.
pub fn hard_failure_time(trace: &BerTrace, spec: &HardFailureSpec) -> Option<usize> {
    trace.bers.iter().position(|&b| b > spec.ber_threshold)
}

/// QoT margin at a trigger, as the log-domain distance between the trigger
/// BER and the threshold, relative to the threshold's own decade count:
/// `100 · (log10(thr) − log10(ber)) / |log10(thr)|`. Returns the flag for a
/// late trigger (BER already above the threshold, margin clamped to zero).
pub fn qot_margin_percent(ber_at_trigger: f64, spec: &HardFailureSpec) -> Result<(f64, bool)> {
    if !(ber_at_trigger > 0.0) {
        return Err(Error::NumericDomain(format!(
            "BER at trigger must be positive, got {ber_at_trigger}"
        )));
    }
    if ber_at_trigger > spec.ber_threshold {
        return Ok((0.0, true));
    }
    let margin = 100.0 * (spec.ber_threshold.log10() - ber_at_trigger.log10())
        / spec.ber_threshold.log10().abs();
    Ok((margin, false))
}

fn lead_days(
    trigger: usize,
    hard_failure: Option<usize>,
    interval_minutes: f64,
) -> (Option<f64>, bool) {
    match hard_failure {
        Some(hard) => {
            let lead = (hard as f64 - trigger as f64) * interval_minutes / MINUTES_PER_DAY;
            (Some(lead), lead < 0.0)
        }
        None => (None, false),
    }
}

fn event_at(
    policy_name: String,
    trigger: usize,
    ber: &BerTrace,
    gain: &GainTrace,
    spec: &HardFailureSpec,
) -> Result<TriggerEvent> {
    let hard = hard_failure_time(ber, spec);
    let (lead, late_by_lead) = lead_days(trigger, hard, ber.sample_interval_minutes);
    let ber_now = ber.bers[trigger];
    let (margin, late_by_margin) = qot_margin_percent(ber_now, spec)?;
    Ok(TriggerEvent {
        policy_name,
        trigger_sample_index: Some(trigger),
        trigger_time_days: Some(trigger as f64 * ber.sample_interval_minutes / MINUTES_PER_DAY),
        ber_at_trigger: Some(ber_now),
        gain_reduction_at_trigger_db: Some(gain.reduction_db(trigger)),
        lead_time_days: lead,
        qot_margin_percent: Some(margin),
        late: late_by_lead || late_by_margin,
    })
}

/// Fixed-margin policy: fires at the first sample whose cumulative gain
/// reduction reaches the threshold.
pub fn fixed_margin_trigger(
    ber: &BerTrace,
    gain: &GainTrace,
    gain_reduction_db: f64,
    spec: &HardFailureSpec,
) -> Result<TriggerEvent> {
    if !(gain_reduction_db > 0.0 && gain_reduction_db < gain.initial_gain_db) {
        return Err(Error::InvalidParameter(format!(
            "gain-reduction threshold must lie in (0, {}), got {gain_reduction_db}",
            gain.initial_gain_db
        )));
    }
    if ber.bers.len() != gain.gains.len() {
        return Err(Error::ShapeMismatch(format!(
            "BER trace has {} samples, gain trace {}",
            ber.bers.len(),
            gain.gains.len()
        )));
    }
    let name = format!("fixed {gain_reduction_db} dB");
    let trigger = (0..gain.gains.len()).find(|&n| gain.reduction_db(n) >= gain_reduction_db);
    match trigger {
        Some(n) => event_at(name, n, ber, gain, spec),
        None => Ok(TriggerEvent::no_trigger(name, hard_failure_time(ber, spec))),
    }
}

/// Prediction policy: consumes the BER stream at τ spacing and fires at the
/// first step whose s-step forecast contains a threshold violation.
pub fn prediction_trigger(
    forecaster: &dyn SequenceForecaster,
    ber: &BerTrace,
    gain: &GainTrace,
    spec: &HardFailureSpec,
    window: &WindowSpec,
) -> Result<TriggerEvent> {
    if let Some(limit) = forecaster.horizon_limit() {
        if limit < window.future_len {
            return Err(Error::InvalidParameter(format!(
                "forecaster horizon {limit} is shorter than the requested {} steps",
                window.future_len
            )));
        }
    }
    let series = dataset::resample(ber, window.tau_minutes)?;
    let name = "prediction".to_string();
    let start = forecaster.min_history().saturating_sub(1);
    for t in start..series.values.len() {
        let forecast = forecaster.forecast(&series.values, t, window.future_len)?;
        if forecast.iter().any(|&b| b > spec.ber_threshold) {
            let raw = series.raw_index(t);
            return event_at(name, raw, ber, gain, spec);
        }
    }
    Ok(TriggerEvent::no_trigger(name, hard_failure_time(ber, spec)))
}

/// Comparison of every policy on one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerReport {
    pub ber_threshold: f64,
    pub hard_failure_sample: Option<usize>,
    pub hard_failure_days: Option<f64>,
    pub events: Vec<TriggerEvent>,
}

/// Runs the fixed policies (in the given order) and, when a forecaster is
/// supplied, the prediction policy, against the same trace and threshold.
pub fn compare(
    ber: &BerTrace,
    gain: &GainTrace,
    spec: &HardFailureSpec,
    fixed_reductions_db: &[f64],
    forecaster: Option<&dyn SequenceForecaster>,
    window: &WindowSpec,
) -> Result<TriggerReport> {
    let hard = hard_failure_time(ber, spec);
    let mut events = Vec::new();
    for &threshold in fixed_reductions_db {
        events.push(fixed_margin_trigger(ber, gain, threshold, spec)?);
    }
    if let Some(f) = forecaster {
        events.push(prediction_trigger(f, ber, gain, spec, window)?);
    }
    Ok(TriggerReport {
        ber_threshold: spec.ber_threshold,
        hard_failure_sample: hard,
        hard_failure_days: hard.map(|n| n as f64 * ber.sample_interval_minutes / MINUTES_PER_DAY),
        events,
    })
}

impl TriggerReport {
    fn action_text(e: &TriggerEvent) -> String {
        match e.lead_time_days {
            Some(lead) if lead >= 0.0 => format!("{lead:.2} days ahead"),
            Some(_) => "hard-failure occurred".to_string(),
            None if e.trigger_sample_index.is_some() => "triggered (no hard failure)".to_string(),
            None => {
                if e.late {
                    "hard-failure occurred".to_string()
                } else {
                    "no trigger".to_string()
                }
            }
        }
    }

    fn margin_text(e: &TriggerEvent) -> String {
        match e.qot_margin_percent {
            Some(m) if !e.late => format!("{m:.2}%"),
            Some(_) => "hard-failure occurred".to_string(),
            None => {
                if e.late {
                    "hard-failure occurred".to_string()
                } else {
                    "-".to_string()
                }
            }
        }
    }

    /// CSV rows: policy, gain reduction, lead days, margin percent.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("policy,gain_reduction_db,trigger_sample,lead_days,qot_margin_percent,late\n");
        for e in &self.events {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                e.policy_name,
                e.gain_reduction_at_trigger_db
                    .map_or(String::from("-"), |v| format!("{v:.4}")),
                e.trigger_sample_index
                    .map_or(String::from("-"), |v| v.to_string()),
                e.lead_time_days
                    .map_or(String::from("-"), |v| format!("{v:.4}")),
                e.qot_margin_percent
                    .map_or(String::from("-"), |v| format!("{v:.4}")),
                e.late,
            );
        }
        out
    }

    /// Aligned text table with the comparison columns.
    pub fn to_table(&self) -> String {
        let mut rows = vec![[
            "Policy".to_string(),
            "Gain Reduction".to_string(),
            "Repair Action".to_string(),
            "QoT Margin".to_string(),
        ]];
        for e in &self.events {
            rows.push([
                e.policy_name.clone(),
                e.gain_reduction_at_trigger_db
                    .map_or(String::from("-"), |v| format!("{v:.2} dB")),
                Self::action_text(e),
                Self::margin_text(e),
            ]);
        }
        let widths: Vec<usize> = (0..4)
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        match self.hard_failure_days {
            Some(d) => {
                let _ = writeln!(
                    out,
                    "hard failure (BER > {:.1e}) at day {d:.2}",
                    self.ber_threshold
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "no hard failure (BER > {:.1e}) in horizon",
                    self.ber_threshold
                );
            }
        }
        for (ri, row) in rows.iter().enumerate() {
            let mut line = String::new();
            for (c, cell) in row.iter().enumerate() {
                let _ = write!(line, "{cell:<width$}  ", width = widths[c]);
            }
            out.push_str(line.trim_end());
            out.push('\n');
            if ri == 0 {
                let total: usize = widths.iter().sum::<usize>() + 2 * 3;
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out
    }
}
