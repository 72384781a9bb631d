//! EDFA gain-degradation traces driven by a Weibull point process.
//!
//! Device aging is modeled as a power-law (Weibull) point process whose
//! cumulative event count by time t has expectation (t/λ)^β, so the event
//! rate accelerates over time for β > 1. Each event knocks a fixed number
//! of degradation units off the amplifier gain; the per-event unit count is
//! a calibration scalar found by `calibrate_trace` so that the resulting
//! BER trace first crosses the hard-failure threshold at a configured
//! fraction of the horizon.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::physics::{self, LightpathGeometry, PhysicalParams};

/// Parameters of the aging process and of the raw trace it produces.
#[derive(Debug, Clone, PartialEq)]
pub struct WeibullProcessParams {
    /// Scale λ of the Weibull process, in the same time units as
    /// `sample_interval_minutes` (minutes).
    pub scale_lambda: f64,
    /// Shape β; β > 1 gives an event rate that increases with age.
    pub shape_beta: f64,
    /// Gain decrement per degradation unit δ (dB).
    pub degradation_step_db: f64,
    /// Degradation units accrued per event; the calibration knob.
    pub units_per_event: f64,
    /// Gain of the degrading EDFA before any event (dB).
    pub initial_gain_db: f64,
    /// Number of raw samples in a full trace.
    pub horizon_samples: usize,
    /// Raw sampling tick (minutes).
    pub sample_interval_minutes: f64,
}

impl Default for WeibullProcessParams {
    fn default() -> Self {
        Self {
            scale_lambda: 595.75,
            shape_beta: 1.05,
            degradation_step_db: 1e-6,
            units_per_event: 1.0,
            initial_gain_db: 22.0,
            horizon_samples: 1_000_000,
            sample_interval_minutes: 1.0,
        }
    }
}

impl WeibullProcessParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("scale_lambda", self.scale_lambda),
            ("shape_beta", self.shape_beta),
            ("degradation_step_db", self.degradation_step_db),
            ("units_per_event", self.units_per_event),
            ("initial_gain_db", self.initial_gain_db),
            ("sample_interval_minutes", self.sample_interval_minutes),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Wall-clock span covered by the trace (minutes); the last sample sits
    /// at (horizon_samples - 1) ticks.
    pub fn horizon_minutes(&self) -> f64 {
        self.horizon_samples.saturating_sub(1) as f64 * self.sample_interval_minutes
    }
}

/// Time-indexed gain of the degrading EDFA.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTrace {
    /// Gain per raw sample (dB), non-increasing.
    pub gains: Vec<f64>,
    pub sample_interval_minutes: f64,
    pub rng_seed: u64,
    pub initial_gain_db: f64,
    /// Set when the trace was cut short because the gain reached zero.
    pub truncated: bool,
}

impl GainTrace {
    /// Cumulative gain reduction at a sample (dB).
    pub fn reduction_db(&self, index: usize) -> f64 {
        self.initial_gain_db - self.gains[index]
    }
}

/// Time-indexed BER derived from a gain trace.
#[derive(Debug, Clone, PartialEq)]
pub struct BerTrace {
    pub bers: Vec<f64>,
    pub sample_interval_minutes: f64,
    /// Seed of the gain trace this was derived from.
    pub source_seed: u64,
}

/// Arrival times of a Weibull power-law point process with cumulative
/// intensity (t/λ)^β, generated by inverting the cumulative intensity over
/// standard-exponential partial sums. Times are ascending and bounded by
/// `t_max`. Deterministic for a given seed.
pub fn sample_event_times_until(
    scale_lambda: f64,
    shape_beta: f64,
    t_max: f64,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut cum = 0.0f64;
    loop {
        let u: f64 = rng.random();
        cum += -(-u).ln_1p(); // -ln(1 - u), an Exp(1) increment
        let t = scale_lambda * cum.powf(1.0 / shape_beta);
        if t > t_max {
            return events;
        }
        events.push(t);
    }
}

/// Event times over the full trace horizon of `params`.
pub fn sample_event_times(params: &WeibullProcessParams, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    Ok(sample_event_times_until(
        params.scale_lambda,
        params.shape_beta,
        params.horizon_minutes(),
        seed,
    ))
}

/// Builds the per-sample gain trace from sorted event times. Gain at sample
/// n is `initial - δ · units_per_event · (events up to n)`. The trace is
/// truncated (with the flag set) before the gain would reach zero.
pub fn gain_trace(params: &WeibullProcessParams, events: &[f64], seed: u64) -> Result<GainTrace> {
    params.validate()?;
    if events.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter(
            "event times must be ascending".into(),
        ));
    }
    let per_event_db = params.degradation_step_db * params.units_per_event;
    let mut gains = Vec::with_capacity(params.horizon_samples);
    let mut truncated = false;
    let mut count = 0usize;
    for n in 0..params.horizon_samples {
        let t = n as f64 * params.sample_interval_minutes;
        while count < events.len() && events[count] <= t {
            count += 1;
        }
        let gain = params.initial_gain_db - per_event_db * count as f64;
        if gain <= 0.0 {
            truncated = true;
            break;
        }
        gains.push(gain);
    }
    Ok(GainTrace {
        gains,
        sample_interval_minutes: params.sample_interval_minutes,
        rng_seed: seed,
        initial_gain_db: params.initial_gain_db,
        truncated,
    })
}

/// Maps a gain trace to BER, holding every other amplifier at the trace's
/// initial (nominal) gain. Consecutive samples between events share a gain
/// value, so the physics chain is evaluated once per distinct gain.
pub fn ber_trace(
    gain: &GainTrace,
    params: &PhysicalParams,
    geom: &LightpathGeometry,
) -> Result<BerTrace> {
    let mut bers = Vec::with_capacity(gain.gains.len());
    let mut last: Option<(f64, f64)> = None;
    for &g in &gain.gains {
        let ber = match last {
            Some((lg, lb)) if lg == g => lb,
            _ => {
                let b = physics::ber_for_degraded_gain(params, geom, gain.initial_gain_db, g)?;
                last = Some((g, b));
                b
            }
        };
        bers.push(ber);
    }
    Ok(BerTrace {
        bers,
        sample_interval_minutes: gain.sample_interval_minutes,
        source_seed: gain.rng_seed,
    })
}

/// A full simulated artifact: parameters, gain trace, and the BER trace
/// derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTrace {
    pub weibull: WeibullProcessParams,
    pub gain: GainTrace,
    pub ber: BerTrace,
}

/// End-to-end trace generation for one seed.
pub fn simulate_trace(
    weibull: &WeibullProcessParams,
    physics_params: &PhysicalParams,
    geom: &LightpathGeometry,
    seed: u64,
) -> Result<SimulatedTrace> {
    let events = sample_event_times(weibull, seed)?;
    let gain = gain_trace(weibull, &events, seed)?;
    let ber = ber_trace(&gain, physics_params, geom)?;
    Ok(SimulatedTrace {
        weibull: weibull.clone(),
        gain,
        ber,
    })
}

/// Calibration goal: first BER-threshold crossing at a fraction of the
/// horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTarget {
    pub hard_ber: f64,
    pub crossing_fraction: f64,
}

impl Default for CalibrationTarget {
    fn default() -> Self {
        Self {
            hard_ber: 1e-3,
            crossing_fraction: 0.95,
        }
    }
}

/// Relative tolerance on the achieved crossing index.
pub const CALIBRATION_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Crossing {
    /// First sample whose BER exceeds the threshold.
    At(usize),
    /// The gain floor was reached (at this sample) before any crossing;
    /// degradation is too fast for a usable trace.
    Floor(usize),
    /// No crossing within the horizon.
    Never,
}

impl Crossing {
    fn sample(self) -> Option<usize> {
        match self {
            Crossing::At(n) | Crossing::Floor(n) => Some(n),
            Crossing::Never => None,
        }
    }
}

/// Sample index at which an event becomes visible: the first sample whose
/// time is >= the event time (matching the `<=` rule in `gain_trace`).
fn sample_of_event_time(t: f64, interval: f64, horizon: usize) -> usize {
    let n = (t / interval).ceil() as usize;
    n.min(horizon.saturating_sub(1))
}

/// Finds the first threshold crossing for a trial unit count without
/// materializing a trace: BER is monotone in the event count, so the
/// crossing event is located by binary search over counts and then mapped
/// back to the sample grid.
fn crossing_for_units(
    params: &WeibullProcessParams,
    physics_params: &PhysicalParams,
    geom: &LightpathGeometry,
    events: &[f64],
    units_per_event: f64,
    hard_ber: f64,
) -> Result<Crossing> {
    let per_event_db = params.degradation_step_db * units_per_event;
    let g0 = params.initial_gain_db;
    // exceeded(k): after k events the trace has either crossed the
    // threshold or fallen through the gain floor
    let exceeded = |k: usize| -> Result<bool> {
        let g = g0 - per_event_db * k as f64;
        if g <= 0.0 {
            return Ok(true);
        }
        Ok(physics::ber_for_degraded_gain(physics_params, geom, g0, g)? > hard_ber)
    };
    if events.is_empty() || !exceeded(events.len())? {
        return Ok(Crossing::Never);
    }
    let (mut lo, mut hi) = (0usize, events.len()); // exceeded(lo)=false, exceeded(hi)=true
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if exceeded(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let n = sample_of_event_time(
        events[hi - 1],
        params.sample_interval_minutes,
        params.horizon_samples,
    );
    if g0 - per_event_db * hi as f64 <= 0.0 {
        Ok(Crossing::Floor(n))
    } else {
        Ok(Crossing::At(n))
    }
}

/// Scales `units_per_event` (bisection over a fixed, seeded event sequence)
/// until the BER trace first crosses `target.hard_ber` at sample index
/// `target.crossing_fraction × horizon_samples`, within
/// [CALIBRATION_TOLERANCE]. Deterministic for a given seed.
pub fn calibrate_trace(
    params: &WeibullProcessParams,
    physics_params: &PhysicalParams,
    geom: &LightpathGeometry,
    target: CalibrationTarget,
    seed: u64,
) -> Result<WeibullProcessParams> {
    params.validate()?;
    if !(target.hard_ber > 0.0 && target.hard_ber < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "hard_ber must lie in (0, 0.5), got {}",
            target.hard_ber
        )));
    }
    if !(target.crossing_fraction > 0.5 && target.crossing_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "crossing_fraction must lie in (0.5, 1], got {}",
            target.crossing_fraction
        )));
    }

    let nominal = physics::ber_for_degraded_gain(
        physics_params,
        geom,
        params.initial_gain_db,
        params.initial_gain_db,
    )?;
    if nominal >= target.hard_ber {
        return Err(Error::Calibration(format!(
            "BER already at the target before any degradation (nominal {nominal:.3e}, target {:.3e})",
            target.hard_ber
        )));
    }

    let events = sample_event_times(params, seed)?;
    if events.is_empty() {
        return Err(Error::Calibration(
            "no aging events within the horizon".into(),
        ));
    }

    let goal = target.crossing_fraction * params.horizon_samples as f64;
    let tol = CALIBRATION_TOLERANCE * goal;
    let eval = |u: f64| -> Result<Crossing> {
        crossing_for_units(params, physics_params, geom, &events, u, target.hard_ber)
    };
    let hit = |cross: Crossing| -> bool {
        matches!(cross, Crossing::At(n) if (n as f64 - goal).abs() <= tol)
    };

    // grow the upper bracket until the trace crosses at or before the goal
    let mut u_hi = params.units_per_event;
    let mut cross_hi = eval(u_hi)?;
    let mut grow = 0;
    while cross_hi.sample().is_none_or(|n| n as f64 > goal) {
        if hit(cross_hi) {
            return Ok(WeibullProcessParams {
                units_per_event: u_hi,
                ..params.clone()
            });
        }
        u_hi *= 4.0;
        grow += 1;
        if grow > 600 || !u_hi.is_finite() {
            return Err(Error::Calibration(format!(
                "unable to reach a crossing at fraction {} of the horizon; last crossing {:?} with units_per_event {u_hi:.3e}",
                target.crossing_fraction,
                cross_hi.sample()
            )));
        }
        cross_hi = eval(u_hi)?;
    }
    if hit(cross_hi) {
        return Ok(WeibullProcessParams {
            units_per_event: u_hi,
            ..params.clone()
        });
    }

    // shrink the lower bracket until the crossing falls after the goal
    let mut u_lo = u_hi;
    loop {
        u_lo /= 4.0;
        let cross_lo = eval(u_lo)?;
        if hit(cross_lo) {
            return Ok(WeibullProcessParams {
                units_per_event: u_lo,
                ..params.clone()
            });
        }
        if cross_lo.sample().is_none_or(|n| n as f64 > goal) {
            break;
        }
        if u_lo < 1e-280 {
            return Err(Error::Calibration(
                "crossing stays earlier than the target even with vanishing degradation".into(),
            ));
        }
    }

    // bisect in log space; the crossing index is a non-increasing step
    // function of the unit count
    for _ in 0..200 {
        let u_mid = ((u_lo.ln() + u_hi.ln()) * 0.5).exp();
        let cross = eval(u_mid)?;
        if hit(cross) {
            return Ok(WeibullProcessParams {
                units_per_event: u_mid,
                ..params.clone()
            });
        }
        match cross.sample() {
            Some(n) if (n as f64) <= goal => u_hi = u_mid,
            _ => u_lo = u_mid,
        }
        if u_hi / u_lo - 1.0 < 1e-14 {
            break;
        }
    }

    let achieved = eval(u_hi)?;
    Err(Error::Calibration(format!(
        "bisection exhausted: target crossing {goal:.0} ± {tol:.0}, achieved {:?} with units_per_event {u_hi:.6e}; \
         the event sequence may be too sparse near the target",
        achieved.sample()
    )))
}

// ---------------------------------------------------------------------------
// Trace file format: `#`-prefixed `key value` header lines followed by
// `index,gain_db,ber` rows. Floats carry 17 significant digits, which
// round-trips f64 exactly.
// ---------------------------------------------------------------------------

pub const TRACE_FORMAT_TAG: &str = "softfail-trace v1";

pub fn write_trace<W: Write>(mut w: W, trace: &SimulatedTrace) -> Result<()> {
    let p = &trace.weibull;
    writeln!(w, "# {TRACE_FORMAT_TAG}")?;
    writeln!(w, "# rng_seed {}", trace.gain.rng_seed)?;
    writeln!(w, "# scale_lambda {:.16e}", p.scale_lambda)?;
    writeln!(w, "# shape_beta {:.16e}", p.shape_beta)?;
    writeln!(w, "# degradation_step_db {:.16e}", p.degradation_step_db)?;
    writeln!(w, "# units_per_event {:.16e}", p.units_per_event)?;
    writeln!(w, "# initial_gain_db {:.16e}", p.initial_gain_db)?;
    writeln!(w, "# horizon_samples {}", p.horizon_samples)?;
    writeln!(
        w,
        "# sample_interval_minutes {:.16e}",
        p.sample_interval_minutes
    )?;
    writeln!(w, "# truncated {}", trace.gain.truncated)?;
    writeln!(w, "index,gain_db,ber")?;
    for (i, (&g, &b)) in trace.gain.gains.iter().zip(&trace.ber.bers).enumerate() {
        writeln!(w, "{i},{g:.16e},{b:.16e}")?;
    }
    Ok(())
}

pub fn write_trace_file<P: AsRef<Path>>(path: P, trace: &SimulatedTrace) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_trace(&mut w, trace)?;
    w.flush()?;
    Ok(())
}

pub fn read_trace_file<P: AsRef<Path>>(path: P) -> Result<SimulatedTrace> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let head = lines
        .next()
        .ok_or_else(|| Error::Format("empty trace file".into()))??;
    if head.trim() != format!("# {TRACE_FORMAT_TAG}") {
        return Err(Error::Format(format!("unrecognized trace header: {head}")));
    }

    let mut params = WeibullProcessParams::default();
    let mut seed = 0u64;
    let mut truncated = false;
    let mut gains = Vec::new();
    let mut bers = Vec::new();
    let mut in_header = true;

    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if in_header {
            if let Some(rest) = line.strip_prefix("# ") {
                let (key, value) = rest
                    .split_once(' ')
                    .ok_or_else(|| Error::Format(format!("bad header line: {line}")))?;
                let parse_f = || -> Result<f64> {
                    value
                        .parse()
                        .map_err(|_| Error::Format(format!("bad float in header: {line}")))
                };
                match key {
                    "rng_seed" => {
                        seed = value
                            .parse()
                            .map_err(|_| Error::Format(format!("bad seed: {line}")))?
                    }
                    "scale_lambda" => params.scale_lambda = parse_f()?,
                    "shape_beta" => params.shape_beta = parse_f()?,
                    "degradation_step_db" => params.degradation_step_db = parse_f()?,
                    "units_per_event" => params.units_per_event = parse_f()?,
                    "initial_gain_db" => params.initial_gain_db = parse_f()?,
                    "horizon_samples" => {
                        params.horizon_samples = value
                            .parse()
                            .map_err(|_| Error::Format(format!("bad horizon: {line}")))?
                    }
                    "sample_interval_minutes" => params.sample_interval_minutes = parse_f()?,
                    "truncated" => {
                        truncated = value
                            .parse()
                            .map_err(|_| Error::Format(format!("bad truncated flag: {line}")))?
                    }
                    _ => {} // tolerate unknown header keys
                }
                continue;
            }
            if line == "index,gain_db,ber" {
                in_header = false;
                continue;
            }
            return Err(Error::Format(format!(
                "unexpected line before column header: {line}"
            )));
        }
        let mut parts = line.split(',');
        let idx: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad row: {line}")))?;
        if idx != gains.len() {
            return Err(Error::Format(format!(
                "row index {idx} out of order (expected {})",
                gains.len()
            )));
        }
        let g: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad gain in row: {line}")))?;
        let b: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad ber in row: {line}")))?;
        gains.push(g);
        bers.push(b);
    }

    if gains.is_empty() {
        return Err(Error::Format("trace file has no samples".into()));
    }
    let gain = GainTrace {
        gains,
        sample_interval_minutes: params.sample_interval_minutes,
        rng_seed: seed,
        initial_gain_db: params.initial_gain_db,
        truncated,
    };
    let ber = BerTrace {
        bers,
        sample_interval_minutes: params.sample_interval_minutes,
        source_seed: seed,
    };
    Ok(SimulatedTrace {
        weibull: params,
        gain,
        ber,
    })
}
