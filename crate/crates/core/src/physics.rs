//! Physical-layer model of a lightpath with one degrading in-line EDFA.
//!
//! The signal budget is evaluated in the dB domain (transmit power minus
//! fiber/WSS/tap losses plus amplifier gains), the accumulated ASE noise in
//! linear watts, and the two meet in `snr_linear`. BER assumes 4-QAM.

use crate::error::{Error, Result};
use crate::special;

/// Physical-layer constants. Defaults are the simulation values for a
/// C-band lightpath with 100 km amplifier spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    /// Transmit power P_t (dBm).
    pub transmit_power_dbm: f64,
    /// Carrier frequency f_c (Hz).
    pub carrier_frequency_hz: f64,
    /// Spontaneous-emission factor of in-line EDFAs.
    pub nsp_inline: f64,
    /// Spontaneous-emission factor of booster EDFAs.
    pub nsp_booster: f64,
    /// Fiber attenuation α (dB/km).
    pub fiber_attenuation_db_per_km: f64,
    /// Wavelength-selective-switch loss (dB).
    pub wss_loss_db: f64,
    /// Tap loss (dB).
    pub tap_loss_db: f64,
    /// In-line EDFA spacing (km).
    pub edfa_spacing_km: f64,
    /// Booster (output) EDFA gain G_out (dB).
    pub booster_gain_db: f64,
    /// Electrical bandwidth B_e (Hz).
    pub electrical_bandwidth_hz: f64,
    /// Planck's constant (J·s).
    pub planck_j_s: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            transmit_power_dbm: -17.0,
            carrier_frequency_hz: 193.1e12,
            nsp_inline: 3.0,
            nsp_booster: 2.0,
            fiber_attenuation_db_per_km: 0.2,
            wss_loss_db: 2.0,
            tap_loss_db: 1.0,
            edfa_spacing_km: 100.0,
            booster_gain_db: 8.0,
            electrical_bandwidth_hz: 7e9,
            planck_j_s: 6.62e-34,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_frequency_hz", self.carrier_frequency_hz),
            (
                "fiber_attenuation_db_per_km",
                self.fiber_attenuation_db_per_km,
            ),
            ("wss_loss_db", self.wss_loss_db),
            ("tap_loss_db", self.tap_loss_db),
            ("edfa_spacing_km", self.edfa_spacing_km),
            ("electrical_bandwidth_hz", self.electrical_bandwidth_hz),
            ("planck_j_s", self.planck_j_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.nsp_inline < 1.0 || self.nsp_booster < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "spontaneous emission factors must be >= 1 (got {}, {})",
                self.nsp_inline, self.nsp_booster
            )));
        }
        Ok(())
    }
}

/// Route shape of the lightpath: per-link distances plus amplifier placement.
#[derive(Debug, Clone, PartialEq)]
pub struct LightpathGeometry {
    /// Per-link fiber distances (km).
    pub span_lengths_km: Vec<f64>,
    /// Number of links on the route.
    pub hops: usize,
    /// Number of in-line EDFAs on the route.
    pub inline_edfa_count: usize,
    /// Fiber input/output port count at the nodes.
    pub node_degree_q: u32,
    /// 1-based index of the degrading in-line EDFA.
    pub degraded_edfa_index: usize,
}

impl LightpathGeometry {
    /// Builds a geometry from link distances, deriving hop and EDFA counts
    /// from the amplifier spacing.
    pub fn new(
        span_lengths_km: Vec<f64>,
        edfa_spacing_km: f64,
        node_degree_q: u32,
        degraded_edfa_index: usize,
    ) -> Result<Self> {
        if span_lengths_km.is_empty() {
            return Err(Error::InvalidGeometry("route has no links".into()));
        }
        if span_lengths_km.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidGeometry(
                "link distances must be positive".into(),
            ));
        }
        let total: f64 = span_lengths_km.iter().sum();
        let count = total / edfa_spacing_km;
        if (count - count.round()).abs() > 1e-9 || count.round() < 1.0 {
            return Err(Error::InvalidGeometry(format!(
                "total length {total} km is not an integer multiple of the {edfa_spacing_km} km EDFA spacing"
            )));
        }
        let inline_edfa_count = count.round() as usize;
        let hops = span_lengths_km.len();
        let geom = Self {
            span_lengths_km,
            hops,
            inline_edfa_count,
            node_degree_q,
            degraded_edfa_index,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hops != self.span_lengths_km.len() {
            return Err(Error::InvalidGeometry(format!(
                "hops = {} but route has {} links",
                self.hops,
                self.span_lengths_km.len()
            )));
        }
        if self.node_degree_q == 0 {
            return Err(Error::InvalidGeometry("node degree must be >= 1".into()));
        }
        if self.degraded_edfa_index == 0 || self.degraded_edfa_index > self.inline_edfa_count {
            return Err(Error::InvalidGeometry(format!(
                "degraded EDFA index {} out of range 1..={}",
                self.degraded_edfa_index, self.inline_edfa_count
            )));
        }
        Ok(())
    }

    /// The 2-link 400 km + 300 km reference route.
    pub fn reference_route(edfa_spacing_km: f64) -> Result<Self> {
        Self::new(vec![400.0, 300.0], edfa_spacing_km, 4, 1)
    }
}

/// Gains of every amplifier on the route at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkState {
    /// Nominal in-line gain G_in(1) (dB), shared by all non-degrading EDFAs.
    pub inline_gain_nominal_db: f64,
    /// Current gain G_in(i) of the degrading EDFA (dB).
    pub inline_gain_degraded_db: f64,
    /// Booster gains per hop, length `hops - 1` (dB).
    pub booster_gains_db: Vec<f64>,
}

impl LinkState {
    /// State with all boosters at the configured constant gain.
    pub fn uniform(
        params: &PhysicalParams,
        geom: &LightpathGeometry,
        inline_gain_nominal_db: f64,
        inline_gain_degraded_db: f64,
    ) -> Self {
        Self {
            inline_gain_nominal_db,
            inline_gain_degraded_db,
            booster_gains_db: vec![params.booster_gain_db; geom.hops.saturating_sub(1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inline_gain_degraded_db > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "degraded gain must stay positive, got {}",
                self.inline_gain_degraded_db
            )));
        }
        if self.inline_gain_degraded_db > self.inline_gain_nominal_db {
            return Err(Error::InvalidParameter(format!(
                "degraded gain {} exceeds nominal {}",
                self.inline_gain_degraded_db, self.inline_gain_nominal_db
            )));
        }
        Ok(())
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

/// Booster gain needed at a node with `q_ports` fiber ports: the splitter
/// loss 3·⌈log₂ Q⌉ plus the WSS loss, taken at equality.
pub fn booster_gain_db(q_ports: u32, wss_loss_db: f64) -> Result<f64> {
    if q_ports == 0 {
        return Err(Error::InvalidGeometry("node with zero fiber ports".into()));
    }
    if wss_loss_db < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "WSS loss must be non-negative, got {wss_loss_db}"
        )));
    }
    let ceil_log2 = if q_ports <= 1 {
        0
    } else {
        (u32::BITS - (q_ports - 1).leading_zeros()) as u64
    };
    Ok(3.0 * ceil_log2 as f64 + wss_loss_db)
}

/// Nominal in-line gain that exactly compensates one span: α·l + L_tap.
pub fn inline_gain_nominal_db(params: &PhysicalParams, span_km: f64) -> Result<f64> {
    if !(span_km > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "span length must be positive, got {span_km}"
        )));
    }
    Ok(params.fiber_attenuation_db_per_km * span_km + params.tap_loss_db)
}

/// Received signal power in dBm: transmit power, minus total fiber/WSS/tap
/// loss, plus the degrading EDFA's gain, the (M-1) nominal in-line gains,
/// and the boosters along the route. Entirely in the dB domain.
pub fn received_power_dbm(
    params: &PhysicalParams,
    geom: &LightpathGeometry,
    state: &LinkState,
) -> Result<f64> {
    state.validate()?;
    if state.booster_gains_db.len() + 1 != geom.hops {
        return Err(Error::InvalidGeometry(format!(
            "route with {} hops needs {} booster gains, got {}",
            geom.hops,
            geom.hops - 1,
            state.booster_gains_db.len()
        )));
    }
    let m = geom.inline_edfa_count as f64;
    let total_loss = m * params.fiber_attenuation_db_per_km * params.edfa_spacing_km
        + params.wss_loss_db
        + params.tap_loss_db;
    let boosters: f64 = state.booster_gains_db.iter().sum();
    Ok(params.transmit_power_dbm - total_loss
        + state.inline_gain_degraded_db
        + (m - 1.0) * state.inline_gain_nominal_db
        + boosters)
}

/// Accumulated ASE noise in watts. Gains are converted from dB to linear
/// before each (G - 1) term; γ = 2·h·f_c·B_e.
pub fn ase_noise_w(
    params: &PhysicalParams,
    geom: &LightpathGeometry,
    state: &LinkState,
) -> Result<f64> {
    state.validate()?;
    if state.booster_gains_db.len() + 1 != geom.hops {
        return Err(Error::InvalidGeometry(format!(
            "route with {} hops needs {} booster gains, got {}",
            geom.hops,
            geom.hops - 1,
            state.booster_gains_db.len()
        )));
    }
    let gamma =
        2.0 * params.planck_j_s * params.carrier_frequency_hz * params.electrical_bandwidth_hz;
    let m = geom.inline_edfa_count as f64;
    let g_nom = db_to_linear(state.inline_gain_nominal_db);
    let g_deg = db_to_linear(state.inline_gain_degraded_db);
    let inline_term = (m - 1.0) * (g_nom - 1.0) + (g_deg - 1.0);
    let booster_term: f64 = state
        .booster_gains_db
        .iter()
        .map(|&g| db_to_linear(g) - 1.0)
        .sum();
    Ok(gamma * (params.nsp_inline * inline_term + params.nsp_booster * booster_term))
}

/// Linear SNR from a dBm signal and a linear-watt noise power.
pub fn snr_linear(signal_dbm: f64, noise_w: f64) -> Result<f64> {
    if !(noise_w > 0.0) {
        return Err(Error::NumericDomain(format!(
            "noise power must be positive, got {noise_w}"
        )));
    }
    Ok(dbm_to_watts(signal_dbm) / noise_w)
}

/// 4-QAM bit error rate, ½·erfc(√(SNR/2)). Strictly decreasing in SNR,
/// range (0, 0.5]; underflows to 0 for SNR beyond ~1.4e3.
pub fn ber_4qam(snr: f64) -> Result<f64> {
    if !(snr >= 0.0) {
        return Err(Error::NumericDomain(format!(
            "SNR must be non-negative, got {snr}"
        )));
    }
    Ok(0.5 * special::erfc((snr / 2.0).sqrt()))
}

/// Natural log of the 4-QAM BER. Usable over the whole SNR range, including
/// where `ber_4qam` underflows to zero.
pub fn ln_ber_4qam(snr: f64) -> Result<f64> {
    if !(snr >= 0.0) {
        return Err(Error::NumericDomain(format!(
            "SNR must be non-negative, got {snr}"
        )));
    }
    Ok(special::ln_erfc((snr / 2.0).sqrt()) + 0.5f64.ln())
}

/// Full chain for one time instant: received power → ASE noise → SNR → BER,
/// with every non-degrading amplifier held at its nominal gain.
pub fn ber_for_degraded_gain(
    params: &PhysicalParams,
    geom: &LightpathGeometry,
    inline_gain_nominal_db: f64,
    inline_gain_degraded_db: f64,
) -> Result<f64> {
    let state = LinkState::uniform(
        params,
        geom,
        inline_gain_nominal_db,
        inline_gain_degraded_db,
    );
    let signal = received_power_dbm(params, geom, &state)?;
    let noise = ase_noise_w(params, geom, &state)?;
    ber_4qam(snr_linear(signal, noise)?)
}
