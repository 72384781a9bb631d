//! Run configuration: a TOML document mirroring every tunable of the
//! pipeline. Unknown keys are rejected, and each command writes the fully
//! resolved configuration next to its outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use softfail_core::aging::{CalibrationTarget, WeibullProcessParams};
use softfail_core::dataset::{NormalizerKind, TargetTransform, WindowSpec};
use softfail_core::forecaster::{ModelArch, TrainConfig};
use softfail_core::physics::{LightpathGeometry, PhysicalParams};
use softfail_core::policy::HardFailureSpec;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; the trace uses it directly, model init uses seed+1 and
    /// batch shuffling seed+2.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub physics: PhysicsSection,
    pub geometry: GeometrySection,
    pub aging: AgingSection,
    pub calibration: CalibrationSection,
    pub window: WindowSection,
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub policy: PolicySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output_dir: PathBuf::from("runs/default"),
            physics: PhysicsSection::default(),
            geometry: GeometrySection::default(),
            aging: AgingSection::default(),
            calibration: CalibrationSection::default(),
            window: WindowSection::default(),
            dataset: DatasetSection::default(),
            train: TrainSection::default(),
            policy: PolicySection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub transmit_power_dbm: f64,
    pub carrier_frequency_hz: f64,
    pub nsp_inline: f64,
    pub nsp_booster: f64,
    pub fiber_attenuation_db_per_km: f64,
    pub wss_loss_db: f64,
    pub tap_loss_db: f64,
    pub edfa_spacing_km: f64,
    pub booster_gain_db: f64,
    /// Derive the booster gain from the node rule 3·ceil(log2 Q) + L_WSS
    /// instead of the constant above.
    pub booster_gain_from_rule: bool,
    pub electrical_bandwidth_hz: f64,
    pub planck_j_s: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        let p = PhysicalParams::default();
        Self {
            transmit_power_dbm: p.transmit_power_dbm,
            carrier_frequency_hz: p.carrier_frequency_hz,
            nsp_inline: p.nsp_inline,
            nsp_booster: p.nsp_booster,
            fiber_attenuation_db_per_km: p.fiber_attenuation_db_per_km,
            wss_loss_db: p.wss_loss_db,
            tap_loss_db: p.tap_loss_db,
            edfa_spacing_km: p.edfa_spacing_km,
            booster_gain_db: p.booster_gain_db,
            booster_gain_from_rule: false,
            electrical_bandwidth_hz: p.electrical_bandwidth_hz,
            planck_j_s: p.planck_j_s,
        }
    }
}

impl PhysicsSection {
    pub fn to_params(&self, node_degree_q: u32) -> Result<PhysicalParams, CliError> {
        let booster_gain_db = if self.booster_gain_from_rule {
            softfail_core::physics::booster_gain_db(node_degree_q, self.wss_loss_db)
                .map_err(|e| CliError::Config(e.to_string()))?
        } else {
            self.booster_gain_db
        };
        Ok(PhysicalParams {
            transmit_power_dbm: self.transmit_power_dbm,
            carrier_frequency_hz: self.carrier_frequency_hz,
            nsp_inline: self.nsp_inline,
            nsp_booster: self.nsp_booster,
            fiber_attenuation_db_per_km: self.fiber_attenuation_db_per_km,
            wss_loss_db: self.wss_loss_db,
            tap_loss_db: self.tap_loss_db,
            edfa_spacing_km: self.edfa_spacing_km,
            booster_gain_db,
            electrical_bandwidth_hz: self.electrical_bandwidth_hz,
            planck_j_s: self.planck_j_s,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub span_lengths_km: Vec<f64>,
    pub node_degree_q: u32,
    pub degraded_edfa_index: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            span_lengths_km: vec![400.0, 300.0],
            node_degree_q: 4,
            degraded_edfa_index: 1,
        }
    }
}

impl GeometrySection {
    pub fn to_geometry(&self, physics: &PhysicalParams) -> Result<LightpathGeometry, CliError> {
        LightpathGeometry::new(
            self.span_lengths_km.clone(),
            physics.edfa_spacing_km,
            self.node_degree_q,
            self.degraded_edfa_index,
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgingSection {
    pub scale_lambda: f64,
    pub shape_beta: f64,
    pub degradation_step_db: f64,
    pub units_per_event: f64,
    pub initial_gain_db: f64,
    pub horizon_samples: usize,
    pub sample_interval_minutes: f64,
}

impl Default for AgingSection {
    fn default() -> Self {
        let p = WeibullProcessParams::default();
        Self {
            scale_lambda: p.scale_lambda,
            shape_beta: p.shape_beta,
            degradation_step_db: p.degradation_step_db,
            units_per_event: p.units_per_event,
            initial_gain_db: p.initial_gain_db,
            horizon_samples: p.horizon_samples,
            sample_interval_minutes: p.sample_interval_minutes,
        }
    }
}

impl AgingSection {
    pub fn to_params(&self) -> WeibullProcessParams {
        WeibullProcessParams {
            scale_lambda: self.scale_lambda,
            shape_beta: self.shape_beta,
            degradation_step_db: self.degradation_step_db,
            units_per_event: self.units_per_event,
            initial_gain_db: self.initial_gain_db,
            horizon_samples: self.horizon_samples,
            sample_interval_minutes: self.sample_interval_minutes,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub enabled: bool,
    pub hard_ber: f64,
    pub crossing_fraction: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let t = CalibrationTarget::default();
        Self {
            enabled: true,
            hard_ber: t.hard_ber,
            crossing_fraction: t.crossing_fraction,
        }
    }
}

impl CalibrationSection {
    pub fn to_target(&self) -> CalibrationTarget {
        CalibrationTarget {
            hard_ber: self.hard_ber,
            crossing_fraction: self.crossing_fraction,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSection {
    pub tau_minutes: f64,
    pub past_len: usize,
    pub future_len: usize,
    pub stride: usize,
}

impl Default for WindowSection {
    fn default() -> Self {
        let w = WindowSpec::default();
        Self {
            tau_minutes: w.tau_minutes,
            past_len: w.past_len,
            future_len: w.future_len,
            stride: w.stride,
        }
    }
}

impl WindowSection {
    pub fn to_spec(&self) -> WindowSpec {
        WindowSpec {
            tau_minutes: self.tau_minutes,
            past_len: self.past_len,
            future_len: self.future_len,
            stride: self.stride,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub train_frac: f64,
    pub val_frac_of_train: f64,
    /// "min-max" | "z-score" | "none"
    pub normalizer: String,
    /// "ber" | "log10-ber"
    pub target: String,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            train_frac: 0.9,
            val_frac_of_train: 0.2,
            normalizer: "min-max".into(),
            target: "ber".into(),
        }
    }
}

impl DatasetSection {
    pub fn normalizer_kind(&self) -> Result<NormalizerKind, CliError> {
        NormalizerKind::parse(&self.normalizer).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn target_transform(&self) -> Result<TargetTransform, CliError> {
        TargetTransform::parse(&self.target).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden_units: usize,
    pub dense_units: usize,
    pub use_biases: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let a = ModelArch::default();
        Self {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            hidden_units: a.hidden_units,
            dense_units: a.dense_units,
            use_biases: a.use_biases,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
        }
    }
}

impl TrainSection {
    pub fn to_arch(&self) -> ModelArch {
        ModelArch {
            hidden_units: self.hidden_units,
            dense_units: self.dense_units,
            input_features: 1,
            use_biases: self.use_biases,
        }
    }

    pub fn to_train_config(&self, shuffle_seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            rng_seed: shuffle_seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub hard_ber_threshold: f64,
    pub fixed_gain_reductions_db: Vec<f64>,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            hard_ber_threshold: 1e-3,
            fixed_gain_reductions_db: vec![5.0, 7.0, 10.0],
        }
    }
}

impl PolicySection {
    pub fn to_spec(&self) -> HardFailureSpec {
        HardFailureSpec {
            ber_threshold: self.hard_ber_threshold,
        }
    }
}

pub const PAPER_PRESET: &str = include_str!("../presets/paper.toml");
pub const DESK_PRESET: &str = include_str!("../presets/desk.toml");

impl RunConfig {
    pub fn from_preset(name: &str) -> Result<Self, CliError> {
        let text = match name {
            "paper" => PAPER_PRESET,
            "desk" => DESK_PRESET,
            _ => {
                return Err(CliError::Config(format!(
                    "unknown preset '{name}' (expected 'paper' or 'desk')"
                )))
            }
        };
        Self::from_toml(text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Physical-layer constants with the booster-gain rule applied when
    /// configured.
    pub fn physics_params(&self) -> Result<PhysicalParams, CliError> {
        self.physics.to_params(self.geometry.node_degree_q)
    }

    /// Seed for model weight initialization.
    pub fn model_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    /// Seed for batch shuffling.
    pub fn shuffle_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Validates the cross-section constraints once, up front.
    pub fn validate(&self) -> Result<(), CliError> {
        let physics = self.physics_params()?;
        physics
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.geometry.to_geometry(&physics)?;
        self.aging
            .to_params()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.window
            .to_spec()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.dataset.normalizer_kind()?;
        self.dataset.target_transform()?;
        if !(self.policy.hard_ber_threshold > 0.0 && self.policy.hard_ber_threshold < 0.5) {
            return Err(CliError::Config(format!(
                "hard BER threshold must lie in (0, 0.5), got {}",
                self.policy.hard_ber_threshold
            )));
        }
        Ok(())
    }
}
