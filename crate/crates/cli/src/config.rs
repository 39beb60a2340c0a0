//! Run configuration: one JSON document with per-module sections. Unknown
//! keys are rejected so augmentation typos surface immediately.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pho_core::channel::CodebookConfig;
use pho_core::dataset::{FeatureSource, VelocityMode};
use pho_core::fed::{SplitConfig, StoppingConfig};
use pho_core::pho::{SphoDenominator, ThroughputRates};
use pho_core::radar::RadarConfig;
use pho_core::scene::{ScenarioConfig, SbsId};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub features_from: FeatureSource,
    pub velocity_mode: VelocityMode,
    pub height_noise_std: f64,
    pub detect_threshold_db: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            features_from: FeatureSource::Oracle,
            velocity_mode: VelocityMode::True,
            height_noise_std: 0.0,
            detect_threshold_db: 15.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub mask_mae_nonblocked: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-3,
            local_epochs: 10,
            batch_size: 100,
            lambda: 1.0,
            mask_mae_nonblocked: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlConfig {
    pub split: SplitConfig,
    pub stopping: StoppingConfig,
    pub server_pool_per_client: usize,
    pub tune_epochs: usize,
}

impl Default for FlConfig {
    fn default() -> Self {
        FlConfig {
            split: SplitConfig::default(),
            stopping: StoppingConfig::default(),
            server_pool_per_client: 1000,
            tune_epochs: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhoSection {
    /// Per-SBS percent shift; clients missing here fall back to `p_shift`.
    pub p_shift_per_sbs: BTreeMap<String, f64>,
    pub p_shift: f64,
    pub spho_denominator: SphoDenominator,
    pub rates: ThroughputRates,
    /// Obstruction dwell for time-domain traces (s).
    pub blockage_dwell_s: f64,
    /// Raster step of throughput traces (s).
    pub trace_step_s: f64,
}

impl Default for PhoSection {
    fn default() -> Self {
        let mut p_shift_per_sbs = BTreeMap::new();
        for sbs in SbsId::ALL {
            let p = match sbs {
                SbsId::SBS4 | SbsId::SBS5 => 0.08,
                _ => 0.10,
            };
            p_shift_per_sbs.insert(sbs.name().to_string(), p);
        }
        PhoSection {
            p_shift_per_sbs,
            p_shift: 0.10,
            spho_denominator: SphoDenominator::Blocked,
            rates: ThroughputRates::default(),
            blockage_dwell_s: 0.5,
            trace_step_s: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub scenarios: Vec<ScenarioConfig>,
    pub radar: RadarConfig,
    pub codebook: CodebookConfig,
    pub features: FeatureConfig,
    pub training: TrainingConfig,
    pub fl: FlConfig,
    pub pho: PhoSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let seed = 1234;
        RunConfig {
            seed,
            scenarios: SbsId::ALL
                .iter()
                .map(|s| ScenarioConfig::table_row(*s, seed))
                .collect(),
            radar: RadarConfig::default(),
            codebook: CodebookConfig::default(),
            features: FeatureConfig::default(),
            training: TrainingConfig::default(),
            fl: FlConfig::default(),
            pho: PhoSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>, seed_override: Option<u64>) -> Result<Self> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        // the root seed drives every scenario stream
        for s in cfg.scenarios.iter_mut() {
            s.rng_seed = cfg.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            bail!("config field `scenarios`: at least one scenario is required");
        }
        for s in &self.scenarios {
            s.validate()
                .with_context(|| format!("config field `scenarios` ({})", s.sbs_id.name()))?;
        }
        self.radar.validate().context("config field `radar`")?;
        self.codebook.validate().context("config field `codebook`")?;
        self.pho.rates.validate().context("config field `pho.rates`")?;
        if self.training.batch_size == 0 {
            bail!("config field `training.batch_size`: must be positive");
        }
        if !(self.pho.p_shift >= 0.0 && self.pho.p_shift < 1.0) {
            bail!("config field `pho.p_shift`: must lie in [0, 1)");
        }
        for (k, v) in &self.pho.p_shift_per_sbs {
            if !(*v >= 0.0 && *v < 1.0) {
                bail!("config field `pho.p_shift_per_sbs.{k}`: must lie in [0, 1)");
            }
        }
        Ok(())
    }

    /// Percent shift for one client.
    pub fn shift_for(&self, id: &str) -> f64 {
        self.pho.p_shift_per_sbs.get(id).copied().unwrap_or(self.pho.p_shift)
    }

    /// Hash of the canonical JSON form; embedded in every artifact.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        let mut out = String::with_capacity(16);
        for b in digest.iter().take(8) {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}
