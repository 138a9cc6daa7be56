//! Versioned JSON checkpoints tying the embedding network and the confidence
//! MLP together, with shape validation on load.

use crate::error::{Error, Result};
use crate::gfm::{GfmConfig, GfmParams};
use crate::weighting::WeightMlpParams;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub gfm_config: GfmConfig,
    pub gfm_params: GfmParams<f64>,
    pub mlp_params: WeightMlpParams<f64>,
}

impl Checkpoint {
    pub fn new(
        gfm_config: GfmConfig,
        gfm_params: GfmParams<f64>,
        mlp_params: WeightMlpParams<f64>,
    ) -> Self {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            gfm_config,
            gfm_params,
            mlp_params,
        }
    }

    /// Validates parameter shapes against the embedded configuration.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint schema version {}",
                self.schema_version
            )));
        }
        self.gfm_params.validate(&self.gfm_config)?;
        self.mlp_params.validate()?;
        if self.mlp_params.input_dim() != self.gfm_config.out_dim {
            return Err(Error::ShapeMismatch(format!(
                "mlp input {} does not match embedding dim {}",
                self.mlp_params.input_dim(),
                self.gfm_config.out_dim
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidConfig(format!("checkpoint serialization: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))?;
        ck.validate()?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_parameters() {
        let config = GfmConfig::desk();
        let gfm = GfmParams::init(&config, 3);
        let mlp = WeightMlpParams::for_feature_dim(config.out_dim, 4);
        let ck = Checkpoint::new(config, gfm, mlp);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(
            ck.gfm_params.merge.conv.weight,
            back.gfm_params.merge.conv.weight
        );
        assert_eq!(ck.mlp_params.layers[0].bias, back.mlp_params.layers[0].bias);
    }

    #[test]
    fn shape_mismatch_is_rejected_on_load() {
        let config = GfmConfig::desk();
        let gfm = GfmParams::init(&config, 5);
        // MLP input dim disagrees with the embedding output dim.
        let mlp = WeightMlpParams::for_feature_dim(config.out_dim + 1, 6);
        let ck = Checkpoint::new(config, gfm, mlp);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        // Bypass validation on save, catch it on load.
        std::fs::write(&path, serde_json::to_string(&ck).unwrap()).unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
