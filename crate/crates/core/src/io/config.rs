//! Pipeline configuration: a `key = value` file with `[section]` headers
//! (TOML). Every field has a default, so an empty file is valid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::read_text;
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::localization::{KalmanConfig, RefinerConfig};
use crate::noise::{NoiseModel, DEFAULT_TRIALS};
use crate::road::DEFAULT_ROAD_CELL;
use crate::semantic_map::{MapBuildParams, DEFAULT_DELTA, DEFAULT_EPS_D, DEFAULT_SPLAT_RANGE};
use crate::synth::SceneSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Observations and refinement use the camera scaled down by this factor.
    pub loss_downsample: usize,
}

impl Default for CameraConfig {
    fn default() -> Self {
        let k = CameraIntrinsics::default_render();
        CameraConfig {
            width: k.width,
            height: k.height,
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            loss_downsample: 2,
        }
    }
}

impl CameraConfig {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }

    pub fn loss_intrinsics(&self) -> Result<CameraIntrinsics> {
        if self.loss_downsample == 0 {
            return Err(Error::invalid("camera loss_downsample must be at least 1"));
        }
        Ok(self.intrinsics()?.scaled(self.loss_downsample))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// Minimum fraction of rounds that must observe a point.
    pub delta: f64,
    /// Cross-round match radius in meters.
    pub eps_d: f64,
    pub splat_min: f64,
    pub splat_max: f64,
    /// Road raster cell edge in meters.
    pub road_cell: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            delta: DEFAULT_DELTA,
            eps_d: DEFAULT_EPS_D,
            splat_min: DEFAULT_SPLAT_RANGE.0,
            splat_max: DEFAULT_SPLAT_RANGE.1,
            road_cell: DEFAULT_ROAD_CELL,
        }
    }
}

impl MapConfig {
    pub fn build_params(&self) -> MapBuildParams {
        MapBuildParams {
            delta: self.delta,
            eps_d: self.eps_d,
            splat_min: self.splat_min,
            splat_max: self.splat_max,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// First sky row; unset means the top row of rendered geometry.
    pub horizon_row: Option<usize>,
    /// Registry name of the sky class.
    pub sky_class: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialsConfig {
    pub n: usize,
}

impl Default for TrialsConfig {
    fn default() -> Self {
        TrialsConfig { n: DEFAULT_TRIALS }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub camera: CameraConfig,
    pub map: MapConfig,
    pub refiner: RefinerConfig,
    pub kalman: KalmanConfig,
    pub noise: NoiseModel,
    pub scene: SceneSpec,
    pub fusion: FusionConfig,
    pub trials: TrialsConfig,
}

impl Config {
    pub fn parse(text: &str, what: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::Parse {
                what: what.to_string(),
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        Config::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.loss_intrinsics()?;
        self.refiner.validate()?;
        self.kalman.validate()?;
        self.noise.validate()?;
        self.scene.validate()?;
        if !(self.map.road_cell.is_finite() && self.map.road_cell > 0.0) {
            return Err(Error::invalid("map road_cell must be positive"));
        }
        if self.trials.n < 2 {
            return Err(Error::invalid("trials n must be at least 2"));
        }
        Ok(())
    }
}
