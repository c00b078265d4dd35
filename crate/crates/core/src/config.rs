//! Engine configuration.
//!
//! Loaded from a TOML file whose sections mirror the pipeline stages:
//!
//! ```toml
//! [range_image]
//! width = 7200          # buffer columns, default 4 × firings per rotation
//! frame = "world"       # or "sensor"
//!
//! [ground]
//! slope_deg = 10.0
//! z_match_tol = 0.3
//! z_ground_tol = 0.2
//! cell_size = 1.0
//! weight_cap = 100
//!
//! [ego]
//! box = { min = [-2.5, -1.1, -1.8], max = [2.5, 1.1, 0.2] }
//!
//! [cluster]
//! d_T = 0.7
//! mode = "exact"        # or "heuristic_a"
//! inner_width = 2
//! checkerboard = false
//! vertical_prune = false
//!
//! [ccl]
//! every = 1
//! forced_margin = 64
//! min_cluster_size = 1
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground::EgoBounds;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub range_image: RangeImageConfig,
    pub ground: GroundConfig,
    pub ego: EgoConfig,
    pub cluster: ClusterConfig,
    pub ccl: CclConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Sensor-relative positions rotated into the world-fixed odometry frame.
    #[default]
    World,
    /// Raw sensor-frame positions; per-firing rotations are ignored.
    Sensor,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangeImageConfig {
    /// Number of buffered columns. `None` means four rotations.
    pub width: Option<usize>,
    pub frame: Frame,
}

impl RangeImageConfig {
    pub fn width_for(&self, n_firings: u32) -> usize {
        self.width.unwrap_or(4 * n_firings as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundConfig {
    /// When false every valid point outside the ego box is an obstacle.
    pub enabled: bool,
    pub slope_deg: f64,
    pub z_match_tol: f64,
    pub z_ground_tol: f64,
    pub cell_size: f64,
    pub weight_cap: u32,
    /// Side length of the rolling terrain window in meters.
    pub grid_extent: f64,
    /// Longest run of missing rows a ground chain may bridge.
    pub max_gap_rows: usize,
}

impl Default for GroundConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            slope_deg: 10.0,
            z_match_tol: 0.3,
            z_ground_tol: 0.2,
            cell_size: 1.0,
            weight_cap: 100,
            grid_extent: 200.0,
            max_gap_rows: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgoConfig {
    #[serde(rename = "box")]
    pub bounds: EgoBounds,
}

impl Default for EgoConfig {
    fn default() -> Self {
        Self {
            bounds: EgoBounds {
                min: [-2.5, -1.1, -1.8],
                max: [2.5, 1.1, 0.2],
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationMode {
    /// Scan the whole field of view for every obstacle point.
    #[default]
    Exact,
    /// Always scan the inner columns; stop in the outer columns once a neighbor is found.
    HeuristicA,
}

impl std::str::FromStr for AssociationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(AssociationMode::Exact),
            "heuristic_a" | "heuristic-a" | "a" => Ok(AssociationMode::HeuristicA),
            other => Err(Error::Config(format!("unknown cluster mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    #[serde(rename = "d_T")]
    pub d_t: f64,
    pub mode: AssociationMode,
    pub inner_width: u32,
    pub checkerboard: bool,
    pub vertical_prune: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            d_t: 0.7,
            mode: AssociationMode::Exact,
            inner_width: 2,
            checkerboard: false,
            vertical_prune: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CclConfig {
    /// Run connected-component labeling every `every` clustered columns.
    pub every: u32,
    /// Columns of headroom kept before the buffer would overflow.
    pub forced_margin: u32,
    pub min_cluster_size: usize,
}

impl Default for CclConfig {
    fn default() -> Self {
        Self {
            every: 1,
            forced_margin: 64,
            min_cluster_size: 1,
        }
    }
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let config: Config = toml::from_str(s)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.cluster;
        if !(c.d_t.is_finite() && c.d_t >= 0.0) {
            return Err(Error::Config(format!("cluster.d_T must be >= 0, got {}", c.d_t)));
        }
        let g = &self.ground;
        if !(g.slope_deg > 0.0 && g.slope_deg < 90.0) {
            return Err(Error::Config("ground.slope_deg must be in (0, 90)".into()));
        }
        if g.z_match_tol < 0.0 || g.z_ground_tol < 0.0 {
            return Err(Error::Config("ground tolerances must be non-negative".into()));
        }
        if g.cell_size <= 0.0 || g.grid_extent < g.cell_size {
            return Err(Error::Config("ground grid must hold at least one cell".into()));
        }
        if g.weight_cap == 0 {
            return Err(Error::Config("ground.weight_cap must be positive".into()));
        }
        let b = &self.ego.bounds;
        if (0..3).any(|i| b.min[i] >= b.max[i]) {
            return Err(Error::Config("ego.box min must be below max on every axis".into()));
        }
        if self.ccl.every == 0 {
            return Err(Error::Config("ccl.every must be at least 1".into()));
        }
        if self.range_image.width == Some(0) {
            return Err(Error::Config("range_image.width must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = Config::default();
        let text = toml::to_string(&config).unwrap();
        assert_eq!(Config::from_toml_str(&text).unwrap(), config);
    }

    #[test]
    fn reads_dotted_keys() {
        let config = Config::from_toml_str(
            r#"
            [cluster]
            d_T = 0.5
            mode = "heuristic_a"
            checkerboard = true
            [ground]
            slope_deg = 12.0
            [ego]
            box = { min = [-1.0, -1.0, -2.0], max = [1.0, 1.0, 0.5] }
            "#,
        )
        .unwrap();
        assert_eq!(config.cluster.d_t, 0.5);
        assert_eq!(config.cluster.mode, AssociationMode::HeuristicA);
        assert!(config.cluster.checkerboard);
        assert_eq!(config.ground.slope_deg, 12.0);
        assert_eq!(config.ego.bounds.min_z(), -2.0);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Config::from_toml_str("[cluster]\nradius = 1.0").is_err());
        assert!(Config::from_toml_str("[cluster]\nd_T = -1.0").is_err());
        assert!(Config::from_toml_str("[ccl]\nevery = 0").is_err());
        let err = Config::from_toml_str("[ego]\nbox = { min = [1.0, 0.0, 0.0], max = [0.0, 1.0, 1.0] }")
            .unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn width_defaults_to_four_rotations() {
        assert_eq!(RangeImageConfig::default().width_for(1800), 7200);
    }
}
