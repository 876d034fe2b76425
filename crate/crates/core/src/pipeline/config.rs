//! Pipeline parameters and their flat `key = value` file format.
//!
//! ```text
//! # thresholds
//! eps1 = 50
//! radii = 10, 20, 40
//! confidence_mode = any
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{ColorChannels, HistogramBins, RADII};
use crate::geodesics::GeodesicBackend;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    BadValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceMode {
    /// Any one clause suffices.
    #[default]
    Any,
    /// Every clause must hold.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiameterMetric {
    /// Mean straight-line distance to the centroid.
    #[default]
    Euclidean,
    /// Mean geodesic distance to the member closest to the centroid.
    Geodesic,
}

macro_rules! keyword_enum {
    ($ty:ty, $($name:literal => $variant:expr),+) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(format!("unknown value `{other}`")),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(ConfidenceMode, "any" => ConfidenceMode::Any, "all" => ConfidenceMode::All);
keyword_enum!(
    DiameterMetric,
    "euclidean" => DiameterMetric::Euclidean,
    "geodesic" => DiameterMetric::Geodesic
);

/// Thresholds in effect at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub eps3: f64,
    pub eps4: f64,
    pub eps5: f64,
}

/// All distances are in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Geodesic radius of the search region around the coarse match.
    pub eps1: f64,
    /// Landmark-feature similarity that also admits a vertex to the region.
    pub eps2: f64,
    /// Texture score above which a match is confident. Values above 1 can
    /// never be met.
    pub eps3: f64,
    /// Coarse-to-refined distance below which a match is confident.
    pub eps4: f64,
    /// Uniqueness diameter below which a match is confident.
    pub eps5: f64,
    /// Texture score that puts a region member into the uniqueness set.
    pub delta: f64,
    pub radii: [f64; RADII],
    pub descriptor_weights: [f64; RADII],
    /// Weights of the geometric and the texture score in the combined match.
    pub combine_weights: [f64; 2],
    pub max_iterations: usize,
    /// Per-iteration multipliers of eps3, eps4 and eps5.
    pub relax_eps3: f64,
    pub relax_eps4: f64,
    pub relax_eps5: f64,
    pub confidence_mode: ConfidenceMode,
    pub d_floor: f64,
    pub diameter_metric: DiameterMetric,
    pub radial_bins: usize,
    pub intensity_bins: usize,
    pub descriptor_channels: ColorChannels,
    pub geodesic_backend: GeodesicBackend,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let bins = HistogramBins::default();
        Self {
            eps1: 50.0,
            eps2: 0.95,
            eps3: 0.90,
            eps4: 10.0,
            eps5: 20.0,
            delta: 0.85,
            radii: [10.0, 20.0, 40.0],
            descriptor_weights: [1.0 / 3.0; RADII],
            combine_weights: [0.5, 0.5],
            max_iterations: 10,
            relax_eps3: 0.95,
            relax_eps4: 1.15,
            relax_eps5: 1.15,
            confidence_mode: ConfidenceMode::Any,
            d_floor: crate::descriptors::DEFAULT_D_FLOOR_MM,
            diameter_metric: DiameterMetric::Euclidean,
            radial_bins: bins.radial,
            intensity_bins: bins.intensity,
            descriptor_channels: ColorChannels::Luminance,
            geodesic_backend: GeodesicBackend::Dijkstra,
        }
    }
}

const KEYS: &[&str] = &[
    "eps1",
    "eps2",
    "eps3",
    "eps4",
    "eps5",
    "delta",
    "radii",
    "descriptor_weights",
    "combine_weights",
    "max_iterations",
    "relax_eps3",
    "relax_eps4",
    "relax_eps5",
    "confidence_mode",
    "d_floor",
    "diameter_metric",
    "radial_bins",
    "intensity_bins",
    "descriptor_channels",
    "geodesic_backend",
];

fn parse_list<const N: usize>(value: &str) -> Result<[f64; N], String> {
    let items: Vec<f64> = value
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    items
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_scalar<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| e.to_string())
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        text.parse()
    }

    /// Parses `key = value` lines on top of the defaults and validates.
    pub fn from_kv(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            };
            if seen.contains(&known) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(known);
            config
                .set(known, value)
                .map_err(|message| ConfigError::BadValue {
                    line,
                    key: key.to_string(),
                    message,
                })?;
        }
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "eps1" => self.eps1 = parse_scalar(v)?,
            "eps2" => self.eps2 = parse_scalar(v)?,
            "eps3" => self.eps3 = parse_scalar(v)?,
            "eps4" => self.eps4 = parse_scalar(v)?,
            "eps5" => self.eps5 = parse_scalar(v)?,
            "delta" => self.delta = parse_scalar(v)?,
            "radii" => self.radii = parse_list(v)?,
            "descriptor_weights" => self.descriptor_weights = parse_list(v)?,
            "combine_weights" => self.combine_weights = parse_list(v)?,
            "max_iterations" => self.max_iterations = parse_scalar(v)?,
            "relax_eps3" => self.relax_eps3 = parse_scalar(v)?,
            "relax_eps4" => self.relax_eps4 = parse_scalar(v)?,
            "relax_eps5" => self.relax_eps5 = parse_scalar(v)?,
            "confidence_mode" => self.confidence_mode = parse_scalar(v)?,
            "d_floor" => self.d_floor = parse_scalar(v)?,
            "diameter_metric" => self.diameter_metric = parse_scalar(v)?,
            "radial_bins" => self.radial_bins = parse_scalar(v)?,
            "intensity_bins" => self.intensity_bins = parse_scalar(v)?,
            "descriptor_channels" => self.descriptor_channels = parse_scalar(v)?,
            "geodesic_backend" => self.geodesic_backend = parse_scalar(v)?,
            _ => unreachable!("key list and setter out of sync"),
        }
        Ok(())
    }

    /// The config in the same format [`PipelineConfig::from_kv`] reads.
    /// Round-trips exactly.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("eps1", self.eps1.to_string());
        put("eps2", self.eps2.to_string());
        put("eps3", self.eps3.to_string());
        put("eps4", self.eps4.to_string());
        put("eps5", self.eps5.to_string());
        put("delta", self.delta.to_string());
        put("radii", join(&self.radii));
        put("descriptor_weights", join(&self.descriptor_weights));
        put("combine_weights", join(&self.combine_weights));
        put("max_iterations", self.max_iterations.to_string());
        put("relax_eps3", self.relax_eps3.to_string());
        put("relax_eps4", self.relax_eps4.to_string());
        put("relax_eps5", self.relax_eps5.to_string());
        put("confidence_mode", self.confidence_mode.to_string());
        put("d_floor", self.d_floor.to_string());
        put("diameter_metric", self.diameter_metric.to_string());
        put("radial_bins", self.radial_bins.to_string());
        put("intensity_bins", self.intensity_bins.to_string());
        put("descriptor_channels", self.descriptor_channels.to_string());
        put("geodesic_backend", self.geodesic_backend.to_string());
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let finite = |x: f64| x.is_finite();
        if !(finite(self.eps1) && self.eps1 > 0.0) {
            return bad(format!("eps1 must be positive, got {}", self.eps1));
        }
        if !(self.eps2 > 0.0 && self.eps2 <= 1.0) {
            return bad(format!("eps2 must be in (0, 1], got {}", self.eps2));
        }
        // The confidence thresholds may be set past their reachable range to
        // switch a clause off: eps3 > 1, eps4 = 0, eps5 = 0.
        for (name, x) in [
            ("eps3", self.eps3),
            ("eps4", self.eps4),
            ("eps5", self.eps5),
        ] {
            if !(finite(x) && x >= 0.0) {
                return bad(format!("{name} must be finite and nonnegative, got {x}"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must be in (0, 1), got {}", self.delta));
        }
        if self.radii.iter().any(|&r| !(finite(r) && r > 0.0)) {
            return bad(format!("radii must be positive, got {:?}", self.radii));
        }
        check_weights("descriptor_weights", &self.descriptor_weights)?;
        check_weights("combine_weights", &self.combine_weights)?;
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1".into());
        }
        for (name, x) in [
            ("relax_eps3", self.relax_eps3),
            ("relax_eps4", self.relax_eps4),
            ("relax_eps5", self.relax_eps5),
        ] {
            if !(finite(x) && x > 0.0) {
                return bad(format!("{name} must be positive, got {x}"));
            }
        }
        if !(finite(self.d_floor) && self.d_floor > 0.0) {
            return bad(format!("d_floor must be positive, got {}", self.d_floor));
        }
        if self.radial_bins == 0 || self.intensity_bins == 0 {
            return bad("histogram bin counts must be positive".into());
        }
        Ok(())
    }

    /// Thresholds at iteration `k` (1-based): eps3, eps4 and eps5 scaled by
    /// their multiplier to the power `k - 1`.
    pub fn relax(&self, k: usize) -> Thresholds {
        let e = k.saturating_sub(1) as i32;
        Thresholds {
            eps3: self.eps3 * self.relax_eps3.powi(e),
            eps4: self.eps4 * self.relax_eps4.powi(e),
            eps5: self.eps5 * self.relax_eps5.powi(e),
        }
    }

    pub fn histogram_bins(&self) -> HistogramBins {
        HistogramBins {
            radial: self.radial_bins,
            intensity: self.intensity_bins,
        }
    }
}

fn check_weights(name: &str, w: &[f64]) -> Result<(), ConfigError> {
    if w.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
        return Err(ConfigError::Invalid(format!(
            "{name} must be nonnegative, got {w:?}"
        )));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(ConfigError::Invalid(format!(
            "{name} must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

impl FromStr for PipelineConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Self::from_kv(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn defaults_are_valid() {
        PipelineConfig::default().validate().unwrap();
        assert_eq!(
            PipelineConfig::from_kv("").unwrap(),
            PipelineConfig::default()
        );
    }

    #[test]
    fn relaxation_arithmetic() {
        let c = PipelineConfig::default();
        assert_eq!(
            c.relax(1),
            Thresholds {
                eps3: 0.9,
                eps4: 10.0,
                eps5: 20.0
            }
        );
        assert_relative_eq!(c.relax(2).eps4, 11.5, epsilon = 1e-12);
        assert_relative_eq!(c.relax(3).eps3, 0.81225, epsilon = 1e-12);
    }

    #[test]
    fn parses_overrides_and_comments() {
        let c = PipelineConfig::from_kv(
            "# comment\neps1 = 30  # trailing\nradii = 5, 10,20\nconfidence_mode = all\n\
             geodesic_backend = fast-marching\ncombine_weights = 0.25, 0.75\n",
        )
        .unwrap();
        assert_eq!(c.eps1, 30.0);
        assert_eq!(c.radii, [5.0, 10.0, 20.0]);
        assert_eq!(c.confidence_mode, ConfidenceMode::All);
        assert_eq!(c.geodesic_backend, GeodesicBackend::FastMarching);
        assert_eq!(c.combine_weights, [0.25, 0.75]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            PipelineConfig::from_kv("eps9 = 1"),
            Err(ConfigError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(
            PipelineConfig::from_kv("\neps1 50"),
            Err(ConfigError::Syntax { line: 2 })
        ));
        assert!(matches!(
            PipelineConfig::from_kv("eps1 = 1\neps1 = 2"),
            Err(ConfigError::DuplicateKey { line: 2, .. })
        ));
        assert!(matches!(
            PipelineConfig::from_kv("radii = 1, 2"),
            Err(ConfigError::BadValue { .. })
        ));
        for bad in [
            "combine_weights = 0.6, 0.6",
            "descriptor_weights = -1, 1, 1",
            "eps1 = 0",
            "eps2 = 1.5",
            "max_iterations = 0",
            "delta = 1",
            "d_floor = 0",
        ] {
            assert!(
                matches!(PipelineConfig::from_kv(bad), Err(ConfigError::Invalid(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn sentinels_accepted() {
        let c = PipelineConfig::from_kv("eps3 = 1.5\neps4 = 0\neps5 = 0").unwrap();
        assert_eq!(c.eps3, 1.5);
    }

    #[test]
    fn kv_round_trip() {
        let c = PipelineConfig {
            eps2: 0.1 + 0.2,
            diameter_metric: DiameterMetric::Geodesic,
            descriptor_channels: ColorChannels::Rgb,
            ..PipelineConfig::default()
        };
        assert_eq!(PipelineConfig::from_kv(&c.to_kv()).unwrap(), c);
    }
}
