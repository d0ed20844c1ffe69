//! JSON run configuration: schema, validation, and flag overrides.

use crate::cantor::{CantorTree, Normalization, TreeConfig, DEFAULT_NODE_CAP};
use crate::carleson::AnalyticTestMap;
use crate::gauge::GaugeFunction;
use num_complex::Complex64;
use serde::Deserialize;

use super::CliError;

/// Top-level run configuration. Every section is optional; each command
/// checks for the sections it needs. Unknown keys anywhere are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub construction: Option<ConstructionConfig>,
    #[serde(default)]
    pub analysis: Option<AnalysisConfig>,
    #[serde(default)]
    pub means: Option<MeansConfig>,
}

/// Disk-tree construction parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionConfig {
    pub dilatation: f64,
    pub gauge: GaugeFunction,
    /// Explicit per-level branching counts…
    #[serde(default)]
    pub levels: Option<Vec<usize>>,
    /// …or an automatic schedule m_N = ceil(m_start · m_growth^(N−1)).
    #[serde(default)]
    pub auto_levels: Option<usize>,
    #[serde(default)]
    pub m_start: Option<usize>,
    #[serde(default)]
    pub m_growth: Option<f64>,
    /// "source" (default): M_N·h(s_N) = 1 with the tree gauge.
    /// "image_length": M_N·h_eta(t_N) = 1 with the `eta` gauge.
    #[serde(default)]
    pub normalization: Option<String>,
    #[serde(default)]
    pub eta: Option<GaugeFunction>,
    #[serde(default)]
    pub target_small: Option<f64>,
    #[serde(default)]
    pub enforce_shrink_rule: Option<bool>,
    #[serde(default)]
    pub node_cap: Option<u64>,
    /// Largest generation drawn into the SVG (defaults to the deepest one
    /// with at most 4096 disks).
    #[serde(default)]
    pub svg_level: Option<usize>,
}

/// Dimension / content analysis parameters.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Box-counting scales 2^(−j) for j in box_dyadic_min..=box_dyadic_max.
    #[serde(default)]
    pub box_dyadic_min: Option<u32>,
    #[serde(default)]
    pub box_dyadic_max: Option<u32>,
    /// Generation whose disk centers are measured (defaults to the deepest
    /// one within the enumeration budget).
    #[serde(default)]
    pub box_level: Option<usize>,
    #[serde(default)]
    pub t_grid: Option<TGrid>,
    /// Exponent for the content-sum decay fit (default 1).
    #[serde(default)]
    pub content_exponent: Option<f64>,
}

/// Uniform exponent grid.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl TGrid {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if self.count < 2 || !(self.min < self.max) {
            return Err(CliError::Config(format!(
                "t_grid needs min < max and count >= 2, got min = {}, max = {}, count = {}",
                self.min, self.max, self.count
            )));
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        Ok((0..self.count).map(|i| self.min + step * i as f64).collect())
    }
}

/// Integral-means parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeansConfig {
    pub map: MapSpec,
    pub p: f64,
    #[serde(default)]
    pub j_min: Option<u32>,
    #[serde(default)]
    pub j_max: Option<u32>,
    /// Extra circle radii reported in means.csv besides the dyadic ladder.
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
    /// When present, closed-form dilatation bounds are written next to the
    /// measured exponent.
    #[serde(default)]
    pub compare_dilatation: Option<f64>,
}

/// Serializable choice of analytic test map.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Identity,
    BoundarySingularity { b: f64 },
    Koebe,
    Mobius { a: [f64; 2] },
    Polynomial { coeffs: Vec<[f64; 2]> },
}

impl MapSpec {
    pub fn build(&self) -> Result<AnalyticTestMap, CliError> {
        Ok(match self {
            MapSpec::Identity => AnalyticTestMap::Identity,
            MapSpec::BoundarySingularity { b } => {
                if !(*b > 0.0) || !b.is_finite() {
                    return Err(CliError::Config(format!(
                        "boundary_singularity exponent b = {b} must be positive"
                    )));
                }
                AnalyticTestMap::BoundarySingularity { b: *b }
            }
            MapSpec::Koebe => AnalyticTestMap::Koebe,
            MapSpec::Mobius { a } => {
                let a = Complex64::new(a[0], a[1]);
                if a.norm() >= 1.0 {
                    return Err(CliError::Config(format!(
                        "mobius parameter must lie inside the unit disk, got |a| = {}",
                        a.norm()
                    )));
                }
                AnalyticTestMap::Mobius { a }
            }
            MapSpec::Polynomial { coeffs } => {
                if coeffs.is_empty() {
                    return Err(CliError::Config(
                        "polynomial needs at least one coefficient".to_string(),
                    ));
                }
                AnalyticTestMap::Polynomial {
                    coeffs: coeffs.iter().map(|c| Complex64::new(c[0], c[1])).collect(),
                }
            }
        })
    }

    pub fn describe(&self) -> String {
        match self {
            MapSpec::Identity => "identity".to_string(),
            MapSpec::BoundarySingularity { b } => format!("boundary_singularity(b={b})"),
            MapSpec::Koebe => "koebe".to_string(),
            MapSpec::Mobius { a } => format!("mobius(a={}+{}i)", a[0], a[1]),
            MapSpec::Polynomial { coeffs } => format!("polynomial(degree={})", coeffs.len() - 1),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid configuration: {e}")))
    }

    pub fn construction(&self) -> Result<&ConstructionConfig, CliError> {
        self.construction
            .as_ref()
            .ok_or_else(|| CliError::Config("missing \"construction\" section".to_string()))
    }

    pub fn means(&self) -> Result<&MeansConfig, CliError> {
        self.means
            .as_ref()
            .ok_or_else(|| CliError::Config("missing \"means\" section".to_string()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

impl ConstructionConfig {
    /// The per-level branching schedule after validation.
    pub fn level_schedule(&self) -> Result<Vec<usize>, CliError> {
        match (&self.levels, self.auto_levels) {
            (Some(levels), None) => {
                if levels.is_empty() {
                    return Err(CliError::Config("\"levels\" must not be empty".to_string()));
                }
                if self.m_start.is_some() || self.m_growth.is_some() {
                    return Err(CliError::Config(
                        "\"m_start\"/\"m_growth\" only apply with \"auto_levels\"".to_string(),
                    ));
                }
                Ok(levels.clone())
            }
            (None, Some(n)) => {
                if n == 0 {
                    return Err(CliError::Config("\"auto_levels\" must be positive".to_string()));
                }
                let m_start = self.m_start.ok_or_else(|| {
                    CliError::Config("\"auto_levels\" requires \"m_start\"".to_string())
                })?;
                let growth = self.m_growth.unwrap_or(1.0);
                if !(growth > 0.0) || !growth.is_finite() {
                    return Err(CliError::Config(format!(
                        "\"m_growth\" must be positive, got {growth}"
                    )));
                }
                Ok((0..n)
                    .map(|i| ((m_start as f64) * growth.powi(i as i32)).ceil() as usize)
                    .collect())
            }
            (Some(_), Some(_)) => Err(CliError::Config(
                "give either \"levels\" or \"auto_levels\", not both".to_string(),
            )),
            (None, None) => Err(CliError::Config(
                "construction needs \"levels\" or \"auto_levels\"".to_string(),
            )),
        }
    }

    fn normalization(&self) -> Result<Normalization, CliError> {
        match self.normalization.as_deref() {
            None | Some("source") => {
                if self.eta.is_some() {
                    return Err(CliError::Config(
                        "\"eta\" only applies with \"normalization\": \"image_length\""
                            .to_string(),
                    ));
                }
                Ok(Normalization::SourceGauge)
            }
            Some("image_length") => {
                let eta = self.eta.clone().ok_or_else(|| {
                    CliError::Config(
                        "\"normalization\": \"image_length\" requires an \"eta\" gauge"
                            .to_string(),
                    )
                })?;
                Ok(Normalization::ImageGauge(eta))
            }
            Some(other) => Err(CliError::Config(format!(
                "unknown normalization \"{other}\" (expected \"source\" or \"image_length\")"
            ))),
        }
    }

    /// Builds the tree described by this section.
    pub fn build_tree(&self) -> Result<CantorTree, CliError> {
        let schedule = self.level_schedule()?;
        let mut tree_cfg = TreeConfig::new(self.dilatation, self.gauge.clone());
        tree_cfg.normalization = self.normalization()?;
        tree_cfg.target_small = self.target_small;
        tree_cfg.enforce_shrink_rule = self.enforce_shrink_rule.unwrap_or(false);
        tree_cfg.node_cap = self.node_cap.unwrap_or(DEFAULT_NODE_CAP);
        let mut tree = CantorTree::new(tree_cfg)?;
        for m in schedule {
            tree.add_level(m)?;
        }
        Ok(tree)
    }
}

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub levels: Option<Vec<usize>>,
    pub dilatation: Option<f64>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn parse_levels(text: &str) -> Result<Vec<usize>, CliError> {
        let levels: Result<Vec<usize>, _> =
            text.split(',').map(|s| s.trim().parse::<usize>()).collect();
        let levels = levels.map_err(|e| {
            CliError::Config(format!("cannot parse --levels \"{text}\": {e}"))
        })?;
        if levels.is_empty() {
            return Err(CliError::Config("--levels must name at least one level".to_string()));
        }
        Ok(levels)
    }

    pub fn apply(&self, config: &mut RunConfig) -> Result<(), CliError> {
        if let Some(seed) = self.seed {
            config.seed = Some(seed);
        }
        if self.levels.is_some() || self.dilatation.is_some() {
            let section = config.construction.as_mut().ok_or_else(|| {
                CliError::Config(
                    "--levels/--dilatation override a \"construction\" section, but the configuration has none"
                        .to_string(),
                )
            })?;
            if let Some(levels) = &self.levels {
                section.levels = Some(levels.clone());
                section.auto_levels = None;
                section.m_start = None;
                section.m_growth = None;
            }
            if let Some(k) = self.dilatation {
                section.dilatation = k;
            }
        }
        Ok(())
    }
}
