//! Self-similar trees of disjoint disks and their stretch-map bookkeeping.
//!
//! A tree is built level by level. Level N is described by a branching count
//! m_N, a packing radius R_N, and an inner ratio σ_N: inside every disk of
//! generation N−1 one places m_N disjoint disks of relative radius R_N (the
//! packing), and each of those carries a radial stretch with ratio σ_N and
//! dilatation K. Writing
//!
//! * s_N = σ₁^K R₁ ⋯ σ_N^K R_N (source-side similarity radius),
//! * t_N = σ₁ R₁ ⋯ σ_N R_N (image-side similarity radius),
//! * c_N = m_N R_N² ∈ (1/2, 1) (packing density),
//! * M_N = m₁ ⋯ m_N,
//!
//! the inner ratio of each level is solved so that a covering-sum
//! normalization holds exactly: M_N·h(s_N) = 1 for the tree's gauge h
//! (source normalization), or M_N·h_η(t_N) = 1 for a supplied image-side
//! gauge (the corollary variant). On the image side the effective correction
//! factor is ε′(t_N) = ε(s_N)^((K+1)/2K) · (c₁⋯c_N)^((1−K)/2K).
//!
//! Levels are stored as parameters plus one generation of packed centers, so
//! covering sums, normalization reports, and ε′ are closed-form at any depth;
//! the `node_cap` budget only gates materialization (disk families, composed
//! maps), never the parameter recursion.

use crate::disk::DiskFamily;
use crate::gauge::{EpsFamily, GaugeError, GaugeFunction};
use crate::qc_maps::{ComposedQcMap, MapError, MultiStretch, RadialStretch};
use crate::solver::{self, SolveError};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Lattice offsets tried by the packer, in tie-break order: point-centered,
/// bond-centered, triangle-centered.
const PACK_OFFSETS: [(f64, f64); 3] = [(0.0, 0.0), (0.5, 0.0), (0.5, 0.28867513459481287)];

/// Default materialization budget.
pub const DEFAULT_NODE_CAP: u64 = 10_000_000;

/// Retry budget when a level's branching count must be raised to satisfy
/// target-σ or shrink-rule constraints.
const MAX_M_RAISES: usize = 60;

/// Largest branching count an automatic raise may reach (a single packing of
/// this size already costs ~10⁷ candidate lattice points).
const MAX_RAISED_M: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum CantorError {
    #[error("dilatation K = {k} must satisfy K >= 1")]
    InvalidDilatation { k: f64 },
    #[error("branching count m = {m} must be at least 2")]
    InvalidBranching { m: usize },
    #[error("no hexagonal packing of {m} disks reaches density > 1/2 (smallest feasible count is 3)")]
    NoFeasiblePacking { m: usize },
    #[error("level {level}: sigma = {sigma} exceeds limit {limit} even after raising m to {final_m}")]
    SigmaLimitUnreachable { level: usize, sigma: f64, limit: f64, final_m: usize },
    #[error("level {level} cannot be normalized: {source}")]
    LevelUnsolvable { level: usize, source: SolveError },
    #[error("level {level} needs a larger branching count (estimated multiplier {multiplier:.2}) but the raise budget is exhausted")]
    RaiseBudgetExhausted { level: usize, multiplier: f64 },
    #[error("level {n} not built (tree has {depth} levels)")]
    LevelOutOfRange { n: usize, depth: usize },
    #[error("level {level} enumeration needs {nodes:.3e} nodes, above the cap {cap}")]
    NodeCapExceeded { level: usize, nodes: f64, cap: u64 },
    #[error("target_small = {value} must lie in (0, 1)")]
    InvalidTarget { value: f64 },
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// A maximal-density hexagonal packing of m equal disks in the unit disk,
/// among the three canonical lattice offsets.
#[derive(Debug, Clone)]
pub struct Packing {
    pub centers: Vec<Complex64>,
    pub radius: f64,
    pub density: f64,
}

/// Packs m equal disjoint disks into the unit disk on a hexagonal lattice.
///
/// For each of the three canonical offsets (lattice point, bond midpoint,
/// triangle center), the m lattice points closest to the origin are chosen
/// (ties broken by angle), the configuration is rescaled so the outermost
/// disk touches the unit circle (R = 1/(1 + 2U) for U the largest pitch-1
/// distance), and the densest feasible offset wins. Density c = m·R² must
/// land in (1/2, 1); m = 2 cannot reach that (two disjoint disks of radius
/// > 1/2 do not fit), so the smallest accepted count is 3.
pub fn pack_disks(m: usize) -> Result<Packing, CantorError> {
    if m < 2 {
        return Err(CantorError::InvalidBranching { m });
    }
    let reach = (m as f64).sqrt().ceil() as i64 + 3;
    let mut best: Option<Packing> = None;
    for &(ox, oy) in PACK_OFFSETS.iter() {
        let mut pts: Vec<(f64, f64, f64, f64)> = Vec::new();
        for i in -reach..=reach {
            for j in -reach..=reach {
                let x = i as f64 + 0.5 * j as f64 - ox;
                let y = 3f64.sqrt() / 2.0 * j as f64 - oy;
                pts.push((x * x + y * y, y.atan2(x), x, y));
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).expect("lattice coordinates are finite"));
        let u = pts[m - 1].0.sqrt();
        let radius = 1.0 / (1.0 + 2.0 * u);
        let density = m as f64 * radius * radius;
        if density > 0.5 && density < 1.0 {
            let better = match &best {
                Some(b) => radius > b.radius,
                None => true,
            };
            if better {
                let centers = pts[..m]
                    .iter()
                    .map(|p| Complex64::new(2.0 * radius * p.2, 2.0 * radius * p.3))
                    .collect();
                best = Some(Packing { centers, radius, density });
            }
        }
    }
    let packing = best.ok_or(CantorError::NoFeasiblePacking { m })?;
    debug_assert!(DiskFamily::uniform(&packing.centers, packing.radius).is_disjoint(1e-9));
    debug_assert!(DiskFamily::uniform(&packing.centers, packing.radius).inside_unit_disk(1e-9));
    Ok(packing)
}

/// Which covering sum pins σ at each level.
#[derive(Debug, Clone)]
pub enum Normalization {
    /// M_N · h(s_N) = 1 for the tree's own gauge h.
    SourceGauge,
    /// M_N · h_η(t_N) = 1 for a supplied image-side gauge h_η; with
    /// h_η(t) = t·η(t) this is the corollary normalization M_N·t_N·η(t_N) = 1.
    ImageGauge(GaugeFunction),
}

/// Construction parameters for [`CantorTree::new`].
#[derive(Debug, Clone)]
pub struct TreeConfig {
    pub dilatation: f64,
    pub gauge: GaugeFunction,
    pub normalization: Normalization,
    /// Upper bound demanded of every σ_N; levels raise m until it holds.
    pub target_small: Option<f64>,
    /// Enforce the shrink rule v(σ₁^K⋯σ_N^K) ≤ 2^(−N(1−1/K)) with
    /// v(t) = min(1, |log t|^(−β)); β is derived from the gauge family.
    pub enforce_shrink_rule: bool,
    /// Materialization budget for disk families and composed maps.
    pub node_cap: u64,
}

impl TreeConfig {
    pub fn new(dilatation: f64, gauge: GaugeFunction) -> Self {
        TreeConfig {
            dilatation,
            gauge,
            normalization: Normalization::SourceGauge,
            target_small: None,
            enforce_shrink_rule: false,
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

/// One built level of the tree.
#[derive(Debug, Clone)]
pub struct ConstructionLevel {
    pub m: usize,
    /// Branching count as originally requested, before any automatic raise.
    pub m_requested: usize,
    /// Packing radius R_N (relative to the parent disk).
    pub radius: f64,
    /// Inner ratio σ_N solved from the normalization.
    pub sigma: f64,
    /// Packing density c_N = m_N·R_N².
    pub density: f64,
    /// Packed centers (relative to the parent disk).
    pub centers: Vec<Complex64>,
    /// Residual of the defining normalization at the solved σ.
    pub residual: f64,
}

/// Result of solving the normalization for a prospective level.
#[derive(Debug, Clone, Copy)]
pub struct SigmaSolution {
    pub sigma: f64,
    pub residual: f64,
    /// s_N that the level would produce.
    pub source_radius: f64,
    /// t_N that the level would produce.
    pub image_radius: f64,
    /// When σ exceeds the requested limit, an estimate of the factor by
    /// which m must grow to bring it within the limit.
    pub suggested_m_multiplier: Option<f64>,
}

/// Per-level row of [`CantorTree::normalization_report`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct NormalizationRow {
    pub level: usize,
    pub m: usize,
    pub radius: f64,
    pub sigma: f64,
    pub density: f64,
    pub source_radius: f64,
    pub image_radius: f64,
    /// |M_N·h(s_N) − 1| (or the image-gauge analogue in that mode).
    pub primary_residual: f64,
    /// |M_N·t_N·ε(s_N)^((K+1)/2K)·(Πc)^((1−K)/2K) − 1|: the equivalent
    /// image-side form of the source normalization. Only meaningful at
    /// d = 2/(K+1), hence `None` otherwise (and under image normalization).
    pub dual_residual: Option<f64>,
    /// ε′(t_N), when the gauge supports evaluating ε(s_N).
    pub epsilon_prime: Option<f64>,
    /// Shrink-rule status at this level, when enforcement is on.
    pub shrink: Option<ShrinkStatus>,
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ShrinkStatus {
    /// σ₁^K ⋯ σ_N^K.
    pub sigma_k_product: f64,
    /// Largest admissible value exp(−2^(N(1−1/K)/β)).
    pub threshold: f64,
    pub ok: bool,
}

/// Which side of the construction a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Image,
}

/// What to sum over a generation's disks.
#[derive(Debug, Clone)]
pub enum SumMode {
    /// Σ h(radius) for the tree's gauge: M_N·h(s_N) or M_N·h(t_N).
    /// Gauges apply to the similarity radius.
    TreeGauge,
    /// Σ h(radius) for an arbitrary gauge.
    Gauge(GaugeFunction),
    /// Σ diam^t = M_N·(2·radius)^t: plain t-content terms use geometric
    /// diameters.
    Exponent(f64),
}

/// Result of [`CantorTree::verify_map_consistency`].
#[derive(Debug, Clone, Copy)]
pub struct MapConsistency {
    pub samples: usize,
    /// max |φ_N(C_J + s_N·w) − (C′_J + t_N·w)| over the sample.
    pub max_error: f64,
}

/// A Cantor-type tree of disks in the closed unit disk.
#[derive(Debug, Clone)]
pub struct CantorTree {
    dilatation: f64,
    gauge: GaugeFunction,
    normalization: Normalization,
    target_small: Option<f64>,
    enforce_shrink_rule: bool,
    node_cap: u64,
    levels: Vec<ConstructionLevel>,
    source_radii: Vec<f64>,
    image_radii: Vec<f64>,
    /// Π σ_i^K, for the shrink rule.
    sigma_k_products: Vec<f64>,
}

impl CantorTree {
    pub fn new(config: TreeConfig) -> Result<Self, CantorError> {
        if !(config.dilatation >= 1.0) || !config.dilatation.is_finite() {
            return Err(CantorError::InvalidDilatation { k: config.dilatation });
        }
        if let Some(ts) = config.target_small {
            if !(ts > 0.0 && ts < 1.0) {
                return Err(CantorError::InvalidTarget { value: ts });
            }
        }
        Ok(CantorTree {
            dilatation: config.dilatation,
            gauge: config.gauge,
            normalization: config.normalization,
            target_small: config.target_small,
            enforce_shrink_rule: config.enforce_shrink_rule,
            node_cap: config.node_cap,
            levels: Vec::new(),
            source_radii: Vec::new(),
            image_radii: Vec::new(),
            sigma_k_products: Vec::new(),
        })
    }

    /// Builds a tree with the requested per-level branching counts.
    pub fn build(config: TreeConfig, level_ms: &[usize]) -> Result<Self, CantorError> {
        let mut tree = CantorTree::new(config)?;
        for &m in level_ms {
            tree.add_level(m)?;
        }
        Ok(tree)
    }

    pub fn dilatation(&self) -> f64 {
        self.dilatation
    }

    pub fn gauge(&self) -> &GaugeFunction {
        &self.gauge
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn node_cap(&self) -> u64 {
        self.node_cap
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[ConstructionLevel] {
        &self.levels
    }

    pub fn level(&self, n: usize) -> Result<&ConstructionLevel, CantorError> {
        if n == 0 || n > self.levels.len() {
            return Err(CantorError::LevelOutOfRange { n, depth: self.levels.len() });
        }
        Ok(&self.levels[n - 1])
    }

    /// s_N; s_0 = 1.
    pub fn source_radius(&self, n: usize) -> Result<f64, CantorError> {
        self.radius_of(n, Side::Source)
    }

    /// t_N; t_0 = 1.
    pub fn image_radius(&self, n: usize) -> Result<f64, CantorError> {
        self.radius_of(n, Side::Image)
    }

    fn radius_of(&self, n: usize, side: Side) -> Result<f64, CantorError> {
        if n > self.levels.len() {
            return Err(CantorError::LevelOutOfRange { n, depth: self.levels.len() });
        }
        if n == 0 {
            return Ok(1.0);
        }
        Ok(match side {
            Side::Source => self.source_radii[n - 1],
            Side::Image => self.image_radii[n - 1],
        })
    }

    /// M_N = m₁⋯m_N as a float (levels can multiply beyond u64).
    pub fn branch_count(&self, n: usize) -> Result<f64, CantorError> {
        if n > self.levels.len() {
            return Err(CantorError::LevelOutOfRange { n, depth: self.levels.len() });
        }
        Ok(self.levels[..n].iter().map(|l| l.m as f64).product())
    }

    /// Solves the normalization equation for a prospective next level with
    /// branching count m and packing radius `radius`, without adding it.
    ///
    /// The residual F(σ) = M_N·h(arg(σ)) − 1 is strictly increasing in σ, so
    /// bisection on (0, 1) with residual tolerance 1e−10 either returns the
    /// root or proves the level unsolvable on that range.
    pub fn solve_next_sigma(
        &self,
        m: usize,
        radius: f64,
        sigma_limit: Option<f64>,
    ) -> Result<SigmaSolution, CantorError> {
        if m < 2 {
            return Err(CantorError::InvalidBranching { m });
        }
        let level = self.levels.len() + 1;
        let k = self.dilatation;
        let m_product = self.branch_count(self.levels.len())? * m as f64;
        let s_prev = self.source_radius(self.levels.len())?;
        let t_prev = self.image_radius(self.levels.len())?;

        // The normalization argument as a function of σ, and the gauge it
        // feeds.
        let (norm_gauge, prefix): (&GaugeFunction, f64) = match &self.normalization {
            Normalization::SourceGauge => (&self.gauge, s_prev * radius),
            Normalization::ImageGauge(eta) => (eta, t_prev * radius),
        };
        let k_eff = match self.normalization {
            Normalization::SourceGauge => k,
            Normalization::ImageGauge(_) => 1.0,
        };
        // A tabulated gauge is never extrapolated below its floor, so the
        // bracket's lower end is the smallest σ whose argument stays on the
        // table (nudged up to keep the endpoint evaluation on-table).
        let hi = 1.0 - 1e-15;
        let lo = match norm_gauge.family() {
            EpsFamily::Tabulated { points } => {
                let floor = points[0].0;
                ((floor / prefix).powf(1.0 / k_eff) * (1.0 + 1e-9)).max(1e-15)
            }
            _ => 1e-15,
        };
        if !(lo < hi) {
            // the whole σ-range probes below the table floor
            return Err(CantorError::LevelUnsolvable {
                level,
                source: SolveError::NoBracket { lo, hi, f_lo: f64::NAN, f_hi: f64::NAN },
            });
        }
        let f = |sigma: f64| -> f64 {
            let arg = prefix * sigma.powf(k_eff);
            match norm_gauge.eval(arg) {
                Ok(h) => m_product * h - 1.0,
                Err(_) => f64::NAN,
            }
        };
        let root = solver::bisect(f, lo, hi, solver::RESIDUAL_TOL, solver::MAX_ITER)
            .map_err(|source| CantorError::LevelUnsolvable { level, source })?;

        let sigma = root.x;
        let source_radius = s_prev * sigma.powf(k) * radius;
        let image_radius = t_prev * sigma * radius;
        let suggested = match sigma_limit {
            Some(limit) if sigma > limit => {
                // With σ pinned at the limit the normalization value falls
                // short by the factor M·h(arg(limit)); m must grow by its
                // inverse (the packing radius will also shrink, which only
                // helps).
                let arg = prefix * limit.powf(k_eff);
                let value = norm_gauge.eval(arg).map(|h| m_product * h).unwrap_or(f64::NAN);
                if value.is_finite() && value > 0.0 && value < 1.0 {
                    Some(1.0 / value)
                } else {
                    Some(2.0)
                }
            }
            _ => None,
        };
        Ok(SigmaSolution {
            sigma,
            residual: root.residual,
            source_radius,
            image_radius,
            suggested_m_multiplier: suggested,
        })
    }

    /// Largest admissible σ for the next level under the shrink rule, or
    /// `None` when the rule imposes no constraint there.
    fn shrink_sigma_limit(&self) -> Option<f64> {
        if !self.enforce_shrink_rule {
            return None;
        }
        let k = self.dilatation;
        let n = (self.levels.len() + 1) as f64;
        let rhs = 2f64.powf(-n * (1.0 - 1.0 / k));
        if rhs >= 1.0 {
            return None; // K = 1: no constraint
        }
        let beta = self.shrink_beta();
        // v(t) = min(1, |log t|^(−β)) ≤ rhs ⟺ t ≤ exp(−rhs^(−1/β))
        let threshold = (-rhs.powf(-1.0 / beta)).exp();
        let prev = self.sigma_k_products.last().copied().unwrap_or(1.0);
        if threshold >= prev {
            return Some(1.0); // already satisfied for any σ < 1
        }
        Some((threshold / prev).powf(1.0 / k))
    }

    /// Exponent β of the slowly-varying comparison v(t) = min(1, |log t|^(−β)).
    ///
    /// Chosen as half the Dini margin of ∫ ε^(1+1/K) dt/t for the gauge
    /// family, so the enforced schedule also keeps that integral summable
    /// along the construction; defaults to 1 when the margin is not positive.
    fn shrink_beta(&self) -> f64 {
        let p = 1.0 + 1.0 / self.dilatation;
        let margin = match self.gauge.family() {
            EpsFamily::PowerLog { s } => s * p - 1.0,
            EpsFamily::IteratedLog { .. } => (self.gauge.d() - 1.0) * p - 1.0,
            _ => 0.0,
        };
        if margin > 0.0 {
            margin / 2.0
        } else {
            1.0
        }
    }

    /// Shrink-rule threshold exp(−2^(N(1−1/K)/β)) for level n.
    pub fn shrink_threshold(&self, n: usize) -> f64 {
        let k = self.dilatation;
        let rhs = 2f64.powf(-(n as f64) * (1.0 - 1.0 / k));
        if rhs >= 1.0 {
            return 1.0;
        }
        (-rhs.powf(-1.0 / self.shrink_beta())).exp()
    }

    /// Packs, solves, and appends the next level. The branching count is
    /// raised automatically (with the solver's multiplier estimate) until σ
    /// satisfies `target_small` and, if enforced, the shrink rule.
    pub fn add_level(&mut self, m: usize) -> Result<&ConstructionLevel, CantorError> {
        if m < 2 {
            return Err(CantorError::InvalidBranching { m });
        }
        let level = self.levels.len() + 1;
        let mut m_try = m.max(3);
        let mut last_sigma = f64::NAN;
        for _ in 0..MAX_M_RAISES {
            let packing = pack_disks(m_try)?;
            let limit = match (self.target_small, self.shrink_sigma_limit()) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (Some(a), None) => Some(a),
                (None, b) => b,
            };
            match self.solve_next_sigma(m_try, packing.radius, limit) {
                Ok(sol) => {
                    last_sigma = sol.sigma;
                    if let Some(limit) = limit {
                        if sol.sigma > limit {
                            let mult = sol.suggested_m_multiplier.unwrap_or(2.0).max(1.05);
                            let next = ((m_try as f64) * mult).ceil() as usize;
                            m_try = next.max(m_try + 1);
                            if m_try > MAX_RAISED_M {
                                return Err(CantorError::RaiseBudgetExhausted {
                                    level,
                                    multiplier: mult,
                                });
                            }
                            continue;
                        }
                    }
                    let k = self.dilatation;
                    self.source_radii.push(sol.source_radius);
                    self.image_radii.push(sol.image_radius);
                    let prev_prod = self.sigma_k_products.last().copied().unwrap_or(1.0);
                    self.sigma_k_products.push(prev_prod * sol.sigma.powf(k));
                    self.levels.push(ConstructionLevel {
                        m: m_try,
                        m_requested: m,
                        radius: packing.radius,
                        sigma: sol.sigma,
                        density: packing.density,
                        centers: packing.centers,
                        residual: sol.residual,
                    });
                    return Ok(self.levels.last().unwrap());
                }
                Err(CantorError::LevelUnsolvable {
                    source: SolveError::NoBracket { f_lo, f_hi, .. },
                    ..
                }) if f_lo < 0.0 && f_hi < 0.0 => {
                    // Even σ → 1 keeps the covering sum short of 1: raise m
                    // (the gained count beats the shrinking packing radius
                    // whenever d < 2). A same-signed positive bracket, by
                    // contrast, means the sum is already too large at the
                    // smallest admissible σ — a table floor, not fixable
                    // here — and falls through as a hard error.
                    m_try = m_try.saturating_mul(2);
                    if m_try > MAX_RAISED_M {
                        return Err(CantorError::RaiseBudgetExhausted { level, multiplier: 2.0 });
                    }
                    continue;
                }
                Err(e) => return Err(e),
            }
        }
        if let Some(limit) = self.target_small {
            if last_sigma.is_finite() && last_sigma > limit {
                return Err(CantorError::SigmaLimitUnreachable {
                    level,
                    sigma: last_sigma,
                    limit,
                    final_m: m_try,
                });
            }
        }
        Err(CantorError::RaiseBudgetExhausted { level, multiplier: 2.0 })
    }

    /// Σ over generation N of h(radius) or diam^t, on either side.
    ///
    /// Gauge sums apply h to the similarity radius (s_N or t_N) — these are
    /// the normalized quantities of the construction — while exponent sums
    /// use geometric diameters 2·radius. Closed form; no enumeration.
    pub fn covering_sum(&self, n: usize, side: Side, mode: &SumMode) -> Result<f64, CantorError> {
        if n == 0 || n > self.levels.len() {
            return Err(CantorError::LevelOutOfRange { n, depth: self.levels.len() });
        }
        let count = self.branch_count(n)?;
        let radius = self.radius_of(n, side)?;
        Ok(match mode {
            SumMode::TreeGauge => count * self.gauge.eval(radius)?,
            SumMode::Gauge(g) => count * g.eval(radius)?,
            SumMode::Exponent(t) => count * (2.0 * radius).powf(*t),
        })
    }

    /// The distorted correction factor ε′(t_N) = ε(s_N)^((K+1)/2K) ·
    /// (c₁⋯c_N)^((1−K)/2K).
    pub fn epsilon_prime(&self, n: usize) -> Result<f64, CantorError> {
        if n == 0 || n > self.levels.len() {
            return Err(CantorError::LevelOutOfRange { n, depth: self.levels.len() });
        }
        let k = self.dilatation;
        let eps = self.gauge.eps(self.source_radius(n)?)?;
        let dens: f64 = self.levels[..n].iter().map(|l| l.density).product();
        Ok(eps.powf((k + 1.0) / (2.0 * k)) * dens.powf((1.0 - k) / (2.0 * k)))
    }

    /// The two sides of the automatic bound ε′(t_N)² ≤ ε(s_N)^(1+1/K) ·
    /// 2^(N(1−1/K)), a consequence of every density exceeding 1/2.
    pub fn epsilon_prime_bound(&self, n: usize) -> Result<(f64, f64), CantorError> {
        let k = self.dilatation;
        let lhs = self.epsilon_prime(n)?.powi(2);
        let eps = self.gauge.eps(self.source_radius(n)?)?;
        let rhs = eps.powf(1.0 + 1.0 / k) * 2f64.powf(n as f64 * (1.0 - 1.0 / k));
        Ok((lhs, rhs))
    }

    /// Per-level residual and distortion bookkeeping.
    pub fn normalization_report(&self) -> Vec<NormalizationRow> {
        let k = self.dilatation;
        let image_dim = 2.0 / (k + 1.0);
        let mut rows = Vec::with_capacity(self.levels.len());
        let mut m_product = 1.0f64;
        let mut dens_product = 1.0f64;
        for (idx, lvl) in self.levels.iter().enumerate() {
            let n = idx + 1;
            m_product *= lvl.m as f64;
            dens_product *= lvl.density;
            let s_n = self.source_radii[idx];
            let t_n = self.image_radii[idx];
            let primary = match &self.normalization {
                Normalization::SourceGauge => {
                    self.gauge.eval(s_n).map(|h| (m_product * h - 1.0).abs()).unwrap_or(f64::NAN)
                }
                Normalization::ImageGauge(eta) => {
                    eta.eval(t_n).map(|h| (m_product * h - 1.0).abs()).unwrap_or(f64::NAN)
                }
            };
            let dual = match &self.normalization {
                Normalization::SourceGauge if (self.gauge.d() - image_dim).abs() <= 1e-9 => {
                    self.gauge.eps(s_n).ok().map(|eps| {
                        let value = m_product
                            * t_n
                            * eps.powf((k + 1.0) / (2.0 * k))
                            * dens_product.powf((1.0 - k) / (2.0 * k));
                        (value - 1.0).abs()
                    })
                }
                _ => None,
            };
            let shrink = if self.enforce_shrink_rule {
                let prod = self.sigma_k_products[idx];
                let threshold = self.shrink_threshold(n);
                Some(ShrinkStatus { sigma_k_product: prod, threshold, ok: prod <= threshold })
            } else {
                None
            };
            rows.push(NormalizationRow {
                level: n,
                m: lvl.m,
                radius: lvl.radius,
                sigma: lvl.sigma,
                density: lvl.density,
                source_radius: s_n,
                image_radius: t_n,
                primary_residual: primary,
                dual_residual: dual,
                epsilon_prime: self.epsilon_prime(n).ok(),
                shrink,
            });
        }
        rows
    }

    fn check_enumeration(&self, n: usize, cumulative: bool) -> Result<(), CantorError> {
        let mut total = 0.0f64;
        let mut m_product = 1.0f64;
        for lvl in &self.levels[..n] {
            m_product *= lvl.m as f64;
            total += m_product;
        }
        let nodes = if cumulative { total } else { m_product };
        if nodes > self.node_cap as f64 {
            return Err(CantorError::NodeCapExceeded { level: n, nodes, cap: self.node_cap });
        }
        Ok(())
    }

    fn centers_at(&self, n: usize, side: Side) -> Result<Vec<Complex64>, CantorError> {
        let mut centers = vec![Complex64::new(0.0, 0.0)];
        for (idx, lvl) in self.levels[..n].iter().enumerate() {
            let scale = self.radius_of(idx, side)?;
            let mut next = Vec::with_capacity(centers.len() * lvl.m);
            for &c in &centers {
                for &z in &lvl.centers {
                    next.push(c + scale * z);
                }
            }
            centers = next;
        }
        Ok(centers)
    }

    /// The M_N source disks of generation N (radius s_N). Materializes the
    /// generation; errors above the node cap.
    pub fn source_disks(&self, n: usize) -> Result<DiskFamily, CantorError> {
        if n == 0 || n > self.levels.len() {
            return Err(CantorError::LevelOutOfRange { n, depth: self.levels.len() });
        }
        self.check_enumeration(n, false)?;
        Ok(DiskFamily::uniform(&self.centers_at(n, Side::Source)?, self.source_radii[n - 1]))
    }

    /// The M_N image disks of generation N (radius t_N).
    pub fn image_disks(&self, n: usize) -> Result<DiskFamily, CantorError> {
        if n == 0 || n > self.levels.len() {
            return Err(CantorError::LevelOutOfRange { n, depth: self.levels.len() });
        }
        self.check_enumeration(n, false)?;
        Ok(DiskFamily::uniform(&self.centers_at(n, Side::Image)?, self.image_radii[n - 1]))
    }

    /// The composed map φ_N = g_N ∘ … ∘ g_1. Layer j holds one stretch per
    /// generation-j disk, centered at the image-side position of its parent
    /// prefix, with outer radius t_(j−1)·R_j. Materializes Σ M_j stretches;
    /// errors above the node cap.
    pub fn composed_map(&self, n: usize) -> Result<ComposedQcMap, CantorError> {
        if n > self.levels.len() {
            return Err(CantorError::LevelOutOfRange { n, depth: self.levels.len() });
        }
        self.check_enumeration(n, true)?;
        let mut map = ComposedQcMap::identity();
        let mut parents = vec![Complex64::new(0.0, 0.0)];
        for (idx, lvl) in self.levels[..n].iter().enumerate() {
            let t_prev = self.radius_of(idx, Side::Image)?;
            let outer = t_prev * lvl.radius;
            let mut stretches = Vec::with_capacity(parents.len() * lvl.m);
            let mut next_parents = Vec::with_capacity(parents.len() * lvl.m);
            for &p in &parents {
                for &z in &lvl.centers {
                    let center = p + t_prev * z;
                    stretches.push(RadialStretch::new(center, outer, lvl.sigma, self.dilatation)?);
                    next_parents.push(center);
                }
            }
            map.push_layer(MultiStretch::new(stretches)?);
            parents = next_parents;
        }
        Ok(map)
    }

    /// Spot-checks that the composed map sends source similarity copies onto
    /// image similarity copies: for random branches J and random points w in
    /// the closed unit disk, φ_N(C_J + s_N·w) must equal C′_J + t_N·w.
    ///
    /// The map is evaluated branch-locally (only the stretches along J act
    /// on the sampled point), so this works at any depth regardless of the
    /// node cap.
    pub fn verify_map_consistency(
        &self,
        n: usize,
        samples: usize,
        seed: u64,
    ) -> Result<MapConsistency, CantorError> {
        if n == 0 || n > self.levels.len() {
            return Err(CantorError::LevelOutOfRange { n, depth: self.levels.len() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = self.dilatation;
        let mut max_error = 0.0f64;
        for _ in 0..samples {
            // Random branch and sample point: boundary for half the samples,
            // interior otherwise.
            let theta = rng.gen::<f64>() * std::f64::consts::TAU;
            let fraction: f64 = if rng.gen::<bool>() { 1.0 } else { rng.gen::<f64>() };
            let w = Complex64::from_polar(fraction, theta);

            let mut source_center = Complex64::new(0.0, 0.0);
            let mut image_center = Complex64::new(0.0, 0.0);
            let mut branch = Vec::with_capacity(n);
            for (idx, lvl) in self.levels[..n].iter().enumerate() {
                let j = rng.gen_range(0..lvl.m);
                branch.push(j);
                source_center += self.radius_of(idx, Side::Source)? * lvl.centers[j];
                image_center += self.radius_of(idx, Side::Image)? * lvl.centers[j];
            }
            let z = source_center + self.source_radii[n - 1] * w;
            let expected = image_center + self.image_radii[n - 1] * w;

            // Apply the branch-local stretch of each layer.
            let mut current = z;
            let mut prefix_image = Complex64::new(0.0, 0.0);
            for (idx, lvl) in self.levels[..n].iter().enumerate() {
                let t_prev = self.radius_of(idx, Side::Image)?;
                let center = prefix_image + t_prev * lvl.centers[branch[idx]];
                let stretch = RadialStretch::new(center, t_prev * lvl.radius, lvl.sigma, k)?;
                current = stretch.eval(current);
                prefix_image = center;
            }
            max_error = max_error.max((current - expected).norm());
        }
        Ok(MapConsistency { samples, max_error })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::GaugeFunction;

    fn unit_gauge(d: f64) -> GaugeFunction {
        GaugeFunction::power(d).unwrap()
    }

    #[test]
    fn packing_rejects_two_disks_and_small_counts() {
        assert!(matches!(pack_disks(1), Err(CantorError::InvalidBranching { .. })));
        assert!(matches!(pack_disks(2), Err(CantorError::NoFeasiblePacking { .. })));
    }

    #[test]
    fn packing_minimum_feasible_count() {
        let p = pack_disks(3).unwrap();
        // triangle-centered offset: U = 1/√3, R = 1/(1 + 2/√3)
        let expect_r = 1.0 / (1.0 + 2.0 / 3f64.sqrt());
        assert!((p.radius - expect_r).abs() < 1e-12);
        assert!((p.density - 3.0 * expect_r * expect_r).abs() < 1e-12);
    }

    #[test]
    fn packing_known_configurations() {
        // m = 6: center point plus first ring at pitch 1: U = 1, R = 1/3.
        let p = pack_disks(6).unwrap();
        assert!((p.radius - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.density - 2.0 / 3.0).abs() < 1e-12);
        // m = 300 selects a configuration with U = 9: R = 1/19.
        let p = pack_disks(300).unwrap();
        assert!((p.radius - 1.0 / 19.0).abs() < 1e-12);
        assert!((p.density - 300.0 / 361.0).abs() < 1e-12);
    }

    #[test]
    fn packing_is_disjoint_inside_and_dense() {
        for m in [3usize, 4, 5, 7, 12, 20, 47, 150, 500] {
            let p = pack_disks(m).unwrap();
            assert_eq!(p.centers.len(), m);
            let fam = DiskFamily::uniform(&p.centers, p.radius);
            assert!(fam.is_disjoint(1e-9), "overlap at m = {m}");
            assert!(fam.inside_unit_disk(1e-9), "escape at m = {m}");
            assert!(p.density > 0.5 && p.density < 1.0, "density {} at m = {m}", p.density);
        }
    }

    #[test]
    fn packing_is_deterministic() {
        let a = pack_disks(137).unwrap();
        let b = pack_disks(137).unwrap();
        assert_eq!(a.centers, b.centers);
        assert_eq!(a.radius, b.radius);
    }

    #[test]
    fn sigma_closed_form_single_level() {
        // K = 3, d = 1/2, ε ≡ 1, m = 300, R = 0.05: σ³·R = 300⁻², so
        // σ = (300⁻²/0.05)^(1/3).
        let tree = CantorTree::new(TreeConfig::new(3.0, unit_gauge(0.5))).unwrap();
        let sol = tree.solve_next_sigma(300, 0.05, None).unwrap();
        let expect = (300f64.powi(-2) / 0.05).powf(1.0 / 3.0);
        assert!((sol.sigma - expect).abs() < 1e-9, "sigma {} vs {expect}", sol.sigma);
        assert!(sol.residual <= 1e-10);
        assert!((sol.source_radius - 300f64.powi(-2)).abs() < 1e-12);
    }

    #[test]
    fn sigma_closed_form_two_levels() {
        // ε ≡ 1, constant m and R: M_N·s_N^d = 1 at every level.
        let d = 2.0 / 3.0;
        let cfg = TreeConfig::new(2.0, unit_gauge(d));
        let mut tree = CantorTree::new(cfg).unwrap();
        tree.add_level(12).unwrap();
        tree.add_level(12).unwrap();
        for n in 1..=2 {
            let sum = tree.covering_sum(n, Side::Source, &SumMode::TreeGauge).unwrap();
            assert!((sum - 1.0).abs() <= 1e-8, "level {n} sum {sum}");
        }
        // closed form for level 1: σ^K·R = m^(−1/d)
        let lvl = tree.level(1).unwrap();
        let expect = (12f64.powf(-1.0 / d) / lvl.radius).powf(0.5);
        assert!((lvl.sigma - expect).abs() < 1e-9);
    }

    #[test]
    fn image_variant_closed_form() {
        // η ≡ 1 (d = 1 gauge): M·t·η(t) = 1 gives σ = 1/(m·R).
        let mut cfg = TreeConfig::new(2.0, unit_gauge(0.5));
        cfg.normalization = Normalization::ImageGauge(unit_gauge(1.0));
        let tree = CantorTree::new(cfg).unwrap();
        let sol = tree.solve_next_sigma(300, 0.05, None).unwrap();
        assert!((sol.sigma - 1.0 / 15.0).abs() < 1e-10, "sigma {}", sol.sigma);
    }

    #[test]
    fn target_small_raises_branching() {
        let mut cfg = TreeConfig::new(2.0, unit_gauge(2.0 / 3.0));
        cfg.target_small = Some(0.1);
        let mut tree = CantorTree::new(cfg).unwrap();
        let lvl = tree.add_level(4).unwrap();
        assert!(lvl.sigma <= 0.1, "sigma {}", lvl.sigma);
        assert!(lvl.m > 4, "m was not raised: {}", lvl.m);
        assert_eq!(lvl.m_requested, 4);
    }

    #[test]
    fn covering_sums_normalized_and_exponent_mode() {
        let k = 2.0;
        let d = 2.0 / (k + 1.0);
        let mut tree = CantorTree::new(TreeConfig::new(k, unit_gauge(d))).unwrap();
        for _ in 0..3 {
            tree.add_level(20).unwrap();
        }
        let mut dens = 1.0;
        for n in 1..=3 {
            dens *= tree.level(n).unwrap().density;
            let gauge_sum = tree.covering_sum(n, Side::Source, &SumMode::TreeGauge).unwrap();
            assert!((gauge_sum - 1.0).abs() <= 1e-8);
            // image-side t-content at exponent 1 with diameter convention:
            // M_N·2t_N = 2·(c₁⋯c_N)^((K−1)/2K)
            let img = tree.covering_sum(n, Side::Image, &SumMode::Exponent(1.0)).unwrap();
            let expect = 2.0 * dens.powf((k - 1.0) / (2.0 * k));
            // the identity holds up to the per-level normalization residual
            assert!((img - expect).abs() < 1e-8 * expect, "level {n}: {img} vs {expect}");
        }
        // arbitrary gauge mode matches a hand computation
        let probe = unit_gauge(1.0);
        let s2 = tree.source_radius(2).unwrap();
        let m2 = tree.branch_count(2).unwrap();
        let got = tree.covering_sum(2, Side::Source, &SumMode::Gauge(probe)).unwrap();
        assert!((got - m2 * s2).abs() < 1e-12);
    }

    #[test]
    fn epsilon_prime_constant_gauge_grows_with_depth() {
        // For ε ≡ 1, ε′(t_N) = (c₁⋯c_N)^((1−K)/2K) ≥ 1 and nondecreasing,
        // because every density lies in (1/2, 1) and the exponent is
        // negative for K > 1.
        let k = 3.0;
        let mut tree = CantorTree::new(TreeConfig::new(k, unit_gauge(0.5))).unwrap();
        let mut prev = 1.0;
        for _ in 0..4 {
            tree.add_level(15).unwrap();
        }
        for n in 1..=4 {
            let ep = tree.epsilon_prime(n).unwrap();
            assert!(ep >= prev - 1e-12, "epsilon_prime decreased at {n}: {ep} < {prev}");
            assert!(ep >= 1.0);
            prev = ep;
        }
        // K = 1 keeps ε′ = ε(s_N) = 1.
        let mut flat = CantorTree::new(TreeConfig::new(1.0, unit_gauge(0.5))).unwrap();
        flat.add_level(15).unwrap();
        assert!((flat.epsilon_prime(1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn epsilon_prime_bound_holds() {
        let k = 2.0;
        let gauge = GaugeFunction::power_log(2.0 / (k + 1.0), 2.0).unwrap();
        let mut tree = CantorTree::new(TreeConfig::new(k, gauge)).unwrap();
        for _ in 0..4 {
            tree.add_level(30).unwrap();
        }
        for n in 1..=4 {
            let (lhs, rhs) = tree.epsilon_prime_bound(n).unwrap();
            assert!(lhs <= rhs * (1. + 1e-12), "bound fails at {n}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn normalization_report_residuals() {
        let k = 2.0;
        let tree =
            CantorTree::build(TreeConfig::new(k, unit_gauge(2.0 / (k + 1.0))), &[10, 10, 10])
                .unwrap();
        let rows = tree.normalization_report();
        assert_eq!(rows.len(), 3);
        for row in &rows {
            assert!(row.primary_residual <= 1e-8);
            let dual = row.dual_residual.expect("dual residual applies at d = 2/(K+1)");
            assert!(dual <= 1e-8, "dual residual {dual}");
            assert!(row.shrink.is_none());
        }
        // dual form is suppressed away from the distortion-critical exponent
        let tree = CantorTree::build(TreeConfig::new(k, unit_gauge(0.5)), &[10]).unwrap();
        assert!(tree.normalization_report()[0].dual_residual.is_none());
    }

    #[test]
    fn disk_families_nest_and_stay_disjoint() {
        let tree = CantorTree::build(TreeConfig::new(2.0, unit_gauge(2.0 / 3.0)), &[5, 5, 5])
            .unwrap();
        for n in 1..=3 {
            let src = tree.source_disks(n).unwrap();
            assert_eq!(src.len(), 5usize.pow(n as u32));
            assert!(src.is_disjoint(1e-12), "source overlap at level {n}");
            assert!(src.inside_unit_disk(1e-12));
            let img = tree.image_disks(n).unwrap();
            assert!(img.is_disjoint(1e-12), "image overlap at level {n}");
            assert!(img.inside_unit_disk(1e-12));
        }
        // nesting: each level-2 source disk lies inside its parent
        let parents = tree.source_disks(1).unwrap();
        let children = tree.source_disks(2).unwrap();
        let s1 = tree.source_radius(1).unwrap();
        let s2 = tree.source_radius(2).unwrap();
        for (i, child) in children.disks.iter().enumerate() {
            let parent = &parents.disks[i / 5];
            let dist = (child.center - parent.center).norm();
            assert!(dist + s2 <= s1 + 1e-12, "child {i} escapes its parent");
        }
    }

    #[test]
    fn node_cap_gates_enumeration_but_not_parameters() {
        let mut cfg = TreeConfig::new(2.0, unit_gauge(2.0 / 3.0));
        cfg.node_cap = 100;
        let tree = CantorTree::build(cfg, &[5, 5, 5, 5]).unwrap();
        // parameters exist at depth 4
        assert_eq!(tree.depth(), 4);
        assert!(tree.covering_sum(4, Side::Source, &SumMode::TreeGauge).is_ok());
        // 25 disks fit, 125 do not
        assert!(tree.source_disks(2).is_ok());
        assert!(matches!(tree.source_disks(3), Err(CantorError::NodeCapExceeded { .. })));
        // composed map at depth 2 needs 5 + 25 = 30 stretches: fine; depth 3
        // needs 155: capped.
        assert!(tree.composed_map(2).is_ok());
        assert!(matches!(tree.composed_map(3), Err(CantorError::NodeCapExceeded { .. })));
        // branch-local verification still works at full depth
        let c = tree.verify_map_consistency(4, 50, 7).unwrap();
        assert!(c.max_error < 1e-9, "max error {}", c.max_error);
    }

    #[test]
    fn composed_map_sends_source_disks_to_image_disks() {
        let tree = CantorTree::build(TreeConfig::new(2.0, unit_gauge(2.0 / 3.0)), &[4, 4])
            .unwrap();
        let map = tree.composed_map(2).unwrap();
        let src = tree.source_disks(2).unwrap();
        let img = tree.image_disks(2).unwrap();
        let s2 = tree.source_radius(2).unwrap();
        let t2 = tree.image_radius(2).unwrap();
        for (i, disk) in src.disks.iter().enumerate() {
            for j in 0..8 {
                let theta = std::f64::consts::TAU * j as f64 / 8.0;
                let w = Complex64::from_polar(1.0, theta);
                let z = disk.center + s2 * w;
                let expected = img.disks[i].center + t2 * w;
                let got = map.eval(z);
                assert!((got - expected).norm() < 1e-10, "disk {i}, angle {theta}");
            }
        }
        // and the centers go to the centers
        for (s, t) in src.disks.iter().zip(img.disks.iter()) {
            assert!((map.eval(s.center) - t.center).norm() < 1e-10);
        }
    }

    #[test]
    fn map_consistency_verification_matches_materialized_map() {
        let tree = CantorTree::build(TreeConfig::new(3.0, unit_gauge(0.5)), &[6, 6])
            .unwrap();
        let check = tree.verify_map_consistency(2, 200, 42).unwrap();
        assert_eq!(check.samples, 200);
        assert!(check.max_error < 1e-10, "max error {}", check.max_error);
    }

    #[test]
    fn shrink_rule_enforcement_raises_m_and_reports() {
        let k = 2.0;
        let gauge = GaugeFunction::power_log(2.0 / (k + 1.0), 2.0).unwrap();
        let mut cfg = TreeConfig::new(k, gauge);
        cfg.enforce_shrink_rule = true;
        let mut tree = CantorTree::new(cfg).unwrap();
        for _ in 0..3 {
            tree.add_level(50).unwrap();
        }
        for row in tree.normalization_report() {
            let shrink = row.shrink.expect("enforcement reports status");
            assert!(shrink.ok, "level {}: product {} > threshold {}", row.level,
                shrink.sigma_k_product, shrink.threshold);
        }
        // level 1 had to grow beyond the request to satisfy the rule
        assert!(tree.level(1).unwrap().m > 50);
    }

    #[test]
    fn shrink_rule_is_vacuous_for_k_one() {
        let mut cfg = TreeConfig::new(1.0, unit_gauge(1.0));
        cfg.enforce_shrink_rule = true;
        let mut tree = CantorTree::new(cfg).unwrap();
        tree.add_level(10).unwrap();
        assert_eq!(tree.level(1).unwrap().m, 10);
        let row = &tree.normalization_report()[0];
        assert!(row.shrink.unwrap().ok);
    }

    #[test]
    fn level_indexing_errors() {
        let tree = CantorTree::build(TreeConfig::new(2.0, unit_gauge(0.5)), &[5]).unwrap();
        assert!(matches!(tree.level(0), Err(CantorError::LevelOutOfRange { .. })));
        assert!(matches!(tree.level(2), Err(CantorError::LevelOutOfRange { .. })));
        assert!(matches!(
            tree.covering_sum(2, Side::Source, &SumMode::TreeGauge),
            Err(CantorError::LevelOutOfRange { .. })
        ));
    }

    #[test]
    fn tabulated_gauge_floor_blocks_deep_solve() {
        // Table floor at 1e-3: shallow levels solve on the table, but once
        // s_N would have to drop below the floor, the normalization sum
        // already exceeds 1 at the smallest on-table σ, and the solver must
        // refuse rather than extrapolate.
        let gauge =
            GaugeFunction::tabulated(2.0 / 3.0, vec![(1e-3, 0.4), (0.5, 1.0)]).unwrap();
        let mut tree = CantorTree::new(TreeConfig::new(2.0, gauge)).unwrap();
        let mut failure = None;
        for _ in 0..6 {
            match tree.add_level(8) {
                Ok(_) => {}
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        let err = failure.expect("a deep enough level must fall below the table floor");
        assert!(matches!(err, CantorError::LevelUnsolvable { .. }), "unexpected error {err:?}");
        assert!(tree.depth() >= 1, "the first level fits on the table");
        // the levels that did build are properly normalized
        for row in tree.normalization_report() {
            assert!(row.primary_residual <= 1e-8);
        }
    }
}
