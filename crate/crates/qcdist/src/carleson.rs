//! Boundary-behavior diagnostics on the unit disk.
//!
//! Dyadic Carleson squares index the disk near its boundary: depth k covers
//! the band 2^(−k) ≤ 1 − |z| < 2^(1−k) with 2^k angular sectors. On top of
//! the squares sit derivative classification (small against a power of the
//! box size, or not), integral means of |f′| along circles with a doubling
//! trapezoid rule, a means-spectrum slope estimator, and the closed-form
//! constant-tracking bounds used to compare against measured exponents.

use crate::fit::{fit_line, FitError};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::TAU;
use thiserror::Error;

/// Relative tolerance at which the doubling integrator declares a mean
/// converged.
pub const MEANS_REL_TOL: f64 = 1e-8;

/// Node budget for the doubling integrator (2^22 samples on the circle).
pub const MEANS_MAX_NODES: usize = 1 << 22;

/// First node count of the doubling integrator.
const MEANS_START_NODES: usize = 64;

/// A means-spectrum fit needs at least this many dyadic radii.
pub const MIN_BETA_RADII: usize = 5;

#[derive(Debug, Error)]
pub enum CarlesonError {
    #[error("point with |z| = {modulus} is not strictly inside the unit disk")]
    PointOutsideDisk { modulus: f64 },
    #[error("depth {k} exceeds the supported range 0..=62")]
    BadDepth { k: u32 },
    #[error("classification window needs 0 < alpha < delta < 1, got alpha = {alpha}, delta = {delta}")]
    BadWindow { alpha: f64, delta: f64 },
    #[error("circle radius r = {r} outside (0, 1)")]
    BadRadius { r: f64 },
    #[error("means exponent p = {p} must be finite")]
    BadExponent { p: f64 },
    #[error("integrand is not finite at radius {r} (derivative vanishing under a negative power?)")]
    NonFiniteIntegrand { r: f64 },
    #[error("integral mean did not reach relative tolerance {tol:e} within {nodes} nodes (last value {last:.6e}, previous {previous:.6e})")]
    PrecisionLoss { nodes: usize, tol: f64, last: f64, previous: f64 },
    #[error("means-spectrum fit needs at least {need} dyadic radii, got {got}")]
    TooFewRadii { got: usize, need: usize },
    #[error("parameter {name} = {value} out of range")]
    BadParameter { name: &'static str, value: f64 },
    #[error("exponent p = {p} outside the admissible range |p| <= {limit}")]
    OutsideAdmissibleRange { p: f64, limit: f64 },
    #[error("compression schema violated: {reason}")]
    SchemaViolation { reason: String },
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// A dyadic Carleson square: depth k ≥ 0 and angular index j ∈ 0..2^k.
///
/// The square at depth k ≥ 1 covers the band 2^(−k) ≤ 1 − |z| < 2^(1−k) and
/// the angular sector j·2π/2^k ≤ arg z < (j+1)·2π/2^k. Depth 0 is the single
/// central cell, reached only by the origin (the band there is 1 − |z| ≥ 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub struct CarlesonSquare {
    pub depth: u32,
    pub angular_index: u64,
}

impl CarlesonSquare {
    /// The square containing z (|z| < 1 strictly).
    pub fn of_point(z: Complex64) -> Result<Self, CarlesonError> {
        let modulus = z.norm();
        if !(modulus < 1.0) {
            return Err(CarlesonError::PointOutsideDisk { modulus });
        }
        let gap = 1.0 - modulus;
        // k = −floor(log2(1 − |z|)), clamped at the central square
        let k = (-gap.log2().floor()).max(0.0) as u32;
        if k > 62 {
            return Err(CarlesonError::BadDepth { k });
        }
        let mut arg = z.im.atan2(z.re);
        if arg < 0.0 {
            arg += TAU;
        }
        let sectors = 1u64 << k;
        let j = ((arg / TAU * sectors as f64).floor() as u64).min(sectors - 1);
        Ok(CarlesonSquare { depth: k, angular_index: j })
    }

    /// Number of squares at a given depth: 2^k.
    pub fn count_at_depth(k: u32) -> Result<u64, CarlesonError> {
        if k > 62 {
            return Err(CarlesonError::BadDepth { k });
        }
        Ok(1u64 << k)
    }

    /// The band of 1 − |z| covered: [lo, hi) = [2^(−k), 2^(1−k)).
    pub fn gap_band(&self) -> (f64, f64) {
        (2f64.powi(-(self.depth as i32)), 2f64.powi(1 - self.depth as i32))
    }

    /// The angular sector [lo, hi) in [0, 2π).
    pub fn angular_interval(&self) -> (f64, f64) {
        let width = TAU / (1u64 << self.depth) as f64;
        (self.angular_index as f64 * width, (self.angular_index as f64 + 1.0) * width)
    }

    /// Side length 2^(−k): both the radial thickness and (up to the factor
    /// 2π/2 < π) the arc length of the sector.
    pub fn side(&self) -> f64 {
        2f64.powi(-(self.depth as i32))
    }

    pub fn contains(&self, z: Complex64) -> bool {
        match CarlesonSquare::of_point(z) {
            Ok(sq) => sq == *self,
            Err(_) => false,
        }
    }
}

/// Analytic maps with closed-form derivatives, used to exercise the
/// boundary diagnostics against known answers.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticTestMap {
    /// f(z) = z.
    Identity,
    /// The map with f′(z) = (1 − z)^(−b), f(0) = 0: one boundary point
    /// carries all the derivative growth. Means exponent over circles is
    /// pb − 1 once pb > 1.
    BoundarySingularity { b: f64 },
    /// f(z) = z/(1 − z)², f′(z) = (1 + z)/(1 − z)³.
    Koebe,
    /// Disk automorphism (z − a)/(1 − ā·z); bounded derivative, flat means.
    Mobius { a: Complex64 },
    /// c₀ + c₁z + …; entire, flat means.
    Polynomial { coeffs: Vec<Complex64> },
}

impl AnalyticTestMap {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        match self {
            AnalyticTestMap::Identity => z,
            AnalyticTestMap::BoundarySingularity { b } => {
                let w = Complex64::new(1.0, 0.0) - z;
                if (*b - 1.0).abs() < 1e-14 {
                    -w.ln()
                } else {
                    (w.powf(1.0 - b) - 1.0) / (b - 1.0)
                }
            }
            AnalyticTestMap::Koebe => {
                let w = Complex64::new(1.0, 0.0) - z;
                z / (w * w)
            }
            AnalyticTestMap::Mobius { a } => (z - a) / (Complex64::new(1.0, 0.0) - a.conj() * z),
            AnalyticTestMap::Polynomial { coeffs } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for &c in coeffs.iter().rev() {
                    acc = acc * z + c;
                }
                acc
            }
        }
    }

    pub fn derivative(&self, z: Complex64) -> Complex64 {
        match self {
            AnalyticTestMap::Identity => Complex64::new(1.0, 0.0),
            AnalyticTestMap::BoundarySingularity { b } => {
                (Complex64::new(1.0, 0.0) - z).powf(-b)
            }
            AnalyticTestMap::Koebe => {
                let w = Complex64::new(1.0, 0.0) - z;
                (Complex64::new(1.0, 0.0) + z) / (w * w * w)
            }
            AnalyticTestMap::Mobius { a } => {
                let denom = Complex64::new(1.0, 0.0) - a.conj() * z;
                (1.0 - a.norm_sqr()) / (denom * denom)
            }
            AnalyticTestMap::Polynomial { coeffs } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, &c) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * z + c * i as f64;
                }
                acc
            }
        }
    }
}

/// One classified sample point.
#[derive(Debug, Clone, Copy)]
pub struct ClassifiedBox {
    pub index: usize,
    pub point: Complex64,
    pub square: CarlesonSquare,
    /// (1 − |z|)^(α/δ − 1), the largest derivative magnitude still counted
    /// as small at this box size.
    pub threshold: f64,
    pub derivative_magnitude: f64,
    pub good: bool,
}

/// Result of [`classify_boxes`].
#[derive(Debug, Clone)]
pub struct BoxClassification {
    pub alpha: f64,
    pub delta: f64,
    pub rows: Vec<ClassifiedBox>,
    pub good: Vec<usize>,
    pub bad: Vec<usize>,
}

/// Splits sample points by whether |f′| stays below (1 − |z|)^(α/δ − 1).
///
/// Points where it does ("good") have image boxes small enough that their
/// δ-content terms are controlled by the α-content of the source boxes; the
/// exponent window requires 0 < α < δ < 1.
pub fn classify_boxes(
    f: &AnalyticTestMap,
    points: &[Complex64],
    alpha: f64,
    delta: f64,
) -> Result<BoxClassification, CarlesonError> {
    if !(alpha > 0.0 && alpha < delta && delta < 1.0) {
        return Err(CarlesonError::BadWindow { alpha, delta });
    }
    let mut rows = Vec::with_capacity(points.len());
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for (index, &z) in points.iter().enumerate() {
        let square = CarlesonSquare::of_point(z)?;
        let gap = 1.0 - z.norm();
        let threshold = gap.powf(alpha / delta - 1.0);
        let derivative_magnitude = f.derivative(z).norm();
        let is_good = derivative_magnitude <= threshold;
        if is_good {
            good.push(index);
        } else {
            bad.push(index);
        }
        rows.push(ClassifiedBox {
            index,
            point: z,
            square,
            threshold,
            derivative_magnitude,
            good: is_good,
        });
    }
    Ok(BoxClassification { alpha, delta, rows, good, bad })
}

/// The two sides of the good-box content comparison.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct GoodSumCheck {
    /// Σ over good boxes of ((1 − |z|)·|f′(z)|)^δ — the δ-content of the
    /// image boxes, estimated through the derivative.
    pub image_content: f64,
    /// Σ over good boxes of (1 − |z|)^α — the α-content of the source boxes.
    pub source_content: f64,
    pub good_count: usize,
    pub holds: bool,
}

/// Verifies Σ ((1−|z|)|f′|)^δ ≤ Σ (1−|z|)^α over the good boxes: each term
/// obeys it by the very definition of "good", with equality exactly at the
/// threshold.
pub fn good_sum_check(
    f: &AnalyticTestMap,
    points: &[Complex64],
    alpha: f64,
    delta: f64,
) -> Result<GoodSumCheck, CarlesonError> {
    let cls = classify_boxes(f, points, alpha, delta)?;
    let mut image_content = 0.0;
    let mut source_content = 0.0;
    for &i in &cls.good {
        let row = &cls.rows[i];
        let gap = 1.0 - row.point.norm();
        image_content += (gap * row.derivative_magnitude).powf(delta);
        source_content += gap.powf(alpha);
    }
    Ok(GoodSumCheck {
        image_content,
        source_content,
        good_count: cls.good.len(),
        holds: image_content <= source_content * (1.0 + 1e-12),
    })
}

/// A converged circle mean.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct IntegralMean {
    pub p: f64,
    pub r: f64,
    /// (1/2π) ∫ |f′(r e^(it))|^p dt.
    pub value: f64,
    /// Nodes at which the doubling stopped.
    pub nodes: usize,
    /// Relative change over the last doubling.
    pub rel_change: f64,
}

/// Mean of |f′|^p over the circle of radius r, by the periodic trapezoid
/// rule with doubling node counts (old nodes are reused; each refinement
/// only evaluates the midpoints). Converges when one doubling changes the
/// value by less than 1e−8 relatively; gives up past 2^22 nodes.
pub fn integral_means(
    f: &AnalyticTestMap,
    p: f64,
    r: f64,
) -> Result<IntegralMean, CarlesonError> {
    if !(r > 0.0 && r < 1.0) {
        return Err(CarlesonError::BadRadius { r });
    }
    if !p.is_finite() {
        return Err(CarlesonError::BadExponent { p });
    }
    let sample_mean = |n: usize, offset: f64| -> f64 {
        let mut acc = 0.0;
        for k in 0..n {
            let t = TAU * (k as f64 + offset) / n as f64;
            acc += f.derivative(Complex64::from_polar(r, t)).norm().powf(p);
        }
        acc / n as f64
    };
    let mut n = MEANS_START_NODES;
    let mut value = sample_mean(n, 0.0);
    if !value.is_finite() {
        return Err(CarlesonError::NonFiniteIntegrand { r });
    }
    while n < MEANS_MAX_NODES {
        let midpoints = sample_mean(n, 0.5);
        if !midpoints.is_finite() {
            return Err(CarlesonError::NonFiniteIntegrand { r });
        }
        let refined = 0.5 * (value + midpoints);
        let rel = (refined - value).abs() / refined.abs().max(f64::MIN_POSITIVE);
        n *= 2;
        let previous = value;
        value = refined;
        if rel <= MEANS_REL_TOL {
            return Ok(IntegralMean { p, r, value, nodes: n, rel_change: rel });
        }
        if n >= MEANS_MAX_NODES {
            return Err(CarlesonError::PrecisionLoss {
                nodes: n,
                tol: MEANS_REL_TOL,
                last: value,
                previous,
            });
        }
    }
    unreachable!("loop exits by return");
}

/// Means-spectrum slope fit.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BetaEstimate {
    pub p: f64,
    /// Fitted growth exponent of the mean against 1/(1 − r).
    pub beta: f64,
    pub rms_residual: f64,
    /// (r, mean) samples at r = 1 − 2^(−j).
    pub samples: Vec<(f64, f64)>,
    /// Set when the fit residual is large enough that the slope should not
    /// be trusted to two digits.
    pub low_confidence: bool,
}

/// Fits log mean against log 1/(1−r) over the dyadic radii r = 1 − 2^(−j),
/// j in `j_lo..=j_hi` (at least 5 radii). The circle means are computed in
/// parallel; the result is deterministic.
pub fn beta_estimate(
    f: &AnalyticTestMap,
    p: f64,
    j_lo: u32,
    j_hi: u32,
) -> Result<BetaEstimate, CarlesonError> {
    if j_lo < 1 || j_hi > 40 || j_hi < j_lo {
        return Err(CarlesonError::BadParameter {
            name: "j range",
            value: if j_hi < j_lo { j_lo as f64 } else { j_hi as f64 },
        });
    }
    let count = (j_hi - j_lo + 1) as usize;
    if count < MIN_BETA_RADII {
        return Err(CarlesonError::TooFewRadii { got: count, need: MIN_BETA_RADII });
    }
    let js: Vec<u32> = (j_lo..=j_hi).collect();
    let means: Vec<Result<IntegralMean, CarlesonError>> = js
        .par_iter()
        .map(|&j| integral_means(f, p, 1.0 - 2f64.powi(-(j as i32))))
        .collect();
    let mut xs = Vec::with_capacity(count);
    let mut ys = Vec::with_capacity(count);
    let mut samples = Vec::with_capacity(count);
    for mean in means {
        let mean = mean?;
        xs.push((1.0 / (1.0 - mean.r)).ln());
        ys.push(mean.value.ln());
        samples.push((mean.r, mean.value));
    }
    let fit = fit_line(&xs, &ys)?;
    Ok(BetaEstimate {
        p,
        beta: fit.slope,
        rms_residual: fit.rms_residual,
        samples,
        low_confidence: fit.rms_residual > 0.05,
    })
}

/// κ = (K − 1)/(K + 1), the dilatation's Beltrami norm.
pub fn kappa(k: f64) -> Result<f64, CarlesonError> {
    if !(k >= 1.0) || !k.is_finite() {
        return Err(CarlesonError::BadParameter { name: "K", value: k });
    }
    Ok((k - 1.0) / (k + 1.0))
}

/// Boundary-compression dimension bound q·dim/(β + q + 1 − dim) built from
/// a means exponent β at order q: how far a set of the given dimension can
/// be compressed by the boundary map before the means growth forbids it.
pub fn makarov_bound(dim: f64, q: f64, beta: f64) -> Result<f64, CarlesonError> {
    if !(dim > 0.0 && dim <= 2.0) {
        return Err(CarlesonError::BadParameter { name: "dim", value: dim });
    }
    if !(q > 0.0) || !q.is_finite() {
        return Err(CarlesonError::BadParameter { name: "q", value: q });
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(CarlesonError::BadParameter { name: "beta", value: beta });
    }
    let denom = beta + q + 1.0 - dim;
    if denom <= 0.0 {
        return Err(CarlesonError::BadParameter { name: "beta + q + 1 - dim", value: denom });
    }
    Ok(q * dim / denom)
}

/// Upper bound 9κ²p² on the means exponent of order p for the derivative of
/// a principal K-quasiconformal extension, κ = (K−1)/(K+1).
pub fn rotation_means_bound(k: f64, p: f64) -> Result<f64, CarlesonError> {
    if !p.is_finite() {
        return Err(CarlesonError::BadExponent { p });
    }
    let kappa = kappa(k)?;
    Ok(9.0 * kappa * kappa * p * p)
}

/// Dimension bounds for a K-quasicircle in terms of κ = (K−1)/(K+1).
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct QuasicircleBounds {
    pub kappa: f64,
    /// Proven upper bound 1 + 37κ².
    pub upper: f64,
    /// Conjectured sharp value 1 + κ².
    pub conjectured: f64,
    /// Numerically observed growth reference 1 + 0.69κ².
    pub observed_reference: f64,
}

pub fn quasicircle_bounds(k: f64) -> Result<QuasicircleBounds, CarlesonError> {
    let kappa = kappa(k)?;
    let k2 = kappa * kappa;
    Ok(QuasicircleBounds {
        kappa,
        upper: 1.0 + 37.0 * k2,
        conjectured: 1.0 + k2,
        observed_reference: 1.0 + 0.69 * k2,
    })
}

/// Integral-means bound p²κ²/4 for K-quasiconformally extendable conformal
/// maps, valid on |p| ≤ 2(K+1)/(K−1) = 2/κ.
pub fn extendable_means_bound(k: f64, p: f64) -> Result<f64, CarlesonError> {
    if !p.is_finite() {
        return Err(CarlesonError::BadExponent { p });
    }
    let kappa = kappa(k)?;
    if kappa > 0.0 {
        let limit = 2.0 / kappa;
        if p.abs() > limit {
            return Err(CarlesonError::OutsideAdmissibleRange { p, limit });
        }
    }
    Ok(p * p * kappa * kappa / 4.0)
}

/// Exponent schema of the compression construction.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct CompressionExponents {
    pub epsilon: f64,
    pub alpha: f64,
    pub delta: f64,
    /// Coefficient gap M − N driving γ-improvement.
    pub gamma: f64,
}

/// Builds the exponent pair α = 1 − M·ε², δ = α·(1 + N·ε²) and checks the
/// schema constraints M > 400, 20√M < N < M, and ε small enough that
/// 0 < α < δ < 1.
pub fn compression_exponents(
    epsilon: f64,
    m: f64,
    n: f64,
) -> Result<CompressionExponents, CarlesonError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(CarlesonError::BadParameter { name: "epsilon", value: epsilon });
    }
    if !(m > 400.0) {
        return Err(CarlesonError::SchemaViolation {
            reason: format!("coefficient M = {m} must exceed 400"),
        });
    }
    if !(n > 20.0 * m.sqrt() && n < m) {
        return Err(CarlesonError::SchemaViolation {
            reason: format!("coefficient N = {n} must lie strictly between 20·sqrt(M) = {} and M = {m}", 20.0 * m.sqrt()),
        });
    }
    let alpha = 1.0 - m * epsilon * epsilon;
    if !(alpha > 0.0) {
        return Err(CarlesonError::SchemaViolation {
            reason: format!("epsilon = {epsilon} too large: alpha = 1 - M*eps^2 = {alpha} <= 0"),
        });
    }
    let delta = alpha * (1.0 + n * epsilon * epsilon);
    if !(delta < 1.0) {
        return Err(CarlesonError::SchemaViolation {
            reason: format!("delta = {delta} >= 1"),
        });
    }
    Ok(CompressionExponents { epsilon, alpha, delta, gamma: m - n })
}
