//! Radial stretch maps and their compositions.
//!
//! The basic building block is the K-quasiconformal "radial stretch"
//! supported on a disk D(center, r): it rescales the concentric subdisk of
//! radius σ^K·r by the factor σ^(1−K), interpolates on the remaining annulus
//! by z ↦ |ζ/r|^(1/K−1)·ζ (writing ζ for z − center), and is the identity
//! outside the disk. The two branch formulas agree on both interface circles,
//! so the map is a homeomorphism of the plane, conformal off the annulus,
//! with constant distortion K inside it.
//!
//! [`MultiStretch`] applies one such stretch on each disk of a pairwise
//! disjoint family (grid-indexed, so point location is O(1) per query even
//! for 10⁶ disks), and [`ComposedQcMap`] chains generations of multi-stretches
//! into the composed map of a construction.

use crate::disk::{Disk, SpatialIndex};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("outer radius r = {r} must be positive and finite")]
    InvalidRadius { r: f64 },
    #[error("inner ratio sigma = {sigma} must lie in (0, 1)")]
    InvalidRatio { sigma: f64 },
    #[error("dilatation K = {k} must satisfy K >= 1")]
    InvalidDilatation { k: f64 },
    #[error("Beltrami coefficient is undefined on the interface circle |zeta| = {rho}")]
    OnInterface { rho: f64 },
    #[error("radius {rho} outside the annulus [{inner}, {outer}]")]
    OutsideAnnulus { rho: f64, inner: f64, outer: f64 },
    #[error("support disks {i} and {j} overlap")]
    Overlap { i: usize, j: usize },
}

/// A radial stretch supported on D(center, outer_radius).
///
/// * on |ζ| ≤ σ^K·r: z ↦ center + σ^(1−K)·ζ (a conformal rescaling),
/// * on σ^K·r ≤ |ζ| ≤ r: z ↦ center + |ζ/r|^(1/K−1)·ζ,
/// * outside: the identity.
///
/// The inner disk D(center, σ^K·r) is mapped onto D(center, σ·r).
#[derive(Debug, Clone, PartialEq)]
pub struct RadialStretch {
    center: Complex64,
    outer_radius: f64,
    inner_ratio: f64,
    dilatation: f64,
    // cached powers so branch formulas stay mutually consistent
    inner_radius: f64,     // σ^K · r
    image_inner: f64,      // σ · r
    scale_fwd: f64,        // σ^(1−K)
    scale_inv: f64,        // σ^(K−1)
}

impl RadialStretch {
    pub fn new(
        center: Complex64,
        outer_radius: f64,
        inner_ratio: f64,
        dilatation: f64,
    ) -> Result<Self, MapError> {
        if !(outer_radius > 0.0) || !outer_radius.is_finite() {
            return Err(MapError::InvalidRadius { r: outer_radius });
        }
        if !(inner_ratio > 0.0 && inner_ratio < 1.0) {
            return Err(MapError::InvalidRatio { sigma: inner_ratio });
        }
        if !(dilatation >= 1.0) || !dilatation.is_finite() {
            return Err(MapError::InvalidDilatation { k: dilatation });
        }
        let sigma_k = inner_ratio.powf(dilatation);
        Ok(RadialStretch {
            center,
            outer_radius,
            inner_ratio,
            dilatation,
            inner_radius: sigma_k * outer_radius,
            image_inner: inner_ratio * outer_radius,
            scale_fwd: inner_ratio.powf(1.0 - dilatation),
            scale_inv: inner_ratio.powf(dilatation - 1.0),
        })
    }

    pub fn center(&self) -> Complex64 {
        self.center
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    pub fn inner_ratio(&self) -> f64 {
        self.inner_ratio
    }

    pub fn dilatation(&self) -> f64 {
        self.dilatation
    }

    /// Radius σ^K·r of the disk on which the map is a pure rescaling.
    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    /// Radius σ·r of the image of the inner disk.
    pub fn image_inner_radius(&self) -> f64 {
        self.image_inner
    }

    /// The support disk D(center, r).
    pub fn support(&self) -> Disk {
        Disk::new(self.center, self.outer_radius)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let zeta = z - self.center;
        let rho = zeta.norm();
        if rho >= self.outer_radius {
            return z;
        }
        if rho <= self.inner_radius {
            return self.center + self.scale_fwd * zeta;
        }
        let factor = (rho / self.outer_radius).powf(1.0 / self.dilatation - 1.0);
        self.center + factor * zeta
    }

    pub fn eval_inverse(&self, w: Complex64) -> Complex64 {
        let zeta = w - self.center;
        let rho = zeta.norm();
        if rho >= self.outer_radius {
            return w;
        }
        if rho <= self.image_inner {
            return self.center + self.scale_inv * zeta;
        }
        let factor = (rho / self.outer_radius).powf(self.dilatation - 1.0);
        self.center + factor * zeta
    }

    /// Beltrami coefficient ∂̄f/∂f. Zero on the rescaling branch and outside
    /// the support; −((K−1)/(K+1))·e^(2iθ) on the open annulus; undefined
    /// (rejected) exactly on the two interface circles.
    pub fn beltrami(&self, z: Complex64) -> Result<Complex64, MapError> {
        let zeta = z - self.center;
        let rho = zeta.norm();
        if rho == self.inner_radius || rho == self.outer_radius {
            return Err(MapError::OnInterface { rho });
        }
        if rho < self.inner_radius || rho > self.outer_radius {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let phase = (zeta / rho) * (zeta / rho);
        let k = self.dilatation;
        Ok(phase * ((1.0 - k) / (1.0 + k)))
    }

    /// Radius of the image of the concentric circle |ζ| = ρ for ρ inside the
    /// annulus [σ^K·r, r]: the map sends it to the circle of radius
    /// r^(1−1/K)·ρ^(1/K). The rescaling branch handles smaller ρ instead.
    pub fn image_disk_concentric(&self, rho: f64) -> Result<f64, MapError> {
        if !(rho >= self.inner_radius && rho <= self.outer_radius) {
            return Err(MapError::OutsideAnnulus {
                rho,
                inner: self.inner_radius,
                outer: self.outer_radius,
            });
        }
        Ok(self.outer_radius * (rho / self.outer_radius).powf(1.0 / self.dilatation))
    }
}

/// Central finite-difference estimate of the Beltrami coefficient of an
/// arbitrary map at z, using the Wirtinger derivatives
/// ∂f = (f_x − i·f_y)/2 and ∂̄f = (f_x + i·f_y)/2.
pub fn beltrami_finite_difference<F: Fn(Complex64) -> Complex64>(
    f: F,
    z: Complex64,
    step: f64,
) -> Complex64 {
    let i = Complex64::i();
    let fx = (f(z + step) - f(z - step)) / (2.0 * step);
    let fy = (f(z + i * step) - f(z - i * step)) / (2.0 * step);
    let dz = 0.5 * (fx - i * fy);
    let dzbar = 0.5 * (fx + i * fy);
    dzbar / dz
}

/// One generation of radial stretches on pairwise disjoint support disks.
#[derive(Debug, Clone)]
pub struct MultiStretch {
    stretches: Vec<RadialStretch>,
    supports: Vec<Disk>,
    index: SpatialIndex,
}

impl MultiStretch {
    /// Builds the generation, verifying that the open support disks are
    /// pairwise disjoint (tangency allowed).
    pub fn new(stretches: Vec<RadialStretch>) -> Result<Self, MapError> {
        let supports: Vec<Disk> = stretches.iter().map(|s| s.support()).collect();
        let max_r = supports.iter().fold(0.0f64, |m, d| m.max(d.radius));
        let mut index = SpatialIndex::build(&supports, max_r);
        for (i, d) in supports.iter().enumerate() {
            for &j in index.candidates_near(d.center) {
                let j = j as usize;
                if j <= i {
                    continue;
                }
                let other = &supports[j];
                if (d.center - other.center).norm() - (d.radius + other.radius) < -1e-12 {
                    return Err(MapError::Overlap { i, j });
                }
            }
        }
        Ok(MultiStretch { stretches, supports, index })
    }

    pub fn len(&self) -> usize {
        self.stretches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stretches.is_empty()
    }

    pub fn stretches(&self) -> &[RadialStretch] {
        &self.stretches
    }

    /// Index of the stretch whose open support contains z, if any.
    pub fn find(&self, z: Complex64) -> Option<usize> {
        self.index.find_containing(&self.supports, z)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        match self.find(z) {
            Some(i) => self.stretches[i].eval(z),
            None => z,
        }
    }

    /// Each stretch maps its support disk onto itself, so the inverse is
    /// located with the same support index.
    pub fn eval_inverse(&self, w: Complex64) -> Complex64 {
        match self.find(w) {
            Some(i) => self.stretches[i].eval_inverse(w),
            None => w,
        }
    }

    pub fn beltrami(&self, z: Complex64) -> Result<Complex64, MapError> {
        if let Some(i) = self.find(z) {
            return self.stretches[i].beltrami(z);
        }
        // z may still sit exactly on some support circle, which is an
        // interface of that stretch.
        for s in &self.stretches {
            if (z - s.center()).norm() == s.outer_radius() {
                return Err(MapError::OnInterface { rho: s.outer_radius() });
            }
        }
        Ok(Complex64::new(0.0, 0.0))
    }

    /// Largest dilatation among the stretches (1 for an empty generation).
    pub fn max_dilatation(&self) -> f64 {
        self.stretches.iter().fold(1.0f64, |m, s| m.max(s.dilatation()))
    }
}

/// A composition g_N ∘ … ∘ g_1 of multi-stretch generations; `eval` applies
/// the layers in storage order (layer 0 first).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(try_from = "ComposedSpec", into = "ComposedSpec")]
pub struct ComposedQcMap {
    layers: Vec<MultiStretch>,
}

impl ComposedQcMap {
    pub fn new(layers: Vec<MultiStretch>) -> Self {
        ComposedQcMap { layers }
    }

    pub fn identity() -> Self {
        ComposedQcMap { layers: Vec::new() }
    }

    pub fn push_layer(&mut self, layer: MultiStretch) {
        self.layers.push(layer);
    }

    pub fn layers(&self) -> &[MultiStretch] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn stretch_count(&self) -> usize {
        self.layers.iter().map(|l| l.len()).sum()
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.layers.iter().fold(z, |w, layer| layer.eval(w))
    }

    pub fn eval_inverse(&self, w: Complex64) -> Complex64 {
        self.layers.iter().rev().fold(w, |z, layer| layer.eval_inverse(z))
    }

    /// Product of per-layer maximal dilatations: an upper bound for the
    /// dilatation of the composition (and exact when the stretched annuli
    /// are nested through the generations).
    pub fn dilatation_bound(&self) -> f64 {
        self.layers.iter().map(|l| l.max_dilatation()).product()
    }
}

/// Wire shape of one radial stretch.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StretchSpec {
    center: [f64; 2],
    r: f64,
    sigma: f64,
    #[serde(rename = "K")]
    k: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComposedSpec {
    layers: Vec<Vec<StretchSpec>>,
}

impl TryFrom<ComposedSpec> for ComposedQcMap {
    type Error = MapError;

    fn try_from(spec: ComposedSpec) -> Result<Self, MapError> {
        let mut layers = Vec::with_capacity(spec.layers.len());
        for layer in spec.layers {
            let stretches = layer
                .into_iter()
                .map(|s| {
                    RadialStretch::new(Complex64::new(s.center[0], s.center[1]), s.r, s.sigma, s.k)
                })
                .collect::<Result<Vec<_>, _>>()?;
            layers.push(MultiStretch::new(stretches)?);
        }
        Ok(ComposedQcMap { layers })
    }
}

impl From<ComposedQcMap> for ComposedSpec {
    fn from(map: ComposedQcMap) -> ComposedSpec {
        ComposedSpec {
            layers: map
                .layers
                .iter()
                .map(|layer| {
                    layer
                        .stretches()
                        .iter()
                        .map(|s| StretchSpec {
                            center: [s.center().re, s.center().im],
                            r: s.outer_radius(),
                            sigma: s.inner_ratio(),
                            k: s.dilatation(),
                        })
                        .collect()
                })
                .collect(),
        }
    }
}
