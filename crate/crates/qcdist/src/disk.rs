//! Disks, finite disk families, and a uniform spatial grid for point
//! location among many disjoint disks.

use num_complex::Complex64;
use std::collections::HashMap;

/// A closed disk D(center, radius) in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub center: Complex64,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: Complex64, radius: f64) -> Self {
        Disk { center, radius }
    }

    /// True when z lies strictly inside the disk.
    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.center).norm_sqr() < self.radius * self.radius
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }
}

/// A finite list of disks, typically one generation of a construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiskFamily {
    pub disks: Vec<Disk>,
}

impl DiskFamily {
    pub fn new(disks: Vec<Disk>) -> Self {
        DiskFamily { disks }
    }

    /// All disks share one radius; the common case for a construction level.
    pub fn uniform(centers: &[Complex64], radius: f64) -> Self {
        DiskFamily { disks: centers.iter().map(|&c| Disk::new(c, radius)).collect() }
    }

    pub fn len(&self) -> usize {
        self.disks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.disks.is_empty()
    }

    pub fn centers(&self) -> Vec<Complex64> {
        self.disks.iter().map(|d| d.center).collect()
    }

    /// Checks pairwise disjointness of the open disks, up to `slack` overlap
    /// to absorb floating-point noise in center arithmetic. Grid-accelerated,
    /// so it stays usable for 10⁶ disks.
    pub fn is_disjoint(&self, slack: f64) -> bool {
        if self.disks.len() < 2 {
            return true;
        }
        let max_r = self.disks.iter().fold(0.0f64, |m, d| m.max(d.radius));
        let mut index = SpatialIndex::build(&self.disks, max_r);
        for (i, d) in self.disks.iter().enumerate() {
            for &j in index.candidates_near(d.center) {
                let j = j as usize;
                if j <= i {
                    continue;
                }
                let other = &self.disks[j];
                let gap =
                    (d.center - other.center).norm() - (d.radius + other.radius);
                if gap < -slack {
                    return false;
                }
            }
        }
        true
    }

    /// True when every disk satisfies |center| + radius <= 1 + slack, i.e.
    /// the family sits inside the closed unit disk.
    pub fn inside_unit_disk(&self, slack: f64) -> bool {
        self.disks.iter().all(|d| d.center.norm() + d.radius <= 1.0 + slack)
    }
}

/// Uniform-grid index over disk centers. Cell size is 2·max radius, so any
/// two overlapping disks, and any point together with every disk containing
/// it, land in the same or adjacent cells.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<u32>>,
    scratch: Vec<u32>,
}

impl SpatialIndex {
    pub fn build(disks: &[Disk], max_radius: f64) -> Self {
        let cell = (2.0 * max_radius).max(f64::MIN_POSITIVE);
        let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, d) in disks.iter().enumerate() {
            buckets.entry(Self::key(d.center, cell)).or_default().push(i as u32);
        }
        SpatialIndex { cell, buckets, scratch: Vec::new() }
    }

    fn key(z: Complex64, cell: f64) -> (i64, i64) {
        ((z.re / cell).floor() as i64, (z.im / cell).floor() as i64)
    }

    /// Indices of all disks whose center lies in the 3×3 cell block around z.
    /// Order is sorted, so downstream iteration is deterministic.
    pub fn candidates_near(&mut self, z: Complex64) -> &[u32] {
        let (kx, ky) = Self::key(z, self.cell);
        self.scratch.clear();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.buckets.get(&(kx + dx, ky + dy)) {
                    self.scratch.extend_from_slice(ids);
                }
            }
        }
        self.scratch.sort_unstable();
        &self.scratch
    }

    /// Index of the disk in `disks` that strictly contains z, if any.
    /// Assumes the indexed family is pairwise disjoint.
    pub fn find_containing(&self, disks: &[Disk], z: Complex64) -> Option<usize> {
        let (kx, ky) = Self::key(z, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.buckets.get(&(kx + dx, ky + dy)) {
                    for &i in ids {
                        if disks[i as usize].contains(z) {
                            return Some(i as usize);
                        }
                    }
                }
            }
        }
        None
    }
}
