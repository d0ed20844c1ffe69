//! Quasiconformal distortion of Hausdorff contents.
//!
//! This crate implements the computational side of a circle of results about
//! how planar K-quasiconformal maps distort Hausdorff measures and contents:
//!
//! * [`gauge`] — dimension gauges h(t) = t^d ε(t) with slowly-varying
//!   corrections ε, and Dini-type convergence tests for integrals
//!   ∫₀ ε(t)^p dt/t.
//! * [`qc_maps`] — piecewise-defined radial stretch maps (the basic building
//!   block of quasiconformal examples), their inverses, Beltrami
//!   coefficients, and compositions across generations of a construction.
//! * [`cantor`] — self-similar trees of disjoint disks packed inside the unit
//!   disk, normalized so that a prescribed covering sum equals one at every
//!   generation, together with the source/image bookkeeping of the stretch
//!   maps acting on them.
//! * [`dimension`] — the dimension-distortion algebra t ↦ 2Kt/(2+(K−1)t),
//!   box-counting estimates, and covering-sum decay fits.
//! * [`carleson`] — dyadic Carleson squares on the unit disk, boundary disk
//!   families, integral means of derivatives of analytic test maps, and the
//!   classical bound calculators (integral means spectrum, harmonic measure
//!   compression) they feed.
//! * [`cli`] — configuration, artifact writing, and the runners behind the
//!   `qcdist` binary.

// Parameter guards are written `!(x >= lo)` on purpose: the negated form is
// also true for NaN, so non-numbers fail validation instead of slipping by.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod carleson;
pub mod cantor;
pub mod cli;
pub mod dimension;
pub mod disk;
pub mod fit;
pub mod gauge;
pub mod qc_maps;
pub mod solver;

pub use disk::{Disk, DiskFamily};
pub use gauge::{DiniTest, DiniVerdict, EpsFamily, GaugeFunction};
pub use qc_maps::{ComposedQcMap, MultiStretch, RadialStretch};
