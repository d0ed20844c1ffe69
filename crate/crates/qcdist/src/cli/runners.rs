//! Command implementations. Every command computes all of its results
//! first and only then hands a complete artifact set back to the driver,
//! so a failing run never leaves partial output behind.

use crate::cantor::{CantorTree, Normalization, Side};
use crate::carleson::{
    self, beta_estimate, extendable_means_bound, integral_means, kappa, makarov_bound,
    quasicircle_bounds, rotation_means_bound, BetaEstimate, IntegralMean, QuasicircleBounds,
};
use crate::dimension::{
    box_dimension, content_critical_exponent, content_sum_fit, distortion, distortion_inverse,
    verify_content_inequality, ContentFit, CriticalExponent, DimensionError, DimensionReport,
    InequalityReport,
};
use crate::gauge::GaugeFunction;
use num_complex::Complex64;
use serde::Serialize;
use std::fmt::Write as _;

use super::config::RunConfig;
use super::CliError;

/// Disk budget for the SVG rendering.
const SVG_MAX_DISKS: f64 = 4096.0;

/// Disk budget for box-counting point clouds.
const BOX_POINT_BUDGET: f64 = 200_000.0;

/// Disk budget for the materialized boundary check in `verify`.
const MATERIALIZE_BUDGET: f64 = 100_000.0;

/// Residual gate for the normalization identities.
const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Gate for composed-map versus similarity-copy agreement.
const MAP_TOLERANCE: f64 = 1e-9;

/// A set of named artifacts, rendered in memory.
pub struct ArtifactSet {
    pub files: Vec<(String, Vec<u8>)>,
    pub notes: Vec<String>,
}

impl ArtifactSet {
    fn new() -> Self {
        ArtifactSet { files: Vec::new(), notes: Vec::new() }
    }

    fn push_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| CliError::Internal(format!("cannot serialize {name}: {e}")))?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    fn push_text(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text.into_bytes()));
    }
}

#[derive(Serialize)]
struct LevelDump {
    level: usize,
    m: usize,
    m_requested: usize,
    radius: f64,
    sigma: f64,
    density: f64,
    residual: f64,
    source_radius: f64,
    image_radius: f64,
    centers: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct TreeDump<'a> {
    dilatation: f64,
    gauge: &'a GaugeFunction,
    normalization: &'static str,
    node_cap: u64,
    depth: usize,
    levels: Vec<LevelDump>,
}

fn dump_tree(tree: &CantorTree) -> Result<TreeDump<'_>, CliError> {
    let mut levels = Vec::with_capacity(tree.depth());
    for n in 1..=tree.depth() {
        let lvl = tree.level(n)?;
        levels.push(LevelDump {
            level: n,
            m: lvl.m,
            m_requested: lvl.m_requested,
            radius: lvl.radius,
            sigma: lvl.sigma,
            density: lvl.density,
            residual: lvl.residual,
            source_radius: tree.source_radius(n)?,
            image_radius: tree.image_radius(n)?,
            centers: lvl.centers.iter().map(|c| [c.re, c.im]).collect(),
        });
    }
    Ok(TreeDump {
        dilatation: tree.dilatation(),
        gauge: tree.gauge(),
        normalization: match tree.normalization() {
            Normalization::SourceGauge => "source",
            Normalization::ImageGauge(_) => "image_length",
        },
        node_cap: tree.node_cap(),
        depth: tree.depth(),
        levels,
    })
}

fn levels_csv(tree: &CantorTree) -> String {
    let mut csv = String::from(
        "level,m,m_requested,radius,sigma,density,source_radius,image_radius,primary_residual,dual_residual,epsilon_prime\n",
    );
    for row in tree.normalization_report() {
        let m_requested = tree.level(row.level).map(|l| l.m_requested).unwrap_or(row.m);
        let dual = row.dual_residual.map(|v| v.to_string()).unwrap_or_default();
        let eps = row.epsilon_prime.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.level,
            row.m,
            m_requested,
            row.radius,
            row.sigma,
            row.density,
            row.source_radius,
            row.image_radius,
            row.primary_residual,
            dual,
            eps
        );
    }
    csv
}

fn svg_push_circle(svg: &mut String, center: Complex64, radius: f64, stroke: &str) {
    let cx = 500.0 + 500.0 * center.re;
    let cy = 500.0 - 500.0 * center.im;
    let _ = writeln!(
        svg,
        r#"  <circle cx="{:.6}" cy="{:.6}" r="{:.6}" fill="none" stroke="{}" stroke-width="0.8"/>"#,
        cx,
        cy,
        500.0 * radius,
        stroke
    );
}

/// Deepest generation whose disk count stays within `budget` (and the node
/// cap); 0 when even the first generation does not fit.
fn deepest_within(tree: &CantorTree, budget: f64) -> usize {
    let cap = (tree.node_cap() as f64).min(budget);
    let mut level = 0;
    let mut count = 1.0;
    for n in 1..=tree.depth() {
        count *= tree.level(n).map(|l| l.m as f64).unwrap_or(f64::INFINITY);
        if count > cap {
            break;
        }
        level = n;
    }
    level
}

fn disks_svg(tree: &CantorTree, svg_level: Option<usize>) -> Result<String, CliError> {
    let level = match svg_level {
        Some(n) => {
            if n == 0 || n > tree.depth() {
                return Err(CliError::Config(format!(
                    "svg_level {n} outside the built depth {}",
                    tree.depth()
                )));
            }
            n
        }
        None => deepest_within(tree, SVG_MAX_DISKS),
    };
    let mut svg = String::new();
    svg.push_str(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1000 1000\" width=\"1000\" height=\"1000\">\n",
    );
    svg_push_circle(&mut svg, Complex64::new(0.0, 0.0), 1.0, "#000000");
    for n in 1..=level {
        let source = tree.source_disks(n)?;
        for disk in &source.disks {
            svg_push_circle(&mut svg, disk.center, disk.radius, "#1f77b4");
        }
        let image = tree.image_disks(n)?;
        for disk in &image.disks {
            svg_push_circle(&mut svg, disk.center, disk.radius, "#d62728");
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn construction_artifacts(
    tree: &CantorTree,
    svg_level: Option<usize>,
) -> Result<ArtifactSet, CliError> {
    let mut artifacts = ArtifactSet::new();
    artifacts.push_json("tree.json", &dump_tree(tree)?)?;
    artifacts.push_json("normalization.json", &tree.normalization_report())?;
    artifacts.push_text("levels.csv", levels_csv(tree));
    artifacts.push_text("disks.svg", disks_svg(tree, svg_level)?);
    artifacts.notes.push(format!(
        "built {} levels, deepest source radius {:e}",
        tree.depth(),
        tree.source_radius(tree.depth())?
    ));
    Ok(artifacts)
}

/// `construct`: build the tree and write its bookkeeping artifacts.
pub fn cmd_construct(config: &RunConfig) -> Result<ArtifactSet, CliError> {
    let section = config.construction()?;
    let tree = section.build_tree()?;
    construction_artifacts(&tree, section.svg_level)
}

#[derive(Serialize)]
struct CriticalDump {
    found: bool,
    note: Option<String>,
    result: Option<CriticalExponent>,
}

fn critical_dump(tree: &CantorTree, side: Side, grid: &[f64]) -> CriticalDump {
    match content_critical_exponent(tree, side, grid) {
        Ok(result) => CriticalDump { found: true, note: None, result: Some(result) },
        Err(e) => CriticalDump { found: false, note: Some(e.to_string()), result: None },
    }
}

#[derive(Serialize)]
struct DimensionDump {
    level: usize,
    points: usize,
    box_scales: Vec<f64>,
    source: DimensionReport,
    image: DimensionReport,
}

#[derive(Serialize)]
struct ContentDump {
    exponent: f64,
    source_fit: ContentFit,
    image_fit: ContentFit,
    t_grid: Vec<f64>,
    source_critical: CriticalDump,
    image_critical: CriticalDump,
}

#[derive(Serialize)]
struct InequalityDump {
    applies: bool,
    note: Option<String>,
    report: Option<InequalityReport>,
}

fn analysis_artifacts(
    tree: &CantorTree,
    analysis: &super::config::AnalysisConfig,
    seed: u64,
) -> Result<ArtifactSet, CliError> {
    let level = match analysis.box_level {
        Some(n) => {
            if n == 0 || n > tree.depth() {
                return Err(CliError::Config(format!(
                    "box_level {n} outside the built depth {}",
                    tree.depth()
                )));
            }
            n
        }
        None => {
            let deepest = deepest_within(tree, BOX_POINT_BUDGET);
            if deepest == 0 {
                return Err(CliError::Config(
                    "first generation already exceeds the box-counting budget; set box_level"
                        .to_string(),
                ));
            }
            deepest
        }
    };
    let j_lo = analysis.box_dyadic_min.unwrap_or(3);
    let j_hi = analysis.box_dyadic_max.unwrap_or(8);
    if j_lo < 1 || j_hi < j_lo {
        return Err(CliError::Config(format!(
            "box scale range needs 1 <= box_dyadic_min <= box_dyadic_max, got {j_lo}..{j_hi}"
        )));
    }
    let scales: Vec<f64> = (j_lo..=j_hi).map(|j| 2f64.powi(-(j as i32))).collect();

    let source_points: Vec<Complex64> =
        tree.source_disks(level)?.disks.iter().map(|d| d.center).collect();
    let image_points: Vec<Complex64> =
        tree.image_disks(level)?.disks.iter().map(|d| d.center).collect();
    let source_report = box_dimension(&source_points, &scales, seed)?;
    let image_report = box_dimension(&image_points, &scales, seed)?;

    let exponent = analysis.content_exponent.unwrap_or(1.0);
    let source_fit = content_sum_fit(tree, Side::Source, exponent, tree.depth())?;
    let image_fit = content_sum_fit(tree, Side::Image, exponent, tree.depth())?;
    let grid = match analysis.t_grid {
        Some(g) => g.values()?,
        None => (1..=39).map(|i| 0.05 * i as f64).collect(),
    };
    let source_critical = critical_dump(tree, Side::Source, &grid);
    let image_critical = critical_dump(tree, Side::Image, &grid);

    let inequality = match verify_content_inequality(tree) {
        Ok(report) => InequalityDump { applies: true, note: None, report: Some(report) },
        Err(DimensionError::UnsupportedGauge { reason }) => {
            InequalityDump { applies: false, note: Some(reason), report: None }
        }
        Err(e) => return Err(e.into()),
    };

    let mut artifacts = ArtifactSet::new();
    artifacts.push_json(
        "dimension.json",
        &DimensionDump {
            level,
            points: source_points.len(),
            box_scales: scales,
            source: source_report,
            image: image_report,
        },
    )?;
    artifacts.push_json(
        "content.json",
        &ContentDump {
            exponent,
            source_fit,
            image_fit,
            t_grid: grid,
            source_critical,
            image_critical,
        },
    )?;
    artifacts.push_json("inequality.json", &inequality)?;
    Ok(artifacts)
}

/// `analyze`: measure box dimensions, content decay, critical exponents,
/// and (when the gauge qualifies) the content inequality.
pub fn cmd_analyze(config: &RunConfig) -> Result<ArtifactSet, CliError> {
    let section = config.construction()?;
    let analysis = config.analysis.clone().unwrap_or_default();
    let tree = section.build_tree()?;
    analysis_artifacts(&tree, &analysis, config.seed())
}

#[derive(Serialize)]
struct BoundsDump {
    dilatation: f64,
    kappa: f64,
    rotation_means: f64,
    extendable_means: Option<f64>,
    extendable_note: Option<String>,
    quasicircle: QuasicircleBounds,
}

#[derive(Serialize)]
struct BetaDump<'a> {
    map: String,
    p: f64,
    j_min: u32,
    j_max: u32,
    estimate: &'a BetaEstimate,
    bounds: Option<BoundsDump>,
}

/// `means`: circle means along a dyadic ladder plus the fitted spectrum
/// slope and, optionally, the closed-form bounds to compare against.
pub fn cmd_means(config: &RunConfig) -> Result<ArtifactSet, CliError> {
    let section = config.means()?;
    let map = section.map.build()?;
    let j_lo = section.j_min.unwrap_or(6);
    let j_hi = section.j_max.unwrap_or(12);
    let mut radii: Vec<f64> = (j_lo..=j_hi).map(|j| 1.0 - 2f64.powi(-(j as i32))).collect();
    if let Some(extra) = &section.radii {
        for &r in extra {
            if !(r > 0.0 && r < 1.0) {
                return Err(CliError::Config(format!("means radius {r} outside (0, 1)")));
            }
            radii.push(r);
        }
    }
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    radii.dedup();

    use rayon::prelude::*;
    let rows: Vec<Result<IntegralMean, carleson::CarlesonError>> =
        radii.par_iter().map(|&r| integral_means(&map, section.p, r)).collect();
    let mut csv = String::from("p,r,value,nodes,rel_change\n");
    for row in rows {
        let row = row?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            row.p, row.r, row.value, row.nodes, row.rel_change
        );
    }

    let estimate = beta_estimate(&map, section.p, j_lo, j_hi)?;
    let bounds = match section.compare_dilatation {
        Some(k) => {
            let (extendable, note) = match extendable_means_bound(k, section.p) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            };
            Some(BoundsDump {
                dilatation: k,
                kappa: kappa(k)?,
                rotation_means: rotation_means_bound(k, section.p)?,
                extendable_means: extendable,
                extendable_note: note,
                quasicircle: quasicircle_bounds(k)?,
            })
        }
        None => None,
    };

    let mut artifacts = ArtifactSet::new();
    artifacts.push_text("means.csv", csv);
    artifacts.push_json(
        "beta.json",
        &BetaDump {
            map: section.map.describe(),
            p: section.p,
            j_min: j_lo,
            j_max: j_hi,
            estimate: &estimate,
            bounds,
        },
    )?;
    artifacts.notes.push(format!(
        "beta({}) = {:.6} over r = 1-2^-{}..1-2^-{}",
        section.p, estimate.beta, j_lo, j_hi
    ));
    Ok(artifacts)
}

#[derive(Serialize)]
struct DistortionRow {
    t: f64,
    distorted: f64,
    round_trip: f64,
}

#[derive(Serialize)]
struct MakarovDump {
    dim: f64,
    q: f64,
    beta: f64,
    bound: f64,
}

#[derive(Serialize)]
struct FormulasDump {
    dilatation: f64,
    kappa: f64,
    /// Source exponent carried to image exponent 1: 2/(K+1).
    length_critical_exponent: f64,
    distortion_table: Vec<DistortionRow>,
    rotation_means_at_p2: f64,
    extendable_means_at_p2: f64,
    quasicircle: QuasicircleBounds,
    makarov: Option<MakarovDump>,
}

/// `formulas`: closed-form distortion table and bounds for one dilatation.
pub fn cmd_formulas(
    dilatation: f64,
    exponents: &[f64],
    makarov: Option<(f64, f64, f64)>,
) -> Result<(ArtifactSet, String), CliError> {
    let mut table = Vec::with_capacity(exponents.len());
    for &t in exponents {
        let distorted = distortion(t, dilatation)?;
        let round_trip = distortion_inverse(distorted, dilatation)?;
        table.push(DistortionRow { t, distorted, round_trip });
    }
    let makarov = match makarov {
        Some((dim, q, beta)) => {
            Some(MakarovDump { dim, q, beta, bound: makarov_bound(dim, q, beta)? })
        }
        None => None,
    };
    let dump = FormulasDump {
        dilatation,
        kappa: kappa(dilatation)?,
        length_critical_exponent: 2.0 / (dilatation + 1.0),
        distortion_table: table,
        rotation_means_at_p2: rotation_means_bound(dilatation, 2.0)?,
        // p = 2 always sits inside the admissible window |p| <= 2/kappa.
        extendable_means_at_p2: extendable_means_bound(dilatation, 2.0)?,
        quasicircle: quasicircle_bounds(dilatation)?,
        makarov,
    };
    let mut text = String::new();
    let _ = writeln!(text, "dilatation K = {}", dump.dilatation);
    let _ = writeln!(text, "kappa = (K-1)/(K+1) = {}", dump.kappa);
    let _ = writeln!(text, "length critical exponent 2/(K+1) = {}", dump.length_critical_exponent);
    let _ = writeln!(
        text,
        "quasicircle dimension: upper 1+37k^2 = {}, conjectured 1+k^2 = {}, reference 1+0.69k^2 = {}",
        dump.quasicircle.upper, dump.quasicircle.conjectured, dump.quasicircle.observed_reference
    );
    let _ = writeln!(text, "rotation means bound at p = 2: {}", dump.rotation_means_at_p2);
    let _ = writeln!(text, "extendable means bound at p = 2: {}", dump.extendable_means_at_p2);
    if let Some(mk) = &dump.makarov {
        let _ = writeln!(
            text,
            "boundary compression bound (dim {}, q {}, beta {}) = {}",
            mk.dim, mk.q, mk.beta, mk.bound
        );
    }
    let _ = writeln!(text, "{:>8} {:>20} {:>20}", "t", "distorted", "round_trip");
    for row in &dump.distortion_table {
        let _ = writeln!(text, "{:>8.4} {:>20.15} {:>20.15}", row.t, row.distorted, row.round_trip);
    }
    let mut artifacts = ArtifactSet::new();
    artifacts.push_json("formulas.json", &dump)?;
    Ok((artifacts, text))
}

#[derive(Serialize)]
struct NormalizationCheck {
    levels: usize,
    max_primary_residual: f64,
    max_dual_residual: Option<f64>,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct MapCheck {
    samples: usize,
    max_error: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct MaterializedCheck {
    level: usize,
    disks_checked: usize,
    max_error: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct EpsilonBoundCheck {
    levels_checked: usize,
    max_ratio: f64,
    pass: bool,
}

#[derive(Serialize)]
struct ShrinkCheck {
    all_ok: bool,
}

#[derive(Serialize)]
struct InequalityCheck {
    max_rel_deviation: f64,
    variation: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerifySummary {
    normalization: NormalizationCheck,
    map_consistency: MapCheck,
    materialized_boundary: Option<MaterializedCheck>,
    epsilon_prime_bound: EpsilonBoundCheck,
    shrink_rule: Option<ShrinkCheck>,
    content_inequality: Option<InequalityCheck>,
    pass: bool,
}

/// `verify`: one run of the full pipeline — construction artifacts,
/// analysis reports, and a summary gating the defining identities.
pub fn cmd_verify(config: &RunConfig) -> Result<(ArtifactSet, bool), CliError> {
    let section = config.construction()?;
    let analysis = config.analysis.clone().unwrap_or_default();
    let tree = section.build_tree()?;
    let seed = config.seed();
    let depth = tree.depth();

    let rows = tree.normalization_report();
    let max_primary =
        rows.iter().map(|r| r.primary_residual).fold(0.0f64, f64::max);
    let duals: Vec<f64> = rows.iter().filter_map(|r| r.dual_residual).collect();
    let max_dual = duals.iter().copied().fold(f64::NAN, f64::max);
    let normalization = NormalizationCheck {
        levels: depth,
        max_primary_residual: max_primary,
        max_dual_residual: if duals.is_empty() { None } else { Some(max_dual) },
        tolerance: RESIDUAL_TOLERANCE,
        pass: max_primary <= RESIDUAL_TOLERANCE
            && (duals.is_empty() || max_dual <= RESIDUAL_TOLERANCE),
    };

    let consistency = tree.verify_map_consistency(depth, 200, seed)?;
    let map_consistency = MapCheck {
        samples: consistency.samples,
        max_error: consistency.max_error,
        tolerance: MAP_TOLERANCE,
        pass: consistency.max_error <= MAP_TOLERANCE,
    };

    let materialized_boundary = {
        let level = deepest_within(&tree, MATERIALIZE_BUDGET);
        if level >= 1 {
            let map = tree.composed_map(level)?;
            let source = tree.source_disks(level)?;
            let image = tree.image_disks(level)?;
            let s_n = tree.source_radius(level)?;
            let t_n = tree.image_radius(level)?;
            let step = (source.len() / 50).max(1);
            let mut max_error = 0.0f64;
            let mut checked = 0;
            for i in (0..source.len()).step_by(step) {
                for angle in 0..8 {
                    let theta = std::f64::consts::TAU * angle as f64 / 8.0;
                    let w = Complex64::from_polar(1.0, theta);
                    let z = source.disks[i].center + s_n * w;
                    let expected = image.disks[i].center + t_n * w;
                    max_error = max_error.max((map.eval(z) - expected).norm());
                }
                checked += 1;
            }
            Some(MaterializedCheck {
                level,
                disks_checked: checked,
                max_error,
                tolerance: MAP_TOLERANCE,
                pass: max_error <= MAP_TOLERANCE,
            })
        } else {
            None
        }
    };

    let mut eps_levels = 0;
    let mut eps_max_ratio = 0.0f64;
    for n in 1..=depth {
        if let Ok((lhs, rhs)) = tree.epsilon_prime_bound(n) {
            eps_levels += 1;
            eps_max_ratio = eps_max_ratio.max(lhs / rhs);
        }
    }
    let epsilon_prime_bound = EpsilonBoundCheck {
        levels_checked: eps_levels,
        max_ratio: eps_max_ratio,
        pass: eps_levels == depth && eps_max_ratio <= 1.0 + 1e-12,
    };

    let shrink_rule = rows
        .iter()
        .filter_map(|r| r.shrink)
        .fold(None, |acc: Option<bool>, s| Some(acc.unwrap_or(true) && s.ok))
        .map(|all_ok| ShrinkCheck { all_ok });

    let content_inequality = match verify_content_inequality(&tree) {
        Ok(report) => {
            let k = tree.dilatation();
            let mut dens = 1.0f64;
            let mut max_rel = 0.0f64;
            for row in &report.rows {
                dens *= tree.level(row.level)?.density;
                let closed = 2f64.powf(1.0 - 1.0 / k) * dens.powf((k - 1.0) / (2.0 * k));
                max_rel = max_rel.max((row.ratio - closed).abs() / closed);
            }
            Some(InequalityCheck {
                max_rel_deviation: max_rel,
                variation: report.variation,
                pass: max_rel <= 1e-6,
            })
        }
        Err(DimensionError::UnsupportedGauge { .. }) => None,
        Err(e) => return Err(e.into()),
    };

    let pass = normalization.pass
        && map_consistency.pass
        && materialized_boundary.as_ref().is_none_or(|c| c.pass)
        && epsilon_prime_bound.pass
        && shrink_rule.as_ref().is_none_or(|s| s.all_ok)
        && content_inequality.as_ref().is_none_or(|c| c.pass);

    let summary = VerifySummary {
        normalization,
        map_consistency,
        materialized_boundary,
        epsilon_prime_bound,
        shrink_rule,
        content_inequality,
        pass,
    };
    let mut artifacts = construction_artifacts(&tree, section.svg_level)?;
    let reports = analysis_artifacts(&tree, &analysis, seed)?;
    artifacts.files.extend(reports.files);
    artifacts.notes.extend(reports.notes);
    artifacts.push_json("verify_summary.json", &summary)?;
    artifacts.notes.push(format!("verification {}", if pass { "passed" } else { "FAILED" }));
    Ok((artifacts, pass))
}
