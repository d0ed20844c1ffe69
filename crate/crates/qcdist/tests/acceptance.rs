//! Acceptance gates for the whole crate: eight end-to-end criteria, each
//! printing one pass/fail line. Tolerances are pinned next to each check.

use num_complex::Complex64;
use qcdist::cantor::{CantorTree, Normalization, TreeConfig};
use qcdist::carleson::{beta_estimate, integral_means, AnalyticTestMap};
use qcdist::dimension::{
    box_dimension, content_critical_exponent, distortion, distortion_inverse, four_corner_dust,
    verify_content_inequality,
};
use qcdist::qc_maps::beltrami_finite_difference;
use qcdist::{DiniVerdict, GaugeFunction, RadialStretch};
use qcdist::cantor::Side;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Prints the single pass/fail line for a criterion, then enforces it.
fn report(name: &str, pass: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn power_tree(k: f64, d: f64, ms: &[usize], node_cap: u64) -> CantorTree {
    let mut config = TreeConfig::new(k, GaugeFunction::power(d).unwrap());
    config.node_cap = node_cap;
    CantorTree::build(config, ms).unwrap()
}

#[test]
fn c1_distortion_algebra() {
    const ROUND_TRIP_TOL: f64 = 1e-12;
    let k_grid = [1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 10.0];

    let mut exact_at_critical = true;
    for &k in &k_grid {
        let t_star = 2.0 / (k + 1.0);
        // Bit-exact: the grouped evaluation makes numerator and denominator
        // land on the same double at the critical exponent.
        exact_at_critical &= distortion(t_star, k).unwrap() == 1.0;
    }

    let mut identity_exact = true;
    for i in 0..=100 {
        let t = 2.0 * i as f64 / 100.0;
        identity_exact &= distortion(t, 1.0).unwrap() == t;
    }

    // 100-point (t, K) grid: t interior to (0, 2), K = 1..10.
    let mut max_round_trip = 0.0f64;
    for i in 1..=10 {
        let t = 2.0 * i as f64 / 11.0;
        for j in 0..10 {
            let k = 1.0 + j as f64;
            let fwd = distortion(t, k).unwrap();
            let back = distortion_inverse(fwd, k).unwrap();
            max_round_trip = max_round_trip.max((back - t).abs());
        }
    }

    let pass = exact_at_critical && identity_exact && max_round_trip <= ROUND_TRIP_TOL;
    report(
        "C1 distortion algebra",
        pass,
        &format!(
            "critical value exact: {exact_at_critical}, K=1 identity exact: {identity_exact}, \
             round-trip max |err| = {max_round_trip:.3e} (tol {ROUND_TRIP_TOL:e})"
        ),
    );
}

#[test]
fn c2_map_correctness() {
    const INTERFACE_TOL: f64 = 1e-12;
    const BELTRAMI_TOL: f64 = 1e-4;
    const ANGLES: usize = 10_000;
    const POINTS: usize = 100_000;
    const FD_STEP: f64 = 1e-7;

    let mut max_jump = 0.0f64;
    let mut max_mu_err = 0.0f64;
    for (i, &k) in [1.0, 1.5, 2.0, 3.0].iter().enumerate() {
        let stretch =
            RadialStretch::new(Complex64::new(0.15, -0.4), 0.8, 0.37, k).unwrap();
        let kappa = (k - 1.0) / (k + 1.0);

        // Interface continuity: evaluate a few ulps on either side of both
        // branch interfaces; any formula mismatch would appear as a jump.
        let nudge = 4.0 * f64::EPSILON;
        for j in 0..ANGLES {
            let theta = std::f64::consts::TAU * j as f64 / ANGLES as f64;
            let dir = Complex64::from_polar(1.0, theta);
            for rho in [stretch.inner_radius(), stretch.outer_radius()] {
                let just_in = stretch.eval(stretch.center() + dir * rho * (1.0 - nudge));
                let just_out = stretch.eval(stretch.center() + dir * rho * (1.0 + nudge));
                max_jump = max_jump.max((just_in - just_out).norm());
            }
        }

        // Finite-difference Beltrami modulus over random points: kappa
        // inside the annulus, zero elsewhere. Points too close to an
        // interface (where one-sided derivatives differ) are redrawn.
        let mut rng = ChaCha8Rng::seed_from_u64(40 + i as u64);
        let clearance = 1e3 * FD_STEP;
        let mut kept = 0;
        while kept < POINTS {
            let rho = rng.gen::<f64>() * 1.2 * stretch.outer_radius();
            let theta = rng.gen::<f64>() * std::f64::consts::TAU;
            if (rho - stretch.inner_radius()).abs() < clearance
                || (rho - stretch.outer_radius()).abs() < clearance
                || rho < clearance
            {
                continue;
            }
            kept += 1;
            let z = stretch.center() + Complex64::from_polar(rho, theta);
            let fd = beltrami_finite_difference(|w| stretch.eval(w), z, FD_STEP);
            let expected = if rho > stretch.inner_radius() && rho < stretch.outer_radius() {
                kappa
            } else {
                0.0
            };
            max_mu_err = max_mu_err.max((fd.norm() - expected).abs());
        }
    }

    let pass = max_jump <= INTERFACE_TOL && max_mu_err <= BELTRAMI_TOL;
    report(
        "C2 map correctness",
        pass,
        &format!(
            "interface max jump = {max_jump:.3e} (tol {INTERFACE_TOL:e}) over {ANGLES} angles, \
             |mu| max error = {max_mu_err:.3e} (tol {BELTRAMI_TOL:e}) over {POINTS} points x 4 K"
        ),
    );
}

#[test]
fn c3_construction_normalization() {
    const RESIDUAL_TOL: f64 = 1e-8;
    const MAP_TOL: f64 = 1e-9;
    const NODE_CAP: u64 = 1_000_000;
    const M: usize = 15;
    const DEPTH: usize = 5;

    let mut max_residual = 0.0f64;
    let mut max_map_err = 0.0f64;
    for &k in &[1.5, 2.0, 3.0] {
        let d = 2.0 / (k + 1.0);
        let tree = power_tree(k, d, &[M; DEPTH], NODE_CAP);
        for row in tree.normalization_report() {
            max_residual = max_residual.max(row.primary_residual);
        }

        // Branch-local composed-map check on boundary and interior points.
        let consistency = tree.verify_map_consistency(DEPTH, 400, 7).unwrap();
        max_map_err = max_map_err.max(consistency.max_error);

        // Fully materialized composed map (813_615 stretches at m = 15,
        // N = 5, within the node cap): source boundary points must land on
        // the image circles of radius t_N.
        let map = tree.composed_map(DEPTH).unwrap();
        let source = tree.source_disks(DEPTH).unwrap();
        let image = tree.image_disks(DEPTH).unwrap();
        let s_n = tree.source_radius(DEPTH).unwrap();
        let t_n = tree.image_radius(DEPTH).unwrap();
        let stride = source.len() / 40;
        for i in (0..source.len()).step_by(stride) {
            for a in 0..4 {
                let w = Complex64::from_polar(1.0, std::f64::consts::TAU * a as f64 / 4.0);
                let got = map.eval(source.disks[i].center + s_n * w);
                let expected = image.disks[i].center + t_n * w;
                max_map_err = max_map_err.max((got - expected).norm());
            }
        }
    }

    let pass = max_residual <= RESIDUAL_TOL && max_map_err <= MAP_TOL;
    report(
        "C3 construction normalization",
        pass,
        &format!(
            "max per-level residual = {max_residual:.3e} (tol {RESIDUAL_TOL:e}), \
             max boundary map error = {max_map_err:.3e} (tol {MAP_TOL:e}) for K in {{1.5, 2, 3}}, N = {DEPTH}"
        ),
    );
}

#[test]
fn c4_dimension_recovery() {
    const DUST_TOL: f64 = 0.05;
    const SOURCE_TOL: f64 = 0.08;
    const SLACK_LIMIT: f64 = 0.1;
    const SEED: u64 = 11;

    // Four-corner dust: 4 branches at ratio 1/4, dimension exactly 1.
    let dust = four_corner_dust(8).unwrap();
    let dust_scales: Vec<f64> = (2..=7).map(|j| 0.25f64.powi(j)).collect();
    let dust_dim = box_dimension(&dust, &dust_scales, SEED).unwrap().fitted_dimension;
    let dust_err = (dust_dim - 1.0).abs();

    // Self-similar source trees: gauge dimension d = 2/(K+1) is the box
    // dimension; scales aligned with the per-level contraction s_1.
    let mut max_source_err = 0.0f64;
    for &k in &[1.5, 2.0] {
        let d = 2.0 / (k + 1.0);
        let tree = power_tree(k, d, &[6; 6], 10_000_000);
        let s1 = tree.source_radius(1).unwrap();
        let scales: Vec<f64> = (1..=5).map(|j| s1.powi(j)).collect();
        let points: Vec<Complex64> =
            tree.source_disks(6).unwrap().disks.iter().map(|disk| disk.center).collect();
        let fitted = box_dimension(&points, &scales, SEED).unwrap().fitted_dimension;
        max_source_err = max_source_err.max((fitted - d).abs());
    }

    // Image tree: at d = 2/(K+1) the image critical exponent sits at 1 up
    // to the packing-density defect, which shrinks as sigma does. The
    // reported slack is half the grid bracket around the fitted exponent.
    let tree = power_tree(2.0, 2.0 / 3.0, &[500; 6], 10_000_000);
    let sigma = tree.level(1).unwrap().sigma;
    let grid: Vec<f64> = (1..=39).map(|i| 0.05 * i as f64).collect();
    let critical = content_critical_exponent(&tree, Side::Image, &grid).unwrap();
    let slack = (critical.bracket.1 - critical.bracket.0) / 2.0;
    let image_err = (critical.t_star - 1.0).abs();

    let pass = dust_err <= DUST_TOL
        && max_source_err <= SOURCE_TOL
        && sigma <= 0.05
        && image_err <= slack
        && slack < SLACK_LIMIT;
    report(
        "C4 dimension recovery",
        pass,
        &format!(
            "dust |dim-1| = {dust_err:.4} (tol {DUST_TOL}), source max |dim-d| = {max_source_err:.4} \
             (tol {SOURCE_TOL}), image |t*-1| = {image_err:.4} <= slack {slack:.4} < {SLACK_LIMIT} at sigma = {sigma:.4}"
        ),
    );
}

#[test]
fn c5_content_inequality_boundedness() {
    const LEVELS: usize = 6;
    const VARIATION_LIMIT: f64 = 3.0;
    const SLOPE_LIMIT: f64 = 0.05;

    let mut worst_variation = 0.0f64;
    let mut worst_slope = 0.0f64;
    for &(k, m) in &[(1.5, 150usize), (2.0, 1000), (3.0, 5000)] {
        let d = 2.0 / (k + 1.0);
        let tree = power_tree(k, d, &[m; LEVELS], 10_000_000);
        let inequality = verify_content_inequality(&tree).unwrap();
        assert_eq!(inequality.rows.len(), LEVELS);
        let variation = inequality.max_ratio / inequality.min_ratio;
        worst_variation = worst_variation.max(variation);
        worst_slope = worst_slope.max(inequality.growth_slope.abs());
        assert!(inequality.min_ratio > 0.0);
    }

    let pass = worst_variation < VARIATION_LIMIT && worst_slope <= SLOPE_LIMIT;
    report(
        "C5 content inequality boundedness",
        pass,
        &format!(
            "ratio variation max = {worst_variation:.3} (limit {VARIATION_LIMIT}), \
             |growth slope| max = {worst_slope:.4} (limit {SLOPE_LIMIT}) over {LEVELS} levels, K in {{1.5, 2, 3}}"
        ),
    );
}

#[test]
fn c6_integral_means_oracle() {
    const MEAN_REL_TOL: f64 = 1e-6;
    const BETA_TOL: f64 = 0.05;

    // Oracle: the p = 2 circle mean of |1 - z|^{-1} is exactly 1/(1 - r^2).
    let pole = AnalyticTestMap::BoundarySingularity { b: 1.0 };
    let mut max_rel = 0.0f64;
    for &r in &[0.9, 0.99, 0.999] {
        let mean = integral_means(&pole, 2.0, r).unwrap().value;
        let oracle = 1.0 / (1.0 - r * r);
        max_rel = max_rel.max((mean - oracle).abs() / oracle);
    }

    // Spectrum slopes: |f'| = |1 - z|^{-b} gives beta(p) = b p - 1.
    let mut max_beta_err = 0.0f64;
    for &(b, p) in &[(2.0, 1.0), (1.0, 2.0), (1.5, 1.0)] {
        let map = AnalyticTestMap::BoundarySingularity { b };
        let estimate = beta_estimate(&map, p, 6, 13).unwrap();
        max_beta_err = max_beta_err.max((estimate.beta - (b * p - 1.0)).abs());
    }

    let pass = max_rel <= MEAN_REL_TOL && max_beta_err <= BETA_TOL;
    report(
        "C6 integral means oracle",
        pass,
        &format!(
            "mean max rel err = {max_rel:.3e} (tol {MEAN_REL_TOL:e}), \
             beta max |err| = {max_beta_err:.4} (tol {BETA_TOL})"
        ),
    );
}

#[test]
fn c7_gauge_classification() {
    const PAIR_COUNT: usize = 20;
    const TAIL_REL_TOL: f64 = 0.02;

    // Twenty (p, s) pairs straddling the p*s = 1 convergence boundary:
    // p*s = 1.25 converges, p*s = 0.8 diverges.
    let ps_values = [0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0];
    let mut checked = 0;
    let mut verdicts_match = true;
    let mut max_tail_rel = 0.0f64;
    for &p in &ps_values {
        for &product in &[1.25, 0.8] {
            let s = product / p;
            let gauge = GaugeFunction::power_log(0.9, s).unwrap();
            let test = gauge.dini_integral(p).unwrap();
            let expected_converges = p * s > 1.0;
            verdicts_match &= match test.verdict {
                DiniVerdict::Converges => expected_converges,
                DiniVerdict::Diverges => !expected_converges,
                DiniVerdict::Inconclusive => false,
            };
            if expected_converges {
                // Exact value of the full integral: the clamped region
                // contributes 1, the power-log region 1/(p*s - 1).
                let closed_form = 1.0 + 1.0 / (p * s - 1.0);
                let total = test.partial_integral + test.tail_estimate;
                max_tail_rel = max_tail_rel.max((total - closed_form).abs() / closed_form);
            } else {
                verdicts_match &= test.tail_estimate.is_infinite();
            }
            checked += 1;
        }
    }
    assert_eq!(checked, PAIR_COUNT);

    // Shrink-rule construction: K = 2, power-log s = 2 at d = 2/(K+1).
    // Row-wise: eps'(t_N)^2 <= eps(s_N)^{1+1/K} * 2^{N(1-1/K)}.
    let mut config = TreeConfig::new(2.0, GaugeFunction::power_log(2.0 / 3.0, 2.0).unwrap());
    config.enforce_shrink_rule = true;
    config.normalization = Normalization::SourceGauge;
    let tree = CantorTree::build(config, &[15; 5]).unwrap();
    let mut bound_holds = true;
    let mut worst_margin = f64::INFINITY;
    for n in 1..=5 {
        let (lhs, rhs) = tree.epsilon_prime_bound(n).unwrap();
        bound_holds &= lhs <= rhs * (1.0 + 1e-12);
        worst_margin = worst_margin.min(rhs / lhs);
    }

    let pass = verdicts_match && max_tail_rel <= TAIL_REL_TOL && bound_holds;
    report(
        "C7 gauge classification",
        pass,
        &format!(
            "verdicts match p*s > 1 rule on {PAIR_COUNT} pairs: {verdicts_match}, \
             integral max rel err = {max_tail_rel:.3e} (tol {TAIL_REL_TOL}), \
             shrink-rule bound holds rows 1..=5: {bound_holds} (min rhs/lhs = {worst_margin:.3})"
        ),
    );
}

#[test]
fn c8_determinism() {
    let binary = env!("CARGO_BIN_EXE_qcdist");
    let work = tempfile::tempdir().unwrap();
    let config_path = work.path().join("run.json");
    std::fs::write(
        &config_path,
        r#"{
            "seed": 7,
            "construction": {
                "dilatation": 2.0,
                "gauge": {"d": 0.6666666666666666, "family": "constant_one"},
                "levels": [15, 15, 15]
            }
        }"#,
    )
    .unwrap();

    let mut all_identical = true;
    let mut compared = Vec::new();
    for command in ["verify", "construct"] {
        let out_a = work.path().join(format!("{command}_a"));
        let out_b = work.path().join(format!("{command}_b"));
        for out in [&out_a, &out_b] {
            let status = std::process::Command::new(binary)
                .args([
                    command,
                    "--config",
                    config_path.to_str().unwrap(),
                    "--out",
                    out.to_str().unwrap(),
                ])
                .stdout(std::process::Stdio::null())
                .status()
                .unwrap();
            assert!(status.success(), "{command} run failed");
        }
        let mut names: Vec<String> = std::fs::read_dir(&out_a)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            let a = std::fs::read(out_a.join(&name)).unwrap();
            let b = std::fs::read(out_b.join(&name)).unwrap();
            all_identical &= a == b;
            compared.push(format!("{command}/{name}"));
        }
    }

    report(
        "C8 determinism",
        all_identical,
        &format!("byte-identical artifacts across repeated runs: {}", compared.join(", ")),
    );
}
