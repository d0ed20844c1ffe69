//! Dimension gauges h(t) = t^d · ε(t) with slowly-varying corrections.
//!
//! A gauge refines the power scale t^d by a correction factor ε that is
//! nondecreasing, valued in [0, 1], and equal to 1 for t bounded away from 0.
//! Whether a gauge-level phenomenon survives is typically governed by a
//! Dini-type condition: finiteness of ∫₀¹ ε(t)^p dt/t for a suitable p.
//! [`GaugeFunction::dini_integral`] decides that condition in closed form for
//! the named families and numerically otherwise.
//!
//! All small-t evaluation is routed through u = log(1/t) so that quadrature
//! grids reaching t = 2⁻²⁰⁰⁰ never underflow.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// ε(t) is pinned to 1 for t ≥ 1/e, i.e. for u = log(1/t) ≤ 1, which keeps
/// |log t| and log|log t| factors away from their singularities.
pub const EPS_CLAMP_NEG_LOG: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum GaugeError {
    #[error("gauge exponent d = {d} outside (0, 2]")]
    InvalidDimension { d: f64 },
    #[error("correction parameter s = {s} must be positive")]
    NonPositiveS { s: f64 },
    #[error("iterated-log family needs d > 1, got d = {d}")]
    IteratedLogNeedsLargeD { d: f64 },
    #[error("invalid correction table: {reason}")]
    InvalidTable { reason: String },
    #[error("gauge argument t = {t} must be positive and finite")]
    BadArgument { t: f64 },
    #[error("t = {t:e} lies below the table floor {t_min:e}; refusing to extrapolate")]
    BelowTable { t: f64, t_min: f64 },
    #[error("Dini exponent p = {p} must be positive")]
    BadExponent { p: f64 },
}

/// The slowly-varying correction family of a gauge.
///
/// With u = log(1/t):
/// * `ConstantOne` — ε ≡ 1, the pure power gauge t^d.
/// * `PowerLog` — ε(t) = min(1, u^(−s)), s > 0.
/// * `IteratedLog` — ε(t) = min(1, u^(1−d) · (log u)^(−s)), s > 0, requiring
///   d > 1; the borderline family whose Dini test can hinge on the second
///   logarithm.
/// * `Tabulated` — user-supplied (t, ε) pairs, interpolated linearly in
///   log t, never extrapolated below the smallest tabulated t.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsFamily {
    ConstantOne,
    PowerLog { s: f64 },
    IteratedLog { s: f64 },
    Tabulated { points: Vec<(f64, f64)> },
}

/// A gauge function h(t) = t^d · ε(t), 0 < d ≤ 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGauge", into = "RawGauge")]
pub struct GaugeFunction {
    d: f64,
    family: EpsFamily,
    /// Tabulated points as (u, ε) with u = log(1/t), ascending in u.
    table_u: Vec<(f64, f64)>,
}

impl GaugeFunction {
    pub fn new(d: f64, family: EpsFamily) -> Result<Self, GaugeError> {
        if !(d > 0.0 && d <= 2.0) || !d.is_finite() {
            return Err(GaugeError::InvalidDimension { d });
        }
        match &family {
            EpsFamily::ConstantOne => {}
            EpsFamily::PowerLog { s } => {
                if !(*s > 0.0) || !s.is_finite() {
                    return Err(GaugeError::NonPositiveS { s: *s });
                }
            }
            EpsFamily::IteratedLog { s } => {
                if !(*s > 0.0) || !s.is_finite() {
                    return Err(GaugeError::NonPositiveS { s: *s });
                }
                if d <= 1.0 {
                    return Err(GaugeError::IteratedLogNeedsLargeD { d });
                }
            }
            EpsFamily::Tabulated { points } => validate_table(points)?,
        }
        let table_u = match &family {
            EpsFamily::Tabulated { points } => {
                // t descending <-> u ascending
                let mut tu: Vec<(f64, f64)> =
                    points.iter().map(|&(t, e)| (-t.ln(), e)).collect();
                tu.reverse();
                tu
            }
            _ => Vec::new(),
        };
        Ok(GaugeFunction { d, family, table_u })
    }

    /// Pure power gauge t^d.
    pub fn power(d: f64) -> Result<Self, GaugeError> {
        Self::new(d, EpsFamily::ConstantOne)
    }

    pub fn power_log(d: f64, s: f64) -> Result<Self, GaugeError> {
        Self::new(d, EpsFamily::PowerLog { s })
    }

    pub fn iterated_log(d: f64, s: f64) -> Result<Self, GaugeError> {
        Self::new(d, EpsFamily::IteratedLog { s })
    }

    pub fn tabulated(d: f64, points: Vec<(f64, f64)>) -> Result<Self, GaugeError> {
        Self::new(d, EpsFamily::Tabulated { points })
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn family(&self) -> &EpsFamily {
        &self.family
    }

    /// The correction factor ε(t).
    pub fn eps(&self, t: f64) -> Result<f64, GaugeError> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(GaugeError::BadArgument { t });
        }
        self.eps_at_neg_log(-t.ln())
    }

    /// ε evaluated at u = log(1/t). This form never forms t itself, so it is
    /// safe for u far beyond the f64 underflow threshold (t = 2⁻²⁰⁰⁰ and
    /// smaller).
    pub fn eps_at_neg_log(&self, u: f64) -> Result<f64, GaugeError> {
        match &self.family {
            EpsFamily::Tabulated { .. } => {
                let (u_min, _) = self.table_u[0];
                let (u_max, _) = *self.table_u.last().unwrap();
                if u > u_max {
                    return Err(GaugeError::BelowTable {
                        t: (-u).exp(),
                        t_min: (-u_max).exp(),
                    });
                }
                if u <= u_min {
                    // The table is validated to end with ε = 1 at its largest
                    // t, so holding that value keeps ε nondecreasing.
                    return Ok(self.table_u[0].1);
                }
                let k = self.table_u.partition_point(|&(ui, _)| ui < u);
                let (u0, e0) = self.table_u[k - 1];
                let (u1, e1) = self.table_u[k];
                let w = (u - u0) / (u1 - u0);
                Ok(e0 + w * (e1 - e0))
            }
            _ if u <= EPS_CLAMP_NEG_LOG => Ok(1.0),
            EpsFamily::ConstantOne => Ok(1.0),
            EpsFamily::PowerLog { s } => Ok(u.powf(-s).min(1.0)),
            EpsFamily::IteratedLog { s } => {
                let l = u.ln();
                if l <= 0.0 {
                    return Ok(1.0);
                }
                let val = u.powf(1.0 - self.d) * l.powf(-s);
                Ok(val.min(1.0))
            }
        }
    }

    /// h(t) = t^d · ε(t); equals t^d for t ≥ 1.
    pub fn eval(&self, t: f64) -> Result<f64, GaugeError> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(GaugeError::BadArgument { t });
        }
        if t >= 1.0 {
            return Ok(t.powf(self.d));
        }
        Ok(t.powf(self.d) * self.eps(t)?)
    }

    /// Decides convergence of ∫₀¹ ε(t)^p dt/t, p > 0.
    ///
    /// Verdicts for the named families come from the substitution
    /// u = log(1/t), which turns the integral into ∫₁^∞ ε(e^(−u))^p du:
    /// * constant one — diverges;
    /// * power-log(s) — converges iff p·s > 1;
    /// * iterated-log(s) — converges iff p(d−1) > 1, or p(d−1) = 1 and
    ///   p·s > 1.
    ///
    /// Tabulated corrections are decided numerically where possible: if the
    /// table floor has ε = 0 the tail vanishes and the partial integral is
    /// the answer; otherwise the verdict is `Inconclusive`, with
    /// `tail_estimate` the integrand value ε(t_floor)^p (an upper bound per
    /// unit of log t below the floor).
    ///
    /// The reported `partial_integral` is a trapezoid sum on the dyadic grid
    /// t = 2^(−j), j = 0..J, with J doubling from 125 until the value is
    /// stable to 1e−8 relative or J = 2000 is reached.
    pub fn dini_integral(&self, p: f64) -> Result<DiniTest, GaugeError> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(GaugeError::BadExponent { p });
        }
        // Range limit for tabulated corrections: never probe below the floor.
        let u_cap = match &self.family {
            EpsFamily::Tabulated { .. } => Some(self.table_u.last().unwrap().0),
            _ => None,
        };
        let mut depth: u32 = 125;
        let mut value = self.partial_dini(p, depth, u_cap)?;
        let mut converged = false;
        loop {
            let next_depth = (depth * 2).min(2000);
            if next_depth == depth {
                break;
            }
            let next = self.partial_dini(p, next_depth, u_cap)?;
            let change = (next - value).abs() / next.abs().max(f64::MIN_POSITIVE);
            depth = next_depth;
            value = next;
            if change < 1e-8 {
                converged = true;
                break;
            }
        }
        let u_final = match u_cap {
            Some(cap) => cap.min(depth as f64 * std::f64::consts::LN_2),
            None => depth as f64 * std::f64::consts::LN_2,
        };

        let (verdict, tail) = match &self.family {
            EpsFamily::ConstantOne => (DiniVerdict::Diverges, f64::INFINITY),
            EpsFamily::PowerLog { s } => {
                if p * s > 1.0 {
                    let tail = u_final.powf(1.0 - p * s) / (p * s - 1.0);
                    (DiniVerdict::Converges, tail)
                } else {
                    (DiniVerdict::Diverges, f64::INFINITY)
                }
            }
            EpsFamily::IteratedLog { s } => {
                let a = p * (self.d - 1.0);
                if a > 1.0 {
                    // ∫ u^(−a) (log u)^(−ps) du ≤ (log U)^(−ps) U^(1−a)/(a−1)
                    let tail =
                        u_final.ln().powf(-p * s) * u_final.powf(1.0 - a) / (a - 1.0);
                    (DiniVerdict::Converges, tail)
                } else if a == 1.0 && p * s > 1.0 {
                    let tail = u_final.ln().powf(1.0 - p * s) / (p * s - 1.0);
                    (DiniVerdict::Converges, tail)
                } else {
                    (DiniVerdict::Diverges, f64::INFINITY)
                }
            }
            EpsFamily::Tabulated { .. } => {
                let floor_eps = self.table_u.last().unwrap().1;
                if floor_eps == 0.0 {
                    (DiniVerdict::Converges, 0.0)
                } else {
                    (DiniVerdict::Inconclusive, floor_eps.powf(p))
                }
            }
        };
        Ok(DiniTest {
            exponent: p,
            verdict,
            partial_integral: value,
            tail_estimate: tail,
            numerically_converged: converged,
            grid_depth: depth,
        })
    }

    /// Trapezoid sum of ε(e^(−u))^p over u ∈ [0, min(J·log 2, u_cap)].
    fn partial_dini(&self, p: f64, depth: u32, u_cap: Option<f64>) -> Result<f64, GaugeError> {
        let h = std::f64::consts::LN_2;
        let u_end = match u_cap {
            Some(cap) => cap.min(depth as f64 * h),
            None => depth as f64 * h,
        };
        let full_panels = (u_end / h).floor() as u32;
        let w = |u: f64| -> Result<f64, GaugeError> { Ok(self.eps_at_neg_log(u)?.powf(p)) };
        let mut value = 0.0;
        if full_panels >= 1 {
            let mut acc = 0.5 * (w(0.0)? + w(full_panels as f64 * h)?);
            for j in 1..full_panels {
                acc += w(j as f64 * h)?;
            }
            value = h * acc;
        }
        // Fractional panel up to u_end when the cap is not on the grid.
        let u_last = full_panels as f64 * h;
        if u_end > u_last {
            value += 0.5 * (u_end - u_last) * (w(u_last)? + w(u_end)?);
        }
        Ok(value)
    }
}

/// Outcome of a Dini integral test ∫₀¹ ε(t)^p dt/t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiniTest {
    /// The exponent p.
    pub exponent: f64,
    pub verdict: DiniVerdict,
    /// Trapezoid value of the integral over [2^(−J), 1] (cut off at the table
    /// floor for tabulated corrections).
    pub partial_integral: f64,
    /// For convergent named families, a closed-form bound on the remaining
    /// tail; +∞ when divergent; for inconclusive tabulated corrections, the
    /// integrand value at the table floor.
    pub tail_estimate: f64,
    /// Whether the partial integral was stable to 1e−8 relative before the
    /// grid cap.
    pub numerically_converged: bool,
    /// Final grid depth J (smallest t probed is 2^(−J)).
    pub grid_depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiniVerdict {
    Converges,
    Diverges,
    Inconclusive,
}

fn validate_table(points: &[(f64, f64)]) -> Result<(), GaugeError> {
    if points.len() < 2 {
        return Err(GaugeError::InvalidTable { reason: "need at least two points".into() });
    }
    let mut prev_t = 0.0;
    let mut prev_e = -0.0;
    for &(t, e) in points {
        if !t.is_finite() || !e.is_finite() {
            return Err(GaugeError::InvalidTable { reason: format!("non-finite entry ({t}, {e})") });
        }
        if t <= prev_t {
            return Err(GaugeError::InvalidTable {
                reason: format!("abscissae must be strictly increasing and positive near t = {t}"),
            });
        }
        if t > 1.0 {
            return Err(GaugeError::InvalidTable {
                reason: format!("abscissa t = {t} outside (0, 1]"),
            });
        }
        if e < prev_e || !(0.0..=1.0).contains(&e) {
            return Err(GaugeError::InvalidTable {
                reason: format!("corrections must be nondecreasing within [0, 1], broken at ({t}, {e})"),
            });
        }
        prev_t = t;
        prev_e = e;
    }
    if points.last().unwrap().1 != 1.0 {
        return Err(GaugeError::InvalidTable {
            reason: "last table value must be exactly 1 so the gauge joins t^d continuously".into(),
        });
    }
    Ok(())
}

/// Wire shape for gauge configuration:
/// `{"d": .., "family": "power_log", "s": ..}` etc.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGauge {
    d: f64,
    family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<Vec<(f64, f64)>>,
}

impl TryFrom<RawGauge> for GaugeFunction {
    type Error = GaugeError;

    fn try_from(raw: RawGauge) -> Result<Self, GaugeError> {
        let need_s = || {
            raw.s.ok_or_else(|| GaugeError::InvalidTable {
                reason: format!("family '{}' requires parameter s", raw.family),
            })
        };
        let family = match raw.family.as_str() {
            "constant_one" => EpsFamily::ConstantOne,
            "power_log" => EpsFamily::PowerLog { s: need_s()? },
            "iterated_log" => EpsFamily::IteratedLog { s: need_s()? },
            "tabulated" => EpsFamily::Tabulated {
                points: raw.points.clone().ok_or_else(|| GaugeError::InvalidTable {
                    reason: "family 'tabulated' requires points".into(),
                })?,
            },
            other => {
                return Err(GaugeError::InvalidTable {
                    reason: format!("unknown correction family '{other}'"),
                })
            }
        };
        match family {
            EpsFamily::Tabulated { .. } => {
                if raw.s.is_some() {
                    return Err(GaugeError::InvalidTable {
                        reason: "family 'tabulated' does not take s".into(),
                    });
                }
            }
            EpsFamily::ConstantOne => {
                if raw.s.is_some() || raw.points.is_some() {
                    return Err(GaugeError::InvalidTable {
                        reason: "family 'constant_one' takes no parameters".into(),
                    });
                }
            }
            _ => {
                if raw.points.is_some() {
                    return Err(GaugeError::InvalidTable {
                        reason: format!("family '{}' does not take points", raw.family),
                    });
                }
            }
        }
        GaugeFunction::new(raw.d, family)
    }
}

impl From<GaugeFunction> for RawGauge {
    fn from(g: GaugeFunction) -> RawGauge {
        match g.family {
            EpsFamily::ConstantOne => RawGauge {
                d: g.d,
                family: "constant_one".into(),
                s: None,
                points: None,
            },
            EpsFamily::PowerLog { s } => {
                RawGauge { d: g.d, family: "power_log".into(), s: Some(s), points: None }
            }
            EpsFamily::IteratedLog { s } => {
                RawGauge { d: g.d, family: "iterated_log".into(), s: Some(s), points: None }
            }
            EpsFamily::Tabulated { points } => {
                RawGauge { d: g.d, family: "tabulated".into(), s: None, points: Some(points) }
            }
        }
    }
}
