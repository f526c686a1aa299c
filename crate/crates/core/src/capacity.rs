//! Channel capacities of the VBSC under the five CSI regimes.
//!
//! Closed forms:
//!
//! * no CSI                  -- `C = C_BSC(E[P])`
//! * causal CSI at encoder   -- `C = 1 - H2(E[max(P, 1-P)])`
//! * CSI at decoder          -- `C = E[C_BSC(P)]`
//! * CSI at both sides       -- `C = E[C_BSC(P)]` (same as decoder-only)
//! * non-causal encoder CSI  -- only sandwiched between the causal-encoder
//!   and both-sides capacities; the exact value is open.
//!
//! For continuous state distributions the expectation `E[C_BSC(P)]` is
//! computed twice: by adaptive quadrature (the reported value) and by a
//! certified staircase bracket built on the quantized state space -- per-bin
//! exact mass times the extreme of `C_BSC` over the bin, plus the clipped
//! tails' worst-case contribution. The value must land inside the bracket;
//! the bracket width is driven below the caller's `eps` by bin doubling.

use serde::{Deserialize, Serialize};

use crate::state_models::{QuantizedStateSpace, StateDistribution};
use crate::{Error, Result};

/// Default certified-bracket width for capacities that need one internally.
pub const DEFAULT_EPS: f64 = 1e-3;

/// Bin budget for the bracket-narrowing loop.
const MAX_BINS: usize = 1 << 20;

/// Quadrature slack allowed on means and other scalar expectations when
/// turning them into capacity bounds.
const MEAN_TOL: f64 = 1e-8;

/// Channel-state-information regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CsiMode {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "enc-causal")]
    EncoderCausal,
    #[serde(rename = "enc-noncausal")]
    EncoderNonCausal,
    #[serde(rename = "dec")]
    Decoder,
    #[serde(rename = "both")]
    Both,
}

impl std::fmt::Display for CsiMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CsiMode::None => "none",
            CsiMode::EncoderCausal => "enc-causal",
            CsiMode::EncoderNonCausal => "enc-noncausal",
            CsiMode::Decoder => "dec",
            CsiMode::Both => "both",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for CsiMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CsiMode::None),
            "enc-causal" => Ok(CsiMode::EncoderCausal),
            "enc-noncausal" => Ok(CsiMode::EncoderNonCausal),
            "dec" => Ok(CsiMode::Decoder),
            "both" => Ok(CsiMode::Both),
            _ => Err(Error::UnsupportedMode("unknown regime name")),
        }
    }
}

/// How a capacity value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Riemann,
    Quadrature,
}

/// A capacity in bits per channel use with its certified bracket. The
/// bracket is part of the result, never hidden: `lower <= value <= upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub regime: CsiMode,
    pub value: f64,
    #[serde(rename = "lower")]
    pub lower_bound: f64,
    #[serde(rename = "upper")]
    pub upper_bound: f64,
    pub method: Method,
}

impl CapacityResult {
    pub fn bracket_width(&self) -> f64 {
        self.upper_bound - self.lower_bound
    }
}

/// Certified staircase bracket for `E[C_BSC(P)]` with the a-priori error cap
/// from the smoothness constant (see [`capacity_riemann_bounds`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannBracket {
    pub lower: f64,
    pub upper: f64,
    /// `A (p** - p*)^2 / n_bins + 2 eps / 3`; may be infinite when the
    /// density's derivative overflows f64 near its endpoint spikes.
    pub error_cap: f64,
}

/// Binary entropy in bits, with the `0 log 0 = 0` convention.
pub fn binary_entropy(p: f64) -> Result<f64> {
    check_prob(p)?;
    Ok(h2(p))
}

/// Capacity of a BSC with crossover probability `p`: `1 - H2(p)`.
pub fn bsc_capacity(p: f64) -> Result<f64> {
    check_prob(p)?;
    Ok(bsc(p))
}

pub(crate) fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * p.log2()) - (1.0 - p) * (1.0 - p).log2()
}

pub(crate) fn bsc(p: f64) -> f64 {
    1.0 - h2(p)
}

fn check_prob(p: f64) -> Result<()> {
    if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
        return Err(Error::Domain {
            what: "p",
            value: p,
            domain: "[0, 1]",
        });
    }
    Ok(())
}

/// Capacity with the state realizations unknown at both sides:
/// `C_BSC(E[P])`. The state draw is simply part of the channel noise.
pub fn capacity_no_csi(dist: &StateDistribution) -> CapacityResult {
    let mean = dist.mean();
    let value = bsc(mean);
    if dist.is_continuous() {
        let (lower, upper) = scalar_bounds_through_bsc(mean, MEAN_TOL);
        CapacityResult {
            regime: CsiMode::None,
            value,
            lower_bound: lower.min(value),
            upper_bound: upper.max(value),
            method: Method::Quadrature,
        }
    } else {
        CapacityResult {
            regime: CsiMode::None,
            value,
            lower_bound: value,
            upper_bound: value,
            method: Method::ClosedForm,
        }
    }
}

/// Bounds for `C_BSC(m)` given `m` known to tolerance `tol`. `C_BSC` is
/// decreasing up to 1/2 and increasing after, so the extremes over the
/// uncertainty interval sit at its ends or at 1/2.
fn scalar_bounds_through_bsc(m: f64, tol: f64) -> (f64, f64) {
    let lo_m = (m - tol).clamp(0.0, 1.0);
    let hi_m = (m + tol).clamp(0.0, 1.0);
    let mut lo = bsc(lo_m).min(bsc(hi_m));
    let mut hi = bsc(lo_m).max(bsc(hi_m));
    if lo_m <= 0.5 && 0.5 <= hi_m {
        lo = lo.min(bsc(0.5));
    }
    hi = hi.min(1.0);
    lo = lo.max(0.0);
    (lo, hi)
}

/// Capacity with CSI at encoder and decoder: `E[C_BSC(P)]`.
///
/// Atom distributions get the exact weighted sum. Continuous distributions
/// get the adaptive-quadrature value together with a certified bracket of
/// width at most `eps`, obtained by doubling the quantization bin count; if
/// the budget runs out the best bracket is reported in the error.
pub fn capacity_csi_both(dist: &StateDistribution, eps: f64) -> Result<CapacityResult> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain {
            what: "eps",
            value: eps,
            domain: "(0, 1)",
        });
    }
    if !dist.is_continuous() {
        let value = dist.expectation(bsc);
        return Ok(CapacityResult {
            regime: CsiMode::Both,
            value,
            lower_bound: value,
            upper_bound: value,
            method: Method::ClosedForm,
        });
    }
    let value = dist.expectation(bsc);
    let mut n_bins = 64usize;
    let mut best: Option<RiemannBracket> = None;
    loop {
        let bracket = capacity_riemann_bounds(dist, n_bins, eps)?;
        let better = best.is_none_or(|b| bracket.upper - bracket.lower < b.upper - b.lower);
        if better {
            best = Some(bracket);
        }
        let b = best.expect("set above");
        if b.upper - b.lower <= eps {
            if value < b.lower - 1e-9 || value > b.upper + 1e-9 {
                return Err(Error::Internal(format!(
                    "quadrature value {value} escaped certified bracket [{}, {}]",
                    b.lower, b.upper
                )));
            }
            return Ok(CapacityResult {
                regime: CsiMode::Both,
                value: value.clamp(b.lower, b.upper),
                lower_bound: b.lower,
                upper_bound: b.upper,
                method: Method::Riemann,
            });
        }
        if n_bins >= MAX_BINS {
            return Err(Error::BoundTooWide {
                lower: b.lower,
                upper: b.upper,
                eps,
                max_bins: MAX_BINS,
            });
        }
        n_bins *= 2;
    }
}

/// Capacity with CSI at the decoder only. Equal to the both-sides capacity
/// (encoder CSI adds nothing once the decoder has it); delegates so the
/// value matches bit for bit at equal `eps`.
pub fn capacity_csi_decoder(dist: &StateDistribution, eps: f64) -> Result<CapacityResult> {
    let mut r = capacity_csi_both(dist, eps)?;
    r.regime = CsiMode::Decoder;
    Ok(r)
}

/// Capacity with causal CSI at the encoder: `1 - H2(E[max(P, 1-P)])`,
/// achieved by the state-flip mapper on an auxiliary binary input.
pub fn capacity_csi_encoder_causal(dist: &StateDistribution) -> CapacityResult {
    let q_max = dist.expectation(|p| p.max(1.0 - p));
    let value = bsc(q_max);
    if dist.is_continuous() {
        let (lower, upper) = scalar_bounds_through_bsc(q_max, MEAN_TOL);
        CapacityResult {
            regime: CsiMode::EncoderCausal,
            value,
            lower_bound: lower.min(value),
            upper_bound: upper.max(value),
            method: Method::Quadrature,
        }
    } else {
        CapacityResult {
            regime: CsiMode::EncoderCausal,
            value,
            lower_bound: value,
            upper_bound: value,
            method: Method::ClosedForm,
        }
    }
}

/// Capacity gained by giving the encoder causal CSI, relative to no CSI.
/// Nonnegative, and zero exactly when the distribution has no mass above
/// one half.
pub fn encoder_csi_gain(dist: &StateDistribution) -> f64 {
    capacity_csi_encoder_causal(dist).value - capacity_no_csi(dist).value
}

/// Sandwich for the non-causal encoder-CSI capacity, whose exact value is
/// open: causal-encoder capacity from below, both-sides capacity from above.
pub fn capacity_noncausal_bounds(dist: &StateDistribution) -> Result<(f64, f64)> {
    let lower = capacity_csi_encoder_causal(dist).value;
    let upper = capacity_csi_both(dist, DEFAULT_EPS)?.value;
    Ok((lower, upper.max(lower)))
}

/// Certified staircase bracket for `E[C_BSC(P)]` on `n_bins` equidistant
/// bins (in the distribution's integration coordinate) between the
/// `eps/3`-mass tail cuts.
///
/// Each bin contributes its exact probability mass times the minimum
/// (lower) or maximum (upper) of `C_BSC` over the bin -- exact endpoint
/// values, since bins never straddle 1/2 -- and the clipped tails contribute
/// `[0, mass]` since `0 <= C_BSC <= 1`. The reported `error_cap` is the
/// a-priori width bound `A (p** - p*)^2 / n_bins + 2 eps / 3` with `A` a
/// sampled smoothness constant of the integrand `f_P(p) C_BSC(p)`.
pub fn capacity_riemann_bounds(
    dist: &StateDistribution,
    n_bins: usize,
    eps: f64,
) -> Result<RiemannBracket> {
    if !dist.is_continuous() {
        return Err(Error::Kind {
            kind: if matches!(dist, StateDistribution::Discrete { .. }) {
                "discrete"
            } else {
                "degenerate"
            },
            detail: "Riemann bounds need a differentiable density",
        });
    }
    let q = dist.quantize(n_bins.max(1), eps)?;
    let bracket = staircase_bracket(&q);
    let p_star = q.intervals.first().map_or(0.0, |iv| iv.lo);
    let p_dstar = q.intervals.last().map_or(1.0, |iv| iv.hi);
    let a = integrand_smoothness_bound(dist, p_star, p_dstar)?;
    let cap = a * (p_dstar - p_star).powi(2) / n_bins.max(1) as f64 + 2.0 * eps / 3.0;
    Ok(RiemannBracket {
        lower: bracket.0,
        upper: bracket.1,
        error_cap: cap,
    })
}

/// Mass-weighted staircase bounds over an existing quantization.
pub(crate) fn staircase_bracket(q: &QuantizedStateSpace) -> (f64, f64) {
    let mut lower = 0.0;
    let mut upper = 0.0;
    for iv in &q.intervals {
        let (ca, cb) = (bsc(iv.lo), bsc(iv.hi));
        lower += iv.mass * ca.min(cb);
        upper += iv.mass * ca.max(cb);
    }
    upper += q.tail_mass_low + q.tail_mass_high;
    (lower.max(0.0), upper.min(1.0))
}

/// `1.1 * max |d/dp (f_P(p) C_BSC(p))|` by dense sampling on `[p*, p**]`.
/// MaesHybrid supplies the analytic density derivative; the sampling runs
/// in the transformed coordinate so the endpoint spikes are seen. The
/// result overflows to +inf when the density diverges fast enough, which
/// makes the cap vacuous but still valid.
fn integrand_smoothness_bound(dist: &StateDistribution, p_star: f64, p_dstar: f64) -> Result<f64> {
    const SAMPLES: usize = 2048;
    let mut max_abs = 0.0f64;
    let grid: Vec<f64> = match dist {
        StateDistribution::MaesHybrid { .. } => {
            // Uniform in u between the cut images; the density derivative
            // explodes toward the cuts, so this grid concentrates there.
            let (ua, ub) = (inv_phi_clamped(p_star), inv_phi_clamped(p_dstar));
            (0..=SAMPLES)
                .map(|k| {
                    let u = ua + (ub - ua) * k as f64 / SAMPLES as f64;
                    normal_cdf(u).clamp(p_star, p_dstar)
                })
                .collect()
        }
        _ => (0..=SAMPLES)
            .map(|k| p_star + (p_dstar - p_star) * k as f64 / SAMPLES as f64)
            .collect(),
    };
    for p in grid {
        if p <= 0.0 || p >= 1.0 {
            continue;
        }
        let f = match dist.pdf(p)? {
            crate::state_models::Density::Value(v) => v,
            crate::state_models::Density::Atom(_) => unreachable!("continuous kinds only"),
        };
        let fp = dist.pdf_derivative(p)?;
        // d/dp (f C) = f' C + f C',  C'(p) = log2(p / (1-p)).
        let c = bsc(p);
        let cp = (p / (1.0 - p)).log2();
        let d = (fp * c + f * cp).abs();
        if d > max_abs {
            max_abs = d;
        }
    }
    Ok(1.1 * max_abs)
}

fn normal_cdf(u: f64) -> f64 {
    use statrs::distribution::ContinuousCDF;
    statrs::distribution::Normal::new(0.0, 1.0)
        .expect("standard normal")
        .cdf(u)
}

fn inv_phi_clamped(p: f64) -> f64 {
    use statrs::distribution::ContinuousCDF;
    let p = p.clamp(f64::MIN_POSITIVE, 1.0 - 1e-16);
    statrs::distribution::Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(p)
}
