//! Distributions of the per-cell crossover probability.
//!
//! The channel redraws its crossover probability for every use from a state
//! distribution `f_P`. Four kinds are supported: the SRAM-cell hybrid model
//! (`MaesHybrid`), finite atom lists (`Discrete`), piecewise-constant
//! densities (`PiecewiseConstant`), and a single deterministic state
//! (`Degenerate`).
//!
//! `MaesHybrid(lambda1, lambda2)` models the one-probability of an SRAM cell
//! (the chance it powers up as '1') through the cdf
//! `F_P1(x) = Phi(lambda1 * Phi^-1(x) + lambda2)`. Enrollment reads the cell
//! once; re-reads then flip bit i with the cell's crossover probability,
//! which equals the one-probability or its complement depending on the
//! enrolled value. Mixing over the enrollment readout gives the crossover
//! density
//!
//! ```text
//! f_P(x) = (1 - x) * (f_P1(x) + f_P1(1 - x))
//! ```
//!
//! which carries mass on (1/2, 1]: a cell enrolled against its majority
//! state flips more often than not. The density diverges at both endpoints
//! (most cells are extremely stable), so all numeric work substitutes
//! `u = Phi^-1(p)` and integrates in the transformed coordinate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::quad;
use crate::{Error, Result};

/// Absolute tolerance used for every adaptive quadrature in this module;
/// capacity tolerances downstream derive from it.
pub const DEFAULT_QUAD_TOL: f64 = 1e-9;

/// Integration bound in the standard-normal coordinate. phi(38) is still a
/// normal f64; everything beyond carries less than 1e-314 of mass.
const U_BOUND: f64 = 38.0;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

fn phi_pdf(u: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    if !u.is_finite() {
        return 0.0;
    }
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

fn phi_cdf(u: f64) -> f64 {
    if u <= -U_BOUND {
        return 0.0;
    }
    if u >= U_BOUND {
        return 1.0;
    }
    std_normal().cdf(u)
}

/// Inverse standard-normal cdf; `x` outside (0,1) maps to +-infinity.
fn phi_inv(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else if x >= 1.0 {
        f64::INFINITY
    } else {
        std_normal().inverse_cdf(x)
    }
}

/// A density evaluation: either an ordinary finite value or a point mass.
/// Atoms are flagged rather than approximated by narrow floats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density {
    /// Finite density value at the point.
    Value(f64),
    /// An atom carrying the given probability mass exactly at the point.
    Atom(f64),
}

/// Distribution of the crossover probability P on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub enum StateDistribution {
    /// SRAM-cell hybrid model; see the module docs for the construction.
    MaesHybrid { lambda1: f64, lambda2: f64 },
    /// Finite list of `(p, mass)` atoms, sorted by `p`, masses summing to 1.
    Discrete { points: Vec<(f64, f64)> },
    /// Piecewise-constant density: `densities[i]` on
    /// `[breakpoints[i], breakpoints[i+1])`, integrating to 1.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        densities: Vec<f64>,
    },
    /// All mass at a single state.
    Degenerate { p: f64 },
}

/// Serialized form; field names are part of the external interface.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Raw {
    MaesHybrid { lambda1: f64, lambda2: f64 },
    Discrete { points: Vec<(f64, f64)> },
    Piecewise {
        breakpoints: Vec<f64>,
        densities: Vec<f64>,
    },
    Degenerate { p: f64 },
}

impl From<StateDistribution> for Raw {
    fn from(d: StateDistribution) -> Raw {
        match d {
            StateDistribution::MaesHybrid { lambda1, lambda2 } => Raw::MaesHybrid { lambda1, lambda2 },
            StateDistribution::Discrete { points } => Raw::Discrete { points },
            StateDistribution::PiecewiseConstant {
                breakpoints,
                densities,
            } => Raw::Piecewise {
                breakpoints,
                densities,
            },
            StateDistribution::Degenerate { p } => Raw::Degenerate { p },
        }
    }
}

impl Serialize for StateDistribution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Raw::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateDistribution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(d)?;
        // Internally tagged enums cannot use serde's deny_unknown_fields, so
        // unknown keys are rejected by hand before dispatching on the tag.
        let obj = value
            .as_object()
            .ok_or_else(|| D::Error::custom("distribution config must be a JSON object"))?;
        let kind = obj
            .get("kind")
            .and_then(|k| k.as_str())
            .ok_or_else(|| D::Error::custom("missing \"kind\" field"))?;
        let allowed: &[&str] = match kind {
            "maes_hybrid" => &["kind", "lambda1", "lambda2"],
            "discrete" => &["kind", "points"],
            "piecewise" => &["kind", "breakpoints", "densities"],
            "degenerate" => &["kind", "p"],
            other => return Err(D::Error::custom(format!("unknown kind \"{other}\""))),
        };
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(D::Error::custom(format!(
                    "unknown field \"{key}\" for kind \"{kind}\""
                )));
            }
        }
        let raw: Raw = serde_json::from_value(value).map_err(D::Error::custom)?;
        let dist = match raw {
            Raw::MaesHybrid { lambda1, lambda2 } => StateDistribution::maes_hybrid(lambda1, lambda2),
            Raw::Discrete { points } => StateDistribution::discrete(points),
            Raw::Piecewise {
                breakpoints,
                densities,
            } => StateDistribution::piecewise_constant(breakpoints, densities),
            Raw::Degenerate { p } => StateDistribution::degenerate(p),
        };
        dist.map_err(D::Error::custom)
    }
}

impl StateDistribution {
    /// SRAM hybrid model with `lambda1 > 0`.
    pub fn maes_hybrid(lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(lambda1.is_finite() && lambda1 > 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "maes_hybrid requires lambda1 > 0, got {lambda1}"
            )));
        }
        if !lambda2.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "maes_hybrid requires finite lambda2, got {lambda2}"
            )));
        }
        Ok(Self::MaesHybrid { lambda1, lambda2 })
    }

    /// Atom list; sorted by `p` and merged at equal `p` on construction.
    /// Masses must be nonnegative and sum to 1 within 1e-12.
    pub fn discrete(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidDistribution(
                "discrete distribution needs at least one atom".into(),
            ));
        }
        let mut total = 0.0;
        for &(p, m) in &points {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidDistribution(format!(
                    "atom position {p} outside [0, 1]"
                )));
            }
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::InvalidDistribution(format!("atom mass {m} negative")));
            }
            total += m;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "atom masses sum to {total}, expected 1 within 1e-12"
            )));
        }
        let mut pts = points;
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        for (p, m) in pts {
            match merged.last_mut() {
                Some(last) if last.0 == p => last.1 += m,
                _ => merged.push((p, m)),
            }
        }
        Ok(Self::Discrete { points: merged })
    }

    /// Piecewise-constant density on strictly increasing breakpoints within
    /// [0, 1]; must integrate to 1 within 1e-9.
    pub fn piecewise_constant(breakpoints: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || densities.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidDistribution(format!(
                "piecewise needs n+1 breakpoints for n densities, got {} and {}",
                breakpoints.len(),
                densities.len()
            )));
        }
        for &b in &breakpoints {
            if !(b.is_finite() && (0.0..=1.0).contains(&b)) {
                return Err(Error::InvalidDistribution(format!(
                    "breakpoint {b} outside [0, 1]"
                )));
            }
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidDistribution(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        let mut integral = 0.0;
        for (i, &d) in densities.iter().enumerate() {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::InvalidDistribution(format!("density {d} negative")));
            }
            integral += d * (breakpoints[i + 1] - breakpoints[i]);
        }
        if (integral - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "piecewise density integrates to {integral}, expected 1 within 1e-9"
            )));
        }
        Ok(Self::PiecewiseConstant {
            breakpoints,
            densities,
        })
    }

    /// All mass at `p`.
    pub fn degenerate(p: f64) -> Result<Self> {
        if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidDistribution(format!(
                "degenerate state {p} outside [0, 1]"
            )));
        }
        Ok(Self::Degenerate { p })
    }

    /// Parse a JSON config; the exact field names are documented on [`Raw`].
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidDistribution(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("distribution serializes")
    }

    /// True for kinds with a density (no atoms).
    pub fn is_continuous(&self) -> bool {
        matches!(
            self,
            Self::MaesHybrid { .. } | Self::PiecewiseConstant { .. }
        )
    }

    fn kind_name(&self) -> &'static str {
        match self {
            Self::MaesHybrid { .. } => "maes_hybrid",
            Self::Discrete { .. } => "discrete",
            Self::PiecewiseConstant { .. } => "piecewise",
            Self::Degenerate { .. } => "degenerate",
        }
    }

    /// Density `f_P(p)`.
    ///
    /// Degenerate distributions report their atom as [`Density::Atom`];
    /// `Discrete` has no density -- use [`StateDistribution::mass`].
    /// The Maes density is `+inf` at an endpoint when it diverges there.
    pub fn pdf(&self, p: f64) -> Result<Density> {
        check_prob("p", p)?;
        match self {
            Self::Degenerate { p: atom } => Ok(if p == *atom {
                Density::Atom(1.0)
            } else {
                Density::Value(0.0)
            }),
            Self::Discrete { .. } => Err(Error::Kind {
                kind: "discrete",
                detail: "no density; use the mass function",
            }),
            Self::PiecewiseConstant {
                breakpoints,
                densities,
            } => Ok(Density::Value(piecewise_density(breakpoints, densities, p))),
            Self::MaesHybrid { lambda1, lambda2 } => {
                Ok(Density::Value(Maes::new(*lambda1, *lambda2).f_err(p)))
            }
        }
    }

    /// Probability mass at exactly `p`; zero for continuous kinds is an
    /// error because the question is degenerate there.
    pub fn mass(&self, p: f64) -> Result<f64> {
        check_prob("p", p)?;
        match self {
            Self::Degenerate { p: atom } => Ok(if p == *atom { 1.0 } else { 0.0 }),
            Self::Discrete { points } => Ok(points
                .iter()
                .filter(|(pt, _)| *pt == p)
                .map(|(_, m)| m)
                .sum()),
            _ => Err(Error::Kind {
                kind: self.kind_name(),
                detail: "no atoms; use pdf",
            }),
        }
    }

    /// Expected value E[P].
    pub fn mean(&self) -> f64 {
        match self {
            Self::Degenerate { p } => *p,
            Self::Discrete { points } => points.iter().map(|(p, m)| p * m).sum(),
            _ => self.expectation(|p| p),
        }
    }

    /// E[g(P)] for bounded `g`, evaluated exactly for atom kinds and by
    /// adaptive quadrature (tolerance [`DEFAULT_QUAD_TOL`], in transformed
    /// coordinates where the density requires it) for continuous kinds.
    pub fn expectation<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        match self {
            Self::Degenerate { p } => g(*p),
            Self::Discrete { points } => points.iter().map(|(p, m)| m * g(*p)).sum(),
            Self::PiecewiseConstant {
                breakpoints,
                densities,
            } => {
                let mut acc = 0.0;
                for (i, &d) in densities.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let (a, b) = (breakpoints[i], breakpoints[i + 1]);
                    acc += d * quad::integrate(&g, a, b, DEFAULT_QUAD_TOL / densities.len() as f64);
                }
                acc
            }
            Self::MaesHybrid { lambda1, lambda2 } => {
                Maes::new(*lambda1, *lambda2).expect_err_law(g, DEFAULT_QUAD_TOL)
            }
        }
    }

    /// Cumulative distribution function F_P(x) = P(P <= x).
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        match self {
            Self::Degenerate { p } => {
                if x >= *p {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Discrete { points } => points
                .iter()
                .take_while(|(p, _)| *p <= x)
                .map(|(_, m)| m)
                .sum(),
            Self::PiecewiseConstant {
                breakpoints,
                densities,
            } => piecewise_cdf(breakpoints, densities, x),
            Self::MaesHybrid { lambda1, lambda2 } => {
                Maes::new(*lambda1, *lambda2).cdf_err_many(&[x])[0]
            }
        }
    }

    /// Derivative of the density, where one exists. Supplies the analytic
    /// derivative for `MaesHybrid`; piecewise-constant densities report the
    /// a.e. derivative 0. Atom kinds are rejected.
    pub fn pdf_derivative(&self, p: f64) -> Result<f64> {
        check_prob("p", p)?;
        match self {
            Self::MaesHybrid { lambda1, lambda2 } => {
                Ok(Maes::new(*lambda1, *lambda2).f_err_deriv(p))
            }
            Self::PiecewiseConstant { .. } => Ok(0.0),
            _ => Err(Error::Kind {
                kind: self.kind_name(),
                detail: "not differentiable",
            }),
        }
    }

    /// The distribution of 1 - P, used by reflection-invariance checks.
    /// Not defined for `MaesHybrid`: the enrollment mixture family is not
    /// closed under reflection.
    pub fn reflected(&self) -> Result<Self> {
        match self {
            Self::Degenerate { p } => Self::degenerate(1.0 - p),
            Self::Discrete { points } => {
                Self::discrete(points.iter().map(|&(p, m)| (1.0 - p, m)).collect())
            }
            Self::PiecewiseConstant {
                breakpoints,
                densities,
            } => {
                let bp = breakpoints.iter().rev().map(|b| 1.0 - b).collect();
                let dens = densities.iter().rev().copied().collect();
                Self::piecewise_constant(bp, dens)
            }
            Self::MaesHybrid { .. } => Err(Error::Kind {
                kind: "maes_hybrid",
                detail: "reflection leaves the model family",
            }),
        }
    }

    /// Draw one crossover probability.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Degenerate { p } => *p,
            Self::Discrete { points } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(p, m) in points {
                    acc += m;
                    if u < acc {
                        return p;
                    }
                }
                points.last().expect("non-empty").0
            }
            Self::PiecewiseConstant {
                breakpoints,
                densities,
            } => {
                let u: f64 = rng.random();
                piecewise_quantile(breakpoints, densities, u)
            }
            Self::MaesHybrid { lambda1, lambda2 } => {
                let m = Maes::new(*lambda1, *lambda2);
                let q = m.draw_one_probability(rng);
                // Enrollment readout: '1' with probability q. The crossover
                // of a re-read is the complement of the enrolled side.
                if rng.random::<f64>() < q {
                    1.0 - q
                } else {
                    q
                }
            }
        }
    }

    /// Draw the one-probability of a fresh cell. For `MaesHybrid` this is
    /// the underlying cell model before enrollment; other kinds carry no
    /// enrollment structure, so the distribution itself is used.
    pub fn draw_one_probability<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::MaesHybrid { lambda1, lambda2 } => {
                Maes::new(*lambda1, *lambda2).draw_one_probability(rng)
            }
            _ => self.draw(rng),
        }
    }

    /// `n` i.i.d. draws from `f_P`, deterministic in `rng_seed`.
    pub fn sample(&self, rng_seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }

    /// Partition the state space into interval bins with conservative
    /// representatives; see [`QuantizedStateSpace`].
    ///
    /// Continuous kinds clip tails of mass `< eps/3` at `p*` and `p**` and
    /// place `n_bins` equidistant bins between them -- equidistant in the
    /// distribution's integration coordinate (`u = Phi^-1(p)` for
    /// `MaesHybrid`, `p` itself for piecewise densities) -- splitting any bin
    /// that would straddle 1/2. Atom kinds return their atoms as zero-width
    /// intervals with no tails, regardless of `eps`.
    pub fn quantize(&self, n_bins: usize, eps: f64) -> Result<QuantizedStateSpace> {
        match self {
            Self::Degenerate { p } => Ok(QuantizedStateSpace::from_atoms(&[(*p, 1.0)])),
            Self::Discrete { points } => Ok(QuantizedStateSpace::from_atoms(points)),
            Self::PiecewiseConstant {
                breakpoints,
                densities,
            } => {
                check_quantize_args(n_bins, eps)?;
                // Nudged inward so the clipped tails stay strictly under eps/3.
                let t = eps / 3.0 * (1.0 - 1e-9);
                let p_star = piecewise_quantile(breakpoints, densities, t);
                let p_dstar = piecewise_quantile(breakpoints, densities, 1.0 - t);
                let mut edges = equidistant_with_half(p_star, p_dstar, n_bins, 0.5);
                edges.dedup();
                let cdfs: Vec<f64> = edges
                    .iter()
                    .map(|&x| piecewise_cdf(breakpoints, densities, x))
                    .collect();
                QuantizedStateSpace::from_edges(&edges, &cdfs)
            }
            Self::MaesHybrid { lambda1, lambda2 } => {
                check_quantize_args(n_bins, eps)?;
                let m = Maes::new(*lambda1, *lambda2);
                let eps3 = eps / 3.0;
                let u_star = m.tail_cut_low(eps3)?;
                let u_dstar = m.tail_cut_high(eps3)?;
                let mut u_edges = equidistant_with_half(u_star, u_dstar, n_bins, 0.0);
                let mut edges: Vec<f64> = u_edges.drain(..).map(phi_cdf).collect();
                edges.dedup();
                let cdfs = m.cdf_err_many(&edges);
                QuantizedStateSpace::from_edges(&edges, &cdfs)
            }
        }
    }
}

fn check_prob(what: &'static str, p: f64) -> Result<()> {
    if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
        return Err(Error::Domain {
            what,
            value: p,
            domain: "[0, 1]",
        });
    }
    Ok(())
}

fn check_quantize_args(n_bins: usize, eps: f64) -> Result<()> {
    if n_bins < 1 {
        return Err(Error::Domain {
            what: "n_bins",
            value: n_bins as f64,
            domain: "[1, ..)",
        });
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain {
            what: "eps",
            value: eps,
            domain: "(0, 1)",
        });
    }
    Ok(())
}

/// Equidistant edges on `[lo, hi]` with `half` -- the image of p = 1/2 in
/// the caller's coordinate (0.5 in p-space, 0 in u-space) -- inserted when
/// it falls strictly inside, so no bin straddles 1/2.
fn equidistant_with_half(lo: f64, hi: f64, n_bins: usize, half: f64) -> Vec<f64> {
    let mut edges: Vec<f64> = (0..=n_bins)
        .map(|k| {
            if k == n_bins {
                hi
            } else {
                lo + (hi - lo) * k as f64 / n_bins as f64
            }
        })
        .collect();
    if lo < half && half < hi && !edges.contains(&half) {
        edges.push(half);
        edges.sort_by(f64::total_cmp);
    }
    edges
}

fn piecewise_density(breakpoints: &[f64], densities: &[f64], p: f64) -> f64 {
    if p < breakpoints[0] || p > breakpoints[breakpoints.len() - 1] {
        return 0.0;
    }
    // Right-open pieces; the final breakpoint belongs to the last piece.
    let idx = breakpoints
        .partition_point(|&b| b <= p)
        .min(densities.len())
        .saturating_sub(1);
    densities[idx.min(densities.len() - 1)]
}

fn piecewise_cdf(breakpoints: &[f64], densities: &[f64], x: f64) -> f64 {
    if x <= breakpoints[0] {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, &d) in densities.iter().enumerate() {
        let (a, b) = (breakpoints[i], breakpoints[i + 1]);
        if x >= b {
            acc += d * (b - a);
        } else {
            acc += d * (x - a);
            break;
        }
    }
    acc.min(1.0)
}

fn piecewise_quantile(breakpoints: &[f64], densities: &[f64], q: f64) -> f64 {
    let q = q.clamp(0.0, 1.0);
    let mut acc = 0.0;
    for (i, &d) in densities.iter().enumerate() {
        let (a, b) = (breakpoints[i], breakpoints[i + 1]);
        let piece = d * (b - a);
        if acc + piece >= q && piece > 0.0 {
            return a + (q - acc) / d;
        }
        acc += piece;
    }
    breakpoints[breakpoints.len() - 1]
}

/// One interval of a quantized state space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateInterval {
    pub lo: f64,
    pub hi: f64,
    /// Exact probability mass of `[lo, hi]` under the distribution.
    pub mass: f64,
    /// Capacity-minimizing representative: the endpoint closest to 1/2.
    pub rep_p: f64,
}

/// A finite partition of the clipped state space `[p*, p**]` into ordered,
/// disjoint intervals that never straddle 1/2, plus the clipped tail masses.
/// Interval masses and tails sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedStateSpace {
    pub intervals: Vec<StateInterval>,
    pub tail_mass_low: f64,
    pub tail_mass_high: f64,
}

impl QuantizedStateSpace {
    fn from_atoms(points: &[(f64, f64)]) -> Self {
        let intervals = points
            .iter()
            .map(|&(p, m)| StateInterval {
                lo: p,
                hi: p,
                mass: m,
                rep_p: p,
            })
            .collect();
        Self {
            intervals,
            tail_mass_low: 0.0,
            tail_mass_high: 0.0,
        }
    }

    fn from_edges(edges: &[f64], cdfs: &[f64]) -> Result<Self> {
        debug_assert_eq!(edges.len(), cdfs.len());
        if edges.len() < 2 {
            return Err(Error::Internal("quantization produced no intervals".into()));
        }
        let mut intervals = Vec::with_capacity(edges.len() - 1);
        for i in 0..edges.len() - 1 {
            let (lo, hi) = (edges[i], edges[i + 1]);
            let mass = (cdfs[i + 1] - cdfs[i]).max(0.0);
            let rep_p = if hi <= 0.5 {
                hi
            } else if lo >= 0.5 {
                lo
            } else {
                return Err(Error::Internal(format!(
                    "bin [{lo}, {hi}] straddles 1/2; edges must be pre-split"
                )));
            };
            intervals.push(StateInterval { lo, hi, mass, rep_p });
        }
        Ok(Self {
            intervals,
            tail_mass_low: cdfs[0],
            tail_mass_high: (1.0 - cdfs[cdfs.len() - 1]).max(0.0),
        })
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Index of the interval containing `p`; values outside the covered
    /// range (clipped tails, gaps between atoms) map to the nearest
    /// interval.
    pub fn bin_index(&self, p: f64) -> usize {
        let n = self.intervals.len();
        let idx = self.intervals.partition_point(|iv| iv.hi < p);
        if idx >= n {
            return n - 1;
        }
        if p >= self.intervals[idx].lo || idx == 0 {
            return idx;
        }
        // p fell in a gap between atom intervals; take the closer side.
        let below = &self.intervals[idx - 1];
        let here = &self.intervals[idx];
        if p - below.hi <= here.lo - p {
            idx - 1
        } else {
            idx
        }
    }

    /// Total interval mass plus tails; 1 up to accumulated rounding.
    pub fn total_mass(&self) -> f64 {
        self.intervals.iter().map(|iv| iv.mass).sum::<f64>()
            + self.tail_mass_low
            + self.tail_mass_high
    }
}

/// The SRAM hybrid cell model; all expectations are computed in the
/// standard-normal coordinate where the integrands are smooth.
struct Maes {
    l1: f64,
    l2: f64,
}

impl Maes {
    fn new(l1: f64, l2: f64) -> Self {
        Self { l1, l2 }
    }

    /// ln f_P1 at x = Phi(u).
    fn ln_f_one_at_u(&self, u: f64) -> f64 {
        let a = 1.0 - self.l1 * self.l1;
        if !u.is_finite() {
            // Sign of the dominant u^2 term decides the limit; at l1 == 1
            // the linear term takes over.
            return if a > 0.0 {
                f64::INFINITY
            } else if a < 0.0 {
                f64::NEG_INFINITY
            } else if self.l2 == 0.0 {
                0.0
            } else if (self.l2 > 0.0) == (u < 0.0) {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
        }
        let quad_term = if a == 0.0 { 0.0 } else { 0.5 * a * u * u };
        self.l1.ln() + quad_term - self.l1 * self.l2 * u - 0.5 * self.l2 * self.l2
    }

    #[cfg(test)]
    fn f_one(&self, x: f64) -> f64 {
        self.ln_f_one_at_u(phi_inv(x)).exp()
    }

    /// Crossover density f_P(x) = (1-x) (f_P1(x) + f_P1(1-x)).
    fn f_err(&self, x: f64) -> f64 {
        if x >= 1.0 {
            // (1-x) decays like phi(u)/u against the density's growth, so
            // the product vanishes at 1 for every l1 > 0.
            return 0.0;
        }
        let u = phi_inv(x);
        let sum = self.ln_f_one_at_u(u).exp() + self.ln_f_one_at_u(-u).exp();
        (1.0 - x) * sum
    }

    /// Analytic d/dx of `f_err`; may overflow to +-inf near the endpoints.
    fn f_err_deriv(&self, x: f64) -> f64 {
        if x <= 0.0 || x >= 1.0 {
            let inner = self.f_err_deriv(if x <= 0.0 { 1e-300 } else { 1.0 - 1e-16 });
            return if inner >= 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
        }
        let u = phi_inv(x);
        let pu = phi_pdf(u);
        let fa = self.ln_f_one_at_u(u).exp();
        let fb = self.ln_f_one_at_u(-u).exp();
        // d f_P1/dx = f_P1 (u - l1 (l1 u + l2)) / phi(u); the mirrored term
        // gets the reflected argument and a sign flip from the chain rule.
        let da = fa * (u - self.l1 * (self.l1 * u + self.l2)) / pu;
        let db_neg = fb * (-u - self.l1 * (-self.l1 * u + self.l2)) / pu;
        -(fa + fb) + (1.0 - x) * (da - db_neg)
    }

    /// E[g(Q)] over the one-probability law: substituting v = l1 u + l2
    /// turns it into a standard-normal expectation of g(Phi((v - l2)/l1)).
    fn expect_one_law<G: Fn(f64) -> f64>(&self, g: G, tol: f64) -> f64 {
        let (l1, l2) = (self.l1, self.l2);
        quad::integrate(
            |v| g(phi_cdf((v - l2) / l1)) * phi_pdf(v),
            -U_BOUND,
            U_BOUND,
            tol,
        )
    }

    /// E[g(P)] over the crossover law, via the enrollment identity
    /// E_err[g] = E_one[(1-q) g(q) + q g(1-q)].
    fn expect_err_law<G: Fn(f64) -> f64>(&self, g: G, tol: f64) -> f64 {
        self.expect_one_law(|q| (1.0 - q) * g(q) + q * g(1.0 - q), tol)
    }

    fn draw_one_probability<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v = sample_std_normal(rng);
        phi_cdf((v - self.l2) / self.l1)
    }

    /// Crossover cdf at each of `xs` (ascending). Shares one cumulative
    /// integration sweep across all evaluation points.
    ///
    /// F_P(x) = F_P1(x) - M(x) + (M(1) - M(1-x)) with
    /// M(x) = integral of t f_P1(t) dt from 0 to x, which becomes a
    /// cumulative normal-weighted integral of Phi((v - l2)/l1) after the
    /// v-substitution.
    fn cdf_err_many(&self, xs: &[f64]) -> Vec<f64> {
        let (l1, l2) = (self.l1, self.l2);
        let clamp_v = |v: f64| v.clamp(-U_BOUND, U_BOUND);
        let us: Vec<f64> = xs.iter().map(|&x| phi_inv(x)).collect();
        let mut vs: Vec<f64> = Vec::with_capacity(2 * us.len() + 2);
        vs.push(-U_BOUND);
        vs.push(U_BOUND);
        for &u in &us {
            // V(x) and V(1-x); the reflected argument uses -u directly to
            // dodge 1-x rounding at the tails.
            vs.push(clamp_v(l1 * u + l2));
            vs.push(clamp_v(-l1 * u + l2));
        }
        vs.sort_by(f64::total_cmp);
        vs.dedup();
        let cum = quad::cumulative(
            |v| phi_cdf((v - l2) / l1) * phi_pdf(v),
            &vs,
            DEFAULT_QUAD_TOL,
        );
        let m_at = |v: f64| -> f64 {
            let i = vs
                .binary_search_by(|a| a.total_cmp(&v))
                .expect("evaluation point was inserted");
            cum[i]
        };
        let m_total = cum[cum.len() - 1];
        xs.iter()
            .zip(&us)
            .map(|(&x, &u)| {
                if x <= 0.0 {
                    return 0.0;
                }
                if x >= 1.0 {
                    return 1.0;
                }
                let v_lo = clamp_v(l1 * u + l2);
                let v_hi = clamp_v(-l1 * u + l2);
                let f = phi_cdf(v_lo) - m_at(v_lo) + (m_total - m_at(v_hi));
                f.clamp(0.0, 1.0)
            })
            .collect()
    }

    /// Largest u with crossover-cdf(Phi(u)) strictly below `target`.
    /// Solves for a slightly smaller target so that quadrature noise in a
    /// later re-evaluation cannot push the tail back over budget.
    fn tail_cut_low(&self, target: f64) -> Result<f64> {
        let floor = -U_BOUND + 0.5;
        let aim = target * (1.0 - 1e-6);
        if self.cdf_err_many(&[phi_cdf(floor)])[0] >= aim {
            return Err(Error::Domain {
                what: "eps",
                value: 3.0 * target,
                domain: "tail cut representable in f64 for this distribution",
            });
        }
        let f = |u: f64| self.cdf_err_many(&[phi_cdf(u)])[0] - aim;
        Ok(bisect(f, floor, 0.0))
    }

    /// Smallest u with upper-tail mass strictly below `target`.
    fn tail_cut_high(&self, target: f64) -> Result<f64> {
        let ceil = U_BOUND - 0.5;
        let aim = target * (1.0 - 1e-6);
        if 1.0 - self.cdf_err_many(&[phi_cdf(ceil)])[0] >= aim {
            return Err(Error::Domain {
                what: "eps",
                value: 3.0 * target,
                domain: "tail cut representable in f64 for this distribution",
            });
        }
        // Upper-tail mass decreases in u; flip the sign to reuse bisect's
        // increasing-function contract. The upper cut can sit below p = 1/2
        // when the distribution carries little mass above it.
        let g = |u: f64| aim - (1.0 - self.cdf_err_many(&[phi_cdf(u)])[0]);
        Ok(bisect(g, -U_BOUND + 0.5, ceil))
    }
}

/// Root of an increasing function by bisection; assumes f(lo) < 0 <= f(hi).
fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo < 1e-11 * hi.abs().max(lo.abs()).max(1.0) {
            return mid;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Box-Muller standard normal draw from the uniform stream; keeps the crate
/// independent of RNG-version coupling in distribution crates.
pub(crate) fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.random();
        if u1 > 0.0 {
            let u2: f64 = rng.random();
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1: (f64, f64) = (0.1213, 0.021);

    fn maes() -> StateDistribution {
        StateDistribution::maes_hybrid(TABLE1.0, TABLE1.1).unwrap()
    }

    fn uniform01() -> StateDistribution {
        StateDistribution::piecewise_constant(vec![0.0, 1.0], vec![1.0]).unwrap()
    }

    /// Independent oracle: fixed-grid composite Simpson of the crossover
    /// density in u-coordinates, with phi(u) cancelled analytically so the
    /// integrand survives far past Phi underflow:
    /// f_err(Phi(u)) phi(u) = (1 - Phi(u)) l1 (phi(l1 u + l2) + phi(-l1 u + l2)).
    /// Integrates g(x) f_P(x) dx from 0 to Phi(u_hi).
    fn simpson_err_mass_upto(l1: f64, l2: f64, u_hi: f64, g: impl Fn(f64) -> f64) -> f64 {
        let n = 600_000;
        let (a, b) = (-330.0_f64, u_hi);
        let h = (b - a) / n as f64;
        let integrand = |u: f64| {
            let x = phi_cdf(u);
            (1.0 - x) * l1 * (phi_pdf(l1 * u + l2) + phi_pdf(-l1 * u + l2)) * g(x)
        };
        let mut acc = integrand(a) + integrand(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * integrand(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    fn simpson_err_mass(l1: f64, l2: f64, g: impl Fn(f64) -> f64) -> f64 {
        simpson_err_mass_upto(l1, l2, 330.0, g)
    }

    #[test]
    fn degenerate_pdf_is_flagged_atom() {
        let d = StateDistribution::degenerate(0.1).unwrap();
        assert_eq!(d.pdf(0.1).unwrap(), Density::Atom(1.0));
        assert_eq!(d.pdf(0.2).unwrap(), Density::Value(0.0));
    }

    #[test]
    fn uniform_pdf_is_one() {
        assert_eq!(uniform01().pdf(0.3).unwrap(), Density::Value(1.0));
    }

    #[test]
    fn pdf_domain_error() {
        assert!(matches!(
            uniform01().pdf(1.5),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(uniform01().pdf(-0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn discrete_pdf_is_kind_error() {
        let d = StateDistribution::discrete(vec![(0.1, 0.5), (0.4, 0.5)]).unwrap();
        assert!(matches!(d.pdf(0.1), Err(Error::Kind { .. })));
        assert_eq!(d.mass(0.1).unwrap(), 0.5);
        assert_eq!(d.mass(0.2).unwrap(), 0.0);
    }

    #[test]
    fn maes_pdf_normalizes() {
        // Adaptive evaluation of the mass must agree with the independent
        // fixed-grid oracle and with 1.
        let total = maes().expectation(|_| 1.0);
        assert!((total - 1.0).abs() < 1e-6, "adaptive mass {total}");
        let oracle = simpson_err_mass(TABLE1.0, TABLE1.1, |_| 1.0);
        assert!((oracle - 1.0).abs() < 1e-6, "oracle mass {oracle}");
    }

    #[test]
    fn maes_pdf_values_match_direct_formula() {
        // Spot-check f_err against its definition through f_one.
        let m = Maes::new(TABLE1.0, TABLE1.1);
        for &x in &[1e-6, 0.01, 0.3, 0.5, 0.7, 0.9999] {
            let direct = (1.0 - x) * (m.f_one(x) + m.f_one(1.0 - x));
            let got = m.f_err(x);
            assert!(
                ((got - direct) / direct.max(1e-300)).abs() < 1e-9,
                "x={x}: {got} vs {direct}"
            );
        }
        // Positive mass above one half: mid-tail density is nonzero.
        assert!(m.f_err(0.75) > 0.0);
    }

    #[test]
    fn mean_trivials() {
        assert_eq!(StateDistribution::degenerate(0.14).unwrap().mean(), 0.14);
        let d = StateDistribution::discrete(vec![(0.1, 0.5), (0.4, 0.5)]).unwrap();
        assert!((d.mean() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn maes_mean_matches_oracle() {
        let mean = maes().mean();
        let oracle = simpson_err_mass(TABLE1.0, TABLE1.1, |x| x);
        assert!(
            (mean - oracle).abs() < 1e-8,
            "mean {mean} vs oracle {oracle}"
        );
    }

    #[test]
    fn piecewise_mean_quadrature() {
        // Uniform on [0,1]: mean 1/2 exactly known.
        assert!((uniform01().mean() - 0.5).abs() < 1e-8);
        let d =
            StateDistribution::piecewise_constant(vec![0.1, 0.2], vec![10.0]).unwrap();
        assert!((d.mean() - 0.15).abs() < 1e-8);
    }

    #[test]
    fn sample_trivials_and_determinism() {
        let d = StateDistribution::degenerate(0.2).unwrap();
        assert_eq!(d.sample(7, 5), vec![0.2; 5]);
        let one = StateDistribution::discrete(vec![(0.1, 1.0)]).unwrap();
        assert_eq!(one.sample(7, 3), vec![0.1; 3]);
        let a = maes().sample(123, 64);
        let b = maes().sample(123, 64);
        assert_eq!(a, b);
        let c = maes().sample(124, 64);
        assert_ne!(a, c);
    }

    #[test]
    fn maes_sample_mean_within_three_standard_errors() {
        let n = 1_000_000;
        let xs = maes().sample(20_260_810, n);
        let emp: f64 = xs.iter().sum::<f64>() / n as f64;
        let var: f64 = xs.iter().map(|x| (x - emp) * (x - emp)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let mean = maes().mean();
        assert!(
            (emp - mean).abs() < 3.0 * se,
            "empirical {emp} vs {mean} (3se = {})",
            3.0 * se
        );
    }

    #[test]
    fn quantize_degenerate_single_interval() {
        let q = StateDistribution::degenerate(0.3)
            .unwrap()
            .quantize(16, 0.01)
            .unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q.intervals[0].mass, 1.0);
        assert!(q.intervals[0].lo <= 0.3 && 0.3 <= q.intervals[0].hi);
        assert_eq!(q.tail_mass_low + q.tail_mass_high, 0.0);
    }

    #[test]
    fn quantize_uniform_tail_cuts() {
        let q = uniform01().quantize(100, 0.06).unwrap();
        let lo = q.intervals.first().unwrap().lo;
        let hi = q.intervals.last().unwrap().hi;
        assert!((lo - 0.02).abs() < 1e-3, "p* = {lo}");
        assert!((hi - 0.98).abs() < 1e-3, "p** = {hi}");
        assert!(q.tail_mass_low < 0.02 && q.tail_mass_high < 0.02);
    }

    #[test]
    fn quantize_conserves_mass_and_splits_half() {
        for dist in [
            maes(),
            uniform01(),
            StateDistribution::piecewise_constant(vec![0.2, 0.8], vec![1.0 / 0.6]).unwrap(),
        ] {
            for n_bins in [7, 64, 1000] {
                let q = dist.quantize(n_bins, 1e-3).unwrap();
                assert!(
                    (q.total_mass() - 1.0).abs() < 1e-9,
                    "mass {} for {n_bins} bins",
                    q.total_mass()
                );
                for iv in &q.intervals {
                    assert!(iv.hi <= 0.5 || iv.lo >= 0.5, "straddling bin {iv:?}");
                    assert!(iv.lo <= iv.rep_p && iv.rep_p <= iv.hi);
                    let want = if iv.hi <= 0.5 { iv.hi } else { iv.lo };
                    assert_eq!(iv.rep_p, want);
                }
                for w in q.intervals.windows(2) {
                    assert!(w[0].hi <= w[1].lo + 1e-15, "order / overlap");
                }
            }
        }
    }

    #[test]
    fn quantize_maes_tails_under_budget() {
        let eps = 1e-3;
        let q = maes().quantize(64, eps).unwrap();
        assert!(q.tail_mass_low < eps / 3.0, "low tail {}", q.tail_mass_low);
        assert!(q.tail_mass_high < eps / 3.0, "high tail {}", q.tail_mass_high);
        // eps below the f64 tail-cut floor for this model is rejected.
        assert!(matches!(
            maes().quantize(64, 1e-7),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn quantize_discrete_atoms_reported_exactly() {
        let d = StateDistribution::discrete(vec![(0.0, 0.3), (0.5, 0.2), (1.0, 0.5)]).unwrap();
        let q = d.quantize(8, 1e-3).unwrap();
        assert_eq!(q.len(), 3);
        assert_eq!(q.tail_mass_low, 0.0);
        assert_eq!(q.tail_mass_high, 0.0);
        assert_eq!(q.intervals[0].rep_p, 0.0);
        assert_eq!(q.intervals[2].mass, 0.5);
    }

    #[test]
    fn bin_index_clamps_and_resolves_gaps() {
        let q = maes().quantize(32, 1e-3).unwrap();
        assert_eq!(q.bin_index(0.0), 0);
        assert_eq!(q.bin_index(1.0), q.len() - 1);
        let d = StateDistribution::discrete(vec![(0.1, 0.5), (0.9, 0.5)]).unwrap();
        let qa = d.quantize(4, 1e-3).unwrap();
        assert_eq!(qa.bin_index(0.2), 0);
        assert_eq!(qa.bin_index(0.85), 1);
    }

    #[test]
    fn mirror_mean_identity() {
        let cases = [
            StateDistribution::discrete(vec![(0.05, 0.25), (0.3, 0.5), (0.8, 0.25)]).unwrap(),
            StateDistribution::piecewise_constant(vec![0.1, 0.4, 0.9], vec![2.0, 0.8]).unwrap(),
            StateDistribution::degenerate(0.12).unwrap(),
        ];
        for d in cases {
            let r = d.reflected().unwrap();
            assert!(
                (r.mean() - (1.0 - d.mean())).abs() < 1e-8,
                "mirror mean for {d:?}"
            );
        }
        assert!(maes().reflected().is_err());
    }

    #[test]
    fn maes_cdf_matches_oracle() {
        let m = Maes::new(TABLE1.0, TABLE1.1);
        for &x in &[1e-4, 0.01, 0.2, 0.5, 0.9, 0.99] {
            let direct = simpson_err_mass_upto(TABLE1.0, TABLE1.1, phi_inv(x), |_| 1.0);
            let got = m.cdf_err_many(&[x])[0];
            assert!(
                (got - direct).abs() < 1e-8,
                "cdf({x}) = {got} vs oracle {direct}"
            );
        }
    }

    #[test]
    fn maes_pdf_derivative_matches_finite_difference() {
        let m = Maes::new(TABLE1.0, TABLE1.1);
        for &x in &[0.01_f64, 0.1, 0.3, 0.5, 0.8, 0.95] {
            let h = 1e-7 * x.max(0.1);
            let fd = (m.f_err(x + h) - m.f_err(x - h)) / (2.0 * h);
            let an = m.f_err_deriv(x);
            let scale = an.abs().max(fd.abs()).max(1e-6);
            assert!(
                ((an - fd) / scale).abs() < 1e-4,
                "x={x}: analytic {an} vs fd {fd}"
            );
        }
    }

    #[test]
    fn json_round_trip_and_field_names() {
        let cases = [
            (
                maes(),
                r#"{"kind":"maes_hybrid","lambda1":0.1213,"lambda2":0.021}"#,
            ),
            (
                StateDistribution::degenerate(0.25).unwrap(),
                r#"{"kind":"degenerate","p":0.25}"#,
            ),
            (
                StateDistribution::discrete(vec![(0.1, 0.5), (0.4, 0.5)]).unwrap(),
                r#"{"kind":"discrete","points":[[0.1,0.5],[0.4,0.5]]}"#,
            ),
            (
                uniform01(),
                r#"{"kind":"piecewise","breakpoints":[0.0,1.0],"densities":[1.0]}"#,
            ),
        ];
        for (dist, json) in cases {
            let parsed = StateDistribution::from_json(json).unwrap();
            assert_eq!(parsed, dist);
            let round = StateDistribution::from_json(&dist.to_json()).unwrap();
            assert_eq!(round, dist);
        }
    }

    #[test]
    fn json_rejects_unknown_fields_and_bad_configs() {
        assert!(StateDistribution::from_json(
            r#"{"kind":"degenerate","p":0.5,"bogus":1}"#
        )
        .is_err());
        assert!(StateDistribution::from_json(r#"{"kind":"nope","p":0.5}"#).is_err());
        assert!(StateDistribution::from_json(r#"{"kind":"maes_hybrid","lambda1":-1.0,"lambda2":0.0}"#).is_err());
        assert!(StateDistribution::from_json(
            r#"{"kind":"discrete","points":[[0.1,0.5],[0.4,0.6]]}"#
        )
        .is_err());
        assert!(StateDistribution::from_json(
            r#"{"kind":"piecewise","breakpoints":[0.0,1.0],"densities":[2.0]}"#
        )
        .is_err());
    }
}
