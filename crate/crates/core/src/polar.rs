//! Polar encoding, successive-cancellation decoding, and the interval-binned
//! multi-code scheme for the CSI-at-both-sides regime.
//!
//! Code construction uses the Bhattacharyya upper-bound recursion
//! `Z- <= 2Z - Z^2`, `Z+ = Z^2` from `Z = 2 sqrt(p (1-p))`: deterministic,
//! dependency-free, and accurate enough for desk-scale experiments. The
//! binned scheme quantizes the state space, designs one code per interval at
//! the interval's worst-case crossover, and routes symbols by their realized
//! state -- the rate-splitting construction that approaches `E[C_BSC(P)]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::capacity::h2;
use crate::channel::derived_rng;
use crate::state_models::{QuantizedStateSpace, StateDistribution, StateInterval};
use crate::{Error, Result};

/// Floor for folded crossover probabilities when forming LLRs; caps the
/// magnitude near 27 nats so certain-looking observations cannot produce
/// inf - inf during combining.
const LLR_P_FLOOR: f64 = 1e-12;

/// A polar code: block length, information set, and the BSC it was designed
/// for. Frozen positions hold `frozen_values` (all zero when empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarCodeSpec {
    pub block_len: usize,
    pub design_p: f64,
    /// Sorted indices of the information-carrying synthetic channels.
    pub info_set: Vec<usize>,
    /// One value per frozen position in ascending position order; empty
    /// means all zero.
    #[serde(default, skip_serializing_if = "all_zero")]
    pub frozen_values: Vec<u8>,
}

fn all_zero(v: &[u8]) -> bool {
    v.iter().all(|&b| b == 0)
}

impl PolarCodeSpec {
    pub fn info_len(&self) -> usize {
        self.info_set.len()
    }

    pub fn rate(&self) -> f64 {
        self.info_set.len() as f64 / self.block_len as f64
    }

    fn validate(&self) -> Result<()> {
        if !self.block_len.is_power_of_two() {
            return Err(Error::InvalidCode(format!(
                "block_len {} is not a power of two",
                self.block_len
            )));
        }
        if self.info_set.len() > self.block_len
            || self.info_set.windows(2).any(|w| w[0] >= w[1])
            || self.info_set.iter().any(|&i| i >= self.block_len)
        {
            return Err(Error::InvalidCode("malformed info_set".into()));
        }
        let n_frozen = self.block_len - self.info_set.len();
        if !self.frozen_values.is_empty() && self.frozen_values.len() != n_frozen {
            return Err(Error::InvalidCode(format!(
                "{} frozen values for {} frozen positions",
                self.frozen_values.len(),
                n_frozen
            )));
        }
        Ok(())
    }
}

/// Bhattacharyya parameters of all synthetic channels, in successive-
/// cancellation decoding order, for a BSC with crossover `design_p`.
pub fn bhattacharyya_parameters(block_len: usize, design_p: f64) -> Vec<f64> {
    let z0 = 2.0 * (design_p * (1.0 - design_p)).sqrt();
    let mut z = vec![z0];
    let mut levels = block_len;
    while levels > 1 {
        let mut next = Vec::with_capacity(z.len() * 2);
        for &zi in &z {
            // Degraded (first) then upgraded (second) child: the decoder's
            // leaf order expands the same way, most significant split first.
            next.push((2.0 * zi - zi * zi).clamp(0.0, 1.0));
            next.push((zi * zi).clamp(0.0, 1.0));
        }
        z = next;
        levels /= 2;
    }
    z
}

/// Construct a polar code for a BSC: the `ceil(target_rate * block_len)`
/// synthetic channels with the smallest Bhattacharyya upper bounds carry
/// information. Full ties (for example `design_p = 0`) resolve toward the
/// largest indices.
pub fn construct_polar(block_len: usize, design_p: f64, target_rate: f64) -> Result<PolarCodeSpec> {
    if !block_len.is_power_of_two() || block_len == 0 {
        return Err(Error::InvalidCode(format!(
            "block_len {block_len} is not a power of two"
        )));
    }
    if !(design_p.is_finite() && (0.0..=0.5).contains(&design_p)) {
        return Err(Error::InvalidCode(format!(
            "design_p {design_p} outside [0, 0.5]"
        )));
    }
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::InvalidCode(format!(
            "target_rate {target_rate} outside (0, 1)"
        )));
    }
    let k = (target_rate * block_len as f64).ceil() as usize;
    let z = bhattacharyya_parameters(block_len, design_p);
    let mut order: Vec<usize> = (0..block_len).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(b.cmp(&a)));
    let mut info_set: Vec<usize> = order[..k].to_vec();
    info_set.sort_unstable();
    Ok(PolarCodeSpec {
        block_len,
        design_p,
        info_set,
        frozen_values: Vec::new(),
    })
}

/// The polar butterfly `x = u F^{(x) log n}`; its own inverse over GF(2).
pub fn polar_transform(u: &[u8]) -> Vec<u8> {
    debug_assert!(u.len().is_power_of_two());
    let mut x = u.to_vec();
    let n = x.len();
    let mut step = 1;
    while step < n {
        let mut i = 0;
        while i < n {
            for k in i..i + step {
                x[k] ^= x[k + step];
            }
            i += 2 * step;
        }
        step *= 2;
    }
    x
}

/// Encode `message` (one bit per info position): frozen values elsewhere,
/// then the butterfly transform.
pub fn polar_encode(spec: &PolarCodeSpec, message: &[u8]) -> Result<Vec<u8>> {
    spec.validate()?;
    if message.len() != spec.info_set.len() {
        return Err(Error::LengthMismatch {
            what: "message",
            expected: spec.info_set.len(),
            got: message.len(),
        });
    }
    let u = place_u_domain(spec, message);
    Ok(polar_transform(&u))
}

fn place_u_domain(spec: &PolarCodeSpec, message: &[u8]) -> Vec<u8> {
    let mut u = vec![0u8; spec.block_len];
    let mut info_iter = spec.info_set.iter().copied().peekable();
    let mut frozen_pos = 0usize;
    let mut msg_pos = 0usize;
    for (i, slot) in u.iter_mut().enumerate() {
        if info_iter.peek() == Some(&i) {
            info_iter.next();
            *slot = message[msg_pos];
            msg_pos += 1;
        } else {
            *slot = spec.frozen_values.get(frozen_pos).copied().unwrap_or(0);
            frozen_pos += 1;
        }
    }
    u
}

/// Per-bit channel knowledge available to the decoder.
#[derive(Debug, Clone, Copy)]
pub enum CrossoverProfile<'a> {
    /// One crossover probability for every position.
    Uniform(f64),
    /// The realized state of each position (decoder CSI).
    PerBit(&'a [f64]),
}

/// Successive-cancellation decode of `received` under the given crossover
/// knowledge; returns the message bits.
///
/// Probabilities must lie in `[0, 1)`; a probability above one half is
/// folded internally (the received bit flips and `1 - p` is used), which is
/// the decoder-CSI normalization. Exactly 1 is rejected -- fold first.
pub fn polar_decode(
    spec: &PolarCodeSpec,
    received: &[u8],
    profile: CrossoverProfile,
) -> Result<Vec<u8>> {
    spec.validate()?;
    if received.len() != spec.block_len {
        return Err(Error::LengthMismatch {
            what: "received word",
            expected: spec.block_len,
            got: received.len(),
        });
    }
    if let CrossoverProfile::PerBit(ps) = profile {
        if ps.len() != spec.block_len {
            return Err(Error::LengthMismatch {
                what: "per-bit probabilities",
                expected: spec.block_len,
                got: ps.len(),
            });
        }
    }
    let n = spec.block_len;
    let mut llrs = Vec::with_capacity(n);
    for i in 0..n {
        let p = match profile {
            CrossoverProfile::Uniform(p) => p,
            CrossoverProfile::PerBit(ps) => ps[i],
        };
        if !(p.is_finite() && (0.0..1.0).contains(&p)) {
            return Err(Error::Domain {
                what: "per_bit_p",
                value: p,
                domain: "[0, 1) -- fold p = 1 first",
            });
        }
        let (y, p) = if p > 0.5 {
            (received[i] ^ 1, 1.0 - p)
        } else {
            (received[i], p)
        };
        debug_assert!(received[i] <= 1);
        let mag = ((1.0 - p) / p.max(LLR_P_FLOOR)).ln();
        llrs.push(if y == 1 { -mag } else { mag });
    }

    let mut is_frozen = vec![true; n];
    for &i in &spec.info_set {
        is_frozen[i] = false;
    }
    let mut frozen_at = vec![0u8; n];
    if !spec.frozen_values.is_empty() {
        let mut fi = 0;
        for i in 0..n {
            if is_frozen[i] {
                frozen_at[i] = spec.frozen_values[fi];
                fi += 1;
            }
        }
    }

    let mut u_hat = vec![0u8; n];
    sc_recurse(&llrs, 0, &is_frozen, &frozen_at, &mut u_hat);
    Ok(spec.info_set.iter().map(|&i| u_hat[i]).collect())
}

/// Min-sum check-node combine.
fn f_combine(a: f64, b: f64) -> f64 {
    let s = if (a < 0.0) ^ (b < 0.0) { -1.0 } else { 1.0 };
    s * a.abs().min(b.abs())
}

/// Decode a segment; returns its hard codeword-domain bits and writes the
/// u-domain decisions for `[base, base + llrs.len())` into `u_hat`.
fn sc_recurse(
    llrs: &[f64],
    base: usize,
    is_frozen: &[bool],
    frozen_at: &[u8],
    u_hat: &mut [u8],
) -> Vec<u8> {
    let n = llrs.len();
    if n == 1 {
        let bit = if is_frozen[base] {
            frozen_at[base]
        } else if llrs[0] < 0.0 {
            1
        } else {
            0
        };
        u_hat[base] = bit;
        return vec![bit];
    }
    let h = n / 2;
    let mut combined = Vec::with_capacity(h);
    for i in 0..h {
        combined.push(f_combine(llrs[i], llrs[i + h]));
    }
    let left_x = sc_recurse(&combined, base, is_frozen, frozen_at, u_hat);
    combined.clear();
    for i in 0..h {
        let signed = if left_x[i] == 1 { -llrs[i] } else { llrs[i] };
        combined.push(signed + llrs[i + h]);
    }
    let right_x = sc_recurse(&combined, base + h, is_frozen, frozen_at, u_hat);
    let mut x = Vec::with_capacity(n);
    for i in 0..h {
        x.push(left_x[i] ^ right_x[i]);
    }
    x.extend_from_slice(&right_x);
    x
}

/// One interval's coding assignment inside a [`BinnedCodePlan`].
#[derive(Debug, Clone, PartialEq)]
pub struct BinAssignment {
    pub interval: StateInterval,
    /// `None` when the interval's worst-case capacity cannot carry even one
    /// information bit at the planned rate; such symbols ride uncoded.
    pub code: Option<PolarCodeSpec>,
}

/// The interval-binned multi-code plan: one polar code per surviving bin,
/// designed at the bin's folded worst-case crossover.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedCodePlan {
    pub assignments: Vec<BinAssignment>,
    /// Expected symbols per bin over one block budget.
    pub allocation: Vec<f64>,
    pub block_budget: usize,
    pub rate_margin: f64,
    /// Bins merged away because their expected occupancy was below one
    /// sub-block's worth of symbols.
    pub n_merged: usize,
    /// Sum of mass * rate over coded bins, in bits per channel use.
    pub planned_rate: f64,
    bins: QuantizedStateSpace,
}

impl BinnedCodePlan {
    pub fn bins(&self) -> &QuantizedStateSpace {
        &self.bins
    }
}

const MIN_BIN_OCCUPANCY: f64 = 64.0;
const MAX_SUBBLOCK_LEN: usize = 8192;

/// Quantize the state space and assign each bin a polar code at rate
/// `(1 - H2(design_p)) (1 - rate_margin)` for the bin's conservative
/// representative. Bins expecting fewer than 64 symbols per block budget
/// are merged toward their worse-crossover neighbor.
pub fn plan_binned_codes(
    dist: &StateDistribution,
    block_budget: usize,
    n_bins: usize,
    eps: f64,
    rate_margin: f64,
) -> Result<BinnedCodePlan> {
    if block_budget < n_bins.max(1) * 64 {
        return Err(Error::Domain {
            what: "block_budget",
            value: block_budget as f64,
            domain: "at least 64 symbols per requested bin",
        });
    }
    if !(0.0..1.0).contains(&rate_margin) {
        return Err(Error::Domain {
            what: "rate_margin",
            value: rate_margin,
            domain: "[0, 1)",
        });
    }
    let q = dist.quantize(n_bins, eps)?;
    let merged = merge_starved_bins(&q, block_budget as f64);
    let n_merged = q.len() - merged.intervals.len();

    let mut assignments = Vec::with_capacity(merged.intervals.len());
    let mut allocation = Vec::with_capacity(merged.intervals.len());
    let mut planned_rate = 0.0;
    for iv in &merged.intervals {
        let occupancy = iv.mass * block_budget as f64;
        allocation.push(occupancy);
        let design_p = iv.rep_p.min(1.0 - iv.rep_p).clamp(0.0, 0.5);
        let block_len = subblock_len(occupancy);
        let rate = (1.0 - h2(design_p)) * (1.0 - rate_margin);
        let k = (rate * block_len as f64).floor() as usize;
        let code = if k == 0 || block_len < 2 {
            None
        } else {
            let spec = construct_polar(block_len, design_p, k as f64 / block_len as f64)?;
            planned_rate += iv.mass * spec.rate();
            Some(spec)
        };
        assignments.push(BinAssignment {
            interval: *iv,
            code,
        });
    }
    Ok(BinnedCodePlan {
        assignments,
        allocation,
        block_budget,
        rate_margin,
        n_merged,
        planned_rate,
        bins: merged,
    })
}

fn subblock_len(occupancy: f64) -> usize {
    let cap = occupancy.max(0.0).min(MAX_SUBBLOCK_LEN as f64) as usize;
    if cap < 2 {
        return 0;
    }
    let mut bl = cap.next_power_of_two();
    if bl > cap {
        bl /= 2;
    }
    bl.max(2)
}

/// Merge intervals whose expected occupancy is under one sub-block, pushing
/// mass toward the half's worse-crossover side so representatives stay
/// conservative.
fn merge_starved_bins(q: &QuantizedStateSpace, budget: f64) -> QuantizedStateSpace {
    let (left, right): (Vec<StateInterval>, Vec<StateInterval>) =
        q.intervals.iter().partition(|iv| iv.hi <= 0.5);

    fn sweep(ivs: &[StateInterval], budget: f64, toward_hi: bool) -> Vec<StateInterval> {
        if ivs.is_empty() {
            return Vec::new();
        }
        // Walk from the better-crossover edge toward the worse one,
        // accumulating until each merged bin meets the occupancy floor.
        let ordered: Vec<&StateInterval> = if toward_hi {
            ivs.iter().collect()
        } else {
            ivs.iter().rev().collect()
        };
        let mut out: Vec<StateInterval> = Vec::new();
        let mut acc: Option<StateInterval> = None;
        for iv in ordered {
            let merged = match acc.take() {
                None => *iv,
                Some(a) => StateInterval {
                    lo: a.lo.min(iv.lo),
                    hi: a.hi.max(iv.hi),
                    mass: a.mass + iv.mass,
                    rep_p: if toward_hi {
                        a.hi.max(iv.hi)
                    } else {
                        a.lo.min(iv.lo)
                    },
                },
            };
            if merged.mass * budget >= MIN_BIN_OCCUPANCY {
                out.push(merged);
            } else {
                acc = Some(merged);
            }
        }
        if let Some(a) = acc {
            // Leftover starved mass joins the last formed bin; the merged
            // representative stays the worse endpoint of the union.
            match out.last_mut() {
                Some(last) => {
                    last.lo = last.lo.min(a.lo);
                    last.hi = last.hi.max(a.hi);
                    last.mass += a.mass;
                    last.rep_p = if toward_hi { last.hi } else { last.lo };
                }
                None => out.push(a),
            }
        }
        if !toward_hi {
            out.reverse();
        }
        out
    }

    let mut intervals = sweep(&left, budget, true);
    intervals.extend(sweep(&right, budget, false));
    QuantizedStateSpace {
        intervals,
        tail_mass_low: q.tail_mass_low,
        tail_mass_high: q.tail_mass_high,
    }
}

/// Outcome of a Monte-Carlo run of the binned scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionStats {
    /// Attempted information bits per channel use over the whole run.
    pub aggregate_rate: f64,
    /// Failed sub-blocks over completed sub-blocks.
    pub block_error_rate: f64,
    pub completed_subblocks: usize,
    pub failed_subblocks: usize,
    /// Symbols stranded in partially filled sub-blocks at the end of the
    /// run; counted, never silently dropped.
    pub deferred_symbols: usize,
    pub total_uses: usize,
}

/// Run the binned scheme: sample states, route symbols to their bin's code
/// stream (both sides know the states), encode and decode each filled
/// sub-block with per-bit state knowledge, and tally rate and errors.
pub fn run_binned_transmission(
    plan: &BinnedCodePlan,
    dist: &StateDistribution,
    n_blocks: usize,
    seed: u64,
) -> Result<TransmissionStats> {
    let n_bins = plan.assignments.len();
    let mut buffers: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    let mut completed = 0usize;
    let mut failed = 0usize;
    let mut info_bits = 0usize;
    let mut subblock_counter = 0u64;

    for block in 0..n_blocks {
        let mut state_rng = derived_rng(seed, "binned-states", block as u64);
        for _ in 0..plan.block_budget {
            let p = dist.draw(&mut state_rng);
            let k = plan.bins.bin_index(p);
            let Some(code) = &plan.assignments[k].code else {
                continue; // uncoded bin: the use is spent, nothing carried
            };
            buffers[k].push(p);
            if buffers[k].len() == code.block_len {
                let states: Vec<f64> = buffers[k].drain(..).collect();
                let ok = run_subblock(code, &states, seed, subblock_counter)?;
                subblock_counter += 1;
                completed += 1;
                info_bits += code.info_len();
                if !ok {
                    failed += 1;
                }
            }
        }
    }

    let deferred_symbols = buffers.iter().map(Vec::len).sum();
    let total_uses = n_blocks * plan.block_budget;
    Ok(TransmissionStats {
        aggregate_rate: info_bits as f64 / total_uses.max(1) as f64,
        block_error_rate: if completed > 0 {
            failed as f64 / completed as f64
        } else {
            0.0
        },
        completed_subblocks: completed,
        failed_subblocks: failed,
        deferred_symbols,
        total_uses,
    })
}

/// Encode a random message over the buffered states, push it through the
/// channel, decode with full state knowledge. CSI normalization happens
/// here: states above one half flip the received bit and fold.
fn run_subblock(code: &PolarCodeSpec, states: &[f64], seed: u64, counter: u64) -> Result<bool> {
    let mut msg_rng = derived_rng(seed, "binned-message", counter);
    let mut noise_rng = derived_rng(seed, "binned-noise", counter);
    let message: Vec<u8> = (0..code.info_len())
        .map(|_| msg_rng.random_range(0..2) as u8)
        .collect();
    let x = polar_encode(code, &message)?;
    let mut received = Vec::with_capacity(code.block_len);
    let mut folded_p = Vec::with_capacity(code.block_len);
    for i in 0..code.block_len {
        let p = states[i];
        let y = x[i] ^ u8::from(noise_rng.random::<f64>() < p);
        if p > 0.5 {
            received.push(y ^ 1);
            folded_p.push(1.0 - p);
        } else {
            received.push(y);
            folded_p.push(p);
        }
    }
    let decoded = polar_decode(code, &received, CrossoverProfile::PerBit(&folded_p))?;
    Ok(decoded == message)
}
