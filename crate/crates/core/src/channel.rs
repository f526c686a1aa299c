//! Bit-exact VBSC simulation and a Monte-Carlo mutual-information oracle.
//!
//! Every stochastic ingredient pulls from its own ChaCha stream derived from
//! the master seed, so changing the input word never perturbs the state
//! sequence in A/B comparisons, and every trace replays exactly.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::capacity::CsiMode;
use crate::state_models::StateDistribution;
use crate::{Error, Result};

/// One block transmission: states, channel inputs, outputs, and what the
/// sides could see. Replayable from `(seed, csi_mode, inputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace {
    /// Per-use crossover probability `p_i`.
    pub states: Vec<f64>,
    /// Bits on the wire. Under `EncoderCausal` these are the post-mapper
    /// symbols; the caller's bits are the auxiliary input `u^n`.
    pub inputs: Vec<u8>,
    pub outputs: Vec<u8>,
    pub csi_mode: CsiMode,
    pub seed: u64,
}

/// Derive an independent ChaCha stream from a master seed, a purpose label,
/// and an index (block number, read counter, ...).
pub(crate) fn derived_rng(seed: u64, label: &str, index: u64) -> ChaCha12Rng {
    let mut h = Sha256::new();
    h.update(b"vbsc-stream");
    h.update(label.as_bytes());
    h.update(seed.to_le_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(key)
}

/// The per-symbol strategy turning causal state knowledge into a
/// state-free channel on the auxiliary input: transmit `u` as-is up to the
/// threshold, inverted above it. The threshold is fixed at 1/2 -- the point
/// where inverting starts paying -- and ties keep `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapperPolicy {
    pub threshold: f64,
}

impl Default for MapperPolicy {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

impl MapperPolicy {
    pub fn map(&self, u: u8, p: f64) -> Result<u8> {
        debug_assert!(u <= 1);
        if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
            return Err(Error::Domain {
                what: "p",
                value: p,
                domain: "[0, 1]",
            });
        }
        Ok(if p <= self.threshold { u } else { 1 - u })
    }
}

/// Shannon-strategy mapper for causal encoder CSI with the standard
/// half-point threshold.
pub fn shannon_mapper(u: u8, p: f64) -> Result<u8> {
    MapperPolicy::default().map(u, p)
}

/// Crossover probability of the effective `U -> Y` BSC induced by the
/// mapper: `E[min(P, 1-P)]`.
pub fn effective_bsc_crossover(dist: &StateDistribution) -> f64 {
    dist.expectation(|p| p.min(1.0 - p))
}

/// Transmit `input` over the VBSC.
///
/// States are drawn i.i.d. from `dist` on one stream, flip draws on an
/// independent stream. Under `CsiMode::EncoderCausal` the caller's bits are
/// interpreted as the auxiliary word `u^n` and the recorded inputs are the
/// mapper outputs; every other mode sends the bits untouched (the mode only
/// records who was allowed to look at the states).
pub fn transmit(
    dist: &StateDistribution,
    input: &[u8],
    mode: CsiMode,
    seed: u64,
) -> ChannelTrace {
    let mut state_rng = derived_rng(seed, "states", 0);
    let mut noise_rng = derived_rng(seed, "noise", 0);
    let n = input.len();
    let mut states = Vec::with_capacity(n);
    let mut inputs = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    for &bit in input {
        debug_assert!(bit <= 1);
        let p = dist.draw(&mut state_rng);
        let x = if mode == CsiMode::EncoderCausal {
            shannon_mapper(bit, p).expect("state within [0,1]")
        } else {
            bit
        };
        let flip = noise_rng.random::<f64>() < p;
        states.push(p);
        inputs.push(x);
        outputs.push(x ^ u8::from(flip));
    }
    ChannelTrace {
        states,
        inputs,
        outputs,
        csi_mode: mode,
        seed,
    }
}

impl ChannelTrace {
    /// CSV export: a JSON header line with mode and seed, a column header,
    /// then one row per use.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "# {{\"mode\":\"{}\",\"seed\":{}}}",
            self.csi_mode, self.seed
        )?;
        writeln!(w, "i,p_i,x_i,y_i")?;
        for i in 0..self.states.len() {
            writeln!(
                w,
                "{},{},{},{}",
                i, self.states[i], self.inputs[i], self.outputs[i]
            )?;
        }
        Ok(())
    }
}

/// A plug-in mutual-information estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Conditioning bins used for the decoder-side estimates.
pub const DEFAULT_MI_STATE_BINS: usize = 64;

/// Monte-Carlo plug-in estimate of the per-use information rate under
/// uniform inputs:
///
/// * `None` -- `I(X;Y)`;
/// * `EncoderCausal` -- `I(U;Y)` through the mapper;
/// * `Decoder` / `Both` -- `I(X;Y|P)` with the state quantized onto the
///   `state_models` partition (plug-in over finite bins);
/// * `EncoderNonCausal` -- rejected, no single-letter oracle exists here.
///
/// The standard error comes from the empirical variance of the pointwise
/// log-ratio whose mean the estimator reports.
pub fn estimate_mutual_information(
    dist: &StateDistribution,
    mode: CsiMode,
    n_samples: usize,
    seed: u64,
) -> Result<MiEstimate> {
    estimate_mutual_information_binned(dist, mode, n_samples, seed, DEFAULT_MI_STATE_BINS)
}

/// Same as [`estimate_mutual_information`] with an explicit conditioning
/// bin count for the decoder-side modes.
pub fn estimate_mutual_information_binned(
    dist: &StateDistribution,
    mode: CsiMode,
    n_samples: usize,
    seed: u64,
    n_state_bins: usize,
) -> Result<MiEstimate> {
    if n_samples < 10_000 {
        return Err(Error::Domain {
            what: "n_samples",
            value: n_samples as f64,
            domain: "[10^4, ..)",
        });
    }
    let conditioned = match mode {
        CsiMode::EncoderNonCausal => {
            return Err(Error::UnsupportedMode(
                "enc-noncausal has no single-letter Monte-Carlo oracle",
            ))
        }
        CsiMode::Decoder | CsiMode::Both => true,
        CsiMode::None | CsiMode::EncoderCausal => false,
    };
    let bins = if conditioned {
        Some(dist.quantize(n_state_bins, crate::capacity::DEFAULT_EPS)?)
    } else {
        None
    };
    let n_bins = bins.as_ref().map_or(1, |q| q.len());

    let mut state_rng = derived_rng(seed, "states", 0);
    let mut noise_rng = derived_rng(seed, "noise", 0);
    let mut input_rng = derived_rng(seed, "inputs", 0);

    // counts[k][x][y]
    let mut counts = vec![[[0u64; 2]; 2]; n_bins];
    for _ in 0..n_samples {
        let p = dist.draw(&mut state_rng);
        let b: u8 = input_rng.random_range(0..2);
        let x = if mode == CsiMode::EncoderCausal {
            shannon_mapper(b, p).expect("state within [0,1]")
        } else {
            b
        };
        let y = x ^ u8::from(noise_rng.random::<f64>() < p);
        let k = bins.as_ref().map_or(0, |q| q.bin_index(p));
        // For the causal-encoder mode the informational input is u = b.
        let xi = if mode == CsiMode::EncoderCausal { b } else { x };
        counts[k][xi as usize][y as usize] += 1;
    }

    // Plug-in conditional MI = E[log2 p(x,y|k) / (p(x|k) p(y|k))]; the same
    // pointwise log-ratio also supplies the variance for the standard error.
    let n_f = n_samples as f64;
    let mut mean = 0.0;
    let mut mean_sq = 0.0;
    for table in &counts {
        let k_total: u64 = table.iter().flatten().sum();
        if k_total == 0 {
            continue;
        }
        let kt = k_total as f64;
        let px = [
            (table[0][0] + table[0][1]) as f64 / kt,
            (table[1][0] + table[1][1]) as f64 / kt,
        ];
        let py = [
            (table[0][0] + table[1][0]) as f64 / kt,
            (table[0][1] + table[1][1]) as f64 / kt,
        ];
        for x in 0..2 {
            for y in 0..2 {
                let c = table[x][y];
                if c == 0 {
                    continue;
                }
                let pxy = c as f64 / kt;
                let l = (pxy / (px[x] * py[y])).log2();
                let w = c as f64 / n_f;
                mean += w * l;
                mean_sq += w * l * l;
            }
        }
    }
    let var = (mean_sq - mean * mean).max(0.0);
    Ok(MiEstimate {
        estimate: mean,
        std_error: (var / n_f).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity;

    fn maes() -> StateDistribution {
        StateDistribution::maes_hybrid(0.1213, 0.021).unwrap()
    }

    fn bits(s: &[u8]) -> Vec<u8> {
        s.to_vec()
    }

    #[test]
    fn noiseless_channel_copies_input() {
        let d = StateDistribution::degenerate(0.0).unwrap();
        let t = transmit(&d, &bits(&[0, 1, 1, 0, 1]), CsiMode::None, 1);
        assert_eq!(t.outputs, t.inputs);
    }

    #[test]
    fn always_flip_channel_complements() {
        let d = StateDistribution::degenerate(1.0).unwrap();
        let input = bits(&[0, 1, 1, 0]);
        let t = transmit(&d, &input, CsiMode::None, 1);
        let complemented: Vec<u8> = input.iter().map(|b| 1 - b).collect();
        assert_eq!(t.outputs, complemented);
    }

    #[test]
    fn mapper_inverts_then_channel_flips_back() {
        // p = 1 everywhere: mapper sends the complement, the channel flips
        // it again, so the receiver sees the caller's u bits exactly.
        let d = StateDistribution::degenerate(1.0).unwrap();
        let u = bits(&[0, 1, 0, 0, 1, 1]);
        let t = transmit(&d, &u, CsiMode::EncoderCausal, 3);
        assert_eq!(t.outputs, u);
        let mapped: Vec<u8> = u.iter().map(|b| 1 - b).collect();
        assert_eq!(t.inputs, mapped);
    }

    #[test]
    fn transmit_replays_deterministically() {
        let t1 = transmit(&maes(), &bits(&[1, 0, 1, 1]), CsiMode::Decoder, 99);
        let t2 = transmit(&maes(), &bits(&[1, 0, 1, 1]), CsiMode::Decoder, 99);
        assert_eq!(t1, t2);
        // Same seed, different input: identical state sequence.
        let t3 = transmit(&maes(), &bits(&[0, 0, 0, 0]), CsiMode::Decoder, 99);
        assert_eq!(t1.states, t3.states);
    }

    #[test]
    fn mapper_values() {
        assert_eq!(shannon_mapper(0, 0.3).unwrap(), 0);
        assert_eq!(shannon_mapper(0, 0.7).unwrap(), 1);
        assert_eq!(shannon_mapper(1, 0.5).unwrap(), 1); // tie keeps u
        assert!(shannon_mapper(0, 1.5).is_err());
    }

    #[test]
    fn effective_crossover_values() {
        let d = StateDistribution::degenerate(0.9).unwrap();
        assert!((effective_bsc_crossover(&d) - 0.1).abs() < 1e-15);
        let lower_half =
            StateDistribution::discrete(vec![(0.1, 0.5), (0.4, 0.5)]).unwrap();
        assert!((effective_bsc_crossover(&lower_half) - lower_half.mean()).abs() < 1e-15);
        // Through the mapped-channel identity, 1 - H2 of the effective
        // crossover is the causal-encoder capacity.
        let q = effective_bsc_crossover(&maes());
        let c = capacity::bsc_capacity(q).unwrap();
        assert!((c - 0.7649).abs() < 0.002, "got {c}");
    }

    #[test]
    fn flip_rate_tracks_recorded_state() {
        // Bin uses by state and compare empirical flip rates; 3-sigma band.
        let d = StateDistribution::discrete(vec![(0.05, 0.4), (0.3, 0.3), (0.8, 0.3)]).unwrap();
        let n = 60_000;
        let input = vec![0u8; n];
        let t = transmit(&d, &input, CsiMode::None, 7);
        for &(p, _) in [(0.05, 0.0), (0.3, 0.0), (0.8, 0.0)].iter() {
            let idx: Vec<usize> = (0..n).filter(|&i| t.states[i] == p).collect();
            let flips = idx.iter().filter(|&&i| t.outputs[i] != t.inputs[i]).count();
            let m = idx.len() as f64;
            let rate = flips as f64 / m;
            let sigma = (p * (1.0 - p) / m).sqrt();
            assert!(
                (rate - p).abs() < 3.0 * sigma,
                "state {p}: rate {rate}, sigma {sigma}"
            );
        }
    }

    #[test]
    fn mapped_channel_is_symmetric_bsc() {
        let dist = StateDistribution::discrete(vec![(0.1, 0.4), (0.6, 0.3), (0.95, 0.3)]).unwrap();
        let n = 200_000;
        let mut input = Vec::with_capacity(n);
        let mut rng = derived_rng(11, "test-input", 0);
        for _ in 0..n {
            input.push(rng.random_range(0..2) as u8);
        }
        let t = transmit(&dist, &input, CsiMode::EncoderCausal, 5);
        let mut cross = [[0u64; 2]; 2]; // [u][y != u]
        for i in 0..n {
            cross[input[i] as usize][usize::from(t.outputs[i] != input[i])] += 1;
        }
        let q = effective_bsc_crossover(&dist);
        for (u, row) in cross.iter().enumerate() {
            let total = (row[0] + row[1]) as f64;
            let rate = row[1] as f64 / total;
            let sigma = (q * (1.0 - q) / total).sqrt();
            assert!(
                (rate - q).abs() < 3.0 * sigma,
                "u={u}: rate {rate} vs q {q}"
            );
        }
    }

    #[test]
    fn uniform_inputs_give_uniform_outputs() {
        for mode in [CsiMode::None, CsiMode::EncoderCausal] {
            let n = 200_000;
            let mut input = Vec::with_capacity(n);
            let mut rng = derived_rng(13, "test-input", 1);
            for _ in 0..n {
                input.push(rng.random_range(0..2) as u8);
            }
            let t = transmit(&maes(), &input, mode, 17);
            let ones: u64 = t.outputs.iter().map(|&b| b as u64).sum();
            let rate = ones as f64 / n as f64;
            let sigma = (0.25 / n as f64).sqrt();
            assert!(
                (rate - 0.5).abs() < 3.0 * sigma,
                "{mode}: P(Y=1) = {rate}"
            );
        }
    }

    #[test]
    fn mi_useless_and_perfect_channels() {
        let useless = StateDistribution::degenerate(0.5).unwrap();
        let mi = estimate_mutual_information(&useless, CsiMode::None, 50_000, 2).unwrap();
        assert!(mi.estimate < 3.0 * mi.std_error.max(1e-4), "{mi:?}");

        let perfect = StateDistribution::degenerate(0.0).unwrap();
        let mi = estimate_mutual_information(&perfect, CsiMode::None, 50_000, 2).unwrap();
        assert!((mi.estimate - 1.0).abs() < (3.0 * mi.std_error).max(1e-4), "{mi:?}");
    }

    #[test]
    fn mi_rejects_noncausal_and_tiny_samples() {
        assert!(matches!(
            estimate_mutual_information(&maes(), CsiMode::EncoderNonCausal, 50_000, 2),
            Err(Error::UnsupportedMode(_))
        ));
        assert!(estimate_mutual_information(&maes(), CsiMode::None, 100, 2).is_err());
    }

    #[test]
    fn mi_matches_analytic_capacity_quick() {
        // Smaller-sample version of the acceptance oracle.
        let d = maes();
        let n = 200_000;
        let cases = [
            (CsiMode::None, capacity::capacity_no_csi(&d).value),
            (
                CsiMode::EncoderCausal,
                capacity::capacity_csi_encoder_causal(&d).value,
            ),
            (
                CsiMode::Both,
                capacity::capacity_csi_both(&d, 1e-3).unwrap().value,
            ),
        ];
        for (mode, analytic) in cases {
            let mi = estimate_mutual_information(&d, mode, n, 31).unwrap();
            let tol = (3.0 * mi.std_error).max(0.01);
            assert!(
                (mi.estimate - analytic).abs() < tol,
                "{mode}: {} vs {analytic} (tol {tol})",
                mi.estimate
            );
        }
    }

    #[test]
    fn trace_csv_shape() {
        let d = StateDistribution::degenerate(0.0).unwrap();
        let t = transmit(&d, &bits(&[1, 0]), CsiMode::None, 5);
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# {\"mode\":\"none\",\"seed\":5}");
        assert_eq!(lines.next().unwrap(), "i,p_i,x_i,y_i");
        assert_eq!(lines.next().unwrap(), "0,0,1,1");
    }
}
