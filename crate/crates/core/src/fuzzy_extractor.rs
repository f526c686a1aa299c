//! Code-offset fuzzy extractor over a simulated SRAM PUF.
//!
//! Enrollment draws a random message, polar-encodes it, and publishes
//! `offset = response XOR codeword` plus the code spec and (optionally)
//! per-cell reliability tags -- the quantized crossover probabilities, which
//! are safe to publish. Reproduction re-reads the device, decodes
//! `read XOR offset` using the tags (decoder CSI) or the scalar expected
//! crossover, and re-derives the key.
//!
//! Successive cancellation always emits some message, so a 32-bit checksum
//! rides inside the message: reproduction either returns the enrolled key or
//! reports failure, never a silently wrong key.

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::channel::derived_rng;
use crate::polar::{construct_polar, polar_decode, polar_encode, CrossoverProfile, PolarCodeSpec};
use crate::state_models::{QuantizedStateSpace, StateDistribution};
use crate::{Error, Result};

/// Bits of checksum appended to the key material inside the coded message.
pub const CHECKSUM_BITS: usize = 32;

/// Reliability tags quantize the per-cell crossover to this many bins
/// (one nibble per cell in the serialized helper data).
pub const TAG_BINS: usize = 16;

/// Rate margin applied to the design capacity when sizing enrollments.
pub const DEFAULT_RATE_MARGIN: f64 = 0.1;

/// A 256-bit derived key; prints as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Key(pub [u8; 32]);

impl std::fmt::Display for Key {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl std::fmt::Debug for Key {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Key({self})")
    }
}

/// A simulated PUF device: per-cell one-probabilities, the enrollment
/// readout, and the crossover probability of every cell relative to that
/// readout.
#[derive(Debug, Clone)]
pub struct PufDevice {
    /// Probability each cell powers up as '1'.
    pub cell_states: Vec<f64>,
    /// The single enrollment readout.
    pub enrolled_response: Vec<u8>,
    /// Per-cell probability that a re-read differs from the enrollment:
    /// `1 - q` for cells enrolled as '1', `q` otherwise.
    pub cell_error_p: Vec<f64>,
    seed: u64,
    read_counter: u64,
    /// Tag partition of the induced crossover law, fixed at manufacture;
    /// absent for cell models with no in-family induced density.
    tag_space: Option<QuantizedStateSpace>,
    /// Folded expected crossover of the model, used as the no-CSI design
    /// point for enrollment codes.
    nominal_p: f64,
}

impl PufDevice {
    pub fn len(&self) -> usize {
        self.cell_states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_states.is_empty()
    }

    /// Fresh noisy readout; each call consumes one read counter tick.
    pub fn read_noisy(&mut self, seed: u64) -> Vec<u8> {
        let mut rng = derived_rng(self.seed ^ seed.rotate_left(17), "read", self.read_counter);
        self.read_counter += 1;
        self.enrolled_response
            .iter()
            .zip(&self.cell_error_p)
            .map(|(&bit, &p)| bit ^ u8::from(rng.random::<f64>() < p))
            .collect()
    }
}

/// Manufacture a device with `n_cells` cells drawn from the state model.
///
/// One-probabilities come from the model's cell law; the enrollment readout
/// samples each cell once, and `cell_error_p` follows the single-readout
/// convention (so the cell crossovers are distributed exactly as the model's
/// crossover density).
pub fn make_device(dist: &StateDistribution, n_cells: usize, seed: u64) -> Result<PufDevice> {
    if n_cells == 0 {
        return Err(Error::Domain {
            what: "n_cells",
            value: 0.0,
            domain: "[1, ..)",
        });
    }
    let mut cell_rng = derived_rng(seed, "cells", 0);
    let mut enroll_rng = derived_rng(seed, "enroll", 0);
    let mut cell_states = Vec::with_capacity(n_cells);
    let mut enrolled_response = Vec::with_capacity(n_cells);
    let mut cell_error_p = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        let q = dist.draw_one_probability(&mut cell_rng);
        let bit = u8::from(enroll_rng.random::<f64>() < q);
        cell_states.push(q);
        enrolled_response.push(bit);
        cell_error_p.push(if bit == 1 { 1.0 - q } else { q });
    }
    // Tags and the code design point describe the crossover (error) law
    // induced by single-readout enrollment, not the one-probability law.
    let err_law = induced_error_law(dist);
    let tag_space = err_law.as_ref().map(tag_partition).transpose()?;
    let nominal_p = match &err_law {
        Some(e) => {
            let m = e.mean();
            m.min(1.0 - m)
        }
        None => {
            // No closed-form induced law; fall back to the expected
            // crossover of a single-readout cell, E[2Q(1-Q)].
            let m = dist.expectation(|q| 2.0 * q * (1.0 - q));
            m.min(1.0 - m)
        }
    };
    Ok(PufDevice {
        cell_states,
        enrolled_response,
        cell_error_p,
        seed,
        read_counter: 0,
        tag_space,
        nominal_p,
    })
}

/// The crossover distribution induced by single-readout enrollment of cells
/// with the given one-probability law: a cell with one-probability `q`
/// flips with probability `q` (enrolled '0') or `1 - q` (enrolled '1').
///
/// `MaesHybrid` already parameterizes the induced law. Piecewise cell
/// models have no in-family induced density, so `None` is returned and
/// reliability tags are unavailable for them.
fn induced_error_law(dist: &StateDistribution) -> Option<StateDistribution> {
    match dist {
        StateDistribution::MaesHybrid { .. } => Some(dist.clone()),
        StateDistribution::Degenerate { p } => {
            mixture_atoms(&[(*p, 1.0)])
        }
        StateDistribution::Discrete { points } => mixture_atoms(points),
        StateDistribution::PiecewiseConstant { .. } => None,
    }
}

fn mixture_atoms(points: &[(f64, f64)]) -> Option<StateDistribution> {
    let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(points.len() * 2);
    for &(q, m) in points {
        let enrolled_zero = m * (1.0 - q);
        let enrolled_one = m * q;
        if enrolled_zero > 0.0 {
            atoms.push((q, enrolled_zero));
        }
        if enrolled_one > 0.0 {
            atoms.push((1.0 - q, enrolled_one));
        }
    }
    StateDistribution::discrete(atoms).ok()
}

/// Quantize the crossover distribution for reliability tags: 15 requested
/// bins so the mandatory split at one half keeps the total within a nibble.
fn tag_partition(err_law: &StateDistribution) -> Result<QuantizedStateSpace> {
    let q = if err_law.is_continuous() {
        err_law.quantize(TAG_BINS - 1, crate::capacity::DEFAULT_EPS)?
    } else {
        err_law.quantize(2, 0.5)?
    };
    if q.len() > TAG_BINS {
        return Err(Error::InvalidDistribution(format!(
            "{} tag bins exceed the {TAG_BINS}-bin nibble budget",
            q.len()
        )));
    }
    Ok(q)
}

/// Code-offset helper data. Public by construction: the offset hides the
/// response behind a uniformly random codeword, and publishing quantized
/// reliabilities leaks nothing about the enrolled values.
#[derive(Debug, Clone, PartialEq)]
pub struct HelperData {
    /// `enrolled_response XOR codeword`.
    pub offset: Vec<u8>,
    pub code_spec: PolarCodeSpec,
    /// Per-cell tag bin indices (one nibble each), present only for the
    /// decoder-CSI profile.
    pub reliability_tags: Option<Vec<u8>>,
    /// Representative crossover for each tag bin index.
    pub tag_reps: Vec<f64>,
}

const HELPER_MAGIC: &[u8; 7] = b"VBSCHD1";

impl HelperData {
    /// Versioned binary layout: magic `VBSCHD1`, u32-le cell count, flags
    /// byte (bit 0: tags present), bit-packed offset (LSB-first within each
    /// byte), optional packed tag nibbles (low nibble first), u32-le
    /// trailer length, JSON trailer with the code spec and tag
    /// representatives.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.offset.len();
        let mut out = Vec::new();
        out.extend_from_slice(HELPER_MAGIC);
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.push(u8::from(self.reliability_tags.is_some()));
        out.extend_from_slice(&pack_bits(&self.offset));
        if let Some(tags) = &self.reliability_tags {
            out.extend_from_slice(&pack_nibbles(tags));
        }
        let trailer = serde_json::json!({
            "code": self.code_spec,
            "tag_reps": self.tag_reps,
        })
        .to_string();
        out.extend_from_slice(&(trailer.len() as u32).to_le_bytes());
        out.extend_from_slice(trailer.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::MalformedHelper(m.to_string());
        if bytes.len() < HELPER_MAGIC.len() + 5 || &bytes[..7] != HELPER_MAGIC {
            return Err(bad("missing VBSCHD1 magic"));
        }
        let mut at = 7;
        let n = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        at += 4;
        let flags = bytes[at];
        at += 1;
        let offset_bytes = n.div_ceil(8);
        if bytes.len() < at + offset_bytes {
            return Err(bad("truncated offset"));
        }
        let offset = unpack_bits(&bytes[at..at + offset_bytes], n);
        at += offset_bytes;
        let reliability_tags = if flags & 1 == 1 {
            let tag_bytes = n.div_ceil(2);
            if bytes.len() < at + tag_bytes {
                return Err(bad("truncated tags"));
            }
            let tags = unpack_nibbles(&bytes[at..at + tag_bytes], n);
            at += tag_bytes;
            Some(tags)
        } else {
            None
        };
        if bytes.len() < at + 4 {
            return Err(bad("missing trailer length"));
        }
        let t_len = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        at += 4;
        if bytes.len() < at + t_len {
            return Err(bad("truncated trailer"));
        }
        let trailer: serde_json::Value = serde_json::from_slice(&bytes[at..at + t_len])
            .map_err(|e| bad(&format!("trailer JSON: {e}")))?;
        let code_spec: PolarCodeSpec = serde_json::from_value(trailer["code"].clone())
            .map_err(|e| bad(&format!("code spec: {e}")))?;
        let tag_reps: Vec<f64> = serde_json::from_value(trailer["tag_reps"].clone())
            .map_err(|e| bad(&format!("tag reps: {e}")))?;
        Ok(HelperData {
            offset,
            code_spec,
            reliability_tags,
            tag_reps,
        })
    }

    /// Human-readable JSON form for debugging.
    pub fn to_debug_json(&self) -> String {
        serde_json::json!({
            "cells": self.offset.len(),
            "offset_bits": self.offset.iter().map(|b| b.to_string()).collect::<String>(),
            "code": self.code_spec,
            "tags": self.reliability_tags,
            "tag_reps": self.tag_reps,
        })
        .to_string()
    }
}

fn pack_bits(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        out[i / 8] |= (b & 1) << (i % 8);
    }
    out
}

fn unpack_bits(bytes: &[u8], n: usize) -> Vec<u8> {
    (0..n).map(|i| (bytes[i / 8] >> (i % 8)) & 1).collect()
}

fn pack_nibbles(vals: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; vals.len().div_ceil(2)];
    for (i, &v) in vals.iter().enumerate() {
        debug_assert!(v < 16);
        out[i / 2] |= (v & 0x0f) << (4 * (i % 2));
    }
    out
}

fn unpack_nibbles(bytes: &[u8], n: usize) -> Vec<u8> {
    (0..n).map(|i| (bytes[i / 2] >> (4 * (i % 2))) & 0x0f).collect()
}

/// Cells needed to carry `key_bits` (plus checksum) at `margin` under a
/// regime capacity of `capacity` bits per cell; rounded up to a power of
/// two for the polar block.
pub fn required_cells(key_bits: usize, capacity: f64, margin: f64) -> usize {
    let k = (key_bits + CHECKSUM_BITS) as f64;
    let rate = (capacity * (1.0 - margin)).max(1e-6);
    ((k / rate).ceil() as usize).next_power_of_two()
}

/// Enroll a key of `key_bits` random bits on the device.
///
/// The coded message is `key material || checksum`; the returned key is the
/// SHA-256 of the message bits, and the helper data carries the offset, the
/// code spec, and reliability tags when `with_tags` is set.
pub fn enroll(
    device: &PufDevice,
    key_bits: usize,
    seed: u64,
    with_tags: bool,
) -> Result<(Key, HelperData)> {
    let n = device.len();
    if !n.is_power_of_two() {
        return Err(Error::InvalidCode(format!(
            "device size {n} is not a power of two"
        )));
    }
    let k = key_bits + CHECKSUM_BITS;
    let max_rate = (1.0 - crate::capacity::h2(device.nominal_p)) * (1.0 - DEFAULT_RATE_MARGIN);
    if k as f64 > max_rate * n as f64 {
        return Err(Error::DeviceTooSmall {
            needed: required_cells(key_bits, 1.0 - crate::capacity::h2(device.nominal_p), DEFAULT_RATE_MARGIN),
            have: n,
        });
    }
    let code_spec = construct_polar(n, device.nominal_p, k as f64 / n as f64)?;
    debug_assert_eq!(code_spec.info_len(), k);

    let mut msg_rng = derived_rng(seed, "enroll-message", 0);
    let payload: Vec<u8> = (0..key_bits).map(|_| msg_rng.random_range(0..2) as u8).collect();
    let message = with_checksum(&payload);
    let codeword = polar_encode(&code_spec, &message)?;
    let offset: Vec<u8> = device
        .enrolled_response
        .iter()
        .zip(&codeword)
        .map(|(&r, &c)| r ^ c)
        .collect();

    let reliability_tags = if with_tags {
        let space = device.tag_space.as_ref().ok_or(Error::Kind {
            kind: "piecewise",
            detail: "reliability tags need an in-family induced crossover law",
        })?;
        Some(
            device
                .cell_error_p
                .iter()
                .map(|&p| space.bin_index(p) as u8)
                .collect::<Vec<u8>>(),
        )
    } else {
        None
    };
    let tag_reps: Vec<f64> = device
        .tag_space
        .as_ref()
        .map(|s| s.intervals.iter().map(|iv| iv.rep_p).collect())
        .unwrap_or_default();

    let key = key_from_message(&message);
    Ok((
        key,
        HelperData {
            offset,
            code_spec,
            reliability_tags,
            tag_reps,
        },
    ))
}

/// Reproduce the key from a fresh noisy readout and the helper data.
///
/// With tags present each bit decodes under its tag bin's representative
/// crossover (decoder CSI); otherwise the scalar design crossover is used.
/// A checksum mismatch surfaces as [`Error::IntegrityCheckFailed`].
pub fn reproduce(device: &mut PufDevice, helper: &HelperData, seed: u64) -> Result<Key> {
    let n = device.len();
    if helper.offset.len() != n {
        return Err(Error::LengthMismatch {
            what: "helper offset",
            expected: n,
            got: helper.offset.len(),
        });
    }
    let read = device.read_noisy(seed);
    let received: Vec<u8> = read.iter().zip(&helper.offset).map(|(&y, &o)| y ^ o).collect();

    let message = match &helper.reliability_tags {
        Some(tags) => {
            if tags.len() != n {
                return Err(Error::MalformedHelper(format!(
                    "{} tags for {n} cells",
                    tags.len()
                )));
            }
            if helper.tag_reps.is_empty() {
                return Err(Error::MalformedHelper(
                    "tags present but no tag representatives".into(),
                ));
            }
            let per_bit: Vec<f64> = tags
                .iter()
                .map(|&t| {
                    let idx = (t as usize).min(helper.tag_reps.len() - 1);
                    // Guard the open upper end of the decoder contract.
                    helper.tag_reps[idx].min(1.0 - 1e-12)
                })
                .collect();
            polar_decode(&helper.code_spec, &received, CrossoverProfile::PerBit(&per_bit))?
        }
        None => polar_decode(
            &helper.code_spec,
            &received,
            CrossoverProfile::Uniform(helper.code_spec.design_p),
        )?,
    };
    let payload = verify_checksum(&message).ok_or(Error::IntegrityCheckFailed)?;
    let _ = payload;
    Ok(key_from_message(&message))
}

/// Append a CRC-32 of the payload bits.
fn with_checksum(payload: &[u8]) -> Vec<u8> {
    let crc = crc32(payload);
    let mut message = payload.to_vec();
    for i in 0..CHECKSUM_BITS {
        message.push(((crc >> i) & 1) as u8);
    }
    message
}

/// Split and verify; returns the payload on success.
fn verify_checksum(message: &[u8]) -> Option<&[u8]> {
    if message.len() < CHECKSUM_BITS {
        return None;
    }
    let (payload, tail) = message.split_at(message.len() - CHECKSUM_BITS);
    let crc = crc32(payload);
    for (i, &bit) in tail.iter().enumerate() {
        if bit != ((crc >> i) & 1) as u8 {
            return None;
        }
    }
    Some(payload)
}

/// CRC-32 (IEEE, reflected) over a bit string.
fn crc32(bits: &[u8]) -> u32 {
    let mut crc = 0xffff_ffffu32;
    for &b in bits {
        let fed = (crc ^ u32::from(b)) & 1;
        crc >>= 1;
        if fed == 1 {
            crc ^= 0xedb8_8320;
        }
    }
    !crc
}

/// SHA-256 of the message bits, packed LSB-first per byte.
fn key_from_message(message: &[u8]) -> Key {
    let mut h = Sha256::new();
    h.update(b"vbsc-key");
    h.update((message.len() as u64).to_le_bytes());
    h.update(pack_bits(message));
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    Key(key)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maes() -> StateDistribution {
        StateDistribution::maes_hybrid(0.1213, 0.021).unwrap()
    }

    #[test]
    fn stable_one_cells_enroll_as_ones() {
        let d = StateDistribution::degenerate(1.0).unwrap();
        let dev = make_device(&d, 32, 1).unwrap();
        assert_eq!(dev.enrolled_response, vec![1; 32]);
        assert_eq!(dev.cell_error_p, vec![0.0; 32]);
    }

    #[test]
    fn coin_flip_cells_have_half_crossover() {
        let d = StateDistribution::degenerate(0.5).unwrap();
        let dev = make_device(&d, 2000, 2).unwrap();
        assert_eq!(dev.cell_error_p, vec![0.5; 2000]);
        let ones: u32 = dev.enrolled_response.iter().map(|&b| u32::from(b)).sum();
        // Uniform enrollment: 3-sigma band around half.
        let sigma = (2000.0f64 * 0.25).sqrt();
        assert!((f64::from(ones) - 1000.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn maes_device_crossover_mean_matches_model() {
        let n = 100_000;
        let dev = make_device(&maes(), n, 3).unwrap();
        let emp: f64 = dev.cell_error_p.iter().sum::<f64>() / n as f64;
        let mean = maes().mean();
        let var: f64 = dev
            .cell_error_p
            .iter()
            .map(|p| (p - emp) * (p - emp))
            .sum::<f64>()
            / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!(
            (emp - mean).abs() < 3.0 * se,
            "empirical {emp} vs model {mean}"
        );
    }

    #[test]
    fn offset_is_xor_of_response_and_codeword() {
        let dev = make_device(&maes(), 1024, 4).unwrap();
        let (_, helper) = enroll(&dev, 128, 10, true).unwrap();
        // offset XOR response must be a codeword: re-encode the decoded
        // message of the noiseless word and compare.
        let cw: Vec<u8> = helper
            .offset
            .iter()
            .zip(&dev.enrolled_response)
            .map(|(&o, &r)| o ^ r)
            .collect();
        let decoded = polar_decode(
            &helper.code_spec,
            &cw,
            CrossoverProfile::Uniform(0.0),
        )
        .unwrap();
        let re_encoded = polar_encode(&helper.code_spec, &decoded).unwrap();
        assert_eq!(re_encoded, cw);
    }

    #[test]
    fn zero_noise_device_reproduces_identical_key() {
        let d = StateDistribution::degenerate(1.0).unwrap();
        let mut dev = make_device(&d, 256, 5).unwrap();
        let (key, helper) = enroll(&dev, 64, 11, false).unwrap();
        let back = reproduce(&mut dev, &helper, 12).unwrap();
        assert_eq!(key, back);
    }

    #[test]
    fn enrollment_and_reproduction_are_seed_deterministic() {
        let mut dev_a = make_device(&maes(), 512, 6).unwrap();
        let mut dev_b = make_device(&maes(), 512, 6).unwrap();
        let (key_a, helper_a) = enroll(&dev_a, 64, 7, true).unwrap();
        let (key_b, helper_b) = enroll(&dev_b, 64, 7, true).unwrap();
        assert_eq!(key_a, key_b);
        assert_eq!(helper_a, helper_b);
        let ra = reproduce(&mut dev_a, &helper_a, 8);
        let rb = reproduce(&mut dev_b, &helper_b, 8);
        match (ra, rb) {
            (Ok(a), Ok(b)) => assert_eq!(a, b),
            (Err(Error::IntegrityCheckFailed), Err(Error::IntegrityCheckFailed)) => {}
            other => panic!("divergent outcomes: {other:?}"),
        }
    }

    #[test]
    fn cross_device_helper_is_rejected() {
        let mut failures = 0;
        let pairs = 100;
        for i in 0..pairs {
            let dev_a = make_device(&maes(), 256, 100 + i).unwrap();
            let mut dev_b = make_device(&maes(), 256, 10_000 + i).unwrap();
            let (_, helper) = enroll(&dev_a, 32, 55, true).unwrap();
            match reproduce(&mut dev_b, &helper, 56) {
                Err(Error::IntegrityCheckFailed) => failures += 1,
                Ok(_) => {}
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert_eq!(failures, pairs, "cross-device keys must never verify");
    }

    #[test]
    fn device_too_small_is_reported() {
        let dev = make_device(&maes(), 128, 9).unwrap();
        let err = enroll(&dev, 512, 13, false).unwrap_err();
        assert!(matches!(err, Error::DeviceTooSmall { .. }));
    }

    #[test]
    fn non_power_of_two_device_rejected_at_enroll() {
        let dev = make_device(&maes(), 100, 9).unwrap();
        assert!(matches!(
            enroll(&dev, 16, 13, false),
            Err(Error::InvalidCode(_))
        ));
    }

    #[test]
    fn malformed_tagged_helper_is_rejected() {
        let mut dev = make_device(&maes(), 256, 19).unwrap();
        let (_, mut helper) = enroll(&dev, 32, 20, true).unwrap();
        helper.tag_reps.clear();
        assert!(matches!(
            reproduce(&mut dev, &helper, 21),
            Err(Error::MalformedHelper(_))
        ));
    }

    #[test]
    fn helper_binary_roundtrip() {
        let dev = make_device(&maes(), 512, 21).unwrap();
        for with_tags in [false, true] {
            let (_, helper) = enroll(&dev, 64, 22, with_tags).unwrap();
            let bytes = helper.to_bytes();
            assert_eq!(&bytes[..7], b"VBSCHD1");
            let back = HelperData::from_bytes(&bytes).unwrap();
            assert_eq!(back, helper);
        }
        assert!(HelperData::from_bytes(b"not helper data").is_err());
    }

    #[test]
    fn key_prints_lowercase_hex() {
        let key = key_from_message(&[1, 0, 1]);
        let text = key.to_string();
        assert_eq!(text.len(), 64);
        assert!(text.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
    }

    #[test]
    fn required_cells_scales_inversely_with_capacity() {
        let a = required_cells(128, 0.8751, 0.5);
        let b = required_cells(128, 0.6961, 0.5);
        assert!(a <= b);
        assert!(a.is_power_of_two());
    }

    #[test]
    fn more_cells_for_same_key_never_hurts() {
        // Doubling the device (halving the rate, i.e. growing the capacity
        // margin) moves the failure count the right way.
        let mut failures = [0u32; 2];
        let trials = 80;
        for (slot, n_cells) in [(0usize, 512usize), (1, 1024)] {
            for t in 0..trials {
                let mut dev = make_device(&maes(), n_cells, 60_000 + t).unwrap();
                let (key, helper) = enroll(&dev, 218, 13, false).unwrap();
                if !matches!(reproduce(&mut dev, &helper, 14 + t), Ok(k) if k == key) {
                    failures[slot] += 1;
                }
            }
        }
        assert!(
            failures[1] <= failures[0],
            "512 cells: {} failures, 1024 cells: {}",
            failures[0],
            failures[1]
        );
    }

    #[test]
    fn tagged_profile_dominates_untagged_quick() {
        // Small paired run; the acceptance suite does the full sign test.
        let mut tagged_fail = 0u32;
        let mut untagged_fail = 0u32;
        let trials = 60;
        for t in 0..trials {
            let dev = make_device(&maes(), 1024, 40_000 + t).unwrap();
            let (k_t, h_t) = enroll(&dev, 438, 77, true).unwrap();
            let (k_u, h_u) = enroll(&dev, 438, 77, false).unwrap();
            let mut dev_t = dev.clone();
            let mut dev_u = dev;
            match reproduce(&mut dev_t, &h_t, 78) {
                Ok(k) if k == k_t => {}
                _ => tagged_fail += 1,
            }
            match reproduce(&mut dev_u, &h_u, 78) {
                Ok(k) if k == k_u => {}
                _ => untagged_fail += 1,
            }
        }
        assert!(
            tagged_fail <= untagged_fail,
            "tagged {tagged_fail} vs untagged {untagged_fail}"
        );
    }
}
