//! Deterministic random streams.
//!
//! Every random draw in a simulation comes from a stream addressed by
//! `(master seed, domain, a, b, step)`. Streams are independent of the order
//! in which they are requested, so links and adversaries can be sampled in
//! any order within a round without perturbing each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Distinct domains never share a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Channel = 1,
    Window = 2,
    Adversary = 3,
    Trial = 4,
}

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn combine(parts: &[u64]) -> u64 {
    parts.iter().fold(0x243F_6A88_85A3_08D3, |acc, &p| mix64(acc ^ mix64(p)))
}

/// Returns the stream for `(seed, domain, a, b, step)`.
pub fn stream(seed: u64, domain: Domain, a: u64, b: u64, step: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(combine(&[seed, domain as u64, a, b, step]))
}

/// Seed of Monte Carlo trial `trial` under master seed `seed`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    combine(&[seed, Domain::Trial as u64, trial])
}
