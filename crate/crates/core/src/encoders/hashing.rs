//! Signed feature hashing of named numeric arguments.
//!
//! Each argument contributes `sign(key) * ln(|value| + 1)` to bucket
//! `bucket(key)`. For integers the key is the argument name; for addresses it
//! is the name plus the memory segment (user or kernel) the address falls in.
//!
//! Both hashes are seeded FNV-1a followed by a splitmix64 finalizer, so bucket
//! and sign assignments are identical across runs and platforms.
//!
//! Contributions are accumulated in fixed point (2^-36 resolution), which
//! makes the encoding exactly additive over argument lists: encoding `a ++ b`
//! gives bit-for-bit the sum of encoding `a` and `b`, as long as a single
//! bucket receives fewer than ~2900 contributions.

use serde::{Deserialize, Serialize};

use crate::ingest::{ArgValue, Argument};

pub const DEFAULT_SEGMENT_BOUNDARY: u64 = 1 << 31;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const FIXED_SCALE: f64 = (1u64 << 36) as f64;
/// Separates name and segment in address keys.
const KEY_SEPARATOR: u8 = 0x1f;

pub fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn keyed_hash(seed: u64, key: &[u8]) -> u64 {
    mix64(fnv1a64(seed, key))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HashKind {
    Integer,
    Address,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    User,
    Kernel,
}

impl Segment {
    pub fn of(addr: u64, boundary: u64) -> Segment {
        if addr < boundary {
            Segment::User
        } else {
            Segment::Kernel
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::User => "user",
            Segment::Kernel => "kernel",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashEncoder {
    pub kind: HashKind,
    pub dim: usize,
    pub bucket_seed: u64,
    pub sign_seed: u64,
    pub segment_aware: bool,
    pub segment_boundary: u64,
}

impl HashEncoder {
    pub fn integer(dim: usize) -> Self {
        HashEncoder {
            kind: HashKind::Integer,
            dim,
            bucket_seed: 0x5eed_0001,
            sign_seed: 0x5eed_0002,
            segment_aware: false,
            segment_boundary: DEFAULT_SEGMENT_BOUNDARY,
        }
    }

    pub fn address(dim: usize, segment_boundary: u64) -> Self {
        HashEncoder {
            kind: HashKind::Address,
            dim,
            bucket_seed: 0x5eed_0003,
            sign_seed: 0x5eed_0004,
            segment_aware: true,
            segment_boundary,
        }
    }

    /// Hash key for an argument, or `None` when the value is of another type.
    pub fn key(&self, arg: &Argument) -> Option<Vec<u8>> {
        match (self.kind, &arg.value) {
            (HashKind::Integer, ArgValue::Int(_)) => Some(arg.name.as_bytes().to_vec()),
            (HashKind::Address, ArgValue::VAddr(a)) => {
                let mut key = arg.name.as_bytes().to_vec();
                if self.segment_aware {
                    key.push(KEY_SEPARATOR);
                    key.extend_from_slice(
                        Segment::of(*a, self.segment_boundary).as_str().as_bytes(),
                    );
                }
                Some(key)
            }
            _ => None,
        }
    }

    pub fn bucket(&self, key: &[u8]) -> usize {
        (keyed_hash(self.bucket_seed, key) % self.dim as u64) as usize
    }

    pub fn sign(&self, key: &[u8]) -> f64 {
        if keyed_hash(self.sign_seed, key) & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// Encodes the arguments of matching type; others are skipped.
    pub fn encode(&self, args: &[Argument]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.encode_into(args, &mut out);
        out
    }

    pub fn encode_into(&self, args: &[Argument], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let mut acc = vec![0i64; self.dim];
        for arg in args {
            let Some(key) = self.key(arg) else { continue };
            let magnitude = match arg.value {
                ArgValue::Int(i) => i.unsigned_abs() as f64,
                ArgValue::VAddr(a) => a as f64,
                ArgValue::Str(_) => unreachable!(),
            };
            let q = ((magnitude + 1.0).ln() * FIXED_SCALE).round() as i64;
            let b = self.bucket(&key);
            if self.sign(&key) > 0.0 {
                acc[b] += q;
            } else {
                acc[b] -= q;
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o = a as f64 / FIXED_SCALE;
        }
    }
}
