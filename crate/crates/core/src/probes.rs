//! Seeded probe vectors.
//!
//! Streams are bit-exact across platforms:
//!
//! * Generator: SplitMix64. The state advances by `0x9E3779B97F4A7C15` and
//!   each output is the state passed through [`mix64`].
//! * Uniform `[0,1)`: `(x >> 11) * 2^-53`.
//! * Rademacher: one output per entry; top bit set gives `-1`, clear gives `+1`.
//! * Gaussian: polar Box-Muller. Draw `u = 2U-1`, `v = 2U-1` (u first), reject
//!   unless `0 < s = u²+v² < 1`, then emit `u·f` and cache `v·f` for the next
//!   entry, with `f = sqrt(-2 ln s / s)`.
//! * A [`ProbeSet`] uses a single generator seeded with its seed and fills
//!   probe 1 entries `0..d`, then probe 2, and so on. A cached Gaussian value
//!   carries over probe boundaries.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::hadamard;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const RUN_MULT: u64 = 0xD1B5_4A32_D192_ED03;
const SAMPLE_MULT: u64 = 0xAEF1_7502_108E_F2D9;

/// SplitMix64 output finalizer (a bijection on `u64`).
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sample `sample_index` of run `run_index`:
///
/// ```text
/// h0 = mix64(base)
/// h1 = mix64(h0 + (run + 1)    * 0xD1B54A32D192ED03)
/// h2 = mix64(h1 + (sample + 1) * 0xAEF17502108EF2D9)
/// ```
///
/// with wrapping `u64` arithmetic.
pub fn derive_run_seed(base_seed: u64, run_index: u64, sample_index: u64) -> u64 {
    let h0 = mix64(base_seed);
    let h1 = mix64(h0.wrapping_add(run_index.wrapping_add(1).wrapping_mul(RUN_MULT)));
    mix64(h1.wrapping_add(sample_index.wrapping_add(1).wrapping_mul(SAMPLE_MULT)))
}

/// SplitMix64 with the Gaussian pair cache.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare_normal: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed, spare_normal: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` by rejection (`n >= 1`).
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    pub fn next_rademacher(&mut self) -> f64 {
        if self.next_u64() >> 63 == 1 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn sample(&mut self, dist: ProbeDistribution) -> f64 {
        match dist {
            ProbeDistribution::Rademacher => self.next_rademacher(),
            ProbeDistribution::Gaussian => self.next_normal(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProbeDistribution {
    Rademacher,
    Gaussian,
}

impl ProbeDistribution {
    pub const ALL: [ProbeDistribution; 2] = [ProbeDistribution::Rademacher, ProbeDistribution::Gaussian];

    /// `E[z⁴]` of a single probe entry.
    pub fn fourth_moment(self) -> f64 {
        match self {
            ProbeDistribution::Rademacher => 1.0,
            ProbeDistribution::Gaussian => 3.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProbeDistribution::Rademacher => "rademacher",
            ProbeDistribution::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for ProbeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProbeDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rademacher" | "rad" => Ok(ProbeDistribution::Rademacher),
            "gaussian" | "normal" | "gauss" => Ok(ProbeDistribution::Gaussian),
            other => Err(Error::InvalidArgument(format!(
                "unknown distribution {other:?} (expected rademacher or gaussian)"
            ))),
        }
    }
}

/// The `N-1` probes of one query and their Hadamard product.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub probes: Vec<Vec<f64>>,
    pub combined: Vec<f64>,
    pub distribution: Option<ProbeDistribution>,
    pub seed: u64,
}

impl ProbeSet {
    /// Wraps explicit probe vectors (e.g. read from a file). `distribution` is
    /// `None` and `seed` is 0.
    pub fn from_vectors(probes: Vec<Vec<f64>>) -> Result<Self> {
        let combined = hadamard(&probes)?;
        Ok(Self { probes, combined, distribution: None, seed: 0 })
    }

    pub fn dim(&self) -> usize {
        self.combined.len()
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }
}

pub fn sample_probe_set(dist: ProbeDistribution, d: usize, n_probes: usize, seed: u64) -> Result<ProbeSet> {
    if d < 1 || n_probes < 1 {
        return Err(Error::InvalidArgument(format!(
            "probe set needs d >= 1 and at least one probe (d={d}, n_probes={n_probes})"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let probes: Vec<Vec<f64>> = (0..n_probes)
        .map(|_| (0..d).map(|_| rng.sample(dist)).collect())
        .collect();
    let combined = hadamard(&probes)?;
    Ok(ProbeSet { probes, combined, distribution: Some(dist), seed })
}

/// Accepts decimal or `0x`-prefixed hexadecimal.
pub fn parse_seed(s: &str) -> Result<u64> {
    let t = s.trim();
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(&hex.replace('_', ""), 16),
        None => t.replace('_', "").parse::<u64>(),
    };
    parsed.map_err(|_| Error::InvalidArgument(format!("invalid seed {s:?}")))
}

/// Cross-implementation reference vectors, one CSV row per value:
/// `case,seed,run,sample,index,value`.
pub fn golden_vectors_csv() -> String {
    let mut out = String::from("case,seed,run,sample,index,value\n");
    for (seed, run, sample) in [(0u64, 0u64, 0u64), (0, 0, 1), (0, 1, 0), (42, 3, 7), (u64::MAX, 99, 19)] {
        out += &format!("derive_run_seed,{seed},{run},{sample},0,{}\n", derive_run_seed(seed, run, sample));
    }
    for seed in [0u64, 1234567] {
        let mut rng = SplitMix64::new(seed);
        for i in 0..4 {
            out += &format!("splitmix64,{seed},0,0,{i},{}\n", rng.next_u64());
        }
    }
    for dist in ProbeDistribution::ALL {
        let set = sample_probe_set(dist, 4, 2, 7).expect("valid shape");
        for (t, g) in set.probes.iter().enumerate() {
            for (i, x) in g.iter().enumerate() {
                out += &format!("{dist}_probe{t},7,0,0,{i},{x}\n");
            }
        }
    }
    out
}
