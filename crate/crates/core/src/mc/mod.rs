//! Event-level Monte Carlo of the heralded interference experiment.
//!
//! Heralds arrive as a Poisson process. Each herald opens a gate of
//! `gate_width` centred on the herald time, and both D1 and D2 click times
//! fall uniformly in that gate, so their difference has the triangular
//! envelope. The (D1, D2) outcome is drawn from the Fock model mixed
//! between its indistinguishable and distinguishable endpoints with weight
//! equal to the jitter-free overlap at the drawn delay. Jitter, ASE and
//! dark counts are then added.
//!
//! Generation runs in 10 ms slabs, each with its own ChaCha8 stream derived
//! from the seed, so the output does not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::{FockDim, SourceParams};
use crate::hom::{
    clicks_distinguishable, clicks_indistinguishable, HeraldArm, HomError, ModelOptions,
};
use crate::temporal::{base_kernel, TemporalConfig, TemporalError};

pub const CHANNEL_D1: u8 = 1;
pub const CHANNEL_D2: u8 = 2;
pub const CHANNEL_HERALD: u8 = 3;

/// Slab length in picoseconds (10 ms).
pub const SLAB_PS: u64 = 10_000_000_000;
/// Time of the first slab, leaving room for negative jitter.
pub const START_PS: u64 = 1_000_000;
/// Jitter draws are clipped at this many standard deviations.
const JITTER_CLIP: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("invalid Monte Carlo configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Hom(#[from] HomError),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
}

/// One detection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tag {
    pub timestamp: u64,
    pub channel: u8,
}

impl Tag {
    pub fn new(timestamp: u64, channel: u8) -> Self {
        Tag { timestamp, channel }
    }
}

/// Time-ordered tags.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagStream {
    pub records: Vec<Tag>,
}

impl TagStream {
    pub fn count(&self, channel: u8) -> usize {
        self.records.iter().filter(|t| t.channel == channel).count()
    }
}

/// Extra noise levels for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePreset {
    pub dark_rate_per_detector: f64,
    pub ase_noise_fraction: f64,
}

impl NoisePreset {
    pub const NONE: NoisePreset = NoisePreset {
        dark_rate_per_detector: 0.0,
        ase_noise_fraction: 0.0,
    };

    /// Levels tuned so the raw/net visibility gap at 250 kHz heralds,
    /// mu = nbar = 0.01 and a 4 ns gate comes out near 1.2 %. Accidentals
    /// between neighbouring heralds already give about 1.15 %; the dark
    /// rate supplies the rest. Gated ASE adds to the envelope, not to the
    /// flat floor, so it lowers both visibilities alike and is kept small.
    pub const CALIBRATED: NoisePreset = NoisePreset {
        dark_rate_per_detector: 2800.0,
        ase_noise_fraction: 0.01,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    /// Heralds per second.
    pub herald_rate: f64,
    /// Seconds of acquisition.
    pub duration: f64,
    pub source: SourceParams,
    pub temporal: TemporalConfig,
    /// Delay added to every D2 timestamp, in seconds.
    pub applied_delay: f64,
    /// Ungated Poisson counts on D1 and on D2, per second.
    pub dark_rate_per_detector: f64,
    /// Mean extra gated clicks per detector as a fraction of the mean
    /// detected WCS photons in the same gate.
    pub ase_noise_fraction: f64,
    pub seed: u64,
    /// D1, D2, herald.
    pub detector_efficiencies: [f64; 3],
    /// Non-paralysable herald dead time in seconds (0 = none).
    pub herald_dead_time: f64,
    pub herald_arm: HeraldArm,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            herald_rate: 250e3,
            duration: 1.0,
            source: SourceParams {
                mu_wcs: 0.01,
                nbar: 0.01,
                dim: FockDim::PRODUCTION,
            },
            temporal: TemporalConfig::default(),
            applied_delay: 0.0,
            dark_rate_per_detector: 0.0,
            ase_noise_fraction: 0.0,
            seed: 0,
            detector_efficiencies: [1.0; 3],
            herald_dead_time: 0.0,
            herald_arm: HeraldArm::Ideal,
        }
    }
}

impl McConfig {
    pub fn with_noise(mut self, preset: NoisePreset) -> Self {
        self.dark_rate_per_detector = preset.dark_rate_per_detector;
        self.ase_noise_fraction = preset.ase_noise_fraction;
        self
    }

    pub fn validate(&self) -> Result<(), McError> {
        let bad = |m: String| Err(McError::Config(m));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        // Timestamps must fit the 1 ps grid of a u64 with room to spare.
        if self.duration > 1e6 {
            return bad(format!("duration {} s exceeds the 1e6 s limit", self.duration));
        }
        if !(self.herald_rate.is_finite() && self.herald_rate > 0.0) {
            return bad(format!("herald_rate must be > 0, got {}", self.herald_rate));
        }
        for (name, v) in [
            ("dark_rate_per_detector", self.dark_rate_per_detector),
            ("ase_noise_fraction", self.ase_noise_fraction),
            ("herald_dead_time", self.herald_dead_time),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.applied_delay.is_finite() && self.applied_delay.abs() <= 1e-6) {
            return bad(format!("applied_delay must lie within +/- 1 us, got {}", self.applied_delay));
        }
        for e in self.detector_efficiencies {
            if !(0.0..=1.0).contains(&e) {
                return bad(format!("detector efficiency must lie in [0, 1], got {e}"));
            }
        }
        self.source
            .validate()
            .map_err(|e| McError::Config(e.to_string()))?;
        self.temporal.validate()?;
        Ok(())
    }

    fn total_ps(&self) -> u64 {
        (self.duration * 1e12).round() as u64
    }

    pub fn slab_count(&self) -> u64 {
        self.total_ps().div_ceil(SLAB_PS)
    }
}

/// P(D1, D2 | herald) for the two endpoints of the overlap mixture.
/// Order: (0,0), (0,1), (1,0), (1,1) with pairs written (D1, D2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub indistinguishable: [f64; 4],
    pub distinguishable: [f64; 4],
}

impl OutcomeTable {
    pub fn new(p: &SourceParams, efficiencies: [f64; 3], arm: HeraldArm) -> Result<Self, McError> {
        let opts = ModelOptions {
            herald_arm: arm,
            efficiencies,
        };
        Ok(OutcomeTable {
            indistinguishable: clicks_indistinguishable(p, &opts)?.conditional_on_herald()?,
            distinguishable: clicks_distinguishable(p, &opts)?.conditional_on_herald()?,
        })
    }

    /// The affine mixture at `overlap`. Overlaps in [-1, 0) come from a
    /// detuning beat; any entry pushed below zero is clipped and the rest
    /// renormalized.
    pub fn at(&self, overlap: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        let mut clipped = false;
        for k in 0..4 {
            let d = self.distinguishable[k];
            out[k] = d + overlap * (self.indistinguishable[k] - d);
            if out[k] < 0.0 {
                out[k] = 0.0;
                clipped = true;
            }
        }
        if clipped {
            let s: f64 = out.iter().sum();
            out.iter_mut().for_each(|x| *x /= s);
        }
        out
    }
}

/// Joint (D1, D2) click probabilities given a herald, for the state
/// overlap * rho_indis + (1 - overlap) * rho_dis.
pub fn outcome_distribution(
    p: &SourceParams,
    overlap: f64,
    efficiencies: [f64; 3],
) -> Result<[f64; 4], McError> {
    if !(0.0..=1.0).contains(&overlap) {
        return Err(McError::Config(format!("overlap must lie in [0, 1], got {overlap}")));
    }
    Ok(OutcomeTable::new(p, efficiencies, HeraldArm::Ideal)?.at(overlap))
}

struct Prepared {
    cfg: McConfig,
    table: OutcomeTable,
    gate_ps: f64,
    jitter_ps: f64,
    delay_ps: f64,
    /// Mean ASE clicks per gate on D1 and D2.
    ase_mean: [f64; 2],
    /// Largest distance between an event and its slab's boundaries.
    margin_ps: u64,
}

impl Prepared {
    fn new(cfg: &McConfig) -> Result<Self, McError> {
        cfg.validate()?;
        let table = OutcomeTable::new(&cfg.source, cfg.detector_efficiencies, cfg.herald_arm)?;
        let gate_ps = cfg.temporal.gate_width * 1e12;
        // Each detector carries 1/sqrt(2) of the system jitter.
        let jitter_ps = cfg.temporal.jitter_sigma() * 1e12 / std::f64::consts::SQRT_2;
        let delay_ps = cfg.applied_delay * 1e12;
        let wcs_per_detector = cfg.source.mu_wcs / 2.0;
        let ase_mean = [
            cfg.ase_noise_fraction * wcs_per_detector * cfg.detector_efficiencies[0],
            cfg.ase_noise_fraction * wcs_per_detector * cfg.detector_efficiencies[1],
        ];
        let margin_ps = (gate_ps / 2.0 + JITTER_CLIP * jitter_ps + delay_ps.abs()).ceil() as u64 + 1000;
        if margin_ps >= START_PS || 2 * margin_ps >= SLAB_PS {
            return Err(McError::Config("gate, jitter or delay too large".into()));
        }
        Ok(Prepared {
            cfg: cfg.clone(),
            table,
            gate_ps,
            jitter_ps,
            delay_ps,
            ase_mean,
            margin_ps,
        })
    }

    fn slab_bounds(&self, k: u64) -> (u64, u64) {
        let total = self.cfg.total_ps();
        let lo = k * SLAB_PS;
        let hi = ((k + 1) * SLAB_PS).min(total);
        (START_PS + lo, START_PS + hi)
    }

    fn jitter(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.jitter_ps == 0.0 {
            return 0.0;
        }
        let z: f64 = rng.sample(StandardNormal);
        z.clamp(-JITTER_CLIP, JITTER_CLIP) * self.jitter_ps
    }

    fn slab(&self, k: u64) -> Vec<Tag> {
        let cfg = &self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(k);
        let (start, end) = self.slab_bounds(k);
        let span = (end - start) as f64;
        let mut out = Vec::new();
        let stamp = |offset: f64| -> u64 { (start as f64 + offset).round().max(0.0) as u64 };

        let gap = Exp::new(cfg.herald_rate * 1e-12).expect("positive rate");
        let dead = cfg.herald_dead_time * 1e12;
        let half_gate = self.gate_ps / 2.0;
        let ase: [Option<Poisson<f64>>; 2] =
            self.ase_mean.map(|m| (m > 0.0).then(|| Poisson::new(m).expect("positive mean")));
        let dis = self.table.distinguishable;

        let mut t = gap.sample(&mut rng);
        while t < span {
            let tj = self.jitter(&mut rng);
            out.push(Tag::new(stamp(t + tj), CHANNEL_HERALD));

            let u1 = rng.random::<f64>() * self.gate_ps - half_gate;
            let u2 = rng.random::<f64>() * self.gate_ps - half_gate;
            let overlap = base_kernel(&cfg.temporal, (u2 - u1) * 1e-12);
            let probs = if overlap == 0.0 { dis } else { self.table.at(overlap) };
            let r: f64 = rng.random();
            let (d1, d2) = if r < probs[0] {
                (false, false)
            } else if r < probs[0] + probs[1] {
                (false, true)
            } else if r < probs[0] + probs[1] + probs[2] {
                (true, false)
            } else {
                (true, true)
            };
            if d1 {
                let j = self.jitter(&mut rng);
                out.push(Tag::new(stamp(t + u1 + j), CHANNEL_D1));
            }
            if d2 {
                let j = self.jitter(&mut rng);
                out.push(Tag::new(stamp(t + u2 + j + self.delay_ps), CHANNEL_D2));
            }
            for (d, dist) in ase.iter().enumerate() {
                if let Some(dist) = dist {
                    let n = dist.sample(&mut rng) as u64;
                    for _ in 0..n {
                        let u = rng.random::<f64>() * self.gate_ps - half_gate;
                        let j = self.jitter(&mut rng);
                        let (ch, shift) = if d == 0 {
                            (CHANNEL_D1, 0.0)
                        } else {
                            (CHANNEL_D2, self.delay_ps)
                        };
                        out.push(Tag::new(stamp(t + u + j + shift), ch));
                    }
                }
            }
            t += dead + gap.sample(&mut rng);
        }

        if cfg.dark_rate_per_detector > 0.0 {
            let mean = cfg.dark_rate_per_detector * span * 1e-12;
            let count = Poisson::new(mean).expect("positive mean");
            for ch in [CHANNEL_D1, CHANNEL_D2] {
                let n = count.sample(&mut rng) as u64;
                for _ in 0..n {
                    let x = rng.random::<f64>() * span;
                    out.push(Tag::new(stamp(x), ch));
                }
            }
        }
        out
    }
}

/// Streams the tags of a run in time order, one chunk at a time.
pub struct Simulator {
    prep: Prepared,
    next_slab: u64,
    slabs: u64,
    batch: u64,
    pending: Vec<Tag>,
    finished: bool,
}

impl Simulator {
    pub fn new(cfg: &McConfig) -> Result<Self, McError> {
        let prep = Prepared::new(cfg)?;
        let slabs = cfg.slab_count();
        let batch = (rayon::current_num_threads() as u64).max(1) * 4;
        Ok(Simulator {
            prep,
            next_slab: 0,
            slabs,
            batch,
            pending: Vec::new(),
            finished: false,
        })
    }

    pub fn config(&self) -> &McConfig {
        &self.prep.cfg
    }

    /// The Fock-model outcome endpoints this run samples from.
    pub fn outcome_table(&self) -> &OutcomeTable {
        &self.prep.table
    }

    /// Sets how many slabs are generated per chunk. The output does not
    /// depend on it.
    pub fn with_batch(mut self, slabs: u64) -> Self {
        self.batch = slabs.max(1);
        self
    }

    /// Next time-ordered chunk, or `None` at the end of the run.
    pub fn next_chunk(&mut self) -> Option<Vec<Tag>> {
        if self.finished {
            return None;
        }
        let lo = self.next_slab;
        let hi = (lo + self.batch).min(self.slabs);
        let prep = &self.prep;
        let generated: Vec<Vec<Tag>> = (lo..hi).into_par_iter().map(|k| prep.slab(k)).collect();
        let mut all = std::mem::take(&mut self.pending);
        for g in generated {
            all.extend(g);
        }
        all.sort_unstable();
        self.next_slab = hi;
        if hi >= self.slabs {
            self.finished = true;
            return Some(all);
        }
        // Later slabs cannot produce events before this point.
        let cutoff = self.prep.slab_bounds(hi).0 - self.prep.margin_ps;
        let split = all.partition_point(|t| t.timestamp < cutoff);
        self.pending = all.split_off(split);
        Some(all)
    }
}

/// Whole run in memory.
pub fn simulate(cfg: &McConfig) -> Result<TagStream, McError> {
    let mut sim = Simulator::new(cfg)?;
    let mut records = Vec::new();
    while let Some(chunk) = sim.next_chunk() {
        records.extend(chunk);
    }
    Ok(TagStream { records })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> McConfig {
        McConfig {
            duration: 0.025,
            ..Default::default()
        }
    }

    #[test]
    fn sorted_and_deterministic() {
        let a = simulate(&short()).unwrap();
        assert!(a.records.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        assert_eq!(a, simulate(&short()).unwrap());
        let other = McConfig { seed: 1, ..short() };
        assert_ne!(a, simulate(&other).unwrap());
    }

    #[test]
    fn batch_size_does_not_change_output() {
        let whole = simulate(&short()).unwrap().records;
        let mut sim = Simulator::new(&short()).unwrap().with_batch(1);
        let mut parts = Vec::new();
        while let Some(c) = sim.next_chunk() {
            parts.extend(c);
        }
        assert_eq!(whole, parts);
    }

    #[test]
    fn table_endpoints() {
        let p = SourceParams::new(0.01, 0.01, FockDim::PRODUCTION).unwrap();
        let t = OutcomeTable::new(&p, [1.0; 3], HeraldArm::Ideal).unwrap();
        assert_eq!(t.at(1.0), t.indistinguishable);
        assert_eq!(t.at(0.0), t.distinguishable);
        let neg = t.at(-1.0);
        assert!(neg.iter().all(|&x| x >= 0.0));
        assert!((neg.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        for cfg in [
            McConfig { duration: 0.0, ..short() },
            McConfig { herald_rate: -1.0, ..short() },
            McConfig { dark_rate_per_detector: -1.0, ..short() },
            McConfig { detector_efficiencies: [1.0, 1.2, 1.0], ..short() },
        ] {
            assert!(matches!(simulate(&cfg), Err(McError::Config(_))));
        }
        assert!(outcome_distribution(&short().source, 1.5, [1.0; 3]).is_err());
    }
}
