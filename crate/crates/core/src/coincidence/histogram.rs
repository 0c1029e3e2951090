use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::CoincidenceError;
use crate::mc::{Tag, CHANNEL_D1, CHANNEL_D2, CHANNEL_HERALD};

/// Histogram geometry, in picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramConfig {
    /// Delays tau = t_D2 - t_D1 in [-window, window) are binned.
    pub window_ps: u64,
    pub bin_ps: u64,
    /// D1 and D2 clicks within +/- reach of a herald are paired with it.
    pub reach_ps: u64,
}

impl HistogramConfig {
    /// Reach of window + gate/2 + 2 ns, so a click paired with an
    /// uncorrelated partner spreads evenly over the whole window.
    pub fn new(window_ps: u64, bin_ps: u64, gate_width_ps: u64) -> Result<Self, CoincidenceError> {
        let cfg = HistogramConfig {
            window_ps,
            bin_ps,
            reach_ps: window_ps + gate_width_ps / 2 + 2000,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CoincidenceError> {
        if self.window_ps == 0 || self.bin_ps == 0 {
            return Err(CoincidenceError::Window("window and bin width must be > 0".into()));
        }
        if self.bin_ps > self.window_ps {
            return Err(CoincidenceError::Window(format!(
                "bin width {} ps exceeds window {} ps",
                self.bin_ps, self.window_ps
            )));
        }
        if (2 * self.window_ps) % self.bin_ps != 0 {
            return Err(CoincidenceError::Window(format!(
                "bin width {} ps does not divide the span {} ps",
                self.bin_ps,
                2 * self.window_ps
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        (2 * self.window_ps / self.bin_ps) as usize
    }
}

impl Default for HistogramConfig {
    /// 100 ps bins over +/- 10 ns for a 4 ns gate.
    fn default() -> Self {
        HistogramConfig::new(10_000, 100, 4_000).expect("valid defaults")
    }
}

/// Coincidence counts versus tau = t_D2 - t_D1. Times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub counts: Vec<u64>,
    pub total_heralds: u64,
    /// Last minus first timestamp of the input.
    pub acquisition_span: f64,
}

impl Histogram {
    pub fn tau_center(&self, i: usize) -> f64 {
        self.tau_min + (i as f64 + 0.5) * self.bin_width
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Single-pass herald correlator over time-ordered tags.
///
/// Each herald is closed once a tag later than herald + reach arrives; only
/// clicks that some open or future herald can still reach are kept. A
/// (D1, D2) pair within reach of several heralds is counted once, under the
/// earliest of them, so bin counts stay Poisson.
#[derive(Debug, Clone)]
pub struct HeraldCorrelator {
    cfg: HistogramConfig,
    d1: VecDeque<u64>,
    d2: VecDeque<u64>,
    open: VecDeque<u64>,
    last_closed: Option<u64>,
    counts: Vec<u64>,
    heralds: u64,
    first: Option<u64>,
    last: u64,
    index: u64,
}

impl HeraldCorrelator {
    pub fn new(cfg: HistogramConfig) -> Result<Self, CoincidenceError> {
        cfg.validate()?;
        Ok(HeraldCorrelator {
            cfg,
            d1: VecDeque::new(),
            d2: VecDeque::new(),
            open: VecDeque::new(),
            last_closed: None,
            counts: vec![0; cfg.bins()],
            heralds: 0,
            first: None,
            last: 0,
            index: 0,
        })
    }

    pub fn push(&mut self, tag: Tag) -> Result<(), CoincidenceError> {
        let t = tag.timestamp;
        if t < self.last {
            return Err(CoincidenceError::Order {
                index: self.index,
                previous: self.last,
                timestamp: t,
            });
        }
        let reach = self.cfg.reach_ps;
        while let Some(&h) = self.open.front() {
            if h + reach >= t {
                break;
            }
            self.close(h);
            self.open.pop_front();
        }
        match tag.channel {
            CHANNEL_D1 => self.d1.push_back(t),
            CHANNEL_D2 => self.d2.push_back(t),
            CHANNEL_HERALD => {
                self.open.push_back(t);
                self.heralds += 1;
            }
            c => {
                return Err(CoincidenceError::Channel {
                    index: self.index,
                    channel: c as u64,
                })
            }
        }
        let keep_from = self.open.front().copied().unwrap_or(t).min(t).saturating_sub(reach);
        while self.d1.front().is_some_and(|&x| x < keep_from) {
            self.d1.pop_front();
        }
        while self.d2.front().is_some_and(|&x| x < keep_from) {
            self.d2.pop_front();
        }
        self.first.get_or_insert(t);
        self.last = t;
        self.index += 1;
        Ok(())
    }

    pub fn push_all(&mut self, tags: &[Tag]) -> Result<(), CoincidenceError> {
        tags.iter().try_for_each(|&t| self.push(t))
    }

    fn close(&mut self, h: u64) {
        let reach = self.cfg.reach_ps;
        let (lo, hi) = (h.saturating_sub(reach), h + reach);
        let range = |q: &VecDeque<u64>| (q.partition_point(|&x| x < lo), q.partition_point(|&x| x <= hi));
        let (a1, b1) = range(&self.d1);
        let (a2, b2) = range(&self.d2);
        let w = self.cfg.window_ps as i64;
        let bin = self.cfg.bin_ps as i64;
        // Pairs with both clicks up to here were already counted.
        let seen = self.last_closed.map(|p| p + reach);
        self.last_closed = Some(h);
        for i in a1..b1 {
            let t1 = self.d1[i];
            let t1_seen = seen.is_some_and(|s| t1 <= s);
            for j in a2..b2 {
                let t2 = self.d2[j];
                if t1_seen && seen.is_some_and(|s| t2 <= s) {
                    continue;
                }
                let tau = t2 as i64 - t1 as i64;
                if (-w..w).contains(&tau) {
                    self.counts[((tau + w) / bin) as usize] += 1;
                }
            }
        }
    }

    pub fn finish(mut self) -> Histogram {
        while let Some(h) = self.open.pop_front() {
            self.close(h);
        }
        let ps = 1e-12;
        Histogram {
            bin_width: self.cfg.bin_ps as f64 * ps,
            tau_min: -(self.cfg.window_ps as f64) * ps,
            tau_max: self.cfg.window_ps as f64 * ps,
            counts: self.counts,
            total_heralds: self.heralds,
            acquisition_span: self.first.map_or(0.0, |f| (self.last - f) as f64 * ps),
        }
    }
}

/// Histogram of a complete tag sequence.
pub fn herald_histogram(tags: &[Tag], cfg: HistogramConfig) -> Result<Histogram, CoincidenceError> {
    let mut c = HeraldCorrelator::new(cfg)?;
    c.push_all(tags)?;
    Ok(c.finish())
}
