//! VTAGE load-value predictor.
//!
//! A pc-indexed base table backed by tagged tables indexed with geometric
//! lengths of global branch history. Confidence counters advance with
//! forward-probabilistic increments and reset on any misprediction.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpConfig {
    /// Base table plus tagged tables.
    pub components: usize,
    pub entries: usize,
    pub tag_bits: u32,
    pub conf_bits: u32,
    pub min_history: usize,
    pub latency: u64,
    /// Increment probability out of each confidence level.
    pub fpc: Vec<f64>,
    pub seed: u64,
}

impl Default for VpConfig {
    fn default() -> Self {
        VpConfig {
            components: 13,
            entries: 128,
            tag_bits: 12,
            conf_bits: 3,
            min_history: 2,
            latency: 2,
            fpc: vec![1.0, 0.5, 0.5, 0.25, 0.25, 0.25, 0.125],
            seed: 0x5EED,
        }
    }
}

impl VpConfig {
    pub fn history_lengths(&self) -> Vec<usize> {
        (0..self.components.saturating_sub(1))
            .map(|i| self.min_history << i)
            .collect()
    }

    fn max_conf(&self) -> u8 {
        ((1u32 << self.conf_bits) - 1) as u8
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.components < 1 || !self.entries.is_power_of_two() {
            return Err("value predictor needs a power-of-two table size".into());
        }
        if self.fpc.len() != self.max_conf() as usize {
            return Err(format!("need {} forward-probabilistic steps", self.max_conf()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct BaseEntry {
    valid: bool,
    value: u64,
    conf: u8,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct TaggedEntry {
    valid: bool,
    tag: u16,
    value: u64,
    conf: u8,
    useful: bool,
}

/// History folded to `width` bits, updated incrementally.
#[derive(Debug, Clone)]
struct Folded {
    len: usize,
    width: u32,
    value: u64,
}

impl Folded {
    fn new(len: usize, width: u32) -> Self {
        Folded { len, width, value: 0 }
    }

    fn update(&mut self, incoming: bool, outgoing: bool) {
        let w = self.width;
        let mask = (1u64 << w) - 1;
        self.value = (self.value << 1) | incoming as u64;
        self.value ^= (outgoing as u64) << (self.len as u32 % w);
        self.value ^= self.value >> w;
        self.value &= mask;
    }
}

/// Everything needed to train the entries a prediction came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VpLookup {
    pub pc: u64,
    base_index: usize,
    indices: Vec<usize>,
    tags: Vec<u16>,
    /// Tagged component that provided the prediction, if any.
    provider: Option<usize>,
    prediction: Option<Prediction>,
}

impl VpLookup {
    pub fn prediction(&self) -> Option<Prediction> {
        self.prediction
    }

    /// The prediction if it is confident enough to be used.
    pub fn confident(&self) -> Option<u64> {
        self.prediction.filter(|p| p.confident).map(|p| p.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub value: u64,
    pub confident: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VpCounters {
    pub lookups: u64,
    pub updates: u64,
    pub allocations: u64,
}

#[derive(Debug, Clone)]
pub struct VpState {
    cfg: VpConfig,
    base: Vec<BaseEntry>,
    tagged: Vec<Vec<TaggedEntry>>,
    history: VecDeque<bool>,
    lens: Vec<usize>,
    max_history: usize,
    idx_fold: Vec<Folded>,
    tag_fold: Vec<Folded>,
    tag_fold2: Vec<Folded>,
    rng: ChaCha8Rng,
    counters: VpCounters,
}

impl VpState {
    pub fn new(cfg: VpConfig) -> Self {
        let lens = cfg.history_lengths();
        let idx_bits = cfg.entries.trailing_zeros().max(1);
        let max_history = lens.last().copied().unwrap_or(0);
        VpState {
            base: vec![BaseEntry::default(); cfg.entries],
            tagged: vec![vec![TaggedEntry::default(); cfg.entries]; lens.len()],
            history: VecDeque::from(vec![false; max_history + 1]),
            max_history,
            lens: lens.clone(),
            idx_fold: lens.iter().map(|&l| Folded::new(l, idx_bits)).collect(),
            tag_fold: lens.iter().map(|&l| Folded::new(l, cfg.tag_bits)).collect(),
            tag_fold2: lens.iter().map(|&l| Folded::new(l, cfg.tag_bits - 1)).collect(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            counters: VpCounters::default(),
            cfg,
        }
    }

    pub fn config(&self) -> &VpConfig {
        &self.cfg
    }

    pub fn counters(&self) -> &VpCounters {
        &self.counters
    }

    /// Shifts one branch outcome into the global history.
    pub fn notify_branch(&mut self, taken: bool) {
        if self.max_history == 0 {
            return;
        }
        self.history.push_front(taken);
        self.history.truncate(self.max_history + 1);
        for i in 0..self.lens.len() {
            let out = self.history[self.lens[i]];
            self.idx_fold[i].update(taken, out);
            self.tag_fold[i].update(taken, out);
            self.tag_fold2[i].update(taken, out);
        }
    }

    /// The most recent `n` outcomes, newest first.
    pub fn recent_history(&self, n: usize) -> Vec<bool> {
        self.history.iter().take(n.min(self.max_history)).copied().collect()
    }

    fn base_index(&self, pc: u64) -> usize {
        ((pc >> 2) as usize) & (self.cfg.entries - 1)
    }

    pub fn lookup(&mut self, pc: u64) -> VpLookup {
        self.counters.lookups += 1;
        self.peek(pc)
    }

    /// A lookup that does not count as a predictor access.
    pub fn peek(&self, pc: u64) -> VpLookup {
        let mask = self.cfg.entries as u64 - 1;
        let tag_mask = (1u64 << self.cfg.tag_bits) - 1;
        let p = pc >> 2;
        let mut indices = Vec::with_capacity(self.tagged.len());
        let mut tags = Vec::with_capacity(self.tagged.len());
        for i in 0..self.tagged.len() {
            let idx = (p ^ (p >> (i as u64 + 3)) ^ self.idx_fold[i].value) & mask;
            let tag = (p ^ self.tag_fold[i].value ^ (self.tag_fold2[i].value << 1)) & tag_mask;
            indices.push(idx as usize);
            tags.push(tag as u16);
        }
        let max = self.cfg.max_conf();
        let base_index = self.base_index(pc);
        let provider = (0..self.tagged.len()).rev().find(|&i| {
            let e = &self.tagged[i][indices[i]];
            e.valid && e.tag == tags[i]
        });
        let prediction = match provider {
            Some(i) => {
                let e = &self.tagged[i][indices[i]];
                Some(Prediction {
                    value: e.value,
                    confident: e.conf == max,
                })
            }
            None => {
                let b = &self.base[base_index];
                b.valid.then_some(Prediction {
                    value: b.value,
                    confident: b.conf == max,
                })
            }
        };
        VpLookup {
            pc,
            base_index,
            indices,
            tags,
            provider,
            prediction,
        }
    }

    /// Convenience wrapper: looks up `pc` under the current history.
    pub fn predict(&mut self, pc: u64) -> Option<Prediction> {
        self.lookup(pc).prediction()
    }

    fn bump(&mut self, conf: u8) -> u8 {
        let max = self.cfg.max_conf();
        if conf >= max {
            return max;
        }
        let p = self.cfg.fpc[conf as usize];
        if p >= 1.0 || self.rng.gen_bool(p) {
            conf + 1
        } else {
            conf
        }
    }

    /// Trains the entries `lookup` read with the architectural value.
    pub fn train(&mut self, lookup: &VpLookup, actual: u64) {
        self.counters.updates += 1;
        let correct = lookup.prediction.is_some_and(|p| p.value == actual);
        match lookup.provider {
            Some(i) => {
                let idx = lookup.indices[i];
                let conf = self.tagged[i][idx].conf;
                if correct {
                    let c = self.bump(conf);
                    let e = &mut self.tagged[i][idx];
                    e.conf = c;
                    e.useful = true;
                } else {
                    let e = &mut self.tagged[i][idx];
                    e.value = actual;
                    e.conf = 0;
                    e.useful = false;
                }
            }
            None => {
                let b = lookup.base_index;
                if self.base[b].valid && self.base[b].value == actual {
                    let c = self.bump(self.base[b].conf);
                    self.base[b].conf = c;
                } else {
                    self.base[b] = BaseEntry {
                        valid: true,
                        value: actual,
                        conf: 0,
                    };
                }
            }
        }
        // The base table always tracks the latest value of its pc slot.
        if lookup.provider.is_some() {
            let b = lookup.base_index;
            if !(self.base[b].valid && self.base[b].value == actual) {
                self.base[b] = BaseEntry {
                    valid: true,
                    value: actual,
                    conf: 0,
                };
            }
        }
        if !correct && lookup.prediction.is_some() {
            self.allocate(lookup, actual);
        }
    }

    fn allocate(&mut self, lookup: &VpLookup, actual: u64) {
        let start = lookup.provider.map_or(0, |p| p + 1);
        for i in start..self.tagged.len() {
            let idx = lookup.indices[i];
            let e = &mut self.tagged[i][idx];
            if !e.useful {
                *e = TaggedEntry {
                    valid: true,
                    tag: lookup.tags[i],
                    value: actual,
                    conf: 0,
                    useful: false,
                };
                self.counters.allocations += 1;
                return;
            }
        }
        for i in start..self.tagged.len() {
            let idx = lookup.indices[i];
            self.tagged[i][idx].useful = false;
        }
    }
}
