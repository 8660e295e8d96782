//! Finite binary-input channel tables and the transforms used by the code
//! construction: quantization of the per-level mod-Λ partition channels,
//! Bhattacharyya / mutual-information functionals, Tal–Vardy style
//! degrading and upgrading merges, the Arıkan channel splitting, and the
//! asymmetric-to-symmetric channel embedding.
//!
//! Tables are immutable after construction; every transform returns a new
//! table. Symbols are kept in canonical form: likelihood-ratio sorted,
//! equal-LR symbols merged, zero-likelihood symbols dropped, probabilities
//! below 1e-300 flushed to zero.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::lattice::{coset_gaussian_weight, PartitionChain};
use crate::numeric::{bisect_increasing, normal_cdf, xlog2};
use crate::Result;

const PROB_FLOOR: f64 = 1e-300;
/// Refusing to quantize away more capacity than this is the "mu too small"
/// error condition.
const CAPACITY_LOSS_LIMIT: f64 = 0.05;

/// A binary memoryless symmetric (or general binary-input) channel as a
/// finite table of output symbols with per-input likelihoods (w0, w1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmsChannel {
    symbols: Vec<(f64, f64)>,
    symmetric: bool,
}

/// Log-likelihood-ratio sort key; a total order over all symbols.
fn lr_key(s: &(f64, f64)) -> f64 {
    if s.1 == 0.0 {
        f64::INFINITY
    } else if s.0 == 0.0 {
        f64::NEG_INFINITY
    } else {
        s.0.ln() - s.1.ln()
    }
}

/// Exact equality of likelihood ratios, robust to product underflow.
fn lr_eq(a: &(f64, f64), b: &(f64, f64)) -> bool {
    let x = a.0 * b.1;
    let y = b.0 * a.1;
    if x == 0.0 && y == 0.0 {
        return lr_key(a) == lr_key(b);
    }
    x == y
}

fn symbol_capacity(w0: f64, w1: f64) -> f64 {
    // Contribution of one output symbol to I(W) under uniform input, bits.
    0.5 * (xlog2(w0) + xlog2(w1)) - xlog2(0.5 * (w0 + w1))
}

impl BmsChannel {
    /// Build a channel from raw likelihood pairs. Rows are normalized to sum
    /// to one, the table is brought to canonical form, and (for
    /// `symmetric = true`) closed under the (w0,w1) <-> (w1,w0) involution.
    pub fn from_symbols(symbols: Vec<(f64, f64)>, symmetric: bool) -> Result<Self> {
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for &(w0, w1) in &symbols {
            if w0 < 0.0 || w1 < 0.0 || !w0.is_finite() || !w1.is_finite() {
                return Err(Error::domain("likelihoods must be finite and nonnegative"));
            }
            s0 += w0;
            s1 += w1;
        }
        if s0 <= 0.0 || s1 <= 0.0 {
            return Err(Error::domain("each input needs positive total likelihood"));
        }
        let normalized: Vec<(f64, f64)> =
            symbols.into_iter().map(|(w0, w1)| (w0 / s0, w1 / s1)).collect();
        let mut ch = BmsChannel { symbols: normalized, symmetric };
        if symmetric {
            ch = ch.symmetric_closure();
        } else {
            ch.canonicalize();
        }
        Ok(ch)
    }

    fn from_canonical(symbols: Vec<(f64, f64)>, symmetric: bool) -> Self {
        let mut ch = BmsChannel { symbols, symmetric };
        if symmetric {
            ch = ch.symmetric_closure();
        } else {
            ch.canonicalize();
        }
        ch
    }

    /// Binary symmetric channel with crossover probability p.
    pub fn bsc(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain("BSC crossover must be in [0,1]"));
        }
        BmsChannel::from_symbols(vec![(1.0 - p, p), (p, 1.0 - p)], true)
    }

    /// Binary erasure channel with erasure probability eps.
    pub fn bec(eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::domain("BEC erasure must be in [0,1]"));
        }
        BmsChannel::from_symbols(vec![(1.0 - eps, 0.0), (eps, eps), (0.0, 1.0 - eps)], true)
    }

    fn canonicalize(&mut self) {
        let mut keyed: Vec<(f64, (f64, f64))> = self
            .symbols
            .iter()
            .map(|&(w0, w1)| {
                let w0 = if w0 < PROB_FLOOR { 0.0 } else { w0 };
                let w1 = if w1 < PROB_FLOOR { 0.0 } else { w1 };
                (w0, w1)
            })
            .filter(|&(w0, w1)| w0 > 0.0 || w1 > 0.0)
            .map(|s| (lr_key(&s), s))
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Equal-LR runs are merged against the run's first symbol so that
        // exact ratio ties are detected independently of the running sum.
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(keyed.len());
        let mut rep: (f64, f64) = (0.0, 0.0);
        for (_, s) in keyed {
            if let Some(last) = merged.last_mut() {
                if lr_eq(&rep, &s) {
                    last.0 += s.0;
                    last.1 += s.1;
                    continue;
                }
            }
            rep = s;
            merged.push(s);
        }
        self.symbols = merged;
    }

    /// Close the table under output mirroring. For a channel that is
    /// symmetric this is information-lossless and makes the pairing
    /// (w0,w1) <-> (w1,w0) exact at the float level.
    fn symmetric_closure(&self) -> BmsChannel {
        let mut syms = Vec::with_capacity(2 * self.symbols.len());
        for &(w0, w1) in &self.symbols {
            syms.push((0.5 * w0, 0.5 * w1));
        }
        for &(w0, w1) in &self.symbols {
            syms.push((0.5 * w1, 0.5 * w0));
        }
        let mut ch = BmsChannel { symbols: syms, symmetric: true };
        ch.canonicalize();
        ch
    }

    pub fn symbols(&self) -> &[(f64, f64)] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Check the table invariants: rows sum to one within 1e-12, likelihoods
    /// nonnegative, LR-sorted, and exact mirror pairing when symmetric.
    pub fn validate(&self) -> Result<()> {
        let (mut s0, mut s1) = (0.0, 0.0);
        for &(w0, w1) in &self.symbols {
            if w0 < 0.0 || w1 < 0.0 {
                return Err(Error::domain("negative likelihood"));
            }
            s0 += w0;
            s1 += w1;
        }
        if (s0 - 1.0).abs() > 1e-12 || (s1 - 1.0).abs() > 1e-12 {
            return Err(Error::numeric(format!("row sums {s0}, {s1} deviate from 1")));
        }
        for w in self.symbols.windows(2) {
            if lr_key(&w[0]) > lr_key(&w[1]) {
                return Err(Error::numeric("symbols not LR-sorted"));
            }
        }
        if self.symmetric {
            let n = self.symbols.len();
            for i in 0..n {
                let (a0, a1) = self.symbols[i];
                let (b0, b1) = self.symbols[n - 1 - i];
                if a0 != b1 || a1 != b0 {
                    return Err(Error::numeric("symmetric flag set but symbols do not pair up"));
                }
            }
        }
        Ok(())
    }

    /// Symmetric Bhattacharyya parameter: sum over outputs of sqrt(w0 w1).
    pub fn bhattacharyya(&self) -> f64 {
        self.symbols.iter().map(|&(w0, w1)| (w0 * w1).sqrt()).sum()
    }

    /// Symmetric capacity (uniform input), in bits.
    pub fn mutual_information(&self) -> f64 {
        self.symbols.iter().map(|&(w0, w1)| symbol_capacity(w0, w1)).sum()
    }

    /// Arıkan channel combining/splitting: returns the (minus, plus) pair.
    pub fn split(&self) -> Result<(BmsChannel, BmsChannel)> {
        if !self.symmetric {
            return Err(Error::domain("polar split requires a symmetric channel"));
        }
        let n = self.symbols.len();
        let mut minus = Vec::with_capacity(n * n);
        let mut plus = Vec::with_capacity(2 * n * n);
        for &(a0, a1) in &self.symbols {
            for &(b0, b1) in &self.symbols {
                minus.push((0.5 * (a0 * b0 + a1 * b1), 0.5 * (a0 * b1 + a1 * b0)));
                plus.push((0.5 * a0 * b0, 0.5 * a1 * b1));
                plus.push((0.5 * a1 * b0, 0.5 * a0 * b1));
            }
        }
        Ok((BmsChannel::from_canonical(minus, true), BmsChannel::from_canonical(plus, true)))
    }

    /// Half-table view of a symmetric channel: the optional LR=1 symbol and
    /// the LR>1 symbols in ascending order.
    fn half_view(&self) -> (Option<(f64, f64)>, Vec<(f64, f64)>) {
        let n = self.symbols.len();
        let mut middle = None;
        let mut upper = Vec::new();
        for &(w0, w1) in &self.symbols {
            match w0.partial_cmp(&w1).unwrap() {
                std::cmp::Ordering::Greater => upper.push((w0, w1)),
                std::cmp::Ordering::Equal => middle = Some((w0, w1)),
                std::cmp::Ordering::Less => {}
            }
        }
        if 2 * upper.len() + middle.iter().len() != n {
            let mids: Vec<&(f64, f64)> = self.symbols.iter().filter(|s| s.0 == s.1).collect();
            let lows = self.symbols.iter().filter(|s| s.0 < s.1).count();
            eprintln!("IMBALANCE n={} upper={} lower={} mids={:?}", n, upper.len(), lows, mids);
            for w in self.symbols.windows(2) {
                if lr_eq(&w[0], &w[1]) {
                    eprintln!("unmerged equal-LR pair {:?} {:?} keys {} {}", w[0], w[1], lr_key(&w[0]), lr_key(&w[1]));
                }
            }
            let k = self.symbols.len();
            for i in 0..k {
                let a = self.symbols[i];
                let b = self.symbols[k-1-i];
                if a.0 != b.1 || a.1 != b.0 {
                    eprintln!("pairing break at {}: {:?} vs {:?}", i, a, b);
                    break;
                }
            }
        }
        (middle, upper)
    }

    fn from_half(middle: Option<(f64, f64)>, upper: Vec<(f64, f64)>) -> BmsChannel {
        let mut syms: Vec<(f64, f64)> = upper.iter().rev().map(|&(w0, w1)| (w1, w0)).collect();
        if let Some(m) = middle {
            syms.push(m);
        }
        syms.extend(upper.iter().copied());
        let mut ch = BmsChannel { symbols: syms, symmetric: true };
        ch.canonicalize();
        ch
    }

    /// Degrading merge to at most `mu` output symbols: repeatedly merges the
    /// adjacent (in LR order) symbol pair with the smallest capacity loss,
    /// mirror pairs merged together so the result stays exactly symmetric.
    pub fn degrade(&self, mu: usize) -> Result<BmsChannel> {
        if mu < 2 {
            return Err(Error::domain("mu must be at least 2"));
        }
        if !self.symmetric {
            return Err(Error::domain("degrading merge requires a symmetric channel"));
        }
        if self.symbols.len() <= mu {
            return Ok(self.clone());
        }
        let (middle, upper) = self.half_view();
        // Node 0 is the LR=1 class; merging node 0 with its successor stands
        // for folding that symbol onto its mirror.
        let mut arena = MergeArena::new(middle.unwrap_or((0.0, 0.0)), upper);
        let has_middle = middle.is_some();
        let mut size = 2 * arena.live_count().saturating_sub(1) + usize::from(has_middle);
        let mut folded = has_middle;

        while size > mu && arena.live_count() > 1 {
            let Some((left, right)) = arena.pop_best() else { break };
            if left == 0 {
                // Fold: symbol and its mirror collapse into the LR=1 class.
                let (a, b) = arena.node(right);
                arena.absorb_into_left(left, right, (a + b, b + a));
                folded = true;
            } else {
                let (a, b) = arena.node(right);
                arena.absorb_into_left(left, right, (a, b));
            }
            size = 2 * arena.live_count().saturating_sub(1) + usize::from(folded);
        }
        let (m, upper) = arena.into_half();
        Ok(BmsChannel::from_half(if folded { Some(m) } else { None }, upper))
    }

    /// Upgrading merge to at most `mu` output symbols using the two-neighbor
    /// LR-splitting rule: an eliminated symbol's mass is moved to its LR
    /// neighbors so the result is upgraded with the least capacity gain.
    pub fn upgrade(&self, mu: usize) -> Result<BmsChannel> {
        if mu < 2 {
            return Err(Error::domain("mu must be at least 2"));
        }
        if !self.symmetric {
            return Err(Error::domain("upgrading merge requires a symmetric channel"));
        }
        if self.symbols.len() <= mu {
            return Ok(self.clone());
        }
        let (middle, upper) = self.half_view();
        let mut arena = MergeArena::new_upgrade(middle.unwrap_or((0.0, 0.0)), upper);
        let has_middle = middle.is_some();
        let mut absorbed_into_middle = has_middle;
        let mut size = 2 * arena.live_count().saturating_sub(1) + usize::from(has_middle);

        while size > mu && arena.live_count() > 2 {
            let Some((left, victim)) = arena.pop_best() else { break };
            let (a, b) = arena.node(victim);
            let lam1 = if left == 0 { 1.0 } else { arena.lr(left) };
            let next = arena.next_of(victim).expect("victim is never the top symbol");
            let (u0, u1) = arena.node(next);
            let (mut to_low, to_high) = split_parts(a, b, lam1, u0, u1);
            if left == 0 {
                // The LR=1 class appears once in the full table but absorbs
                // mass from the eliminated symbol and its mirror.
                to_low = (to_low.0 + to_low.1, to_low.1 + to_low.0);
            }
            arena.eliminate(left, victim, next, to_low, to_high);
            if left == 0 && (to_low.0 > 0.0 || to_low.1 > 0.0) {
                absorbed_into_middle = true;
            }
            size = 2 * arena.live_count().saturating_sub(1) + usize::from(absorbed_into_middle);
        }
        let (m, upper) = arena.into_half();
        Ok(BmsChannel::from_half(if absorbed_into_middle { Some(m) } else { None }, upper))
    }

    /// Versioned binary serialization: magic, version, flags, symbol count,
    /// then little-endian f64 likelihood pairs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 16 * self.symbols.len());
        out.extend_from_slice(b"PLCH");
        out.extend_from_slice(&1u16.to_le_bytes());
        out.push(self.symmetric as u8);
        out.push(0);
        out.extend_from_slice(&(self.symbols.len() as u32).to_le_bytes());
        for &(w0, w1) in &self.symbols {
            out.extend_from_slice(&w0.to_le_bytes());
            out.extend_from_slice(&w1.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[0..4] != b"PLCH" {
            return Err(Error::Format("bad channel magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != 1 {
            return Err(Error::Format(format!("unsupported channel version {version}")));
        }
        let symmetric = bytes[6] != 0;
        let count = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
        if bytes.len() != 12 + 16 * count {
            return Err(Error::Format("channel payload length mismatch".into()));
        }
        let mut symbols = Vec::with_capacity(count);
        for i in 0..count {
            let off = 12 + 16 * i;
            let w0 = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            let w1 = f64::from_le_bytes(bytes[off + 8..off + 16].try_into().unwrap());
            symbols.push((w0, w1));
        }
        let ch = BmsChannel { symbols, symmetric };
        ch.validate()?;
        Ok(ch)
    }
}

/// Mass split of an eliminated symbol (a,b) between neighbors with LRs
/// lam1 < a/b < lam2 per the upgrading lemma; lam2 is taken from the upper
/// neighbor (u0, u1), infinite when u1 = 0.
fn split_parts(a: f64, b: f64, lam1: f64, u0: f64, u1: f64) -> ((f64, f64), (f64, f64)) {
    if u1 <= 0.0 {
        // lam2 = infinity: the w0 excess goes entirely up.
        let to_low = (lam1 * b, b);
        let to_high = (a - lam1 * b, 0.0);
        (to_low, (to_high.0.max(0.0), to_high.1))
    } else {
        let lam2 = u0 / u1;
        let denom = lam2 - lam1;
        if denom <= 0.0 {
            // Neighbors share the LR; merging into the upper one is exact.
            return ((0.0, 0.0), (a, b));
        }
        let t2 = (a - lam1 * b) / denom;
        let t1 = (lam2 * b - a) / denom;
        ((lam1 * t1.max(0.0), t1.max(0.0)), (lam2 * t2.max(0.0), t2.max(0.0)))
    }
}

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    left: usize,
    right: usize,
    stamp_left: u64,
    stamp_right: u64,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.score.total_cmp(&other.score) == std::cmp::Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the smallest score.
        other.score.total_cmp(&self.score)
    }
}

/// Linked-list-plus-heap worklist over the upper half of a symmetric table.
/// Node 0 always stands for the LR=1 class; nodes 1.. are the LR>1 symbols
/// in ascending order. Mirror symbols are implicit.
struct MergeArena {
    w: Vec<(f64, f64)>,
    prev: Vec<usize>,
    next: Vec<usize>,
    alive: Vec<bool>,
    stamp: Vec<u64>,
    counter: u64,
    heap: std::collections::BinaryHeap<Candidate>,
    live: usize,
    upgrade: bool,
}

impl MergeArena {
    fn build(middle: (f64, f64), upper: Vec<(f64, f64)>, upgrade: bool) -> Self {
        let n = upper.len() + 1;
        let mut w = Vec::with_capacity(n);
        w.push(middle);
        w.extend(upper);
        let mut arena = MergeArena {
            prev: (0..n).map(|i| if i == 0 { NONE } else { i - 1 }).collect(),
            next: (0..n).map(|i| if i + 1 == n { NONE } else { i + 1 }).collect(),
            alive: vec![true; n],
            stamp: vec![0; n],
            counter: 0,
            heap: std::collections::BinaryHeap::with_capacity(2 * n),
            live: n,
            w,
            upgrade,
        };
        for left in 0..n - 1 {
            arena.push_candidate(left, left + 1);
        }
        arena
    }

    fn new(middle: (f64, f64), upper: Vec<(f64, f64)>) -> Self {
        Self::build(middle, upper, false)
    }

    fn new_upgrade(middle: (f64, f64), upper: Vec<(f64, f64)>) -> Self {
        Self::build(middle, upper, true)
    }

    fn node(&self, i: usize) -> (f64, f64) {
        self.w[i]
    }

    fn lr(&self, i: usize) -> f64 {
        let (a, b) = self.w[i];
        if b <= 0.0 {
            f64::INFINITY
        } else {
            a / b
        }
    }

    fn next_of(&self, i: usize) -> Option<usize> {
        match self.next[i] {
            NONE => None,
            j => Some(j),
        }
    }

    fn live_count(&self) -> usize {
        self.live
    }

    fn score(&self, left: usize, right: usize) -> Option<f64> {
        let (b0, b1) = self.w[right];
        if self.upgrade {
            // Elimination gain; `right` must not be the top symbol.
            let up = self.next_of(right)?;
            let lam1 = if left == 0 { 1.0 } else { self.lr(left) };
            let (u0, u1) = self.w[up];
            let (lo, hi) = split_parts(b0, b1, lam1, u0, u1);
            let (l0, l1) = self.w[left];
            let gain = (symbol_capacity(l0 + lo.0, l1 + lo.1) - symbol_capacity(l0, l1))
                + (symbol_capacity(u0 + hi.0, u1 + hi.1) - symbol_capacity(u0, u1))
                - symbol_capacity(b0, b1);
            Some(2.0 * gain.max(0.0))
        } else if left == 0 {
            // Folding `right` onto its mirror into the LR=1 class.
            Some(2.0 * symbol_capacity(b0, b1))
        } else {
            let (a0, a1) = self.w[left];
            let loss = symbol_capacity(a0, a1) + symbol_capacity(b0, b1)
                - symbol_capacity(a0 + b0, a1 + b1);
            Some(2.0 * loss.max(0.0))
        }
    }

    fn push_candidate(&mut self, left: usize, right: usize) {
        if let Some(score) = self.score(left, right) {
            self.heap.push(Candidate {
                score,
                left,
                right,
                stamp_left: self.stamp[left],
                stamp_right: self.stamp[right],
            });
        }
    }

    fn pop_best(&mut self) -> Option<(usize, usize)> {
        while let Some(c) = self.heap.pop() {
            if self.alive[c.left]
                && self.alive[c.right]
                && self.stamp[c.left] == c.stamp_left
                && self.stamp[c.right] == c.stamp_right
                && self.next[c.left] == c.right
            {
                return Some((c.left, c.right));
            }
        }
        None
    }

    fn bump(&mut self, i: usize) {
        self.counter += 1;
        self.stamp[i] = self.counter;
    }

    fn unlink(&mut self, i: usize) {
        let (p, n) = (self.prev[i], self.next[i]);
        if p != NONE {
            self.next[p] = n;
        }
        if n != NONE {
            self.prev[n] = p;
        }
        self.alive[i] = false;
        self.bump(i);
        self.live -= 1;
    }

    /// Degrading step: remove `right`, adding `add` to `left`.
    fn absorb_into_left(&mut self, left: usize, right: usize, add: (f64, f64)) {
        self.unlink(right);
        self.w[left].0 += add.0;
        self.w[left].1 += add.1;
        self.bump(left);
        if self.prev[left] != NONE {
            self.push_candidate(self.prev[left], left);
        }
        if self.next[left] != NONE {
            self.push_candidate(left, self.next[left]);
        }
    }

    /// Upgrading step: remove `victim`, splitting its mass between `left`
    /// and `next`.
    fn eliminate(&mut self, left: usize, victim: usize, next: usize, lo: (f64, f64), hi: (f64, f64)) {
        self.unlink(victim);
        self.w[left].0 += lo.0;
        self.w[left].1 += lo.1;
        self.w[next].0 += hi.0;
        self.w[next].1 += hi.1;
        self.bump(left);
        self.bump(next);
        if self.prev[left] != NONE {
            self.push_candidate(self.prev[left], left);
        }
        self.push_candidate(left, next);
        if self.next[next] != NONE {
            self.push_candidate(next, self.next[next]);
        }
    }

    fn into_half(self) -> ((f64, f64), Vec<(f64, f64)>) {
        let middle = self.w[0];
        let mut upper = Vec::with_capacity(self.live.saturating_sub(1));
        let mut i = self.next[0];
        while i != NONE {
            upper.push(self.w[i]);
            i = self.next[i];
        }
        (middle, upper)
    }
}

/// A binary-input channel paired with a (generally non-uniform) input
/// distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymPair {
    pub prior: (f64, f64),
    /// Likelihood rows per output symbol: (P(y|0), P(y|1)).
    pub rows: Vec<(f64, f64)>,
}

impl AsymPair {
    pub fn new(prior: (f64, f64), rows: Vec<(f64, f64)>) -> Result<Self> {
        if prior.0 < 0.0 || prior.1 < 0.0 || (prior.0 + prior.1 - 1.0).abs() > 1e-12 {
            return Err(Error::domain("prior must be a probability pair"));
        }
        let (mut s0, mut s1) = (0.0, 0.0);
        for &(w0, w1) in &rows {
            if w0 < 0.0 || w1 < 0.0 {
                return Err(Error::domain("likelihoods must be nonnegative"));
            }
            s0 += w0;
            s1 += w1;
        }
        if (s0 - 1.0).abs() > 1e-9 || (s1 - 1.0).abs() > 1e-9 {
            return Err(Error::domain("likelihood rows must each sum to 1"));
        }
        Ok(AsymPair { prior, rows })
    }

    /// Bhattacharyya parameter of the joint: 2 sum_y sqrt(P(0,y) P(1,y)).
    pub fn bhattacharyya(&self) -> f64 {
        2.0 * self
            .rows
            .iter()
            .map(|&(w0, w1)| (self.prior.0 * w0 * self.prior.1 * w1).sqrt())
            .sum::<f64>()
    }

    /// Symmetrized channel with output (y, x xor x~) and uniform input.
    ///
    /// The Bhattacharyya parameter is preserved exactly.
    pub fn symmetrize(&self) -> BmsChannel {
        let mut syms = Vec::with_capacity(2 * self.rows.len());
        for &(w0, w1) in &self.rows {
            // d = x xor x~ = 0: likelihoods (P(0)w0, P(1)w1); d = 1: swapped.
            syms.push((self.prior.0 * w0, self.prior.1 * w1));
            syms.push((self.prior.1 * w1, self.prior.0 * w0));
        }
        let mut ch = BmsChannel { symbols: syms, symmetric: true };
        ch.canonicalize();
        ch
    }
}

/// Lattice points offset + step*k that can contribute mass inside
/// [lo - 14 sigma, hi + 14 sigma].
fn coset_points(lo: f64, hi: f64, offset: f64, step: f64, sigma: f64) -> Vec<f64> {
    let reach = 14.0 * sigma;
    let k_lo = ((lo - reach - offset) / step).floor() as i64;
    let k_hi = ((hi + reach - offset) / step).ceil() as i64;
    (k_lo..=k_hi).map(|k| offset + step * k as f64).collect()
}

/// CDF over [lo, z] of the Gaussian mixture centered at the given points.
fn coset_cdf(z: f64, lo: f64, points: &[f64], sigma: f64) -> f64 {
    points.iter().map(|&c| normal_cdf((z - c) / sigma) - normal_cdf((lo - c) / sigma)).sum()
}

/// Shared quantizer for a binary-input channel whose two conditional output
/// densities are Gaussian mixtures over two cosets, observed on [lo, hi).
///
/// Bin edges are placed at the per-mass quantiles of every contributing
/// Gaussian so that each bin carries at most ~1/bins_per_coset of either
/// conditional, independent of sigma; symbol masses are then exact CDF
/// differences at those edges.
fn quantize_coset_pair(
    lo: f64,
    hi: f64,
    offset0: f64,
    offset1: f64,
    step: f64,
    sigma: f64,
    bins_per_coset: usize,
) -> Vec<(f64, f64)> {
    let points0 = coset_points(lo, hi, offset0, step, sigma);
    let points1 = coset_points(lo, hi, offset1, step, sigma);
    let mut edges = vec![lo, hi];
    // A coarse uniform grid keeps bin diameters bounded even where neither
    // conditional carries mass.
    for i in 1..64 {
        edges.push(lo + (hi - lo) * i as f64 / 64.0);
    }
    for points in [&points0, &points1] {
        let m = (bins_per_coset / points.len().max(1)).clamp(2, bins_per_coset);
        let offsets: Vec<f64> = (1..m)
            .map(|j| sigma * bisect_increasing(normal_cdf, -9.0, 9.0, j as f64 / m as f64, 1e-11))
            .collect();
        for &a in points.iter() {
            for &dz in &offsets {
                let e = a + dz;
                if e > lo && e < hi {
                    edges.push(e);
                }
            }
        }
    }
    let xtol = (hi - lo) * 1e-13;
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup_by(|a, b| (*a - *b).abs() <= xtol);
    let mut symbols = Vec::with_capacity(edges.len());
    let mut prev0 = 0.0;
    let mut prev1 = 0.0;
    for &e in edges.iter().skip(1) {
        let c0 = coset_cdf(e, lo, &points0, sigma);
        let c1 = coset_cdf(e, lo, &points1, sigma);
        symbols.push(((c0 - prev0).max(0.0), (c1 - prev1).max(0.0)));
        prev0 = c0;
        prev1 = c1;
    }
    symbols
}

/// Quantized binary partition channel at `level` of the chain with the
/// prefix bits fixed to zero: input selects one of the two cosets of
/// Λ_level inside Λ_{level-1}, output is the mod-Λ_level observation
/// discretized into at most `mu` LR-sorted symbols by degrading-merge.
pub fn make_partition_channel(
    chain: &PartitionChain,
    level: usize,
    sigma: f64,
    mu: usize,
) -> Result<BmsChannel> {
    if level == 0 || level > chain.levels {
        return Err(Error::domain("level out of range"));
    }
    if mu < 8 {
        return Err(Error::domain("mu must be at least 8"));
    }
    if !(sigma > 0.0) {
        return Err(Error::domain("sigma must be positive"));
    }
    let half = 0.5 * chain.scale(level);
    let period = chain.scale(level);
    let shift = chain.scale(level - 1);
    let symbols = quantize_coset_pair(-half, half, 0.0, shift, period, sigma, 8 * mu);
    let fine = BmsChannel::from_symbols(symbols, true)?;
    let out = fine.degrade(mu)?;
    let loss = fine.mutual_information() - out.mutual_information();
    if loss > CAPACITY_LOSS_LIMIT {
        return Err(Error::FidelityTooLow { mu, capacity_loss: loss });
    }
    Ok(out)
}

/// Quantized "equivalent channel" for `level`: output restricted to the
/// fundamental region of the bottom lattice Λ_r, the deeper-level cosets
/// averaged uniformly, prefix bits fixed to zero.
pub fn make_equivalent_channel(
    chain: &PartitionChain,
    level: usize,
    sigma: f64,
    mu: usize,
) -> Result<BmsChannel> {
    if level == 0 || level > chain.levels {
        return Err(Error::domain("level out of range"));
    }
    if mu < 8 {
        return Err(Error::domain("mu must be at least 8"));
    }
    let half = 0.5 * chain.bottom_scale();
    let step = chain.scale(level);
    let shift = chain.scale(level - 1);
    // The 1/|Λ_level/Λ_r| coset-averaging weight cancels in the row
    // normalization performed by from_symbols.
    let symbols = quantize_coset_pair(-half, half, 0.0, shift, step, sigma, 8 * mu);
    let fine = BmsChannel::from_symbols(symbols, true)?;
    let out = fine.degrade(mu)?;
    let loss = fine.mutual_information() - out.mutual_information();
    if loss > CAPACITY_LOSS_LIMIT {
        return Err(Error::FidelityTooLow { mu, capacity_loss: loss });
    }
    Ok(out)
}

/// Exact symmetrized source channel at `level`: the test channel between a
/// uniform bit and (X_{1:level-1}, X_level xor X~) when X follows the
/// discrete Gaussian over the chain. Polarizing it yields the
/// Z(U|U^{1:i-1}, X_{1:l-1}) statistics that drive the shaping partition.
pub fn make_source_channel(chain: &PartitionChain, sigma_s: f64, level: usize) -> Result<BmsChannel> {
    if level == 0 || level > chain.levels {
        return Err(Error::domain("level out of range"));
    }
    if !(sigma_s > 0.0) {
        return Err(Error::domain("sigma_s must be positive"));
    }
    let prefix_step = chain.scale(level - 1);
    let sub_step = chain.scale(level);
    let total = coset_gaussian_weight(0.0, chain.alpha, sigma_s);
    let mut syms = Vec::with_capacity(1usize << level);
    for t in 0..(1u64 << (level - 1)) {
        let offset = chain.alpha * t as f64;
        let p_t = coset_gaussian_weight(offset, prefix_step, sigma_s) / total;
        let m0 = coset_gaussian_weight(offset, sub_step, sigma_s);
        let m1 = coset_gaussian_weight(offset + prefix_step, sub_step, sigma_s);
        let (c0, c1) = (m0 / (m0 + m1), m1 / (m0 + m1));
        syms.push((p_t * c0, p_t * c1));
        syms.push((p_t * c1, p_t * c0));
    }
    BmsChannel::from_symbols(syms, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bsc_bec_closed_forms() {
        let bsc = BmsChannel::bsc(0.11).unwrap();
        assert!((bsc.bhattacharyya() - 0.6257795138864806).abs() < 1e-14);
        assert!((bsc.mutual_information() - 0.5000840418354720).abs() < 1e-12);
        assert!(BmsChannel::bsc(0.0).unwrap().bhattacharyya() < 1e-15);
        for eps in [0.0, 0.3, 0.5, 1.0] {
            let bec = BmsChannel::bec(eps).unwrap();
            assert!((bec.bhattacharyya() - eps).abs() < 1e-15);
            assert!((bec.mutual_information() - (1.0 - eps)).abs() < 1e-12);
        }
    }

    #[test]
    fn capacity_bhattacharyya_bound() {
        // I(W) <= sqrt(1 - Z^2).
        for p in [0.05, 0.2, 0.45] {
            let ch = BmsChannel::bsc(p).unwrap();
            let z = ch.bhattacharyya();
            assert!(ch.mutual_information() <= (1.0 - z * z).sqrt() + 1e-12);
        }
        let chain = PartitionChain::new(1.0, 2).unwrap();
        let ch = make_partition_channel(&chain, 1, 0.4, 32).unwrap();
        let z = ch.bhattacharyya();
        assert!(ch.mutual_information() <= (1.0 - z * z).sqrt() + 1e-12);
    }

    #[test]
    fn asym_bhattacharyya_cases() {
        let bsc_rows = vec![(0.9, 0.1), (0.1, 0.9)];
        let uniform = AsymPair::new((0.5, 0.5), bsc_rows.clone()).unwrap();
        let sym = BmsChannel::bsc(0.1).unwrap();
        assert!((uniform.bhattacharyya() - sym.bhattacharyya()).abs() < 1e-15);

        let degenerate = AsymPair::new((1.0, 0.0), bsc_rows.clone()).unwrap();
        assert_eq!(degenerate.bhattacharyya(), 0.0);

        // Direct-sum oracle: y=0 gives sqrt(0.72*0.02), y=1 gives
        // sqrt(0.08*0.18); both are 0.12, so Z = 0.48.
        let skew = AsymPair::new((0.8, 0.2), bsc_rows).unwrap();
        let oracle = 2.0 * ((0.8f64 * 0.9 * 0.2 * 0.1).sqrt() + (0.8f64 * 0.1 * 0.2 * 0.9).sqrt());
        assert!((skew.bhattacharyya() - oracle).abs() < 1e-15);
        assert!((skew.bhattacharyya() - 0.48).abs() < 1e-12);
    }

    #[test]
    fn symmetrize_preserves_bhattacharyya() {
        let pair = AsymPair::new((0.8, 0.2), vec![(0.9, 0.1), (0.1, 0.9)]).unwrap();
        let sym = pair.symmetrize();
        sym.validate().unwrap();
        assert!((sym.bhattacharyya() - pair.bhattacharyya()).abs() < 1e-14);

        // Uniform prior reduces (after equal-LR merging) to the original.
        let uni = AsymPair::new((0.5, 0.5), vec![(0.7, 0.2), (0.2, 0.7), (0.1, 0.1)]).unwrap();
        let sym = uni.symmetrize();
        let orig = BmsChannel::from_symbols(vec![(0.7, 0.2), (0.2, 0.7), (0.1, 0.1)], true).unwrap();
        assert_eq!(sym.len(), orig.len());
        assert!((sym.bhattacharyya() - orig.bhattacharyya()).abs() < 1e-14);
        assert!((sym.mutual_information() - orig.mutual_information()).abs() < 1e-13);

        // Deterministic prior kills the parameter.
        let det = AsymPair::new((1.0, 0.0), vec![(0.6, 0.3), (0.4, 0.7)]).unwrap();
        assert!(det.symmetrize().bhattacharyya() < 1e-15);
    }

    #[test]
    fn symmetrize_random_pairs_equality() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let p0 = 0.05 + 0.9 * next();
            let mut r0: Vec<f64> = (0..4).map(|_| next() + 1e-3).collect();
            let mut r1: Vec<f64> = (0..4).map(|_| next() + 1e-3).collect();
            let (s0, s1): (f64, f64) = (r0.iter().sum(), r1.iter().sum());
            r0.iter_mut().for_each(|x| *x /= s0);
            r1.iter_mut().for_each(|x| *x /= s1);
            let rows: Vec<(f64, f64)> = r0.into_iter().zip(r1).collect();
            let pair = AsymPair::new((p0, 1.0 - p0), rows).unwrap();
            assert!((pair.symmetrize().bhattacharyya() - pair.bhattacharyya()).abs() < 1e-14);
        }
    }

    #[test]
    fn split_bec_closed_form() {
        let (minus, plus) = BmsChannel::bec(0.5).unwrap().split().unwrap();
        assert!((minus.bhattacharyya() - 0.75).abs() < 1e-14);
        assert!((plus.bhattacharyya() - 0.25).abs() < 1e-14);
        assert!((minus.mutual_information() - 0.25).abs() < 1e-12);
        assert!((plus.mutual_information() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn split_identities() {
        let chain = PartitionChain::new(1.0, 1).unwrap();
        for ch in [
            BmsChannel::bsc(0.11).unwrap(),
            BmsChannel::bec(0.3).unwrap(),
            make_partition_channel(&chain, 1, 0.35, 64).unwrap(),
        ] {
            let z = ch.bhattacharyya();
            let i = ch.mutual_information();
            let (minus, plus) = ch.split().unwrap();
            minus.validate().unwrap();
            plus.validate().unwrap();
            assert!((plus.bhattacharyya() - z * z).abs() < 1e-12);
            assert!(minus.bhattacharyya() <= 2.0 * z - z * z + 1e-12);
            assert!((minus.mutual_information() + plus.mutual_information() - 2.0 * i).abs() < 1e-10);
        }
    }

    #[test]
    fn degrade_upgrade_sandwich() {
        let chain = PartitionChain::new(1.0, 1).unwrap();
        let ch = make_partition_channel(&chain, 1, 0.35, 256).unwrap();
        let deg = ch.degrade(16).unwrap();
        let upg = ch.upgrade(16).unwrap();
        deg.validate().unwrap();
        upg.validate().unwrap();
        assert!(deg.len() <= 16 && upg.len() <= 16);
        assert!(deg.mutual_information() <= ch.mutual_information() + 1e-12);
        assert!(upg.mutual_information() >= ch.mutual_information() - 1e-12);
        assert!(deg.bhattacharyya() >= ch.bhattacharyya() - 1e-12);
        assert!(upg.bhattacharyya() <= ch.bhattacharyya() + 1e-12);
    }

    #[test]
    fn merge_identity_cases() {
        let bec = BmsChannel::bec(0.4).unwrap();
        assert_eq!(bec.degrade(3).unwrap(), bec);
        assert_eq!(bec.upgrade(3).unwrap(), bec);
        let bsc = BmsChannel::bsc(0.2).unwrap();
        assert_eq!(bsc.degrade(64).unwrap(), bsc);
    }

    #[test]
    fn degrade_capacity_loss_is_small() {
        // 1024-symbol quantized channel degraded to 64 symbols loses at most
        // 1e-3 bits against the high-fidelity reference.
        let chain = PartitionChain::new(1.0, 1).unwrap();
        let fine = make_partition_channel(&chain, 1, 0.35, 8192).unwrap();
        let reference = fine.degrade(1024).unwrap();
        let coarse = reference.degrade(64).unwrap();
        assert!(coarse.len() <= 64);
        let drop = reference.mutual_information() - coarse.mutual_information();
        assert!((0.0..=1e-3).contains(&drop), "capacity drop {drop}");
    }

    #[test]
    fn partition_channel_noise_dominated() {
        let chain = PartitionChain::new(1.0, 1).unwrap();
        let ch = make_partition_channel(&chain, 1, 10.0, 32).unwrap();
        assert!(ch.mutual_information() <= 1e-4);
    }

    #[test]
    fn partition_channel_against_riemann_oracle() {
        // 1e5-bin Riemann oracle for C(Z/2Z, sigma=0.2).
        let chain = PartitionChain::new(1.0, 1).unwrap();
        let ch = make_partition_channel(&chain, 1, 0.2, 256).unwrap();
        let n = 100_000;
        let mut oracle = 0.0;
        for i in 0..n {
            let z = -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
            let f0: f64 = (-30..=30i32)
                .map(|k| {
                    let d: f64 = z - 2.0 * k as f64;
                    (-d * d / (2.0 * 0.04)).exp()
                })
                .sum();
            let f1: f64 = (-30..=30i32)
                .map(|k| {
                    let d: f64 = z - 1.0 - 2.0 * k as f64;
                    (-d * d / (2.0 * 0.04)).exp()
                })
                .sum();
            let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * 0.2);
            let (w0, w1) = (f0 * norm * 2.0 / n as f64, f1 * norm * 2.0 / n as f64);
            oracle += symbol_capacity(w0, w1);
        }
        assert!(
            (ch.mutual_information() - oracle).abs() < 1e-3,
            "capacity {} vs oracle {oracle}",
            ch.mutual_information()
        );
    }

    #[test]
    fn partition_levels_are_degraded_downward() {
        // At equal noise the level-l channel is degraded with respect to the
        // level-(l+1) channel: Z decreases and I increases with the level.
        let chain = PartitionChain::new(1.0, 3).unwrap();
        for sigma in [0.3, 0.6, 1.2] {
            let mut prev_z = f64::INFINITY;
            let mut prev_i = -1.0;
            for level in 1..=3 {
                let ch = make_partition_channel(&chain, level, sigma, 64).unwrap();
                let z = ch.bhattacharyya();
                let i = ch.mutual_information();
                assert!(z <= prev_z + 1e-9, "sigma={sigma} level={level}");
                assert!(i >= prev_i - 1e-9);
                prev_z = z;
                prev_i = i;
            }
        }
    }

    #[test]
    fn equivalent_channel_matches_partition_channel_statistics() {
        let chain = PartitionChain::new(1.0, 2).unwrap();
        for level in 1..=2 {
            let a = make_partition_channel(&chain, level, 0.5, 128).unwrap();
            let b = make_equivalent_channel(&chain, level, 0.5, 128).unwrap();
            assert!((a.mutual_information() - b.mutual_information()).abs() < 2e-3);
            assert!((a.bhattacharyya() - b.bhattacharyya()).abs() < 2e-3);
        }
    }

    #[test]
    fn source_channel_limits() {
        let chain = PartitionChain::new(1.0, 2).unwrap();
        // Flat shaping: every level is a uniform coin, Z = 1.
        let flat = make_source_channel(&chain, 1e4, 1).unwrap();
        assert!(flat.bhattacharyya() > 1.0 - 1e-9);
        // Tiny sigma: level bit is deterministic, Z = 0.
        let sharp = make_source_channel(&chain, 1e-2, 1).unwrap();
        assert!(sharp.bhattacharyya() < 1e-12);
    }

    #[test]
    fn binary_roundtrip() {
        let chain = PartitionChain::new(1.5, 2).unwrap();
        let ch = make_partition_channel(&chain, 1, 0.6, 32).unwrap();
        let bytes = ch.to_bytes();
        assert_eq!(&bytes[0..4], b"PLCH");
        let back = BmsChannel::from_bytes(&bytes).unwrap();
        assert_eq!(ch, back);
        assert!(BmsChannel::from_bytes(&bytes[..10]).is_err());
        let mut corrupt = bytes.clone();
        corrupt[20] ^= 0xff;
        assert!(BmsChannel::from_bytes(&corrupt).is_err());
    }

    #[test]
    fn json_debug_roundtrip() {
        let ch = BmsChannel::bsc(0.17).unwrap();
        let s = serde_json::to_string(&ch).unwrap();
        let back: BmsChannel = serde_json::from_str(&s).unwrap();
        assert_eq!(ch, back);
    }
}
