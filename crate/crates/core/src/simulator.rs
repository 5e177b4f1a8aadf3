//! Monte Carlo engines for the Poissonized and deterministic schemes.
//!
//! Boxes are laid out as individually tracked singles, then blocks of
//! consecutive indices whose probabilities differ by at most a relative
//! `spread`, then a stream region beyond the horizon `k_active`. Within a
//! block every box is hit at the common rate `p_min` plus its own residual
//! `p_k - p_min`. Boxes that have only seen common-rate hits are
//! exchangeable and kept as a census of multiplicities (capped at
//! `j_max + 1`). A residual hit picks its box by rejection and promotes it
//! to an individually tracked ("distinguished") box whose state is drawn
//! from the census. Balls landing beyond the horizon each open a fresh box;
//! the probability that two of them share a box over the whole grid is
//! bounded by the layout certificate.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{gauss_legendre5, poisson_pmf, poisson_sf, CompensatedSum};
use crate::weights::WeightModel;

/// Bound on the probability that two balls beyond the horizon share a box.
pub const LEAK_BOUND: f64 = 1e-6;
pub const DEFAULT_SPREAD: f64 = 0.001;
/// Blocks expecting fewer hits per step are filled ball by ball.
const SPARSE_HITS: f64 = 8.0;
/// Remaining balls below which a deterministic step throws singly.
const TOP_UP: u64 = 4096;
const MAX_SINGLES: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("no box horizon below {limit:e} certifies a leak bound of {bound:e} for t_max = {t_max:e}")]
    Horizon { t_max: f64, limit: f64, bound: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Times (Poissonized) or ball counts (deterministic), strictly increasing.
    pub grid: Vec<f64>,
    pub j_max: u32,
    pub replicates: u32,
    pub seed: u64,
    /// Relative probability spread allowed within a block.
    pub spread: f64,
    /// Track exact ball totals in the Poissonized engine. Costs one draw per
    /// box that crosses the census cap.
    pub track_balls: bool,
}

impl SimConfig {
    pub fn new(grid: Vec<f64>, j_max: u32, replicates: u32, seed: u64) -> Self {
        SimConfig { grid, j_max, replicates, seed, spread: DEFAULT_SPREAD, track_balls: true }
    }

    fn validate(&self, integer_grid: bool) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.grid.is_empty() {
            return bad("grid is empty");
        }
        if self.grid.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return bad("grid values must be finite and nonnegative");
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("grid must be strictly increasing");
        }
        if integer_grid && self.grid.iter().any(|g| g.fract() != 0.0 || *g > 9.0e15) {
            return bad("ball-count grid must hold integers");
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1");
        }
        if self.j_max == 0 || self.j_max > 64 {
            return bad("j_max must lie in 1..=64");
        }
        if !(self.spread > 0.0 && self.spread < 1.0) {
            return bad("spread must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub grid_value: f64,
    /// K_j for j = 1..=j_max+1.
    pub k: Vec<u64>,
    /// K_j^* for j = 1..=j_max.
    pub k_star: Vec<u64>,
    /// Balls thrown so far; `None` when not tracked.
    pub balls: Option<u64>,
    /// Balls that landed beyond the box horizon, each in a fresh box.
    pub overflow_count: u64,
    /// Balls held by boxes with more than j_max balls; `None` when not tracked.
    pub capped_balls: Option<u64>,
}

impl PathPoint {
    pub fn k_at_least(&self, j: u32) -> u64 {
        self.k[j as usize - 1]
    }

    pub fn k_exactly(&self, j: u32) -> u64 {
        self.k_star[j as usize - 1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyPath {
    pub replicate: u32,
    pub points: Vec<PathPoint>,
}

/// Both schemes driven by one ball stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledPath {
    pub replicate: u32,
    /// Counts after exactly n_i balls.
    pub deterministic: Vec<PathPoint>,
    /// Counts at time t = n_i, i.e. after pi(n_i) balls.
    pub poissonized: Vec<PathPoint>,
}

#[derive(Clone, Debug)]
struct Block {
    start: u128,
    len: u128,
    p_max: f64,
    p_min: f64,
    mass: f64,
    resid: f64,
}

/// Partition of the box indices used by all engines.
#[derive(Clone, Debug)]
pub struct Layout {
    singles: Vec<f64>,
    blocks: Vec<Block>,
    horizon: u128,
    tail: f64,
    certificate: f64,
}

impl Layout {
    pub fn new(model: &WeightModel, t_max: f64, spread: f64) -> Result<Self, SimError> {
        if let Some(n) = model.num_boxes() {
            let singles = (1..=n).map(|k| model.prob(k)).collect();
            return Ok(Layout { singles, blocks: Vec::new(), horizon: n as u128, tail: 0.0, certificate: 0.0 });
        }
        let (horizon, certificate) = find_horizon(model, t_max)?;
        let ln_spread = spread.ln_1p();
        let mut singles = Vec::new();
        let mut k: u64 = 1;
        while (k as u128) <= horizon && k <= MAX_SINGLES {
            if ln_spread / model.d_ln_weight(k as f64).abs() >= 2.0 {
                break;
            }
            singles.push(model.prob(k));
            k += 1;
        }
        let mut blocks = Vec::new();
        let mut a = k as u128;
        while a <= horizon {
            let x = a as f64;
            let width = (ln_spread / model.d_ln_weight(x).abs()).floor().max(2.0);
            let len = (width as u128).min(horizon - a + 1);
            let b = a + len - 1;
            blocks.push(block(model, a, b));
            a = b + 1;
        }
        let tail = sum_beyond(model, horizon);
        Ok(Layout { singles, blocks, horizon, tail, certificate })
    }

    /// Last box index simulated with exact multiplicities.
    pub fn k_active(&self) -> u128 {
        self.horizon
    }

    /// Probability bound that two stream balls collide over the grid.
    pub fn certificate(&self) -> f64 {
        self.certificate
    }

    pub fn num_singles(&self) -> usize {
        self.singles.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Mass beyond the horizon.
    pub fn stream_mass(&self) -> f64 {
        self.tail
    }

    pub fn total_mass(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        self.singles.iter().for_each(|&p| acc.add(p));
        self.blocks.iter().for_each(|b| acc.add(b.mass));
        acc.add(self.tail);
        acc.value()
    }

    fn category_masses(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.singles.clone();
        m.extend(self.blocks.iter().map(|b| b.mass));
        m.push(self.tail);
        m
    }
}

fn block(model: &WeightModel, a: u128, b: u128) -> Block {
    let len = b - a + 1;
    let p_max = model.prob_at(a as f64);
    let p_min = model.prob_at(b as f64);
    let mass = if len <= 32 {
        let mut acc = CompensatedSum::new();
        for k in a..=b {
            acc.add(model.prob_at(k as f64));
        }
        acc.value()
    } else {
        // Euler-Maclaurin over a nearly flat stretch
        let (xa, xb) = (a as f64, b as f64);
        let d = |x: f64| model.prob_at(x) * model.d_ln_weight(x);
        gauss_legendre5(|x| model.prob_at(x), xa, xb) + 0.5 * (p_max + p_min) + (d(xb) - d(xa)) / 12.0
    };
    let resid = (mass - len as f64 * p_min).max(0.0);
    Block { start: a, len, p_max, p_min, mass, resid }
}

/// sum_{k > h} p_k by Euler-Maclaurin from h + 1.
fn sum_beyond(model: &WeightModel, h: u128) -> f64 {
    let x = h as f64 + 1.0;
    let p = model.prob_at(x);
    model.tail_integral(x) + 0.5 * p - p * model.d_ln_weight(x) / 12.0
}

fn find_horizon(model: &WeightModel, t_max: f64) -> Result<(u128, f64), SimError> {
    let t = t_max.max(1.0);
    let bound = |k: f64| 0.5 * t * t * model.prob_at(k + 1.0) * model.tail_integral(k);
    let limit = 1e30;
    let mut hi = 64.0f64;
    while bound(hi) >= LEAK_BOUND {
        hi *= 2.0;
        if hi > limit {
            return Err(SimError::Horizon { t_max, limit, bound: LEAK_BOUND });
        }
    }
    let mut lo = (hi / 2.0).max(1.0);
    while hi - lo > 1.0 && hi / lo > 1.01 {
        let mid = 0.5 * (lo + hi);
        if bound(mid) < LEAK_BOUND {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let h = hi.ceil();
    Ok((h as u128, bound(h)))
}

// Samplers

fn poisson<R: Rng>(rng: &mut R, lambda: f64) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    if lambda < 12.0 {
        let mut u: f64 = rng.random();
        let mut p = (-lambda).exp();
        let mut k = 0u64;
        while u > p {
            u -= p;
            k += 1;
            p *= lambda / k as f64;
            if p == 0.0 {
                break;
            }
        }
        return k;
    }
    Poisson::new(lambda).expect("finite positive mean").sample(rng) as u64
}

/// Binomial(n, p) with q = 1 - p supplied by the caller, so neither side is
/// formed by cancellation when p is within rounding of 1.
fn binomial_pq<R: Rng>(rng: &mut R, n: u64, p: f64, q: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if q <= 0.0 {
        return n;
    }
    if p > q {
        return n - binomial_pq(rng, n, q, p);
    }
    if (n as f64) * p < 10.0 {
        let r = p / q;
        let mut pk = (n as f64 * (-p).ln_1p()).exp();
        let mut u: f64 = rng.random();
        let mut k = 0u64;
        while u > pk && k < n {
            u -= pk;
            pk *= r * (n - k) as f64 / (k + 1) as f64;
            k += 1;
        }
        return k;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// X ~ Poisson(lambda) conditioned on X >= m.
fn truncated_poisson<R: Rng>(rng: &mut R, lambda: f64, m: u64) -> u64 {
    let mass = poisson_sf(m as u32, lambda);
    if mass > 0.25 {
        loop {
            let x = poisson(rng, lambda);
            if x >= m {
                return x;
            }
        }
    }
    let mut u = rng.random::<f64>() * mass;
    let mut k = m;
    let mut p = poisson_pmf(m as u32, lambda);
    while u > p && p > 0.0 {
        u -= p;
        k += 1;
        p *= lambda / k as f64;
    }
    k
}

// Replicate state

/// Count marker for a promoted box that was already past the census cap;
/// its balls stay in the absorbed aggregate.
const ABSORBED: u64 = u64::MAX;

struct Overshoot;

struct State<'a> {
    model: &'a WeightModel,
    layout: &'a Layout,
    cap: usize,
    track_balls: bool,
    singles: Vec<u64>,
    /// Per block, census[s] for s = 0..=cap; state cap means ">= cap".
    census: Vec<Vec<u64>>,
    undist: Vec<u64>,
    dist_map: HashMap<u128, usize>,
    dist_count: Vec<u64>,
    dist_of_block: Vec<Vec<usize>>,
    stream: u64,
    hist: Vec<u64>,
    balls: u64,
    /// Balls held by census boxes past the cap.
    absorbed_balls: u64,
}

impl<'a> State<'a> {
    fn new(model: &'a WeightModel, layout: &'a Layout, j_max: u32, track_balls: bool) -> Self {
        let cap = j_max as usize + 1;
        let census = layout
            .blocks
            .iter()
            .map(|b| {
                let mut c = vec![0u64; cap + 1];
                c[0] = b.len as u64;
                c
            })
            .collect();
        State {
            model,
            layout,
            cap,
            track_balls,
            singles: vec![0; layout.singles.len()],
            census,
            undist: layout.blocks.iter().map(|b| b.len as u64).collect(),
            dist_map: HashMap::new(),
            dist_count: Vec::new(),
            dist_of_block: vec![Vec::new(); layout.blocks.len()],
            stream: 0,
            hist: vec![0; cap + 1],
            balls: 0,
            absorbed_balls: 0,
        }
    }

    #[inline]
    fn level(&self, c: u64) -> usize {
        c.min(self.cap as u64) as usize
    }

    #[inline]
    fn shift(&mut self, from: u64, to: u64) {
        let (a, b) = (self.level(from), self.level(to));
        if a != b {
            if a > 0 {
                self.hist[a] -= 1;
            }
            self.hist[b] += 1;
        }
    }

    fn hit_single(&mut self, k: usize, h: u64) {
        let c = self.singles[k];
        self.singles[k] = c + h;
        self.shift(c, c + h);
        self.balls += h;
    }

    fn hit_dist(&mut self, slot: usize, h: u64) {
        let c = self.dist_count[slot];
        if c == ABSORBED {
            self.absorbed_balls += h;
        } else {
            self.dist_count[slot] = c + h;
            self.shift(c, c + h);
        }
        self.balls += h;
    }

    fn hit_stream(&mut self, h: u64) {
        self.stream += h;
        self.hist[1] += h;
        self.balls += h;
    }

    /// Box index in block b drawn proportionally to p_k - p_min.
    fn residual_index<R: Rng>(&self, rng: &mut R, b: usize) -> u128 {
        let blk = &self.layout.blocks[b];
        let span = blk.p_max - blk.p_min;
        loop {
            let k = blk.start + rng.random_range(0..blk.len);
            let r = self.model.prob_at(k as f64) - blk.p_min;
            if rng.random::<f64>() * span < r {
                return k;
            }
        }
    }

    /// Slot of box `idx` in block b, promoting it from the census if needed.
    fn promote<R: Rng>(&mut self, rng: &mut R, b: usize, idx: u128) -> usize {
        if let Some(&s) = self.dist_map.get(&idx) {
            return s;
        }
        let s = self.draw_census_state(rng, b);
        let slot = self.dist_count.len();
        self.dist_count.push(if s == self.cap { ABSORBED } else { s as u64 });
        self.dist_map.insert(idx, slot);
        self.dist_of_block[b].push(slot);
        slot
    }

    /// Remove one uniformly chosen undistinguished box from block b's census.
    fn draw_census_state<R: Rng>(&mut self, rng: &mut R, b: usize) -> usize {
        let mut u = rng.random_range(0..self.undist[b]);
        let census = &mut self.census[b];
        let mut s = 0;
        while u >= census[s] {
            u -= census[s];
            s += 1;
        }
        census[s] -= 1;
        self.undist[b] -= 1;
        s
    }

    fn residual_hit<R: Rng>(&mut self, rng: &mut R, b: usize) {
        let idx = self.residual_index(rng, b);
        let slot = self.promote(rng, b, idx);
        self.hit_dist(slot, 1);
    }

    /// One ball into block b, each box k with weight p_k.
    fn ball_into_block<R: Rng>(&mut self, rng: &mut R, b: usize) {
        let blk = &self.layout.blocks[b];
        if rng.random::<f64>() * blk.mass >= blk.len as f64 * blk.p_min {
            self.residual_hit(rng, b);
            return;
        }
        let slot = rng.random_range(0..blk.len);
        let d = self.dist_of_block[b].len() as u128;
        let slot = if slot < d {
            self.dist_of_block[b][slot as usize]
        } else {
            // a uniform undistinguished box
            let idx = loop {
                let k = blk.start + rng.random_range(0..blk.len);
                if !self.dist_map.contains_key(&k) {
                    break k;
                }
            };
            self.promote(rng, b, idx)
        };
        self.hit_dist(slot, 1);
    }

    fn one_ball<R: Rng>(&mut self, rng: &mut R, alias: &WeightedAliasIndex<f64>) {
        let cat = alias.sample(rng);
        let ns = self.layout.singles.len();
        if cat < ns {
            self.hit_single(cat, 1);
        } else if cat < ns + self.layout.blocks.len() {
            self.ball_into_block(rng, cat - ns);
        } else {
            self.hit_stream(1);
        }
    }

    /// Poissonized increment over a time step of length dt.
    fn poisson_step<R: Rng>(&mut self, rng: &mut R, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        let layout = self.layout;
        for (k, &p) in layout.singles.iter().enumerate() {
            let h = poisson(rng, p * dt);
            if h > 0 {
                self.hit_single(k, h);
            }
        }
        for (b, blk) in layout.blocks.iter().enumerate() {
            let expected = blk.mass * dt;
            if expected < SPARSE_HITS {
                for _ in 0..poisson(rng, expected) {
                    self.ball_into_block(rng, b);
                }
            } else {
                self.dense_block_step(rng, b, blk.p_min * dt, blk.resid * dt);
            }
        }
        let h = poisson(rng, layout.tail * dt);
        self.hit_stream(h);
    }

    fn dense_block_step<R: Rng>(&mut self, rng: &mut R, b: usize, mu: f64, resid: f64) {
        let cap = self.cap;
        for _ in 0..poisson(rng, resid) {
            self.residual_hit(rng, b);
        }
        let old = std::mem::take(&mut self.census[b]);
        let mut new = vec![0u64; cap + 1];
        new[cap] = old[cap];
        if self.track_balls && old[cap] > 0 {
            let h = poisson(rng, old[cap] as f64 * mu);
            self.absorbed_balls += h;
            self.balls += h;
        }
        // pmf[d] and sf[d] = P(X >= d), the latter summed upward from the tail
        let mut pmf = [0.0f64; 66];
        let mut sf = [0.0f64; 66];
        pmf[0] = (-mu).exp();
        for d in 1..cap {
            pmf[d] = pmf[d - 1] * mu / d as f64;
        }
        sf[cap] = poisson_sf(cap as u32, mu);
        for d in (0..cap).rev() {
            sf[d] = sf[d + 1] + pmf[d];
        }
        let mut probs = [0.0f64; 66];
        let mut counts = [0u64; 66];
        for s in 0..cap {
            if old[s] == 0 {
                continue;
            }
            let room = cap - s;
            probs[..room].copy_from_slice(&pmf[..room]);
            probs[room] = sf[room];
            multinomial(rng, old[s], &probs[..=room], &mut counts[..=room]);
            for d in 0..=room {
                let c = counts[d];
                if c == 0 {
                    continue;
                }
                let to = s + d;
                new[to] += c;
                if s > 0 {
                    self.hist[s] -= c;
                }
                if to > 0 {
                    self.hist[to] += c;
                }
                if !self.track_balls {
                    continue;
                }
                if d < room {
                    self.balls += d as u64 * c;
                } else {
                    let x = absorbing_balls(rng, c, mu, room as u64);
                    self.balls += x;
                    self.absorbed_balls += s as u64 * c + x;
                }
            }
        }
        self.census[b] = new;
        // common-rate increments of promoted boxes
        let slots = std::mem::take(&mut self.dist_of_block[b]);
        if mu < 1.0 {
            for _ in 0..poisson(rng, mu * slots.len() as f64) {
                let slot = slots[rng.random_range(0..slots.len())];
                self.hit_dist(slot, 1);
            }
        } else {
            for &slot in &slots {
                let h = poisson(rng, mu);
                if h > 0 {
                    self.hit_dist(slot, h);
                }
            }
        }
        self.dist_of_block[b] = slots;
    }

    /// Deterministic increment of m balls. Poissonized passes with mean
    /// below the remaining count, then single balls: given a pass total
    /// X <= rem its allocation is multinomial(X), so the sum is
    /// multinomial(m) whatever X is. Err on overshoot.
    fn binomial_step<R: Rng>(&mut self, rng: &mut R, m: u64, alias: &WeightedAliasIndex<f64>) -> Result<(), Overshoot> {
        let mut rem = m;
        while rem > TOP_UP {
            let r = rem as f64;
            let lambda = r - 8.0 * r.sqrt() - 16.0;
            let before = self.balls;
            self.poisson_step(rng, lambda);
            let x = self.balls - before;
            if x > rem {
                return Err(Overshoot);
            }
            rem -= x;
        }
        for _ in 0..rem {
            self.one_ball(rng, alias);
        }
        Ok(())
    }

    fn snapshot(&self, grid_value: f64) -> PathPoint {
        let cap = self.cap;
        let mut k = vec![0u64; cap];
        let mut acc = 0;
        for s in (1..=cap).rev() {
            acc += self.hist[s];
            k[s - 1] = acc;
        }
        let capped_balls = self.track_balls.then(|| {
            let big = |c: &&u64| **c != ABSORBED && **c >= cap as u64;
            self.absorbed_balls
                + self.singles.iter().filter(big).sum::<u64>()
                + self.dist_count.iter().filter(big).sum::<u64>()
        });
        PathPoint {
            grid_value,
            k,
            k_star: self.hist[1..cap].to_vec(),
            balls: self.track_balls.then_some(self.balls),
            overflow_count: self.stream,
            capped_balls,
        }
    }
}

/// Total balls in c boxes, each Poisson(mu) conditioned on >= room.
/// Level by level: how many reach room + 1, then room + 2, and so on,
/// unless the boxes are few enough to draw one by one.
fn absorbing_balls<R: Rng>(rng: &mut R, c: u64, mu: f64, room: u64) -> u64 {
    let levels = mu + 10.0 * mu.sqrt() + 10.0;
    if (c as f64) < levels {
        return (0..c).map(|_| truncated_poisson(rng, mu, room)).sum();
    }
    let mut total = c * room;
    let mut alive = c;
    let mut e = room as u32;
    let mut sf = poisson_sf(e, mu);
    while alive > 0 && sf > 0.0 {
        let next = poisson_sf(e + 1, mu);
        alive = binomial_pq(rng, alive, next / sf, poisson_pmf(e, mu) / sf);
        total += alive;
        e += 1;
        sf = next;
    }
    total
}

/// Sequential-binomial multinomial draw; `probs` need not be normalized.
fn multinomial<R: Rng>(rng: &mut R, n: u64, probs: &[f64], out: &mut [u64]) {
    // suffix sums of positive terms: no remaining mass is found by subtraction
    let k = probs.len();
    let mut suf = [0.0f64; 67];
    for i in (0..k).rev() {
        suf[i] = suf[i + 1] + probs[i];
    }
    let mut rem = n;
    for i in 0..k {
        if i + 1 == k {
            out[i] = rem;
            break;
        }
        let x = if rem == 0 || suf[i] <= 0.0 { 0 } else { binomial_pq(rng, rem, probs[i] / suf[i], suf[i + 1] / suf[i]) };
        out[i] = x;
        rem -= x;
    }
}

fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Poissonized occupancy paths at the times in `cfg.grid`.
pub fn simulate_poisson_path(model: &WeightModel, cfg: &SimConfig) -> Result<Vec<OccupancyPath>, SimError> {
    cfg.validate(false)?;
    let layout = Layout::new(model, *cfg.grid.last().expect("validated grid"), cfg.spread)?;
    Ok(poisson_paths(model, &layout, cfg))
}

pub fn poisson_paths(model: &WeightModel, layout: &Layout, cfg: &SimConfig) -> Vec<OccupancyPath> {
    (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(cfg.seed, r as u64);
            let mut state = State::new(model, layout, cfg.j_max, cfg.track_balls);
            let mut prev = 0.0;
            let points = cfg
                .grid
                .iter()
                .map(|&t| {
                    state.poisson_step(&mut rng, t - prev);
                    prev = t;
                    state.snapshot(t)
                })
                .collect();
            OccupancyPath { replicate: r, points }
        })
        .collect()
}

/// Deterministic-scheme occupancy paths at the ball counts in `cfg.grid`.
pub fn simulate_binomial_path(model: &WeightModel, cfg: &SimConfig) -> Result<Vec<OccupancyPath>, SimError> {
    cfg.validate(true)?;
    let layout = Layout::new(model, *cfg.grid.last().expect("validated grid"), cfg.spread)?;
    Ok(binomial_paths(model, &layout, cfg))
}

pub fn binomial_paths(model: &WeightModel, layout: &Layout, cfg: &SimConfig) -> Vec<OccupancyPath> {
    let alias = WeightedAliasIndex::new(layout.category_masses()).expect("positive category masses");
    (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            // an overshoot has probability far below 1e-12 per step and
            // restarting leaves the law unchanged (see binomial_step)
            for attempt in 0u64.. {
                let mut rng = replicate_rng(cfg.seed, r as u64 | attempt << 32);
                let mut state = State::new(model, layout, cfg.j_max, true);
                let mut prev = 0u64;
                let mut points = Vec::with_capacity(cfg.grid.len());
                let mut ok = true;
                for &n in &cfg.grid {
                    let n = n as u64;
                    if state.binomial_step(&mut rng, n - prev, &alias).is_err() {
                        ok = false;
                        break;
                    }
                    prev = n;
                    points.push(state.snapshot(n as f64));
                }
                if ok {
                    return OccupancyPath { replicate: r, points };
                }
            }
            unreachable!()
        })
        .collect()
}

/// Ball-by-ball sampler sharing one stream between both schemes.
struct BallStream<'a> {
    model: &'a WeightModel,
    layout: &'a Layout,
    alias: WeightedAliasIndex<f64>,
    fresh: u128,
}

impl<'a> BallStream<'a> {
    fn new(model: &'a WeightModel, layout: &'a Layout) -> Self {
        let alias = WeightedAliasIndex::new(layout.category_masses()).expect("positive category masses");
        BallStream { model, layout, alias, fresh: layout.horizon + 1 }
    }

    fn next_box<R: Rng>(&mut self, rng: &mut R) -> u128 {
        let cat = self.alias.sample(rng);
        let ns = self.layout.singles.len();
        if cat < ns {
            return cat as u128 + 1;
        }
        if cat == ns + self.layout.blocks.len() {
            self.fresh += 1;
            return self.fresh - 1;
        }
        let blk = &self.layout.blocks[cat - ns];
        if rng.random::<f64>() * blk.mass < blk.len as f64 * blk.p_min {
            return blk.start + rng.random_range(0..blk.len);
        }
        let span = blk.p_max - blk.p_min;
        loop {
            let k = blk.start + rng.random_range(0..blk.len);
            if rng.random::<f64>() * span < self.model.prob_at(k as f64) - blk.p_min {
                return k;
            }
        }
    }
}

struct Tally {
    cap: usize,
    counts: HashMap<u128, u64>,
    hist: Vec<u64>,
    balls: u64,
    capped_balls: u64,
    fresh: u64,
}

impl Tally {
    fn new(j_max: u32) -> Self {
        let cap = j_max as usize + 1;
        Tally { cap, counts: HashMap::new(), hist: vec![0; cap + 1], balls: 0, capped_balls: 0, fresh: 0 }
    }

    fn add(&mut self, idx: u128) {
        let c = self.counts.entry(idx).or_insert(0);
        *c += 1;
        let c = *c;
        let cap = self.cap as u64;
        if c <= cap {
            if c > 1 {
                self.hist[c as usize - 1] -= 1;
            }
            self.hist[c as usize] += 1;
        }
        if c == cap {
            self.capped_balls += c;
        } else if c > cap {
            self.capped_balls += 1;
        }
        self.balls += 1;
    }

    fn snapshot(&self, grid_value: f64) -> PathPoint {
        let cap = self.cap;
        let mut k = vec![0u64; cap];
        let mut acc = 0;
        for s in (1..=cap).rev() {
            acc += self.hist[s];
            k[s - 1] = acc;
        }
        PathPoint {
            grid_value,
            k,
            k_star: self.hist[1..cap].to_vec(),
            balls: Some(self.balls),
            overflow_count: self.fresh,
            capped_balls: Some(self.capped_balls),
        }
    }
}

/// Coupled schemes: i.i.d. box indices X_1, X_2, ... arriving at the jump
/// times of a unit-rate Poisson process. Deterministic counts use the first
/// n_i balls, Poissonized counts the balls arrived by time n_i.
pub fn simulate_coupled(model: &WeightModel, cfg: &SimConfig) -> Result<Vec<CoupledPath>, SimError> {
    cfg.validate(true)?;
    let n_max = *cfg.grid.last().expect("validated grid");
    // pi(n_max) exceeds n_max + 10 sqrt(n_max) with negligible probability
    let t_eff = n_max + 10.0 * n_max.sqrt() + 10.0;
    let layout = Layout::new(model, t_eff, cfg.spread)?;
    Ok((0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(cfg.seed, r as u64);
            let mut balls = BallStream::new(model, &layout);
            let mut tally = Tally::new(cfg.j_max);
            let mut det = Vec::with_capacity(cfg.grid.len());
            let mut poi = Vec::with_capacity(cfg.grid.len());
            let mut clock = 0.0;
            while det.len() < cfg.grid.len() || poi.len() < cfg.grid.len() {
                while det.len() < cfg.grid.len() && tally.balls == cfg.grid[det.len()] as u64 {
                    det.push(tally.snapshot(cfg.grid[det.len()]));
                }
                clock += rng.sample::<f64, _>(rand_distr::Exp1);
                while poi.len() < cfg.grid.len() && clock > cfg.grid[poi.len()] {
                    poi.push(tally.snapshot(cfg.grid[poi.len()]));
                }
                if det.len() == cfg.grid.len() && poi.len() == cfg.grid.len() {
                    break;
                }
                let idx = balls.next_box(&mut rng);
                if idx > layout.horizon {
                    tally.fresh += 1;
                }
                tally.add(idx);
            }
            CoupledPath { replicate: r, deterministic: det, poissonized: poi }
        })
        .collect())
}
