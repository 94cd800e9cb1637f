//! Binary counting mechanism for continual release of prefix sums.
//!
//! Items are appended one per episode (1-based). Every complete dyadic
//! interval `[i, j]` (length `L = 2^l`, `j` a multiple of `L`) becomes a node
//! holding the exact partial sum of items `i..=j` plus Gaussian noise drawn
//! once when the node is created. The released prefix over `[1, q]` is the
//! sum of the noisy nodes in the binary decomposition of `q`, so it touches at
//! most `⌈log₂ K⌉ + 1` nodes, and each item belongs to at most that many
//! nodes.
//!
//! Only left children (`j / L` odd) ever take part in a prefix cover; a node
//! is kept while some prefix `q` in `[count, K]` can still use it.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// `⌈log₂ K⌉ + 1`: bound on both node memberships per item and cover size for
/// any prefix of a stream of length `K`.
pub fn tree_depth(episodes: usize) -> usize {
    let k = episodes.max(1);
    let ceil_log2 = if k == 1 {
        0
    } else {
        (usize::BITS - (k - 1).leading_zeros()) as usize
    };
    ceil_log2 + 1
}

/// Shape of the streamed elements. Elements are stored flat; matrices are
/// `d × d` row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
    SymMatrix(usize),
}

impl Shape {
    pub fn len(self) -> usize {
        match self {
            Shape::Scalar => 1,
            Shape::Vector(d) => d,
            Shape::SymMatrix(d) => d * d,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    /// Fresh noise element: i.i.d. `N(0, σ²)` per free entry, mirrored across
    /// the diagonal for matrices. Draws nothing when `σ = 0`.
    pub fn sample_noise<R: Rng + ?Sized>(self, sigma: f64, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        if sigma == 0.0 {
            return out;
        }
        let mut draw = || sigma * rng.sample::<f64, _>(StandardNormal);
        match self {
            Shape::Scalar | Shape::Vector(_) => out.iter_mut().for_each(|x| *x = draw()),
            Shape::SymMatrix(d) => {
                for p in 0..d {
                    for q in p..d {
                        let z = draw();
                        out[p * d + q] = z;
                        out[q * d + p] = z;
                    }
                }
            }
        }
        out
    }
}

/// Inclusive 1-based episode range `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

#[allow(clippy::len_without_is_empty)]
impl Interval {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn contains(&self, episode: usize) -> bool {
        (self.start..=self.end).contains(&episode)
    }

    pub fn is_dyadic(&self) -> bool {
        let l = self.len();
        l.is_power_of_two() && self.start % l == 1 % l
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Node {
    exact: Vec<f64>,
    noise: Vec<f64>,
}

/// Binary interval tree of noisy partial sums over a stream of known maximum
/// length.
#[derive(Clone, Debug)]
pub struct NoisyPSumTree {
    shape: Shape,
    sigma: f64,
    capacity: usize,
    count: usize,
    /// Keyed by `(level, end)`.
    nodes: BTreeMap<(u32, usize), Node>,
    /// Every interval ever materialized, in creation order.
    created: Vec<Interval>,
}

impl NoisyPSumTree {
    /// Tree for a stream of at most `capacity` items with per-entry noise
    /// standard deviation `sigma`.
    pub fn new(shape: Shape, sigma: f64, capacity: usize) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::domain("noise scale must be finite and non-negative"));
        }
        if capacity == 0 {
            return Err(Error::domain("stream capacity must be positive"));
        }
        Ok(NoisyPSumTree {
            shape,
            sigma,
            capacity,
            count: 0,
            nodes: BTreeMap::new(),
            created: Vec::new(),
        })
    }

    /// Noise-free tree; its prefixes are exact dyadic sums.
    pub fn exact(shape: Shape, capacity: usize) -> Result<Self> {
        Self::new(shape, 0.0, capacity)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of items appended so far.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Appends the next item. New nodes draw their noise from `rng` in
    /// creation order (leaf first, then completed ancestors bottom-up).
    pub fn append<R: Rng + ?Sized>(&mut self, item: &[f64], rng: &mut R) -> Result<()> {
        let (shape, sigma) = (self.shape, self.sigma);
        self.insert(item, |_| shape.sample_noise(sigma, &mut *rng))
    }

    /// Appends to a noise-free tree without needing a generator.
    pub fn append_exact(&mut self, item: &[f64]) -> Result<()> {
        if self.sigma != 0.0 {
            return Err(Error::protocol("append_exact on a noisy tree"));
        }
        let len = self.shape.len();
        self.insert(item, |_| vec![0.0; len])
    }

    fn insert(&mut self, item: &[f64], mut noise: impl FnMut(Interval) -> Vec<f64>) -> Result<()> {
        if item.len() != self.shape.len() {
            return Err(Error::domain(format!(
                "item has {} entries, tree shape needs {}",
                item.len(),
                self.shape.len()
            )));
        }
        if self.count == self.capacity {
            return Err(Error::protocol(format!(
                "stream capacity {} exhausted",
                self.capacity
            )));
        }
        let k = self.count + 1;
        let leaf = Interval { start: k, end: k };
        self.nodes.insert(
            (0, k),
            Node {
                exact: item.to_vec(),
                noise: noise(leaf),
            },
        );
        self.created.push(leaf);

        let mut level = 1u32;
        while k.is_multiple_of(1usize << level) {
            let half = 1usize << (level - 1);
            let left = &self.nodes[&(level - 1, k - half)];
            let right = &self.nodes[&(level - 1, k)];
            let exact = left
                .exact
                .iter()
                .zip(&right.exact)
                .map(|(a, b)| a + b)
                .collect();
            let iv = Interval {
                start: k + 1 - 2 * half,
                end: k,
            };
            let node = Node {
                exact,
                noise: noise(iv),
            };
            self.nodes.insert((level, k), node);
            self.created.push(iv);
            level += 1;
        }
        self.count = k;
        self.prune();
        Ok(())
    }

    /// Drops nodes that no prefix in `[count, capacity]` can use.
    fn prune(&mut self) {
        let count = self.count;
        self.nodes.retain(|&(level, end), _| {
            let len = 1usize << level;
            (end / len) % 2 == 1 && end + len > count
        });
    }

    /// Minimal dyadic cover of `[1, q]`, largest interval first.
    pub fn cover(q: usize) -> Vec<Interval> {
        let mut out = Vec::new();
        let mut start = 1;
        for level in (0..usize::BITS).rev() {
            let len = 1usize << level;
            if q & len != 0 {
                out.push(Interval {
                    start,
                    end: start + len - 1,
                });
                start += len;
            }
        }
        out
    }

    fn check_prefix(&self, k: usize) -> Result<usize> {
        if k == 0 || k - 1 > self.count {
            return Err(Error::protocol(format!(
                "prefix query k = {k} with {} items appended",
                self.count
            )));
        }
        Ok(k - 1)
    }

    fn cover_nodes(&self, k: usize) -> Result<Vec<&Node>> {
        let q = self.check_prefix(k)?;
        Self::cover(q)
            .into_iter()
            .map(|iv| {
                let level = iv.len().trailing_zeros();
                self.nodes.get(&(level, iv.end)).ok_or_else(|| {
                    Error::protocol(format!(
                        "node [{}, {}] needed for k = {k} was already discarded",
                        iv.start, iv.end
                    ))
                })
            })
            .collect()
    }

    /// Noisy sum over episodes `1..=k-1`: the sum of `(exact + noise)` over the
    /// cover of `[1, k-1]`. `k = 1` gives the zero element.
    pub fn private_prefix(&self, k: usize) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.shape.len()];
        for node in self.cover_nodes(k)? {
            for ((a, e), z) in acc.iter_mut().zip(&node.exact).zip(&node.noise) {
                *a += e + z;
            }
        }
        Ok(acc)
    }

    /// Noise-free sum over episodes `1..=k-1` through the same cover.
    pub fn exact_prefix(&self, k: usize) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.shape.len()];
        for node in self.cover_nodes(k)? {
            for (a, e) in acc.iter_mut().zip(&node.exact) {
                *a += e;
            }
        }
        Ok(acc)
    }

    /// Accumulated noise in `private_prefix(k)`: the sum of the cover's cached
    /// node noises.
    pub fn total_noise(&self, k: usize) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.shape.len()];
        for node in self.cover_nodes(k)? {
            for (a, z) in acc.iter_mut().zip(&node.noise) {
                *a += z;
            }
        }
        Ok(acc)
    }

    /// Number of noise terms in `private_prefix(k)`.
    pub fn cover_size(&self, k: usize) -> Result<usize> {
        Ok(Self::cover(self.check_prefix(k)?).len())
    }

    /// Every interval ever materialized, in creation order, including nodes
    /// since discarded.
    pub fn materialized(&self) -> &[Interval] {
        &self.created
    }

    /// Currently retained nodes as `(interval, exact, noise)`.
    pub fn nodes(&self) -> impl Iterator<Item = (Interval, &[f64], &[f64])> + '_ {
        self.nodes.iter().map(|(&(level, end), node)| {
            let len = 1usize << level;
            (
                Interval {
                    start: end + 1 - len,
                    end,
                },
                node.exact.as_slice(),
                node.noise.as_slice(),
            )
        })
    }
}
