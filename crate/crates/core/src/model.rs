//! Domain types shared by the analytic, optimizer, design and simulation modules.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Free parameters of the practical screening model: prevalence `p` and
/// test sensitivity `u`. Specificity is fixed at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PracticalParams {
    p: f64,
    u: f64,
}

impl PracticalParams {
    pub fn new(p: f64, u: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidPrevalence(p));
        }
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::InvalidSensitivity(u));
        }
        Ok(Self { p, u })
    }

    /// Prevalence, in (0,1).
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Sensitivity, in (0,1].
    pub fn u(&self) -> f64 {
        self.u
    }

    /// Probability an individual is not infected, `q = 1 - p`.
    pub fn q(&self) -> f64 {
        1.0 - self.p
    }
}

/// Construction family for a first-stage pooling design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignKind {
    /// One individual per test, no pooling, no second stage.
    Individual,
    /// Uniformly random subject to exact degrees r and s.
    RandomRegular,
    /// Individuals on s x s grids; pools are rows and columns (r = 2).
    Grid,
    /// Individuals on r-dimensional a x ... x a cubes; pools are
    /// axis-aligned (r-1)-dimensional slices, so s = a^(r-1).
    Hypercube { side: u32 },
}

/// First-stage design parameters: each sampled individual appears in `r`
/// pools and each pool samples `s` individuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignParams {
    r: u32,
    s: u32,
    kind: DesignKind,
}

impl DesignParams {
    pub fn individual() -> Self {
        Self {
            r: 1,
            s: 1,
            kind: DesignKind::Individual,
        }
    }

    pub fn random_regular(r: u32, s: u32) -> Result<Self> {
        if r < 1 {
            return Err(Error::InvalidDesign("r must be at least 1".into()));
        }
        if s < 2 {
            return Err(Error::InvalidDesign(format!(
                "random regular design needs s > 1, got s = {s}"
            )));
        }
        Ok(Self {
            r,
            s,
            kind: DesignKind::RandomRegular,
        })
    }

    pub fn grid(s: u32) -> Result<Self> {
        if s < 2 {
            return Err(Error::InvalidDesign(format!(
                "grid design needs s > 1, got s = {s}"
            )));
        }
        Ok(Self {
            r: 2,
            s,
            kind: DesignKind::Grid,
        })
    }

    /// Hypercube with `r` dimensions and side length `a`; pool size is
    /// `s = a^(r-1)`.
    pub fn hypercube(r: u32, a: u32) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidDesign(format!(
                "hypercube design needs r >= 2, got r = {r}"
            )));
        }
        if a < 2 {
            return Err(Error::InvalidDesign(format!(
                "hypercube design needs side length a > 1, got a = {a}"
            )));
        }
        let s = a
            .checked_pow(r - 1)
            .ok_or_else(|| Error::InvalidDesign(format!("a^(r-1) overflows for a = {a}, r = {r}")))?;
        Ok(Self {
            r,
            s,
            kind: DesignKind::Hypercube { side: a },
        })
    }

    /// Stage-1 tests per sampled individual.
    pub fn r(&self) -> u32 {
        self.r
    }

    /// Individuals per stage-1 pool.
    pub fn s(&self) -> u32 {
        self.s
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    /// Side length for hypercube designs, `None` otherwise.
    pub fn side(&self) -> Option<u32> {
        match self.kind {
            DesignKind::Hypercube { side } => Some(side),
            _ => None,
        }
    }
}

/// Explicit individual <-> pool incidence for one stage-1 design instance.
///
/// Every individual belongs to exactly `r` pools and every pool contains
/// exactly `s` distinct individuals, so `t * s = m * r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolingDesign {
    m: usize,
    r: u32,
    s: u32,
    /// Members of each pool, `t` pools total.
    pools: Vec<Vec<u32>>,
    /// Pools containing each individual, `m` entries of length `r`.
    memberships: Vec<Vec<u32>>,
}

impl PoolingDesign {
    /// Build from explicit pool membership lists, checking exact
    /// (r, s)-regularity and absence of duplicates within a pool.
    pub fn from_pools(m: usize, r: u32, s: u32, pools: Vec<Vec<u32>>) -> Result<Self> {
        let t = pools.len();
        if t * s as usize != m * r as usize {
            return Err(Error::InvalidDesign(format!(
                "pool count {t} violates t*s = m*r for m = {m}, r = {r}, s = {s}"
            )));
        }
        let mut memberships = vec![Vec::with_capacity(r as usize); m];
        for (pool_id, members) in pools.iter().enumerate() {
            if members.len() != s as usize {
                return Err(Error::InvalidDesign(format!(
                    "pool {pool_id} has {} members, expected s = {s}",
                    members.len()
                )));
            }
            for &i in members {
                let idx = i as usize;
                if idx >= m {
                    return Err(Error::InvalidDesign(format!(
                        "pool {pool_id} references individual {i} outside 0..{m}"
                    )));
                }
                if memberships[idx].contains(&(pool_id as u32)) {
                    return Err(Error::InvalidDesign(format!(
                        "individual {i} appears twice in pool {pool_id}"
                    )));
                }
                memberships[idx].push(pool_id as u32);
            }
        }
        for (i, pools_of) in memberships.iter().enumerate() {
            if pools_of.len() != r as usize {
                return Err(Error::InvalidDesign(format!(
                    "individual {i} is in {} pools, expected r = {r}",
                    pools_of.len()
                )));
            }
        }
        Ok(Self {
            m,
            r,
            s,
            pools,
            memberships,
        })
    }

    /// Number of sampled individuals.
    pub fn num_individuals(&self) -> usize {
        self.m
    }

    /// Number of stage-1 pools.
    pub fn num_pools(&self) -> usize {
        self.pools.len()
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    pub fn pool_members(&self, pool: usize) -> &[u32] {
        &self.pools[pool]
    }

    pub fn pools_of(&self, individual: usize) -> &[u32] {
        &self.memberships[individual]
    }

    pub fn pools(&self) -> &[Vec<u32>] {
        &self.pools
    }

    /// Pools as sorted member sets, themselves sorted; a canonical form
    /// invariant under pool relabeling.
    pub fn canonical_pools(&self) -> Vec<Vec<u32>> {
        let mut pools: Vec<Vec<u32>> = self
            .pools
            .iter()
            .map(|p| {
                let mut p = p.clone();
                p.sort_unstable();
                p
            })
            .collect();
        pools.sort();
        pools
    }
}

/// Parameters of the theoretical sparse regime: population `n` and the
/// expected number of infected individuals `k = p*n`, treated as a real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalParams {
    n: u64,
    k: f64,
}

impl TheoreticalParams {
    pub fn from_counts(n: u64, k: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidTheoretical(format!(
                "population must be at least 2, got {n}"
            )));
        }
        if !(k >= 1.0 && k < n as f64) {
            return Err(Error::InvalidTheoretical(format!(
                "expected infected count must satisfy 1 <= k < n, got k = {k}, n = {n}"
            )));
        }
        Ok(Self { n, k })
    }

    /// Convenience constructor from the sparsity exponent: `k = n^alpha`.
    pub fn from_alpha(n: u64, alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidTheoretical(format!(
                "sparsity exponent must lie in [0,1), got {alpha}"
            )));
        }
        Self::from_counts(n, (n as f64).powf(alpha))
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Sparsity exponent `alpha = ln k / ln n`.
    pub fn alpha(&self) -> f64 {
        self.k.ln() / (self.n as f64).ln()
    }
}

/// Aggregated outcome of a seeded Monte Carlo run.
///
/// The ETI estimate is the ratio of totals across all replicates, not a
/// mean of per-replicate ratios: a replicate may find zero infected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub replicates: usize,
    /// Individuals sampled per replicate, after divisibility adjustment.
    pub individuals_per_replicate: usize,
    pub total_tests: u64,
    pub total_found: u64,
    pub total_infected: u64,
    pub false_negatives: u64,
    /// `total_tests / total_found`; `None` when nothing was found.
    pub eti_estimate: Option<f64>,
    /// Delta-method standard error over per-replicate (tests, found) pairs.
    pub eti_stderr: Option<f64>,
    pub rng_algorithm: String,
    pub seed: u64,
    /// Per-block decode tallies; present only for block-code runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_tallies: Option<BlockTallies>,
}

/// Decode outcome counts across all simulated blocks of a block-code run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTallies {
    pub blocks: u64,
    pub clean: u64,
    pub found: u64,
    pub too_many: u64,
    /// Blocks whose (non-dummy) individuals contained exactly one infected.
    pub exactly_one_infected: u64,
    /// Empirical probability a block contains exactly one infected.
    pub p_exactly_one: f64,
    /// Fraction of all infected individuals that were found.
    pub fraction_found: f64,
}
