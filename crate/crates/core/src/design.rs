//! Explicit stage-1 pooling constructions: random (r, s)-biregular,
//! grid, hypercube, and the binary block code used by the single-infected
//! scheme in the theoretical model.

use crate::error::{Error, Result};
use crate::model::PoolingDesign;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use std::io::Write;

const LOCAL_REPAIRS_BEFORE_RESHUFFLE: usize = 100;

/// Uniformly random design subject to exact degrees: each individual in
/// `r` pools, each pool sampling `s` distinct individuals.
///
/// Configuration model: `r` stub copies of every individual are shuffled
/// and cut into pools of size `s`; pools containing a duplicate are
/// repaired by swapping against a random other pool, with a full
/// reshuffle after 100 failed local repairs. Deterministic given `seed`.
pub fn random_regular_design(m: usize, r: u32, s: u32, seed: u64) -> Result<PoolingDesign> {
    if r < 1 || s < 1 {
        return Err(Error::Infeasible(format!(
            "degrees must be positive, got r = {r}, s = {s}"
        )));
    }
    let stubs = m * r as usize;
    if !stubs.is_multiple_of(s as usize) {
        return Err(Error::Infeasible(format!(
            "s = {s} does not divide m*r = {stubs} (m = {m}, r = {r})"
        )));
    }
    if m < s as usize {
        return Err(Error::Infeasible(format!(
            "pool size s = {s} exceeds individual count m = {m}"
        )));
    }
    let t = stubs / s as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut slots: Vec<u32> = (0..m as u32)
        .flat_map(|i| std::iter::repeat_n(i, r as usize))
        .collect();
    let mut seen = vec![0u32; m];
    let mut stamp = 0u32;
    loop {
        slots.shuffle(&mut rng);
        if repair_duplicates(&mut slots, t, s as usize, &mut rng, &mut seen, &mut stamp) {
            break;
        }
    }

    let pools: Vec<Vec<u32>> = slots.chunks(s as usize).map(|c| c.to_vec()).collect();
    PoolingDesign::from_pools(m, r, s, pools)
}

/// Swap stubs between pools until no pool contains the same individual
/// twice; a swap re-queues the pool it touched. Returns false if the
/// local-repair budget is exhausted.
fn repair_duplicates(
    slots: &mut [u32],
    t: usize,
    s: usize,
    rng: &mut ChaCha8Rng,
    seen: &mut [u32],
    stamp: &mut u32,
) -> bool {
    let mut repairs = 0;
    let mut queue: std::collections::VecDeque<usize> = (0..t).collect();
    while let Some(pool) = queue.pop_front() {
        while let Some(offset) = duplicate_position(&slots[pool * s..(pool + 1) * s], seen, stamp) {
            if repairs >= LOCAL_REPAIRS_BEFORE_RESHUFFLE {
                return false;
            }
            repairs += 1;
            let from = pool * s + offset;
            let to = rng.gen_range(0..slots.len());
            slots.swap(from, to);
            let other = to / s;
            if other != pool {
                queue.push_back(other);
            }
        }
    }
    true
}

/// Index of the first repeated individual in a pool, tracked with a
/// stamped marker array so each scan is linear.
fn duplicate_position(pool: &[u32], seen: &mut [u32], stamp: &mut u32) -> Option<usize> {
    *stamp = stamp.wrapping_add(1);
    for (i, &a) in pool.iter().enumerate() {
        if seen[a as usize] == *stamp {
            return Some(i);
        }
        seen[a as usize] = *stamp;
    }
    None
}

/// Grid design: individuals on `m / s^2` separate s x s grids, each grid
/// contributing `s` row pools and `s` column pools.
pub fn grid_design(m: usize, s: u32) -> Result<PoolingDesign> {
    if s < 2 {
        return Err(Error::Infeasible(format!(
            "grid design needs s > 1, got s = {s}"
        )));
    }
    let block = (s as usize) * (s as usize);
    if m == 0 || !m.is_multiple_of(block) {
        return Err(Error::Infeasible(format!(
            "grid design needs s^2 = {block} to divide m = {m}"
        )));
    }
    let s_us = s as usize;
    let mut pools = Vec::with_capacity(2 * s_us * (m / block));
    for b in 0..m / block {
        let base = (b * block) as u32;
        for row in 0..s_us {
            pools.push((0..s_us).map(|col| base + (row * s_us + col) as u32).collect());
        }
        for col in 0..s_us {
            pools.push((0..s_us).map(|row| base + (row * s_us + col) as u32).collect());
        }
    }
    PoolingDesign::from_pools(m, 2, s, pools)
}

/// Hypercube design: individuals on `m / a^r` separate r-dimensional
/// cubes of side `a`; each cube contributes `r*a` pools, one per
/// axis-aligned (r-1)-dimensional slice of `s = a^(r-1)` individuals.
pub fn hypercube_design(m: usize, r: u32, a: u32) -> Result<PoolingDesign> {
    if r < 2 {
        return Err(Error::Infeasible(format!(
            "hypercube design needs r >= 2, got r = {r}"
        )));
    }
    if a < 2 {
        return Err(Error::Infeasible(format!(
            "hypercube design needs side length a > 1, got a = {a}"
        )));
    }
    let block = (a as usize)
        .checked_pow(r)
        .ok_or_else(|| Error::Infeasible(format!("a^r overflows for a = {a}, r = {r}")))?;
    if m == 0 || !m.is_multiple_of(block) {
        return Err(Error::Infeasible(format!(
            "hypercube design needs a^r = {block} to divide m = {m}"
        )));
    }
    let s = (a as usize).pow(r - 1);
    let a_us = a as usize;
    let mut pools = Vec::with_capacity(r as usize * a_us * (m / block));
    for b in 0..m / block {
        let base = b * block;
        let mut stride = 1;
        for _dim in 0..r {
            for level in 0..a_us {
                let mut members = Vec::with_capacity(s);
                for idx in 0..block {
                    if (idx / stride) % a_us == level {
                        members.push((base + idx) as u32);
                    }
                }
                pools.push(members);
            }
            stride *= a_us;
        }
    }
    PoolingDesign::from_pools(m, r, s as u32, pools)
}

/// Outcome of decoding one block's test results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeResult {
    /// All tests negative: no infected individual in the block.
    Clean,
    /// Exactly one infected individual, at this in-block index.
    Found(usize),
    /// Two or more infected individuals; none can be confirmed.
    TooMany,
}

/// Constant-weight binary code for blocks of `2^l` individuals tested in
/// `2l` pools. Codeword `i` is the l-bit binary encoding of `i` followed
/// by its bitwise complement, so every codeword has weight exactly `l`
/// and the union of any two distinct codewords has weight above `l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaffronBlockCode {
    block_size: usize,
    half_len: u32,
}

impl SaffronBlockCode {
    /// `block_size` must be a power of two, at least 2; callers with
    /// other sizes pad with known-negative dummy individuals up to the
    /// next power of two.
    pub fn new(block_size: usize) -> Result<Self> {
        if block_size < 2 || !block_size.is_power_of_two() {
            return Err(Error::InvalidDesign(format!(
                "block size must be a power of two >= 2, got {block_size}; \
                 pad with known-negative dummies up to the next power of two"
            )));
        }
        Ok(Self {
            block_size,
            half_len: block_size.trailing_zeros(),
        })
    }

    /// Individuals per block, `2^l`.
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Half the codeword length, `l = log2(block_size)`.
    pub fn half_len(&self) -> u32 {
        self.half_len
    }

    /// Tests per block, `2l`.
    pub fn num_tests(&self) -> usize {
        2 * self.half_len as usize
    }

    /// Codeword of individual `i` as a bitmask over tests `0..2l`, with
    /// test `j` at bit `j`. Test 0 carries the most significant bit of
    /// `i` so that positive outcomes read off the index directly.
    pub fn codeword(&self, i: usize) -> u64 {
        debug_assert!(i < self.block_size);
        let l = self.half_len;
        let mut word = 0u64;
        for bit in 0..l {
            // msb of i -> test 0, lsb -> test l-1
            let set = (i >> (l - 1 - bit)) & 1 == 1;
            if set {
                word |= 1 << bit; // first half: the encoding itself
            } else {
                word |= 1 << (l + bit); // second half: the complement
            }
        }
        word
    }

    /// Codeword as an explicit test-membership vector of length `2l`.
    pub fn codeword_bits(&self, i: usize) -> Vec<bool> {
        let word = self.codeword(i);
        (0..self.num_tests()).map(|t| word >> t & 1 == 1).collect()
    }

    /// Decode one block's outcomes: all-negative means clean, a pattern
    /// matching a codeword identifies the single infected individual,
    /// and anything else means two or more infected with none confirmable.
    pub fn decode(&self, outcomes: &[bool]) -> Result<DecodeResult> {
        if outcomes.len() != self.num_tests() {
            return Err(Error::OutcomeLength {
                expected: self.num_tests(),
                got: outcomes.len(),
            });
        }
        let mut word = 0u64;
        for (t, &o) in outcomes.iter().enumerate() {
            if o {
                word |= 1 << t;
            }
        }
        self.decode_mask(word)
    }

    /// Decode outcomes packed as a bitmask (bit `t` = test `t` positive).
    pub fn decode_mask(&self, word: u64) -> Result<DecodeResult> {
        if word >> self.num_tests() != 0 {
            return Err(Error::OutcomeLength {
                expected: self.num_tests(),
                got: 64 - word.leading_zeros() as usize,
            });
        }
        if word == 0 {
            return Ok(DecodeResult::Clean);
        }
        let l = self.half_len;
        if word.count_ones() != l {
            return Ok(DecodeResult::TooMany);
        }
        // read the candidate index off the first l tests, msb first
        let mut index = 0usize;
        for bit in 0..l {
            index = index << 1 | (word >> bit & 1) as usize;
        }
        if self.codeword(index) == word {
            Ok(DecodeResult::Found(index))
        } else {
            Ok(DecodeResult::TooMany)
        }
    }
}

/// Write a design as CSV, one `pool,individual` row per membership,
/// pools ascending and individuals ascending within each pool.
pub fn write_design_csv<W: Write>(design: &PoolingDesign, mut out: W) -> Result<()> {
    writeln!(out, "pool,individual")?;
    for pool in 0..design.num_pools() {
        let mut members = design.pool_members(pool).to_vec();
        members.sort_unstable();
        for i in members {
            writeln!(out, "{pool},{i}")?;
        }
    }
    Ok(())
}

/// Write a block code as CSV of `individual,codeword` rows, codeword
/// rendered as a bit string over tests `0..2l`.
pub fn write_code_csv<W: Write>(code: &SaffronBlockCode, mut out: W) -> Result<()> {
    writeln!(out, "individual,codeword")?;
    for i in 0..code.block_size() {
        let bits: String = code
            .codeword_bits(i)
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect();
        writeln!(out, "{i},{bits}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_regular(d: &PoolingDesign, m: usize, r: u32, s: u32) {
        assert_eq!(d.num_individuals(), m);
        assert_eq!(d.num_pools() * s as usize, m * r as usize);
        for i in 0..m {
            assert_eq!(d.pools_of(i).len(), r as usize);
        }
        for pool in 0..d.num_pools() {
            let members = d.pool_members(pool);
            assert_eq!(members.len(), s as usize);
            let mut sorted = members.to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), s as usize, "duplicate in pool {pool}");
        }
    }

    #[test]
    fn random_regular_r1_is_a_partition() {
        let d = random_regular_design(6, 1, 3, 42).unwrap();
        check_regular(&d, 6, 1, 3);
        assert_eq!(d.num_pools(), 2);
        let mut all: Vec<u32> = d.pools().iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn random_regular_single_pool() {
        let d = random_regular_design(5, 1, 5, 1).unwrap();
        assert_eq!(d.num_pools(), 1);
        check_regular(&d, 5, 1, 5);
    }

    #[test]
    fn random_regular_degrees_exact() {
        let d = random_regular_design(12, 2, 4, 7).unwrap();
        assert_eq!(d.num_pools(), 6);
        check_regular(&d, 12, 2, 4);
    }

    #[test]
    fn random_regular_is_seed_deterministic() {
        let a = random_regular_design(60, 3, 5, 99).unwrap();
        let b = random_regular_design(60, 3, 5, 99).unwrap();
        assert_eq!(a, b);
        let c = random_regular_design(60, 3, 5, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_regular_reports_infeasibility() {
        let err = random_regular_design(7, 1, 3, 0).unwrap_err();
        assert!(err.to_string().contains("divide"));
        assert!(random_regular_design(4, 1, 5, 0).is_err());
    }

    #[test]
    fn grid_three_by_three() {
        let d = grid_design(9, 3).unwrap();
        assert_eq!(d.num_pools(), 6);
        check_regular(&d, 9, 2, 3);
        // cell (i, j) sits in row pool i and column pool 3 + j
        for i in 0..3u32 {
            for j in 0..3u32 {
                let cell = (i * 3 + j) as usize;
                assert_eq!(d.pools_of(cell), &[i, 3 + j]);
            }
        }
    }

    #[test]
    fn grid_two_blocks() {
        let d = grid_design(18, 3).unwrap();
        assert_eq!(d.num_pools(), 12);
        check_regular(&d, 18, 2, 3);
        // no pool spans both blocks
        for pool in 0..12 {
            let members = d.pool_members(pool);
            let block = members[0] / 9;
            assert!(members.iter().all(|&i| i / 9 == block));
        }
    }

    #[test]
    fn grid_rejects_degenerate_and_indivisible() {
        assert!(grid_design(1, 1).is_err());
        assert!(grid_design(10, 3).is_err());
    }

    #[test]
    fn hypercube_three_cube() {
        let d = hypercube_design(27, 3, 3).unwrap();
        assert_eq!(d.num_pools(), 9);
        check_regular(&d, 27, 3, 9);
    }

    #[test]
    fn hypercube_four_dimensional() {
        let d = hypercube_design(16, 4, 2).unwrap();
        assert_eq!(d.num_pools(), 8);
        check_regular(&d, 16, 4, 8);
    }

    #[test]
    fn hypercube_two_dims_equals_grid() {
        for &(m, s) in &[(9usize, 3u32), (16, 4), (50, 5)] {
            let h = hypercube_design(m, 2, s).unwrap();
            let g = grid_design(m, s).unwrap();
            assert_eq!(h.canonical_pools(), g.canonical_pools());
        }
    }

    #[test]
    fn hypercube_rejects_indivisible() {
        assert!(hypercube_design(26, 3, 3).is_err());
        assert!(hypercube_design(27, 1, 3).is_err());
    }

    #[test]
    fn codeword_examples() {
        let code = SaffronBlockCode::new(8).unwrap();
        // v_5 = 101, complement 010
        let bits = code.codeword_bits(5);
        assert_eq!(bits, vec![true, false, true, false, true, false]);
        for i in 0..8 {
            assert_eq!(code.codeword(i).count_ones(), 3);
        }
        // OR of codewords 3 (011 100) and 4 (100 011) has weight 6
        let merged = code.codeword(3) | code.codeword(4);
        assert_eq!(merged.count_ones(), 6);
    }

    #[test]
    fn one_bit_block() {
        let code = SaffronBlockCode::new(2).unwrap();
        assert_eq!(code.codeword_bits(0), vec![false, true]);
        assert_eq!(code.codeword_bits(1), vec![true, false]);
    }

    #[test]
    fn distinct_codeword_unions_exceed_half_weight() {
        for block in [2usize, 4, 8, 16, 32] {
            let code = SaffronBlockCode::new(block).unwrap();
            let l = code.half_len();
            for i in 0..block {
                for j in 0..i {
                    let merged = code.codeword(i) | code.codeword(j);
                    assert!(merged.count_ones() > l, "block {block}: {i} | {j}");
                }
            }
        }
    }

    #[test]
    fn rejects_non_power_of_two_blocks() {
        for bad in [0usize, 1, 3, 6, 12, 100] {
            assert!(SaffronBlockCode::new(bad).is_err());
        }
    }

    #[test]
    fn decode_examples() {
        let code = SaffronBlockCode::new(8).unwrap();
        assert_eq!(code.decode(&[false; 6]).unwrap(), DecodeResult::Clean);
        let outcomes = [true, false, true, false, true, false];
        assert_eq!(code.decode(&outcomes).unwrap(), DecodeResult::Found(5));
        let two = [true, true, true, true, false, false];
        assert_eq!(code.decode(&two).unwrap(), DecodeResult::TooMany);
        assert!(code.decode(&[false; 5]).is_err());
    }

    #[test]
    fn decode_exhaustive_small_subsets() {
        // noiseless outcomes are the OR of infected codewords; decode must
        // report Clean, the unique infected index, or TooMany accordingly
        for block in [2usize, 4, 8, 16] {
            let code = SaffronBlockCode::new(block).unwrap();
            for i in 0..block {
                assert_eq!(
                    code.decode_mask(code.codeword(i)).unwrap(),
                    DecodeResult::Found(i)
                );
                for j in 0..i {
                    let merged = code.codeword(i) | code.codeword(j);
                    assert_eq!(code.decode_mask(merged).unwrap(), DecodeResult::TooMany);
                }
            }
        }
    }

    #[test]
    fn design_csv_stable_ordering() {
        let d = grid_design(9, 3).unwrap();
        let mut buf = Vec::new();
        write_design_csv(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "pool,individual");
        assert_eq!(lines[1], "0,0");
        assert_eq!(lines.len(), 1 + 18);
        assert!(text.ends_with('\n'));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn code_csv_lists_all_codewords() {
        let code = SaffronBlockCode::new(4).unwrap();
        let mut buf = Vec::new();
        write_code_csv(&code, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "individual,codeword");
        assert_eq!(lines[1], "0,0011");
        assert_eq!(lines[3], "2,1001");
        assert_eq!(lines.len(), 5);
    }
}
