//! Sobol low-discrepancy sequences (Gray-code order) with optional random
//! linear scrambling plus digital shift.
//!
//! Direction numbers for dimensions 2..=64 are read from the bundled
//! `sobol_directions_v1.txt` table; dimension 1 is the van der Corput sequence.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 64;
const BITS: usize = 32;
const TABLE: &str = include_str!("../../data/sobol_directions_v1.txt");

type Directions = [u32; BITS];

fn table() -> &'static [Directions] {
    static CELL: OnceLock<Vec<Directions>> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut dirs = Vec::with_capacity(MAX_DIM);
        let mut first = [0u32; BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1u32 << (BITS - 1 - k);
        }
        dirs.push(first);
        for line in TABLE.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let nums: Vec<u32> = line.split_whitespace().map(|t| t.parse().expect("direction table")).collect();
            let (s, a, m) = (nums[1] as usize, nums[2], &nums[3..]);
            assert_eq!(m.len(), s, "direction table row for dimension {}", nums[0]);
            dirs.push(directions_from_polynomial(s, a, m));
        }
        assert_eq!(dirs.len(), MAX_DIM);
        dirs
    })
}

/// Expands the initial direction integers `m` of a primitive polynomial of
/// degree `s` with interior coefficients `a` into all 32 direction numbers.
fn directions_from_polynomial(s: usize, a: u32, m: &[u32]) -> Directions {
    let mut v = [0u32; BITS];
    for k in 0..s.min(BITS) {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for j in 1..s {
            if (a >> (s - 1 - j)) & 1 == 1 {
                x ^= v[k - j];
            }
        }
        v[k] = x;
    }
    v
}

/// Applies a random lower-triangular binary matrix (unit diagonal) to the
/// digits of every direction number of one dimension.
fn linear_scramble(v: &Directions, rng: &mut ChaCha8Rng) -> Directions {
    // row i of the matrix acts on digit i (digit 0 is the most significant bit)
    let rows: Vec<u32> = (0..BITS)
        .map(|i| {
            let diag = 1u32 << (BITS - 1 - i);
            let below: u32 = if i == 0 { 0 } else { rng.random::<u32>() & !((1u64 << (BITS - i)) as u32).wrapping_sub(1) };
            diag | below
        })
        .collect();
    let mut out = [0u32; BITS];
    for (o, &x) in out.iter_mut().zip(v) {
        let mut y = 0u32;
        for (i, row) in rows.iter().enumerate() {
            if (x & row).count_ones() % 2 == 1 {
                y |= 1u32 << (BITS - 1 - i);
            }
        }
        *o = y;
    }
    out
}

/// Incremental Sobol generator.
#[derive(Debug, Clone)]
pub struct Sobol {
    dirs: Vec<Directions>,
    state: Vec<u32>,
    index: u64,
}

impl Sobol {
    /// Unscrambled sequence starting at the origin.
    pub fn new(dim: usize) -> Result<Self> {
        Self::build(dim, None)
    }

    pub fn scrambled(dim: usize, seed: u64) -> Result<Self> {
        Self::build(dim, Some(seed))
    }

    fn build(dim: usize, seed: Option<u64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::UnsupportedDimension(dim));
        }
        let base = &table()[..dim];
        let (dirs, state) = match seed {
            None => (base.to_vec(), vec![0u32; dim]),
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let dirs: Vec<Directions> = base.iter().map(|v| linear_scramble(v, &mut rng)).collect();
                let shift: Vec<u32> = (0..dim).map(|_| rng.random()).collect();
                (dirs, shift)
            }
        };
        Ok(Self { dirs, state, index: 0 })
    }

    pub fn dim(&self) -> usize {
        self.dirs.len()
    }

    /// Next point in `[0, 1)^d`.
    pub fn next_point(&mut self) -> Vec<f64> {
        let out = self.state.iter().map(|&x| x as f64 / 4_294_967_296.0).collect();
        let bit = self.index.trailing_ones() as usize;
        if bit < BITS {
            for (s, d) in self.state.iter_mut().zip(&self.dirs) {
                *s ^= d[bit];
            }
        }
        self.index += 1;
        out
    }
}

/// First `n` points of a `d`-dimensional Sobol sequence; scrambled when a
/// seed is given.
pub fn sobol_points(n: usize, d: usize, seed: Option<u64>) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Input("sobol_points needs n >= 1".into()));
    }
    let mut gen = Sobol::build(d, seed)?;
    Ok((0..n).map(|_| gen.next_point()).collect())
}
