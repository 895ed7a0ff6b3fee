//! Gray-code Sobol sequence with an optional digital (XOR) shift.

use std::sync::OnceLock;

use super::SamplingError;

const BITS: usize = 32;
const TABLE: &str = include_str!("../../data/sobol_directions.txt");

/// One line of a direction-number table: degree `s`, polynomial coefficient
/// bits `a`, and initial direction numbers `m_1..m_s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectionEntry {
    pub dimension: usize,
    pub degree: u32,
    pub coefficients: u32,
    pub initial: Vec<u32>,
}

/// Parses a direction-number table: whitespace-separated integers, one
/// dimension per line (`d s a m_1 .. m_s`). Blank lines and `#` comments are
/// skipped.
pub fn parse_direction_table(text: &str) -> Result<Vec<DirectionEntry>, SamplingError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('d') {
            continue;
        }
        let bad = |msg: &str| SamplingError::DirectionTable {
            line: lineno + 1,
            message: msg.to_string(),
        };
        let nums: Vec<u32> = line
            .split_whitespace()
            .map(|t| t.parse::<u32>().map_err(|_| bad("non-integer field")))
            .collect::<Result<_, _>>()?;
        if nums.len() < 3 {
            return Err(bad("expected at least d, s, a"));
        }
        let degree = nums[1];
        let initial = nums[3..].to_vec();
        if initial.len() != degree as usize {
            return Err(bad("number of m values does not match degree"));
        }
        for (k, &m) in initial.iter().enumerate() {
            if m % 2 == 0 || m >= 1 << (k + 1) {
                return Err(bad("m_k must be odd and below 2^k"));
            }
        }
        out.push(DirectionEntry {
            dimension: nums[0] as usize,
            degree,
            coefficients: nums[2],
            initial,
        });
    }
    Ok(out)
}

fn builtin_table() -> &'static [DirectionEntry] {
    static CELL: OnceLock<Vec<DirectionEntry>> = OnceLock::new();
    CELL.get_or_init(|| parse_direction_table(TABLE).expect("bundled table is valid"))
}

/// Highest dimension supported by the bundled table.
pub fn max_dimension() -> usize {
    builtin_table().len() + 1
}

/// Expands one table entry into 32 direction numbers `v_k = m_k << (32 - k)`.
fn direction_numbers(entry: Option<&DirectionEntry>) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    match entry {
        None => {
            for (k, vk) in v.iter_mut().enumerate() {
                *vk = 1 << (BITS - 1 - k);
            }
        }
        Some(e) => {
            let s = e.degree as usize;
            for k in 0..s.min(BITS) {
                v[k] = e.initial[k] << (BITS - 1 - k);
            }
            for k in s..BITS {
                let mut next = v[k - s] ^ (v[k - s] >> s);
                for j in 1..s {
                    if (e.coefficients >> (s - 1 - j)) & 1 == 1 {
                        next ^= v[k - j];
                    }
                }
                v[k] = next;
            }
        }
    }
    v
}

#[derive(Clone, Debug)]
pub struct SobolSequence {
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    shift: Vec<u32>,
    /// Index of the next point to emit.
    index: u64,
}

impl SobolSequence {
    pub fn new(dim: usize) -> Result<Self, SamplingError> {
        Self::with_shift(dim, vec![0; dim])
    }

    /// Sequence whose points are XOR-ed with `shift` (one word per coordinate).
    pub fn with_shift(dim: usize, shift: Vec<u32>) -> Result<Self, SamplingError> {
        let table = builtin_table();
        if dim == 0 || dim > max_dimension() {
            return Err(SamplingError::DimensionUnsupported {
                sampler: "Sobol",
                dim,
                max: max_dimension(),
            });
        }
        assert_eq!(shift.len(), dim);
        let directions = (0..dim)
            .map(|j| direction_numbers(if j == 0 { None } else { table.get(j - 1) }))
            .collect();
        Ok(Self {
            directions,
            state: vec![0; dim],
            shift,
            index: 0,
        })
    }

    pub fn position(&self) -> u64 {
        self.index
    }

    /// Next point in [0, 1)^dim.
    pub fn next_point(&mut self) -> Vec<f64> {
        if self.index > 0 {
            // Gray code: flip the direction number of the lowest zero bit of index-1.
            let c = (!(self.index - 1)).trailing_zeros() as usize;
            for (s, dir) in self.state.iter_mut().zip(&self.directions) {
                *s ^= dir[c.min(BITS - 1)];
            }
        }
        self.index += 1;
        self.state
            .iter()
            .zip(&self.shift)
            .map(|(&s, &sh)| f64::from(s ^ sh) / 4_294_967_296.0)
            .collect()
    }
}
