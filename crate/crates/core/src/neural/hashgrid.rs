use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::fwb::Container;
use crate::mesh::Vec3;

pub const LEVELS: usize = 16;
pub const FEATURES: usize = 2;
pub const MIN_RESOLUTION: f64 = 16.0;
pub const MAX_RESOLUTION: f64 = 4096.0;
pub const DEFAULT_TABLE_SIZE: usize = 1 << 19;
pub const INIT_SCALE: f32 = 1e-4;

const PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

/// Levels enabled at a training iteration: one at the start, one more every
/// 250 iterations up to eight, then all sixteen from iteration 2000.
pub fn active_levels_at(iteration: u64) -> usize {
    if iteration >= 2000 {
        LEVELS
    } else {
        (1 + (iteration / 250) as usize).min(8)
    }
}

pub fn level_resolution(level: usize) -> u32 {
    let g = (MAX_RESOLUTION / MIN_RESOLUTION).powf(1.0 / (LEVELS - 1) as f64);
    (MIN_RESOLUTION * g.powi(level as i32)).round() as u32
}

pub fn spatial_hash(i: u32, j: u32, k: u32, table_size: usize) -> usize {
    let h = i.wrapping_mul(PRIMES[0]) ^ j.wrapping_mul(PRIMES[1]) ^ k.wrapping_mul(PRIMES[2]);
    h as usize % table_size
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashGrid {
    resolutions: Vec<u32>,
    table_size: usize,
    seed: u64,
    /// One `table_size x FEATURES` table per level.
    tables: Vec<Vec<f32>>,
    active: usize,
}

impl HashGrid {
    pub fn new(table_size: usize, seed: u64) -> Result<Self> {
        if table_size == 0 {
            return Err(Error::invalid("hash table size must be positive"));
        }
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let tables = (0..LEVELS)
            .map(|_| {
                (0..table_size * FEATURES)
                    .map(|_| rng.random_range(-INIT_SCALE..=INIT_SCALE))
                    .collect()
            })
            .collect();
        Ok(Self {
            resolutions: (0..LEVELS).map(level_resolution).collect(),
            table_size,
            seed,
            tables,
            active: LEVELS,
        })
    }

    pub fn resolutions(&self) -> &[u32] {
        &self.resolutions
    }

    pub fn table_size(&self) -> usize {
        self.table_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn table(&self, level: usize) -> &[f32] {
        &self.tables[level]
    }

    pub fn table_mut(&mut self, level: usize) -> &mut [f32] {
        &mut self.tables[level]
    }

    pub fn active_levels(&self) -> usize {
        self.active
    }

    pub fn set_active_count(&mut self, active: usize) -> Result<()> {
        if active > LEVELS {
            return Err(Error::invalid(format!("at most {LEVELS} levels can be active")));
        }
        self.active = active;
        Ok(())
    }

    pub fn set_active_levels(&mut self, iteration: u64) -> usize {
        self.active = active_levels_at(iteration);
        self.active
    }

    pub fn output_len(&self) -> usize {
        LEVELS * FEATURES
    }

    pub fn encode(&self, x: &Vec3) -> Result<Vec<f64>> {
        if !x.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::invalid(format!("hash grid input {x:?} outside the unit cube")));
        }
        let mut out = vec![0.0; self.output_len()];
        for level in 0..self.active {
            let res = self.resolutions[level] as f64;
            let mut base = [0u32; 3];
            let mut frac = [0.0; 3];
            for d in 0..3 {
                let p = x[d] * res;
                let f = p.floor();
                base[d] = f as u32;
                frac[d] = p - f;
            }
            let table = &self.tables[level];
            for corner in 0..8u32 {
                let mut w = 1.0;
                let mut idx = [0u32; 3];
                for d in 0..3 {
                    let bit = (corner >> d) & 1;
                    idx[d] = base[d] + bit;
                    w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
                }
                if w == 0.0 {
                    continue;
                }
                let slot = spatial_hash(idx[0], idx[1], idx[2], self.table_size) * FEATURES;
                for f in 0..FEATURES {
                    out[level * FEATURES + f] += w * table[slot + f] as f64;
                }
            }
        }
        Ok(out)
    }

    /// Writes `{prefix}hash_l{i}` tables and `{prefix}hash_meta`.
    pub fn write_chunks(&self, c: &mut Container, prefix: &str) -> Result<()> {
        for (l, t) in self.tables.iter().enumerate() {
            c.put_f32(&format!("{prefix}hash_l{l}"), &[self.table_size, FEATURES], t.clone())?;
        }
        let mut kv = KeyValues::default();
        kv.set("levels", LEVELS);
        kv.set("features", FEATURES);
        kv.set("table_size", self.table_size);
        kv.set("active", self.active);
        kv.set("seed", self.seed);
        kv.set("schedule", "1+iter/250 capped at 8, 16 from 2000");
        c.put_text(&format!("{prefix}hash_meta"), &kv.to_text())
    }

    pub fn read_chunks(c: &Container, prefix: &str) -> Result<Self> {
        let meta = KeyValues::parse(&c.text(&format!("{prefix}hash_meta"))?, "hash_meta")?;
        let mut tables = Vec::with_capacity(LEVELS);
        let mut table_size = 0;
        for l in 0..LEVELS {
            let (dims, t) = c.f32(&format!("{prefix}hash_l{l}"))?;
            if dims.len() != 2 || dims[1] != FEATURES || (l > 0 && dims[0] != table_size) {
                return Err(Error::Container(format!("hash_l{l} has shape {dims:?}")));
            }
            table_size = dims[0];
            tables.push(t.to_vec());
        }
        let active = meta.get::<usize>("active")?.unwrap_or(LEVELS);
        if active > LEVELS {
            return Err(Error::Container(format!("active level count {active} exceeds {LEVELS}")));
        }
        Ok(Self {
            resolutions: (0..LEVELS).map(level_resolution).collect(),
            table_size,
            seed: meta.get("seed")?.unwrap_or(0),
            tables,
            active,
        })
    }
}
