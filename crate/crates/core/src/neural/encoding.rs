use std::f64::consts::PI;

use crate::mesh::Vec3;

/// Sinusoidal positional encoding. Layout is `[x]` followed by, for each
/// frequency `k` and axis `d`, the pair `sin(2^k pi x_d), cos(2^k pi x_d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SinusoidalEncoding {
    pub frequencies: usize,
    pub include_input: bool,
}

impl SinusoidalEncoding {
    pub fn new(frequencies: usize, include_input: bool) -> Self {
        Self {
            frequencies,
            include_input,
        }
    }

    pub fn output_len(&self) -> usize {
        3 * usize::from(self.include_input) + 6 * self.frequencies
    }

    pub fn encode(&self, x: &Vec3) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.output_len());
        self.encode_into(x, &mut out);
        out
    }

    pub fn encode_into(&self, x: &Vec3, out: &mut Vec<f64>) {
        if self.include_input {
            out.extend(x.iter());
        }
        for k in 0..self.frequencies {
            let scale = (1u64 << k) as f64 * PI;
            for d in 0..3 {
                let (s, c) = (scale * x[d]).sin_cos();
                out.push(s);
                out.push(c);
            }
        }
    }
}

impl Default for SinusoidalEncoding {
    fn default() -> Self {
        Self::new(10, true)
    }
}
