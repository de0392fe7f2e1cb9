//! Small numeric helpers shared by the extraction and simulation modules.

/// Neumaier-compensated running sum.
///
/// Reductions over records go through this so that the result does not
/// depend on evaluation order beyond the last couple of ulps.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Mean and sample standard deviation (n - 1 denominator).
///
/// A single value has zero spread. Returns `None` for an empty slice.
pub fn mean_and_sample_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Gaussian tail probability Q(x).
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Derives an independent 64-bit seed from a base seed and a list of indices
/// (splitmix64 finalizer chained over the inputs).
pub fn derive_seed(base: u64, indices: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
