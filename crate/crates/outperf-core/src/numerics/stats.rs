//! Compensated summation and sample statistics for Monte Carlo reductions.
//!
//! Reductions over large path batches use Neumaier's variant of Kahan
//! summation so results do not depend on accumulation luck and stay
//! reproducible across refactors of the loop structure.

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
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

pub fn kahan_sum(xs: &[f64]) -> f64 {
    let mut acc = KahanSum::new();
    for &x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Mean, unbiased sample variance, and standard error of the mean.
#[derive(Debug, Clone, Copy)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
}

impl SampleStats {
    /// Two-pass estimate with compensated sums in both passes.
    pub fn from_slice(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                n: 0,
                mean: f64::NAN,
                variance: f64::NAN,
                std_error: f64::NAN,
            };
        }
        let mean = kahan_sum(xs) / n as f64;
        if n == 1 {
            return Self {
                n,
                mean,
                variance: 0.0,
                std_error: 0.0,
            };
        }
        let mut sq = KahanSum::new();
        for &x in xs {
            let d = x - mean;
            sq.add(d * d);
        }
        let variance = (sq.value() / (n - 1) as f64).max(0.0);
        Self {
            n,
            mean,
            variance,
            std_error: (variance / n as f64).sqrt(),
        }
    }
}
