//! Medians and percentile-bootstrap intervals for comparing NMSE series.

use groupbeam_core::array::rng_from_seed;
use rand::Rng;

/// Median of the finite entries; NaN when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 2000;

/// Median of the paired differences `a[i] - b[i]` with a two-sided
/// percentile-bootstrap interval at `level`. Pairs with a NaN side are
/// dropped; a failed estimator counts as infinitely bad (+inf).
pub fn paired_median_difference(a: &[f64], b: &[f64], level: f64, seed: u64) -> Interval {
    assert_eq!(a.len(), b.len(), "paired series differ in length");
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| match (x.is_nan(), y.is_nan()) {
            (false, false) => x - y,
            (true, false) => f64::INFINITY,
            (false, true) => f64::NEG_INFINITY,
            (true, true) => f64::NAN,
        })
        .filter(|x| !x.is_nan())
        .collect();
    bootstrap(&d, level, seed, |s| median(s))
}

/// `median(b) - median(a)` for independent samples, resampling each side.
pub fn median_shift(a: &[f64], b: &[f64], level: f64, seed: u64) -> Interval {
    let a: Vec<f64> = a.iter().copied().filter(|x| !x.is_nan()).collect();
    let b: Vec<f64> = b.iter().copied().filter(|x| !x.is_nan()).collect();
    if a.is_empty() || b.is_empty() {
        return Interval { estimate: f64::NAN, lo: f64::NAN, hi: f64::NAN };
    }
    let mut rng = rng_from_seed(seed);
    let mut stats: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let ra: Vec<f64> = (0..a.len()).map(|_| a[rng.gen_range(0..a.len())]).collect();
            let rb: Vec<f64> = (0..b.len()).map(|_| b[rng.gen_range(0..b.len())]).collect();
            median(&rb) - median(&ra)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Interval {
        estimate: median(&b) - median(&a),
        lo: percentile_sorted(&stats, tail),
        hi: percentile_sorted(&stats, 1.0 - tail),
    }
}

fn bootstrap(data: &[f64], level: f64, seed: u64, stat: impl Fn(&[f64]) -> f64) -> Interval {
    if data.is_empty() {
        return Interval { estimate: f64::NAN, lo: f64::NAN, hi: f64::NAN };
    }
    let mut rng = rng_from_seed(seed);
    let mut buf = vec![0.0; data.len()];
    let mut stats: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            for x in buf.iter_mut() {
                *x = data[rng.gen_range(0..data.len())];
            }
            stat(&buf)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Interval {
        estimate: stat(data),
        lo: percentile_sorted(&stats, tail),
        hi: percentile_sorted(&stats, 1.0 - tail),
    }
}
