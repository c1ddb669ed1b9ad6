//! Statistics of stationary runs: histograms, KS distances, moments with
//! batch-means errors, heat fluxes, effective-drift regression, modes and
//! sojourn times.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;
use crate::model::{Model, State};

/// Fixed-range histogram with overflow tallies.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
    pub total: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, n_bins: usize) -> Self {
        assert!(n_bins >= 1 && hi > lo, "histogram needs n_bins >= 1 and hi > lo");
        Histogram { lo, hi, counts: vec![0; n_bins], below: 0, above: 0, total: 0 }
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.bin_width()
    }

    #[inline]
    pub fn record(&mut self, v: f64) {
        self.total += 1;
        if v < self.lo {
            self.below += 1;
        } else if v >= self.hi {
            self.above += 1;
        } else {
            let last = self.counts.len() - 1;
            let i = ((v - self.lo) / self.bin_width()) as usize;
            self.counts[i.min(last)] += 1;
        }
    }

    pub fn merge(&mut self, o: &Histogram) {
        assert!(self.lo == o.lo && self.hi == o.hi && self.counts.len() == o.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&o.counts) {
            *a += b;
        }
        self.below += o.below;
        self.above += o.above;
        self.total += o.total;
    }

    /// Per-bin density, normalised by the total count.
    pub fn density(&self) -> Vec<f64> {
        let norm = self.total.max(1) as f64 * self.bin_width();
        self.counts.iter().map(|&c| c as f64 / norm).collect()
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + fmath::erf(x / core::f64::consts::SQRT_2))
}

/// Kolmogorov-Smirnov distance between the empirical law of `samples` and
/// `cdf`. Sorts `samples` in place.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Running moments up to order four; merging is exact up to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let t1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += t1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += t1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += t1;
    }

    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        let d = o.mean - self.mean;
        let d2 = d * d;
        let m2 = self.m2 + o.m2 + d2 * na * nb / n;
        let m3 = self.m3 + o.m3 + d * d2 * na * nb * (na - nb) / (n * n)
            + 3.0 * d * (na * o.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + o.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * o.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * o.m3 - nb * self.m3) / n;
        *self = Moments { n: self.n + o.n, mean: self.mean + d * nb / n, m2, m3, m4 };
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        self.m2 / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn sample_variance(&self) -> f64 {
        self.m2 / (self.n as f64 - 1.0)
    }

    /// Standard error of the mean for independent samples.
    pub fn stderr(&self) -> f64 {
        fmath::sqrt(self.sample_variance() / self.n as f64)
    }

    pub fn excess_kurtosis(&self) -> f64 {
        self.n as f64 * self.m4 / (self.m2 * self.m2) - 3.0
    }
}

/// Mean and standard error of a correlated series from non-overlapping
/// batch means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_batches: usize,
}

pub fn batch_means(series: &[f64], n_batches: usize) -> BatchEstimate {
    batch_estimate(series, n_batches, |b| b.iter().sum::<f64>() / b.len() as f64)
}

/// Apply `stat` to each of `n_batches` equal blocks; report the average and
/// the standard error of the block statistics.
pub fn batch_estimate<F: Fn(&[f64]) -> f64>(series: &[f64], n_batches: usize, stat: F) -> BatchEstimate {
    let nb = n_batches.clamp(1, series.len().max(1));
    let size = series.len() / nb;
    let mut m = Moments::default();
    for b in 0..nb {
        m.push(stat(&series[b * size..(b + 1) * size]));
    }
    let stderr = if nb > 1 { m.stderr() } else { f64::INFINITY };
    BatchEstimate { mean: m.mean, stderr, n_batches: nb }
}

/// Energy flux from each bath with batch-means errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxStats {
    pub j: [f64; 2],
    pub stderr: [f64; 2],
}

/// Instantaneous `gamma_b (T_b - p_b^2) + tau_b p_b` for both baths.
#[inline]
pub fn flux_sample(model: &Model, x: &State) -> [f64; 2] {
    let n = model.num();
    let one = |b: usize, p: f64| n.gamma[b] * (n.temp[b] - p * p) + n.tau[b] * p;
    [one(0, x.p[0]), one(1, x.p[2])]
}

/// Time averages of the fluxes over a stationary segment.
pub fn heat_flux(model: &Model, states: &[State], n_batches: usize) -> FluxStats {
    let mut j = [0.0; 2];
    let mut se = [0.0; 2];
    for b in 0..2 {
        let s: Vec<f64> = states.iter().map(|x| flux_sample(model, x)[b]).collect();
        let est = batch_means(&s, n_batches);
        j[b] = est.mean;
        se[b] = est.stderr;
    }
    FluxStats { j, stderr: se }
}

/// Least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| fmath::powi(b - intercept - slope * a, 2)).sum();
    let slope_stderr = if x.len() > 2 { fmath::sqrt(rss / (n - 2.0) / sxx) } else { f64::INFINITY };
    LineFit { slope, intercept, slope_stderr }
}

/// Measured drift of `p2` started at `omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEstimate {
    pub omega: f64,
    pub window: f64,
    pub n_paths: u64,
    pub mean_slope: f64,
    pub stderr: f64,
    /// Ensemble mean of `p2(window) - omega`.
    pub mean_shift: f64,
}

/// Grid and regression window for [`drift_path_slope`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftWindow {
    pub omega: f64,
    pub window: f64,
    pub h: f64,
    /// The regression uses `t` in `[tail_from * window, window]`.
    pub tail_from: f64,
    /// Sampling interval of `p2` inside the tail.
    pub sample_dt: f64,
}

impl DriftWindow {
    /// Defaults used by the drift scan: window `1.5 omega`, tail from 1/4.
    pub fn for_omega(omega: f64) -> Self {
        DriftWindow { omega, window: 1.5 * omega.abs().max(10.0), h: 1e-3, tail_from: 0.25, sample_dt: 0.05 }
    }
}

/// One path: least-squares slope of `p2(t)` over the tail and the final
/// shift `p2(window) - omega`.
pub fn drift_path_slope(
    model: &Model,
    w: &DriftWindow,
    rng: &crate::sde::RngSpec,
    index: u64,
) -> Result<(f64, f64), crate::sde::SdeError> {
    use crate::sde::{bath_initial, simulate, IntegratorSpec, Scheme};
    let stride = ((w.sample_dt / w.h) + 0.5).max(1.0) as u64;
    let spec = IntegratorSpec::new(Scheme::Splitting, w.h, w.window, stride)?;
    let mut noise = rng.stream(index);
    let x0 = bath_initial(model, w.omega, &mut noise);
    let t0 = w.tail_from * w.window;
    let mut ts = Vec::new();
    let mut ps = Vec::new();
    let end = simulate(x0, model, &spec, &mut noise, &mut |t: f64, x: &State| {
        if t >= t0 {
            ts.push(t);
            ps.push(x.p[1]);
        }
    })?;
    Ok((linear_fit(&ts, &ps).slope, end.p[1] - w.omega))
}

/// Combine per-path `(slope, shift)` pairs; fails when the mean shift
/// leaves the nearly-constant regime (10% of `omega`).
pub fn drift_summary(w: &DriftWindow, paths: &[(f64, f64)]) -> Result<DriftEstimate, RegimeViolation> {
    let mut slope = Moments::default();
    let mut shift = Moments::default();
    for &(s, d) in paths {
        slope.push(s);
        shift.push(d);
    }
    if shift.mean.abs() > 0.1 * w.omega.abs() {
        return Err(RegimeViolation { omega: w.omega, shift: shift.mean });
    }
    Ok(DriftEstimate {
        omega: w.omega,
        window: w.window,
        n_paths: paths.len() as u64,
        mean_slope: slope.mean,
        stderr: slope.stderr(),
        mean_shift: shift.mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("p2 moved by {shift} from omega = {omega}: outside the nearly-constant regime")]
pub struct RegimeViolation {
    pub omega: f64,
    pub shift: f64,
}

/// A local maximum of a smoothed density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub location: f64,
    pub height: f64,
}

/// Gaussian-kernel smoothing of the density; `width` is in bins.
pub fn smoothed_density(hist: &Histogram, width: f64) -> Vec<f64> {
    let d = hist.density();
    if width <= 0.0 {
        return d;
    }
    let reach = fmath::ceil(4.0 * width) as isize;
    let kernel: Vec<f64> = (-reach..=reach).map(|j| fmath::exp(-0.5 * fmath::powi(j as f64 / width, 2))).collect();
    let n = d.len() as isize;
    (0..n)
        .map(|i| {
            let (mut s, mut wsum) = (0.0, 0.0);
            for (idx, j) in (-reach..=reach).enumerate() {
                let k = i + j;
                if (0..n).contains(&k) {
                    s += kernel[idx] * d[k as usize];
                    wsum += kernel[idx];
                }
            }
            s / wsum
        })
        .collect()
}

/// Modes of the smoothed density, highest first (ties by location). Maxima
/// lower than `min_rel` times the highest one are dropped as noise.
pub fn find_modes(hist: &Histogram, width: f64, min_rel: f64) -> Vec<Mode> {
    let s = smoothed_density(hist, width);
    let top = s.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::new();
    let n = s.len();
    let mut i = 0;
    while i < n {
        // Plateaus count once, at their middle.
        let mut j = i;
        while j + 1 < n && s[j + 1] == s[i] {
            j += 1;
        }
        let left_lower = i == 0 || s[i - 1] < s[i];
        let right_lower = j + 1 == n || s[j + 1] < s[i];
        if left_lower && right_lower && s[i] > 0.0 && s[i] >= min_rel * top {
            let mid = 0.5 * (hist.center(i) + hist.center(j));
            out.push(Mode { location: mid, height: s[i] });
        }
        i = j + 1;
    }
    out.sort_by(|a, b| b.height.total_cmp(&a.height).then(a.location.total_cmp(&b.location)));
    out
}

/// Sojourn statistics in a two-regime series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwellStats {
    /// Mean completed sojourn near the lower / upper centre.
    pub mean: [f64; 2],
    pub count: [u64; 2],
    /// Total time in each regime, censored sojourns included.
    pub occupation: [f64; 2],
    /// Transitions out of each regime.
    pub exits: [u64; 2],
    pub switches: u64,
}

impl DwellStats {
    /// Maximum-likelihood mean sojourn for exponential holding times:
    /// occupation over exits, censored time included.
    pub fn mle_mean(&self) -> [f64; 2] {
        [0, 1].map(|r| if self.exits[r] > 0 { self.occupation[r] / self.exits[r] as f64 } else { f64::INFINITY })
    }
}

/// Classify a series between two centres with a hysteresis band of
/// `band` times their separation around the midpoint; the first and last
/// sojourns are censored and excluded from the means.
pub fn dwell_times(series: &[f64], dt: f64, centres: [f64; 2], band: f64) -> DwellStats {
    let (lo, hi) = (centres[0].min(centres[1]), centres[0].max(centres[1]));
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * band * (hi - lo);
    let mut stats = DwellStats { mean: [f64::NAN; 2], count: [0; 2], occupation: [0.0; 2], exits: [0; 2], switches: 0 };
    if series.is_empty() {
        return stats;
    }
    let mut state = usize::from(series[0] >= mid);
    let mut start = 0usize;
    let mut sums = [0.0; 2];
    let mut censored_first = true;
    for (k, &v) in series.iter().enumerate() {
        let next = if state == 0 && v > mid + half {
            1
        } else if state == 1 && v < mid - half {
            0
        } else {
            state
        };
        if next != state {
            let len = (k - start) as f64 * dt;
            stats.occupation[state] += len;
            if !censored_first {
                sums[state] += len;
                stats.count[state] += 1;
            }
            censored_first = false;
            stats.exits[state] += 1;
            stats.switches += 1;
            state = next;
            start = k;
        }
    }
    stats.occupation[state] += (series.len() - start) as f64 * dt;
    for r in 0..2 {
        if stats.count[r] > 0 {
            stats.mean[r] = sums[r] / stats.count[r] as f64;
        } else {
            stats.mean[r] = f64::INFINITY;
        }
    }
    stats
}
