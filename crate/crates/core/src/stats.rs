//! Goodness-of-fit statistics for the Monte Carlo checks.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Significance level of every chi-square test.
pub const SIGNIFICANCE: f64 = 1e-3;

/// Bins whose expected count falls below this are pooled.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Clone, Debug, Serialize)]
pub struct BinRow {
    pub label: String,
    pub observed: f64,
    pub expected: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Bins after pooling; `expected` is a count (for two-sample tests, the
    /// first sample's count under the pooled distribution).
    pub bins: Vec<BinRow>,
    /// Effective sample size; the raw count for unweighted samples.
    pub effective_samples: f64,
}

impl ChiSquareReport {
    pub fn passed(&self) -> bool {
        self.p_value >= SIGNIFICANCE
    }
}

pub fn chi_square_sf(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    ChiSquared::new(dof as f64)
        .map(|d| d.sf(statistic.max(0.0)))
        .unwrap_or(f64::NAN)
}

/// Groups bins so that each group expects at least `min` counts: large bins
/// stay alone, small ones share a rest group, and an underfull rest group
/// joins the smallest large bin. Returns the group of every bin.
fn pooling(expected: &[f64], min: f64) -> (Vec<usize>, usize) {
    let mut group = vec![usize::MAX; expected.len()];
    let mut next = 0;
    for (i, &e) in expected.iter().enumerate() {
        if e >= min {
            group[i] = next;
            next += 1;
        }
    }
    let rest: Vec<usize> = (0..expected.len())
        .filter(|&i| group[i] == usize::MAX)
        .collect();
    if rest.is_empty() {
        return (group, next);
    }
    let rest_total: f64 = rest.iter().map(|&i| expected[i]).sum();
    let target = if rest_total >= min || next == 0 {
        next += 1;
        next - 1
    } else {
        let smallest = (0..expected.len())
            .filter(|&i| group[i] != usize::MAX)
            .min_by(|&a, &b| expected[a].total_cmp(&expected[b]))
            .unwrap();
        group[smallest]
    };
    for i in rest {
        group[i] = target;
    }
    (group, next)
}

fn pooled_labels(labels: &[String], group: &[usize], groups: usize) -> Vec<String> {
    let mut out = vec![Vec::new(); groups];
    for (i, &g) in group.iter().enumerate() {
        out[g].push(labels[i].clone());
    }
    out.into_iter()
        .map(|ls| {
            if ls.len() == 1 {
                ls[0].clone()
            } else {
                format!("pooled[{}]", ls.join(" "))
            }
        })
        .collect()
}

/// Pearson chi-square of `observed` counts against bin probabilities.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], labels: &[String]) -> ChiSquareReport {
    let m: u64 = observed.iter().sum();
    let expected: Vec<f64> = probs.iter().map(|p| p * m as f64).collect();
    let (group, groups) = pooling(&expected, MIN_EXPECTED);
    let mut obs = vec![0.0; groups];
    let mut exp = vec![0.0; groups];
    for i in 0..observed.len() {
        obs[group[i]] += observed[i] as f64;
        exp[group[i]] += expected[i];
    }
    let statistic: f64 = obs
        .iter()
        .zip(&exp)
        .filter(|(_, e)| **e > 0.0)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = groups.saturating_sub(1);
    let names = pooled_labels(labels, &group, groups);
    ChiSquareReport {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
        bins: (0..groups)
            .map(|g| BinRow {
                label: names[g].clone(),
                observed: obs[g],
                expected: exp[g],
            })
            .collect(),
        effective_samples: m as f64,
    }
}

/// Two-sample chi-square homogeneity test on binned counts.
pub fn two_sample_chi_square(a: &[u64], b: &[u64], labels: &[String]) -> ChiSquareReport {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let total = na + nb;
    let smaller = na.min(nb) / total;
    let combined: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x + y) as f64 * smaller)
        .collect();
    let (group, groups) = pooling(&combined, MIN_EXPECTED);
    let mut ga = vec![0.0; groups];
    let mut gb = vec![0.0; groups];
    for i in 0..a.len() {
        ga[group[i]] += a[i] as f64;
        gb[group[i]] += b[i] as f64;
    }
    let mut statistic = 0.0;
    for g in 0..groups {
        let pooled = (ga[g] + gb[g]) / total;
        if pooled > 0.0 {
            let (ea, eb) = (na * pooled, nb * pooled);
            statistic += (ga[g] - ea).powi(2) / ea + (gb[g] - eb).powi(2) / eb;
        }
    }
    let dof = groups.saturating_sub(1);
    let names = pooled_labels(labels, &group, groups);
    ChiSquareReport {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
        bins: (0..groups)
            .map(|g| BinRow {
                label: names[g].clone(),
                observed: ga[g],
                expected: na * (ga[g] + gb[g]) / total,
            })
            .collect(),
        effective_samples: na.min(nb),
    }
}

/// Goodness of fit for importance-weighted samples.
///
/// With `u_i = w_i (e_{bin_i} - pi) / mean(w)` restricted to all groups but
/// one, `mean(u)` is the self-normalized frequency error and
/// `M mean(u)^t S^{-1} mean(u)` with `S` the sample covariance of the `u_i`
/// is asymptotically chi-square. It reduces to the usual test when all
/// weights are equal.
pub fn weighted_chi_square(
    bins: &[usize],
    weights: &[f64],
    probs: &[f64],
    labels: &[String],
) -> ChiSquareReport {
    let m = bins.len() as f64;
    let sw: f64 = weights.iter().sum();
    let sw2: f64 = weights.iter().map(|w| w * w).sum();
    let n_eff = sw * sw / sw2;
    let expected: Vec<f64> = probs.iter().map(|p| p * n_eff).collect();
    let (group, groups) = pooling(&expected, MIN_EXPECTED);
    let mut pi = vec![0.0; groups];
    let mut est = vec![0.0; groups];
    for (i, p) in probs.iter().enumerate() {
        pi[group[i]] += p;
    }
    for (&b, &w) in bins.iter().zip(weights) {
        est[group[b]] += w / sw;
    }
    let names = pooled_labels(labels, &group, groups);
    let rows = (0..groups)
        .map(|g| BinRow {
            label: names[g].clone(),
            observed: est[g] * n_eff,
            expected: pi[g] * n_eff,
        })
        .collect();
    let dof = groups.saturating_sub(1);
    if dof == 0 {
        return ChiSquareReport {
            statistic: 0.0,
            dof,
            p_value: 1.0,
            bins: rows,
            effective_samples: n_eff,
        };
    }
    let wbar = sw / m;
    let mut mean = DVector::<f64>::zeros(dof);
    let mut cov = DMatrix::<f64>::zeros(dof, dof);
    let mut u = DVector::<f64>::zeros(dof);
    for (&b, &w) in bins.iter().zip(weights) {
        let gb = group[b];
        for g in 0..dof {
            u[g] = w * ((gb == g) as u8 as f64 - pi[g]) / wbar;
        }
        mean += &u;
        cov.ger(1.0, &u, &u, 1.0);
    }
    mean /= m;
    let cov = cov / m - &mean * mean.transpose();
    let statistic = match cov.cholesky() {
        Some(ch) => m * mean.dot(&ch.solve(&mean)),
        None => f64::INFINITY,
    };
    ChiSquareReport {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
        bins: rows,
        effective_samples: n_eff,
    }
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        MeanEstimate {
            mean,
            std_err: (var / n).sqrt(),
            samples: xs.len(),
        }
    }

    /// Binomial proportion with the standard error of the hypothesized rate.
    pub fn proportion(hits: u64, trials: u64, hypothesis: f64) -> Self {
        let n = trials as f64;
        MeanEstimate {
            mean: hits as f64 / n,
            std_err: (hypothesis * (1.0 - hypothesis) / n).sqrt(),
            samples: trials as usize,
        }
    }

    /// `|mean - target|` in standard errors.
    pub fn sigmas_from(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if self.std_err > 0.0 {
            d / self.std_err
        } else if d < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        self.sigmas_from(target) <= sigmas
    }
}

/// Difference of two independent estimates, as an estimate of zero.
pub fn difference(a: &MeanEstimate, b: &MeanEstimate) -> MeanEstimate {
    MeanEstimate {
        mean: a.mean - b.mean,
        std_err: (a.std_err.powi(2) + b.std_err.powi(2)).sqrt(),
        samples: a.samples.min(b.samples),
    }
}
