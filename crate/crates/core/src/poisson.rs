//! Homogeneous Poisson patterns and their density relative to `Poi(S, 1)`.

use std::sync::Arc;

use rand::Rng;
use smallvec::{smallvec, SmallVec};
use statrs::function::gamma::ln_gamma;

use crate::error::ParamError;
use crate::geometry::{PointPattern, Window};

/// Means below this use inversion; above it, transformed rejection.
const INVERSION_LIMIT: f64 = 30.0;

/// Intensity `ρ` in points per unit area.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, serde::Serialize)]
pub struct PoissonIntensity(f64);

impl PoissonIntensity {
    pub fn new(rho: f64) -> Result<Self, ParamError> {
        if rho.is_finite() && rho > 0.0 {
            Ok(Self(rho))
        } else {
            Err(ParamError::new("rho", format!("must be positive and finite, got {rho}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Poisson(`mean`) variate.
pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    debug_assert!(mean >= 0.0 && mean.is_finite());
    if mean <= 0.0 {
        0
    } else if mean < INVERSION_LIMIT {
        poisson_inversion(mean, rng)
    } else {
        poisson_ptrs(mean, rng)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        let next = cdf + p;
        if next == cdf {
            // Floating-point tail exhausted.
            break;
        }
        cdf = next;
    }
    k
}

/// Hörmann's PTRS transformed rejection with squeeze, valid for mean ≥ 10.
fn poisson_ptrs<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -mean + k * loglam - ln_gamma(k + 1.0) {
            return k as u64;
        }
    }
}

/// A draw from `Poi(S, ρ)`: Poisson(`ρ|S|`) points, i.i.d. uniform.
pub fn sample_poisson<R: Rng + ?Sized>(window: &Arc<Window>, rho: f64, rng: &mut R) -> PointPattern {
    let n = poisson_count(rho * window.area(), rng) as usize;
    let mut x = PointPattern::with_capacity(window.clone(), n);
    fill_uniform(&mut x, n, rng);
    x
}

/// Replaces the contents of `x` with a fresh `Poi(S, ρ)` draw.
pub fn resample_poisson_into<R: Rng + ?Sized>(x: &mut PointPattern, rho: f64, rng: &mut R) {
    x.clear();
    let n = poisson_count(rho * x.window().area(), rng) as usize;
    fill_uniform(x, n, rng);
}

fn fill_uniform<R: Rng + ?Sized>(x: &mut PointPattern, n: usize, rng: &mut R) {
    let w = x.window().clone();
    let mut p: SmallVec<[f64; 4]> = smallvec![0.0; w.dim()];
    for _ in 0..n {
        for (i, c) in p.iter_mut().enumerate() {
            *c = w.lower()[i] + w.side(i) * rng.random::<f64>();
        }
        x.push(&p);
    }
}

/// `ln g(x; ρ) = (1 − ρ)|S| + n(x) ln ρ`, the density of `Poi(S, ρ)`
/// relative to `Poi(S, 1)`.
pub fn log_g(x: &PointPattern, rho: f64) -> f64 {
    log_g_count(x.len(), rho, x.window().area())
}

#[inline]
pub fn log_g_count(n: usize, rho: f64, area: f64) -> f64 {
    (1.0 - rho) * area + n as f64 * rho.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::SeedableRng;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

    fn unit() -> Arc<Window> {
        Arc::new(Window::unit_square_centered())
    }

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn log_g_examples() {
        let w = unit();
        let empty = PointPattern::empty(w.clone());
        assert!((log_g(&empty, 2.0) + 1.0).abs() < 1e-15);
        let three = PointPattern::from_points(w, [[0.0, 0.0], [0.1, 0.1], [0.2, 0.2]]).unwrap();
        assert!((log_g(&three, 2.0) - (-1.0 + 3.0 * 2f64.ln())).abs() < 1e-15);
        assert!((log_g(&three, 2.0) - 1.0794415416798357).abs() < 1e-12);
        assert_eq!(log_g(&three, 1.0), 0.0);
    }

    #[test]
    fn intensity_validation() {
        assert!(PoissonIntensity::new(0.0).is_err());
        assert!(PoissonIntensity::new(f64::INFINITY).is_err());
        assert_eq!(PoissonIntensity::new(2.5).unwrap().get(), 2.5);
    }

    #[test]
    fn count_mean_and_variance_at_rho_100() {
        let w = unit();
        let mut rng = SimRng::seed_from_u64(1);
        let counts: Vec<f64> = (0..10_000).map(|_| sample_poisson(&w, 100.0, &mut rng).len() as f64).collect();
        let (m, v) = moments(&counts);
        assert!((m - 100.0).abs() < 0.4, "mean {m}");
        // sd of the sample variance ≈ sqrt((μ4 − σ⁴)/R) = sqrt((λ + 2λ²)/R) ≈ 1.42,
        // so 10% = 10 is about 7 sd.
        assert!((v - 100.0).abs() < 10.0, "variance {v}");
    }

    #[test]
    fn tiny_rate_is_empty() {
        let w = unit();
        let mut rng = SimRng::seed_from_u64(2);
        let nonempty = (0..10_000).filter(|_| !sample_poisson(&w, 1e-6, &mut rng).is_empty()).count();
        assert!(nonempty <= 1);
    }

    #[test]
    fn points_lie_in_window() {
        let w = Arc::new(Window::new(vec![0.0, 1.0], vec![0.2, 3.0]).unwrap());
        let mut rng = SimRng::seed_from_u64(3);
        let x = sample_poisson(&w, 50.0, &mut rng);
        assert!(x.iter().all(|p| w.contains(p)));
    }

    fn chi_square_counts(mean: f64, draws: usize, seed: u64) -> f64 {
        let mut rng = SimRng::seed_from_u64(seed);
        let dist = Poisson::new(mean).unwrap();
        let lo = (mean - 4.0 * mean.sqrt()).floor().max(0.0) as u64;
        let hi = (mean + 4.0 * mean.sqrt()).ceil() as u64;
        let mut observed = vec![0f64; (hi - lo + 3) as usize];
        for _ in 0..draws {
            let k = poisson_count(mean, &mut rng);
            let bin = if k < lo { 0 } else if k > hi { observed.len() - 1 } else { (k - lo + 1) as usize };
            observed[bin] += 1.0;
        }
        let mut expected = vec![0f64; observed.len()];
        expected[0] = (0..lo).map(|k| dist.pmf(k)).sum();
        for k in lo..=hi {
            expected[(k - lo + 1) as usize] = dist.pmf(k);
        }
        let tail = 1.0 - expected.iter().sum::<f64>();
        *expected.last_mut().unwrap() += tail;
        let stat: f64 = observed
            .iter()
            .zip(&expected)
            .filter(|(_, &e)| e * draws as f64 >= 5.0)
            .map(|(o, e)| {
                let e = e * draws as f64;
                (o - e) * (o - e) / e
            })
            .sum();
        let dof = expected.iter().filter(|&&e| e * draws as f64 >= 5.0).count() - 1;
        1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat)
    }

    #[test]
    fn inversion_branch_matches_poisson_law() {
        assert!(chi_square_counts(7.3, 200_000, 10) > 0.001);
    }

    #[test]
    fn rejection_branch_matches_poisson_law() {
        assert!(chi_square_counts(47.0, 200_000, 11) > 0.001);
        assert!(chi_square_counts(800.0, 200_000, 12) > 0.001);
    }

    #[test]
    fn g_integrates_to_one_under_unit_poisson() {
        // E_{Poi(S,1)}[g(X; ρ)] = 1. E[g²] = exp(|S|(ρ − 1)²), so larger ρ
        // would need astronomically many draws.
        let w = unit();
        for (rho, seed) in [(0.5, 20), (1.5, 21), (2.0, 22)] {
            let mut rng = SimRng::seed_from_u64(seed);
            let vals: Vec<f64> =
                (0..200_000).map(|_| log_g(&sample_poisson(&w, 1.0, &mut rng), rho).exp()).collect();
            let (m, v) = moments(&vals);
            let se = (v / vals.len() as f64).sqrt();
            assert!((m - 1.0).abs() < 3.0 * se, "rho {rho}: mean {m}, se {se}");
        }
    }

    #[test]
    fn same_seed_same_pattern() {
        let w = unit();
        let a = sample_poisson(&w, 100.0, &mut SimRng::seed_from_u64(99));
        let b = sample_poisson(&w, 100.0, &mut SimRng::seed_from_u64(99));
        assert_eq!(a, b);
    }
}
