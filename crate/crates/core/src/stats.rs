//! Small summary-statistics helpers shared by the protocol modules.

use serde::{Deserialize, Serialize};

/// Count, sum and sum of squares; merge order is the caller's responsibility.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        Some(((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0))
    }

    /// Standard error of the mean.
    pub fn sem(&self) -> Option<f64> {
        self.variance().map(|v| (v / self.n as f64).sqrt())
    }
}

/// Interference contrast `(I_max - I_min) / (I_max + I_min)` with its
/// delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastEstimate {
    pub i_max: f64,
    pub i_min: f64,
    pub contrast: Option<f64>,
    pub standard_error: Option<f64>,
}

impl ContrastEstimate {
    /// Exact contrast from known means.
    pub fn exact(i_max: f64, i_min: f64) -> Self {
        Self {
            i_max,
            i_min,
            contrast: contrast(i_max, i_min),
            standard_error: Some(0.0),
        }
    }

    /// Contrast from independent samples of the constructive and
    /// destructive intensities.
    pub fn from_moments(max: &Moments, min: &Moments) -> Self {
        let (Some(a), Some(b)) = (max.mean(), min.mean()) else {
            return Self {
                i_max: max.mean().unwrap_or(0.0),
                i_min: min.mean().unwrap_or(0.0),
                contrast: None,
                standard_error: None,
            };
        };
        let v = contrast(a, b);
        let se = match (v, max.sem(), min.sem()) {
            (Some(_), Some(sa), Some(sb)) => {
                let s = (a + b) * (a + b);
                let da = 2.0 * b / s;
                let db = -2.0 * a / s;
                Some(((da * sa).powi(2) + (db * sb).powi(2)).sqrt())
            }
            _ => None,
        };
        Self {
            i_max: a,
            i_min: b,
            contrast: v,
            standard_error: se,
        }
    }
}

pub fn contrast(i_max: f64, i_min: f64) -> Option<f64> {
    let s = i_max + i_min;
    (s > 0.0).then(|| (i_max - i_min) / s)
}

/// Pearson correlation of two equal-length series.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_basic() {
        let mut m = Moments::default();
        for x in [1.0, 2.0, 3.0, 4.0] {
            m.push(x);
        }
        assert_eq!(m.mean(), Some(2.5));
        assert!((m.variance().unwrap() - 5.0 / 3.0).abs() < 1e-12);
        let mut a = Moments::default();
        a.push(1.0);
        a.push(2.0);
        let mut b = Moments::default();
        b.push(3.0);
        b.push(4.0);
        a.merge(&b);
        assert_eq!(a, m);
    }

    #[test]
    fn contrast_edges() {
        assert_eq!(contrast(0.0, 0.0), None);
        assert_eq!(contrast(1.0, 0.0), Some(1.0));
        assert_eq!(ContrastEstimate::exact(3.0, 1.0).contrast, Some(0.5));
    }

    #[test]
    fn delta_method_matches_numeric_gradient() {
        let mut hi = Moments::default();
        let mut lo = Moments::default();
        for i in 0..100 {
            hi.push(2.0 + (i % 3) as f64);
            lo.push(1.0 + (i % 2) as f64);
        }
        let est = ContrastEstimate::from_moments(&hi, &lo);
        let (a, b) = (est.i_max, est.i_min);
        let h = 1e-6;
        let da = (contrast(a + h, b).unwrap() - contrast(a - h, b).unwrap()) / (2.0 * h);
        let db = (contrast(a, b + h).unwrap() - contrast(a, b - h).unwrap()) / (2.0 * h);
        let expect = ((da * hi.sem().unwrap()).powi(2) + (db * lo.sem().unwrap()).powi(2)).sqrt();
        assert!((est.standard_error.unwrap() - expect).abs() < 1e-8);
    }

    #[test]
    fn pearson_signs() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&x, &[1.0, 1.0, 1.0]), None);
    }
}
