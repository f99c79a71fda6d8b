//! Shapiro-Wilk normality test, Royston's AS R94 approximation.
//!
//! Supports uncensored samples of 3 to 5000 values. Weights follow Royston
//! (1995): expected normal order statistics m_i = qnorm((i - 0.375)/(n + 0.25))
//! normalized by sqrt(m'm), with polynomial corrections to the two outermost
//! weights. The p-value uses the n <= 11 and n >= 12 transformation branches
//! from the same paper. Normal quantile and tail come from statrs.

use crate::error::{Error, Result};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

/// Outcome of the test: `w` in (0, 1], `p_value` in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapiroWilk {
    pub w: f64,
    pub p_value: f64,
}

pub const MIN_SAMPLES: usize = 3;
pub const MAX_SAMPLES: usize = 5000;

// Royston's polynomial constants, ascending powers.
const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -0.0006714];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Upper tail of the standard normal, stable far into the tail.
fn norm_upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// First-half weight vector a_1..a_{n/2}; the full weights are antisymmetric
/// around the middle with these on the upper half.
fn half_weights(n: usize) -> Vec<f64> {
    let n2 = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let an25 = n as f64 + 0.25;
    let mut m = Vec::with_capacity(n2);
    let mut summ2 = 0.0;
    for i in 0..n2 {
        let q = normal.inverse_cdf((i as f64 + 1.0 - 0.375) / an25);
        m.push(q);
        summ2 += q * q;
    }
    summ2 *= 2.0;
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / (n as f64).sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;
    let mut a = vec![0.0; n2];
    a[0] = a1;
    if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        a[1] = a2;
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        for i in 2..n2 {
            a[i] = -m[i] / fac;
        }
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        for i in 1..n2 {
            a[i] = -m[i] / fac;
        }
    }
    a
}

/// Runs the test on an uncensored sample of 3 to 5000 finite values.
///
/// Errors on out-of-range n, non-finite values, and constant samples.
pub fn shapiro_wilk(samples: &[f64]) -> Result<ShapiroWilk> {
    let n = samples.len();
    if !(MIN_SAMPLES..=MAX_SAMPLES).contains(&n) {
        return Err(Error::SampleSize {
            n,
            min: MIN_SAMPLES,
            max: MAX_SAMPLES,
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("sample contains non-finite values"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let range = xs[n - 1] - xs[0];
    if range < 1e-19 {
        return Err(Error::ConstantSample);
    }

    let a = half_weights(n);
    let n2 = n / 2;
    // scale by the range to tame extreme magnitudes, as in AS R94
    let mean_r = xs.iter().map(|x| x / range).sum::<f64>() / n as f64;
    let mut ssa = 0.0;
    let mut ssx = 0.0;
    let mut sax = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        // antisymmetric full weight: -a[i] low half, +a[n-1-i] high half, 0 middle
        let weight = if i < n2 {
            -a[i]
        } else if i >= n - n2 {
            a[n - 1 - i]
        } else {
            0.0
        };
        let xsx = x / range - mean_r;
        ssa += weight * weight;
        ssx += xsx * xsx;
        sax += weight * xsx;
    }
    let ssassx = (ssa * ssx).sqrt();
    // 1 - W computed as a stable product to avoid cancellation near W = 1
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = (1.0 - w1).min(1.0);

    if n == 3 {
        if w < 0.75 {
            return Ok(ShapiroWilk {
                w: 0.75,
                p_value: 0.0,
            });
        }
        let pi6 = 6.0 / std::f64::consts::PI;
        let p = (1.0 - pi6 * w.sqrt().acos()).clamp(0.0, 1.0);
        return Ok(ShapiroWilk { w, p_value: p });
    }

    let an = n as f64;
    let y = w1.ln();
    let p_value = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            1e-19
        } else {
            let yt = -(gamma - y).ln();
            let mu = poly(&C3, an);
            let sigma = poly(&C4, an).exp();
            norm_upper_tail((yt - mu) / sigma)
        }
    } else {
        let lx = an.ln();
        let mu = poly(&C5, lx);
        let sigma = poly(&C6, lx).exp();
        norm_upper_tail((y - mu) / sigma)
    };
    Ok(ShapiroWilk {
        w,
        p_value: p_value.clamp(0.0, 1.0),
    })
}
