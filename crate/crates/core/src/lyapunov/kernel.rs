//! The smoothing kernel φ_b and its distribution function Φ_b.
//!
//! φ rises linearly on `(0, 1/b]` to `(2/3) b` and decays as
//! `(2/3) e b e^{−bs}` afterwards; it vanishes on `(−∞, 0]`.

use rand::Rng;
use serde::Serialize;

use super::LyapunovError;
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kernel {
    pub b: u32,
}

impl Kernel {
    pub fn new(b: u32) -> Self {
        assert!(b >= 2, "kernel rate b must be at least 2");
        Kernel { b }
    }

    fn rate(&self) -> f64 {
        f64::from(self.b)
    }

    /// The kink, `1/b`.
    pub fn knee(&self) -> f64 {
        1.0 / self.rate()
    }

    pub fn density(&self, s: f64) -> f64 {
        phi(self.b, s)
    }

    pub fn cdf(&self, s: f64) -> f64 {
        phi_cdf(self.b, s)
    }

    pub fn ccdf(&self, s: f64) -> f64 {
        phi_ccdf(self.b, s)
    }

    /// φ′(s), taking the left derivative at the kink.
    pub fn derivative(&self, s: f64) -> f64 {
        let b = self.rate();
        if s <= 0.0 {
            0.0
        } else if s <= 1.0 / b {
            2.0 / 3.0 * b * b
        } else {
            -b * self.density(s)
        }
    }

    pub fn mean(&self) -> f64 {
        14.0 / (9.0 * self.rate())
    }

    /// `∫_lo^hi p(s) φ(s − shift) ds` for the quadratic `p(s) = c₀ + c₁s + c₂s²`;
    /// `hi` may be `+∞`.
    pub fn poly_integral(&self, lo: f64, hi: f64, shift: f64, coeffs: [f64; 3]) -> f64 {
        let [c0, c1, c2] = coeffs;
        // re-expand around the kernel origin: p(k + shift) = d0 + d1 k + d2 k²
        let d0 = c0 + c1 * shift + c2 * shift * shift;
        let d1 = c1 + 2.0 * c2 * shift;
        let d2 = c2;
        let (klo, khi) = ((lo - shift).max(0.0), hi - shift);
        if !(khi > klo) {
            return 0.0;
        }
        let b = self.rate();
        let knee = 1.0 / b;
        let mut total = 0.0;
        // linear branch: (2/3) b² k · q(k)
        let (a1, b1) = (klo, khi.min(knee));
        if b1 > a1 {
            let prim = |k: f64| d0 * k * k / 2.0 + d1 * k.powi(3) / 3.0 + d2 * k.powi(4) / 4.0;
            total += 2.0 / 3.0 * b * b * (prim(b1) - prim(a1));
        }
        // exponential branch: (2/3) e b e^{−bk} · q(k)
        let (a2, b2) = (klo.max(knee), khi);
        if b2 > a2 {
            // −e^{−bk} (d0/b + d1 (k/b + 1/b²) + d2 (k²/b + 2k/b² + 2/b³)), scaled by e
            let prim = |k: f64| {
                if k.is_infinite() {
                    return 0.0;
                }
                let poly = d0 / b + d1 * (k / b + 1.0 / (b * b)) + d2 * (k * k / b + 2.0 * k / (b * b) + 2.0 / (b * b * b));
                -(1.0 - b * k).exp() * poly
            };
            total += 2.0 / 3.0 * b * (prim(b2) - prim(a2));
        }
        total
    }
}

pub fn phi(b: u32, s: f64) -> f64 {
    let b = f64::from(b);
    if s <= 0.0 {
        0.0
    } else if s <= 1.0 / b {
        2.0 / 3.0 * b * b * s
    } else {
        2.0 / 3.0 * b * (1.0 - b * s).exp()
    }
}

pub fn phi_cdf(b: u32, s: f64) -> f64 {
    let bf = f64::from(b);
    if s <= 0.0 {
        0.0
    } else if s <= 1.0 / bf {
        bf * bf * s * s / 3.0
    } else {
        1.0 - phi_ccdf(b, s)
    }
}

/// `Φ̄(s) = 1 − Φ(s)`, computed without cancellation on the tail.
pub fn phi_ccdf(b: u32, s: f64) -> f64 {
    let bf = f64::from(b);
    if s <= 0.0 {
        1.0
    } else if s <= 1.0 / bf {
        1.0 - bf * bf * s * s / 3.0
    } else {
        2.0 / 3.0 * (1.0 - bf * s).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelReport {
    pub b: u32,
    pub mass: f64,
    pub mean: f64,
    pub expected_mean: f64,
    pub max_derivative: f64,
    pub min_ratio_slack: f64,
    pub points: usize,
}

pub const KERNEL_TOLERANCE: f64 = 1e-8;

/// Numerical checks of the kernel: unit mass, mean `14/(9b)`, `φ′ ≤ b²`
/// and `φ(s + s′)/φ(s) ≥ e^{−bs′}` on random points.
pub fn kernel_checks<R: Rng + ?Sized>(b: u32, points: usize, rng: &mut R) -> Result<KernelReport, LyapunovError> {
    kernel_checks_for(b, |s| phi(b, s), points, rng)
}

/// [`kernel_checks`] against an arbitrary candidate density.
pub fn kernel_checks_for<F, R>(b: u32, density: F, points: usize, rng: &mut R) -> Result<KernelReport, LyapunovError>
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    let bf = f64::from(b);
    let knee = 1.0 / bf;
    let fail = |check: &'static str, location: f64| LyapunovError::CheckFailed { check, location };

    let tol = 1e-13;
    let mass = quad::integrate(&density, 0.0, knee, &[], tol).value
        + quad::integrate_to_infinity(&density, knee, tol).value;
    if (mass - 1.0).abs() > KERNEL_TOLERANCE {
        return Err(fail("mass", mass));
    }
    let first = |s: f64| s * density(s);
    let mean = quad::integrate(first, 0.0, knee, &[], tol).value
        + quad::integrate_to_infinity(first, knee, tol).value;
    let expected_mean = 14.0 / (9.0 * bf);
    if (mean - expected_mean).abs() > KERNEL_TOLERANCE {
        return Err(fail("mean", mean));
    }

    let span = 12.0 / bf;
    let mut max_derivative = f64::NEG_INFINITY;
    for _ in 0..points {
        let s = rng.random::<f64>() * span + 1e-9;
        let h = 1e-7 * knee;
        let d = (density(s + h) - density((s - h).max(0.0))) / (s + h - (s - h).max(0.0));
        max_derivative = max_derivative.max(d);
        if d > bf * bf * (1.0 + 1e-6) {
            return Err(fail("derivative", s));
        }
    }

    let mut min_ratio_slack = f64::INFINITY;
    for _ in 0..points {
        let s = rng.random::<f64>() * span + 1e-9;
        let shift = rng.random::<f64>() * span;
        let ratio = density(s + shift) / density(s);
        let bound = (-bf * shift).exp();
        let slack = ratio / bound - 1.0;
        min_ratio_slack = min_ratio_slack.min(slack);
        if slack < -1e-12 {
            return Err(fail("ratio", s));
        }
    }
    Ok(KernelReport {
        b,
        mass,
        mean,
        expected_mean,
        max_derivative,
        min_ratio_slack,
        points,
    })
}
