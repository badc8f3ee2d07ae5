//! Service laws smoothed by the kernel: `H̄*(s) = ∫ Φ̄(s − s′) dH(s′)` and its
//! density `h*`, tabulated on a uniform grid.

use rayon::prelude::*;
use serde::Serialize;

use super::kernel::{phi, phi_ccdf, Kernel};
use super::LyapunovError;
use crate::distributions::DistributionSpec;
use crate::quad;

pub const QUADRATURE_TOLERANCE: f64 = 1e-10;

/// Tabulated `H̄*` and `h*` for one route on `s_i = i · step`, `0 ≤ s_i ≤ s_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvolvedService {
    #[serde(skip)]
    pub service: DistributionSpec,
    pub b: u32,
    pub step: f64,
    pub s_max: f64,
    #[serde(skip)]
    pub tail: Vec<f64>,
    #[serde(skip)]
    pub density: Vec<f64>,
    /// `(H̄*)^{-1}(1/N⁴) ∧ N`.
    pub n_h: f64,
    /// `1/Γ(H̄*(N_H))`; filled in once Γ is fixed.
    pub kappa: f64,
    pub max_quadrature_error: f64,
}

/// Grid step: `1/(4b³)`, so the `1/b³` grid used by the event sets is a subgrid.
pub fn grid_step(b: u32) -> f64 {
    1.0 / (4.0 * f64::from(b).powi(3))
}

/// `H̄*(s)` by direct quadrature (no table).
pub fn smoothed_tail(service: &DistributionSpec, b: u32, s: f64) -> Result<(f64, f64), LyapunovError> {
    if s <= 0.0 {
        return Ok((1.0, 0.0));
    }
    if let DistributionSpec::Deterministic { value } = service {
        return Ok((phi_ccdf(b, s - value), 0.0));
    }
    // H̄*(s) = ∫_0^s φ(k) H̄(s−k) dk + Φ̄(s)
    let mut breaks = vec![1.0 / f64::from(b)];
    breaks.extend(service.breakpoints().into_iter().map(|x| s - x));
    let q = quad::integrate(|k| phi(b, k) * service.ccdf(s - k), 0.0, s, &breaks, QUADRATURE_TOLERANCE);
    if !q.converged {
        return Err(LyapunovError::QuadratureFailure { s, error: q.error });
    }
    Ok(((q.value + phi_ccdf(b, s)).clamp(0.0, 1.0), q.error))
}

/// `h*(s)` by direct quadrature. Uses `h*(s) = ∫_0^s φ′(k) H(s−k) dk`, which
/// needs only the distribution function.
pub fn smoothed_density(service: &DistributionSpec, b: u32, s: f64) -> Result<(f64, f64), LyapunovError> {
    if s <= 0.0 {
        return Ok((0.0, 0.0));
    }
    if let DistributionSpec::Deterministic { value } = service {
        return Ok((phi(b, s - value), 0.0));
    }
    let kernel = Kernel::new(b);
    let mut breaks = vec![kernel.knee()];
    breaks.extend(service.breakpoints().into_iter().map(|x| s - x));
    let q = quad::integrate(
        |k| kernel.derivative(k) * (1.0 - service.ccdf(s - k)),
        0.0,
        s,
        &breaks,
        QUADRATURE_TOLERANCE,
    );
    if !q.converged {
        return Err(LyapunovError::QuadratureFailure { s, error: q.error });
    }
    Ok((q.value.max(0.0), q.error))
}

/// Tabulates the smoothed law on `[0, s_max]` and locates `N_H`.
pub fn convolve_service(service: &DistributionSpec, b: u32, n: u32, s_max: f64) -> Result<ConvolvedService, LyapunovError> {
    let step = grid_step(b);
    let count = (s_max / step).ceil() as usize;
    let rows: Vec<Result<(f64, f64, f64), LyapunovError>> = (0..=count)
        .into_par_iter()
        .map(|i| {
            let s = i as f64 * step;
            let (t, e1) = smoothed_tail(service, b, s)?;
            let (d, e2) = smoothed_density(service, b, s)?;
            Ok((t, d, e1.max(e2)))
        })
        .collect();
    let mut tail = Vec::with_capacity(count + 1);
    let mut density = Vec::with_capacity(count + 1);
    let mut max_err: f64 = 0.0;
    for row in rows {
        let (t, d, e) = row?;
        // enforce monotonicity against quadrature noise
        let t = match tail.last() {
            Some(&prev) if t > prev => prev,
            _ => t,
        };
        tail.push(t);
        density.push(d);
        max_err = max_err.max(e);
    }
    let mut conv = ConvolvedService {
        service: service.clone(),
        b,
        step,
        s_max: count as f64 * step,
        tail,
        density,
        n_h: 0.0,
        kappa: f64::NAN,
        max_quadrature_error: max_err,
    };
    conv.n_h = conv.truncation_point(n);
    Ok(conv)
}

impl ConvolvedService {
    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.tail.len()).map(move |i| i as f64 * self.step)
    }

    fn interpolate(&self, table: &[f64], s: f64) -> f64 {
        let x = s / self.step;
        let i = x.floor() as usize;
        if i + 1 >= table.len() {
            return *table.last().expect("nonempty table");
        }
        let frac = x - i as f64;
        table[i] + frac * (table[i + 1] - table[i])
    }

    /// `H̄*(s)`, linear between grid points; direct quadrature past the table.
    pub fn tail_at(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 1.0;
        }
        if s > self.s_max {
            return smoothed_tail(&self.service, self.b, s).map(|v| v.0).unwrap_or(0.0);
        }
        self.interpolate(&self.tail, s)
    }

    pub fn density_at(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s > self.s_max {
            return smoothed_density(&self.service, self.b, s).map(|v| v.0).unwrap_or(0.0);
        }
        self.interpolate(&self.density, s)
    }

    /// Generalized inverse of `H̄*` at `1/N⁴`, capped at `N`.
    pub fn truncation_point(&self, n: u32) -> f64 {
        let nf = f64::from(n);
        let threshold = nf.powi(-4);
        if self.tail_at(nf) > threshold {
            return nf;
        }
        // first index with tail ≤ threshold
        let idx = self.tail.partition_point(|&t| t > threshold);
        if idx == 0 {
            return 0.0;
        }
        let (hi, lo) = (self.tail[idx - 1], self.tail[idx]);
        let s0 = (idx - 1) as f64 * self.step;
        let frac = if hi > lo { (hi - threshold) / (hi - lo) } else { 1.0 };
        (s0 + frac * self.step).min(nf)
    }
}
