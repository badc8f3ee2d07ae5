//! State norms built from the kernel-smoothed document profile
//! `z*_r(s) = Σ_documents φ(s − residual)`.

use serde::Serialize;

use super::constants::fit_tail_constant;
use super::convolve::{convolve_service, ConvolvedService};
use super::kernel::{phi, phi_ccdf, phi_cdf, Kernel};
use super::params::{auto_epsilon7, LyapunovConfig, LyapunovParams, Setting};
use super::LyapunovError;
use crate::model::{MarkovState, NetworkTopology, TrafficSpec};

/// Relative tolerance of the golden-section refinement of the sup in `|x|_L`.
pub const SUP_REFINE_TOLERANCE: f64 = 1e-6;

const INV_GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Everything the norms need: resolved parameters, per-route tabulations
/// with their κ, and route weights and rates. Immutable once built.
#[derive(Debug, Clone, Serialize)]
pub struct NormContext {
    pub params: LyapunovParams,
    pub routes: Vec<ConvolvedService>,
    pub weight: Vec<f64>,
    pub arrival_rate: Vec<f64>,
    pub intensity: Vec<f64>,
    pub mean_service: Vec<f64>,
    /// Tail constant fitted per route on the tabulation grid.
    pub c1_per_route: Vec<f64>,
    pub c1: f64,
    pub m1: f64,
    pub kappa_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormBreakdown {
    pub norm_l: f64,
    /// `(route, s)` attaining `|x|_L`; `None` for the empty state.
    pub argmax: Option<(usize, f64)>,
    pub norm_r: f64,
    pub norm_a: f64,
    /// `|x|_L + |x|_R + |x|_A`.
    pub total: f64,
    pub norm_k: f64,
    pub norm_s: f64,
    pub norm_1: f64,
    pub norm_2: f64,
    pub count: usize,
    pub m1: f64,
    pub kappa_n: f64,
}

impl NormContext {
    /// Tabulates every route, fits the tail constant, resolves `C₂` and `ε₇`
    /// when left on auto, and fills in κ and `M₁`.
    pub fn build(topology: &NetworkTopology, traffic: &TrafficSpec, config: &LyapunovConfig) -> Result<Self, LyapunovError> {
        config.validate(topology, traffic)?;
        let rho = traffic.traffic_intensity();
        let epsilon7 = match config.epsilon7 {
            Setting::Value(v) => v,
            Setting::Auto(_) => auto_epsilon7(topology, &rho)?,
        };
        let s_max = f64::from(config.n) + 2.0;
        let routes = traffic
            .routes
            .iter()
            .map(|t| convolve_service(&t.service, config.b, config.n, s_max))
            .collect::<Result<Vec<_>, _>>()?;
        let c1_per_route: Vec<f64> = routes.iter().map(|c| fit_tail_constant(c, config.delta1)).collect();
        let c1 = c1_per_route.iter().copied().fold(1.0, f64::max);
        let c2 = match config.c2 {
            Setting::Value(v) => v,
            Setting::Auto(_) => c2_lower_bound(c1, config.gamma),
        };
        let params = LyapunovParams {
            a: config.a,
            b: config.b,
            gamma: config.gamma,
            delta1: config.delta1,
            c2,
            c3: config.c3,
            n: config.n,
            beta: config.beta,
            epsilon7,
        };
        Ok(Self::from_parts(
            params,
            routes,
            topology.weight.clone(),
            traffic.arrival_rates(),
            traffic.mean_services(),
            c1_per_route,
        ))
    }

    /// Assembles a context from already tabulated routes.
    pub fn from_parts(
        params: LyapunovParams,
        mut routes: Vec<ConvolvedService>,
        weight: Vec<f64>,
        arrival_rate: Vec<f64>,
        mean_service: Vec<f64>,
        c1_per_route: Vec<f64>,
    ) -> Self {
        for conv in routes.iter_mut() {
            conv.kappa = 1.0 / params.gamma_fn(conv.tail_at(conv.n_h));
        }
        let kappa_n = routes.iter().map(|c| c.kappa).fold(0.0, f64::max);
        let w_max = weight.iter().copied().fold(0.0, f64::max);
        let w_min = weight.iter().copied().fold(f64::INFINITY, f64::min);
        let m1 = 8.0 * params.c3 * w_max / w_min;
        let intensity = arrival_rate.iter().zip(&mean_service).map(|(n, m)| n * m).collect();
        let c1 = c1_per_route.iter().copied().fold(1.0, f64::max);
        NormContext {
            params,
            routes,
            weight,
            arrival_rate,
            intensity,
            mean_service,
            c1_per_route,
            c1,
            m1,
            kappa_n,
        }
    }

    pub fn num_routes(&self) -> usize {
        self.routes.len()
    }

    fn covers(&self, state: &MarkovState) -> Result<(), LyapunovError> {
        if state.num_routes() > self.routes.len() {
            return Err(LyapunovError::UncoveredRoute(self.routes.len()));
        }
        Ok(())
    }

    /// `z*(s)` for one route's residuals.
    pub fn z_star(&self, residuals: &[f64], s: f64) -> f64 {
        residuals.iter().map(|&x| phi(self.params.b, s - x)).sum()
    }

    /// `|x|_{r,s}`.
    pub fn route_norm(&self, route: usize, residuals: &[f64], s: f64) -> f64 {
        let conv = &self.routes[route];
        let s_n = s.min(conv.n_h + 1.0);
        let p = &self.params;
        self.weight[route] * (1.0 + p.a * s_n) * self.z_star(residuals, s)
            / (self.arrival_rate[route] * p.gamma_fn(conv.tail_at(s_n)))
    }

    /// `|x|_L = sup_{r,s} |x|_{r,s}` with its argmax.
    pub fn norm_l(&self, state: &MarkovState) -> Result<(f64, Option<(usize, f64)>), LyapunovError> {
        self.covers(state)?;
        let mut best = (0.0, None);
        for (r, res) in state.residuals.iter().enumerate() {
            if res.is_empty() {
                continue;
            }
            let (v, s) = self.route_sup(r, res);
            if best.1.is_none() || v > best.0 {
                best = (v, Some((r, s)));
            }
        }
        Ok(best)
    }

    fn route_sup(&self, r: usize, res: &[f64]) -> (f64, f64) {
        let b = f64::from(self.params.b);
        let step = self.routes[r].step;
        let max_res = res.iter().copied().fold(0.0, f64::max);
        let end = max_res + 1.0 / b + 1.0;
        let mut points: Vec<f64> = (1..=(end / step).ceil() as usize).map(|k| k as f64 * step).collect();
        for &x in res {
            points.push(x);
            points.push(x + 1.0 / b);
        }
        points.push(self.routes[r].n_h + 1.0);
        points.retain(|&s| s > 0.0);
        points.sort_by(f64::total_cmp);
        points.dedup();
        let f = |s: f64| self.route_norm(r, res, s);
        let (mut idx, mut val) = (0, f64::NEG_INFINITY);
        for (i, &s) in points.iter().enumerate() {
            let v = f(s);
            if v > val {
                idx = i;
                val = v;
            }
        }
        let s0 = points[idx];
        let lo = if idx > 0 { points[idx - 1] } else { 0.0 };
        let hi = points.get(idx + 1).copied().unwrap_or(s0 + step);
        let (s1, v1) = golden_max(f, lo, hi);
        if v1 > val {
            (v1, s1)
        } else {
            (val, s0)
        }
    }

    /// `|x|_R = M₁ Σ_r κ_r ∫_{N_H}^∞ N_r(s) z*_r(s) ds`, in closed form.
    pub fn norm_r(&self, state: &MarkovState) -> Result<f64, LyapunovError> {
        self.covers(state)?;
        let kernel = Kernel::new(self.params.b);
        let n = self.params.n_f64();
        let mut total = 0.0;
        for (r, res) in state.residuals.iter().enumerate() {
            let conv = &self.routes[r];
            let lo = conv.n_h;
            let route: f64 = res
                .iter()
                .map(|&x| {
                    // N_r(s) = s up to N, s²/N beyond
                    kernel.poly_integral(lo, n.max(lo), x, [0.0, 1.0, 0.0])
                        + kernel.poly_integral(n.max(lo), f64::INFINITY, x, [0.0, 0.0, 1.0 / n])
                })
                .sum();
            total += conv.kappa * route;
        }
        Ok(self.m1 * total)
    }

    /// `|x|_A = max_r θ(u_r) / N`.
    pub fn norm_a(&self, state: &MarkovState) -> f64 {
        let theta = self.params.theta();
        state.interarrival.iter().map(|&u| theta.value(u)).fold(0.0, f64::max) / self.params.n_f64()
    }

    /// Kernel mass of route `r` above `N_H`, `z*_r((N_H, ∞))`.
    pub fn upper_mass(&self, r: usize, residuals: &[f64]) -> f64 {
        let n_h = self.routes[r].n_h;
        residuals.iter().map(|&x| phi_ccdf(self.params.b, n_h - x)).sum()
    }

    pub fn lower_mass(&self, r: usize, residuals: &[f64]) -> f64 {
        let n_h = self.routes[r].n_h;
        residuals.iter().map(|&x| phi_cdf(self.params.b, n_h - x)).sum()
    }

    pub fn norm_all(&self, state: &MarkovState) -> Result<NormBreakdown, LyapunovError> {
        let (norm_l, argmax) = self.norm_l(state)?;
        let norm_r = self.norm_r(state)?;
        let norm_a = self.norm_a(state);
        let (mut norm_k, mut norm_1, mut norm_2, mut extra) = (0.0, 0.0, 0.0, 0.0_f64);
        for (r, res) in state.residuals.iter().enumerate() {
            let upper = self.upper_mass(r, res);
            norm_k += self.routes[r].kappa * upper;
            norm_1 += self.lower_mass(r, res);
            norm_2 += upper;
            extra = extra.max(self.weight[r] / self.intensity[r] * upper);
        }
        Ok(NormBreakdown {
            norm_l,
            argmax,
            norm_r,
            norm_a,
            total: norm_l + norm_r + norm_a,
            norm_k,
            norm_s: norm_l + extra,
            norm_1,
            norm_2,
            count: state.count(),
            m1: self.m1,
            kappa_n: self.kappa_n,
        })
    }
}

/// `max(2C₁/γ, C₁^{(1−γ)/γ})`.
pub fn c2_lower_bound(c1: f64, gamma: f64) -> f64 {
    (2.0 * c1 / gamma).max(c1.powf((1.0 - gamma) / gamma))
}

/// Golden-section search for a maximum of `f` on `[lo, hi]`.
fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let mut x1 = hi - INV_GOLDEN * (hi - lo);
    let mut x2 = lo + INV_GOLDEN * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > SUP_REFINE_TOLERANCE * hi.abs().max(1.0) {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_GOLDEN * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_GOLDEN * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}
