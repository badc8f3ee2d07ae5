//! Norm parameters, the normalizer Γ and the growth function θ.

use serde::{Deserialize, Serialize};

use super::LyapunovError;
use crate::model::{check_subcritical, NetworkTopology, TrafficSpec};

/// A parameter that is either given or derived from the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Setting {
    Value(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl Setting {
    pub const AUTO: Setting = Setting::Auto(AutoTag::Auto);

    pub fn value(self) -> Option<f64> {
        match self {
            Setting::Value(v) => Some(v),
            Setting::Auto(_) => None,
        }
    }
}

impl Default for Setting {
    fn default() -> Self {
        Setting::AUTO
    }
}

/// User-facing norm configuration; `c2` and `epsilon7` may be left to be
/// derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    pub a: f64,
    pub b: u32,
    pub gamma: f64,
    pub delta1: f64,
    #[serde(default)]
    pub c2: Setting,
    #[serde(default = "default_c3")]
    pub c3: f64,
    pub n: u32,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub epsilon7: Setting,
}

fn default_c3() -> f64 {
    1.0
}

fn default_beta() -> f64 {
    0.5
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            a: 0.25,
            b: 2,
            gamma: 1.0 / 24.0,
            delta1: 1.0,
            c2: Setting::AUTO,
            c3: 1.0,
            n: 4,
            beta: 0.5,
            epsilon7: Setting::AUTO,
        }
    }
}

/// Fully resolved parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    pub a: f64,
    pub b: u32,
    pub gamma: f64,
    pub delta1: f64,
    pub c2: f64,
    pub c3: f64,
    pub n: u32,
    pub beta: f64,
    pub epsilon7: f64,
}

impl LyapunovParams {
    pub fn n_f64(&self) -> f64 {
        f64::from(self.n)
    }

    /// Γ(σ) = σ + C₂ a σ^γ.
    pub fn gamma_fn(&self, sigma: f64) -> f64 {
        sigma + self.c2 * self.a * sigma.powf(self.gamma)
    }

    pub fn gamma_derivative(&self, sigma: f64) -> f64 {
        1.0 + self.c2 * self.a * self.gamma * sigma.powf(self.gamma - 1.0)
    }

    pub fn theta(&self) -> Theta {
        Theta::new(self.beta)
    }
}

/// Largest ε₇ ≤ 1 with `(1+ε₇)² Σ_r A[l][r] ρ_r ≤ c_l`, shaved by 1e-9 relative.
pub fn auto_epsilon7(topology: &NetworkTopology, rho: &[f64]) -> Result<f64, LyapunovError> {
    let report = check_subcritical(topology, rho).map_err(|e| LyapunovError::Invalid(e.to_string()))?;
    if !report.subcritical {
        return Err(LyapunovError::Supercritical(report.slack));
    }
    let load = topology.link_loads(rho).map_err(|e| LyapunovError::Invalid(e.to_string()))?;
    let eps = load
        .iter()
        .zip(&topology.capacity)
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, c)| (c / x).sqrt() - 1.0)
        .fold(1.0_f64, f64::min);
    Ok(eps * (1.0 - 1e-9))
}

impl LyapunovConfig {
    /// Hard parameter constraints; `c2` is checked for positivity only.
    pub fn validate(&self, topology: &NetworkTopology, traffic: &TrafficSpec) -> Result<(), LyapunovError> {
        let bad = |m: String| Err(LyapunovError::Invalid(m));
        if self.b < 2 {
            return bad(format!("b = {} must be an integer >= 2", self.b));
        }
        if !(self.a > 0.0 && self.a <= 1.0) {
            return bad(format!("a = {} must lie in (0, 1]", self.a));
        }
        if !(self.delta1 > 0.0 && self.delta1 <= 1.0) {
            return bad(format!("delta1 = {} must lie in (0, 1]", self.delta1));
        }
        if !(self.gamma > 0.0 && self.gamma <= self.delta1 / 24.0 * (1.0 + 1e-12)) {
            return bad(format!("gamma = {} must lie in (0, delta1/24]", self.gamma));
        }
        if self.n < 1 || f64::from(self.n) * self.a < 1.0 {
            return bad(format!("N = {} must satisfy N * a >= 1 (a = {})", self.n, self.a));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta = {} must lie in (0, 1]", self.beta));
        }
        if !(self.c3 > 0.0 && self.c3.is_finite()) {
            return bad(format!("C3 = {} must be positive", self.c3));
        }
        if let Some(c2) = self.c2.value() {
            if !(c2 > 0.0 && c2.is_finite()) {
                return bad(format!("C2 = {c2} must be positive"));
            }
        }
        for (r, t) in traffic.routes.iter().enumerate() {
            if !t.service.check_moment_condition(self.delta1) {
                return Err(LyapunovError::MomentCondition {
                    route: r,
                    order: 2.0 + self.delta1,
                });
            }
            if !t.interarrival.moment(1.0 + self.beta).is_finite() {
                return Err(LyapunovError::MomentViolation {
                    route: r,
                    order: 1.0 + self.beta,
                });
            }
        }
        let rho = traffic.traffic_intensity();
        match self.epsilon7.value() {
            Some(eps) => {
                if !(eps > 0.0 && eps <= 1.0) {
                    return bad(format!("epsilon7 = {eps} must lie in (0, 1]"));
                }
                let load = topology.link_loads(&rho).map_err(|e| LyapunovError::Invalid(e.to_string()))?;
                for (l, (x, c)) in load.iter().zip(&topology.capacity).enumerate() {
                    if (1.0 + eps).powi(2) * x > *c {
                        return bad(format!("(1 + epsilon7)^2 * load exceeds capacity on link {l}"));
                    }
                }
            }
            None => {
                auto_epsilon7(topology, &rho)?;
            }
        }
        Ok(())
    }
}

/// θ(y) = ∫₀^y min(2t, (1+β) t^β) dt: quadratic up to
/// `y* = ((1+β)/2)^{1/(1−β)}`, then growing like `y^{1+β}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theta {
    pub beta: f64,
    pub knee: f64,
}

impl Theta {
    pub fn new(beta: f64) -> Self {
        let knee = if beta >= 1.0 {
            f64::INFINITY
        } else {
            ((1.0 + beta) / 2.0).powf(1.0 / (1.0 - beta))
        };
        Theta { beta, knee }
    }

    pub fn value(&self, y: f64) -> f64 {
        if y <= 0.0 {
            0.0
        } else if y <= self.knee {
            y * y
        } else {
            self.knee * self.knee + y.powf(1.0 + self.beta) - self.knee.powf(1.0 + self.beta)
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        if y <= 0.0 {
            0.0
        } else if y <= self.knee {
            2.0 * y
        } else {
            (1.0 + self.beta) * y.powf(self.beta)
        }
    }

    /// Smallest `y` with `θ′(y) ≥ target`.
    pub fn derivative_inverse(&self, target: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        let quadratic = target / 2.0;
        if quadratic <= self.knee {
            quadratic
        } else {
            (target / (1.0 + self.beta)).powf(1.0 / self.beta)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_endpoints_and_value() {
        let p = LyapunovParams {
            a: 0.1,
            b: 2,
            gamma: 0.05,
            delta1: 1.0,
            c2: 4.0,
            c3: 1.0,
            n: 10,
            beta: 0.5,
            epsilon7: 0.1,
        };
        assert_eq!(p.gamma_fn(0.0), 0.0);
        assert!((p.gamma_fn(1.0) - 1.4).abs() < 1e-15);
        // 0.5 + 0.4 * 0.5^0.05
        assert!((p.gamma_fn(0.5) - 0.886_374_531_569_938_3).abs() < 1e-12);
    }

    #[test]
    fn theta_closed_form() {
        let t = Theta::new(0.5);
        assert_eq!(t.knee, 0.5625);
        assert_eq!(t.value(0.0), 0.0);
        assert!((t.value(1.0) - 0.894_531_25).abs() < 1e-15);
        assert!((t.value(4.0) - 7.894_531_25).abs() < 1e-14);
    }

    #[test]
    fn theta_below_square_and_continuous() {
        for beta in [0.1, 0.5, 0.9, 1.0] {
            let t = Theta::new(beta);
            for i in 1..2000 {
                let y = i as f64 * 0.01;
                assert!(t.value(y) <= y * y * (1.0 + 1e-14));
                assert!(t.derivative(y + 0.01) >= t.derivative(y));
            }
            if t.knee.is_finite() {
                let k = t.knee;
                assert!((t.value(k * (1.0 + 1e-12)) - k * k).abs() < 1e-9);
                assert!((t.derivative(k) - (1.0 + beta) * k.powf(beta)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_inverse_round_trips() {
        let t = Theta::new(0.5);
        for target in [0.5, 1.0, 1.5, 10.0, 1e4] {
            let y = t.derivative_inverse(target);
            assert!((t.derivative(y) - target).abs() < 1e-9 * target);
        }
    }

    #[test]
    fn setting_serde() {
        let s: Setting = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(s, Setting::AUTO);
        let s: Setting = serde_json::from_str("2.5").unwrap();
        assert_eq!(s, Setting::Value(2.5));
    }
}
