//! Interarrival and service-time laws: sampling, analytic moments, tails.

use rand::Rng;
use rand_distr::{Distribution, Exp, Pareto, Weibull};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("unknown distribution family `{0}`")]
    UnknownFamily(String),
    #[error("family `{family}` requires parameter `{param}`")]
    MissingParameter { family: &'static str, param: &'static str },
    #[error("family `{family}` does not take parameter `{param}`")]
    UnexpectedParameter { family: &'static str, param: &'static str },
    #[error("invalid parameters: {0}")]
    InvalidParameter(String),
}

/// A distribution family with its parameters, in natural units.
///
/// Pareto has support `[scale, ∞)`; Uniform has support `(low, high]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub enum DistributionSpec {
    Exponential { mean: f64 },
    Deterministic { value: f64 },
    Uniform { low: f64, high: f64 },
    Pareto { shape: f64, scale: f64 },
    Hyperexponential { probabilities: Vec<f64>, means: Vec<f64> },
    Weibull { shape: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SpreadOutReport {
    /// Support reaches arbitrarily large values.
    pub unbounded_support: bool,
    /// Some finite convolution power is not singular w.r.t. Lebesgue measure.
    pub convolution_nonsingular: bool,
}

impl DistributionSpec {
    pub fn family(&self) -> &'static str {
        match self {
            DistributionSpec::Exponential { .. } => "exponential",
            DistributionSpec::Deterministic { .. } => "deterministic",
            DistributionSpec::Uniform { .. } => "uniform",
            DistributionSpec::Pareto { .. } => "pareto",
            DistributionSpec::Hyperexponential { .. } => "hyperexponential",
            DistributionSpec::Weibull { .. } => "weibull",
        }
    }

    /// Pareto with the given shape, scaled to have mean `mean`.
    pub fn pareto_with_mean(shape: f64, mean: f64) -> Self {
        DistributionSpec::Pareto {
            shape,
            scale: mean * (shape - 1.0) / shape,
        }
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        let bad = |msg: String| Err(DistributionError::InvalidParameter(msg));
        let positive = |name: &str, v: f64| -> Result<(), DistributionError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(DistributionError::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        match self {
            DistributionSpec::Exponential { mean } => positive("mean", *mean),
            DistributionSpec::Deterministic { value } => positive("value", *value),
            DistributionSpec::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && *low >= 0.0 && low < high) {
                    return bad(format!("uniform needs 0 <= low < high, got ({low}, {high})"));
                }
                Ok(())
            }
            DistributionSpec::Pareto { shape, scale } => {
                positive("shape", *shape)?;
                positive("scale", *scale)?;
                if *shape <= 1.0 {
                    return bad(format!("pareto shape {shape} <= 1 has infinite mean"));
                }
                Ok(())
            }
            DistributionSpec::Hyperexponential {
                probabilities,
                means,
            } => {
                if probabilities.is_empty() || probabilities.len() != means.len() {
                    return bad("hyperexponential needs matching nonempty probabilities and means".into());
                }
                for &p in probabilities {
                    if !(p >= 0.0 && p.is_finite()) {
                        return bad(format!("probability {p} out of range"));
                    }
                }
                for &m in means {
                    positive("mean", m)?;
                }
                let total: f64 = probabilities.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("probabilities sum to {total}, not 1"));
                }
                Ok(())
            }
            DistributionSpec::Weibull { shape, scale } => {
                positive("shape", *shape)?;
                positive("scale", *scale)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.moment(1.0)
    }

    /// Raw moment `E[X^p]`, `+∞` when divergent.
    pub fn moment(&self, p: f64) -> f64 {
        match self {
            DistributionSpec::Exponential { mean } => mean.powf(p) * gamma(p + 1.0),
            DistributionSpec::Deterministic { value } => value.powf(p),
            DistributionSpec::Uniform { low, high } => {
                (high.powf(p + 1.0) - low.powf(p + 1.0)) / ((p + 1.0) * (high - low))
            }
            DistributionSpec::Pareto { shape, scale } => {
                if *shape <= p {
                    f64::INFINITY
                } else {
                    shape * scale.powf(p) / (shape - p)
                }
            }
            DistributionSpec::Hyperexponential {
                probabilities,
                means,
            } => {
                let g = gamma(p + 1.0);
                probabilities
                    .iter()
                    .zip(means)
                    .map(|(q, m)| q * m.powf(p) * g)
                    .sum()
            }
            DistributionSpec::Weibull { shape, scale } => scale.powf(p) * gamma(1.0 + p / shape),
        }
    }

    /// `P(X > s)`.
    pub fn ccdf(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 1.0;
        }
        match self {
            DistributionSpec::Exponential { mean } => (-s / mean).exp(),
            DistributionSpec::Deterministic { value } => {
                if s < *value {
                    1.0
                } else {
                    0.0
                }
            }
            DistributionSpec::Uniform { low, high } => ((high - s) / (high - low)).clamp(0.0, 1.0),
            DistributionSpec::Pareto { shape, scale } => {
                if s < *scale {
                    1.0
                } else {
                    (scale / s).powf(*shape)
                }
            }
            DistributionSpec::Hyperexponential {
                probabilities,
                means,
            } => probabilities
                .iter()
                .zip(means)
                .map(|(q, m)| q * (-s / m).exp())
                .sum(),
            DistributionSpec::Weibull { shape, scale } => (-(s / scale).powf(*shape)).exp(),
        }
    }

    /// Lebesgue density, `None` for the point mass.
    pub fn density(&self, s: f64) -> Option<f64> {
        if s < 0.0 {
            return Some(0.0);
        }
        let d = match self {
            DistributionSpec::Exponential { mean } => (-s / mean).exp() / mean,
            DistributionSpec::Deterministic { .. } => return None,
            DistributionSpec::Uniform { low, high } => {
                if s > *low && s <= *high {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
            DistributionSpec::Pareto { shape, scale } => {
                if s < *scale {
                    0.0
                } else {
                    shape * scale.powf(*shape) / s.powf(shape + 1.0)
                }
            }
            DistributionSpec::Hyperexponential {
                probabilities,
                means,
            } => probabilities
                .iter()
                .zip(means)
                .map(|(q, m)| q * (-s / m).exp() / m)
                .sum(),
            DistributionSpec::Weibull { shape, scale } => {
                if s == 0.0 {
                    return Some(if *shape < 1.0 {
                        f64::INFINITY
                    } else if *shape == 1.0 {
                        1.0 / scale
                    } else {
                        0.0
                    });
                }
                let x = s / scale;
                shape / scale * x.powf(shape - 1.0) * (-x.powf(*shape)).exp()
            }
        };
        Some(d)
    }

    /// Points where the law's density or distribution function is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            DistributionSpec::Deterministic { value } => vec![*value],
            DistributionSpec::Uniform { low, high } => vec![*low, *high],
            DistributionSpec::Pareto { scale, .. } => vec![*scale],
            _ => vec![0.0],
        }
    }

    /// Supremum of the support (`+∞` when unbounded).
    pub fn support_max(&self) -> f64 {
        match self {
            DistributionSpec::Deterministic { value } => *value,
            DistributionSpec::Uniform { high, .. } => *high,
            _ => f64::INFINITY,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = match self {
                DistributionSpec::Exponential { mean } => {
                    Exp::new(1.0 / mean).expect("validated").sample(rng)
                }
                DistributionSpec::Deterministic { value } => *value,
                DistributionSpec::Uniform { low, high } => {
                    let u: f64 = rng.random();
                    high - u * (high - low)
                }
                DistributionSpec::Pareto { shape, scale } => {
                    Pareto::new(*scale, *shape).expect("validated").sample(rng)
                }
                DistributionSpec::Hyperexponential {
                    probabilities,
                    means,
                } => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = means.len() - 1;
                    for (i, q) in probabilities.iter().enumerate() {
                        acc += q;
                        if u < acc {
                            pick = i;
                            break;
                        }
                    }
                    Exp::new(1.0 / means[pick]).expect("validated").sample(rng)
                }
                DistributionSpec::Weibull { shape, scale } => {
                    Weibull::new(*scale, *shape).expect("validated").sample(rng)
                }
            };
            if x > 0.0 {
                return x;
            }
        }
    }

    /// Whether the `(2 + δ₁)`-th moment is finite.
    pub fn check_moment_condition(&self, delta1: f64) -> bool {
        self.moment(2.0 + delta1).is_finite()
    }

    pub fn check_spreadout(&self) -> SpreadOutReport {
        let (unbounded_support, convolution_nonsingular) = match self {
            DistributionSpec::Deterministic { .. } => (false, false),
            DistributionSpec::Uniform { .. } => (false, true),
            _ => (true, true),
        };
        SpreadOutReport {
            unbounded_support,
            convolution_nonsingular,
        }
    }
}

/// Flat wire form: `{"family": "...", <params>}`, family matched case-insensitively.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDistribution {
    pub family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<f64>>,
}

impl TryFrom<RawDistribution> for DistributionSpec {
    type Error = DistributionError;

    fn try_from(raw: RawDistribution) -> Result<Self, Self::Error> {
        let family = raw.family.to_ascii_lowercase();
        let (name, allowed): (&'static str, &[&'static str]) = match family.as_str() {
            "exponential" => ("exponential", &["mean"]),
            "deterministic" => ("deterministic", &["value"]),
            "uniform" => ("uniform", &["low", "high"]),
            "pareto" => ("pareto", &["shape", "scale"]),
            "hyperexponential" => ("hyperexponential", &["probabilities", "means"]),
            "weibull" => ("weibull", &["shape", "scale"]),
            _ => return Err(DistributionError::UnknownFamily(raw.family)),
        };
        let present = [
            ("mean", raw.mean.is_some()),
            ("value", raw.value.is_some()),
            ("low", raw.low.is_some()),
            ("high", raw.high.is_some()),
            ("shape", raw.shape.is_some()),
            ("scale", raw.scale.is_some()),
            ("probabilities", raw.probabilities.is_some()),
            ("means", raw.means.is_some()),
        ];
        for (param, is_set) in present {
            if is_set && !allowed.contains(&param) {
                return Err(DistributionError::UnexpectedParameter { family: name, param });
            }
        }
        let need = |v: Option<f64>, param: &'static str| {
            v.ok_or(DistributionError::MissingParameter { family: name, param })
        };
        let spec = match name {
            "exponential" => DistributionSpec::Exponential {
                mean: need(raw.mean, "mean")?,
            },
            "deterministic" => DistributionSpec::Deterministic {
                value: need(raw.value, "value")?,
            },
            "uniform" => DistributionSpec::Uniform {
                low: need(raw.low, "low")?,
                high: need(raw.high, "high")?,
            },
            "pareto" => DistributionSpec::Pareto {
                shape: need(raw.shape, "shape")?,
                scale: need(raw.scale, "scale")?,
            },
            "weibull" => DistributionSpec::Weibull {
                shape: need(raw.shape, "shape")?,
                scale: need(raw.scale, "scale")?,
            },
            _ => DistributionSpec::Hyperexponential {
                probabilities: raw.probabilities.ok_or(DistributionError::MissingParameter {
                    family: name,
                    param: "probabilities",
                })?,
                means: raw.means.ok_or(DistributionError::MissingParameter {
                    family: name,
                    param: "means",
                })?,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<DistributionSpec> for RawDistribution {
    fn from(spec: DistributionSpec) -> Self {
        let mut raw = RawDistribution {
            family: spec.family().to_string(),
            ..RawDistribution::default()
        };
        match spec {
            DistributionSpec::Exponential { mean } => raw.mean = Some(mean),
            DistributionSpec::Deterministic { value } => raw.value = Some(value),
            DistributionSpec::Uniform { low, high } => {
                raw.low = Some(low);
                raw.high = Some(high);
            }
            DistributionSpec::Pareto { shape, scale } | DistributionSpec::Weibull { shape, scale } => {
                raw.shape = Some(shape);
                raw.scale = Some(scale);
            }
            DistributionSpec::Hyperexponential {
                probabilities,
                means,
            } => {
                raw.probabilities = Some(probabilities);
                raw.means = Some(means);
            }
        }
        raw
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn families() -> Vec<DistributionSpec> {
        vec![
            DistributionSpec::Exponential { mean: 1.0 },
            DistributionSpec::Deterministic { value: 2.0 },
            DistributionSpec::Uniform { low: 0.0, high: 2.0 },
            DistributionSpec::Pareto { shape: 3.5, scale: 1.0 },
            DistributionSpec::Hyperexponential {
                probabilities: vec![0.3, 0.7],
                means: vec![0.5, 2.0],
            },
            DistributionSpec::Weibull { shape: 1.5, scale: 1.2 },
        ]
    }

    #[test]
    fn deterministic_is_a_point_mass() {
        let d = DistributionSpec::Deterministic { value: 2.0 };
        let mut rng = stream(1, 0, 0, Purpose::Service);
        for _ in 0..10 {
            assert_eq!(d.sample(&mut rng), 2.0);
        }
        assert_eq!(d.moment(3.0), 8.0);
        assert_eq!(d.ccdf(1.0), 1.0);
        assert_eq!(d.ccdf(3.0), 0.0);
    }

    #[test]
    fn exponential_sample_mean() {
        let d = DistributionSpec::Exponential { mean: 1.0 };
        let mut rng = stream(7, 0, 0, Purpose::Service);
        let n = 100_000;
        let mean = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn uniform_draws_in_support() {
        let d = DistributionSpec::Uniform { low: 0.0, high: 2.0 };
        let mut rng = stream(3, 0, 0, Purpose::Service);
        for _ in 0..10_000 {
            let x = d.sample(&mut rng);
            assert!(x > 0.0 && x <= 2.0);
        }
    }

    #[test]
    fn closed_form_moments() {
        assert!((DistributionSpec::Exponential { mean: 1.0 }.moment(2.0) - 2.0).abs() < 1e-12);
        assert_eq!(
            DistributionSpec::Pareto { shape: 2.5, scale: 1.0 }.moment(3.0),
            f64::INFINITY
        );
        let u = DistributionSpec::Uniform { low: 0.0, high: 2.0 };
        assert!((u.moment(2.0) - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_tails() {
        let e = DistributionSpec::Exponential { mean: 1.0 };
        assert!((e.ccdf(1.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        let u = DistributionSpec::Uniform { low: 0.0, high: 2.0 };
        assert_eq!(u.ccdf(0.5), 0.75);
        for d in families() {
            assert_eq!(d.ccdf(0.0), 1.0);
            assert_eq!(d.ccdf(-3.0), 1.0);
        }
    }

    #[test]
    fn ccdf_nonincreasing_on_random_grid() {
        use rand::Rng;
        let mut rng = stream(11, 0, 0, Purpose::Test);
        for d in families() {
            let mut grid: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() * 10.0).collect();
            grid.sort_by(f64::total_cmp);
            for w in grid.windows(2) {
                assert!(d.ccdf(w[1]) <= d.ccdf(w[0]), "{} at {:?}", d.family(), w);
            }
            // right-continuity at the breakpoints
            for b in d.breakpoints() {
                assert!((d.ccdf(b + 1e-12) - d.ccdf(b)).abs() < 1e-9, "{}", d.family());
            }
        }
    }

    #[test]
    fn moment_condition_compares_shape() {
        assert!(DistributionSpec::Exponential { mean: 1.0 }.check_moment_condition(1.0));
        let p = DistributionSpec::Pareto { shape: 2.2, scale: 1.0 };
        assert!(p.check_moment_condition(0.1));
        assert!(!p.check_moment_condition(0.5));
    }

    #[test]
    fn spreadout_table() {
        let r = |d: DistributionSpec| {
            let s = d.check_spreadout();
            (s.unbounded_support, s.convolution_nonsingular)
        };
        assert_eq!(r(DistributionSpec::Exponential { mean: 1.0 }), (true, true));
        assert_eq!(r(DistributionSpec::Deterministic { value: 1.0 }), (false, false));
        assert_eq!(r(DistributionSpec::Uniform { low: 0.0, high: 2.0 }), (false, true));
        assert_eq!(r(DistributionSpec::Pareto { shape: 3.0, scale: 1.0 }), (true, true));
        assert_eq!(r(DistributionSpec::Weibull { shape: 0.5, scale: 1.0 }), (true, true));
    }

    #[test]
    fn empirical_moments_within_three_standard_errors() {
        let n = 100_000;
        for (i, d) in families().into_iter().enumerate() {
            let mut rng = stream(99, i as u64, 0, Purpose::Test);
            let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            for p in [1.0, 2.0] {
                // need a finite 2p-th moment for a meaningful standard error
                if !d.moment(2.0 * p).is_finite() || !d.moment(p + 1.0).is_finite() {
                    continue;
                }
                let est = xs.iter().map(|x| x.powf(p)).sum::<f64>() / n as f64;
                let var = d.moment(2.0 * p) - d.moment(p).powi(2);
                let se = (var / n as f64).sqrt();
                assert!(
                    (est - d.moment(p)).abs() <= 3.0 * se + 1e-12,
                    "{} p={p}: {est} vs {}",
                    d.family(),
                    d.moment(p)
                );
            }
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        for d in families() {
            let a: Vec<f64> = {
                let mut rng = stream(5, 2, 1, Purpose::Service);
                (0..50).map(|_| d.sample(&mut rng)).collect()
            };
            let b: Vec<f64> = {
                let mut rng = stream(5, 2, 1, Purpose::Service);
                (0..50).map(|_| d.sample(&mut rng)).collect()
            };
            assert_eq!(a, b);
        }
    }

    #[test]
    fn family_names_are_case_insensitive() {
        let d: DistributionSpec =
            serde_json::from_str(r#"{"family": "PaReTo", "shape": 3.0, "scale": 1.0}"#).unwrap();
        assert_eq!(d, DistributionSpec::Pareto { shape: 3.0, scale: 1.0 });
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<DistributionSpec>(&json).unwrap(), d);
        assert!(serde_json::from_str::<DistributionSpec>(r#"{"family": "exponential", "shape": 1.0}"#).is_err());
        assert!(serde_json::from_str::<DistributionSpec>(r#"{"family": "exponential", "mean": -1.0}"#).is_err());
        assert!(serde_json::from_str::<DistributionSpec>(r#"{"family": "lognormal", "mean": 1.0}"#).is_err());
    }
}
