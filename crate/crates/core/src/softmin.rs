//! Soft minimum over a finite set of values, its weight vector, and Shannon
//! entropy.
//!
//! The soft minimum of `v` at inverse temperature `lambda` is
//!
//! ```text
//! softmin(v, λ) = (1/λ) · log( (1/d) · Σ_y exp(λ v_y) )
//! ```
//!
//! which interpolates between the minimum (λ → −∞), the arithmetic mean
//! (λ → 0), and the maximum (λ → +∞). Its gradient with respect to `v` is the
//! normalized exponential weight vector returned by [`softmin_weights`]; those
//! weights act as soft pseudo-labels elsewhere in the crate.

use crate::error::{Error, Result};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// λ magnitudes at or above this threshold behave exactly like ±∞. The true
/// soft minimum at |λ| = 10⁶ still sits ~log(d)/|λ| away from the hard
/// extremum, so callers asking for such temperatures get the limit itself.
pub const LAMBDA_SNAP: f64 = 1e6;

/// Largest exponent range fed to `exp`; beyond it the smooth value is
/// indistinguishable from the hard limit at f64 precision.
const EXP_ARG_LIMIT: f64 = 700.0;

/// Inverse temperature of the soft minimum, an extended real.
///
/// Finite values, `NEG_INF` and `POS_INF` are representable; NaN is rejected
/// at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaParam(f64);

impl LambdaParam {
    pub const NEG_INF: LambdaParam = LambdaParam(f64::NEG_INFINITY);
    pub const POS_INF: LambdaParam = LambdaParam(f64::INFINITY);
    pub const ZERO: LambdaParam = LambdaParam(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() {
            return Err(Error::invalid("lambda must not be NaN"));
        }
        Ok(LambdaParam(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// True when the parameter behaves as a hard min/max, either because it
    /// is literally infinite or because it is at or beyond the snap
    /// threshold.
    pub fn is_effectively_infinite(self) -> bool {
        self.0.abs() >= LAMBDA_SNAP
    }
}

impl Serialize for LambdaParam {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for LambdaParam {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let v = match Raw::deserialize(d)? {
            Raw::Num(x) => x,
            Raw::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => f64::INFINITY,
                "-inf" | "-infinity" => f64::NEG_INFINITY,
                other => other
                    .parse::<f64>()
                    .map_err(|_| D::Error::custom(format!("bad lambda: {other:?}")))?,
            },
        };
        LambdaParam::new(v).map_err(|e| D::Error::custom(e.to_string()))
    }
}

/// Probability vector on a finite set: entries nonnegative, summing to one
/// within 1e-12.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("probability vector must be non-empty"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(
                "probability vector entries must be finite and nonnegative",
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "probability vector sums to {sum}, expected 1 within 1e-12"
            )));
        }
        Ok(ProbVector(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid("softmin of an empty vector"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("softmin input contains a non-finite entry"));
    }
    Ok(())
}

fn min_max(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Soft minimum of `values` at inverse temperature `lambda`.
///
/// λ = 0 returns the arithmetic mean (the continuous limit of the formula),
/// λ = ±∞ (or |λ| ≥ [`LAMBDA_SNAP`]) return the exact min/max. The smooth
/// branch is evaluated as a max-shifted log-sum-exp, and falls back to the
/// hard limit when |λ|·range(values) would overflow the exponentials.
pub fn softmin(values: &[f64], lambda: LambdaParam) -> Result<f64> {
    check_values(values)?;
    let l = lambda.value();
    let d = values.len() as f64;
    if l == 0.0 {
        return Ok(values.iter().sum::<f64>() / d);
    }
    let (lo, hi) = min_max(values);
    if l <= -LAMBDA_SNAP {
        return Ok(lo);
    }
    if l >= LAMBDA_SNAP {
        return Ok(hi);
    }
    if l.abs() * (hi - lo) > EXP_ARG_LIMIT {
        return Ok(if l < 0.0 { lo } else { hi });
    }
    // max over y of λ·v_y is attained at the min for λ<0 and the max for λ>0
    let shift = if l < 0.0 { l * lo } else { l * hi };
    let sum: f64 = values.iter().map(|&v| (l * v - shift).exp()).sum();
    Ok((shift + (sum / d).ln()) / l)
}

/// Normalized exponential weights `exp(λ v_y) / Σ exp(λ v_{y'})`, which equal
/// the gradient of [`softmin`] with respect to `values`.
///
/// λ = 0 returns the uniform vector; λ = ±∞ returns the indicator of the
/// arg-max/arg-min, with exact ties split uniformly.
pub fn softmin_weights(values: &[f64], lambda: LambdaParam) -> Result<ProbVector> {
    check_values(values)?;
    let l = lambda.value();
    let d = values.len();
    if l == 0.0 {
        return ProbVector::new(vec![1.0 / d as f64; d]);
    }
    let (lo, hi) = min_max(values);
    let snapped = l.abs() >= LAMBDA_SNAP || l.abs() * (hi - lo) > EXP_ARG_LIMIT;
    let hard = snapped.then_some(if l < 0.0 { lo } else { hi });
    if let Some(target) = hard {
        let ties = values.iter().filter(|&&v| v == target).count() as f64;
        return ProbVector::new(
            values
                .iter()
                .map(|&v| if v == target { 1.0 / ties } else { 0.0 })
                .collect(),
        );
    }
    let shift = if l < 0.0 { l * lo } else { l * hi };
    let exps: Vec<f64> = values.iter().map(|&v| (l * v - shift).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ProbVector::new(exps.iter().map(|e| e / sum).collect())
}

/// Shannon entropy of a probability vector in nats, with 0·log 0 ≡ 0.
pub fn entropy(p: &ProbVector) -> f64 {
    p.as_slice()
        .iter()
        .map(|&w| if w > 0.0 { -w * w.ln() } else { 0.0 })
        .sum()
}

/// Brute-force oracle for the entropy-regularized extremum
///
/// ```text
/// ext over q in the simplex of  qᵀb + (1/λ)H(q) − (1/λ)log d
/// ```
///
/// whose optimum equals `softmin(b, λ)`. The extremum direction depends on
/// the sign of λ: the objective equals softmin − (1/λ)·KL(q ‖ q*), so it is
/// minimized over q for λ < 0 and maximized for λ > 0. The simplex is scanned
/// on a regular grid with the given step. Test oracle only; exponential in
/// the dimension, which is capped at 4.
pub fn entropy_regularized_min_oracle(
    b: &[f64],
    lambda: LambdaParam,
    grid_step: f64,
) -> Result<f64> {
    check_values(b)?;
    let l = lambda.value();
    if !l.is_finite() || l == 0.0 {
        return Err(Error::invalid("oracle requires a finite nonzero lambda"));
    }
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(Error::invalid("grid_step must lie in (0, 0.1]"));
    }
    let d = b.len();
    if d > 4 {
        return Err(Error::InstanceTooLarge { limit: 4, got: d });
    }
    let m = (1.0 / grid_step).round() as usize;
    let objective = |q: &[f64]| -> f64 {
        let lin: f64 = q.iter().zip(b).map(|(qi, bi)| qi * bi).sum();
        let h: f64 = q
            .iter()
            .map(|&w| if w > 0.0 { -w * w.ln() } else { 0.0 })
            .sum();
        lin + h / l - (d as f64).ln() / l
    };
    let mut best = if l < 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    let mut update = |val: f64| {
        if l < 0.0 {
            best = best.min(val);
        } else {
            best = best.max(val);
        }
    };
    let mut q = vec![0.0; d];
    // enumerate integer compositions k_1 + ... + k_d = m, q_i = k_i / m
    fn recurse(
        level: usize,
        remaining: usize,
        m: usize,
        q: &mut Vec<f64>,
        eval: &mut dyn FnMut(&[f64]),
    ) {
        if level == q.len() - 1 {
            q[level] = remaining as f64 / m as f64;
            eval(q);
            return;
        }
        for k in 0..=remaining {
            q[level] = k as f64 / m as f64;
            recurse(level + 1, remaining - k, m, q, eval);
        }
    }
    recurse(0, m, m, &mut q, &mut |q| update(objective(q)));
    Ok(best)
}
