//! Smooth parametric classifiers with analytic loss gradients in both the
//! parameters and the input features, plus the transportation cost between
//! feature-label pairs.
//!
//! The loss is the cross-entropy `logsumexp(logits) − logit_y`. Activations
//! are restricted to tanh and softplus so the feature gradient stays
//! Lipschitz, which the inner maximization relies on.

use crate::error::{Error, Result};
use crate::numeric;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Flat vector of model parameters; every entry finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !numeric::all_finite(&values) {
            return Err(Error::invalid("parameter vector has a non-finite entry"));
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    /// Gaussian initialization with the given scale, deterministic in the seed.
    pub fn random(len: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ParamVector(
            (0..len)
                .map(|_| scale * numeric::gaussian(&mut rng))
                .collect(),
        )
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

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// A feature vector with an optional class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: Option<usize>,
}

impl Example {
    pub fn labeled(features: Vec<f64>, label: usize) -> Self {
        Example {
            features,
            label: Some(label),
        }
    }

    pub fn unlabeled(features: Vec<f64>) -> Self {
        Example {
            features,
            label: None,
        }
    }

    pub fn label_or_err(&self) -> Result<usize> {
        self.label.ok_or(Error::MissingLabel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    MultinomialLogistic,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Softplus,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            // stable softplus: log(1 + e^x) = max(x, 0) + log(1 + e^{-|x|})
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Softplus => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

/// Architecture of a classifier: full layer-size chain from input dimension
/// to `num_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn logistic(input_dim: usize, num_classes: usize) -> Result<Self> {
        ModelSpec {
            kind: ModelKind::MultinomialLogistic,
            layer_sizes: vec![input_dim, num_classes],
            activation: Activation::Tanh,
            num_classes,
        }
        .validated()
    }

    pub fn mlp(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        let num_classes = *layer_sizes.last().unwrap_or(&0);
        ModelSpec {
            kind: ModelKind::Mlp,
            layer_sizes,
            activation,
            num_classes,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::invalid(
                "layer_sizes needs at least input and output",
            ));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        if *self.layer_sizes.last().unwrap() != self.num_classes {
            return Err(Error::invalid("last layer size must equal num_classes"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if self.kind == ModelKind::MultinomialLogistic && self.layer_sizes.len() != 2 {
            return Err(Error::invalid("logistic model has no hidden layers"));
        }
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Weight matrix (row-major, out×in) and bias slices for layer `l`.
    fn layer_params<'a>(&self, theta: &'a [f64], l: usize) -> (&'a [f64], &'a [f64]) {
        let mut offset = 0;
        for k in 0..l {
            offset += self.layer_sizes[k] * self.layer_sizes[k + 1] + self.layer_sizes[k + 1];
        }
        let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let w = &theta[offset..offset + fan_in * fan_out];
        let b = &theta[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        (w, b)
    }

    fn check_dims(&self, theta: &ParamVector, features: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::Shape {
                expected: self.param_count(),
                got: theta.len(),
            });
        }
        if features.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: features.len(),
            });
        }
        Ok(())
    }

    /// Forward pass; returns per-layer activations (index 0 = input) and
    /// pre-activations of every layer.
    fn forward(&self, theta: &[f64], features: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let layers = self.layer_sizes.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(layers);
        acts.push(features.to_vec());
        for l in 0..layers {
            let (w, b) = self.layer_params(theta, l);
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let input = &acts[l];
            let mut z = vec![0.0; fan_out];
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                z[o] = numeric::dot(row, input) + b[o];
            }
            let out = if l + 1 == layers {
                z.clone() // logits stay linear
            } else {
                z.iter().map(|&x| self.activation.apply(x)).collect()
            };
            pre.push(z);
            acts.push(out);
        }
        (acts, pre)
    }

    pub fn logits(&self, theta: &ParamVector, features: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(theta, features)?;
        let (acts, _) = self.forward(theta.as_slice(), features);
        Ok(acts.last().unwrap().clone())
    }

    pub fn predict(&self, theta: &ParamVector, features: &[f64]) -> Result<usize> {
        let logits = self.logits(theta, features)?;
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.iter().map(|e| e / s).collect()
}

/// A parametric loss with analytic gradients in both the parameters and the
/// input features. `ModelSpec` is the production implementation; tests plug
/// in closed-form fixtures.
pub trait LossModel {
    fn feature_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn param_count(&self) -> usize;
    fn loss(&self, theta: &ParamVector, z: &Example) -> Result<f64>;
    fn grad_theta(&self, theta: &ParamVector, z: &Example) -> Result<Vec<f64>>;
    fn grad_features(&self, theta: &ParamVector, z: &Example) -> Result<Vec<f64>>;
}

impl LossModel for ModelSpec {
    fn feature_dim(&self) -> usize {
        self.input_dim()
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn param_count(&self) -> usize {
        self.param_count()
    }

    fn loss(&self, theta: &ParamVector, z: &Example) -> Result<f64> {
        let y = z.label_or_err()?;
        if y >= self.num_classes {
            return Err(Error::invalid(format!("label {y} out of range")));
        }
        let logits = self.logits(theta, &z.features)?;
        Ok(log_sum_exp(&logits) - logits[y])
    }

    fn grad_theta(&self, theta: &ParamVector, z: &Example) -> Result<Vec<f64>> {
        Ok(self.backward(theta, z)?.0)
    }

    fn grad_features(&self, theta: &ParamVector, z: &Example) -> Result<Vec<f64>> {
        Ok(self.backward(theta, z)?.1)
    }
}

impl ModelSpec {
    /// Backpropagation returning (∂ℓ/∂θ, ∂ℓ/∂features).
    fn backward(&self, theta: &ParamVector, z: &Example) -> Result<(Vec<f64>, Vec<f64>)> {
        let y = z.label_or_err()?;
        if y >= self.num_classes {
            return Err(Error::invalid(format!("label {y} out of range")));
        }
        self.check_dims(theta, &z.features)?;
        let th = theta.as_slice();
        let layers = self.layer_sizes.len() - 1;
        let (acts, pre) = self.forward(th, &z.features);

        // delta at the logits: softmax residual
        let mut delta: Vec<f64> = softmax(&acts[layers]);
        delta[y] -= 1.0;

        let mut grad = vec![0.0; th.len()];
        let mut offset_end = th.len();
        for l in (0..layers).rev() {
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let block = fan_in * fan_out + fan_out;
            let offset = offset_end - block;
            let (w, _b) = self.layer_params(th, l);
            let input = &acts[l];
            // weight and bias gradients
            for o in 0..fan_out {
                let row = &mut grad[offset + o * fan_in..offset + (o + 1) * fan_in];
                for i in 0..fan_in {
                    row[i] = delta[o] * input[i];
                }
            }
            for o in 0..fan_out {
                grad[offset + fan_in * fan_out + o] = delta[o];
            }
            // propagate delta to the previous layer
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for i in 0..fan_in {
                    prev[i] += delta[o] * row[i];
                }
            }
            if l > 0 {
                for i in 0..fan_in {
                    prev[i] *= self.activation.derivative(pre[l - 1][i]);
                }
            }
            delta = prev;
            offset_end = offset;
        }
        Ok((grad, delta))
    }
}

/// Transportation cost between feature-label pairs: squared L2 distance of
/// the features when the labels agree, +∞ otherwise. The infinite branch is
/// what keeps the inner maximization from flipping labels.
pub fn transport_cost(z: &Example, z_prime: &Example) -> Result<f64> {
    if z.features.len() != z_prime.features.len() {
        return Err(Error::Shape {
            expected: z.features.len(),
            got: z_prime.features.len(),
        });
    }
    let y = z.label_or_err()?;
    let y_prime = z_prime.label_or_err()?;
    if y != y_prime {
        return Ok(f64::INFINITY);
    }
    Ok(numeric::sq_dist(&z.features, &z_prime.features))
}

/// Empirical lower estimates of the four gradient Lipschitz constants,
/// obtained as sampled maxima of ‖Δgrad‖/‖Δinput‖ over random pairs. The
/// estimates grow monotonically with the sample count for a fixed seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessEstimate {
    pub l_zz: f64,
    pub l_theta_theta: f64,
    pub l_theta_z: f64,
    pub l_z_theta: f64,
}

impl SmoothnessEstimate {
    /// The constant B of the fixed-step convergence bound,
    /// ½·(L_θθ + L_zθ·L_θz / (γ − L_zz)); requires γ > L_zz.
    pub fn step_size_b(&self, gamma: f64) -> Result<f64> {
        if gamma <= self.l_zz {
            return Err(Error::invalid("gamma must exceed L_zz"));
        }
        Ok(0.5 * (self.l_theta_theta + self.l_z_theta * self.l_theta_z / (gamma - self.l_zz)))
    }
}

/// Estimate the gradient Lipschitz constants of a loss by sampling pairs of
/// nearby inputs. Feature points and parameter perturbations are drawn from
/// L2 balls of `region_radius` around the origin and around `theta`
/// respectively; labels are uniform.
pub fn estimate_smoothness(
    model: &dyn LossModel,
    theta: &ParamVector,
    region_radius: f64,
    samples: usize,
    seed: u64,
) -> Result<SmoothnessEstimate> {
    if samples < 100 {
        return Err(Error::invalid("need at least 100 samples"));
    }
    if !(region_radius > 0.0 && region_radius.is_finite()) {
        return Err(Error::invalid("region_radius must be positive and finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.feature_dim();
    let p = model.param_count();
    let classes = model.num_classes();
    let mut est = SmoothnessEstimate {
        l_zz: 0.0,
        l_theta_theta: 0.0,
        l_theta_z: 0.0,
        l_z_theta: 0.0,
    };
    let ratio = |a: &[f64], b: &[f64], dist: f64| -> f64 {
        if dist < 1e-12 {
            0.0
        } else {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
                / dist
        }
    };
    for _ in 0..samples {
        let y = rng.random_range(0..classes);
        let x1 = numeric::in_ball(&mut rng, d, region_radius);
        let x2 = numeric::in_ball(&mut rng, d, region_radius);
        let z1 = Example::labeled(x1.clone(), y);
        let z2 = Example::labeled(x2.clone(), y);
        let dz = numeric::sq_dist(&x1, &x2).sqrt();

        let mut th1 = theta.as_slice().to_vec();
        let mut th2 = theta.as_slice().to_vec();
        numeric::axpy(1.0, &numeric::in_ball(&mut rng, p, region_radius), &mut th1);
        numeric::axpy(1.0, &numeric::in_ball(&mut rng, p, region_radius), &mut th2);
        let t1 = ParamVector::new(th1)?;
        let t2 = ParamVector::new(th2)?;
        let dt = numeric::sq_dist(t1.as_slice(), t2.as_slice()).sqrt();

        let gz_x1 = model.grad_features(&t1, &z1)?;
        let gz_x2 = model.grad_features(&t1, &z2)?;
        est.l_zz = est.l_zz.max(ratio(&gz_x1, &gz_x2, dz));

        let gt_t1 = model.grad_theta(&t1, &z1)?;
        let gt_t2 = model.grad_theta(&t2, &z1)?;
        est.l_theta_theta = est.l_theta_theta.max(ratio(&gt_t1, &gt_t2, dt));

        let gt_x2 = model.grad_theta(&t1, &z2)?;
        est.l_theta_z = est.l_theta_z.max(ratio(&gt_t1, &gt_x2, dz));

        let gz_t2 = model.grad_features(&t2, &z1)?;
        est.l_z_theta = est.l_z_theta.max(ratio(&gz_x1, &gz_t2, dt));
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::central_diff_grad;

    #[test]
    fn loss_at_zero_theta_is_log_num_classes() {
        let model = ModelSpec::logistic(3, 2).unwrap();
        let theta = ParamVector::zeros(model.param_count());
        let z = Example::labeled(vec![0.3, -1.0, 2.0], 1);
        let l = model.loss(&theta, &z).unwrap();
        assert!((l - 2.0f64.ln()).abs() < 1e-15);

        let model = ModelSpec::logistic(4, 10).unwrap();
        let theta = ParamVector::zeros(model.param_count());
        let z = Example::labeled(vec![1.0, 2.0, 3.0, 4.0], 7);
        assert!((model.loss(&theta, &z).unwrap() - 10.0f64.ln()).abs() < 1e-14);

        let mlp = ModelSpec::mlp(vec![3, 5, 4], Activation::Tanh).unwrap();
        let theta = ParamVector::zeros(mlp.param_count());
        let z = Example::labeled(vec![0.1, 0.2, 0.3], 0);
        assert!((mlp.loss(&theta, &z).unwrap() - 4.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn loss_matches_direct_recomputation() {
        let model = ModelSpec::logistic(2, 3).unwrap();
        let theta = ParamVector::random(model.param_count(), 0.5, 7);
        let z = Example::labeled(vec![0.8, -0.4], 2);
        let logits = model.logits(&theta, &z.features).unwrap();
        // independent high-precision recomputation of -log softmax
        let denom: f64 = logits.iter().map(|&v| v.exp()).sum();
        let want = -(logits[2].exp() / denom).ln();
        let got = model.loss(&theta, &z).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!(got >= 0.0);
    }

    #[test]
    fn missing_label_and_shape_errors() {
        let model = ModelSpec::logistic(2, 2).unwrap();
        let theta = ParamVector::zeros(model.param_count());
        let unlabeled = Example::unlabeled(vec![1.0, 2.0]);
        assert!(matches!(
            model.loss(&theta, &unlabeled),
            Err(Error::MissingLabel)
        ));
        let wrong_dim = Example::labeled(vec![1.0], 0);
        assert!(matches!(
            model.loss(&theta, &wrong_dim),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn grad_theta_matches_finite_differences() {
        for seed in 0..7u64 {
            for spec in [
                ModelSpec::logistic(3, 3).unwrap(),
                ModelSpec::mlp(vec![3, 4, 2], Activation::Tanh).unwrap(),
                ModelSpec::mlp(vec![3, 4, 2], Activation::Softplus).unwrap(),
            ] {
                let theta = ParamVector::random(spec.param_count(), 0.4, seed);
                let z = Example::labeled(vec![0.5, -1.2, 0.7], (seed as usize) % 2);
                let grad = spec.grad_theta(&theta, &z).unwrap();
                let fd = central_diff_grad(
                    |t| {
                        spec.loss(&ParamVector::new(t.to_vec()).unwrap(), &z)
                            .unwrap()
                    },
                    theta.as_slice(),
                    1e-6,
                );
                for (g, f) in grad.iter().zip(&fd) {
                    assert!(
                        (g - f).abs() <= 1e-6 * (1.0 + f.abs()),
                        "grad {g} vs fd {f}"
                    );
                }
            }
        }
    }

    #[test]
    fn grad_theta_matches_directional_differences() {
        // <grad, d> against (loss(theta + h d) - loss(theta - h d)) / 2h for
        // random unit directions
        use rand::SeedableRng;
        let spec = ModelSpec::mlp(vec![3, 5, 3], Activation::Tanh).unwrap();
        let theta = ParamVector::random(spec.param_count(), 0.5, 19);
        let z = Example::labeled(vec![0.4, -0.9, 0.2], 2);
        let grad = spec.grad_theta(&theta, &z).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let h = 1e-6;
        for _ in 0..20 {
            let dir = crate::numeric::unit_sphere(&mut rng, theta.len());
            let mut plus = theta.as_slice().to_vec();
            let mut minus = plus.clone();
            crate::numeric::axpy(h, &dir, &mut plus);
            crate::numeric::axpy(-h, &dir, &mut minus);
            let fd = (spec.loss(&ParamVector::new(plus).unwrap(), &z).unwrap()
                - spec.loss(&ParamVector::new(minus).unwrap(), &z).unwrap())
                / (2.0 * h);
            let analytic = crate::numeric::dot(&grad, &dir);
            assert!((analytic - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn grad_features_matches_finite_differences() {
        let spec = ModelSpec::mlp(vec![2, 6, 3], Activation::Softplus).unwrap();
        let theta = ParamVector::random(spec.param_count(), 0.6, 11);
        let z = Example::labeled(vec![0.9, -0.3], 1);
        let grad = spec.grad_features(&theta, &z).unwrap();
        let fd = central_diff_grad(
            |x| spec.loss(&theta, &Example::labeled(x.to_vec(), 1)).unwrap(),
            &z.features,
            1e-6,
        );
        for (g, f) in grad.iter().zip(&fd) {
            assert!((g - f).abs() <= 1e-6 * (1.0 + f.abs()));
        }
    }

    #[test]
    fn grad_features_zero_at_zero_theta() {
        let spec = ModelSpec::logistic(3, 2).unwrap();
        let theta = ParamVector::zeros(spec.param_count());
        let z = Example::labeled(vec![0.4, 0.5, -0.6], 0);
        let g = spec.grad_features(&theta, &z).unwrap();
        assert!(g.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn zero_weight_feature_has_zero_gradient_entry() {
        // with a zero input feature, the matching weight gradients vanish
        let spec = ModelSpec::logistic(2, 2).unwrap();
        let theta = ParamVector::random(spec.param_count(), 0.3, 3);
        let z = Example::labeled(vec![0.0, 1.5], 1);
        let g = spec.grad_theta(&theta, &z).unwrap();
        // weight layout: class-0 row [w00 w01], class-1 row [w10 w11], biases
        assert_eq!(g[0], 0.0);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn linear_grad_features_is_residual_weighted_rows() {
        let spec = ModelSpec::logistic(2, 3).unwrap();
        let theta = ParamVector::random(spec.param_count(), 0.5, 5);
        let z = Example::labeled(vec![0.2, -0.7], 1);
        let logits = spec.logits(&theta, &z.features).unwrap();
        let probs = softmax(&logits);
        let th = theta.as_slice();
        let mut want = vec![0.0; 2];
        for c in 0..3 {
            let resid = probs[c] - if c == 1 { 1.0 } else { 0.0 };
            for i in 0..2 {
                want[i] += resid * th[c * 2 + i];
            }
        }
        let got = spec.grad_features(&theta, &z).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn transport_cost_examples() {
        let a = Example::labeled(vec![0.0, 0.0], 1);
        let b = Example::labeled(vec![3.0, 4.0], 1);
        let c = Example::labeled(vec![0.0, 0.0], 2);
        assert_eq!(transport_cost(&a, &a).unwrap(), 0.0);
        assert_eq!(transport_cost(&a, &b).unwrap(), 25.0);
        assert_eq!(transport_cost(&a, &c).unwrap(), f64::INFINITY);
        assert_eq!(transport_cost(&b, &a).unwrap(), 25.0);
    }

    #[test]
    fn transport_cost_symmetric_nonnegative_zero_iff_equal() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let label = rng.random_range(0..3usize);
            let a = Example::labeled(x.clone(), label);
            let b = Example::labeled(y.clone(), label);
            let ab = transport_cost(&a, &b).unwrap();
            assert_eq!(ab, transport_cost(&b, &a).unwrap());
            assert!(ab >= 0.0);
            if x == y {
                assert_eq!(ab, 0.0);
            } else {
                assert!(ab > 0.0);
            }
        }
        let missing = Example::unlabeled(vec![0.0, 0.0, 0.0]);
        let labeled = Example::labeled(vec![0.0, 0.0, 0.0], 0);
        assert!(matches!(
            transport_cost(&missing, &labeled),
            Err(Error::MissingLabel)
        ));
    }

    /// Test fixture with ∇²_z loss = I and loss independent of θ.
    struct QuadraticFixture {
        dim: usize,
    }

    impl LossModel for QuadraticFixture {
        fn feature_dim(&self) -> usize {
            self.dim
        }
        fn num_classes(&self) -> usize {
            2
        }
        fn param_count(&self) -> usize {
            1
        }
        fn loss(&self, _theta: &ParamVector, z: &Example) -> Result<f64> {
            z.label_or_err()?;
            Ok(0.5 * numeric::dot(&z.features, &z.features))
        }
        fn grad_theta(&self, _theta: &ParamVector, z: &Example) -> Result<Vec<f64>> {
            z.label_or_err()?;
            Ok(vec![0.0])
        }
        fn grad_features(&self, _theta: &ParamVector, z: &Example) -> Result<Vec<f64>> {
            z.label_or_err()?;
            Ok(z.features.clone())
        }
    }

    struct ConstantFixture;

    impl LossModel for ConstantFixture {
        fn feature_dim(&self) -> usize {
            2
        }
        fn num_classes(&self) -> usize {
            2
        }
        fn param_count(&self) -> usize {
            2
        }
        fn loss(&self, _theta: &ParamVector, z: &Example) -> Result<f64> {
            z.label_or_err()?;
            Ok(1.0)
        }
        fn grad_theta(&self, _theta: &ParamVector, z: &Example) -> Result<Vec<f64>> {
            z.label_or_err()?;
            Ok(vec![0.0, 0.0])
        }
        fn grad_features(&self, _theta: &ParamVector, z: &Example) -> Result<Vec<f64>> {
            z.label_or_err()?;
            Ok(vec![0.0, 0.0])
        }
    }

    #[test]
    fn smoothness_quadratic_fixture_l_zz_near_one() {
        let fixture = QuadraticFixture { dim: 2 };
        let theta = ParamVector::zeros(1);
        let est = estimate_smoothness(&fixture, &theta, 1.0, 200, 13).unwrap();
        assert!(est.l_zz >= 0.9 && est.l_zz <= 1.0, "l_zz = {}", est.l_zz);
        assert_eq!(est.l_theta_theta, 0.0);
    }

    #[test]
    fn smoothness_constant_fixture_all_zero() {
        let theta = ParamVector::zeros(2);
        let est = estimate_smoothness(&ConstantFixture, &theta, 1.0, 150, 1).unwrap();
        assert_eq!(est.l_zz, 0.0);
        assert_eq!(est.l_theta_theta, 0.0);
        assert_eq!(est.l_theta_z, 0.0);
        assert_eq!(est.l_z_theta, 0.0);
    }

    #[test]
    fn smoothness_monotone_in_sample_count() {
        let model = ModelSpec::logistic(2, 2).unwrap();
        let theta = ParamVector::random(model.param_count(), 0.5, 2);
        let a = estimate_smoothness(&model, &theta, 1.0, 100, 42).unwrap();
        let b = estimate_smoothness(&model, &theta, 1.0, 400, 42).unwrap();
        assert!(b.l_zz >= a.l_zz);
        assert!(b.l_theta_theta >= a.l_theta_theta);
        assert!(b.l_theta_z >= a.l_theta_z);
        assert!(b.l_z_theta >= a.l_z_theta);
    }

    #[test]
    fn step_size_b_from_smoothness_estimates() {
        let est = SmoothnessEstimate {
            l_zz: 1.0,
            l_theta_theta: 2.0,
            l_theta_z: 3.0,
            l_z_theta: 4.0,
        };
        // B = 0.5 * (L_tt + L_zt * L_tz / (gamma - L_zz))
        let b = est.step_size_b(3.0).unwrap();
        assert!((b - 0.5 * (2.0 + 12.0 / 2.0)).abs() < 1e-15);
        assert!(est.step_size_b(0.5).is_err());
    }

    #[test]
    fn smoothness_requires_enough_samples() {
        let model = ModelSpec::logistic(2, 2).unwrap();
        let theta = ParamVector::zeros(model.param_count());
        assert!(estimate_smoothness(&model, &theta, 1.0, 50, 0).is_err());
    }
}
