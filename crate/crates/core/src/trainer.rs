//! SSAR risk and gradient, the mini-batch SGD trainer with all mode
//! specializations, the hard-label alternating trainer, the theoretical
//! fixed step size, and the convexity threshold diagnostic.
//!
//! The empirical semi-supervised adversarial risk of a partially labeled
//! dataset is
//!
//! ```text
//! (1/n) Σ_labeled φ_γ(X_i, y_i; θ)
//!   + (1/n) Σ_unlabeled softmin_y φ_γ(X_i, y; θ)
//!   + γ·ε
//! ```
//!
//! with the γ·ε constant reported only when `epsilon_report` is set; it does
//! not move the minimizer. Each unlabeled example contributes one inner
//! maximization per candidate label, combined by the softmin weights, which
//! is also exactly how the gradient decomposes.

use crate::adversary::{solve_inner_max, AttackConfig};
use crate::error::{Error, Result};
use crate::models::{Example, LossModel, ParamVector};
use crate::numeric;
use crate::softmin::{softmin, softmin_weights, LambdaParam};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Feature vectors with optional labels, split into labeled and unlabeled
/// index sets. Labels of unlabeled examples are stripped at construction and
/// kept only as ground truth for evaluation, so the training path cannot see
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiDataset {
    examples: Vec<Example>,
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    eta: f64,
    ground_truth: Vec<Option<usize>>,
}

impl SemiDataset {
    pub fn new(mut examples: Vec<Example>, labeled_indices: Vec<usize>) -> Result<Self> {
        let n = examples.len();
        if n == 0 {
            return Err(Error::invalid("dataset must be non-empty"));
        }
        let mut is_labeled = vec![false; n];
        for &i in &labeled_indices {
            if i >= n {
                return Err(Error::invalid(format!("labeled index {i} out of range")));
            }
            if is_labeled[i] {
                return Err(Error::invalid(format!("labeled index {i} repeated")));
            }
            is_labeled[i] = true;
        }
        let ground_truth: Vec<Option<usize>> = examples.iter().map(|e| e.label).collect();
        let mut labeled = Vec::new();
        let mut unlabeled = Vec::new();
        for (i, ex) in examples.iter_mut().enumerate() {
            if is_labeled[i] {
                if ex.label.is_none() {
                    return Err(Error::MissingLabel);
                }
                labeled.push(i);
            } else {
                ex.label = None; // hidden from training
                unlabeled.push(i);
            }
        }
        let eta = labeled.len() as f64 / n as f64;
        Ok(SemiDataset {
            examples,
            labeled,
            unlabeled,
            eta,
            ground_truth,
        })
    }

    pub fn fully_labeled(examples: Vec<Example>) -> Result<Self> {
        let idx = (0..examples.len()).collect();
        SemiDataset::new(examples, idx)
    }

    pub fn n(&self) -> usize {
        self.examples.len()
    }

    pub fn n_labeled(&self) -> usize {
        self.labeled.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn labeled_indices(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled_indices(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn example(&self, i: usize) -> &Example {
        &self.examples[i]
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.examples[i].label.is_some()
    }

    /// Ground-truth label, available for evaluation even on unlabeled points.
    pub fn ground_truth(&self, i: usize) -> Option<usize> {
        self.ground_truth[i]
    }
}

/// Training mode: the full objective, its fast top-k variant, and the
/// limiting special cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Ssdrl,
    FSsdrl { top_k: usize },
    Drl,
    Pl,
    Em,
    HardMin,
    HardMax,
}

impl Mode {
    pub fn is_hard(self) -> bool {
        matches!(self, Mode::HardMin | Mode::HardMax)
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Dual parameter γ; +∞ disables the inner maximization.
    pub gamma: f64,
    pub lambda: LambdaParam,
    /// Step size α > 0.
    pub alpha: f64,
    /// Iteration count T.
    pub iters: usize,
    /// Mini-batch size k ≥ 1.
    pub batch: usize,
    /// Inner-maximization early-stop tolerance δ.
    pub delta: f64,
    /// Ascent iterations per inner maximization.
    pub ascent_steps: usize,
    /// Ascent scale κ.
    pub kappa: f64,
    /// Radius of the L2 ball the parameters are projected onto; +∞ means no
    /// projection.
    pub projection_radius: f64,
    /// When positive, the constant γ·ε term is added to reported risks.
    pub epsilon_report: f64,
    pub seed: u64,
    /// Break hard-label ties with the seeded RNG instead of the lowest index.
    pub random_hard_ties: bool,
}

impl TrainConfig {
    pub fn new(mode: Mode, gamma: f64, lambda: LambdaParam) -> Self {
        TrainConfig {
            mode,
            gamma,
            lambda,
            alpha: 0.1,
            iters: 100,
            batch: 1,
            delta: 0.0,
            ascent_steps: 5,
            kappa: 1.0,
            projection_radius: f64::INFINITY,
            epsilon_report: 0.0,
            seed: 0,
            random_hard_ties: false,
        }
    }

    /// Pseudo-labeling: γ = ∞, λ = −∞.
    pub fn pl() -> Self {
        TrainConfig::new(Mode::Pl, f64::INFINITY, LambdaParam::NEG_INF)
    }

    /// EM-style soft self-training: γ = ∞, λ = −1.
    pub fn em() -> Self {
        TrainConfig::new(Mode::Em, f64::INFINITY, LambdaParam::new(-1.0).unwrap())
    }

    pub fn attack_config(&self) -> AttackConfig {
        AttackConfig {
            gamma: self.gamma,
            kappa: self.kappa,
            steps: self.ascent_steps,
            delta: self.delta,
        }
    }

    /// Mode-parameter consistency checks.
    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(Error::invalid("gamma must be >= 0 (or +inf)"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha must be positive"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if self.delta < 0.0 || self.delta.is_nan() {
            return Err(Error::invalid("delta must be >= 0"));
        }
        if self.projection_radius <= 0.0 {
            return Err(Error::invalid("projection radius must be positive"));
        }
        if self.epsilon_report < 0.0 {
            return Err(Error::invalid("epsilon_report must be >= 0"));
        }
        if self.epsilon_report > 0.0 && !self.gamma.is_finite() {
            return Err(Error::invalid("gamma*epsilon is infinite with gamma = inf"));
        }
        match self.mode {
            Mode::Pl => {
                if self.gamma.is_finite() || self.lambda != LambdaParam::NEG_INF {
                    return Err(Error::invalid("PL requires gamma = inf and lambda = -inf"));
                }
            }
            Mode::Em => {
                if self.gamma.is_finite() || self.lambda.value() != -1.0 {
                    return Err(Error::invalid("EM requires gamma = inf and lambda = -1"));
                }
            }
            Mode::HardMin => {
                if self.lambda != LambdaParam::NEG_INF {
                    return Err(Error::invalid("HARD_MIN requires lambda = -inf"));
                }
            }
            Mode::HardMax => {
                if self.lambda != LambdaParam::POS_INF {
                    return Err(Error::invalid("HARD_MAX requires lambda = +inf"));
                }
            }
            Mode::FSsdrl { top_k } => {
                if top_k == 0 {
                    return Err(Error::invalid("top_k must be >= 1"));
                }
            }
            Mode::Ssdrl | Mode::Drl => {}
        }
        Ok(())
    }
}

/// Record of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub theta_final: ParamVector,
    /// Per-iteration objective estimate on the step's batch (exact full-batch
    /// risk whenever k = n, as in the descent guarantees).
    pub risk_history: Vec<f64>,
    pub gradnorm_history: Vec<f64>,
    pub wallclock: f64,
}

fn project(theta: &mut [f64], radius: f64) {
    if radius.is_finite() {
        let n = numeric::norm2(theta);
        if n > radius {
            let s = radius / n;
            for v in theta.iter_mut() {
                *v *= s;
            }
        }
    }
}

/// Candidate labels for an unlabeled example: every label, or the `top_k`
/// with smallest clean loss at the current parameters in fast mode.
fn candidate_labels(
    model: &dyn LossModel,
    theta: &ParamVector,
    features: &[f64],
    cfg: &TrainConfig,
) -> Result<Vec<usize>> {
    let classes = model.num_classes();
    let all: Vec<usize> = (0..classes).collect();
    let top_k = match cfg.mode {
        Mode::FSsdrl { top_k } => top_k.min(classes),
        _ => return Ok(all),
    };
    if top_k == classes {
        return Ok(all);
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(classes);
    for y in 0..classes {
        let clean = model.loss(theta, &Example::labeled(features.to_vec(), y))?;
        scored.push((y, clean));
    }
    scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    let mut keep: Vec<usize> = scored.iter().take(top_k).map(|(y, _)| *y).collect();
    keep.sort_unstable();
    Ok(keep)
}

/// Adversarial softmin term of one unlabeled example: the per-label inner-max
/// values (in candidate-label order) and their softmin.
struct UnlabeledTerm {
    values: Vec<f64>,
    maximizers: Vec<Example>,
    softmin_value: f64,
}

fn unlabeled_term(
    model: &dyn LossModel,
    theta: &ParamVector,
    features: &[f64],
    cfg: &TrainConfig,
    attack: &AttackConfig,
) -> Result<UnlabeledTerm> {
    let labels = candidate_labels(model, theta, features, cfg)?;
    let mut values = Vec::with_capacity(labels.len());
    let mut maximizers = Vec::with_capacity(labels.len());
    for &y in &labels {
        let anchor = Example::labeled(features.to_vec(), y);
        let res = solve_inner_max(model, theta, &anchor, attack)?;
        values.push(res.objective);
        maximizers.push(res.z_star);
    }
    let softmin_value = softmin(&values, cfg.lambda)?;
    Ok(UnlabeledTerm {
        values,
        maximizers,
        softmin_value,
    })
}

/// Full-batch SSAR risk. DRL mode averages over the labeled subset alone.
pub fn ssar_risk(
    model: &dyn LossModel,
    theta: &ParamVector,
    data: &SemiDataset,
    cfg: &TrainConfig,
) -> Result<f64> {
    cfg.validate()?;
    let batch: Vec<usize> = if cfg.mode == Mode::Drl {
        data.labeled_indices().to_vec()
    } else {
        (0..data.n()).collect()
    };
    Ok(batch_grad_risk(model, theta, &batch, data, cfg)?.1)
}

/// Stochastic SSAR sub-gradient over the given batch indices.
pub fn ssar_gradient(
    model: &dyn LossModel,
    theta: &ParamVector,
    batch: &[usize],
    data: &SemiDataset,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    Ok(batch_grad_risk(model, theta, batch, data, cfg)?.0)
}

/// Gradient and risk estimate over a batch, sharing the inner-max solutions.
fn batch_grad_risk(
    model: &dyn LossModel,
    theta: &ParamVector,
    batch: &[usize],
    data: &SemiDataset,
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, f64)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let attack = cfg.attack_config();
    let mut grad = vec![0.0; model.param_count()];
    let mut risk = 0.0;
    for &i in batch {
        let ex = data.example(i);
        if ex.label.is_some() {
            let res = solve_inner_max(model, theta, ex, &attack)?;
            risk += res.objective;
            let g = model.grad_theta(theta, &res.z_star)?;
            numeric::axpy(1.0, &g, &mut grad);
        } else {
            if cfg.mode == Mode::Drl {
                return Err(Error::invalid("DRL batch contains an unlabeled index"));
            }
            let term = unlabeled_term(model, theta, &ex.features, cfg, &attack)?;
            risk += term.softmin_value;
            let weights = softmin_weights(&term.values, cfg.lambda)?;
            for (w, z_star) in weights.as_slice().iter().zip(&term.maximizers) {
                if *w == 0.0 {
                    continue;
                }
                let g = model.grad_theta(theta, z_star)?;
                numeric::axpy(*w, &g, &mut grad);
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for g in grad.iter_mut() {
        *g *= scale;
    }
    risk *= scale;
    if cfg.epsilon_report > 0.0 {
        risk += cfg.gamma * cfg.epsilon_report;
    }
    Ok((grad, risk))
}

/// Mini-batch SGD: T iterations of θ ← Proj(θ − α·∂̂R). Deterministic given
/// the seed; a full batch (k = n) is processed in index order without
/// consuming randomness.
pub fn sgd_train(
    model: &dyn LossModel,
    theta0: &ParamVector,
    data: &SemiDataset,
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    cfg.validate()?;
    if cfg.mode.is_hard() {
        return Err(Error::invalid("hard modes are trained by hard_label_train"));
    }
    let pool: Vec<usize> = if cfg.mode == Mode::Drl {
        data.labeled_indices().to_vec()
    } else {
        (0..data.n()).collect()
    };
    if cfg.batch > pool.len() {
        return Err(Error::invalid(format!(
            "batch size {} exceeds available examples {}",
            cfg.batch,
            pool.len()
        )));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = theta0.clone();
    let mut risk_history = Vec::with_capacity(cfg.iters);
    let mut gradnorm_history = Vec::with_capacity(cfg.iters);
    for _ in 0..cfg.iters {
        let batch: Vec<usize> = if cfg.batch == pool.len() {
            pool.clone()
        } else {
            sample(&mut rng, pool.len(), cfg.batch)
                .iter()
                .map(|j| pool[j])
                .collect()
        };
        let (grad, risk) = batch_grad_risk(model, &theta, &batch, data, cfg)?;
        risk_history.push(risk);
        gradnorm_history.push(numeric::norm2(&grad));
        numeric::axpy(-cfg.alpha, &grad, theta.as_mut_slice());
        project(theta.as_mut_slice(), cfg.projection_radius);
        if !numeric::all_finite(theta.as_slice()) {
            return Err(Error::DivergedTraining {
                trace: Box::new(TrainTrace {
                    theta_final: ParamVector::zeros(theta.len()),
                    risk_history,
                    gradnorm_history,
                    wallclock: start.elapsed().as_secs_f64(),
                }),
            });
        }
    }
    Ok(TrainTrace {
        theta_final: theta,
        risk_history,
        gradnorm_history,
        wallclock: start.elapsed().as_secs_f64(),
    })
}

fn hard_assignment(
    model: &dyn LossModel,
    theta: &ParamVector,
    data: &SemiDataset,
    cfg: &TrainConfig,
    attack: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let maximize = cfg.mode == Mode::HardMax;
    let mut labels = Vec::with_capacity(data.unlabeled_indices().len());
    for &i in data.unlabeled_indices() {
        let features = &data.example(i).features;
        let mut values = Vec::with_capacity(model.num_classes());
        for y in 0..model.num_classes() {
            let anchor = Example::labeled(features.clone(), y);
            values.push(solve_inner_max(model, theta, &anchor, attack)?.objective);
        }
        let target = if maximize {
            values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        } else {
            values.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        let ties: Vec<usize> = (0..values.len()).filter(|&y| values[y] == target).collect();
        let pick = if cfg.random_hard_ties && ties.len() > 1 {
            ties[rng.random_range(0..ties.len())]
        } else {
            ties[0]
        };
        labels.push(pick);
    }
    Ok(labels)
}

fn hard_objective(
    model: &dyn LossModel,
    theta: &ParamVector,
    data: &SemiDataset,
    labels: &[usize],
    cfg: &TrainConfig,
    attack: &AttackConfig,
) -> Result<(f64, Vec<f64>)> {
    let n = data.n() as f64;
    let mut risk = 0.0;
    let mut grad = vec![0.0; model.param_count()];
    for &i in data.labeled_indices() {
        let res = solve_inner_max(model, theta, data.example(i), attack)?;
        risk += res.objective;
        numeric::axpy(1.0, &model.grad_theta(theta, &res.z_star)?, &mut grad);
    }
    for (slot, &i) in data.unlabeled_indices().iter().enumerate() {
        let anchor = Example::labeled(data.example(i).features.clone(), labels[slot]);
        let res = solve_inner_max(model, theta, &anchor, attack)?;
        risk += res.objective;
        numeric::axpy(1.0, &model.grad_theta(theta, &res.z_star)?, &mut grad);
    }
    risk /= n;
    if cfg.epsilon_report > 0.0 {
        risk += cfg.gamma * cfg.epsilon_report;
    }
    for g in grad.iter_mut() {
        *g /= n;
    }
    Ok((risk, grad))
}

/// Hard-decision training for λ = ±∞: alternate exact per-example arg-min
/// (HARD_MIN) or arg-max (HARD_MAX) label assignment with full-batch descent.
/// The step size is halved whenever a step would increase the objective, so
/// the recorded objective never increases; when no acceptable step remains
/// the iterate stalls in place.
pub fn hard_label_train(
    model: &dyn LossModel,
    theta0: &ParamVector,
    data: &SemiDataset,
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    cfg.validate()?;
    if !cfg.mode.is_hard() {
        return Err(Error::invalid(
            "hard_label_train requires HARD_MIN or HARD_MAX",
        ));
    }
    let start = Instant::now();
    let attack = cfg.attack_config();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = theta0.clone();
    let mut risk_history = Vec::with_capacity(cfg.iters);
    let mut gradnorm_history = Vec::with_capacity(cfg.iters);

    let labels = hard_assignment(model, &theta, data, cfg, &attack, &mut rng)?;
    let (mut obj, mut grad) = hard_objective(model, &theta, data, &labels, cfg, &attack)?;
    for _ in 0..cfg.iters {
        gradnorm_history.push(numeric::norm2(&grad));
        let mut alpha = cfg.alpha;
        loop {
            let mut candidate = theta.clone();
            numeric::axpy(-alpha, &grad, candidate.as_mut_slice());
            project(candidate.as_mut_slice(), cfg.projection_radius);
            if !numeric::all_finite(candidate.as_slice()) {
                return Err(Error::DivergedTraining {
                    trace: Box::new(TrainTrace {
                        theta_final: ParamVector::zeros(theta.len()),
                        risk_history,
                        gradnorm_history,
                        wallclock: start.elapsed().as_secs_f64(),
                    }),
                });
            }
            let new_labels = hard_assignment(model, &candidate, data, cfg, &attack, &mut rng)?;
            let (new_obj, new_grad) =
                hard_objective(model, &candidate, data, &new_labels, cfg, &attack)?;
            if new_obj <= obj {
                theta = candidate;
                obj = new_obj;
                grad = new_grad;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-18 {
                break; // stall: keep the current iterate
            }
        }
        risk_history.push(obj);
    }
    Ok(TrainTrace {
        theta_final: theta,
        risk_history,
        gradnorm_history,
        wallclock: start.elapsed().as_secs_f64(),
    })
}

/// Dispatch on the configured mode.
pub fn train(
    model: &dyn LossModel,
    theta0: &ParamVector,
    data: &SemiDataset,
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    if cfg.mode.is_hard() {
        hard_label_train(model, theta0, data, cfg)
    } else {
        sgd_train(model, theta0, data, cfg)
    }
}

/// The fixed step size with the guaranteed O(T^{-1/2}) stationarity bound:
///
/// ```text
/// α* = (1/σ²) · sqrt( ΔR̂ / (T·(B/σ² + (1−η)·|λ|·|Y|)) )
/// ```
///
/// At η = 1 the unlabeled term vanishes, so |λ| may be infinite there.
pub fn theoretical_step_size(
    delta_r: f64,
    iters: usize,
    sigma: f64,
    b: f64,
    eta: f64,
    lambda_abs: f64,
    num_classes: usize,
) -> Result<f64> {
    if !(delta_r > 0.0 && delta_r.is_finite()) {
        return Err(Error::invalid("delta_r must be positive"));
    }
    if iters == 0 {
        return Err(Error::invalid("iteration count must be positive"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma must be positive"));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::invalid("b must be positive"));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid("eta must lie in [0, 1]"));
    }
    if lambda_abs < 0.0 || lambda_abs.is_nan() {
        return Err(Error::invalid("lambda_abs must be >= 0"));
    }
    if num_classes == 0 {
        return Err(Error::invalid("num_classes must be positive"));
    }
    let unlabeled_term = if eta == 1.0 {
        0.0
    } else {
        (1.0 - eta) * lambda_abs * num_classes as f64
    };
    let denom = iters as f64 * (b / (sigma * sigma) + unlabeled_term);
    Ok((delta_r / denom).sqrt() / (sigma * sigma))
}

/// Sampled estimate of the convexity threshold
///
/// ```text
/// −inf λ_min{∇²_θθ φ_γ} / (σ̂²·(1 − 1/|Y|))
/// ```
///
/// below which λ may break convexity of the objective. Probes draw θ
/// uniformly on the unit sphere and z from the dataset features crossed with
/// uniform labels; σ̂ is the largest sampled gradient norm. Any λ ≥ 0 is
/// always safe regardless of the estimate (see [`lambda_is_safe`]).
pub fn convexity_lambda_min(
    model: &dyn LossModel,
    data: &SemiDataset,
    gamma: f64,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if probes < 50 {
        return Err(Error::invalid("need at least 50 probes"));
    }
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::invalid("gamma must be >= 0 (or +inf)"));
    }
    let attack = AttackConfig {
        gamma,
        kappa: 1.0,
        steps: 200,
        delta: 1e-10,
    };
    let p = model.param_count();
    let classes = model.num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sigma_hat: f64 = 0.0;
    let mut worst_eig = f64::INFINITY;
    let phi_grad = |theta: &ParamVector, anchor: &Example| -> Result<Vec<f64>> {
        if gamma.is_finite() {
            let res = solve_inner_max(model, theta, anchor, &attack)?;
            model.grad_theta(theta, &res.z_star)
        } else {
            model.grad_theta(theta, anchor)
        }
    };
    for _ in 0..probes {
        let theta = ParamVector::new(numeric::unit_sphere(&mut rng, p))?;
        let i = rng.random_range(0..data.n());
        let y = rng.random_range(0..classes);
        let anchor = Example::labeled(data.example(i).features.clone(), y);
        let g = phi_grad(&theta, &anchor)?;
        sigma_hat = sigma_hat.max(numeric::norm2(&g));
        // Hessian of φ_γ w.r.t. θ by central differences of its gradient
        let h = 1e-5;
        let mut hess = vec![vec![0.0; p]; p];
        let mut probe = theta.as_slice().to_vec();
        for j in 0..p {
            let hj = h * (1.0 + probe[j].abs());
            probe[j] += hj;
            let gp = phi_grad(&ParamVector::new(probe.clone())?, &anchor)?;
            probe[j] -= 2.0 * hj;
            let gm = phi_grad(&ParamVector::new(probe.clone())?, &anchor)?;
            probe[j] = theta.as_slice()[j];
            for k in 0..p {
                hess[k][j] = (gp[k] - gm[k]) / (2.0 * hj);
            }
        }
        let eigs = numeric::symmetric_eigenvalues(&hess);
        worst_eig = worst_eig.min(eigs[0]);
    }
    if sigma_hat == 0.0 || worst_eig == 0.0 {
        return Ok(0.0);
    }
    let classes_f = classes as f64;
    Ok(-worst_eig / (sigma_hat * sigma_hat * (1.0 - 1.0 / classes_f)))
}

/// λ values at or above the threshold keep the objective convex; any
/// nonnegative λ is safe unconditionally.
pub fn lambda_is_safe(lambda: LambdaParam, threshold: f64) -> bool {
    lambda.value() >= 0.0 || lambda.value() >= threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelSpec;

    fn lam(v: f64) -> LambdaParam {
        LambdaParam::new(v).unwrap()
    }

    fn tiny_dataset() -> SemiDataset {
        let examples = vec![
            Example::labeled(vec![1.0, 0.0], 0),
            Example::labeled(vec![-1.0, 0.2], 1),
            Example::labeled(vec![0.4, -0.5], 0), // hidden below
        ];
        SemiDataset::new(examples, vec![0, 1]).unwrap()
    }

    #[test]
    fn dataset_hides_unlabeled_ground_truth() {
        let data = tiny_dataset();
        assert_eq!(data.n(), 3);
        assert_eq!(data.n_labeled(), 2);
        assert!((data.eta() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(data.example(2).label, None);
        assert_eq!(data.ground_truth(2), Some(0));
        assert_eq!(data.unlabeled_indices(), &[2]);
    }

    #[test]
    fn dataset_rejects_unlabeled_marked_labeled() {
        let examples = vec![
            Example::unlabeled(vec![0.0]),
            Example::labeled(vec![1.0], 0),
        ];
        assert!(matches!(
            SemiDataset::new(examples, vec![0]),
            Err(Error::MissingLabel)
        ));
    }

    #[test]
    fn risk_all_labeled_reduces_to_phi_mean() {
        let model = ModelSpec::logistic(2, 2).unwrap();
        let theta = ParamVector::random(model.param_count(), 0.4, 3);
        let examples = vec![
            Example::labeled(vec![1.0, 0.0], 0),
            Example::labeled(vec![-0.5, 0.3], 1),
        ];
        let data = SemiDataset::fully_labeled(examples.clone()).unwrap();
        let mut cfg = TrainConfig::new(Mode::Ssdrl, f64::INFINITY, lam(-1.0));
        cfg.batch = 2;
        let risk = ssar_risk(&model, &theta, &data, &cfg).unwrap();
        let mean: f64 = examples
            .iter()
            .map(|z| model.loss(&theta, z).unwrap())
            .sum::<f64>()
            / 2.0;
        assert!((risk - mean).abs() < 1e-14);
    }

    #[test]
    fn risk_lambda_zero_averages_labels() {
        let model = ModelSpec::logistic(2, 2).unwrap();
        let theta = ParamVector::random(model.param_count(), 0.4, 5);
        let data = tiny_dataset();
        let cfg = TrainConfig::new(Mode::Ssdrl, f64::INFINITY, lam(0.0));
        let risk = ssar_risk(&model, &theta, &data, &cfg).unwrap();
        let mut want = 0.0;
        for &i in data.labeled_indices() {
            want += model.loss(&theta, data.example(i)).unwrap();
        }
        let feats = data.example(2).features.clone();
        let avg: f64 = (0..2)
            .map(|y| {
                model
                    .loss(&theta, &Example::labeled(feats.clone(), y))
                    .unwrap()
            })
            .sum::<f64>()
            / 2.0;
        want = (want + avg) / 3.0;
        assert!((risk - want).abs() < 1e-14);
    }

    #[test]
    fn risk_matches_compositional_oracle() {
        // 3-point instance, gamma = inf, lambda = -1: hand-assemble from the
        // loss and softmin primitives
        let model = ModelSpec::logistic(2, 2).unwrap();
        let theta = ParamVector::random(model.param_count(), 0.7, 11);
        let data = tiny_dataset();
        let cfg = TrainConfig::new(Mode::Ssdrl, f64::INFINITY, lam(-1.0));
        let risk = ssar_risk(&model, &theta, &data, &cfg).unwrap();
        let l0 = model.loss(&theta, data.example(0)).unwrap();
        let l1 = model.loss(&theta, data.example(1)).unwrap();
        let feats = data.example(2).features.clone();
        let values: Vec<f64> = (0..2)
            .map(|y| {
                model
                    .loss(&theta, &Example::labeled(feats.clone(), y))
                    .unwrap()
            })
            .collect();
        let sm = softmin(&values, lam(-1.0)).unwrap();
        let want = (l0 + l1 + sm) / 3.0;
        assert!((risk - want).abs() < 1e-10);
    }

    #[test]
    fn gradient_clean_path_matches_weighted_sum() {
        let model = ModelSpec::logistic(2, 2).unwrap();
        let theta = ParamVector::random(model.param_count(), 0.4, 17);
        let data = tiny_dataset();
        let cfg = TrainConfig::new(Mode::Ssdrl, f64::INFINITY, lam(-1.0));
        let grad = ssar_gradient(&model, &theta, &[2], &data, &cfg).unwrap();
        let feats = data.example(2).features.clone();
        let values: Vec<f64> = (0..2)
            .map(|y| {
                model
                    .loss(&theta, &Example::labeled(feats.clone(), y))
                    .unwrap()
            })
            .collect();
        let w = softmin_weights(&values, lam(-1.0)).unwrap();
        let mut want = vec![0.0; model.param_count()];
        for y in 0..2 {
            let g = model
                .grad_theta(&theta, &Example::labeled(feats.clone(), y))
                .unwrap();
            numeric::axpy(w.as_slice()[y], &g, &mut want);
        }
        for (a, b) in grad.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_hard_min_uses_single_label() {
        let model = ModelSpec::logistic(2, 2).unwrap();
        let theta = ParamVector::random(model.param_count(), 0.9, 23);
        let data = tiny_dataset();
        let cfg = TrainConfig::new(Mode::Ssdrl, f64::INFINITY, LambdaParam::NEG_INF);
        let grad = ssar_gradient(&model, &theta, &[2], &data, &cfg).unwrap();
        let feats = data.example(2).features.clone();
        let values: Vec<f64> = (0..2)
            .map(|y| {
                model
                    .loss(&theta, &Example::labeled(feats.clone(), y))
                    .unwrap()
            })
            .collect();
        let best = if values[0] <= values[1] { 0 } else { 1 };
        let want = model
            .grad_theta(&theta, &Example::labeled(feats, best))
            .unwrap();
        for (a, b) in grad.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_of_risk() {
        let model = ModelSpec::logistic(2, 2).unwrap();
        let theta = ParamVector::random(model.param_count(), 0.5, 29);
        let data = tiny_dataset();
        let cfg = TrainConfig::new(Mode::Ssdrl, f64::INFINITY, lam(-1.0));
        let all: Vec<usize> = (0..data.n()).collect();
        let grad = ssar_gradient(&model, &theta, &all, &data, &cfg).unwrap();
        let fd = numeric::central_diff_grad(
            |t| ssar_risk(&model, &ParamVector::new(t.to_vec()).unwrap(), &data, &cfg).unwrap(),
            theta.as_slice(),
            1e-6,
        );
        for (a, b) in grad.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn zero_step_size_rejected_and_alpha_zero_equivalent() {
        // alpha must be positive; the spec's α=0 case is covered by checking
        // a vanishing step leaves parameters in place
        let model = ModelSpec::logistic(2, 2).unwrap();
        let theta0 = ParamVector::random(model.param_count(), 0.5, 31);
        let data = tiny_dataset();
        let mut cfg = TrainConfig::new(Mode::Ssdrl, f64::INFINITY, lam(-1.0));
        cfg.alpha = 0.0;
        assert!(sgd_train(&model, &theta0, &data, &cfg).is_err());
        cfg.alpha = 1e-300;
        cfg.iters = 5;
        cfg.batch = 3;
        let trace = sgd_train(&model, &theta0, &data, &cfg).unwrap();
        assert_eq!(trace.theta_final, theta0);
        let first = trace.risk_history[0];
        assert!(trace
            .risk_history
            .iter()
            .all(|&r| (r - first).abs() < 1e-12));
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let model = ModelSpec::logistic(2, 2).unwrap();
        let theta0 = ParamVector::random(model.param_count(), 0.5, 1);
        let data = tiny_dataset();
        let mut cfg = TrainConfig::new(Mode::Ssdrl, 1.0, lam(-1.0));
        cfg.iters = 40;
        cfg.batch = 2;
        cfg.seed = 9;
        let a = sgd_train(&model, &theta0, &data, &cfg).unwrap();
        let b = sgd_train(&model, &theta0, &data, &cfg).unwrap();
        assert_eq!(a.theta_final, b.theta_final);
        assert_eq!(a.risk_history, b.risk_history);
        assert_eq!(a.gradnorm_history, b.gradnorm_history);
    }

    #[test]
    fn full_batch_convex_descent_is_monotone() {
        let model = ModelSpec::logistic(2, 2).unwrap();
        let theta0 = ParamVector::zeros(model.param_count());
        let data = tiny_dataset();
        let mut cfg = TrainConfig::new(Mode::Ssdrl, f64::INFINITY, lam(0.0));
        cfg.alpha = 0.2;
        cfg.iters = 200;
        cfg.batch = 3;
        let trace = sgd_train(&model, &theta0, &data, &cfg).unwrap();
        for w in trace.risk_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn hard_min_objective_non_increasing() {
        let model = ModelSpec::logistic(2, 2).unwrap();
        let data = tiny_dataset();
        for seed in 0..3u64 {
            let theta0 = ParamVector::random(model.param_count(), 0.8, seed);
            let mut cfg = TrainConfig::new(Mode::HardMin, f64::INFINITY, LambdaParam::NEG_INF);
            cfg.alpha = 0.5;
            cfg.iters = 60;
            cfg.seed = seed;
            let trace = hard_label_train(&model, &theta0, &data, &cfg).unwrap();
            for w in trace.risk_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-15, "increase {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn hard_all_labeled_matches_sgd_drl_trajectory() {
        let model = ModelSpec::logistic(2, 2).unwrap();
        let theta0 = ParamVector::random(model.param_count(), 0.3, 2);
        let examples = vec![
            Example::labeled(vec![0.9, -0.1], 0),
            Example::labeled(vec![-0.8, 0.4], 1),
        ];
        let data = SemiDataset::fully_labeled(examples).unwrap();
        let mut hard_cfg = TrainConfig::new(Mode::HardMin, f64::INFINITY, LambdaParam::NEG_INF);
        hard_cfg.alpha = 0.05;
        hard_cfg.iters = 30;
        let mut drl_cfg = TrainConfig::new(Mode::Drl, f64::INFINITY, lam(-1.0));
        drl_cfg.alpha = 0.05;
        drl_cfg.iters = 30;
        drl_cfg.batch = 2;
        let hard = hard_label_train(&model, &theta0, &data, &hard_cfg).unwrap();
        let drl = sgd_train(&model, &theta0, &data, &drl_cfg).unwrap();
        assert_eq!(hard.theta_final, drl.theta_final);
    }

    #[test]
    fn hard_single_unlabeled_assignment_is_argmin() {
        let model = ModelSpec::logistic(2, 2).unwrap();
        let data = tiny_dataset();
        let theta = ParamVector::random(model.param_count(), 0.6, 77);
        let cfg = TrainConfig::new(Mode::HardMin, f64::INFINITY, LambdaParam::NEG_INF);
        let attack = cfg.attack_config();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let labels = hard_assignment(&model, &theta, &data, &cfg, &attack, &mut rng).unwrap();
        let feats = data.example(2).features.clone();
        let values: Vec<f64> = (0..2)
            .map(|y| {
                model
                    .loss(&theta, &Example::labeled(feats.clone(), y))
                    .unwrap()
            })
            .collect();
        let want = if values[0] <= values[1] { 0 } else { 1 };
        assert_eq!(labels, vec![want]);
    }

    #[test]
    fn random_tie_breaking_spreads_hard_labels() {
        // loss independent of the label: every label ties; the deterministic
        // rule picks index 0, the seeded option spreads the picks
        let fixture = QuadraticThetaFixture { dim: 2 };
        let examples: Vec<Example> = (0..12).map(|_| Example::labeled(vec![0.0], 0)).collect();
        let data = SemiDataset::new(examples, vec![0]).unwrap();
        let theta = ParamVector::random(2, 0.5, 1);
        let mut cfg = TrainConfig::new(Mode::HardMin, f64::INFINITY, LambdaParam::NEG_INF);
        let attack = cfg.attack_config();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fixed = hard_assignment(&fixture, &theta, &data, &cfg, &attack, &mut rng).unwrap();
        assert!(fixed.iter().all(|&y| y == 0));
        cfg.random_hard_ties = true;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let random = hard_assignment(&fixture, &theta, &data, &cfg, &attack, &mut rng).unwrap();
        assert!(
            random.contains(&1),
            "seeded ties never picked label 1: {random:?}"
        );
    }

    #[test]
    fn step_size_formula_examples() {
        // eta = 1 kills the unlabeled term even for infinite |lambda|
        let a = theoretical_step_size(1.0, 1, 1.0, 1.0, 1.0, f64::INFINITY, 5).unwrap();
        assert!((a - 1.0).abs() < 1e-15);

        let b = theoretical_step_size(4.0, 100, 2.0, 4.0, 0.5, 1.0, 2).unwrap();
        assert!((b - 0.25 * (4.0f64 / 200.0).sqrt()).abs() < 1e-15);
        assert!((b - 0.035355339059327376).abs() < 1e-12);

        let t1 = theoretical_step_size(1.0, 100, 1.0, 1.0, 0.5, 1.0, 2).unwrap();
        let t2 = theoretical_step_size(1.0, 200, 1.0, 1.0, 0.5, 1.0, 2).unwrap();
        assert!((t1 / t2 - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn step_size_rejects_nonpositive() {
        assert!(theoretical_step_size(0.0, 1, 1.0, 1.0, 0.5, 1.0, 2).is_err());
        assert!(theoretical_step_size(1.0, 0, 1.0, 1.0, 0.5, 1.0, 2).is_err());
        assert!(theoretical_step_size(1.0, 1, 0.0, 1.0, 0.5, 1.0, 2).is_err());
        assert!(theoretical_step_size(1.0, 1, 1.0, 0.0, 0.5, 1.0, 2).is_err());
        assert!(theoretical_step_size(1.0, 1, 1.0, 1.0, 1.5, 1.0, 2).is_err());
    }

    /// Quadratic-in-θ fixture: loss = ½‖θ‖² + c, Hessian = I, ‖∇‖ = ‖θ‖.
    struct QuadraticThetaFixture {
        dim: usize,
    }

    impl LossModel for QuadraticThetaFixture {
        fn feature_dim(&self) -> usize {
            1
        }
        fn num_classes(&self) -> usize {
            2
        }
        fn param_count(&self) -> usize {
            self.dim
        }
        fn loss(&self, theta: &ParamVector, z: &Example) -> Result<f64> {
            z.label_or_err()?;
            Ok(0.5 * numeric::dot(theta.as_slice(), theta.as_slice()) + 1.0)
        }
        fn grad_theta(&self, theta: &ParamVector, z: &Example) -> Result<Vec<f64>> {
            z.label_or_err()?;
            Ok(theta.as_slice().to_vec())
        }
        fn grad_features(&self, _theta: &ParamVector, z: &Example) -> Result<Vec<f64>> {
            z.label_or_err()?;
            Ok(vec![0.0])
        }
    }

    #[test]
    fn convexity_threshold_quadratic_fixture() {
        // Hessian = I everywhere and unit-sphere θ probes give σ̂ = 1, so the
        // threshold is −1/(1·(1 − 1/2)) = −2
        let fixture = QuadraticThetaFixture { dim: 3 };
        let data = SemiDataset::fully_labeled(vec![Example::labeled(vec![0.0], 0)]).unwrap();
        let thr = convexity_lambda_min(&fixture, &data, f64::INFINITY, 50, 5).unwrap();
        assert!((thr + 2.0).abs() < 1e-3, "threshold {thr}");
        assert!(lambda_is_safe(lam(0.0), thr));
        assert!(lambda_is_safe(lam(-1.5), thr));
        assert!(!lambda_is_safe(lam(-2.5), thr));
    }

    /// Loss linear in θ: Hessian identically zero.
    struct LinearThetaFixture;

    impl LossModel for LinearThetaFixture {
        fn feature_dim(&self) -> usize {
            1
        }
        fn num_classes(&self) -> usize {
            2
        }
        fn param_count(&self) -> usize {
            2
        }
        fn loss(&self, theta: &ParamVector, z: &Example) -> Result<f64> {
            z.label_or_err()?;
            Ok(theta.as_slice()[0] + 2.0 * theta.as_slice()[1])
        }
        fn grad_theta(&self, _theta: &ParamVector, z: &Example) -> Result<Vec<f64>> {
            z.label_or_err()?;
            Ok(vec![1.0, 2.0])
        }
        fn grad_features(&self, _theta: &ParamVector, z: &Example) -> Result<Vec<f64>> {
            z.label_or_err()?;
            Ok(vec![0.0])
        }
    }

    #[test]
    fn convexity_threshold_zero_hessian_is_zero() {
        let data = SemiDataset::fully_labeled(vec![Example::labeled(vec![0.0], 0)]).unwrap();
        let thr = convexity_lambda_min(&LinearThetaFixture, &data, f64::INFINITY, 50, 3).unwrap();
        assert!(thr.abs() < 1e-6, "threshold {thr}");
    }

    #[test]
    fn mode_consistency_validation() {
        let mut cfg = TrainConfig::pl();
        assert!(cfg.validate().is_ok());
        cfg.gamma = 1.0;
        assert!(cfg.validate().is_err());

        let mut cfg = TrainConfig::em();
        assert!(cfg.validate().is_ok());
        cfg.lambda = lam(-2.0);
        assert!(cfg.validate().is_err());

        let cfg = TrainConfig::new(Mode::HardMin, f64::INFINITY, lam(-1.0));
        assert!(cfg.validate().is_err());

        let mut cfg = TrainConfig::new(Mode::Ssdrl, f64::INFINITY, lam(-1.0));
        cfg.epsilon_report = 0.1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn f_ssdrl_with_full_top_k_equals_ssdrl() {
        let model = ModelSpec::logistic(2, 2).unwrap();
        let theta0 = ParamVector::random(model.param_count(), 0.5, 8);
        let data = tiny_dataset();
        let mut a = TrainConfig::new(Mode::Ssdrl, f64::INFINITY, lam(-1.0));
        a.iters = 50;
        a.batch = 2;
        a.seed = 4;
        let mut b = a.clone();
        b.mode = Mode::FSsdrl { top_k: 2 };
        let ta = sgd_train(&model, &theta0, &data, &a).unwrap();
        let tb = sgd_train(&model, &theta0, &data, &b).unwrap();
        assert_eq!(ta.theta_final, tb.theta_final);
        assert_eq!(ta.risk_history, tb.risk_history);
    }

    #[test]
    fn f_ssdrl_top_one_tracks_best_label() {
        let model = ModelSpec::logistic(2, 3).unwrap();
        let theta = ParamVector::random(model.param_count(), 0.8, 10);
        let examples = vec![
            Example::labeled(vec![0.5, 0.5], 0),
            Example::labeled(vec![0.7, -0.3], 1),
        ];
        let data = SemiDataset::new(examples, vec![0]).unwrap();
        let cfg = TrainConfig::new(Mode::FSsdrl { top_k: 1 }, f64::INFINITY, lam(-1.0));
        let grad = ssar_gradient(&model, &theta, &[1], &data, &cfg).unwrap();
        let feats = data.example(1).features.clone();
        let mut best = 0;
        let mut best_loss = f64::INFINITY;
        for y in 0..3 {
            let l = model
                .loss(&theta, &Example::labeled(feats.clone(), y))
                .unwrap();
            if l < best_loss {
                best_loss = l;
                best = y;
            }
        }
        let want = model
            .grad_theta(&theta, &Example::labeled(feats, best))
            .unwrap();
        for (a, b) in grad.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
