//! Inner adversarial maximization and the projected-gradient evaluation
//! attack.
//!
//! The inner problem for an anchor (X, y) is
//!
//! ```text
//! sup over x of  loss((x, y); θ) − γ‖x − X‖²
//! ```
//!
//! solved by gradient ascent from x = X with the decaying rate
//! `(κ/γ)/(t+1)`. The label never moves: a label flip costs +∞ under the
//! transportation cost, so the search runs over features only. A γ of +∞ is
//! the no-attack sentinel; the supremum is then attained at the anchor
//! itself.

use crate::error::{Error, Result};
use crate::models::{Example, LossModel, ParamVector};
use crate::numeric;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Configuration of the gradient-ascent inner maximization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Dual parameter γ ≥ 0; +∞ disables the attack.
    pub gamma: f64,
    /// Ascent scale κ > 0.
    pub kappa: f64,
    /// Number of ascent iterations (1..=10_000).
    pub steps: usize,
    /// Early-stop tolerance on the per-step objective change; 0 runs all
    /// steps.
    pub delta: f64,
}

impl AttackConfig {
    pub fn new(gamma: f64, kappa: f64, steps: usize, delta: f64) -> Result<Self> {
        let cfg = AttackConfig {
            gamma,
            kappa,
            steps,
            delta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The γ = +∞ sentinel: φ_γ collapses to the clean loss.
    pub fn no_attack() -> Self {
        AttackConfig {
            gamma: f64::INFINITY,
            kappa: 1.0,
            steps: 1,
            delta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(Error::invalid("gamma must be >= 0 (or +inf)"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid("kappa must be positive and finite"));
        }
        if self.steps == 0 || self.steps > 10_000 {
            return Err(Error::invalid("steps must lie in 1..=10000"));
        }
        if self.delta.is_nan() || self.delta < 0.0 {
            return Err(Error::invalid("delta must be >= 0"));
        }
        Ok(())
    }

    pub fn is_no_attack(&self) -> bool {
        self.gamma == f64::INFINITY
    }
}

/// Solution of one inner maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    /// Best perturbed example found; label equals the anchor's.
    pub z_star: Example,
    /// Best objective value J = loss(z*) − γ·‖x* − X‖².
    pub objective: f64,
    /// Ascent iterations actually run.
    pub iterations: usize,
    /// Norm of the ascent gradient at the final iterate.
    pub final_ascent_gradnorm: f64,
}

fn ascent_objective(
    model: &dyn LossModel,
    theta: &ParamVector,
    anchor: &[f64],
    y: usize,
    x: &[f64],
    gamma: f64,
) -> Result<f64> {
    let loss = model.loss(theta, &Example::labeled(x.to_vec(), y))?;
    Ok(loss - gamma * numeric::sq_dist(x, anchor))
}

/// Gradient-ascent maximization of `loss((x, y); θ) − γ‖x − X‖²` starting at
/// the anchor features. Returns the best-so-far iterate.
pub fn solve_inner_max(
    model: &dyn LossModel,
    theta: &ParamVector,
    anchor: &Example,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    solve_inner_max_from(model, theta, anchor, &anchor.features, cfg)
}

/// Same as [`solve_inner_max`] but starting from an arbitrary feature point;
/// used to probe uniqueness of the maximizer via random restarts.
pub fn solve_inner_max_from(
    model: &dyn LossModel,
    theta: &ParamVector,
    anchor: &Example,
    start: &[f64],
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    let y = anchor.label_or_err()?;
    if cfg.is_no_attack() {
        let loss = model.loss(theta, anchor)?;
        if !loss.is_finite() {
            return Err(Error::DivergedAttack);
        }
        return Ok(AttackResult {
            z_star: anchor.clone(),
            objective: loss,
            iterations: 0,
            final_ascent_gradnorm: 0.0,
        });
    }
    if cfg.gamma == 0.0 {
        return Err(Error::invalid("inner maximization needs gamma > 0"));
    }
    let mut x = start.to_vec();
    let mut best_x = x.clone();
    let mut best = ascent_objective(model, theta, &anchor.features, y, &x, cfg.gamma)?;
    if !best.is_finite() {
        return Err(Error::DivergedAttack);
    }
    let mut prev = best;
    let mut gradnorm = 0.0;
    let mut iterations = 0;
    for t in 0..cfg.steps {
        let mut g = model.grad_features(theta, &Example::labeled(x.clone(), y))?;
        for (gi, (xi, ai)) in g.iter_mut().zip(x.iter().zip(&anchor.features)) {
            *gi -= 2.0 * cfg.gamma * (xi - ai);
        }
        gradnorm = numeric::norm2(&g);
        let rate = (cfg.kappa / cfg.gamma) / (t as f64 + 1.0);
        numeric::axpy(rate, &g, &mut x);
        if !numeric::all_finite(&x) {
            return Err(Error::DivergedAttack);
        }
        let value = ascent_objective(model, theta, &anchor.features, y, &x, cfg.gamma)?;
        if !value.is_finite() {
            return Err(Error::DivergedAttack);
        }
        iterations = t + 1;
        if value > best {
            best = value;
            best_x.copy_from_slice(&x);
        }
        if cfg.delta > 0.0 && (value - prev).abs() < cfg.delta {
            break;
        }
        prev = value;
    }
    Ok(AttackResult {
        z_star: Example::labeled(best_x, y),
        objective: best,
        iterations,
        final_ascent_gradnorm: gradnorm,
    })
}

/// The adversarial loss φ_γ(z; θ): the value of the inner maximization, or
/// the clean loss exactly in no-attack mode.
pub fn phi_gamma(
    model: &dyn LossModel,
    theta: &ParamVector,
    anchor: &Example,
    cfg: &AttackConfig,
) -> Result<f64> {
    Ok(solve_inner_max(model, theta, anchor, cfg)?.objective)
}

/// Outcome of the empirical strong-concavity probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcavityCheck {
    pub passed: bool,
    /// Worst estimate of γ − L_zz over all probed chords: the chord modulus
    /// of the ascent objective minus γ. The squared-L2 transport term
    /// contributes curvature 2γ, so this margin isolates the loss curvature
    /// against the γ − L_zz requirement for a unique maximizer.
    pub margin: f64,
}

/// Probe strong concavity of the ascent objective around the anchor by
/// sampling chords and measuring their curvature.
pub fn check_strong_concavity(
    model: &dyn LossModel,
    theta: &ParamVector,
    anchor: &Example,
    cfg: &AttackConfig,
    probes: usize,
) -> Result<ConcavityCheck> {
    cfg.validate()?;
    if probes < 10 {
        return Err(Error::invalid("need at least 10 probes"));
    }
    if !cfg.gamma.is_finite() {
        return Err(Error::invalid("concavity probe needs a finite gamma"));
    }
    let y = anchor.label_or_err()?;
    let d = anchor.features.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    let mut margin = f64::INFINITY;
    for _ in 0..probes {
        let mut z1 = anchor.features.clone();
        let mut z2 = anchor.features.clone();
        numeric::axpy(1.0, &numeric::in_ball(&mut rng, d, 1.0), &mut z1);
        numeric::axpy(1.0, &numeric::in_ball(&mut rng, d, 1.0), &mut z2);
        let gap = numeric::sq_dist(&z1, &z2);
        if gap < 1e-10 {
            continue;
        }
        let mid: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| 0.5 * (a + b)).collect();
        let j1 = ascent_objective(model, theta, &anchor.features, y, &z1, cfg.gamma)?;
        let j2 = ascent_objective(model, theta, &anchor.features, y, &z2, cfg.gamma)?;
        let jm = ascent_objective(model, theta, &anchor.features, y, &mid, cfg.gamma)?;
        // m-strong concavity along the chord: J(mid) ≥ (J1+J2)/2 + m/8·‖z1−z2‖²
        let chord_modulus = 8.0 * (jm - 0.5 * (j1 + j2)) / gap;
        margin = margin.min(chord_modulus - cfg.gamma);
    }
    Ok(ConcavityCheck {
        passed: margin > 0.0,
        margin,
    })
}

/// Projected-gradient attack: `T` normalized-gradient ascent steps on the
/// loss with step length ε/log(T), projected onto the L2 ε-ball around the
/// original features. A zero gradient leaves the iterate in place.
pub fn pgm_attack(
    model: &dyn LossModel,
    theta: &ParamVector,
    z: &Example,
    epsilon: f64,
    steps: usize,
) -> Result<Example> {
    let y = z.label_or_err()?;
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::invalid("epsilon must be >= 0"));
    }
    if steps < 2 {
        return Err(Error::invalid("pgm needs at least 2 iterations"));
    }
    if epsilon == 0.0 {
        return Ok(z.clone());
    }
    let xi = epsilon / (steps as f64).ln();
    let mut x = z.features.clone();
    for _ in 0..steps {
        let g = model.grad_features(theta, &Example::labeled(x.clone(), y))?;
        let n = numeric::norm2(&g);
        if n > 0.0 {
            numeric::axpy(xi / n, &g, &mut x);
        }
        // project back onto the ball around the original features
        let mut diff: Vec<f64> = x.iter().zip(&z.features).map(|(a, b)| a - b).collect();
        let dn = numeric::norm2(&diff);
        if dn > epsilon {
            for v in diff.iter_mut() {
                *v *= epsilon / dn;
            }
            for (xi_, (oi, di)) in x.iter_mut().zip(z.features.iter().zip(&diff)) {
                *xi_ = oi + di;
            }
        }
    }
    Ok(Example::labeled(x, y))
}
