//! Monte Carlo estimation of the semi-supervised Monge Rademacher
//! complexity on enumerated spaces, the classical estimator it reduces to,
//! and the distribution-free capacity-bound check.

use super::instance::FiniteInstance;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const MAX_CLASS: usize = 200;

/// Monte Carlo estimate with per-draw detail kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// Per-round draw values of the labeled term g_l.
    pub labeled_draws: Vec<f64>,
    /// Per-label, per-round draw values of the unlabeled term g_ul.
    pub unlabeled_draws: Vec<Vec<f64>>,
}

fn check_class(class: &[Vec<f64>], num_points: usize) -> Result<()> {
    if class.is_empty() {
        return Err(Error::invalid("function class must be non-empty"));
    }
    if class.len() > MAX_CLASS {
        return Err(Error::InstanceTooLarge {
            limit: MAX_CLASS,
            got: class.len(),
        });
    }
    for row in class {
        if row.len() != num_points {
            return Err(Error::Shape {
                expected: num_points,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("function values must be finite"));
        }
    }
    Ok(())
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &v in p {
        acc += v;
        cdf.push(acc);
    }
    cdf
}

fn sample_cdf<R: Rng>(rng: &mut R, cdf: &[f64]) -> usize {
    let u: f64 = rng.random::<f64>() * cdf.last().copied().unwrap_or(1.0);
    cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
}

/// ε-neighborhood of every point: all z' with c(z, z') ≤ ε, where the cost's
/// first argument is the original point. Each point is always its own
/// neighbor through the zero diagonal.
fn neighborhoods(cost: &[Vec<f64>], epsilon: f64) -> Vec<Vec<usize>> {
    cost.iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|&(_, &c)| c <= epsilon)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

/// One Monte Carlo draw: sample `m` domain indices and signs, then evaluate
/// `sup_f (1/m) Σ_i σ_i · sup_{z' ∈ N(point_of(idx_i))} f(z')`.
fn draw_value<R: Rng>(
    rng: &mut R,
    class: &[Vec<f64>],
    cdf: &[f64],
    point_of: &dyn Fn(usize) -> usize,
    m: usize,
    nbhd: &[Vec<usize>],
) -> f64 {
    let idx: Vec<usize> = (0..m).map(|_| sample_cdf(rng, cdf)).collect();
    let signs: Vec<f64> = (0..m)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut best = f64::NEG_INFINITY;
    for f in class {
        let mut sum = 0.0;
        for (i, &raw) in idx.iter().enumerate() {
            let z = point_of(raw);
            let sup = nbhd[z]
                .iter()
                .map(|&w| f[w])
                .fold(f64::NEG_INFINITY, f64::max);
            sum += signs[i] * sup;
        }
        best = best.max(sum / m as f64);
    }
    best
}

fn mean_stderr(draws: &[f64]) -> (f64, f64) {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    if draws.len() < 2 {
        return (mean, 0.0);
    }
    let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of the SSM Rademacher complexity
/// `η·g_l(⌈nη⌉) + (1−η)·g_ul(⌈n(1−η)⌉)` for a finite function class given by
/// its value matrix over the instance's points. The per-point adversarial
/// sup is exact (neighborhood enumeration); the expectation over samples and
/// signs is estimated over `mc_rounds` draws, deterministically in the seed.
pub fn ssm_rademacher(
    class: &[Vec<f64>],
    inst: &FiniteInstance,
    epsilon: f64,
    eta: f64,
    n: usize,
    mc_rounds: usize,
    seed: u64,
) -> Result<RademacherEstimate> {
    check_class(class, inst.num_points())?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid("eta must lie in [0, 1]"));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::invalid("epsilon must be >= 0"));
    }
    if n == 0 || mc_rounds == 0 {
        return Err(Error::invalid("n and mc_rounds must be positive"));
    }
    let ny = inst.num_labels();
    let nbhd = neighborhoods(&inst.cost, epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let m_l = (n as f64 * eta).ceil() as usize;
    let mut labeled_draws = Vec::new();
    if eta > 0.0 && m_l > 0 {
        let cdf = cumulative(&inst.p0);
        let identity = |z: usize| z;
        for _ in 0..mc_rounds {
            labeled_draws.push(draw_value(&mut rng, class, &cdf, &identity, m_l, &nbhd));
        }
    }

    let m_ul = (n as f64 * (1.0 - eta)).ceil() as usize;
    let mut unlabeled_draws: Vec<Vec<f64>> = Vec::new();
    if eta < 1.0 && m_ul > 0 {
        let marginal: Vec<f64> = (0..inst.num_features())
            .map(|x| inst.marginal_x(x))
            .collect();
        let cdf = cumulative(&marginal);
        for y in 0..ny {
            let with_label = move |x: usize| x * ny + y;
            let mut draws = Vec::with_capacity(mc_rounds);
            for _ in 0..mc_rounds {
                draws.push(draw_value(&mut rng, class, &cdf, &with_label, m_ul, &nbhd));
            }
            unlabeled_draws.push(draws);
        }
    }

    let (l_mean, l_se) = if labeled_draws.is_empty() {
        (0.0, 0.0)
    } else {
        mean_stderr(&labeled_draws)
    };
    let mut estimate = eta * l_mean;
    let mut variance = (eta * l_se).powi(2);
    for draws in &unlabeled_draws {
        let (mean, se) = mean_stderr(draws);
        estimate += (1.0 - eta) * mean;
        variance += ((1.0 - eta) * se).powi(2);
    }
    Ok(RademacherEstimate {
        estimate,
        stderr: variance.sqrt(),
        labeled_draws,
        unlabeled_draws,
    })
}

/// Classical empirical Rademacher complexity estimator: the same sampling
/// discipline with trivial (identity) neighborhoods and fully labeled draws.
/// With ε = 0, η = 1 and strictly positive off-diagonal costs,
/// [`ssm_rademacher`] reproduces this bitwise on a shared seed.
pub fn classical_rademacher(
    class: &[Vec<f64>],
    inst: &FiniteInstance,
    n: usize,
    mc_rounds: usize,
    seed: u64,
) -> Result<RademacherEstimate> {
    check_class(class, inst.num_points())?;
    if n == 0 || mc_rounds == 0 {
        return Err(Error::invalid("n and mc_rounds must be positive"));
    }
    let nbhd: Vec<Vec<usize>> = (0..inst.num_points()).map(|z| vec![z]).collect();
    let cdf = cumulative(&inst.p0);
    let identity = |z: usize| z;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(mc_rounds);
    for _ in 0..mc_rounds {
        draws.push(draw_value(&mut rng, class, &cdf, &identity, n, &nbhd));
    }
    let (mean, se) = mean_stderr(&draws);
    Ok(RademacherEstimate {
        estimate: mean,
        stderr: se,
        labeled_draws: draws,
        unlabeled_draws: Vec::new(),
    })
}

/// Result of checking the distribution-free capacity bound
/// `R_SSM ≤ η·Δ(⌈nη⌉) + (1−η)·|Y|·Δ(⌈n(1−η)⌉)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
    /// estimate + 3·stderr ≤ bound: the bound holds with Monte Carlo slack.
    pub holds: bool,
    /// estimate − 3·stderr ≤ bound: the data cannot refute the bound.
    pub holds_lower: bool,
}

/// Check the capacity bound for a function class with a distribution-free
/// Rademacher bound Δ(n) (for example the finite-class bound
/// `Δ(n) = sqrt(2·log|F|/n)` for functions bounded by one).
#[allow(clippy::too_many_arguments)]
pub fn dist_free_bound_check(
    class: &[Vec<f64>],
    inst: &FiniteInstance,
    delta_bound: &dyn Fn(usize) -> f64,
    epsilon: f64,
    eta: f64,
    n: usize,
    mc_rounds: usize,
    seed: u64,
) -> Result<BoundCheck> {
    let est = ssm_rademacher(class, inst, epsilon, eta, n, mc_rounds, seed)?;
    let mut bound = 0.0;
    if eta > 0.0 {
        bound += eta * delta_bound((n as f64 * eta).ceil() as usize);
    }
    if eta < 1.0 {
        let m = (n as f64 * (1.0 - eta)).ceil() as usize;
        bound += (1.0 - eta) * inst.num_labels() as f64 * delta_bound(m);
    }
    Ok(BoundCheck {
        estimate: est.estimate,
        stderr: est.stderr,
        bound,
        holds: est.estimate + 3.0 * est.stderr <= bound,
        holds_lower: est.estimate - 3.0 * est.stderr <= bound,
    })
}
