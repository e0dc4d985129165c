//! Enumerated feature-label spaces with a probability table and a finite
//! function class, plus the ρ_λ / GAP / Γ / Λ functionals and the minimum
//! supervision ratio computed over all 2^|Φ| subsets.

use crate::error::{Error, Result};
use crate::numeric;
use crate::softmin::{softmin, LambdaParam};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MAX_FEATURE_POINTS: usize = 12;
pub const MAX_LABELS: usize = 4;
pub const MAX_FUNCTIONS: usize = 15;

/// Slack allowed when testing ρ_λ ≥ 0 in floating point.
const RHO_TOL: f64 = 1e-12;

/// An enumerated sample space Z = X×Y with a probability table, a finite
/// function class given by its value matrix, and a transportation cost
/// between points. Point k corresponds to the pair (x, y) = (k / |Y|, k % |Y|).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteInstance {
    /// The points of Z in enumeration order, as (feature index, label) pairs.
    pub points: Vec<[usize; 2]>,
    /// Probability of each point; sums to one.
    pub p0: Vec<f64>,
    /// Function class: one row of |Z| values per function.
    pub phi_matrix: Vec<Vec<f64>>,
    /// Transportation cost between points; nonnegative with zero diagonal,
    /// not necessarily symmetric. `cost[i][j]` is the cost of moving point j
    /// to point i.
    pub cost: Vec<Vec<f64>>,
}

impl FiniteInstance {
    pub fn new(
        num_features: usize,
        num_labels: usize,
        p0: Vec<f64>,
        phi_matrix: Vec<Vec<f64>>,
        cost: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let points = (0..num_features)
            .flat_map(|x| (0..num_labels).map(move |y| [x, y]))
            .collect();
        let inst = FiniteInstance {
            points,
            p0,
            phi_matrix,
            cost,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let nx = self.num_features();
        let ny = self.num_labels();
        if nx == 0 || ny == 0 {
            return Err(Error::invalid("instance must have points"));
        }
        if nx > MAX_FEATURE_POINTS {
            return Err(Error::InstanceTooLarge {
                limit: MAX_FEATURE_POINTS,
                got: nx,
            });
        }
        if ny > MAX_LABELS {
            return Err(Error::InstanceTooLarge {
                limit: MAX_LABELS,
                got: ny,
            });
        }
        if self.phi_matrix.len() > MAX_FUNCTIONS {
            return Err(Error::InstanceTooLarge {
                limit: MAX_FUNCTIONS,
                got: self.phi_matrix.len(),
            });
        }
        if self.phi_matrix.is_empty() {
            return Err(Error::invalid("instance needs at least one function"));
        }
        let nz = nx * ny;
        for (k, &[x, y]) in self.points.iter().enumerate() {
            if x != k / ny || y != k % ny {
                return Err(Error::invalid(
                    "points must enumerate X×Y in row-major order",
                ));
            }
        }
        if self.p0.len() != nz {
            return Err(Error::Shape {
                expected: nz,
                got: self.p0.len(),
            });
        }
        if self.p0.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::invalid("p0 entries must be finite and nonnegative"));
        }
        let total: f64 = self.p0.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("p0 sums to {total}, expected 1")));
        }
        for row in &self.phi_matrix {
            if row.len() != nz {
                return Err(Error::Shape {
                    expected: nz,
                    got: row.len(),
                });
            }
            if !numeric::all_finite(row) {
                return Err(Error::invalid("phi values must be finite"));
            }
        }
        if self.cost.len() != nz {
            return Err(Error::Shape {
                expected: nz,
                got: self.cost.len(),
            });
        }
        for (i, row) in self.cost.iter().enumerate() {
            if row.len() != nz {
                return Err(Error::Shape {
                    expected: nz,
                    got: row.len(),
                });
            }
            if row.iter().any(|&c| !c.is_finite() || c < 0.0) {
                return Err(Error::invalid(
                    "cost entries must be finite and nonnegative",
                ));
            }
            if row[i].abs() > 1e-12 {
                return Err(Error::invalid("cost diagonal must be zero"));
            }
        }
        Ok(())
    }

    pub fn num_features(&self) -> usize {
        self.points.iter().map(|p| p[0] + 1).max().unwrap_or(0)
    }

    pub fn num_labels(&self) -> usize {
        self.points.iter().map(|p| p[1] + 1).max().unwrap_or(0)
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn num_functions(&self) -> usize {
        self.phi_matrix.len()
    }

    pub fn point_index(&self, x: usize, y: usize) -> usize {
        x * self.num_labels() + y
    }

    /// Marginal probability of feature point x.
    pub fn marginal_x(&self, x: usize) -> f64 {
        let ny = self.num_labels();
        (0..ny).map(|y| self.p0[x * ny + y]).sum()
    }

    /// E_{P0}[φ_j].
    pub fn expectation(&self, phi_index: usize) -> Result<f64> {
        let row = self
            .phi_matrix
            .get(phi_index)
            .ok_or_else(|| Error::invalid(format!("phi index {phi_index} out of range")))?;
        Ok(numeric::dot(&self.p0, row))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: FiniteInstance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    /// Random instance for experiments and tests: uniform-ish probabilities,
    /// function values in [0, 1], squared-distance-flavored costs.
    pub fn random(
        num_features: usize,
        num_labels: usize,
        num_functions: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nz = num_features * num_labels;
        let mut p0: Vec<f64> = (0..nz).map(|_| rng.random::<f64>() + 0.05).collect();
        let total: f64 = p0.iter().sum();
        for p in p0.iter_mut() {
            *p /= total;
        }
        let phi_matrix = (0..num_functions)
            .map(|_| (0..nz).map(|_| rng.random::<f64>()).collect())
            .collect();
        // random embedding in the plane gives a zero-diagonal metric-like cost
        let coords: Vec<(f64, f64)> = (0..nz)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let cost = (0..nz)
            .map(|i| {
                (0..nz)
                    .map(|j| {
                        let dx = coords[i].0 - coords[j].0;
                        let dy = coords[i].1 - coords[j].1;
                        dx * dx + dy * dy
                    })
                    .collect()
            })
            .collect();
        FiniteInstance::new(num_features, num_labels, p0, phi_matrix, cost)
    }

    /// Like [`FiniteInstance::random`], but the class additionally contains a
    /// label-constant baseline with strictly smallest expectation. On such
    /// instances ρ_λ(φ*) vanishes identically, Γ(ψ; λ) is non-decreasing in
    /// λ, and the minimum supervision ratio is provably non-increasing in λ
    /// — the shape the analysis expects. On unrestricted instances the raw
    /// definition need not be λ-monotone.
    pub fn random_with_baseline(
        num_features: usize,
        num_labels: usize,
        num_functions: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nz = num_features * num_labels;
        let mut p0: Vec<f64> = (0..nz).map(|_| rng.random::<f64>() + 0.05).collect();
        let total: f64 = p0.iter().sum();
        for p in p0.iter_mut() {
            *p /= total;
        }
        let mut phi_matrix: Vec<Vec<f64>> = (0..num_functions)
            .map(|_| (0..nz).map(|_| 0.3 + 0.7 * rng.random::<f64>()).collect())
            .collect();
        phi_matrix.push(vec![0.1; nz]);
        let coords: Vec<(f64, f64)> = (0..nz)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let cost = (0..nz)
            .map(|i| {
                (0..nz)
                    .map(|j| {
                        let dx = coords[i].0 - coords[j].0;
                        let dy = coords[i].1 - coords[j].1;
                        dx * dx + dy * dy
                    })
                    .collect()
            })
            .collect();
        FiniteInstance::new(num_features, num_labels, p0, phi_matrix, cost)
    }
}

/// ρ_λ(φ) = E_{P0_X}[ softmin_y φ(X, ·) ] − E_{P0}[φ], exactly by enumeration.
pub fn rho_lambda(inst: &FiniteInstance, phi_index: usize, lambda: LambdaParam) -> Result<f64> {
    let row = inst
        .phi_matrix
        .get(phi_index)
        .ok_or_else(|| Error::invalid(format!("phi index {phi_index} out of range")))?;
    let ny = inst.num_labels();
    let mut soft_term = 0.0;
    for x in 0..inst.num_features() {
        let px = inst.marginal_x(x);
        if px == 0.0 {
            continue;
        }
        let values = &row[x * ny..(x + 1) * ny];
        soft_term += px * softmin(values, lambda)?;
    }
    Ok(soft_term - inst.expectation(phi_index)?)
}

fn check_subset(inst: &FiniteInstance, psi: &[usize]) -> Result<Vec<usize>> {
    let mut sorted = psi.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != psi.len() {
        return Err(Error::invalid("subset contains repeated indices"));
    }
    if sorted.iter().any(|&j| j >= inst.num_functions()) {
        return Err(Error::invalid("subset index out of range"));
    }
    Ok(sorted)
}

/// Index of φ* = argmin over the class of E_{P0}[φ], lowest index on ties.
fn phi_star(inst: &FiniteInstance) -> Result<usize> {
    let mut best = 0;
    let mut best_val = inst.expectation(0)?;
    for j in 1..inst.num_functions() {
        let v = inst.expectation(j)?;
        if v < best_val {
            best_val = v;
            best = j;
        }
    }
    Ok(best)
}

/// Smallest λ for which ρ_λ(φ) ≥ 0 holds for every φ in the subset. Relies
/// on ρ_λ being non-decreasing in λ; bisection brackets [−1e6, 1e6], where
/// the endpoints already behave as ±∞.
fn lambda_threshold(inst: &FiniteInstance, psi: &[usize]) -> Result<f64> {
    if psi.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    let feasible = |lambda: LambdaParam| -> Result<bool> {
        for &j in psi {
            if rho_lambda(inst, j, lambda)? < -RHO_TOL {
                return Ok(false);
            }
        }
        Ok(true)
    };
    if feasible(LambdaParam::NEG_INF)? {
        return Ok(f64::NEG_INFINITY);
    }
    if !feasible(LambdaParam::POS_INF)? {
        return Ok(f64::INFINITY);
    }
    let mut lo = -1e6;
    let mut hi = 1e6;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if feasible(LambdaParam::new(mid)?)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// GAP, Γ(·; λ) and Λ of a subset ψ of the function class.
#[derive(Debug)]
pub struct GapGammaLambda<'a> {
    inst: &'a FiniteInstance,
    psi: Vec<usize>,
    star: usize,
    /// GAP(ψ): smallest expected-loss gap to functions outside ψ; +∞ when
    /// ψ is the whole class.
    pub gap: f64,
    /// Λ(ψ): infimum λ keeping ρ_λ nonnegative on all of ψ.
    pub lambda_threshold: f64,
}

impl GapGammaLambda<'_> {
    /// Γ(ψ; λ) = inf over φ outside ψ of ρ_λ(φ) − ρ_λ(φ*); 0 when ψ = Φ.
    pub fn gamma(&self, lambda: LambdaParam) -> Result<f64> {
        if self.psi.len() == self.inst.num_functions() {
            return Ok(0.0);
        }
        let rho_star = rho_lambda(self.inst, self.star, lambda)?;
        let mut best = f64::INFINITY;
        for j in 0..self.inst.num_functions() {
            if self.psi.binary_search(&j).is_ok() {
                continue;
            }
            best = best.min(rho_lambda(self.inst, j, lambda)? - rho_star);
        }
        Ok(best)
    }
}

/// Evaluate GAP(ψ) and Λ(ψ), returning a handle that can also evaluate
/// Γ(ψ; λ) at any λ.
pub fn gap_gamma_lambda<'a>(inst: &'a FiniteInstance, psi: &[usize]) -> Result<GapGammaLambda<'a>> {
    let psi = check_subset(inst, psi)?;
    let star = phi_star(inst)?;
    let gap = if psi.len() == inst.num_functions() {
        f64::INFINITY
    } else {
        let e_star = inst.expectation(star)?;
        let mut best = f64::INFINITY;
        for j in 0..inst.num_functions() {
            if psi.binary_search(&j).is_err() {
                best = best.min(inst.expectation(j)? - e_star);
            }
        }
        best
    };
    let threshold = lambda_threshold(inst, &psi)?;
    Ok(GapGammaLambda {
        inst,
        psi,
        star,
        gap,
        lambda_threshold: threshold,
    })
}

/// Arguments of the minimum supervision ratio: pessimism λ and safety margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsrQuery {
    pub lambda: LambdaParam,
    pub margin: f64,
}

impl MsrQuery {
    pub fn new(lambda: LambdaParam, margin: f64) -> Result<Self> {
        if margin.is_nan() || margin < 0.0 {
            return Err(Error::invalid("margin must be >= 0"));
        }
        Ok(MsrQuery { lambda, margin })
    }
}

/// Value of h(1 − (GAP − ζ)/u(−Γ)) with the ramp/clamp conventions: when the
/// denominator u(−Γ) vanishes, a nonnegative numerator is read as ratio +∞
/// (value 0) and a negative numerator as ratio −∞ (value 1).
fn msr_subset_value(gap: f64, gamma: f64, zeta: f64) -> f64 {
    let numerator = gap - zeta;
    let denominator = (-gamma).max(0.0);
    if denominator > 0.0 {
        (1.0 - numerator / denominator).clamp(0.0, 1.0)
    } else if numerator >= 0.0 {
        0.0
    } else {
        1.0
    }
}

/// Minimum supervision ratio: exact infimum over all subsets ψ ⊆ Φ with
/// Λ(ψ) ≤ λ of h(1 − (GAP(ψ) − ζ)/u(−Γ(ψ; λ))); 1 when no subset is
/// feasible.
pub fn msr(inst: &FiniteInstance, query: &MsrQuery) -> Result<f64> {
    if query.margin < 0.0 || query.margin.is_nan() {
        return Err(Error::invalid("margin must be >= 0"));
    }
    let m = inst.num_functions();
    if m > MAX_FUNCTIONS {
        return Err(Error::InstanceTooLarge {
            limit: MAX_FUNCTIONS,
            got: m,
        });
    }
    let lambda = query.lambda;
    let star = phi_star(inst)?;
    let expectations: Vec<f64> = (0..m).map(|j| inst.expectation(j)).collect::<Result<_>>()?;
    let e_star = expectations[star];
    let rho_at_lambda: Vec<f64> = (0..m)
        .map(|j| rho_lambda(inst, j, lambda))
        .collect::<Result<_>>()?;
    // Λ(ψ) = max over members of the singleton thresholds, so precompute them
    let single_thresholds: Vec<f64> = (0..m)
        .map(|j| lambda_threshold(inst, &[j]))
        .collect::<Result<_>>()?;

    let mut best: Option<f64> = None;
    for mask in 0u32..(1u32 << m) {
        let mut lam_psi = f64::NEG_INFINITY;
        for (j, &threshold) in single_thresholds.iter().enumerate() {
            if mask & (1 << j) != 0 {
                lam_psi = lam_psi.max(threshold);
            }
        }
        if lam_psi > lambda.value() {
            continue;
        }
        let full = mask == (1u32 << m) - 1;
        let (gap, gamma) = if full {
            (f64::INFINITY, 0.0)
        } else {
            let mut gap = f64::INFINITY;
            let mut gamma = f64::INFINITY;
            for j in 0..m {
                if mask & (1 << j) == 0 {
                    gap = gap.min(expectations[j] - e_star);
                    gamma = gamma.min(rho_at_lambda[j] - rho_at_lambda[star]);
                }
            }
            (gap, gamma)
        };
        let value = msr_subset_value(gap, gamma, query.margin);
        best = Some(best.map_or(value, |b: f64| b.min(value)));
    }
    Ok(best.unwrap_or(1.0))
}
