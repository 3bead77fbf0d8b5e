//! Brute-force certificate of the Nash property: each retailer searches its
//! own feasible strategies on a grid (refined around the best cell) with
//! rivals fixed, and the largest utility gain is reported.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::vi::{DecisionVector, U_CAP};

/// Default absolute improvement below which the profile is certified.
pub const DEFAULT_IMPROVEMENT_TOL: f64 = 1e-3;

const REFINE_ROUNDS: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct RetailerCheck {
    /// Zero-based.
    pub retailer: usize,
    pub current_utility: f64,
    pub best_utility: f64,
    /// `best_utility - current_utility`, never negative.
    pub improvement: f64,
    pub best_q: Vec<f64>,
    pub best_u: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub retailers: Vec<RetailerCheck>,
    pub max_improvement: f64,
    pub tolerance: f64,
    pub certified: bool,
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.retailers {
            writeln!(
                f,
                "retailer {}: E(U) = {:.6}, best deviation = {:.6}, improvement = {:.3e}",
                c.retailer + 1,
                c.current_utility,
                c.best_utility,
                c.improvement
            )?;
        }
        write!(
            f,
            "max improvement {:.3e} (tolerance {:.1e}): {}",
            self.max_improvement,
            self.tolerance,
            if self.certified {
                "CERTIFIED"
            } else {
                "NOT AN EQUILIBRIUM"
            }
        )
    }
}

/// Largest level retailer `x` can afford: `min(U_CAP, 1 - e^{-B_x})`.
pub fn affordable_level(budget: f64) -> f64 {
    U_CAP.min(-(-budget).exp_m1())
}

fn linspace(lo: f64, hi: f64, k: usize) -> impl Iterator<Item = f64> {
    let span = hi - lo;
    (0..k).map(move |i| {
        if k == 1 {
            lo
        } else if i + 1 == k {
            hi
        } else {
            lo + span * i as f64 / (k - 1) as f64
        }
    })
}

/// Search one retailer's strategy box `[lo, hi]` (quantities then level).
fn grid_search(
    eval: &mut dyn FnMut(&[f64]) -> Result<f64>,
    lo: &[f64],
    hi: &[f64],
    density: usize,
    incumbent: (Vec<f64>, f64),
) -> Result<(Vec<f64>, f64)> {
    let dims = lo.len();
    let axes: Vec<Vec<f64>> = (0..dims).map(|d| linspace(lo[d], hi[d], density).collect()).collect();
    let (mut best_point, mut best_value) = incumbent;
    let mut counter = vec![0usize; dims];
    let mut point = vec![0.0; dims];
    loop {
        for d in 0..dims {
            point[d] = axes[d][counter[d]];
        }
        let v = eval(&point)?;
        if v > best_value {
            best_value = v;
            best_point.copy_from_slice(&point);
        }
        let mut d = 0;
        loop {
            if d == dims {
                return Ok((best_point, best_value));
            }
            counter[d] += 1;
            if counter[d] < axes[d].len() {
                break;
            }
            counter[d] = 0;
            d += 1;
        }
    }
}

pub fn verify_equilibrium(model: &ModelSpec, x: &DecisionVector, density: usize) -> Result<VerificationReport> {
    verify_equilibrium_with_tol(model, x, density, DEFAULT_IMPROVEMENT_TOL)
}

/// Grid search with `density` points per axis over each retailer's own
/// quantities `[0, q_upper]^n` and level `[0, affordable_level]`, followed by
/// refinement rounds around the best cell. Cost is `density^(n+1)` utility
/// evaluations per round and retailer.
pub fn verify_equilibrium_with_tol(
    model: &ModelSpec,
    x: &DecisionVector,
    density: usize,
    tolerance: f64,
) -> Result<VerificationReport> {
    model.validate()?;
    model.check_dims(&x.q, &x.u)?;
    if density < 2 {
        return Err(Error::InvalidConfig("grid density must be at least 2".into()));
    }
    let (m, n) = (model.m(), model.n());
    let mut checks = Vec::with_capacity(m);
    for retailer in 0..m {
        let current = model.expected_utility(retailer, &x.q, &x.u)?;
        let mut q = x.q.clone();
        let mut u = x.u.clone();
        let mut eval = |p: &[f64]| -> Result<f64> {
            q[retailer * n..(retailer + 1) * n].copy_from_slice(&p[..n]);
            u[retailer] = p[n];
            model.expected_utility(retailer, &q, &u)
        };

        let u_max = affordable_level(model.retailers[retailer].budget);
        let domain_lo = vec![0.0; n + 1];
        let mut domain_hi = vec![model.q_upper; n + 1];
        domain_hi[n] = u_max;

        let mut own: Vec<f64> = x.q[retailer * n..(retailer + 1) * n].to_vec();
        own.push(x.u[retailer]);
        let mut best = grid_search(&mut eval, &domain_lo, &domain_hi, density, (own, current))?;

        let mut half_width: Vec<f64> = domain_hi.iter().map(|h| h / (density - 1) as f64).collect();
        for _ in 0..REFINE_ROUNDS {
            let lo: Vec<f64> = (0..=n).map(|d| (best.0[d] - half_width[d]).max(domain_lo[d])).collect();
            let hi: Vec<f64> = (0..=n).map(|d| (best.0[d] + half_width[d]).min(domain_hi[d])).collect();
            best = grid_search(&mut eval, &lo, &hi, density, best)?;
            for w in &mut half_width {
                *w *= 2.0 / (density - 1) as f64;
            }
        }

        let (point, value) = best;
        checks.push(RetailerCheck {
            retailer,
            current_utility: current,
            best_utility: value,
            improvement: (value - current).max(0.0),
            best_q: point[..n].to_vec(),
            best_u: point[n],
        });
    }
    let max_improvement = checks.iter().map(|c| c.improvement).fold(0.0, f64::max);
    Ok(VerificationReport {
        retailers: checks,
        max_improvement,
        tolerance,
        certified: max_improvement <= tolerance,
    })
}
