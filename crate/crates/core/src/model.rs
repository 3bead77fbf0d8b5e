//! Economic model of the retailer game: demand, prices, security investment
//! cost, attack probability, profit and expected utility.
//!
//! Transaction quantities are passed as a flat row-major `m x n` slice
//! (`q[x * n + y]` is the quantity retailer `x` sells in market `y`) and
//! security levels as a length-`m` slice. Indices are zero-based.

use crate::error::{Error, Result};

/// Quadratic transaction cost `c(Q) = (a Q^2 + b Q) s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransactionCost {
    pub a: f64,
    pub b: f64,
    pub s: f64,
}

impl TransactionCost {
    pub fn new(a: f64, b: f64, s: f64) -> Self {
        Self { a, b, s }
    }

    pub fn value(&self, q: f64) -> f64 {
        (self.a * q * q + self.b * q) * self.s
    }

    pub fn marginal(&self, q: f64) -> f64 {
        (2.0 * self.a * q + self.b) * self.s
    }
}

/// Affine inverse demand `rho(d, u) = alpha d + gamma u_bar + kappa`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Market {
    pub alpha: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl Market {
    pub fn new(alpha: f64, gamma: f64, kappa: f64) -> Self {
        Self { alpha, gamma, kappa }
    }

    pub fn price_at(&self, demand: f64, mean_level: f64) -> f64 {
        self.alpha * demand + self.gamma * mean_level + self.kappa
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Retailer {
    /// Per-unit handling cost before any transaction.
    pub handling_cost: f64,
    /// Budget for security investment; `-ln(1 - u) <= budget`.
    pub budget: f64,
    /// Loss incurred when an attack succeeds.
    pub base_loss: f64,
    pub market_share: f64,
    /// Scales the attack probability, `p = (1 - u)(1 - u_bar) * attack_multiplier`.
    pub attack_multiplier: f64,
    /// One entry per market.
    pub costs: Vec<TransactionCost>,
}

/// Full game definition. Immutable once validated; every evaluation below is
/// a pure function of the arguments.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub retailers: Vec<Retailer>,
    pub markets: Vec<Market>,
    pub q_upper: f64,
    /// When set, the security-level gradient carries the retailer's attack
    /// multiplier so that it is the exact derivative of the expected loss.
    /// When cleared, the multiplier is dropped from the gradient only.
    pub loss_gradient_includes_multiplier: bool,
}

pub const DEFAULT_Q_UPPER: f64 = 100.0;

/// Investment cost `h(u) = -ln(1 - u)` of reaching security level `u`.
pub fn security_cost(u: f64) -> Result<f64> {
    check_level(u)?;
    Ok(-(-u).ln_1p())
}

/// `h'(u) = 1 / (1 - u)`.
pub fn security_cost_deriv(u: f64) -> Result<f64> {
    check_level(u)?;
    Ok(1.0 / (1.0 - u))
}

/// Budget constraint value `G = h(u) - B`; feasible iff `G <= 0`.
pub fn budget_gap(u: f64, budget: f64) -> Result<f64> {
    Ok(security_cost(u)? - budget)
}

/// Network-wide security level, the arithmetic mean of all retailers' levels.
pub fn mean_security(u: &[f64]) -> Result<f64> {
    if u.is_empty() {
        return Err(Error::Empty("security levels"));
    }
    Ok(u.iter().sum::<f64>() / u.len() as f64)
}

/// `(1 - u_x)(1 - u_bar) * multiplier`. Accepts the closed interval so that
/// the `u -> 1` limit can be evaluated.
pub fn attack_probability(u_x: f64, u_bar: f64, multiplier: f64) -> Result<f64> {
    for v in [u_x, u_bar] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::SecurityDomain(v));
        }
    }
    Ok((1.0 - u_x) * (1.0 - u_bar) * multiplier)
}

fn check_level(u: f64) -> Result<()> {
    if (0.0..1.0).contains(&u) {
        Ok(())
    } else {
        Err(Error::SecurityDomain(u))
    }
}

impl ModelSpec {
    pub fn m(&self) -> usize {
        self.retailers.len()
    }

    pub fn n(&self) -> usize {
        self.markets.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if self.retailers.is_empty() {
            return bad("at least one retailer is required".into());
        }
        if self.markets.is_empty() {
            return bad("at least one market is required".into());
        }
        if !(self.q_upper > 0.0 && self.q_upper.is_finite()) {
            return bad(format!("q_upper must be positive and finite, got {}", self.q_upper));
        }
        for (x, r) in self.retailers.iter().enumerate() {
            let id = x + 1;
            if r.costs.len() != self.n() {
                return bad(format!(
                    "retailer {id} has {} transaction costs, expected {}",
                    r.costs.len(),
                    self.n()
                ));
            }
            if !(r.budget > 0.0) {
                return bad(format!("retailer {id}: budget must be positive"));
            }
            if !(r.base_loss >= 0.0) {
                return bad(format!("retailer {id}: loss must be nonnegative"));
            }
            if !(0.0..=1.0).contains(&r.market_share) {
                return bad(format!("retailer {id}: market share must lie in [0, 1]"));
            }
            if !(r.attack_multiplier >= 0.0) {
                return bad(format!("retailer {id}: attack multiplier must be nonnegative"));
            }
            if !r.handling_cost.is_finite() || !r.budget.is_finite() || !r.base_loss.is_finite() {
                return bad(format!("retailer {id}: parameters must be finite"));
            }
            for (y, c) in r.costs.iter().enumerate() {
                if !(c.a >= 0.0 && c.s > 0.0 && c.b.is_finite() && c.a.is_finite() && c.s.is_finite()) {
                    return bad(format!(
                        "retailer {id}, market {}: transaction cost needs a >= 0 and s > 0",
                        y + 1
                    ));
                }
            }
        }
        for (y, mk) in self.markets.iter().enumerate() {
            if !(mk.alpha < 0.0) {
                return bad(format!("market {}: slope alpha must be negative", y + 1));
            }
            if !(mk.kappa > 0.0) || !mk.kappa.is_finite() || !mk.gamma.is_finite() {
                return bad(format!("market {}: intercept kappa must be positive", y + 1));
            }
        }
        Ok(())
    }

    pub(crate) fn check_dims(&self, q: &[f64], u: &[f64]) -> Result<()> {
        let expected = self.m() * self.n();
        if q.len() != expected {
            return Err(Error::Dimension { expected, got: q.len() });
        }
        if u.len() != self.m() {
            return Err(Error::Dimension {
                expected: self.m(),
                got: u.len(),
            });
        }
        Ok(())
    }

    fn retailer(&self, x: usize) -> Result<&Retailer> {
        self.retailers.get(x).ok_or(Error::IndexOutOfRange {
            what: "retailer",
            index: x,
            len: self.m(),
        })
    }

    fn market(&self, y: usize) -> Result<&Market> {
        self.markets.get(y).ok_or(Error::IndexOutOfRange {
            what: "market",
            index: y,
            len: self.n(),
        })
    }

    /// Total demand in market `y`: the column sum of `q`.
    pub fn demand(&self, q: &[f64], y: usize) -> Result<f64> {
        self.market(y)?;
        let n = self.n();
        if q.len() != self.m() * n {
            return Err(Error::Dimension {
                expected: self.m() * n,
                got: q.len(),
            });
        }
        Ok((0..self.m()).map(|x| q[x * n + y]).sum())
    }

    pub fn price(&self, y: usize, q: &[f64], u: &[f64]) -> Result<f64> {
        self.check_dims(q, u)?;
        let mk = self.market(y)?;
        Ok(mk.price_at(self.demand(q, y)?, mean_security(u)?))
    }

    /// `d rho_y / d u_x`, identical for every retailer under the mean level.
    pub fn price_level_sensitivity(&self, y: usize) -> Result<f64> {
        Ok(self.market(y)?.gamma / self.m() as f64)
    }

    /// Profit before attacks and security spending.
    pub fn profit(&self, x: usize, q: &[f64], u: &[f64]) -> Result<f64> {
        self.check_dims(q, u)?;
        let r = self.retailer(x)?;
        let n = self.n();
        let u_bar = mean_security(u)?;
        let mut total = 0.0;
        for (y, mk) in self.markets.iter().enumerate() {
            let qxy = q[x * n + y];
            let d: f64 = (0..self.m()).map(|k| q[k * n + y]).sum();
            total += mk.price_at(d, u_bar) * qxy - r.handling_cost * qxy - r.costs[y].value(qxy);
        }
        Ok(total)
    }

    /// `E(U_x) = f_x - D_x p_x - h(u_x)`.
    pub fn expected_utility(&self, x: usize, q: &[f64], u: &[f64]) -> Result<f64> {
        let f = self.profit(x, q, u)?;
        let r = &self.retailers[x];
        let p = attack_probability(u[x], mean_security(u)?, r.attack_multiplier)?;
        Ok(f - r.base_loss * p - security_cost(u[x])?)
    }
}
