//! Scale-based Nash equilibria of the single-unit ACPR double auction.
//!
//! Every trader bids `alpha * theta` where `theta` is its private type drawn
//! uniformly on a known support. Two settings are covered: one buyer against
//! one seller (OBOS) and two symmetric buyers against one seller (TBOS). The
//! analytical first-order conditions are paired with a Monte-Carlo oracle
//! that simulates the auction through [`crate::auction`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::{clear_acpr, clear_single_unit, OrderBook, Side};

#[derive(Debug, Error, PartialEq)]
pub enum EquilibriumError {
    #[error("invalid type bounds: need 0 <= low < high on both sides, got {0:?}")]
    InvalidBounds([f64; 4]),
    #[error("closed form is degenerate for these bounds (denominator {0})")]
    Degenerate(f64),
    #[error("scale factors must be strictly positive, got ({0}, {1})")]
    NonPositiveScale(f64, f64),
    #[error("root finder did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid best-response grid")]
    InvalidGrid,
}

/// Supports of the uniform type distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformBounds {
    pub buyer_low: f64,
    pub buyer_high: f64,
    pub seller_low: f64,
    pub seller_high: f64,
}

impl UniformBounds {
    pub fn new(
        buyer_low: f64,
        buyer_high: f64,
        seller_low: f64,
        seller_high: f64,
    ) -> Result<Self, EquilibriumError> {
        let raw = [buyer_low, buyer_high, seller_low, seller_high];
        let ok = raw.iter().all(|v| v.is_finite())
            && 0.0 <= buyer_low
            && buyer_low < buyer_high
            && 0.0 <= seller_low
            && seller_low < seller_high;
        if !ok {
            return Err(EquilibriumError::InvalidBounds(raw));
        }
        Ok(Self {
            buyer_low,
            buyer_high,
            seller_low,
            seller_high,
        })
    }

    pub fn unit() -> Self {
        Self::new(0.0, 1.0, 0.0, 1.0).unwrap()
    }

    /// `(h_B^2 - l_B^2) / (h_B^3 - l_B^3)`
    pub fn x(&self) -> f64 {
        let (l, h) = (self.buyer_low, self.buyer_high);
        (h * h - l * l) / (h.powi(3) - l.powi(3))
    }

    /// `(h_S^2 - l_S^2) / (h_S^3 - l_S^3)`
    pub fn y(&self) -> f64 {
        let (l, h) = (self.seller_low, self.seller_high);
        (h * h - l * l) / (h.powi(3) - l.powi(3))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleProfile {
    pub buyer: f64,
    pub seller: f64,
}

impl ScaleProfile {
    pub fn new(buyer: f64, seller: f64) -> Result<Self, EquilibriumError> {
        if !(buyer > 0.0 && seller > 0.0 && buyer.is_finite() && seller.is_finite()) {
            return Err(EquilibriumError::NonPositiveScale(buyer, seller));
        }
        Ok(Self { buyer, seller })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Obos,
    Tbos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Buyer,
    Seller,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    RootFind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub profile: ScaleProfile,
    pub feasible: bool,
    pub method: Method,
    pub iterations: usize,
    pub residuals: (f64, f64),
}

/// Whether bids stay inside the opposite side's support, which the
/// integration limits of the utility derivation rely on.
pub fn feasibility_check(bounds: &UniformBounds, profile: &ScaleProfile, setting: Setting) -> bool {
    let ratio = profile.buyer / profile.seller;
    match setting {
        Setting::Obos => {
            ratio * bounds.buyer_high <= bounds.seller_high
                && bounds.seller_low / ratio >= bounds.buyer_low
        }
        Setting::Tbos => {
            ratio * bounds.buyer_high <= bounds.seller_high
                && bounds.seller_high / ratio <= bounds.buyer_high
        }
    }
}

/// Stationary point of the two OBOS reaction equations.
pub fn obos_closed_form(bounds: &UniformBounds) -> Result<ScaleProfile, EquilibriumError> {
    let (x, y) = (bounds.x(), bounds.y());
    let (ls, hb) = (bounds.seller_low, bounds.buyer_high);
    let denom = 4.0 - ls * hb * x * y;
    if denom.abs() < 1e-12 {
        return Err(EquilibriumError::Degenerate(denom));
    }
    let seller = 4.0 / 3.0 * (2.0 + hb * y) / denom;
    let buyer = 4.0 / 3.0 * (2.0 + ls * x) / denom;
    ScaleProfile::new(buyer, seller).map_err(|_| EquilibriumError::Degenerate(denom))
}

/// Residuals of the buyer and seller reaction equations
/// `alpha_B = 2/3 + alpha_S l_S x / 2` and `alpha_S = 2/3 + alpha_B h_B y / 2`.
pub fn obos_reaction_residuals(bounds: &UniformBounds, profile: &ScaleProfile) -> (f64, f64) {
    let rb = profile.buyer - (2.0 / 3.0 + profile.seller * bounds.seller_low * bounds.x() / 2.0);
    let rs = profile.seller - (2.0 / 3.0 + profile.buyer * bounds.buyer_high * bounds.y() / 2.0);
    (rb, rs)
}

/// Exact OBOS expected utility of `role` under `profile`, integrating the
/// realised utility over the region where the bid meets the ask.
pub fn obos_expected_utility(bounds: &UniformBounds, profile: &ScaleProfile, role: Role) -> f64 {
    let (lb, hb, ls, hs) = (
        bounds.buyer_low,
        bounds.buyer_high,
        bounds.seller_low,
        bounds.seller_high,
    );
    let (ab, as_) = (profile.buyer, profile.seller);
    let r = ab / as_;
    match role {
        Role::Buyer => {
            let inner = |tb: f64| {
                let u = (r * tb).clamp(ls, hs);
                ((u - ls) * tb * (1.0 - ab / 2.0) - as_ * (u * u - ls * ls) / 4.0) / (hs - ls)
            };
            piecewise_simpson(inner, lb, hb, &[ls / r, hs / r]) / (hb - lb)
        }
        Role::Seller => {
            let inner = |ts: f64| {
                let lo = (ts / r).clamp(lb, hb);
                (ab * (hb * hb - lo * lo) / 4.0 + (as_ / 2.0 - 1.0) * ts * (hb - lo)) / (hb - lb)
            };
            piecewise_simpson(inner, ls, hs, &[r * lb, r * hb]) / (hs - ls)
        }
    }
}

/// Simpson's rule on each smooth piece of `f` between the given breakpoints.
/// The integrands above are quadratic on every piece, so the result is exact.
fn piecewise_simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, breaks: &[f64]) -> f64 {
    let mut cuts = vec![lo, hi];
    cuts.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        })
        .sum()
}

/// TBOS equilibrium for unit supports: `alpha_B = 3/4`, `alpha_S = (1 + sqrt 10) / 4`.
///
/// The other root of the seller quadratic is negative and is never returned.
pub fn tbos_unit_closed_form() -> ScaleProfile {
    ScaleProfile {
        buyer: 0.75,
        seller: (1.0 + 10f64.sqrt()) / 4.0,
    }
}

/// Left-hand sides of the TBOS first-order conditions, `(d U_B1/d alpha_B, d U_S/d alpha_S / 2)`.
pub fn tbos_foc_residuals(bounds: &UniformBounds, profile: &ScaleProfile) -> (f64, f64) {
    let (lb, hb, ls, hs) = (
        bounds.buyer_low,
        bounds.buyer_high,
        bounds.seller_low,
        bounds.seller_high,
    );
    let (ab, as_) = (profile.buyer, profile.seller);
    let d1 = hb - lb;
    let d2 = hb * hb - lb * lb;
    let d3 = hb.powi(3) - lb.powi(3);
    let d4 = hb.powi(4) - lb.powi(4);

    let buyer = d1 * (ab * lb.powi(3) / (2.0 * as_) - ls * lb * lb / 4.0)
        + d2 / 2.0 * (-lb * lb / (2.0 * as_) + as_ * ls * ls / (2.0 * ab * ab) - lb * ls / 2.0)
        + d3 / 3.0 * (ls / 4.0 - lb / as_ + 3.0 * ab * lb / (2.0 * as_))
        + d4 / 4.0 * (-4.0 * ab / (3.0 * as_) + 1.0 / as_);

    let s2 = hs * hs - ls * ls;
    let s3 = hs.powi(3) - ls.powi(3);
    let s4 = hs.powi(4) - ls.powi(4);
    let seller = s4 / 4.0 * (as_ / (ab * ab) - as_ * as_ / (ab * ab))
        + s3 / 3.0 * (3.0 * as_ * lb / (2.0 * ab) - lb / ab - as_ * hb / (2.0 * ab))
        + s2 / 2.0 * (-hb * lb / 2.0 + hb * hb / 2.0);

    (buyer, seller)
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub jacobian_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 200,
            jacobian_step: 1e-6,
        }
    }
}

pub fn tbos_general_solve(
    bounds: &UniformBounds,
    init: ScaleProfile,
) -> Result<EquilibriumResult, EquilibriumError> {
    tbos_general_solve_with(bounds, init, NewtonOptions::default())
}

/// Damped Newton on the two TBOS first-order conditions.
///
/// The Jacobian is taken by central differences; where it is singular the
/// step falls back to a Levenberg-regularised one. A step is halved until it
/// keeps both scale factors positive and does not increase the squared residual.
pub fn tbos_general_solve_with(
    bounds: &UniformBounds,
    init: ScaleProfile,
    opts: NewtonOptions,
) -> Result<EquilibriumResult, EquilibriumError> {
    let init = ScaleProfile::new(init.buyer, init.seller)?;
    let f = |p: [f64; 2]| {
        let (a, b) = tbos_foc_residuals(bounds, &ScaleProfile { buyer: p[0], seller: p[1] });
        [a, b]
    };
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
    let merit = |r: [f64; 2]| r[0] * r[0] + r[1] * r[1];

    let mut x = [init.buyer, init.seller];
    let mut r = f(x);
    let mut iterations = 0;

    while norm(r) >= opts.tolerance {
        if iterations == opts.max_iterations {
            return Err(EquilibriumError::NoConvergence {
                iterations,
                residual: norm(r),
            });
        }
        iterations += 1;

        let h = opts.jacobian_step;
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut up = x;
            let mut dn = x;
            up[k] += h;
            dn[k] -= h;
            let (fu, fd) = (f(up), f(dn));
            jac[0][k] = (fu[0] - fd[0]) / (2.0 * h);
            jac[1][k] = (fu[1] - fd[1]) / (2.0 * h);
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let scale: f64 = jac.iter().flatten().map(|v| v * v).sum();
        if !det.is_finite() || !scale.is_finite() || scale == 0.0 {
            return Err(EquilibriumError::NoConvergence {
                iterations,
                residual: norm(r),
            });
        }
        let step = if det.abs() > 1e-8 * scale {
            [
                -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
                -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
            ]
        } else {
            // Singular Jacobian: Levenberg step on (J^T J + mu I).
            let mu = 1e-3 * scale;
            let a = jac[0][0] * jac[0][0] + jac[1][0] * jac[1][0] + mu;
            let b = jac[0][0] * jac[0][1] + jac[1][0] * jac[1][1];
            let d = jac[0][1] * jac[0][1] + jac[1][1] * jac[1][1] + mu;
            let g0 = jac[0][0] * r[0] + jac[1][0] * r[1];
            let g1 = jac[0][1] * r[0] + jac[1][1] * r[1];
            let m = a * d - b * b;
            [-(d * g0 - b * g1) / m, -(-b * g0 + a * g1) / m]
        };

        let mut damping = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = [x[0] + damping * step[0], x[1] + damping * step[1]];
            if trial[0] > 0.0 && trial[1] > 0.0 {
                let rt = f(trial);
                if merit(rt).is_finite() && merit(rt) <= merit(r) {
                    x = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            damping *= 0.5;
        }
        if !accepted {
            return Err(EquilibriumError::NoConvergence {
                iterations,
                residual: norm(r),
            });
        }
    }

    let profile = ScaleProfile {
        buyer: x[0],
        seller: x[1],
    };
    Ok(EquilibriumResult {
        profile,
        feasible: feasibility_check(bounds, &profile, Setting::Tbos),
        method: Method::RootFind,
        iterations,
        residuals: (r[0], r[1]),
    })
}

/// Mean realised utility and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl UtilityEstimate {
    fn from_moments(sum: f64, sum_sq: f64, n: usize) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 {
            ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / nf).sqrt(),
            n_samples: n,
        }
    }
}

/// Samples per independently seeded RNG stream.
const BLOCK: usize = 4096;

/// Private types of one auction: two buyer draws and one seller draw, in [0, 1).
#[derive(Debug, Clone, Copy)]
struct UnitDraw {
    b1: f64,
    b2: f64,
    s: f64,
}

/// Counter-based sampling: block `k` always reads stream `k` of the seed, so
/// results do not depend on how blocks are scheduled across threads.
fn block_draws(seed: u64, block: usize, n_samples: usize) -> Vec<UnitDraw> {
    let start = block * BLOCK;
    let len = BLOCK.min(n_samples - start);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    (0..len)
        .map(|_| UnitDraw {
            b1: rng.random::<f64>(),
            b2: rng.random::<f64>(),
            s: rng.random::<f64>(),
        })
        .collect()
}

fn n_blocks(n_samples: usize) -> usize {
    n_samples.div_ceil(BLOCK)
}

#[derive(Debug, Clone, Copy)]
struct Types {
    buyer1: f64,
    buyer2: f64,
    seller: f64,
}

fn scale_types(bounds: &UniformBounds, d: &UnitDraw) -> Types {
    let b = |u: f64| bounds.buyer_low + (bounds.buyer_high - bounds.buyer_low) * u;
    Types {
        buyer1: b(d.b1),
        buyer2: b(d.b2),
        seller: bounds.seller_low + (bounds.seller_high - bounds.seller_low) * d.s,
    }
}

/// Scale factor of every participant, with the focal one possibly deviating.
#[derive(Debug, Clone, Copy)]
struct Scales {
    focal_buyer: f64,
    other_buyer: f64,
    seller: f64,
}

fn scales_for(role: Role, focal: f64, opponents: &ScaleProfile) -> Scales {
    match role {
        Role::Buyer => Scales {
            focal_buyer: focal,
            other_buyer: opponents.buyer,
            seller: opponents.seller,
        },
        Role::Seller => Scales {
            focal_buyer: opponents.buyer,
            other_buyer: opponents.buyer,
            seller: focal,
        },
    }
}

/// Realised utility of one auction cleared through the full order book engine.
fn utility_via_book(t: &Types, sc: &Scales, role: Role, setting: Setting) -> f64 {
    let mut book = OrderBook::new();
    let focal = book
        .submit(0, Side::Buy, 1.0, sc.focal_buyer * t.buyer1)
        .expect("finite scaled bid");
    if setting == Setting::Tbos {
        book.submit(1, Side::Buy, 1.0, sc.other_buyer * t.buyer2)
            .expect("finite scaled bid");
    }
    book.submit(2, Side::Sell, 1.0, sc.seller * t.seller)
        .expect("finite scaled ask");
    let result = clear_acpr(&book);
    let Some(cp) = result.clearing_price else {
        return 0.0;
    };
    match role {
        Role::Buyer if result.filled(focal) > 0.0 => t.buyer1 - cp,
        Role::Buyer => 0.0,
        Role::Seller => cp - t.seller,
    }
}

/// Same auction as [`utility_via_book`], through the single-unit kernel.
#[inline]
fn utility_via_kernel(t: &Types, sc: &Scales, role: Role, setting: Setting) -> f64 {
    let bids_tbos = [sc.focal_buyer * t.buyer1, sc.other_buyer * t.buyer2];
    let bids = match setting {
        Setting::Obos => &bids_tbos[..1],
        Setting::Tbos => &bids_tbos[..],
    };
    match clear_single_unit(bids, sc.seller * t.seller) {
        None => 0.0,
        Some((0, cp)) if role == Role::Buyer => t.buyer1 - cp,
        Some(_) if role == Role::Buyer => 0.0,
        Some((_, cp)) => cp - t.seller,
    }
}

/// Monte-Carlo expected utility of `role` when everyone plays `profile`.
///
/// In TBOS both buyers scale by `profile.buyer` and the estimate is for the
/// first buyer, who only earns utility when its own bid executes.
pub fn expected_utility_mc(
    bounds: &UniformBounds,
    profile: &ScaleProfile,
    role: Role,
    setting: Setting,
    n_samples: usize,
    seed: u64,
) -> UtilityEstimate {
    let focal = match role {
        Role::Buyer => profile.buyer,
        Role::Seller => profile.seller,
    };
    deviation_utility_mc(bounds, profile, role, setting, focal, n_samples, seed)
}

/// Monte-Carlo expected utility of `role` deviating to `alpha` while the others play `opponents`.
pub fn deviation_utility_mc(
    bounds: &UniformBounds,
    opponents: &ScaleProfile,
    role: Role,
    setting: Setting,
    alpha: f64,
    n_samples: usize,
    seed: u64,
) -> UtilityEstimate {
    assert!(n_samples >= 1, "n_samples must be at least 1");
    let sc = scales_for(role, alpha, opponents);
    let moments: Vec<(f64, f64)> = (0..n_blocks(n_samples))
        .into_par_iter()
        .map(|block| {
            block_draws(seed, block, n_samples)
                .iter()
                .map(|d| utility_via_book(&scale_types(bounds, d), &sc, role, setting))
                .fold((0.0, 0.0), |(s, ss), u| (s + u, ss + u * u))
        })
        .collect();
    let (sum, sum_sq) = moments
        .iter()
        .fold((0.0, 0.0), |(s, ss), &(a, b)| (s + a, ss + b));
    UtilityEstimate::from_moments(sum, sum_sq, n_samples)
}

/// Inclusive grid of scale factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for ScaleGrid {
    fn default() -> Self {
        Self {
            lo: 0.05,
            hi: 2.0,
            step: 0.01,
        }
    }
}

impl ScaleGrid {
    pub fn points(&self) -> Result<Vec<f64>, EquilibriumError> {
        if !(self.step > 0.0 && self.lo > 0.0 && self.hi >= self.lo && self.hi.is_finite()) {
            return Err(EquilibriumError::InvalidGrid);
        }
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.lo + k as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub alpha: f64,
    pub utility: UtilityEstimate,
    /// `(alpha, mean utility)` at every grid point.
    pub curve: Vec<(f64, f64)>,
}

/// Grid argmax of expected utility against fixed opponents.
///
/// Every grid point is evaluated on the same type draws (common random
/// numbers), so the argmax compares utilities without sampling noise between
/// points. For the TBOS buyer the other buyer plays `opponents.buyer`.
pub fn best_response_scale(
    bounds: &UniformBounds,
    opponents: &ScaleProfile,
    role: Role,
    setting: Setting,
    grid: &ScaleGrid,
    n_samples: usize,
    seed: u64,
) -> Result<BestResponse, EquilibriumError> {
    assert!(n_samples >= 1, "n_samples must be at least 1");
    let alphas = grid.points()?;
    let per_block: Vec<Vec<(f64, f64)>> = (0..n_blocks(n_samples))
        .into_par_iter()
        .map(|block| {
            let types: Vec<Types> = block_draws(seed, block, n_samples)
                .iter()
                .map(|d| scale_types(bounds, d))
                .collect();
            alphas
                .iter()
                .map(|&a| {
                    let sc = scales_for(role, a, opponents);
                    types.iter().fold((0.0, 0.0), |(s, ss), t| {
                        let u = utility_via_kernel(t, &sc, role, setting);
                        (s + u, ss + u * u)
                    })
                })
                .collect()
        })
        .collect();

    let mut totals = vec![(0.0, 0.0); alphas.len()];
    for block in &per_block {
        for (acc, &(s, ss)) in totals.iter_mut().zip(block) {
            acc.0 += s;
            acc.1 += ss;
        }
    }
    let estimates: Vec<UtilityEstimate> = totals
        .iter()
        .map(|&(s, ss)| UtilityEstimate::from_moments(s, ss, n_samples))
        .collect();
    let best = estimates
        .iter()
        .enumerate()
        .fold(0, |best, (k, e)| if e.mean > estimates[best].mean { k } else { best });

    Ok(BestResponse {
        alpha: alphas[best],
        utility: estimates[best],
        curve: alphas
            .iter()
            .zip(&estimates)
            .map(|(&a, e)| (a, e.mean))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasibility_examples() {
        let unit = UniformBounds::unit();
        assert!(feasibility_check(&unit, &ScaleProfile { buyer: 2.0 / 3.0, seller: 1.0 }, Setting::Obos));
        assert!(!feasibility_check(&unit, &ScaleProfile { buyer: 2.0, seller: 1.0 }, Setting::Obos));
        let wide = UniformBounds::new(40.0, 80.0, 40.0, 80.0).unwrap();
        assert!(feasibility_check(
            &wide,
            &ScaleProfile { buyer: 0.891386, seller: 1.048689 },
            Setting::Obos
        ));
    }

    #[test]
    fn tbos_unit_profile_violates_its_own_support_condition() {
        // alpha_S / alpha_B > 1 pushes high seller asks above every buyer bid.
        assert!(!feasibility_check(&UniformBounds::unit(), &tbos_unit_closed_form(), Setting::Tbos));
        let equal = ScaleProfile { buyer: 0.9, seller: 0.9 };
        assert!(feasibility_check(&UniformBounds::unit(), &equal, Setting::Tbos));
    }

    #[test]
    fn obos_unit_and_table_values() {
        let p = obos_closed_form(&UniformBounds::unit()).unwrap();
        assert!((p.buyer - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.seller - 1.0).abs() < 1e-12);

        let p = obos_closed_form(&UniformBounds::new(40.0, 80.0, 40.0, 80.0).unwrap()).unwrap();
        assert!((p.buyer - 0.891386).abs() < 1e-5, "{p:?}");
        assert!((p.seller - 1.048689).abs() < 1e-5, "{p:?}");

        let p = obos_closed_form(&UniformBounds::new(0.0, 2.0, 0.0, 2.0).unwrap()).unwrap();
        assert!((p.buyer - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.seller - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_obos_utilities_at_unit_equilibrium() {
        let b = UniformBounds::unit();
        let p = ScaleProfile { buyer: 2.0 / 3.0, seller: 1.0 };
        assert!((obos_expected_utility(&b, &p, Role::Buyer) - 1.0 / 9.0).abs() < 1e-14);
        // Seller surplus against a buyer shading to 2/3: 1/(9c) - 2/(27c^2) at c = 1.
        assert!((obos_expected_utility(&b, &p, Role::Seller) - 1.0 / 27.0).abs() < 1e-14);
        for c in [0.8, 1.2, 4.0 / 3.0, 1.6] {
            let q = ScaleProfile { buyer: 2.0 / 3.0, seller: c };
            let want = 1.0 / (9.0 * c) - 2.0 / (27.0 * c * c);
            assert!((obos_expected_utility(&b, &q, Role::Seller) - want).abs() < 1e-14, "c={c}");
        }
    }

    #[test]
    fn mc_tracks_exact_obos_utility_on_shifted_supports() {
        let b = UniformBounds::new(40.0, 80.0, 40.0, 80.0).unwrap();
        let p = obos_closed_form(&b).unwrap();
        for role in [Role::Buyer, Role::Seller] {
            let exact = obos_expected_utility(&b, &p, role);
            let mc = expected_utility_mc(&b, &p, role, Setting::Obos, 200_000, 17);
            assert!((mc.mean - exact).abs() < 4.0 * mc.std_error, "{role:?}: {} vs {exact}", mc.mean);
        }
    }

    #[test]
    fn std_error_shrinks_with_root_n() {
        let b = UniformBounds::unit();
        let p = ScaleProfile { buyer: 2.0 / 3.0, seller: 1.0 };
        let small = expected_utility_mc(&b, &p, Role::Buyer, Setting::Obos, 20_000, 1);
        let large = expected_utility_mc(&b, &p, Role::Buyer, Setting::Obos, 320_000, 1);
        let ratio = small.std_error / large.std_error;
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn obos_closed_form_is_scale_invariant() {
        let base = obos_closed_form(&UniformBounds::unit()).unwrap();
        for c in [0.01, 0.5, 3.0, 250.0] {
            let p = obos_closed_form(&UniformBounds::new(0.0, c, 0.0, c).unwrap()).unwrap();
            assert!((p.buyer - base.buyer).abs() < 1e-12 && (p.seller - base.seller).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(UniformBounds::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(UniformBounds::new(-0.1, 1.0, 0.0, 1.0).is_err());
        assert!(UniformBounds::new(0.0, f64::INFINITY, 0.0, 1.0).is_err());
    }

    #[test]
    fn tbos_unit_root() {
        let p = tbos_unit_closed_form();
        assert_eq!(p.buyer, 0.75);
        assert!((p.seller - 1.040_569_415_042_094_8).abs() < 1e-12);
        assert!(p.seller > 0.0);
        let (rb, rs) = tbos_foc_residuals(&UniformBounds::unit(), &p);
        assert!(rb.abs() < 1e-10 && rs.abs() < 1e-10, "{rb} {rs}");
    }

    #[test]
    fn buyer_foc_vanishes_at_three_quarters_for_any_seller_scale() {
        for s in [0.1, 0.5, 1.0, 1.7, 3.0] {
            let (rb, _) = tbos_foc_residuals(&UniformBounds::unit(), &ScaleProfile { buyer: 0.75, seller: s });
            assert!(rb.abs() < 1e-15, "alpha_S={s}: {rb}");
        }
        let (rb, rs) = tbos_foc_residuals(&UniformBounds::unit(), &ScaleProfile { buyer: 1.0, seller: 1.0 });
        assert!(rb.abs() > 1e-3 && rs.abs() > 1e-3);
    }

    #[test]
    fn newton_from_default_start() {
        let r = tbos_general_solve(&UniformBounds::unit(), ScaleProfile { buyer: 0.5, seller: 0.5 }).unwrap();
        assert!((r.profile.buyer - 0.75).abs() < 1e-8);
        assert!((r.profile.seller - 1.04056942).abs() < 1e-8);
        assert_eq!(r.method, Method::RootFind);
    }

    #[test]
    fn newton_at_root_takes_no_steps() {
        let r = tbos_general_solve(&UniformBounds::unit(), tbos_unit_closed_form()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.profile, tbos_unit_closed_form());
    }

    #[test]
    fn newton_shifted_seller_support() {
        // Reference root from an independent symbolic solve of the same two conditions.
        let bounds = UniformBounds::new(0.0, 1.0, 0.1, 1.1).unwrap();
        let r = tbos_general_solve(&bounds, ScaleProfile { buyer: 0.75, seller: 1.0 }).unwrap();
        assert!(r.residuals.0.abs() < 1e-9 && r.residuals.1.abs() < 1e-9);
        assert!((r.profile.buyer - 0.788_123_200_098_829).abs() < 1e-8, "{:?}", r.profile);
        assert!((r.profile.seller - 1.021_224_202_681_33).abs() < 1e-8, "{:?}", r.profile);
    }

    #[test]
    fn newton_rejects_nonpositive_start() {
        assert!(matches!(
            tbos_general_solve(&UniformBounds::unit(), ScaleProfile { buyer: -1.0, seller: 1.0 }),
            Err(EquilibriumError::NonPositiveScale(..))
        ));
    }

    #[test]
    fn newton_reports_exhausted_iterations() {
        let opts = NewtonOptions { max_iterations: 1, ..Default::default() };
        let err = tbos_general_solve_with(&UniformBounds::unit(), ScaleProfile { buyer: 0.2, seller: 3.0 }, opts);
        assert!(matches!(err, Err(EquilibriumError::NoConvergence { iterations: 1, .. })));
    }

    #[test]
    fn never_crossing_profile_has_zero_utility() {
        // alpha_B h_B < alpha_S l_S: every bid sits below every ask.
        let bounds = UniformBounds::new(0.0, 1.0, 2.0, 3.0).unwrap();
        let p = ScaleProfile { buyer: 1.0, seller: 1.0 };
        for role in [Role::Buyer, Role::Seller] {
            for setting in [Setting::Obos, Setting::Tbos] {
                let u = expected_utility_mc(&bounds, &p, role, setting, 5_000, 3);
                assert_eq!(u.mean, 0.0);
                assert_eq!(u.std_error, 0.0);
            }
        }
    }

    #[test]
    fn kernel_and_book_agree_sample_by_sample() {
        let bounds = UniformBounds::new(0.0, 1.0, 0.1, 1.1).unwrap();
        let opp = ScaleProfile { buyer: 0.8, seller: 1.1 };
        for setting in [Setting::Obos, Setting::Tbos] {
            for role in [Role::Buyer, Role::Seller] {
                for alpha in [0.3, 0.8, 1.2] {
                    let sc = scales_for(role, alpha, &opp);
                    for d in block_draws(11, 0, 2_000) {
                        let t = scale_types(&bounds, &d);
                        assert_eq!(
                            utility_via_book(&t, &sc, role, setting),
                            utility_via_kernel(&t, &sc, role, setting)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn best_response_curve_matches_book_estimates() {
        let bounds = UniformBounds::unit();
        let opp = ScaleProfile { buyer: 2.0 / 3.0, seller: 1.0 };
        let grid = ScaleGrid { lo: 0.5, hi: 0.8, step: 0.1 };
        let br = best_response_scale(&bounds, &opp, Role::Buyer, Setting::Obos, &grid, 10_000, 5).unwrap();
        for &(a, u) in &br.curve {
            let direct = deviation_utility_mc(&bounds, &opp, Role::Buyer, Setting::Obos, a, 10_000, 5);
            assert!((direct.mean - u).abs() < 1e-15, "alpha {a}: {} vs {u}", direct.mean);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let b = UniformBounds::unit();
        let p = ScaleProfile { buyer: 0.7, seller: 1.0 };
        let a = expected_utility_mc(&b, &p, Role::Seller, Setting::Tbos, 20_000, 9);
        let c = expected_utility_mc(&b, &p, Role::Seller, Setting::Tbos, 20_000, 9);
        assert_eq!(a, c);
    }

    #[test]
    fn grid_validation() {
        assert!(ScaleGrid { lo: 0.1, hi: 0.05, step: 0.01 }.points().is_err());
        assert!(ScaleGrid { lo: 0.1, hi: 1.0, step: 0.0 }.points().is_err());
        let pts = ScaleGrid { lo: 0.1, hi: 0.3, step: 0.1 }.points().unwrap();
        assert_eq!(pts.len(), 3);
    }
}
