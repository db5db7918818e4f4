//! Test supermartingales for `H₀: mean ≤ μ` over values in `[0, u]`.
//!
//! Every test here is a product of nonnegative factors with conditional
//! expectation at most one under the null, so by Ville's inequality
//! `Pr{∃j: T_j ≥ 1/α} ≤ α`. The statistic is kept as `ln T` so products of
//! millions of factors neither overflow nor underflow.
//!
//! The ALPHA factor for draw `j` is
//!
//! ```text
//!     u⁻¹ · ( X_j·η_j/μ_j + (u − X_j)·(u − η_j)/(u − μ_j) )
//! ```
//!
//! where `μ_j` is the conditional null mean (constant with replacement, the
//! mean of the remaining units without replacement) and `η_j` is a predictable
//! estimate of the true mean. Writing `λ_j = (η_j/μ_j − 1)/(u − μ_j)` turns the
//! same factor into the betting form `1 + λ_j (X_j − μ_j)`.

use serde::{Deserialize, Serialize};

use crate::serde_ext::extended_f64;
use crate::{Error, Result};

/// Default gap kept between the truncated estimate and `u`, as a fraction of `u`.
pub const DEFAULT_EPS_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    WithReplacement,
    WithoutReplacement,
}

/// Parameters shared by every test of one assertion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    /// Risk limit.
    pub alpha: f64,
    /// Upper bound `u` on every value.
    pub upper: f64,
    /// Hypothesised population mean, usually 1/2.
    pub null_mean: f64,
    /// Population size; `None` means effectively infinite.
    pub population: Option<u64>,
    pub sampling: Sampling,
}

impl TestConfig {
    pub fn with_replacement(alpha: f64, upper: f64, null_mean: f64) -> Self {
        Self { alpha, upper, null_mean, population: None, sampling: Sampling::WithReplacement }
    }

    pub fn without_replacement(alpha: f64, upper: f64, null_mean: f64, population: u64) -> Self {
        Self { alpha, upper, null_mean, population: Some(population), sampling: Sampling::WithoutReplacement }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.upper > 0.0 && self.upper.is_finite()) {
            return Err(invalid(format!("upper bound must be positive, got {}", self.upper)));
        }
        if !(self.null_mean >= 0.0 && self.null_mean <= self.upper) {
            return Err(invalid(format!("null mean must be in [0, {}], got {}", self.upper, self.null_mean)));
        }
        if self.sampling == Sampling::WithoutReplacement && !matches!(self.population, Some(n) if n >= 1) {
            return Err(invalid("sampling without replacement needs a population size ≥ 1"));
        }
        Ok(())
    }

    /// `−ln α`: the test rejects once `ln T` reaches this.
    pub fn log_threshold(&self) -> f64 {
        -self.alpha.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Rejected,
    Exhausted,
}

/// Evolving statistic of one sequential test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestState {
    /// Draws taken so far.
    pub draws: u64,
    /// `ln T_j`; `+inf` means the null is impossible.
    #[serde(with = "extended_f64")]
    pub log_t: f64,
    /// Running maximum of `ln T` over all draws, for the anytime P-value.
    #[serde(with = "extended_f64")]
    pub max_log_t: f64,
    /// Sum of the values drawn so far.
    pub sum: f64,
    /// Conditional null mean for the next draw. May be negative without
    /// replacement, in which case the null is already impossible.
    #[serde(with = "extended_f64")]
    pub null_mean: f64,
    pub status: Status,
}

impl TestState {
    pub(crate) fn fresh(null_mean: f64) -> Self {
        Self { draws: 0, log_t: 0.0, max_log_t: 0.0, sum: 0.0, null_mean, status: Status::Running }
    }

    /// Current value of the test statistic.
    pub fn t(&self) -> f64 {
        self.log_t.exp()
    }

    pub fn p_value(&self) -> f64 {
        p_value(self)
    }

    pub fn is_running(&self) -> bool {
        self.status == Status::Running
    }
}

/// Parameters of the truncated-shrinkage estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkTrunc {
    /// Anchor value, e.g. the reported assorter mean.
    pub eta0: f64,
    /// Prior weight of `eta0`, in units of draws. May be `inf` for a fixed alternative.
    #[serde(with = "extended_f64")]
    pub d: f64,
    /// Scale of the slack `c/√(d+j−1)` above the null mean.
    pub c: f64,
    /// Gap kept below `u`.
    pub eps_u: f64,
}

impl ShrinkTrunc {
    /// Estimator with `c = (η₀ − μ)/2` and `eps_u = u·10⁻⁶`.
    pub fn new(eta0: f64, d: f64, config: &TestConfig) -> Self {
        Self { eta0, d, c: (eta0 - config.null_mean) / 2.0, eps_u: config.upper * DEFAULT_EPS_FRACTION }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }
}

/// Strategy producing `η_j` from the history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    /// Constant alternative (BRAVO / Wald SPRT).
    Fixed {
        eta: f64,
    },
    ShrinkTrunc(ShrinkTrunc),
    /// Constant bet fraction `λ`, mapped to `η_j = μ_j(1 + λ(u − μ_j))`.
    FromLambda {
        lambda: f64,
    },
}

impl EstimatorSpec {
    pub fn validate(&self, config: &TestConfig) -> Result<()> {
        let (mu, u) = (config.null_mean, config.upper);
        match *self {
            Self::Fixed { eta } => {
                if !(eta > mu && eta <= u) {
                    return Err(invalid(format!("eta must be in ({mu}, {u}], got {eta}")));
                }
            }
            Self::ShrinkTrunc(p) => {
                if !(p.eta0 > mu && p.eta0 <= u) {
                    return Err(invalid(format!("eta0 must be in ({mu}, {u}], got {}", p.eta0)));
                }
                if !(p.d >= 0.0) {
                    return Err(invalid(format!("d must be ≥ 0, got {}", p.d)));
                }
                if !(p.c >= 0.0 && p.c.is_finite()) {
                    return Err(invalid(format!("c must be ≥ 0, got {}", p.c)));
                }
                if !(p.eps_u > 0.0 && p.eps_u < u) {
                    return Err(invalid(format!("eps_u must be in (0, {u}), got {}", p.eps_u)));
                }
            }
            Self::FromLambda { lambda } => {
                let max = if mu > 0.0 { 1.0 / mu } else { f64::INFINITY };
                if !(lambda >= 0.0 && lambda <= max) {
                    return Err(invalid(format!("lambda must be in [0, {max}], got {lambda}")));
                }
            }
        }
        Ok(())
    }

    /// Estimate for draw `j` (1-based) given the sum of the first `j−1` draws
    /// and the current null mean. `None` means no admissible bet exists and
    /// the factor is one.
    pub fn eta(&self, j: u64, sum: f64, null_mean: f64, upper: f64) -> Option<f64> {
        match *self {
            Self::Fixed { eta } => Some(eta),
            Self::ShrinkTrunc(p) => shrink_trunc_eta(j, sum, &p, null_mean, upper).ok(),
            Self::FromLambda { lambda } => {
                if null_mean <= 0.0 {
                    return Some(0.0);
                }
                if null_mean >= upper {
                    return None;
                }
                let lambda = lambda.min(1.0 / null_mean);
                Some(null_mean * (1.0 + lambda * (upper - null_mean)))
            }
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn check_value(x: f64, upper: f64) -> Result<()> {
    if x >= 0.0 && x <= upper {
        Ok(())
    } else {
        Err(Error::OutOfRange { value: x, low: 0.0, high: upper })
    }
}

fn check_running(state: &TestState) -> Result<()> {
    if state.status == Status::Running {
        Ok(())
    } else {
        Err(Error::StepAfterFinish(state.status))
    }
}

/// Fresh test: `T_0 = 1`, no draws, null mean `μ`.
pub fn init_test(config: &TestConfig, est: &EstimatorSpec) -> Result<TestState> {
    config.validate()?;
    est.validate(config)?;
    Ok(TestState::fresh(config.null_mean))
}

/// Conditional null mean before draw `j` given the sum of the first `j−1`
/// draws: `(N·μ − S)/(N − j + 1)`. Negative values mean the null is false.
pub fn null_mean_wor(n: u64, mu0: f64, sum: f64, j: u64) -> f64 {
    (n as f64 * mu0 - sum) / (n - j + 1) as f64
}

/// Truncated-shrinkage estimate for draw `j`:
///
/// ```text
///     ((d·η₀ + S)/(d + j − 1) ∨ (μ_j + c/√(d + j − 1))) ∧ (u − eps_u)
/// ```
pub fn eta_shrink_trunc(j: u64, sum: f64, config: &TestConfig, spec: &ShrinkTrunc, null_mean: f64) -> Result<f64> {
    shrink_trunc_eta(j, sum, spec, null_mean, config.upper)
}

pub(crate) fn shrink_trunc_eta(j: u64, sum: f64, spec: &ShrinkTrunc, null_mean: f64, upper: f64) -> Result<f64> {
    let ceiling = upper - spec.eps_u;
    if null_mean >= ceiling {
        return Err(Error::DegenerateNull { null_mean, ceiling });
    }
    let weight = spec.d + (j as f64 - 1.0);
    let (raw, slack) = if spec.d.is_infinite() {
        (spec.eta0, 0.0)
    } else if weight <= 0.0 {
        // d = 0 before the first draw: nothing to shrink yet.
        (spec.eta0, 0.0)
    } else {
        ((spec.d * spec.eta0 + sum) / weight, spec.c / weight.sqrt())
    };
    Ok(raw.max(null_mean + slack).min(ceiling))
}

/// `η = μ(1 + λ(u − μ))`.
pub fn lambda_to_eta(lambda: f64, null_mean: f64, upper: f64) -> Result<f64> {
    check_bet_domain(null_mean, upper)?;
    let max = 1.0 / null_mean;
    if !(lambda >= 0.0 && lambda <= max) {
        return Err(Error::OutOfRange { value: lambda, low: 0.0, high: max });
    }
    Ok(null_mean * (1.0 + lambda * (upper - null_mean)))
}

/// `λ = (η/μ − 1)/(u − μ)`.
pub fn eta_to_lambda(eta: f64, null_mean: f64, upper: f64) -> Result<f64> {
    check_bet_domain(null_mean, upper)?;
    if !(eta >= null_mean && eta <= upper) {
        return Err(Error::OutOfRange { value: eta, low: null_mean, high: upper });
    }
    Ok((eta / null_mean - 1.0) / (upper - null_mean))
}

fn check_bet_domain(null_mean: f64, upper: f64) -> Result<()> {
    if null_mean > 0.0 && null_mean < upper {
        Ok(())
    } else {
        Err(Error::OutOfRange { value: null_mean, low: 0.0, high: upper })
    }
}

/// Anytime P-value `min(1, 1/max_j T_j)`.
pub fn p_value(state: &TestState) -> f64 {
    if state.max_log_t == f64::INFINITY {
        0.0
    } else {
        (-state.max_log_t).exp().min(1.0)
    }
}

/// `ln` of the ALPHA factor for one draw.
pub(crate) fn alpha_log_factor(x: f64, eta: Option<f64>, mu: f64, u: f64) -> f64 {
    if mu <= 0.0 {
        if x > 0.0 {
            return f64::INFINITY;
        }
        // Limit of the factor as μ → 0 with the x/μ term absent.
        return match eta {
            Some(eta) => ((u - eta) / u).ln(),
            None => 0.0,
        };
    }
    let Some(eta) = eta else { return 0.0 };
    if mu >= u {
        return 0.0;
    }
    // Ratios first: x = μ = u/2 then gives exactly η + (u − η) = u.
    (((x / mu) * eta + ((u - x) / (u - mu)) * (u - eta)) / u).ln()
}

/// One ALPHA update.
pub fn alpha_step(state: &TestState, x: f64, config: &TestConfig, est: &EstimatorSpec) -> Result<TestState> {
    check_running(state)?;
    check_value(x, config.upper)?;
    let mu = state.null_mean;
    let eta = est.eta(state.draws + 1, state.sum, mu, config.upper);
    Ok(advance(state, x, config, alpha_log_factor(x, eta, mu, config.upper)))
}

/// Kaplan-Wald update: multiply by `g(x/θ − 1) + 1`.
pub fn kaplan_wald_step(state: &TestState, x: f64, config: &TestConfig, g: f64) -> Result<TestState> {
    check_running(state)?;
    check_value(x, config.upper)?;
    if !(0.0..=1.0).contains(&g) {
        return Err(invalid(format!("Kaplan-Wald g must be in [0, 1], got {g}")));
    }
    Ok(advance(state, x, config, kaplan_wald_log_factor(x, state.null_mean, g)))
}

pub(crate) fn kaplan_wald_log_factor(x: f64, theta: f64, g: f64) -> f64 {
    if theta <= 0.0 {
        return if x > 0.0 { f64::INFINITY } else { (1.0 - g).ln() };
    }
    (g * (x / theta - 1.0) + 1.0).ln()
}

/// Kaplan-Kolmogorov update: multiply by `(x + g)/(θ + g)`.
pub fn kaplan_kolmogorov_step(state: &TestState, x: f64, config: &TestConfig, g: f64) -> Result<TestState> {
    check_running(state)?;
    check_value(x, config.upper)?;
    if !(g >= 0.0 && g.is_finite()) {
        return Err(invalid(format!("Kaplan-Kolmogorov g must be ≥ 0, got {g}")));
    }
    Ok(advance(state, x, config, kaplan_kolmogorov_log_factor(x, state.null_mean, g)))
}

pub(crate) fn kaplan_kolmogorov_log_factor(x: f64, theta: f64, g: f64) -> f64 {
    if theta <= 0.0 {
        // 0/0 is taken as 1.
        return if x > 0.0 { f64::INFINITY } else { 0.0 };
    }
    ((x + g) / (theta + g)).ln()
}

/// Null-mean bookkeeping after the sum and draw count have been updated.
pub(crate) enum NextNull {
    Mean(f64),
    /// Every unit has been drawn; `impossible` tells whether the total exceeds `N·μ`.
    Exhausted {
        impossible: bool,
    },
}

pub(crate) fn next_null(config: &TestConfig, draws: u64, sum: f64) -> NextNull {
    match (config.sampling, config.population) {
        (Sampling::WithoutReplacement, Some(n)) => {
            if draws >= n {
                NextNull::Exhausted { impossible: sum > n as f64 * config.null_mean }
            } else {
                NextNull::Mean(null_mean_wor(n, config.null_mean, sum, draws + 1))
            }
        }
        _ => NextNull::Mean(config.null_mean),
    }
}

/// Multiplies `T` by `exp(log_factor)` and applies the termination rules.
pub(crate) fn advance(state: &TestState, x: f64, config: &TestConfig, log_factor: f64) -> TestState {
    let mut s = *state;
    s.draws += 1;
    s.sum += x;
    let null = next_null(config, s.draws, s.sum);
    apply(&mut s, log_factor, null, config.log_threshold());
    s
}

pub(crate) fn apply(s: &mut TestState, log_factor: f64, null: NextNull, threshold: f64) {
    // ln T = -inf (T = 0) is absorbing.
    if s.log_t != f64::NEG_INFINITY {
        s.log_t += log_factor;
    }
    let mut exhausted = false;
    match null {
        NextNull::Mean(m) => {
            s.null_mean = m;
            if m < 0.0 && s.log_t != f64::NEG_INFINITY {
                s.log_t = f64::INFINITY;
            }
        }
        NextNull::Exhausted { impossible } => {
            exhausted = true;
            if impossible && s.log_t != f64::NEG_INFINITY {
                s.log_t = f64::INFINITY;
            }
        }
    }
    if s.log_t > s.max_log_t {
        s.max_log_t = s.log_t;
    }
    if s.log_t >= threshold {
        s.status = Status::Rejected;
    } else if exhausted {
        s.status = Status::Exhausted;
    }
}

/// Convex mixture of fixed-bet ALPHA streams.
///
/// The mixture statistic `Σ_k w_k T_j^(k)` is a martingale under the null
/// whenever each component is, so it is tested against `1/α` directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    /// Bookkeeping and the mixture statistic itself (as `ln Σ w_k T_k`).
    pub state: TestState,
    /// Per-component `ln T_k`. Components never stop on their own.
    pub components: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MixtureState {
    pub fn new(config: &TestConfig, lambdas: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if lambdas.is_empty() || lambdas.len() != weights.len() {
            return Err(invalid("mixture needs K ≥ 1 components with one weight each"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("mixture weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("mixture weights must sum to 1, got {total}")));
        }
        for &lambda in &lambdas {
            EstimatorSpec::FromLambda { lambda }.validate(config)?;
        }
        Ok(Self { state: TestState::fresh(config.null_mean), components: vec![0.0; lambdas.len()], lambdas, weights })
    }

    /// Default grid of `K` bets `λ_k = 0.99·(k/K)/μ` weighted `∝ 1/k`.
    pub fn default_grid(config: &TestConfig, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("mixture needs K ≥ 1 components"));
        }
        let (lambdas, weights) = default_mixture_grid(config.null_mean, k);
        Self::new(config, lambdas, weights)
    }

    pub fn statistic(&self) -> f64 {
        self.state.t()
    }
}

pub(crate) fn default_mixture_grid(null_mean: f64, k: usize) -> (Vec<f64>, Vec<f64>) {
    let top = if null_mean > 0.0 { 0.99 / null_mean } else { 0.0 };
    let lambdas = (1..=k).map(|i| top * i as f64 / k as f64).collect();
    let raw: Vec<f64> = (1..=k).map(|i| 1.0 / i as f64).collect();
    let total: f64 = raw.iter().sum();
    (lambdas, raw.into_iter().map(|w| w / total).collect())
}

/// One mixture update: every component takes an ALPHA step with its
/// `FromLambda` bet, then the mixture is recomputed and tested.
pub fn mixture_step(mixture: &MixtureState, x: f64, config: &TestConfig) -> Result<MixtureState> {
    let mut next = mixture.clone();
    mixture_step_in_place(&mut next, x, config)?;
    Ok(next)
}

pub(crate) fn mixture_step_in_place(m: &mut MixtureState, x: f64, config: &TestConfig) -> Result<()> {
    check_running(&m.state)?;
    check_value(x, config.upper)?;
    let mu = m.state.null_mean;
    let u = config.upper;
    for (log_t, &lambda) in m.components.iter_mut().zip(&m.lambdas) {
        let eta = EstimatorSpec::FromLambda { lambda }.eta(m.state.draws + 1, m.state.sum, mu, u);
        if *log_t != f64::NEG_INFINITY {
            *log_t += alpha_log_factor(x, eta, mu, u);
        }
    }
    let prev_log = m.state.log_t;
    let mixed = log_sum_exp_weighted(&m.components, &m.weights);
    let factor = if prev_log == f64::NEG_INFINITY { 0.0 } else { mixed - prev_log };
    let s = &mut m.state;
    s.draws += 1;
    s.sum += x;
    let null = next_null(config, s.draws, s.sum);
    apply(s, factor, null, config.log_threshold());
    if s.log_t.is_finite() {
        // Avoid drift from repeated differencing.
        s.log_t = mixed;
    }
    Ok(())
}

fn log_sum_exp_weighted(log_values: &[f64], weights: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (l, w) in log_values.iter().zip(weights) {
        if *w > 0.0 && *l > max {
            max = *l;
        }
    }
    if !max.is_finite() {
        return max;
    }
    let total: f64 = log_values.iter().zip(weights).filter(|(_, w)| **w > 0.0).map(|(l, w)| w * (l - max).exp()).sum();
    max + total.ln()
}
