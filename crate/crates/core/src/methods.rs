//! Named sequential tests compared in the simulations, behind one interface.

use serde::{Deserialize, Serialize};

use crate::martingale::{
    advance, alpha_log_factor, default_mixture_grid, eta_to_lambda, kaplan_kolmogorov_log_factor,
    kaplan_wald_log_factor, mixture_step_in_place, EstimatorSpec, MixtureState, TestConfig, TestState,
};
use crate::{Error, Result};

/// Default number of mixture components.
pub const DEFAULT_MIXTURE_COMPONENTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ComparatorSpec {
    Alpha {
        estimator: EstimatorSpec,
    },
    /// Constant Kelly bet chosen for the alternative `eta`; the bet fraction
    /// `λ = (η/μ − 1)/(u − μ)` is computed once from the initial null mean.
    AprioriKelly {
        eta: f64,
    },
    /// Mixture over a grid of constant bets.
    SqKellyMixture {
        components: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// Wald SPRT without replacement: ALPHA with a fixed `eta`.
    SprtWor {
        eta: f64,
    },
    KaplanWald {
        g: f64,
    },
    KaplanKolmogorov {
        g: f64,
    },
}

impl ComparatorSpec {
    pub fn alpha(estimator: EstimatorSpec) -> Self {
        Self::Alpha { estimator }
    }

    pub fn sq_kelly() -> Self {
        Self::SqKellyMixture { components: DEFAULT_MIXTURE_COMPONENTS, weights: None }
    }

    /// Short name used in simulation output.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Alpha { estimator: EstimatorSpec::ShrinkTrunc(_) } => "alpha",
            Self::Alpha { estimator: EstimatorSpec::Fixed { .. } } => "fixed",
            Self::Alpha { estimator: EstimatorSpec::FromLambda { .. } } => "from_lambda",
            Self::AprioriKelly { .. } => "apriori_kelly",
            Self::SqKellyMixture { .. } => "sq_kelly",
            Self::SprtWor { .. } => "sprt",
            Self::KaplanWald { .. } => "kaplan_wald",
            Self::KaplanKolmogorov { .. } => "kaplan_kolmogorov",
        }
    }

    /// Parameter string such as `eta=0.6;d=100`, used in simulation output.
    pub fn params(&self) -> String {
        match self {
            Self::Alpha { estimator } => match estimator {
                EstimatorSpec::Fixed { eta } => format!("eta={eta}"),
                EstimatorSpec::FromLambda { lambda } => format!("lambda={lambda}"),
                EstimatorSpec::ShrinkTrunc(p) => format!("eta={};d={}", p.eta0, p.d),
            },
            Self::AprioriKelly { eta } | Self::SprtWor { eta } => format!("eta={eta}"),
            Self::SqKellyMixture { components, .. } => format!("K={components}"),
            Self::KaplanWald { g } | Self::KaplanKolmogorov { g } => format!("g={g}"),
        }
    }
}

impl ComparatorSpec {
    /// Inverse of [`Self::name`] and [`Self::params`]. Parameters are
    /// `key=value` pairs separated by `;` or `,`. `alpha` takes `eta`, `d`
    /// (`inf` allowed) and optionally `c`; defaults for `c` and `eps_u` come
    /// from `config`. `sq_kelly` takes an optional `K`.
    pub fn from_name_params(name: &str, params: &str, config: &TestConfig) -> Result<Self> {
        let mut pairs = std::collections::BTreeMap::new();
        for item in params.split([';', ',']).map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("expected key=value, got {item:?}")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::InvalidConfig(format!("{k}: not a number: {v:?}")))?;
            if pairs.insert(k.trim().to_string(), v).is_some() {
                return Err(Error::InvalidConfig(format!("{k} given twice")));
            }
        }
        let mut take =
            |key: &str| pairs.remove(key).ok_or_else(|| Error::InvalidConfig(format!("{name} needs {key}=...")));
        let spec = match name {
            "alpha" => {
                let (eta0, d) = (take("eta")?, take("d")?);
                let mut st = crate::martingale::ShrinkTrunc::new(eta0, d, config);
                if let Ok(c) = take("c") {
                    st = st.with_c(c);
                }
                Self::alpha(EstimatorSpec::ShrinkTrunc(st))
            }
            "fixed" => Self::alpha(EstimatorSpec::Fixed { eta: take("eta")? }),
            "from_lambda" => Self::alpha(EstimatorSpec::FromLambda { lambda: take("lambda")? }),
            "apriori_kelly" => Self::AprioriKelly { eta: take("eta")? },
            "sq_kelly" => {
                let k = take("K").unwrap_or(DEFAULT_MIXTURE_COMPONENTS as f64);
                if !(k >= 1.0 && k.fract() == 0.0) {
                    return Err(Error::InvalidConfig(format!("K must be a positive integer, got {k}")));
                }
                Self::SqKellyMixture { components: k as usize, weights: None }
            }
            "sprt" => Self::SprtWor { eta: take("eta")? },
            "kaplan_wald" => Self::KaplanWald { g: take("g")? },
            "kaplan_kolmogorov" => Self::KaplanKolmogorov { g: take("g")? },
            other => return Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        };
        if let Some(extra) = pairs.keys().next() {
            return Err(Error::InvalidConfig(format!("{name} does not take {extra}")));
        }
        SequentialTest::new(&spec, *config)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kernel {
    Alpha(EstimatorSpec),
    KaplanWald(f64),
    KaplanKolmogorov(f64),
    Mixture(Box<MixtureState>),
}

/// A configured sequential test that consumes one value per step.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialTest {
    config: TestConfig,
    kernel: Kernel,
    state: TestState,
}

impl SequentialTest {
    pub fn new(spec: &ComparatorSpec, config: TestConfig) -> Result<Self> {
        config.validate()?;
        let kernel = match spec {
            ComparatorSpec::Alpha { estimator } => {
                estimator.validate(&config)?;
                Kernel::Alpha(*estimator)
            }
            ComparatorSpec::SprtWor { eta } => {
                let est = EstimatorSpec::Fixed { eta: *eta };
                est.validate(&config)?;
                Kernel::Alpha(est)
            }
            ComparatorSpec::AprioriKelly { eta } => {
                EstimatorSpec::Fixed { eta: *eta }.validate(&config)?;
                let lambda = eta_to_lambda(*eta, config.null_mean, config.upper)?;
                Kernel::Alpha(EstimatorSpec::FromLambda { lambda })
            }
            ComparatorSpec::SqKellyMixture { components, weights } => {
                if *components == 0 {
                    return Err(Error::InvalidConfig("mixture needs K ≥ 1 components".into()));
                }
                let (lambdas, default_weights) = default_mixture_grid(config.null_mean, *components);
                let weights = weights.clone().unwrap_or(default_weights);
                Kernel::Mixture(Box::new(MixtureState::new(&config, lambdas, weights)?))
            }
            ComparatorSpec::KaplanWald { g } => {
                if !(0.0..=1.0).contains(g) {
                    return Err(Error::InvalidConfig(format!("Kaplan-Wald g must be in [0, 1], got {g}")));
                }
                Kernel::KaplanWald(*g)
            }
            ComparatorSpec::KaplanKolmogorov { g } => {
                if !(*g >= 0.0 && g.is_finite()) {
                    return Err(Error::InvalidConfig(format!("Kaplan-Kolmogorov g must be ≥ 0, got {g}")));
                }
                Kernel::KaplanKolmogorov(*g)
            }
        };
        let state = match &kernel {
            Kernel::Mixture(m) => m.state,
            _ => TestState::fresh(config.null_mean),
        };
        Ok(Self { config, kernel, state })
    }

    pub fn config(&self) -> &TestConfig {
        &self.config
    }

    pub fn state(&self) -> &TestState {
        &self.state
    }

    pub fn p_value(&self) -> f64 {
        self.state.p_value()
    }

    pub fn step(&mut self, x: f64) -> Result<&TestState> {
        if !self.state.is_running() {
            return Err(Error::StepAfterFinish(self.state.status));
        }
        if !(x >= 0.0 && x <= self.config.upper) {
            return Err(Error::OutOfRange { value: x, low: 0.0, high: self.config.upper });
        }
        let (mu, u) = (self.state.null_mean, self.config.upper);
        let log_factor = match &mut self.kernel {
            Kernel::Alpha(est) => {
                let eta = est.eta(self.state.draws + 1, self.state.sum, mu, u);
                alpha_log_factor(x, eta, mu, u)
            }
            Kernel::KaplanWald(g) => kaplan_wald_log_factor(x, mu, *g),
            Kernel::KaplanKolmogorov(g) => kaplan_kolmogorov_log_factor(x, mu, *g),
            Kernel::Mixture(m) => {
                mixture_step_in_place(m, x, &self.config)?;
                self.state = m.state;
                return Ok(&self.state);
            }
        };
        self.state = advance(&self.state, x, &self.config, log_factor);
        Ok(&self.state)
    }
}
