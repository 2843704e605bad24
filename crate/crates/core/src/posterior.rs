//! Method-agnostic posterior draws of the two response surfaces.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bart::BartFit;
use crate::error::{input, Result};

/// Draws of one response surface, evaluable at any covariate vector.
pub trait Surface: Send + Sync {
    fn n_draws(&self) -> usize;
    fn n_covariates(&self) -> usize;
    /// Value of draw `draw` at `(x, source)`. `x` has `n_covariates()` entries.
    fn eval(&self, draw: usize, x: &[f64], source: u32) -> f64;
}

impl Surface for BartFit {
    fn n_draws(&self) -> usize {
        self.forests.len()
    }

    fn n_covariates(&self) -> usize {
        BartFit::n_covariates(self)
    }

    fn eval(&self, draw: usize, x: &[f64], source: u32) -> f64 {
        self.forests[draw].predict_unchecked(x, source)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "BART")]
    Bart,
    #[serde(rename = "HLM")]
    Hlm,
    #[serde(rename = "NNHM")]
    Nnhm,
    #[serde(rename = "BART-")]
    BartMinus,
    #[serde(rename = "HLM-")]
    HlmMinus,
    #[serde(rename = "NNHM-")]
    NnhmMinus,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Bart,
        Method::Hlm,
        Method::Nnhm,
        Method::BartMinus,
        Method::HlmMinus,
        Method::NnhmMinus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bart => "BART",
            Method::Hlm => "HLM",
            Method::Nnhm => "NNHM",
            Method::BartMinus => "BART-",
            Method::HlmMinus => "HLM-",
            Method::NnhmMinus => "NNHM-",
        }
    }

    /// Whether the method uses external control rows.
    pub fn borrows(self) -> bool {
        matches!(self, Method::Bart | Method::Hlm | Method::Nnhm)
    }

    pub fn parse(s: &str) -> Result<Method> {
        let t = s.trim();
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(t))
            .map_or_else(|| input(format!("unknown method `{t}`")), Ok)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

/// Paired draws of the control surface f0(x, s) and the treated surface
/// f1(x), plus residual sds. Draw `l` of both surfaces belongs to the same
/// posterior sample index.
#[derive(Clone)]
pub struct PosteriorDraws {
    pub method: Method,
    control: Arc<dyn Surface>,
    treated: Arc<dyn Surface>,
    pub sigma0: Vec<f64>,
    pub sigma1: Vec<f64>,
}

impl fmt::Debug for PosteriorDraws {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PosteriorDraws")
            .field("method", &self.method)
            .field("n_draws", &self.n_draws())
            .finish()
    }
}

impl PosteriorDraws {
    pub fn new(
        method: Method,
        control: Arc<dyn Surface>,
        treated: Arc<dyn Surface>,
        sigma0: Vec<f64>,
        sigma1: Vec<f64>,
    ) -> Result<Self> {
        let l = control.n_draws();
        if l == 0 {
            return input("posterior has no draws");
        }
        if treated.n_draws() != l || sigma0.len() != l || sigma1.len() != l {
            return input("control and treated draws must be paired");
        }
        if treated.n_covariates() != control.n_covariates() {
            return input("control and treated surfaces use different covariates");
        }
        Ok(PosteriorDraws {
            method,
            control,
            treated,
            sigma0,
            sigma1,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.control.n_draws()
    }

    pub fn n_covariates(&self) -> usize {
        self.control.n_covariates()
    }

    pub fn eval_control(&self, draw: usize, x: &[f64], source: u32) -> f64 {
        self.control.eval(draw, x, source)
    }

    pub fn eval_treated(&self, draw: usize, x: &[f64]) -> f64 {
        self.treated.eval(draw, x, 0)
    }

    pub fn control_surface(&self) -> &Arc<dyn Surface> {
        &self.control
    }

    pub fn treated_surface(&self) -> &Arc<dyn Surface> {
        &self.treated
    }
}

/// A surface that is the same function for every draw; handy for tests and
/// for plugging in known truths.
pub struct FnSurface<F> {
    pub n_draws: usize,
    pub n_covariates: usize,
    pub f: F,
}

impl<F> Surface for FnSurface<F>
where
    F: Fn(usize, &[f64], u32) -> f64 + Send + Sync,
{
    fn n_draws(&self) -> usize {
        self.n_draws
    }

    fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    fn eval(&self, draw: usize, x: &[f64], source: u32) -> f64 {
        (self.f)(draw, x, source)
    }
}
