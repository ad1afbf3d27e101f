//! Algorithm selection and hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::ParamVector;
use crate::models::{USER_SEGMENT, ITEM_SEGMENT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Scif,
    Gif,
    Ceu,
    Idea,
    Fanchuan,
    Kookmin,
    Seif,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Scif,
        Algorithm::Gif,
        Algorithm::Ceu,
        Algorithm::Idea,
        Algorithm::Fanchuan,
        Algorithm::Kookmin,
        Algorithm::Seif,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Scif => "scif",
            Algorithm::Gif => "gif",
            Algorithm::Ceu => "ceu",
            Algorithm::Idea => "idea",
            Algorithm::Fanchuan => "fanchuan",
            Algorithm::Kookmin => "kookmin",
            Algorithm::Seif => "seif",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which parameter segments an algorithm may modify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamScope {
    /// SCIF on models with explicit user embeddings touches those only;
    /// every other pairing uses all parameters.
    Auto,
    UserEmbeddingOnly,
    ItemEmbeddingOnly,
    All,
}

impl ParamScope {
    /// The concrete scope for an algorithm on a parameter layout.
    pub fn resolve(self, algorithm: Algorithm, params: &ParamVector) -> ParamScope {
        match self {
            ParamScope::Auto if algorithm == Algorithm::Scif && params.segment_info(USER_SEGMENT).is_some() => {
                ParamScope::UserEmbeddingOnly
            }
            ParamScope::Auto => ParamScope::All,
            other => other,
        }
    }

    pub fn includes(self, segment: &str) -> bool {
        match self {
            ParamScope::UserEmbeddingOnly => segment == USER_SEGMENT,
            ParamScope::ItemEmbeddingOnly => segment == ITEM_SEGMENT,
            ParamScope::All | ParamScope::Auto => true,
        }
    }

    /// Per-coordinate mask of the resolved scope.
    pub fn mask(self, algorithm: Algorithm, params: &ParamVector) -> Vec<bool> {
        let scope = self.resolve(algorithm, params);
        params.mask_where(|name| scope.includes(name))
    }
}

/// How GIF treats models whose loss has no propagation graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphPolicy {
    /// Only models with a propagation graph qualify; others are not applicable.
    Strict,
    /// Derive the bipartite interaction graph for hop masking.
    Derive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergencePolicy {
    /// Keep the last finite parameters and mark the remaining steps diverged.
    Continue,
    /// Stop the sequence at the first diverged step.
    HaltOnDiverge,
}

mod optional_norm {
    //! `inf` in the config file stands for "no clipping".
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(v.unwrap_or(f64::INFINITY))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let x = f64::deserialize(d)?;
        Ok(x.is_finite().then_some(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    pub param_scope: ParamScope,
    /// ℓ₂ bound on every influence update; `None` disables clipping.
    #[serde(with = "optional_norm")]
    pub max_norm: Option<f64>,
    /// Hessian damping for SCIF.
    pub damping: f64,
    /// Retain samples per SCIF update.
    pub bs: usize,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    /// Learning rate for every fine-tuning phase.
    pub learning_rate: f64,
    pub retain_frac_cap: f64,

    pub gif_hop_d: usize,
    pub gif_scale: f64,
    pub gif_damping: f64,
    pub gif_iters: usize,
    pub graph_policy: GraphPolicy,

    pub ceu_lambda: f64,
    pub ceu_sigma: f64,

    pub idea_damping: f64,
    pub idea_sigma: f64,
    pub epsilon: f64,
    pub delta: f64,

    pub kookmin_init_rate: f64,
    pub kookmin_lr_scale: f64,
    /// Fine-tuning samples per forgotten interaction.
    pub kookmin_samples_per_forget: usize,

    pub seif_sigma: f64,

    pub repair_epochs: usize,
    pub repair_sample_budget: usize,
    pub repair_batch_size: usize,

    pub fanchuan_rounds: usize,
    pub fanchuan_temperature: f64,
    pub fanchuan_kl_steps: usize,
    /// Contrastive steps per round, each on a fresh draw from the retain pool.
    pub fanchuan_draws: usize,
    pub fanchuan_batch_users: usize,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Scif,
            param_scope: ParamScope::Auto,
            max_norm: Some(10.0),
            damping: 0.01,
            bs: 32,
            cg_tol: crate::math::DEFAULT_CG_TOL,
            cg_max_iters: crate::math::DEFAULT_CG_MAX_ITERS,
            learning_rate: 0.01,
            retain_frac_cap: crate::data::DEFAULT_RETAIN_FRAC_CAP,
            gif_hop_d: 2,
            gif_scale: 1.0,
            gif_damping: 0.01,
            gif_iters: 100,
            graph_policy: GraphPolicy::Strict,
            ceu_lambda: 0.01,
            ceu_sigma: 1e-3,
            idea_damping: 0.01,
            idea_sigma: 0.0,
            epsilon: f64::INFINITY,
            delta: 1e-5,
            kookmin_init_rate: 1e-4,
            kookmin_lr_scale: 0.1,
            kookmin_samples_per_forget: 16,
            seif_sigma: 0.6,
            repair_epochs: 1,
            repair_sample_budget: 1024,
            repair_batch_size: 256,
            fanchuan_rounds: 1,
            fanchuan_temperature: 0.5,
            fanchuan_kl_steps: 1,
            fanchuan_draws: 4,
            fanchuan_batch_users: 16,
        }
    }
}

impl AlgoConfig {
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_string()));
        let non_negative = |x: f64| x >= 0.0 && x.is_finite();
        if let Some(m) = self.max_norm {
            if !(m > 0.0) {
                return err("max_norm must be positive (use inf to disable clipping)");
            }
        }
        for (name, v) in [
            ("damping", self.damping),
            ("gif_damping", self.gif_damping),
            ("ceu_lambda", self.ceu_lambda),
            ("ceu_sigma", self.ceu_sigma),
            ("idea_damping", self.idea_damping),
            ("idea_sigma", self.idea_sigma),
            ("seif_sigma", self.seif_sigma),
        ] {
            if !non_negative(v) {
                return Err(Error::Config(format!("{name} must be a non-negative number")));
            }
        }
        if !(self.epsilon >= 0.0) {
            return err("epsilon must be >= 0");
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return err("delta must lie in [0, 1)");
        }
        if self.algorithm == Algorithm::Idea && self.delta == 0.0 && self.epsilon.is_finite() {
            return err("delta = 0 with a finite epsilon needs unbounded noise");
        }
        if !(self.kookmin_init_rate > 0.0 && self.kookmin_init_rate < 1.0) {
            return err("kookmin_init_rate must lie in (0, 1)");
        }
        if !(self.kookmin_lr_scale > 0.0 && self.kookmin_lr_scale <= 1.0) {
            return err("kookmin_lr_scale must lie in (0, 1]");
        }
        if !(self.gif_scale > 0.0 && self.gif_scale.is_finite()) {
            return err("gif_scale must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err("learning_rate must be positive");
        }
        if !(self.cg_tol > 0.0) {
            return err("cg_tol must be positive");
        }
        if !(self.fanchuan_temperature > 0.0) {
            return err("fanchuan_temperature must be positive");
        }
        if !(self.retain_frac_cap > 0.0 && self.retain_frac_cap <= 1.0) {
            return err("retain_frac_cap must lie in (0, 1]");
        }
        if self.bs == 0
            || self.cg_max_iters == 0
            || self.gif_iters == 0
            || self.repair_batch_size == 0
            || self.fanchuan_batch_users == 0
        {
            return err("bs, cg_max_iters, gif_iters, repair_batch_size and fanchuan_batch_users must be positive");
        }
        Ok(())
    }

    /// Interaction cap for the per-step retain sample.
    pub fn retain_cap(&self) -> usize {
        match self.algorithm {
            Algorithm::Scif => self.bs,
            _ => self.repair_sample_budget,
        }
    }
}
