//! Model parameters, scaling exponents, and the singularity classifier.
//!
//! The profile equations depend on the spatial dimension `N`, the
//! diffusivities `D_u`, `D_v`, the sensitivity `chi` and the consumption
//! exponent `alpha`.  The scaling exponent `kappa` is pinned by
//! `kappa (1 - alpha) = 1 - N/2` except in the degenerate case
//! `N = 2, alpha = 1` where it is a free parameter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{name} must be positive, got {value}")]
    NonPositiveDiffusivity { name: &'static str, value: f64 },
    #[error("effective exponent q = alpha + chi/D_u = {q} violates q >= 1")]
    ExponentBelowOne { q: f64 },
    #[error("alpha = 1 with N = {n} admits no scaling exponent (need N = 2)")]
    InvalidScaling { n: u32 },
    #[error("kappa = {kappa} is incompatible with N = {n}, alpha = {alpha}")]
    KappaMismatch { kappa: f64, n: u32, alpha: f64 },
    #[error("N must be >= 1")]
    DimensionZero,
    #[error("alpha must be >= 0, got {alpha}")]
    NegativeAlpha { alpha: f64 },
}

/// Result of solving the scaling relation for kappa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaRule {
    Fixed(f64),
    /// `N = 2, alpha = 1`: the relation is vacuous and kappa stays free.
    AnyKappa,
}

/// Solve `kappa (1 - alpha) = 1 - N/2` for kappa.
pub fn derive_kappa(n: u32, alpha: f64) -> Result<KappaRule, ModelError> {
    if n == 0 {
        return Err(ModelError::DimensionZero);
    }
    if alpha < 0.0 {
        return Err(ModelError::NegativeAlpha { alpha });
    }
    if alpha == 1.0 {
        if n == 2 {
            Ok(KappaRule::AnyKappa)
        } else {
            Err(ModelError::InvalidScaling { n })
        }
    } else {
        Ok(KappaRule::Fixed((1.0 - f64::from(n) / 2.0) / (1.0 - alpha)))
    }
}

/// Physical and derived constants of one parameter point.
///
/// `sigma = 1/(4 D_u (alpha - 1) + 4 chi) = 1/(4 D_u (q - 1))` is the
/// exponent of the super-Gaussian blow-up transform; it only exists for
/// `q > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: u32,
    pub d_u: f64,
    pub d_v: f64,
    pub chi: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub sigma: Option<f64>,
    pub q: f64,
}

impl ModelParams {
    /// Build a parameter point, deriving kappa from the scaling relation.
    ///
    /// Rejects `alpha = 1` unless `N = 2`; use [`ModelParams::with_kappa`]
    /// for that case.
    pub fn new(n: u32, d_u: f64, d_v: f64, chi: f64, alpha: f64) -> Result<Self, ModelError> {
        match derive_kappa(n, alpha)? {
            KappaRule::Fixed(kappa) => Self::assemble(n, d_u, d_v, chi, alpha, kappa),
            KappaRule::AnyKappa => Err(ModelError::KappaMismatch {
                kappa: f64::NAN,
                n,
                alpha,
            }),
        }
    }

    /// Build the `N = 2, alpha = 1` point with a user-supplied kappa.
    pub fn with_kappa(
        n: u32,
        d_u: f64,
        d_v: f64,
        chi: f64,
        alpha: f64,
        kappa: f64,
    ) -> Result<Self, ModelError> {
        match derive_kappa(n, alpha)? {
            KappaRule::AnyKappa => Self::assemble(n, d_u, d_v, chi, alpha, kappa),
            KappaRule::Fixed(k) => {
                if (kappa - k).abs() <= 1e-12 * (1.0 + k.abs()) {
                    Self::assemble(n, d_u, d_v, chi, alpha, k)
                } else {
                    Err(ModelError::KappaMismatch { kappa, n, alpha })
                }
            }
        }
    }

    /// Diagnostic constructor that skips the scaling relation.
    ///
    /// Produces a parameter point whose reconstruction deliberately violates
    /// the self-similar scaling; used by the PDE-residual negative control.
    /// All other admissibility checks still apply.
    pub fn with_kappa_override(
        n: u32,
        d_u: f64,
        d_v: f64,
        chi: f64,
        alpha: f64,
        kappa: f64,
    ) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::DimensionZero);
        }
        if alpha < 0.0 {
            return Err(ModelError::NegativeAlpha { alpha });
        }
        Self::assemble(n, d_u, d_v, chi, alpha, kappa)
    }

    fn assemble(
        n: u32,
        d_u: f64,
        d_v: f64,
        chi: f64,
        alpha: f64,
        kappa: f64,
    ) -> Result<Self, ModelError> {
        for (name, value) in [("D_u", d_u), ("D_v", d_v), ("chi", chi)] {
            if !(value > 0.0) {
                return Err(ModelError::NonPositiveDiffusivity { name, value });
            }
        }
        let q = alpha + chi / d_u;
        if q < 1.0 {
            return Err(ModelError::ExponentBelowOne { q });
        }
        let sigma = if q > 1.0 {
            Some(1.0 / (4.0 * d_u * (q - 1.0)))
        } else {
            None
        };
        Ok(ModelParams {
            n,
            d_u,
            d_v,
            chi,
            alpha,
            kappa,
            sigma,
            q,
        })
    }

    pub fn dim(&self) -> f64 {
        f64::from(self.n)
    }

    /// Regime boundary: the deep (variational) regime is `kappa < -N/2`.
    pub fn is_deep_regime(&self) -> bool {
        self.kappa < -self.dim() / 2.0
    }
}

/// kappa-band classification of the initial behavior of `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularityTag {
    Regular,
    LessSingular,
    VerySingular,
    AnyDependsOnKappa,
}

impl SingularityTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SingularityTag::Regular => "regular",
            SingularityTag::LessSingular => "less_singular",
            SingularityTag::VerySingular => "very_singular",
            SingularityTag::AnyDependsOnKappa => "any",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularityClass {
    pub tag: SingularityTag,
    /// The kappa-interval that produced the tag (`-inf`/`inf` for unbounded ends).
    pub kappa_band: (f64, f64),
}

fn band_of(n: u32, kappa: f64) -> (SingularityTag, (f64, f64)) {
    let half_n = f64::from(n) / 2.0;
    if kappa >= 0.0 {
        (SingularityTag::Regular, (0.0, f64::INFINITY))
    } else if kappa > -half_n {
        (SingularityTag::LessSingular, (-half_n, 0.0))
    } else {
        (SingularityTag::VerySingular, (f64::NEG_INFINITY, -half_n))
    }
}

/// Classify the initial behavior of `v` from the kappa-band.
///
/// For `N = 2, alpha = 1` the supplied kappa decides the band but the tag
/// records that any behavior is reachable.
pub fn classify_v(n: u32, alpha: f64, kappa: f64) -> Result<SingularityClass, ModelError> {
    match derive_kappa(n, alpha)? {
        KappaRule::Fixed(k) => {
            let (tag, kappa_band) = band_of(n, k);
            Ok(SingularityClass { tag, kappa_band })
        }
        KappaRule::AnyKappa => {
            let (_, kappa_band) = band_of(n, kappa);
            Ok(SingularityClass {
                tag: SingularityTag::AnyDependsOnKappa,
                kappa_band,
            })
        }
    }
}
