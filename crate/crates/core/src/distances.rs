//! Distances and semi-distances between curves.
//!
//! `L¹`, `L²` and `L∞` act on the curves themselves. The functional
//! Mahalanobis (`FM`) and functional principal components (`FPC`)
//! semi-distances compare truncated score vectors under a fitted covariance
//! model, either shared by all classes (`_C`) or specific to the class the
//! comparison is made in (`_D`). `DH` is the two-class projected centroid
//! distance.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, FunctionalDatum};
use crate::error::{FdaError, Result};
use crate::fpca::{Center, FpcaMode, FpcaModel};
use crate::quadrature::{trapezoid_weights, uniform_grid};

/// Points of the uniform grid used for `L¹` and `L∞`.
pub const DENSE_GRID_POINTS: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DistanceKind {
    #[serde(rename = "L1")]
    L1,
    #[serde(rename = "L2")]
    L2,
    #[serde(rename = "Linf")]
    Linf,
    #[serde(rename = "FPC_C")]
    FpcC,
    #[serde(rename = "FPC_D")]
    FpcD,
    #[serde(rename = "FM_C")]
    FmC,
    #[serde(rename = "FM_D")]
    FmD,
    #[serde(rename = "DH")]
    Dh,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 8] = [
        DistanceKind::L1,
        DistanceKind::L2,
        DistanceKind::Linf,
        DistanceKind::FpcC,
        DistanceKind::FpcD,
        DistanceKind::FmC,
        DistanceKind::FmD,
        DistanceKind::Dh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::L1 => "L1",
            DistanceKind::L2 => "L2",
            DistanceKind::Linf => "Linf",
            DistanceKind::FpcC => "FPC_C",
            DistanceKind::FpcD => "FPC_D",
            DistanceKind::FmC => "FM_C",
            DistanceKind::FmD => "FM_D",
            DistanceKind::Dh => "DH",
        }
    }

    /// Whether the kind takes a truncation (number of components).
    pub fn uses_truncation(self) -> bool {
        !matches!(self, DistanceKind::L1 | DistanceKind::L2 | DistanceKind::Linf)
    }

    /// Whether the kind needs one covariance model per class.
    pub fn per_class(self) -> bool {
        matches!(self, DistanceKind::FpcD | DistanceKind::FmD)
    }

    pub fn standardized(self) -> bool {
        matches!(self, DistanceKind::FmC | DistanceKind::FmD | DistanceKind::Dh)
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceKind {
    type Err = FdaError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match norm.as_str() {
            "l1" => DistanceKind::L1,
            "l2" => DistanceKind::L2,
            "linf" | "l_inf" | "lmax" => DistanceKind::Linf,
            "fpc_c" | "fpcc" => DistanceKind::FpcC,
            "fpc_d" | "fpcd" => DistanceKind::FpcD,
            "fm_c" | "fmc" => DistanceKind::FmC,
            "fm_d" | "fmd" => DistanceKind::FmD,
            "dh" => DistanceKind::Dh,
            _ => return Err(FdaError::InvalidConfiguration(format!("unknown distance kind {s:?}"))),
        })
    }
}

/// A distance kind together with its truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceSpec {
    pub kind: DistanceKind,
    /// Number of components; ignored by the `L` kinds.
    pub truncation: usize,
}

impl DistanceSpec {
    pub fn new(kind: DistanceKind, truncation: usize) -> Self {
        Self { kind, truncation }
    }
}

/// Covariance models a semi-distance is evaluated under.
#[derive(Debug, Clone)]
pub enum ModelSet {
    /// One model shared by every class (pooled within-class or global).
    Common(FpcaModel),
    /// One model per class, indexed by class.
    PerClass(Vec<FpcaModel>),
}

impl ModelSet {
    pub fn for_class(&self, g: usize) -> Result<&FpcaModel> {
        match self {
            ModelSet::Common(m) => Ok(m),
            ModelSet::PerClass(ms) => ms
                .get(g)
                .ok_or_else(|| FdaError::InvalidConfiguration(format!("no model for class {g}"))),
        }
    }

    /// Smallest retained rank over the models.
    pub fn min_retained(&self) -> usize {
        match self {
            ModelSet::Common(m) => m.retained_count(),
            ModelSet::PerClass(ms) => ms.iter().map(FpcaModel::retained_count).min().unwrap_or(0),
        }
    }

    fn check_kind(&self, kind: DistanceKind) -> Result<()> {
        match (self, kind.per_class()) {
            (ModelSet::Common(_), false) | (ModelSet::PerClass(_), true) => Ok(()),
            _ => Err(FdaError::InvalidConfiguration(format!(
                "{kind} is not compatible with the supplied covariance models"
            ))),
        }
    }
}

/// Center a model uses for class `g`: the class mean where the model has
/// class means, the overall mean for a global model.
pub fn center_for(model: &FpcaModel, g: usize) -> Center {
    match model.mode() {
        FpcaMode::Global => Center::Global,
        _ => Center::Class(g),
    }
}

/// Curve values on the fixed dense grid used for `L¹` and `L∞`.
#[derive(Debug, Clone)]
pub struct DenseGrid {
    design: DMatrix<f64>,
    weights: Vec<f64>,
    basis_id: crate::basis::BasisId,
}

impl DenseGrid {
    pub fn new(basis: &BasisSystem) -> Result<Self> {
        let (a, b) = basis.domain();
        let grid = uniform_grid(a, b, DENSE_GRID_POINTS);
        Ok(Self {
            design: basis.design_matrix(&grid)?,
            weights: trapezoid_weights(a, b, DENSE_GRID_POINTS),
            basis_id: basis.id(),
        })
    }

    pub fn values(&self, f: &FunctionalDatum) -> Result<Vec<f64>> {
        if f.basis_id() != self.basis_id || f.len() != self.design.ncols() {
            return Err(FdaError::BasisMismatch);
        }
        Ok((&self.design * f.coeffs()).iter().copied().collect())
    }

    /// Composite-trapezoid `∫|f − g|` from grid values.
    pub fn l1_from_values(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).zip(&self.weights).map(|((a, b), w)| w * (a - b).abs()).sum()
    }

    pub fn linf_from_values(f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpNorm {
    L1,
    L2,
    Linf,
}

/// `L^p` distance between two curves.
pub fn d_lp(basis: &BasisSystem, f: &FunctionalDatum, g: &FunctionalDatum, p: LpNorm) -> Result<f64> {
    f.check_same_basis(g)?;
    match p {
        LpNorm::L2 => basis.norm(&f.sub(g)?),
        LpNorm::L1 | LpNorm::Linf => {
            let grid = DenseGrid::new(basis)?;
            let (vf, vg) = (grid.values(f)?, grid.values(g)?);
            Ok(match p {
                LpNorm::L1 => grid.l1_from_values(&vf, &vg),
                _ => DenseGrid::linf_from_values(&vf, &vg),
            })
        }
    }
}

fn truncated_difference(
    spec: &DistanceSpec,
    models: &ModelSet,
    f: &FunctionalDatum,
    g: &FunctionalDatum,
    class: usize,
    standardize: bool,
) -> Result<f64> {
    models.check_kind(spec.kind)?;
    let model = models.for_class(class)?;
    let center = center_for(model, class);
    let k = spec.truncation;
    let (sf, sg) = if standardize {
        (model.standardized_scores(f, center, k)?, model.standardized_scores(g, center, k)?)
    } else {
        (model.scores(f, center, k)?, model.scores(g, center, k)?)
    };
    Ok(sf.iter().zip(&sg).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Functional Mahalanobis semi-distance: Euclidean distance between the
/// first `K` standardized scores, both curves centered at class `class`'s mean.
pub fn d_fm(spec: &DistanceSpec, models: &ModelSet, f: &FunctionalDatum, g: &FunctionalDatum, class: usize) -> Result<f64> {
    if !matches!(spec.kind, DistanceKind::FmC | DistanceKind::FmD) {
        return Err(FdaError::InvalidConfiguration(format!("d_fm called with {}", spec.kind)));
    }
    truncated_difference(spec, models, f, g, class, true)
}

/// Functional principal components semi-distance (raw scores).
pub fn d_fpc(spec: &DistanceSpec, models: &ModelSet, f: &FunctionalDatum, g: &FunctionalDatum, class: usize) -> Result<f64> {
    if !matches!(spec.kind, DistanceKind::FpcC | DistanceKind::FpcD) {
        return Err(FdaError::InvalidConfiguration(format!("d_fpc called with {}", spec.kind)));
    }
    truncated_difference(spec, models, f, g, class, false)
}

/// Delaigle–Hall distance from `f` to the mean of class `class ∈ {0, 1}`:
/// `|Σ_k ω_{f,class,k} δ_k|` with `δ_k = ⟨μ_2 − μ_1, ψ_k⟩ / λ_k^{1/2}`.
pub fn d_dh(truncation: usize, models: &ModelSet, f: &FunctionalDatum, class: usize) -> Result<f64> {
    let model = match models {
        ModelSet::Common(m) => m,
        ModelSet::PerClass(_) => {
            return Err(FdaError::InvalidConfiguration("DH needs a common covariance model".into()))
        }
    };
    let means = model.class_means();
    if means.len() != 2 {
        return Err(FdaError::TwoClassOnly { classes: means.len() });
    }
    if class > 1 {
        return Err(FdaError::InvalidConfiguration(format!("class {class} out of range for DH")));
    }
    let omega = model.standardized_scores(f, Center::Class(class), truncation)?;
    let delta = dh_direction(model, truncation)?;
    Ok(omega.iter().zip(&delta).map(|(w, d)| w * d).sum::<f64>().abs())
}

/// Standardized projections of the mean difference `μ_2 − μ_1`.
pub fn dh_direction(model: &FpcaModel, truncation: usize) -> Result<Vec<f64>> {
    let means = model.class_means();
    if means.len() != 2 {
        return Err(FdaError::TwoClassOnly { classes: means.len() });
    }
    let diff = means[1].sub(&means[0])?;
    let proj = model.project(&diff, truncation)?;
    Ok(proj.iter().zip(model.eigenvalues()).map(|(p, l)| p / l.sqrt()).collect())
}
