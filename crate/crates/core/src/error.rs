use thiserror::Error;

pub type Result<T, E = PencilError> = std::result::Result<T, E>;

/// Everything that can go wrong between loading a tuple and emitting a
/// reduced tuple.
///
/// Indices carried by the structural variants are one-based so that they
/// read the same way as the block labels printed in reports.
#[derive(Debug, Error)]
pub enum PencilError {
    #[error("matrix {index} is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { index: usize, deviation: f64 },

    #[error("matrix is not unitary (deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigenvalue gap {gap:.3e} lies within a factor 10 of the clustering threshold {threshold:.3e}")]
    ClusterAmbiguity { gap: f64, threshold: f64 },

    #[error("eigenvalue clusters {i} and {j} are separated by {separation:.3e}, below {required:.3e}")]
    SeparationTooSmall {
        i: usize,
        j: usize,
        separation: f64,
        required: f64,
    },

    #[error("interpolation grid of {points} points exceeds the cap of {cap}")]
    GridTooLarge { points: u128, cap: u128 },

    #[error("line direction is degenerate: leading coefficient {leading:.3e} vs max {max:.3e}")]
    DegenerateDirection { leading: f64, max: f64 },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("no usable direction found for line {line} after {attempts} attempts")]
    LineSamplingFailed { line: usize, attempts: usize },

    #[error("variable transform is singular (|det| = {det:.3e})")]
    SingularTransform { det: f64 },

    #[error("lost track of the root branch near cluster {cluster}: {detail}")]
    BranchTrackingLost { cluster: usize, detail: String },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("no admissible transform found in {tries} tries")]
    AdmissibleSamplingFailed { tries: usize },

    #[error("spectrum of A1 is not {n} clusters of multiplicity {k}: found {found:?}")]
    SpectrumPatternViolation {
        n: usize,
        k: usize,
        found: Vec<usize>,
    },

    #[error("block ({i},{j}) of A{layer} is not a scalar multiple of a unitary (deviation {deviation:.3e})")]
    NotUnitaryScalar {
        i: usize,
        j: usize,
        layer: usize,
        deviation: f64,
    },

    #[error("block ({i},{j}) of A{layer} disagrees with the reference layer A{reference} beyond a phase (deviation {deviation:.3e})")]
    LayerInconsistency {
        i: usize,
        j: usize,
        layer: usize,
        reference: usize,
        deviation: f64,
    },

    #[error("cycle {cycle:?} does not close to a unimodular scalar (residual {residual:.3e})")]
    CycleInconsistency { cycle: Vec<usize>, residual: f64 },

    #[error("linked index pairs do not form disjoint complete blocks: {0}")]
    PartitionInconsistency(String),

    #[error("block ({i},{j}) of A{layer} is not scalar after conjugation (deviation {deviation:.3e})")]
    ScalarizationFailed {
        i: usize,
        j: usize,
        layer: usize,
        deviation: f64,
    },

    #[error("cycle edge ({i},{j}) has zero coefficient")]
    ZeroCoefficientOnCycle { i: usize, j: usize },

    #[error("{count} monomials exceed the cap of {cap}")]
    MonomialBlowup { count: u128, cap: u128 },

    #[error("full pencil determinant is not a perfect {k}-th power")]
    NotKthPower { k: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PencilError {
    /// Variant name, stable across releases, for reports and exit paths.
    pub fn kind(&self) -> &'static str {
        match self {
            PencilError::NotHermitian { .. } => "NotHermitian",
            PencilError::NotUnitary { .. } => "NotUnitary",
            PencilError::NonFinite => "NonFinite",
            PencilError::DimensionMismatch(_) => "DimensionMismatch",
            PencilError::InvalidArgument(_) => "InvalidArgument",
            PencilError::ClusterAmbiguity { .. } => "ClusterAmbiguity",
            PencilError::SeparationTooSmall { .. } => "SeparationTooSmall",
            PencilError::GridTooLarge { .. } => "GridTooLarge",
            PencilError::DegenerateDirection { .. } => "DegenerateDirection",
            PencilError::NumericalBreakdown(_) => "NumericalBreakdown",
            PencilError::LineSamplingFailed { .. } => "LineSamplingFailed",
            PencilError::SingularTransform { .. } => "SingularTransform",
            PencilError::BranchTrackingLost { .. } => "BranchTrackingLost",
            PencilError::IndexOutOfRange { .. } => "IndexOutOfRange",
            PencilError::AdmissibleSamplingFailed { .. } => "AdmissibleSamplingFailed",
            PencilError::SpectrumPatternViolation { .. } => "SpectrumPatternViolation",
            PencilError::NotUnitaryScalar { .. } => "NotUnitaryScalar",
            PencilError::LayerInconsistency { .. } => "LayerInconsistency",
            PencilError::CycleInconsistency { .. } => "CycleInconsistency",
            PencilError::PartitionInconsistency(_) => "PartitionInconsistency",
            PencilError::ScalarizationFailed { .. } => "ScalarizationFailed",
            PencilError::ZeroCoefficientOnCycle { .. } => "ZeroCoefficientOnCycle",
            PencilError::MonomialBlowup { .. } => "MonomialBlowup",
            PencilError::NotKthPower { .. } => "NotKthPower",
            PencilError::Io(_) => "Io",
            PencilError::Json(_) => "Json",
        }
    }

    /// Failures that mean the tuple violates the structure a reducing
    /// decomposition needs, as opposed to bad input or numerics.
    pub fn is_structural(&self) -> bool {
        matches!(
            self,
            PencilError::NotUnitaryScalar { .. }
                | PencilError::LayerInconsistency { .. }
                | PencilError::CycleInconsistency { .. }
                | PencilError::PartitionInconsistency(_)
                | PencilError::ScalarizationFailed { .. }
        )
    }

    /// Failures of the standing hypotheses of the splitting test.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            PencilError::SpectrumPatternViolation { .. }
                | PencilError::NotKthPower { .. }
                | PencilError::ClusterAmbiguity { .. }
                | PencilError::MonomialBlowup { .. }
        )
    }
}
