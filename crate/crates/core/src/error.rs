use thiserror::Error;

/// Errors produced by the certificate toolkit.
///
/// Failed margin inequalities are *not* errors; they come back as verdict
/// objects. Errors are reserved for malformed inputs and I/O.
#[derive(Debug, Error)]
pub enum GsaError {
    #[error("matrix `{label}`: entry ({row},{col}) is not finite")]
    NonFiniteEntry { label: String, row: usize, col: usize },

    #[error("matrix `{label}`: {rows}x{cols} with {len} entries")]
    ShapeMismatch {
        label: String,
        rows: usize,
        cols: usize,
        len: usize,
    },

    #[error("matrix `{label}` has a zero dimension")]
    EmptyMatrix { label: String },

    #[error("rank {r} out of range (spectral length {d})")]
    RankOutOfRange { r: usize, d: usize },

    #[error("{name} = {value} outside its admissible range {range}")]
    ParamOutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("power-law fit: sigma[{index}] = {value} is not positive")]
    FitDomain { index: usize, value: f64 },

    #[error("degenerate exponent interval [{lo}, {hi}]")]
    DegenerateInterval { lo: f64, hi: f64 },

    #[error("matrix `{label}` is zero; interface amplification undefined")]
    ZeroMatrix { label: String },

    #[error("support size {s} exceeds column count {n}")]
    SupportTooLarge { s: usize, n: usize },

    #[error("group {group}: requested {q} core rows but group has {len}")]
    GroupTooSmall { group: usize, q: usize, len: usize },

    #[error("frame is not orthogonal: max defect {defect:e} exceeds {tol:e}")]
    NonOrthogonalFrame { defect: f64, tol: f64 },

    #[error("scale entry {index} = {value} is not positive")]
    NonPositiveScale { index: usize, value: f64 },

    #[error("diagonal weight {index} = {value} is not positive")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("row group {group} energy {energy:e} below declared floor {floor:e}")]
    RowEnergyBelowFloor { group: usize, energy: f64, floor: f64 },

    #[error("pair ({i},{j}) is degenerate (zero exclusive margin); cannot screen")]
    DegeneratePair { i: usize, j: usize },

    #[error("coarsening map is not surjective onto 0..{target}")]
    NonSurjectiveMap { target: usize },

    #[error("fine column bins overlap at column {col}")]
    OverlappingBins { col: usize },

    #[error("synthetic spec infeasible: {reason}")]
    InfeasibleSpec { reason: String },

    #[error("enumeration instance too large: n = {n} exceeds limit {limit}")]
    EnumerationTooLarge { n: usize, limit: usize },

    #[error("interface {index}: required analysis `{what}` missing")]
    MissingAnalysis { index: usize, what: &'static str },

    #[error("view {index}: grid mismatch ({got_rows}x{got_cols} vs {want_rows}x{want_cols}) and no coarsening map declared")]
    GridMismatch {
        index: usize,
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },

    #[error("container `{file}`: {reason} (offset {offset})")]
    Container {
        file: String,
        offset: u64,
        reason: String,
    },

    #[error("manifest `{file}`: {reason}")]
    Manifest { file: String, reason: String },

    #[error("config `{file}`: {reason}")]
    Config { file: String, reason: String },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GsaError>;
