use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
    #[error("frame is not bracket generating up to depth {depth} (span rank {rank} of {dim})")]
    NotBracketGenerating { depth: usize, rank: usize, dim: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("precondition violated: {0}")]
    Domain(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("map left the tubular neighbourhood at step {step} (normal defect {defect:.3e})")]
    TubeExit { step: usize, defect: f64 },
    #[error("map left the coordinate chart at step {step} (max chart radius {radius:.6})")]
    ChartExit { step: usize, radius: f64 },
    #[error("grid has {nodes} nodes, above the dense spectral cap of {cap}; use a smaller grid")]
    SpectralCap { nodes: usize, cap: usize },
    #[error("configuration errors:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
