use thiserror::Error;

/// Errors surfaced by the detection, fitting and assembly pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("target evaluation failed at {point:?}: value {value}")]
    TargetEval { point: Vec<f64>, value: f64 },
    #[error("inconsistent structure across trials: {0}")]
    Structure(String),
    #[error("degenerate sampling context: {0}")]
    DegenerateContext(String),
    #[error("factor over {0} variables is not covered by the model library")]
    UnsupportedArity(usize),
    #[error("no library model reached the target error for factor {vars:?} (best {best_template}, relative mse {best_mse:e})")]
    NoModelFits {
        vars: Vec<usize>,
        best_template: String,
        best_mse: f64,
    },
    #[error("block design matrix is ill-conditioned (condition number {0:e})")]
    IllConditionedAssembly(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Expression(#[from] crate::parse::ExprError),
    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

/// Pipeline stage tag attached to errors surfaced by `run_mbb`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    BlockDetection,
    FactorDetection,
    FactorFitting,
    Assembly,
    Validation,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::BlockDetection => "block detection",
            Stage::FactorDetection => "factor detection",
            Stage::FactorFitting => "factor fitting",
            Stage::Assembly => "assembly",
            Stage::Validation => "validation",
        };
        f.write_str(s)
    }
}

impl Error {
    pub fn at(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage tags stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
