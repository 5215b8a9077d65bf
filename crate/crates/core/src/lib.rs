//! Separable-system symbolic regression: detect the additive / multiplicative
//! structure of a black-box function and fit each factor from a small
//! template library.

pub mod assembly;
pub mod bict;
pub mod blocks;
pub mod cases;
pub mod error;
pub mod factors;
mod linalg;
pub mod optimizer;
pub mod parse;
pub mod model;
pub mod problem;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod target;
pub mod template;

pub use assembly::{run_mbb, FitConfig, MbbConfig, MbbOutcome};
pub use bict::{is_constant, is_linearly_dependent, Tolerance};
pub use blocks::{BlockStructure, GSStructure};
pub use cases::{builtin_case, builtin_cases, CaseSpec};
pub use error::{Error, Result, Stage};
pub use factors::Polarity;
pub use model::{eval_model, render_model, FittedFactor, GSModel};
pub use optimizer::{minimize, OptConfig, OptResult};
pub use parse::{parse_expression, ExprError, ExprTree};
pub use problem::ProblemFile;
pub use report::{run_case, run_suite, Report, RunConfig, SuiteResult};
pub use sampling::{lhs_sample, random_interior_point, sample_with_fixed, BoxDomain, SampleSet};
pub use target::{Counting, FnTarget, Target};
pub use template::{eval_template, ModelTemplate};
