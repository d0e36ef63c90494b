//! Base-learner construction: B-spline bases, difference penalties, ridge
//! systems pinned to a fixed effective df, and the formula grammar.

mod bspline;
mod formula;
mod learner;
mod ridge;

pub use bspline::{bspline_design, difference_matrix, difference_penalty, BSplineBasis, SplineConfig};
pub use formula::{Formula, FormulaOptions, Term, FULL_SURVEY_FORMULA};
pub use learner::{
    categorical_baselearners, decompose_continuous, intercept, linear, product, smooth_deviation, spatial_surface,
    tensor_deviation, tensor_penalty, varying_coefficient, BaseLearner, Design, LearnerKind,
};
pub use ridge::{effective_df, ridge_fit, solve_lambda_for_df, solve_lambda_for_df_gram, RidgeFit, RidgeSystem};
