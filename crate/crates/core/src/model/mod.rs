//! Posteriors, signaling schemes, constraints, utilities and instances.

pub mod constraint;
mod instance;
mod posterior;
mod scheme;
pub mod utility;

pub use constraint::{ConstraintKind, ConstraintSpec, Mode, NormOrder};
pub use instance::{
    eval_constraint, eval_utility, verify_scheme, ConstraintReport, ProblemInstance,
    VerificationReport,
};
pub use posterior::{Posterior, NEGATIVE_TOL, SUM_TOL};
pub use scheme::{
    check_bayes_plausible, scheme_expectation, Plausibility, SignalingScheme, MERGE_TOL,
    PLAUSIBILITY_TOL,
};
pub use utility::{
    MaxLinear, Piece, PiecewiseConstant, UtilitySpec, WeightedMaxLinear, WeightedTerm,
};
