use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}, line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("subject {subject}: visit at time {time} (line {line}) is after censoring time {censor_time}")]
    VisitAfterCensoring {
        subject: String,
        time: f64,
        censor_time: f64,
        line: usize,
    },

    #[error("subject {subject}: duplicate {kind} visit at time {time}")]
    DuplicateVisit {
        subject: String,
        time: f64,
        kind: String,
    },

    #[error("subject {subject} (line {line}) does not appear in the subjects file")]
    UnknownSubject { subject: String, line: usize },

    #[error("covariate schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid cohort: {0}")]
    InvalidCohort(String),

    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),

    #[error("subject {subject}: covariate `{name}` is missing at time {time}")]
    MissingCovariate {
        subject: String,
        name: String,
        time: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no event visits in (0, tau]")]
    NoEvents,

    #[error("no non-event visits in (0, tau]")]
    NoNonEventVisits,

    #[error("empty risk set at time {time}")]
    EmptyRiskSet { time: f64 },

    #[error("zero smoothing denominator at time {time} ({window_count} observations in window)")]
    ZeroDenominator { time: f64, window_count: usize },

    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("no convergence after {iterations} iterations (score sup-norm {score_norm:e})")]
    NonConvergence {
        iterations: usize,
        score_norm: f64,
        estimate: Vec<f64>,
    },

    #[error("intensity {intensity} exceeds envelope {bound} at time {time}")]
    BoundViolation { time: f64, intensity: f64, bound: f64 },

    #[error("all {0} bootstrap replicates failed")]
    AllReplicatesFailed(usize),

    #[error("{failed} of {total} bootstrap replicates failed (more than 10%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical procedures, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoEvents
                | Error::NoNonEventVisits
                | Error::EmptyRiskSet { .. }
                | Error::ZeroDenominator { .. }
                | Error::SingularJacobian { .. }
                | Error::NonConvergence { .. }
                | Error::BoundViolation { .. }
                | Error::AllReplicatesFailed(_)
                | Error::TooManyFailures { .. }
        )
    }

    /// Process exit status: 1 for fitting failures, 2 for usage and validation errors.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            1
        } else {
            2
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::VisitAfterCensoring { .. } => "visit_after_censoring",
            Error::DuplicateVisit { .. } => "duplicate_visit",
            Error::UnknownSubject { .. } => "unknown_subject",
            Error::SchemaMismatch(_) => "schema_mismatch",
            Error::InvalidCohort(_) => "invalid_cohort",
            Error::UnknownCovariate(_) => "unknown_covariate",
            Error::MissingCovariate { .. } => "missing_covariate",
            Error::InvalidConfig(_) => "invalid_config",
            Error::NoEvents => "no_events",
            Error::NoNonEventVisits => "no_nonevent_visits",
            Error::EmptyRiskSet { .. } => "empty_risk_set",
            Error::ZeroDenominator { .. } => "zero_denominator",
            Error::SingularJacobian { .. } => "singular_jacobian",
            Error::NonConvergence { .. } => "non_convergence",
            Error::BoundViolation { .. } => "bound_violation",
            Error::AllReplicatesFailed(_) => "all_replicates_failed",
            Error::TooManyFailures { .. } => "too_many_failures",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
