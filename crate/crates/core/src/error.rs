use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix `{what}` is not orthogonal (defect {defect:.3e})")]
    NotOrthogonal { what: String, defect: f64 },

    #[error("fiber representation is not a homomorphism (defect {0:.3e})")]
    NotHomomorphism(f64),

    #[error("group closure exceeds the configured maximum order {0}")]
    OrderTooLarge(usize),

    #[error("base action is not faithful: elements {0} and {1} act identically")]
    NotFaithful(usize, usize),

    #[error("character table invalid: {0}")]
    CharacterTable(String),

    #[error("irrep index {0} out of range (group has {1} irreps)")]
    IrrepOutOfRange(usize, usize),

    #[error("element {0} does not preserve the period lattice (defect {1:.3e})")]
    LatticeNotPreserved(usize, f64),

    #[error("normal action has eigenvalue 1 (min |det| clearance {0:.3e})")]
    EigenvalueOne(f64),

    #[error("jet order exhausted: {0}")]
    JetOrderExhausted(String),

    #[error("symbol is not of Laplace type: {0}")]
    NotLaplaceType(String),

    #[error("symbol has non-constant coefficients")]
    NonConstantCoefficients,

    #[error("symbol is not equivariant (defect {0:.3e} exceeds gate)")]
    NotEquivariant(f64),

    #[error("fixed set of element {0} is not compact in a linear chart model")]
    NonCompactFixedSet(usize),

    #[error("contour passes within {0:.3e} of a pole")]
    ContourNearPole(f64),

    #[error("eigen budget exceeded: dimension {dim} > {budget}")]
    BudgetExceeded { dim: usize, budget: usize },

    #[error("assembled operator matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),

    #[error("heat-trace fit ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("t = {t:.3e} too small for cutoff: truncation bound {bound:.3e}")]
    CutoffTooSmall { t: f64, bound: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{context}: {source}")]
    Context { context: String, source: Box<Error> },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
