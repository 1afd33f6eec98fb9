//! Residues of equivariant, isotypic and orbifold zeta functions of
//! Laplace-type operators on flat global-quotient orbifolds, computed from
//! symbol data, together with an independent spectral oracle.

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod error;
pub mod field;
pub mod geometry;
pub mod group;
pub mod lattice;
pub mod linalg;
pub mod oracle;
pub mod power;
pub mod quadrature;
pub mod residues;
pub mod symbol;

pub use error::{Error, Result};
pub use field::{Field, Jet, TrigPoly};
pub use geometry::{affine_fixed_set, orbit_type_poset, FixedComponent, FixedStratum, OrbitType, Stratification};
pub use group::{build_explicit_group, build_named_group, verify_action, FiniteGroupAction, Generator, GroupKind, UserCharacterTable};
pub use lattice::Lattice;
pub use linalg::{CMat, RMat, RVec, C64};
pub use oracle::{compare_report, numeric_spectrum, oracle_residues, FitGrid, LatticeModel, Spectrum, Tolerances, TwistedZetaContinuation};
pub use power::{binomial_oracle, cauchy_power, resolvent_recursion, ContourParams, PowerSymbolFamily, ResolventSymbolFamily};
pub use residues::{Backend, DiracDensityTable, ResidueEngine, ResidueReport};
pub use symbol::{ClassicalSymbol, Term};
