pub mod basis;
pub mod error;
pub mod linalg;
pub mod livsic;
pub mod maps;
pub mod selftest;
pub mod spectral;
pub mod transfer;
pub mod vexp;

pub use basis::{BasisSpec, FunctionRep};
pub use error::{Error, Result};
pub use livsic::{CoboundaryReport, RecoveryMethod, Tolerances, Verdict};
pub use maps::{MapModel, MapSpec};
pub use spectral::{ContourSpec, EigenData, PerturbedEigenData, TwistedFamily};
pub use transfer::OperatorMatrix;
pub use vexp::{Certificate, CriterionQuery, WeightVariant};
