pub mod basis;
pub mod compare;
pub mod error;
pub mod flow;
pub mod hamiltonian;
pub mod lattice;
pub mod linalg;
pub mod optim;
pub mod oracle;
pub mod qml;
pub mod qvi;
pub mod sampler;
pub mod vdm;

pub use error::{Error, Result};
