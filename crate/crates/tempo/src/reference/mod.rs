//! Semi-analytic reference solvers and brute-force oracles for
//! cross-validation of the tensor-network dynamics.

pub mod oracles;
pub mod polaron;
pub mod four_level;
pub mod rc;
