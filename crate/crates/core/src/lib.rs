pub mod bvp;
pub mod cauchy;
pub mod cli;
pub mod exprlang;
pub mod funceq;
pub mod gds;
pub mod numeric;
pub mod pconf;
