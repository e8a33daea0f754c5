pub mod analyze;
pub mod ensemble;
pub mod fit;
pub mod formulas;
pub mod fpt;
pub mod simulate;
pub mod weekly;
