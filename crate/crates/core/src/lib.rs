//! Record statistics of random walks, autoregressive and GARCH processes and
//! of daily price data.

pub mod analytics;
pub mod data;
pub mod distributions;
pub mod ensemble;
pub mod estimation;
pub mod firstpassage;
pub mod montecarlo;
pub mod processes;
pub mod records;
