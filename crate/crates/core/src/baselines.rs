//! Regression baselines measured on the first build. Later builds must stay
//! within a factor 2 of each value.

/// Energy-estimate ratio of the nominal run.
pub const ENERGY_RATIO: f64 = 0.1667041165687302;
/// Time-derivative ratio of the nominal run.
pub const DERIVATIVE_RATIO: f64 = 0.017168443111198247;
/// Largest sampled Hölder quotient of the nominal run.
pub const HOLDER_QUOTIENT: f64 = 4.423359099281161;
/// Largest `||u_eps||` along the continuation on the frozen desk instance.
pub const CONTINUATION_CONTROL_NORM: f64 = 0.478457;
