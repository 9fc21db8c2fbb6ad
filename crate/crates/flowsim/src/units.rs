//! Unit conventions: m³/day, mD, m, kgf/cm², cP, days.

/// Darcy's law constant: `q [m³/day] = DARCY · k [mD] · A [m²] / μ [cP] · Δp [kgf/cm²] / L [m]`.
pub const DARCY: f64 = 0.008_362_148;
