//! Physical constants in the internal unit system (cm^-1, fs, K, Angstrom).

/// Boltzmann constant, cm^-1 per Kelvin.
pub const KB_CM_PER_K: f64 = 0.69504;

/// Reduced Planck constant, cm^-1 fs. Converts energy gaps to angular
/// frequencies: omega [rad/fs] = E [cm^-1] / HBAR_CM_FS.
pub const HBAR_CM_FS: f64 = 5308.8;

/// Femtoseconds per picosecond.
pub const FS_PER_PS: f64 = 1000.0;
