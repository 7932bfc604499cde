//! Pinned thresholds and seed for the acceptance run of the verification
//! suite. The suite itself lives in `strongdamp::suite`.

use strongdamp::suite::Tolerances;

pub const SEED: u64 = 20240607;

/// Reference thresholds, spelled out so that a change to the library
/// defaults cannot silently relax the acceptance run.
pub fn pinned_tolerances() -> Tolerances {
    Tolerances {
        oracle_relative: 0.03,
        oracle_range: [0.25, 4.0],
        cf400_relative: 0.02,
        control_absolute: 1e-3,
        h_exponent: [0.3, 0.7],
        h_r_squared: 0.9,
        exit_relative: 0.15,
        exit_mass: 0.7,
        front_speed: [0.95, 1.09],
        rtilde_relative: 0.05,
        rtilde_floor: 0.1,
        laplace_relative: 0.25,
    }
}
