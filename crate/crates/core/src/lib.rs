//! Information leakage of smart-meter energy management with a renewable
//! source and a rechargeable battery.
//!
//! Demand `X`, generation `E` and the meter reading `Y` take values in integer
//! alphabets of energy quanta. Leakage is measured in bits per slot.

pub mod binary;
pub mod error;
pub mod leakage_sim;
pub mod model;
pub mod policies;
pub mod policy_opt;
pub mod pmf;
pub mod privacy_power;
pub mod slb;
pub mod zero_battery;

pub use error::{Error, Result};
pub use model::{Capacity, GridModel};
pub use pmf::{entropy, expected_battery_draw, mutual_information, ConditionalPmf, Pmf};
pub use privacy_power::{ppf, ppf_curve, ppf_zero_known, PpfOptions, PpfResult};
pub use leakage_sim::{brute_force_rate, estimate_leakage, LeakageEstimate};
pub use policies::{build_chain, policy_step, Policy, SimState};
pub use zero_battery::{solve_zero_known, solve_zero_unknown, StateChannel};
