//! Fixtures shared by the criterion benches.

use pass_core::io::{gen_scenarios, ScenarioParams};
use pass_core::Scenario;

/// Scenario 0 of a seeded batch with `users` users and `pas` PAs per
/// waveguide, other constants at their defaults.
pub fn fixture(users: usize, pas: usize, seed: u64) -> Scenario {
    let params = ScenarioParams {
        n_users: users,
        pas_per_waveguide: pas,
        ..Default::default()
    };
    gen_scenarios(1, &params, seed)
        .expect("default parameters are valid")
        .scenarios
        .remove(0)
        .scenario
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shape() {
        let s = fixture(3, 2, 1);
        assert_eq!((s.n_users, s.n_waveguides, s.pas_per_waveguide), (3, 3, 2));
    }
}
