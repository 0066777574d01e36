//! Seeded random quadratic functionals for the bracket-algebra checks.

use dissipham::ensemble::{QuadraticFunctional, Slot, Snapshot};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LINEAR_TERMS: usize = 3;
const QUADRATIC_TERMS: usize = 4;

/// `count` functionals `Σ c_s u_s + Σ c_st u_s u_t` over random slots of
/// `snap`, with coefficients uniform in `[-1, 1)`. The same seed always
/// gives the same functionals.
pub fn random_quadratics(snap: &Snapshot, count: usize, seed: u64) -> Vec<QuadraticFunctional> {
    let slots: Vec<Slot> = snap.slots().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut f = QuadraticFunctional::default();
            for _ in 0..LINEAR_TERMS {
                let s = slots[rng.random_range(0..slots.len())];
                f.linear.push((s, rng.random_range(-1.0..1.0)));
            }
            for _ in 0..QUADRATIC_TERMS {
                let s = slots[rng.random_range(0..slots.len())];
                let t = slots[rng.random_range(0..slots.len())];
                f.quadratic.push((s, t, rng.random_range(-1.0..1.0)));
            }
            f
        })
        .collect()
}
