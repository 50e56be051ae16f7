#![allow(dead_code)]

use ising_ep::ising::{IsingProblem, SpinState};
use proptest::prelude::*;

/// Dense problem with couplings and biases drawn from `[-scale, scale]`.
pub fn problem(max_spins: usize, scale: f64) -> impl Strategy<Value = IsingProblem<f64>> {
    (1..=max_spins).prop_flat_map(move |n| {
        let pairs = n * (n - 1) / 2;
        (
            proptest::collection::vec(-scale..=scale, pairs),
            proptest::collection::vec(-scale..=scale, n),
        )
            .prop_map(move |(j, h)| {
                let mut p = IsingProblem::new(n);
                let mut k = 0;
                for a in 1..n {
                    for b in 0..a {
                        p.set_coupling(a, b, j[k]).unwrap();
                        k += 1;
                    }
                }
                for (i, v) in h.into_iter().enumerate() {
                    p.set_bias(i, v).unwrap();
                }
                p
            })
    })
}

pub fn state(n: usize) -> impl Strategy<Value = SpinState> {
    proptest::collection::vec(prop_oneof![Just(-1i8), Just(1i8)], n)
        .prop_map(|v| SpinState::new(v).unwrap())
}

/// Every state of `n` spins, first spin most significant, `-1` before `+1`.
pub fn all_states(n: usize) -> impl Iterator<Item = Vec<i8>> {
    (0..1u64 << n).map(move |code| {
        (0..n)
            .map(|i| if code >> (n - 1 - i) & 1 == 1 { 1 } else { -1 })
            .collect()
    })
}

/// Direct evaluation of `sum_{i>j} J s s + sum h s`, independent of the library.
pub fn naive_energy(p: &IsingProblem<f64>, s: &[i8]) -> f64 {
    let n = p.n_spins();
    let mut e = 0.0;
    for i in 0..n {
        e += p.bias(i) * s[i] as f64;
        for j in 0..i {
            e += p.coupling(i, j) * (s[i] * s[j]) as f64;
        }
    }
    e
}

/// Lexicographically first minimiser of `f` over all states.
pub fn argmin(n: usize, f: impl Fn(&[i8]) -> f64) -> (Vec<i8>, f64) {
    let mut best: Option<(Vec<i8>, f64)> = None;
    for s in all_states(n) {
        let e = f(&s);
        if best.as_ref().is_none_or(|(_, b)| e < *b - 1e-12) {
            best = Some((s, e));
        }
    }
    best.unwrap()
}
