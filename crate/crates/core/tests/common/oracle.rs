//! Finite-difference check of the Ising EP update on small layered nets.
//!
//! At zero temperature the contrast `-(1/beta)(s s|nudge - s s|free)` is
//! minus the gradient of `L = (min E_nudged - min E) / beta`. The oracle
//! evaluates `L` by enumerating every state, with no use of the library's
//! sampler or gradient code, and differentiates it numerically.

use ising_ep::eqprop::fc_gradients;
use ising_ep::ising::{apply_nudge, ground_state_bruteforce, IsingProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct LayeredNet {
    pub problem: IsingProblem<f64>,
    pub hidden: Vec<usize>,
    pub outputs: Vec<usize>,
    pub targets: Vec<i8>,
}

/// Hidden layer fully coupled to an output layer, 4 to 8 spins in total,
/// couplings and biases uniform in [-1, 1].
pub fn random_net(rng: &mut ChaCha8Rng) -> LayeredNet {
    let n = rng.gen_range(4..=8);
    let n_out = rng.gen_range(1..=n - 2);
    let hidden: Vec<usize> = (0..n - n_out).collect();
    let outputs: Vec<usize> = (n - n_out..n).collect();
    let mut problem = IsingProblem::new(n);
    for &o in &outputs {
        for &h in &hidden {
            problem
                .set_coupling(o, h, rng.gen_range(-1.0..=1.0))
                .unwrap();
        }
    }
    for i in 0..n {
        problem.set_bias(i, rng.gen_range(-1.0..=1.0)).unwrap();
    }
    let targets = outputs
        .iter()
        .map(|_| if rng.gen_bool(0.5) { 1 } else { -1 })
        .collect();
    LayeredNet {
        problem,
        hidden,
        outputs,
        targets,
    }
}

fn min_energy(p: &IsingProblem<f64>, extra: impl Fn(&[i8]) -> f64) -> f64 {
    let n = p.n_spins();
    let mut best = f64::INFINITY;
    for code in 0..1u64 << n {
        let s: Vec<i8> = (0..n)
            .map(|i| if code >> i & 1 == 1 { 1 } else { -1 })
            .collect();
        let mut e = extra(&s);
        for i in 0..n {
            e += p.bias(i) * s[i] as f64;
            for j in 0..i {
                e += p.coupling(i, j) * (s[i] * s[j]) as f64;
            }
        }
        best = best.min(e);
    }
    best
}

fn ep_loss(net: &LayeredNet, p: &IsingProblem<f64>, beta: f64) -> f64 {
    let cost = |s: &[i8]| -> f64 {
        net.outputs
            .iter()
            .zip(&net.targets)
            .map(|(&i, &t)| 0.5 * ((s[i] - t) as f64).powi(2))
            .sum()
    };
    (min_energy(p, |s| beta * cost(s)) - min_energy(p, |_| 0.0)) / beta
}

/// Sign agreement between the EP update and `-dL` over the coordinates where
/// the finite difference is nonzero: `(agreeing, nonzero)`.
pub fn agreement(net: &LayeredNet, beta: f64, step: f64) -> (usize, usize) {
    let free = ground_state_bruteforce(&net.problem).unwrap().state;
    let nudged = apply_nudge(&net.problem, &net.outputs, &net.targets, beta).unwrap();
    let nudge = ground_state_bruteforce(&nudged).unwrap().state;
    let g = fc_gradients::<f64>(&free, &nudge, beta, &net.hidden, &net.outputs).unwrap();

    let fd = |perturb: &dyn Fn(&mut IsingProblem<f64>, f64)| -> f64 {
        let (mut up, mut down) = (net.problem.clone(), net.problem.clone());
        perturb(&mut up, step);
        perturb(&mut down, -step);
        (ep_loss(net, &up, beta) - ep_loss(net, &down, beta)) / (2.0 * step)
    };
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for (a, &h) in net.hidden.iter().enumerate() {
        for (b, &o) in net.outputs.iter().enumerate() {
            let d = fd(&|p, e| p.add_coupling(o, h, e).unwrap());
            pairs.push((g.d_j.get(a, b), d));
        }
        pairs.push((g.d_h_hidden[a], fd(&|p, e| p.add_bias(h, e).unwrap())));
    }
    for (b, &o) in net.outputs.iter().enumerate() {
        pairs.push((g.d_h_output[b], fd(&|p, e| p.add_bias(o, e).unwrap())));
    }
    let nonzero: Vec<_> = pairs.into_iter().filter(|(_, d)| d.abs() > 1e-9).collect();
    let agree = nonzero
        .iter()
        .filter(|(u, d)| *u != 0.0 && u.signum() == -d.signum())
        .count();
    (agree, nonzero.len())
}

/// Aggregate agreement over `n_nets` random nets drawn from `seed`.
pub fn run(seed: u64, n_nets: usize, beta: f64, step: f64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_nets).fold((0, 0), |(a, t), _| {
        let net = random_net(&mut rng);
        let (da, dt) = agreement(&net, beta, step);
        (a + da, t + dt)
    })
}
