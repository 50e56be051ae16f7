//! Metropolis simulated annealing with fixed temperature schedules.
//!
//! Forward annealing starts from a random state and cools geometrically from
//! `t_hot` to `t_cold`. Reverse annealing starts from a given state, heats to
//! `reverse_fraction * t_hot` over the first half of the sweeps and cools back
//! over the second half. Schedules are never rescaled to the problem at hand:
//! the free and nudged problems of one training example see the same
//! temperatures.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ising::{energy_unchecked, IsingProblem, Sample, SpinState};
use crate::rng::{rng_from_seed, Rng};
use crate::scalar::Scalar;

/// Fraction of the end temperature used as the first/last nonzero rung when a
/// schedule endpoint is exactly zero.
const ZERO_RUNG: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Forward,
    Reverse,
}

/// Geometric temperature schedule. One sweep is `n_spins` proposals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule<S> {
    pub kind: ScheduleKind,
    pub t_hot: S,
    pub t_cold: S,
    pub n_sweeps: usize,
    /// Peak of a reverse anneal as a fraction of `t_hot`.
    pub reverse_fraction: S,
}

impl<S: Scalar> AnnealSchedule<S> {
    pub fn forward(t_hot: S, t_cold: S, n_sweeps: usize) -> Self {
        AnnealSchedule {
            kind: ScheduleKind::Forward,
            t_hot,
            t_cold,
            n_sweeps,
            reverse_fraction: S::one(),
        }
    }

    pub fn reverse(t_hot: S, t_cold: S, n_sweeps: usize, reverse_fraction: S) -> Self {
        AnnealSchedule {
            kind: ScheduleKind::Reverse,
            t_hot,
            t_cold,
            n_sweeps,
            reverse_fraction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSchedule(m));
        if !(self.t_cold >= S::zero()) || !self.t_hot.is_finite() {
            return bad(format!("t_cold must be >= 0, got {}", self.t_cold));
        }
        if !(self.t_hot > self.t_cold) {
            return bad(format!(
                "t_hot ({}) must exceed t_cold ({})",
                self.t_hot, self.t_cold
            ));
        }
        if !(self.reverse_fraction > S::zero() && self.reverse_fraction <= S::one()) {
            return bad(format!(
                "reverse_fraction must lie in (0, 1], got {}",
                self.reverse_fraction
            ));
        }
        let min_sweeps = match self.kind {
            ScheduleKind::Forward => 1,
            ScheduleKind::Reverse => 2,
        };
        if self.n_sweeps < min_sweeps {
            return bad(format!("need at least {min_sweeps} sweeps"));
        }
        Ok(())
    }

    /// Temperature of every sweep, in order.
    pub fn temperatures(&self) -> Vec<S> {
        match self.kind {
            ScheduleKind::Forward => geometric_ladder(self.t_hot, self.t_cold, self.n_sweeps),
            ScheduleKind::Reverse => {
                let peak = self.reverse_fraction * self.t_hot;
                let rise = self.n_sweeps / 2;
                let fall = self.n_sweeps - rise;
                let mut temps = geometric_ladder(self.t_cold, peak, rise);
                temps.extend(
                    geometric_ladder(peak, self.t_cold, fall + 1)
                        .into_iter()
                        .skip(1),
                );
                temps
            }
        }
    }
}

/// `n` geometrically spaced values from `from` to `to`, both included. A zero
/// endpoint is approached through a tiny nonzero rung and then hit exactly.
fn geometric_ladder<S: Scalar>(from: S, to: S, n: usize) -> Vec<S> {
    match n {
        0 => return Vec::new(),
        1 => return vec![to],
        _ => {}
    }
    let floor = S::lit(ZERO_RUNG) * from.max(to);
    let a = if from > S::zero() { from } else { floor };
    let b = if to > S::zero() { to } else { floor };
    if !(a > S::zero()) {
        return vec![S::zero(); n];
    }
    let ratio = b / a;
    let last = S::from_usize(n - 1).unwrap();
    let mut temps: Vec<S> = (0..n)
        .map(|k| a * ratio.powf(S::from_usize(k).unwrap() / last))
        .collect();
    if to.is_zero() {
        temps[n - 1] = S::zero();
    }
    temps
}

/// Sampler settings shared by the free and nudge phases.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig<S> {
    pub n_reads: usize,
    pub seed: u64,
    pub schedule_free: AnnealSchedule<S>,
    pub schedule_nudge: AnnealSchedule<S>,
}

impl<S: Scalar> SamplerConfig<S> {
    pub const DEFAULT_T_COLD: f64 = 0.01;
    pub const DEFAULT_SWEEPS: usize = 200;
    pub const DEFAULT_REVERSE_FRACTION: f64 = 0.25;
    pub const DEFAULT_READS: usize = 10;

    /// Ten reads per phase, 200 sweeps each, cooling to 0.01 and reverse
    /// annealing to a quarter of `t_hot`.
    pub fn with_t_hot(t_hot: S, seed: u64) -> Self {
        let t_cold = S::lit(Self::DEFAULT_T_COLD);
        SamplerConfig {
            n_reads: Self::DEFAULT_READS,
            seed,
            schedule_free: AnnealSchedule::forward(t_hot, t_cold, Self::DEFAULT_SWEEPS),
            schedule_nudge: AnnealSchedule::reverse(
                t_hot,
                t_cold,
                Self::DEFAULT_SWEEPS,
                S::lit(Self::DEFAULT_REVERSE_FRACTION),
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_reads == 0 {
            return Err(Error::Config("n_reads must be at least 1".into()));
        }
        if self.schedule_free.kind != ScheduleKind::Forward {
            return Err(Error::InvalidSchedule(
                "free phase needs a forward schedule".into(),
            ));
        }
        if self.schedule_nudge.kind != ScheduleKind::Reverse {
            return Err(Error::InvalidSchedule(
                "nudge phase needs a reverse schedule".into(),
            ));
        }
        self.schedule_free.validate()?;
        self.schedule_nudge.validate()
    }
}

/// Compressed adjacency of a problem: for spin `i`, neighbours
/// `nbrs[offsets[i]..offsets[i+1]]` with matching `weights`.
#[derive(Debug, Clone)]
pub struct Adjacency<S> {
    offsets: Vec<usize>,
    nbrs: Vec<u32>,
    weights: Vec<S>,
    biases: Vec<S>,
}

impl<S: Scalar> Adjacency<S> {
    pub fn new(problem: &IsingProblem<S>) -> Self {
        let n = problem.n_spins();
        let mut degree = vec![0usize; n];
        for ((i, j), _) in problem.couplings() {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let total = *offsets.last().unwrap();
        let mut nbrs = vec![0u32; total];
        let mut weights = vec![S::zero(); total];
        let mut fill = offsets[..n].to_vec();
        for ((i, j), v) in problem.couplings() {
            nbrs[fill[i]] = j as u32;
            weights[fill[i]] = v;
            fill[i] += 1;
            nbrs[fill[j]] = i as u32;
            weights[fill[j]] = v;
            fill[j] += 1;
        }
        Adjacency {
            offsets,
            nbrs,
            weights,
            biases: problem.biases().to_vec(),
        }
    }

    pub fn n_spins(&self) -> usize {
        self.biases.len()
    }

    fn row(&self, i: usize) -> (&[u32], &[S]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.nbrs[r.clone()], &self.weights[r])
    }
}

/// Spin configuration with cached local fields `f_i = sum_j J_ij s_j + h_i`.
/// Flipping spin `i` changes the energy by `-2 s_i f_i`.
pub struct SweepKernel<'a, S> {
    adj: &'a Adjacency<S>,
    spins: Vec<i8>,
    fields: Vec<S>,
    order: Vec<usize>,
}

impl<'a, S: Scalar> SweepKernel<'a, S> {
    pub fn new(adj: &'a Adjacency<S>, spins: Vec<i8>) -> Self {
        let n = adj.n_spins();
        assert_eq!(spins.len(), n);
        let fields = (0..n)
            .map(|i| {
                let (nbrs, ws) = adj.row(i);
                nbrs.iter().zip(ws).fold(adj.biases[i], |f, (&j, &w)| {
                    f + w * spin_value(spins[j as usize])
                })
            })
            .collect();
        SweepKernel {
            adj,
            spins,
            fields,
            order: (0..n).collect(),
        }
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn into_spins(self) -> Vec<i8> {
        self.spins
    }

    fn flip(&mut self, i: usize) {
        let delta = S::lit(-2.0) * spin_value(self.spins[i]);
        self.spins[i] = -self.spins[i];
        let (nbrs, ws) = self.adj.row(i);
        for (&j, &w) in nbrs.iter().zip(ws) {
            self.fields[j as usize] += w * delta;
        }
    }

    /// One sweep: every spin proposed once, in a fresh random order.
    pub fn sweep(&mut self, temperature: S, rng: &mut Rng) {
        let mut order = std::mem::take(&mut self.order);
        order.shuffle(rng);
        let t = temperature.as_f64();
        for &i in &order {
            let de = S::lit(-2.0) * spin_value(self.spins[i]) * self.fields[i];
            if de < S::zero() || (t > 0.0 && rng.gen::<f64>() < (-de.as_f64() / t).exp()) {
                self.flip(i);
            }
        }
        self.order = order;
    }
}

#[inline]
fn spin_value<S: Scalar>(s: i8) -> S {
    if s > 0 {
        S::one()
    } else {
        -S::one()
    }
}

/// `n_spins` Metropolis proposals at a fixed temperature.
pub fn metropolis_sweep<S: Scalar>(
    problem: &IsingProblem<S>,
    state: &SpinState,
    temperature: S,
    rng: &mut Rng,
) -> Result<SpinState> {
    if !(temperature >= S::zero()) {
        return Err(Error::NegativeTemperature(temperature.as_f64()));
    }
    problem.check_state(state)?;
    let adj = Adjacency::new(problem);
    let mut kernel = SweepKernel::new(&adj, state.spins().to_vec());
    kernel.sweep(temperature, rng);
    Ok(SpinState::new(kernel.into_spins()).expect("sweeps keep spins binary"))
}

fn run_schedule<S: Scalar>(
    problem: &IsingProblem<S>,
    adj: &Adjacency<S>,
    temps: &[S],
    start: Vec<i8>,
    rng: &mut Rng,
) -> Sample<S> {
    let mut kernel = SweepKernel::new(adj, start);
    for &t in temps {
        kernel.sweep(t, rng);
    }
    let spins = kernel.into_spins();
    let energy = energy_unchecked(problem, &spins);
    Sample {
        state: SpinState::new(spins).expect("sweeps keep spins binary"),
        energy,
    }
}

fn random_spins(n: usize, rng: &mut Rng) -> Vec<i8> {
    (0..n)
        .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
        .collect()
}

fn expect_kind<S: Scalar>(schedule: &AnnealSchedule<S>, kind: ScheduleKind) -> Result<()> {
    schedule.validate()?;
    if schedule.kind != kind {
        return Err(Error::InvalidSchedule(format!(
            "expected a {kind:?} schedule, got {:?}",
            schedule.kind
        )));
    }
    Ok(())
}

fn forward_with<S: Scalar>(
    problem: &IsingProblem<S>,
    adj: &Adjacency<S>,
    temps: &[S],
    seed: u64,
) -> Sample<S> {
    let mut rng = rng_from_seed(seed);
    let start = random_spins(problem.n_spins(), &mut rng);
    run_schedule(problem, adj, temps, start, &mut rng)
}

/// Anneals from a uniformly random state (drawn from `seed`) down the
/// schedule and returns the final state.
pub fn anneal_forward<S: Scalar>(
    problem: &IsingProblem<S>,
    schedule: &AnnealSchedule<S>,
    seed: u64,
) -> Result<Sample<S>> {
    expect_kind(schedule, ScheduleKind::Forward)?;
    let adj = Adjacency::new(problem);
    Ok(forward_with(problem, &adj, &schedule.temperatures(), seed))
}

/// Reheats `initial` to the schedule's reverse peak and cools it back down.
pub fn anneal_reverse<S: Scalar>(
    problem: &IsingProblem<S>,
    schedule: &AnnealSchedule<S>,
    initial: &SpinState,
    seed: u64,
) -> Result<Sample<S>> {
    expect_kind(schedule, ScheduleKind::Reverse)?;
    problem.check_state(initial)?;
    let adj = Adjacency::new(problem);
    let mut rng = rng_from_seed(seed);
    Ok(run_schedule(
        problem,
        &adj,
        &schedule.temperatures(),
        initial.spins().to_vec(),
        &mut rng,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Free,
    Nudge,
}

/// Best of `cfg.n_reads` independent anneals; read `r` uses seed
/// `cfg.seed + r`. Lowest energy wins, ties go to the lowest read index.
pub fn sample_best<S: Scalar>(
    problem: &IsingProblem<S>,
    phase: Phase,
    initial: Option<&SpinState>,
    cfg: &SamplerConfig<S>,
) -> Result<Sample<S>> {
    cfg.validate()?;
    let adj = Adjacency::new(problem);
    let reads: Vec<Sample<S>> = match phase {
        Phase::Free => {
            let temps = cfg.schedule_free.temperatures();
            (0..cfg.n_reads as u64)
                .into_par_iter()
                .map(|r| forward_with(problem, &adj, &temps, cfg.seed.wrapping_add(r)))
                .collect()
        }
        Phase::Nudge => {
            let initial = initial
                .ok_or_else(|| Error::Config("nudge phase requires an initial state".into()))?;
            problem.check_state(initial)?;
            let temps = cfg.schedule_nudge.temperatures();
            (0..cfg.n_reads as u64)
                .into_par_iter()
                .map(|r| {
                    let mut rng = rng_from_seed(cfg.seed.wrapping_add(r));
                    run_schedule(problem, &adj, &temps, initial.spins().to_vec(), &mut rng)
                })
                .collect()
        }
    };
    Ok(best_of(reads))
}

fn best_of<S: Scalar>(reads: Vec<Sample<S>>) -> Sample<S> {
    reads
        .into_iter()
        .reduce(|best, s| if s.energy < best.energy { s } else { best })
        .expect("at least one read")
}

/// Equal-width histogram over `[lo, hi]`; the last bin is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, n_bins: usize) -> Self {
        let mut counts = vec![0; n_bins.max(1)];
        let width = (hi - lo) / counts.len() as f64;
        for &v in values {
            let bin = if width > 0.0 {
                (((v - lo) / width).floor().max(0.0) as usize).min(counts.len() - 1)
            } else {
                0
            };
            counts[bin] += 1;
        }
        Histogram { lo, hi, counts }
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        (0..=n)
            .map(|k| self.lo + (self.hi - self.lo) * k as f64 / n as f64)
            .collect()
    }
}

pub const HISTOGRAM_BINS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDistribution {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub histogram: Histogram,
    pub energies: Vec<f64>,
}

/// Final energies of `n_samples` forward anneals with seeds `seed + k`.
pub fn energy_distribution<S: Scalar>(
    problem: &IsingProblem<S>,
    n_samples: usize,
    schedule: &AnnealSchedule<S>,
    seed: u64,
) -> Result<EnergyDistribution> {
    if n_samples < 2 {
        return Err(Error::Config(
            "energy distribution needs at least 2 samples".into(),
        ));
    }
    expect_kind(schedule, ScheduleKind::Forward)?;
    let adj = Adjacency::new(problem);
    let temps = schedule.temperatures();
    let energies: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            forward_with(problem, &adj, &temps, seed.wrapping_add(k))
                .energy
                .as_f64()
        })
        .collect();
    let n = energies.len() as f64;
    let mean = energies.iter().sum::<f64>() / n;
    let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let lo = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(EnergyDistribution {
        mean,
        std: var.sqrt(),
        histogram: Histogram::new(&energies, lo, hi, HISTOGRAM_BINS),
        energies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::{energy, ground_state_bruteforce};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dense(n: usize, seed: u64) -> IsingProblem<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = IsingProblem::new(n);
        for i in 0..n {
            p.set_bias(i, rng.gen_range(-1.0..1.0)).unwrap();
            for j in 0..i {
                p.set_coupling(i, j, rng.gen_range(-1.0..1.0)).unwrap();
            }
        }
        p
    }

    fn single(h: f64) -> IsingProblem<f64> {
        let mut p = IsingProblem::new(1);
        p.set_bias(0, h).unwrap();
        p
    }

    #[test]
    fn zero_temperature_flip_rules() {
        let mut rng = rng_from_seed(0);
        let up = SpinState::new(vec![1]).unwrap();
        let down = SpinState::new(vec![-1]).unwrap();
        assert_eq!(
            metropolis_sweep(&single(1.0), &up, 0.0, &mut rng).unwrap(),
            down
        );
        assert_eq!(
            metropolis_sweep(&single(1.0), &down, 0.0, &mut rng).unwrap(),
            down
        );
        assert!(matches!(
            metropolis_sweep(&single(1.0), &down, -1.0, &mut rng),
            Err(Error::NegativeTemperature(_))
        ));
    }

    #[test]
    fn infinite_temperature_is_uniform() {
        let p = random_dense(8, 1);
        let adj = Adjacency::new(&p);
        let mut rng = rng_from_seed(5);
        let mut kernel = SweepKernel::new(&adj, vec![1; 8]);
        let mut totals = [0i64; 8];
        let sweeps = 10_000;
        for _ in 0..sweeps {
            kernel.sweep(1e6, &mut rng);
            for (t, &s) in totals.iter_mut().zip(kernel.spins()) {
                *t += s as i64;
            }
        }
        for t in totals {
            assert!((t as f64 / sweeps as f64).abs() < 0.05, "magnetisation {t}");
        }
    }

    #[test]
    fn fixed_temperature_matches_boltzmann() {
        let mut p = IsingProblem::<f64>::new(3);
        p.set_coupling(1, 0, 0.8).unwrap();
        p.set_coupling(2, 1, -0.5).unwrap();
        p.set_coupling(2, 0, 0.3).unwrap();
        p.set_bias(0, 0.2).unwrap();
        p.set_bias(2, -0.4).unwrap();
        let t = 1.5;
        let weights: Vec<f64> = (0..8u64)
            .map(|c| (-energy(&p, &SpinState::from_code(3, c)).unwrap() / t).exp())
            .collect();
        let z: f64 = weights.iter().sum();

        let adj = Adjacency::new(&p);
        let mut kernel = SweepKernel::new(&adj, vec![1, 1, 1]);
        let mut rng = rng_from_seed(11);
        let sweeps = 1_000_000;
        let mut counts = [0usize; 8];
        for _ in 0..sweeps {
            kernel.sweep(t, &mut rng);
            let code = kernel
                .spins()
                .iter()
                .fold(0usize, |c, &s| (c << 1) | usize::from(s > 0));
            counts[code] += 1;
        }
        let tv: f64 = counts
            .iter()
            .zip(&weights)
            .map(|(&c, &w)| (c as f64 / sweeps as f64 - w / z).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total variation {tv}");
    }

    #[test]
    fn forward_schedule_shape() {
        let s = AnnealSchedule::<f64>::forward(2.0, 0.01, 5);
        let t = s.temperatures();
        assert_eq!(t.len(), 5);
        assert!((t[0] - 2.0).abs() < 1e-12 && (t[4] - 0.01).abs() < 1e-12);
        assert!(t.windows(2).all(|w| w[1] < w[0]));
        let z = AnnealSchedule::forward(2.0, 0.0, 4).temperatures();
        assert_eq!(z[3], 0.0);
        assert!(z[2] > 0.0);
    }

    #[test]
    fn reverse_schedule_rises_then_falls() {
        let s = AnnealSchedule::<f64>::reverse(4.0, 0.01, 10, 0.25);
        let t = s.temperatures();
        assert_eq!(t.len(), 10);
        assert!((t[4] - 1.0).abs() < 1e-12);
        assert!(t[..5].windows(2).all(|w| w[1] > w[0]));
        assert!(t[4..].windows(2).all(|w| w[1] < w[0]));
        assert!((t[9] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn schedule_validation() {
        assert!(AnnealSchedule::forward(1.0, 1.0, 10).validate().is_err());
        assert!(AnnealSchedule::forward(1.0, -0.1, 10).validate().is_err());
        assert!(AnnealSchedule::forward(1.0, 0.0, 0).validate().is_err());
        assert!(AnnealSchedule::reverse(1.0, 0.0, 10, 0.0)
            .validate()
            .is_err());
        assert!(AnnealSchedule::reverse(1.0, 0.0, 10, 1.5)
            .validate()
            .is_err());
        assert!(AnnealSchedule::reverse(1.0, 0.0, 10, 1.0)
            .validate()
            .is_ok());
        let p = single(1.0);
        let fwd = AnnealSchedule::forward(1.0, 0.0, 10);
        let init = SpinState::uniform(1, 1);
        assert!(anneal_reverse(&p, &fwd, &init, 0).is_err());
    }

    #[test]
    fn forward_is_deterministic_and_energy_consistent() {
        let p = random_dense(10, 2);
        let s = AnnealSchedule::forward(2.0, 0.01, 100);
        let a = anneal_forward(&p, &s, 42).unwrap();
        let b = anneal_forward(&p, &s, 42).unwrap();
        assert_eq!(a, b);
        assert!((a.energy - energy(&p, &a.state).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn unfrustrated_pair_reaches_ground_state() {
        let mut p = IsingProblem::<f64>::new(2);
        p.set_coupling(1, 0, -1.0).unwrap();
        let s = AnnealSchedule::forward(2.0, 0.01, 50);
        for seed in 0..5 {
            assert_eq!(anneal_forward(&p, &s, seed).unwrap().energy, -1.0);
        }
    }

    #[test]
    fn tiny_reverse_peak_keeps_ground_state() {
        let p = random_dense(12, 4);
        let ground = ground_state_bruteforce(&p).unwrap();
        let s = AnnealSchedule::reverse(2.0, 0.0, 200, 1e-9);
        let out = anneal_reverse(&p, &s, &ground.state, 3).unwrap();
        assert_eq!(out.state, ground.state);
        let again = anneal_reverse(&p, &s, &ground.state, 3).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn zero_temperature_never_raises_energy() {
        let p = random_dense(16, 8);
        let adj = Adjacency::new(&p);
        let mut rng = rng_from_seed(1);
        let mut kernel = SweepKernel::new(&adj, random_spins(16, &mut rng));
        let mut last = energy_unchecked(&p, kernel.spins());
        for _ in 0..20 {
            kernel.sweep(0.0, &mut rng);
            let e = energy_unchecked(&p, kernel.spins());
            assert!(e <= last + 1e-12);
            last = e;
        }
    }

    #[test]
    fn best_of_one_equals_single_anneal() {
        let p = random_dense(10, 9);
        let mut cfg = SamplerConfig::with_t_hot(2.0, 77);
        cfg.n_reads = 1;
        let best = sample_best(&p, Phase::Free, None, &cfg).unwrap();
        assert_eq!(best, anneal_forward(&p, &cfg.schedule_free, 77).unwrap());

        let init = best.state.clone();
        let nudged = sample_best(&p, Phase::Nudge, Some(&init), &cfg).unwrap();
        assert_eq!(
            nudged,
            anneal_reverse(&p, &cfg.schedule_nudge, &init, 77).unwrap()
        );
        assert!(sample_best(&p, Phase::Nudge, None, &cfg).is_err());
    }

    #[test]
    fn best_of_picks_lowest_energy_read() {
        let p = random_dense(12, 10);
        let mut cfg = SamplerConfig::with_t_hot(2.0, 5);
        cfg.schedule_free.n_sweeps = 5;
        let best = sample_best(&p, Phase::Free, None, &cfg).unwrap();
        let min = (0..10)
            .map(|r| {
                anneal_forward(&p, &cfg.schedule_free, 5 + r)
                    .unwrap()
                    .energy
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best.energy, min);
    }

    #[test]
    fn energy_distribution_of_empty_problem() {
        let p = IsingProblem::<f64>::new(6);
        let s = AnnealSchedule::forward(1.0, 0.01, 20);
        let d = energy_distribution(&p, 50, &s, 0).unwrap();
        assert_eq!(d.mean, 0.0);
        assert_eq!(d.std, 0.0);
        assert_eq!(d.histogram.counts.iter().sum::<usize>(), 50);
        assert!(energy_distribution(&p, 1, &s, 0).is_err());
    }

    #[test]
    fn histogram_binning() {
        let h = Histogram::new(&[0.0, 0.5, 1.0, 1.0], 0.0, 1.0, 2);
        assert_eq!(h.counts, vec![1, 3]);
        assert_eq!(h.bin_edges(), vec![0.0, 0.5, 1.0]);
    }
}
