//! Equilibrium Propagation with an Ising sampler.
//!
//! Each example is built into a problem, relaxed freely, relaxed again with
//! the outputs nudged toward the target and the two ground states are
//! contrasted. With the `+J` energy convention the contrast carries a minus
//! sign: `dJ_ij = -(1/beta) (s_i s_j |nudge - s_i s_j |free)`.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::anneal::{sample_best, Phase, SamplerConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ising::{apply_nudge, ground_state_bruteforce, IsingProblem, SpinState};
use crate::networks::{
    axpy_vec, build_fc_problem, readout, squared_error, target_spins, ChipProblem, ConvLayout,
    ConvMachine, ConvParameters, FcArchitecture, FcParameters, Matrix,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scalar::Scalar;

const STREAM_SHUFFLE: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_EVAL: u64 = 3;

/// Ground-state search used by both phases.
pub trait Sampler<S: Scalar>: Sync {
    fn free(&self, problem: &IsingProblem<S>, seed: u64) -> Result<SpinState>;
    fn nudge(&self, problem: &IsingProblem<S>, initial: &SpinState, seed: u64)
        -> Result<SpinState>;
}

/// Best-of-n simulated annealing: forward for the free phase, reverse from
/// the free state for the nudge phase.
#[derive(Debug, Clone)]
pub struct Annealer<S> {
    pub config: SamplerConfig<S>,
}

impl<S: Scalar> Annealer<S> {
    pub fn new(config: SamplerConfig<S>) -> Result<Self> {
        config.validate()?;
        Ok(Annealer { config })
    }

    fn seeded(&self, seed: u64) -> SamplerConfig<S> {
        SamplerConfig {
            seed: derive_seed(self.config.seed, &[seed]),
            ..self.config.clone()
        }
    }
}

impl<S: Scalar> Sampler<S> for Annealer<S> {
    fn free(&self, problem: &IsingProblem<S>, seed: u64) -> Result<SpinState> {
        Ok(sample_best(problem, Phase::Free, None, &self.seeded(seed))?.state)
    }

    fn nudge(
        &self,
        problem: &IsingProblem<S>,
        initial: &SpinState,
        seed: u64,
    ) -> Result<SpinState> {
        Ok(sample_best(problem, Phase::Nudge, Some(initial), &self.seeded(seed))?.state)
    }
}

/// Exact enumeration; both phases return the same deterministic argmin.
#[derive(Debug, Clone, Copy, Default)]
pub struct BruteForce;

impl<S: Scalar> Sampler<S> for BruteForce {
    fn free(&self, problem: &IsingProblem<S>, _seed: u64) -> Result<SpinState> {
        Ok(ground_state_bruteforce(problem)?.state)
    }

    fn nudge(
        &self,
        problem: &IsingProblem<S>,
        initial: &SpinState,
        _seed: u64,
    ) -> Result<SpinState> {
        problem.check_state(initial)?;
        Ok(ground_state_bruteforce(problem)?.state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<S> {
    pub beta: S,
    pub lr_w: S,
    pub lr_b: S,
    pub epochs: usize,
    pub skip_nudge: bool,
    pub clip: bool,
    pub seed: u64,
}

impl<S: Scalar> TrainConfig<S> {
    /// beta 2, lr_W 1e-2, lr_B 1e-3.
    pub fn fc_default(seed: u64) -> Self {
        TrainConfig {
            beta: S::lit(2.0),
            lr_w: S::lit(1e-2),
            lr_b: S::lit(1e-3),
            epochs: 50,
            skip_nudge: true,
            clip: true,
            seed,
        }
    }

    /// beta 5, learning rate 0.1.
    pub fn conv_default(seed: u64) -> Self {
        TrainConfig {
            beta: S::lit(5.0),
            lr_w: S::lit(0.1),
            lr_b: S::lit(0.1),
            epochs: 50,
            skip_nudge: true,
            clip: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > S::zero() && self.beta.is_finite()) {
            return Err(Error::InvalidBeta(self.beta.as_f64()));
        }
        if !(self.lr_w > S::zero() && self.lr_b > S::zero()) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub train_mse: f64,
    pub test_mse: f64,
    pub nudges_skipped: usize,
    pub wall_seconds: f64,
}

/// Temperature to start annealing from: `factor` times the largest parameter
/// magnitude, and never below twice `t_cold`.
pub fn auto_t_hot<S: Scalar>(problem: &IsingProblem<S>, factor: S, t_cold: S) -> S {
    (factor * problem.max_abs_parameter()).max(S::lit(2.0) * t_cold)
}

pub fn free_phase<S: Scalar>(
    problem: &IsingProblem<S>,
    sampler: &impl Sampler<S>,
    seed: u64,
) -> Result<SpinState> {
    sampler.free(problem, seed)
}

/// Reverse anneal of the nudged problem starting from the free state.
pub fn nudge_phase<S: Scalar>(
    problem: &IsingProblem<S>,
    outputs: &[usize],
    free: &SpinState,
    targets: &[i8],
    beta: S,
    sampler: &impl Sampler<S>,
    seed: u64,
) -> Result<SpinState> {
    let nudged = apply_nudge(problem, outputs, targets, beta)?;
    sampler.nudge(&nudged, free, seed)
}

/// Contrast of one spin product: `-(1/beta)(nudge - free)`.
#[inline]
fn contrast<S: Scalar>(free: i8, nudge: i8, beta: S) -> S {
    -S::lit((nudge - free) as f64) / beta
}

/// On-chip gradients of the layered network.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipGradients<S> {
    /// `hidden x outputs`.
    pub d_j: Matrix<S>,
    pub d_h_hidden: Vec<S>,
    pub d_h_output: Vec<S>,
}

/// Couplings between every hidden and output spin and biases of all of them.
pub fn fc_gradients<S: Scalar>(
    free: &SpinState,
    nudge: &SpinState,
    beta: S,
    hidden: &[usize],
    outputs: &[usize],
) -> Result<ChipGradients<S>> {
    if free.len() != nudge.len() {
        return Err(Error::Dimension {
            expected: free.len(),
            got: nudge.len(),
        });
    }
    let mut d_j = Matrix::zeros(hidden.len(), outputs.len());
    for (a, &h) in hidden.iter().enumerate() {
        for (b, &o) in outputs.iter().enumerate() {
            let pf = free.get(h) * free.get(o);
            let pn = nudge.get(h) * nudge.get(o);
            if pf != pn {
                d_j.set(a, b, contrast(pf, pn, beta));
            }
        }
    }
    let single = |idx: &[usize]| -> Vec<S> {
        idx.iter()
            .map(|&i| contrast(free.get(i), nudge.get(i), beta))
            .collect()
    };
    Ok(ChipGradients {
        d_j,
        d_h_hidden: single(hidden),
        d_h_output: single(outputs),
    })
}

/// `dW[k][j] = x_k * dh_j / input_scale`.
pub fn input_weight_gradient<S: Scalar>(d_h_hidden: &[S], x: &[S], input_scale: S) -> Matrix<S> {
    let mut d = Matrix::zeros(x.len(), d_h_hidden.len());
    for (k, &xk) in x.iter().enumerate() {
        if xk.is_zero() {
            continue;
        }
        for (j, &dh) in d_h_hidden.iter().enumerate() {
            d.set(k, j, xk * dh / input_scale);
        }
    }
    d
}

/// Shared-filter gradient summed over the patches,
/// `sign (1/beta) sum_p (x_pk h_pf |nudge - x_pk h_pf |free)`, from logical
/// states.
pub fn conv_gradient<S: Scalar>(
    free: &SpinState,
    nudge: &SpinState,
    beta: S,
    layout: &ConvLayout,
    sign: S,
) -> Matrix<S> {
    let mut d = Matrix::zeros(layout.n_filters, layout.kernel_positions);
    for f in 0..layout.n_filters {
        for k in 0..layout.kernel_positions {
            let mut total = 0i32;
            for p in 0..layout.n_patches {
                let (x, h) = (layout.input(p, k), layout.conv(p, f));
                total += (nudge.get(x) * nudge.get(h)) as i32 - (free.get(x) * free.get(h)) as i32;
            }
            d.set(f, k, sign * S::lit(total as f64) / beta);
        }
    }
    d
}

/// Plain SGD on one tensor: `v += lr * d`, then clamp when a range is given.
pub fn sgd_step<S: Scalar>(
    values: &mut [S],
    grads: &[S],
    lr: S,
    range: Option<crate::ising::Range<S>>,
) -> Result<()> {
    axpy_vec(values, lr, grads, range)
}

/// A network that can be trained with EP on an Ising sampler.
pub trait EpModel<S: Scalar>: Sync {
    type Grad;

    fn n_classes(&self) -> usize;
    fn spins_per_class(&self) -> usize;
    fn build(&self, x: &[S]) -> Result<ChipProblem<S>>;
    fn gradients(
        &self,
        chip: &ChipProblem<S>,
        x: &[S],
        free: &SpinState,
        nudge: &SpinState,
        beta: S,
    ) -> Result<Self::Grad>;
    fn apply(&mut self, grad: &Self::Grad, cfg: &TrainConfig<S>) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcModel<S> {
    pub arch: FcArchitecture<S>,
    pub params: FcParameters<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcGradients<S> {
    pub chip: ChipGradients<S>,
    pub d_w_input: Matrix<S>,
}

impl<S: Scalar> EpModel<S> for FcModel<S> {
    type Grad = FcGradients<S>;

    fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    fn spins_per_class(&self) -> usize {
        self.arch.spins_per_class
    }

    fn build(&self, x: &[S]) -> Result<ChipProblem<S>> {
        build_fc_problem(&self.arch, &self.params, x)
    }

    fn gradients(
        &self,
        _chip: &ChipProblem<S>,
        x: &[S],
        free: &SpinState,
        nudge: &SpinState,
        beta: S,
    ) -> Result<FcGradients<S>> {
        let chip = fc_gradients(
            free,
            nudge,
            beta,
            &self.arch.hidden_indices(),
            &self.arch.output_indices(),
        )?;
        let d_w_input = input_weight_gradient(&chip.d_h_hidden, x, self.arch.input_scale);
        Ok(FcGradients { chip, d_w_input })
    }

    /// Chip-space gradients are divided by the chip scale before reaching
    /// the unscaled masters; clipping keeps the scaled values in range.
    fn apply(&mut self, g: &FcGradients<S>, cfg: &TrainConfig<S>) -> Result<()> {
        let a = &self.arch;
        let p = &mut self.params;
        let clip = |r: crate::ising::Range<S>| cfg.clip.then_some(r);
        let chip_lr_w = cfg.lr_w / a.chip_scale;
        let chip_lr_b = cfg.lr_b / a.chip_scale;
        p.j_hidden_output.axpy(
            chip_lr_w,
            &g.chip.d_j,
            clip(a.j_range.unscaled(a.chip_scale)),
        )?;
        sgd_step(
            &mut p.h_bias_output,
            &g.chip.d_h_output,
            chip_lr_b,
            clip(a.h_range.unscaled(a.chip_scale)),
        )?;
        sgd_step(
            &mut p.h_bias_hidden,
            &g.chip.d_h_hidden,
            cfg.lr_b,
            clip(a.h_range),
        )?;
        p.w_input.axpy(cfg.lr_w, &g.d_w_input, None)
    }
}

#[derive(Debug, Clone)]
pub struct ConvModel<S> {
    pub machine: ConvMachine<S>,
    pub params: ConvParameters<S>,
    /// Overall sign of the filter update.
    pub sign: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGradients<S> {
    pub d_filters: Matrix<S>,
    pub d_w_class: Matrix<S>,
    pub d_bias: Vec<S>,
}

impl<S: Scalar> EpModel<S> for ConvModel<S> {
    type Grad = ConvGradients<S>;

    fn n_classes(&self) -> usize {
        self.machine.arch.n_classes
    }

    fn spins_per_class(&self) -> usize {
        self.machine.arch.spins_per_class
    }

    fn build(&self, x: &[S]) -> Result<ChipProblem<S>> {
        self.machine.build(&self.params, x)
    }

    fn gradients(
        &self,
        chip: &ChipProblem<S>,
        _x: &[S],
        free: &SpinState,
        nudge: &SpinState,
        beta: S,
    ) -> Result<ConvGradients<S>> {
        let l = &self.machine.layout;
        let (lf, ln) = (chip.logical(free), chip.logical(nudge));
        let pools: Vec<usize> = (0..l.n_filters).map(|f| l.pool(f)).collect();
        let outputs: Vec<usize> = (0..l.n_outputs).map(|o| l.output(o)).collect();
        let class = fc_gradients(&lf, &ln, beta, &pools, &outputs)?;
        Ok(ConvGradients {
            d_filters: conv_gradient(&lf, &ln, beta, l, self.sign),
            d_w_class: class.d_j,
            d_bias: class.d_h_output,
        })
    }

    fn apply(&mut self, g: &ConvGradients<S>, cfg: &TrainConfig<S>) -> Result<()> {
        let a = &self.machine.arch;
        let p = &mut self.params;
        let clip = |r: crate::ising::Range<S>| cfg.clip.then_some(r);
        p.filters.axpy(
            cfg.lr_w / a.conv_scale,
            &g.d_filters,
            clip(a.j_range.unscaled(a.conv_scale)),
        )?;
        p.w_class.axpy(
            cfg.lr_w / a.class_scale,
            &g.d_w_class,
            clip(a.j_range.unscaled(a.class_scale)),
        )?;
        sgd_step(
            &mut p.output_bias,
            &g.d_bias,
            cfg.lr_b / a.class_scale,
            clip(a.h_range.unscaled(a.class_scale)),
        )
    }
}

/// One pass over `data` in a seeded shuffled order, one update per example.
/// Returns the number of skipped nudge phases.
pub fn train_epoch<S: Scalar, M: EpModel<S>>(
    model: &mut M,
    data: &Dataset<S>,
    sampler: &impl Sampler<S>,
    cfg: &TrainConfig<S>,
    epoch: usize,
) -> Result<usize> {
    cfg.validate()?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(
        cfg.seed,
        &[STREAM_SHUFFLE, epoch as u64],
    )));
    let mut skipped = 0;
    for i in order {
        let x = &data.images[i];
        let target = target_spins(data.labels[i], model.n_classes(), model.spins_per_class());
        let chip = model.build(x)?;
        let seed = derive_seed(cfg.seed, &[STREAM_TRAIN, epoch as u64, i as u64]);
        let free = free_phase(&chip.problem, sampler, seed)?;
        if cfg.skip_nudge && chip.outputs(&free) == target {
            skipped += 1;
            continue;
        }
        let nudge = nudge_phase(
            &chip.problem,
            &chip.output_sites,
            &free,
            &target,
            cfg.beta,
            sampler,
            derive_seed(seed, &[1]),
        )?;
        let grad = model.gradients(&chip, x, &free, &nudge, cfg.beta)?;
        model.apply(&grad, cfg)?;
    }
    Ok(skipped)
}

/// Free phase only: accuracy in percent and mean squared output error.
pub fn evaluate<S: Scalar, M: EpModel<S>>(
    model: &M,
    data: &Dataset<S>,
    sampler: &impl Sampler<S>,
    seed: u64,
) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Insufficient("empty evaluation set".into()));
    }
    let (nc, spc) = (model.n_classes(), model.spins_per_class());
    let per_example: Vec<(bool, f64)> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let chip = model.build(&data.images[i])?;
            let state = free_phase(
                &chip.problem,
                sampler,
                derive_seed(seed, &[STREAM_EVAL, i as u64]),
            )?;
            let out = chip.outputs(&state);
            let target = target_spins(data.labels[i], nc, spc);
            Ok((
                readout(&out, nc, spc) == data.labels[i],
                squared_error(&out, &target),
            ))
        })
        .collect::<Result<_>>()?;
    Ok(summarize(&per_example))
}

pub(crate) fn summarize(per_example: &[(bool, f64)]) -> (f64, f64) {
    let n = per_example.len() as f64;
    let correct = per_example.iter().filter(|(c, _)| *c).count() as f64;
    let mse = per_example.iter().map(|(_, e)| e).sum::<f64>() / n;
    (100.0 * correct / n, mse)
}

/// Runs `cfg.epochs` epochs, evaluating on both splits after each one.
/// `on_epoch` sees every epoch's metrics and the model right after it.
pub fn train<S: Scalar, M: EpModel<S>>(
    model: &mut M,
    train_set: &Dataset<S>,
    test_set: &Dataset<S>,
    sampler: &impl Sampler<S>,
    cfg: &TrainConfig<S>,
    mut on_epoch: impl FnMut(&EpochMetrics, &M) -> Result<()>,
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    let eval_seed = derive_seed(cfg.seed, &[STREAM_EVAL]);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let nudges_skipped = train_epoch(model, train_set, sampler, cfg, epoch)?;
        let (train_acc, train_mse) = evaluate(model, train_set, sampler, eval_seed)?;
        let (test_acc, test_mse) = evaluate(model, test_set, sampler, eval_seed)?;
        let m = EpochMetrics {
            epoch,
            train_acc,
            test_acc,
            train_mse,
            test_mse,
            nudges_skipped,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&m, model)?;
        history.push(m);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::ConvArchitecture;

    fn state(s: &[i8]) -> SpinState {
        SpinState::new(s.to_vec()).unwrap()
    }

    #[test]
    fn flip_arithmetic() {
        // spin 0 flips +1 -> -1 at nudge, spin 1 stays +1
        let g = fc_gradients(&state(&[1, 1]), &state(&[-1, 1]), 2.0, &[0], &[1]).unwrap();
        assert_eq!(g.d_j.get(0, 0), 1.0);
        assert_eq!(g.d_h_hidden, vec![1.0]);
        assert_eq!(g.d_h_output, vec![0.0]);
    }

    #[test]
    fn equal_phases_give_zero_gradients() {
        let s = state(&[1, -1, 1, 1]);
        let g = fc_gradients(&s, &s, 2.0, &[0, 1], &[2, 3]).unwrap();
        assert!(g
            .d_j
            .data
            .iter()
            .chain(&g.d_h_hidden)
            .chain(&g.d_h_output)
            .all(|&v| v == 0.0));
    }

    #[test]
    fn input_gradient_structure() {
        let dh = vec![1.0, -0.5, 0.0];
        assert!(input_weight_gradient(&dh, &[0.0; 4], 0.5)
            .data
            .iter()
            .all(|&v| v == 0.0));
        assert!(input_weight_gradient(&[0.0; 3], &[1.0; 4], 0.5)
            .data
            .iter()
            .all(|&v| v == 0.0));
        let d = input_weight_gradient(&dh, &[0.0, 0.0, 1.0, 0.0], 1.0);
        for k in 0..4 {
            let expected: &[f64] = if k == 2 { &dh } else { &[0.0; 3] };
            assert_eq!(d.row(k), expected);
        }
    }

    #[test]
    fn conv_single_patch_change() {
        let arch = ConvArchitecture::<f64>::default();
        let l = ConvLayout::of(&arch);
        let mut free = vec![1i8; l.n_neurons()];
        free[l.conv(2, 1)] = -1;
        let mut nudge = free.clone();
        nudge[l.conv(2, 1)] = 1;
        let d = conv_gradient(&state(&free), &state(&nudge), 5.0, &l, 1.0);
        for f in 0..4 {
            for k in 0..4 {
                let want: f64 = if f == 1 { 0.4 } else { 0.0 };
                assert!((d.get(f, k) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sgd_clips_to_range() {
        let mut j = vec![1.99];
        sgd_step(
            &mut j,
            &[1.0],
            1e-2,
            Some(crate::ising::Range::symmetric(2.0)),
        )
        .unwrap();
        assert_eq!(j, vec![2.0]);
        let mut j = vec![0.3, -0.2];
        sgd_step(&mut j, &[0.0, 0.0], 1e-2, None).unwrap();
        assert_eq!(j, vec![0.3, -0.2]);
    }

    #[test]
    fn zero_beta_is_rejected() {
        let mut cfg = TrainConfig::<f64>::fc_default(0);
        cfg.beta = 0.0;
        assert!(cfg.validate().is_err());
    }
}
