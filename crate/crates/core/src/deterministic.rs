//! Deterministic reference network: Heaviside activations, real weights and
//! Euler-integrated gradient dynamics
//!
//! `ds_i/dt = -s_i + rho'(s_i) (sum_j W_ij rho(s_j) + b_i)`,
//!
//! with an extra `-beta (rho(y) - target)` drive on the outputs during the
//! nudge phase. Targets live in activation space `{0, 1}`. The energy has
//! `-W` terms, so the learning rule has a positive sign.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::eqprop::{summarize, EpochMetrics};
use crate::error::{Error, Result};
use crate::networks::{readout, target_spins, FcArchitecture, FcParameters, Matrix};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scalar::Scalar;

/// Largest step for which a relaxation counts as settled.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-6;

pub fn rho<S: Scalar>(s: S) -> S {
    if s < S::zero() {
        S::zero()
    } else {
        S::one()
    }
}

pub fn rho_prime<S: Scalar>(s: S) -> S {
    if s > S::zero() && s < S::one() {
        S::one()
    } else {
        S::zero()
    }
}

/// Which derivative of the step function gates the field in the dynamics.
///
/// With `Indicator` (`rho'`, nonzero only on `(0, 1)`) a unit that falls
/// below zero never feels its field again. Hidden units have no nudge term,
/// so in a nudge phase started from the free state they can switch off but
/// never on, and the hidden layer dies within the first epoch. `Unit` treats
/// the derivative as 1 everywhere, so every unit leaks toward its field;
/// on outputs this lets a unit whose field lies in `(0, beta)` chatter
/// between the two sides of zero for the whole nudge phase. `Mixed` uses
/// `Unit` on hidden units and `Indicator` on outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derivative {
    Indicator,
    Unit,
    /// `Unit` on hidden units, `Indicator` on outputs.
    Mixed,
}

impl Derivative {
    pub fn gain(self, s: f64, output: bool) -> f64 {
        match self {
            Derivative::Indicator => rho_prime(s),
            Derivative::Unit => 1.0,
            Derivative::Mixed if output => rho_prime(s),
            Derivative::Mixed => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Derivative::Indicator => "indicator",
            Derivative::Unit => "unit",
            Derivative::Mixed => "mixed",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "indicator" => Some(Derivative::Indicator),
            "unit" => Some(Derivative::Unit),
            "mixed" => Some(Derivative::Mixed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetConfig<S> {
    /// Free-phase Euler steps.
    pub t_free: usize,
    /// Nudge-phase Euler steps.
    pub k_nudge: usize,
    pub dt: S,
    pub beta: S,
    pub lr_w: S,
    pub lr_b: S,
    pub epochs: usize,
    pub skip_nudge: bool,
    /// Multiply the output drive by `rho'(y)`.
    pub gated_nudge: bool,
    /// Gain applied to the field inside the dynamics.
    pub derivative: Derivative,

    pub seed: u64,
}

impl<S: Scalar> DetConfig<S> {
    /// T 30, K 50, dt 0.5, beta 2, lr_W 0.1, lr_B 0.01.
    pub fn new(seed: u64) -> Self {
        DetConfig {
            t_free: 30,
            k_nudge: 50,
            dt: S::lit(0.5),
            beta: S::lit(2.0),
            lr_w: S::lit(0.1),
            lr_b: S::lit(0.01),
            epochs: 50,
            skip_nudge: true,
            gated_nudge: false,
            derivative: Derivative::Mixed,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > S::zero() && self.dt <= S::one()) {
            return Err(Error::Config(format!(
                "dt must be in (0, 1], got {}",
                self.dt
            )));
        }
        if self.t_free == 0 || self.k_nudge == 0 {
            return Err(Error::Config("step counts must be at least 1".into()));
        }
        if !(self.beta > S::zero() && self.beta.is_finite()) {
            return Err(Error::InvalidBeta(self.beta.as_f64()));
        }
        Ok(())
    }
}

/// Internal states, hidden units first, then outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DetState {
    pub s: Vec<f64>,
    pub n_hidden: usize,
    /// Whether the last step moved every unit by less than the tolerance.
    pub settled: bool,
}

impl DetState {
    pub fn ones(n_hidden: usize, n_outputs: usize) -> Self {
        DetState {
            s: vec![1.0; n_hidden + n_outputs],
            n_hidden,
            settled: false,
        }
    }

    pub fn hidden(&self) -> &[f64] {
        &self.s[..self.n_hidden]
    }

    pub fn outputs(&self) -> &[f64] {
        &self.s[self.n_hidden..]
    }

    pub fn activations(&self) -> Vec<f64> {
        self.s.iter().map(|&v| rho(v)).collect()
    }
}

/// `sum_k x_k W_in[k][j] + b_j`.
pub fn hidden_drive<S: Scalar>(params: &FcParameters<S>, x: &[S]) -> Result<Vec<S>> {
    if x.len() != params.w_input.rows {
        return Err(Error::Dimension {
            expected: params.w_input.rows,
            got: x.len(),
        });
    }
    let mut h = params.h_bias_hidden.clone();
    for (k, &xk) in x.iter().enumerate() {
        if xk.is_zero() {
            continue;
        }
        for (hj, &w) in h.iter_mut().zip(params.w_input.row(k)) {
            *hj += xk * w;
        }
    }
    Ok(h)
}

/// `steps` synchronous Euler steps from `init`. `nudge` carries activation
/// targets for the outputs and beta.
pub fn relax<S: Scalar>(
    params: &FcParameters<S>,
    drive: &[S],
    init: DetState,
    nudge: Option<(&[f64], S)>,
    steps: usize,
    cfg: &DetConfig<S>,
) -> Result<DetState> {
    let n_hidden = params.j_hidden_output.rows;
    let n_out = params.j_hidden_output.cols;
    if init.s.len() != n_hidden + n_out || drive.len() != n_hidden {
        return Err(Error::Dimension {
            expected: n_hidden + n_out,
            got: init.s.len(),
        });
    }
    let w: Vec<f64> = params
        .j_hidden_output
        .data
        .iter()
        .map(|v| v.as_f64())
        .collect();
    let drive: Vec<f64> = drive.iter().map(|v| v.as_f64()).collect();
    let b_out: Vec<f64> = params.h_bias_output.iter().map(|v| v.as_f64()).collect();
    let dt = cfg.dt.as_f64();
    let (targets, beta) = match nudge {
        Some((t, beta)) => {
            if t.len() != n_out {
                return Err(Error::Dimension {
                    expected: n_out,
                    got: t.len(),
                });
            }
            (t, beta.as_f64())
        }
        None => (&[][..], 0.0),
    };
    let mut s = init.s;
    let mut settled = false;
    let mut act = vec![0.0; s.len()];
    let mut field = vec![0.0; s.len()];
    for _ in 0..steps {
        for (a, &v) in act.iter_mut().zip(&s) {
            *a = rho(v);
        }
        field[..n_hidden].copy_from_slice(&drive);
        field[n_hidden..].copy_from_slice(&b_out);
        for j in 0..n_hidden {
            let row = &w[j * n_out..(j + 1) * n_out];
            let (aj, mut hj) = (act[j], 0.0);
            for (o, &wjo) in row.iter().enumerate() {
                hj += wjo * act[n_hidden + o];
                field[n_hidden + o] += wjo * aj;
            }
            field[j] += hj;
        }
        let mut largest = 0.0f64;
        for i in 0..s.len() {
            let mut ds = -s[i] + cfg.derivative.gain(s[i], i >= n_hidden) * field[i];
            if beta > 0.0 && i >= n_hidden {
                let o = i - n_hidden;
                let gate = if cfg.gated_nudge {
                    rho_prime(s[i])
                } else {
                    1.0
                };
                ds -= beta * (act[i] - targets[o]) * gate;
            }
            let step = dt * ds;
            s[i] += step;
            largest = largest.max(step.abs());
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("deterministic state"));
        }
        settled = largest < FIXED_POINT_TOLERANCE;
    }
    Ok(DetState {
        s,
        n_hidden,
        settled,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetGradients<S> {
    pub d_w: Matrix<S>,
    pub d_b_hidden: Vec<S>,
    pub d_b_output: Vec<S>,
}

/// `dW = (1/beta)(rho rho |nudge - rho rho |free)`, biases alike.
pub fn det_gradient<S: Scalar>(free: &DetState, nudge: &DetState, beta: S) -> DetGradients<S> {
    let (af, an) = (free.activations(), nudge.activations());
    let nh = free.n_hidden;
    let n_out = af.len() - nh;
    let mut d_w = Matrix::zeros(nh, n_out);
    for j in 0..nh {
        for o in 0..n_out {
            let diff = an[j] * an[nh + o] - af[j] * af[nh + o];
            if diff != 0.0 {
                d_w.set(j, o, S::lit(diff) / beta);
            }
        }
    }
    let single =
        |r: std::ops::Range<usize>| -> Vec<S> { r.map(|i| S::lit(an[i] - af[i]) / beta).collect() };
    DetGradients {
        d_w,
        d_b_hidden: single(0..nh),
        d_b_output: single(nh..nh + n_out),
    }
}

/// Class scores in activation space: targets are 1 on the label's units.
pub fn activation_targets(label: usize, n_classes: usize, spins_per_class: usize) -> Vec<f64> {
    target_spins(label, n_classes, spins_per_class)
        .into_iter()
        .map(|t| if t > 0 { 1.0 } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetModel<S> {
    pub arch: FcArchitecture<S>,
    pub params: FcParameters<S>,
}

impl<S: Scalar> DetModel<S> {
    pub fn free(&self, x: &[S], cfg: &DetConfig<S>) -> Result<DetState> {
        let drive = hidden_drive(&self.params, x)?;
        relax(
            &self.params,
            &drive,
            DetState::ones(self.arch.n_hidden, self.arch.n_outputs()),
            None,
            cfg.t_free,
            cfg,
        )
    }

    /// Predicted class and squared activation error.
    pub fn predict(&self, state: &DetState, label: usize) -> (usize, f64) {
        let a = &self.arch;
        let acts: Vec<f64> = state.outputs().iter().map(|&y| rho(y)).collect();
        let spins: Vec<i8> = acts.iter().map(|&v| if v > 0.5 { 1 } else { -1 }).collect();
        let target = activation_targets(label, a.n_classes, a.spins_per_class);
        let err = acts.iter().zip(&target).map(|(y, t)| (y - t).powi(2)).sum();
        (readout(&spins, a.n_classes, a.spins_per_class), err)
    }

    /// One example: free phase, optional nudge phase, SGD update. Returns
    /// whether the nudge was skipped.
    pub fn step(&mut self, x: &[S], label: usize, cfg: &DetConfig<S>) -> Result<bool> {
        let a = &self.arch;
        let drive = hidden_drive(&self.params, x)?;
        let init = DetState::ones(a.n_hidden, a.n_outputs());
        let free = relax(&self.params, &drive, init, None, cfg.t_free, cfg)?;
        let target = activation_targets(label, a.n_classes, a.spins_per_class);
        let out: Vec<f64> = free.outputs().iter().map(|&y| rho(y)).collect();
        if cfg.skip_nudge && out == target {
            return Ok(true);
        }
        let nudge = relax(
            &self.params,
            &drive,
            free.clone(),
            Some((&target, cfg.beta)),
            cfg.k_nudge,
            cfg,
        )?;
        let g = det_gradient(&free, &nudge, cfg.beta);
        let p = &mut self.params;
        p.j_hidden_output.axpy(cfg.lr_w, &g.d_w, None)?;
        crate::networks::axpy_vec(&mut p.h_bias_hidden, cfg.lr_b, &g.d_b_hidden, None)?;
        crate::networks::axpy_vec(&mut p.h_bias_output, cfg.lr_b, &g.d_b_output, None)?;
        for (k, &xk) in x.iter().enumerate() {
            if xk.is_zero() {
                continue;
            }
            let start = k * p.w_input.cols;
            for (w, &d) in p.w_input.data[start..start + p.w_input.cols]
                .iter_mut()
                .zip(&g.d_b_hidden)
            {
                *w += cfg.lr_w * xk * d;
            }
        }
        Ok(false)
    }
}

/// Accuracy (percent), mean squared error and the fraction of free
/// relaxations that reached a fixed point.
pub fn det_evaluate<S: Scalar>(
    model: &DetModel<S>,
    data: &Dataset<S>,
    cfg: &DetConfig<S>,
) -> Result<(f64, f64, f64)> {
    if data.is_empty() {
        return Err(Error::Insufficient("empty evaluation set".into()));
    }
    let rows: Vec<(bool, f64, bool)> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let state = model.free(&data.images[i], cfg)?;
            let (pred, err) = model.predict(&state, data.labels[i]);
            Ok((pred == data.labels[i], err, state.settled))
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(bool, f64)> = rows.iter().map(|&(c, e, _)| (c, e)).collect();
    let (acc, mse) = summarize(&pairs);
    let settled = rows.iter().filter(|r| r.2).count() as f64 / rows.len() as f64;
    Ok((acc, mse, settled))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetEpoch {
    pub metrics: EpochMetrics,
    /// Fraction of training examples whose free relaxation settled.
    pub settled_fraction: f64,
}

pub fn det_train<S: Scalar>(
    model: &mut DetModel<S>,
    train_set: &Dataset<S>,
    test_set: &Dataset<S>,
    cfg: &DetConfig<S>,
    mut on_epoch: impl FnMut(&DetEpoch, &DetModel<S>) -> Result<()>,
) -> Result<Vec<DetEpoch>> {
    cfg.validate()?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng_from_seed(derive_seed(
            cfg.seed,
            &[1, epoch as u64],
        )));
        let mut skipped = 0;
        for i in order {
            if model.step(&train_set.images[i], train_set.labels[i], cfg)? {
                skipped += 1;
            }
        }
        let (train_acc, train_mse, settled_fraction) = det_evaluate(model, train_set, cfg)?;
        let (test_acc, test_mse, _) = det_evaluate(model, test_set, cfg)?;
        let e = DetEpoch {
            metrics: EpochMetrics {
                epoch,
                train_acc,
                test_acc,
                train_mse,
                test_mse,
                nudges_skipped: skipped,
                wall_seconds: start.elapsed().as_secs_f64(),
            },
            settled_fraction,
        };
        on_epoch(&e, model)?;
        history.push(e);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (FcArchitecture<f64>, DetConfig<f64>) {
        let arch = FcArchitecture {
            n_inputs: 3,
            n_hidden: 2,
            n_classes: 2,
            spins_per_class: 1,
            ..FcArchitecture::mnist(2)
        };
        (arch, DetConfig::new(0))
    }

    #[test]
    fn activation_values() {
        assert_eq!(rho(-0.3), 0.0);
        assert_eq!(rho(0.0), 1.0);
        assert_eq!(rho(2.0), 1.0);
        assert_eq!(rho_prime(0.5), 1.0);
        assert_eq!(rho_prime(-1.0), 0.0);
        assert_eq!(rho_prime(1.0), 0.0);
        assert_eq!(rho_prime(0.0), 0.0);
    }

    #[test]
    fn zero_network_leaks_geometrically() {
        let (arch, cfg) = tiny();
        let params = FcParameters::zeros(&arch);
        let s = relax(&params, &[0.0; 2], DetState::ones(2, 2), None, 30, &cfg).unwrap();
        for &v in &s.s {
            assert!((v - 0.5f64.powi(30)).abs() < 1e-15);
        }
    }

    #[test]
    fn fixed_point_is_kept() {
        let (arch, cfg) = tiny();
        let mut params = FcParameters::zeros(&arch);
        params.h_bias_output = vec![0.4, 0.7];
        let drive = vec![0.25, 0.5];
        // inside (0, 1) with all-ones activations the fixed point is the field
        params.j_hidden_output = Matrix::from_vec(2, 2, vec![0.1, 0.0, 0.0, 0.1]).unwrap();
        let fixed = DetState {
            s: vec![0.25 + 0.1, 0.5 + 0.1, 0.4 + 0.1, 0.7 + 0.1],
            n_hidden: 2,
            settled: false,
        };
        let s = relax(&params, &drive, fixed.clone(), None, 5, &cfg).unwrap();
        for (a, b) in s.s.iter().zip(&fixed.s) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(s.settled);
    }

    #[test]
    fn gradient_arithmetic() {
        let free = DetState {
            s: vec![0.5, -0.5],
            n_hidden: 1,
            settled: true,
        };
        let nudge = DetState {
            s: vec![0.5, 0.5],
            n_hidden: 1,
            settled: true,
        };
        let g = det_gradient::<f64>(&free, &nudge, 2.0);
        assert_eq!(g.d_w.get(0, 0), 0.5);
        assert_eq!(g.d_b_output, vec![0.5]);
        assert_eq!(g.d_b_hidden, vec![0.0]);
        let same = det_gradient::<f64>(&free, &free, 2.0);
        assert!(same.d_w.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn satisfied_targets_keep_the_free_state() {
        let (arch, cfg) = tiny();
        let params = FcParameters::init(&arch, 5);
        let drive = hidden_drive(&params, &[0.2, 0.9, 0.0]).unwrap();
        let free = relax(&params, &drive, DetState::ones(2, 2), None, 200, &cfg).unwrap();
        let targets: Vec<f64> = free.outputs().iter().map(|&y| rho(y)).collect();
        let nudged = relax(
            &params,
            &drive,
            free.clone(),
            Some((&targets, 2.0)),
            50,
            &cfg,
        )
        .unwrap();
        assert_eq!(nudged.activations(), free.activations());
    }
}
