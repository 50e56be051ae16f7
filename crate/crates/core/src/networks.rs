//! Neural-network architectures expressed as Ising problems.
//!
//! The fully-connected network keeps its input layer off-chip: the image is
//! multiplied by `W_input` once and enters as hidden-spin biases. Hidden and
//! output spins are coupled bipartitely on the chip. Master parameters are
//! stored unscaled; `input_scale` and `chip_scale` are applied while building
//! a problem.
//!
//! The convolutional network lives on a Chimera graph through the embedding
//! from [`crate::topology::build_conv_embedding`].

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::ising::{clip_in_place, IsingProblem, Range, SpinState};
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;
use crate::topology::{
    build_chimera, build_conv_embedding, embed_problem, ChimeraGraph, Embedding,
};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Entries uniform in `[-bound, bound]`.
    pub fn uniform(rows: usize, cols: usize, bound: S, rng: &mut crate::rng::Rng) -> Self {
        let b = bound.as_f64();
        let data = (0..rows * cols)
            .map(|_| S::lit(rng.gen_range(-b..=b)))
            .collect();
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self += scale * other`, then clamp into `range` when given.
    pub fn axpy(&mut self, scale: S, other: &Matrix<S>, range: Option<Range<S>>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                expected: self.data.len(),
                got: other.data.len(),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
            if let Some(r) = range {
                *a = r.clamp(*a);
            }
        }
        Ok(())
    }
}

/// `v += scale * d`, clamped into `range` when given.
pub fn axpy_vec<S: Scalar>(v: &mut [S], scale: S, d: &[S], range: Option<Range<S>>) -> Result<()> {
    if v.len() != d.len() {
        return Err(Error::Dimension {
            expected: v.len(),
            got: d.len(),
        });
    }
    for (a, &b) in v.iter_mut().zip(d) {
        *a += scale * b;
        if let Some(r) = range {
            *a = r.clamp(*a);
        }
    }
    Ok(())
}

/// Class with the largest spin sum over its `spins_per_class` outputs; ties
/// go to the lowest class index.
pub fn readout(output_spins: &[i8], n_classes: usize, spins_per_class: usize) -> usize {
    assert_eq!(output_spins.len(), n_classes * spins_per_class);
    let mut best = (0, i32::MIN);
    for (c, group) in output_spins.chunks(spins_per_class).enumerate() {
        let score: i32 = group.iter().map(|&s| s as i32).sum();
        if score > best.1 {
            best = (c, score);
        }
    }
    best.0
}

/// +1 on the label's spins, -1 elsewhere.
pub fn target_spins(label: usize, n_classes: usize, spins_per_class: usize) -> Vec<i8> {
    assert!(label < n_classes, "label {label} out of range");
    (0..n_classes * spins_per_class)
        .map(|i| if i / spins_per_class == label { 1 } else { -1 })
        .collect()
}

/// Squared error `sum (s_i - t_i)^2` between output spins and targets.
pub fn squared_error(outputs: &[i8], targets: &[i8]) -> f64 {
    outputs
        .iter()
        .zip(targets)
        .map(|(&s, &t)| ((s - t) as f64).powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcArchitecture<S> {
    pub n_inputs: usize,
    pub n_hidden: usize,
    pub n_classes: usize,
    pub spins_per_class: usize,
    pub input_scale: S,
    pub chip_scale: S,
    pub j_range: Range<S>,
    pub h_range: Range<S>,
}

impl<S: Scalar> FcArchitecture<S> {
    /// 784-`n_hidden`-40 network with input scale 0.5, chip scale 0.25,
    /// J in [-2, 2] and h in [-4, 4].
    pub fn mnist(n_hidden: usize) -> Self {
        FcArchitecture {
            n_inputs: 784,
            n_hidden,
            n_classes: 10,
            spins_per_class: 4,
            input_scale: S::lit(0.5),
            chip_scale: S::lit(0.25),
            j_range: Range::symmetric(S::lit(2.0)),
            h_range: Range::symmetric(S::lit(4.0)),
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.n_classes * self.spins_per_class
    }

    pub fn n_spins(&self) -> usize {
        self.n_hidden + self.n_outputs()
    }

    pub fn hidden_indices(&self) -> Vec<usize> {
        (0..self.n_hidden).collect()
    }

    pub fn output_indices(&self) -> Vec<usize> {
        (self.n_hidden..self.n_spins()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_inputs == 0
            || self.n_hidden == 0
            || self.n_classes == 0
            || self.spins_per_class == 0
        {
            return Err(Error::Config("FC layer sizes must be positive".into()));
        }
        if !(self.input_scale > S::zero() && self.chip_scale > S::zero()) {
            return Err(Error::Config("FC scales must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcParameters<S> {
    /// `n_inputs x n_hidden`, applied off-chip.
    pub w_input: Matrix<S>,
    pub h_bias_hidden: Vec<S>,
    /// `n_hidden x n_outputs` couplings, unscaled.
    pub j_hidden_output: Matrix<S>,
    pub h_bias_output: Vec<S>,
}

impl<S: Scalar> FcParameters<S> {
    /// Uniform in `+-1/sqrt(fan_in)` per layer.
    pub fn init(arch: &FcArchitecture<S>, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let b_in = S::lit(1.0 / (arch.n_inputs as f64).sqrt());
        let b_hid = S::lit(1.0 / (arch.n_hidden as f64).sqrt());
        let w_input = Matrix::uniform(arch.n_inputs, arch.n_hidden, b_in, &mut rng);
        let h_bias_hidden = Matrix::uniform(1, arch.n_hidden, b_in, &mut rng).data;
        let j_hidden_output = Matrix::uniform(arch.n_hidden, arch.n_outputs(), b_hid, &mut rng);
        let h_bias_output = Matrix::uniform(1, arch.n_outputs(), b_hid, &mut rng).data;
        FcParameters {
            w_input,
            h_bias_hidden,
            j_hidden_output,
            h_bias_output,
        }
    }

    pub fn zeros(arch: &FcArchitecture<S>) -> Self {
        FcParameters {
            w_input: Matrix::zeros(arch.n_inputs, arch.n_hidden),
            h_bias_hidden: vec![S::zero(); arch.n_hidden],
            j_hidden_output: Matrix::zeros(arch.n_hidden, arch.n_outputs()),
            h_bias_output: vec![S::zero(); arch.n_outputs()],
        }
    }

    pub fn check(&self, arch: &FcArchitecture<S>) -> Result<()> {
        let want = [
            (self.w_input.shape(), (arch.n_inputs, arch.n_hidden)),
            ((1, self.h_bias_hidden.len()), (1, arch.n_hidden)),
            (
                self.j_hidden_output.shape(),
                (arch.n_hidden, arch.n_outputs()),
            ),
            ((1, self.h_bias_output.len()), (1, arch.n_outputs())),
        ];
        for (got, expected) in want {
            if got != expected {
                return Err(Error::Dimension {
                    expected: expected.0 * expected.1,
                    got: got.0 * got.1,
                });
            }
        }
        Ok(())
    }
}

/// Hidden-spin biases `sum_k x_k (input_scale * W_kj) + h_bias_hidden_j`.
pub fn compute_input_bias<S: Scalar>(
    x: &[S],
    params: &FcParameters<S>,
    arch: &FcArchitecture<S>,
) -> Result<Vec<S>> {
    if x.len() != arch.n_inputs {
        return Err(Error::Dimension {
            expected: arch.n_inputs,
            got: x.len(),
        });
    }
    params.check(arch)?;
    let mut h = vec![S::zero(); arch.n_hidden];
    for (k, &xk) in x.iter().enumerate() {
        if xk.is_zero() {
            continue;
        }
        for (hj, &w) in h.iter_mut().zip(params.w_input.row(k)) {
            *hj += xk * (arch.input_scale * w);
        }
    }
    for (hj, &b) in h.iter_mut().zip(&params.h_bias_hidden) {
        *hj += b;
    }
    Ok(h)
}

/// A problem ready for the sampler plus where its layers live.
#[derive(Debug, Clone)]
pub struct ChipProblem<S> {
    pub problem: IsingProblem<S>,
    /// Physical sites of the output spins, in output order.
    pub output_sites: Vec<usize>,
    /// Present when logical spins are chained on a physical graph.
    pub embedding: Option<Embedding<S>>,
}

impl<S: Scalar> ChipProblem<S> {
    /// Logical state of the network (majority vote over chains, if any).
    pub fn logical(&self, physical: &SpinState) -> SpinState {
        match &self.embedding {
            Some(emb) => crate::topology::unembed(physical, emb),
            None => physical.clone(),
        }
    }

    pub fn outputs(&self, physical: &SpinState) -> Vec<i8> {
        physical.select(&self.output_sites)
    }
}

/// Hidden spins first, then outputs; couplings only between the two layers.
/// Parameters outside the chip ranges are clipped.
pub fn build_fc_problem<S: Scalar>(
    arch: &FcArchitecture<S>,
    params: &FcParameters<S>,
    x: &[S],
) -> Result<ChipProblem<S>> {
    let hidden_bias = compute_input_bias(x, params, arch)?;
    let n_hidden = arch.n_hidden;
    let mut problem = IsingProblem::with_ranges(arch.n_spins(), arch.j_range, arch.h_range);
    for (j, &b) in hidden_bias.iter().enumerate() {
        problem.set_bias(j, b)?;
    }
    for (o, &b) in params.h_bias_output.iter().enumerate() {
        problem.set_bias(n_hidden + o, arch.chip_scale * b)?;
    }
    for h in 0..n_hidden {
        for (o, &j) in params.j_hidden_output.row(h).iter().enumerate() {
            problem.set_coupling(n_hidden + o, h, arch.chip_scale * j)?;
        }
    }
    clip_in_place(&mut problem);
    Ok(ChipProblem {
        problem,
        output_sites: arch.output_indices(),
        embedding: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvArchitecture<S> {
    pub input_hw: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub n_filters: usize,
    /// Coupling between a convolution output and its pooling chain.
    pub pool_coef: S,
    pub n_classes: usize,
    pub spins_per_class: usize,
    pub input_bias_magnitude: S,
    pub conv_scale: S,
    pub class_scale: S,
    pub chain_strength: S,
    pub j_range: Range<S>,
    pub h_range: Range<S>,
}

impl<S: Scalar> Default for ConvArchitecture<S> {
    /// 3x3 inputs, four 2x2 filters (stride 1, no padding), 2x2 average
    /// pooling with coefficient 1/4 and a 4x4 classifier with 2 spins per
    /// class. Weights are scaled by 0.1 on chip, chains use strength 2,
    /// J in [-1, 1] and h in [-4, 4].
    fn default() -> Self {
        ConvArchitecture {
            input_hw: 3,
            kernel: 2,
            stride: 1,
            padding: 0,
            n_filters: 4,
            pool_coef: S::lit(0.25),
            n_classes: 2,
            spins_per_class: 2,
            input_bias_magnitude: S::lit(4.0),
            conv_scale: S::lit(0.1),
            class_scale: S::lit(0.1),
            chain_strength: S::lit(2.0),
            j_range: Range::symmetric(S::one()),
            h_range: Range::symmetric(S::lit(4.0)),
        }
    }
}

impl<S: Scalar> ConvArchitecture<S> {
    pub fn feature_hw(&self) -> usize {
        (self.input_hw + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn n_outputs(&self) -> usize {
        self.n_classes * self.spins_per_class
    }

    /// The Chimera layout supports exactly four patches of at most four
    /// pixels, at most four filters and at most four outputs.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("conv architecture: {m}")));
        if self.padding != 0 || self.stride == 0 || self.kernel == 0 || self.kernel > self.input_hw
        {
            return bad("need padding 0, positive stride and kernel <= input");
        }
        if !(self.input_hw - self.kernel).is_multiple_of(self.stride) || self.feature_hw() != 2 {
            return bad("feature maps must be 2x2 (four crossbars)");
        }
        if self.kernel * self.kernel > 4 || self.n_filters == 0 || self.n_filters > 4 {
            return bad("a crossbar holds at most 4 patch pixels and 4 filters");
        }
        if self.n_outputs() == 0 || self.n_outputs() > 4 {
            return bad("the classifier crossbar holds at most 4 outputs");
        }
        if !(self.conv_scale > S::zero() && self.class_scale > S::zero()) {
            return bad("scales must be positive");
        }
        Ok(())
    }
}

/// Logical neuron numbering of the convolutional network: patch inputs,
/// convolution outputs, pooling neurons, class outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayout {
    pub n_patches: usize,
    pub kernel_positions: usize,
    pub n_filters: usize,
    pub n_outputs: usize,
    kernel: usize,
    stride: usize,
    input_hw: usize,
}

impl ConvLayout {
    pub fn of<S: Scalar>(arch: &ConvArchitecture<S>) -> Self {
        let f = arch.feature_hw();
        ConvLayout {
            n_patches: f * f,
            kernel_positions: arch.kernel * arch.kernel,
            n_filters: arch.n_filters,
            n_outputs: arch.n_outputs(),
            kernel: arch.kernel,
            stride: arch.stride,
            input_hw: arch.input_hw,
        }
    }

    pub fn n_neurons(&self) -> usize {
        self.n_patches * (self.kernel_positions + self.n_filters) + self.n_filters + self.n_outputs
    }

    pub fn input(&self, patch: usize, k: usize) -> usize {
        patch * self.kernel_positions + k
    }

    pub fn conv(&self, patch: usize, f: usize) -> usize {
        self.n_patches * self.kernel_positions + patch * self.n_filters + f
    }

    pub fn pool(&self, f: usize) -> usize {
        self.n_patches * (self.kernel_positions + self.n_filters) + f
    }

    pub fn output(&self, o: usize) -> usize {
        self.pool(self.n_filters) + o
    }

    /// Pixel index (row-major) seen by kernel position `k` of `patch`.
    pub fn pixel(&self, patch: usize, k: usize) -> usize {
        let side = (self.input_hw - self.kernel) / self.stride + 1;
        let (pr, pc) = (patch / side, patch % side);
        let (u, v) = (k / self.kernel, k % self.kernel);
        (pr * self.stride + u) * self.input_hw + pc * self.stride + v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParameters<S> {
    /// `n_filters x kernel_positions`, shared by every crossbar.
    pub filters: Matrix<S>,
    /// `n_filters x n_outputs`.
    pub w_class: Matrix<S>,
    pub output_bias: Vec<S>,
}

impl<S: Scalar> ConvParameters<S> {
    pub fn init(arch: &ConvArchitecture<S>, seed: u64) -> Self {
        let layout = ConvLayout::of(arch);
        let mut rng = rng_from_seed(seed);
        let b_conv = S::lit(1.0 / (layout.kernel_positions as f64).sqrt());
        let b_class = S::lit(1.0 / (layout.n_filters as f64).sqrt());
        ConvParameters {
            filters: Matrix::uniform(layout.n_filters, layout.kernel_positions, b_conv, &mut rng),
            w_class: Matrix::uniform(layout.n_filters, layout.n_outputs, b_class, &mut rng),
            output_bias: Matrix::uniform(1, layout.n_outputs, b_class, &mut rng).data,
        }
    }

    pub fn zeros(arch: &ConvArchitecture<S>) -> Self {
        let layout = ConvLayout::of(arch);
        ConvParameters {
            filters: Matrix::zeros(layout.n_filters, layout.kernel_positions),
            w_class: Matrix::zeros(layout.n_filters, layout.n_outputs),
            output_bias: vec![S::zero(); layout.n_outputs],
        }
    }
}

/// Convolutional network bound to its Chimera graph and embedding.
#[derive(Debug, Clone)]
pub struct ConvMachine<S> {
    pub arch: ConvArchitecture<S>,
    pub layout: ConvLayout,
    pub graph: ChimeraGraph,
    pub embedding: Embedding<S>,
}

impl<S: Scalar> ConvMachine<S> {
    pub fn new(arch: ConvArchitecture<S>) -> Result<Self> {
        arch.validate()?;
        let graph = build_chimera(3, 3);
        let embedding = build_conv_embedding(&arch, &graph)?;
        Ok(ConvMachine {
            layout: ConvLayout::of(&arch),
            arch,
            graph,
            embedding,
        })
    }

    /// Logical network for one binary image; learned parameters are clipped.
    pub fn logical_problem(
        &self,
        params: &ConvParameters<S>,
        pixels: &[S],
    ) -> Result<IsingProblem<S>> {
        let arch = &self.arch;
        let l = &self.layout;
        let n_pixels = arch.input_hw * arch.input_hw;
        if pixels.len() != n_pixels {
            return Err(Error::Dimension {
                expected: n_pixels,
                got: pixels.len(),
            });
        }
        if let Some(p) = pixels.iter().find(|&&p| p != S::one() && p != -S::one()) {
            return Err(Error::Config(format!("conv inputs must be +-1, got {p}")));
        }
        let mut problem = IsingProblem::with_ranges(l.n_neurons(), arch.j_range, arch.h_range);
        for p in 0..l.n_patches {
            for k in 0..l.kernel_positions {
                problem.set_bias(
                    l.input(p, k),
                    arch.input_bias_magnitude * pixels[l.pixel(p, k)],
                )?;
                for f in 0..l.n_filters {
                    let w = arch
                        .j_range
                        .clamp(arch.conv_scale * params.filters.get(f, k));
                    problem.set_coupling(l.input(p, k), l.conv(p, f), w)?;
                }
            }
            for f in 0..l.n_filters {
                problem.set_coupling(l.conv(p, f), l.pool(f), arch.pool_coef)?;
            }
        }
        for f in 0..l.n_filters {
            for o in 0..l.n_outputs {
                let w = arch
                    .j_range
                    .clamp(arch.class_scale * params.w_class.get(f, o));
                problem.set_coupling(l.pool(f), l.output(o), w)?;
            }
        }
        for o in 0..l.n_outputs {
            let b = arch.h_range.clamp(arch.class_scale * params.output_bias[o]);
            problem.set_bias(l.output(o), b)?;
        }
        Ok(problem)
    }

    pub fn build(&self, params: &ConvParameters<S>, pixels: &[S]) -> Result<ChipProblem<S>> {
        let logical = self.logical_problem(params, pixels)?;
        let problem = embed_problem(&logical, &self.embedding, &self.graph)?;
        let output_sites = (0..self.layout.n_outputs)
            .map(|o| self.embedding.chains[self.layout.output(o)][0])
            .collect();
        Ok(ChipProblem {
            problem,
            output_sites,
            embedding: Some(self.embedding.clone()),
        })
    }
}

/// Physical conv problem for one image plus the logical layer layout.
pub fn build_conv_problem<S: Scalar>(
    arch: &ConvArchitecture<S>,
    params: &ConvParameters<S>,
    pixels: &[S],
) -> Result<(ChipProblem<S>, ConvLayout)> {
    let machine = ConvMachine::new(arch.clone())?;
    Ok((machine.build(params, pixels)?, machine.layout))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_fc() -> FcArchitecture<f64> {
        FcArchitecture {
            n_inputs: 5,
            n_hidden: 3,
            n_classes: 2,
            spins_per_class: 2,
            ..FcArchitecture::mnist(3)
        }
    }

    #[test]
    fn readout_and_targets() {
        assert_eq!(readout(&[1, 1, 1, 1, -1, -1, -1, -1], 2, 4), 0);
        assert_eq!(readout(&[1; 8], 2, 4), 0);
        assert_eq!(readout(&[-1, -1, 1, -1], 2, 2), 1);
        assert_eq!(target_spins(0, 2, 2), vec![1, 1, -1, -1]);
        let t = target_spins(9, 10, 4);
        assert!(t
            .iter()
            .enumerate()
            .all(|(i, &s)| (s == 1) == (36..40).contains(&i)));
        for c in 0..10 {
            assert_eq!(readout(&target_spins(c, 10, 4), 10, 4), c);
        }
    }

    #[test]
    fn squared_error_of_wrong_outputs() {
        let t = target_spins(0, 2, 2);
        let wrong: Vec<i8> = t.iter().map(|s| -s).collect();
        assert_eq!(squared_error(&wrong, &t), 16.0);
        assert_eq!(squared_error(&t, &t), 0.0);
    }

    #[test]
    fn input_bias_examples() {
        let arch = tiny_fc();
        let mut params = FcParameters::init(&arch, 1);
        let zero = vec![0.0; 5];
        assert_eq!(
            compute_input_bias(&zero, &params, &arch).unwrap(),
            params.h_bias_hidden
        );

        let arch = FcArchitecture {
            n_inputs: 3,
            ..tiny_fc()
        };
        params = FcParameters::zeros(&arch);
        for k in 0..3 {
            params.w_input.set(k, k, 1.0);
        }
        let h = compute_input_bias(&[0.0, 1.0, 0.0], &params, &arch).unwrap();
        assert_eq!(h, vec![0.0, 0.5, 0.0]);
        assert!(compute_input_bias(&[0.0; 4], &params, &arch).is_err());
    }

    #[test]
    fn fc_problem_is_bipartite_and_scaled() {
        let arch = FcArchitecture::<f64>::mnist(120);
        let params = FcParameters::init(&arch, 3);
        let x = vec![0.5; 784];
        let chip = build_fc_problem(&arch, &params, &x).unwrap();
        assert_eq!(chip.problem.n_spins(), 160);
        assert_eq!(chip.problem.n_couplings(), 120 * 40);
        for ((i, j), v) in chip.problem.couplings() {
            assert!(i >= 120 && j < 120);
            assert_eq!(v, 0.25 * params.j_hidden_output.get(j, i - 120));
        }
        assert_eq!(chip.output_sites, (120..160).collect::<Vec<_>>());
    }

    #[test]
    fn fc_problem_of_zero_parameters_is_empty() {
        let arch = tiny_fc();
        let chip = build_fc_problem(&arch, &FcParameters::zeros(&arch), &[0.3; 5]).unwrap();
        assert!(chip.problem.couplings().all(|(_, v)| v == 0.0));
        assert!(chip.problem.biases().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn fc_problem_clips_out_of_range_values() {
        let arch = tiny_fc();
        let mut params = FcParameters::zeros(&arch);
        params.j_hidden_output.set(0, 0, 100.0);
        params.h_bias_hidden[1] = -9.0;
        let chip = build_fc_problem(&arch, &params, &[0.0; 5]).unwrap();
        assert_eq!(chip.problem.coupling(3, 0), 2.0);
        assert_eq!(chip.problem.bias(1), -4.0);
    }

    #[test]
    fn chip_scale_of_one_coupling() {
        let arch = tiny_fc();
        let mut params = FcParameters::zeros(&arch);
        params.j_hidden_output.set(1, 2, 1.0);
        let chip = build_fc_problem(&arch, &params, &[0.0; 5]).unwrap();
        assert_eq!(chip.problem.coupling(3 + 2, 1), 0.25);
    }

    #[test]
    fn conv_layout_indices() {
        let arch = ConvArchitecture::<f64>::default();
        let l = ConvLayout::of(&arch);
        assert_eq!(l.n_neurons(), 40);
        assert_eq!(
            (l.input(0, 0), l.conv(0, 0), l.pool(0), l.output(0)),
            (0, 16, 32, 36)
        );
        assert_eq!(l.output(3), 39);
        // patch 3 is the bottom-right window
        let pixels: Vec<usize> = (0..4).map(|k| l.pixel(3, k)).collect();
        assert_eq!(pixels, vec![4, 5, 7, 8]);
        let pixels: Vec<usize> = (0..4).map(|k| l.pixel(1, k)).collect();
        assert_eq!(pixels, vec![1, 2, 4, 5]);
    }

    #[test]
    fn conv_problem_structure() {
        let arch = ConvArchitecture::<f64>::default();
        let params = ConvParameters::init(&arch, 4);
        let machine = ConvMachine::new(arch.clone()).unwrap();
        let l = machine.layout;
        let mut pixels = vec![-1.0; 9];
        pixels[4] = 1.0;
        let logical = machine.logical_problem(&params, &pixels).unwrap();
        // pixel +1 maps to bias +4
        assert_eq!(logical.bias(l.input(0, 3)), 4.0);
        assert_eq!(logical.bias(l.input(0, 0)), -4.0);
        // shared filters: identical coupling block in every crossbar
        for p in 1..4 {
            for k in 0..4 {
                for f in 0..4 {
                    assert_eq!(
                        logical.coupling(l.input(p, k), l.conv(p, f)),
                        logical.coupling(l.input(0, k), l.conv(0, f))
                    );
                }
            }
        }
        assert_eq!(logical.coupling(l.conv(2, 1), l.pool(1)), 0.25);
        assert_eq!(logical.coupling(l.conv(2, 1), l.pool(0)), 0.0);

        let (chip, _) = build_conv_problem(&arch, &params, &pixels).unwrap();
        let emb = chip.embedding.as_ref().unwrap();
        for chain in &emb.chains {
            for w in chain.windows(2) {
                if machine.graph.has_edge(w[0], w[1]) {
                    assert_eq!(chip.problem.coupling(w[0], w[1]), -2.0);
                }
            }
        }
        for ((a, b), _) in chip.problem.couplings() {
            assert!(machine.graph.has_edge(a, b));
        }
    }

    #[test]
    fn zero_filters_decouple_conv_outputs() {
        let arch = ConvArchitecture::<f64>::default();
        let machine = ConvMachine::new(arch.clone()).unwrap();
        let l = machine.layout;
        let logical = machine
            .logical_problem(&ConvParameters::zeros(&arch), &[1.0; 9])
            .unwrap();
        for p in 0..4 {
            for f in 0..4 {
                for k in 0..4 {
                    assert_eq!(logical.coupling(l.input(p, k), l.conv(p, f)), 0.0);
                }
            }
        }
    }

    #[test]
    fn conv_rejects_non_binary_pixels() {
        let arch = ConvArchitecture::<f64>::default();
        let machine = ConvMachine::new(arch.clone()).unwrap();
        assert!(machine
            .logical_problem(&ConvParameters::zeros(&arch), &[0.5; 9])
            .is_err());
    }
}
