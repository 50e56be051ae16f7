//! Ising problems, spin states and exact reference solvers.
//!
//! Energies follow the hardware sign convention
//! `E(s) = sum_{i>j} J_ij s_i s_j + sum_i h_i s_i`, so a negative coupling is
//! ferromagnetic and a positive bias pushes its spin towards -1.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest problem [`ground_state_bruteforce`] will enumerate.
pub const MAX_BRUTEFORCE_SPINS: usize = 24;

/// A configuration of +/-1 spins.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinState(Vec<i8>);

impl SpinState {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(&bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidSpin(bad as i64));
        }
        Ok(SpinState(spins))
    }

    pub fn uniform(n: usize, value: i8) -> Self {
        assert!(value == 1 || value == -1, "spin value must be +/-1");
        SpinState(vec![value; n])
    }

    /// Spin `i` is +1 when bit `n-1-i` of `code` is set, so increasing codes
    /// enumerate states in lexicographic order with -1 < +1.
    pub fn from_code(n: usize, code: u64) -> Self {
        SpinState(
            (0..n)
                .map(|i| {
                    if (code >> (n - 1 - i)) & 1 == 1 {
                        1
                    } else {
                        -1
                    }
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> i8 {
        self.0[i]
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = -self.0[i];
    }

    /// Global spin reversal.
    pub fn negated(&self) -> Self {
        SpinState(self.0.iter().map(|s| -s).collect())
    }

    /// Spins at the given positions, in order.
    pub fn select(&self, indices: &[usize]) -> Vec<i8> {
        indices.iter().map(|&i| self.0[i]).collect()
    }

    pub fn into_inner(self) -> Vec<i8> {
        self.0
    }
}

/// A spin state together with its energy under the problem that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<S> {
    pub state: SpinState,
    pub energy: S,
}

/// Closed interval of admissible parameter values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range<S> {
    pub min: S,
    pub max: S,
}

impl<S: Scalar> Range<S> {
    pub fn new(min: S, max: S) -> Self {
        assert!(min <= max, "empty range");
        Range { min, max }
    }

    pub fn symmetric(half_width: S) -> Self {
        Range::new(-half_width, half_width)
    }

    pub fn clamp(&self, v: S) -> S {
        v.max(self.min).min(self.max)
    }

    pub fn contains(&self, v: S) -> bool {
        v >= self.min && v <= self.max
    }

    /// The range expressed in units where the on-chip value is `scale * v`.
    pub fn unscaled(&self, scale: S) -> Self {
        Range::new(self.min / scale, self.max / scale)
    }
}

/// Sparse Ising problem. Couplings are keyed `(i, j)` with `i > j`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingProblem<S> {
    n_spins: usize,
    couplings: BTreeMap<(usize, usize), S>,
    biases: Vec<S>,
    pub j_range: Range<S>,
    pub h_range: Range<S>,
}

impl<S: Scalar> IsingProblem<S> {
    /// Empty problem with the default chip ranges J in [-2, 2], h in [-4, 4].
    pub fn new(n_spins: usize) -> Self {
        Self::with_ranges(
            n_spins,
            Range::symmetric(S::lit(2.0)),
            Range::symmetric(S::lit(4.0)),
        )
    }

    pub fn with_ranges(n_spins: usize, j_range: Range<S>, h_range: Range<S>) -> Self {
        IsingProblem {
            n_spins,
            couplings: BTreeMap::new(),
            biases: vec![S::zero(); n_spins],
            j_range,
            h_range,
        }
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn biases(&self) -> &[S] {
        &self.biases
    }

    pub fn bias(&self, i: usize) -> S {
        self.biases[i]
    }

    pub fn set_bias(&mut self, i: usize, value: S) -> Result<()> {
        self.check_index(i)?;
        self.biases[i] = value;
        Ok(())
    }

    pub fn add_bias(&mut self, i: usize, delta: S) -> Result<()> {
        self.check_index(i)?;
        self.biases[i] += delta;
        Ok(())
    }

    /// Sets `J_ij` (order of `i`, `j` irrelevant). A zero value is stored.
    pub fn set_coupling(&mut self, i: usize, j: usize, value: S) -> Result<()> {
        let key = self.key(i, j)?;
        self.couplings.insert(key, value);
        Ok(())
    }

    pub fn add_coupling(&mut self, i: usize, j: usize, delta: S) -> Result<()> {
        let key = self.key(i, j)?;
        *self.couplings.entry(key).or_insert_with(S::zero) += delta;
        Ok(())
    }

    pub fn coupling(&self, i: usize, j: usize) -> S {
        let key = if i > j { (i, j) } else { (j, i) };
        self.couplings.get(&key).copied().unwrap_or_else(S::zero)
    }

    /// Stored couplings as `((i, j), J_ij)` with `i > j`, in key order.
    pub fn couplings(&self) -> impl Iterator<Item = ((usize, usize), S)> + '_ {
        self.couplings.iter().map(|(&k, &v)| (k, v))
    }

    pub fn n_couplings(&self) -> usize {
        self.couplings.len()
    }

    /// Largest parameter magnitude, `max(|J|, |h|)`.
    pub fn max_abs_parameter(&self) -> S {
        self.couplings
            .values()
            .chain(self.biases.iter())
            .fold(S::zero(), |m, v| m.max(v.abs()))
    }

    /// Dense symmetric coupling matrix, row-major `n x n`.
    pub fn dense_couplings(&self) -> Vec<S> {
        let n = self.n_spins;
        let mut dense = vec![S::zero(); n * n];
        for (&(i, j), &v) in &self.couplings {
            dense[i * n + j] = v;
            dense[j * n + i] = v;
        }
        dense
    }

    /// Every parameter multiplied by `factor`; ranges are kept.
    pub fn scaled(&self, factor: S) -> Self {
        let mut out = self.clone();
        out.couplings.values_mut().for_each(|v| *v *= factor);
        out.biases.iter_mut().for_each(|v| *v *= factor);
        out
    }

    pub fn check_state(&self, state: &SpinState) -> Result<()> {
        if state.len() != self.n_spins {
            return Err(Error::Dimension {
                expected: self.n_spins,
                got: state.len(),
            });
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n_spins {
            return Err(Error::IndexOutOfRange {
                index: i,
                n_spins: self.n_spins,
            });
        }
        Ok(())
    }

    fn key(&self, i: usize, j: usize) -> Result<(usize, usize)> {
        self.check_index(i)?;
        self.check_index(j)?;
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => Err(Error::SelfCoupling(i)),
            std::cmp::Ordering::Greater => Ok((i, j)),
            std::cmp::Ordering::Less => Ok((j, i)),
        }
    }

    /// Serializes to the line-oriented text format: an `ising <n>` header,
    /// then `h <i> <value>` and `J <i> <j> <value>` records with `i > j`.
    /// Values print in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = format!("ising {}\n", self.n_spins);
        for (i, h) in self.biases.iter().enumerate() {
            if !h.is_zero() {
                let _ = writeln!(out, "h {i} {h}");
            }
        }
        for (&(i, j), v) in &self.couplings {
            let _ = writeln!(out, "J {i} {j} {v}");
        }
        out
    }

    /// Parses [`IsingProblem::to_text`] output. Blank lines and `#` comments
    /// are skipped; ranges are the defaults of [`IsingProblem::new`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Format("empty problem file".into()))?;
        let n_spins = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["ising", n] => n
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad spin count {n:?}")))?,
            _ => return Err(Error::Format(format!("bad header {header:?}"))),
        };
        let mut problem = Self::new(n_spins);
        for (lineno, line) in lines {
            let bad = || Error::Format(format!("line {lineno}: {line:?}"));
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[..] {
                ["h", i, v] => {
                    let i = i.parse().map_err(|_| bad())?;
                    let v = v.parse::<S>().map_err(|_| bad())?;
                    problem.set_bias(i, v)?;
                }
                ["J", i, j, v] => {
                    let i: usize = i.parse().map_err(|_| bad())?;
                    let j: usize = j.parse().map_err(|_| bad())?;
                    if i <= j {
                        return Err(bad());
                    }
                    let v = v.parse::<S>().map_err(|_| bad())?;
                    if problem.couplings.contains_key(&(i, j)) {
                        return Err(Error::Format(format!("line {lineno}: duplicate coupling")));
                    }
                    problem.set_coupling(i, j, v)?;
                }
                _ => return Err(bad()),
            }
        }
        Ok(problem)
    }
}

/// `sum_{i>j} J_ij s_i s_j + sum_i h_i s_i`.
pub fn energy<S: Scalar>(problem: &IsingProblem<S>, state: &SpinState) -> Result<S> {
    problem.check_state(state)?;
    Ok(energy_unchecked(problem, state.spins()))
}

pub(crate) fn energy_unchecked<S: Scalar>(problem: &IsingProblem<S>, spins: &[i8]) -> S {
    let spin = |i: usize| if spins[i] > 0 { S::one() } else { -S::one() };
    let pair: S = problem
        .couplings
        .iter()
        .map(|(&(i, j), &v)| v * spin(i) * spin(j))
        .sum();
    let field: S = problem
        .biases
        .iter()
        .enumerate()
        .map(|(i, &h)| h * spin(i))
        .sum();
    pair + field
}

/// Folds the squared-error nudge `(beta/2) sum (s_i - t_i)^2` over the output
/// spins into the biases: `h_i <- h_i - beta * t_i`. The shifted biases are
/// not clipped.
pub fn apply_nudge<S: Scalar>(
    problem: &IsingProblem<S>,
    outputs: &[usize],
    targets: &[i8],
    beta: S,
) -> Result<IsingProblem<S>> {
    if !(beta > S::zero()) || !beta.is_finite() {
        return Err(Error::InvalidBeta(beta.as_f64()));
    }
    if outputs.len() != targets.len() {
        return Err(Error::Dimension {
            expected: outputs.len(),
            got: targets.len(),
        });
    }
    let mut nudged = problem.clone();
    for (&i, &t) in outputs.iter().zip(targets) {
        if t != 1 && t != -1 {
            return Err(Error::InvalidSpin(t as i64));
        }
        nudged.add_bias(i, -beta * S::from_i8(t).unwrap())?;
    }
    Ok(nudged)
}

/// Clamps every coupling into `j_range` and every bias into `h_range`.
pub fn clip_parameters<S: Scalar>(problem: &IsingProblem<S>) -> IsingProblem<S> {
    let mut out = problem.clone();
    clip_in_place(&mut out);
    out
}

pub fn clip_in_place<S: Scalar>(problem: &mut IsingProblem<S>) {
    let (jr, hr) = (problem.j_range, problem.h_range);
    problem
        .couplings
        .values_mut()
        .for_each(|v| *v = jr.clamp(*v));
    problem.biases.iter_mut().for_each(|v| *v = hr.clamp(*v));
}

/// Relative tolerance under which two enumerated energies count as tied.
const TIE_TOLERANCE: f64 = 1e-9;

/// Exact ground state by enumerating all `2^n` states in Gray-code order.
/// Ties go to the lexicographically smallest state (-1 < +1).
pub fn ground_state_bruteforce<S: Scalar>(problem: &IsingProblem<S>) -> Result<Sample<S>> {
    let n = problem.n_spins();
    if n > MAX_BRUTEFORCE_SPINS {
        return Err(Error::TooLarge {
            n_spins: n,
            max: MAX_BRUTEFORCE_SPINS,
        });
    }
    if n == 0 {
        return Ok(Sample {
            state: SpinState(Vec::new()),
            energy: S::zero(),
        });
    }
    let dense: Vec<f64> = problem
        .dense_couplings()
        .iter()
        .map(|v| v.as_f64())
        .collect();
    let h: Vec<f64> = problem.biases.iter().map(|v| v.as_f64()).collect();

    // Start at code 0 (all -1) and walk the reflected Gray code; spin i is
    // bit n-1-i so the best state's code doubles as its lexicographic rank.
    let mut spins = vec![-1.0f64; n];
    let mut fields: Vec<f64> = (0..n)
        .map(|i| h[i] - dense[i * n..(i + 1) * n].iter().sum::<f64>())
        .collect();
    let mut e = energy_unchecked(problem, &vec![-1i8; n]).as_f64();
    let mut code: u64 = 0;
    let mut best_e = e;
    let mut best_code = code;
    for step in 1u64..(1u64 << n) {
        let bit = step.trailing_zeros() as usize;
        let i = n - 1 - bit;
        e -= 2.0 * spins[i] * fields[i];
        let delta = -2.0 * spins[i];
        spins[i] = -spins[i];
        let row = &dense[i * n..(i + 1) * n];
        for (f, &jij) in fields.iter_mut().zip(row) {
            *f += jij * delta;
        }
        code ^= 1 << bit;
        let tol = TIE_TOLERANCE * best_e.abs().max(1.0);
        if e < best_e - tol || (e <= best_e + tol && code < best_code) {
            best_e = e.min(best_e);
            best_code = code;
        }
    }
    let state = SpinState::from_code(n, best_code);
    let energy = energy_unchecked(problem, state.spins());
    Ok(Sample { state, energy })
}
