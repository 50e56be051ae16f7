//! Text checkpoint container.
//!
//! ```text
//! ising-ep-checkpoint v1
//! arch fc n_inputs=784 n_hidden=120 ...
//! seed 7
//! meta t_hot=1.5
//! tensor W_input 784 120
//! <one line of space-separated values per row>
//! tensor h_bias_hidden 1 120
//! ...
//! ```
//!
//! Values are written with the shortest representation that parses back to
//! the same number, so save/load round-trips exactly. FC checkpoints hold
//! `W_input`, `h_bias_hidden`, `J_hidden_output`, `h_bias_output`; conv
//! checkpoints hold `filters`, `W_class`, `biases`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ising::Range;
use crate::networks::{ConvArchitecture, ConvParameters, FcArchitecture, FcParameters, Matrix};
use crate::scalar::Scalar;

pub const HEADER: &str = "ising-ep-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    /// `fc` or `conv`.
    pub kind: String,
    pub arch: BTreeMap<String, String>,
    pub seed: u64,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Matrix<S>)>,
}

fn field<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::Format(format!("checkpoint: missing arch field {key}")))?;
    raw.parse()
        .map_err(|_| Error::Format(format!("checkpoint: bad value {raw:?} for {key}")))
}

fn fields(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

impl<S: Scalar> Checkpoint<S> {
    pub fn tensor(&self, name: &str) -> Result<&Matrix<S>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Format(format!("checkpoint: missing tensor {name}")))
    }

    fn vector(&self, name: &str) -> Result<Vec<S>> {
        Ok(self.tensor(name)?.data.clone())
    }

    pub fn meta_value<T: FromStr>(&self, key: &str) -> Option<T> {
        self.meta.get(key).and_then(|v| v.parse().ok())
    }

    pub fn fc(arch: &FcArchitecture<S>, params: &FcParameters<S>, seed: u64) -> Self {
        let arch_map = fields(&[
            ("n_inputs", arch.n_inputs.to_string()),
            ("n_hidden", arch.n_hidden.to_string()),
            ("n_classes", arch.n_classes.to_string()),
            ("spins_per_class", arch.spins_per_class.to_string()),
            ("input_scale", arch.input_scale.to_string()),
            ("chip_scale", arch.chip_scale.to_string()),
            ("j_min", arch.j_range.min.to_string()),
            ("j_max", arch.j_range.max.to_string()),
            ("h_min", arch.h_range.min.to_string()),
            ("h_max", arch.h_range.max.to_string()),
        ]);
        let row = |v: &[S]| Matrix::from_vec(1, v.len(), v.to_vec()).expect("row vector");
        Checkpoint {
            kind: "fc".into(),
            arch: arch_map,
            seed,
            meta: BTreeMap::new(),
            tensors: vec![
                ("W_input".into(), params.w_input.clone()),
                ("h_bias_hidden".into(), row(&params.h_bias_hidden)),
                ("J_hidden_output".into(), params.j_hidden_output.clone()),
                ("h_bias_output".into(), row(&params.h_bias_output)),
            ],
        }
    }

    pub fn to_fc(&self) -> Result<(FcArchitecture<S>, FcParameters<S>)> {
        self.expect_kind("fc")?;
        let a = &self.arch;
        let arch = FcArchitecture {
            n_inputs: field(a, "n_inputs")?,
            n_hidden: field(a, "n_hidden")?,
            n_classes: field(a, "n_classes")?,
            spins_per_class: field(a, "spins_per_class")?,
            input_scale: field(a, "input_scale")?,
            chip_scale: field(a, "chip_scale")?,
            j_range: range(field(a, "j_min")?, field(a, "j_max")?)?,
            h_range: range(field(a, "h_min")?, field(a, "h_max")?)?,
        };
        arch.validate()?;
        let params = FcParameters {
            w_input: self.tensor("W_input")?.clone(),
            h_bias_hidden: self.vector("h_bias_hidden")?,
            j_hidden_output: self.tensor("J_hidden_output")?.clone(),
            h_bias_output: self.vector("h_bias_output")?,
        };
        params.check(&arch)?;
        Ok((arch, params))
    }

    pub fn conv(arch: &ConvArchitecture<S>, params: &ConvParameters<S>, seed: u64) -> Self {
        let arch_map = fields(&[
            ("input_hw", arch.input_hw.to_string()),
            ("kernel", arch.kernel.to_string()),
            ("stride", arch.stride.to_string()),
            ("padding", arch.padding.to_string()),
            ("n_filters", arch.n_filters.to_string()),
            ("pool_coef", arch.pool_coef.to_string()),
            ("n_classes", arch.n_classes.to_string()),
            ("spins_per_class", arch.spins_per_class.to_string()),
            (
                "input_bias_magnitude",
                arch.input_bias_magnitude.to_string(),
            ),
            ("conv_scale", arch.conv_scale.to_string()),
            ("class_scale", arch.class_scale.to_string()),
            ("chain_strength", arch.chain_strength.to_string()),
            ("j_min", arch.j_range.min.to_string()),
            ("j_max", arch.j_range.max.to_string()),
            ("h_min", arch.h_range.min.to_string()),
            ("h_max", arch.h_range.max.to_string()),
        ]);
        let n = params.output_bias.len();
        Checkpoint {
            kind: "conv".into(),
            arch: arch_map,
            seed,
            meta: BTreeMap::new(),
            tensors: vec![
                ("filters".into(), params.filters.clone()),
                ("W_class".into(), params.w_class.clone()),
                (
                    "biases".into(),
                    Matrix::from_vec(1, n, params.output_bias.clone()).expect("row vector"),
                ),
            ],
        }
    }

    pub fn to_conv(&self) -> Result<(ConvArchitecture<S>, ConvParameters<S>)> {
        self.expect_kind("conv")?;
        let a = &self.arch;
        let arch = ConvArchitecture {
            input_hw: field(a, "input_hw")?,
            kernel: field(a, "kernel")?,
            stride: field(a, "stride")?,
            padding: field(a, "padding")?,
            n_filters: field(a, "n_filters")?,
            pool_coef: field(a, "pool_coef")?,
            n_classes: field(a, "n_classes")?,
            spins_per_class: field(a, "spins_per_class")?,
            input_bias_magnitude: field(a, "input_bias_magnitude")?,
            conv_scale: field(a, "conv_scale")?,
            class_scale: field(a, "class_scale")?,
            chain_strength: field(a, "chain_strength")?,
            j_range: range(field(a, "j_min")?, field(a, "j_max")?)?,
            h_range: range(field(a, "h_min")?, field(a, "h_max")?)?,
        };
        arch.validate()?;
        let params = ConvParameters {
            filters: self.tensor("filters")?.clone(),
            w_class: self.tensor("W_class")?.clone(),
            output_bias: self.vector("biases")?,
        };
        let zeros = ConvParameters::zeros(&arch);
        if params.filters.shape() != zeros.filters.shape()
            || params.w_class.shape() != zeros.w_class.shape()
            || params.output_bias.len() != zeros.output_bias.len()
        {
            return Err(Error::Format(
                "checkpoint: conv tensor shapes do not match".into(),
            ));
        }
        Ok((arch, params))
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format(format!(
                "checkpoint holds a {} network, expected {kind}",
                self.kind
            )));
        }
        Ok(())
    }

    /// Same kind and architecture fields.
    pub fn same_architecture(&self, other: &Checkpoint<S>) -> bool {
        self.kind == other.kind && self.arch == other.arch
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{HEADER}").unwrap();
        write!(out, "arch {}", self.kind).unwrap();
        for (k, v) in &self.arch {
            write!(out, " {k}={v}").unwrap();
        }
        writeln!(out).unwrap();
        writeln!(out, "seed {}", self.seed).unwrap();
        for (k, v) in &self.meta {
            writeln!(out, "meta {k}={v}").unwrap();
        }
        for (name, m) in &self.tensors {
            writeln!(out, "tensor {name} {} {}", m.rows, m.cols).unwrap();
            for r in 0..m.rows {
                let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("checkpoint: {m}"));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(HEADER) {
            return Err(bad(format!("missing header {HEADER:?}")));
        }
        let mut kind = None;
        let mut arch = BTreeMap::new();
        let mut seed = None;
        let mut meta = BTreeMap::new();
        let mut tensors = Vec::new();
        while let Some(line) = lines.next() {
            let mut words = line.split_whitespace();
            match words.next() {
                None => continue,
                Some("arch") => {
                    kind = Some(
                        words
                            .next()
                            .ok_or_else(|| bad("empty arch line".into()))?
                            .to_string(),
                    );
                    for kv in words {
                        let (k, v) = kv
                            .split_once('=')
                            .ok_or_else(|| bad(format!("bad arch field {kv:?}")))?;
                        arch.insert(k.to_string(), v.to_string());
                    }
                }
                Some("seed") => {
                    let v = words.next().unwrap_or_default();
                    seed = Some(v.parse().map_err(|_| bad(format!("bad seed {v:?}")))?);
                }
                Some("meta") => {
                    let kv = words.next().unwrap_or_default();
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| bad(format!("bad meta {kv:?}")))?;
                    meta.insert(k.to_string(), v.to_string());
                }
                Some("tensor") => {
                    let name = words.next().ok_or_else(|| bad("unnamed tensor".into()))?;
                    let dims: Vec<usize> = words
                        .map(|w| w.parse().map_err(|_| bad(format!("bad dimension {w:?}"))))
                        .collect::<Result<_>>()?;
                    let [rows, cols] = dims[..] else {
                        return Err(bad(format!("tensor {name} needs two dimensions")));
                    };
                    let mut data = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        let row = lines
                            .next()
                            .ok_or_else(|| bad(format!("tensor {name} truncated at row {r}")))?;
                        for w in row.split_whitespace() {
                            data.push(
                                w.parse::<S>()
                                    .map_err(|_| bad(format!("bad value {w:?}")))?,
                            );
                        }
                        if data.len() != (r + 1) * cols {
                            return Err(bad(format!("tensor {name} row {r} has the wrong length")));
                        }
                    }
                    tensors.push((name.to_string(), Matrix::from_vec(rows, cols, data)?));
                }
                Some(other) => return Err(bad(format!("unknown record {other:?}"))),
            }
        }
        Ok(Checkpoint {
            kind: kind.ok_or_else(|| bad("missing arch line".into()))?,
            arch,
            seed: seed.ok_or_else(|| bad("missing seed".into()))?,
            meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn range<S: Scalar>(min: S, max: S) -> Result<Range<S>> {
    if !(min <= max) {
        return Err(Error::Format(format!("empty range [{min}, {max}]")));
    }
    Ok(Range::new(min, max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fc_round_trip() {
        let arch = FcArchitecture::<f64> {
            n_inputs: 6,
            ..FcArchitecture::mnist(3)
        };
        let params = FcParameters::init(&arch, 9);
        let mut ck = Checkpoint::fc(&arch, &params, 9);
        ck.meta.insert("t_hot".into(), "0.75".into());
        let back = Checkpoint::<f64>::from_text(&ck.to_text()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_fc().unwrap(), (arch, params));
        assert_eq!(back.meta_value::<f64>("t_hot"), Some(0.75));
        assert!(back.to_conv().is_err());
    }

    #[test]
    fn conv_round_trip() {
        let arch = ConvArchitecture::<f64>::default();
        let params = ConvParameters::init(&arch, 2);
        let ck = Checkpoint::conv(&arch, &params, 2);
        let back = Checkpoint::<f64>::from_text(&ck.to_text()).unwrap();
        assert_eq!(back.to_conv().unwrap(), (arch, params));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        assert!(Checkpoint::<f64>::from_text("nonsense").is_err());
        let arch = ConvArchitecture::<f64>::default();
        let text = Checkpoint::conv(&arch, &ConvParameters::zeros(&arch), 0).to_text();
        let truncated: String = text
            .lines()
            .take(text.lines().count() - 1)
            .collect::<Vec<_>>()
            .join("\n");
        assert!(Checkpoint::<f64>::from_text(&truncated).is_err());
    }
}
