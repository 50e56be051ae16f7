//! Chimera graphs, spin chains and the convolutional embedding.
//!
//! A Chimera graph is a `rows x cols` grid of K_{4,4} cells. Within cell
//! `(r, c)` sites are numbered `8 * (r * cols + c) + k` for the four
//! horizontal spins and `... + 4 + k` for the four vertical ones. Horizontal
//! spin `k` also couples to horizontal spin `k` of the cell to its right;
//! vertical spin `k` couples to vertical spin `k` of the cell below.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ising::{IsingProblem, SpinState};
use crate::networks::{ConvArchitecture, ConvLayout};
use crate::scalar::Scalar;

pub const CELL_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChimeraGraph {
    pub rows: usize,
    pub cols: usize,
    /// Edges as `(a, b)` with `a > b`.
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

/// Builds the `rows x cols` Chimera graph.
pub fn build_chimera(rows: usize, cols: usize) -> ChimeraGraph {
    assert!(
        rows >= 1 && cols >= 1,
        "Chimera graph needs at least one cell"
    );
    let n = rows * cols * 2 * CELL_SIZE;
    let site = |r: usize, c: usize, side: Side, k: usize| chimera_site(cols, r, c, side, k);
    let mut edges = BTreeSet::new();
    let mut add = |a: usize, b: usize| {
        edges.insert((a.max(b), a.min(b)));
    };
    for r in 0..rows {
        for c in 0..cols {
            for k in 0..CELL_SIZE {
                for l in 0..CELL_SIZE {
                    add(
                        site(r, c, Side::Horizontal, k),
                        site(r, c, Side::Vertical, l),
                    );
                }
                if c + 1 < cols {
                    add(
                        site(r, c, Side::Horizontal, k),
                        site(r, c + 1, Side::Horizontal, k),
                    );
                }
                if r + 1 < rows {
                    add(
                        site(r, c, Side::Vertical, k),
                        site(r + 1, c, Side::Vertical, k),
                    );
                }
            }
        }
    }
    let mut adjacency = vec![Vec::new(); n];
    for &(a, b) in &edges {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    adjacency.iter_mut().for_each(|v| v.sort_unstable());
    ChimeraGraph {
        rows,
        cols,
        edges,
        adjacency,
    }
}

fn chimera_site(cols: usize, r: usize, c: usize, side: Side, k: usize) -> usize {
    let base = (r * cols + c) * 2 * CELL_SIZE;
    match side {
        Side::Horizontal => base + k,
        Side::Vertical => base + CELL_SIZE + k,
    }
}

impl ChimeraGraph {
    pub fn n_sites(&self) -> usize {
        self.adjacency.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn site(&self, r: usize, c: usize, side: Side, k: usize) -> usize {
        assert!(r < self.rows && c < self.cols && k < CELL_SIZE);
        chimera_site(self.cols, r, c, side, k)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.max(b), a.min(b)))
    }

    pub fn neighbors(&self, a: usize) -> &[usize] {
        &self.adjacency[a]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }
}

/// Logical spin `i` is represented by the physical sites `chains[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<S> {
    pub chains: Vec<Vec<usize>>,
    /// Magnitude of the ferromagnetic intra-chain coupling.
    pub chain_strength: S,
}

impl<S: Scalar> Embedding<S> {
    pub fn identity(n: usize, chain_strength: S) -> Self {
        Embedding {
            chains: (0..n).map(|i| vec![i]).collect(),
            chain_strength,
        }
    }

    pub fn n_logical(&self) -> usize {
        self.chains.len()
    }

    pub fn n_physical(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    pub fn spins_per_neuron(&self) -> f64 {
        self.n_physical() as f64 / self.n_logical() as f64
    }

    /// First (bias-carrying) site of every chain.
    pub fn heads(&self) -> Vec<usize> {
        self.chains.iter().map(|c| c[0]).collect()
    }

    /// Checks that chains are nonempty, in range, vertex-disjoint and
    /// connected in `graph`.
    pub fn validate(&self, graph: &ChimeraGraph) -> Result<()> {
        let mut owner = vec![usize::MAX; graph.n_sites()];
        for (i, chain) in self.chains.iter().enumerate() {
            if chain.is_empty() {
                return Err(Error::InvalidEmbedding(format!("chain {i} is empty")));
            }
            for &site in chain {
                if site >= graph.n_sites() {
                    return Err(Error::InvalidEmbedding(format!(
                        "chain {i} uses site {site} outside the graph"
                    )));
                }
                if owner[site] != usize::MAX {
                    return Err(Error::InvalidEmbedding(format!(
                        "chains {} and {i} overlap at site {site}",
                        owner[site]
                    )));
                }
                owner[site] = i;
            }
        }
        for (i, chain) in self.chains.iter().enumerate() {
            let mut seen = BTreeSet::from([chain[0]]);
            let mut queue = VecDeque::from([chain[0]]);
            while let Some(a) = queue.pop_front() {
                for &b in graph.neighbors(a) {
                    if owner[b] == i && seen.insert(b) {
                        queue.push_back(b);
                    }
                }
            }
            if seen.len() != chain.len() {
                return Err(Error::InvalidEmbedding(format!(
                    "chain {i} is not connected"
                )));
            }
        }
        Ok(())
    }

    /// Lowest-index physical edge joining the chains of `i` and `j`, as
    /// `(smaller site, larger site)`.
    pub fn link(&self, graph: &ChimeraGraph, i: usize, j: usize) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        for &a in &self.chains[i] {
            for &b in &self.chains[j] {
                if graph.has_edge(a, b) {
                    let pair = (a.min(b), a.max(b));
                    if best.is_none_or(|p| pair < p) {
                        best = Some(pair);
                    }
                }
            }
        }
        best
    }

    /// Dictionary text, one `logical: [site, site, ...]` line per chain.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, chain) in self.chains.iter().enumerate() {
            let sites: Vec<String> = chain.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{i}: [{}]", sites.join(", "));
        }
        out
    }

    pub fn from_text(text: &str, chain_strength: S) -> Result<Self> {
        let mut chains = Vec::new();
        for (n, line) in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate()
        {
            let bad = || Error::Format(format!("embedding line {:?}", line));
            let (key, rest) = line.split_once(':').ok_or_else(bad)?;
            if key.trim().parse::<usize>().map_err(|_| bad())? != n {
                return Err(bad());
            }
            let body = rest
                .trim()
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(bad)?;
            let chain = body
                .split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            chains.push(chain);
        }
        Ok(Embedding {
            chains,
            chain_strength,
        })
    }
}

/// Maps a logical problem onto `graph`. Each bias goes on its chain's first
/// site, each coupling on the lowest-index edge between the two chains, and
/// every edge inside a chain gets `-|chain_strength|`.
pub fn embed_problem<S: Scalar>(
    logical: &IsingProblem<S>,
    emb: &Embedding<S>,
    graph: &ChimeraGraph,
) -> Result<IsingProblem<S>> {
    if logical.n_spins() != emb.n_logical() {
        return Err(Error::Dimension {
            expected: emb.n_logical(),
            got: logical.n_spins(),
        });
    }
    emb.validate(graph)?;
    let mut physical = IsingProblem::with_ranges(graph.n_sites(), logical.j_range, logical.h_range);
    for (i, chain) in emb.chains.iter().enumerate() {
        physical.set_bias(chain[0], logical.bias(i))?;
    }
    for ((i, j), v) in logical.couplings() {
        let (a, b) = emb.link(graph, i, j).ok_or(Error::MissingEdge(i, j))?;
        physical.set_coupling(a, b, v)?;
    }
    let chain_j = -emb.chain_strength.abs();
    for chain in &emb.chains {
        for (x, &a) in chain.iter().enumerate() {
            for &b in &chain[x + 1..] {
                if graph.has_edge(a, b) {
                    physical.set_coupling(a, b, chain_j)?;
                }
            }
        }
    }
    Ok(physical)
}

/// Majority vote over each chain; an exact tie takes the first site's value.
pub fn unembed<S>(physical: &SpinState, emb: &Embedding<S>) -> SpinState {
    let spins = emb
        .chains
        .iter()
        .map(|chain| {
            let total: i32 = chain.iter().map(|&s| physical.get(s) as i32).sum();
            match total.signum() {
                0 => physical.get(chain[0]),
                s => s as i8,
            }
        })
        .collect();
    SpinState::new(spins).expect("majority of spins is a spin")
}

/// Physical state with every site of chain `i` set to `logical[i]`; sites
/// outside all chains are -1.
pub fn write_chains<S>(logical: &SpinState, emb: &Embedding<S>, n_sites: usize) -> SpinState {
    let mut spins = vec![-1i8; n_sites];
    for (i, chain) in emb.chains.iter().enumerate() {
        for &s in chain {
            spins[s] = logical.get(i);
        }
    }
    SpinState::new(spins).expect("binary spins")
}

/// Hand-built layout of the small convolutional network on a Chimera graph.
///
/// Uses the top-left 3x3 block of cells. The corner cells are the four
/// convolution crossbars: horizontals carry the patch inputs, verticals the
/// per-filter outputs, and the K_{4,4} couplings hold the shared filters.
/// Pooling chain `f` runs through vertical `f` and horizontal `f` of the
/// middle-left cell, horizontal `f` of the centre cell and horizontal `f`
/// and vertical `f` of the middle-right cell. Its two vertical ends touch
/// filter `f`'s outputs in the crossbars above and below them. The centre
/// cell is the classifier: pooled values on its horizontals, class outputs
/// on its verticals.
pub fn build_conv_embedding<S: Scalar>(
    arch: &ConvArchitecture<S>,
    graph: &ChimeraGraph,
) -> Result<Embedding<S>> {
    arch.validate()?;
    if graph.rows < 3 || graph.cols < 3 {
        return Err(Error::GraphTooSmall { need: 3 });
    }
    let layout = ConvLayout::of(arch);
    // crossbar cell of each input patch, in patch order (row-major over the
    // 2x2 grid of patches)
    let crossbars = [(0, 0), (0, 2), (2, 0), (2, 2)];
    let mut chains = vec![Vec::new(); layout.n_neurons()];
    for (p, &(r, c)) in crossbars.iter().enumerate() {
        for k in 0..layout.kernel_positions {
            chains[layout.input(p, k)] = vec![graph.site(r, c, Side::Horizontal, k)];
        }
        for f in 0..layout.n_filters {
            chains[layout.conv(p, f)] = vec![graph.site(r, c, Side::Vertical, f)];
        }
    }
    for f in 0..layout.n_filters {
        chains[layout.pool(f)] = vec![
            graph.site(1, 1, Side::Horizontal, f),
            graph.site(1, 0, Side::Horizontal, f),
            graph.site(1, 0, Side::Vertical, f),
            graph.site(1, 2, Side::Horizontal, f),
            graph.site(1, 2, Side::Vertical, f),
        ];
    }
    for o in 0..layout.n_outputs {
        chains[layout.output(o)] = vec![graph.site(1, 1, Side::Vertical, o)];
    }
    let emb = Embedding {
        chains,
        chain_strength: arch.chain_strength,
    };
    emb.validate(graph)?;
    Ok(emb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::ground_state_bruteforce;

    #[test]
    fn chimera_counts() {
        let g = build_chimera(1, 1);
        assert_eq!((g.n_sites(), g.n_edges()), (8, 16));
        let g = build_chimera(2, 1);
        assert_eq!((g.n_sites(), g.n_edges()), (16, 36));
        let g = build_chimera(2, 2);
        assert_eq!((g.n_sites(), g.n_edges()), (32, 80));
    }

    #[test]
    fn chimera_structure() {
        let g = build_chimera(3, 3);
        for a in 0..g.n_sites() {
            assert!(g.neighbors(a).len() <= 6);
        }
        // intra-cell edges always join a horizontal and a vertical spin
        for (a, b) in g.edges() {
            if a / 8 == b / 8 {
                assert_ne!((a % 8) < 4, (b % 8) < 4);
            }
        }
        assert!(g.has_edge(
            g.site(0, 0, Side::Horizontal, 2),
            g.site(0, 1, Side::Horizontal, 2)
        ));
        assert!(g.has_edge(
            g.site(0, 0, Side::Vertical, 1),
            g.site(1, 0, Side::Vertical, 1)
        ));
        assert!(!g.has_edge(
            g.site(0, 0, Side::Vertical, 1),
            g.site(0, 1, Side::Vertical, 1)
        ));
    }

    #[test]
    fn identity_embedding_is_transparent() {
        let g = build_chimera(1, 1);
        let mut p = IsingProblem::<f64>::new(8);
        p.set_coupling(4, 0, 0.5).unwrap();
        p.set_coupling(7, 2, -0.25).unwrap();
        p.set_bias(3, 1.5).unwrap();
        let emb = Embedding::identity(8, 1.0);
        assert_eq!(embed_problem(&p, &emb, &g).unwrap(), p);
    }

    #[test]
    fn two_site_chain_is_ferromagnetic() {
        let g = build_chimera(1, 1);
        let emb = Embedding {
            chains: vec![
                vec![0, 4],
                vec![1],
                vec![2],
                vec![3],
                vec![5],
                vec![6],
                vec![7],
            ],
            chain_strength: 1.0,
        };
        let phys = embed_problem(&IsingProblem::<f64>::new(7), &emb, &g).unwrap();
        assert_eq!(phys.coupling(0, 4), -1.0);
        let ground = ground_state_bruteforce(&phys).unwrap();
        assert_eq!(ground.energy, -1.0);
        assert_eq!(ground.state.get(0), ground.state.get(4));
    }

    #[test]
    fn embedding_errors() {
        let g = build_chimera(1, 1);
        let overlapping = Embedding {
            chains: vec![vec![0, 4], vec![4]],
            chain_strength: 1.0,
        };
        assert!(matches!(
            overlapping.validate(&g),
            Err(Error::InvalidEmbedding(_))
        ));
        let disconnected = Embedding {
            chains: vec![vec![0, 1]],
            chain_strength: 1.0,
        };
        assert!(disconnected.validate(&g).is_err());
        // two horizontals of one cell share no edge
        let mut p = IsingProblem::<f64>::new(2);
        p.set_coupling(1, 0, 1.0).unwrap();
        let emb = Embedding {
            chains: vec![vec![0], vec![1]],
            chain_strength: 1.0,
        };
        assert!(matches!(
            embed_problem(&p, &emb, &g),
            Err(Error::MissingEdge(1, 0))
        ));
    }

    #[test]
    fn unembed_votes() {
        let emb = Embedding {
            chains: vec![vec![0, 1, 2], vec![3, 4]],
            chain_strength: 1.0,
        };
        let phys = SpinState::new(vec![1, 1, 1, 1, -1]).unwrap();
        assert_eq!(unembed(&phys, &emb).spins(), &[1, 1]);
        let phys = SpinState::new(vec![-1, 1, -1, -1, 1]).unwrap();
        assert_eq!(unembed(&phys, &emb).spins(), &[-1, -1]);
    }

    #[test]
    fn chain_ground_state_unembeds_to_logical_ground_state() {
        // logical 3-spin problem on chains across two cells (16 sites)
        let g = build_chimera(2, 1);
        let emb = Embedding {
            chains: vec![vec![4, 12], vec![0], vec![8]],
            chain_strength: 3.0,
        };
        let mut logical = IsingProblem::<f64>::new(3);
        logical.set_coupling(1, 0, -0.6).unwrap();
        logical.set_coupling(2, 0, 0.4).unwrap();
        logical.set_bias(0, 0.3).unwrap();
        let phys = embed_problem(&logical, &emb, &g).unwrap();
        let pg = ground_state_bruteforce(&phys).unwrap();
        let lg = ground_state_bruteforce(&logical).unwrap();
        assert_eq!(unembed(&pg.state, &emb), lg.state);
        assert_eq!(pg.state.get(4), pg.state.get(12));
    }

    #[test]
    fn embedding_text_round_trip() {
        let emb = Embedding {
            chains: vec![vec![560], vec![561, 569]],
            chain_strength: 2.0,
        };
        let text = emb.to_text();
        assert_eq!(text, "0: [560]\n1: [561, 569]\n");
        assert_eq!(Embedding::from_text(&text, 2.0).unwrap(), emb);
        assert!(Embedding::<f64>::from_text("1: [3]\n", 1.0).is_err());
    }
}
