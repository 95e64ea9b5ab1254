//! Variable-topology recurrent controllers and their mutation operators.
//!
//! Node numbering is fixed so that hidden-node deletion never renumbers the
//! inputs or outputs:
//!
//! | ids                    | role                                   |
//! |------------------------|----------------------------------------|
//! | `0..7`                 | proximity inputs                       |
//! | `7..15`                | range-and-bearing inputs               |
//! | `15`                   | bias input (always 1)                  |
//! | `16`, `17`             | left / right wheel outputs             |
//! | `18..18 + hidden`      | hidden nodes                           |

use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

pub const INPUTS: usize = 16;
pub const OUTPUTS: usize = 2;
pub const BIAS_INPUT: usize = 15;
pub const FIRST_OUTPUT: usize = INPUTS;
pub const FIRST_HIDDEN: usize = INPUTS + OUTPUTS;
pub const MAX_HIDDEN: usize = 20;
pub const MAX_CONNECTIONS: usize = 40;
pub const WEIGHT_BOUND: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenomeError {
    #[error("{0} hidden nodes exceeds the cap of {MAX_HIDDEN}")]
    TooManyHidden(usize),
    #[error("{0} connections exceeds the cap of {MAX_CONNECTIONS}")]
    TooManyConnections(usize),
    #[error("connection {from}->{to} is not legal for {hidden} hidden nodes")]
    IllegalConnection {
        from: usize,
        to: usize,
        hidden: usize,
    },
    #[error("duplicate connection {from}->{to}")]
    Duplicate { from: usize, to: usize },
    #[error("weight {0} outside [-2, 2]")]
    WeightOutOfRange(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Connection {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// An evolvable recurrent network. Always satisfies the structural caps.
#[derive(Debug, Clone, PartialEq)]
pub struct Genome {
    hidden: usize,
    connections: Vec<Connection>,
}

impl Genome {
    pub fn new(hidden: usize, connections: Vec<Connection>) -> Result<Self, GenomeError> {
        if hidden > MAX_HIDDEN {
            return Err(GenomeError::TooManyHidden(hidden));
        }
        if connections.len() > MAX_CONNECTIONS {
            return Err(GenomeError::TooManyConnections(connections.len()));
        }
        for (i, c) in connections.iter().enumerate() {
            if !is_legal(hidden, c.source, c.target) {
                return Err(GenomeError::IllegalConnection {
                    from: c.source,
                    to: c.target,
                    hidden,
                });
            }
            if !(-WEIGHT_BOUND..=WEIGHT_BOUND).contains(&c.weight) {
                return Err(GenomeError::WeightOutOfRange(c.weight));
            }
            if connections[..i]
                .iter()
                .any(|o| o.source == c.source && o.target == c.target)
            {
                return Err(GenomeError::Duplicate {
                    from: c.source,
                    to: c.target,
                });
            }
        }
        Ok(Genome {
            hidden,
            connections,
        })
    }

    /// A network without hidden nodes or connections; both outputs stay at 0.
    pub fn empty() -> Self {
        Genome {
            hidden: 0,
            connections: Vec::new(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn connections(&self) -> &[Connection] {
        &self.connections
    }

    /// Number of non-input nodes (outputs followed by hidden nodes).
    pub fn state_len(&self) -> usize {
        OUTPUTS + self.hidden
    }

    fn node_count(&self) -> usize {
        FIRST_HIDDEN + self.hidden
    }

    fn has_connection(&self, source: usize, target: usize) -> bool {
        self.connections
            .iter()
            .any(|c| c.source == source && c.target == target)
    }

    /// Serializes to the line-oriented text format. Weights carry 17
    /// significant digits so parsing returns a bit-identical genome.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "hidden {}", self.hidden);
        for c in &self.connections {
            let _ = writeln!(s, "{} {} {:.16e}", c.source, c.target, c.weight);
        }
        s
    }

    /// Parses the text format. Blank lines and `#` comment lines are skipped.
    pub fn from_text(text: &str) -> Result<Self, GenomeError> {
        let mut hidden = None;
        let mut connections = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |message: &str| GenomeError::Parse {
                line: no + 1,
                message: message.to_string(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match hidden {
                None => {
                    if fields.len() != 2 || fields[0] != "hidden" {
                        return Err(perr("expected `hidden <count>` header"));
                    }
                    hidden = Some(
                        fields[1]
                            .parse::<usize>()
                            .map_err(|e| perr(&e.to_string()))?,
                    );
                }
                Some(_) => {
                    if fields.len() != 3 {
                        return Err(perr("expected `<source> <target> <weight>`"));
                    }
                    connections.push(Connection {
                        source: fields[0].parse().map_err(|_| perr("bad source id"))?,
                        target: fields[1].parse().map_err(|_| perr("bad target id"))?,
                        weight: fields[2].parse().map_err(|_| perr("bad weight"))?,
                    });
                }
            }
        }
        let hidden = hidden.ok_or(GenomeError::Parse {
            line: 0,
            message: "missing header".into(),
        })?;
        Genome::new(hidden, connections)
    }
}

/// Inputs are sources only; any node may feed a hidden or output node.
fn is_legal(hidden: usize, source: usize, target: usize) -> bool {
    let nodes = FIRST_HIDDEN + hidden;
    source < nodes && target >= INPUTS && target < nodes
}

fn legal_pair_count(hidden: usize) -> usize {
    (FIRST_HIDDEN + hidden) * (OUTPUTS + hidden)
}

fn pair_from_index(hidden: usize, i: usize) -> (usize, usize) {
    let targets = OUTPUTS + hidden;
    (i / targets, INPUTS + i % targets)
}

/// Samples a random controller: hidden count uniform on `0..=20`, connection
/// count uniform on `0..=min(40, legal pairs)`, distinct endpoints, weights
/// uniform on `[-2, 2]`.
pub fn random_genome<R: Rng + ?Sized>(rng: &mut R) -> Genome {
    let hidden = rng.random_range(0..=MAX_HIDDEN);
    let possible = legal_pair_count(hidden);
    let count = rng.random_range(0..=MAX_CONNECTIONS.min(possible));
    let mut picks = index::sample(rng, possible, count).into_vec();
    picks.sort_unstable();
    let connections = picks
        .into_iter()
        .map(|i| {
            let (source, target) = pair_from_index(hidden, i);
            Connection {
                source,
                target,
                weight: rng.random_range(-WEIGHT_BOUND..=WEIGHT_BOUND),
            }
        })
        .collect();
    Genome {
        hidden,
        connections,
    }
}

/// Per-operator probabilities for [`mutate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MutationParams {
    pub node_add: f64,
    pub node_delete: f64,
    pub connection_add: f64,
    pub connection_delete: f64,
    pub connection_modify: f64,
    pub weight: f64,
    pub eta: f64,
}

impl Default for MutationParams {
    fn default() -> Self {
        MutationParams {
            node_add: 0.10,
            node_delete: 0.10,
            connection_add: 0.15,
            connection_delete: 0.15,
            connection_modify: 0.15,
            weight: 0.05,
            eta: 15.0,
        }
    }
}

impl MutationParams {
    /// All operators disabled.
    pub fn none() -> Self {
        MutationParams {
            node_add: 0.0,
            node_delete: 0.0,
            connection_add: 0.0,
            connection_delete: 0.0,
            connection_modify: 0.0,
            weight: 0.0,
            eta: 15.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        let rates = [
            self.node_add,
            self.node_delete,
            self.connection_add,
            self.connection_delete,
            self.connection_modify,
            self.weight,
        ];
        rates.iter().all(|r| (0.0..=1.0).contains(r)) && self.eta > 0.0
    }
}

/// Which structural operators actually changed the genome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MutationReport {
    pub node_added: bool,
    pub node_deleted: bool,
    pub connection_added: bool,
    pub connection_deleted: bool,
    pub connection_modified: bool,
    pub weights_mutated: usize,
}

/// Bounded polynomial mutation of a single value.
pub fn polynomial_mutation<R: Rng + ?Sized>(
    value: f64,
    lower: f64,
    upper: f64,
    eta: f64,
    rng: &mut R,
) -> f64 {
    let span = upper - lower;
    if span <= 0.0 {
        return value;
    }
    let d1 = (value - lower) / span;
    let d2 = (upper - value) / span;
    let r: f64 = rng.random();
    let pow = 1.0 / (eta + 1.0);
    let dq = if r < 0.5 {
        let v = 2.0 * r + (1.0 - 2.0 * r) * (1.0 - d1).powf(eta + 1.0);
        v.powf(pow) - 1.0
    } else {
        let v = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - d2).powf(eta + 1.0);
        1.0 - v.powf(pow)
    };
    (value + dq * span).clamp(lower, upper)
}

/// Returns a mutated copy of `parent`; the parent is never modified.
pub fn mutate<R: Rng + ?Sized>(parent: &Genome, params: &MutationParams, rng: &mut R) -> Genome {
    mutate_traced(parent, params, rng).0
}

pub fn mutate_traced<R: Rng + ?Sized>(
    parent: &Genome,
    params: &MutationParams,
    rng: &mut R,
) -> (Genome, MutationReport) {
    let mut g = parent.clone();
    let mut report = MutationReport::default();

    if rng.random_bool(params.node_add) && g.hidden < MAX_HIDDEN {
        g.hidden += 1;
        report.node_added = true;
    }

    if rng.random_bool(params.node_delete) && g.hidden > 0 {
        let victim = FIRST_HIDDEN + rng.random_range(0..g.hidden);
        g.connections
            .retain(|c| c.source != victim && c.target != victim);
        for c in &mut g.connections {
            if c.source > victim {
                c.source -= 1;
            }
            if c.target > victim {
                c.target -= 1;
            }
        }
        g.hidden -= 1;
        report.node_deleted = true;
    }

    if rng.random_bool(params.connection_add) && g.connections.len() < MAX_CONNECTIONS {
        let free: Vec<usize> = (0..legal_pair_count(g.hidden))
            .filter(|&i| {
                let (s, t) = pair_from_index(g.hidden, i);
                !g.has_connection(s, t)
            })
            .collect();
        if !free.is_empty() {
            let (source, target) = pair_from_index(g.hidden, free[rng.random_range(0..free.len())]);
            g.connections.push(Connection {
                source,
                target,
                weight: rng.random_range(-WEIGHT_BOUND..=WEIGHT_BOUND),
            });
            report.connection_added = true;
        }
    }

    if rng.random_bool(params.connection_delete) && !g.connections.is_empty() {
        let i = rng.random_range(0..g.connections.len());
        g.connections.remove(i);
        report.connection_deleted = true;
    }

    if rng.random_bool(params.connection_modify) && !g.connections.is_empty() {
        let i = rng.random_range(0..g.connections.len());
        let Connection { source, target, .. } = g.connections[i];
        let change_source = rng.random_bool(0.5);
        let candidates: Vec<(usize, usize)> = if change_source {
            (0..g.node_count())
                .filter(|&s| s != source && !g.has_connection(s, target))
                .map(|s| (s, target))
                .collect()
        } else {
            (INPUTS..g.node_count())
                .filter(|&t| t != target && !g.has_connection(source, t))
                .map(|t| (source, t))
                .collect()
        };
        if !candidates.is_empty() {
            let (s, t) = candidates[rng.random_range(0..candidates.len())];
            g.connections[i].source = s;
            g.connections[i].target = t;
            report.connection_modified = true;
        }
    }

    for c in &mut g.connections {
        if rng.random_bool(params.weight) {
            c.weight = polynomial_mutation(c.weight, -WEIGHT_BOUND, WEIGHT_BOUND, params.eta, rng);
            report.weights_mutated += 1;
        }
    }

    debug_assert!(Genome::new(g.hidden, g.connections.clone()).is_ok());
    (g, report)
}

/// Previous-cycle activation of every non-input node.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    activations: Vec<f64>,
}

impl NetworkState {
    pub fn new(genome: &Genome) -> Self {
        NetworkState {
            activations: vec![0.0; genome.state_len()],
        }
    }

    pub fn activations(&self) -> &[f64] {
        &self.activations
    }

    pub fn reset(&mut self) {
        self.activations.iter_mut().for_each(|a| *a = 0.0);
    }
}

/// Maps a sensor activation in `[0, 1]` onto the network input range `[-1, 1]`.
#[inline]
pub fn scale_input(activation: f64) -> f64 {
    2.0 * activation - 1.0
}

/// One synchronous update. Input sources read the current inputs, every other
/// source reads its previous-cycle activation. Returns `(left, right)`.
pub fn forward(genome: &Genome, state: &mut NetworkState, inputs: &[f64; INPUTS]) -> (f64, f64) {
    // node ids index straight into [inputs | outputs | hidden]
    let mut values = [0.0f64; INPUTS + OUTPUTS + MAX_HIDDEN];
    values[..INPUTS].copy_from_slice(inputs);
    let n = state.activations.len();
    values[INPUTS..INPUTS + n].copy_from_slice(&state.activations);
    let mut sums = [0.0f64; OUTPUTS + MAX_HIDDEN];
    for c in &genome.connections {
        sums[c.target - INPUTS] += c.weight * values[c.source];
    }
    for (a, &s) in state.activations.iter_mut().zip(sums.iter()) {
        *a = tanh(s);
    }
    (state.activations[0], state.activations[1])
}

/// `tanh` through a single `exp`; within 4e-16 of the libm value.
#[inline]
pub fn tanh(x: f64) -> f64 {
    let e = (2.0 * x).exp();
    1.0 - 2.0 / (e + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use rand::RngCore;

    struct ZeroRng;
    impl RngCore for ZeroRng {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.fill(0)
        }
    }

    fn inputs_with(first: f64) -> [f64; INPUTS] {
        let mut x = [0.0; INPUTS];
        x[0] = first;
        x[BIAS_INPUT] = 1.0;
        x
    }

    #[test]
    fn minimum_draws_give_empty_genome() {
        let g = random_genome(&mut ZeroRng);
        assert_eq!(g.hidden(), 0);
        assert!(g.connections().is_empty());
    }

    #[test]
    fn random_genomes_satisfy_invariants() {
        let mut rng = rng_for(1, &[]);
        for _ in 0..2000 {
            let g = random_genome(&mut rng);
            assert!(Genome::new(g.hidden, g.connections.clone()).is_ok());
        }
    }

    #[test]
    fn random_weight_mean_is_near_zero() {
        let mut rng = rng_for(2, &[]);
        let mut weights = Vec::new();
        while weights.len() < 10_000 {
            let g = random_genome(&mut rng);
            weights.extend(g.connections().iter().map(|c| c.weight));
        }
        weights.truncate(10_000);
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn zero_rates_copy_exactly() {
        let mut rng = rng_for(3, &[]);
        let g = random_genome(&mut rng);
        let m = mutate(&g, &MutationParams::none(), &mut rng);
        assert_eq!(g, m);
    }

    #[test]
    fn polynomial_mutation_respects_upper_bound() {
        let mut rng = rng_for(4, &[]);
        for _ in 0..10_000 {
            let v = polynomial_mutation(2.0, -2.0, 2.0, 15.0, &mut rng);
            assert!((-2.0..=2.0).contains(&v));
        }
    }

    #[test]
    fn node_addition_frequency_matches_rate() {
        let mut rng = rng_for(5, &[]);
        let parent = Genome::new(
            5,
            vec![Connection {
                source: 0,
                target: 16,
                weight: 1.0,
            }],
        )
        .unwrap();
        let params = MutationParams::default();
        let added = (0..10_000)
            .filter(|_| mutate_traced(&parent, &params, &mut rng).1.node_added)
            .count();
        let freq = added as f64 / 10_000.0;
        assert!((freq - 0.10).abs() <= 0.01, "frequency {freq}");
    }

    #[test]
    fn mutation_leaves_parent_untouched() {
        let mut rng = rng_for(6, &[]);
        let parent = random_genome(&mut rng);
        let snapshot = parent.clone();
        for _ in 0..100 {
            let _ = mutate(&parent, &MutationParams::default(), &mut rng);
        }
        assert_eq!(parent, snapshot);
    }

    #[test]
    fn node_deletion_renumbers_higher_hidden_nodes() {
        let g = Genome::new(
            2,
            vec![
                Connection {
                    source: 18,
                    target: 16,
                    weight: 0.5,
                },
                Connection {
                    source: 19,
                    target: 17,
                    weight: -0.5,
                },
            ],
        )
        .unwrap();
        let params = MutationParams {
            node_delete: 1.0,
            ..MutationParams::none()
        };
        let mut rng = rng_for(7, &[]);
        let m = mutate(&g, &params, &mut rng);
        assert_eq!(m.hidden(), 1);
        assert_eq!(m.connections().len(), 1);
        assert_eq!(m.connections()[0].source, 18);
    }

    #[test]
    fn empty_network_outputs_zero() {
        let g = Genome::empty();
        let mut st = NetworkState::new(&g);
        assert_eq!(forward(&g, &mut st, &inputs_with(1.0)), (0.0, 0.0));
    }

    #[test]
    fn fast_tanh_matches_libm() {
        for i in -200_000..=200_000 {
            let x = i as f64 * 1e-4;
            assert!((tanh(x) - x.tanh()).abs() < 4e-16, "{x}");
        }
        assert_eq!(tanh(0.0), 0.0);
        assert_eq!(tanh(1e6), 1.0);
        assert_eq!(tanh(-1e6), -1.0);
    }

    #[test]
    fn single_connection_is_tanh_of_weighted_input() {
        let g = Genome::new(
            0,
            vec![Connection {
                source: 0,
                target: FIRST_OUTPUT,
                weight: 2.0,
            }],
        )
        .unwrap();
        let mut st = NetworkState::new(&g);
        let (l, r) = forward(&g, &mut st, &inputs_with(1.0));
        assert!((l - 2.0f64.tanh()).abs() < 1e-15);
        assert!((l - 0.9640).abs() < 1e-4);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn recurrent_source_reads_previous_cycle() {
        // input0 -> hidden18 -> output16: the output lags by one cycle
        let g = Genome::new(
            1,
            vec![
                Connection {
                    source: 0,
                    target: 18,
                    weight: 1.0,
                },
                Connection {
                    source: 18,
                    target: 16,
                    weight: 1.0,
                },
            ],
        )
        .unwrap();
        let mut st = NetworkState::new(&g);
        let (l0, _) = forward(&g, &mut st, &inputs_with(1.0));
        assert_eq!(l0, 0.0);
        let (l1, _) = forward(&g, &mut st, &inputs_with(1.0));
        assert!((l1 - 1.0f64.tanh().tanh()).abs() < 1e-15);
    }

    #[test]
    fn forward_is_pure_given_state() {
        let mut rng = rng_for(8, &[]);
        let g = random_genome(&mut rng);
        let x = inputs_with(0.3);
        let mut a = NetworkState::new(&g);
        let mut b = NetworkState::new(&g);
        assert_eq!(forward(&g, &mut a, &x), forward(&g, &mut b, &x));
        assert_eq!(a, b);
    }

    #[test]
    fn input_scaling_endpoints() {
        assert_eq!(scale_input(0.0), -1.0);
        assert_eq!(scale_input(1.0), 1.0);
        assert_eq!(scale_input(0.5), 0.0);
    }

    #[test]
    fn text_format_round_trips_bit_exactly() {
        let mut rng = rng_for(9, &[]);
        for _ in 0..200 {
            let g = random_genome(&mut rng);
            let back = Genome::from_text(&format!("# provenance\n{}", g.to_text())).unwrap();
            assert_eq!(g, back);
        }
    }

    #[test]
    fn parse_rejects_inputs_as_targets() {
        let err = Genome::from_text("hidden 0\n3 5 0.5\n").unwrap_err();
        assert!(matches!(err, GenomeError::IllegalConnection { .. }));
    }
}
