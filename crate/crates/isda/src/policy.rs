//! The parameterized mapping from a terminal's inner state to its contention
//! transmission probability: a one-hidden-layer ReLU network with a two-way
//! softmax output, flattened into a single parameter vector so the learner
//! can treat it as a point in R^L.

use crate::model::{InnerState, TerminalKind};
use crate::num::Real;

/// Network dimensions for one terminal. The output is always two logits;
/// component 0 of the softmax is the transmission probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

pub const OUTPUT_DIM: usize = 2;
pub const DEFAULT_HIDDEN_DIM: usize = 5;

impl NetShape {
    pub fn new(input_dim: usize, hidden_dim: usize) -> Self {
        Self { input_dim, hidden_dim, output_dim: OUTPUT_DIM }
    }

    /// Input dimension follows the terminal's state vector: (a, h), (d, e)
    /// or (q).
    pub fn for_kind(kind: TerminalKind, hidden_dim: usize) -> Self {
        let input_dim = match kind {
            TerminalKind::Aoi | TerminalKind::IdtEh => 2,
            TerminalKind::Queue => 1,
        };
        Self::new(input_dim, hidden_dim)
    }

    /// Flat parameter count: hidden weights + hidden biases + output weights
    /// + output biases.
    pub fn param_count(&self) -> usize {
        self.hidden_dim * self.input_dim
            + self.hidden_dim
            + self.output_dim * self.hidden_dim
            + self.output_dim
    }
}

/// Flat parameter vector laid out as [W1 row-major, b1, W2 row-major, b2].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<F: Real> {
    pub values: Vec<F>,
}

impl<F: Real> PolicyParams<F> {
    pub fn new(values: Vec<F>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("parameter vector has length {got}, shape requires {want}")]
    ParamLength { got: usize, want: usize },
    #[error("input vector has length {got}, shape requires {want}")]
    InputLength { got: usize, want: usize },
}

/// Scale the inner state down to the network input vector. An empty AoI
/// buffer encodes as a = 0.
pub fn encode_state<F: Real>(s: &InnerState, norm: F) -> Vec<F> {
    debug_assert!(norm > F::zero());
    match s {
        InnerState::Aoi(s) => vec![
            F::from_u32_(s.buffered_age.unwrap_or(0)) / norm,
            F::from_u32_(s.destination_aoi) / norm,
        ],
        InnerState::IdtEh(s) => vec![
            F::from_u32_(s.elapsed_since_delivery) / norm,
            F::from_u32_(s.energy_level) / norm,
        ],
        InnerState::Queue(s) => vec![F::from_u32_(s.queue_length) / norm],
    }
}

/// Evaluate the network: ReLU hidden layer, two-logit softmax output, and
/// return the probability assigned to "transmit".
pub fn forward<F: Real>(
    shape: &NetShape,
    params: &PolicyParams<F>,
    x: &[F],
) -> Result<F, PolicyError> {
    if params.len() != shape.param_count() {
        return Err(PolicyError::ParamLength { got: params.len(), want: shape.param_count() });
    }
    if x.len() != shape.input_dim {
        return Err(PolicyError::InputLength { got: x.len(), want: shape.input_dim });
    }
    let w = &params.values;
    let (ni, nh, no) = (shape.input_dim, shape.hidden_dim, shape.output_dim);
    let w1 = &w[..nh * ni];
    let b1 = &w[nh * ni..nh * ni + nh];
    let w2 = &w[nh * ni + nh..nh * ni + nh + no * nh];
    let b2 = &w[nh * ni + nh + no * nh..];

    let mut hidden = vec![F::zero(); nh];
    for (j, h) in hidden.iter_mut().enumerate() {
        let mut acc = b1[j];
        for (i, &xi) in x.iter().enumerate() {
            acc = acc + w1[j * ni + i] * xi;
        }
        *h = acc.max(F::zero());
    }

    let mut logits = [F::zero(); OUTPUT_DIM];
    for (k, l) in logits.iter_mut().enumerate() {
        let mut acc = b2[k];
        for (j, &hj) in hidden.iter().enumerate() {
            acc = acc + w2[k * nh + j] * hj;
        }
        *l = acc;
    }

    // Softmax over two logits with max-subtraction for stability.
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    Ok(e0 / (e0 + e1))
}

/// One neural policy per terminal, evaluated on the shared normalization
/// constant. Validates every parameter vector length at construction.
#[derive(Debug, Clone)]
pub struct NnPolicyBundle<F: Real> {
    shapes: Vec<NetShape>,
    params: Vec<PolicyParams<F>>,
    norm: F,
}

impl<F: Real> NnPolicyBundle<F> {
    pub fn new(
        kinds: &[TerminalKind],
        hidden_dim: usize,
        norm: F,
        params: Vec<PolicyParams<F>>,
    ) -> Result<Self, crate::mac::MacError> {
        let shapes: Vec<NetShape> = kinds
            .iter()
            .map(|&k| NetShape::for_kind(k, hidden_dim))
            .collect();
        if params.len() != shapes.len() {
            return Err(crate::mac::MacError::LengthMismatch {
                left: params.len(),
                right: shapes.len(),
            });
        }
        for (i, (shape, p)) in shapes.iter().zip(&params).enumerate() {
            if p.len() != shape.param_count() {
                return Err(crate::mac::MacError::ParamLength {
                    terminal: i,
                    got: p.len(),
                    want: shape.param_count(),
                });
            }
        }
        Ok(Self { shapes, params, norm })
    }

    pub fn shapes(&self) -> &[NetShape] {
        &self.shapes
    }
}

impl<F: Real> crate::mac::TransmitPolicy<F> for NnPolicyBundle<F> {
    fn prob(&self, terminal: usize, state: &InnerState) -> F {
        let x = encode_state(state, self.norm);
        forward(&self.shapes[terminal], &self.params[terminal], &x)
            .expect("lengths validated at construction")
    }
}
