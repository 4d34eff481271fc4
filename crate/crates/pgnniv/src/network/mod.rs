//! Network construction, penalty-encoded physical constraints, and the
//! training loop.
//!
//! A [`NetworkSpec`] declares dense layers, optional model layers wired to
//! the pipe head-loss formulas with trainable physical coefficients, and
//! which layers are predefined internal layers (PILs). [`build_network`]
//! allocates and seeds every parameter; [`Network::train`] minimizes
//! `OF = MSE + PEN` with plain gradient descent, where `PEN` sums the
//! registered constraints' weighted squared residuals.
//!
//! A [`Network`] is exclusively owned by one training run; independent runs
//! may proceed in parallel with independent networks.

pub mod checkpoint;
pub mod constraints;

pub use constraints::{Constraint, ConstraintKind, InputAffine};

use crate::autodiff::{sgd_step, Gradients, Matrix, NodeId, Param, ParamStore, Tape, TapeError};
use crate::hydraulics::{hydraulic_diameter, PipeParams, HW_ALPHA, HW_BETA, HW_LAMBDA};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("layer {layer}: {reason}")]
    Config { layer: usize, reason: String },
    #[error("constraint {constraint}: unknown layer reference {layer}")]
    UnknownLayerRef { constraint: String, layer: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("input has {got} columns, the network expects {expected}")]
    InputWidth { got: usize, expected: usize },
    #[error("target has {got} columns, the network produces {expected}")]
    TargetWidth { got: usize, expected: usize },
    #[error("network has no model layer; physical parameters are undefined")]
    NotModelBased,
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("checkpoint line {line}: {reason}")]
    CheckpointFormat { line: usize, reason: String },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

/// Training failures. Divergence carries the iteration that tripped the
/// guard so mis-tuned runs fail loudly and diagnosably.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("objective diverged at iteration {iteration}: OF = {of}")]
    Diverged { iteration: usize, of: f64 },
    #[error("numerical failure at iteration {iteration}: {source}")]
    Numerics {
        iteration: usize,
        source: NetworkError,
    },
    #[error(transparent)]
    Setup(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

/// Constants a model layer needs: the pipe geometry it assumes known, plus
/// one plausible-magnitude scale per trainable coefficient. Trainable values
/// are stored as order-one multiples of their scale so plain gradient
/// descent conditions them uniformly; the physical value is `raw * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelGeometry {
    pub sigma1: f64,
    pub sigma2: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub rho: f64,
    pub g: f64,
    pub lambda_scales: [f64; 3],
}

impl ModelGeometry {
    /// Scales for the distributed-loss coefficients assuming the geometry is
    /// known and roughness is of order 100, the standard range.
    pub fn hazen_williams(p: &PipeParams) -> Self {
        let phi1 = hydraulic_diameter(p.sigma1).expect("positive area");
        let phi2 = hydraulic_diameter(p.sigma2).expect("positive area");
        let nominal_kappa: f64 = 100.0;
        Self {
            sigma1: p.sigma1,
            sigma2: p.sigma2,
            delta1: p.delta1,
            delta2: p.delta2,
            rho: p.rho,
            g: p.g,
            lambda_scales: [
                1.0,
                HW_LAMBDA * phi1.powf(HW_BETA) * nominal_kappa.powf(-HW_ALPHA),
                HW_LAMBDA * phi2.powf(HW_BETA) * nominal_kappa.powf(-HW_ALPHA),
            ],
        }
    }

    /// Scales for the laminar friction coefficients `nu / phi_i^2` with the
    /// fluid's nominal kinematic viscosity.
    pub fn darcy_weisbach(p: &PipeParams) -> Self {
        let phi1 = hydraulic_diameter(p.sigma1).expect("positive area");
        let phi2 = hydraulic_diameter(p.sigma2).expect("positive area");
        Self {
            sigma1: p.sigma1,
            sigma2: p.sigma2,
            delta1: p.delta1,
            delta2: p.delta2,
            rho: p.rho,
            g: p.g,
            lambda_scales: [1.0, p.nu / (phi1 * phi1), p.nu / (phi2 * phi2)],
        }
    }
}

/// Physical coefficients that make a Hazen-Williams model layer reproduce
/// the generating pipe exactly: `(xi, lam phi1^beta / kappa1^alpha,
/// lam phi2^beta / kappa2^alpha)`.
pub fn true_hazen_williams_lambdas(p: &PipeParams) -> [f64; 3] {
    let phi1 = hydraulic_diameter(p.sigma1).expect("positive area");
    let phi2 = hydraulic_diameter(p.sigma2).expect("positive area");
    [
        p.xi,
        HW_LAMBDA * phi1.powf(HW_BETA) * p.kappa1.powf(-HW_ALPHA),
        HW_LAMBDA * phi2.powf(HW_BETA) * p.kappa2.powf(-HW_ALPHA),
    ]
}

/// Nominal coefficients of the laminar Darcy-Weisbach layer:
/// `(xi, nu / phi1^2, nu / phi2^2)`.
pub fn true_darcy_weisbach_lambdas(p: &PipeParams) -> [f64; 3] {
    let phi1 = hydraulic_diameter(p.sigma1).expect("positive area");
    let phi2 = hydraulic_diameter(p.sigma2).expect("positive area");
    [p.xi, p.nu / (phi1 * phi1), p.nu / (phi2 * phi2)]
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Fully connected layer. `positive_init` draws the weights from
    /// `(0, a]` instead of `[-a, a]`, used for layers whose outputs feed a
    /// fractional power or a ReLU PIL and must start positive.
    Dense {
        size: usize,
        activation: Activation,
        positive_init: bool,
    },
    /// `(v0, v1, v2) -> (dp1, dpe, dp2)` via the Hazen-Williams and
    /// Borda-Carnot forms with trainable `(lambda1, lambda2, lambda3)`.
    HazenWilliams(ModelGeometry),
    /// Same wiring with the laminar Darcy-Weisbach distributed losses.
    DarcyWeisbach(ModelGeometry),
    /// Fixed bilinear output `dp = l1 * w1 + l2 * w2`, the lengths taken
    /// from the given input columns. No trainable parameters.
    LengthWeightedSum { length_cols: (usize, usize) },
}

impl LayerSpec {
    pub fn dense(size: usize, activation: Activation) -> Self {
        LayerSpec::Dense { size, activation, positive_init: false }
    }

    pub fn dense_positive(size: usize, activation: Activation) -> Self {
        LayerSpec::Dense { size, activation, positive_init: true }
    }

    fn output_size(&self, input_size: usize) -> usize {
        match self {
            LayerSpec::Dense { size, .. } => *size,
            LayerSpec::HazenWilliams(_) | LayerSpec::DarcyWeisbach(_) => 3,
            LayerSpec::LengthWeightedSum { .. } => {
                let _ = input_size;
                1
            }
        }
    }
}

/// Declarative description of a network: layer stack, PIL markers, and
/// (via model layers) the trainable physical coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
    /// Indices into `layers` whose values carry physical meaning and may be
    /// read out by `predict`.
    pub pil_layers: Vec<usize>,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.layers.is_empty() {
            return Err(NetworkError::Config { layer: 0, reason: "no layers declared".into() });
        }
        if self.input_size == 0 {
            return Err(NetworkError::Config { layer: 0, reason: "input size is zero".into() });
        }
        let mut width = self.input_size;
        let mut model_layers = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Dense { size, .. } => {
                    if *size == 0 {
                        return Err(NetworkError::Config {
                            layer: i,
                            reason: "dense layer of zero neurons".into(),
                        });
                    }
                }
                LayerSpec::HazenWilliams(_) | LayerSpec::DarcyWeisbach(_) => {
                    model_layers += 1;
                    if width != 3 {
                        return Err(NetworkError::Config {
                            layer: i,
                            reason: format!(
                                "model layer expects 3 velocity neurons upstream, found {width}"
                            ),
                        });
                    }
                }
                LayerSpec::LengthWeightedSum { length_cols } => {
                    if width != 2 {
                        return Err(NetworkError::Config {
                            layer: i,
                            reason: format!(
                                "length-weighted sum expects 2 gradient neurons upstream, found {width}"
                            ),
                        });
                    }
                    if length_cols.0 >= self.input_size || length_cols.1 >= self.input_size {
                        return Err(NetworkError::Config {
                            layer: i,
                            reason: format!(
                                "length columns {length_cols:?} outside the input of width {}",
                                self.input_size
                            ),
                        });
                    }
                }
            }
            width = layer.output_size(width);
        }
        if model_layers > 1 {
            return Err(NetworkError::Config {
                layer: 0,
                reason: "more than one model layer".into(),
            });
        }
        for &pil in &self.pil_layers {
            if pil >= self.layers.len() {
                return Err(NetworkError::Config {
                    layer: pil,
                    reason: "PIL marker outside the layer stack".into(),
                });
            }
        }
        Ok(())
    }

    pub fn output_size(&self) -> usize {
        let mut width = self.input_size;
        for layer in &self.layers {
            width = layer.output_size(width);
        }
        width
    }

    fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.layers.len());
        let mut width = self.input_size;
        for layer in &self.layers {
            width = layer.output_size(width);
            sizes.push(width);
        }
        sizes
    }

    pub fn is_model_based(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, LayerSpec::HazenWilliams(_) | LayerSpec::DarcyWeisbach(_)))
    }
}

/// A minibatch (or whole set): inputs, targets, and auxiliary measured
/// columns that constraints may reference (e.g. a measured total drop).
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Matrix,
    pub targets: Matrix,
    pub aux: Matrix,
}

impl Batch {
    pub fn new(inputs: Matrix, targets: Matrix) -> Self {
        let rows = inputs.nrows();
        Self { inputs, targets, aux: Matrix::zeros((rows, 0)) }
    }

    pub fn with_aux(inputs: Matrix, targets: Matrix, aux: Matrix) -> Self {
        Self { inputs, targets, aux }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Batch {
        let pick = |m: &Matrix| {
            let mut out = Matrix::zeros((rows.len(), m.ncols()));
            for (k, &r) in rows.iter().enumerate() {
                out.row_mut(k).assign(&m.row(r));
            }
            out
        };
        Batch { inputs: pick(&self.inputs), targets: pick(&self.targets), aux: pick(&self.aux) }
    }
}

/// Node handles produced by one forward evaluation.
pub struct ForwardPass {
    pub input: NodeId,
    /// Post-activation node of every layer, aligned with `spec.layers`.
    pub layers: Vec<NodeId>,
    pub output: NodeId,
    /// Tape placement of every trainable parameter.
    pub params: BTreeMap<String, NodeId>,
}

/// Gradient-descent hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct Hyper {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seed of the batch sampler (network initialization has its own seed).
    pub seed: u64,
    /// Record every k-th iteration (and always the last); 1 keeps the full
    /// trace, larger values thin very long runs.
    pub trace_every: usize,
}

impl Hyper {
    pub fn new(iterations: usize, batch_size: usize, learning_rate: f64, seed: u64) -> Self {
        Self { iterations, batch_size, learning_rate, seed, trace_every: 1 }
    }

    pub fn thinned(mut self, trace_every: usize) -> Self {
        self.trace_every = trace_every.max(1);
        self
    }
}

/// Loss values at one evaluation. `of == mse + pen` exactly: the objective
/// node is literally the sum of the two loss nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub mse: f64,
    pub pen: f64,
    pub of: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub mse: f64,
    pub pen: f64,
    pub of: f64,
}

/// Per-iteration loss history of one training run.
#[derive(Debug, Clone, Default)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
    /// Loss over the whole training set at the final parameters.
    pub final_full_loss: Option<LossBreakdown>,
}

/// Guard threshold: training aborts once OF exceeds this or stops being
/// finite, so beta/p mis-tuning fails loudly.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// A buildable, trainable network with its registered constraints.
#[derive(Debug)]
pub struct Network {
    spec: NetworkSpec,
    params: ParamStore,
    constraints: Vec<Constraint>,
}

/// Allocates and initializes all parameters of `spec`.
///
/// Dense weights draw from the uniform range `[-a, a]` with
/// `a = sqrt(6 / (fan_in + fan_out))` (positive-init layers from `(0, a]`),
/// biases start at zero, and model-layer coefficients draw from `(0, 1]`
/// before scaling. All randomness flows from the single `seed`.
pub fn build_network(spec: NetworkSpec, seed: u64) -> Result<Network, NetworkError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    let mut fan_in = spec.input_size;
    for (i, layer) in spec.layers.iter().enumerate() {
        match layer {
            LayerSpec::Dense { size, positive_init, .. } => {
                let a = (6.0 / (fan_in + size) as f64).sqrt();
                // Positive weights do not cancel, so their sums grow with
                // fan-in; the tighter bound keeps activations at input
                // scale and leaves every ReLU unit alive.
                let a_pos = 0.5 / fan_in as f64;
                let w = Matrix::from_shape_fn((fan_in, *size), |_| {
                    if *positive_init {
                        a_pos * (1.0 - rng.random::<f64>())
                    } else {
                        rng.random_range(-a..=a)
                    }
                });
                params.insert(Param::new(format!("w{}", i + 1), w));
                params.insert(Param::new(format!("b{}", i + 1), Matrix::zeros((1, *size))));
            }
            LayerSpec::HazenWilliams(_) | LayerSpec::DarcyWeisbach(_) => {
                for name in ["lambda1", "lambda2", "lambda3"] {
                    let raw = 1.0 - rng.random::<f64>(); // (0, 1]
                    params.insert(Param::new(name, Matrix::from_elem((1, 1), raw)));
                }
            }
            LayerSpec::LengthWeightedSum { .. } => {}
        }
        fan_in = layer.output_size(fan_in);
    }
    Ok(Network { spec, params, constraints: Vec::new() })
}

impl Network {
    pub fn from_parts(spec: NetworkSpec, params: ParamStore) -> Result<Self, NetworkError> {
        spec.validate()?;
        Ok(Self { spec, params, constraints: Vec::new() })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Attaches a constraint to the penalty term. Registering none leaves a
    /// classical network; a zero-weight constraint is skipped entirely at
    /// loss time, so the zero-weight twin follows the identical trajectory.
    pub fn register_constraint(&mut self, constraint: Constraint) -> Result<(), NetworkError> {
        for &layer in constraint.layer_refs() {
            if layer >= self.spec.layers.len() {
                return Err(NetworkError::UnknownLayerRef {
                    constraint: constraint.id().to_string(),
                    layer,
                });
            }
        }
        self.constraints.push(constraint);
        Ok(())
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Rescales every registered penalty weight, `0.0` producing the
    /// unconstrained twin.
    pub fn scale_penalties(&mut self, factor: f64) {
        for c in &mut self.constraints {
            c.scale_weight(factor);
        }
    }

    /// Forward evaluation on an existing tape. `input` must already be a
    /// node of width `spec.input_size`.
    pub fn forward_on_tape(&self, tape: &mut Tape, input: NodeId) -> Result<ForwardPass, NetworkError> {
        let got = tape.value(input).ncols();
        if got != self.spec.input_size {
            return Err(NetworkError::InputWidth { got, expected: self.spec.input_size });
        }
        let mut placed = BTreeMap::new();
        let mut current = input;
        let mut layers = Vec::with_capacity(self.spec.layers.len());
        for (i, layer) in self.spec.layers.iter().enumerate() {
            current = match layer {
                LayerSpec::Dense { activation, .. } => {
                    let w = self.place_param(tape, &mut placed, &format!("w{}", i + 1));
                    let b = self.place_param(tape, &mut placed, &format!("b{}", i + 1));
                    let z = tape.matmul(current, w)?;
                    let z = tape.add_bias(z, b)?;
                    match activation {
                        Activation::Linear => z,
                        Activation::Relu => tape.relu(z),
                    }
                }
                LayerSpec::HazenWilliams(geom) => {
                    self.model_layer_forward(tape, &mut placed, current, geom, ModelKind::HazenWilliams)?
                }
                LayerSpec::DarcyWeisbach(geom) => {
                    self.model_layer_forward(tape, &mut placed, current, geom, ModelKind::DarcyWeisbach)?
                }
                LayerSpec::LengthWeightedSum { length_cols } => {
                    let w1 = tape.col(current, 0)?;
                    let w2 = tape.col(current, 1)?;
                    let l1 = tape.col(input, length_cols.0)?;
                    let l2 = tape.col(input, length_cols.1)?;
                    let t1 = tape.mul(w1, l1)?;
                    let t2 = tape.mul(w2, l2)?;
                    tape.add(t1, t2)?
                }
            };
            layers.push(current);
        }
        Ok(ForwardPass { input, layers, output: current, params: placed })
    }

    fn place_param(&self, tape: &mut Tape, placed: &mut BTreeMap<String, NodeId>, name: &str) -> NodeId {
        let param = self.params.get(name).expect("param allocated at build time");
        let node = tape.param(param);
        placed.insert(name.to_string(), node);
        node
    }

    fn model_layer_forward(
        &self,
        tape: &mut Tape,
        placed: &mut BTreeMap<String, NodeId>,
        velocities: NodeId,
        geom: &ModelGeometry,
        kind: ModelKind,
    ) -> Result<NodeId, NetworkError> {
        let v1 = tape.col(velocities, 1)?;
        let v2 = tape.col(velocities, 2)?;
        let raw = [
            self.place_param(tape, placed, "lambda1"),
            self.place_param(tape, placed, "lambda2"),
            self.place_param(tape, placed, "lambda3"),
        ];
        let lam1 = tape.affine(raw[0], geom.lambda_scales[0], 0.0);
        let lam2 = tape.affine(raw[1], geom.lambda_scales[1], 0.0);
        let lam3 = tape.affine(raw[2], geom.lambda_scales[2], 0.0);
        let gamma = geom.rho * geom.g;

        let (dp1, dp2) = match kind {
            ModelKind::HazenWilliams => {
                // dp_i = gamma * lambda_i * (v_i sigma_i)^alpha * delta_i
                let q1 = tape.scale(v1, geom.sigma1);
                let q1a = tape.pow_scalar(q1, HW_ALPHA)?;
                let q1l = tape.mul_scalar(q1a, lam2)?;
                let dp1 = tape.scale(q1l, gamma * geom.delta1);
                let q2 = tape.scale(v2, geom.sigma2);
                let q2a = tape.pow_scalar(q2, HW_ALPHA)?;
                let q2l = tape.mul_scalar(q2a, lam3)?;
                let dp2 = tape.scale(q2l, gamma * geom.delta2);
                (dp1, dp2)
            }
            ModelKind::DarcyWeisbach => {
                // Laminar regime: dp_i = 32 rho * lambda_i * v_i * delta_i
                // with lambda_i = nu / phi_i^2 at the nominal viscosity.
                let t1 = tape.mul_scalar(v1, lam2)?;
                let dp1 = tape.scale(t1, 32.0 * geom.rho * geom.delta1);
                let t2 = tape.mul_scalar(v2, lam3)?;
                let dp2 = tape.scale(t2, 32.0 * geom.rho * geom.delta2);
                (dp1, dp2)
            }
        };

        // dpe = rho/2 * [(v2^2 - v1^2) + lambda1 (v2 - v1)^2]
        let v1sq = tape.square(v1);
        let v2sq = tape.square(v2);
        let diff = tape.sub(v2sq, v1sq)?;
        let d = tape.sub(v2, v1)?;
        let dsq = tape.square(d);
        let eddy = tape.mul_scalar(dsq, lam1)?;
        let inner = tape.add(diff, eddy)?;
        let dpe = tape.scale(inner, 0.5 * geom.rho);

        Ok(tape.concat_cols(&[dp1, dpe, dp2])?)
    }

    /// Assembles `MSE`, `PEN`, and `OF = MSE + PEN` nodes for `batch`.
    /// Zero-weight constraints contribute nothing and are not evaluated.
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape,
        batch: &Batch,
    ) -> Result<(LossNodes, ForwardPass), NetworkError> {
        if batch.is_empty() {
            return Err(NetworkError::EmptyBatch);
        }
        let expected = self.spec.output_size();
        if batch.targets.ncols() != expected {
            return Err(NetworkError::TargetWidth { got: batch.targets.ncols(), expected });
        }
        let n = batch.len() as f64;
        let input = tape.constant(batch.inputs.clone());
        let pass = self.forward_on_tape(tape, input)?;
        let targets = tape.constant(batch.targets.clone());
        let diff = tape.sub(pass.output, targets)?;
        let sq = tape.square(diff);
        let ssq = tape.sum(sq);
        let mse = tape.scale(ssq, 1.0 / n);

        let mut pen: Option<NodeId> = None;
        for constraint in &self.constraints {
            if constraint.weight() == 0.0 {
                continue;
            }
            for part in constraint.residual_nodes(tape, &pass, batch)? {
                let part = match constraint.kind() {
                    ConstraintKind::Equality => part,
                    ConstraintKind::Inequality => tape.relu(part),
                };
                let rows = tape.value(part).nrows() as f64;
                let sq = tape.square(part);
                let ssq = tape.sum(sq);
                let term = tape.scale(ssq, constraint.weight() / rows);
                pen = Some(match pen {
                    None => term,
                    Some(acc) => tape.add(acc, term)?,
                });
            }
        }
        let of = match pen {
            None => mse,
            Some(p) => tape.add(mse, p)?,
        };
        Ok((LossNodes { mse, pen, of }, pass))
    }

    /// Loss values on `batch` (fresh tape).
    pub fn loss(&self, batch: &Batch) -> Result<LossBreakdown, NetworkError> {
        let mut tape = Tape::new();
        let (nodes, _) = self.loss_on_tape(&mut tape, batch)?;
        Ok(nodes.values(&tape))
    }

    /// Runs `hyper.iterations` steps of minibatch gradient descent,
    /// recording `(MSE, PEN, OF)` at every iteration (values at the
    /// pre-step parameters).
    ///
    /// Batches are drawn uniformly with replacement; a batch size at or
    /// above the set size evaluates the whole set each step.
    pub fn train(&mut self, data: &Batch, hyper: &Hyper) -> Result<TrainingTrace, TrainError> {
        if data.is_empty() {
            return Err(TrainError::Setup(NetworkError::EmptyBatch));
        }
        assert!(hyper.iterations > 0, "iterations must be positive");
        assert!(hyper.batch_size > 0, "batch_size must be positive");
        assert!(hyper.learning_rate > 0.0, "learning_rate must be positive");
        assert!(hyper.trace_every > 0, "trace_every must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let full_batch = hyper.batch_size >= data.len();
        let mut trace = TrainingTrace::default();
        trace.records.reserve(hyper.iterations / hyper.trace_every + 1);
        let mut indices = vec![0usize; hyper.batch_size];
        for iteration in 1..=hyper.iterations {
            let batch = if full_batch {
                data.clone()
            } else {
                for slot in &mut indices {
                    *slot = rng.random_range(0..data.len());
                }
                data.select(&indices)
            };
            let step = self.step(&batch, hyper.learning_rate);
            let values = match step {
                Ok(v) => v,
                Err(source) => return Err(TrainError::Numerics { iteration, source }),
            };
            if !values.of.is_finite() || values.of > DIVERGENCE_GUARD {
                return Err(TrainError::Diverged { iteration, of: values.of });
            }
            if iteration % hyper.trace_every == 0 || iteration == hyper.iterations {
                trace.records.push(TraceRecord {
                    iteration,
                    mse: values.mse,
                    pen: values.pen,
                    of: values.of,
                });
            }
        }
        trace.final_full_loss = Some(self.loss(data)?);
        Ok(trace)
    }

    fn step(&mut self, batch: &Batch, learning_rate: f64) -> Result<LossBreakdown, NetworkError> {
        let mut tape = Tape::new();
        let (nodes, _) = self.loss_on_tape(&mut tape, batch)?;
        let values = nodes.values(&tape);
        if !values.of.is_finite() || values.of > DIVERGENCE_GUARD {
            // Let the caller report the iteration; parameters stay as they
            // were when the objective blew up.
            return Ok(values);
        }
        let grads: Gradients = tape.backward(nodes.of)?;
        sgd_step(&mut self.params, &grads, learning_rate);
        Ok(values)
    }

    /// Forward pass returning the outputs and the value of every PIL layer.
    pub fn predict(&self, inputs: &Matrix) -> Result<Prediction, NetworkError> {
        if inputs.ncols() != self.spec.input_size {
            return Err(NetworkError::InputWidth {
                got: inputs.ncols(),
                expected: self.spec.input_size,
            });
        }
        let mut tape = Tape::new();
        let input = tape.constant(inputs.clone());
        let pass = self.forward_on_tape(&mut tape, input)?;
        let outputs = tape.value(pass.output).clone();
        let pil_values = self
            .spec
            .pil_layers
            .iter()
            .map(|&layer| (layer, tape.value(pass.layers[layer]).clone()))
            .collect();
        Ok(Prediction { outputs, pil_values })
    }

    /// Current values of the trainable physical coefficients, in physical
    /// units (raw value times its declared scale).
    pub fn extract_parameters(&self) -> Result<Vec<(String, f64)>, NetworkError> {
        let scales = self.model_scales().ok_or(NetworkError::NotModelBased)?;
        Ok(["lambda1", "lambda2", "lambda3"]
            .iter()
            .zip(scales)
            .map(|(name, scale)| {
                let raw = self.params.get(name).expect("model params allocated").value()[(0, 0)];
                (name.to_string(), raw * scale)
            })
            .collect())
    }

    /// Overwrites the physical coefficients (in physical units).
    pub fn set_physical_parameters(&mut self, values: [f64; 3]) -> Result<(), NetworkError> {
        let scales = self.model_scales().ok_or(NetworkError::NotModelBased)?;
        for ((name, value), scale) in ["lambda1", "lambda2", "lambda3"].iter().zip(values).zip(scales) {
            let param = self.params.get_mut(name).expect("model params allocated");
            param.set_value(Matrix::from_elem((1, 1), value / scale));
        }
        Ok(())
    }

    fn model_scales(&self) -> Option<[f64; 3]> {
        self.spec.layers.iter().find_map(|l| match l {
            LayerSpec::HazenWilliams(g) | LayerSpec::DarcyWeisbach(g) => Some(g.lambda_scales),
            _ => None,
        })
    }

    /// Samples the trained maps: one row per probe input, columns are the
    /// inputs, every PIL neuron, then the outputs.
    pub fn export_state_relation(&self, probe_inputs: &Matrix) -> Result<StateRelation, NetworkError> {
        let sizes = self.spec.layer_sizes();
        let mut header: Vec<String> =
            (0..self.spec.input_size).map(|j| format!("in{j}")).collect();
        for &pil in &self.spec.pil_layers {
            for j in 0..sizes[pil] {
                header.push(format!("pil{pil}_{j}"));
            }
        }
        for j in 0..self.spec.output_size() {
            header.push(format!("out{j}"));
        }
        let mut rows = Matrix::zeros((probe_inputs.nrows(), header.len()));
        if probe_inputs.nrows() > 0 {
            let prediction = self.predict(probe_inputs)?;
            let mut col = 0;
            for j in 0..probe_inputs.ncols() {
                rows.column_mut(col).assign(&probe_inputs.column(j));
                col += 1;
            }
            for (_, values) in &prediction.pil_values {
                for j in 0..values.ncols() {
                    rows.column_mut(col).assign(&values.column(j));
                    col += 1;
                }
            }
            for j in 0..prediction.outputs.ncols() {
                rows.column_mut(col).assign(&prediction.outputs.column(j));
                col += 1;
            }
        }
        Ok(StateRelation { header, rows })
    }
}

#[derive(Debug, Clone, Copy)]
enum ModelKind {
    HazenWilliams,
    DarcyWeisbach,
}

/// Loss node handles on a tape, for callers that need the graph (training,
/// gradient checks) rather than just the values.
pub struct LossNodes {
    pub mse: NodeId,
    pub pen: Option<NodeId>,
    pub of: NodeId,
}

impl LossNodes {
    pub fn values(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            mse: tape.scalar(self.mse),
            pen: self.pen.map(|p| tape.scalar(p)).unwrap_or(0.0),
            of: tape.scalar(self.of),
        }
    }
}

/// Output of [`Network::predict`].
#[derive(Debug, Clone)]
pub struct Prediction {
    pub outputs: Matrix,
    /// `(layer index, values)` for every declared PIL.
    pub pil_values: Vec<(usize, Matrix)>,
}

/// Probe table from [`Network::export_state_relation`].
#[derive(Debug, Clone)]
pub struct StateRelation {
    pub header: Vec<String>,
    pub rows: Matrix,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydraulics::segment_pressure_drops;
    use ndarray::array;

    fn prediction_spec() -> NetworkSpec {
        NetworkSpec {
            input_size: 1,
            layers: vec![
                LayerSpec::dense(3, Activation::Linear),
                LayerSpec::dense(15, Activation::Linear),
                LayerSpec::dense(15, Activation::Relu),
                LayerSpec::dense(1, Activation::Linear),
            ],
            pil_layers: vec![0],
        }
    }

    fn model_based_spec(kind: &str) -> NetworkSpec {
        let pipe = PipeParams::fixed_geometry();
        let layer = match kind {
            "hw" => LayerSpec::HazenWilliams(ModelGeometry::hazen_williams(&pipe)),
            _ => LayerSpec::DarcyWeisbach(ModelGeometry::darcy_weisbach(&pipe)),
        };
        NetworkSpec {
            input_size: 1,
            layers: vec![LayerSpec::dense_positive(3, Activation::Linear), layer],
            pil_layers: vec![0],
        }
    }

    #[test]
    fn prediction_net_allocates_expected_shapes() {
        let net = build_network(prediction_spec(), 1).unwrap();
        let shapes: Vec<_> = ["w1", "w2", "w3", "w4"]
            .iter()
            .map(|n| net.params().get(n).unwrap().shape())
            .collect();
        assert_eq!(shapes, vec![(1, 3), (3, 15), (15, 15), (15, 1)]);
        assert_eq!(net.params().get("b3").unwrap().shape(), (1, 15));
    }

    #[test]
    fn deep_box_spec_builds() {
        let mut layers = vec![LayerSpec::dense(4, Activation::Linear)];
        for size in [20, 40, 80, 40, 20] {
            layers.push(LayerSpec::dense(size, Activation::Relu));
        }
        layers.push(LayerSpec::dense(2, Activation::Linear));
        let spec = NetworkSpec { input_size: 4, layers, pil_layers: vec![0] };
        let net = build_network(spec, 3).unwrap();
        assert_eq!(net.params().get("w3").unwrap().shape(), (20, 40));
        assert_eq!(net.spec().output_size(), 2);
    }

    #[test]
    fn model_based_spec_allocates_lambdas() {
        let net = build_network(model_based_spec("hw"), 9).unwrap();
        for name in ["lambda1", "lambda2", "lambda3"] {
            let raw = net.params().get(name).unwrap().value()[(0, 0)];
            assert!(raw > 0.0 && raw <= 1.0, "{name} raw init {raw}");
        }
    }

    #[test]
    fn inconsistent_spec_names_offending_layer() {
        let pipe = PipeParams::fixed_geometry();
        let spec = NetworkSpec {
            input_size: 1,
            layers: vec![
                LayerSpec::dense(4, Activation::Linear), // model layer needs width 3
                LayerSpec::HazenWilliams(ModelGeometry::hazen_williams(&pipe)),
            ],
            pil_layers: vec![0],
        };
        match build_network(spec, 0) {
            Err(NetworkError::Config { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_layer_reference_is_rejected() {
        let mut net = build_network(prediction_spec(), 0).unwrap();
        let c = Constraint::flow_conservation(7, vec![1.0], InputAffine::raw(0), 0.01);
        assert!(matches!(
            net.register_constraint(c),
            Err(NetworkError::UnknownLayerRef { layer: 7, .. })
        ));
    }

    #[test]
    fn loss_is_zero_when_everything_is_satisfied() {
        // Identity-ish single layer forced to reproduce the input, with a
        // constraint pinning the same neuron to the input.
        let spec = NetworkSpec {
            input_size: 1,
            layers: vec![LayerSpec::dense(1, Activation::Linear)],
            pil_layers: vec![0],
        };
        let mut net = build_network(spec, 0).unwrap();
        net.params.get_mut("w1").unwrap().set_value(array![[1.0]]);
        net.register_constraint(Constraint::flow_conservation(
            0,
            vec![1.0],
            InputAffine::raw(0),
            0.5,
        ))
        .unwrap();
        let batch = Batch::new(array![[2.0], [3.0]], array![[2.0], [3.0]]);
        let loss = net.loss(&batch).unwrap();
        assert_eq!((loss.mse, loss.pen, loss.of), (0.0, 0.0, 0.0));
    }

    #[test]
    fn zero_penalty_reduces_to_plain_mse() {
        let spec = NetworkSpec {
            input_size: 1,
            layers: vec![LayerSpec::dense(1, Activation::Linear)],
            pil_layers: vec![0],
        };
        let mut net = build_network(spec, 4).unwrap();
        net.register_constraint(Constraint::flow_conservation(
            0,
            vec![1.0],
            InputAffine::raw(0),
            0.0,
        ))
        .unwrap();
        let batch = Batch::new(array![[1.5]], array![[0.3]]);
        let loss = net.loss(&batch).unwrap();
        assert_eq!(loss.pen, 0.0);
        assert_eq!(loss.of, loss.mse);
    }

    #[test]
    fn unit_error_single_sample_gives_one_zero_one() {
        // Output forced to 0, target 1, one satisfied constraint.
        let spec = NetworkSpec {
            input_size: 1,
            layers: vec![LayerSpec::dense(1, Activation::Linear)],
            pil_layers: vec![0],
        };
        let mut net = build_network(spec, 0).unwrap();
        net.params.get_mut("w1").unwrap().set_value(array![[0.0]]);
        // Residual pins the neuron to 0 * input, which the zero weight meets.
        net.register_constraint(Constraint::pil_equals_input(
            "zero-pin",
            0,
            0,
            InputAffine { col: 0, mul: 0.0, add: 0.0 },
            2.0,
        ))
        .unwrap();
        let batch = Batch::new(array![[5.0]], array![[1.0]]);
        let loss = net.loss(&batch).unwrap();
        assert_eq!((loss.mse, loss.pen, loss.of), (1.0, 0.0, 1.0));
    }

    #[test]
    fn empty_batch_is_a_contract_error() {
        let net = build_network(prediction_spec(), 0).unwrap();
        let batch = Batch::new(Matrix::zeros((0, 1)), Matrix::zeros((0, 1)));
        assert!(matches!(net.loss(&batch), Err(NetworkError::EmptyBatch)));
    }

    #[test]
    fn divergent_learning_rate_aborts_with_iteration() {
        let mut net = build_network(prediction_spec(), 2).unwrap();
        let batch = Batch::new(array![[1.0], [5.0]], array![[100.0], [-100.0]]);
        let hyper = Hyper::new(500, 2, 1e6, 0);
        match net.train(&batch, &hyper) {
            Err(TrainError::Diverged { iteration, of }) => {
                assert!(iteration >= 1);
                assert!(!of.is_finite() || of > DIVERGENCE_GUARD);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn untrained_predict_returns_finite_declared_shapes() {
        let net = build_network(prediction_spec(), 5).unwrap();
        let inputs = array![[1.0], [2.5], [5.0]];
        let pred = net.predict(&inputs).unwrap();
        assert_eq!(pred.outputs.dim(), (3, 1));
        assert_eq!(pred.pil_values.len(), 1);
        assert_eq!(pred.pil_values[0].1.dim(), (3, 3));
        assert!(pred.outputs.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn predict_rejects_wrong_input_width() {
        let net = build_network(prediction_spec(), 5).unwrap();
        let err = net.predict(&Matrix::zeros((2, 3))).unwrap_err();
        assert!(matches!(err, NetworkError::InputWidth { got: 3, expected: 1 }));
    }

    #[test]
    fn hazen_williams_layer_reproduces_oracle_at_true_parameters() {
        let pipe = PipeParams::fixed_geometry();
        let mut net = build_network(model_based_spec("hw"), 11).unwrap();
        // Exact velocity map v = (q, q/sigma1, q/sigma2) and true coefficients.
        net.params
            .get_mut("w1")
            .unwrap()
            .set_value(array![[1.0, 1.0 / pipe.sigma1, 1.0 / pipe.sigma2]]);
        net.set_physical_parameters(true_hazen_williams_lambdas(&pipe)).unwrap();
        for q in [1.0, 2.0, 3.7, 5.0] {
            let pred = net.predict(&array![[q]]).unwrap();
            let drops = segment_pressure_drops(q, &pipe).unwrap();
            let got = [pred.outputs[(0, 0)], pred.outputs[(0, 1)], pred.outputs[(0, 2)]];
            let want = [drops.dp1, drops.dpe, drops.dp2];
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "q={q}: {got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn extract_parameters_round_trips_and_rejects_model_free() {
        let mut net = build_network(model_based_spec("dw"), 1).unwrap();
        net.set_physical_parameters([1.0, 3.5e-7, 2.0e-7]).unwrap();
        let got = net.extract_parameters().unwrap();
        assert_eq!(got[0].0, "lambda1");
        assert!((got[0].1 - 1.0).abs() < 1e-12);
        assert!((got[1].1 - 3.5e-7).abs() < 1e-18);
        assert!((got[2].1 - 2.0e-7).abs() < 1e-18);

        let free = build_network(prediction_spec(), 1).unwrap();
        assert!(matches!(free.extract_parameters(), Err(NetworkError::NotModelBased)));
    }

    #[test]
    fn checkpoint_round_trip_preserves_forward_bit_for_bit() {
        let net = build_network(model_based_spec("hw"), 42).unwrap();
        let text = checkpoint::to_string(&net);
        let restored = checkpoint::from_string(&text).unwrap();
        let inputs = array![[1.0], [2.2], [4.9]];
        let a = net.predict(&inputs).unwrap();
        let b = restored.predict(&inputs).unwrap();
        assert_eq!(a.outputs, b.outputs);
        assert_eq!(a.pil_values[0].1, b.pil_values[0].1);
        // Spec survives the echo.
        assert_eq!(net.spec(), restored.spec());
    }

    #[test]
    fn checkpoint_parse_error_carries_line_number() {
        let err = checkpoint::from_string("pgnniv-checkpoint v1\nbogus directive\nend\n")
            .unwrap_err();
        match err {
            NetworkError::CheckpointFormat { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn of_equals_mse_plus_pen_at_every_record() {
        let mut net = build_network(prediction_spec(), 6).unwrap();
        net.register_constraint(Constraint::flow_conservation(
            0,
            vec![1.0, 1.0, 2.0],
            InputAffine::raw(0),
            0.01,
        ))
        .unwrap();
        let batch = Batch::new(array![[1.0], [2.0], [3.0], [4.0]], array![[-0.2], [-0.9], [-1.9], [-3.2]]);
        let hyper = Hyper::new(50, 2, 1e-3, 9);
        let trace = net.train(&batch, &hyper).unwrap();
        assert_eq!(trace.records.len(), 50);
        for rec in &trace.records {
            assert!((rec.of - (rec.mse + rec.pen)).abs() <= 1e-12);
        }
    }

    #[test]
    fn export_state_relation_handles_empty_probe() {
        let net = build_network(prediction_spec(), 5).unwrap();
        let table = net.export_state_relation(&Matrix::zeros((0, 1))).unwrap();
        assert_eq!(table.rows.nrows(), 0);
        assert_eq!(table.header.len(), 1 + 3 + 1);
    }

    #[test]
    fn length_weighted_sum_combines_input_lengths() {
        let spec = NetworkSpec {
            input_size: 3,
            layers: vec![
                LayerSpec::dense(2, Activation::Linear),
                LayerSpec::LengthWeightedSum { length_cols: (1, 2) },
            ],
            pil_layers: vec![],
        };
        let mut net = build_network(spec, 0).unwrap();
        // Gradient neurons fixed to (1, 2) regardless of input.
        net.params.get_mut("w1").unwrap().set_value(Matrix::zeros((3, 2)));
        net.params.get_mut("b1").unwrap().set_value(array![[1.0, 2.0]]);
        let pred = net.predict(&array![[9.0, 10.0, 100.0]]).unwrap();
        assert_eq!(pred.outputs[(0, 0)], 1.0 * 10.0 + 2.0 * 100.0);
    }
}
