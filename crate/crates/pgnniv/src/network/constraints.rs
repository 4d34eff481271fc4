//! Physical constraints attached to network layers.
//!
//! A constraint is a named residual over layer values (and the batch),
//! weighted by its penalty coefficient `p`. Equality residuals enter the
//! penalty as `p * |R|^2`; inequality residuals `f <= 0` enter as
//! `p * |relu(f)|^2`, which drives `f` non-positive once `p` is large
//! enough. Residuals are averaged over the batch rows before weighting,
//! mirroring the mean-squared data term.

use super::{Batch, ForwardPass, NetworkError};
use crate::autodiff::{NodeId, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Equality,
    Inequality,
}

/// Affine read-out of one input column, `value = mul * column + add`.
/// Lets residuals recover a physical quantity from a normalized input.
#[derive(Debug, Clone, Copy)]
pub struct InputAffine {
    pub col: usize,
    pub mul: f64,
    pub add: f64,
}

impl InputAffine {
    pub fn raw(col: usize) -> Self {
        Self { col, mul: 1.0, add: 0.0 }
    }

    fn node(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId, NetworkError> {
        let c = tape.col(input, self.col)?;
        Ok(tape.affine(c, self.mul, self.add))
    }
}

type ResidualFn =
    Box<dyn Fn(&mut Tape, &ForwardPass, &Batch) -> Result<Vec<NodeId>, NetworkError> + Send + Sync>;

/// A named residual with its penalty weight.
pub struct Constraint {
    id: String,
    kind: ConstraintKind,
    weight: f64,
    layer_refs: Vec<usize>,
    residual: ResidualFn,
}

impl Constraint {
    /// General constructor; prefer the named builders below.
    pub fn new(
        id: impl Into<String>,
        kind: ConstraintKind,
        weight: f64,
        layer_refs: Vec<usize>,
        residual: ResidualFn,
    ) -> Self {
        assert!(weight >= 0.0, "penalty weight must be non-negative");
        Self { id: id.into(), kind, weight, layer_refs, residual }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub(super) fn scale_weight(&mut self, factor: f64) {
        self.weight *= factor;
    }

    pub fn layer_refs(&self) -> &[usize] {
        &self.layer_refs
    }

    pub(super) fn residual_nodes(
        &self,
        tape: &mut Tape,
        pass: &ForwardPass,
        batch: &Batch,
    ) -> Result<Vec<NodeId>, NetworkError> {
        (self.residual)(tape, pass, batch)
    }

    /// Mass conservation on a velocity PIL: one residual
    /// `sigma_k * v_k - q` per neuron, `q` read from the input via `flow`.
    pub fn flow_conservation(
        layer: usize,
        sigmas: Vec<f64>,
        flow: InputAffine,
        weight: f64,
    ) -> Self {
        Self::new(
            "flow-conservation",
            ConstraintKind::Equality,
            weight,
            vec![layer],
            Box::new(move |tape, pass, _batch| {
                let q = flow.node(tape, pass.input)?;
                let mut parts = Vec::with_capacity(sigmas.len());
                for (k, &sigma) in sigmas.iter().enumerate() {
                    let v = tape.col(pass.layers[layer], k)?;
                    let scaled = tape.scale(v, sigma);
                    parts.push(tape.sub(scaled, q)?);
                }
                Ok(parts)
            }),
        )
    }

    /// Pins one PIL neuron to an affine function of one input column:
    /// residual `layer[:, neuron] - (mul * input[:, col] + add)`.
    pub fn pil_equals_input(
        id: impl Into<String>,
        layer: usize,
        neuron: usize,
        source: InputAffine,
        weight: f64,
    ) -> Self {
        Self::new(
            id,
            ConstraintKind::Equality,
            weight,
            vec![layer],
            Box::new(move |tape, pass, _batch| {
                let target = source.node(tape, pass.input)?;
                let v = tape.col(pass.layers[layer], neuron)?;
                Ok(vec![tape.sub(v, target)?])
            }),
        )
    }

    /// Pins one PIL neuron to the difference of two input read-outs:
    /// residual `layer[:, neuron] - (upstream - downstream)`, the pressure
    /// drop definition of the characterization problem.
    pub fn pil_equals_input_difference(
        id: impl Into<String>,
        layer: usize,
        neuron: usize,
        upstream: InputAffine,
        downstream: InputAffine,
        weight: f64,
    ) -> Self {
        Self::new(
            id,
            ConstraintKind::Equality,
            weight,
            vec![layer],
            Box::new(move |tape, pass, _batch| {
                let up = upstream.node(tape, pass.input)?;
                let down = downstream.node(tape, pass.input)?;
                let drop = tape.sub(up, down)?;
                let v = tape.col(pass.layers[layer], neuron)?;
                Ok(vec![tape.sub(v, drop)?])
            }),
        )
    }

    /// Momentum-balance check on the output layer: the summed output
    /// columns must equal the measured total stored in auxiliary column
    /// `aux_col`.
    pub fn output_sum_equals_aux(aux_col: usize, weight: f64) -> Self {
        Self::new(
            "output-sum",
            ConstraintKind::Equality,
            weight,
            vec![],
            Box::new(move |tape, pass, batch| {
                let width = tape.value(pass.output).ncols();
                let mut acc = tape.col(pass.output, 0)?;
                for j in 1..width {
                    let c = tape.col(pass.output, j)?;
                    acc = tape.add(acc, c)?;
                }
                let aux = tape.constant(batch.aux.clone());
                let measured = tape.col(aux, aux_col)?;
                Ok(vec![tape.sub(acc, measured)?])
            }),
        )
    }

    /// Inequality `param >= 0` encoded as `relu(-scale * raw) -> 0`.
    pub fn param_non_negative(param: impl Into<String>, scale: f64, weight: f64) -> Self {
        let param = param.into();
        Self::new(
            format!("{param}-non-negative"),
            ConstraintKind::Inequality,
            weight,
            vec![],
            Box::new(move |tape, pass, _batch| {
                let raw = *pass
                    .params
                    .get(&param)
                    .ok_or_else(|| NetworkError::Config {
                        layer: 0,
                        reason: format!("inequality references unknown param {param}"),
                    })?;
                let phys = tape.affine(raw, scale, 0.0);
                Ok(vec![tape.neg(phys)])
            }),
        )
    }
}

impl std::fmt::Debug for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Constraint")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .field("weight", &self.weight)
            .field("layer_refs", &self.layer_refs)
            .finish_non_exhaustive()
    }
}
