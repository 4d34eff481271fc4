//! Canonical network topologies and constraint wiring for the study suite.
//!
//! Every builder takes the penalty weight explicitly; passing `0.0` yields
//! the unconstrained twin, which differs from the constrained network only
//! by its zeroed penalty weights.

use crate::datasets::ScalingRecord;
use crate::hydraulics::PipeParams;
use crate::network::{
    build_network, Activation, Constraint, InputAffine, LayerSpec, ModelGeometry, Network,
    NetworkError, NetworkSpec,
};

/// Penalty weight used across the prediction studies.
pub const PREDICTION_PENALTY: f64 = 0.01;
/// Penalty weight of the characterization study.
pub const CHARACTERIZATION_PENALTY: f64 = 0.001;

/// Single input - single output drop predictor: hidden layers of 3, 15 and
/// 15 neurons, ReLU on the third, velocity PIL on the first.
pub fn prediction_spec() -> NetworkSpec {
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

/// Velocities at the inlet, segment 1, and segment 2; the inlet shares
/// segment 1's cross-section.
pub fn velocity_sigmas(pipe: &PipeParams) -> Vec<f64> {
    vec![pipe.sigma1, pipe.sigma1, pipe.sigma2]
}

/// Mass-conservation constraint `sigma_k v_k - q = 0` on the velocity PIL.
pub fn flow_constraint(pipe: &PipeParams, penalty: f64) -> Constraint {
    Constraint::flow_conservation(0, velocity_sigmas(pipe), InputAffine::raw(0), penalty)
}

/// Fixed-geometry prediction network with the mass-conservation penalty.
pub fn prediction_network(pipe: &PipeParams, seed: u64, penalty: f64) -> Result<Network, NetworkError> {
    let mut net = build_network(prediction_spec(), seed)?;
    net.register_constraint(flow_constraint(pipe, penalty))?;
    Ok(net)
}

/// Geometry-dependent predictor `(q, l1, l2) -> dp`: ReLU stack ending in
/// two local-gradient neurons combined as `dp = l1 w1 + l2 w2`. With two
/// neurons per hidden layer a sign-symmetric init leaves most seeds with a
/// dead path, so every layer starts positive; the inputs are positive and
/// the drop grows with velocity, and weights may still change sign while
/// training.
pub fn geometry_spec() -> NetworkSpec {
    NetworkSpec {
        input_size: 3,
        layers: vec![
            LayerSpec::dense_positive(3, Activation::Relu),
            LayerSpec::dense_positive(2, Activation::Relu),
            LayerSpec::dense_positive(2, Activation::Relu),
            LayerSpec::LengthWeightedSum { length_cols: (1, 2) },
        ],
        pil_layers: vec![0, 2],
    }
}

pub fn geometry_network(pipe: &PipeParams, seed: u64, penalty: f64) -> Result<Network, NetworkError> {
    let mut net = build_network(geometry_spec(), seed)?;
    net.register_constraint(flow_constraint(pipe, penalty))?;
    Ok(net)
}

/// Model-free per-segment predictor `q -> (dp1, dpe, dp2)` with the
/// velocity PIL.
pub fn model_free_spec() -> NetworkSpec {
    NetworkSpec {
        input_size: 1,
        layers: vec![
            LayerSpec::dense(3, Activation::Linear),
            LayerSpec::dense(15, Activation::Relu),
            LayerSpec::dense(15, Activation::Relu),
            LayerSpec::dense(3, Activation::Linear),
        ],
        pil_layers: vec![0],
    }
}

pub fn model_free_network(pipe: &PipeParams, seed: u64, penalty: f64) -> Result<Network, NetworkError> {
    let mut net = build_network(model_free_spec(), seed)?;
    net.register_constraint(flow_constraint(pipe, penalty))?;
    Ok(net)
}

/// Which distributed-loss law a model-based network assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    HazenWilliams,
    DarcyWeisbach,
}

/// Model-based predictor: a linear velocity layer feeding the closed-form
/// loss model with trainable coefficients. Positive first-layer weights
/// keep the fractional powers in their domain at initialization.
pub fn model_based_spec(kind: ModelKind, pipe: &PipeParams) -> NetworkSpec {
    let layer = match kind {
        ModelKind::HazenWilliams => LayerSpec::HazenWilliams(ModelGeometry::hazen_williams(pipe)),
        ModelKind::DarcyWeisbach => LayerSpec::DarcyWeisbach(ModelGeometry::darcy_weisbach(pipe)),
    };
    NetworkSpec {
        input_size: 1,
        layers: vec![LayerSpec::dense_positive(3, Activation::Linear), layer],
        pil_layers: vec![0],
    }
}

pub fn model_based_network(
    kind: ModelKind,
    pipe: &PipeParams,
    seed: u64,
    penalty: f64,
) -> Result<Network, NetworkError> {
    let mut net = build_network(model_based_spec(kind, pipe), seed)?;
    net.register_constraint(flow_constraint(pipe, penalty))?;
    Ok(net)
}

/// Model-free triplet predictor with the additional momentum-balance
/// constraint: the three output drops must sum to the measured total
/// carried in auxiliary column 0.
pub fn output_sum_network(pipe: &PipeParams, seed: u64, penalty: f64) -> Result<Network, NetworkError> {
    let mut net = model_free_network(pipe, seed, penalty)?;
    net.register_constraint(Constraint::output_sum_equals_aux(0, penalty))?;
    Ok(net)
}

/// Characterization net `(q, p0, p1, p2) -> (kappa1, kappa2)`: a linear
/// state layer (velocities and per-segment drops) in front of a deep
/// multilayer perceptron of 20, 40, 80, 40 and 20 ReLU neurons.
pub fn characterization_spec() -> NetworkSpec {
    let mut layers = vec![LayerSpec::dense(4, Activation::Linear)];
    for size in [20, 40, 80, 40, 20] {
        layers.push(LayerSpec::dense(size, Activation::Relu));
    }
    layers.push(LayerSpec::dense(2, Activation::Linear));
    NetworkSpec { input_size: 4, layers, pil_layers: vec![0] }
}

/// Characterization network over min-max normalized data. The constraints
/// pin the state layer to physical quantities recovered from the
/// normalized inputs through `scaling`:
/// velocities `v_i = q / sigma_i` and drops `dp_i = p_{i-1} - p_i`.
pub fn characterization_network(
    pipe: &PipeParams,
    scaling: &ScalingRecord,
    seed: u64,
    penalty: f64,
) -> Result<Network, NetworkError> {
    let mut net = build_network(characterization_spec(), seed)?;
    let (q_mul, q_add) = scaling.input_affine(0);
    let q = InputAffine { col: 0, mul: q_mul, add: q_add };
    net.register_constraint(Constraint::flow_conservation(
        0,
        vec![pipe.sigma1, pipe.sigma2],
        q,
        penalty,
    ))?;
    let pressure = |col: usize| {
        let (mul, add) = scaling.input_affine(col);
        InputAffine { col, mul, add }
    };
    net.register_constraint(Constraint::pil_equals_input_difference(
        "dp1-definition",
        0,
        2,
        pressure(1),
        pressure(2),
        penalty,
    ))?;
    net.register_constraint(Constraint::pil_equals_input_difference(
        "dp2-definition",
        0,
        3,
        pressure(2),
        pressure(3),
        penalty,
    ))?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_characterization_dataset, normalize_minmax};
    use crate::network::{Batch, Hyper};
    use ndarray::array;

    #[test]
    fn twin_with_zero_penalty_matches_constraint_free_build() {
        let pipe = PipeParams::fixed_geometry();
        let data = Batch::new(
            array![[1.0], [2.0], [3.0], [4.0], [5.0]],
            array![[-0.1], [-0.9], [-2.0], [-3.4], [-4.8]],
        );
        let hyper = Hyper::new(200, 2, 1e-3, 3);

        let mut twin = prediction_network(&pipe, 17, 0.0).unwrap();
        let mut bare = build_network(prediction_spec(), 17).unwrap();
        let trace_twin = twin.train(&data, &hyper).unwrap();
        let trace_bare = bare.train(&data, &hyper).unwrap();
        assert_eq!(trace_twin.records, trace_bare.records);
        let probe = array![[1.5], [4.5]];
        assert_eq!(twin.predict(&probe).unwrap().outputs, bare.predict(&probe).unwrap().outputs);
    }

    #[test]
    fn characterization_constraints_see_physical_quantities() {
        let pipe = PipeParams::uniform_section();
        let ds = generate_characterization_dataset(200, (1.0, 5.0), (80.0, 140.0), &pipe, 5)
            .unwrap();
        let (norm, scaling) = normalize_minmax(&ds).unwrap();
        let net = characterization_network(&pipe, &scaling, 1, CHARACTERIZATION_PENALTY).unwrap();
        let loss = net.loss(&norm.to_batch()).unwrap();
        assert!(loss.pen.is_finite() && loss.pen > 0.0);
        assert!((loss.of - (loss.mse + loss.pen)).abs() < 1e-12);
    }
}
