// Scratch driver for sizing iteration budgets; not part of the deliverable.
use pgnniv::experiments::{self, configs, metrics};
use pgnniv::hydraulics::PipeParams;
use pgnniv::network::{true_darcy_weisbach_lambdas, true_hazen_williams_lambdas, Hyper};
use std::time::Instant;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "e1".into());
    match which.as_str() {
        "e1" => probe_e1(),
        "e1long" => probe_e1_long(),
        "e3" => probe_e3(),
        "e2" => probe_e2(),
        "e2d" => probe_e2_detail(std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(20000)),
        _ => eprintln!("unknown probe {which}"),
    }
}

fn probe_e1() {
    let start = Instant::now();
    let pipe = PipeParams::fixed_geometry();
    let data = pgnniv::datasets::generate_prediction_dataset(
        1000,
        (1.0, 5.0),
        pgnniv::datasets::PredictionTarget::Total,
        &pipe,
        101,
    )
    .unwrap()
    .to_batch();
    let mut wins = 0.0;
    for seed in 1..=10u64 {
        let mut scores = [0.0; 2];
        for (k, p) in [(0usize, 0.01), (1usize, 0.0)] {
            let mut net = configs::prediction_network(&pipe, seed, p).unwrap();
            let trace = net.train(&data, &Hyper::new(3000, 4, 1e-3, seed)).unwrap();
            scores[k] = metrics::smoothed_rmse_at(&trace, 500, 600).unwrap();
        }
        let win = scores[0] < scores[1];
        println!("seed {seed}: con {:.4} unc {:.4} win={win}", scores[0], scores[1]);
        if win {
            wins += 1.0;
        }
    }
    println!("wins: {wins}/10 in {:?}", start.elapsed());
}

fn probe_e1_long() {
    let pipe = PipeParams::fixed_geometry();
    let data = pgnniv::datasets::generate_prediction_dataset(
        1000,
        (1.0, 5.0),
        pgnniv::datasets::PredictionTarget::Total,
        &pipe,
        101,
    )
    .unwrap()
    .to_batch();
    let sigmas = configs::velocity_sigmas(&pipe);
    for n in [2_500_000usize] {
        let start = Instant::now();
        let mut net = configs::prediction_network(&pipe, 1, 0.01).unwrap();
        net.train(&data, &Hyper::new(n, 4, 1e-3, 1).thinned(1000)).unwrap();
        let grid: Vec<f64> = (0..101).map(|k| 1.0 + 4.0 * k as f64 / 100.0).collect();
        let probe =
            ndarray::Array2::from_shape_vec((grid.len(), 1), grid.clone()).unwrap();
        let pred = net.predict(&probe).unwrap();
        let (_, pil) = &pred.pil_values[0];
        let mut worst: f64 = 0.0;
        for (i, &q) in grid.iter().enumerate() {
            for (k, &s) in sigmas.iter().enumerate() {
                worst = worst.max((pil[(i, k)] * s - q).abs() / q);
            }
        }
        println!("N={n}: max violation {worst:.5} in {:?}", start.elapsed());
    }
}

fn probe_e3() {
    let pipe = PipeParams::fixed_geometry();
    let data = pgnniv::datasets::generate_prediction_dataset(
        1000,
        (1.0, 5.0),
        pgnniv::datasets::PredictionTarget::Triplet,
        &pipe,
        101,
    )
    .unwrap()
    .to_batch();
    let hw_truth = true_hazen_williams_lambdas(&pipe);
    let dw_truth = true_darcy_weisbach_lambdas(&pipe);
    for n in [1_200_000usize, 2_400_000] {
        let start = Instant::now();
        let mut hw =
            configs::model_based_network(configs::ModelKind::HazenWilliams, &pipe, 1, 0.01)
                .unwrap();
        match hw.train(&data, &Hyper::new(n, 4, 1e-4, 1).thinned(1000)) {
            Ok(_) => {
                let params = hw.extract_parameters().unwrap();
                let errs: Vec<f64> = params
                    .iter()
                    .zip(hw_truth)
                    .map(|((_, v), t)| ((v - t) / t).abs())
                    .collect();
                println!("HW N={n}: lambda rel errs {errs:?} in {:?}", start.elapsed());
            }
            Err(e) => println!("HW N={n}: FAILED {e}"),
        }
        let mut dw =
            configs::model_based_network(configs::ModelKind::DarcyWeisbach, &pipe, 1, 0.01)
                .unwrap();
        match dw.train(&data, &Hyper::new(n, 4, 1e-4, 1).thinned(1000)) {
            Ok(_) => {
                let params = dw.extract_parameters().unwrap();
                let errs: Vec<f64> = params
                    .iter()
                    .zip(dw_truth)
                    .map(|((_, v), t)| ((v - t) / t).abs())
                    .collect();
                println!("DW N={n}: lambda rel errs {errs:?}");
            }
            Err(e) => println!("DW N={n}: FAILED {e}"),
        }
        // Model-free for the extrapolation ordering.
        let mut mf = configs::model_free_network(&pipe, 1, 0.01).unwrap();
        let mut mf_u = configs::model_free_network(&pipe, 1, 0.0).unwrap();
        mf.train(&data, &Hyper::new(n, 4, 1e-4, 1).thinned(1000)).unwrap();
        mf_u.train(&data, &Hyper::new(n, 4, 1e-4, 1).thinned(1000)).unwrap();
        let grid: Vec<f64> = (0..101).map(|k| 5.0 + 5.0 * k as f64 / 100.0).collect();
        let probe = ndarray::Array2::from_shape_vec((grid.len(), 1), grid.clone()).unwrap();
        let verr = |net: &pgnniv::network::Network| {
            let pred = net.predict(&probe).unwrap();
            let (_, pil) = &pred.pil_values[0];
            let mut sum = 0.0;
            for (i, &q) in grid.iter().enumerate() {
                sum += (pil[(i, 1)] - q).abs() / q + (pil[(i, 2)] - q / 2.0).abs() / (q / 2.0);
            }
            sum / (2.0 * grid.len() as f64)
        };
        println!("MF N={n}: v err con {:.4} unc {:.4}", verr(&mf), verr(&mf_u));
    }
}

fn probe_e2() {
    let start = Instant::now();
    let opts = pgnniv::experiments::ExperimentOptions {
        seeds: vec![1],
        iterations: Some(100_000),
        convergence_iterations: None,
    };
    let report = experiments::run_experiment(&pgnniv::experiments::ExperimentConfig {
        id: pgnniv::experiments::ExperimentId::E2,
        options: opts,
    })
    .unwrap();
    for (k, v) in &report.summary {
        println!("{k} = {v:.6}");
    }
    println!("elapsed {:?}", start.elapsed());
}

fn probe_e2_detail(n: usize) {
    use pgnniv::hydraulics::{hazen_williams_slope, hydraulic_diameter};
    let pipe = PipeParams::uniform_section();
    let data = pgnniv::datasets::generate_geometry_dataset(2000, (1.0, 5.0), (0.0, 10.0), &pipe, 101)
        .unwrap()
        .to_batch();
    let phi = hydraulic_diameter(1.0).unwrap();
    let c = |kappa: f64, q: f64| pipe.gamma() * hazen_williams_slope(q, kappa, phi).unwrap();
    let mut net = configs::prediction_network(&pipe, 1, 0.0).unwrap(); // placeholder type fix below
    let _ = &mut net;
    for (label, p) in [("con", 0.01), ("unc", 0.0)] {
        let mut net = configs::geometry_network(&pipe, 1, p).unwrap();
        let trace = net.train(&data, &Hyper::new(n, 100, 3e-3, 1).thinned(100)).unwrap();
        let last = trace.records.last().unwrap();
        println!("{label}: final mse {:.6} pen {:.6}", last.mse, last.pen);
        for q in [1.0, 2.0, 3.0, 5.0] {
            for l in [0.0, 5.0] {
                let probe = ndarray::Array2::from_shape_vec((1, 3), vec![q, l, l]).unwrap();
                let pred = net.predict(&probe).unwrap();
                let (_, w_layer) = &pred.pil_values[1];
                println!(
                    "  q={q} l={l}: w=({:.4},{:.4}) true=({:.4},{:.4}) v={:?}",
                    w_layer[(0, 0)],
                    w_layer[(0, 1)],
                    c(140.0, q),
                    c(100.0, q),
                    pred.pil_values[0].1.row(0).to_vec()
                );
            }
        }
    }
}
