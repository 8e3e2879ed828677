//! Acceptance suite: one test per acceptance criterion, each ending in a
//! single PASS line with its pinned tolerance. Run with
//! `cargo test --test acceptance`.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use romcast::bench::{
    density_current_theta_prime, exner_pressure, hydrostatic_density, synthetic_evolve,
    warm_bubble_theta_prime, DensityCurrentConfig, PhysicalConstants, SyntheticDynamicsConfig,
    WarmBubbleConfig,
};
use romcast::cae::{CaeConfig, CaeModel};
use romcast::config::PipelineConfig;
use romcast::esn::{spectral_radius, train_readout, DesignMatrices, EsnConfig, EsnModel, EsnState};
use romcast::grid::{split, GridSpec, Snapshot, SnapshotSet};
use romcast::nn::{grad_check, Activation, ConvLayer, DenseLayer, Layer, Tensor};
use romcast::pipeline::{run_pipeline, Phase};

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    // keep magnitudes away from zero so kinked activations stay smooth
    // within the finite-difference step
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.2..1.0);
            if rng.gen::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::from_vec(shape, data)
}

/// Scalar objective sum(p * layer(x)) whose input/parameter gradients are
/// the layer's backward outputs with grad_out = p.
fn check_conv(conv: &ConvLayer, x: &Tensor, label: &str) -> f64 {
    let y = conv.forward(x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = rand_tensor(&mut rng, y.shape.clone());
    let (gx, gw, gb) = conv.backward(x, &p).unwrap();

    let fx = |v: &[f64]| {
        let xt = Tensor::from_vec(x.shape.clone(), v.to_vec());
        let out = conv.forward(&xt).unwrap();
        out.data.iter().zip(&p.data).map(|(a, b)| a * b).sum()
    };
    let rx = grad_check(fx, &x.data, &gx.data, 1e-5, 1e-6);
    assert!(rx.passed(), "{label} input grad: {}", rx.max_rel_err);

    let fw = |v: &[f64]| {
        let mut c = conv.clone();
        c.weights.data = v.to_vec();
        let out = c.forward(x).unwrap();
        out.data.iter().zip(&p.data).map(|(a, b)| a * b).sum()
    };
    let rw = grad_check(fw, &conv.weights.data, &gw.data, 1e-5, 1e-6);
    assert!(rw.passed(), "{label} weight grad: {}", rw.max_rel_err);

    let fb = |v: &[f64]| {
        let mut c = conv.clone();
        c.bias = v.to_vec();
        let out = c.forward(x).unwrap();
        out.data.iter().zip(&p.data).map(|(a, b)| a * b).sum()
    };
    let rb = grad_check(fb, &conv.bias, &gb, 1e-5, 1e-6);
    assert!(rb.passed(), "{label} bias grad: {}", rb.max_rel_err);
    rx.max_rel_err.max(rw.max_rel_err).max(rb.max_rel_err)
}

#[test]
fn gradient_correctness_all_layers() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut cases = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // forward and transposed convolutions, 2D and 3D, varied strides
    let conv_shapes: [(usize, usize, usize, usize, Vec<usize>); 6] = [
        (1, 2, 2, 1, vec![1, 1, 5, 5]),
        (2, 3, 2, 2, vec![1, 2, 6, 5]),
        (3, 2, 2, 1, vec![2, 3, 4, 4]),
        (1, 2, 3, 2, vec![1, 1, 4, 5, 5]),
        (2, 2, 3, 1, vec![1, 2, 3, 4, 3]),
        (2, 1, 3, 2, vec![1, 2, 4, 4, 4]),
    ];
    for (c_in, c_out, rank, stride, shape) in conv_shapes {
        let mut conv = ConvLayer::new(c_in, c_out, 3, rank, stride, 1);
        conv.init_glorot(&mut rng);
        let x = rand_tensor(&mut rng, shape.clone());
        worst = worst.max(check_conv(&conv, &x, "conv"));
        cases += 1;

        // transposed layer consumes the forward layer's output shape
        let y_shape = conv.output_shape(&shape).unwrap();
        let mut deconv =
            ConvLayer::new_transposed(c_in, c_out, 3, rank, stride, 1, Some(shape[2..].to_vec()));
        deconv.init_glorot(&mut rng);
        let y = rand_tensor(&mut rng, y_shape);
        worst = worst.max(check_conv(&deconv, &y, "deconv"));
        cases += 1;
    }

    // dense layers
    for (f_in, f_out, n) in [(5, 3, 1), (4, 7, 2), (6, 6, 3), (3, 1, 4)] {
        let mut dense = DenseLayer::new(f_in, f_out);
        dense.init_glorot(&mut rng);
        let x = rand_tensor(&mut rng, vec![n, f_in]);
        let y = dense.forward(&x).unwrap();
        let p = rand_tensor(&mut rng, y.shape.clone());
        let (gx, gw, gb) = dense.backward(&x, &p).unwrap();
        let fx = |v: &[f64]| {
            let xt = Tensor::from_vec(x.shape.clone(), v.to_vec());
            let out = dense.forward(&xt).unwrap();
            out.data.iter().zip(&p.data).map(|(a, b)| a * b).sum()
        };
        let r = grad_check(fx, &x.data, &gx.data, 1e-5, 1e-6);
        assert!(r.passed(), "dense input grad: {}", r.max_rel_err);
        worst = worst.max(r.max_rel_err);
        let fw = |v: &[f64]| {
            let mut d = dense.clone();
            d.weights.data = v.to_vec();
            let out = d.forward(&x).unwrap();
            out.data.iter().zip(&p.data).map(|(a, b)| a * b).sum()
        };
        let r = grad_check(fw, &dense.weights.data, &gw.data, 1e-5, 1e-6);
        assert!(r.passed(), "dense weight grad: {}", r.max_rel_err);
        worst = worst.max(r.max_rel_err);
        let fb = |v: &[f64]| {
            let mut d = dense.clone();
            d.bias = v.to_vec();
            let out = d.forward(&x).unwrap();
            out.data.iter().zip(&p.data).map(|(a, b)| a * b).sum()
        };
        let r = grad_check(fb, &dense.bias, &gb, 1e-5, 1e-6);
        assert!(r.passed(), "dense bias grad: {}", r.max_rel_err);
        worst = worst.max(r.max_rel_err);
        cases += 1;
    }

    // activations through the Layer interface
    for act in [
        Activation::Elu,
        Activation::Relu,
        Activation::Tanh,
        Activation::Linear,
    ] {
        for shape in [vec![2, 6], vec![1, 2, 3, 3]] {
            let layer = Layer::Act(act);
            let x = rand_tensor(&mut rng, shape);
            let p = rand_tensor(&mut rng, x.shape.clone());
            let (gx, _) = layer.backward(&x, &p).unwrap();
            let f = |v: &[f64]| {
                let xt = Tensor::from_vec(x.shape.clone(), v.to_vec());
                let out = layer.forward(&xt).unwrap();
                out.data.iter().zip(&p.data).map(|(a, b)| a * b).sum()
            };
            let r = grad_check(f, &x.data, &gx.data, 1e-5, 1e-6);
            assert!(r.passed(), "{} grad: {}", act.name(), r.max_rel_err);
            worst = worst.max(r.max_rel_err);
            cases += 1;
        }
    }

    let secs = start.elapsed().as_secs_f64();
    assert!(cases >= 20, "only {cases} shapes checked");
    assert!(secs < 60.0, "gradient checks took {secs:.1} s");
    println!(
        "PASS gradient correctness: {cases} seeded shapes, max rel err {worst:.2e} <= 1e-6, {secs:.1} s"
    );
}

#[test]
fn adjoint_identity_conv_deconv() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let rank = if trial % 2 == 0 { 2 } else { 3 };
        let c_in = rng.gen_range(1..3);
        let c_out = rng.gen_range(1..3);
        let stride = rng.gen_range(1..3);
        let spatial: Vec<usize> = (0..rank).map(|_| rng.gen_range(3..7)).collect();
        let mut shape = vec![1, c_in];
        shape.extend_from_slice(&spatial);

        // zero-bias conv and its exact adjoint sharing the same weights
        let mut conv = ConvLayer::new(c_in, c_out, 3, rank, stride, 1);
        conv.init_glorot(&mut rng);
        let mut deconv =
            ConvLayer::new_transposed(c_in, c_out, 3, rank, stride, 1, Some(spatial.clone()));
        deconv.weights = conv.weights.clone();

        let x = rand_tensor(&mut rng, shape.clone());
        let cx = conv.forward(&x).unwrap();
        let y = rand_tensor(&mut rng, cx.shape.clone());
        let dy = deconv.forward(&y).unwrap();
        let lhs: f64 = cx.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&dy.data).map(|(a, b)| a * b).sum();
        let diff = (lhs - rhs).abs();
        assert!(diff <= 1e-10, "trial {trial}: <conv(x),y>={lhs} <x,deconv(y)>={rhs}");
        worst = worst.max(diff);
    }
    println!("PASS adjoint identity: 20 trials, max |<conv(x),y> - <x,deconv(y)>| = {worst:.2e} <= 1e-10");
}

/// Dense symmetric solve by Gaussian elimination with partial pivoting,
/// independent of the library's Cholesky path.
fn solve_dense(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug = Array2::zeros((n, n + m));
    for i in 0..n {
        for j in 0..n {
            aug[[i, j]] = a[[i, j]];
        }
        for j in 0..m {
            aug[[i, n + j]] = b[[i, j]];
        }
    }
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if aug[[row, col]].abs() > aug[[pivot, col]].abs() {
                pivot = row;
            }
        }
        if pivot != col {
            for j in 0..n + m {
                let tmp = aug[[col, j]];
                aug[[col, j]] = aug[[pivot, j]];
                aug[[pivot, j]] = tmp;
            }
        }
        let d = aug[[col, col]];
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = aug[[row, col]] / d;
            for j in col..n + m {
                aug[[row, j]] -= f * aug[[col, j]];
            }
        }
    }
    Array2::from_shape_fn((n, m), |(i, j)| aug[[i, n + j]] / aug[[i, i]])
}

#[test]
fn ridge_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(321);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x = Array2::from_shape_fn((8, 20), |_| rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((3, 20), |_| rng.gen_range(-1.0..1.0));
        let lambda = rng.gen_range(1e-4..1e-1);
        let w = train_readout(
            &DesignMatrices {
                x: x.clone(),
                y: y.clone(),
            },
            lambda,
        )
        .unwrap();
        // brute-force oracle: W^T solves (X X^T + lambda I) W^T = X Y^T
        let mut gram = x.dot(&x.t());
        for i in 0..8 {
            gram[[i, i]] += lambda;
        }
        let oracle = solve_dense(&gram, &y.dot(&x.t()).t().to_owned())
            .t()
            .to_owned();
        let diff = (&w - &oracle).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff <= 1e-10, "ridge vs oracle diff {diff:.2e}");
        worst = worst.max(diff);
    }
    // lambda = 0 with targets in the row space: exact interpolation
    let x = Array2::from_shape_fn((8, 20), |_| rng.gen_range(-1.0..1.0));
    let a = Array2::from_shape_fn((3, 8), |_| rng.gen_range(-1.0..1.0));
    let y = a.dot(&x);
    let w = train_readout(
        &DesignMatrices {
            x: x.clone(),
            y: y.clone(),
        },
        0.0,
    )
    .unwrap();
    let interp = (&w.dot(&x) - &y).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(interp <= 1e-8, "lambda=0 interpolation residual {interp:.2e}");
    println!(
        "PASS ridge oracle: 20 trials max diff {worst:.2e} <= 1e-10, lambda=0 residual {interp:.2e} <= 1e-8"
    );
}

#[test]
fn reservoir_state_unit_behavior() {
    let cfg = EsnConfig {
        n_h: 8,
        connectivity: 1.0,
        ..EsnConfig::default()
    };
    let m = EsnModel::init(cfg, 2).unwrap();

    // alpha = 0: the state never moves
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h0 = EsnState {
        h: ndarray::Array1::from_shape_fn(8, |_| rng.gen_range(-1.0..1.0)),
    };
    let out = m.update_state(&h0, &[2.0, -1.0], 0.0).unwrap();
    assert_eq!(out.h, h0.h);

    // alpha = 1 with zero input: zero is a fixed point
    let out = m.update_state(&EsnState::zero(8), &[0.0, 0.0], 1.0).unwrap();
    assert!(out.h.iter().all(|&v| v == 0.0));

    // scalar hand case: 0.5*0.2 + 0.5*tanh(1.0*0.3 + 0.5*0.2)
    let mut scalar = EsnModel::init(
        EsnConfig {
            n_h: 1,
            connectivity: 1.0,
            ..EsnConfig::default()
        },
        1,
    )
    .unwrap();
    scalar.w_in[[0, 0]] = 1.0;
    scalar.w_res[[0, 0]] = 0.5;
    let state = EsnState {
        h: ndarray::Array1::from_vec(vec![0.2]),
    };
    let out = scalar.update_state(&state, &[0.3], 0.5).unwrap();
    assert!(
        (out.h[0] - 0.289974).abs() <= 1e-6,
        "scalar hand case gave {}",
        out.h[0]
    );
    println!("PASS reservoir state: alpha=0 identity, alpha=1 zero fixed point, scalar case 0.289974 +/- 1e-6");
}

#[test]
fn spectral_radius_normalization() {
    // diagonal matrices with known spectra
    for entries in [vec![2.0, -3.0, 0.5], vec![0.1, 0.2, -0.9, 0.4]] {
        let n = entries.len();
        let a = Array2::from_shape_fn((n, n), |(i, j)| if i == j { entries[i] } else { 0.0 });
        let expect = entries.iter().fold(0.0f64, |m, &v: &f64| m.max(v.abs()));
        let rho = spectral_radius(&a).unwrap();
        assert!((rho - expect).abs() <= 1e-6, "diagonal rho {rho} vs {expect}");
    }
    // random sparse reservoirs rescaled to the target: self-consistency
    for seed in 0..5 {
        let cfg = EsnConfig {
            n_h: 120,
            seed,
            spectral_radius_target: 0.9,
            ..EsnConfig::default()
        };
        let m = EsnModel::init(cfg, 3).unwrap();
        let rho = spectral_radius(&m.w_res).unwrap();
        assert!((rho - 0.9).abs() <= 1e-6, "seed {seed}: rho {rho}");
    }
    println!("PASS spectral radius: diagonal spectra and 5 rescaled sparse reservoirs within 1e-6 of target");
}

#[test]
fn table1_split_arithmetic() {
    let grid = GridSpec::new_2d(2, 1, 1.0, 1.0);
    let snapshots: Vec<Snapshot> = (0..1020)
        .map(|i| Snapshot::new(vec![1.0, 2.0], i as f64))
        .collect();
    let set = SnapshotSet::new(grid, snapshots, 1.0).unwrap();
    for (frac, expect) in [(0.4, (408, 612)), (0.6, (612, 408)), (0.8, (816, 204))] {
        let (train, valid) = split(&set, frac).unwrap();
        assert_eq!((train.len(), valid.len()), expect, "fraction {frac}");
    }
    println!("PASS split arithmetic: 1020 snapshots at 0.4/0.6/0.8 -> (408,612)/(612,408)/(816,204)");
}

#[test]
fn benchmark_initial_condition_point_values() {
    // grid whose cell centers land exactly on the configured centers
    let grid = GridSpec::new_2d(8, 8, 1.0, 1.0);
    let bubble = WarmBubbleConfig {
        x_c: 3.5,
        y_c: 4.5,
        z_c: 0.0,
        r0: 2.0,
        amplitude: 2.0,
    };
    let field = warm_bubble_theta_prime(&bubble, &grid);
    assert_eq!(field.values[grid.idx(3, 4, 0)], 2.0);
    // every cell at distance >= r0 is exactly zero
    for j in 0..8 {
        for i in 0..8 {
            let (x, y, _) = grid.center(i, j, 0);
            let r = ((x - 3.5f64).powi(2) + (y - 4.5f64).powi(2)).sqrt();
            if r >= 2.0 {
                assert_eq!(field.values[grid.idx(i, j, 0)], 0.0);
            }
        }
    }

    let dc = DensityCurrentConfig {
        x_c: 2.5,
        y_c: 5.5,
        x_r: 2.0,
        y_r: 1.0,
        theta_s: 7.5,
    };
    let field = density_current_theta_prime(&dc, &grid);
    assert_eq!(field.values[grid.idx(2, 5, 0)], -15.0);
    for j in 0..8 {
        for i in 0..8 {
            let (x, y, _) = grid.center(i, j, 0);
            let r = (((x - 2.5) / 2.0f64).powi(2) + ((y - 5.5) / 1.0f64).powi(2)).sqrt();
            if r >= 1.0 {
                assert_eq!(field.values[grid.idx(i, j, 0)], 0.0);
            }
        }
    }

    let c = PhysicalConstants::default();
    let rho = hydrostatic_density(0.0, 300.0, &c).unwrap();
    let expect = 1e5 / (287.0 * 300.0);
    assert!(
        ((rho - expect) / expect).abs() <= 1e-12,
        "surface density {rho} vs {expect}"
    );
    assert!((exner_pressure(1e5, &c).unwrap() - 1.0).abs() <= 1e-15);
    println!("PASS benchmark ICs: bubble 2.0 K peak, density current -15.0 K trough, compact support, surface density and Exner unit checks");
}

/// Shared dataset for the end-to-end analogue: a wide warm bubble
/// advecting diagonally with mild diffusion on a periodic 64x64 grid.
fn analogue_dataset() -> SnapshotSet {
    let grid = GridSpec::new_2d(64, 64, 1.0, 1.0);
    let bubble = WarmBubbleConfig {
        x_c: 32.0,
        y_c: 32.0,
        z_c: 0.0,
        r0: 20.0,
        amplitude: 2.0,
    };
    let initial = warm_bubble_theta_prime(&bubble, &grid);
    let dynamics = SyntheticDynamicsConfig {
        u: 0.03,
        v: 0.02,
        w: 0.0,
        kappa: 0.06,
        n_steps: 499,
        dt: 1.0,
    };
    synthetic_evolve(&initial, &grid, &dynamics).unwrap()
}

#[test]
fn scaled_end_to_end_analogue() {
    let start = Instant::now();
    let truth = analogue_dataset();
    let (train_set, valid_set) = split(&truth, 0.8).unwrap();

    let cae_config = CaeConfig {
        levels: 3,
        filters: vec![32, 16, 8],
        n_f: 2,
        latent_dim: 4,
        dense_widths: vec![32],
        epochs: 16,
        batch_size: 16,
        lr: 3e-3,
        seed: 1,
        ..CaeConfig::default()
    };
    let mut cae = CaeModel::build(cae_config, truth.grid).unwrap();
    cae.train(&train_set).unwrap();

    let recon = cae.reconstruct_set(&train_set).unwrap();
    let mut recon_errs = Vec::new();
    for (t, r) in train_set.snapshots.iter().zip(&recon.snapshots) {
        recon_errs.push(romcast::grid::relative_l2_error(t, r).unwrap());
    }
    let recon_mean = recon_errs.iter().sum::<f64>() / recon_errs.len() as f64;

    let train_latents = cae.encode_set(&train_set).unwrap();
    let esn_config = EsnConfig {
        n_h: 300,
        alpha: 0.05,
        lambda: 1e-4,
        seed: 1,
        ..EsnConfig::default()
    };
    let mut esn = EsnModel::init(esn_config, 4).unwrap();
    esn.train(&train_latents).unwrap();
    let forecast = esn.forecast(&train_latents, 50).unwrap();
    let decoded = cae.decode_trajectory(&forecast, truth.dt).unwrap();
    let mut pred_errs = Vec::new();
    for (t, r) in valid_set.snapshots[..50].iter().zip(&decoded.snapshots) {
        pred_errs.push(romcast::grid::relative_l2_error(t, r).unwrap());
    }
    let pred_mean = pred_errs.iter().sum::<f64>() / pred_errs.len() as f64;
    let secs = start.elapsed().as_secs_f64();

    assert!(recon_mean <= 5.0, "reconstruction mean {recon_mean:.3}%");
    assert!(pred_mean <= 10.0, "prediction mean {pred_mean:.3}%");
    println!(
        "PASS end-to-end analogue: reconstruction mean {recon_mean:.3}% <= 5%, prediction mean {pred_mean:.3}% over 50 steps <= 10%, {secs:.0} s"
    );
}

#[test]
fn ecae_matches_or_beats_cae_at_matched_budget() {
    // density-current-like dataset: negative-amplitude elliptic trough
    // advecting with strong horizontal motion and diffusing
    let grid = GridSpec::new_2d(32, 32, 1.0, 1.0);
    let dc = DensityCurrentConfig {
        x_c: 16.0,
        y_c: 16.0,
        x_r: 10.0,
        y_r: 5.0,
        theta_s: 7.5,
    };
    let initial = density_current_theta_prime(&dc, &grid);
    let dynamics = SyntheticDynamicsConfig {
        u: 0.5,
        v: 0.1,
        w: 0.0,
        kappa: 0.05,
        n_steps: 119,
        dt: 1.0,
    };
    let truth = synthetic_evolve(&initial, &grid, &dynamics).unwrap();
    let (train_set, _) = split(&truth, 0.8).unwrap();

    let base = CaeConfig {
        levels: 2,
        filters: vec![8, 4],
        latent_dim: 3,
        dense_widths: vec![],
        epochs: 150,
        batch_size: 16,
        lr: 2e-3,
        ..CaeConfig::default()
    };
    let mut lines = Vec::new();
    for seed in [0u64, 1, 2] {
        let mut plain = CaeModel::build(
            CaeConfig {
                n_f: 1,
                seed,
                ..base.clone()
            },
            grid,
        )
        .unwrap();
        plain.train(&train_set).unwrap();
        let plain_err = plain.train_error_pct.unwrap();

        let mut extended = CaeModel::build(
            CaeConfig {
                n_f: 3,
                seed,
                ..base.clone()
            },
            grid,
        )
        .unwrap();
        extended.train(&train_set).unwrap();
        let ext_err = extended.train_error_pct.unwrap();

        assert!(
            ext_err <= plain_err,
            "seed {seed}: extended {ext_err:.3}% > plain {plain_err:.3}%"
        );
        lines.push(format!("seed {seed}: {ext_err:.2}% <= {plain_err:.2}%"));
    }
    println!(
        "PASS extended vs plain at matched budget: {}",
        lines.join(", ")
    );
}

#[test]
fn pipeline_determinism_byte_identical() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::preset_rtb2d();
    cfg.grid = GridSpec::new_2d(16, 16, 1.0, 1.0);
    cfg.dynamics = SyntheticDynamicsConfig {
        u: 0.2,
        v: 0.1,
        w: 0.0,
        kappa: 0.01,
        n_steps: 29,
        dt: 1.0,
    };
    cfg.cae = CaeConfig {
        levels: 2,
        filters: vec![4, 2],
        n_f: 1,
        latent_dim: 2,
        dense_widths: vec![],
        epochs: 5,
        batch_size: 8,
        ..CaeConfig::default()
    };
    cfg.esn = EsnConfig {
        n_h: 20,
        alpha: 0.5,
        lambda: 1e-4,
        connectivity: 0.5,
        ..EsnConfig::default()
    };
    cfg.seed = 42;

    cfg.out_dir = dir_a.path().to_path_buf();
    run_pipeline(&cfg).unwrap();
    cfg.out_dir = dir_b.path().to_path_buf();
    run_pipeline(&cfg).unwrap();

    for name in ["report.csv", "cae.romw", "esn.rome"] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    println!("PASS determinism: report.csv and both checkpoints byte-identical across reruns");
}

#[test]
fn error_report_phases_partition_at_split() {
    // indirect check that the pipeline labels phases by the split
    // boundary computed by the grid module
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::preset_rtb2d();
    cfg.grid = GridSpec::new_2d(16, 16, 1.0, 1.0);
    cfg.dynamics = SyntheticDynamicsConfig {
        u: 0.0,
        v: 0.0,
        w: 0.0,
        kappa: 0.0,
        n_steps: 19,
        dt: 1.0,
    };
    cfg.cae = CaeConfig {
        levels: 2,
        filters: vec![4, 2],
        n_f: 1,
        latent_dim: 2,
        dense_widths: vec![],
        epochs: 2,
        batch_size: 8,
        ..CaeConfig::default()
    };
    cfg.esn = EsnConfig {
        n_h: 20,
        connectivity: 0.5,
        ..EsnConfig::default()
    };
    cfg.train_fraction = 0.6;
    cfg.out_dir = dir.path().to_path_buf();
    let run = romcast::pipeline::run_pipeline_in_memory(&cfg).unwrap();
    let n_recon = run
        .report
        .entries
        .iter()
        .filter(|e| e.phase == Phase::Reconstruction)
        .count();
    assert_eq!(n_recon, 12); // floor(0.6 * 20)
    assert_eq!(run.report.entries.len(), 20);
    println!("PASS phase partition: 20 snapshots at 0.6 split into 12 reconstruction + 8 prediction");
}
