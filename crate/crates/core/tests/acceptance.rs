//! Acceptance suite: property checks plus trend reproduction on the shipped
//! synthetic dataset. Each test prints one pass/fail line.
//!
//! Heavy artifacts (trained priors, classifier, dictionary, grids) are built
//! once in a shared fixture and reused across criteria; each criterion's own
//! work is timed against its stated budget.

use std::collections::BTreeMap;
use std::time::Instant;

use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mocomplete::data::{
    apply_mask, gen_random_mask, hip_center, mean_trajectories, resample, synth, ActionSequence,
    FillStrategy, MaskSpec, MeanTrajectories, SkeletonTopology,
};
use mocomplete::eval::{
    accuracy, rmse, run_grid, ssm, ExperimentReport, GridArtifacts, GridConfig, Method,
    TestCondition,
};
use mocomplete::invert::{feedforward_reconstruct, latent_optimize, InversionConfig};
use mocomplete::models::{
    Autoencoder, AutoencoderSpec, ClassifierSpec, FramewiseAutoencoder, FramewiseSpec,
    TcnClassifier,
};
use mocomplete::nn::array::{Array3, Mat, Tensor};
use mocomplete::nn::gradcheck::{finite_difference_grad, max_rel_error};
use mocomplete::nn::ops;
use mocomplete::sparse::{learn_dictionary, omp_encode, CodingStep, DictLearnConfig, Dictionary, OmpConfig};
use mocomplete::train::{
    batch_sq_loss_grad, full_loss, masked_loss, train_autoencoder, train_classifier,
    train_framewise, LossMode, MaskAssignment, Milestone, TrainConfig,
};

// pinned budgets and tolerances
const FD_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
const ADJOINT_TOL: f64 = 1e-10;
const GRADCHECK_BUDGET_S: f64 = 60.0;
const LOSS_ALGEBRA_BUDGET_S: f64 = 60.0;
const INVERSION_PAIRS: usize = 200;
const INVERSION_MIN_IMPROVED: usize = 180; // 90% of 200
const INVERSION_REL_IMPROVEMENT: f64 = 0.05;
const INVERSION_BUDGET_S: f64 = 600.0;
const GRID_BUDGET_S: f64 = 2700.0;
const ACC_GAP_POINTS: f64 = 10.0;
const DAE_TOLERANCE_BAND: f64 = 1.05; // 5%
const SPARSE_TRIALS: usize = 100;
const SPARSE_RESIDUAL_TOL: f64 = 1e-6;
const RMSE_FIXTURE_TOL: f64 = 1e-6;
const SSM_TRIALS: usize = 500;
const CONSISTENCY_REL_TOL: f64 = 1e-9;

const TRAIN_OTPS: [&str; 3] = ["100", "75", "50"];

fn ae_spec() -> AutoencoderSpec {
    AutoencoderSpec {
        input_channels: 3 * synth::JOINTS,
        depth: 2,
        kernel: 4,
        feature_maps: 64,
        latent: 64,
        frames: 64,
    }
}

fn train_cfg(loss: LossMode, iterations: u64, seed: u64) -> TrainConfig {
    TrainConfig {
        loss,
        iterations,
        batch_size: 32,
        learning_rate: 2e-3,
        milestones: vec![
            Milestone { iteration: iterations * 3 / 4, multiplier: 0.1 },
            Milestone { iteration: iterations * 9 / 10, multiplier: 0.01 },
        ],
        seed,
        fill: FillStrategy::MeanTrajectory,
        redraw_masks_per_epoch: false,
        log_every: 500,
    }
}

struct Fixtures {
    topo: SkeletonTopology,
    train: Vec<ActionSequence>,
    test: Vec<ActionSequence>,
    /// Keyed by train condition: "100", "75", "50", ambient per-frame
    /// "pf75"/"pf50", and the denoising baseline "den75".
    aes: BTreeMap<String, (Autoencoder<f32>, Option<MeanTrajectories>)>,
    classifier: TcnClassifier<f32>,
    framewise: FramewiseAutoencoder<f32>,
    dictionary: Dictionary,
    full_stats: MeanTrajectories,
    grid_main: ExperimentReport,
    grid_main_seconds: f64,
    grid_perframe: ExperimentReport,
    grid_baselines: ExperimentReport,
    grid_denoising: ExperimentReport,
}

fn train_ae_variant(
    train: &[ActionSequence],
    hip: usize,
    key: &str,
    otp: f64,
    loss: LossMode,
    per_frame: bool,
    seed: u64,
) -> (Autoencoder<f32>, Option<MeanTrajectories>) {
    let mut model = Autoencoder::<f32>::build(&ae_spec(), seed).expect("spec valid");
    let assignment = if otp >= 100.0 {
        MaskAssignment::None
    } else {
        MaskAssignment::Redrawn { otp, hip, per_frame }
    };
    let cfg = train_cfg(loss, 3000, seed);
    let out = train_autoencoder(&mut model, train, assignment, &cfg)
        .unwrap_or_else(|e| panic!("training AE {key}: {e}"));
    eprintln!(
        "  [fixture] AE {key}: final training loss {:.4}",
        out.log.final_loss().unwrap()
    );
    (model, out.stats)
}

fn grid_config(methods: Vec<Method>, train_otps: Vec<String>, conds: Vec<TestCondition>) -> GridConfig {
    GridConfig {
        methods,
        train_otps,
        test_conditions: conds,
        seed: 20240,
        inversion: InversionConfig::default(),
        fill: FillStrategy::MeanTrajectory,
        omp: OmpConfig { sparsity: 20, residual_tol: 1e-4 },
    }
}

fn artifacts<'a>(fx: &'a Fixtures) -> GridArtifacts<'a> {
    GridArtifacts {
        autoencoders: fx.aes.iter().map(|(k, (m, s))| (k.clone(), (m, s.as_ref()))).collect(),
        classifier: &fx.classifier,
        framewise: Some(&fx.framewise),
        dictionary: Some(&fx.dictionary),
        incomplete_classifiers: BTreeMap::new(),
        full_stats: Some(&fx.full_stats),
    }
}

static FIXTURES: Lazy<Fixtures> = Lazy::new(|| {
    let t0 = Instant::now();
    eprintln!("[fixture] generating and normalizing the synthetic dataset...");
    let data = synth::generate(&synth::SynthConfig::default());
    let topo = synth::topology();
    let normalize = |v: &[ActionSequence]| -> Vec<ActionSequence> {
        v.iter()
            .map(|s| hip_center(&resample(s, 64).unwrap(), &topo).unwrap())
            .collect()
    };
    let train = normalize(&data.train);
    let test = normalize(&data.test);
    let hip = topo.hip_index;

    let mut aes = BTreeMap::new();
    for (key, otp, loss, pf, seed) in [
        ("100", 100.0, LossMode::Full, false, 101u64),
        ("75", 75.0, LossMode::Ambient, false, 102),
        ("50", 50.0, LossMode::Ambient, false, 103),
        ("den75", 75.0, LossMode::Denoising, false, 104),
        ("pf75", 75.0, LossMode::Ambient, true, 105),
        ("pf50", 50.0, LossMode::Ambient, true, 106),
    ] {
        aes.insert(key.to_string(), train_ae_variant(&train, hip, key, otp, loss, pf, seed));
    }

    eprintln!("[fixture] training the evaluation classifier...");
    let cls_spec = ClassifierSpec {
        input_channels: 3 * synth::JOINTS,
        frames: 64,
        blocks: vec![32, 48, 64],
        convs_per_block: 1,
        kernel: 8,
        classes: synth::CLASSES,
    };
    let mut classifier = TcnClassifier::<f32>::build(&cls_spec, 7).expect("spec valid");
    train_classifier(&mut classifier, &train, &train_cfg(LossMode::Full, 2500, 107)).expect("classifier trains");

    eprintln!("[fixture] training the frame-wise baseline...");
    let fw_spec = FramewiseSpec { input_dim: 3 * synth::JOINTS, hidden: vec![64, 32, 16], latent: 8 };
    let mut framewise = FramewiseAutoencoder::<f32>::build(&fw_spec, 8).expect("spec valid");
    train_framewise(&mut framewise, &train, &train_cfg(LossMode::Full, 3000, 108)).expect("framewise trains");

    eprintln!("[fixture] learning the dictionary...");
    let rows: Vec<Vec<f64>> = train.iter().map(mocomplete::sparse::vectorize_sequence).collect();
    let dictionary = learn_dictionary(
        &rows,
        &DictLearnConfig {
            atoms: 200,
            alpha: 0.2,
            batch_size: 10,
            iterations: 400,
            seed: 109,
            coder: CodingStep::Lasso,
        },
    )
    .expect("dictionary learns")
    .dictionary;

    let full_stats = mean_trajectories(&train, None).expect("stats");

    let fx_partial = Fixtures {
        topo,
        train,
        test,
        aes,
        classifier,
        framewise,
        dictionary,
        full_stats,
        grid_main: empty_report(),
        grid_main_seconds: 0.0,
        grid_perframe: empty_report(),
        grid_baselines: empty_report(),
        grid_denoising: empty_report(),
    };

    eprintln!("[fixture] running the main grid (criterion 4 structure)...");
    let g0 = Instant::now();
    let main_cfg = grid_config(
        vec![Method::Feedforward, Method::LatentOpt],
        TRAIN_OTPS.iter().map(|s| s.to_string()).collect(),
        vec![TestCondition::Otp { otp: 75.0 }, TestCondition::Otp { otp: 50.0 }],
    );
    let grid_main = run_grid(
        &fx_partial.test,
        &fx_partial.topo,
        &artifacts(&fx_partial),
        &main_cfg,
        None,
    )
    .expect("main grid");
    let grid_main_seconds = g0.elapsed().as_secs_f64();

    eprintln!("[fixture] running the per-frame grid (criterion 7)...");
    let pf_cfg = grid_config(
        vec![Method::Feedforward, Method::LatentOpt],
        vec!["100".into(), "pf75".into(), "pf50".into()],
        vec![
            TestCondition::PerFrameOtp { otp: 75.0 },
            TestCondition::PerFrameOtp { otp: 50.0 },
        ],
    );
    let grid_perframe =
        run_grid(&fx_partial.test, &fx_partial.topo, &artifacts(&fx_partial), &pf_cfg, None)
            .expect("per-frame grid");

    eprintln!("[fixture] running the baseline grid (criterion 5)...");
    let base_cfg = grid_config(
        vec![Method::Framewise, Method::Sparse, Method::Nearest],
        vec!["75".into()],
        vec![TestCondition::Otp { otp: 50.0 }],
    );
    let grid_baselines =
        run_grid(&fx_partial.test, &fx_partial.topo, &artifacts(&fx_partial), &base_cfg, None)
            .expect("baseline grid");

    eprintln!("[fixture] running the denoising grid (criterion 6)...");
    let dae_cfg = grid_config(
        vec![Method::LatentOpt],
        vec!["den75".into()],
        vec![TestCondition::Otp { otp: 50.0 }],
    );
    let grid_denoising =
        run_grid(&fx_partial.test, &fx_partial.topo, &artifacts(&fx_partial), &dae_cfg, None)
            .expect("denoising grid");

    eprintln!("[fixture] ready in {:.0}s", t0.elapsed().as_secs_f64());
    Fixtures {
        grid_main,
        grid_main_seconds,
        grid_perframe,
        grid_baselines,
        grid_denoising,
        ..fx_partial
    }
});

fn empty_report() -> ExperimentReport {
    ExperimentReport {
        schema: String::new(),
        crate_version: String::new(),
        config_hash: String::new(),
        rows: vec![],
        detail: vec![],
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

// ---------------------------------------------------------------------------
// criterion 1: autodiff correctness
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_autodiff_correctness() {
    let t0 = Instant::now();
    let mut worst: BTreeMap<&'static str, f64> = BTreeMap::new();
    let mut record = |name: &'static str, err: f64| {
        let slot = worst.entry(name).or_insert(0.0);
        if err > *slot {
            *slot = err;
        }
        assert!(err < FD_TOL, "{name} gradient error {err} exceeds {FD_TOL}");
    };

    for trial in 0..20u64 {
        let mut trial_rng = ChaCha8Rng::seed_from_u64(5000 + trial);
        let rng = &mut trial_rng;
        let nb = rng.gen_range(1..3);
        let cin = rng.gen_range(1..4);
        let cout = rng.gen_range(1..4);
        let t = rng.gen_range(4..10) & !1usize; // even, for pooling
        let t = t.max(4);
        let k = rng.gen_range(1..5).min(t);

        // conv1d: input, weight, bias
        {
            let x0 = rand_vec(rng, nb * cin * t);
            let w0 = rand_vec(rng, cout * cin * k);
            let b0 = rand_vec(rng, cout);
            let lw = rand_vec(rng, nb * cout * t);
            let f = |xv: &[f64], wv: &[f64], bv: &[f64]| -> f64 {
                let x = Array3::from_vec(nb, cin, t, xv.to_vec()).unwrap();
                let w = Tensor::from_vec(&[cout, cin, k], wv.to_vec()).unwrap();
                let b = Tensor::from_vec(&[cout], bv.to_vec()).unwrap();
                ops::conv1d(&x, &w, &b).unwrap().data().iter().zip(&lw).map(|(v, u)| v * u).sum()
            };
            let x = Array3::from_vec(nb, cin, t, x0.clone()).unwrap();
            let w = Tensor::from_vec(&[cout, cin, k], w0.clone()).unwrap();
            let dy = Array3::from_vec(nb, cout, t, lw.clone()).unwrap();
            let (dx, dw, db) = ops::conv1d_backward(&x, &w, &dy).unwrap();
            record("conv1d/dx", max_rel_error(dx.data(), &finite_difference_grad(|v| f(v, &w0, &b0), &x0, FD_STEP)));
            record("conv1d/dw", max_rel_error(dw.data(), &finite_difference_grad(|v| f(&x0, v, &b0), &w0, FD_STEP)));
            record("conv1d/db", max_rel_error(db.data(), &finite_difference_grad(|v| f(&x0, &w0, v), &b0, FD_STEP)));
        }

        // conv_transpose1d + adjoint identity against a brute-force stride-2
        // convolution written straight from the index formula
        {
            let x0 = rand_vec(rng, nb * cin * t);
            let w0 = rand_vec(rng, cout * cin * k);
            let b0 = rand_vec(rng, cout);
            let lw = rand_vec(rng, nb * cout * 2 * t);
            let f = |xv: &[f64], wv: &[f64], bv: &[f64]| -> f64 {
                let x = Array3::from_vec(nb, cin, t, xv.to_vec()).unwrap();
                let w = Tensor::from_vec(&[cout, cin, k], wv.to_vec()).unwrap();
                let b = Tensor::from_vec(&[cout], bv.to_vec()).unwrap();
                ops::conv_transpose1d(&x, &w, &b).unwrap().data().iter().zip(&lw).map(|(v, u)| v * u).sum()
            };
            let x = Array3::from_vec(nb, cin, t, x0.clone()).unwrap();
            let w = Tensor::from_vec(&[cout, cin, k], w0.clone()).unwrap();
            let dy = Array3::from_vec(nb, cout, 2 * t, lw.clone()).unwrap();
            let (dx, dw, db) = ops::conv_transpose1d_backward(&x, &w, &dy).unwrap();
            record("convT/dx", max_rel_error(dx.data(), &finite_difference_grad(|v| f(v, &w0, &b0), &x0, FD_STEP)));
            record("convT/dw", max_rel_error(dw.data(), &finite_difference_grad(|v| f(&x0, v, &b0), &w0, FD_STEP)));
            record("convT/db", max_rel_error(db.data(), &finite_difference_grad(|v| f(&x0, &w0, v), &b0, FD_STEP)));

            // adjoint: <convT(x), y> == <x, stride2conv(y)>
            let y = Array3::from_vec(nb, cout, 2 * t, rand_vec(rng, nb * cout * 2 * t)).unwrap();
            let zero_b = Tensor::zeros(&[cout]);
            let lhs: f64 = ops::conv_transpose1d(&x, &w, &zero_b)
                .unwrap()
                .data()
                .iter()
                .zip(y.data())
                .map(|(p, q)| p * q)
                .sum();
            let pl = (k / 2) as isize;
            let mut rhs = 0.0;
            for b in 0..nb {
                for i in 0..cin {
                    for tt in 0..t {
                        let mut acc = 0.0;
                        for o in 0..cout {
                            for j in 0..k {
                                let idx = 2 * tt as isize + pl - j as isize;
                                if idx >= 0 && idx < 2 * t as isize {
                                    acc += w0[(o * cin + i) * k + j] * y.at(b, o, idx as usize);
                                }
                            }
                        }
                        rhs += acc * x.at(b, i, tt);
                    }
                }
            }
            let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12);
            assert!(rel < ADJOINT_TOL, "adjoint identity error {rel}");
        }

        // avg_pool1d
        {
            let x0 = rand_vec(rng, nb * cin * t);
            let lw = rand_vec(rng, nb * cin * t / 2);
            let f = |xv: &[f64]| -> f64 {
                let x = Array3::from_vec(nb, cin, t, xv.to_vec()).unwrap();
                ops::avg_pool1d(&x).unwrap().data().iter().zip(&lw).map(|(v, u)| v * u).sum()
            };
            let dy = Array3::from_vec(nb, cin, t / 2, lw.clone()).unwrap();
            let dx = ops::avg_pool1d_backward(&dy);
            record("avg_pool/dx", max_rel_error(dx.data(), &finite_difference_grad(f, &x0, FD_STEP)));
        }

        // linear
        {
            let (rows, inf, outf) = (nb, cin + 1, cout + 1);
            let x0 = rand_vec(rng, rows * inf);
            let w0 = rand_vec(rng, outf * inf);
            let b0 = rand_vec(rng, outf);
            let lw = rand_vec(rng, rows * outf);
            let f = |xv: &[f64], wv: &[f64], bv: &[f64]| -> f64 {
                let x = Mat::from_vec(rows, inf, xv.to_vec()).unwrap();
                let w = Tensor::from_vec(&[outf, inf], wv.to_vec()).unwrap();
                let b = Tensor::from_vec(&[outf], bv.to_vec()).unwrap();
                ops::linear(&x, &w, &b).unwrap().data().iter().zip(&lw).map(|(v, u)| v * u).sum()
            };
            let x = Mat::from_vec(rows, inf, x0.clone()).unwrap();
            let w = Tensor::from_vec(&[outf, inf], w0.clone()).unwrap();
            let dy = Mat::from_vec(rows, outf, lw.clone()).unwrap();
            let (dx, dw, db) = ops::linear_backward(&x, &w, &dy).unwrap();
            record("linear/dx", max_rel_error(dx.data(), &finite_difference_grad(|v| f(v, &w0, &b0), &x0, FD_STEP)));
            record("linear/dw", max_rel_error(dw.data(), &finite_difference_grad(|v| f(&x0, v, &b0), &w0, FD_STEP)));
            record("linear/db", max_rel_error(db.data(), &finite_difference_grad(|v| f(&x0, &w0, v), &b0, FD_STEP)));
        }

        // relu
        {
            let x0 = rand_vec(rng, nb * cin * t);
            let lw = rand_vec(rng, nb * cin * t);
            let f = |xv: &[f64]| -> f64 { ops::relu(xv).iter().zip(&lw).map(|(v, u)| v * u).sum() };
            let dx = ops::relu_backward(&x0, &lw);
            record("relu/dx", max_rel_error(&dx, &finite_difference_grad(f, &x0, FD_STEP)));
        }

        // batchnorm (train mode), input / scale / shift
        {
            let c = cin;
            let x0 = rand_vec(rng, nb * c * t);
            let g0: Vec<f64> = rand_vec(rng, c).iter().map(|v| v + 1.5).collect();
            let s0 = rand_vec(rng, c);
            let lw = rand_vec(rng, nb * c * t);
            let f = |xv: &[f64], gv: &[f64], sv: &[f64]| -> f64 {
                let x = Array3::from_vec(nb, c, t, xv.to_vec()).unwrap();
                let gamma = Tensor::from_vec(&[c], gv.to_vec()).unwrap();
                let beta = Tensor::from_vec(&[c], sv.to_vec()).unwrap();
                let mut rm = Tensor::zeros(&[c]);
                let mut rv = Tensor::full(&[c], 1.0);
                let (y, _) = ops::batchnorm1d_train(&x, &gamma, &beta, &mut rm, &mut rv, 1e-8, 0.1).unwrap();
                y.data().iter().zip(&lw).map(|(v, u)| v * u).sum()
            };
            let x = Array3::from_vec(nb, c, t, x0.clone()).unwrap();
            let gamma = Tensor::from_vec(&[c], g0.clone()).unwrap();
            let beta = Tensor::from_vec(&[c], s0.clone()).unwrap();
            let mut rm = Tensor::zeros(&[c]);
            let mut rv = Tensor::full(&[c], 1.0);
            let (_, cache) = ops::batchnorm1d_train(&x, &gamma, &beta, &mut rm, &mut rv, 1e-8, 0.1).unwrap();
            let dy = Array3::from_vec(nb, c, t, lw.clone()).unwrap();
            let (dx, dgamma, dbeta) = ops::batchnorm1d_train_backward(&cache, &gamma, &dy);
            record("batchnorm/dx", max_rel_error(dx.data(), &finite_difference_grad(|v| f(v, &g0, &s0), &x0, FD_STEP)));
            record("batchnorm/dscale", max_rel_error(dgamma.data(), &finite_difference_grad(|v| f(&x0, v, &s0), &g0, FD_STEP)));
            record("batchnorm/dshift", max_rel_error(dbeta.data(), &finite_difference_grad(|v| f(&x0, &g0, v), &s0, FD_STEP)));
        }

        // softmax cross-entropy
        {
            let (rows, classes) = (nb + 1, cout + 2);
            let l0 = rand_vec(rng, rows * classes);
            let labels: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..classes)).collect();
            let f = |lv: &[f64]| -> f64 {
                let logits = Mat::from_vec(rows, classes, lv.to_vec()).unwrap();
                ops::softmax_cross_entropy(&logits, &labels).unwrap().0
            };
            let logits = Mat::from_vec(rows, classes, l0.clone()).unwrap();
            let (_, probs) = ops::softmax_cross_entropy(&logits, &labels).unwrap();
            let grad = ops::softmax_cross_entropy_backward(&probs, &labels);
            record("cross_entropy/dlogits", max_rel_error(grad.data(), &finite_difference_grad(f, &l0, FD_STEP)));
        }
    }

    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < GRADCHECK_BUDGET_S, "gradient checks took {elapsed:.1}s");
    println!(
        "criterion 1 PASS: 20 randomized shapes per layer, max rel err {:.2e}, adjoint < {ADJOINT_TOL:.0e}, {elapsed:.1}s",
        worst.values().fold(0.0f64, |a, &b| a.max(b))
    );
}

// ---------------------------------------------------------------------------
// criterion 2: loss algebra
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_loss_algebra() {
    let t0 = Instant::now();

    // masked loss with a full mask is bit-for-bit the full loss
    let mut rng = ChaCha8Rng::seed_from_u64(4202);
    for _ in 0..50 {
        let (j, n) = (rng.gen_range(2..8), rng.gen_range(2..10));
        let x = ActionSequence::from_coords(j, n, rand_vec(&mut rng, 3 * j * n)).unwrap();
        let xhat = ActionSequence::from_coords(j, n, rand_vec(&mut rng, 3 * j * n)).unwrap();
        let full = MaskSpec::PerSequence { joints: j, observed: (0..j).collect() };
        let a = masked_loss(&x, &xhat, &full).unwrap();
        let b = full_loss(&x, &xhat).unwrap();
        assert_eq!(a.to_bits(), b.to_bits(), "masked(full mask) != full bitwise");
    }

    // ambient training is blind off-support: perturbing unobserved target
    // entries leaves the whole trajectory bit-identical
    let data = synth::generate(&synth::SynthConfig {
        train: 8,
        test: 0,
        frames_min: 16,
        frames_max: 16,
        ..Default::default()
    });
    let topo = synth::topology();
    let train: Vec<ActionSequence> =
        data.train.iter().map(|s| hip_center(s, &topo).unwrap()).collect();
    let masks: Vec<MaskSpec> = train
        .iter()
        .enumerate()
        .map(|(i, s)| gen_random_mask(s.joints(), topo.hip_index, 50.0, 9000 + i as u64).unwrap())
        .collect();
    let mut perturbed = train.clone();
    for (seq, mask) in perturbed.iter_mut().zip(&masks) {
        for n in 0..seq.frames() {
            for j in 0..seq.joints() {
                if !mask.is_observed(j, n) {
                    let p = seq.joint(j, n);
                    seq.set_joint(j, n, [p[0] * -3.0 + 1.0, p[1] + 7.5, p[2] - 2.25]);
                }
            }
        }
    }
    let spec = AutoencoderSpec {
        input_channels: 3 * synth::JOINTS,
        depth: 2,
        kernel: 4,
        feature_maps: 12,
        latent: 8,
        frames: 16,
    };
    let cfg = TrainConfig { batch_size: 4, ..train_cfg(LossMode::Ambient, 40, 4203) };
    let mut m1 = Autoencoder::<f32>::build(&spec, 6).unwrap();
    let o1 = train_autoencoder(&mut m1, &train, MaskAssignment::Fixed(&masks), &cfg).unwrap();
    let mut m2 = Autoencoder::<f32>::build(&spec, 6).unwrap();
    let o2 = train_autoencoder(&mut m2, &perturbed, MaskAssignment::Fixed(&masks), &cfg).unwrap();
    for (a, b) in o1.log.entries.iter().zip(&o2.log.entries) {
        assert_eq!(a.loss.to_bits(), b.loss.to_bits(), "loss trace diverged");
    }
    for (pa, pb) in m1.params().iter().zip(m2.params().iter()) {
        let bits_a: Vec<u32> = pa.1.data().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u32> = pb.1.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b, "parameter {} depends on unobserved entries", pa.0);
    }

    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < LOSS_ALGEBRA_BUDGET_S, "loss algebra took {elapsed:.1}s");
    println!("criterion 2 PASS: full-mask equality bitwise, ambient blind off-support, {elapsed:.1}s");
}

// ---------------------------------------------------------------------------
// criterion 3: inversion guarantee
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_inversion_guarantee() {
    let fx = &*FIXTURES;
    let t0 = Instant::now();
    let (model, stats) = &fx.aes["75"];
    let stats = stats.as_ref().expect("ambient AE has stats");

    use rayon::prelude::*;
    let outcomes: Vec<(f64, f64)> = (0..INVERSION_PAIRS)
        .into_par_iter()
        .map(|i| {
            let x = &fx.test[i % fx.test.len()];
            let mask =
                gen_random_mask(x.joints(), fx.topo.hip_index, 50.0, 31_000 + i as u64).unwrap();
            let y = apply_mask(x, &mask).unwrap();
            let filled =
                mocomplete::data::fill_missing(&y, &mask, FillStrategy::MeanTrajectory, Some(stats))
                    .unwrap();
            let (_, z0) = feedforward_reconstruct(&filled.to_array3::<f32>(), model).unwrap();
            let res = latent_optimize(
                &y.to_array3::<f32>(),
                &mask,
                model,
                &z0,
                &InversionConfig::default(),
            )
            .unwrap();
            (res.initial_objective, res.objective)
        })
        .collect();

    let mut improved = 0usize;
    for (i, (initial, best)) in outcomes.iter().enumerate() {
        assert!(
            best <= initial,
            "pair {i}: reported objective {best} exceeds feed-forward objective {initial}"
        );
        if (initial - best) / initial.max(f64::MIN_POSITIVE) > INVERSION_REL_IMPROVEMENT {
            improved += 1;
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(
        improved >= INVERSION_MIN_IMPROVED,
        "only {improved}/{INVERSION_PAIRS} pairs improved by more than 5%"
    );
    assert!(elapsed < INVERSION_BUDGET_S, "inversions took {elapsed:.1}s");
    println!(
        "criterion 3 PASS: objective <= feed-forward on {INVERSION_PAIRS}/{INVERSION_PAIRS} pairs, >5% improvement on {improved}, {elapsed:.1}s"
    );
}

// ---------------------------------------------------------------------------
// criterion 4: trend reproduction
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_trend_reproduction() {
    let fx = &*FIXTURES;
    let report = &fx.grid_main;
    let mut lines = Vec::new();
    for train in TRAIN_OTPS {
        for cond in ["otp75", "otp50"] {
            let ff = report.row(train, cond, "feedforward").expect("cell present");
            let opt = report.row(train, cond, "latent-opt").expect("cell present");
            assert_eq!(ff.status, "ok");
            assert_eq!(opt.status, "ok");
            let (r_ff, r_opt) = (ff.rmse_cm.unwrap(), opt.rmse_cm.unwrap());
            assert!(
                r_opt < r_ff,
                "{train}/{cond}: mean RMSE of D(z*) = {r_opt:.3} not below D(E(Y)) = {r_ff:.3}"
            );
            lines.push(format!(
                "{train}/{cond}: rmse {:.2}->{:.2}cm acc {:.1}->{:.1}%",
                r_ff,
                r_opt,
                ff.acc_percent.unwrap(),
                opt.acc_percent.unwrap()
            ));
        }
    }
    for (train, cond) in [("75", "otp50"), ("50", "otp50")] {
        let ff = report.row(train, cond, "feedforward").unwrap().acc_percent.unwrap();
        let opt = report.row(train, cond, "latent-opt").unwrap().acc_percent.unwrap();
        assert!(
            opt - ff >= ACC_GAP_POINTS,
            "{train}/{cond}: accuracy gap {:.1} points below {ACC_GAP_POINTS}",
            opt - ff
        );
    }
    assert!(
        fx.grid_main_seconds < GRID_BUDGET_S,
        "grid took {:.0}s, budget {GRID_BUDGET_S}s",
        fx.grid_main_seconds
    );
    println!(
        "criterion 4 PASS: optimization beats feed-forward at every cell ({}), grid {:.0}s",
        lines.join("; "),
        fx.grid_main_seconds
    );
}

// ---------------------------------------------------------------------------
// criterion 5: baseline ordering
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_baseline_ordering() {
    let fx = &*FIXTURES;
    let opt = fx.grid_main.row("75", "otp50", "latent-opt").unwrap();
    let ff = fx.grid_main.row("75", "otp50", "feedforward").unwrap();
    let fw = fx.grid_baselines.row("75", "otp50", "framewise").unwrap();
    let sparse = fx.grid_baselines.row("75", "otp50", "sparse").unwrap();
    let nearest = fx.grid_baselines.row("75", "otp50", "nearest").unwrap();
    for r in [fw, sparse, nearest] {
        assert_eq!(r.status, "ok", "{}", r.method);
    }

    let acc = |r: &mocomplete::eval::ReportRow| r.acc_percent.unwrap();
    let best_baseline = acc(fw).max(acc(sparse)).max(acc(nearest));
    assert!(
        acc(opt) > acc(ff),
        "accuracy: D(z*) {:.1} must beat D(E(Y)) {:.1}",
        acc(opt),
        acc(ff)
    );
    assert!(
        acc(ff) > best_baseline,
        "accuracy: D(E(Y)) {:.1} must beat best baseline {:.1} (fw {:.1}, sparse {:.1}, nearest {:.1})",
        acc(ff),
        best_baseline,
        acc(fw),
        acc(sparse),
        acc(nearest)
    );
    assert!(
        fw.rmse_cm.unwrap() > ff.rmse_cm.unwrap(),
        "frame-wise RMSE {:.2} must exceed action-AE RMSE {:.2}",
        fw.rmse_cm.unwrap(),
        ff.rmse_cm.unwrap()
    );
    println!(
        "criterion 5 PASS at 75/50: acc D(z*) {:.1} > D(E(Y)) {:.1} > max(fw {:.1}, sparse {:.1}, nearest {:.1}); rmse fw {:.2} > ae {:.2}",
        acc(opt),
        acc(ff),
        acc(fw),
        acc(sparse),
        acc(nearest),
        fw.rmse_cm.unwrap(),
        ff.rmse_cm.unwrap()
    );
}

// ---------------------------------------------------------------------------
// criterion 6: ambient vs denoising trend
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_ambient_vs_denoising() {
    let fx = &*FIXTURES;
    let ambient = fx.grid_main.row("75", "otp50", "latent-opt").unwrap().rmse_cm.unwrap();
    let denoising = fx.grid_denoising.row("den75", "otp50", "latent-opt").unwrap().rmse_cm.unwrap();

    if ambient <= denoising * DAE_TOLERANCE_BAND {
        println!(
            "criterion 6 PASS at 75/50: ambient D(z*) RMSE {ambient:.3} <= denoising {denoising:.3} (5% band)"
        );
        return;
    }
    // a band violation only fails after three consecutive seeded runs agree
    eprintln!(
        "criterion 6: band violated on the base seed (ambient {ambient:.3} vs denoising {denoising:.3}); rerunning"
    );
    let mut violations = 1;
    for extra_seed in [1u64, 2] {
        let (amb, den) = retrain_and_compare(fx, extra_seed);
        eprintln!("criterion 6 rerun {extra_seed}: ambient {amb:.3} vs denoising {den:.3}");
        if amb > den * DAE_TOLERANCE_BAND {
            violations += 1;
        }
    }
    assert!(
        violations < 3,
        "ambient-trained D(z*) RMSE exceeded denoising-trained beyond the 5% band in 3 consecutive seeded runs"
    );
    println!("criterion 6 PASS: band violation did not persist across 3 seeded runs ({violations}/3)");
}

fn retrain_and_compare(fx: &Fixtures, seed_shift: u64) -> (f64, f64) {
    let hip = fx.topo.hip_index;
    let (amb_model, amb_stats) =
        train_ae_variant(&fx.train, hip, "amb-rerun", 75.0, LossMode::Ambient, false, 102 + 10 * seed_shift);
    let (den_model, den_stats) =
        train_ae_variant(&fx.train, hip, "den-rerun", 75.0, LossMode::Denoising, false, 104 + 10 * seed_shift);
    let mut aes = BTreeMap::new();
    aes.insert("amb".to_string(), (&amb_model, amb_stats.as_ref()));
    aes.insert("den".to_string(), (&den_model, den_stats.as_ref()));
    let artifacts = GridArtifacts {
        autoencoders: aes,
        classifier: &fx.classifier,
        framewise: None,
        dictionary: None,
        incomplete_classifiers: BTreeMap::new(),
        full_stats: Some(&fx.full_stats),
    };
    let mut cfg = grid_config(
        vec![Method::LatentOpt],
        vec!["amb".into(), "den".into()],
        vec![TestCondition::Otp { otp: 50.0 }],
    );
    cfg.seed = 20240 + seed_shift;
    let report = run_grid(&fx.test, &fx.topo, &artifacts, &cfg, None).unwrap();
    (
        report.row("amb", "otp50", "latent-opt").unwrap().rmse_cm.unwrap(),
        report.row("den", "otp50", "latent-opt").unwrap().rmse_cm.unwrap(),
    )
}

// ---------------------------------------------------------------------------
// criterion 7: per-frame masks
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_per_frame_masks() {
    let fx = &*FIXTURES;
    let report = &fx.grid_perframe;
    let mut lines = Vec::new();
    for train in ["100", "pf75", "pf50"] {
        for cond in ["otp75-perframe", "otp50-perframe"] {
            let ff = report.row(train, cond, "feedforward").expect("cell present");
            let opt = report.row(train, cond, "latent-opt").expect("cell present");
            assert_eq!(ff.status, "ok");
            assert_eq!(opt.status, "ok");
            assert!(
                opt.rmse_cm.unwrap() < ff.rmse_cm.unwrap(),
                "{train}/{cond}: per-frame RMSE ordering violated"
            );
            lines.push(format!(
                "{train}/{cond}: {:.2}->{:.2}cm",
                ff.rmse_cm.unwrap(),
                opt.rmse_cm.unwrap()
            ));
        }
    }
    for (train, cond) in [("pf75", "otp50-perframe"), ("pf50", "otp50-perframe")] {
        let ff = report.row(train, cond, "feedforward").unwrap().acc_percent.unwrap();
        let opt = report.row(train, cond, "latent-opt").unwrap().acc_percent.unwrap();
        assert!(
            opt - ff >= ACC_GAP_POINTS,
            "{train}/{cond}: per-frame accuracy gap {:.1} below {ACC_GAP_POINTS}",
            opt - ff
        );
    }
    println!("criterion 7 PASS: pipeline unchanged under per-frame masks ({})", lines.join("; "));
}

// ---------------------------------------------------------------------------
// criterion 8: sparse-coding oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_sparse_oracle() {
    let mut recovered = 0usize;
    for trial in 0..SPARSE_TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(8800 + trial as u64);
        let (atoms, dim) = (10usize, 24usize);
        // incoherent random unit atoms
        let mut v = vec![0.0f64; atoms * dim];
        for k in 0..atoms {
            let row = &mut v[k * dim..(k + 1) * dim];
            for x in row.iter_mut() {
                *x = rng.gen_range(-1.0..1.0);
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            row.iter_mut().for_each(|x| *x /= norm);
        }
        let dict = Dictionary { atoms, dim, v };

        // plant an s<=2 signal and hide ~40% of coordinates
        let s = 1 + (trial % 2);
        let mut support: Vec<usize> = Vec::new();
        while support.len() < s {
            let k = rng.gen_range(0..atoms);
            if !support.contains(&k) {
                support.push(k);
            }
        }
        support.sort_unstable();
        let coeffs: Vec<f64> = support
            .iter()
            .map(|_| {
                let c: f64 = rng.gen_range(0.5..2.0);
                if rng.gen_bool(0.5) {
                    c
                } else {
                    -c
                }
            })
            .collect();
        let mut y = vec![0.0f64; dim];
        for (k, c) in support.iter().zip(&coeffs) {
            for (yy, a) in y.iter_mut().zip(dict.atom(*k)) {
                *yy += c * a;
            }
        }
        let observed: Vec<bool> = (0..dim).map(|_| rng.gen_bool(0.6)).collect();
        if observed.iter().filter(|&&o| o).count() < 8 {
            continue; // keep the masked system overdetermined
        }

        let code = omp_encode(
            &y,
            &dict,
            Some(&observed),
            &OmpConfig { sparsity: s, residual_tol: 0.0 },
        )
        .unwrap();
        let mut got = code.support.clone();
        got.sort_unstable();
        assert_eq!(got, support, "trial {trial}: wrong support");
        assert!(
            code.residual_norm < SPARSE_RESIDUAL_TOL,
            "trial {trial}: residual {:.2e}",
            code.residual_norm
        );

        // brute force over all supports of size <= s confirms optimality
        let obs_idx: Vec<usize> = (0..dim).filter(|&i| observed[i]).collect();
        let restricted: Vec<Vec<f64>> = (0..atoms)
            .map(|k| obs_idx.iter().map(|&i| dict.atom(k)[i]).collect())
            .collect();
        let y_obs: Vec<f64> = obs_idx.iter().map(|&i| y[i]).collect();
        let mut best = f64::INFINITY;
        let mut best_support = Vec::new();
        let mut consider = |sup: &[usize]| {
            if let Some(r) = ls_residual(&restricted, sup, &y_obs) {
                if r < best {
                    best = r;
                    best_support = sup.to_vec();
                }
            }
        };
        for a in 0..atoms {
            consider(&[a]);
            if s == 2 {
                for b in a + 1..atoms {
                    consider(&[a, b]);
                }
            }
        }
        assert!(
            code.residual_norm <= best + 1e-9,
            "trial {trial}: OMP residual {:.2e} vs brute-force optimum {best:.2e}",
            code.residual_norm
        );
        recovered += 1;
    }
    assert!(recovered >= SPARSE_TRIALS * 9 / 10, "too few usable trials: {recovered}");
    println!(
        "criterion 8 PASS: planted supports recovered with residual < 1e-6 in {recovered}/{recovered} usable trials, brute force confirms optimality"
    );
}

/// Least-squares residual norm on a fixed support (independent brute-force
/// route; Gram solve via pivoted Gaussian elimination).
fn ls_residual(restricted: &[Vec<f64>], support: &[usize], y: &[f64]) -> Option<f64> {
    let s = support.len();
    let mut g = vec![0.0f64; s * s];
    let mut b = vec![0.0f64; s];
    for (i, &ki) in support.iter().enumerate() {
        b[i] = restricted[ki].iter().zip(y).map(|(a, yy)| a * yy).sum();
        for (j, &kj) in support.iter().enumerate() {
            g[i * s + j] = restricted[ki].iter().zip(&restricted[kj]).map(|(a, c)| a * c).sum();
        }
    }
    // gaussian elimination with partial pivoting
    let mut theta = b.clone();
    for col in 0..s {
        let mut piv = col;
        for r in col + 1..s {
            if g[r * s + col].abs() > g[piv * s + col].abs() {
                piv = r;
            }
        }
        if g[piv * s + col].abs() < 1e-12 {
            return None;
        }
        if piv != col {
            for c in 0..s {
                g.swap(col * s + c, piv * s + c);
            }
            theta.swap(col, piv);
        }
        for r in col + 1..s {
            let f = g[r * s + col] / g[col * s + col];
            for c in col..s {
                g[r * s + c] -= f * g[col * s + c];
            }
            theta[r] -= f * theta[col];
        }
    }
    for r in (0..s).rev() {
        for c in r + 1..s {
            theta[r] -= g[r * s + c] * theta[c];
        }
        theta[r] /= g[r * s + r];
    }
    let mut resid: Vec<f64> = y.to_vec();
    for (i, &k) in support.iter().enumerate() {
        for (rv, a) in resid.iter_mut().zip(&restricted[k]) {
            *rv -= theta[i] * a;
        }
    }
    Some(resid.iter().map(|r| r * r).sum::<f64>().sqrt())
}

// ---------------------------------------------------------------------------
// criterion 9: metric fixtures
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_metric_fixtures() {
    // 0.03 m offset on every coordinate: sqrt(3) * 3 cm
    let mut rng = ChaCha8Rng::seed_from_u64(4209);
    let (j, n) = (5usize, 7usize);
    let x = ActionSequence::from_coords(j, n, rand_vec(&mut rng, 3 * j * n)).unwrap();
    let mut shifted = x.clone();
    for v in shifted.coords_mut() {
        *v += 0.03;
    }
    let expect = 100.0 * 0.03 * 3f64.sqrt();
    let got = rmse(&x, &shifted).unwrap();
    assert!(
        (got - expect).abs() < RMSE_FIXTURE_TOL,
        "rmse fixture: {got} vs {expect}"
    );

    // SSM symmetry + unit diagonal over 500 random inputs
    for trial in 0..SSM_TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(9100 + trial as u64);
        let (jj, nn) = (rng.gen_range(1..5), rng.gen_range(2..9));
        let s = ActionSequence::from_coords(jj, nn, rand_vec(&mut rng, 3 * jj * nn)).unwrap();
        let m = ssm(&s).unwrap();
        for a in 0..m.n {
            assert_eq!(m.at(a, a), 1.0);
            for b in 0..m.n {
                assert_eq!(m.at(a, b), m.at(b, a));
                assert!(m.at(a, b) > 0.0 && m.at(a, b) <= 1.0);
            }
        }
    }

    // rmse^2 * NJ equals the training loss to 1e-9 relative
    for trial in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(9200 + trial);
        let (jj, nn) = (rng.gen_range(1..6), rng.gen_range(2..9));
        let a = ActionSequence::from_coords(jj, nn, rand_vec(&mut rng, 3 * jj * nn)).unwrap();
        let b = ActionSequence::from_coords(jj, nn, rand_vec(&mut rng, 3 * jj * nn)).unwrap();
        let r = rmse(&a, &b).unwrap() / 100.0;
        let loss = full_loss(&a, &b).unwrap();
        let rel = (r * r * (jj * nn) as f64 - loss).abs() / loss.max(1e-300);
        assert!(rel < CONSISTENCY_REL_TOL, "consistency violated: rel {rel}");
    }
    println!(
        "criterion 9 PASS: rmse fixture {got:.6} cm, {SSM_TRIALS} SSMs symmetric with unit diagonal, rmse^2*NJ == full_loss"
    );
}

// ---------------------------------------------------------------------------
// criterion 10: determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_determinism() {
    let fx = &*FIXTURES;
    let cfg = grid_config(
        vec![Method::Feedforward, Method::LatentOpt],
        TRAIN_OTPS.iter().map(|s| s.to_string()).collect(),
        vec![TestCondition::Otp { otp: 75.0 }, TestCondition::Otp { otp: 50.0 }],
    );
    let rerun = run_grid(&fx.test, &fx.topo, &artifacts(fx), &cfg, None).unwrap();
    let csv_a = fx.grid_main.to_csv();
    let csv_b = rerun.to_csv();
    assert_eq!(csv_a, csv_b, "report CSV bytes differ between identical runs");
    let json_a = serde_json::to_string_pretty(&fx.grid_main).unwrap();
    let json_b = serde_json::to_string_pretty(&rerun).unwrap();
    assert_eq!(json_a, json_b, "report JSON bytes differ between identical runs");
    println!(
        "criterion 10 PASS: full grid rerun byte-identical ({} bytes CSV, {} bytes JSON)",
        csv_a.len(),
        json_a.len()
    );
}

// ---------------------------------------------------------------------------
// supporting check: batch loss gradient (used by inversion) against FD
// ---------------------------------------------------------------------------

#[test]
fn masked_objective_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let (nb, c, t) = (1usize, 9usize, 6usize);
    let target = Array3::from_vec(nb, c, t, rand_vec(&mut rng, nb * c * t)).unwrap();
    let masks: Vec<Vec<bool>> = vec![(0..t * 3).map(|_| rng.gen_bool(0.7)).collect()];
    let x0 = rand_vec(&mut rng, nb * c * t);
    let f = |v: &[f64]| -> f64 {
        let xhat = Array3::from_vec(nb, c, t, v.to_vec()).unwrap();
        batch_sq_loss_grad(&xhat, &target, Some(&masks)).unwrap().0
    };
    let xhat = Array3::from_vec(nb, c, t, x0.clone()).unwrap();
    let (_, grad) = batch_sq_loss_grad(&xhat, &target, Some(&masks)).unwrap();
    let fd = finite_difference_grad(f, &x0, FD_STEP);
    assert!(max_rel_error(grad.data(), &fd) < FD_TOL);
    // only criterion-less supporting line; keep output quiet
    let _ = accuracy;
}
