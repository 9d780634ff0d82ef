// Diagnose the AE-75 anomaly: seed sensitivity and capacity effects on the
// 75/75 and 75/50 cells.
use mocomplete::data::{hip_center, resample, synth, FillStrategy};
use mocomplete::eval::{run_grid, GridArtifacts, GridConfig, Method, TestCondition};
use mocomplete::invert::InversionConfig;
use mocomplete::models::*;
use mocomplete::sparse::OmpConfig;
use mocomplete::train::*;
use std::collections::BTreeMap;
use std::time::Instant;

fn tcfg(loss: LossMode, iters: u64, lr: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        loss,
        iterations: iters,
        batch_size: 32,
        learning_rate: lr,
        milestones: vec![
            Milestone { iteration: iters * 3 / 4, multiplier: 0.1 },
            Milestone { iteration: iters * 9 / 10, multiplier: 0.01 },
        ],
        seed,
        fill: FillStrategy::MeanTrajectory,
        redraw_masks_per_epoch: false,
        log_every: 1000,
    }
}

fn main() {
    let t0 = Instant::now();
    let data = synth::generate(&synth::SynthConfig::default());
    let topo = synth::topology();
    let norm = |v: &Vec<mocomplete::data::ActionSequence>| -> Vec<mocomplete::data::ActionSequence> {
        v.iter().map(|s| hip_center(&resample(s, 64).unwrap(), &topo).unwrap()).collect()
    };
    let train = norm(&data.train);
    let test = norm(&data.test);
    let hip = topo.hip_index;

    // shared classifier
    let cls_spec = ClassifierSpec {
        input_channels: 45, frames: 64, blocks: vec![32, 48, 64], convs_per_block: 1, kernel: 8, classes: 6,
    };
    let mut cls = TcnClassifier::<f32>::build(&cls_spec, 7).unwrap();
    train_classifier(&mut cls, &train, &tcfg(LossMode::Full, 2500, 2e-3, 43)).unwrap();
    let full_stats = mocomplete::data::mean_trajectories(&train, None).unwrap();
    eprintln!("[{:.0}s] classifier ready", t0.elapsed().as_secs_f64());

    for (tag, latent, maps, init_seed, mask_seed) in [
        ("seedA", 64usize, 64usize, 1075u64, 42u64),
        ("seedB", 64, 64, 2075, 52),
        ("seedC", 64, 64, 3075, 62),
        ("big", 96, 72, 1075, 42),
    ] {
        let spec = AutoencoderSpec {
            input_channels: 45, depth: 2, kernel: 4, feature_maps: maps, latent, frames: 64,
        };
        let mut model = Autoencoder::<f32>::build(&spec, init_seed).unwrap();
        let out = train_autoencoder(
            &mut model,
            &train,
            MaskAssignment::Redrawn { otp: 75.0, hip, per_frame: false },
            &tcfg(LossMode::Ambient, 3000, 2e-3, mask_seed),
        )
        .unwrap();
        let stats = out.stats;

        let mut aes = BTreeMap::new();
        aes.insert("75".to_string(), (&model, stats.as_ref()));
        let artifacts = GridArtifacts {
            autoencoders: aes,
            classifier: &cls,
            framewise: None,
            dictionary: None,
            incomplete_classifiers: BTreeMap::new(),
            full_stats: Some(&full_stats),
        };
        let cfg = GridConfig {
            methods: vec![Method::Feedforward, Method::LatentOpt],
            train_otps: vec!["75".into()],
            test_conditions: vec![TestCondition::Otp { otp: 75.0 }, TestCondition::Otp { otp: 50.0 }],
            seed: 99,
            inversion: InversionConfig::default(),
            fill: FillStrategy::MeanTrajectory,
            omp: OmpConfig { sparsity: 20, residual_tol: 1e-4 },
        };
        let report = run_grid(&test, &topo, &artifacts, &cfg, None).unwrap();
        eprintln!(
            "[{:.0}s] {tag} (train loss {:.3}):",
            t0.elapsed().as_secs_f64(),
            out.log.final_loss().unwrap()
        );
        for row in &report.rows {
            eprintln!(
                "  75/{}: {} rmse {:.2} acc {:.1}",
                row.test_condition,
                row.method,
                row.rmse_cm.unwrap(),
                row.acc_percent.unwrap()
            );
        }
    }
}
