use mocomplete::data::{hip_center, resample, synth, FillStrategy};
use mocomplete::eval::{run_grid, GridArtifacts, GridConfig, Method, TestCondition};
use mocomplete::invert::InversionConfig;
use mocomplete::models::*;
use mocomplete::sparse::{learn_dictionary, vectorize_sequence, CodingStep, DictLearnConfig, OmpConfig};
use mocomplete::train::*;
use std::collections::BTreeMap;
use std::time::Instant;

fn tcfg(loss: LossMode, iters: u64, seed: u64) -> TrainConfig {
    TrainConfig {
        loss,
        iterations: iters,
        batch_size: 32,
        learning_rate: 2e-3,
        milestones: vec![
            Milestone { iteration: iters * 3 / 4, multiplier: 0.1 },
            Milestone { iteration: iters * 9 / 10, multiplier: 0.01 },
        ],
        seed,
        fill: FillStrategy::MeanTrajectory,
        redraw_masks_per_epoch: false,
        log_every: 500,
    }
}

fn main() {
    let t0 = Instant::now();
    let cfg = synth::SynthConfig::default();
    let data = synth::generate(&cfg);
    let topo = synth::topology();
    let norm = |v: &Vec<mocomplete::data::ActionSequence>| -> Vec<mocomplete::data::ActionSequence> {
        v.iter().map(|s| hip_center(&resample(s, 64).unwrap(), &topo).unwrap()).collect()
    };
    let train = norm(&data.train);
    let test = norm(&data.test);
    eprintln!("[{:.0}s] data ready", t0.elapsed().as_secs_f64());

    let ae_spec = AutoencoderSpec {
        input_channels: 45, depth: 2, kernel: 4, feature_maps: 64, latent: 64, frames: 64,
    };
    let ae_iters = 3000u64;
    let hip = topo.hip_index;

    let mut aes: BTreeMap<String, (Autoencoder<f32>, Option<mocomplete::data::MeanTrajectories>)> = BTreeMap::new();
    for (key, otp, loss) in [
        ("100", 100.0, LossMode::Full),
        ("75", 75.0, LossMode::Ambient),
        ("50", 50.0, LossMode::Ambient),
        ("den75", 75.0, LossMode::Denoising),
    ] {
        let mut model = Autoencoder::<f32>::build(&ae_spec, 1000 + otp as u64).unwrap();
        let assignment = if otp >= 100.0 {
            MaskAssignment::None
        } else {
            MaskAssignment::Redrawn { otp, hip, per_frame: false }
        };
        let out = train_autoencoder(&mut model, &train, assignment, &tcfg(loss, ae_iters, 42)).unwrap();
        eprintln!(
            "[{:.0}s] AE {key}: loss {:.4} -> {:.4}",
            t0.elapsed().as_secs_f64(),
            out.log.entries.first().unwrap().loss,
            out.log.final_loss().unwrap()
        );
        aes.insert(key.to_string(), (model, out.stats));
    }
    let full_stats = mocomplete::data::mean_trajectories(&train, None).unwrap();

    let cls_spec = ClassifierSpec {
        input_channels: 45, frames: 64, blocks: vec![32, 48, 64], convs_per_block: 1, kernel: 8, classes: 6,
    };
    let mut cls = TcnClassifier::<f32>::build(&cls_spec, 7).unwrap();
    let clog = train_classifier(&mut cls, &train, &tcfg(LossMode::Full, 2500, 43)).unwrap();
    eprintln!("[{:.0}s] classifier loss {:.4}", t0.elapsed().as_secs_f64(), clog.final_loss().unwrap());
    let refs: Vec<&_> = test.iter().collect();
    let labels: Vec<usize> = test.iter().map(|s| s.label.unwrap()).collect();
    let (clean_acc, _, _) = mocomplete::eval::accuracy(&cls, &refs, &labels).unwrap();
    eprintln!("clean test accuracy: {clean_acc:.1}%");
    let train_refs: Vec<&_> = train.iter().collect();
    let train_labels: Vec<usize> = train.iter().map(|s| s.label.unwrap()).collect();
    let (train_acc, _, _) = mocomplete::eval::accuracy(&cls, &train_refs, &train_labels).unwrap();
    eprintln!("train accuracy: {train_acc:.1}%");

    let fw_spec = FramewiseSpec { input_dim: 45, hidden: vec![64, 32, 16], latent: 8 };
    let mut fw = FramewiseAutoencoder::<f32>::build(&fw_spec, 8).unwrap();
    let fwlog = train_framewise(&mut fw, &train, &tcfg(LossMode::Full, 3000, 44)).unwrap();
    eprintln!("[{:.0}s] framewise loss {:.5}", t0.elapsed().as_secs_f64(), fwlog.final_loss().unwrap());

    let rows: Vec<Vec<f64>> = train.iter().map(vectorize_sequence).collect();
    let dict = learn_dictionary(&rows, &DictLearnConfig {
        atoms: 200, alpha: 0.2, batch_size: 10, iterations: 300, seed: 9, coder: CodingStep::Lasso,
    }).unwrap().dictionary;
    eprintln!("[{:.0}s] dictionary done", t0.elapsed().as_secs_f64());

    let artifacts = GridArtifacts {
        autoencoders: aes.iter().map(|(k, (m, s))| (k.clone(), (m, s.as_ref()))).collect(),
        classifier: &cls,
        framewise: Some(&fw),
        dictionary: Some(&dict),
        incomplete_classifiers: BTreeMap::new(),
        full_stats: Some(&full_stats),
    };
    let base = GridConfig {
        methods: vec![Method::Feedforward, Method::LatentOpt],
        train_otps: vec!["100".into(), "75".into(), "50".into()],
        test_conditions: vec![TestCondition::Otp { otp: 75.0 }, TestCondition::Otp { otp: 50.0 }],
        seed: 99,
        inversion: InversionConfig::default(),
        fill: FillStrategy::MeanTrajectory,
        omp: OmpConfig { sparsity: 20, residual_tol: 1e-4 },
    };
    let report = run_grid(&test, &topo, &artifacts, &base, None).unwrap();
    eprintln!("[{:.0}s] main grid done", t0.elapsed().as_secs_f64());
    println!("== main grid ==\n{}", report.to_csv());

    let baselines = GridConfig {
        methods: vec![Method::Framewise, Method::FramewiseOpt, Method::Sparse, Method::Nearest],
        train_otps: vec!["75".into()],
        test_conditions: vec![TestCondition::Otp { otp: 50.0 }],
        ..base.clone()
    };
    let report_b = run_grid(&test, &topo, &artifacts, &baselines, None).unwrap();
    eprintln!("[{:.0}s] baseline grid done", t0.elapsed().as_secs_f64());
    println!("== baselines 75/50 ==\n{}", report_b.to_csv());

    let dae = GridConfig {
        methods: vec![Method::Feedforward, Method::LatentOpt],
        train_otps: vec!["den75".into()],
        test_conditions: vec![TestCondition::Otp { otp: 75.0 }, TestCondition::Otp { otp: 50.0 }],
        ..base.clone()
    };
    let report_d = run_grid(&test, &topo, &artifacts, &dae, None).unwrap();
    eprintln!("[{:.0}s] denoising grid done", t0.elapsed().as_secs_f64());
    println!("== denoising 75 ==\n{}", report_d.to_csv());
}
