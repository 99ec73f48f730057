use std::path::Path;

use mcpd::detector::{self, DetectorConfig, Mode};
use mcpd::synthetic::{flatness_stats, generate, read_posteriors_csv, write_posteriors_csv};
use mcpd::{CategoricalPosterior, GroundTruth, SeededRng, SyntheticConfig};

#[test]
fn segment_means_converge_to_normalised_concentrations() {
    let cfg = SyntheticConfig {
        classes: 5,
        segment_length: 10_000,
        num_partitions: 2,
        eta: 3.0,
        seed: 17,
    };
    let (seq, truth) = generate(&cfg).unwrap();
    for (rho, beta) in truth.beta.iter().enumerate() {
        let b: f64 = beta.iter().sum();
        let block = &seq[rho * cfg.segment_length..(rho + 1) * cfg.segment_length];
        for k in 0..cfg.classes {
            let m = beta[k] / b;
            let mean = block.iter().map(|p| p.probs()[k]).sum::<f64>() / block.len() as f64;
            let sigma = (m * (1.0 - m) / (b + 1.0)).sqrt() / (block.len() as f64).sqrt();
            assert!(
                (mean - m).abs() <= 3.0 * sigma,
                "segment {rho}, class {k}: {mean} vs {m} (σ = {sigma})"
            );
        }
    }
}

#[test]
fn larger_eta_gives_higher_entropy() {
    let mean_entropy = |eta: f64| {
        (0..20)
            .map(|seed| {
                let cfg = SyntheticConfig {
                    eta,
                    seed,
                    ..Default::default()
                };
                let (seq, _) = generate(&cfg).unwrap();
                let per_block = flatness_stats(&seq, cfg.segment_length).unwrap();
                per_block.iter().sum::<f64>() / per_block.len() as f64
            })
            .sum::<f64>()
            / 20.0
    };
    let (low, high) = (mean_entropy(2.0), mean_entropy(10.0));
    assert!(high > low, "entropy at eta 10 = {high}, at eta 2 = {low}");
    assert!(high < (20f64).ln());
}

#[test]
fn default_grid_and_large_eta() {
    let (seq, truth) = generate(&SyntheticConfig::default()).unwrap();
    assert_eq!(seq.len(), 600);
    assert_eq!(truth.cp_times, vec![100, 200, 300, 400, 500]);
    let wide = SyntheticConfig {
        eta: 50.0,
        ..Default::default()
    };
    assert!(generate(&wide).is_ok());
}

#[test]
fn csv_and_truth_round_trip() {
    let cfg = SyntheticConfig {
        seed: 4,
        ..Default::default()
    };
    let (seq, truth) = generate(&cfg).unwrap();
    let mut buf = Vec::new();
    write_posteriors_csv(&mut buf, &seq).unwrap();
    let back = read_posteriors_csv(buf.as_slice(), Path::new("mem.csv")).unwrap();
    assert_eq!(back, seq);
    assert_eq!(GroundTruth::from_json(&truth.to_json().unwrap()).unwrap(), truth);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("posteriors.csv");
    write_posteriors_csv(std::fs::File::create(&path).unwrap(), &seq).unwrap();
    let from_disk = read_posteriors_csv(std::fs::File::open(&path).unwrap(), &path).unwrap();
    assert_eq!(from_disk, seq);
}

#[test]
fn stationary_stream_raises_no_detections() {
    for seed in 0..20 {
        let cfg = SyntheticConfig {
            num_partitions: 1,
            segment_length: 1000,
            seed,
            ..Default::default()
        };
        let (seq, _) = generate(&cfg).unwrap();
        for mode in [Mode::Multinomial { samples: 100 }, Mode::Hierarchical] {
            let run = detector::run(&DetectorConfig::new(mode), &seq, &mut SeededRng::new(seed)).unwrap();
            assert!(run.events.is_empty(), "seed {seed}, {}: {:?}", mode.label(), run.events);
        }
    }
}

#[test]
fn capped_hypotheses_leave_benchmark_path_unchanged() {
    for seed in 0..3 {
        let cfg = SyntheticConfig {
            eta: 10.0,
            seed,
            ..Default::default()
        };
        let (seq, _) = generate(&cfg).unwrap();
        let mode = Mode::Multinomial { samples: 50 };
        let full = detector::run(&DetectorConfig::new(mode), &seq, &mut SeededRng::new(1)).unwrap();
        let capped_cfg = DetectorConfig {
            prune_cap: Some(512),
            ..DetectorConfig::new(mode)
        };
        let capped = detector::run(&capped_cfg, &seq, &mut SeededRng::new(1)).unwrap();
        assert_eq!(full.runlength_path, capped.runlength_path);
        assert_eq!(full.events, capped.events);
    }
}

#[test]
fn drop_threshold_of_infinity_disables_detection() {
    let (seq, _) = generate(&SyntheticConfig {
        eta: 10.0,
        ..Default::default()
    })
    .unwrap();
    let cfg = DetectorConfig {
        drop: usize::MAX,
        ..DetectorConfig::new(Mode::Multinomial { samples: 100 })
    };
    let run = detector::run(&cfg, &seq, &mut SeededRng::new(0)).unwrap();
    assert!(run.events.is_empty());
    assert_eq!(run.runlength_path.len(), 600);
}

#[test]
fn uniform_posteriors_are_stationary_for_every_sample_size() {
    let seq = vec![CategoricalPosterior::uniform(20).unwrap(); 300];
    for samples in [1, 10, 100] {
        let run = detector::run(
            &DetectorConfig::new(Mode::Multinomial { samples }),
            &seq,
            &mut SeededRng::new(samples.into()),
        )
        .unwrap();
        assert!(run.events.is_empty());
    }
}
