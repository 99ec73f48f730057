use std::io::Write;

use mcpd::provider::{
    fit_em, ingest_csv, planted_stream, posterior, write_observations_csv, EmConfig, PlantedStreamConfig,
};

#[test]
fn planted_stream_survives_csv_round_trip() {
    let (records, _) = planted_stream(&PlantedStreamConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("obs.csv");
    write_observations_csv(std::fs::File::create(&path).unwrap(), &records).unwrap();
    assert_eq!(ingest_csv(&path).unwrap(), records);
}

#[test]
fn em_is_monotone_and_posteriors_normalised() {
    let (records, _) = planted_stream(&PlantedStreamConfig {
        profiles_per_regime: 3,
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let fit = fit_em(&records, &EmConfig::default()).unwrap();
    for w in fit.log_likelihood.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "log-likelihood fell: {} -> {}", w[0], w[1]);
    }
    for x in &records {
        let p = posterior(&fit.model, x).unwrap();
        assert_eq!(p.classes(), 20);
        let total: f64 = p.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn fixed_seed_gives_identical_model() {
    let (records, _) = planted_stream(&PlantedStreamConfig::default()).unwrap();
    let cfg = EmConfig {
        seed: 42,
        ..Default::default()
    };
    let a = fit_em(&records, &cfg).unwrap();
    let b = fit_em(&records, &cfg).unwrap();
    assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
}

#[test]
fn malformed_rows_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "index:t,real:x,binary:b").unwrap();
    writeln!(f, "0,0.5,1").unwrap();
    writeln!(f, "1,0.25,2").unwrap();
    drop(f);
    let err = ingest_csv(&path).unwrap_err();
    assert!(err.is_config());
    assert!(err.to_string().contains(":3:"), "{err}");
}

#[test]
fn empty_file_is_an_empty_stream() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::File::create(&path).unwrap();
    assert!(ingest_csv(&path).unwrap().is_empty());
}
