use tawq::data::DatasetSpec;
use tawq::data::DatasetKind;
use tawq::layers::{LayerSpec, Precision};
use tawq::{network_forward, Checkpoint, ForwardOptions, RunConfig, TawqError};

fn config(precision: Precision, n_level: u32) -> RunConfig {
    let mut cfg = RunConfig::from_toml(
        r#"
[network]
layers = [
  { kind = "qlinear", out_features = 6 },
  { kind = "bn" },
  { kind = "lif" },
  { kind = "qlinear", out_features = 2 },
]
[dataset]
kind = "synthetic-temporal-xor"
"#,
    )
    .unwrap();
    cfg.network.precision = precision;
    cfg.network.quantize_first = true;
    cfg.quant.n_level = n_level;
    cfg.dataset = DatasetSpec {
        n_samples: 20,
        ..DatasetSpec::new(DatasetKind::SyntheticTemporalXor)
    };
    cfg
}

#[test]
fn save_load_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    for (precision, n) in [(Precision::Tawq, 1), (Precision::Tawq, 3), (Precision::FullPrecision, 1)] {
        let cfg = config(precision, n);
        let net = cfg.build_network(&[8]).unwrap();
        let ckpt = Checkpoint::from_network(&cfg, "{\"note\":1}".into(), &net).unwrap();
        let p = dir.path().join("a.tawq");
        ckpt.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes().unwrap(), std::fs::read(&p).unwrap());
        assert_eq!(back.config().unwrap(), cfg);

        let rebuilt = back.to_network().unwrap();
        let x = cfg.dataset.generate().unwrap().all().unwrap().0;
        let a = network_forward(&net, &x, ForwardOptions::default()).unwrap().0;
        let b = network_forward(&rebuilt, &x, ForwardOptions::default()).unwrap().0;
        assert_eq!(a, b);
    }
}

#[test]
fn missing_tensor_is_reported_by_name() {
    let cfg = config(Precision::Tawq, 1);
    let net = cfg.build_network(&[8]).unwrap();
    let mut ckpt = Checkpoint::from_network(&cfg, "{}".into(), &net).unwrap();
    ckpt.tensors.retain(|t| t.name != "layers.1.gamma");
    let bytes = ckpt.to_bytes().unwrap();
    let err = Checkpoint::from_bytes(&bytes).unwrap().to_network().unwrap_err();
    assert!(matches!(err, TawqError::Checkpoint(_)));
    assert!(err.to_string().contains("layers.1.gamma"), "{err}");
}

#[test]
fn truncation_and_bad_magic_are_rejected() {
    let cfg = config(Precision::Tawq, 1);
    let net = cfg.build_network(&[8]).unwrap();
    let bytes = Checkpoint::from_network(&cfg, "{}".into(), &net).unwrap().to_bytes().unwrap();
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    assert!(Checkpoint::from_bytes(&bytes[..3]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Checkpoint::from_bytes(&bad).is_err());
}

#[test]
fn layer_spec_survives_the_embedded_config() {
    let cfg = config(Precision::Tawq, 1);
    let net = cfg.build_network(&[8]).unwrap();
    let ckpt = Checkpoint::from_network(&cfg, "{}".into(), &net).unwrap();
    let layers = ckpt.config().unwrap().network.layers;
    assert!(matches!(layers[0], LayerSpec::Qlinear { out_features: 6, .. }));
}
