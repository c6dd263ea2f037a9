use std::fs;

use ordis::config::RunConfig;
use ordis::dataset_io::{self, MANIFEST_FILE, RECORDS_FILE};
use ordis::{checkpoint, Error};
use ordis_core::net::{Group, NetworkConfig, ParamSet};
use ordis_core::seqgen::{generate, GeneratorConfig};
use ordis_core::trainer::{Method, TrainConfig};

fn small() -> ordis_core::seqgen::Dataset {
    generate(&GeneratorConfig { n_sequences: 12, ..GeneratorConfig::default() }, 3).unwrap()
}

#[test]
fn dataset_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let data = small();
    dataset_io::save(&data, dir.path()).unwrap();
    let back = dataset_io::load(dir.path()).unwrap();
    assert_eq!(back.records, data.records);
    assert_eq!(back.manifest, data.manifest);
}

#[test]
fn truncated_records_are_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    dataset_io::save(&small(), dir.path()).unwrap();
    let path = dir.path().join(RECORDS_FILE);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, &text[..text.len() * 2 / 3]).unwrap();
    assert!(matches!(dataset_io::load(dir.path()), Err(Error::Corrupt { .. })));
}

#[test]
fn dropped_line_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    dataset_io::save(&small(), dir.path()).unwrap();
    let path = dir.path().join(RECORDS_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.pop();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    assert!(matches!(dataset_io::load(dir.path()), Err(Error::Corrupt { .. })));
}

#[test]
fn tampered_feature_fails_integrity() {
    let dir = tempfile::tempdir().unwrap();
    dataset_io::save(&small(), dir.path()).unwrap();
    let path = dir.path().join(RECORDS_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[5].split(',').map(String::from).collect();
    fields[6] = "9.999999".into();
    lines[5] = fields.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let err = dataset_io::load(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Core(ordis_core::Error::Integrity(_))), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn unknown_versions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    dataset_io::save(&small(), dir.path()).unwrap();
    let path = dir.path().join(RECORDS_FILE);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen("# ordis-dataset v1", "# ordis-dataset v9", 1)).unwrap();
    assert!(matches!(dataset_io::load(dir.path()), Err(Error::Version { .. })));

    let dir = tempfile::tempdir().unwrap();
    dataset_io::save(&small(), dir.path()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replace("ordis-manifest v1", "ordis-manifest v2")).unwrap();
    assert!(matches!(dataset_io::load(dir.path()), Err(Error::Version { .. })));
}

#[test]
fn missing_directory_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = dataset_io::load(&dir.path().join("nope")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let net = NetworkConfig { encoder_widths: vec![12, 8], branch_widths: vec![], z_dim: 5, ..NetworkConfig::default() };
    let params = ParamSet::init(&net, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.txt");
    checkpoint::save(&params, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back.config(), params.config());
    for g in Group::ALL {
        assert!(back.group_bit_eq(&params, g), "{}", g.name());
    }
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let params = ParamSet::init(&NetworkConfig::default(), 1).unwrap();
    let text = checkpoint::to_text(&params);
    let p = std::path::Path::new("ckpt");
    let truncated = &text[..text.len() - 4];
    assert!(matches!(checkpoint::from_text(truncated, p), Err(Error::Corrupt { .. })));
    let reshaped = text.replacen("tensor E 0 32,64", "tensor E 0 64,32", 1);
    assert!(matches!(checkpoint::from_text(&reshaped, p), Err(Error::Corrupt { .. })));
    let newer = text.replacen("v1", "v2", 1);
    assert!(matches!(checkpoint::from_text(&newer, p), Err(Error::Version { .. })));
}

#[test]
fn empty_config_gives_library_defaults() {
    let cfg = RunConfig::parse("").unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.generator(), GeneratorConfig::default());
    assert_eq!(cfg.network(), NetworkConfig::default());
    assert_eq!(cfg.train().unwrap(), TrainConfig::default());
}

#[test]
fn config_echo_parses_back() {
    let cfg = RunConfig::parse("method = \"fixmatch_lite\"\nlambda_seq = 0.2\nseeds = [3, 4]\nadversarial_form = \"literal\"\n")
        .unwrap();
    assert_eq!(cfg.train().unwrap().method, Method::FixmatchLite);
    assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn bad_configs_are_config_errors() {
    for text in ["lamda_adv = 1.0", "method = \"magic\"", "adversarial_form = \"x\"", "seeds = []", "uc_prior = 2.0", "epochs = \"ten\""] {
        let err = RunConfig::parse(text).unwrap_err();
        assert_eq!(err.exit_code(), 1, "{text}: {err}");
    }
}
