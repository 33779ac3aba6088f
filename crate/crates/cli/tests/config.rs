use mortar_cli::config::{parse_case, PermConfig, VariantSpec};
use mortar_cli::{CliError, ExperimentConfig};
use mortar_core::OversamplingCase;

fn config_err(text: &str) -> String {
    match ExperimentConfig::from_toml(text) {
        Err(CliError::Config(m)) => m,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn empty_toml_gives_defaults() {
    let c = ExperimentConfig::from_toml("").unwrap();
    assert_eq!(c, ExperimentConfig::default());
    assert_eq!(c.seed, 1);
    assert_eq!(c.grid.coarse, vec![10, 10]);
    assert_eq!(c.converge.cases, vec!["1", "a", "b"]);
    assert_eq!(c.twophase.jacobi_iters, 10);
    assert!((c.twophase.porosity - 0.2).abs() < 1e-15);
}

#[test]
fn shipped_configs_parse() {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let conv = ExperimentConfig::load(format!("{root}/converge.toml").as_ref()).unwrap();
    assert_eq!(conv.perm, PermConfig::Model1 { contrast: 1e4 });
    assert_eq!(conv.converge.contrasts, vec![1e2, 1e4, 1e6]);
    let tp = ExperimentConfig::load(format!("{root}/twophase.toml").as_ref()).unwrap();
    assert_eq!(tp.grid.extents, vec![100.0, 100.0]);
    assert_eq!(tp.variants().len(), 5);
}

#[test]
fn perm_kinds_parse() {
    let c = ExperimentConfig::from_toml("[perm]\nkind = \"log_uniform\"\nlo = 1.0\nhi = 100.0\n").unwrap();
    assert_eq!(c.perm, PermConfig::LogUniform { lo: 1.0, hi: 100.0 });
    let c = ExperimentConfig::from_toml("[perm]\nkind = \"constant\"\nvalue = 3.0\n").unwrap();
    assert_eq!(c.perm, PermConfig::Constant { value: 3.0 });
}

#[test]
fn errors_name_the_key() {
    assert!(config_err("[grid]\nextents = [1.0]\n").starts_with("grid.extents"));
    assert!(config_err("[grid]\ncoarse = [0, 2]\n").starts_with("grid"));
    assert!(config_err("[perm]\nkind = \"constant\"\nvalue = -1.0\n").starts_with("perm.value"));
    assert!(config_err("[perm]\nkind = \"file\"\npath = \"/no/such/file\"\n").starts_with("perm.path"));
    assert!(config_err("[converge]\ncases = [\"z\"]\n").starts_with("converge.cases"));
    assert!(config_err("[twophase]\nporosity = 0.0\n").starts_with("twophase.porosity"));
    assert!(config_err("[twophase]\nvariants = [\"1-3\"]\n").starts_with("twophase.variants"));
    assert!(config_err("[twophase]\nmu_w = 0.0\n").starts_with("twophase"));
}

#[test]
fn unknown_keys_are_rejected() {
    let m = config_err("[grid]\nfine_cells = [2, 2]\n");
    assert!(m.contains("fine_cells"), "{m}");
    config_err("bogus = 1\n");
}

#[test]
fn variant_strings() {
    assert_eq!(VariantSpec::parse("full", false).unwrap(), VariantSpec::Full);
    let v = VariantSpec::parse("1+3", false).unwrap();
    assert_eq!(v, VariantSpec::Enriched { offline: 1, online: 3, smoothing: false });
    assert_eq!(v.label(), "on3");
    assert_eq!(VariantSpec::parse("1+3", true).unwrap().label(), "on3s");
    assert_eq!(VariantSpec::parse("1+1s", false).unwrap().label(), "on1s");
    assert_eq!(VariantSpec::parse("2+0", false).unwrap().label(), "k2on0");
    for bad in ["", "3", "0+2", "a+b", "1+", "fulls"] {
        assert!(VariantSpec::parse(bad, false).is_err(), "{bad:?}");
    }
}

#[test]
fn case_names() {
    assert_eq!(parse_case("local").unwrap(), OversamplingCase::Local);
    assert_eq!(parse_case("1").unwrap(), OversamplingCase::Case1);
    assert_eq!(parse_case("a").unwrap(), OversamplingCase::CaseA);
    assert_eq!(parse_case("b").unwrap(), OversamplingCase::CaseB);
    assert!(parse_case("c").is_err());
}

#[test]
fn exit_codes() {
    assert_eq!(CliError::Config("x".into()).exit_code(), 2);
    assert_eq!(CliError::Solver("x".into()).exit_code(), 3);
}
