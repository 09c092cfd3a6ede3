use hamlab::config::{Command, Overrides, RunConfig};
use hamlab::report::Provenance;
use hamlab_core::ModelSpec;

#[test]
fn defaults_fill_missing_sections() {
    let cfg = RunConfig::from_toml("[model]\nname = \"sphere_geodesic\"\nk = 4.0\n").unwrap();
    assert_eq!(cfg.model, ModelSpec::SphereGeodesic { k: 4.0 });
    assert_eq!(cfg.command, None);
    assert_eq!(cfg.tolerances.limit, 1e-8);
    assert_eq!(cfg.horizons.conjugate, 10.0);
    cfg.validate().unwrap();
}

#[test]
fn unknown_model_parameters_are_rejected() {
    assert!(RunConfig::from_toml("[model]\nname = \"sphere_geodesic\"\nkappa = 4.0\n").is_err());
    assert!(RunConfig::from_toml("[model]\nname = \"flat_torus_geodesic\"\n[horizons]\nforever = 1.0\n").is_err());
    assert!(RunConfig::from_toml("energy = 0.5\n").is_err());
}

#[test]
fn point_must_match_the_dimension() {
    let mut cfg =
        RunConfig::from_toml("[model]\nname = \"flat_torus_geodesic\"\n[point]\nx = [0.1]\ndirection = [1.0, 0.0]\n").unwrap();
    assert!(cfg.apply(Command::Curvature, &Overrides::default()).is_err());
}

#[test]
fn validate_has_no_horizon() {
    let mut cfg = RunConfig::from_toml("[model]\nname = \"pendulum\"\n").unwrap();
    let o = Overrides { horizon: Some(3.0), ..Overrides::default() };
    assert!(cfg.apply(Command::Validate, &o).is_err());
    cfg.apply(Command::Anosov, &o).unwrap();
    assert_eq!(cfg.horizons.anosov, 3.0);
}

#[test]
fn hash_ignores_output_paths_only() {
    let base = RunConfig::from_toml("[model]\nname = \"pendulum\"\n").unwrap();
    let mut moved = base.clone();
    moved.output.dir = "elsewhere".into();
    assert_eq!(Provenance::of(&base).config_sha256, Provenance::of(&moved).config_sha256);
    let mut reseeded = base.clone();
    reseeded.seeds.sampling = 1;
    assert_ne!(Provenance::of(&base).config_sha256, Provenance::of(&reseeded).config_sha256);
}
