//! The JSON files under `configs/` are the preset runs at the default seed.
//! Regenerate them with `FAIRFED_BLESS=1 cargo test -p fairfed --test configs`.

use std::fs;
use std::path::{Path, PathBuf};

use fairfed::config::RunSpec;
use fairfed::presets::{DEFAULT_SEED, PRESETS};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn committed_configs_match_presets() {
    let dir = configs_dir();
    let bless = std::env::var_os("FAIRFED_BLESS").is_some();
    if bless {
        fs::create_dir_all(&dir).unwrap();
    }
    let mut expected = Vec::new();
    for p in &PRESETS {
        for (label, spec) in p.variants(DEFAULT_SEED) {
            let name = p.config_name(&label);
            let path = dir.join(&name);
            if bless {
                fs::write(&path, spec.to_json()).unwrap();
            }
            let committed = RunSpec::load(&path).unwrap_or_else(|e| panic!("{e}"));
            assert_eq!(
                committed, spec,
                "{name} is stale; rerun with FAIRFED_BLESS=1"
            );
            committed.validate(&dir).unwrap();
            expected.push(name);
        }
    }
    let mut found: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    found.sort();
    expected.sort();
    assert_eq!(
        found, expected,
        "configs/ holds exactly one file per preset variant"
    );
}
