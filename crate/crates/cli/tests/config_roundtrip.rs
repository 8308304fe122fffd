use std::path::PathBuf;

use nvltm_cli::config::{Slopes, SpinSection};
use nvltm_cli::parse_config;
use proptest::prelude::*;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shipped() -> Vec<(String, String)> {
    let mut out: Vec<_> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .map(|p| (p.display().to_string(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    let all = shipped();
    assert!(all.len() >= 6);
    for (path, text) in all {
        let cfg = parse_config(&text).unwrap_or_else(|e| panic!("{path}: {e}"));
        let printed = cfg.to_string();
        assert_eq!(parse_config(&printed).unwrap(), cfg, "{path}");
        assert_eq!(parse_config(&printed).unwrap().hash(), cfg.hash(), "{path}");
    }
}

#[test]
fn shipped_configs_have_distinct_hashes() {
    let mut hashes: Vec<_> = shipped().iter().map(|(_, t)| parse_config(t).unwrap().hash()).collect();
    let n = hashes.len();
    hashes.sort();
    hashes.dedup();
    assert_eq!(hashes.len(), n);
}

const BASE: &str = include_str!("../../../configs/fm_far.cfg");

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn printed_config_parses_back_identically(
        seed in any::<u64>(),
        threshold in 20e-3..40e-3f64,
        hysteresis in 0.0..5e-3f64,
        step in 1e-6..1e-3f64,
        off in 1e-3..0.5f64,
        on_frac in 0.01..1.0f64,
        field in 0.0..0.1f64,
        dir in prop::array::uniform3(-1.0..1.0f64),
        fs in 10e3..1e6f64,
    ) {
        let mut cfg = parse_config(BASE).unwrap();
        cfg.run.seed = Some(seed);
        cfg.laser.threshold_base = threshold;
        cfg.laser.hysteresis = hysteresis;
        cfg.laser.step_power = step;
        cfg.laser.slopes = Slopes::Explicit { off, on: off * on_frac };
        cfg.spin = Some(SpinSection { field, direction: dir, ..SpinSection::default() });
        cfg.acquisition.fs = fs;
        let back = parse_config(&cfg.to_string()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn comments_and_blank_lines_do_not_change_the_hash(pad in "[ \t]{0,4}", comment in "[a-z ]{0,12}") {
        let reference = parse_config(BASE).unwrap().hash();
        let noisy: String = BASE
            .lines()
            .map(|l| format!("{pad}{l}{pad}\n# {comment}\n\n"))
            .collect();
        prop_assert_eq!(parse_config(&noisy).unwrap().hash(), reference);
    }

    #[test]
    fn seed_changes_the_hash(a in any::<u64>(), b in any::<u64>()) {
        prop_assume!(a != b);
        let mut x = parse_config(BASE).unwrap();
        let mut y = x.clone();
        x.run.seed = Some(a);
        y.run.seed = Some(b);
        prop_assert_ne!(x.hash(), y.hash());
    }
}
