// Golden record of the cocycle defect on the middle-thirds measure.
// Regenerate with UPDATE_GOLDEN=1.

use std::path::PathBuf;

use fractal_lq::models::ModelSpec;
use fractal_lq::spectra::cocycle_check;
use serde_json::json;

const Q: f64 = 2.0;
const N_MAX: u64 = 12;

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/cocycle_middle_thirds.json")
}

#[test]
fn cocycle_defect_matches_golden() {
    let spec: ModelSpec = serde_json::from_str(
        r#"{"type": "selfsimilar", "delta": {"atoms": [[0, "1/2"], [2, "1/2"]]}, "lambda": "1/3"}"#,
    )
    .unwrap();
    let model = spec.to_model().unwrap();
    let grid: Vec<u64> = (1..=N_MAX).collect();
    let rep = cocycle_check(&model, &model.default_state(), Q, &grid).unwrap();
    assert!(rep.slope <= 0.01, "row-max slope {}", rep.slope);
    if std::env::var("UPDATE_GOLDEN").as_deref() == Ok("1") {
        let doc = json!({ "q": Q, "n_max": N_MAX, "max_defect": rep.max_defect, "row_max": rep.row_max });
        std::fs::write(golden_path(), serde_json::to_string_pretty(&doc).unwrap() + "\n").unwrap();
        return;
    }
    let text = std::fs::read_to_string(golden_path()).expect("golden file missing; run with UPDATE_GOLDEN=1");
    let g: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(g["n_max"].as_u64(), Some(N_MAX));
    let want = g["max_defect"].as_f64().unwrap();
    assert!((rep.max_defect - want).abs() < 1e-9, "max defect {} vs golden {want}", rep.max_defect);
}
