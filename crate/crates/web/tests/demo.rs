use serde_json::Value;
use swipt_cran_web::{energy_beam_json, slot_curve_json, tradeoff_json};

const SMALL: &str = r#"{"N": 8, "rng_seed": 3}"#;

#[test]
fn tradeoff_has_three_curves_below_q_max() {
    let v: Value = serde_json::from_str(&tradeoff_json(SMALL, 0, 5).unwrap()).unwrap();
    let q_max = v["q_max_uw"].as_f64().unwrap();
    let curves = v["curves"].as_array().unwrap();
    assert_eq!(curves.len(), 3);
    let offline = curves[0]["points"].as_array().unwrap();
    assert_eq!(offline.len(), 5);
    for pt in offline {
        assert!(pt[0].as_f64().unwrap() <= q_max * (1.0 + 1e-6));
        assert!(pt[1].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn energy_beam_shares_sum_to_one() {
    let v: Value = serde_json::from_str(&energy_beam_json("", 1).unwrap()).unwrap();
    let share: f64 = v["power_share"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((share - 1.0).abs() < 1e-9);
    assert_eq!(v["power_schedule"].as_array().unwrap().len(), 60);
    assert_eq!(v["harvest"].as_array().unwrap().len(), 3);
}

#[test]
fn slot_curve_is_non_increasing() {
    let v: Value = serde_json::from_str(&slot_curve_json(SMALL, 0, &[0.05, 0.1, 0.02], 9).unwrap()).unwrap();
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 9);
    for w in pts.windows(2) {
        assert!(w[1][1].as_f64().unwrap() <= w[0][1].as_f64().unwrap() * (1.0 + 1e-6));
    }
}

#[test]
fn bad_config_is_an_error() {
    assert!(tradeoff_json(r#"{"trials": 0}"#, 0, 3).is_err());
    assert!(energy_beam_json("not json", 0).is_err());
    assert!(slot_curve_json("", 0, &[1.0], 3).is_err());
}
