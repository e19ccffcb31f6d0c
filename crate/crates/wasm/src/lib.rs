//! Browser bindings for the repeater simulator demo page. Each exported
//! function returns a JSON string the page renders onto a canvas.

use serde_json::json;
use wasm_bindgen::prelude::*;

use repeater_core::analytics::{
    analytic_expected_time, chsh_exact_s, run_chsh, IdealPairSource, ReadoutMode, CHSH_SETTINGS,
};
use repeater_core::engine::trial_rng;
use repeater_core::photon::{poisson_pmf, window_probability};
use repeater_core::{PhotonCountModel, RepeaterConfig};

/// Poisson count curves for the three bright patterns and the window
/// probabilities the chosen window yields.
pub fn discrimination_report(
    lambda_dark: f64,
    lambda_one: f64,
    lambda_two: f64,
    window_lo: u64,
    window_hi: u64,
) -> Result<String, String> {
    let model = PhotonCountModel {
        lambda_dark,
        lambda_one,
        lambda_two,
        window_lo,
        window_hi,
    };
    model.validate().map_err(|e| e.to_string())?;
    let profile = model.discrimination_profile().map_err(|e| e.to_string())?;
    let n_max = ((lambda_two + 5.0 * lambda_two.sqrt()) as u64).max(window_hi + 10);
    let curve = |lambda: f64| -> Result<Vec<f64>, String> {
        (0..=n_max).map(|n| poisson_pmf(n, lambda).map_err(|e| e.to_string())).collect()
    };
    Ok(json!({
        "n_max": n_max,
        "window_lo": window_lo,
        "window_hi": window_hi,
        "pmf_dark": curve(lambda_dark)?,
        "pmf_one": curve(lambda_one)?,
        "pmf_two": curve(lambda_two)?,
        "p0": profile.p0,
        "p1": profile.p1,
        "p2": profile.p2,
        "success_probability": 0.5 * profile.p1,
    })
    .to_string())
}

/// Expected end-to-end distribution time as a function of nesting depth,
/// for a fixed total distance.
pub fn timing_report(l_t_km: f64, l_att_km: f64, t_e_ns: f64, max_m: u32) -> Result<String, String> {
    if max_m > 12 {
        return Err("nesting depth capped at 12".into());
    }
    let p1 = window_probability(100.0, 40, 120).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for m in 0..=max_m {
        let cfg = RepeaterConfig {
            l_t_km,
            l_att_km,
            nesting_m: m,
            t_e_s: t_e_ns * 1e-9,
            ..Default::default()
        };
        cfg.validate().map_err(|e| e.to_string())?;
        let link = cfg.derive_link();
        rows.push(json!({
            "m": m,
            "l0_km": link.l0_km,
            "t0_s": link.t0_s,
            "expected_time_s": analytic_expected_time(link.t0_s, m, p1),
        }));
    }
    Ok(json!({ "p1": p1, "rows": rows }).to_string())
}

/// Sampled CHSH run on ideal pairs with photon-count readout.
pub fn chsh_report(phase: f64, shots_per_setting: u64, seed: u64) -> Result<String, String> {
    if shots_per_setting == 0 || shots_per_setting > 200_000 {
        return Err("shots per setting must be in 1..=200000".into());
    }
    let model = PhotonCountModel::default();
    let mut source = IdealPairSource { phase };
    let mut rng = trial_rng(seed, 0);
    let res = run_chsh(&mut source, shots_per_setting, ReadoutMode::PhotonCount, &model, &mut rng)
        .map_err(|e| e.to_string())?;
    let settings: Vec<_> = CHSH_SETTINGS.iter().map(|&(a, b)| json!([a, b])).collect();
    Ok(json!({
        "settings": settings,
        "correlators": res.correlators,
        "correlator_errs": res.correlator_errs,
        "s": res.s,
        "s_err": res.s_err,
        "exact_s": chsh_exact_s(phase).map_err(|e| e.to_string())?,
        "classical_bound": 2.0,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn discrimination_json(
    lambda_dark: f64,
    lambda_one: f64,
    lambda_two: f64,
    window_lo: u32,
    window_hi: u32,
) -> Result<String, JsValue> {
    discrimination_report(lambda_dark, lambda_one, lambda_two, window_lo as u64, window_hi as u64)
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn timing_json(l_t_km: f64, l_att_km: f64, t_e_ns: f64, max_m: u32) -> Result<String, JsValue> {
    timing_report(l_t_km, l_att_km, t_e_ns, max_m).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn chsh_json(phase: f64, shots_per_setting: u32, seed: u32) -> Result<String, JsValue> {
    chsh_report(phase, shots_per_setting as u64, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrimination_report_defaults() {
        let out = discrimination_report(10.0, 100.0, 200.0, 40, 120).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!((v["p1"].as_f64().unwrap() - 0.9773306709186871).abs() < 1e-9);
        assert!(v["pmf_one"].as_array().unwrap().len() > 120);
        assert!(discrimination_report(10.0, 5.0, 200.0, 40, 120).is_err());
    }

    #[test]
    fn timing_report_reference_point() {
        let out = timing_report(2500.0, 22.0, 600.0, 8).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let t6 = v["rows"][6]["expected_time_s"].as_f64().unwrap();
        assert!(t6 > 29.5e-3 && t6 < 30.5e-3, "{t6}");
    }

    #[test]
    fn chsh_report_violates_classical_bound() {
        let out = chsh_report(0.0, 5_000, 7).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v["s"].as_f64().unwrap() > 2.0);
        assert!((v["exact_s"].as_f64().unwrap() - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!(chsh_report(0.0, 0, 7).is_err());
    }
}
