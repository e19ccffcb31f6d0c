//! Scenario files, result records, and the command implementations
//! behind the `repeater` binary.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use repeater_core::analytics::{
    analytic_expected_time, chsh_exact_s, decoherence_bound, phase_walk_sigma, run_chsh,
    run_ekert, run_teleportation, EnginePairSource, ReadoutMode,
};
use repeater_core::engine::trial_rng;
use repeater_core::photon::detected_mean;
use repeater_core::{Engine, PhotonCountModel, RepeaterConfig, TimingMode};

/// Failures grouped by the process exit code they should produce.
#[derive(Debug)]
pub enum CliError {
    /// Bad scenario file or parameter values (exit 2).
    Config(String),
    /// A simulation failed at runtime (exit 3).
    Runtime(String),
    /// Reading or writing a file failed (exit 4).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Detector block of a scenario file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountModelFile {
    pub lambda_dark: Option<f64>,
    pub lambda_one: Option<f64>,
    pub lambda_two: Option<f64>,
    pub window_lo: Option<u64>,
    pub window_hi: Option<u64>,
}

/// TOML scenario file. Every key is optional; omitted keys keep the
/// built-in defaults. Durations carry their unit in the key name.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub l_t_km: Option<f64>,
    pub nesting_m: Option<u32>,
    pub l_att_km: Option<f64>,
    pub c_fiber_m_per_s: Option<f64>,
    pub tau_b_ns: Option<f64>,
    pub t_e_ns: Option<f64>,
    pub t_s_ns: Option<f64>,
    pub t_a_ns: Option<f64>,
    pub t_t_ns: Option<f64>,
    pub t_c_ms: Option<f64>,
    pub c0: Option<f64>,
    pub phase_sigma_link: Option<f64>,
    pub channel_phase: Option<f64>,
    pub init_phase_spread: Option<f64>,
    /// "meanfield" or "parallel".
    pub timing_mode: Option<String>,
    pub swap_heralding_latency: Option<bool>,
    pub single_photon_mode: Option<bool>,
    pub force_exact: Option<bool>,
    pub seed: Option<u64>,
    pub count_model: Option<CountModelFile>,
}

impl ScenarioFile {
    pub fn into_config(self) -> Result<RepeaterConfig, CliError> {
        let mut cfg = RepeaterConfig::default();
        let ns = 1e-9;
        if let Some(v) = self.l_t_km {
            cfg.l_t_km = v;
        }
        if let Some(v) = self.nesting_m {
            cfg.nesting_m = v;
        }
        if let Some(v) = self.l_att_km {
            cfg.l_att_km = v;
        }
        if let Some(v) = self.c_fiber_m_per_s {
            cfg.c_fiber_m_s = v;
        }
        if let Some(v) = self.tau_b_ns {
            cfg.tau_b_s = v * ns;
        }
        if let Some(v) = self.t_e_ns {
            cfg.t_e_s = v * ns;
        }
        if let Some(v) = self.t_s_ns {
            cfg.t_s_s = v * ns;
        }
        if let Some(v) = self.t_a_ns {
            cfg.t_a_s = v * ns;
        }
        if let Some(v) = self.t_t_ns {
            cfg.t_t_s = v * ns;
        }
        if let Some(v) = self.t_c_ms {
            cfg.t_c_s = v * 1e-3;
        }
        if let Some(v) = self.c0 {
            cfg.c0 = v;
        }
        if let Some(v) = self.phase_sigma_link {
            cfg.phase_sigma_link = v;
        }
        if let Some(v) = self.channel_phase {
            cfg.channel_phase = v;
        }
        if let Some(v) = self.init_phase_spread {
            cfg.init_phase_spread = v;
        }
        if let Some(v) = &self.timing_mode {
            cfg.timing_mode = parse_timing_mode(v)?;
        }
        if let Some(v) = self.swap_heralding_latency {
            cfg.swap_heralding_latency = v;
        }
        if let Some(v) = self.single_photon_mode {
            cfg.single_photon_mode = v;
        }
        if let Some(v) = self.force_exact {
            cfg.force_exact = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(cm) = self.count_model {
            let mut model = PhotonCountModel::default();
            if let Some(v) = cm.lambda_dark {
                model.lambda_dark = v;
            }
            if let Some(v) = cm.lambda_one {
                model.lambda_one = v;
            }
            if let Some(v) = cm.lambda_two {
                model.lambda_two = v;
            }
            if let Some(v) = cm.window_lo {
                model.window_lo = v;
            }
            if let Some(v) = cm.window_hi {
                model.window_hi = v;
            }
            cfg.count_model = model;
        }
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

pub fn parse_timing_mode(s: &str) -> Result<TimingMode, CliError> {
    match s {
        "meanfield" => Ok(TimingMode::MeanField),
        "parallel" => Ok(TimingMode::ParallelChildren),
        other => Err(CliError::Config(format!(
            "unknown timing mode `{other}` (expected `meanfield` or `parallel`)"
        ))),
    }
}

/// Load and validate a scenario file.
pub fn load_config(path: &Path) -> Result<RepeaterConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let file: ScenarioFile =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    file.into_config()
}

/// Envelope written by every subcommand. With the same seed and inputs
/// the serialized record is byte-identical; the wall-clock timestamp is
/// therefore opt-in.
#[derive(Debug, Serialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config: RepeaterConfig,
    pub outputs: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp_unix_s: Option<u64>,
}

impl ResultRecord {
    pub fn new(command: &str, cfg: &RepeaterConfig, outputs: Value, timestamp: bool) -> Self {
        ResultRecord {
            schema_version: 1,
            command: command.to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            outputs,
            timestamp_unix_s: timestamp.then(|| {
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)
            }),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }
}

fn build_engine(cfg: &RepeaterConfig) -> Result<Engine, CliError> {
    Engine::new(cfg.clone()).map_err(|e| CliError::Config(e.to_string()))
}

/// Closed-form figures of merit for the configured chain.
pub fn cmd_analytic(cfg: &RepeaterConfig) -> Result<Value, CliError> {
    let engine = build_engine(cfg)?;
    let link = engine.link();
    let profile = engine.profile();
    let t = analytic_expected_time(link.t0_s, cfg.nesting_m, profile.p1);
    let per_level: Vec<f64> =
        (0..=cfg.nesting_m).map(|i| engine.expected_level_time(i)).collect();
    // Fidelity loss of one basic-link generation, bounded two ways: over
    // the attenuation-weighted exposure t_e·e^{L0/L_att}, and over the
    // bare probe duration t_e.
    let exposure = cfg.t_e_s * (link.l0_km / cfg.l_att_km).exp();
    Ok(json!({
        "l0_km": link.l0_km,
        "t0_s": link.t0_s,
        "num_nodes": cfg.num_nodes(),
        "discrimination": { "p0": profile.p0, "p1": profile.p1, "p2": profile.p2 },
        "success_probability": engine.success_probability(),
        "expected_time_s": t,
        "expected_time_ms": t * 1e3,
        "expected_time_per_level_s": per_level,
        "fidelity_loss_bound_weighted_exposure": decoherence_bound(exposure, cfg.t_c_s),
        "fidelity_loss_bound_probe_only": decoherence_bound(cfg.t_e_s, cfg.t_c_s),
        "undetected_decay_bound_per_swap":
            0.5 * profile.p1 * (1.0 - (-cfg.t_s_s / cfg.t_c_s).exp()),
        "phase_sigma_end_to_end": phase_walk_sigma(cfg.phase_sigma_link, cfg.nesting_m),
        "detected_mean_single_bright":
            detected_mean(link.l0_km, cfg.l_att_km, cfg.t_e_s, cfg.tau_b_s),
    }))
}

/// Photon-count discrimination profile of the configured detector model.
pub fn cmd_discriminate(cfg: &RepeaterConfig) -> Result<Value, CliError> {
    let profile = cfg
        .count_model
        .discrimination_profile()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let link = cfg.derive_link();
    let m = &cfg.count_model;
    Ok(json!({
        "lambda_dark": m.lambda_dark,
        "lambda_one": m.lambda_one,
        "lambda_two": m.lambda_two,
        "window_lo": m.window_lo,
        "window_hi": m.window_hi,
        "p0": profile.p0,
        "p1": profile.p1,
        "p2": profile.p2,
        "miss_rate_one_bright": 1.0 - profile.p1,
        "false_herald_rate_dark": profile.p0,
        "false_herald_rate_two_bright": profile.p2,
        "success_probability": 0.5 * profile.p1,
        "detected_mean_single_bright":
            detected_mean(link.l0_km, cfg.l_att_km, cfg.t_e_s, cfg.tau_b_s),
    }))
}

/// One per-trial row of a simulation, for delimited output.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRow {
    pub index: u64,
    pub time_s: f64,
    pub fidelity: f64,
    pub generation_attempts: u64,
}

/// Monte-Carlo ensemble over the full nested protocol.
pub fn cmd_simulate(cfg: &RepeaterConfig, trials: u64) -> Result<Value, CliError> {
    if trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let engine = build_engine(cfg)?;
    let stats = engine.run_ensemble(trials);
    let t = analytic_expected_time(engine.link().t0_s, cfg.nesting_m, engine.profile().p1);
    let mut outputs = serde_json::to_value(&stats).map_err(|e| CliError::Runtime(e.to_string()))?;
    outputs["analytic_expected_time_s"] = json!(t);
    Ok(outputs)
}

/// Per-trial rows for the delimited (`csv`) output format.
pub fn simulate_rows(cfg: &RepeaterConfig, trials: u64) -> Result<Vec<TrialRow>, CliError> {
    if trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let engine = build_engine(cfg)?;
    Ok((0..trials)
        .map(|i| {
            let mut rng = trial_rng(cfg.seed, i);
            let trial = engine.run_nested_trial_with(&mut rng, false);
            TrialRow {
                index: i,
                time_s: trial.success_time,
                fidelity: trial.final_fidelity,
                generation_attempts: trial.generation_attempts,
            }
        })
        .collect())
}

pub fn rows_to_csv(rows: &[TrialRow]) -> String {
    let mut out = String::from("index,time_s,fidelity,generation_attempts\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.index, r.time_s, r.fidelity, r.generation_attempts
        ));
    }
    out
}

/// Which application experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Chsh,
    Ekert,
    Teleport,
    All,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "chsh" => Ok(Self::Chsh),
            "ekert" => Ok(Self::Ekert),
            "teleport" => Ok(Self::Teleport),
            "all" => Ok(Self::All),
            other => Err(CliError::Config(format!(
                "unknown experiment `{other}` (expected chsh, ekert, teleport or all)"
            ))),
        }
    }
}

/// Application experiments on pairs generated over one basic link of the
/// configured chain, with photon-count readout.
pub fn cmd_experiments(
    cfg: &RepeaterConfig,
    which: ExperimentKind,
    shots: u64,
) -> Result<Value, CliError> {
    if shots == 0 {
        return Err(CliError::Config("--shots must be at least 1".into()));
    }
    let engine = build_engine(cfg)?;
    let model = cfg.count_model;
    let rt = |e: repeater_core::Error| CliError::Runtime(e.to_string());
    let mut outputs = serde_json::Map::new();
    if matches!(which, ExperimentKind::Chsh | ExperimentKind::All) {
        let mut source = EnginePairSource { engine: &engine };
        let mut rng = trial_rng(cfg.seed, 0x0C45);
        let res =
            run_chsh(&mut source, shots, ReadoutMode::PhotonCount, &model, &mut rng).map_err(rt)?;
        let mut v = serde_json::to_value(&res).map_err(|e| CliError::Runtime(e.to_string()))?;
        v["exact_s"] = json!(chsh_exact_s(cfg.channel_phase).map_err(rt)?);
        outputs.insert("chsh".into(), v);
    }
    if matches!(which, ExperimentKind::Ekert | ExperimentKind::All) {
        let mut source = EnginePairSource { engine: &engine };
        let mut rng = trial_rng(cfg.seed, 0xE4E7);
        let res = run_ekert(&mut source, shots, ReadoutMode::PhotonCount, &model, &mut rng)
            .map_err(rt)?;
        outputs.insert(
            "ekert".into(),
            serde_json::to_value(&res).map_err(|e| CliError::Runtime(e.to_string()))?,
        );
    }
    if matches!(which, ExperimentKind::Teleport | ExperimentKind::All) {
        let mut source = EnginePairSource { engine: &engine };
        let mut rng = trial_rng(cfg.seed, 0x7E1E);
        let res = run_teleportation(&mut source, shots, &model, &mut rng).map_err(rt)?;
        outputs.insert(
            "teleportation".into(),
            serde_json::to_value(&res).map_err(|e| CliError::Runtime(e.to_string()))?,
        );
    }
    Ok(Value::Object(outputs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_file_round_trip() {
        let text = r#"
            l_t_km = 1250.0
            nesting_m = 5
            t_c_ms = 12.0
            tau_b_ns = 6.0
            timing_mode = "parallel"
            seed = 42

            [count_model]
            lambda_dark = 5.0
            window_lo = 35
        "#;
        let file: ScenarioFile = toml::from_str(text).unwrap();
        let cfg = file.into_config().unwrap();
        assert_eq!(cfg.nesting_m, 5);
        assert_eq!(cfg.l_t_km, 1250.0);
        assert!((cfg.t_c_s - 12e-3).abs() < 1e-18);
        assert!((cfg.tau_b_s - 6e-9).abs() < 1e-21);
        assert_eq!(cfg.timing_mode, TimingMode::ParallelChildren);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.count_model.lambda_dark, 5.0);
        assert_eq!(cfg.count_model.window_lo, 35);
        // Untouched keys keep their defaults.
        assert_eq!(cfg.count_model.lambda_one, 100.0);
        assert_eq!(cfg.l_att_km, 22.0);
    }

    #[test]
    fn scenario_file_rejects_unknown_keys() {
        let err = toml::from_str::<ScenarioFile>("l_total_km = 2500.0");
        assert!(err.is_err());
    }

    #[test]
    fn scenario_file_rejects_invalid_values() {
        let file: ScenarioFile = toml::from_str("l_att_km = -1.0").unwrap();
        match file.into_config() {
            Err(CliError::Config(msg)) => assert!(msg.contains("l_att_km"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn analytic_reports_reference_timing() {
        let cfg = RepeaterConfig::default();
        let out = cmd_analytic(&cfg).unwrap();
        let t_ms = out["expected_time_ms"].as_f64().unwrap();
        assert!(t_ms > 29.5 && t_ms < 30.5, "{t_ms}");
        assert!((out["l0_km"].as_f64().unwrap() - 39.0625).abs() < 1e-12);
        let df = out["fidelity_loss_bound_weighted_exposure"].as_f64().unwrap();
        assert!(df < 0.0018 && df > 0.0017, "{df}");
    }

    #[test]
    fn discriminate_reports_window_probabilities() {
        let cfg = RepeaterConfig::default();
        let out = cmd_discriminate(&cfg).unwrap();
        assert!((out["p1"].as_f64().unwrap() - 0.9773306709186871).abs() < 1e-12);
        assert!(out["p0"].as_f64().unwrap() < 1e-12);
        assert!(out["p2"].as_f64().unwrap() < 1e-9);
    }

    #[test]
    fn simulate_records_are_reproducible() {
        let cfg = RepeaterConfig { nesting_m: 1, ..Default::default() };
        let a = cmd_simulate(&cfg, 200).unwrap();
        let b = cmd_simulate(&cfg, 200).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn csv_rows_have_expected_shape() {
        let cfg = RepeaterConfig { nesting_m: 0, ..Default::default() };
        let rows = simulate_rows(&cfg, 10).unwrap();
        assert_eq!(rows.len(), 10);
        let csv = rows_to_csv(&rows);
        assert!(csv.starts_with("index,time_s,fidelity,generation_attempts\n"));
        assert_eq!(csv.lines().count(), 11);
    }
}
