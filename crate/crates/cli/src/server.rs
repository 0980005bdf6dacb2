//! Stateless HTTP service backing the truth-CEP explorer.

use std::net::SocketAddr;
use std::path::PathBuf;

use axum::extract::rejection::BytesRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{body::Bytes, Json, Router};
use idcep::cep::{truth_cep, CepConfig, CepResult, MIN_TRUTH_DRAWS};
use idcep::simulate::{scenario_arms, scenario_presets};
use idcep::{ArmModel, ModelVariant, TransitionParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

/// Largest cloud returned by the service (and written by `truth-cep` by default).
pub const MAX_CLOUD_POINTS: usize = 2000;
/// Largest `n_draws` one request may ask for.
pub const MAX_REQUEST_DRAWS: usize = 2_000_000;
pub const DEFAULT_REQUEST_DRAWS: usize = 20_000;

/// A validated truth-CEP request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCepRequest {
    pub control: ArmModel,
    pub treated: ArmModel,
    pub config: CepConfig,
    pub n_draws: usize,
    pub seed: u64,
    pub max_points: usize,
}

impl TruthCepRequest {
    /// Runs the computation; the line is fitted on the full cloud before thinning.
    pub fn compute(&self) -> idcep::Result<CepResult> {
        let full = truth_cep(&self.control, &self.treated, &self.config, self.n_draws, self.seed)?;
        Ok(full.thinned(self.max_points))
    }
}

/// One problem with a request body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

const REQUEST_FIELDS: [&str; 7] = ["scenario", "control", "treated", "config", "n_draws", "seed", "max_points"];
const ARM_FIELDS: [&str; 4] = ["t12", "t13", "t23", "variant"];

fn keys_of<T: Serialize + Default>() -> Vec<String> {
    match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

fn as_object<'a>(field: &str, v: &'a Value, errors: &mut Vec<FieldError>) -> Option<&'a Map<String, Value>> {
    match v {
        Value::Object(m) => Some(m),
        _ => {
            errors.push(FieldError::new(field, "expected an object"));
            None
        }
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn unknown_keys(prefix: &str, map: &Map<String, Value>, allowed: &[String], errors: &mut Vec<FieldError>) {
    for k in map.keys() {
        if !allowed.iter().any(|a| a == k) {
            errors.push(FieldError::new(join(prefix, k), "unknown field"));
        }
    }
}

/// Parses an object whose every field has a default, reporting problems per field.
fn parse_defaulted<T>(prefix: &str, v: &Value, extra_keys: &[&str], errors: &mut Vec<FieldError>) -> Option<T>
where
    T: DeserializeOwned + Serialize + Default,
{
    let map = as_object(prefix, v, errors)?;
    let mut allowed = keys_of::<T>();
    allowed.extend(extra_keys.iter().map(|s| s.to_string()));
    let before = errors.len();
    unknown_keys(prefix, map, &allowed, errors);
    for (k, val) in map {
        if !allowed.contains(k) {
            continue;
        }
        let single = Value::Object(Map::from_iter([(k.clone(), val.clone())]));
        if let Err(e) = serde_json::from_value::<T>(single) {
            errors.push(FieldError::new(join(prefix, k), e.to_string()));
        }
    }
    if errors.len() > before {
        return None;
    }
    serde_json::from_value(v.clone())
        .map_err(|e| errors.push(FieldError::new(prefix, e.to_string())))
        .ok()
}

fn parse_value<T: DeserializeOwned>(field: &str, v: &Value, errors: &mut Vec<FieldError>) -> Option<T> {
    serde_json::from_value(v.clone())
        .map_err(|e| errors.push(FieldError::new(field, e.to_string())))
        .ok()
}

fn parse_arm(prefix: &str, v: &Value, base: Option<ArmModel>, errors: &mut Vec<FieldError>) -> Option<ArmModel> {
    let map = as_object(prefix, v, errors)?;
    let allowed: Vec<String> = ARM_FIELDS.iter().map(|s| s.to_string()).collect();
    unknown_keys(prefix, map, &allowed, errors);
    let mut arm = base.unwrap_or_else(|| ArmModel::exponential(1.0, 1.0, 1.0));
    let mut ok = true;
    for (key, slot) in [("t12", &mut arm.t12), ("t13", &mut arm.t13), ("t23", &mut arm.t23)] {
        match map.get(key) {
            Some(t) => match parse_defaulted::<TransitionParams>(&join(prefix, key), t, &[], errors) {
                Some(p) => *slot = p,
                None => ok = false,
            },
            None if base.is_none() => {
                errors.push(FieldError::new(join(prefix, key), "required unless scenario is given"));
                ok = false;
            }
            None => {}
        }
    }
    if let Some(variant) = map.get("variant") {
        match parse_value::<ModelVariant>(&join(prefix, "variant"), variant, errors) {
            Some(v) => arm.variant = v,
            None => ok = false,
        }
    }
    ok.then_some(arm)
}

fn check_arm(prefix: &str, arm: &ArmModel, errors: &mut Vec<FieldError>) {
    for (key, t) in [("t12", &arm.t12), ("t13", &arm.t13), ("t23", &arm.t23)] {
        let p = join(prefix, key);
        if !(t.gamma >= 0.0 && t.gamma.is_finite()) {
            errors.push(FieldError::new(format!("{p}.gamma"), "must be a finite non-negative number"));
        }
        if !(t.alpha > 0.0 && t.alpha.is_finite()) {
            errors.push(FieldError::new(format!("{p}.alpha"), "must be a finite positive number"));
        }
        for (name, v) in [
            ("kappa", t.kappa),
            ("theta", t.theta),
            ("kappa12_star", t.kappa12_star),
            ("kappa13_star", t.kappa13_star),
        ] {
            if !v.is_finite() {
                errors.push(FieldError::new(format!("{p}.{name}"), "must be finite"));
            }
        }
    }
}

fn check_config(c: &CepConfig, errors: &mut Vec<FieldError>) {
    if !(c.tau_s > 0.0 && c.tau_s.is_finite()) {
        errors.push(FieldError::new("config.tau_s", "must be a finite positive number"));
    }
    if !(c.tau_t > 0.0 && c.tau_t.is_finite()) {
        errors.push(FieldError::new("config.tau_t", "must be a finite positive number"));
    } else if c.tau_t <= c.tau_s {
        errors.push(FieldError::new("config.tau_t", "must be larger than tau_s"));
    }
    for (name, v) in [("rho_s", c.rho_s), ("rho_t", c.rho_t)] {
        if !(-1.0..=1.0).contains(&v) {
            errors.push(FieldError::new(format!("config.{name}"), "must be within [-1, 1]"));
        }
    }
    if !(c.sigma_omega >= 0.0 && c.sigma_omega.is_finite()) {
        errors.push(FieldError::new("config.sigma_omega", "must be a finite non-negative number"));
    }
    if let Some(fc) = &c.full_corr {
        if let Ok(Value::Object(m)) = serde_json::to_value(fc) {
            for (k, v) in m {
                if !v.as_f64().is_some_and(|r| (-1.0..=1.0).contains(&r)) {
                    errors.push(FieldError::new(format!("config.full_corr.{k}"), "must be within [-1, 1]"));
                }
            }
        }
    }
}

/// Parses and validates a request body, collecting every field-level problem.
pub fn parse_truth_cep_request(body: &[u8]) -> Result<TruthCepRequest, Vec<FieldError>> {
    let value: Value = serde_json::from_slice(body).map_err(|e| vec![FieldError::new("", format!("invalid JSON: {e}"))])?;
    let mut errors = Vec::new();
    let Some(map) = as_object("", &value, &mut errors) else {
        return Err(errors);
    };
    let allowed: Vec<String> = REQUEST_FIELDS.iter().map(|s| s.to_string()).collect();
    unknown_keys("", map, &allowed, &mut errors);

    let preset = match map.get("scenario") {
        None | Some(Value::Null) => None,
        Some(v) => match parse_value::<u8>("scenario", v, &mut errors) {
            Some(id) => match scenario_arms(id) {
                Ok(arms) => Some(arms),
                Err(_) => {
                    errors.push(FieldError::new("scenario", "must be between 1 and 8"));
                    None
                }
            },
            None => None,
        },
    };
    let scenario_failed = map.get("scenario").is_some_and(|v| !v.is_null()) && preset.is_none();
    let arm = |key: &str, base: Option<ArmModel>, errors: &mut Vec<FieldError>| match map.get(key) {
        Some(v) => parse_arm(key, v, base, errors),
        None if base.is_some() => base,
        None => {
            if !scenario_failed {
                errors.push(FieldError::new(key, "required unless scenario is given"));
            }
            None
        }
    };
    let control = arm("control", preset.map(|p| p.0), &mut errors);
    let treated = arm("treated", preset.map(|p| p.1), &mut errors);
    let config = match map.get("config") {
        Some(v) => parse_defaulted::<CepConfig>("config", v, &["full_corr"], &mut errors),
        None => Some(CepConfig::default()),
    };
    let n_draws = match map.get("n_draws") {
        Some(v) => parse_value::<usize>("n_draws", v, &mut errors),
        None => Some(DEFAULT_REQUEST_DRAWS),
    };
    let seed = match map.get("seed") {
        Some(v) => parse_value::<u64>("seed", v, &mut errors),
        None => Some(0),
    };
    let max_points = match map.get("max_points") {
        Some(v) => parse_value::<usize>("max_points", v, &mut errors),
        None => Some(MAX_CLOUD_POINTS),
    };

    if let Some(c) = &control {
        check_arm("control", c, &mut errors);
    }
    if let Some(t) = &treated {
        check_arm("treated", t, &mut errors);
    }
    if let Some(c) = &config {
        check_config(c, &mut errors);
    }
    if let Some(n) = n_draws {
        if !(MIN_TRUTH_DRAWS..=MAX_REQUEST_DRAWS).contains(&n) {
            errors.push(FieldError::new(
                "n_draws",
                format!("must be between {MIN_TRUTH_DRAWS} and {MAX_REQUEST_DRAWS}"),
            ));
        }
    }
    if let Some(m) = max_points {
        if !(1..=MAX_CLOUD_POINTS).contains(&m) {
            errors.push(FieldError::new("max_points", format!("must be between 1 and {MAX_CLOUD_POINTS}")));
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let (Some(control), Some(treated), Some(config), Some(n_draws), Some(seed), Some(max_points)) =
        (control, treated, config, n_draws, seed, max_points)
    else {
        return Err(vec![FieldError::new("", "incomplete request")]);
    };
    // Anything the explicit checks above did not cover.
    if let Err(e) = config.validate() {
        if !matches!(e, idcep::Error::NotPsd { .. }) {
            return Err(vec![FieldError::new("config", e.to_string())]);
        }
    }
    Ok(TruthCepRequest {
        control,
        treated,
        config,
        n_draws,
        seed,
        max_points,
    })
}

fn error_body(status: StatusCode, message: &str, fields: &[FieldError]) -> Response {
    (status, Json(json!({ "error": message, "fields": fields }))).into_response()
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(axum::http::header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

async fn scenarios() -> Json<Value> {
    Json(json!(scenario_presets()))
}

async fn post_truth_cep(body: Result<Bytes, BytesRejection>) -> Response {
    let body = match body {
        Ok(b) => b,
        Err(e) => return error_body(StatusCode::BAD_REQUEST, "unreadable body", &[FieldError::new("", e.body_text())]),
    };
    let request = match parse_truth_cep_request(&body) {
        Ok(r) => r,
        Err(fields) => return error_body(StatusCode::BAD_REQUEST, "invalid request", &fields),
    };
    let outcome = tokio::task::spawn_blocking(move || request.compute().and_then(|r| r.to_json())).await;
    match outcome {
        Ok(Ok(body)) => json_response(StatusCode::OK, body),
        Ok(Err(e @ idcep::Error::NotPsd { .. })) => error_body(
            StatusCode::UNPROCESSABLE_ENTITY,
            &e.to_string(),
            &[FieldError::new("config", "cross-arm correlation matrix is not positive semi-definite")],
        ),
        Ok(Err(e @ (idcep::Error::Config(_) | idcep::Error::Domain(_)))) => {
            error_body(StatusCode::BAD_REQUEST, &e.to_string(), &[])
        }
        Ok(Err(e)) => error_body(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string(), &[]),
        Err(e) => error_body(StatusCode::INTERNAL_SERVER_ERROR, &format!("worker failed: {e}"), &[]),
    }
}

/// The service routes; static assets are served from `static_dir` when given.
pub fn router(static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/scenarios", get(scenarios))
        .route("/api/truth-cep", post(post_truth_cep));
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `addr` and serves until interrupted.
pub async fn serve(addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
