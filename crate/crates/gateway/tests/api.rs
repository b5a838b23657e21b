mod support;

use axum::http::StatusCode;
use serde_json::json;

use mems_testbed::session::{run_scenario, CSV_HEADER};
use mems_testbed::{export_log, LogFormat, ScenarioConfig};
use mems_testbed_gateway::GatewayConfig;
use support::{short_cruise, Client};

#[tokio::test]
async fn create_returns_resolved_config() {
    let c = Client::unpaced();
    let r = c.post("/sessions", &short_cruise(1.0)).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let body = r.json();
    assert_eq!(body["session"]["state"], "created");
    assert_eq!(body["config"]["seed"], 7);
    assert_eq!(body["config"]["dt"], 0.001);
    let expected: ScenarioConfig = serde_json::from_value(short_cruise(1.0)).unwrap();
    assert_eq!(body["session"]["config_digest"], expected.digest());

    let list = c.get("/sessions").await.json();
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn malformed_body_is_400() {
    let c = Client::unpaced();
    let r = c.send("POST", "/sessions", Some(b"{\"seed\": ")).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = c.post("/sessions", &json!({ "seed": "seven" })).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = c.post("/sessions", &json!({ "sed": 7 })).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn invalid_config_is_422_naming_fields() {
    let c = Client::unpaced();
    let r = c
        .post(
            "/sessions",
            &json!({ "dt": 0.0, "vehicle": { "wheel_radius": -1.0 } }),
        )
        .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let fields: Vec<String> = r.json()["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["field"].as_str().unwrap().to_string())
        .collect();
    assert!(fields.iter().any(|f| f == "dt"), "{fields:?}");
    assert!(
        fields.iter().any(|f| f == "vehicle.wheel_radius"),
        "{fields:?}"
    );
    assert!(c
        .get("/sessions")
        .await
        .json()
        .as_array()
        .unwrap()
        .is_empty());
}

#[tokio::test]
async fn unknown_session_is_404() {
    let c = Client::unpaced();
    assert_eq!(c.get("/sessions/99").await.status, StatusCode::NOT_FOUND);
    assert_eq!(c.get("/sessions/abc").await.status, StatusCode::NOT_FOUND);
    assert_eq!(c.command(99, "start").await.status, StatusCode::NOT_FOUND);
    assert_eq!(
        c.get("/sessions/99/log?format=csv").await.status,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn lifecycle_transitions() {
    let c = Client::unpaced();
    let id = c.create(&short_cruise(2.0)).await;
    assert_eq!(c.command(id, "pause").await.status, StatusCode::CONFLICT);
    let r = c.command(id, "start").await;
    assert_eq!(r.status, StatusCode::OK);
    let state = r.json()["state"].as_str().unwrap().to_string();
    assert!(state == "running" || state == "completed", "{state}");
    c.wait_for(id, "completed").await;
    let s = c.get(&format!("/sessions/{id}")).await.json();
    assert_eq!(s["sim_time"], 2.0);
    assert_eq!(c.command(id, "start").await.status, StatusCode::CONFLICT);
    assert_eq!(c.command(id, "pause").await.status, StatusCode::CONFLICT);
    let r = c.command(id, "bogus").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    let r = c.command(id, "reset").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["state"], "created");
    assert_eq!(r.json()["sim_time"], 0.0);
}

#[tokio::test]
async fn log_matches_headless_run_and_survives_reset() {
    let c = Client::unpaced();
    let config = short_cruise(3.0);
    let id = c.create(&config).await;
    c.command(id, "start").await;
    c.wait_for(id, "completed").await;
    let first = c.get(&format!("/sessions/{id}/log?format=json")).await;
    assert_eq!(first.status, StatusCode::OK);
    assert_eq!(first.content_type.as_deref(), Some("application/json"));

    let cfg: ScenarioConfig = serde_json::from_value(config).unwrap();
    let headless = run_scenario(cfg).unwrap();
    assert_eq!(first.body, export_log(headless.log(), LogFormat::Json));

    c.command(id, "reset").await;
    c.command(id, "start").await;
    c.wait_for(id, "completed").await;
    let second = c.get(&format!("/sessions/{id}/log?format=json")).await;
    assert_eq!(first.body, second.body);

    let csv = c.get(&format!("/sessions/{id}/log?format=csv")).await;
    assert_eq!(csv.content_type.as_deref(), Some("text/csv"));
    assert_eq!(csv.body, export_log(headless.log(), LogFormat::Csv));
}

#[tokio::test]
async fn log_of_new_session_is_header_only_and_bad_format_is_422() {
    let c = Client::unpaced();
    let id = c.create(&short_cruise(1.0)).await;
    let r = c.get(&format!("/sessions/{id}/log?format=csv")).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.text(), format!("{CSV_HEADER}\n"));
    let r = c.get(&format!("/sessions/{id}/log?format=xml")).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn attack_validation_and_state_rules() {
    let c = Client::unpaced();
    let id = c.create(&short_cruise(1.0)).await;
    let attack = json!({ "attacker_type": "external", "carrier_freq": 4990.0 });
    let r = c.post(&format!("/sessions/{id}/attack"), &attack).await;
    assert_eq!(r.status, StatusCode::CONFLICT, "{}", r.text());

    let r = c
        .post(
            &format!("/sessions/{id}/attack"),
            &json!({ "spl_at_source": 200.0 }),
        )
        .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.text().contains("spl_at_source"), "{}", r.text());

    let r = c
        .send("POST", &format!("/sessions/{id}/attack"), Some(b"[1,2"))
        .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn attack_on_paused_session_takes_effect_on_resume() {
    let c = Client::with(GatewayConfig {
        pace: 20.0,
        ..GatewayConfig::default()
    });
    let id = c.create(&short_cruise(10.0)).await;
    c.command(id, "start").await;
    let paused = c.command(id, "pause").await;
    assert_eq!(paused.status, StatusCode::OK, "{}", paused.text());
    assert_eq!(paused.json()["state"], "paused");
    let t_pause = paused.json()["sim_time"].as_f64().unwrap();
    assert!(t_pause < 9.0, "paused at {t_pause}");

    let r = c
        .post(
            &format!("/sessions/{id}/attack"),
            &json!({ "carrier_freq": 4990.0, "spl_at_source": 120.0 }),
        )
        .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let body = r.json();
    let start = body["applied"]["start_t"].as_f64().unwrap();
    assert!(
        start > t_pause && start - t_pause < 0.0015,
        "{start} vs {t_pause}"
    );
    assert_eq!(body["session"]["state"], "paused");
    assert!(body["session"]["active_attack"]["description"].is_string());

    // nothing runs while paused
    let still = c.get(&format!("/sessions/{id}")).await.json();
    assert_eq!(still["sim_time"].as_f64().unwrap(), t_pause);

    c.command(id, "start").await;
    c.wait_for(id, "completed").await;
    let log = c
        .get(&format!("/sessions/{id}/log?format=json"))
        .await
        .json();
    let events = log["events"].as_array().unwrap();
    assert_eq!(events.len(), 1);
    let index = events[0]["index"].as_u64().unwrap() as usize;
    let records = log["records"].as_array().unwrap();
    assert!(records[..index].iter().all(|r| r["pressure"] == 0.0));
    assert!(records[index..].iter().any(|r| r["pressure"] != 0.0));
}

#[tokio::test]
async fn metrics_rules() {
    let c = Client::unpaced();
    let id = c.create(&short_cruise(2.0)).await;
    let r = c.get(&format!("/sessions/{id}/metrics")).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    c.command(id, "start").await;
    c.wait_for(id, "completed").await;
    let m = c.get(&format!("/sessions/{id}/metrics")).await;
    assert_eq!(m.status, StatusCode::OK);
    let m = m.json();
    assert_eq!(m["attack_success"], "no_attack");
    assert!(m["velocity_rmse_vs_setpoint"].as_f64().unwrap().is_finite());
    assert!(m["stopping_distance"].is_null());

    let mut other = short_cruise(2.0);
    other["seed"] = json!(8);
    let other = c.create(&other).await;
    c.command(other, "start").await;
    c.wait_for(other, "completed").await;
    let r = c
        .get(&format!("/sessions/{id}/metrics?reference={other}"))
        .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY, "{}", r.text());
    let r = c
        .get(&format!("/sessions/{id}/metrics?reference=404"))
        .await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn metrics_against_benign_reference() {
    let c = Client::unpaced();
    let benign = c.create(&short_cruise(4.0)).await;
    let mut attacked = short_cruise(4.0);
    attacked["attack"] = json!({ "carrier_freq": 4990.0, "spl_at_source": 120.0, "start_t": 1.0 });
    let attacked = c.create(&attacked).await;
    for id in [benign, attacked] {
        c.command(id, "start").await;
        c.wait_for(id, "completed").await;
    }
    let r = c
        .get(&format!("/sessions/{attacked}/metrics?reference={benign}"))
        .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let m = r.json();
    assert_ne!(m["attack_success"], "no_attack");
    assert!(m["max_velocity_est_error"].as_f64().unwrap() > 0.0);
}
