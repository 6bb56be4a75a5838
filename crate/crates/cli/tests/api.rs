use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use dashgen_cli::server::{router, AppState};
use dashgen_core::agent::NetworkParams;
use dashgen_core::chart::validate_render_spec;
use dashgen_core::env::PreparedDataset;
use dashgen_core::insight::InsightConfig;
use dashgen_core::reward::score_dashboard;
use dashgen_core::service::{GenerateConfig, RecommendConfig, Store};
use dashgen_core::{DashboardState, EnvConfig, NetworkShape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::path::Path;
use std::time::Duration;
use tower::ServiceExt;

const CSV: &str = "city,temp,wind,date\n\
a,10,3.1,2020-01-01\nb,12,2.0,2020-01-02\nc,9,4.4,2020-01-03\nd,15,1.2,2020-01-04\n\
e,11,3.3,2020-01-05\nf,8,5.0,2020-01-06\ng,13,2.2,2020-01-07\nh,14,1.9,2020-01-08\n\
a,7,4.1,2020-01-09\nb,16,0.9,2020-01-10\nc,12,2.8,2020-01-11\nd,10,3.5,2020-01-12\n";

fn app(dir: &Path) -> Router {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let env = EnvConfig::default();
    let params = NetworkParams::init(NetworkShape::new(8, 4, env.reward.n_max, false), &mut rng);
    let state = AppState::new(
        Store::open(dir).unwrap(),
        params,
        env,
        GenerateConfig {
            quota: 120,
            ..GenerateConfig::default()
        },
        RecommendConfig {
            steps: 60,
            ..RecommendConfig::default()
        },
        1,
    );
    router(state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

async fn upload(app: &Router) -> String {
    let req = Request::builder()
        .method("POST")
        .uri("/datasets?name=weather")
        .body(Body::from(CSV))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    let names: Vec<&str> = v["columns"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["city", "temp", "wind", "date"]);
    assert_eq!(v["columns"][0]["ctype"], "nominal");
    v["id"].as_str().unwrap().to_string()
}

async fn wait_for_job(app: &Router, job: &str) -> Value {
    for _ in 0..600 {
        let (status, v) = call(app, "GET", &format!("/jobs/{job}"), None).await;
        assert_eq!(status, StatusCode::OK);
        match v["status"].as_str().unwrap() {
            "done" | "failed" => return v,
            _ => tokio::time::sleep(Duration::from_millis(50)).await,
        }
    }
    panic!("job {job} did not finish");
}

fn prepared() -> std::sync::Arc<PreparedDataset> {
    PreparedDataset::new(
        dashgen_core::data::load_dataset(CSV.as_bytes(), "weather").unwrap(),
        InsightConfig::default(),
    )
}

/// Dashboards in responses validate and their reported score recomputes.
fn check_view(view: &Value) {
    let state: DashboardState = serde_json::from_value(view["state"].clone()).unwrap();
    let data = prepared();
    let (b, _) = score_dashboard(&state, &data.dataset, &EnvConfig::default().reward).unwrap();
    assert_eq!(view["breakdown"]["cr"].as_f64().unwrap(), b.cr);
    let specs = view["render_specs"].as_array().unwrap();
    assert_eq!(specs.len(), state.charts.len());
    for s in specs {
        validate_render_spec(s).unwrap();
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn generate_then_browse_topics_and_dashboards() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = upload(&app).await;

    let (status, csv) = call(&app, "GET", &format!("/datasets/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(csv["row_count"], 12);

    let (status, job) = call(&app, "POST", &format!("/datasets/{id}/generate?quota=80"), None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(job["quota"], 80);
    let done = wait_for_job(&app, job["id"].as_str().unwrap()).await;
    assert_eq!(done["status"], "done", "{done}");

    let (status, topics) = call(&app, "GET", &format!("/datasets/{id}/topics"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(topics, done["topics"]);
    let topics = topics.as_array().unwrap();
    assert!(!topics.is_empty());
    for t in topics {
        let returns: Vec<f64> = t["returns"].as_array().unwrap().iter().map(|r| r.as_f64().unwrap()).collect();
        assert!(returns.windows(2).all(|w| w[0] >= w[1]));
    }

    let ids: Vec<&str> = topics
        .iter()
        .flat_map(|t| t["dashboard_ids"].as_array().unwrap())
        .map(|d| d.as_str().unwrap())
        .collect();
    for d in &ids {
        let (status, view) = call(&app, "GET", &format!("/dashboards/{d}"), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(view["dataset_id"], id.as_str());
        check_view(&view);
        assert!(view["layout"]["cells"].is_array());
    }
    let (status, diff) = call(&app, "GET", &format!("/dashboards/{}/diff/{}", ids[0], ids[0]), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(diff["added_charts"], json!([]));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn session_edit_recommend_and_restart() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = upload(&app).await;

    let (status, created) = call(&app, "POST", "/sessions", Some(json!({"dataset_id": id, "key_column": "city"}))).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    let sid = created["session"]["id"].as_str().unwrap().to_string();
    assert_eq!(created["session"]["state"]["key_column"], "city");

    let chart = json!({
        "mark": "bar",
        "x": {"column": "city", "aggregate": "none"},
        "y": {"column": "wind", "aggregate": "mean"},
        "limit": {"direction": "top", "k": 10}
    });
    let (status, edited) =
        call(&app, "POST", &format!("/sessions/{sid}/edit"), Some(json!({"op": "add_chart", "chart": chart}))).await;
    assert_eq!(status, StatusCode::OK, "{edited}");
    assert_eq!(edited["session"]["state"]["charts"].as_array().unwrap().len(), 1);
    assert_eq!(edited["diff"]["added_charts"].as_array().unwrap().len(), 1);
    check_view(&edited["view"]);

    // A chart that does not show the key column is refused.
    let off_key = json!({
        "mark": "point",
        "x": {"column": "temp", "aggregate": "none"},
        "y": {"column": "wind", "aggregate": "none"}
    });
    let (status, err) =
        call(&app, "POST", &format!("/sessions/{sid}/edit"), Some(json!({"op": "add_chart", "chart": off_key}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(err["error"].as_str().unwrap().contains("invalid edit"));

    let (status, recs) = call(&app, "POST", &format!("/sessions/{sid}/recommend?steps=60&seed=4"), None).await;
    assert_eq!(status, StatusCode::OK, "{recs}");
    let items = recs["items"].as_array().unwrap();
    assert!(items.len() <= 5);
    let (_, again) = call(&app, "POST", &format!("/sessions/{sid}/recommend?steps=60&seed=4"), None).await;
    assert_eq!(recs, again);

    let (status, options) =
        call(&app, "POST", &format!("/sessions/{sid}/options"), Some(json!({"prefix": []}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(options[0]["head"], "action");
    assert_eq!(options[1]["labels"], json!(["bar", "line", "point", "boxplot"]));

    // A fresh server over the same directory sees the session.
    let restarted = self::app(dir.path());
    let (status, loaded) = call(&restarted, "GET", &format!("/sessions/{sid}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(loaded["session"], edited["session"]);
    assert_eq!(loaded["session"]["history"][0]["op"], "add_chart");
}

#[tokio::test]
async fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    assert_eq!(call(&app, "GET", "/jobs/nope", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/dashboards/nope", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/sessions/bad.id", None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, "GET", "/datasets/nope/topics", None).await.0, StatusCode::NOT_FOUND);

    let req = Request::builder().method("POST").uri("/datasets").body(Body::from("")).unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::BAD_REQUEST);

    let id = upload(&app).await;
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({"dataset_id": id, "key_column": "nope"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let req = Request::builder()
        .method("GET")
        .uri(format!("/datasets/{id}/csv"))
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["content-type"], "text/csv");
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    assert_eq!(&bytes[..], CSV.as_bytes());
}
