use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use plyeval_core::backend::{BackendConfig, BackendError, Generator, HttpBackend, RetryPolicy};
use plyeval_core::case::{dataset_to_string, Mode};
use plyeval_core::catalog::Catalog;
use plyeval_core::generator::{generate, GenSpec};
use plyeval_core::harness::{run_plan, RUN_LOG};
use serde_json::{json, Value};

#[derive(Default)]
struct Stub {
    bodies: Mutex<Vec<Value>>,
    auth: Mutex<Vec<Option<String>>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    calls: AtomicUsize,
    /// Status to return for the first `fail_first` calls.
    fail_status: Mutex<Option<(u16, usize)>>,
    delay_ms: u64,
    reply: String,
}

async fn chat(State(stub): State<Arc<Stub>>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n = stub.calls.fetch_add(1, Ordering::SeqCst);
    stub.bodies.lock().unwrap().push(body);
    stub.auth
        .lock()
        .unwrap()
        .push(headers.get("authorization").map(|v| v.to_str().unwrap().to_string()));
    let now = stub.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stub.peak.fetch_max(now, Ordering::SeqCst);
    tokio::time::sleep(Duration::from_millis(stub.delay_ms)).await;
    stub.in_flight.fetch_sub(1, Ordering::SeqCst);

    if let Some((status, first)) = *stub.fail_status.lock().unwrap() {
        if n < first {
            let code = StatusCode::from_u16(status).unwrap();
            return (code, Json(json!({"error": {"message": format!("stub says no ({status})")}})));
        }
    }
    (
        StatusCode::OK,
        Json(json!({
            "choices": [{"message": {"role": "assistant", "content": stub.reply}}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 5, "total_tokens": 15}
        })),
    )
}

async fn serve(stub: Arc<Stub>) -> String {
    let app = Router::new().route("/v1/chat/completions", post(chat)).with_state(stub);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}/v1/chat/completions")
}

fn config(url: &str) -> BackendConfig {
    let mut c = BackendConfig::new("stub", url, "stub-model-1");
    c.retry = RetryPolicy { attempts: 3, backoff_ms: 5 };
    c
}

#[tokio::test]
async fn sends_exactly_the_configured_parameters() {
    let stub = Arc::new(Stub { reply: "hello".into(), ..Default::default() });
    let url = serve(stub.clone()).await;
    let backend = HttpBackend::new(config(&url)).unwrap();
    let c = backend.complete("the prompt").await.unwrap();
    assert_eq!(c.text, "hello");
    assert_eq!(c.model_id, "stub-model-1");
    assert_eq!(c.usage.unwrap().total_tokens, Some(15));
    assert_eq!(c.attempts, 1);

    let bodies = stub.bodies.lock().unwrap();
    assert_eq!(
        bodies[0],
        json!({
            "model": "stub-model-1",
            "messages": [{"role": "user", "content": "the prompt"}],
            "temperature": 0.0,
            "max_tokens": 500,
            "top_p": 1.0,
            "frequency_penalty": 0.0,
            "presence_penalty": 0.0,
        })
    );
    assert_eq!(stub.auth.lock().unwrap()[0], None);
}

#[tokio::test]
async fn reasoning_models_get_5000_tokens() {
    let stub = Arc::new(Stub::default());
    let url = serve(stub.clone()).await;
    let mut c = config(&url);
    c.reasoning = true;
    HttpBackend::new(c).unwrap().complete("p").await.unwrap();
    assert_eq!(stub.bodies.lock().unwrap()[0]["max_tokens"], 5000);
}

#[tokio::test]
async fn empty_completion_is_a_result() {
    let stub = Arc::new(Stub::default());
    let url = serve(stub).await;
    let c = HttpBackend::new(config(&url)).unwrap().complete("p").await.unwrap();
    assert_eq!(c.text, "");
}

#[tokio::test]
async fn in_flight_requests_are_bounded() {
    let stub = Arc::new(Stub { delay_ms: 40, reply: "x".into(), ..Default::default() });
    let url = serve(stub.clone()).await;
    let mut c = config(&url);
    c.max_in_flight = 2;
    let backend = Arc::new(HttpBackend::new(c).unwrap());
    let handles: Vec<_> = (0..10)
        .map(|i| {
            let b = backend.clone();
            tokio::spawn(async move { b.complete(&format!("prompt {i}")).await })
        })
        .collect();
    for h in handles {
        h.await.unwrap().unwrap();
    }
    assert_eq!(stub.calls.load(Ordering::SeqCst), 10);
    assert_eq!(stub.peak.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn unreachable_endpoint_fails_after_configured_attempts() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    drop(listener);
    let mut c = config(&url);
    c.retry.attempts = 2;
    match HttpBackend::new(c).unwrap().complete("p").await {
        Err(BackendError::Transport { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("expected transport error, got {other:?}"),
    }
}

#[tokio::test]
async fn provider_errors_surface_their_message() {
    let stub = Arc::new(Stub { fail_status: Mutex::new(Some((400, usize::MAX))), ..Default::default() });
    let url = serve(stub.clone()).await;
    match HttpBackend::new(config(&url)).unwrap().complete("p").await {
        Err(BackendError::Provider { status, attempts, message }) => {
            assert_eq!((status, attempts), (400, 1));
            assert_eq!(message, "stub says no (400)");
        }
        other => panic!("expected provider error, got {other:?}"),
    }
    assert_eq!(stub.calls.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn rate_limits_are_retried() {
    let stub = Arc::new(Stub { fail_status: Mutex::new(Some((429, 2))), reply: "ok".into(), ..Default::default() });
    let url = serve(stub.clone()).await;
    let c = HttpBackend::new(config(&url)).unwrap().complete("p").await.unwrap();
    assert_eq!((c.text.as_str(), c.attempts), ("ok", 3));
}

#[tokio::test]
async fn api_key_is_sent_but_never_logged() {
    let dir = tempfile::tempdir().unwrap();
    let stub = Arc::new(Stub { reply: "No common factor between the input current case and the TSC1/TSC2".into(), ..Default::default() });
    let url = serve(stub.clone()).await;
    std::env::set_var("PLYEVAL_STUB_KEY", "sk-test-0123456789");

    let triples = generate(&GenSpec::new(Mode::NonArguable, 4, 12, 3), &Catalog::default_catalog()).unwrap();
    std::fs::write(dir.path().join("na.jsonl"), dataset_to_string(&triples)).unwrap();
    let plan = format!(
        "test = \"test3\"\ndataset = \"na.jsonl\"\nmodels = [\"stub\"]\n\n[[backend]]\nname = \"stub\"\nendpoint_url = \"{url}\"\nmodel_id = \"stub-model-1\"\napi_key_env = \"PLYEVAL_STUB_KEY\"\nmax_in_flight = 2\n"
    );
    let plan_path = dir.path().join("plan.toml");
    std::fs::write(&plan_path, plan).unwrap();
    let outcome = run_plan(&plan_path).await.unwrap();

    assert!(stub.auth.lock().unwrap().iter().all(|a| a.as_deref() == Some("Bearer sk-test-0123456789")));
    assert_eq!(outcome.reports[0].abstention.unwrap().ratio, 100.0);
    for entry in std::fs::read_dir(&outcome.run_dir).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        assert!(!text.contains("sk-test-0123456789"));
    }
    let log = std::fs::read_to_string(outcome.run_dir.join(RUN_LOG)).unwrap();
    assert_eq!(log.lines().count(), 4);
    assert!(log.contains("\"prompt_checksum\""));
}
