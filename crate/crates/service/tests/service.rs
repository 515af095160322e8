use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

use neuroadapt::adapt::{EchoBackend, HttpBackend, HttpBackendConfig, Role};
use neuroadapt::classifier::MlpModel;
use neuroadapt::features::FeatureConfig;
use neuroadapt::pipeline::{train_default_model, DEFAULT_MODEL_SEEDS};
use neuroadapt::session::wire::{decode_server, encode_client};
use neuroadapt::session::{replay, Archive, ClientMessage, ServerMessage};
use neuroadapt::AttentionState;
use neuroadapt_service::{spawn, ServiceConfig, CLOSE_UNKNOWN_SESSION};

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

fn model() -> Arc<MlpModel> {
    static M: OnceLock<Arc<MlpModel>> = OnceLock::new();
    M.get_or_init(|| {
        Arc::new(
            train_default_model(DEFAULT_MODEL_SEEDS, FeatureConfig::default())
                .unwrap()
                .0,
        )
    })
    .clone()
}

async fn start_service() -> SocketAddr {
    let m = tokio::task::spawn_blocking(model).await.unwrap();
    let mut cfg = ServiceConfig::new(m, Arc::new(EchoBackend));
    cfg.accel = 100.0;
    spawn("127.0.0.1:0".parse().unwrap(), cfg).await.unwrap().0
}

/// Blocking HTTP call off the runtime; returns (status, body).
async fn http(method: &'static str, url: String, body: Option<Value>) -> (u16, Vec<u8>) {
    tokio::task::spawn_blocking(move || {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = match (method, body) {
            ("GET", _) => agent.get(&url).call(),
            (_, Some(b)) => agent.post(&url).send_json(b),
            (_, None) => agent.post(&url).send_empty(),
        }
        .unwrap();
        let status = resp.status().as_u16();
        (status, resp.body_mut().read_to_vec().unwrap())
    })
    .await
    .unwrap()
}

async fn create(addr: SocketAddr, body: Value) -> String {
    let (status, body) = http("POST", format!("http://{addr}/sessions"), Some(body)).await;
    assert_eq!(status, 201, "{}", String::from_utf8_lossy(&body));
    let v: Value = serde_json::from_slice(&body).unwrap();
    v["session_id"].as_str().unwrap().to_string()
}

async fn connect(addr: SocketAddr, id: &str) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{id}/feed"))
        .await
        .unwrap()
        .0
}

async fn next_msg(ws: &mut Ws) -> Option<ServerMessage> {
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(30), ws.next())
            .await
            .expect("feed stalled")?
            .ok()?;
        match frame {
            Message::Text(t) => return Some(decode_server(&t).unwrap()),
            Message::Close(_) => return None,
            _ => {}
        }
    }
}

async fn send(ws: &mut Ws, m: ClientMessage) {
    ws.send(Message::Text(encode_client(&m).into())).await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn health_and_listing() {
    let addr = start_service().await;
    let (status, body) = http("GET", format!("http://{addr}/health"), None).await;
    assert_eq!((status, body.as_slice()), (200, b"ok".as_slice()));
    let id = create(addr, json!({"mode": "baseline"})).await;
    let (_, body) = http("GET", format!("http://{addr}/sessions"), None).await;
    let ids: Vec<String> = serde_json::from_slice(&body).unwrap();
    assert_eq!(ids, vec![id.clone()]);
    let (status, body) = http("GET", format!("http://{addr}/sessions/{id}"), None).await;
    assert_eq!(status, 200);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["mode"], "Baseline");
    let (status, _) = http("GET", format!("http://{addr}/sessions/nope"), None).await;
    assert_eq!(status, 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn feed_starts_with_hello_then_state_updates() {
    let addr = start_service().await;
    let id = create(addr, json!({"seed": 3})).await;
    let mut ws = connect(addr, &id).await;
    match next_msg(&mut ws).await.unwrap() {
        ServerMessage::Hello {
            session_id, directive, ..
        } => {
            assert_eq!(session_id, id);
            assert_eq!(directive.state, AttentionState::StableAttention);
        }
        other => panic!("expected hello, got {other:?}"),
    }
    let mut ends = Vec::new();
    while ends.len() < 5 {
        if let ServerMessage::StateUpdate { window_end_us, .. } = next_msg(&mut ws).await.unwrap() {
            ends.push(window_end_us);
        }
    }
    assert!(ends.windows(2).all(|w| w[1] - w[0] == 1_000_000), "{ends:?}");
}

#[tokio::test(flavor = "multi_thread")]
async fn chat_round_trip_over_the_feed() {
    let addr = start_service().await;
    let id = create(addr, json!({"seed": 4})).await;
    let mut ws = connect(addr, &id).await;
    send(&mut ws, ClientMessage::UserMsg { content: "what is entropy?".into() }).await;
    let mut roles = Vec::new();
    while roles.len() < 2 {
        if let ServerMessage::Chat { role, content, directive_id, .. } = next_msg(&mut ws).await.unwrap() {
            if role == Role::Assistant {
                assert_eq!(content, format!("[{directive_id}] what is entropy?"));
            }
            roles.push(role);
        }
    }
    assert_eq!(roles, vec![Role::User, Role::Assistant]);

    send(&mut ws, ClientMessage::UserMsg { content: "  ".into() }).await;
    ws.send(Message::Text("{\"v\":1,\"type\":\"dance\"}".into())).await.unwrap();
    let mut codes = Vec::new();
    while codes.len() < 2 {
        if let ServerMessage::Error { code, .. } = next_msg(&mut ws).await.unwrap() {
            codes.push(code);
        }
    }
    assert_eq!(codes, vec!["empty_message", "bad_message"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_session_closes_with_4404() {
    let addr = start_service().await;
    let mut ws = connect(addr, "missing").await;
    let frame = ws.next().await.unwrap().unwrap();
    match frame {
        Message::Close(Some(cf)) => assert_eq!(u16::from(cf.code), CLOSE_UNKNOWN_SESSION),
        other => panic!("expected close, got {other:?}"),
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_scenario_reports_line() {
    let addr = start_service().await;
    let scenario = "[[block]]\nstate = \"StableAttention\"\nduration_s = 60\n\n[[block]]\nstate = \"Sleepy\"\nduration_s = 60\n";
    let (status, body) = http("POST", format!("http://{addr}/sessions"), Some(json!({"scenario": scenario}))).await;
    assert_eq!(status, 400);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["error"], "bad_scenario");
    assert_eq!(v["line"], 6);
}

#[tokio::test(flavor = "multi_thread")]
async fn unreachable_backend_refuses_new_sessions() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend = HttpBackend::new(HttpBackendConfig {
        endpoint: format!("http://127.0.0.1:{port}/v1/chat/completions"),
        timeout_s: 0.5,
        ..Default::default()
    })
    .unwrap();
    let m = tokio::task::spawn_blocking(model).await.unwrap();
    let (addr, _) = spawn("127.0.0.1:0".parse().unwrap(), ServiceConfig::new(m, Arc::new(backend)))
        .await
        .unwrap();
    let (status, body) = http("POST", format!("http://{addr}/sessions"), Some(json!({}))).await;
    assert_eq!(status, 503);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["error"], "backend_unavailable");
}

#[tokio::test(flavor = "multi_thread")]
async fn finished_session_archive_replays() {
    let addr = start_service().await;
    let id = create(addr, json!({"seed": 5, "accel": 1000.0})).await;
    let (status, _) = http("GET", format!("http://{addr}/sessions/{id}/archive"), None).await;
    assert_eq!(status, 409);

    let mut ws = connect(addr, &id).await;
    send(&mut ws, ClientMessage::UserMsg { content: "hello".into() }).await;
    let mut ended = false;
    while let Some(m) = next_msg(&mut ws).await {
        ended |= matches!(m, ServerMessage::SessionEnd { .. });
    }
    assert!(ended);

    let (status, body) = http("GET", format!("http://{addr}/sessions/{id}/archive"), None).await;
    assert_eq!(status, 200);
    let archive = Archive::read_bytes(&body).unwrap();
    let report = tokio::task::spawn_blocking(move || {
        replay(&archive, model(), Arc::new(neuroadapt::adapt::DirectiveSet::builtin())).unwrap()
    })
    .await
    .unwrap();
    assert!(report.is_match(), "{}", report.summary());

    let (status, body) = http("GET", format!("http://{addr}/sessions/{id}/metrics"), None).await;
    assert_eq!(status, 200);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["time_on_task_s"], 300.0);
}

#[tokio::test(flavor = "multi_thread")]
async fn late_probe_answer_is_acked_as_expired() {
    let addr = start_service().await;
    let id = create(addr, json!({"seed": 6})).await;
    let mut ws = connect(addr, &id).await;
    let (onset, deadline) = loop {
        if let ServerMessage::Probe { onset_us, deadline_us } = next_msg(&mut ws).await.unwrap() {
            break (onset_us, deadline_us);
        }
    };
    loop {
        if let ServerMessage::StateUpdate { window_end_us, .. } = next_msg(&mut ws).await.unwrap() {
            if window_end_us > deadline + 1_000_000 {
                break;
            }
        }
    }
    send(&mut ws, ClientMessage::ProbeResponse { onset_us: onset, rating: 2 }).await;
    loop {
        if let ServerMessage::ProbeAck { onset_us, expired, rating } = next_msg(&mut ws).await.unwrap() {
            assert_eq!((onset_us, rating, expired), (onset, 2, true));
            break;
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn pause_and_close_over_http() {
    let addr = start_service().await;
    let id = create(addr, json!({"live": {"initial": "Distraction", "seed": 1}})).await;
    let mut ws = connect(addr, &id).await;
    assert!(matches!(next_msg(&mut ws).await, Some(ServerMessage::Hello { .. })));
    send(&mut ws, ClientMessage::Pause { paused: true }).await;
    tokio::time::sleep(Duration::from_millis(100)).await;
    let (_, body) = http("GET", format!("http://{addr}/sessions/{id}"), None).await;
    let a: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(a["paused"], true);
    tokio::time::sleep(Duration::from_millis(200)).await;
    let (_, body) = http("GET", format!("http://{addr}/sessions/{id}"), None).await;
    let b: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(a["clock_us"], b["clock_us"]);

    let (status, _) = http("POST", format!("http://{addr}/sessions/{id}/close"), None).await;
    assert_eq!(status, 204);
    while next_msg(&mut ws).await.is_some() {}
    let (status, _) = http("GET", format!("http://{addr}/sessions/{id}/archive"), None).await;
    assert_eq!(status, 200);
}
