use std::net::SocketAddr;
use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use teleop_bridge::{
    decode_frame, encode_command, Bridge, BridgeError, ClientMessage, CockpitSession, CommandMsg, DriveMapping, ModeMsg,
    ServerMessage, StateFrame, PROTOCOL_VERSION,
};
use teleop_core::channel::DelayModel;
use teleop_core::dataset::Case;
use teleop_core::harness::ScenarioConfig;
use tokio::net::TcpStream;
use tokio::sync::oneshot;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Running {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<Result<(), BridgeError>>,
}

impl Running {
    async fn start(case: Case) -> Self {
        Self::with_config(ScenarioConfig::default().with_case(case)).await
    }

    async fn with_config(config: ScenarioConfig) -> Self {
        let session = CockpitSession::new(config, None, DriveMapping::default()).unwrap();
        let bridge = Bridge::bind("127.0.0.1:0".parse().unwrap(), session).await.unwrap();
        let addr = bridge.local_addr().unwrap();
        let (stop, stopped) = oneshot::channel::<()>();
        let task = tokio::spawn(bridge.run(async {
            let _ = stopped.await;
        }));
        Self {
            addr,
            stop: Some(stop),
            task,
        }
    }

    async fn connect(&self) -> Client {
        let (ws, _) = connect_async(format!("ws://{}/teleop", self.addr)).await.unwrap();
        ws
    }

    async fn shutdown(mut self) {
        let _ = self.stop.take().unwrap().send(());
        tokio::time::timeout(Duration::from_secs(5), self.task)
            .await
            .expect("bridge stops")
            .unwrap()
            .unwrap();
    }
}

async fn next_message(ws: &mut Client) -> ServerMessage {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("server keeps talking")
            .expect("stream open")
            .unwrap();
        if let Message::Text(text) = msg {
            return decode_frame(&text).unwrap();
        }
    }
}

async fn next_frame(ws: &mut Client) -> StateFrame {
    loop {
        if let ServerMessage::Frame(f) = next_message(ws).await {
            return f;
        }
    }
}

async fn next_error(ws: &mut Client) -> String {
    loop {
        if let ServerMessage::Error(e) = next_message(ws).await {
            return e.message;
        }
    }
}

fn cmd(seq: u64, v_norm: f64) -> Message {
    Message::Text(encode_command(&ClientMessage::Cmd(CommandMsg {
        v: PROTOCOL_VERSION,
        seq,
        client_time: 0.0,
        v_norm,
        omega_norm: 0.0,
    })))
}

#[tokio::test]
async fn frames_arrive_at_ten_hertz_with_increasing_time() {
    let bridge = Running::start(Case::Delayed).await;
    let mut ws = bridge.connect().await;
    next_frame(&mut ws).await;
    let start = Instant::now();
    let mut last = next_frame(&mut ws).await;
    let n = 20;
    for _ in 0..n {
        let f = next_frame(&mut ws).await;
        assert!(f.server_time > last.server_time);
        last = f;
    }
    let mean = start.elapsed().as_secs_f64() / n as f64;
    assert!((mean - 0.1).abs() < 0.02, "mean inter-arrival {mean:.3} s");
    bridge.shutdown().await;
}

/// Server time between the first frame showing the device move and the
/// first frame showing force feedback.
async fn step_round_trip(bridge: &Running) -> f64 {
    let mut ws = bridge.connect().await;
    let idle = next_frame(&mut ws).await;
    assert_eq!(idle.x_m, [0.0, 0.0]);
    assert_eq!(idle.force_feedback, [0.0, 0.0]);

    let mut seq = 0;
    let mut moved = None;
    loop {
        seq += 1;
        ws.send(cmd(seq, 1.0)).await.unwrap();
        let f = next_frame(&mut ws).await;
        if moved.is_none() && f.x_m[0] != 0.0 {
            moved = Some(f.server_time);
        }
        if f.force_feedback[0] != 0.0 {
            return f.server_time - moved.expect("device moves before anything comes back");
        }
        assert!(seq < 100, "no force feedback after {seq} frames");
    }
}

#[tokio::test]
async fn force_feedback_lags_a_command_step_by_the_round_trip() {
    let mut config = ScenarioConfig::default().with_case(Case::Delayed);
    config.delay = DelayModel::fixed(1.0, 0);
    let bridge = Running::with_config(config).await;
    let lag = step_round_trip(&bridge).await;
    assert!((lag - 2.0).abs() <= 0.15, "round trip {lag:.2} s");
    bridge.shutdown().await;
}

#[tokio::test]
async fn jittered_round_trip_stays_within_the_jitter_band() {
    let bridge = Running::start(Case::Delayed).await;
    let lag = step_round_trip(&bridge).await;
    assert!((1.5..=2.6).contains(&lag), "round trip {lag:.2} s");
    bridge.shutdown().await;
}

#[tokio::test]
async fn malformed_messages_get_an_error_reply() {
    let bridge = Running::start(Case::Ideal).await;
    let mut ws = bridge.connect().await;
    ws.send(Message::Text(r#"{"type":"cmd","v_norm":1,"omega_norm":0}"#.into())).await.unwrap();
    assert!(next_error(&mut ws).await.contains("seq"));
    ws.send(Message::Text("{".into())).await.unwrap();
    next_error(&mut ws).await;
    // the connection survives
    ws.send(cmd(1, 0.5)).await.unwrap();
    next_frame(&mut ws).await;
    bridge.shutdown().await;
}

#[tokio::test]
async fn only_the_first_client_drives() {
    let bridge = Running::start(Case::Ideal).await;
    let mut driver = bridge.connect().await;
    next_frame(&mut driver).await;
    let mut observer = bridge.connect().await;
    next_frame(&mut observer).await;
    observer.send(cmd(1, 1.0)).await.unwrap();
    assert!(next_error(&mut observer).await.contains("control"));
    driver.send(cmd(1, 1.0)).await.unwrap();
    let mut f = next_frame(&mut observer).await;
    for _ in 0..5 {
        f = next_frame(&mut observer).await;
    }
    assert!(f.x_m[0] > 0.0);
    drop(driver);
    // control passes on once the driver leaves
    tokio::time::sleep(Duration::from_millis(300)).await;
    observer.send(cmd(1, 1.0)).await.unwrap();
    let deadline = Instant::now() + Duration::from_secs(1);
    while Instant::now() < deadline {
        if let ServerMessage::Error(e) = next_message(&mut observer).await {
            panic!("unexpected error: {}", e.message);
        }
    }
    bridge.shutdown().await;
}

#[tokio::test]
async fn mode_switch_restarts_with_empty_channels() {
    let bridge = Running::start(Case::Delayed).await;
    let mut ws = bridge.connect().await;
    let mut f = next_frame(&mut ws).await;
    for seq in 1..=15 {
        ws.send(cmd(seq, 1.0)).await.unwrap();
        f = next_frame(&mut ws).await;
    }
    assert!(f.backlog.iter().sum::<usize>() > 0);
    let mode = ClientMessage::Mode(ModeMsg {
        v: PROTOCOL_VERSION,
        seq: 16,
        mode: Case::Predicted,
    });
    ws.send(Message::Text(encode_command(&mode))).await.unwrap();
    loop {
        let f = next_frame(&mut ws).await;
        if f.mode == Case::Predicted {
            assert_eq!(f.tick, 0);
            assert_eq!(f.backlog, [0, 0]);
            assert_eq!(f.x_m, [0.0, 0.0]);
            break;
        }
    }
    bridge.shutdown().await;
}

#[tokio::test]
async fn index_page_and_busy_port() {
    let bridge = Running::start(Case::Ideal).await;
    let mut stream = TcpStream::connect(bridge.addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(b"GET / HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut body = String::new();
    stream.read_to_string(&mut body).await.unwrap();
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.contains("/teleop"));

    let session = CockpitSession::new(ScenarioConfig::default(), None, DriveMapping::default()).unwrap();
    let err = Bridge::bind(bridge.addr, session).await.err().expect("port is taken");
    assert!(matches!(err, BridgeError::Bind { .. }));
    bridge.shutdown().await;
}
