//! Durability against a hard kill of the real server process.

use std::collections::{BTreeSet, HashMap};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use cxr_core::synth::Scenario;
use serde_json::{json, Value};

struct Server {
    child: Child,
    base: String,
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn start(bin: &Path, config: &Path, client: &reqwest::blocking::Client) -> Server {
    let port = free_port();
    let child = Command::new(bin)
        .args(["serve", "--config"])
        .arg(config)
        .env("CXR_LISTEN", format!("127.0.0.1:{port}"))
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let base = format!("http://127.0.0.1:{port}");
    let deadline = Instant::now() + Duration::from_secs(60);
    while client.get(format!("{base}/health")).send().is_err() {
        assert!(Instant::now() < deadline, "server did not come up");
        thread::sleep(Duration::from_millis(20));
    }
    Server { child, base }
}

fn kill(mut s: Server) {
    s.child.kill().unwrap();
    s.child.wait().unwrap();
}

fn feedback_ids(client: &reqwest::blocking::Client, base: &str, id: &str) -> Vec<String> {
    let log: Vec<Value> = client
        .get(format!("{base}/studies/{id}/feedback"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    log.iter().map(|e| e["event_id"].as_str().unwrap().to_string()).collect()
}

/// Outcome of a kill-and-replay run, accumulated over every round.
#[derive(Debug, Default)]
pub struct DurabilityReport {
    pub rounds: usize,
    pub acked: usize,
    /// Acked events missing after a restart.
    pub lost: usize,
    /// Event ids present more than once after a restart.
    pub duplicated: usize,
    /// Replayed events that were neither acked nor in flight at the kill.
    pub phantom: usize,
}

/// Starts the `cxr` binary, streams feedback from a client thread, kills
/// the server with SIGKILL mid-stream, restarts it and compares what the
/// client saw acknowledged with what the log replays. `bin` is the path to
/// the binary.
pub fn kill_and_replay(bin: &Path, rounds: u64) -> DurabilityReport {
    let mut report = DurabilityReport::default();
    let c = super::corpus(&[Scenario::Critical]);
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("fixture.ndjson");
    std::fs::write(&fixture, &c.fixture).unwrap();
    let config = dir.path().join("cxr.toml");
    std::fs::write(
        &config,
        format!(
            "data_dir = {:?}\nsnapshot_every = 7\n\n[backend]\nkind = \"Fixture\"\nname = \"replay\"\nfixture_path = {:?}\n",
            dir.path().join("data"),
            fixture
        ),
    )
    .unwrap();
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(10))
        .build()
        .unwrap();

    let mut server = start(bin, &config, &client);
    let sub: Value = client
        .post(format!("{}/studies", server.base))
        .body(c.studies[0].bytes.clone())
        .send()
        .unwrap()
        .json()
        .unwrap();
    let id = sub["study_id"].as_str().unwrap().to_string();
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        let v: Value = client.get(format!("{}/studies/{id}", server.base)).send().unwrap().json().unwrap();
        if v["status"]["state"] == "AwaitingReview" {
            break;
        }
        assert!(Instant::now() < deadline, "study never processed: {v}");
        thread::sleep(Duration::from_millis(20));
    }

    let mut acked_total: BTreeSet<String> = BTreeSet::new();
    for round in 0..rounds {
        let acked = Arc::new(Mutex::new(Vec::<String>::new()));
        let in_flight = Arc::new(Mutex::new(None::<String>));
        let stop = Arc::new(AtomicBool::new(false));
        let sender = {
            let (acked, in_flight, stop) = (acked.clone(), in_flight.clone(), stop.clone());
            let (base, id, client) = (server.base.clone(), id.clone(), client.clone());
            thread::spawn(move || {
                for k in 0.. {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let ev = format!("r{round}-e{k}");
                    *in_flight.lock().unwrap() = Some(ev.clone());
                    let body = json!({
                        "event_id": ev,
                        "finding": "classification",
                        "verdict": if k % 2 == 0 { "Accepted" } else { "Rejected" },
                    });
                    let resp = client
                        .post(format!("{base}/predictions/{id}/feedback"))
                        .header("x-reviewer-id", format!("dr-{}", k % 3))
                        .json(&body)
                        .send();
                    match resp {
                        Ok(r) if r.status().is_success() => {
                            acked.lock().unwrap().push(ev);
                            *in_flight.lock().unwrap() = None;
                        }
                        _ => break,
                    }
                }
            })
        };
        thread::sleep(Duration::from_millis(150 + 110 * round));
        kill(server);
        stop.store(true, Ordering::SeqCst);
        sender.join().unwrap();
        let acked = acked.lock().unwrap().clone();
        let pending = in_flight.lock().unwrap().clone();
        assert!(!acked.is_empty(), "round {round} acked nothing before the kill");
        acked_total.extend(acked.iter().cloned());

        server = start(bin, &config, &client);
        let replayed = feedback_ids(&client, &server.base, &id);
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for e in &replayed {
            *counts.entry(e).or_default() += 1;
        }
        report.rounds += 1;
        report.duplicated += counts.values().filter(|&&n| n > 1).count();
        report.lost += acked_total.iter().filter(|e| !counts.contains_key(e.as_str())).count();
        report.phantom += counts
            .keys()
            .filter(|e| !acked_total.contains(**e) && pending.as_deref() != Some(**e))
            .count();
        // The client retries whatever was cut off; it lands exactly once.
        if let Some(ev) = pending {
            let r: Value = client
                .post(format!("{}/predictions/{id}/feedback", server.base))
                .header("x-reviewer-id", "dr-retry")
                .json(&json!({"event_id": ev, "finding": "classification", "verdict": "Accepted"}))
                .send()
                .unwrap()
                .json()
                .unwrap();
            assert_eq!(r["event_id"], json!(ev));
            acked_total.insert(ev);
        }
        let replayed: BTreeSet<String> = feedback_ids(&client, &server.base, &id).into_iter().collect();
        report.lost += acked_total.difference(&replayed).count();
        report.phantom += replayed.difference(&acked_total).count();
    }
    kill(server);
    report.acked = acked_total.len();
    report
}
