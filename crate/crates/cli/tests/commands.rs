use std::fs;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;
use stepwise_tools::json::canonical_string;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stepwise"))
}

fn bundle() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../bundle")
}

fn golden(name: &str) -> String {
    fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../context/tests/golden").join(name)).unwrap()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn gen_writes_sixty_reproducible_instances() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["gen", "--bundle", s(&bundle()), "--seed", "0..5", "--out", s(&a)]);
    ok(&["gen", "--bundle", s(&bundle()), "--seed", "0..5", "--out", s(&b)]);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 60);
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap());
    }
    ok(&["validate", "--bundle", s(&bundle()), "--seeds", "1", "--instances", s(&a)]);

    let first = a.join(&names[0]);
    let mut v: Value = serde_json::from_str(&read(&first)).unwrap();
    v["statement"] = Value::String("tampered".into());
    fs::write(&first, v.to_string()).unwrap();
    let o = run(&["validate", "--bundle", s(&bundle()), "--seeds", "1", "--instances", s(&a)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_input_is_exit_one_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&["eval", "--bundle", s(&bundle()), "--models", "oracle,gpt-17", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gpt-17"));
    assert!(!out.exists());
    let o = run(&["eval", "--bundle", "/no/bundle", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["eval", "--bundle", s(&bundle()), "--seed", "x", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(run(&["eval", "--bogus"]).status.code(), Some(1));
    assert!(!out.exists());
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn eval_score_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let b = bundle();
    let args = [
        "eval",
        "--bundle",
        s(&b),
        "--seed",
        "0..5",
        "--models",
        "oracle,violation:multi_call,degrading:7",
        "--parallel",
        "4",
        "--out",
        s(&out),
    ];
    ok(&args);
    let csv = read(&out.join("results.csv"));
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 180);
    for r in rows.iter().filter(|r| r[0] == "oracle") {
        assert_eq!((r[2].as_str(), r[3].as_str()), ("true", "100.0000"));
    }
    for r in rows.iter().filter(|r| r[0] == "violation:multi_call") {
        assert_eq!(r[9], "true", "{r:?}");
        assert!(r[10].contains("multi_call"));
    }
    let cfg: Value = serde_json::from_str(&read(&out.join("run_config.json"))).unwrap();
    assert_eq!(cfg["run"]["parallelism"], 4);
    assert_eq!(cfg["seeds"], serde_json::json!([0, 1, 2, 3, 4]));

    // A second invocation resumes every episode and rewrites the same bytes.
    ok(&args);
    assert_eq!(read(&out.join("results.csv")), csv);

    let rescored = dir.path().join("rescored.csv");
    ok(&["score", "--bundle", s(&bundle()), "--out", s(&rescored), s(&out.join("episodes"))]);
    assert_eq!(read(&rescored), csv);

    let rep = dir.path().join("report");
    ok(&["report", "--csv", s(&out.join("results.csv")), "--out", s(&rep)]);
    let buckets = read(&rep.join("buckets.csv"));
    let oracle: Vec<&str> = buckets.lines().filter(|l| l.starts_with("oracle,")).collect();
    assert_eq!(
        oracle,
        [
            "oracle,6,40,100.0000",
            "oracle,7,5,100.0000",
            "oracle,8,5,100.0000",
            "oracle,9,5,100.0000",
            "oracle,10,5,100.0000",
            "oracle,15,0,"
        ]
    );
    assert!(read(&rep.join("summary.csv")).contains("oracle,60,100.0000,100.0000,100.0000,100.0000,"));
    let json: Value = serde_json::from_str(&read(&rep.join("report.json"))).unwrap();
    assert_eq!(json["models"].as_array().unwrap().len(), 3);
}

#[test]
fn killed_parallel_run_resumes_to_the_sequential_csv() {
    let dir = tempfile::tempdir().unwrap();
    let base = |out: &Path, p: &str| {
        vec![
            "eval".to_string(),
            "--bundle".into(),
            s(&bundle()).into(),
            "--models".into(),
            "oracle,reasoner".into(),
            "--parallel".into(),
            p.into(),
            "--out".into(),
            s(out).into(),
        ]
    };
    let seq = dir.path().join("seq");
    let a = base(&seq, "1");
    ok(&a.iter().map(String::as_str).collect::<Vec<_>>());

    let par = dir.path().join("par");
    let mut killed = base(&par, "8");
    killed.extend(["--stop-after".into(), "50".into()]);
    let o = run(&killed.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(o.status.code(), Some(2));
    assert!(!par.join("results.csv").exists());
    let b = base(&par, "8");
    ok(&b.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(fs::read(par.join("results.csv")).unwrap(), fs::read(seq.join("results.csv")).unwrap());
}

#[test]
fn score_handles_bare_and_empty_traces() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("empty.json");
    fs::write(&f, r#"{"model":"m","instance_id":"MAVEN-0001-s0000","trace":[]}"#).unwrap();
    let o = ok(&["score", "--bundle", s(&bundle()), s(&f)]);
    let text = String::from_utf8(o.stdout).unwrap();
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][..9], ["m", "MAVEN-0001-s0000", "false", "0.0000", "0.0000", "0.0000", "0.0000", "0.0000", "0.0000"]);

    fs::write(&f, r#"{"model":"m","instance_id":"NOPE-s0000"}"#).unwrap();
    assert_eq!(run(&["score", "--bundle", s(&bundle()), s(&f)]).status.code(), Some(1));
    fs::write(&f, "not json").unwrap();
    assert_eq!(run(&["score", "--bundle", s(&bundle()), s(&f)]).status.code(), Some(1));
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn start(port: u16, journal: Option<&Path>) -> Server {
    let mut c = bin();
    c.args(["serve", "--listen", &format!("127.0.0.1:{port}")]);
    if let Some(j) = journal {
        c.args(["--journal", s(j)]);
    }
    let child = c.stdout(Stdio::null()).stderr(Stdio::null()).spawn().unwrap();
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let t0 = Instant::now();
    while TcpStream::connect(addr).is_err() {
        assert!(t0.elapsed() < Duration::from_secs(10), "server did not start");
        std::thread::sleep(Duration::from_millis(20));
    }
    Server(child)
}

fn post(port: u16, path: &str, body: &str) -> (u16, String) {
    let mut sock = TcpStream::connect(("127.0.0.1", port)).unwrap();
    write!(
        sock,
        "POST {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    sock.read_to_string(&mut raw).unwrap();
    let (head, rest) = raw.split_once("\r\n\r\n").unwrap();
    (head.split_whitespace().nth(1).unwrap().parse().unwrap(), rest.to_string())
}

fn canonical(text: &str) -> String {
    canonical_string(&serde_json::from_str(text).unwrap())
}

#[test]
fn serve_answers_the_golden_exchange_and_resumes_its_journal() {
    let dir = tempfile::tempdir().unwrap();
    let port = free_port();
    {
        let _srv = start(port, Some(dir.path()));
        let (status, body) = post(port, "/mcp/call", &golden("call_request.json"));
        assert_eq!(status, 200);
        assert_eq!(body, canonical(&golden("call_response.json")));

        let o = run(&["serve", "--listen", &format!("127.0.0.1:{port}")]);
        assert_eq!(o.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&o.stderr).contains("cannot listen"));
    }
    let port = free_port();
    let _srv = start(port, Some(dir.path()));
    let (status, body) = post(port, "/mcp-server/mcp", &golden("query_request.json"));
    assert_eq!(status, 200);
    assert_eq!(body, canonical(&golden("query_response.json")));
    assert_eq!(post(port, "/mcp/call", &golden("call_request.json")).0, 409);
}
