#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::thread::JoinHandle;

use serde_json::Value;
use stepwise_agent::{Agent, AgentError, Observation};
use stepwise_bank::{bundle_load_checked, instantiate_with, ProblemInstance, ProblemTemplate};

pub fn bundle_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../bundle")
}

pub fn bundle() -> Vec<ProblemTemplate> {
    bundle_load_checked(&bundle_dir()).expect("bundle loads")
}

pub fn maven_fixed() -> ProblemInstance {
    let t = bundle().into_iter().find(|t| t.id == "MAVEN-0001").unwrap();
    let p: BTreeMap<String, f64> = [("A", 1.0), ("B", 3.0), ("C", 2.0), ("m", 2.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    instantiate_with(&t, p, 0).unwrap()
}

/// Replies with fixed texts in order, repeating the last one.
pub struct Script {
    pub name: String,
    pub replies: Vec<String>,
    pub at: usize,
}

impl Script {
    pub fn new(name: &str, replies: Vec<String>) -> Self {
        Script {
            name: name.into(),
            replies,
            at: 0,
        }
    }
}

impl Agent for Script {
    fn name(&self) -> &str {
        &self.name
    }

    fn respond(&mut self, _obs: &Observation) -> Result<String, AgentError> {
        let i = self.at.min(self.replies.len() - 1);
        self.at += 1;
        Ok(self.replies[i].clone())
    }
}

/// A one-shot HTTP server; joins to the JSON body it received.
pub fn serve_once(status: &'static str, reply: String) -> (u16, JoinHandle<Value>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    let h = std::thread::spawn(move || {
        let (mut sock, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(sock.try_clone().unwrap());
        let mut len = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
            if line == "\r\n" {
                break;
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        write!(
            sock,
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
            reply.len()
        )
        .unwrap();
        serde_json::from_slice(&body).unwrap()
    });
    (port, h)
}
