//! External-service plumbing: endpoint configuration, a blocking JSON-POST
//! client, and a minimal in-process stub server for offline tests.
//!
//! Every neural model in the pipeline (hand-skeleton adapter, planning LLM,
//! video describer, text embedder, video generator, pose extractor) sits
//! behind an HTTP endpoint taking and returning JSON. Endpoints are read from
//! environment variables; unset means the corresponding stage uses its
//! offline fallback or is skipped.

use crate::error::{Error, Result};
use std::time::Duration;

pub const ADAPTER_ENDPOINT_VAR: &str = "ADAPTER_ENDPOINT";
pub const LLM_ENDPOINT_VAR: &str = "LLM_ENDPOINT";
pub const DESCRIBER_ENDPOINT_VAR: &str = "DESCRIBER_ENDPOINT";
pub const EMBEDDER_ENDPOINT_VAR: &str = "EMBEDDER_ENDPOINT";
pub const GENERATOR_ENDPOINT_VAR: &str = "GENERATOR_ENDPOINT";
pub const POSE_EXTRACTOR_ENDPOINT_VAR: &str = "POSE_EXTRACTOR_ENDPOINT";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Endpoints {
    pub adapter: Option<String>,
    pub llm: Option<String>,
    pub describer: Option<String>,
    pub embedder: Option<String>,
    pub generator: Option<String>,
    pub pose_extractor: Option<String>,
}

impl Endpoints {
    pub fn from_env() -> Self {
        let get = |var: &str| std::env::var(var).ok().filter(|v| !v.is_empty());
        Self {
            adapter: get(ADAPTER_ENDPOINT_VAR),
            llm: get(LLM_ENDPOINT_VAR),
            describer: get(DESCRIBER_ENDPOINT_VAR),
            embedder: get(EMBEDDER_ENDPOINT_VAR),
            generator: get(GENERATOR_ENDPOINT_VAR),
            pose_extractor: get(POSE_EXTRACTOR_ENDPOINT_VAR),
        }
    }
}

/// POSTs a JSON body and returns the parsed JSON response.
///
/// Transport failures and non-success statuses map to `ServiceUnreachable`;
/// a 2xx response that is not JSON maps to `ContractViolation`.
pub fn post_json(endpoint: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(120))
        .build()
        .map_err(|e| Error::ServiceUnreachable {
            endpoint: endpoint.to_string(),
            detail: e.to_string(),
        })?;
    let response = client
        .post(endpoint)
        .json(body)
        .send()
        .map_err(|e| Error::ServiceUnreachable {
            endpoint: endpoint.to_string(),
            detail: e.to_string(),
        })?;
    if !response.status().is_success() {
        return Err(Error::ServiceUnreachable {
            endpoint: endpoint.to_string(),
            detail: format!("status {}", response.status()),
        });
    }
    response
        .json()
        .map_err(|e| Error::ContractViolation(format!("response is not JSON: {e}")))
}

/// Single-threaded HTTP stub serving canned JSON responses, for offline
/// tests and local dry runs of the service contracts.
pub mod stub {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::{TcpListener, TcpStream};
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::Arc;
    use std::thread::JoinHandle;

    pub struct StubServer {
        addr: std::net::SocketAddr,
        stop: Arc<AtomicBool>,
        handle: Option<JoinHandle<()>>,
    }

    impl StubServer {
        /// Spawns a server; `handler` maps (path, request JSON) to the
        /// response JSON.
        pub fn serve<F>(handler: F) -> Self
        where
            F: Fn(&str, serde_json::Value) -> serde_json::Value + Send + Sync + 'static,
        {
            let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
            let addr = listener.local_addr().expect("stub server address");
            let stop = Arc::new(AtomicBool::new(false));
            let stop_flag = stop.clone();
            let handle = std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop_flag.load(Ordering::SeqCst) {
                        break;
                    }
                    if let Ok(stream) = stream {
                        let _ = handle_connection(stream, &handler);
                    }
                }
            });
            Self {
                addr,
                stop,
                handle: Some(handle),
            }
        }

        /// Base URL, e.g. `http://127.0.0.1:34567`.
        pub fn url(&self) -> String {
            format!("http://{}", self.addr)
        }

        pub fn endpoint(&self, path: &str) -> String {
            format!("{}{}", self.url(), path)
        }
    }

    impl Drop for StubServer {
        fn drop(&mut self) {
            self.stop.store(true, Ordering::SeqCst);
            // Wake the accept loop.
            let _ = TcpStream::connect(self.addr);
            if let Some(handle) = self.handle.take() {
                let _ = handle.join();
            }
        }
    }

    fn handle_connection<F>(stream: TcpStream, handler: &F) -> std::io::Result<()>
    where
        F: Fn(&str, serde_json::Value) -> serde_json::Value,
    {
        let mut reader = BufReader::new(stream);
        let mut request_line = String::new();
        reader.read_line(&mut request_line)?;
        let path = request_line
            .split_whitespace()
            .nth(1)
            .unwrap_or("/")
            .to_string();
        let mut content_length = 0usize;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line)?;
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some(value) = line
                .to_ascii_lowercase()
                .strip_prefix("content-length:")
                .map(str::trim)
                .and_then(|v| v.parse::<usize>().ok())
            {
                content_length = value;
            }
        }
        let mut body = vec![0u8; content_length];
        reader.read_exact(&mut body)?;
        let request: serde_json::Value =
            serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
        let response = handler(&path, request);
        let body = serde_json::to_vec(&response).unwrap_or_default();
        let mut stream = reader.into_inner();
        write!(
            stream,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
            body.len()
        )?;
        stream.write_all(&body)?;
        stream.flush()
    }
}
