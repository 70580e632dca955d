//! Minimal HTTP/1.1: one request per connection, `Content-Length` bodies only.
//!
//! This is the dialect spoken by emulated nodes. The same rendering is used by
//! the virtual network to account message sizes, so simulated and real
//! traffic have identical byte counts.

use std::fmt;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::time::Duration;

use serde_json::Value;

const MAX_HEAD: usize = 16 * 1024;
const MAX_BODY: usize = 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Get,
    Put,
    Post,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Put => "PUT",
            Method::Post => "POST",
        }
    }

    fn parse(text: &str) -> Option<Self> {
        match text {
            "GET" => Some(Method::Get),
            "PUT" => Some(Method::Put),
            "POST" => Some(Method::Post),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HttpError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed HTTP message: {0}")]
    Malformed(String),
    #[error("unsupported method `{0}`")]
    UnsupportedMethod(String),
    #[error("connection closed before a complete message arrived")]
    Truncated,
}

impl HttpError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, HttpError::Io(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: Method,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpRequest {
    pub fn new(method: Method, path: impl Into<String>) -> Self {
        Self {
            method,
            path: path.into(),
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn get(path: impl Into<String>) -> Self {
        Self::new(Method::Get, path)
    }

    pub fn with_json(mut self, body: &Value) -> Self {
        self.body = serde_json::to_vec(body).expect("JSON values always serialize");
        self
    }

    pub fn with_body(mut self, body: Vec<u8>) -> Self {
        self.body = body;
        self
    }

    pub fn with_header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    /// Wire bytes, addressed to `host`.
    pub fn to_bytes(&self, host: &str) -> Vec<u8> {
        let mut out = format!("{} {} HTTP/1.1\r\nHost: {host}\r\n", self.method, self.path);
        for (k, v) in &self.headers {
            out.push_str(&format!("{k}: {v}\r\n"));
        }
        if !self.body.is_empty() {
            out.push_str(&format!(
                "Content-Type: application/json\r\nContent-Length: {}\r\n",
                self.body.len()
            ));
        }
        out.push_str("\r\n");
        let mut bytes = out.into_bytes();
        bytes.extend_from_slice(&self.body);
        bytes
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn json(status: u16, body: &Value) -> Self {
        Self {
            status,
            body: serde_json::to_vec(body).expect("JSON values always serialize"),
        }
    }

    pub fn empty(status: u16) -> Self {
        Self {
            status,
            body: Vec::new(),
        }
    }

    pub fn json_body(&self) -> Option<Value> {
        serde_json::from_slice(&self.body).ok()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("HTTP/1.1 {} {}\r\n", self.status, reason(self.status));
        if !self.body.is_empty() {
            out.push_str("Content-Type: application/json\r\n");
        }
        out.push_str(&format!(
            "Content-Length: {}\r\nConnection: close\r\n\r\n",
            self.body.len()
        ));
        let mut bytes = out.into_bytes();
        bytes.extend_from_slice(&self.body);
        bytes
    }
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        202 => "Accepted",
        400 => "Bad Request",
        401 => "Unauthorized",
        403 => "Forbidden",
        404 => "Not Found",
        405 => "Method Not Allowed",
        502 => "Bad Gateway",
        503 => "Service Unavailable",
        _ => "Unknown",
    }
}

/// Reads until the end of the header block; returns (head, leftover body bytes).
fn read_head(stream: &mut impl Read) -> Result<(Vec<u8>, Vec<u8>), HttpError> {
    let mut buf = Vec::with_capacity(512);
    let mut chunk = [0u8; 512];
    loop {
        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            let rest = buf.split_off(pos + 4);
            return Ok((buf, rest));
        }
        if buf.len() > MAX_HEAD {
            return Err(HttpError::Malformed("header block too large".into()));
        }
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Err(HttpError::Truncated);
        }
        buf.extend_from_slice(&chunk[..n]);
    }
}

fn content_length(headers: &[httparse::Header<'_>]) -> Result<usize, HttpError> {
    match headers
        .iter()
        .find(|h| h.name.eq_ignore_ascii_case("content-length"))
    {
        None => Ok(0),
        Some(h) => {
            let len = std::str::from_utf8(h.value)
                .ok()
                .and_then(|v| v.trim().parse::<usize>().ok())
                .ok_or_else(|| HttpError::Malformed("bad Content-Length".into()))?;
            if len > MAX_BODY {
                return Err(HttpError::Malformed("body too large".into()));
            }
            Ok(len)
        }
    }
}

fn read_body(stream: &mut impl Read, mut body: Vec<u8>, len: usize) -> Result<Vec<u8>, HttpError> {
    if body.len() > len {
        body.truncate(len);
    }
    let mut chunk = [0u8; 1024];
    while body.len() < len {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Err(HttpError::Truncated);
        }
        let take = n.min(len - body.len());
        body.extend_from_slice(&chunk[..take]);
    }
    Ok(body)
}

pub fn read_request(stream: &mut impl Read) -> Result<HttpRequest, HttpError> {
    let (head, rest) = read_head(stream)?;
    let mut headers = [httparse::EMPTY_HEADER; 32];
    let mut req = httparse::Request::new(&mut headers);
    match req.parse(&head) {
        Ok(httparse::Status::Complete(_)) => {}
        Ok(httparse::Status::Partial) => return Err(HttpError::Truncated),
        Err(e) => return Err(HttpError::Malformed(e.to_string())),
    }
    let method_text = req.method.unwrap_or_default();
    let method = Method::parse(method_text)
        .ok_or_else(|| HttpError::UnsupportedMethod(method_text.to_owned()))?;
    let path = req.path.unwrap_or("/").to_owned();
    let len = content_length(req.headers)?;
    let header_list = req
        .headers
        .iter()
        .filter(|h| {
            !h.name.eq_ignore_ascii_case("host")
                && !h.name.eq_ignore_ascii_case("content-length")
                && !h.name.eq_ignore_ascii_case("content-type")
        })
        .map(|h| (h.name.to_owned(), String::from_utf8_lossy(h.value).into_owned()))
        .collect();
    let body = read_body(stream, rest, len)?;
    Ok(HttpRequest {
        method,
        path,
        headers: header_list,
        body,
    })
}

pub fn read_response(stream: &mut impl Read) -> Result<HttpResponse, HttpError> {
    let (head, rest) = read_head(stream)?;
    let mut headers = [httparse::EMPTY_HEADER; 32];
    let mut resp = httparse::Response::new(&mut headers);
    match resp.parse(&head) {
        Ok(httparse::Status::Complete(_)) => {}
        Ok(httparse::Status::Partial) => return Err(HttpError::Truncated),
        Err(e) => return Err(HttpError::Malformed(e.to_string())),
    }
    let status = resp
        .code
        .ok_or_else(|| HttpError::Malformed("missing status".into()))?;
    let len = content_length(resp.headers)?;
    let body = read_body(stream, rest, len)?;
    Ok(HttpResponse { status, body })
}

/// Blocking request/response exchange over a fresh TCP connection.
pub fn exchange(
    addr: SocketAddr,
    request: &HttpRequest,
    timeout: Duration,
) -> Result<HttpResponse, HttpError> {
    let mut stream = TcpStream::connect_timeout(&addr, timeout)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    stream.set_nodelay(true)?;
    stream.write_all(&request.to_bytes(&addr.ip().to_string()))?;
    read_response(&mut stream)
}

/// Serves one connection: read a request, answer with `handler`, close.
pub fn serve_connection<F>(mut stream: TcpStream, handler: F) -> Result<(), HttpError>
where
    F: FnOnce(&HttpRequest) -> HttpResponse,
{
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    stream.set_nodelay(true)?;
    let response = match read_request(&mut stream) {
        Ok(req) => handler(&req),
        Err(HttpError::UnsupportedMethod(_)) => HttpResponse::empty(405),
        Err(HttpError::Malformed(_)) => HttpResponse::empty(400),
        Err(e) => return Err(e),
    };
    stream.write_all(&response.to_bytes())?;
    stream.flush()?;
    Ok(())
}

/// Handles connections one at a time until `handler` returns `false` for `keep_running`.
pub fn serve_sequential<F, K>(listener: TcpListener, mut handler: F, keep_running: K)
where
    F: FnMut(&HttpRequest) -> HttpResponse,
    K: Fn() -> bool,
{
    for stream in listener.incoming() {
        if !keep_running() {
            break;
        }
        if let Ok(stream) = stream {
            let _ = serve_connection(stream, &mut handler);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn request_round_trip() {
        let req = HttpRequest::new(Method::Put, "/actuators/0")
            .with_header("Authorization", "Basic abc")
            .with_json(&serde_json::json!({"ActuatorValue": 20}));
        let bytes = req.to_bytes("192.168.1.123");
        let parsed = read_request(&mut Cursor::new(bytes)).unwrap();
        assert_eq!(parsed, req);
    }

    #[test]
    fn response_round_trip() {
        let resp = HttpResponse::json(200, &serde_json::json!({"NodeID": "7.1.1"}));
        let parsed = read_response(&mut Cursor::new(resp.to_bytes())).unwrap();
        assert_eq!(parsed, resp);
    }

    #[test]
    fn id_exchange_byte_counts() {
        let req = HttpRequest::get("/id").to_bytes("192.168.1.123");
        assert_eq!(req, b"GET /id HTTP/1.1\r\nHost: 192.168.1.123\r\n\r\n");
        let resp = HttpResponse::json(200, &serde_json::json!({"NodeID": "7.1.1"})).to_bytes();
        assert!(resp.ends_with(br#"{"NodeID":"7.1.1"}"#));
    }

    #[test]
    fn truncated_body_is_an_error() {
        let raw = b"PUT /x HTTP/1.1\r\nContent-Length: 10\r\n\r\nabc".to_vec();
        assert!(matches!(
            read_request(&mut Cursor::new(raw)),
            Err(HttpError::Truncated)
        ));
    }

    #[test]
    fn unknown_method_reported() {
        let raw = b"DELETE /x HTTP/1.1\r\n\r\n".to_vec();
        assert!(matches!(
            read_request(&mut Cursor::new(raw)),
            Err(HttpError::UnsupportedMethod(m)) if m == "DELETE"
        ));
    }

    #[test]
    fn loopback_exchange() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            serve_connection(stream, |req| {
                HttpResponse::json(200, &serde_json::json!({"path": req.path}))
            })
            .unwrap();
        });
        let resp = exchange(addr, &HttpRequest::get("/id"), Duration::from_secs(2)).unwrap();
        assert_eq!(resp.json_body().unwrap(), serde_json::json!({"path": "/id"}));
        server.join().unwrap();
    }
}
