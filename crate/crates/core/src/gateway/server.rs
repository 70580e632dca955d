//! HTTP front end for [`Gateway`] on a tokio runtime.
//!
//! Every request goes through [`Gateway::route`] under one mutex, so all
//! mutations are serialized. Node proxying, long polls, sensor polling and
//! liveness probes run outside the lock.

use std::future::Future;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{ConnectInfo, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use tokio::sync::{oneshot, Notify};

use super::{Gateway, NodeLink, Routed, TcpLink};
use crate::http::{HttpRequest, HttpResponse, Method};

/// Wall-clock milliseconds since the Unix epoch.
pub fn wall_clock_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

#[derive(Clone)]
struct Shared {
    gateway: Arc<Mutex<Gateway>>,
    notify: Arc<Notify>,
    link: TcpLink,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Gateway> {
        self.gateway.lock().unwrap_or_else(|p| p.into_inner())
    }
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// Proxy and polling timeout towards nodes.
    pub node_timeout: Duration,
    /// How often the background task checks for due samples and probes.
    pub tick: Duration,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            node_timeout: Duration::from_secs(5),
            tick: Duration::from_millis(500),
        }
    }
}

fn to_axum(response: HttpResponse) -> Response {
    let status = StatusCode::from_u16(response.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let has_body = !response.body.is_empty();
    let mut out = (status, response.body).into_response();
    let headers = out.headers_mut();
    if status == StatusCode::UNAUTHORIZED {
        headers.insert(
            "www-authenticate",
            HeaderValue::from_static("Basic realm=\"itenet\""),
        );
    }
    if has_body {
        headers.insert("content-type", HeaderValue::from_static("application/json"));
    } else {
        headers.remove("content-type");
    }
    out
}

fn source_ipv4(addr: SocketAddr) -> Ipv4Addr {
    match addr.ip() {
        IpAddr::V4(ip) => ip,
        IpAddr::V6(ip) => ip.to_ipv4_mapped().unwrap_or(Ipv4Addr::LOCALHOST),
    }
}

async fn handle(
    State(shared): State<Shared>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    method: axum::http::Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let method = match method.as_str() {
        "GET" => Method::Get,
        "PUT" => Method::Put,
        "POST" => Method::Post,
        _ => return StatusCode::METHOD_NOT_ALLOWED.into_response(),
    };
    let path = uri
        .path_and_query()
        .map_or_else(|| uri.path().to_owned(), |pq| pq.as_str().to_owned());
    let mut request = HttpRequest::new(method, path).with_body(body.to_vec());
    for (name, value) in &headers {
        if let Ok(value) = value.to_str() {
            request = request.with_header(name.as_str(), value);
        }
    }
    let routed = {
        let mut gw = shared.lock();
        let seq_before = gw.pending_seq();
        let routed = gw.route(&request, source_ipv4(peer), wall_clock_ms());
        if gw.pending_seq() != seq_before {
            shared.notify.notify_waiters();
        }
        routed
    };
    let response = match routed {
        Routed::Reply(r) => r,
        Routed::Proxy { target, request } => {
            let mut link = shared.link;
            let result = tokio::task::spawn_blocking(move || link.exchange(target, &request))
                .await
                .unwrap_or_else(|e| Err(super::LinkError(e.to_string())));
            Gateway::finish_proxy(result)
        }
        Routed::AwaitPending { since, wait } => {
            let deadline = tokio::time::Instant::now() + wait;
            loop {
                let notified = shared.notify.notified();
                {
                    let gw = shared.lock();
                    if gw.pending().iter().any(|p| p.rid > since) {
                        break gw.pending_response(since);
                    }
                }
                if tokio::time::timeout_at(deadline, notified).await.is_err() {
                    break shared.lock().pending_response(since);
                }
            }
        }
    };
    to_axum(response)
}

async fn background(shared: Shared, tick: Duration) {
    let mut interval = tokio::time::interval(tick);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        interval.tick().await;
        let now = wall_clock_ms();
        let (polls, probes) = {
            let mut gw = shared.lock();
            (gw.poll_due(now), gw.liveness_due(now))
        };
        if polls.is_empty() && probes.is_empty() {
            continue;
        }
        let mut link = shared.link;
        let outcomes = tokio::task::spawn_blocking(move || {
            let polled: Vec<_> = polls
                .into_iter()
                .map(|t| {
                    let r = link.exchange(t.target, &HttpRequest::get(t.uri.clone()));
                    (t, r)
                })
                .collect();
            let probed: Vec<_> = probes
                .into_iter()
                .map(|(id, target)| {
                    let ok = link
                        .exchange(target, &HttpRequest::get("/id"))
                        .is_ok_and(|r| r.status == 200);
                    (id, ok)
                })
                .collect();
            (polled, probed)
        })
        .await;
        if let Ok((polled, probed)) = outcomes {
            let now = wall_clock_ms();
            let mut gw = shared.lock();
            for (target, result) in polled {
                gw.record_poll(&target, result, now);
            }
            for (id, ok) in probed {
                gw.record_liveness(id, ok, now);
            }
        }
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    gateway: Arc<Mutex<Gateway>>,
    listener: tokio::net::TcpListener,
    options: ServerOptions,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let shared = Shared {
        gateway,
        notify: Arc::new(Notify::new()),
        link: TcpLink {
            timeout: options.node_timeout,
        },
    };
    shared.lock().resume(wall_clock_ms());
    let poller = tokio::spawn(background(shared.clone(), options.tick));
    let app = Router::new().fallback(handle).with_state(shared);
    let result = axum::serve(
        listener,
        app.into_make_service_with_connect_info::<SocketAddr>(),
    )
    .with_graceful_shutdown(shutdown)
    .await;
    poller.abort();
    result
}

/// A gateway served from a background thread with its own runtime.
pub struct ServerHandle {
    addr: SocketAddr,
    gateway: Arc<Mutex<Gateway>>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn gateway(&self) -> &Arc<Mutex<Gateway>> {
        &self.gateway
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown_inner()
    }

    fn shutdown_inner(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown_inner();
    }
}

/// Binds `addr` and serves `gateway` on a background thread.
pub fn spawn(gateway: Gateway, addr: SocketAddr, options: ServerOptions) -> std::io::Result<ServerHandle> {
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let local = std_listener.local_addr()?;
    let gateway = Arc::new(Mutex::new(gateway));
    let shared = gateway.clone();
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("gateway".into())
        .spawn(move || {
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener)?;
                serve(shared, listener, options, async {
                    let _ = rx.await;
                })
                .await
            })
        })?;
    Ok(ServerHandle {
        addr: local,
        gateway,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
