//! Runs a node against a real gateway over TCP, in wall-clock time.
//!
//! Access-point delays and link latencies from the scenario are slept
//! rather than scheduled; with the zero-delay scenario only real loopback
//! costs remain.

use std::collections::VecDeque;
use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4, TcpListener};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::clock::{Clock, RealClock};
use super::dist::DelayDist;
use super::fabric::{ConnectOutcome, Fabric};
use crate::http::{self, HttpRequest, Method};
use crate::node_fsm::{ApRole, NodeAction, NodeEvent, NodeMessage, NodeRuntime};

#[derive(Debug, Clone)]
pub struct RealtimeOptions {
    /// Address the node's own server binds to.
    pub bind_ip: Ipv4Addr,
    /// Where to keep the NVM image across restarts, if anywhere.
    pub nvm_path: Option<PathBuf>,
}

impl Default for RealtimeOptions {
    fn default() -> Self {
        Self {
            bind_ip: Ipv4Addr::LOCALHOST,
            nvm_path: None,
        }
    }
}

fn lock(m: &Mutex<NodeRuntime>) -> MutexGuard<'_, NodeRuntime> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// Sleeps up to `d`, waking early when `stop` is raised. False if stopped.
fn nap(d: Duration, stop: &AtomicBool) -> bool {
    let end = Instant::now() + d;
    loop {
        if stop.load(Ordering::Relaxed) {
            return false;
        }
        let now = Instant::now();
        if now >= end {
            return true;
        }
        std::thread::sleep((end - now).min(Duration::from_millis(10)));
    }
}

struct NodeServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: JoinHandle<()>,
}

impl NodeServer {
    fn start(runtime: Arc<Mutex<NodeRuntime>>, ip: Ipv4Addr, port: u16) -> std::io::Result<Self> {
        // A restart may rebind the port the previous server just released.
        let deadline = Instant::now() + Duration::from_secs(2);
        let listener = loop {
            match TcpListener::bind(SocketAddrV4::new(ip, port)) {
                Ok(l) => break l,
                Err(e) if Instant::now() >= deadline => return Err(e),
                Err(_) => std::thread::sleep(Duration::from_millis(50)),
            }
        };
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::Builder::new()
            .name(format!("node-server-{}", addr.port()))
            .spawn(move || {
                while !flag.load(Ordering::Relaxed) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            let _ = stream.set_nonblocking(false);
                            let _ = http::serve_connection(stream, |req| lock(&runtime).serve_request(req));
                        }
                        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            std::thread::sleep(Duration::from_millis(2));
                        }
                        Err(_) => std::thread::sleep(Duration::from_millis(10)),
                    }
                }
            })?;
        Ok(Self { addr, stop, thread })
    }

    fn shutdown(self) {
        self.stop.store(true, Ordering::Relaxed);
        let _ = self.thread.join();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RealtimeError {
    #[error("node server: {0}")]
    Server(String),
    #[error("writing NVM: {0}")]
    Nvm(String),
    #[error("node driver panicked")]
    Panicked,
}

/// A node running on its own threads.
pub struct RealtimeNode {
    runtime: Arc<Mutex<NodeRuntime>>,
    stop: Arc<AtomicBool>,
    server_addr: Arc<Mutex<Option<SocketAddr>>>,
    listen_rx: mpsc::Receiver<Duration>,
    listened: Option<Duration>,
    driver: Option<JoinHandle<Result<(), RealtimeError>>>,
}

impl RealtimeNode {
    /// Powers the node on. `fabric` supplies access-point and link delays.
    pub fn start(runtime: NodeRuntime, fabric: Fabric, options: RealtimeOptions) -> std::io::Result<Self> {
        let runtime = Arc::new(Mutex::new(runtime));
        let stop = Arc::new(AtomicBool::new(false));
        let server_addr = Arc::new(Mutex::new(None));
        let (tx, listen_rx) = mpsc::channel();
        let mut driver = Driver {
            runtime: runtime.clone(),
            fabric,
            options,
            stop: stop.clone(),
            server_addr: server_addr.clone(),
            server: None,
            clock: RealClock::start(),
            listen_tx: tx,
        };
        let name = format!("node-{}", lock(&runtime).identifier());
        let driver = std::thread::Builder::new().name(name).spawn(move || driver.run())?;
        Ok(Self {
            runtime,
            stop,
            server_addr,
            listen_rx,
            listened: None,
            driver: Some(driver),
        })
    }

    pub fn runtime(&self) -> MutexGuard<'_, NodeRuntime> {
        lock(&self.runtime)
    }

    /// Where the node's server currently listens.
    pub fn server_addr(&self) -> Option<SocketAddr> {
        *self.server_addr.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Blocks until the node reaches `Listen`; returns the time it took.
    pub fn wait_listen(&mut self, timeout: Duration) -> Option<Duration> {
        if self.listened.is_none() {
            self.listened = self.listen_rx.recv_timeout(timeout).ok();
        }
        self.listened
    }

    /// True once the driver thread has exited, for example after an error.
    pub fn is_finished(&self) -> bool {
        self.driver.as_ref().is_none_or(|d| d.is_finished())
    }

    /// Powers the node off and reports how the driver ended.
    pub fn stop(mut self) -> Result<(), RealtimeError> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> Result<(), RealtimeError> {
        self.stop.store(true, Ordering::Relaxed);
        match self.driver.take() {
            Some(d) => d.join().unwrap_or(Err(RealtimeError::Panicked)),
            None => Ok(()),
        }
    }
}

impl Drop for RealtimeNode {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}

struct Driver {
    runtime: Arc<Mutex<NodeRuntime>>,
    fabric: Fabric,
    options: RealtimeOptions,
    stop: Arc<AtomicBool>,
    server_addr: Arc<Mutex<Option<SocketAddr>>>,
    server: Option<NodeServer>,
    clock: RealClock,
    listen_tx: mpsc::Sender<Duration>,
}

impl Driver {
    fn run(&mut self) -> Result<(), RealtimeError> {
        let result = self.drive();
        self.stop_server();
        result
    }

    fn step(&self, event: NodeEvent, queue: &mut VecDeque<NodeAction>) {
        let now = self.clock.now();
        match lock(&self.runtime).step(event, now) {
            Ok(actions) => queue.extend(actions),
            Err(e) => tracing::warn!("node event rejected: {e}"),
        }
    }

    fn drive(&mut self) -> Result<(), RealtimeError> {
        let mut queue = VecDeque::new();
        self.step(NodeEvent::PoweredOn, &mut queue);
        while let Some(action) = queue.pop_front() {
            if self.stop.load(Ordering::Relaxed) {
                return Ok(());
            }
            let event = match action {
                NodeAction::Initialize { duration } => {
                    nap(duration, &self.stop);
                    Some(NodeEvent::InitComplete)
                }
                NodeAction::ConnectAp { role, timeout, .. } => {
                    match self.fabric.connect(role == ApRole::Configuration) {
                        ConnectOutcome::Connected(elapsed) if elapsed <= timeout => {
                            nap(elapsed, &self.stop);
                            Some(NodeEvent::ApConnected)
                        }
                        _ => {
                            nap(timeout, &self.stop);
                            Some(NodeEvent::Timeout)
                        }
                    }
                }
                NodeAction::StartServer { startup } => {
                    self.start_server()?;
                    nap(startup, &self.stop);
                    Some(NodeEvent::ServerStarted)
                }
                NodeAction::StopServer => {
                    self.stop_server();
                    None
                }
                NodeAction::SendRequest {
                    to,
                    message,
                    delay,
                    timeout,
                } => {
                    nap(delay, &self.stop);
                    self.step(NodeEvent::RequestSent, &mut queue);
                    Some(self.exchange(to, &message, timeout))
                }
                NodeAction::PersistNvm => {
                    if let Some(path) = &self.options.nvm_path {
                        let nvm = lock(&self.runtime).nvm().clone();
                        nvm.save(path).map_err(|e| RealtimeError::Nvm(e.to_string()))?;
                    }
                    None
                }
                NodeAction::Ready => {
                    let _ = self.listen_tx.send(self.clock.now());
                    None
                }
            };
            if let Some(event) = event {
                self.step(event, &mut queue);
            }
        }
        while !self.stop.load(Ordering::Relaxed) {
            std::thread::sleep(Duration::from_millis(10));
        }
        Ok(())
    }

    fn start_server(&mut self) -> Result<(), RealtimeError> {
        self.stop_server();
        let port = lock(&self.runtime).listen_port();
        let server = NodeServer::start(self.runtime.clone(), self.options.bind_ip, port)
            .map_err(|e| RealtimeError::Server(e.to_string()))?;
        lock(&self.runtime).set_listen_port(server.addr.port());
        *self.server_addr.lock().unwrap_or_else(|p| p.into_inner()) = Some(server.addr);
        self.server = Some(server);
        Ok(())
    }

    fn stop_server(&mut self) {
        if let Some(server) = self.server.take() {
            server.shutdown();
        }
        *self.server_addr.lock().unwrap_or_else(|p| p.into_inner()) = None;
    }

    /// One request to the gateway. Any failure surfaces as `Timeout` once
    /// the full timeout has elapsed, as it would on the device.
    fn exchange(&mut self, to: SocketAddrV4, message: &NodeMessage, timeout: Duration) -> NodeEvent {
        let started = Instant::now();
        let draw = self.fabric.exchange(&DelayDist::ZERO);
        let timed_out = |stop: &AtomicBool| {
            nap(timeout.saturating_sub(started.elapsed()), stop);
            NodeEvent::Timeout
        };
        if draw.lost {
            return timed_out(&self.stop);
        }
        nap(draw.request_leg, &self.stop);
        let request = HttpRequest::new(Method::Post, message.path())
            .with_header("Content-Type", "application/json")
            .with_body(message.to_json());
        let remaining = timeout.saturating_sub(started.elapsed());
        if remaining.is_zero() {
            return NodeEvent::Timeout;
        }
        match http::exchange(to.into(), &request, remaining) {
            Ok(response) => {
                nap(draw.response_leg, &self.stop);
                if started.elapsed() > timeout {
                    NodeEvent::Timeout
                } else {
                    NodeEvent::ResponseReceived(response.body)
                }
            }
            Err(e) => {
                tracing::debug!("request to {to} failed: {e}");
                timed_out(&self.stop)
            }
        }
    }
}
