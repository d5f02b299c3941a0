//! Blocking TCP server: one thread per connection.

use std::io::{self, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::protocol::{encode_query_result, read_frame, write_frame, Frame, ProtocolError, Tag};
use super::{Gateway, QueryEnvelope, Reply};
use crate::ids::UserId;

/// Upper bound for receiving the rest of a frame once it has started.
const FRAME_TIMEOUT: Duration = Duration::from_secs(30);
const POLL_INTERVAL: Duration = Duration::from_millis(500);

pub struct Server {
    listener: TcpListener,
    gateway: Arc<Gateway>,
    shutdown: Arc<AtomicBool>,
}

/// Stops a running [`Server`] from another thread.
#[derive(Debug, Clone)]
pub struct ShutdownHandle {
    flag: Arc<AtomicBool>,
    addr: SocketAddr,
}

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.flag.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
    }
}

impl Server {
    pub fn bind(gateway: Arc<Gateway>, addr: &str) -> io::Result<Self> {
        Ok(Self { listener: TcpListener::bind(addr)?, gateway, shutdown: Arc::new(AtomicBool::new(false)) })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn shutdown_handle(&self) -> io::Result<ShutdownHandle> {
        Ok(ShutdownHandle { flag: self.shutdown.clone(), addr: self.local_addr()? })
    }

    /// Serves until shut down, then waits for open connections to close.
    pub fn run(self) -> io::Result<()> {
        let mut workers: Vec<JoinHandle<()>> = Vec::new();
        let sweeper = {
            let gw = self.gateway.clone();
            let flag = self.shutdown.clone();
            thread::spawn(move || {
                while !flag.load(Ordering::SeqCst) {
                    thread::sleep(POLL_INTERVAL);
                    gw.sessions().expire_sweep();
                }
            })
        };
        for stream in self.listener.incoming() {
            if self.shutdown.load(Ordering::SeqCst) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let gw = self.gateway.clone();
            let flag = self.shutdown.clone();
            workers.retain(|h| !h.is_finished());
            workers.push(thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = serve_connection(&gw, stream, &flag) {
                    log::debug!("connection {peer:?} closed: {e}");
                }
            }));
        }
        for w in workers {
            let _ = w.join();
        }
        let _ = sweeper.join();
        Ok(())
    }
}

fn serve_connection(gw: &Gateway, mut stream: TcpStream, stop: &AtomicBool) -> Result<(), ProtocolError> {
    stream.set_nodelay(true)?;
    let mut user: Option<UserId> = None;
    loop {
        // Wait for the next frame in short slices so shutdown is noticed,
        // then read the whole frame under a separate deadline.
        stream.set_read_timeout(Some(POLL_INTERVAL))?;
        match stream.peek(&mut [0u8; 1]) {
            Ok(0) => return Ok(()),
            Ok(_) => {}
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                if stop.load(Ordering::SeqCst) {
                    return Ok(());
                }
                continue;
            }
            Err(e) => return Err(e.into()),
        }
        stream.set_read_timeout(Some(FRAME_TIMEOUT))?;
        let frame = match read_frame(&mut stream) {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(()),
            Err(e) => {
                let _ = write_frame(&mut stream, &Frame::new(Tag::Error, e.to_string()));
                return Err(e);
            }
        };
        let reply = respond(gw, &mut user, &frame);
        write_frame(&mut stream, &reply)?;
    }
}

fn respond(gw: &Gateway, user: &mut Option<UserId>, frame: &Frame) -> Frame {
    let error = |m: String| Frame::new(Tag::Error, m);
    match frame.tag {
        Tag::Login => {
            let Ok(text) = frame.text() else { return error("malformed login".into()) };
            let parts: Vec<&str> = text.splitn(3, '\t').collect();
            let [tenant, name, password] = parts[..] else { return error("malformed login".into()) };
            match gw.login(tenant, name, password) {
                Ok(uid) => {
                    *user = Some(uid);
                    Frame::new(Tag::Result, uid.0.to_string())
                }
                Err(e) => error(e.to_string()),
            }
        }
        Tag::KeyRequest => {
            let Some(uid) = *user else { return error("not logged in".into()) };
            match gw.issue_session(uid) {
                Ok((sid, key)) => Frame::new(Tag::Result, format!("{}\t{}", sid.0, hex::encode(key.bytes))),
                Err(e) => error(e.to_string()),
            }
        }
        Tag::Query => {
            let Some(uid) = *user else { return error("not logged in".into()) };
            let Ok(text) = frame.text() else { return error("malformed query".into()) };
            match QueryEnvelope::from_wire(text) {
                Ok(env) if env.user_id != uid => error("envelope user does not match the connection".into()),
                Ok(env) => match gw.handle(&env).reply {
                    Reply::Sealed { sealed, timings } => Frame::new(Tag::Result, encode_query_result(&timings, &sealed)),
                    Reply::Rejected(m) => error(m),
                },
                Err(e) => error(e.to_string()),
            }
        }
        Tag::Result | Tag::Error => error("unexpected frame".into()),
    }
}
