//! Cx-lite over TCP: one JSON object per line in each direction.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use imsbed_core::endpoint::NetAddress;
use imsbed_core::hss::{CxClient, CxError, CxMessage, HssStore};
use serde::{Deserialize, Serialize};

use crate::files;

/// Error line sent back when the HSS cannot answer a request.
#[derive(Debug, Serialize, Deserialize)]
struct ErrorLine {
    error: String,
}

/// Shared HSS state, optionally written back to a subscriber file after
/// every state-changing request.
#[derive(Clone)]
pub struct HssService {
    store: Arc<Mutex<HssStore>>,
    persist: Option<PathBuf>,
}

impl HssService {
    pub fn new(store: HssStore, persist: Option<PathBuf>) -> Self {
        HssService {
            store: Arc::new(Mutex::new(store)),
            persist,
        }
    }

    pub fn store(&self) -> Arc<Mutex<HssStore>> {
        self.store.clone()
    }

    /// Answers one request line.
    pub fn answer_line(&self, line: &str) -> String {
        let reply = match serde_json::from_str::<CxMessage>(line) {
            Err(e) => serde_json::to_string(&ErrorLine {
                error: format!("malformed request: {e}"),
            }),
            Ok(req) => {
                let mut store = self.store.lock().unwrap_or_else(|p| p.into_inner());
                let before = store.revision();
                match store.handle(&req) {
                    Ok(ans) => {
                        if store.revision() != before {
                            if let Some(path) = &self.persist {
                                if let Err(e) = files::save_hss(path, &store) {
                                    log::warn!("could not persist subscriber file: {e}");
                                }
                            }
                        }
                        serde_json::to_string(&ans)
                    }
                    Err(e) => serde_json::to_string(&ErrorLine {
                        error: e.to_string(),
                    }),
                }
            }
        };
        reply.unwrap_or_else(|_| String::from("{\"error\":\"encoding\"}"))
    }

    fn serve_connection(&self, stream: TcpStream) -> io::Result<()> {
        let mut writer = stream.try_clone()?;
        for line in BufReader::new(stream).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut reply = self.answer_line(&line);
            reply.push('\n');
            writer.write_all(reply.as_bytes())?;
        }
        Ok(())
    }

    /// Accepts connections until the listener fails, one thread each.
    pub fn serve(&self, listener: TcpListener) -> io::Result<()> {
        for stream in listener.incoming() {
            let stream = stream?;
            let svc = self.clone();
            thread::spawn(move || {
                if let Err(e) = svc.serve_connection(stream) {
                    log::debug!("Cx-lite connection closed: {e}");
                }
            });
        }
        Ok(())
    }
}

/// Cx-lite client keeping one connection open and reconnecting on failure.
pub struct TcpCx {
    peer: NetAddress,
    timeout: Duration,
    conn: Option<(BufReader<TcpStream>, TcpStream)>,
}

impl TcpCx {
    pub fn new(peer: NetAddress) -> Self {
        TcpCx {
            peer,
            timeout: Duration::from_secs(2),
            conn: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn connect(&self) -> io::Result<(BufReader<TcpStream>, TcpStream)> {
        let addr = (self.peer.host.as_str(), self.peer.port)
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "no address"))?;
        let stream = TcpStream::connect_timeout(&addr, self.timeout)?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.set_write_timeout(Some(self.timeout))?;
        Ok((BufReader::new(stream.try_clone()?), stream))
    }

    fn exchange(&mut self, line: &str) -> io::Result<String> {
        if self.conn.is_none() {
            self.conn = Some(self.connect()?);
        }
        let Some((reader, writer)) = self.conn.as_mut() else {
            return Err(io::Error::new(io::ErrorKind::NotConnected, "not connected"));
        };
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
        let mut reply = String::new();
        if reader.read_line(&mut reply)? == 0 {
            return Err(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "HSS closed the connection",
            ));
        }
        Ok(reply)
    }
}

impl CxClient for TcpCx {
    fn call(&mut self, req: &CxMessage) -> Result<CxMessage, CxError> {
        let line = serde_json::to_string(req).map_err(|e| CxError::Malformed(e.to_string()))?;
        let reply = match self.exchange(&line) {
            Ok(r) => r,
            Err(_) => {
                // One reconnect covers an HSS restart between calls.
                self.conn = None;
                self.exchange(&line).map_err(|e| {
                    self.conn = None;
                    CxError::Unreachable(format!("{}: {e}", self.peer))
                })?
            }
        };
        if let Ok(err) = serde_json::from_str::<ErrorLine>(&reply) {
            return Err(CxError::Rejected(err.error));
        }
        let ans: CxMessage =
            serde_json::from_str(&reply).map_err(|e| CxError::Malformed(e.to_string()))?;
        if ans.correlation_id != req.correlation_id {
            return Err(CxError::Correlation {
                expected: req.correlation_id,
                got: ans.correlation_id,
            });
        }
        Ok(ans)
    }

    fn peer(&self) -> NetAddress {
        self.peer.clone()
    }
}
