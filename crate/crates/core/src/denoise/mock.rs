//! In-repo denoiser server speaking the [`wire`](super::wire) protocol, for
//! tests and local development.

use std::io::{BufReader, BufWriter, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::{wire, AnalyticDenoiser, Denoiser};
use crate::numerics::io::write_header;
use crate::numerics::SeededRng;
use crate::{Error, Latent, Result, Shape};

#[derive(Clone, Debug)]
pub enum MockBehavior {
    Identity,
    Gmm(AnalyticDenoiser),
    /// Fails a fraction of requests with a retryable error after an optional
    /// delay; the rest are served by `inner`. Failures are drawn from a
    /// seeded stream.
    Fault {
        error_rate: f64,
        latency: Duration,
        seed: u64,
        inner: Box<MockBehavior>,
    },
    /// Replies with a latent one column wider than requested.
    WrongShape,
    /// Replies with a NaN-filled payload.
    NonFinite,
}

enum Reply {
    Latent(Latent),
    Raw(Vec<u8>),
    Error(Error),
}

struct Served {
    behavior: MockBehavior,
    faults: Mutex<SeededRng>,
}

impl Served {
    fn reply(&self, behavior: &MockBehavior, req: &wire::Request) -> Reply {
        match behavior {
            MockBehavior::Identity => Reply::Latent(req.latent.clone()),
            MockBehavior::Gmm(den) => match den.denoise(&req.latent, req.sigma, &req.prompt) {
                Ok(l) => Reply::Latent(l),
                Err(e) => Reply::Error(e),
            },
            MockBehavior::Fault {
                error_rate,
                latency,
                inner,
                ..
            } => {
                if !latency.is_zero() {
                    thread::sleep(*latency);
                }
                let u = (self
                    .faults
                    .lock()
                    .unwrap_or_else(|p| p.into_inner())
                    .next_u64()
                    >> 11) as f64
                    / (1u64 << 53) as f64;
                if u < *error_rate {
                    Reply::Error(Error::Backend {
                        message: "injected fault".into(),
                        retryable: true,
                    })
                } else {
                    self.reply(inner, req)
                }
            }
            MockBehavior::WrongShape => {
                let s = req.latent.shape();
                let wider =
                    Shape::new(s.channels(), s.height(), s.width() + 1).expect("nonzero dims");
                Reply::Latent(Latent::zeros(wider))
            }
            MockBehavior::NonFinite => {
                let mut buf = Vec::new();
                let shape = req.latent.shape();
                write_header(&mut buf, &wire::ResponseHeader::Latent { latent: shape })
                    .expect("in-memory");
                for _ in 0..shape.len() {
                    buf.extend_from_slice(&f32::NAN.to_le_bytes());
                }
                Reply::Raw(buf)
            }
        }
    }
}

fn serve_connection(stream: TcpStream, served: Arc<Served>, stop: Arc<AtomicBool>) {
    let _ = stream.set_nodelay(true);
    let Ok(read_half) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(read_half);
    let mut writer = BufWriter::new(stream);
    while !stop.load(Ordering::Relaxed) {
        let req = match wire::read_request(&mut reader) {
            Ok(r) => r,
            Err(Error::Io(e)) if e.kind() == ErrorKind::UnexpectedEof => return,
            Err(Error::Io(_)) => return,
            Err(e) => {
                let _ = wire::write_response(&mut writer, &Err(e));
                return;
            }
        };
        let written = match served.reply(&served.behavior, &req) {
            Reply::Latent(l) => wire::write_response(&mut writer, &Ok(l)),
            Reply::Error(e) => wire::write_response(&mut writer, &Err(e)),
            Reply::Raw(bytes) => writer
                .write_all(&bytes)
                .and_then(|_| writer.flush())
                .map_err(Error::from),
        };
        if written.is_err() {
            return;
        }
    }
}

/// Running mock server. Dropping the handle stops accepting connections.
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and serves on
    /// background threads, one per connection.
    pub fn start(behavior: MockBehavior, addr: impl ToSocketAddrs) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let seed = match &behavior {
            MockBehavior::Fault { seed, .. } => *seed,
            _ => 0,
        };
        let served = Arc::new(Served {
            behavior,
            faults: Mutex::new(SeededRng::new(seed, 0)),
        });
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = stop.clone();
        let acceptor = thread::spawn(move || {
            for conn in listener.incoming() {
                if stop_flag.load(Ordering::Relaxed) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let served = served.clone();
                        let stop = stop_flag.clone();
                        thread::spawn(move || serve_connection(stream, served, stop));
                    }
                    Err(e) => tracing::warn!(error = %e, "accept failed"),
                }
            }
        });
        tracing::info!(%addr, "mock denoiser listening");
        Ok(MockServer {
            addr,
            stop,
            acceptor: Some(acceptor),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop exits.
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        // Unblock the accept loop.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if self.acceptor.is_some() {
            self.stop_now();
        }
    }
}
