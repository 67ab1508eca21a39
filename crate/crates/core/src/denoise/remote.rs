use std::io::{BufReader, BufWriter, ErrorKind};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::Duration;

use super::{wire, Denoiser};
use crate::{Error, Latent, Result};

struct Connection {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

/// Client for an out-of-process denoiser speaking the [`wire`] protocol.
///
/// Each call checks out a pooled connection (opening one if none is idle),
/// so concurrent runs use separate connections and requests on one
/// connection are strictly sequential.
pub struct RemoteDenoiser {
    addr: SocketAddr,
    timeout: Duration,
    retries: u32,
    pool: Mutex<Vec<Connection>>,
}

fn transport(e: std::io::Error) -> Error {
    match e.kind() {
        ErrorKind::TimedOut | ErrorKind::WouldBlock => Error::Timeout,
        _ => Error::Backend {
            message: format!("transport failure: {e}"),
            retryable: true,
        },
    }
}

impl RemoteDenoiser {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let addr = addr
            .to_socket_addrs()
            .map_err(|e| Error::param("backend", format!("cannot resolve address: {e}")))?
            .next()
            .ok_or_else(|| Error::param("backend", "address resolved to nothing"))?;
        Ok(RemoteDenoiser {
            addr,
            timeout: Duration::from_secs(30),
            retries: 0,
            pool: Mutex::new(Vec::new()),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Extra attempts, each on a fresh connection, after a retryable failure.
    pub fn with_retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Opens and immediately pools one connection.
    pub fn ping(&self) -> Result<()> {
        let conn = self.open()?;
        self.pool
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(conn);
        Ok(())
    }

    fn open(&self) -> Result<Connection> {
        let stream =
            TcpStream::connect_timeout(&self.addr, self.timeout).map_err(|e| match e.kind() {
                ErrorKind::TimedOut => Error::Timeout,
                _ => Error::Backend {
                    message: format!("cannot connect to {}: {e}", self.addr),
                    retryable: true,
                },
            })?;
        stream.set_nodelay(true).map_err(transport)?;
        stream
            .set_read_timeout(Some(self.timeout))
            .map_err(transport)?;
        stream
            .set_write_timeout(Some(self.timeout))
            .map_err(transport)?;
        let reader = BufReader::new(stream.try_clone().map_err(transport)?);
        Ok(Connection {
            reader,
            writer: BufWriter::new(stream),
        })
    }

    fn release(&self, conn: Connection) {
        self.pool
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(conn);
    }

    fn attempt(&self, x: &Latent, sigma: f32, prompt: &str) -> Result<Latent> {
        let pooled = self.pool.lock().unwrap_or_else(|p| p.into_inner()).pop();
        let mut conn = match pooled {
            Some(c) => c,
            None => self.open()?,
        };
        let lift = |e: Error| match e {
            Error::Io(io) => transport(io),
            e => e,
        };
        wire::write_request(&mut conn.writer, x, sigma, prompt).map_err(lift)?;
        match wire::read_response(&mut conn.reader) {
            Ok(y) if y.shape() != x.shape() => Err(Error::Protocol(format!(
                "backend returned shape {} for a {} request",
                y.shape(),
                x.shape()
            ))),
            Ok(y) => {
                self.release(conn);
                Ok(y)
            }
            // Answered in-protocol: the stream is still aligned and reusable.
            Err(e @ Error::Backend { .. }) => {
                self.release(conn);
                Err(e)
            }
            Err(e) => Err(lift(e)),
        }
    }
}

impl Denoiser<f32> for RemoteDenoiser {
    fn denoise(&self, x: &Latent, sigma: f32, prompt: &str) -> Result<Latent> {
        let mut tries = 0;
        loop {
            match self.attempt(x, sigma, prompt) {
                Err(e) if e.is_retryable() && tries < self.retries => {
                    tries += 1;
                    tracing::debug!(tries, error = %e, "retrying denoiser request");
                }
                other => return other,
            }
        }
    }
}
