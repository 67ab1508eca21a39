use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use super::{AnalyticDenoiser, Denoiser, RemoteDenoiser};
use crate::{Error, KarrasParams, Result, Shape};

/// A configured denoiser: the in-process mixture or a remote server.
///
/// Text form: `analytic:<mixture.json>` or `host:port`.
#[derive(Clone)]
pub enum Backend {
    Analytic(Arc<AnalyticDenoiser>),
    Remote(Arc<RemoteDenoiser>),
}

impl Backend {
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec.is_empty() {
            return Err(Error::param("backend", "no backend configured"));
        }
        if let Some(path) = spec.strip_prefix("analytic:") {
            let den = AnalyticDenoiser::from_json_file(Path::new(path)).map_err(|e| {
                Error::param("backend", format!("cannot load mixture `{path}`: {e}"))
            })?;
            return Ok(Backend::Analytic(Arc::new(den)));
        }
        let remote = RemoteDenoiser::connect(spec)?
            .with_timeout(Duration::from_secs(30))
            .with_retries(2);
        Ok(Backend::Remote(Arc::new(remote)))
    }

    pub fn denoiser(&self) -> Arc<dyn Denoiser<f32>> {
        match self {
            Backend::Analytic(d) => d.clone(),
            Backend::Remote(d) => d.clone(),
        }
    }

    /// Latent shape the backend dictates, if any.
    pub fn shape(&self) -> Option<Shape> {
        match self {
            Backend::Analytic(d) => Some(d.shape()),
            Backend::Remote(_) => None,
        }
    }

    pub fn default_schedule(&self) -> KarrasParams {
        match self {
            Backend::Analytic(_) => KarrasParams::analytic(),
            Backend::Remote(_) => KarrasParams::default(),
        }
    }
}

impl fmt::Debug for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Analytic(d) => write!(f, "analytic({})", d.shape()),
            Backend::Remote(d) => write!(f, "remote({})", d.addr()),
        }
    }
}
