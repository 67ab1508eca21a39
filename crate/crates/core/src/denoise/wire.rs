//! Denoiser wire protocol.
//!
//! Each message is one frame (see [`crate::numerics::io`]):
//!
//! ```text
//! request:  {"sigma": f, "prompt": s, "latent": {channels, height, width}} + f32 LE payload
//! response: {"latent": {channels, height, width}} + f32 LE payload
//!         | {"error": s, "retryable": b}            (no payload)
//! ```
//!
//! A connection carries any number of request/response pairs in sequence.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::numerics::io::{read_header, read_payload, write_header, write_payload};
use crate::{Error, Latent, Result, Shape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestHeader {
    pub sigma: f64,
    pub prompt: String,
    pub latent: Shape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResponseHeader {
    Latent {
        latent: Shape,
    },
    Error {
        error: String,
        #[serde(default)]
        retryable: bool,
    },
}

pub struct Request {
    pub sigma: f32,
    pub prompt: String,
    pub latent: Latent,
}

pub fn write_request<W: Write>(w: &mut W, latent: &Latent, sigma: f32, prompt: &str) -> Result<()> {
    let header = RequestHeader {
        sigma: sigma as f64,
        prompt: prompt.to_string(),
        latent: latent.shape(),
    };
    let mut buf = Vec::with_capacity(latent.len() * 4 + 128);
    write_header(&mut buf, &header)?;
    write_payload(&mut buf, latent)?;
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_request<R: Read>(r: &mut R) -> Result<Request> {
    let header: RequestHeader = read_header(r)?;
    let latent = read_payload(r, header.latent)?;
    let sigma = header.sigma as f32;
    if sigma as f64 != header.sigma {
        return Err(Error::Protocol(format!(
            "sigma {} is not an f32 value",
            header.sigma
        )));
    }
    Ok(Request {
        sigma,
        prompt: header.prompt,
        latent,
    })
}

pub fn write_response<W: Write>(w: &mut W, result: &Result<Latent>) -> Result<()> {
    let mut buf = Vec::new();
    match result {
        Ok(latent) => {
            write_header(
                &mut buf,
                &ResponseHeader::Latent {
                    latent: latent.shape(),
                },
            )?;
            write_payload(&mut buf, latent)?;
        }
        Err(e) => write_header(
            &mut buf,
            &ResponseHeader::Error {
                error: e.to_string(),
                retryable: e.is_retryable(),
            },
        )?,
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Reads a response. A backend-reported error becomes [`Error::Backend`].
pub fn read_response<R: Read>(r: &mut R) -> Result<Latent> {
    match read_header(r)? {
        ResponseHeader::Latent { latent } => read_payload(r, latent),
        ResponseHeader::Error { error, retryable } => Err(Error::Backend {
            message: error,
            retryable,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_latent, SeededRng};

    #[test]
    fn request_round_trip() {
        let s = Shape::new(1, 4, 4).unwrap();
        let l: Latent = gaussian_latent(&mut SeededRng::new(5, 0), s, 1.0).unwrap();
        let mut buf = Vec::new();
        write_request(&mut buf, &l, 0.123_456_7, "a cat").unwrap();
        let req = read_request(&mut buf.as_slice()).unwrap();
        assert_eq!(req.sigma, 0.123_456_7);
        assert_eq!(req.prompt, "a cat");
        assert!(req.latent.bit_eq(&l));
    }

    #[test]
    fn error_response_becomes_backend_error() {
        let mut buf = Vec::new();
        write_response(
            &mut buf,
            &Err(Error::Backend {
                message: "boom".into(),
                retryable: true,
            }),
        )
        .unwrap();
        match read_response(&mut buf.as_slice()) {
            Err(Error::Backend { message, retryable }) => {
                assert!(message.contains("boom"));
                assert!(retryable);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_json_shape() {
        let h = serde_json::to_value(RequestHeader {
            sigma: 2.0,
            prompt: "p".into(),
            latent: Shape::new(4, 8, 8).unwrap(),
        })
        .unwrap();
        assert_eq!(
            h,
            serde_json::json!({"sigma": 2.0, "prompt": "p", "latent": {"channels": 4, "height": 8, "width": 8}})
        );
    }
}
