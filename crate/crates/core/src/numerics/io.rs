//! Latent serialization.
//!
//! A frame is a 4-byte big-endian header length, a JSON header, then a raw
//! little-endian `f32` payload whose size is implied by the header. A latent
//! file is a single frame whose header is `{channels, height, width}`.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::Shape;
use crate::{Error, Latent, Result};

pub const MAX_HEADER_BYTES: usize = 1 << 20;
pub const MAX_ELEMENTS: usize = 1 << 28;

pub fn write_header<W: Write, H: Serialize>(w: &mut W, header: &H) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    if json.len() > MAX_HEADER_BYTES {
        return Err(Error::Protocol(format!(
            "header of {} bytes is too large",
            json.len()
        )));
    }
    w.write_all(&(json.len() as u32).to_be_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

pub fn read_header<R: Read, H: DeserializeOwned>(r: &mut R) -> Result<H> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_HEADER_BYTES {
        return Err(Error::Protocol(format!(
            "header length {len} exceeds limit"
        )));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    serde_json::from_slice(&buf).map_err(|e| Error::Protocol(format!("bad header: {e}")))
}

pub fn write_payload<W: Write>(w: &mut W, latent: &Latent) -> Result<()> {
    let mut bytes = Vec::with_capacity(latent.len() * 4);
    for v in latent.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads the payload for `shape`. Non-finite values are a protocol violation.
pub fn read_payload<R: Read>(r: &mut R, shape: Shape) -> Result<Latent> {
    if shape.len() > MAX_ELEMENTS {
        return Err(Error::Protocol(format!(
            "payload of {} elements exceeds limit",
            shape.len()
        )));
    }
    let mut bytes = vec![0u8; shape.len() * 4];
    r.read_exact(&mut bytes)?;
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Latent::from_vec(shape, data).map_err(|e| Error::Protocol(e.to_string()))
}

pub fn write_latent<W: Write>(w: &mut W, latent: &Latent) -> Result<()> {
    write_header(w, &latent.shape())?;
    write_payload(w, latent)
}

pub fn read_latent<R: Read>(r: &mut R) -> Result<Latent> {
    let shape: Shape = read_header(r)?;
    read_payload(r, shape)
}

pub fn encode_latent(latent: &Latent) -> Vec<u8> {
    let mut out = Vec::with_capacity(latent.len() * 4 + 64);
    // Writing into a Vec cannot fail.
    write_latent(&mut out, latent).expect("in-memory write");
    out
}

pub fn decode_latent(mut bytes: &[u8]) -> Result<Latent> {
    let latent = read_latent(&mut bytes)?;
    if !bytes.is_empty() {
        return Err(Error::Protocol(format!(
            "{} trailing bytes after latent",
            bytes.len()
        )));
    }
    Ok(latent)
}

pub fn save_latent(path: &std::path::Path, latent: &Latent) -> Result<()> {
    std::fs::write(path, encode_latent(latent))?;
    Ok(())
}

pub fn load_latent(path: &std::path::Path) -> Result<Latent> {
    decode_latent(&std::fs::read(path)?)
}
