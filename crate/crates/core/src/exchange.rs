//! Binary request/response files for an external feature extractor.
//!
//! Requests (`FXQ1`) hold query positions; responses (`FXR1`) hold one feature
//! row and one occupancy logit per query, in request order. Everything is
//! little-endian `u32`/`f32`.
//!
//! ```text
//! FXQ1 | count: u32 | count x [x, y, z]: f32
//! FXR1 | count: u32 | n_features: u32 | count x n_features: f32 | count x logit: f32
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::cloud::Normalization;
use crate::error::{Error, Result};
use crate::marching_cubes::Grid;
use crate::spatial::Point3;

pub const QUERY_MAGIC: [u8; 4] = *b"FXQ1";
pub const RESPONSE_MAGIC: [u8; 4] = *b"FXR1";

fn protocol(msg: impl Into<String>) -> Error {
    Error::Protocol(msg.into())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => protocol(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    read_exact(r, &mut buf, what)?;
    Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

fn expect_end<R: Read>(r: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(protocol("trailing bytes after payload")),
    }
}

fn check_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, "magic")?;
    if &b != magic {
        return Err(protocol(format!("bad magic {:?}, expected {:?}", b, magic)));
    }
    Ok(())
}

fn to_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| protocol(format!("{what} {n} does not fit in u32")))
}

/// Query positions after rounding to `f32`, as they appear on the wire.
pub fn quantize(points: &[Point3]) -> Vec<[f32; 3]> {
    points.iter().map(|p| [p[0] as f32, p[1] as f32, p[2] as f32]).collect()
}

pub fn write_queries<W: Write>(w: &mut W, points: &[Point3]) -> Result<()> {
    w.write_all(&QUERY_MAGIC)?;
    w.write_all(&to_u32(points.len(), "query count")?.to_le_bytes())?;
    for p in quantize(points) {
        for c in p {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_queries<R: Read>(r: &mut R) -> Result<Vec<[f32; 3]>> {
    check_magic(r, &QUERY_MAGIC)?;
    let n = read_u32(r, "query count")? as usize;
    let flat = read_f32s(r, n * 3, "query positions")?;
    expect_end(r)?;
    Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureResponse {
    pub n_features: usize,
    /// Row-major `count x n_features`.
    pub features: Vec<f32>,
    pub logits: Vec<f32>,
}

impl FeatureResponse {
    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }
}

pub fn write_response<W: Write>(w: &mut W, resp: &FeatureResponse) -> Result<()> {
    if resp.features.len() != resp.logits.len() * resp.n_features {
        return Err(protocol("feature block size does not match count x n_features"));
    }
    w.write_all(&RESPONSE_MAGIC)?;
    w.write_all(&to_u32(resp.len(), "response count")?.to_le_bytes())?;
    w.write_all(&to_u32(resp.n_features, "feature width")?.to_le_bytes())?;
    for v in resp.features.iter().chain(&resp.logits) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a response; `expected_count` is the number of queries it answers.
pub fn read_response<R: Read>(r: &mut R, expected_count: Option<usize>) -> Result<FeatureResponse> {
    check_magic(r, &RESPONSE_MAGIC)?;
    let n = read_u32(r, "response count")? as usize;
    if let Some(want) = expected_count {
        if n != want {
            return Err(protocol(format!("response has {n} rows for {want} queries")));
        }
    }
    let n_features = read_u32(r, "feature width")? as usize;
    if n_features == 0 {
        return Err(protocol("feature width is zero"));
    }
    let features = read_f32s(r, n * n_features, "features")?;
    let logits = read_f32s(r, n, "logits")?;
    expect_end(r)?;
    if features.iter().chain(&logits).any(|v| !v.is_finite()) {
        return Err(protocol("response contains non-finite values"));
    }
    Ok(FeatureResponse { n_features, features, logits })
}

/// A contiguous run of queries in an exported request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub offset: usize,
    pub count: usize,
}

/// Sidecar describing how an exported request is laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryManifest {
    pub total: usize,
    pub sections: Vec<Section>,
    pub grid: Grid,
    pub normalization: Normalization,
    pub seed: u64,
    pub k_nn: usize,
}

impl QueryManifest {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}
