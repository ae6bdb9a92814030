//! File formats (PFM, PPM/PGM, PLY, raw tensors) and the on-disk sample layout.

pub mod pfm;
pub mod ply;
pub mod pnm;
pub mod sample;
pub mod scene;
pub mod tensor;

pub use pfm::{read_flow_field, read_scalar_map, write_flow_field, write_scalar_map};
pub use ply::{read_point_cloud, write_point_cloud};
pub use pnm::{read_image, read_mask, write_image, write_mask};
pub use sample::DatasetSample;
pub use tensor::{Tensor, TensorBundle};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    match fs::read(path) {
        Ok(bytes) => Ok(bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile(path.to_path_buf())),
        Err(e) => Err(e.into()),
    }
}

/// Whitespace-delimited header tokens of the netpbm/PFM family, `#` comments
/// skipped. Returns the token and the offset just past it.
pub(crate) fn next_token(bytes: &[u8], mut pos: usize) -> Option<(&str, usize)> {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        break;
    }
    let start = pos;
    while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    if start == pos {
        return None;
    }
    std::str::from_utf8(&bytes[start..pos]).ok().map(|t| (t, pos))
}

pub(crate) fn parse_token<T: std::str::FromStr>(bytes: &[u8], pos: usize, what: &str) -> Result<(T, usize)> {
    let (tok, next) = next_token(bytes, pos).ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))?;
    let v = tok.parse().map_err(|_| Error::MalformedHeader(format!("bad {what}: {tok:?}")))?;
    Ok((v, next))
}

/// Consumes the single whitespace byte that ends a binary header.
pub(crate) fn end_of_header(bytes: &[u8], pos: usize) -> Result<usize> {
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => Ok(pos + 1),
        _ => Err(Error::MalformedHeader("header not terminated by whitespace".into())),
    }
}
