//! 8-bit image encodings: binary PNM files (P5 grey, P6 RGB) and the inline
//! `hex:CxHxW:<bytes>` form used in manifests. Pixels map to `[0, 1]` by
//! dividing by 255; writing rounds and clamps.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn planar_from_interleaved(c: usize, h: usize, w: usize, px: &[u8]) -> Tensor {
    let mut data = vec![0.0; c * h * w];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                data[(ch * h + y) * w + x] = f64::from(px[(y * w + x) * c + ch]) / 255.0;
            }
        }
    }
    Tensor::new(vec![c, h, w], data).expect("dimensions are consistent")
}

/// Encode a `C×H×W` tensor as `hex:CxHxW:<planar bytes>`.
pub fn encode_hex(image: &Tensor) -> String {
    let s = image.shape();
    let bytes: Vec<u8> = image.data().iter().map(|&v| quantize(v)).collect();
    format!("hex:{}x{}x{}:{}", s[0], s[1], s[2], hex::encode(bytes))
}

pub fn decode_hex(field: &str) -> Result<Tensor> {
    let rest = field
        .strip_prefix("hex:")
        .ok_or_else(|| Error::Data("inline image must start with `hex:`".into()))?;
    let (dims, payload) = rest
        .split_once(':')
        .ok_or_else(|| Error::Data("inline image lacks a `CxHxW:` prefix".into()))?;
    let dims: Vec<usize> = dims
        .split('x')
        .map(|d| d.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Data(format!("bad image dimensions `{dims}`: {e}")))?;
    if dims.len() != 3 {
        return Err(Error::Data(format!(
            "image dimensions `{dims:?}` are not C×H×W"
        )));
    }
    let bytes =
        hex::decode(payload).map_err(|e| Error::Data(format!("bad hex pixel block: {e}")))?;
    let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
    Tensor::new(dims, data).map_err(|e| Error::Data(e.to_string()))
}

/// Read a binary PGM (P5) or PPM (P6) file with maxval 255.
pub fn read_pnm(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    let bad = |m: &str| Error::Data(format!("{}: {m}", path.display()));
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1; // single whitespace byte before the raster
    let channels = match tokens[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        _ => return Err(bad("only binary P5/P6 images are supported")),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, max) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if max != 255 {
        return Err(bad("maxval must be 255"));
    }
    let need = w * h * channels;
    let px = bytes
        .get(pos..pos + need)
        .ok_or_else(|| bad("truncated raster"))?;
    if w == 0 || h == 0 {
        return Err(bad("empty image"));
    }
    Ok(planar_from_interleaved(channels, h, w, px))
}

/// Write a 1- or 3-channel image as binary PGM/PPM.
pub fn write_pnm(path: &Path, image: &Tensor) -> Result<()> {
    let &[c, h, w] = image.shape() else {
        return Err(Error::Shape(format!(
            "expected C×H×W, got {:?}",
            image.shape()
        )));
    };
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => {
            return Err(Error::Shape(format!(
                "{c} channels cannot be written as PNM"
            )))
        }
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.push(quantize(image.data()[(ch * h + y) * w + x]));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
