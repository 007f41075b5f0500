//! MIVOL1: a one-line JSON header followed by a raw little-endian `f32`
//! payload in x-fastest order.
//!
//! ```text
//! {"magic":"MIVOL1","shape":[nx,ny,nz],"spacing_mm":[dx,dy,dz],"dtype":"f32le"}\n
//! <nx*ny*nz*4 bytes>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{voxel_count, Spacing, Volume};

pub const MAGIC: &str = "MIVOL1";
pub const DTYPE: &str = "f32le";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    shape: [usize; 3],
    spacing_mm: [f64; 3],
    dtype: String,
}

pub fn encode(v: &Volume) -> Vec<u8> {
    let header = Header {
        magic: MAGIC.into(),
        shape: v.shape,
        spacing_mm: v.spacing.as_array(),
        dtype: DTYPE.into(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.reserve(v.data.len() * 4);
    for x in &v.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Volume> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing header terminator".into()))?;
    let text = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let h: Header = serde_json::from_str(text).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if h.magic != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", h.magic)));
    }
    if h.dtype != DTYPE {
        return Err(Error::Format(format!("unsupported dtype {:?}", h.dtype)));
    }
    let spacing = Spacing {
        dx: h.spacing_mm[0],
        dy: h.spacing_mm[1],
        dz: h.spacing_mm[2],
    };
    spacing.validate().map_err(|e| Error::Format(e.to_string()))?;
    let payload = &bytes[nl + 1..];
    let n = voxel_count(h.shape);
    if n == 0 || payload.len() != n * 4 {
        return Err(Error::Format(format!(
            "payload is {} bytes, expected {} for shape {:?}",
            payload.len(),
            n * 4,
            h.shape
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Volume {
        shape: h.shape,
        spacing,
        data,
    })
}

pub fn write_mivol(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(v))?;
    Ok(())
}

pub fn read_mivol(path: impl AsRef<Path>) -> Result<Volume> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn zeros_2x2x2_layout() {
        let v = Volume::zeros([2, 2, 2], Spacing::default());
        let bytes = encode(&v);
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(bytes.len() - nl - 1, 32);
        assert_eq!(decode(&bytes).unwrap(), v);
    }

    #[test]
    fn header_spacing_is_exact() {
        let v = Volume::zeros([1, 1, 1], Spacing::default());
        let bytes = encode(&v);
        let text = std::str::from_utf8(&bytes[..bytes.len() - 5]).unwrap();
        assert_eq!(
            text,
            r#"{"magic":"MIVOL1","shape":[1,1,1],"spacing_mm":[1.17,1.17,3.0],"dtype":"f32le"}"#
        );
    }

    #[test]
    fn random_round_trips_are_byte_equal() {
        for seed in 0..100u64 {
            let mut r = CounterRng::new(seed);
            // arbitrary finite bit patterns, not just uniform draws
            let data: Vec<f32> = (0..16 * 16 * 16)
                .map(|_| loop {
                    let f = f32::from_bits(r.next_u64() as u32);
                    if f.is_finite() {
                        break f;
                    }
                })
                .collect();
            let v = Volume::new([16, 16, 16], Spacing::new(0.7, 1.3, 2.9).unwrap(), data).unwrap();
            let bytes = encode(&v);
            let back = decode(&bytes).unwrap();
            assert_eq!(encode(&back), bytes);
            assert!(back.data.iter().zip(&v.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let v = Volume::zeros([2, 2, 2], Spacing::default());
        let mut bytes = encode(&v);
        bytes.pop();
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
        assert!(decode(b"not json\n").is_err());
        assert!(decode(b"{\"magic\":\"MIVOL1\"").is_err());
        let bad = br#"{"magic":"MIVOL1","shape":[1,1,1],"spacing_mm":[1,1,1],"dtype":"f64le"}"#;
        let mut b = bad.to_vec();
        b.push(b'\n');
        b.extend_from_slice(&[0u8; 8]);
        assert!(decode(&b).unwrap_err().to_string().contains("dtype"));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mivol");
        let v = Volume::filled([3, 2, 1], Spacing::default(), 2.5);
        write_mivol(&v, &p).unwrap();
        assert_eq!(read_mivol(&p).unwrap(), v);
    }
}
