//! Wire format between LPs: one tag byte, a little-endian u32 body length,
//! then the bincode body.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameTag {
    Model = 0,
    Eos = 1,
    /// Migration, coordination and entity transfer traffic.
    Control = 2,
    RegionPublish = 3,
}

impl FrameTag {
    fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            0 => FrameTag::Model,
            1 => FrameTag::Eos,
            2 => FrameTag::Control,
            3 => FrameTag::RegionPublish,
            other => return Err(SimError::Protocol(format!("unknown frame tag {other}"))),
        })
    }
}

pub const HEADER_LEN: usize = 5;

pub fn encode_frame<T: Serialize>(tag: FrameTag, body: &T) -> Result<Vec<u8>> {
    let body = bincode::serialize(body)?;
    let len = u32::try_from(body.len()).map_err(|_| SimError::Protocol(format!("frame body of {} bytes", body.len())))?;
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.push(tag as u8);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Splits a frame into its tag and body, checking the declared length.
pub fn split_frame(bytes: &[u8]) -> Result<(FrameTag, &[u8])> {
    if bytes.len() < HEADER_LEN {
        return Err(SimError::Protocol(format!("truncated frame header ({} bytes)", bytes.len())));
    }
    let tag = FrameTag::from_byte(bytes[0])?;
    let len = u32::from_le_bytes([bytes[1], bytes[2], bytes[3], bytes[4]]) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != len {
        return Err(SimError::Protocol(format!(
            "frame declares {len} body bytes but carries {}",
            body.len()
        )));
    }
    Ok((tag, body))
}

pub fn decode_body<T: DeserializeOwned>(body: &[u8]) -> Result<T> {
    Ok(bincode::deserialize(body)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let f = encode_frame(FrameTag::Eos, &(3usize, 17u64)).unwrap();
        assert_eq!(f[0], 1);
        assert_eq!(u32::from_le_bytes([f[1], f[2], f[3], f[4]]) as usize, f.len() - HEADER_LEN);
        let (tag, body) = split_frame(&f).unwrap();
        assert_eq!(tag, FrameTag::Eos);
        assert_eq!(decode_body::<(usize, u64)>(body).unwrap(), (3, 17));
    }

    #[test]
    fn malformed_frames_are_protocol_errors() {
        assert!(matches!(split_frame(&[0, 1]), Err(SimError::Protocol(_))));
        assert!(matches!(split_frame(&[9, 0, 0, 0, 0]), Err(SimError::Protocol(_))));
        assert!(matches!(split_frame(&[0, 4, 0, 0, 0, 1]), Err(SimError::Protocol(_))));
    }
}
