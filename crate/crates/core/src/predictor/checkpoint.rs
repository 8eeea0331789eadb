//! Binary checkpoint format:
//!
//! ```text
//! magic      4 bytes  b"VADP"
//! version    1 byte   CHECKPOINT_VERSION
//! hdr_len    u32 LE
//! header     hdr_len bytes of JSON (PredictorConfig)
//! n_params   u64 LE
//! params     n_params × f64 LE
//! ```

use std::fs;
use std::path::Path;

use super::{FramePredictor, PredictorConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VADP";
pub const CHECKPOINT_VERSION: u8 = 1;

pub fn encode_checkpoint(model: &FramePredictor) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(model.config())?;
    let params = model.parameters();
    let mut out = Vec::with_capacity(4 + 1 + 4 + header.len() + 8 + 8 * params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<FramePredictor> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 9 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("not a predictor checkpoint"));
    }
    if bytes[4] != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            bytes[4]
        )));
    }
    let hdr_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let hdr_end = 9 + hdr_len;
    if bytes.len() < hdr_end + 8 {
        return Err(bad("truncated header"));
    }
    let config: PredictorConfig = serde_json::from_slice(&bytes[9..hdr_end])?;
    let n = u64::from_le_bytes(bytes[hdr_end..hdr_end + 8].try_into().unwrap()) as usize;
    let body = &bytes[hdr_end + 8..];
    if body.len() != n * 8 {
        return Err(bad("parameter block length mismatch"));
    }
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FramePredictor::from_parameters(config, params)
}

pub fn save_checkpoint(model: &FramePredictor, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<FramePredictor> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::init_predictor;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn checkpoint_round_trip(seed in any::<u64>(), base in 1usize..4, depth in 1usize..3, rec in any::<bool>()) {
            let cfg = PredictorConfig {
                frame_size: (16, 8),
                input_frames: 3,
                base_channels: base,
                depth,
                recurrent_bottleneck: rec,
            };
            let m = init_predictor(cfg, seed).unwrap();
            let back = decode_checkpoint(&encode_checkpoint(&m).unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn rejects_bad_version_and_truncation() {
        let m = init_predictor(PredictorConfig::default(), 0).unwrap();
        let mut bytes = encode_checkpoint(&m).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        bytes[4] = 9;
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(Error::Checkpoint(_))
        ));
    }
}
