//! Versioned JSON containers for trained artifacts.
//!
//! Floats are written in shortest round-trip form and read back with
//! `float_roundtrip`, so save followed by load is bit-exact.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    payload: T,
}

pub fn to_string<T: Serialize>(format: &str, payload: &T) -> Result<String> {
    let env = Envelope {
        format: format.to_string(),
        version: FORMAT_VERSION,
        payload,
    };
    Ok(serde_json::to_string_pretty(&env)?)
}

pub fn from_str<T: DeserializeOwned>(format: &str, text: &str) -> Result<T> {
    let env: Envelope<T> = serde_json::from_str(text)?;
    if env.format != format {
        return Err(Error::Checkpoint(format!("expected format `{format}`, found `{}`", env.format)));
    }
    if env.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {} (this build reads {FORMAT_VERSION})",
            env.version
        )));
    }
    Ok(env.payload)
}

pub fn save<T: Serialize>(path: &Path, format: &str, payload: &T) -> Result<()> {
    let text = to_string(format, payload)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load<T: DeserializeOwned>(path: &Path, format: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(format, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let v: Vec<f64> = vec![0.1, 1.0 / 3.0, f64::MIN_POSITIVE, 1e-310, -2.5e300, std::f64::consts::PI];
        let text = to_string("test/v", &v).unwrap();
        let back: Vec<f64> = from_str("test/v", &text).unwrap();
        for (a, b) in v.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn wrong_format_rejected() {
        let text = to_string("a", &1.0f64).unwrap();
        assert!(matches!(from_str::<f64>("b", &text), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        save(&p, "f", &vec![1.5f64, -0.25]).unwrap();
        let back: Vec<f64> = load(&p, "f").unwrap();
        assert_eq!(back, vec![1.5, -0.25]);
        assert!(matches!(load::<f64>(&dir.path().join("missing"), "f"), Err(Error::Io { .. })));
    }
}
