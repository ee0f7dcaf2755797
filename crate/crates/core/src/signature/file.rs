//! `.sig` files: a versioned TOML document.
//!
//! ```toml
//! format = "pktsig-signature"
//! version = 1
//! id = "tplink-plug-on"
//! device = "tplink-plug"
//! label = "ON"
//! comm_class = "device-cloud"
//! layer2_offset = 80
//!
//! [duration]
//! min_ms = 75
//! avg_ms = 85
//! max_ms = 204
//!
//! [[sets]]
//! [[sets.positions]]
//! direction = "C"
//! min = 556
//! max = 556
//! core_min = 556
//! core_max = 556
//!
//! [provenance]   # optional
//! capture_sha256 = "..."
//! window_t_s = 15.0
//! eps = 10.0
//! min_pts = 45
//! tool_version = "0.1.0"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signature::model::{CommClass, DurationStats, Provenance, SetSpec, Signature};

pub const SIGNATURE_FORMAT: &str = "pktsig-signature";
pub const SIGNATURE_VERSION: u32 = 1;
pub const SIGNATURE_EXTENSION: &str = "sig";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignatureFile {
    format: String,
    version: u32,
    id: String,
    device: String,
    label: String,
    comm_class: CommClass,
    layer2_offset: u32,
    duration: DurationStats,
    sets: Vec<SetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    version: Option<i64>,
}

pub fn serialize(sig: &Signature) -> String {
    let file = SignatureFile {
        format: SIGNATURE_FORMAT.into(),
        version: SIGNATURE_VERSION,
        id: sig.id.clone(),
        device: sig.device.clone(),
        label: sig.label.clone(),
        comm_class: sig.comm_class,
        layer2_offset: sig.layer2_offset,
        duration: sig.duration,
        sets: sig.sets.clone(),
        provenance: sig.provenance.clone(),
    };
    toml::to_string(&file).expect("signature serializes")
}

pub fn deserialize(text: &str) -> Result<Signature> {
    let header: Header = toml::from_str(text).map_err(|e| Error::Signature(e.to_string()))?;
    match header.format.as_deref() {
        Some(SIGNATURE_FORMAT) => {}
        Some(other) => return Err(Error::Signature(format!("unknown format {other:?}"))),
        None => return Err(Error::Signature("missing `format` key".into())),
    }
    match header.version {
        Some(v) if v == SIGNATURE_VERSION as i64 => {}
        Some(v) => return Err(Error::Signature(format!("unsupported version {v}"))),
        None => return Err(Error::Signature("missing `version` key".into())),
    }
    let file: SignatureFile = toml::from_str(text).map_err(|e| Error::Signature(e.to_string()))?;
    let sig = Signature {
        id: file.id,
        device: file.device,
        label: file.label,
        comm_class: file.comm_class,
        sets: file.sets,
        duration: file.duration,
        layer2_offset: file.layer2_offset,
        provenance: file.provenance,
    };
    sig.validate()?;
    Ok(sig)
}

pub fn load(path: &Path) -> Result<Signature> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    deserialize(&text).map_err(|e| match e {
        Error::Signature(msg) => Error::Signature(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save(sig: &Signature, path: &Path) -> Result<()> {
    std::fs::write(path, serialize(sig)).map_err(|e| Error::io(path, e))
}
