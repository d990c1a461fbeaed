//! Versioned, self-describing model files.
//!
//! Every file is a JSON document carrying a format tag, a format version, the
//! kind of model, the feature schema manifest it was trained on, and the
//! model body. Numbers are written as shortest round-trip decimals.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Schema, SchemaManifest};

pub const MODEL_FORMAT: &str = "activitymon-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    ActivityGmm,
    ShockMlp,
    IdentityMlp,
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    format_version: u32,
    kind: ModelKind,
    schema: SchemaManifest,
    body: T,
}

pub fn to_json<T: Serialize>(kind: ModelKind, schema: Schema, body: &T) -> Result<String> {
    let env = Envelope {
        format: MODEL_FORMAT.to_string(),
        format_version: MODEL_FORMAT_VERSION,
        kind,
        schema: schema.manifest(),
        body,
    };
    serde_json::to_string_pretty(&env).map_err(|e| Error::Model(e.to_string()))
}

pub fn from_json<T: DeserializeOwned>(text: &str, kind: ModelKind) -> Result<(Schema, T)> {
    let env: Envelope<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| Error::Model(format!("unreadable model document: {e}")))?;
    if env.format != MODEL_FORMAT {
        return Err(Error::Model(format!("not a model document (format {:?})", env.format)));
    }
    if env.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Model(format!(
            "unsupported model format version {}",
            env.format_version
        )));
    }
    if env.kind != kind {
        return Err(Error::Schema {
            expected: format!("{kind:?} model"),
            got: format!("{:?} model", env.kind),
        });
    }
    let schema = env.schema.check()?;
    let body = serde_json::from_value(env.body).map_err(|e| Error::Model(format!("bad model body: {e}")))?;
    Ok((schema, body))
}

pub fn save<T: Serialize>(path: &Path, kind: ModelKind, schema: Schema, body: &T) -> Result<()> {
    let text = to_json(kind, schema, body)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: ModelKind) -> Result<(Schema, T)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text, kind)
}
