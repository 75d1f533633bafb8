use std::path::{Path, PathBuf};

use bcpflood_core::bcp::BcpConfig;
use bcpflood_core::engine::ChannelSelection;
use bcpflood_core::otsu::OtsuConfig;
use bcpflood_core::postproc::PostprocParams;
use bcpflood_core::{Error, Result};
use serde::{Deserialize, Serialize};

fn default_site() -> String {
    "site".into()
}

fn yes() -> bool {
    true
}

/// Job description for `run`, `sweep` and `otsu`. Relative paths resolve
/// against the directory holding the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub stack_manifest: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "default_site")]
    pub site: String,
    #[serde(default)]
    pub bcp: BcpConfig,
    #[serde(default)]
    pub postproc: PostprocParams,
    #[serde(default)]
    pub channels: ChannelSelection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Aggregate 2×2 before analysis when the stack is at least twice as
    /// fine as the working resolution.
    #[serde(default = "yes")]
    pub aggregate: bool,
    #[serde(default)]
    pub otsu: OtsuConfig,
    /// Tile size for per-chip F1 scores; none disables them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chip_size: Option<usize>,
}

impl RunManifest {
    pub fn new(stack_manifest: PathBuf, reference: Option<PathBuf>, output_dir: PathBuf) -> Self {
        Self {
            stack_manifest,
            reference,
            output_dir,
            site: default_site(),
            bcp: BcpConfig::default(),
            postproc: PostprocParams::default(),
            channels: ChannelSelection::default(),
            workers: None,
            aggregate: true,
            otsu: OtsuConfig::default(),
            chip_size: None,
        }
    }

    /// Reads the manifest and rebases its relative paths.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        let mut m: Self = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        m.stack_manifest = base.join(&m.stack_manifest);
        m.reference = m.reference.map(|r| base.join(r));
        m.output_dir = base.join(&m.output_dir);
        Ok(m)
    }
}
