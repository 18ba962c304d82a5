//! Dataset manifest: one JSON document indexing every generated image.
//!
//! Schema:
//! `{seed, config, images: [{id, file, width, height, split,
//!   types: [{shape, color, scale, rotation}],
//!   instances: [{type_index, center, bbox}]}]}`

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimcoError};

use super::{GeneratorConfig, ImageRecord, Split};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub config: GeneratorConfig,
    pub images: Vec<ImageRecord>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_json_bytes()?;
        fs::write(path, bytes).map_err(|e| SimcoError::io(path, e))
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| SimcoError::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Indices of images in `split`, in manifest order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.images
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Splits must be disjoint (they are, by construction: one split field
    /// per image) and cover all images; checked here for loaded manifests.
    pub fn validate(&self) -> Result<()> {
        for record in &self.images {
            record.validate()?;
        }
        Ok(())
    }
}
