//! Batch import file: `{"records": [...], "images": {"sha256:…": "<base64>"}}`.
//! A bare JSON array of records is accepted as well.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{ExperimentRecord, PayloadRef};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportBundle {
    pub records: Vec<ExperimentRecord>,
    #[serde(default, with = "base64_map")]
    pub images: BTreeMap<PayloadRef, Vec<u8>>,
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("malformed import file: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("image {0} does not match its content hash")]
    HashMismatch(PayloadRef),
}

impl ImportBundle {
    pub fn new(records: Vec<ExperimentRecord>, images: BTreeMap<PayloadRef, Vec<u8>>) -> Self {
        Self { records, images }
    }

    pub fn from_json(text: &str) -> Result<Self, BundleError> {
        let bundle = if text.trim_start().starts_with('[') {
            ImportBundle {
                records: serde_json::from_str(text)?,
                images: BTreeMap::new(),
            }
        } else {
            serde_json::from_str::<ImportBundle>(text)?
        };
        for (r, bytes) in &bundle.images {
            if PayloadRef::for_bytes(bytes) != *r {
                return Err(BundleError::HashMismatch(r.clone()));
            }
        }
        Ok(bundle)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bundle serializes")
    }

    pub fn image_bytes(&self, r: &PayloadRef) -> Option<&[u8]> {
        self.images.get(r).map(Vec::as_slice)
    }
}

mod base64_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<PayloadRef, Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        let encoded: BTreeMap<&PayloadRef, String> =
            map.iter().map(|(k, v)| (k, STANDARD.encode(v))).collect();
        encoded.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<PayloadRef, Vec<u8>>, D::Error> {
        let encoded = BTreeMap::<PayloadRef, String>::deserialize(d)?;
        encoded
            .into_iter()
            .map(|(k, v)| {
                STANDARD
                    .decode(v)
                    .map(|bytes| (k, bytes))
                    .map_err(serde::de::Error::custom)
            })
            .collect()
    }
}
