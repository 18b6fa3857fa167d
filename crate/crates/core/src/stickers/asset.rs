//! Binary sticker-map asset.
//!
//! Layout (little-endian): `"HSMAP1"`, u16 version, u32 sticker count, then
//! per sticker sorted by id: u16-prefixed id and label; u32 cluster count,
//! then per cluster in ascending id: u32 cluster id, u32 entry count and per
//! entry u32 sticker index and f64 similarity, in rank order.

use std::collections::BTreeMap;
use std::path::Path;

use super::{MappedSticker, StickerMapping};
use crate::binio::{put_short_str, Reader};
use crate::error::{FormatError, Result};

pub const STICKER_MAP_MAGIC: &[u8; 6] = b"HSMAP1";
pub const STICKER_MAP_VERSION: u16 = 1;

fn malformed(msg: impl Into<String>) -> crate::error::Error {
    FormatError::Malformed(msg.into()).into()
}

impl StickerMapping {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut ids: BTreeMap<&str, &str> = self.labels.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        for list in self.clusters.values() {
            for s in list {
                ids.entry(s.sticker_id.as_str()).or_insert("");
            }
        }
        let index: BTreeMap<&str, u32> = ids.keys().enumerate().map(|(i, k)| (*k, i as u32)).collect();
        let mut out = Vec::new();
        out.extend_from_slice(STICKER_MAP_MAGIC);
        out.extend_from_slice(&STICKER_MAP_VERSION.to_le_bytes());
        out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
        for (id, label) in &ids {
            put_short_str(&mut out, id)?;
            put_short_str(&mut out, label)?;
        }
        out.extend_from_slice(&(self.clusters.len() as u32).to_le_bytes());
        for (c, list) in &self.clusters {
            out.extend_from_slice(&c.to_le_bytes());
            out.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for s in list {
                out.extend_from_slice(&index[s.sticker_id.as_str()].to_le_bytes());
                out.extend_from_slice(&s.similarity.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(STICKER_MAP_MAGIC)?;
        let version = r.u16()?;
        if version != STICKER_MAP_VERSION {
            return Err(FormatError::UnsupportedVersion(version).into());
        }
        let n = r.u32()? as usize;
        let mut ids: Vec<String> = Vec::with_capacity(n.min(1 << 16));
        let mut labels = BTreeMap::new();
        for _ in 0..n {
            let id = r.short_str()?.to_string();
            let label = r.short_str()?.to_string();
            if ids.last().is_some_and(|p| p >= &id) {
                return Err(malformed(format!("sticker {id:?} out of order")));
            }
            labels.insert(id.clone(), label);
            ids.push(id);
        }
        let nc = r.u32()? as usize;
        let mut clusters = BTreeMap::new();
        let mut prev: Option<u32> = None;
        for _ in 0..nc {
            let c = r.u32()?;
            if prev.is_some_and(|p| p >= c) {
                return Err(malformed(format!("cluster {c} out of order")));
            }
            prev = Some(c);
            let k = r.u32()? as usize;
            let mut list = Vec::with_capacity(k.min(1 << 16));
            for _ in 0..k {
                let i = r.u32()? as usize;
                let id = ids.get(i).ok_or_else(|| malformed(format!("sticker index {i} out of range")))?;
                let similarity = r.f64()?;
                if !(-1.0..=1.0).contains(&similarity) {
                    return Err(malformed(format!("similarity {similarity} outside [-1, 1]")));
                }
                list.push(MappedSticker {
                    sticker_id: id.clone(),
                    similarity,
                });
            }
            clusters.insert(c, list);
        }
        r.finish()?;
        Ok(StickerMapping { clusters, labels })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        StickerMapping::from_bytes(&std::fs::read(path)?)
    }
}
