//! Pseudonymous device identifiers and the registry that issues them.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

/// Persistent per-install identifier: 128 random bits in UUID version-4 form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub Uuid);

impl DeviceId {
    /// Draws a fresh version-4 identifier from `rng`.
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        DeviceId(uuid::Builder::from_random_bytes(bytes).into_uuid())
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.hyphenated().fmt(f)
    }
}

impl FromStr for DeviceId {
    type Err = uuid::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Uuid::parse_str(s).map(DeviceId)
    }
}

/// Authority (health department, campus clinic, ...) that issues tokens and
/// scopes a community of devices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuthorityId(pub String);

impl fmt::Display for AuthorityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceEntry {
    pub device: DeviceId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub community: Option<AuthorityId>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("device {0} is already registered")]
    Duplicate(DeviceId),
}

/// Registered devices with dense indices in registration order.
#[derive(Clone, Debug, Default)]
pub struct DeviceRegistry {
    entries: Vec<DeviceEntry>,
    index: HashMap<DeviceId, u32>,
}

impl DeviceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Issues a fresh identifier, redrawing on the (astronomically unlikely)
    /// event of a collision.
    pub fn register_device<R: RngCore + ?Sized>(
        &mut self,
        rng: &mut R,
        community: Option<AuthorityId>,
    ) -> DeviceId {
        loop {
            let id = DeviceId::random(rng);
            if self.insert(DeviceEntry { device: id, community: community.clone() }).is_ok() {
                return id;
            }
        }
    }

    /// Inserts a known entry (used by replay).
    pub fn insert(&mut self, entry: DeviceEntry) -> Result<u32, RegistryError> {
        if self.index.contains_key(&entry.device) {
            return Err(RegistryError::Duplicate(entry.device));
        }
        let idx = self.entries.len() as u32;
        self.index.insert(entry.device, idx);
        self.entries.push(entry);
        Ok(idx)
    }

    pub fn contains(&self, id: &DeviceId) -> bool {
        self.index.contains_key(id)
    }

    pub fn index_of(&self, id: &DeviceId) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn device(&self, idx: u32) -> DeviceId {
        self.entries[idx as usize].device
    }

    pub fn community(&self, id: &DeviceId) -> Option<&AuthorityId> {
        self.index_of(id)
            .and_then(|i| self.entries[i as usize].community.as_ref())
    }

    pub fn entries(&self) -> &[DeviceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
