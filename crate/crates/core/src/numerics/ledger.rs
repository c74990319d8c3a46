use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Which part of an encoder layer an operation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Block {
    #[serde(rename = "MHA")]
    Mha,
    #[serde(rename = "FFNN")]
    Ffnn,
    /// Bias additions, residual adds and other work outside the analytical model.
    #[serde(rename = "OTHER")]
    Other,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Block::Mha => "MHA",
            Block::Ffnn => "FFNN",
            Block::Other => "OTHER",
        })
    }
}

/// Ledger slot an operation is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlopKey {
    pub layer: usize,
    pub block: Block,
}

impl FlopKey {
    pub const fn new(layer: usize, block: Block) -> Self {
        Self { layer, block }
    }
}

/// Operation counts per (layer, block). Counts only ever grow.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlopLedger {
    entries: BTreeMap<FlopKey, u64>,
}

impl FlopLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, key: FlopKey, flops: u64) {
        *self.entries.entry(key).or_insert(0) += flops;
    }

    pub fn get(&self, layer: usize, block: Block) -> u64 {
        self.entries
            .get(&FlopKey::new(layer, block))
            .copied()
            .unwrap_or(0)
    }

    pub fn block_total(&self, block: Block) -> u64 {
        self.entries
            .iter()
            .filter(|(k, _)| k.block == block)
            .map(|(_, v)| *v)
            .sum()
    }

    pub fn layer_total(&self, layer: usize) -> u64 {
        self.entries
            .iter()
            .filter(|(k, _)| k.layer == layer)
            .map(|(_, v)| *v)
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    /// MHA + FFNN, i.e. the part the analytical model describes.
    pub fn analytical_scope_total(&self) -> u64 {
        self.block_total(Block::Mha) + self.block_total(Block::Ffnn)
    }

    pub fn merge(&mut self, other: &FlopLedger) {
        for (k, v) in &other.entries {
            self.add(*k, *v);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (FlopKey, u64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Optional ledger handle as accepted by the kernels.
pub(crate) fn charge(ledger: Option<&mut FlopLedger>, key: FlopKey, flops: u64) {
    if let Some(l) = ledger {
        l.add(key, flops);
    }
}
