use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::SamplerError;
use crate::model::ModelGraph;
use crate::samplers::{default_state, SamplerAssignment, SamplerKind, SamplerState};

/// An ordered sweep of samplers; together their blocks must cover every
/// dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelComposition {
    pub samplers: Vec<SamplerAssignment>,
    /// Outer iteration at which this structure was created.
    pub created_at: usize,
}

impl KernelComposition {
    pub fn new(samplers: Vec<SamplerAssignment>, created_at: usize) -> Self {
        Self {
            samplers,
            created_at,
        }
    }

    /// Structural fingerprint over (kind, block) pairs in sweep order.
    pub fn id(&self) -> u64 {
        let mut h = Fnv1a::new();
        for s in &self.samplers {
            h.write(s.kind.name().as_bytes());
            for &k in &s.block {
                h.write(&(k as u64).to_le_bytes());
            }
            h.write(b";");
        }
        h.finish()
    }

    pub fn id_hex(&self) -> String {
        format!("{:016x}", self.id())
    }

    pub fn same_structure(&self, other: &Self) -> bool {
        self.samplers.len() == other.samplers.len()
            && self
                .samplers
                .iter()
                .zip(&other.samplers)
                .all(|(a, b)| a.kind == b.kind && a.block == b.block)
    }

    pub fn describe(&self, graph: &ModelGraph) -> Vec<String> {
        self.samplers.iter().map(|s| s.describe(graph)).collect()
    }

    /// Indices of samplers whose block contains dimension `k`.
    pub fn covering(&self, k: usize) -> Vec<usize> {
        self.samplers
            .iter()
            .enumerate()
            .filter(|(_, s)| s.block.contains(&k))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn contains(&self, kind: SamplerKind, block: &[usize]) -> bool {
        self.samplers.iter().any(|s| s.kind == kind && s.block == block)
    }

    /// Reattach graph-derived data after deserialisation.
    pub fn rebind(&mut self, graph: &ModelGraph) -> Result<(), SamplerError> {
        self.samplers.iter_mut().try_for_each(|s| s.rebind(graph))
    }
}

/// Outcome of [`validate_kernel`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KernelValidity {
    pub uncovered: Vec<usize>,
    /// Positions of samplers with an empty block.
    pub empty_blocks: Vec<usize>,
    /// Positions of samplers repeating an earlier (kind, block) pair.
    pub duplicates: Vec<usize>,
}

impl KernelValidity {
    pub fn is_ok(&self) -> bool {
        self.uncovered.is_empty() && self.empty_blocks.is_empty() && self.duplicates.is_empty()
    }
}

/// Check that blocks are non-empty, unique and jointly cover `0..m`.
pub fn validate_kernel(kernel: &KernelComposition, m: usize) -> KernelValidity {
    let mut covered = vec![false; m];
    let mut report = KernelValidity::default();
    for (i, s) in kernel.samplers.iter().enumerate() {
        if s.block.is_empty() {
            report.empty_blocks.push(i);
        }
        for &k in &s.block {
            if k < m {
                covered[k] = true;
            }
        }
        if kernel.samplers[..i]
            .iter()
            .any(|t| t.kind == s.kind && t.block == s.block)
        {
            report.duplicates.push(i);
        }
    }
    report.uncovered = (0..m).filter(|&k| !covered[k]).collect();
    report
}

/// Last known state of every sampler that has been active, keyed by
/// (kind, block).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerArchive {
    #[serde(with = "archive_entries")]
    entries: BTreeMap<(SamplerKind, Vec<usize>), SamplerState>,
}

impl SamplerArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn store(&mut self, a: &SamplerAssignment) {
        self.entries.insert((a.kind, a.block.clone()), a.state.clone());
    }

    pub fn store_kernel(&mut self, k: &KernelComposition) {
        k.samplers.iter().for_each(|s| self.store(s));
    }

    pub fn get(&self, kind: SamplerKind, block: &[usize]) -> Option<&SamplerState> {
        self.entries.get(&(kind, block.to_vec()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// An assignment carrying the archived state, or a default one.
    pub fn activate(
        &self,
        kind: SamplerKind,
        block: Vec<usize>,
        graph: &ModelGraph,
    ) -> Result<SamplerAssignment, SamplerError> {
        let state = match self.get(kind, &block) {
            Some(s) => s.clone(),
            None => default_state(kind, &block, graph)?,
        };
        SamplerAssignment::with_state(kind, block, state, graph)
    }
}

mod archive_entries {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        kind: SamplerKind,
        block: Vec<usize>,
        state: SamplerState,
    }

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(SamplerKind, Vec<usize>), SamplerState>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let v: Vec<Entry> = map
            .iter()
            .map(|((kind, block), state)| Entry {
                kind: *kind,
                block: block.clone(),
                state: state.clone(),
            })
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(SamplerKind, Vec<usize>), SamplerState>, D::Error> {
        let v = Vec::<Entry>::deserialize(d)?;
        Ok(v.into_iter().map(|e| ((e.kind, e.block), e.state)).collect())
    }
}

/// Outer-adaptation counters: κ external adaptations so far and τ outer
/// steps since the last one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockState {
    pub kappa: u64,
    pub tau_since: u64,
}

impl ClockState {
    pub fn c(&self) -> u64 {
        self.kappa + self.tau_since
    }

    /// `B = 0`: (κ, τ + 1); `B = 1`: (κ + 1, 0).
    pub fn advance(&mut self, triggered: bool) {
        if triggered {
            self.kappa += 1;
            self.tau_since = 0;
        } else {
            self.tau_since += 1;
        }
    }
}

/// 64-bit FNV-1a.
struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}
