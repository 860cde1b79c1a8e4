use rand::seq::IndexedRandom;
use rand::Rng;

use super::kernel::{KernelComposition, SamplerArchive};
use super::default_scalar_kind;
use crate::blocking::{cluster_tree, select_block};
use crate::diagnostics::CorrelationMatrix;
use crate::error::Result;
use crate::model::ModelGraph;
use crate::samplers::{check_compatible, SamplerAssignment, SamplerKind};

/// Candidate set and blocking parameters for outer proposals.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSettings {
    pub candidates: Vec<SamplerKind>,
    pub cut_heights: Vec<f64>,
    pub keep_probability: f64,
}

#[derive(Debug, Clone)]
pub struct Proposal {
    pub kernel: KernelComposition,
    /// False when no candidate could be applied and `kernel` is the input.
    pub changed: bool,
    pub description: String,
}

/// Scalar kinds valid on dimension `k` within the candidate list.
fn eligible_scalar(graph: &ModelGraph, k: usize, candidates: &[SamplerKind]) -> Vec<SamplerKind> {
    candidates
        .iter()
        .copied()
        .filter(|c| !c.is_block() && check_compatible(*c, &[k], graph).is_ok())
        .collect()
}

/// Replace the sampler(s) covering `k_min` with a randomly drawn
/// candidate, keeping the rest of the kernel.
///
/// The candidate kind is drawn uniformly from the eligible scalar kinds
/// (minus the one currently on `k_min`) together with the allowed block
/// kinds. A block kind draws a cut height and takes the correlation
/// cluster holding `k_min`; when that cluster is a singleton or already
/// in the kernel, a scalar kind is drawn instead.
#[allow(clippy::too_many_arguments)]
pub fn propose_kernel<R: Rng + ?Sized>(
    current: &KernelComposition,
    graph: &ModelGraph,
    k_min: usize,
    corr: &CorrelationMatrix,
    settings: &ProposalSettings,
    archive: &SamplerArchive,
    iteration: usize,
    rng: &mut R,
) -> Result<Proposal> {
    let covering = current.covering(k_min);
    let current_scalar: Option<SamplerKind> = covering
        .iter()
        .map(|&i| &current.samplers[i])
        .find(|s| s.block.len() == 1)
        .map(|s| s.kind);
    let scalar: Vec<SamplerKind> = eligible_scalar(graph, k_min, &settings.candidates)
        .into_iter()
        .filter(|k| Some(*k) != current_scalar)
        .collect();
    let block_kinds: Vec<SamplerKind> = if graph.dim() >= 2 {
        settings.candidates.iter().copied().filter(|k| k.is_block()).collect()
    } else {
        Vec::new()
    };
    let mut options = scalar.clone();
    options.extend(&block_kinds);

    let unchanged = |why: &str| Proposal {
        kernel: current.clone(),
        changed: false,
        description: why.to_string(),
    };
    let Some(&kind) = options.choose(rng) else {
        return Ok(unchanged("no eligible candidate"));
    };

    let mut choice: Option<(SamplerKind, Vec<usize>, f64)> = None;
    if kind.is_block() {
        let h = *settings.cut_heights.choose(rng).expect("cut heights validated non-empty");
        let tree = cluster_tree(corr)?;
        let block = select_block(corr, &tree, k_min, h);
        if block.len() >= 2 && !current.contains(kind, &block) {
            choice = Some((kind, block, h));
        }
    } else {
        choice = Some((kind, vec![k_min], f64::NAN));
    }
    let (kind, block, h) = match choice {
        Some(c) => c,
        None => match scalar.choose(rng) {
            Some(&k) => (k, vec![k_min], f64::NAN),
            None => return Ok(unchanged("block draw degenerate and no scalar alternative")),
        },
    };

    let new_sampler = archive.activate(kind, block.clone(), graph)?;
    let mut remove = vec![false; current.samplers.len()];
    for &i in &covering {
        remove[i] = true;
    }
    if block.len() >= 2 && rng.random::<f64>() >= settings.keep_probability {
        // drop the other members' samplers where that leaves nothing uncovered
        for (i, s) in current.samplers.iter().enumerate() {
            if !remove[i] && s.block.iter().any(|d| block.contains(d)) && s.block.iter().all(|d| block.contains(d)) {
                remove[i] = true;
            }
        }
    }

    let insert_at = covering.first().copied().unwrap_or(current.samplers.len());
    let mut samplers: Vec<SamplerAssignment> = Vec::with_capacity(current.samplers.len() + 1);
    for (i, s) in current.samplers.iter().enumerate() {
        if i == insert_at {
            samplers.push(new_sampler.clone());
        }
        if !remove[i] {
            samplers.push(s.clone());
        }
    }
    if insert_at >= current.samplers.len() {
        samplers.push(new_sampler);
    }

    // repair coverage left open by removed block samplers
    let mut covered = vec![false; graph.dim()];
    for s in &samplers {
        for &d in &s.block {
            covered[d] = true;
        }
    }
    let pos = samplers
        .iter()
        .position(|s| s.kind == kind && s.block == block)
        .expect("new sampler inserted");
    let mut repairs = Vec::new();
    for d in (0..graph.dim()).filter(|&d| !covered[d]) {
        let k = default_scalar_kind(graph, d);
        repairs.push(archive.activate(k, vec![d], graph)?);
    }
    for (j, r) in repairs.into_iter().enumerate() {
        samplers.insert(pos + 1 + j, r);
    }

    let names: Vec<&str> = block.iter().map(|&d| graph.dims()[d].name.as_str()).collect();
    let description = if block.len() >= 2 {
        format!("{kind}({}) at h={h}", names.join(","))
    } else {
        format!("{kind}({})", names.join(","))
    };
    Ok(Proposal {
        kernel: KernelComposition::new(samplers, iteration),
        changed: true,
        description,
    })
}
