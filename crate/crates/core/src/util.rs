use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p);
    }
    hex::encode(hasher.finalize())
}

/// Writes to a sibling temp file then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Splits `count` across groups with the given capacities so that group shares
/// differ by at most one, except for groups capped by their capacity. The
/// remainder goes to groups picked in seeded order.
///
/// Panics if the capacities sum to less than `count`.
pub fn balanced_quotas(count: usize, capacities: &[usize], rng: &mut SeededRng) -> Vec<usize> {
    assert!(
        capacities.iter().sum::<usize>() >= count,
        "capacities cannot hold {count}"
    );
    let mut quotas = vec![0usize; capacities.len()];
    let mut active: Vec<usize> = (0..capacities.len()).collect();
    let mut remaining = count;
    loop {
        if active.is_empty() {
            break;
        }
        let base = remaining / active.len();
        let extra = remaining % active.len();
        let saturated: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&g| capacities[g] < base || (extra > 0 && capacities[g] <= base))
            .collect();
        if saturated.is_empty() {
            for &g in &active {
                quotas[g] = base;
            }
            let mut order = active.clone();
            order.shuffle(rng);
            for &g in order.iter().take(extra) {
                quotas[g] += 1;
            }
            break;
        }
        for g in saturated {
            quotas[g] = capacities[g];
            remaining -= capacities[g];
            active.retain(|&a| a != g);
        }
    }
    quotas
}
