use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, LearnError};

/// Duplicates minority-class instances until every class matches the
/// majority count.
///
/// Originals keep their position; copies are appended class by class. Each
/// class's copies cycle round-robin over its originals, starting from a
/// seeded shuffle of them. Copies keep features, label and origin id.
pub fn balance_dataset(data: &Dataset, seed: u64) -> Result<Dataset, LearnError> {
    let counts = data.class_counts();
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(LearnError::EmptyClass(data.target.classes[empty].clone()));
    }
    let majority = counts.iter().copied().max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = data.instances.clone();
    for (class, label) in data.target.classes.iter().enumerate() {
        let mut members: Vec<usize> = data
            .instances
            .iter()
            .enumerate()
            .filter(|(_, inst)| &inst.label == label)
            .map(|(i, _)| i)
            .collect();
        members.shuffle(&mut rng);
        let deficit = majority - counts[class];
        out.extend(
            members
                .iter()
                .cycle()
                .take(deficit)
                .map(|&i| data.instances[i].clone()),
        );
    }
    Ok(Dataset {
        target: data.target.clone(),
        instances: out,
    })
}
