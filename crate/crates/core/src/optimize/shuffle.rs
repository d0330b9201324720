use rand::Rng;

use crate::model::{Priority, INACTIVE};

/// Draws a different priority with the same action, uniformly. Singleton
/// alphabets (and inactive rules) come back unchanged.
pub fn random_priority_shuffle<R: Rng + ?Sized>(current: Priority, alphabet: &[u32], rng: &mut R) -> Priority {
    if current <= INACTIVE {
        return current;
    }
    let others = alphabet.iter().filter(|&&p| p as Priority != current).count();
    if others == 0 {
        return current;
    }
    let mut pick = rng.random_range(0..others);
    for &p in alphabet {
        if p as Priority == current {
            continue;
        }
        if pick == 0 {
            return p as Priority;
        }
        pick -= 1;
    }
    unreachable!()
}
