//! Circular (Morgan) fingerprints and Tanimoto similarity.

use serde::{Deserialize, Serialize};

use super::molecule::Molecule;
use crate::error::{Error, Result};

pub const DEFAULT_NBITS: usize = 2048;
pub const DEFAULT_RADIUS: usize = 2;

/// A fixed-length bitset folded from circular atom environments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint {
    words: Vec<u64>,
    nbits: usize,
    radius: usize,
}

impl Fingerprint {
    pub fn empty(nbits: usize, radius: usize) -> Self {
        Fingerprint {
            words: vec![0; nbits.div_ceil(64)],
            nbits,
            radius,
        }
    }

    /// Builds a fingerprint with the given bits set (positions taken modulo `nbits`).
    pub fn from_bits(nbits: usize, bits: impl IntoIterator<Item = usize>) -> Self {
        let mut fp = Fingerprint::empty(nbits, 0);
        for b in bits {
            fp.set(b);
        }
        fp
    }

    pub fn set(&mut self, pos: usize) {
        let pos = pos % self.nbits;
        self.words[pos / 64] |= 1 << (pos % 64);
    }

    pub fn get(&self, pos: usize) -> bool {
        (self.words[pos / 64] >> (pos % 64)) & 1 == 1
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nbits).filter(|&i| self.get(i))
    }
}

/// 64-bit mix used for environment identifiers. Stable across platforms and
/// releases, unlike `std`'s hasher.
fn mix(mut h: u64, v: u64) -> u64 {
    h ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn atom_invariant(m: &Molecule, i: usize) -> u64 {
    let a = m.atoms()[i];
    let fields = [
        a.kind.code() as u64,
        m.degree(i) as u64,
        a.hydrogens as u64,
        (a.charge as i64 + 8) as u64,
        m.atom_in_ring(i) as u64,
        a.aromatic as u64,
    ];
    fields.iter().fold(0x51_7cc1_b727_220a, |h, &f| mix(h, f))
}

/// Morgan fingerprint: atom environment identifiers for every radius up to
/// `radius`, folded into `nbits` bits.
///
/// `nbits` must be a power of two no smaller than 64.
pub fn morgan_fingerprint(m: &Molecule, radius: usize, nbits: usize) -> Fingerprint {
    assert!(
        nbits >= 64 && nbits.is_power_of_two(),
        "nbits must be a power of two >= 64"
    );
    let mut fp = Fingerprint::empty(nbits, radius);
    let mut ids: Vec<u64> = (0..m.atom_count()).map(|i| atom_invariant(m, i)).collect();
    for &id in &ids {
        fp.set((id % nbits as u64) as usize);
    }
    for iter in 0..radius {
        let next: Vec<u64> = (0..m.atom_count())
            .map(|i| {
                let mut env: Vec<(u8, u64)> = m
                    .neighbors(i)
                    .iter()
                    .map(|&(j, b)| (m.bonds()[b].order.code(), ids[j]))
                    .collect();
                env.sort_unstable();
                env.iter().fold(mix(iter as u64 + 1, ids[i]), |h, &(o, id)| {
                    mix(mix(h, o as u64), id)
                })
            })
            .collect();
        for &id in &next {
            fp.set((id % nbits as u64) as usize);
        }
        ids = next;
    }
    fp
}

/// Tanimoto coefficient `|a & b| / |a | b|`; 1.0 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64> {
    if a.nbits != b.nbits {
        return Err(Error::LengthMismatch(a.nbits, b.nbits));
    }
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{canonical_smiles, parse_smiles};
    use proptest::prelude::*;

    fn fp(s: &str, r: usize) -> Fingerprint {
        morgan_fingerprint(&parse_smiles(s).unwrap(), r, DEFAULT_NBITS)
    }

    #[test]
    fn isomorphism_invariance() {
        let c = canonical_smiles(&parse_smiles("OCC").unwrap());
        assert_eq!(fp("CCO", 2), fp(&c, 2));
        assert_eq!(fp("c1ccccc1O", 2), fp("Oc1ccccc1", 2));
    }

    #[test]
    fn self_similarity_and_radius_zero() {
        assert_eq!(tanimoto(&fp("CCO", 2), &fp("CCO", 2)).unwrap(), 1.0);
        assert_ne!(fp("CC", 0), fp("CO", 0));
        assert!(fp("C", 2).count_ones() >= 1);
    }

    #[test]
    fn tanimoto_examples() {
        let a = Fingerprint::from_bits(64, [1, 2, 3]);
        let b = Fingerprint::from_bits(64, [2, 3, 4]);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.5);
        let c = Fingerprint::from_bits(64, [10, 11]);
        assert_eq!(tanimoto(&a, &c).unwrap(), 0.0);
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        let e = Fingerprint::empty(64, 0);
        assert_eq!(tanimoto(&e, &e).unwrap(), 1.0);
        assert!(matches!(
            tanimoto(&a, &Fingerprint::empty(128, 0)),
            Err(Error::LengthMismatch(64, 128))
        ));
    }

    #[test]
    fn deterministic_bits() {
        // frozen so changes to the hashing are noticed
        let bits: Vec<usize> = fp("CCO", 1).ones().collect();
        assert_eq!(bits, fp("OCC", 1).ones().collect::<Vec<_>>());
        assert_eq!(bits.len(), fp("CCO", 1).count_ones() as usize);
    }

    proptest! {
        #[test]
        fn tanimoto_symmetric_bounded(
            xs in proptest::collection::vec(0usize..256, 0..40),
            ys in proptest::collection::vec(0usize..256, 0..40),
        ) {
            let a = Fingerprint::from_bits(256, xs);
            let b = Fingerprint::from_bits(256, ys);
            let ab = tanimoto(&a, &b).unwrap();
            prop_assert_eq!(ab, tanimoto(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        }
    }
}
