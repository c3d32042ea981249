//! Morgan (circular) fingerprints and Tanimoto similarity.
//!
//! Hashing is a fixed FNV-1a so fingerprints are identical across runs and
//! platforms.

use super::{BondOrder, ChemError, Molecule};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    bits: Vec<u64>,
    n_bits: usize,
    radius: u32,
}

impl Fingerprint {
    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn popcount(&self) -> u32 {
        self.bits.iter().map(|w| w.count_ones()).sum()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, i: usize) {
        self.bits[i / 64] |= 1 << (i % 64);
    }
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(data: &[u64]) -> u64 {
    let mut hash = FNV_OFFSET;
    for value in data {
        for byte in value.to_le_bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(FNV_PRIME);
        }
    }
    hash
}

fn bond_code(order: BondOrder) -> u64 {
    match order {
        BondOrder::Single => 1,
        BondOrder::Double => 2,
        BondOrder::Triple => 3,
        BondOrder::Aromatic => 4,
    }
}

/// Circular-substructure fingerprint. The radius-0 invariant hashes
/// element, degree, charge, hydrogen count, ring flag, and aromatic flag;
/// each round folds in sorted (bond, neighbor-invariant) pairs.
///
/// `n_bits` must be a power of two ≥ 64 and `radius` any count.
pub fn morgan_fingerprint(mol: &Molecule, radius: u32, n_bits: usize) -> Fingerprint {
    assert!(
        n_bits >= 64 && n_bits.is_power_of_two(),
        "n_bits must be a power of two >= 64"
    );
    let mut fp = Fingerprint {
        bits: vec![0; n_bits / 64],
        n_bits,
        radius,
    };

    let n = mol.atoms.len();
    let mut invariants: Vec<u64> = (0..n)
        .map(|i| {
            let a = &mol.atoms[i];
            fnv1a(&[
                u64::from(a.element.atomic_number()),
                mol.degree(i) as u64,
                (i64::from(a.formal_charge) + 16) as u64,
                u64::from(a.total_hydrogens()),
                u64::from(a.in_ring),
                u64::from(a.aromatic),
            ])
        })
        .collect();

    for &inv in &invariants {
        fp.set((inv % n_bits as u64) as usize);
    }

    for round in 1..=radius {
        let mut next = invariants.clone();
        for i in 0..n {
            let mut env: Vec<(u64, u64)> = mol
                .neighbors(i)
                .iter()
                .map(|&(v, bi)| (bond_code(mol.bonds[bi].order), invariants[v]))
                .collect();
            env.sort_unstable();
            let mut data = vec![u64::from(round), invariants[i]];
            for (b, inv) in env {
                data.push(b);
                data.push(inv);
            }
            next[i] = fnv1a(&data);
        }
        invariants = next;
        for &inv in &invariants {
            fp.set((inv % n_bits as u64) as usize);
        }
    }
    fp
}

/// Tanimoto similarity |a∧b| / |a∨b|, defined as 1.0 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, ChemError> {
    if a.n_bits != b.n_bits {
        return Err(ChemError::WidthMismatch {
            left: a.n_bits,
            right: b.n_bits,
        });
    }
    let mut intersection = 0u32;
    let mut union = 0u32;
    for (x, y) in a.bits.iter().zip(&b.bits) {
        intersection += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(f64::from(intersection) / f64::from(union))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    #[test]
    fn identical_smiles_identical_fingerprints() {
        let a = morgan_fingerprint(&parse_smiles("CC(=O)O").unwrap(), 2, 2048);
        let b = morgan_fingerprint(&parse_smiles("CC(=O)O").unwrap(), 2, 2048);
        assert_eq!(a, b);
        assert!((tanimoto(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radius_zero_sets_at_most_one_bit_per_atom() {
        let fp = morgan_fingerprint(&parse_smiles("CO").unwrap(), 0, 2048);
        assert!(fp.popcount() <= 2);
        assert!(fp.popcount() >= 1);
    }

    #[test]
    fn benzene_differs_from_cyclohexane() {
        let b = morgan_fingerprint(&parse_smiles("c1ccccc1").unwrap(), 2, 2048);
        let c = morgan_fingerprint(&parse_smiles("C1CCCCC1").unwrap(), 2, 2048);
        assert_ne!(b, c);
        assert!(tanimoto(&b, &c).unwrap() < 1.0);
    }

    #[test]
    fn width_mismatch_rejected() {
        let a = morgan_fingerprint(&parse_smiles("CC").unwrap(), 2, 1024);
        let b = morgan_fingerprint(&parse_smiles("CC").unwrap(), 2, 2048);
        assert!(matches!(
            tanimoto(&a, &b),
            Err(ChemError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn constructed_overlap_is_half() {
        // bits {1,2,3} vs {2,3,4}: intersection 2, union 4.
        let mut a = Fingerprint {
            bits: vec![0; 2048 / 64],
            n_bits: 2048,
            radius: 0,
        };
        let mut b = a.clone();
        for i in [1usize, 2, 3] {
            a.set(i);
        }
        for i in [2usize, 3, 4] {
            b.set(i);
        }
        assert!((tanimoto(&a, &b).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_fingerprints_are_identical() {
        let a = Fingerprint {
            bits: vec![0; 1],
            n_bits: 64,
            radius: 0,
        };
        let b = a.clone();
        assert!((tanimoto(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_bit_sets_have_zero_similarity() {
        let mut a = Fingerprint {
            bits: vec![0; 2],
            n_bits: 128,
            radius: 0,
        };
        let mut b = a.clone();
        a.set(3);
        a.set(70);
        b.set(4);
        b.set(99);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.0);
    }

    use proptest::prelude::*;

    fn arbitrary_fp() -> impl Strategy<Value = Fingerprint> {
        prop::collection::vec(any::<u64>(), 4).prop_map(|bits| Fingerprint {
            bits,
            n_bits: 256,
            radius: 2,
        })
    }

    proptest! {
        #[test]
        fn tanimoto_symmetric_and_bounded(a in arbitrary_fp(), b in arbitrary_fp()) {
            let ab = tanimoto(&a, &b).unwrap();
            let ba = tanimoto(&b, &a).unwrap();
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!((0.0..=1.0).contains(&ab));
            // 1.0 exactly when the bit sets are equal.
            prop_assert_eq!(ab == 1.0, a.bits == b.bits);
        }
    }
}
