//! Molecular graphs: SMILES I/O, masses, canonical forms, fingerprints and scaffolds.

mod canon;
pub mod element;
mod fingerprint;
mod molecule;
mod ring;
mod scaffold;
mod smiles;

pub use canon::{canonical_ranks, canonical_smiles};
pub use element::{mass_vector, Element, MASS_TABLE_CSV, N_ELEMENTS};
pub use fingerprint::{morgan_fingerprint, tanimoto, Fingerprint, DEFAULT_NBITS, DEFAULT_RADIUS};
pub use molecule::{atom_counts, molecular_weight, Atom, AtomKind, Bond, BondOrder, Molecule};
pub use scaffold::{murcko_scaffold, murcko_scaffold_smiles};
pub use smiles::{parse_fragment, parse_smiles};
