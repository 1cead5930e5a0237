use serde::{Deserialize, Serialize};

use super::element::{Element, N_ELEMENTS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AtomKind {
    /// Open valence `[*]` marking where a fragment rejoins its core.
    Attachment,
    Element(Element),
}

impl AtomKind {
    pub fn element(self) -> Option<Element> {
        match self {
            AtomKind::Element(e) => Some(e),
            AtomKind::Attachment => None,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            AtomKind::Attachment => 0,
            AtomKind::Element(e) => e.atomic_number(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub kind: AtomKind,
    pub charge: i8,
    pub aromatic: bool,
    /// Hydrogens carried by the atom (implicit or bracket-explicit).
    pub hydrogens: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Integral contribution to an atom's bond sum; aromatic counts one here,
    /// the extra half is handled by the aromatic hydrogen rule.
    pub(crate) fn valence_units(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
            BondOrder::Aromatic => 1.5,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// A molecular graph with hydrogens folded into their heavy atoms.
#[derive(Debug, Clone)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
    source_smiles: String,
}

impl Molecule {
    /// Builds a molecule, checking bond endpoints and recomputing ring flags.
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>, source_smiles: impl Into<String>) -> Result<Self> {
        let n = atoms.len();
        let mut adjacency = vec![Vec::new(); n];
        for (i, b) in bonds.iter().enumerate() {
            if b.a >= n || b.b >= n {
                return Err(Error::InvariantViolation(format!(
                    "bond {i} references a missing atom"
                )));
            }
            if b.a == b.b {
                return Err(Error::InvariantViolation(format!("bond {i} is a self-bond")));
            }
            if adjacency[b.a].iter().any(|&(nb, _)| nb == b.b) {
                return Err(Error::InvariantViolation(format!(
                    "duplicate bond {}-{}",
                    b.a, b.b
                )));
            }
            adjacency[b.a].push((b.b, i));
            adjacency[b.b].push((b.a, i));
        }
        let mut mol = Molecule {
            atoms,
            bonds,
            adjacency,
            source_smiles: source_smiles.into(),
        };
        let ring = super::ring::ring_bonds(&mol);
        for (b, r) in mol.bonds.iter_mut().zip(ring) {
            b.in_ring = r;
        }
        Ok(mol)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn source_smiles(&self) -> &str {
        &self.source_smiles
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `(neighbor, bond index)` pairs of an atom.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn atom_in_ring(&self, atom: usize) -> bool {
        self.adjacency[atom]
            .iter()
            .any(|&(_, b)| self.bonds[b].in_ring)
    }

    /// Heavy atoms, i.e. everything except attachment points and explicit hydrogens.
    pub fn heavy_atom_count(&self) -> usize {
        self.atoms
            .iter()
            .filter(|a| !matches!(a.kind, AtomKind::Attachment | AtomKind::Element(Element::H)))
            .count()
    }

    pub(crate) fn bond_units(&self, atom: usize) -> u8 {
        self.adjacency[atom]
            .iter()
            .map(|&(_, b)| self.bonds[b].order.valence_units())
            .sum()
    }

    pub(crate) fn aromatic_bond_count(&self, atom: usize) -> usize {
        self.adjacency[atom]
            .iter()
            .filter(|&&(_, b)| self.bonds[b].order == BondOrder::Aromatic)
            .count()
    }

    pub(crate) fn set_bond_order(&mut self, bond: usize, order: BondOrder) {
        self.bonds[bond].order = order;
    }

    pub(crate) fn atoms_mut(&mut self) -> &mut [Atom] {
        &mut self.atoms
    }

    /// Checks that every atom's bonds and hydrogens fit an allowed valence.
    pub fn validate(&self) -> Result<()> {
        if let Some((_, msg)) = self.valence_violation() {
            return Err(Error::InvariantViolation(msg));
        }
        let ring = super::ring::ring_bonds(self);
        if ring.iter().zip(&self.bonds).any(|(&r, b)| r != b.in_ring) {
            return Err(Error::InvariantViolation("stale ring flags".into()));
        }
        Ok(())
    }

    pub(crate) fn valence_violation(&self) -> Option<(usize, String)> {
        for (i, atom) in self.atoms.iter().enumerate() {
            let Some(el) = atom.kind.element() else {
                if self.degree(i) != 1 || atom.hydrogens != 0 {
                    return Some((i, format!("attachment point {i} must have exactly one bond")));
                }
                continue;
            };
            let units = self.bond_units(i) as u32 + atom.hydrogens as u32;
            let allowed = el.charged_valences(atom.charge);
            let ok = if atom.aromatic {
                // one extra unit shared with the pi system, except for lone-pair donors
                allowed
                    .iter()
                    .any(|&v| v as u32 == units + 1 || v as u32 == units)
            } else {
                allowed.iter().any(|&v| v as u32 == units)
            };
            if !ok {
                return Some((i, format!("atom {i} ({el}) has valence {units}, allowed {allowed:?}")));
            }
        }
        None
    }

    /// Builds the induced subgraph on `keep` (in the given order). Atoms that
    /// lose bonds gain hydrogens equal to the lost bond units.
    pub(crate) fn induced_subgraph(&self, keep: &[usize]) -> Molecule {
        let mut remap = vec![usize::MAX; self.atoms.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let mut atoms: Vec<Atom> = keep.iter().map(|&i| self.atoms[i]).collect();
        let mut bonds = Vec::new();
        for b in &self.bonds {
            let (na, nb) = (remap[b.a], remap[b.b]);
            match (na != usize::MAX, nb != usize::MAX) {
                (true, true) => bonds.push(Bond {
                    a: na,
                    b: nb,
                    order: b.order,
                    in_ring: false,
                }),
                (true, false) => atoms[na].hydrogens += b.order.valence_units(),
                (false, true) => atoms[nb].hydrogens += b.order.valence_units(),
                (false, false) => {}
            }
        }
        Molecule::new(atoms, bonds, String::new()).expect("subgraph of a valid graph is valid")
    }
}

/// Molecular weight in Dalton: heavy-atom masses plus carried hydrogens.
pub fn molecular_weight(m: &Molecule) -> f64 {
    m.atoms
        .iter()
        .map(|a| {
            let heavy = a.kind.element().map_or(0.0, Element::mass);
            heavy + a.hydrogens as f64 * Element::H.mass()
        })
        .sum()
}

/// Per-element atom counts in [`Element::ALL`] order; the H slot includes
/// carried hydrogens.
pub fn atom_counts(m: &Molecule) -> [u32; N_ELEMENTS] {
    let mut counts = [0u32; N_ELEMENTS];
    for a in &m.atoms {
        if let Some(e) = a.kind.element() {
            counts[e.index()] += 1;
        }
        counts[Element::H.index()] += a.hydrogens as u32;
    }
    counts
}
