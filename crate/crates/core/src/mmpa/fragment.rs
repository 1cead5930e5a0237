use serde::{Deserialize, Serialize};

use crate::chem::{canonical_smiles, Atom, AtomKind, Bond, BondOrder, Element, Molecule};

/// Default cap on heavy atoms in the variable part of a cut.
pub const DEFAULT_MAX_HEAVY_ATOMS: usize = 13;

/// One single-cut split of a molecule into a constant core and a variable part.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fragmentation {
    pub core: String,
    pub variable: String,
    /// Parent atom indices of the cut bond, core side first.
    pub cut_bond: (usize, usize),
}

fn cuttable(m: &Molecule, b: &Bond) -> bool {
    let heavy = |i: usize| {
        !matches!(
            m.atoms()[i].kind,
            AtomKind::Attachment | AtomKind::Element(Element::H)
        )
    };
    !b.in_ring && b.order == BondOrder::Single && heavy(b.a) && heavy(b.b)
}

/// Atoms reachable from `start` without crossing `cut`.
fn side(m: &Molecule, start: usize, cut: usize) -> Vec<usize> {
    let mut seen = vec![false; m.atom_count()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut out = Vec::new();
    while let Some(u) = stack.pop() {
        out.push(u);
        for &(v, b) in m.neighbors(u) {
            if b != cut && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    out.sort_unstable();
    out
}

/// The side containing `anchor`, with an attachment point where the cut bond was.
fn labelled_fragment(m: &Molecule, atoms: &[usize], anchor: usize) -> Molecule {
    let mut remap = vec![usize::MAX; m.atom_count()];
    for (k, &i) in atoms.iter().enumerate() {
        remap[i] = k;
    }
    let mut new_atoms: Vec<Atom> = atoms.iter().map(|&i| m.atoms()[i]).collect();
    let mut bonds: Vec<Bond> = m
        .bonds()
        .iter()
        .filter(|b| remap[b.a] != usize::MAX && remap[b.b] != usize::MAX)
        .map(|b| Bond {
            a: remap[b.a],
            b: remap[b.b],
            order: b.order,
            in_ring: false,
        })
        .collect();
    new_atoms.push(Atom {
        kind: AtomKind::Attachment,
        charge: 0,
        aromatic: false,
        hydrogens: 0,
    });
    bonds.push(Bond {
        a: remap[anchor],
        b: new_atoms.len() - 1,
        order: BondOrder::Single,
        in_ring: false,
    });
    Molecule::new(new_atoms, bonds, String::new()).expect("fragment of a valid graph")
}

fn heavy_count(m: &Molecule, atoms: &[usize]) -> usize {
    atoms
        .iter()
        .filter(|&&i| m.atoms()[i].kind != AtomKind::Element(Element::H))
        .count()
}

/// Every single cut of an acyclic single bond between heavy atoms, in both
/// orientations, keeping those whose variable part has at most
/// `max_heavy_atoms` heavy atoms.
pub fn enumerate_fragmentations(m: &Molecule, max_heavy_atoms: usize) -> Vec<Fragmentation> {
    let mut out = Vec::new();
    for (bi, bond) in m.bonds().iter().enumerate() {
        if !cuttable(m, bond) {
            continue;
        }
        let side_a = side(m, bond.a, bi);
        let side_b = side(m, bond.b, bi);
        for (core_side, core_anchor, var_side, var_anchor) in [
            (&side_a, bond.a, &side_b, bond.b),
            (&side_b, bond.b, &side_a, bond.a),
        ] {
            if heavy_count(m, var_side) > max_heavy_atoms {
                continue;
            }
            out.push(Fragmentation {
                core: canonical_smiles(&labelled_fragment(m, core_side, core_anchor)),
                variable: canonical_smiles(&labelled_fragment(m, var_side, var_anchor)),
                cut_bond: (core_anchor, var_anchor),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn frags(s: &str) -> Vec<(String, String)> {
        let mut v: Vec<_> = enumerate_fragmentations(&parse_smiles(s).unwrap(), DEFAULT_MAX_HEAVY_ATOMS)
            .into_iter()
            .map(|f| (f.core, f.variable))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn ethanol_cuts() {
        let got = frags("CCO");
        let want: Vec<(String, String)> = [
            ("[*]C", "[*]CO"),
            ("[*]CC", "[*]O"),
            ("[*]CO", "[*]C"),
            ("[*]O", "[*]CC"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn ring_only_is_empty() {
        assert!(frags("c1ccccc1").is_empty());
        assert!(frags("C1CCCCC1").is_empty());
    }

    #[test]
    fn chain_count_is_twice_bonds() {
        for n in 2..10 {
            let s = "C".repeat(n);
            assert_eq!(frags(&s).len(), 2 * (n - 1));
        }
    }

    #[test]
    fn double_bonds_not_cut() {
        assert_eq!(frags("C=C").len(), 0);
        assert_eq!(frags("CC=O").len(), 2);
    }

    #[test]
    fn size_cap_limits_variable() {
        let m = parse_smiles("CCCCCC").unwrap();
        let f = enumerate_fragmentations(&m, 2);
        assert!(f.iter().all(|x| x.variable.matches('C').count() <= 2));
        assert_eq!(f.len(), 4);
    }

    #[test]
    fn reassembly_restores_parent_size() {
        let m = parse_smiles("CC(C)c1ccc(OC)cc1").unwrap();
        for f in enumerate_fragmentations(&m, DEFAULT_MAX_HEAVY_ATOMS) {
            let core = crate::chem::parse_fragment(&f.core).unwrap();
            let var = crate::chem::parse_fragment(&f.variable).unwrap();
            assert_eq!(core.heavy_atom_count() + var.heavy_atom_count(), m.heavy_atom_count());
            assert_eq!(f.core.matches("[*]").count(), 1);
            assert_eq!(f.variable.matches("[*]").count(), 1);
        }
    }
}
