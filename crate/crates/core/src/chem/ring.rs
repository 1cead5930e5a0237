//! Ring membership and small-cycle enumeration.

use super::molecule::{BondOrder, Molecule};

/// A bond is a ring bond iff it is not a bridge of the graph.
pub(crate) fn ring_bonds(m: &Molecule) -> Vec<bool> {
    let n = m.atom_count();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut is_bridge = vec![false; m.bonds().len()];
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // (atom, bond used to enter, next neighbor cursor)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(&mut (u, via, ref mut cursor)) = stack.last_mut() {
            if let Some(&(v, b)) = m.neighbors(u).get(*cursor) {
                *cursor += 1;
                if b == via {
                    continue;
                }
                if disc[v] == usize::MAX {
                    disc[v] = timer;
                    low[v] = timer;
                    timer += 1;
                    stack.push((v, b, 0));
                } else {
                    low[u] = low[u].min(disc[v]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[u]);
                    if low[u] > disc[p] {
                        is_bridge[via] = true;
                    }
                }
            }
        }
    }
    is_bridge.into_iter().map(|b| !b).collect()
}

/// All simple cycles of exactly `len` atoms made of ring bonds, each reported
/// once as a list of bond indices in traversal order.
pub(crate) fn cycles_of_length(m: &Molecule, len: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut path_atoms = Vec::with_capacity(len);
    let mut path_bonds = Vec::with_capacity(len);
    for start in 0..m.atom_count() {
        if !m.atom_in_ring(start) {
            continue;
        }
        path_atoms.clear();
        path_bonds.clear();
        path_atoms.push(start);
        extend_cycle(m, start, len, &mut path_atoms, &mut path_bonds, &mut |bonds| {
            let mut key = bonds.to_vec();
            key.sort_unstable();
            if seen.insert(key) {
                out.push(bonds.to_vec());
            }
        });
    }
    out
}

fn extend_cycle(
    m: &Molecule,
    start: usize,
    len: usize,
    atoms: &mut Vec<usize>,
    bonds: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize]),
) {
    let u = *atoms.last().unwrap();
    for &(v, b) in m.neighbors(u) {
        if !m.bonds()[b].in_ring {
            continue;
        }
        if v == start && atoms.len() == len && bonds.last() != Some(&b) {
            bonds.push(b);
            emit(bonds);
            bonds.pop();
        } else if atoms.len() < len && v > start && !atoms.contains(&v) {
            atoms.push(v);
            bonds.push(b);
            extend_cycle(m, start, len, atoms, bonds, emit);
            atoms.pop();
            bonds.pop();
        }
    }
}

/// Marks six-membered rings whose bonds alternate single/double (aromatic
/// bonds may stand in for either) as aromatic. Repeats until stable so fused
/// systems are picked up once a neighbouring ring has been converted.
pub(crate) fn perceive_aromaticity(m: &mut Molecule) {
    let cycles = cycles_of_length(m, 6);
    loop {
        let mut changed = false;
        for cycle in &cycles {
            let orders: Vec<BondOrder> = cycle.iter().map(|&b| m.bonds()[b].order).collect();
            if orders.iter().all(|&o| o == BondOrder::Aromatic) {
                continue;
            }
            let atoms_ok = cycle.iter().all(|&b| {
                let bond = m.bonds()[b];
                [bond.a, bond.b].iter().all(|&a| {
                    m.atoms()[a]
                        .kind
                        .element()
                        .is_some_and(|e| e.can_be_aromatic())
                })
            });
            if !atoms_ok {
                continue;
            }
            let alternates = |phase: usize| {
                orders.iter().enumerate().all(|(k, &o)| {
                    let want = if (k + phase) % 2 == 0 {
                        BondOrder::Double
                    } else {
                        BondOrder::Single
                    };
                    o == want || o == BondOrder::Aromatic
                })
            };
            if alternates(0) || alternates(1) {
                for &b in cycle {
                    m.set_bond_order(b, BondOrder::Aromatic);
                    let bond = m.bonds()[b];
                    m.atoms_mut()[bond.a].aromatic = true;
                    m.atoms_mut()[bond.b].aromatic = true;
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}
