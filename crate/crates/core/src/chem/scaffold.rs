use super::canon::canonical_smiles;
use super::molecule::Molecule;

/// Bemis-Murcko scaffold: ring systems plus the linkers between them.
///
/// Returns `None` (an empty scaffold) for acyclic molecules.
pub fn murcko_scaffold(m: &Molecule) -> Option<Molecule> {
    if !m.bonds().iter().any(|b| b.in_ring) {
        return None;
    }
    let n = m.atom_count();
    let mut alive = vec![true; n];
    let mut degree: Vec<usize> = (0..n).map(|i| m.degree(i)).collect();
    let mut queue: Vec<usize> = (0..n)
        .filter(|&i| degree[i] <= 1 && !m.atom_in_ring(i))
        .collect();
    while let Some(u) = queue.pop() {
        if !alive[u] {
            continue;
        }
        alive[u] = false;
        for &(v, _) in m.neighbors(u) {
            if alive[v] {
                degree[v] -= 1;
                if degree[v] <= 1 && !m.atom_in_ring(v) {
                    queue.push(v);
                }
            }
        }
    }
    let keep: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    let mut sub = m.induced_subgraph(&keep);
    // drop atoms of ring-free components (disconnected side molecules)
    let comp_ok = ring_components(&sub);
    if comp_ok.iter().any(|ok| !ok) {
        let keep: Vec<usize> = (0..sub.atom_count()).filter(|&i| comp_ok[i]).collect();
        sub = sub.induced_subgraph(&keep);
    }
    Some(sub)
}

fn ring_components(m: &Molecule) -> Vec<bool> {
    let n = m.atom_count();
    let mut comp = vec![usize::MAX; n];
    let mut has_ring = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let c = has_ring.len();
        has_ring.push(false);
        let mut stack = vec![s];
        comp[s] = c;
        while let Some(u) = stack.pop() {
            has_ring[c] |= m.atom_in_ring(u);
            for &(v, _) in m.neighbors(u) {
                if comp[v] == usize::MAX {
                    comp[v] = c;
                    stack.push(v);
                }
            }
        }
    }
    comp.into_iter().map(|c| has_ring[c]).collect()
}

/// Canonical scaffold string; empty for acyclic molecules.
pub fn murcko_scaffold_smiles(m: &Molecule) -> String {
    murcko_scaffold(m).map_or_else(String::new, |s| canonical_smiles(&s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn scaf(s: &str) -> Option<String> {
        murcko_scaffold(&parse_smiles(s).unwrap()).map(|m| canonical_smiles(&m))
    }

    fn canon(s: &str) -> String {
        canonical_smiles(&parse_smiles(s).unwrap())
    }

    #[test]
    fn acyclic_is_empty() {
        assert_eq!(scaf("CCCC"), None);
        assert_eq!(murcko_scaffold_smiles(&parse_smiles("CCO").unwrap()), "");
    }

    #[test]
    fn strips_side_chains() {
        assert_eq!(scaf("CCc1ccccc1"), Some(canon("c1ccccc1")));
        assert_eq!(scaf("Oc1ccc(Cl)cc1"), Some(canon("c1ccccc1")));
    }

    #[test]
    fn keeps_linkers() {
        assert_eq!(
            scaf("c1ccccc1CCc1ccccc1"),
            Some(canon("c1ccccc1CCc1ccccc1"))
        );
        assert_eq!(
            scaf("CC(c1ccccc1)C1CC1"),
            Some(canon("c1ccccc1CC1CC1"))
        );
    }
}
