//! Canonical atom ranking and SMILES writing.
//!
//! Ranks start from per-atom invariants and are refined by neighbour
//! multisets until stable. Remaining ties are broken by trying every member
//! of the lowest tied class and keeping the lexicographically smallest
//! output, with a leaf budget after which the first candidate is taken.

use super::molecule::{AtomKind, BondOrder, Molecule};
use super::smiles::default_hydrogens;

const LEAF_BUDGET: usize = 512;

/// Canonical SMILES of a molecule or fragment.
pub fn canonical_smiles(m: &Molecule) -> String {
    if m.is_empty() {
        return String::new();
    }
    let ranks = refine(m, initial_ranks(m));
    let mut budget = LEAF_BUDGET;
    search(m, ranks, &mut budget)
}

/// Canonical ranks (0-based, all distinct) consistent with [`canonical_smiles`].
pub fn canonical_ranks(m: &Molecule) -> Vec<usize> {
    if m.is_empty() {
        return Vec::new();
    }
    let ranks = refine(m, initial_ranks(m));
    let mut budget = LEAF_BUDGET;
    search_ranks(m, ranks, &mut budget).1
}

fn initial_ranks(m: &Molecule) -> Vec<usize> {
    let keys: Vec<_> = (0..m.atom_count())
        .map(|i| {
            let a = m.atoms()[i];
            (
                a.kind.code(),
                a.aromatic,
                a.charge,
                a.hydrogens,
                m.degree(i),
                m.atom_in_ring(i),
            )
        })
        .collect();
    dense_ranks(&keys)
}

fn dense_ranks<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut sorted: Vec<K> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).unwrap())
        .collect()
}

fn class_count(ranks: &[usize]) -> usize {
    ranks.iter().max().map_or(0, |&r| r + 1)
}

fn refine(m: &Molecule, mut ranks: Vec<usize>) -> Vec<usize> {
    let mut classes = class_count(&ranks);
    loop {
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..m.atom_count())
            .map(|i| {
                let mut nb: Vec<(usize, u8)> = m
                    .neighbors(i)
                    .iter()
                    .map(|&(j, b)| (ranks[j], m.bonds()[b].order.code()))
                    .collect();
                nb.sort_unstable();
                (ranks[i], nb)
            })
            .collect();
        let next = dense_ranks(&keys);
        let n = class_count(&next);
        if n == classes {
            return ranks;
        }
        ranks = next;
        classes = n;
    }
}

fn lowest_tie(ranks: &[usize]) -> Option<Vec<usize>> {
    let mut counts = vec![0usize; ranks.len()];
    for &r in ranks {
        counts[r] += 1;
    }
    let r = counts.iter().position(|&c| c > 1)?;
    Some((0..ranks.len()).filter(|&i| ranks[i] == r).collect())
}

fn break_tie(m: &Molecule, ranks: &[usize], chosen: usize) -> Vec<usize> {
    let keys: Vec<(usize, bool)> = ranks
        .iter()
        .enumerate()
        .map(|(i, &r)| (r, i != chosen))
        .collect();
    refine(m, dense_ranks(&keys))
}

fn search(m: &Molecule, ranks: Vec<usize>, budget: &mut usize) -> String {
    search_ranks(m, ranks, budget).0
}

fn search_ranks(m: &Molecule, ranks: Vec<usize>, budget: &mut usize) -> (String, Vec<usize>) {
    let Some(tied) = lowest_tie(&ranks) else {
        *budget = budget.saturating_sub(1);
        return (write_smiles(m, &ranks), ranks);
    };
    let mut best: Option<(String, Vec<usize>)> = None;
    for (k, &cand) in tied.iter().enumerate() {
        if k > 0 && *budget == 0 {
            break;
        }
        let out = search_ranks(m, break_tie(m, &ranks, cand), budget);
        if best.as_ref().is_none_or(|b| out.0 < b.0) {
            best = Some(out);
        }
    }
    best.unwrap()
}

fn atom_text(m: &Molecule, i: usize) -> String {
    let a = m.atoms()[i];
    let el = match a.kind {
        AtomKind::Attachment => return "[*]".to_string(),
        AtomKind::Element(e) => e,
    };
    let sym = if a.aromatic {
        el.symbol().to_ascii_lowercase()
    } else {
        el.symbol().to_string()
    };
    if default_hydrogens(m, i) == Some(a.hydrogens) {
        return sym;
    }
    let mut s = format!("[{sym}");
    match a.hydrogens {
        0 => {}
        1 => s.push('H'),
        h => s.push_str(&format!("H{h}")),
    }
    match a.charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => s.push_str(&format!("+{c}")),
        c => s.push_str(&format!("-{}", -c)),
    }
    s.push(']');
    s
}

fn bond_text(m: &Molecule, bond: usize) -> &'static str {
    let b = m.bonds()[bond];
    match b.order {
        BondOrder::Single => {
            if m.atoms()[b.a].aromatic && m.atoms()[b.b].aromatic {
                "-"
            } else {
                ""
            }
        }
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic => "",
    }
}

/// Writes SMILES following the given atom ranks: each component starts at
/// its lowest-ranked atom and neighbours are visited in rank order.
pub(crate) fn write_smiles(m: &Molecule, ranks: &[usize]) -> String {
    let n = m.atom_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| ranks[i]);
    let sorted_nbrs: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|i| {
            let mut v = m.neighbors(i).to_vec();
            v.sort_by_key(|&(j, _)| ranks[j]);
            v
        })
        .collect();

    let mut visited = vec![false; n];
    let mut parts = Vec::new();
    for &root in &order {
        if visited[root] {
            continue;
        }
        // pass 1: spanning tree and ring-closure bonds
        let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut closures: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut tree_bond = vec![false; m.bonds().len()];
        let mut closure_seen = vec![false; m.bonds().len()];
        let mut stack = vec![(root, usize::MAX, 0usize)];
        visited[root] = true;
        while let Some(top) = stack.last_mut() {
            let (u, via, cur) = *top;
            if let Some(&(v, b)) = sorted_nbrs[u].get(cur) {
                top.2 += 1;
                if b == via || tree_bond[b] {
                    continue;
                }
                if !visited[v] {
                    visited[v] = true;
                    tree_bond[b] = true;
                    children[u].push((v, b));
                    stack.push((v, b, 0));
                } else if !closure_seen[b] {
                    closure_seen[b] = true;
                    // v was visited first, so the closure opens at v
                    closures[v].push((u, b));
                    closures[u].push((v, b));
                }
            } else {
                stack.pop();
            }
        }
        // pass 2: emit
        let mut out = String::new();
        let mut digits: Vec<Option<usize>> = vec![None; m.bonds().len()];
        let mut in_use: Vec<bool> = vec![false; 100];
        let mut emitted = vec![false; n];
        emit(
            m,
            root,
            None,
            &children,
            &closures,
            &mut digits,
            &mut in_use,
            &mut emitted,
            &mut out,
        );
        parts.push(out);
    }
    parts.sort();
    parts.join(".")
}

#[allow(clippy::too_many_arguments)]
fn emit(
    m: &Molecule,
    root: usize,
    root_bond: Option<usize>,
    children: &[Vec<(usize, usize)>],
    closures: &[Vec<(usize, usize)>],
    digits: &mut [Option<usize>],
    in_use: &mut [bool],
    emitted: &mut [bool],
    out: &mut String,
) {
    enum Step {
        Atom(usize, Option<usize>),
        Open,
        Close,
    }
    let mut work = vec![Step::Atom(root, root_bond)];
    while let Some(step) = work.pop() {
        match step {
            Step::Open => out.push('('),
            Step::Close => out.push(')'),
            Step::Atom(u, bond) => {
                if let Some(b) = bond {
                    out.push_str(bond_text(m, b));
                }
                out.push_str(&atom_text(m, u));
                emitted[u] = true;
                // closings first (partner already emitted), then openings
                let mut freed = Vec::new();
                for &(v, b) in &closures[u] {
                    if emitted[v] && v != u {
                        if let Some(d) = digits[b] {
                            push_digit(out, d);
                            freed.push(d);
                        }
                    }
                }
                for &(v, b) in &closures[u] {
                    if !emitted[v] && digits[b].is_none() {
                        let d = (1..100).find(|&d| !in_use[d]).expect("ring digits exhausted");
                        in_use[d] = true;
                        digits[b] = Some(d);
                        out.push_str(bond_text(m, b));
                        push_digit(out, d);
                    }
                }
                for d in freed {
                    in_use[d] = false;
                }
                let kids = &children[u];
                // push in reverse so the first child is written first
                for (k, &(v, b)) in kids.iter().enumerate().rev() {
                    if k + 1 == kids.len() {
                        work.push(Step::Atom(v, Some(b)));
                    } else {
                        work.push(Step::Close);
                        work.push(Step::Atom(v, Some(b)));
                        work.push(Step::Open);
                    }
                }
            }
        }
    }
}

fn push_digit(out: &mut String, d: usize) {
    if d < 10 {
        out.push(char::from(b'0' + d as u8));
    } else {
        out.push_str(&format!("%{d}"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::smiles::{parse_fragment, parse_smiles};

    fn canon(s: &str) -> String {
        canonical_smiles(&parse_smiles(s).unwrap())
    }

    #[test]
    fn ethanol_orderings_agree() {
        assert_eq!(canon("OCC"), canon("CCO"));
        assert_eq!(canon("C(O)C"), canon("CCO"));
    }

    #[test]
    fn benzene_forms_agree() {
        assert_eq!(canon("C1=CC=CC=C1"), canon("c1ccccc1"));
        assert_eq!(canon("c1ccccc1"), "c1ccccc1");
    }

    #[test]
    fn idempotent_on_assorted() {
        for s in [
            "CC(=O)O",
            "c1ccc2ccccc2c1",
            "C1CC2CCC1CC2",
            "c1ccccc1-c1ccccc1",
            "[NH4+]",
            "CC(C)(C)Cl",
            "c1cc[nH]c1",
            "O=C1CCCCC1",
            "C#N",
            "CC.O",
            "FC(F)(F)c1ccc(Br)cc1I",
            "C1CC1C1CC1",
            "CC(=O)[O-]",
            "c1ccc2c(c1)cc1ccccc12",
        ] {
            let c = canon(s);
            assert_eq!(canon(&c), c, "{s} -> {c}");
            let a = parse_smiles(s).unwrap();
            let b = parse_smiles(&c).unwrap();
            assert_eq!(a.atom_count(), b.atom_count());
            assert_eq!(a.bonds().len(), b.bonds().len());
        }
    }

    #[test]
    fn fragments_start_at_attachment() {
        let f = canonical_smiles(&parse_fragment("C[*]").unwrap());
        assert_eq!(f, "[*]C");
        let f = canonical_smiles(&parse_fragment("OCC[*]").unwrap());
        assert_eq!(f, "[*]CCO");
    }

    #[test]
    fn ranks_are_a_permutation() {
        let m = parse_smiles("CC(C)(C)C").unwrap();
        let mut r = canonical_ranks(&m);
        r.sort();
        assert_eq!(r, vec![0, 1, 2, 3, 4]);
    }
}
