//! SMILES reading.
//!
//! Supported: organic-subset and bracket atoms over the 12 bundled elements,
//! bracket hydrogens and charges, bonds `- = # :` (and `/ \` read as single),
//! branches, ring closures (`1`-`9`, `%nn`), dot-disconnected components and
//! lowercase aromatic atoms. Chirality marks are accepted and dropped.
//! Isotopes and atom classes are rejected.

use super::element::Element;
use super::molecule::{Atom, AtomKind, Bond, BondOrder, Molecule};
use super::ring;
use crate::error::SmilesError;

/// Parses a whole-molecule SMILES string. Attachment points are rejected.
pub fn parse_smiles(text: &str) -> Result<Molecule, SmilesError> {
    Parser::new(text, false).run()
}

/// Parses a fragment SMILES, where `[*]` attachment points are legal.
pub fn parse_fragment(text: &str) -> Result<Molecule, SmilesError> {
    Parser::new(text, true).run()
}

struct PendingRing {
    atom: usize,
    order: Option<BondOrder>,
    pos: usize,
}

struct RawBond {
    a: usize,
    b: usize,
    order: BondOrder,
    /// No bond symbol was written.
    implicit: bool,
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    allow_attachment: bool,
    atoms: Vec<Atom>,
    /// Whether the atom was written in brackets (hydrogens are then explicit).
    bracketed: Vec<bool>,
    bonds: Vec<RawBond>,
    rings: Vec<Option<PendingRing>>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, allow_attachment: bool) -> Self {
        Parser {
            text,
            bytes: text.as_bytes(),
            pos: 0,
            allow_attachment,
            atoms: Vec::new(),
            bracketed: Vec::new(),
            bonds: Vec::new(),
            rings: (0..100).map(|_| None).collect(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn run(mut self) -> Result<Molecule, SmilesError> {
        if self.text.trim().is_empty() {
            return Err(SmilesError::syntax(0, "empty SMILES"));
        }
        if self.text.trim() != self.text {
            return Err(SmilesError::syntax(0, "surrounding whitespace"));
        }
        self.parse_chains()?;
        if let Some(open) = self.rings.iter().flatten().next() {
            return Err(SmilesError::syntax(open.pos, "unclosed ring bond"));
        }
        self.finish()
    }

    fn parse_chains(&mut self) -> Result<(), SmilesError> {
        // prev atom, stack of branch points
        let mut prev: Option<usize> = None;
        let mut branch_stack: Vec<Option<usize>> = Vec::new();
        let mut pending_bond: Option<(BondOrder, usize)> = None;
        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    if prev.is_none() || pending_bond.is_some() {
                        return Err(SmilesError::syntax(self.pos, "branch without a preceding atom"));
                    }
                    branch_stack.push(prev);
                    self.pos += 1;
                    if self.peek() == Some(b')') {
                        return Err(SmilesError::syntax(self.pos, "empty branch"));
                    }
                }
                b')' => {
                    if pending_bond.is_some() {
                        return Err(SmilesError::syntax(self.pos, "dangling bond"));
                    }
                    prev = branch_stack
                        .pop()
                        .ok_or_else(|| SmilesError::syntax(self.pos, "unbalanced ')'"))?;
                    self.pos += 1;
                }
                b'.' => {
                    if pending_bond.is_some() || !branch_stack.is_empty() || prev.is_none() {
                        return Err(SmilesError::syntax(self.pos, "misplaced '.'"));
                    }
                    prev = None;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if pending_bond.is_some() || prev.is_none() {
                        return Err(SmilesError::syntax(self.pos, "misplaced bond symbol"));
                    }
                    let order = match c {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b':' => BondOrder::Aromatic,
                        _ => BondOrder::Single,
                    };
                    pending_bond = Some((order, self.pos));
                    self.pos += 1;
                }
                b'$' => return Err(SmilesError::unsupported(self.pos, "quadruple bonds")),
                b'0'..=b'9' | b'%' => {
                    let start = self.pos;
                    let num = self.ring_number()?;
                    let atom = prev.ok_or_else(|| SmilesError::syntax(start, "ring bond without atom"))?;
                    let order = pending_bond.take().map(|(o, _)| o);
                    self.ring_bond(atom, num, order, start)?;
                }
                _ => {
                    let start = self.pos;
                    let idx = self.parse_atom()?;
                    if let Some(p) = prev {
                        let (order, implicit) = match pending_bond.take() {
                            Some((o, _)) => (o, false),
                            None => (BondOrder::Single, true),
                        };
                        self.add_bond(p, idx, order, implicit, start)?;
                    } else if let Some((_, p)) = pending_bond {
                        return Err(SmilesError::syntax(p, "bond without a preceding atom"));
                    }
                    prev = Some(idx);
                }
            }
        }
        if let Some((_, p)) = pending_bond {
            return Err(SmilesError::syntax(p, "dangling bond"));
        }
        if !branch_stack.is_empty() {
            return Err(SmilesError::syntax(self.pos, "unbalanced '('"));
        }
        if prev.is_none() {
            return Err(SmilesError::syntax(self.pos, "trailing '.'"));
        }
        Ok(())
    }

    fn ring_number(&mut self) -> Result<usize, SmilesError> {
        let c = self.peek().unwrap();
        if c == b'%' {
            let d = self.bytes.get(self.pos + 1..self.pos + 3);
            match d {
                Some(&[a, b]) if a.is_ascii_digit() && b.is_ascii_digit() => {
                    self.pos += 3;
                    Ok(((a - b'0') * 10 + (b - b'0')) as usize)
                }
                _ => Err(SmilesError::syntax(self.pos, "bad %nn ring number")),
            }
        } else {
            self.pos += 1;
            Ok((c - b'0') as usize)
        }
    }

    fn ring_bond(
        &mut self,
        atom: usize,
        num: usize,
        order: Option<BondOrder>,
        pos: usize,
    ) -> Result<(), SmilesError> {
        match self.rings[num].take() {
            None => {
                self.rings[num] = Some(PendingRing { atom, order, pos });
                Ok(())
            }
            Some(open) => {
                let order = match (open.order, order) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(SmilesError::syntax(pos, "conflicting ring bond orders"))
                    }
                    (Some(a), _) | (None, Some(a)) => Some(a),
                    (None, None) => None,
                };
                if open.atom == atom {
                    return Err(SmilesError::syntax(pos, "ring bond to itself"));
                }
                self.add_bond(
                    open.atom,
                    atom,
                    order.unwrap_or(BondOrder::Single),
                    order.is_none(),
                    pos,
                )
            }
        }
    }

    fn add_bond(
        &mut self,
        a: usize,
        b: usize,
        order: BondOrder,
        implicit: bool,
        pos: usize,
    ) -> Result<(), SmilesError> {
        if self
            .bonds
            .iter()
            .any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a))
        {
            return Err(SmilesError::syntax(pos, "duplicate bond"));
        }
        self.bonds.push(RawBond {
            a,
            b,
            order,
            implicit,
        });
        Ok(())
    }

    fn push_atom(&mut self, atom: Atom, bracketed: bool) -> usize {
        self.atoms.push(atom);
        self.bracketed.push(bracketed);
        self.atoms.len() - 1
    }

    fn parse_atom(&mut self) -> Result<usize, SmilesError> {
        let start = self.pos;
        let c = self.peek().unwrap();
        if c == b'[' {
            return self.parse_bracket_atom();
        }
        if c == b'*' {
            self.pos += 1;
            return self.attachment(start);
        }
        let rest = &self.bytes[self.pos..];
        let (sym, aromatic, len) = match rest {
            [b'C', b'l', ..] => ("Cl", false, 2),
            [b'B', b'r', ..] => ("Br", false, 2),
            [b'B', ..] => ("B", false, 1),
            [b'C', ..] => ("C", false, 1),
            [b'N', ..] => ("N", false, 1),
            [b'O', ..] => ("O", false, 1),
            [b'P', ..] => ("P", false, 1),
            [b'S', ..] => ("S", false, 1),
            [b'F', ..] => ("F", false, 1),
            [b'I', ..] => ("I", false, 1),
            [b'b', ..] => ("B", true, 1),
            [b'c', ..] => ("C", true, 1),
            [b'n', ..] => ("N", true, 1),
            [b'o', ..] => ("O", true, 1),
            [b'p', ..] => ("P", true, 1),
            [b's', ..] => ("S", true, 1),
            _ => {
                let ch = self.text[self.pos..].chars().next().unwrap();
                return Err(SmilesError::syntax(start, format!("unknown symbol {ch:?}")));
            }
        };
        self.pos += len;
        let el = Element::from_symbol(sym).unwrap();
        Ok(self.push_atom(
            Atom {
                kind: AtomKind::Element(el),
                charge: 0,
                aromatic,
                hydrogens: 0,
            },
            false,
        ))
    }

    fn attachment(&mut self, pos: usize) -> Result<usize, SmilesError> {
        if !self.allow_attachment {
            return Err(SmilesError::unsupported(
                pos,
                "attachment points are only legal in fragments",
            ));
        }
        Ok(self.push_atom(
            Atom {
                kind: AtomKind::Attachment,
                charge: 0,
                aromatic: false,
                hydrogens: 0,
            },
            true,
        ))
    }

    fn parse_bracket_atom(&mut self) -> Result<usize, SmilesError> {
        let open = self.pos;
        let close = self.text[open..]
            .find(']')
            .map(|i| open + i)
            .ok_or_else(|| SmilesError::syntax(open, "unclosed '['"))?;
        let body = &self.text[open + 1..close];
        self.pos = close + 1;
        let b = body.as_bytes();
        let mut i;
        if b.first().is_some_and(u8::is_ascii_digit) {
            return Err(SmilesError::unsupported(open + 1, "isotopes"));
        }
        if b.first() == Some(&b'*') {
            if body != "*" {
                return Err(SmilesError::unsupported(open, "decorated attachment point"));
            }
            return self.attachment(open);
        }
        // element symbol: two-letter first, then one-letter
        let (el, aromatic) = {
            let two = body.get(0..2).and_then(|s| {
                if s.chars().nth(1).is_some_and(|c| c.is_ascii_lowercase()) {
                    Element::from_symbol(s).map(|e| (e, false))
                } else {
                    None
                }
            });
            let known_two = b.len() >= 2 && b[1].is_ascii_lowercase();
            if let Some(x) = two {
                i = 2;
                x
            } else if known_two {
                return Err(SmilesError::unsupported(open + 1, format!("element {}", &body[0..2])));
            } else {
                let one = body
                    .get(0..1)
                    .ok_or_else(|| SmilesError::syntax(open, "empty bracket atom"))?;
                let lower = one.chars().next().unwrap().is_ascii_lowercase();
                let upper = one.to_ascii_uppercase();
                match Element::from_symbol(&upper) {
                    Some(e) if !lower || e.can_be_aromatic() => {
                        i = 1;
                        (e, lower)
                    }
                    _ => {
                        let end = body
                            .char_indices()
                            .skip(1)
                            .find(|(_, c)| !c.is_ascii_lowercase())
                            .map_or(body.len(), |(k, _)| k);
                        let sym = &body[..end];
                        return if sym.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                            Err(SmilesError::unsupported(open + 1, format!("element {sym}")))
                        } else {
                            Err(SmilesError::syntax(open + 1, format!("bad bracket atom [{body}]")))
                        };
                    }
                }
            }
        };
        // chirality
        while b.get(i) == Some(&b'@') {
            i += 1;
        }
        if b.get(i).is_some_and(|c| c.is_ascii_uppercase()) && b.get(i) != Some(&b'H') {
            // @TH1 / @SP1 style
            while b.get(i).is_some_and(|c| c.is_ascii_alphanumeric()) && b.get(i) != Some(&b'H') {
                i += 1;
            }
        }
        let mut hydrogens = 0u8;
        if b.get(i) == Some(&b'H') {
            i += 1;
            hydrogens = 1;
            if let Some(d) = b.get(i).filter(|c| c.is_ascii_digit()) {
                hydrogens = d - b'0';
                i += 1;
            }
        }
        let mut charge: i32 = 0;
        if let Some(&sign) = b.get(i).filter(|&&c| c == b'+' || c == b'-') {
            let s = if sign == b'+' { 1 } else { -1 };
            i += 1;
            let mut mag = 1;
            if let Some(d) = b.get(i).filter(|c| c.is_ascii_digit()) {
                mag = (d - b'0') as i32;
                i += 1;
            } else {
                while b.get(i) == Some(&sign) {
                    mag += 1;
                    i += 1;
                }
            }
            charge = s * mag;
        }
        if b.get(i) == Some(&b':') {
            return Err(SmilesError::unsupported(open + 1 + i, "atom classes"));
        }
        if i != b.len() {
            return Err(SmilesError::syntax(open + 1 + i, format!("bad bracket atom [{body}]")));
        }
        if !(-4..=4).contains(&charge) {
            return Err(SmilesError::syntax(open, "charge out of range"));
        }
        Ok(self.push_atom(
            Atom {
                kind: AtomKind::Element(el),
                charge: charge as i8,
                aromatic,
                hydrogens,
            },
            true,
        ))
    }

    fn finish(self) -> Result<Molecule, SmilesError> {
        let atoms = self.atoms;
        let bonds: Vec<Bond> = self
            .bonds
            .iter()
            .map(|rb| {
                let both_aromatic = atoms[rb.a].aromatic && atoms[rb.b].aromatic;
                let order = if rb.implicit && both_aromatic {
                    BondOrder::Aromatic
                } else {
                    rb.order
                };
                Bond {
                    a: rb.a,
                    b: rb.b,
                    order,
                    in_ring: false,
                }
            })
            .collect();
        let mut mol = Molecule::new(atoms, bonds, self.text).map_err(|e| SmilesError::syntax(0, e.to_string()))?;
        // aromatic bonds outside rings are single bonds between aromatic atoms
        for i in 0..mol.bonds().len() {
            let b = mol.bonds()[i];
            if b.order == BondOrder::Aromatic && !b.in_ring {
                mol.set_bond_order(i, BondOrder::Single);
            }
        }
        for i in 0..mol.atom_count() {
            let atom = mol.atoms()[i];
            if atom.aromatic && mol.aromatic_bond_count(i) < 2 {
                return Err(SmilesError::Valence {
                    atom: i,
                    msg: "aromatic atom outside an aromatic ring".into(),
                });
            }
            if !self.bracketed[i] {
                let h = default_hydrogens(&mol, i).ok_or_else(|| SmilesError::Valence {
                    atom: i,
                    msg: format!("bond sum {} exceeds every allowed valence", mol.bond_units(i)),
                })?;
                mol.atoms_mut()[i].hydrogens = h;
            }
        }
        ring::perceive_aromaticity(&mut mol);
        if let Some((atom, msg)) = mol.valence_violation() {
            return Err(SmilesError::Valence { atom, msg });
        }
        Ok(mol)
    }
}

/// Hydrogens an unbracketed atom receives from its bonds under the valence
/// model; `None` when no allowed valence fits.
pub(crate) fn default_hydrogens(mol: &Molecule, atom: usize) -> Option<u8> {
    let a = mol.atoms()[atom];
    let Some(el) = a.kind.element() else {
        return Some(0);
    };
    if !el.is_organic_subset() || a.charge != 0 {
        return None;
    }
    let units = mol.bond_units(atom);
    let valences = el.valences();
    if a.aromatic {
        let v = valences[0];
        if units > *valences.last().unwrap() {
            return None;
        }
        return Some(v.saturating_sub(units + 1));
    }
    valences.iter().find(|&&v| v >= units).map(|&v| v - units)
}
