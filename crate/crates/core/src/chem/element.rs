//! The bundled 12-element table.
//!
//! Masses and valences come from `data/masses.csv`, which is compiled into
//! the crate so every build uses the same pinned values.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// Raw contents of the versioned mass table.
pub const MASS_TABLE_CSV: &str = include_str!("../../data/masses.csv");

/// Number of supported elements.
pub const N_ELEMENTS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Element {
    H,
    C,
    N,
    O,
    F,
    P,
    S,
    Cl,
    Br,
    I,
    B,
    Si,
}

struct ElementData {
    mass: f64,
    valences: Vec<u8>,
}

fn table() -> &'static [ElementData; N_ELEMENTS] {
    static TABLE: OnceLock<[ElementData; N_ELEMENTS]> = OnceLock::new();
    TABLE.get_or_init(|| parse_table(MASS_TABLE_CSV).expect("bundled mass table is valid"))
}

fn parse_table(text: &str) -> Result<[ElementData; N_ELEMENTS], String> {
    let mut rows: Vec<Option<ElementData>> = (0..N_ELEMENTS).map(|_| None).collect();
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some("symbol,mass,valences") => {}
        other => return Err(format!("bad header {other:?}")),
    }
    for line in lines {
        let mut cols = line.split(',');
        let (Some(sym), Some(mass), Some(vals), None) =
            (cols.next(), cols.next(), cols.next(), cols.next())
        else {
            return Err(format!("bad row {line:?}"));
        };
        let el = Element::from_symbol(sym).ok_or_else(|| format!("unknown symbol {sym}"))?;
        let mass: f64 = mass.parse().map_err(|e| format!("{sym}: {e}"))?;
        if !(mass > 0.0) {
            return Err(format!("{sym}: non-positive mass"));
        }
        let valences = vals
            .split_whitespace()
            .map(|v| v.parse::<u8>().map_err(|e| format!("{sym}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if valences.is_empty() {
            return Err(format!("{sym}: no valences"));
        }
        let slot = &mut rows[el.index()];
        if slot.is_some() {
            return Err(format!("duplicate symbol {sym}"));
        }
        *slot = Some(ElementData { mass, valences });
    }
    let rows: Vec<ElementData> = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| format!("missing {}", Element::ALL[i])))
        .collect::<Result<_, _>>()?;
    rows.try_into().map_err(|_| "wrong row count".to_string())
}

impl Element {
    /// All elements in slot order.
    pub const ALL: [Element; N_ELEMENTS] = [
        Element::H,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::P,
        Element::S,
        Element::Cl,
        Element::Br,
        Element::I,
        Element::B,
        Element::Si,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
            Element::B => "B",
            Element::Si => "Si",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Element::ALL.iter().copied().find(|e| e.symbol() == s)
    }

    /// Atomic mass in Dalton.
    pub fn mass(self) -> f64 {
        table()[self.index()].mass
    }

    /// Allowed neutral valences, ascending.
    pub fn valences(self) -> &'static [u8] {
        &table()[self.index()].valences
    }

    pub fn atomic_number(self) -> u8 {
        match self {
            Element::H => 1,
            Element::B => 5,
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::F => 9,
            Element::Si => 14,
            Element::P => 15,
            Element::S => 16,
            Element::Cl => 17,
            Element::Br => 35,
            Element::I => 53,
        }
    }

    /// Valences allowed at a formal charge.
    ///
    /// Group 15-17 atoms gain one bond per positive charge (N+ is four-valent),
    /// boron gains one per negative charge and group 14 loses one per unit of
    /// either sign.
    pub fn charged_valences(self, charge: i8) -> Vec<u8> {
        let shift: i32 = match self {
            Element::H => return if charge == 0 { vec![1] } else { vec![0] },
            Element::B => -(charge as i32),
            Element::C | Element::Si => -(charge as i32).abs(),
            _ => charge as i32,
        };
        self.valences()
            .iter()
            .filter_map(|&v| u8::try_from(v as i32 + shift).ok())
            .collect()
    }

    /// Whether the element may be written without brackets in SMILES.
    pub fn is_organic_subset(self) -> bool {
        !matches!(self, Element::H | Element::Si)
    }

    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Mass vector in slot order.
pub fn mass_vector() -> [f64; N_ELEMENTS] {
    Element::ALL.map(Element::mass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_twelve_unique_elements() {
        let mut syms: Vec<_> = Element::ALL.iter().map(|e| e.symbol()).collect();
        syms.sort();
        syms.dedup();
        assert_eq!(syms.len(), 12);
        for e in Element::ALL {
            assert!(e.mass() > 0.0);
            assert_eq!(Element::from_symbol(e.symbol()), Some(e));
        }
    }

    #[test]
    fn silicon_mass_is_pinned() {
        assert_eq!(Element::Si.mass(), 28.086);
    }

    #[test]
    fn charged_valences() {
        assert_eq!(Element::N.charged_valences(1), vec![4, 6]);
        assert_eq!(Element::O.charged_valences(-1), vec![1]);
        assert_eq!(Element::B.charged_valences(-1), vec![4]);
        assert_eq!(Element::C.charged_valences(-1), vec![3]);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(parse_table("symbol,mass,valences\nH,1.0,1\n").is_err());
        let dup = MASS_TABLE_CSV.to_string() + "H,1.0,1\n";
        assert!(parse_table(&dup).is_err());
        let neg = MASS_TABLE_CSV.replace("F,18.998", "F,-1");
        assert!(parse_table(&neg).is_err());
    }
}
