use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::chem::{canonical_smiles, parse_smiles, Molecule};
use crate::error::{Error, Result};

/// One `smiles,target` row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub smiles: String,
    pub target: f64,
}

/// Parsed rows; the row id is the position.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    rows: Vec<Row>,
    molecules: Vec<Molecule>,
    sha256: String,
}

/// Identity of a molecule independent of how its SMILES was written.
pub fn molecule_key(m: &Molecule) -> String {
    let digest = Sha256::digest(canonical_smiles(m).as_bytes());
    hex::encode(&digest[..16])
}

fn content_hash(rows: &[Row]) -> String {
    let mut h = Sha256::new();
    h.update(b"smiles,target\n");
    for r in rows {
        // `{}` on f64 prints the shortest string that reads back exactly
        h.update(format!("{},{}\n", r.smiles, r.target).as_bytes());
    }
    hex::encode(h.finalize())
}

impl Dataset {
    /// Parses every row; errors name the offending (0-based) row.
    pub fn from_rows(name: impl Into<String>, rows: Vec<Row>) -> Result<Dataset> {
        let molecules = rows
            .par_iter()
            .enumerate()
            .map(|(i, r)| {
                if !r.target.is_finite() {
                    return Err(Error::Format(format!("row {i}: target is not finite")));
                }
                parse_smiles(&r.smiles)
                    .map_err(|e| Error::Format(format!("row {i} ({}): {e}", r.smiles)))
            })
            .collect::<Result<Vec<_>>>()?;
        let sha256 = content_hash(&rows);
        Ok(Dataset {
            name: name.into(),
            rows,
            molecules,
            sha256,
        })
    }

    pub fn from_pairs<S: Into<String>>(
        name: impl Into<String>,
        pairs: impl IntoIterator<Item = (S, f64)>,
    ) -> Result<Dataset> {
        let rows = pairs
            .into_iter()
            .map(|(s, t)| Row {
                smiles: s.into(),
                target: t,
            })
            .collect();
        Dataset::from_rows(name, rows)
    }

    pub fn read_csv<R: Read>(name: impl Into<String>, reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "smiles" || &headers[1] != "target" {
            return Err(Error::Format(format!(
                "expected header `smiles,target`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Format(format!("row {i}: {e}")))?;
            let target: f64 = rec[1]
                .parse()
                .map_err(|_| Error::Format(format!("row {i}: bad target {:?}", &rec[1])))?;
            rows.push(Row {
                smiles: rec[0].to_string(),
                target,
            });
        }
        Dataset::from_rows(name, rows)
    }

    pub fn load_csv(path: &Path) -> Result<Dataset> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Dataset::read_csv(name, std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["smiles", "target"])?;
        for r in &self.rows {
            wr.write_record([r.smiles.as_str(), &r.target.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn molecules(&self) -> &[Molecule] {
        &self.molecules
    }

    pub fn molecule(&self, id: usize) -> &Molecule {
        &self.molecules[id]
    }

    pub fn target(&self, id: usize) -> f64 {
        self.rows[id].target
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.target).collect()
    }

    /// Hash of the normalized `smiles,target` serialization.
    pub fn sha256(&self) -> &str {
        &self.sha256
    }

    /// Sorted, deduplicated [`molecule_key`]s of the given rows.
    pub fn keys(&self, ids: &[usize]) -> Vec<String> {
        let mut k: Vec<String> = ids.iter().map(|&i| molecule_key(&self.molecules[i])).collect();
        k.sort();
        k.dedup();
        k
    }

    /// A new dataset holding the given rows, renumbered from 0.
    pub fn subset(&self, ids: &[usize], name: impl Into<String>) -> Dataset {
        let rows: Vec<Row> = ids.iter().map(|&i| self.rows[i].clone()).collect();
        let molecules = ids.iter().map(|&i| self.molecules[i].clone()).collect();
        let sha256 = content_hash(&rows);
        Dataset {
            name: name.into(),
            rows,
            molecules,
            sha256,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_hash() {
        let ds = Dataset::from_pairs("t", [("CCO", 1.5), ("c1ccccc1", -0.1)]).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv("t", buf.as_slice()).unwrap();
        assert_eq!(back.sha256(), ds.sha256());
        assert_eq!(back.rows(), ds.rows());
    }

    #[test]
    fn bad_rows_name_the_row() {
        let err = Dataset::read_csv("t", "smiles,target\nCCO,1\nC(,2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
        let err = Dataset::read_csv("t", "smiles,target\nCCO,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        let err = Dataset::read_csv("t", "smi,y\nCCO,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn keys_ignore_smiles_spelling() {
        let ds = Dataset::from_pairs("t", [("CCO", 1.0), ("OCC", 1.0)]).unwrap();
        assert_eq!(ds.keys(&[0, 1]).len(), 1);
    }
}
