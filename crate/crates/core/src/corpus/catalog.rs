use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Party {
    pub label: String,
    pub pole: String,
    pub pivot_user_id: String,
}

/// The ordered set of parties, their poles and pivot accounts.
///
/// Party order is significant: score vectors and user vectors are laid out
/// in catalog order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CatalogFile", into = "CatalogFile")]
pub struct PartyCatalog {
    parties: Vec<Party>,
    poles: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    parties: Vec<Party>,
}

impl TryFrom<CatalogFile> for PartyCatalog {
    type Error = Error;

    fn try_from(file: CatalogFile) -> Result<Self> {
        PartyCatalog::new(file.parties)
    }
}

impl From<PartyCatalog> for CatalogFile {
    fn from(catalog: PartyCatalog) -> Self {
        CatalogFile {
            parties: catalog.parties,
        }
    }
}

impl PartyCatalog {
    pub fn new(parties: Vec<Party>) -> Result<Self> {
        if parties.len() < 2 {
            return Err(Error::Validation(
                "a catalog needs at least two parties".into(),
            ));
        }
        let mut labels = BTreeSet::new();
        let mut pivots = BTreeSet::new();
        for p in &parties {
            if p.label.is_empty() || p.pole.is_empty() || p.pivot_user_id.is_empty() {
                return Err(Error::Validation(format!(
                    "party entry {:?} has an empty field",
                    p.label
                )));
            }
            if !labels.insert(p.label.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate party label {}",
                    p.label
                )));
            }
            if !pivots.insert(p.pivot_user_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate pivot account {}",
                    p.pivot_user_id
                )));
            }
        }
        let mut poles: Vec<String> = Vec::new();
        for p in &parties {
            if !poles.contains(&p.pole) {
                poles.push(p.pole.clone());
            }
        }
        Ok(PartyCatalog { parties, poles })
    }

    /// Eight parties of the Italian tripolar system.
    pub fn italian() -> Self {
        let rows = [
            ("PRC", "LEFT", "direzioneprc"),
            ("+E", "LEFT", "piu_europa"),
            ("PD", "LEFT", "pdnetwork"),
            ("M5S", "M5S", "Mov5Stelle"),
            ("FI", "RIGHT", "forza_italia"),
            ("LE", "RIGHT", "legasalvini"),
            ("FdI", "RIGHT", "FratellidItaIia"),
            ("CPI", "RIGHT", "casapounditalia"),
        ];
        let parties = rows
            .iter()
            .map(|(label, pole, pivot)| Party {
                label: label.to_string(),
                pole: pole.to_string(),
                pivot_user_id: pivot.to_string(),
            })
            .collect();
        PartyCatalog::new(parties).expect("built-in catalog is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn parties(&self) -> &[Party] {
        &self.parties
    }

    pub fn len(&self) -> usize {
        self.parties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parties.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.parties.iter().map(|p| p.label.clone()).collect()
    }

    /// Pole labels in order of first appearance.
    pub fn poles(&self) -> &[String] {
        &self.poles
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.parties.iter().position(|p| p.label == label)
    }

    pub fn party(&self, label: &str) -> Option<&Party> {
        self.parties.iter().find(|p| p.label == label)
    }

    pub fn pole_of(&self, label: &str) -> Option<&str> {
        self.party(label).map(|p| p.pole.as_str())
    }

    pub fn party_of_pivot(&self, user_id: &str) -> Option<&Party> {
        self.parties.iter().find(|p| p.pivot_user_id == user_id)
    }

    pub fn is_pivot(&self, user_id: &str) -> bool {
        self.party_of_pivot(user_id).is_some()
    }

    /// Catalog with the party order rearranged: position `i` holds the party
    /// previously at `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::invalid("permutation length differs from catalog"));
        }
        let parties = order.iter().map(|&i| self.parties[i].clone()).collect();
        PartyCatalog::new(parties)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn italian_catalog_has_eight_parties_and_three_poles() {
        let c = PartyCatalog::italian();
        assert_eq!(c.len(), 8);
        assert_eq!(c.poles(), &["LEFT", "M5S", "RIGHT"]);
        assert_eq!(c.pole_of("LE"), Some("RIGHT"));
        assert_eq!(c.party_of_pivot("pdnetwork").unwrap().label, "PD");
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let p = |l: &str, v: &str| Party {
            label: l.into(),
            pole: "X".into(),
            pivot_user_id: v.into(),
        };
        assert!(PartyCatalog::new(vec![p("A", "a"), p("A", "b")]).is_err());
        assert!(PartyCatalog::new(vec![p("A", "a"), p("B", "a")]).is_err());
    }

    #[test]
    fn json_round_trip_uses_file_layout() {
        let c = PartyCatalog::italian();
        let json = serde_json::to_value(&c).unwrap();
        assert!(json.get("parties").is_some());
        assert!(json.get("poles").is_none());
        let back: PartyCatalog = serde_json::from_value(json).unwrap();
        assert_eq!(back, c);
    }
}
