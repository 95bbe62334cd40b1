use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::smiles::parser::ParsedMol;
use crate::smiles::SmilesError;

const MASS_TABLE: &str = include_str!("../../data/atomic_masses.txt");

/// Hydrogen mass used for implicit and bracket hydrogens.
pub const HYDROGEN_MASS: f64 = 1.008;

/// Element symbol → standard atomic mass in g/mol.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicMassTable {
    masses: BTreeMap<String, f64>,
}

impl AtomicMassTable {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut masses = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(sym), Some(mass), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(format!("line {}: expected `symbol mass`", n + 1));
            };
            let mass: f64 = mass.parse().map_err(|e| format!("line {}: {e}", n + 1))?;
            masses.insert(sym.to_string(), mass);
        }
        Ok(Self { masses })
    }

    /// The bundled table.
    pub fn standard() -> &'static AtomicMassTable {
        static TABLE: OnceLock<AtomicMassTable> = OnceLock::new();
        TABLE.get_or_init(|| AtomicMassTable::parse(MASS_TABLE).expect("bundled mass table parses"))
    }

    pub fn mass(&self, symbol: &str) -> Option<f64> {
        self.masses.get(symbol).copied()
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.masses.keys().map(String::as_str)
    }
}

/// Allowed valences, lowest first. Elements without an entry are not checked.
fn valences(element: &str) -> Option<&'static [u32]> {
    Some(match element {
        "H" => &[1],
        "B" => &[3],
        "C" | "Si" => &[4],
        "N" => &[3],
        "O" => &[2],
        "P" | "As" => &[3, 5],
        "S" | "Se" | "Te" => &[2, 4, 6],
        "F" | "Cl" | "Br" | "I" => &[1],
        _ => return None,
    })
}

/// Elements whose aromatic form may donate a lone pair instead of taking a
/// π bond, and therefore carry no extra aromatic valence unit.
fn is_donor(element: &str) -> bool {
    matches!(element, "N" | "P" | "O" | "S" | "Se" | "Te" | "As")
}

fn charge_adjusted(element: &str, v: u32, charge: i32) -> Option<u32> {
    let adj = match element {
        "C" | "Si" => v as i32 - charge.abs(),
        "B" => v as i32 - charge,
        _ => v as i32 + charge,
    };
    u32::try_from(adj).ok()
}

/// Hydrogen count per atom.
///
/// Organic-subset atoms take the lowest allowed valence that fits their bond
/// sum. Aromatic atoms count each aromatic bond as 1 plus one unit for the
/// aromatic system; aromatic N/P/O/S with no room for that unit are read as
/// lone-pair donors with no hydrogens. Bracket atoms keep their written count
/// and are only checked against their (charge-adjusted) maximum valence.
pub fn implicit_hydrogens(mol: &ParsedMol) -> Result<Vec<u32>, SmilesError> {
    let bond_sum = mol.bond_valence();
    mol.atoms
        .iter()
        .zip(&bond_sum)
        .map(|(atom, &sum)| {
            let exceeded = SmilesError::ValenceExceeded {
                position: atom.position,
            };
            if let Some(h) = atom.explicit_h {
                let Some(vals) = valences(&atom.element) else {
                    return Ok(h);
                };
                let max = vals
                    .iter()
                    .filter_map(|&v| charge_adjusted(&atom.element, v, atom.charge))
                    .max()
                    .unwrap_or(0);
                let pi = u32::from(atom.aromatic && !is_donor(&atom.element));
                return if sum + h + pi <= max {
                    Ok(h)
                } else {
                    Err(exceeded)
                };
            }
            let vals = valences(&atom.element).ok_or_else(|| exceeded.clone())?;
            if atom.aromatic {
                if is_donor(&atom.element) {
                    let lowest = vals[0];
                    if sum < lowest {
                        Ok(lowest - sum - 1)
                    } else if vals.iter().any(|&v| v >= sum) {
                        Ok(0)
                    } else {
                        Err(exceeded)
                    }
                } else {
                    vals.iter()
                        .find(|&&v| v > sum)
                        .map(|v| v - sum - 1)
                        .ok_or(exceeded)
                }
            } else {
                vals.iter()
                    .find(|&&v| v >= sum)
                    .map(|v| v - sum)
                    .ok_or(exceeded)
            }
        })
        .collect()
}

/// Σ heavy-atom masses + hydrogens × 1.008.
pub fn molecular_weight(mol: &ParsedMol, table: &AtomicMassTable) -> Result<f64, SmilesError> {
    let mut mw = 0.0;
    for (atom, &h) in mol.atoms.iter().zip(&mol.hydrogens) {
        let m = table
            .mass(&atom.element)
            .ok_or_else(|| SmilesError::UnknownElement(atom.element.clone()))?;
        mw += m + h as f64 * HYDROGEN_MASS;
    }
    Ok(mw)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Descriptors {
    pub heavy_atoms: usize,
    pub ring_closures: usize,
    /// Aromatic heavy atoms / heavy atoms.
    pub aromatic_fraction: f64,
}

pub fn simple_descriptors(mol: &ParsedMol) -> Descriptors {
    let heavy = mol.heavy_atom_count();
    let aromatic = mol
        .atoms
        .iter()
        .filter(|a| a.aromatic && a.element != "H")
        .count();
    Descriptors {
        heavy_atoms: heavy,
        ring_closures: mol.ring_closures.len(),
        aromatic_fraction: if heavy == 0 {
            0.0
        } else {
            aromatic as f64 / heavy as f64
        },
    }
}
