use std::collections::BTreeMap;

use crate::smiles::chem::{implicit_hydrogens, AtomicMassTable};
use crate::smiles::lexer::{Token, TokenKind};
use crate::smiles::SmilesError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution toward an atom's valence; aromatic bonds count as 1.
    pub fn valence(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            BondOrder::Single => '-',
            BondOrder::Double => '=',
            BondOrder::Triple => '#',
            BondOrder::Aromatic => ':',
        }
    }

    fn from_lexeme(s: &str) -> Option<Self> {
        match s {
            "-" => Some(BondOrder::Single),
            "=" => Some(BondOrder::Double),
            "#" => Some(BondOrder::Triple),
            ":" => Some(BondOrder::Aromatic),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atom {
    /// Capitalised element symbol (`C` for both `C` and `c`).
    pub element: String,
    pub aromatic: bool,
    pub charge: i32,
    /// H count written inside brackets; `None` for organic-subset atoms.
    pub explicit_h: Option<u32>,
    pub isotope: Option<u32>,
    pub bracket: bool,
    pub position: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedMol {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// Atom pairs joined by ring-closure digits.
    pub ring_closures: Vec<(usize, usize)>,
    /// Total hydrogens per atom: implicit for organic atoms, written for bracket atoms.
    pub hydrogens: Vec<u32>,
}

impl ParsedMol {
    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.element != "H").count()
    }

    /// Sum of bond valence contributions at each atom.
    pub fn bond_valence(&self) -> Vec<u32> {
        let mut v = vec![0; self.atoms.len()];
        for b in &self.bonds {
            v[b.a] += b.order.valence();
            v[b.b] += b.order.valence();
        }
        v
    }
}

struct Builder {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    ring_closures: Vec<(usize, usize)>,
}

impl Builder {
    fn connect(
        &mut self,
        a: usize,
        b: usize,
        order: Option<BondOrder>,
        tok: &Token,
    ) -> Result<(), SmilesError> {
        if a == b
            || self
                .bonds
                .iter()
                .any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a))
        {
            return Err(unexpected(tok));
        }
        let order = order.unwrap_or_else(|| {
            if self.atoms[a].aromatic && self.atoms[b].aromatic {
                BondOrder::Aromatic
            } else {
                BondOrder::Single
            }
        });
        self.bonds.push(Bond { a, b, order });
        Ok(())
    }
}

fn unexpected(tok: &Token) -> SmilesError {
    SmilesError::UnexpectedToken {
        position: tok.position,
        lexeme: tok.lexeme.clone(),
    }
}

/// Recursive structure of the grammar is tracked with an explicit branch
/// stack; semantic checks (balanced branches, matched rings, valence) follow.
pub fn parse(tokens: &[Token]) -> Result<ParsedMol, SmilesError> {
    if tokens.is_empty() {
        return Err(SmilesError::Empty);
    }
    let table = AtomicMassTable::standard();
    let mut m = Builder {
        atoms: Vec::new(),
        bonds: Vec::new(),
        ring_closures: Vec::new(),
    };
    let mut prev: Option<usize> = None;
    let mut pending: Option<BondOrder> = None;
    // (atom the branch hangs from, '(' position, atom count at open)
    let mut branches: Vec<(usize, usize, usize)> = Vec::new();
    // ring number -> (atom, bond written at the opening, position)
    let mut rings: BTreeMap<u32, (usize, Option<BondOrder>, usize)> = BTreeMap::new();

    for tok in tokens {
        match tok.kind {
            TokenKind::Atom | TokenKind::BracketAtom => {
                let atom = if tok.kind == TokenKind::Atom {
                    organic_atom(tok)
                } else {
                    bracket_atom(tok, table)?
                };
                m.atoms.push(atom);
                let idx = m.atoms.len() - 1;
                if let Some(p) = prev {
                    m.connect(p, idx, pending.take(), tok)?;
                } else if pending.is_some() {
                    return Err(unexpected(tok));
                }
                prev = Some(idx);
            }
            TokenKind::Bond => {
                if prev.is_none() || pending.is_some() {
                    return Err(unexpected(tok));
                }
                pending = BondOrder::from_lexeme(&tok.lexeme);
            }
            TokenKind::BranchOpen => {
                let Some(p) = prev else {
                    return Err(unexpected(tok));
                };
                if pending.is_some() {
                    return Err(unexpected(tok));
                }
                branches.push((p, tok.position, m.atoms.len()));
            }
            TokenKind::BranchClose => {
                let Some((from, _, count)) = branches.pop() else {
                    return Err(SmilesError::UnbalancedBranch {
                        position: tok.position,
                    });
                };
                if pending.is_some() || m.atoms.len() == count {
                    return Err(unexpected(tok));
                }
                prev = Some(from);
            }
            TokenKind::RingClosure => {
                let Some(p) = prev else {
                    return Err(unexpected(tok));
                };
                let num: u32 = tok
                    .lexeme
                    .trim_start_matches('%')
                    .parse()
                    .map_err(|_| unexpected(tok))?;
                match rings.remove(&num) {
                    Some((open, open_bond, _)) => {
                        let order = match (open_bond, pending.take()) {
                            (Some(a), Some(b)) if a != b => return Err(unexpected(tok)),
                            (a, b) => a.or(b),
                        };
                        m.connect(open, p, order, tok)?;
                        m.ring_closures.push((open, p));
                    }
                    None => {
                        rings.insert(num, (p, pending.take(), tok.position));
                    }
                }
            }
            TokenKind::Unsupported => {
                return Err(SmilesError::Unsupported {
                    position: tok.position,
                    feature: tok.lexeme.clone(),
                });
            }
        }
    }

    if let Some(&(_, pos, _)) = branches.first() {
        return Err(SmilesError::UnbalancedBranch { position: pos });
    }
    if let Some(pos) = rings.values().map(|r| r.2).min() {
        return Err(SmilesError::UnclosedRing { position: pos });
    }
    if pending.is_some() {
        let last = tokens.last().expect("non-empty");
        return Err(unexpected(last));
    }
    if m.atoms.is_empty() {
        return Err(unexpected(&tokens[0]));
    }
    let mut mol = ParsedMol {
        atoms: m.atoms,
        bonds: m.bonds,
        ring_closures: m.ring_closures,
        hydrogens: Vec::new(),
    };
    mol.hydrogens = implicit_hydrogens(&mol)?;
    Ok(mol)
}

fn organic_atom(tok: &Token) -> Atom {
    let aromatic = tok
        .lexeme
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_lowercase());
    let element = if aromatic {
        tok.lexeme.to_ascii_uppercase()
    } else {
        tok.lexeme.clone()
    };
    Atom {
        element,
        aromatic,
        charge: 0,
        explicit_h: None,
        isotope: None,
        bracket: false,
        position: tok.position,
    }
}

/// `[` isotope? symbol chirality? hcount? charge? class? `]`
fn bracket_atom(tok: &Token, table: &AtomicMassTable) -> Result<Atom, SmilesError> {
    let inner = &tok.lexeme[1..tok.lexeme.len() - 1];
    let b = inner.as_bytes();
    let base = tok.position + 1;
    let err = |i: usize| SmilesError::UnexpectedToken {
        position: base + i,
        lexeme: tok.lexeme.clone(),
    };
    let mut i = 0;

    let digits = |i: &mut usize| -> Option<u32> {
        let start = *i;
        while *i < b.len() && b[*i].is_ascii_digit() {
            *i += 1;
        }
        (start < *i)
            .then(|| inner[start..*i].parse().ok())
            .flatten()
    };

    let isotope = digits(&mut i);

    let (element, aromatic) = match b.get(i) {
        Some(c) if c.is_ascii_uppercase() => {
            let two = b
                .get(i + 1)
                .filter(|n| n.is_ascii_lowercase())
                .map(|_| &inner[i..i + 2]);
            match two {
                Some(sym) if table.mass(sym).is_some() => {
                    i += 2;
                    (sym.to_string(), false)
                }
                _ => {
                    i += 1;
                    (inner[i - 1..i].to_string(), false)
                }
            }
        }
        Some(c) if c.is_ascii_lowercase() => {
            let two = inner.get(i..i + 2);
            match two {
                Some(s @ ("se" | "as" | "te")) => {
                    i += 2;
                    (capitalise(s), true)
                }
                _ => match c {
                    b'b' | b'c' | b'n' | b'o' | b'p' | b's' => {
                        i += 1;
                        ((*c as char).to_ascii_uppercase().to_string(), true)
                    }
                    _ => return Err(err(i)),
                },
            }
        }
        _ => return Err(err(i)),
    };
    if table.mass(&element).is_none() {
        return Err(err(i.saturating_sub(element.len())));
    }

    if b.get(i) == Some(&b'@') {
        return Err(SmilesError::Unsupported {
            position: base + i,
            feature: "@".into(),
        });
    }

    let mut explicit_h = 0;
    if b.get(i) == Some(&b'H') {
        i += 1;
        explicit_h = digits(&mut i).unwrap_or(1);
    }

    let mut charge = 0i32;
    if let Some(&sign) = b.get(i).filter(|c| **c == b'+' || **c == b'-') {
        let unit = if sign == b'+' { 1 } else { -1 };
        i += 1;
        let mut mag = 1;
        if let Some(n) = digits(&mut i) {
            mag = n as i32;
        } else {
            while b.get(i) == Some(&sign) {
                mag += 1;
                i += 1;
            }
        }
        charge = unit * mag;
    }

    if b.get(i) == Some(&b':') {
        i += 1;
        if digits(&mut i).is_none() {
            return Err(err(i));
        }
    }
    if i != b.len() {
        return Err(err(i));
    }

    Ok(Atom {
        element,
        aromatic,
        charge,
        explicit_h: Some(explicit_h),
        isotope,
        bracket: true,
        position: tok.position,
    })
}

fn capitalise(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}
