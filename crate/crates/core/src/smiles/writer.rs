use std::collections::BTreeSet;
use std::fmt::Write;

use crate::smiles::parser::{Atom, BondOrder, ParsedMol};

/// Renders a parsed molecule as SMILES by depth-first traversal from atom 0.
///
/// Non-tree edges become ring closures. The output re-parses to the same atom
/// and bond multisets; it is not canonical.
pub fn to_smiles(mol: &ParsedMol) -> String {
    let n = mol.atoms.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, b) in mol.bonds.iter().enumerate() {
        adj[b.a].push((b.b, i));
        adj[b.b].push((b.a, i));
    }

    // Pass 1: spanning forest, children in adjacency order.
    let mut visited = vec![false; n];
    let mut tree_edge = vec![false; mol.bonds.len()];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut roots = Vec::new();
    for root in 0..n {
        if visited[root] {
            continue;
        }
        roots.push(root);
        dfs_tree(
            root,
            &adj,
            &mut visited,
            &mut tree_edge,
            &mut children,
            &mut order,
        );
    }
    let mut rank = vec![0; n];
    for (r, &a) in order.iter().enumerate() {
        rank[a] = r;
    }

    // Ring bonds incident to each atom, opened by the earlier-visited end.
    let mut ring_at: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, b) in mol.bonds.iter().enumerate() {
        if !tree_edge[i] {
            ring_at[b.a].push(i);
            ring_at[b.b].push(i);
        }
    }
    for list in ring_at.iter_mut() {
        list.sort_by_key(|&i| {
            let b = &mol.bonds[i];
            (rank[b.a].min(rank[b.b]), rank[b.a].max(rank[b.b]))
        });
    }

    let mut w = Writer {
        mol,
        children: &children,
        ring_at: &ring_at,
        rank: &rank,
        open: vec![None; mol.bonds.len()],
        free: (1..100).collect(),
        out: String::new(),
    };
    for (k, &root) in roots.iter().enumerate() {
        if k > 0 {
            w.out.push('.');
        }
        w.emit(root);
    }
    w.out
}

fn dfs_tree(
    start: usize,
    adj: &[Vec<(usize, usize)>],
    visited: &mut [bool],
    tree_edge: &mut [bool],
    children: &mut [Vec<(usize, usize)>],
    order: &mut Vec<usize>,
) {
    visited[start] = true;
    order.push(start);
    for &(nb, bond) in &adj[start] {
        if !visited[nb] {
            tree_edge[bond] = true;
            children[start].push((nb, bond));
            dfs_tree(nb, adj, visited, tree_edge, children, order);
        }
    }
}

struct Writer<'a> {
    mol: &'a ParsedMol,
    children: &'a [Vec<(usize, usize)>],
    ring_at: &'a [Vec<usize>],
    rank: &'a [usize],
    open: Vec<Option<u32>>,
    free: BTreeSet<u32>,
    out: String,
}

impl Writer<'_> {
    fn emit(&mut self, atom: usize) {
        write_atom(&mut self.out, &self.mol.atoms[atom]);
        for &bi in &self.ring_at[atom] {
            let b = self.mol.bonds[bi];
            let other = if b.a == atom { b.b } else { b.a };
            match self.open[bi] {
                Some(num) => {
                    self.free.insert(num);
                    write_ring(&mut self.out, num);
                }
                None => {
                    debug_assert!(self.rank[atom] < self.rank[other]);
                    let num = self.free.pop_first().expect("at most 99 open rings");
                    self.open[bi] = Some(num);
                    self.bond_symbol(bi);
                    write_ring(&mut self.out, num);
                }
            }
        }
        let kids = &self.children[atom];
        for (k, &(child, bond)) in kids.iter().enumerate() {
            let last = k + 1 == kids.len();
            if !last {
                self.out.push('(');
            }
            self.bond_symbol(bond);
            self.emit(child);
            if !last {
                self.out.push(')');
            }
        }
    }

    fn bond_symbol(&mut self, bi: usize) {
        let b = self.mol.bonds[bi];
        let both_aromatic = self.mol.atoms[b.a].aromatic && self.mol.atoms[b.b].aromatic;
        let implied = if both_aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        };
        if b.order != implied {
            self.out.push(b.order.symbol());
        }
    }
}

fn write_ring(out: &mut String, num: u32) {
    if num < 10 {
        let _ = write!(out, "{num}");
    } else {
        let _ = write!(out, "%{num}");
    }
}

fn write_atom(out: &mut String, a: &Atom) {
    let symbol = if a.aromatic {
        a.element.to_ascii_lowercase()
    } else {
        a.element.clone()
    };
    if !a.bracket {
        out.push_str(&symbol);
        return;
    }
    out.push('[');
    if let Some(iso) = a.isotope {
        let _ = write!(out, "{iso}");
    }
    out.push_str(&symbol);
    match a.explicit_h {
        Some(0) | None => {}
        Some(1) => out.push('H'),
        Some(h) => {
            let _ = write!(out, "H{h}");
        }
    }
    match a.charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => {
            let _ = write!(out, "+{c}");
        }
        c => {
            let _ = write!(out, "-{}", -c);
        }
    }
    out.push(']');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse_smiles;

    fn signature(m: &ParsedMol) -> (Vec<String>, Vec<BondOrder>, Vec<u32>) {
        let mut el: Vec<String> = m
            .atoms
            .iter()
            .map(|a| format!("{}{}{}", a.element, a.aromatic, a.charge))
            .collect();
        el.sort();
        let mut bo: Vec<BondOrder> = m.bonds.iter().map(|b| b.order).collect();
        bo.sort();
        let mut h = m.hydrogens.clone();
        h.sort();
        (el, bo, h)
    }

    #[test]
    fn round_trips_preserve_multisets() {
        for s in [
            "c1ccccc1",
            "CC(=O)Oc1ccccc1C(=O)O",
            "C1CC2CCC1C2",
            "c1ccc2ccccc2c1",
            "N#CC(Cl)(Br)C=C",
            "[NH4+]",
            "C[N+](C)(C)C",
            "c1ccccc1-c1ccccc1",
            "O=C1CCCCC1",
            "C%11CC%11",
        ] {
            let m = parse_smiles(s).unwrap();
            let out = to_smiles(&m);
            let back = parse_smiles(&out).unwrap_or_else(|e| panic!("{s} -> {out}: {e}"));
            assert_eq!(signature(&m), signature(&back), "{s} -> {out}");
        }
    }

    #[test]
    fn chain_is_written_plainly() {
        assert_eq!(to_smiles(&parse_smiles("CCO").unwrap()), "CCO");
        assert_eq!(to_smiles(&parse_smiles("CC(C)O").unwrap()), "CC(C)O");
    }
}
