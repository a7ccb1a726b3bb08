//! A practical subset of SMILES: organic-subset and bracket atoms, bond
//! symbols, branches, ring closures (including `%nn`) and dot-separated
//! components. Stereo marks and isotopes are accepted and dropped.
//!
//! No kekulization or aromaticity perception is done; lowercase atoms are
//! flagged aromatic exactly as written.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    H,
    B,
    C,
    N,
    O,
    F,
    Si,
    P,
    S,
    Cl,
    Br,
    I,
}

impl Element {
    pub const ALL: [Element; 12] = [
        Element::H,
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::Si,
        Element::P,
        Element::S,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::Si => "Si",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(symbol: &str) -> Option<Element> {
        Element::ALL.into_iter().find(|e| e.symbol() == symbol)
    }

    /// Valence used to fill implicit hydrogens on organic-subset atoms.
    pub fn default_valence(self) -> u32 {
        match self {
            Element::H => 1,
            Element::B => 3,
            Element::C => 4,
            Element::N => 3,
            Element::O => 2,
            Element::F => 1,
            Element::Si => 4,
            Element::P => 3,
            Element::S => 2,
            Element::Cl => 1,
            Element::Br => 1,
            Element::I => 1,
        }
    }

    pub fn is_halogen(self) -> bool {
        matches!(self, Element::F | Element::Cl | Element::Br | Element::I)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// Hydrogen count written inside a bracket atom; `None` for organic-subset atoms.
    pub explicit_h: Option<u8>,
    pub index: usize,
}

impl Atom {
    pub fn is_bracket(&self) -> bool {
        self.explicit_h.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Bond order times two, so aromatic (1.5) stays integral.
    pub fn doubled(self) -> u32 {
        match self {
            BondOrder::Single => 2,
            BondOrder::Double => 4,
            BondOrder::Triple => 6,
            BondOrder::Aromatic => 3,
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
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// One connected component of a SMILES string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolecularGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// `adjacency[i]` lists `(neighbor, bond index)` in bond creation order.
    pub adjacency: Vec<Vec<(usize, usize)>>,
    pub source: String,
    /// Set when an organic-subset atom carries more bond order than its
    /// default valence allows (e.g. `O(C)(C)(C)C`).
    pub valence_warning: bool,
}

impl MolecularGraph {
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn neighbors(&self, atom: usize) -> impl Iterator<Item = (usize, &Bond)> + '_ {
        self.adjacency[atom]
            .iter()
            .map(move |&(n, b)| (n, &self.bonds[b]))
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, bi)| &self.bonds[bi])
    }

    pub fn implicit_hydrogens(&self, atom: usize) -> u32 {
        implicit_hydrogens(self, atom)
    }

    pub fn total_hydrogens(&self) -> u32 {
        (0..self.atoms.len())
            .map(|i| self.implicit_hydrogens(i))
            .sum()
    }

    /// Marks every bond that lies on a cycle (i.e. is not a bridge).
    pub fn ring_bonds(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let mut in_ring = vec![false; self.bonds.len()];
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut timer = 0usize;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // iterative DFS: (atom, parent bond, next adjacency slot)
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(&mut (v, parent_bond, ref mut slot)) = stack.last_mut() {
                if *slot < self.adjacency[v].len() {
                    let (w, bi) = self.adjacency[v][*slot];
                    *slot += 1;
                    if bi == parent_bond {
                        continue;
                    }
                    if disc[w] == usize::MAX {
                        disc[w] = timer;
                        low[w] = timer;
                        timer += 1;
                        stack.push((w, bi, 0));
                    } else {
                        // back edge: closes a cycle
                        in_ring[bi] = true;
                        low[v] = low[v].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(u, _, _)) = stack.last() {
                        low[u] = low[u].min(low[v]);
                        if low[v] <= disc[u] {
                            in_ring[parent_bond] = true;
                        }
                    }
                }
            }
        }
        in_ring
    }
}

/// Combines components into one graph with re-numbered atoms.
pub fn disjoint_union(graphs: &[MolecularGraph]) -> MolecularGraph {
    if graphs.len() == 1 {
        return graphs[0].clone();
    }
    let mut out = MolecularGraph {
        atoms: Vec::new(),
        bonds: Vec::new(),
        adjacency: Vec::new(),
        source: graphs
            .iter()
            .map(|g| g.source.as_str())
            .collect::<Vec<_>>()
            .join("."),
        valence_warning: graphs.iter().any(|g| g.valence_warning),
    };
    for g in graphs {
        let atom_base = out.atoms.len();
        let bond_base = out.bonds.len();
        out.atoms.extend(g.atoms.iter().map(|a| Atom {
            index: a.index + atom_base,
            ..a.clone()
        }));
        out.bonds.extend(g.bonds.iter().map(|b| Bond {
            a: b.a + atom_base,
            b: b.b + atom_base,
            order: b.order,
        }));
        out.adjacency.extend(g.adjacency.iter().map(|adj| {
            adj.iter()
                .map(|&(n, bi)| (n + atom_base, bi + bond_base))
                .collect()
        }));
    }
    out
}

/// Hydrogens attached to `atom`: the written count for bracket atoms, otherwise
/// the default valence minus the (floored) bond-order sum, clamped at zero.
pub fn implicit_hydrogens(graph: &MolecularGraph, atom: usize) -> u32 {
    let a = &graph.atoms[atom];
    if let Some(h) = a.explicit_h {
        return u32::from(h);
    }
    let doubled: u32 = graph.neighbors(atom).map(|(_, b)| b.order.doubled()).sum();
    a.element.default_valence().saturating_sub(doubled / 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SmilesErrorKind {
    #[error("empty input")]
    EmptyInput,
    #[error("ring closure opened but never closed")]
    UnclosedRing,
    #[error("unbalanced parenthesis")]
    UnbalancedParen,
    #[error("unknown or unsupported element")]
    UnknownElement,
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("bond symbol not followed by an atom")]
    DanglingBond,
    #[error("conflicting bond symbols on ring closure")]
    RingBondMismatch,
    #[error("atoms already bonded")]
    DuplicateBond,
    #[error("malformed bracket atom")]
    InvalidBracket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{kind} at offset {offset}")]
pub struct SmilesError {
    /// Byte offset into the input.
    pub offset: usize,
    pub kind: SmilesErrorKind,
}

impl SmilesError {
    fn new(offset: usize, kind: SmilesErrorKind) -> Self {
        SmilesError { offset, kind }
    }
}

/// Parses `smiles` into one graph per dot-separated component.
pub fn parse(smiles: &str) -> Result<Vec<MolecularGraph>, SmilesError> {
    if smiles.is_empty() {
        return Err(SmilesError::new(0, SmilesErrorKind::EmptyInput));
    }
    Parser::new(smiles).run()
}

/// Convenience for inputs expected to hold exactly one component.
pub fn parse_single(smiles: &str) -> Result<MolecularGraph, SmilesError> {
    let mut graphs = parse(smiles)?;
    if graphs.len() != 1 {
        let dot = smiles.find('.').unwrap_or(0);
        return Err(SmilesError::new(dot, SmilesErrorKind::UnexpectedChar('.')));
    }
    Ok(graphs.remove(0))
}

// Every element symbol, used only to tell "not supported" from "not a symbol".
const PERIODIC_TABLE: &[&str] = &[
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

struct OpenRing {
    atom: usize,
    order: Option<BondOrder>,
    offset: usize,
}

#[derive(Default)]
struct Component {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
    start: usize,
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    comp: Component,
    prev: Option<usize>,
    // (atom the branch hangs from, offset of '(', atom count when opened)
    branches: Vec<(usize, usize, usize)>,
    pending: Option<(BondOrder, usize)>,
    rings: BTreeMap<u32, OpenRing>,
    out: Vec<MolecularGraph>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            text,
            bytes: text.as_bytes(),
            pos: 0,
            comp: Component::default(),
            prev: None,
            branches: Vec::new(),
            pending: None,
            rings: BTreeMap::new(),
            out: Vec::new(),
        }
    }

    fn err<T>(&self, offset: usize, kind: SmilesErrorKind) -> Result<T, SmilesError> {
        Err(SmilesError::new(offset, kind))
    }

    fn run(mut self) -> Result<Vec<MolecularGraph>, SmilesError> {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            let at = self.pos;
            match c {
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.attach(atom, at)?;
                }
                b'A'..=b'Z' | b'a'..=b'z' => {
                    let atom = self.organic_atom()?;
                    self.attach(atom, at)?;
                }
                b'(' => {
                    let Some(prev) = self.prev else {
                        return self.err(at, SmilesErrorKind::UnexpectedChar('('));
                    };
                    if self.pending.is_some() {
                        return self.err(at, SmilesErrorKind::DanglingBond);
                    }
                    self.branches.push((prev, at, self.comp.atoms.len()));
                    self.pos += 1;
                }
                b')' => {
                    let Some((parent, _, count)) = self.branches.pop() else {
                        return self.err(at, SmilesErrorKind::UnbalancedParen);
                    };
                    if let Some((_, off)) = self.pending {
                        return self.err(off, SmilesErrorKind::DanglingBond);
                    }
                    if count == self.comp.atoms.len() {
                        return self.err(at, SmilesErrorKind::UnexpectedChar(')'));
                    }
                    self.prev = Some(parent);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.prev.is_none() {
                        return self.err(at, SmilesErrorKind::DanglingBond);
                    }
                    if self.pending.is_some() {
                        return self.err(at, SmilesErrorKind::UnexpectedChar(c as char));
                    }
                    let order = match c {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b':' => BondOrder::Aromatic,
                        _ => BondOrder::Single,
                    };
                    self.pending = Some((order, at));
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    self.pos += 1;
                    self.ring_closure(u32::from(c - b'0'), at)?;
                }
                b'%' => {
                    let digits = self.bytes.get(at + 1..at + 3);
                    match digits {
                        Some(d) if d.iter().all(u8::is_ascii_digit) => {
                            let num = u32::from(d[0] - b'0') * 10 + u32::from(d[1] - b'0');
                            self.pos += 3;
                            self.ring_closure(num, at)?;
                        }
                        _ => return self.err(at, SmilesErrorKind::UnexpectedChar('%')),
                    }
                }
                b'.' => {
                    self.finish_component(at)?;
                    self.pos += 1;
                    self.comp = Component {
                        start: self.pos,
                        ..Component::default()
                    };
                    self.prev = None;
                }
                _ => {
                    let ch = self.text[at..].chars().next().unwrap_or('?');
                    return self.err(at, SmilesErrorKind::UnexpectedChar(ch));
                }
            }
        }
        let end = self.bytes.len();
        self.finish_component(end)?;
        Ok(self.out)
    }

    fn finish_component(&mut self, at: usize) -> Result<(), SmilesError> {
        if let Some((_, off)) = self.pending {
            return self.err(off, SmilesErrorKind::DanglingBond);
        }
        if let Some(&(_, off, _)) = self.branches.first() {
            return self.err(off, SmilesErrorKind::UnbalancedParen);
        }
        if let Some(first) = self.rings.values().map(|r| r.offset).min() {
            return self.err(first, SmilesErrorKind::UnclosedRing);
        }
        if self.comp.atoms.is_empty() {
            // an empty trailing component is reported at the dot that opened it
            let off = if at >= self.bytes.len() { at.saturating_sub(1) } else { at };
            return self.err(off, SmilesErrorKind::EmptyInput);
        }
        let comp = std::mem::take(&mut self.comp);
        let mut graph = MolecularGraph {
            atoms: comp.atoms,
            bonds: comp.bonds,
            adjacency: comp.adjacency,
            source: self.text[comp.start..at].to_string(),
            valence_warning: false,
        };
        graph.valence_warning = (0..graph.atoms.len()).any(|i| {
            let a = &graph.atoms[i];
            if a.is_bracket() {
                return false;
            }
            let doubled: u32 = graph.neighbors(i).map(|(_, b)| b.order.doubled()).sum();
            doubled / 2 > a.element.default_valence()
        });
        self.out.push(graph);
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let at = self.pos;
        let c = self.bytes[at];
        let next = self.bytes.get(at + 1).copied();
        let (element, aromatic, len) = match (c, next) {
            (b'C', Some(b'l')) => (Element::Cl, false, 2),
            (b'B', Some(b'r')) => (Element::Br, false, 2),
            (b'B', _) => (Element::B, false, 1),
            (b'C', _) => (Element::C, false, 1),
            (b'N', _) => (Element::N, false, 1),
            (b'O', _) => (Element::O, false, 1),
            (b'P', _) => (Element::P, false, 1),
            (b'S', _) => (Element::S, false, 1),
            (b'F', _) => (Element::F, false, 1),
            (b'I', _) => (Element::I, false, 1),
            (b'b', _) => (Element::B, true, 1),
            (b'c', _) => (Element::C, true, 1),
            (b'n', _) => (Element::N, true, 1),
            (b'o', _) => (Element::O, true, 1),
            (b'p', _) => (Element::P, true, 1),
            (b's', _) => (Element::S, true, 1),
            _ => return self.err(at, SmilesErrorKind::UnknownElement),
        };
        self.pos += len;
        Ok(Atom {
            element,
            aromatic,
            formal_charge: 0,
            explicit_h: None,
            index: 0,
        })
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        let close = match self.text[open..].find(']') {
            Some(rel) => open + rel,
            None => return self.err(open, SmilesErrorKind::InvalidBracket),
        };
        let body = &self.bytes[..close];
        let mut i = open + 1;

        // isotope (ignored)
        while i < close && body[i].is_ascii_digit() {
            i += 1;
        }

        let sym_at = i;
        if i >= close {
            return self.err(open, SmilesErrorKind::InvalidBracket);
        }
        let (element, aromatic) = if body[i].is_ascii_uppercase() {
            let two = (i + 1 < close && body[i + 1].is_ascii_lowercase())
                .then(|| &self.text[i..i + 2]);
            match two {
                Some(s) if Element::from_symbol(s).is_some() => {
                    i += 2;
                    (Element::from_symbol(s).unwrap(), false)
                }
                Some(s) if PERIODIC_TABLE.contains(&s) => {
                    return self.err(sym_at, SmilesErrorKind::UnknownElement);
                }
                _ => {
                    let one = &self.text[i..i + 1];
                    match Element::from_symbol(one) {
                        Some(e) => {
                            i += 1;
                            (e, false)
                        }
                        None => return self.err(sym_at, SmilesErrorKind::UnknownElement),
                    }
                }
            }
        } else if body[i].is_ascii_lowercase() {
            let e = match body[i] {
                b'b' => Element::B,
                b'c' => Element::C,
                b'n' => Element::N,
                b'o' => Element::O,
                b'p' => Element::P,
                b's' => Element::S,
                _ => return self.err(sym_at, SmilesErrorKind::UnknownElement),
            };
            if i + 1 < close && body[i + 1].is_ascii_lowercase() {
                // se, as, ...
                return self.err(sym_at, SmilesErrorKind::UnknownElement);
            }
            i += 1;
            (e, true)
        } else {
            return self.err(sym_at, SmilesErrorKind::InvalidBracket);
        };

        // chirality (ignored)
        while i < close && body[i] == b'@' {
            i += 1;
        }

        let mut h = 0u8;
        if i < close && body[i] == b'H' {
            i += 1;
            let start = i;
            while i < close && body[i].is_ascii_digit() {
                i += 1;
            }
            h = if start == i {
                1
            } else {
                match self.text[start..i].parse::<u8>() {
                    Ok(v) => v,
                    Err(_) => return self.err(start, SmilesErrorKind::InvalidBracket),
                }
            };
        }

        let mut charge: i32 = 0;
        if i < close && (body[i] == b'+' || body[i] == b'-') {
            let sign = if body[i] == b'+' { 1 } else { -1 };
            let sign_byte = body[i];
            i += 1;
            let start = i;
            while i < close && body[i].is_ascii_digit() {
                i += 1;
            }
            if start < i {
                charge = match self.text[start..i].parse::<i32>() {
                    Ok(v) if v <= 15 => sign * v,
                    _ => return self.err(start, SmilesErrorKind::InvalidBracket),
                };
            } else {
                let mut mag = 1;
                while i < close && body[i] == sign_byte {
                    mag += 1;
                    i += 1;
                }
                charge = sign * mag;
            }
        }

        // atom class (ignored)
        if i < close && body[i] == b':' {
            i += 1;
            let start = i;
            while i < close && body[i].is_ascii_digit() {
                i += 1;
            }
            if start == i {
                return self.err(start, SmilesErrorKind::InvalidBracket);
            }
        }

        if i != close {
            return self.err(i, SmilesErrorKind::InvalidBracket);
        }
        self.pos = close + 1;
        Ok(Atom {
            element,
            aromatic,
            formal_charge: charge as i8,
            explicit_h: Some(h),
            index: 0,
        })
    }

    fn attach(&mut self, mut atom: Atom, at: usize) -> Result<(), SmilesError> {
        let idx = self.comp.atoms.len();
        atom.index = idx;
        let aromatic = atom.aromatic;
        self.comp.atoms.push(atom);
        self.comp.adjacency.push(Vec::new());
        match self.prev {
            Some(prev) => {
                let order = match self.pending.take() {
                    Some((o, _)) => o,
                    None => self.default_order(prev, aromatic),
                };
                self.add_bond(prev, idx, order, at)?;
            }
            None => {
                if let Some((_, off)) = self.pending {
                    return self.err(off, SmilesErrorKind::DanglingBond);
                }
            }
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn default_order(&self, prev: usize, aromatic: bool) -> BondOrder {
        if aromatic && self.comp.atoms[prev].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn add_bond(&mut self, a: usize, b: usize, order: BondOrder, at: usize) -> Result<(), SmilesError> {
        if a == b || self.comp.adjacency[a].iter().any(|&(n, _)| n == b) {
            return self.err(at, SmilesErrorKind::DuplicateBond);
        }
        let bi = self.comp.bonds.len();
        self.comp.bonds.push(Bond { a, b, order });
        self.comp.adjacency[a].push((b, bi));
        self.comp.adjacency[b].push((a, bi));
        Ok(())
    }

    fn ring_closure(&mut self, num: u32, at: usize) -> Result<(), SmilesError> {
        let Some(prev) = self.prev else {
            return self.err(at, SmilesErrorKind::UnexpectedChar(self.bytes[at] as char));
        };
        let written = self.pending.take().map(|(o, _)| o);
        match self.rings.remove(&num) {
            Some(open) => {
                let order = match (open.order, written) {
                    (Some(x), Some(y)) if x != y => {
                        return self.err(at, SmilesErrorKind::RingBondMismatch)
                    }
                    (Some(x), _) | (None, Some(x)) => x,
                    (None, None) => {
                        self.default_order(open.atom, self.comp.atoms[prev].aromatic)
                    }
                };
                self.add_bond(open.atom, prev, order, at)
            }
            None => {
                self.rings.insert(
                    num,
                    OpenRing {
                        atom: prev,
                        order: written,
                        offset: at,
                    },
                );
                Ok(())
            }
        }
    }
}
