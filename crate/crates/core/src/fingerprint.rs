//! Bit-vector fingerprints over molecular graphs.
//!
//! Two methods are provided: hashed linear paths (every simple path up to a
//! length, canonicalized and hashed into a fixed-width bit vector) and a small
//! curated key set of substructures relevant to atmospheric molecules.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::smiles::{self, BondOrder, Element, MolecularGraph, SmilesError};

pub const DEFAULT_N_BITS: u32 = 2048;
pub const DEFAULT_MAX_LEN: usize = 7;
pub const ATMO_KEYS_VERSION: &str = "atmokeys-v1";

const FNV_OFFSET: u64 = 14695981039346656037;
const FNV_PRIME: u64 = 1099511628211;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FingerprintError {
    #[error("invalid fingerprint configuration: {0}")]
    InvalidConfig(String),
    #[error("molecule has no atoms")]
    EmptyGraph,
    #[error("fingerprint lengths differ ({0} vs {1})")]
    LengthMismatch(u32, u32),
    #[error(transparent)]
    Smiles(#[from] SmilesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathConfig {
    /// Longest path, counted in bonds.
    pub max_len: usize,
    pub n_bits: u32,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            max_len: DEFAULT_MAX_LEN,
            n_bits: DEFAULT_N_BITS,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<(), FingerprintError> {
        if self.max_len < 1 {
            return Err(FingerprintError::InvalidConfig("max_len must be at least 1".into()));
        }
        if self.n_bits < 64 || !self.n_bits.is_power_of_two() {
            return Err(FingerprintError::InvalidConfig(format!(
                "n_bits must be a power of two >= 64, got {}",
                self.n_bits
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FingerprintMethod {
    HashedPath,
    AtmoKeys,
}

/// Method plus the parameters that produced a fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum FingerprintSpec {
    HashedPath(PathConfig),
    AtmoKeys { version: String },
}

impl FingerprintSpec {
    pub fn atmo_keys() -> Self {
        FingerprintSpec::AtmoKeys {
            version: ATMO_KEYS_VERSION.to_string(),
        }
    }

    pub fn method(&self) -> FingerprintMethod {
        match self {
            FingerprintSpec::HashedPath(_) => FingerprintMethod::HashedPath,
            FingerprintSpec::AtmoKeys { .. } => FingerprintMethod::AtmoKeys,
        }
    }

    pub fn n_bits(&self) -> u32 {
        match self {
            FingerprintSpec::HashedPath(cfg) => cfg.n_bits,
            FingerprintSpec::AtmoKeys { .. } => ATMO_KEY_NAMES.len() as u32,
        }
    }

    pub fn validate(&self) -> Result<(), FingerprintError> {
        match self {
            FingerprintSpec::HashedPath(cfg) => cfg.validate(),
            FingerprintSpec::AtmoKeys { version } if version == ATMO_KEYS_VERSION => Ok(()),
            FingerprintSpec::AtmoKeys { version } => Err(FingerprintError::InvalidConfig(
                format!("unknown key set version {version:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    /// Sorted, duplicate-free set positions, each `< n_bits`.
    pub bits: Vec<u32>,
    pub n_bits: u32,
    pub spec: FingerprintSpec,
}

impl Fingerprint {
    pub fn from_bits(bits: impl IntoIterator<Item = u32>, spec: FingerprintSpec) -> Self {
        let n_bits = spec.n_bits();
        let set: BTreeSet<u32> = bits.into_iter().collect();
        debug_assert!(set.iter().all(|&b| b < n_bits));
        Fingerprint {
            bits: set.into_iter().collect(),
            n_bits,
            spec,
        }
    }

    pub fn method(&self) -> FingerprintMethod {
        self.spec.method()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.len()
    }

    pub fn contains(&self, bit: u32) -> bool {
        self.bits.binary_search(&bit).is_ok()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n_bits as usize];
        for &b in &self.bits {
            v[b as usize] = 1.0;
        }
        v
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

fn atom_label(graph: &MolecularGraph, i: usize) -> String {
    let atom = &graph.atoms[i];
    let mut label = if atom.aromatic {
        atom.element.symbol().to_ascii_lowercase()
    } else {
        atom.element.symbol().to_string()
    };
    match atom.formal_charge {
        0 => {}
        1 => label.push('+'),
        -1 => label.push('-'),
        q if q > 0 => label.push_str(&format!("+{q}")),
        q => label.push_str(&format!("-{}", -q)),
    }
    label
}

/// Canonical text for a path: the smaller of its forward and reversed forms.
pub(crate) fn canonical_path(labels: &[&str], bonds: &[char]) -> String {
    let render = |rev: bool| {
        let mut s = String::new();
        let n = labels.len();
        for k in 0..n {
            let idx = if rev { n - 1 - k } else { k };
            if k > 0 {
                let bi = if rev { n - 1 - k } else { k - 1 };
                s.push(bonds[bi]);
            }
            s.push_str(labels[idx]);
        }
        s
    };
    let fwd = render(false);
    let rev = render(true);
    fwd.min(rev)
}

/// Hashes every simple path of up to `max_len` bonds into a bit vector.
pub fn path_fingerprint(graph: &MolecularGraph, cfg: PathConfig) -> Result<Fingerprint, FingerprintError> {
    cfg.validate()?;
    if graph.atoms.is_empty() {
        return Err(FingerprintError::EmptyGraph);
    }
    let labels: Vec<String> = (0..graph.atoms.len()).map(|i| atom_label(graph, i)).collect();
    let mask = u64::from(cfg.n_bits - 1);
    let mut bits = BTreeSet::new();

    let mut on_path = vec![false; graph.atoms.len()];
    let mut path: Vec<usize> = Vec::with_capacity(cfg.max_len + 1);
    let mut bond_syms: Vec<char> = Vec::with_capacity(cfg.max_len);

    fn visit(
        graph: &MolecularGraph,
        labels: &[String],
        cfg: &PathConfig,
        mask: u64,
        on_path: &mut [bool],
        path: &mut Vec<usize>,
        bond_syms: &mut Vec<char>,
        bits: &mut BTreeSet<u32>,
    ) {
        let label_refs: Vec<&str> = path.iter().map(|&i| labels[i].as_str()).collect();
        let key = canonical_path(&label_refs, bond_syms);
        bits.insert((fnv1a64(key.as_bytes()) & mask) as u32);
        if bond_syms.len() == cfg.max_len {
            return;
        }
        let tail = *path.last().unwrap();
        for (next, bond) in graph.neighbors(tail) {
            if on_path[next] {
                continue;
            }
            on_path[next] = true;
            path.push(next);
            bond_syms.push(bond.order.symbol());
            visit(graph, labels, cfg, mask, on_path, path, bond_syms, bits);
            bond_syms.pop();
            path.pop();
            on_path[next] = false;
        }
    }

    for start in 0..graph.atoms.len() {
        on_path[start] = true;
        path.push(start);
        visit(graph, &labels, &cfg, mask, &mut on_path, &mut path, &mut bond_syms, &mut bits);
        path.pop();
        on_path[start] = false;
    }

    Ok(Fingerprint::from_bits(bits, FingerprintSpec::HashedPath(cfg)))
}

/// Key names in bit order.
pub const ATMO_KEY_NAMES: [&str; 24] = [
    "contains_c",
    "contains_n",
    "contains_o",
    "contains_s",
    "contains_halogen",
    "o_count_ge_3",
    "o_count_ge_6",
    "c_count_ge_5",
    "c_count_ge_10",
    "hydroxyl",
    "carbonyl",
    "carboxyl",
    "ether",
    "peroxide",
    "hydroperoxide",
    "nitro_or_nitrate",
    "amine",
    "nitrile",
    "aromatic_ring",
    "nonaromatic_ring",
    "cc_double_bond",
    "triple_bond",
    "charged",
    "ester",
];

pub fn atmo_key_index(name: &str) -> Option<usize> {
    ATMO_KEY_NAMES.iter().position(|&k| k == name)
}

/// Evaluates the fixed substructure key set by direct graph checks.
pub fn atmo_keys(graph: &MolecularGraph) -> Result<Fingerprint, FingerprintError> {
    if graph.atoms.is_empty() {
        return Err(FingerprintError::EmptyGraph);
    }
    let g = graph;
    let el = |i: usize| g.atoms[i].element;
    let has_h = |i: usize| g.implicit_hydrogens(i) >= 1;
    let count = |e: Element| g.atoms.iter().filter(|a| a.element == e).count();
    let any_atom = |f: &dyn Fn(usize) -> bool| (0..g.atoms.len()).any(f);
    let any_bond = |f: &dyn Fn(usize, usize, BondOrder) -> bool| {
        g.bonds
            .iter()
            .any(|b| f(b.a, b.b, b.order) || f(b.b, b.a, b.order))
    };
    let neighbors_with = |i: usize, e: Element, order: BondOrder| {
        g.neighbors(i)
            .filter(move |&(n, b)| el(n) == e && b.order == order)
            .map(|(n, _)| n)
    };
    let ring = g.ring_bonds();

    let n_o = count(Element::O);
    let n_c = count(Element::C);

    let mut keys = [false; 24];
    keys[0] = n_c > 0;
    keys[1] = count(Element::N) > 0;
    keys[2] = n_o > 0;
    keys[3] = count(Element::S) > 0;
    keys[4] = g.atoms.iter().any(|a| a.element.is_halogen());
    keys[5] = n_o >= 3;
    keys[6] = n_o >= 6;
    keys[7] = n_c >= 5;
    keys[8] = n_c >= 10;
    keys[9] = any_atom(&|i| {
        el(i) == Element::O && has_h(i) && g.neighbors(i).any(|(n, _)| el(n) == Element::C)
    });
    keys[10] = any_bond(&|a, b, o| {
        o == BondOrder::Double && el(a) == Element::C && el(b) == Element::O
    });
    keys[11] = any_atom(&|i| {
        el(i) == Element::C
            && neighbors_with(i, Element::O, BondOrder::Double).next().is_some()
            && neighbors_with(i, Element::O, BondOrder::Single).any(has_h)
    });
    keys[12] = any_atom(&|i| {
        el(i) == Element::O
            && !g.atoms[i].aromatic
            && g.degree(i) == 2
            && g.neighbors(i)
                .all(|(n, b)| el(n) == Element::C && b.order == BondOrder::Single)
    });
    keys[13] = any_bond(&|a, b, o| {
        o == BondOrder::Single && el(a) == Element::O && el(b) == Element::O
    });
    keys[14] = any_bond(&|a, b, o| {
        o == BondOrder::Single && el(a) == Element::O && el(b) == Element::O && has_h(b)
    });
    keys[15] = any_atom(&|i| {
        el(i) == Element::N && g.neighbors(i).filter(|&(n, _)| el(n) == Element::O).count() >= 2
    });
    keys[16] = any_atom(&|i| el(i) == Element::N && has_h(i));
    keys[17] = any_bond(&|a, b, o| {
        o == BondOrder::Triple && el(a) == Element::C && el(b) == Element::N
    });
    keys[18] = g
        .bonds
        .iter()
        .zip(&ring)
        .any(|(b, &r)| r && b.order == BondOrder::Aromatic);
    keys[19] = g
        .bonds
        .iter()
        .zip(&ring)
        .any(|(b, &r)| r && b.order != BondOrder::Aromatic);
    keys[20] = any_bond(&|a, b, o| {
        o == BondOrder::Double && el(a) == Element::C && el(b) == Element::C
    });
    keys[21] = g.bonds.iter().any(|b| b.order == BondOrder::Triple);
    keys[22] = g.atoms.iter().any(|a| a.formal_charge != 0);
    keys[23] = any_atom(&|i| {
        el(i) == Element::C
            && neighbors_with(i, Element::O, BondOrder::Double).next().is_some()
            && neighbors_with(i, Element::O, BondOrder::Single)
                .any(|o| g.neighbors(o).any(|(n, _)| n != i && el(n) == Element::C))
    });

    let bits = keys
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(k, _)| k as u32);
    Ok(Fingerprint::from_bits(bits, FingerprintSpec::atmo_keys()))
}

/// Fingerprints a whole molecule; dot-separated components are treated as one
/// disjoint graph.
pub fn fingerprint_graphs(graphs: &[MolecularGraph], spec: &FingerprintSpec) -> Result<Fingerprint, FingerprintError> {
    spec.validate()?;
    let merged = smiles::disjoint_union(graphs);
    match spec {
        FingerprintSpec::HashedPath(cfg) => path_fingerprint(&merged, *cfg),
        FingerprintSpec::AtmoKeys { .. } => atmo_keys(&merged),
    }
}

pub fn fingerprint_smiles(text: &str, spec: &FingerprintSpec) -> Result<Fingerprint, FingerprintError> {
    let graphs = smiles::parse(text)?;
    fingerprint_graphs(&graphs, spec)
}

/// |a ∩ b| / |a ∪ b|, with two empty fingerprints counted as identical.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    if a.n_bits != b.n_bits {
        return Err(FingerprintError::LengthMismatch(a.n_bits, b.n_bits));
    }
    Ok(tanimoto_sorted(&a.bits, &b.bits))
}

pub(crate) fn intersection_count(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut common) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    common
}

pub(crate) fn tanimoto_sorted(a: &[u32], b: &[u32]) -> f64 {
    let common = intersection_count(a, b);
    let union = a.len() + b.len() - common;
    if union == 0 {
        1.0
    } else {
        common as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse_single;

    fn path_fp(s: &str) -> Fingerprint {
        path_fingerprint(&parse_single(s).unwrap(), PathConfig::default()).unwrap()
    }

    fn keys(s: &str) -> Vec<&'static str> {
        let fp = atmo_keys(&parse_single(s).unwrap()).unwrap();
        fp.bits.iter().map(|&b| ATMO_KEY_NAMES[b as usize]).collect()
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn single_atom_sets_one_bit() {
        let fp = path_fp("C");
        assert_eq!(fp.bits, vec![(fnv1a64(b"C") & 2047) as u32]);
    }

    #[test]
    fn deterministic_and_order_invariant() {
        assert_eq!(path_fp("CCO"), path_fp("CCO"));
        assert_eq!(path_fp("CCO").bits, path_fp("OCC").bits);
    }

    #[test]
    fn canonical_path_picks_smaller_direction() {
        assert_eq!(canonical_path(&["O", "C", "C"], &['-', '-']), "C-C-O");
        assert_eq!(canonical_path(&["C", "C", "O"], &['-', '=']), "C-C=O");
        assert_eq!(canonical_path(&["O", "C", "C"], &['=', '-']), "C-C=O");
    }

    #[test]
    fn config_validation() {
        let bad = [
            PathConfig { max_len: 0, n_bits: 2048 },
            PathConfig { max_len: 7, n_bits: 32 },
            PathConfig { max_len: 7, n_bits: 1000 },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn charge_labels() {
        let g = parse_single("[NH4+]").unwrap();
        assert_eq!(atom_label(&g, 0), "N+");
        let g = parse_single("[O-2]").unwrap();
        assert_eq!(atom_label(&g, 0), "O-2");
        let g = parse_single("c1ccccc1").unwrap();
        assert_eq!(atom_label(&g, 0), "c");
    }

    #[test]
    fn ethanol_keys() {
        let k = keys("CCO");
        assert!(k.contains(&"hydroxyl"));
        assert!(k.contains(&"contains_o"));
        assert!(!k.contains(&"ether"));
        assert!(!k.contains(&"carbonyl"));
    }

    #[test]
    fn acetic_acid_keys() {
        let k = keys("CC(=O)O");
        for want in ["carbonyl", "carboxyl", "hydroxyl"] {
            assert!(k.contains(&want), "{want}");
        }
        assert!(!k.contains(&"ester"));
    }

    #[test]
    fn methane_keys() {
        assert_eq!(keys("C"), vec!["contains_c"]);
    }

    #[test]
    fn functional_group_keys() {
        let cases: [(&str, &[&str], &[&str]); 9] = [
            ("COC", &["ether"], &["hydroxyl", "peroxide"]),
            ("COOC", &["peroxide"], &["hydroperoxide", "ether"]),
            ("CCOO", &["peroxide", "hydroperoxide"], &["hydroxyl"]),
            ("CO[N+](=O)[O-]", &["nitro_or_nitrate", "charged"], &["amine"]),
            ("CCN", &["amine"], &["nitrile"]),
            ("CC#N", &["nitrile", "triple_bond"], &["amine"]),
            ("CC(=O)OC", &["ester", "carbonyl", "ether"], &["carboxyl", "hydroxyl"]),
            ("Cc1ccccc1", &["aromatic_ring", "c_count_ge_5"], &["nonaromatic_ring"]),
            ("C1CCC=CC1", &["nonaromatic_ring", "cc_double_bond"], &["aromatic_ring"]),
        ];
        for (smi, present, absent) in cases {
            let k = keys(smi);
            for p in present {
                assert!(k.contains(p), "{smi}: expected {p}, got {k:?}");
            }
            for a in absent {
                assert!(!k.contains(a), "{smi}: unexpected {a}");
            }
        }
    }

    #[test]
    fn count_thresholds() {
        let k = keys("OC(O)C(O)C(O)C(O)C(O)CC");
        for want in ["o_count_ge_3", "o_count_ge_6", "c_count_ge_5"] {
            assert!(k.contains(&want));
        }
        assert!(!k.contains(&"c_count_ge_10"));
        assert!(keys("CCCCCCCCCCCl").contains(&"c_count_ge_10"));
        assert!(keys("CCCCCCCCCCCl").contains(&"contains_halogen"));
    }

    #[test]
    fn atmo_keys_fixed_width() {
        let fp = atmo_keys(&parse_single("CCSC").unwrap()).unwrap();
        assert_eq!(fp.n_bits, 24);
        assert_eq!(fp.spec, FingerprintSpec::atmo_keys());
    }

    #[test]
    fn tanimoto_examples() {
        let spec = FingerprintSpec::HashedPath(PathConfig::default());
        let a = Fingerprint::from_bits([1, 2], spec.clone());
        let b = Fingerprint::from_bits([2, 3], spec.clone());
        assert!((tanimoto(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        let c = Fingerprint::from_bits([7, 9], spec.clone());
        assert_eq!(tanimoto(&a, &c).unwrap(), 0.0);
        let empty = Fingerprint::from_bits([], spec.clone());
        assert_eq!(tanimoto(&empty, &empty).unwrap(), 1.0);
        let other = Fingerprint::from_bits([1], FingerprintSpec::atmo_keys());
        assert_eq!(tanimoto(&a, &other), Err(FingerprintError::LengthMismatch(2048, 24)));
    }

    #[test]
    fn multi_component_union() {
        let spec = FingerprintSpec::HashedPath(PathConfig::default());
        let fp = fingerprint_smiles("CCO.O", &spec).unwrap();
        let alone = fingerprint_smiles("CCO", &spec).unwrap();
        assert!(alone.bits.iter().all(|b| fp.contains(*b)));
    }
}
