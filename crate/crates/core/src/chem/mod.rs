//! Molecular graphs parsed from SMILES, the ten descriptors used by the
//! prediction pipelines, and Morgan fingerprints with Tanimoto similarity.

mod descriptors;
mod fingerprint;
mod perceive;
mod smiles;

pub use descriptors::{compute_descriptors, DescriptorVector};
pub use fingerprint::{morgan_fingerprint, tanimoto, Fingerprint};

use thiserror::Error;

/// Errors raised while turning SMILES text into a molecular graph.
///
/// Positions are byte offsets into the input string.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ChemError {
    #[error("ring-closure digit opened at position {pos} is never closed")]
    UnclosedRing { pos: usize },
    #[error("unbalanced parenthesis at position {pos}")]
    UnbalancedParenthesis { pos: usize },
    #[error("unknown atom symbol `{symbol}` at position {pos}")]
    UnknownAtomSymbol { pos: usize, symbol: String },
    #[error("valence violation at position {pos}: {detail}")]
    ValenceViolation { pos: usize, detail: String },
    #[error("fingerprint widths differ: {left} vs {right} bits")]
    WidthMismatch { left: usize, right: usize },
}

/// Elements of the SMILES organic subset plus bracket-only extras.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Element {
    B,
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
    I,
}

impl Element {
    pub fn atomic_number(self) -> u8 {
        match self {
            Element::B => 5,
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::P => 15,
            Element::S => 16,
            Element::F => 9,
            Element::Cl => 17,
            Element::Br => 35,
            Element::I => 53,
        }
    }

    /// Standard atomic weight (CIAAW abridged values, as used by the
    /// common cheminformatics toolkits).
    pub fn atomic_weight(self) -> f64 {
        match self {
            Element::B => 10.81,
            Element::C => 12.011,
            Element::N => 14.007,
            Element::O => 15.999,
            Element::P => 30.974,
            Element::S => 32.06,
            Element::F => 18.998,
            Element::Cl => 35.45,
            Element::Br => 79.904,
            Element::I => 126.904,
        }
    }

    /// Default valences for implicit-hydrogen assignment, smallest first.
    fn default_valences(self) -> &'static [u8] {
        match self {
            Element::B => &[3],
            Element::C => &[4],
            Element::N => &[3, 5],
            Element::O => &[2],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's valence sum. Aromatic bonds are handled
    /// separately (n_aromatic + 1 rule) and count 0 here.
    fn valence(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    /// Hydrogens fixed by a bracket expression (`[NH2]`) or folded-in
    /// explicit `[H]` neighbor atoms.
    pub explicit_hydrogens: u8,
    /// Hydrogens assigned by organic-subset valence rules.
    pub implicit_hydrogens: u8,
    pub aromatic: bool,
    pub in_ring: bool,
    pub isotope: Option<u16>,
    /// Bracket atoms take their hydrogen count at face value.
    pub from_bracket: bool,
    /// Byte position of the atom token in the source SMILES.
    pub source_pos: usize,
}

impl Atom {
    pub fn total_hydrogens(&self) -> u8 {
        self.explicit_hydrogens + self.implicit_hydrogens
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub in_ring: bool,
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

/// A parsed molecular graph with perceived rings and aromaticity.
#[derive(Debug, Clone)]
pub struct Molecule {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// Smallest set of smallest rings, each a cycle of atom indices.
    pub rings: Vec<Vec<usize>>,
    pub source_smiles: String,
    /// True when stereo markers (`@`, `/`, `\`) were present and dropped.
    pub stereo_ignored: bool,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Molecule {
    /// Heavy-atom degree (hydrogens are folded into atoms, never nodes).
    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    /// Neighbor atom indices paired with the connecting bond index.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|&&(nbr, _)| nbr == b)
            .map(|&(_, bi)| &self.bonds[bi])
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.len()
    }

    fn rebuild_adjacency(&mut self) {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for (bi, bond) in self.bonds.iter().enumerate() {
            adj[bond.a].push((bond.b, bi));
            adj[bond.b].push((bond.a, bi));
        }
        self.adjacency = adj;
    }
}

/// Parse a SMILES string into a molecular graph with perceived rings,
/// aromaticity, and implicit hydrogens.
pub fn parse_smiles(text: &str) -> Result<Molecule, ChemError> {
    let mut mol = smiles::parse(text)?;
    perceive::finish(&mut mol)?;
    Ok(mol)
}
