//! SMILES tokenizer and graph builder.
//!
//! Handles the organic subset (B, C, N, O, P, S, F, Cl, Br, I and their
//! aromatic lowercase forms), bracket atoms with isotope/charge/H-count,
//! branches, ring closures (digits and `%nn`), explicit bond symbols, and
//! dot-separated fragments. Stereo markers are accepted and dropped.

use super::{Atom, Bond, BondOrder, ChemError, Element, Molecule};

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    /// Explicit `[H]` atoms folded into their heavy neighbor afterwards.
    hydrogen_atoms: Vec<usize>,
    stereo_ignored: bool,
}

/// Ring-closure bookkeeping: opening atom, pending bond symbol, byte pos.
struct OpenRing {
    atom: usize,
    bond: Option<BondOrder>,
    pos: usize,
}

pub fn parse(text: &str) -> Result<Molecule, ChemError> {
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        hydrogen_atoms: Vec::new(),
        stereo_ignored: false,
    };
    p.run()?;
    p.fold_explicit_hydrogens();

    let mut mol = Molecule {
        atoms: p.atoms,
        bonds: p.bonds,
        rings: Vec::new(),
        source_smiles: text.to_string(),
        stereo_ignored: p.stereo_ignored,
        adjacency: Vec::new(),
    };
    mol.rebuild_adjacency();
    Ok(mol)
}

impl<'a> Parser<'a> {
    fn run(&mut self) -> Result<(), ChemError> {
        let mut prev: Option<usize> = None;
        let mut pending_bond: Option<BondOrder> = None;
        let mut branch_stack: Vec<usize> = Vec::new();
        let mut open_rings: std::collections::HashMap<u16, OpenRing> =
            std::collections::HashMap::new();

        while self.pos < self.bytes.len() {
            let pos = self.pos;
            match self.bytes[pos] {
                b'(' => {
                    match prev {
                        Some(a) => branch_stack.push(a),
                        None => {
                            return Err(ChemError::UnbalancedParenthesis { pos });
                        }
                    }
                    self.pos += 1;
                }
                b')' => {
                    prev = Some(
                        branch_stack
                            .pop()
                            .ok_or(ChemError::UnbalancedParenthesis { pos })?,
                    );
                    pending_bond = None;
                    self.pos += 1;
                }
                b'-' => {
                    pending_bond = Some(BondOrder::Single);
                    self.pos += 1;
                }
                b'=' => {
                    pending_bond = Some(BondOrder::Double);
                    self.pos += 1;
                }
                b'#' => {
                    pending_bond = Some(BondOrder::Triple);
                    self.pos += 1;
                }
                b':' => {
                    pending_bond = Some(BondOrder::Aromatic);
                    self.pos += 1;
                }
                b'/' | b'\\' => {
                    self.stereo_ignored = true;
                    pending_bond = Some(BondOrder::Single);
                    self.pos += 1;
                }
                b'.' => {
                    prev = None;
                    pending_bond = None;
                    self.pos += 1;
                }
                b'%' => {
                    let number = self.ring_closure_number(pos)?;
                    self.close_or_open_ring(
                        number,
                        pos,
                        prev,
                        &mut pending_bond,
                        &mut open_rings,
                    )?;
                }
                b'0'..=b'9' => {
                    let number = u16::from(self.bytes[pos] - b'0');
                    self.pos += 1;
                    self.close_or_open_ring(
                        number,
                        pos,
                        prev,
                        &mut pending_bond,
                        &mut open_rings,
                    )?;
                }
                b' ' | b'\t' => {
                    // trailing title section per the Daylight convention
                    break;
                }
                _ => {
                    let idx = self.parse_atom()?;
                    if let Some(a) = prev {
                        let order = pending_bond.take().unwrap_or_else(|| {
                            default_bond(&self.atoms, a, idx)
                        });
                        self.push_bond(a, idx, order);
                    } else if pending_bond.is_some() {
                        return Err(ChemError::UnknownAtomSymbol {
                            pos,
                            symbol: "bond with no preceding atom".into(),
                        });
                    }
                    prev = Some(idx);
                }
            }
        }

        if branch_stack.pop().is_some() {
            return Err(ChemError::UnbalancedParenthesis {
                pos: self.bytes.len().saturating_sub(1),
            });
        }
        if let Some(open) = open_rings.into_values().next() {
            return Err(ChemError::UnclosedRing { pos: open.pos });
        }
        Ok(())
    }

    fn ring_closure_number(&mut self, pos: usize) -> Result<u16, ChemError> {
        if self.pos + 2 >= self.bytes.len()
            || !self.bytes[self.pos + 1].is_ascii_digit()
            || !self.bytes[self.pos + 2].is_ascii_digit()
        {
            return Err(ChemError::UnknownAtomSymbol {
                pos,
                symbol: "%".into(),
            });
        }
        let number = u16::from(self.bytes[self.pos + 1] - b'0') * 10
            + u16::from(self.bytes[self.pos + 2] - b'0');
        self.pos += 3;
        Ok(number)
    }

    fn close_or_open_ring(
        &mut self,
        number: u16,
        pos: usize,
        prev: Option<usize>,
        pending_bond: &mut Option<BondOrder>,
        open_rings: &mut std::collections::HashMap<u16, OpenRing>,
    ) -> Result<(), ChemError> {
        let atom = prev.ok_or(ChemError::UnknownAtomSymbol {
            pos,
            symbol: "ring closure before any atom".into(),
        })?;
        if let Some(open) = open_rings.remove(&number) {
            if open.atom == atom {
                return Err(ChemError::ValenceViolation {
                    pos,
                    detail: "ring closure bonds an atom to itself".into(),
                });
            }
            let order = pending_bond
                .take()
                .or(open.bond)
                .unwrap_or_else(|| default_bond(&self.atoms, open.atom, atom));
            self.push_bond(open.atom, atom, order);
        } else {
            open_rings.insert(
                number,
                OpenRing {
                    atom,
                    bond: pending_bond.take(),
                    pos,
                },
            );
        }
        Ok(())
    }

    fn push_bond(&mut self, a: usize, b: usize, order: BondOrder) {
        // Duplicate bonds between the same atoms collapse onto the first.
        if self
            .bonds
            .iter()
            .any(|bond| (bond.a == a && bond.b == b) || (bond.a == b && bond.b == a))
        {
            return;
        }
        self.bonds.push(Bond {
            a,
            b,
            order,
            in_ring: false,
        });
    }

    /// Parse one atom token at the current position, returning its index.
    fn parse_atom(&mut self) -> Result<usize, ChemError> {
        let pos = self.pos;
        if self.bytes[pos] == b'[' {
            return self.parse_bracket_atom();
        }

        let rest = &self.bytes[pos..];
        let (element, aromatic, len) = match rest {
            [b'C', b'l', ..] => (Element::Cl, false, 2),
            [b'B', b'r', ..] => (Element::Br, false, 2),
            [b'B', ..] => (Element::B, false, 1),
            [b'C', ..] => (Element::C, false, 1),
            [b'N', ..] => (Element::N, false, 1),
            [b'O', ..] => (Element::O, false, 1),
            [b'P', ..] => (Element::P, false, 1),
            [b'S', ..] => (Element::S, false, 1),
            [b'F', ..] => (Element::F, false, 1),
            [b'I', ..] => (Element::I, false, 1),
            [b'b', ..] => (Element::B, true, 1),
            [b'c', ..] => (Element::C, true, 1),
            [b'n', ..] => (Element::N, true, 1),
            [b'o', ..] => (Element::O, true, 1),
            [b'p', ..] => (Element::P, true, 1),
            [b's', ..] => (Element::S, true, 1),
            _ => {
                return Err(ChemError::UnknownAtomSymbol {
                    pos,
                    symbol: (self.bytes[pos] as char).to_string(),
                })
            }
        };
        self.pos += len;
        self.atoms.push(Atom {
            element,
            formal_charge: 0,
            explicit_hydrogens: 0,
            implicit_hydrogens: 0,
            aromatic,
            in_ring: false,
            isotope: None,
            from_bracket: false,
            source_pos: pos,
        });
        Ok(self.atoms.len() - 1)
    }

    fn parse_bracket_atom(&mut self) -> Result<usize, ChemError> {
        let open_pos = self.pos;
        self.pos += 1; // consume '['

        let mut isotope: Option<u16> = None;
        let mut digits = 0u16;
        let mut saw_digit = false;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            digits = digits * 10 + u16::from(self.bytes[self.pos] - b'0');
            saw_digit = true;
            self.pos += 1;
        }
        if saw_digit {
            isotope = Some(digits);
        }

        let sym_pos = self.pos;
        let (element, aromatic, is_hydrogen) = self.bracket_symbol(sym_pos)?;

        let mut explicit_h = 0u8;
        let mut charge: i8 = 0;
        loop {
            if self.pos >= self.bytes.len() {
                return Err(ChemError::UnknownAtomSymbol {
                    pos: open_pos,
                    symbol: "unterminated bracket atom".into(),
                });
            }
            match self.bytes[self.pos] {
                b']' => {
                    self.pos += 1;
                    break;
                }
                b'@' => {
                    self.stereo_ignored = true;
                    self.pos += 1;
                }
                b'H' => {
                    self.pos += 1;
                    let mut count = 1u8;
                    if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                        count = self.bytes[self.pos] - b'0';
                        self.pos += 1;
                    }
                    explicit_h = count;
                }
                b'+' | b'-' => {
                    let sign: i8 = if self.bytes[self.pos] == b'+' { 1 } else { -1 };
                    self.pos += 1;
                    let mut magnitude: i8 = 1;
                    if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                        magnitude = (self.bytes[self.pos] - b'0') as i8;
                        self.pos += 1;
                    } else {
                        while self.pos < self.bytes.len()
                            && self.bytes[self.pos] == self.bytes[self.pos - 1]
                        {
                            magnitude += 1;
                            self.pos += 1;
                        }
                    }
                    charge = sign * magnitude;
                }
                b':' => {
                    // atom class: consume digits, ignore
                    self.pos += 1;
                    while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                }
                other => {
                    return Err(ChemError::UnknownAtomSymbol {
                        pos: self.pos,
                        symbol: (other as char).to_string(),
                    })
                }
            }
        }

        if is_hydrogen {
            // A standalone [H]: record as a pseudo-atom, folded later.
            self.atoms.push(Atom {
                element: Element::C, // placeholder element, never escapes
                formal_charge: charge,
                explicit_hydrogens: 0,
                implicit_hydrogens: 0,
                aromatic: false,
                in_ring: false,
                isotope,
                from_bracket: true,
                source_pos: open_pos,
            });
            let idx = self.atoms.len() - 1;
            self.hydrogen_atoms.push(idx);
            return Ok(idx);
        }

        self.atoms.push(Atom {
            element,
            formal_charge: charge,
            explicit_hydrogens: explicit_h,
            implicit_hydrogens: 0,
            aromatic,
            in_ring: false,
            isotope,
            from_bracket: true,
            source_pos: open_pos,
        });
        Ok(self.atoms.len() - 1)
    }

    fn bracket_symbol(&mut self, pos: usize) -> Result<(Element, bool, bool), ChemError> {
        let rest = &self.bytes[pos..];
        let (element, aromatic, is_h, len) = match rest {
            [b'C', b'l', ..] => (Element::Cl, false, false, 2),
            [b'B', b'r', ..] => (Element::Br, false, false, 2),
            [b'H', ..] => (Element::C, false, true, 1),
            [b'B', ..] => (Element::B, false, false, 1),
            [b'C', ..] => (Element::C, false, false, 1),
            [b'N', ..] => (Element::N, false, false, 1),
            [b'O', ..] => (Element::O, false, false, 1),
            [b'P', ..] => (Element::P, false, false, 1),
            [b'S', ..] => (Element::S, false, false, 1),
            [b'F', ..] => (Element::F, false, false, 1),
            [b'I', ..] => (Element::I, false, false, 1),
            [b'b', ..] => (Element::B, true, false, 1),
            [b'c', ..] => (Element::C, true, false, 1),
            [b'n', ..] => (Element::N, true, false, 1),
            [b'o', ..] => (Element::O, true, false, 1),
            [b'p', ..] => (Element::P, true, false, 1),
            [b's', ..] => (Element::S, true, false, 1),
            _ => {
                // Collect the alphabetic run for the error message.
                let mut end = pos;
                while end < self.bytes.len() && self.bytes[end].is_ascii_alphabetic() {
                    end += 1;
                }
                let symbol = String::from_utf8_lossy(&self.bytes[pos..end.max(pos + 1)]).into();
                return Err(ChemError::UnknownAtomSymbol { pos, symbol });
            }
        };
        self.pos += len;
        Ok((element, aromatic, is_h))
    }

    /// Replace standalone `[H]` atoms with hydrogen counts on their heavy
    /// neighbor, compacting atom indices.
    fn fold_explicit_hydrogens(&mut self) {
        if self.hydrogen_atoms.is_empty() {
            return;
        }
        let h_set: std::collections::HashSet<usize> =
            self.hydrogen_atoms.iter().copied().collect();

        for &h in &self.hydrogen_atoms {
            for bond in &self.bonds {
                if bond.a == h && !h_set.contains(&bond.b) {
                    self.atoms[bond.b].explicit_hydrogens += 1;
                } else if bond.b == h && !h_set.contains(&bond.a) {
                    self.atoms[bond.a].explicit_hydrogens += 1;
                }
            }
        }

        let mut remap = vec![usize::MAX; self.atoms.len()];
        let mut kept = Vec::with_capacity(self.atoms.len() - h_set.len());
        for (i, atom) in self.atoms.drain(..).enumerate() {
            if !h_set.contains(&i) {
                remap[i] = kept.len();
                kept.push(atom);
            }
        }
        self.atoms = kept;
        self.bonds.retain(|b| !h_set.contains(&b.a) && !h_set.contains(&b.b));
        for bond in &mut self.bonds {
            bond.a = remap[bond.a];
            bond.b = remap[bond.b];
        }
        self.hydrogen_atoms.clear();
    }
}

/// Unspecified bonds default to aromatic between two aromatic atoms (later
/// demoted to single when the bond turns out not to lie in a ring).
fn default_bond(atoms: &[Atom], a: usize, b: usize) -> BondOrder {
    if atoms[a].aromatic && atoms[b].aromatic {
        BondOrder::Aromatic
    } else {
        BondOrder::Single
    }
}
