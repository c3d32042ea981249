//! Post-parse perception: ring membership, SSSR, aromaticity, and
//! implicit-hydrogen assignment.

use super::{BondOrder, ChemError, Element, Molecule};

/// Run all perception stages on a freshly parsed graph.
pub fn finish(mol: &mut Molecule) -> Result<(), ChemError> {
    mark_ring_bonds(mol);
    mol.rings = smallest_rings(mol);

    // Unspecified bonds between aromatic atoms default to aromatic during
    // parsing; outside a ring they are really single bonds (biphenyl).
    for bond in &mut mol.bonds {
        if !bond.in_ring && matches!(bond.order, BondOrder::Aromatic) {
            bond.order = BondOrder::Single;
        }
    }

    normalize_nitro(mol);
    assign_implicit_hydrogens(mol)?;
    perceive_aromaticity(mol);

    // Invariant: aromatic atoms live in rings.
    for atom in &mol.atoms {
        if atom.aromatic && !atom.in_ring {
            return Err(ChemError::ValenceViolation {
                pos: atom.source_pos,
                detail: "aromatic atom outside any ring".into(),
            });
        }
    }
    Ok(())
}

/// Mark ring bonds (non-bridges) and ring atoms via iterative DFS
/// bridge-finding.
fn mark_ring_bonds(mol: &mut Molecule) {
    let n = mol.atoms.len();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![usize::MAX; n];
    let mut is_bridge = vec![false; mol.bonds.len()];
    let mut timer = 0usize;

    // Iterative DFS: stack of (node, parent bond, neighbor cursor).
    for start in 0..n {
        if disc[start] != usize::MAX {
            continue;
        }
        let mut stack: Vec<(usize, usize, usize)> = vec![(start, usize::MAX, 0)];
        disc[start] = timer;
        low[start] = timer;
        timer += 1;

        while let Some(&mut (u, pbond, ref mut cursor)) = stack.last_mut() {
            if *cursor < mol.adjacency[u].len() {
                let (v, bi) = mol.adjacency[u][*cursor];
                *cursor += 1;
                if bi == pbond {
                    continue;
                }
                if disc[v] == usize::MAX {
                    disc[v] = timer;
                    low[v] = timer;
                    timer += 1;
                    stack.push((v, bi, 0));
                } else {
                    low[u] = low[u].min(disc[v]);
                }
            } else {
                stack.pop();
                if let Some(&mut (parent, _, _)) = stack.last_mut() {
                    low[parent] = low[parent].min(low[u]);
                    if low[u] > disc[parent] {
                        is_bridge[pbond] = true;
                    }
                }
            }
        }
    }

    for (bi, bond) in mol.bonds.iter_mut().enumerate() {
        bond.in_ring = !is_bridge[bi];
    }
    for i in 0..n {
        mol.atoms[i].in_ring = mol.adjacency[i]
            .iter()
            .any(|&(_, bi)| mol.bonds[bi].in_ring);
    }
}

/// Smallest set of smallest rings: candidate cycles from per-bond shortest
/// paths, greedily selected for linear independence over GF(2).
fn smallest_rings(mol: &Molecule) -> Vec<Vec<usize>> {
    let n_bonds = mol.bonds.len();
    let components = count_components(mol);
    let rank = n_bonds + components - mol.atoms.len();
    if rank == 0 {
        return Vec::new();
    }

    let words = n_bonds.div_ceil(64);
    let mut candidates: Vec<(Vec<usize>, Vec<u64>)> = Vec::new();

    for (bi, bond) in mol.bonds.iter().enumerate() {
        if !bond.in_ring {
            continue;
        }
        if let Some(path) = shortest_path_avoiding(mol, bond.a, bond.b, bi) {
            let mut edges = vec![0u64; words];
            set_bit(&mut edges, bi);
            for w in path.windows(2) {
                let eb = mol
                    .adjacency[w[0]]
                    .iter()
                    .find(|&&(v, _)| v == w[1])
                    .map(|&(_, e)| e)
                    .expect("path edge exists");
                set_bit(&mut edges, eb);
            }
            if !candidates.iter().any(|(_, e)| e == &edges) {
                candidates.push((path, edges));
            }
        }
    }

    candidates.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.1.cmp(&b.1)));

    let mut basis: Vec<Vec<u64>> = Vec::new();
    let mut rings = Vec::new();
    for (ring, edges) in candidates {
        if rings.len() == rank {
            break;
        }
        let mut reduced = edges.clone();
        for b in &basis {
            let pivot = highest_bit(b);
            if pivot.is_some() && pivot == highest_bit(&reduced) {
                xor_into(&mut reduced, b);
            }
        }
        if reduced.iter().any(|&w| w != 0) {
            // Keep the reduced vector sorted by pivot for the elimination.
            basis.push(reduced);
            basis.sort_by_key(|b| std::cmp::Reverse(highest_bit(b)));
            rings.push(ring);
        }
    }
    rings
}

fn set_bit(bits: &mut [u64], i: usize) {
    bits[i / 64] |= 1 << (i % 64);
}

fn highest_bit(bits: &[u64]) -> Option<usize> {
    for (w, &word) in bits.iter().enumerate().rev() {
        if word != 0 {
            return Some(w * 64 + 63 - word.leading_zeros() as usize);
        }
    }
    None
}

fn xor_into(target: &mut [u64], other: &[u64]) {
    for (t, o) in target.iter_mut().zip(other) {
        *t ^= o;
    }
}

fn count_components(mol: &Molecule) -> usize {
    let n = mol.atoms.len();
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &mol.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    components
}

/// BFS shortest path from `from` to `to` that never uses bond `skip`.
/// Returns the vertex sequence `from..=to`.
fn shortest_path_avoiding(
    mol: &Molecule,
    from: usize,
    to: usize,
    skip: usize,
) -> Option<Vec<usize>> {
    let n = mol.atoms.len();
    let mut pred = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([from]);
    seen[from] = true;
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &(v, bi) in &mol.adjacency[u] {
            if bi == skip || seen[v] {
                continue;
            }
            seen[v] = true;
            pred[v] = u;
            queue.push_back(v);
        }
    }
    if !seen[to] {
        return None;
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = pred[cur];
        path.push(cur);
    }
    path.reverse();
    Some(path)
}

/// Rewrite uncharged pentavalent nitro groups `N(=O)=O` into the
/// charge-separated form `[N+](=O)[O-]`, matching toolkit sanitization.
fn normalize_nitro(mol: &mut Molecule) {
    for i in 0..mol.atoms.len() {
        if mol.atoms[i].element != Element::N
            || mol.atoms[i].formal_charge != 0
            || mol.atoms[i].aromatic
        {
            continue;
        }
        let double_o: Vec<usize> = mol.adjacency[i]
            .iter()
            .filter(|&&(v, bi)| {
                mol.atoms[v].element == Element::O
                    && mol.atoms[v].formal_charge == 0
                    && mol.adjacency[v].len() == 1
                    && matches!(mol.bonds[bi].order, BondOrder::Double)
            })
            .map(|&(_, bi)| bi)
            .collect();
        if double_o.len() == 2 {
            let bi = double_o[1];
            mol.bonds[bi].order = BondOrder::Single;
            let o = mol.bonds[bi].other(i);
            mol.atoms[o].formal_charge = -1;
            mol.atoms[i].formal_charge = 1;
        }
    }
}

fn assign_implicit_hydrogens(mol: &mut Molecule) -> Result<(), ChemError> {
    for i in 0..mol.atoms.len() {
        if mol.atoms[i].from_bracket {
            continue; // bracket atoms carry their hydrogen count verbatim
        }
        let n_aromatic = mol.adjacency[i]
            .iter()
            .filter(|&&(_, bi)| matches!(mol.bonds[bi].order, BondOrder::Aromatic))
            .count() as u8;
        let plain_sum: u8 = mol.adjacency[i]
            .iter()
            .map(|&(_, bi)| mol.bonds[bi].order.valence())
            .sum();
        let aromatic_sum = if n_aromatic > 0 { n_aromatic + 1 } else { 0 };
        let bond_sum = plain_sum + aromatic_sum;

        let atom = &mut mol.atoms[i];
        // Explicit hydrogens folded in from `[H]` neighbors occupy valence.
        let occupied = u16::from(bond_sum) + u16::from(atom.explicit_hydrogens);
        // Formal charge shifts the default valence (N+ binds like C).
        let charge = i16::from(atom.formal_charge);
        let valences: Vec<u16> = atom
            .element
            .default_valences()
            .iter()
            .filter_map(|&v| {
                let adjusted = i16::from(v) + charge;
                u16::try_from(adjusted).ok()
            })
            .collect();
        if atom.aromatic {
            // Aromatic atoms never jump to a higher valence state.
            let v0 = valences.first().copied().unwrap_or(0);
            atom.implicit_hydrogens = v0.saturating_sub(occupied) as u8;
        } else {
            match valences.iter().find(|&&v| v >= occupied) {
                Some(&v) => atom.implicit_hydrogens = (v - occupied) as u8,
                None => {
                    return Err(ChemError::ValenceViolation {
                        pos: atom.source_pos,
                        detail: format!(
                            "bond order sum {occupied} exceeds maximum valence for {:?}",
                            atom.element
                        ),
                    })
                }
            }
        }
    }
    Ok(())
}

/// Hückel-style aromaticity perception over SSSR rings and fused ring
/// systems: every atom sp2-capable and 4n+2 π electrons.
fn perceive_aromaticity(mol: &mut Molecule) {
    loop {
        let mut changed = false;
        let single_rings: Vec<Vec<usize>> = mol.rings.clone();
        for ring in &single_rings {
            if try_mark_aromatic(mol, ring) {
                changed = true;
            }
        }
        for system in fused_systems(mol) {
            if try_mark_aromatic(mol, &system) {
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Atom sets for fused ring systems (SSSR rings sharing at least one bond).
fn fused_systems(mol: &Molecule) -> Vec<Vec<usize>> {
    let nrings = mol.rings.len();
    if nrings < 2 {
        return Vec::new();
    }
    let ring_bonds: Vec<std::collections::HashSet<(usize, usize)>> = mol
        .rings
        .iter()
        .map(|ring| {
            let mut set = std::collections::HashSet::new();
            for k in 0..ring.len() {
                let a = ring[k];
                let b = ring[(k + 1) % ring.len()];
                set.insert((a.min(b), a.max(b)));
            }
            set
        })
        .collect();

    // Union-find over rings.
    let mut parent: Vec<usize> = (0..nrings).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..nrings {
        for j in (i + 1)..nrings {
            if !ring_bonds[i].is_disjoint(&ring_bonds[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }

    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..nrings {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups
        .values()
        .filter(|rings| rings.len() > 1)
        .map(|rings| {
            let mut atoms: Vec<usize> = rings
                .iter()
                .flat_map(|&r| mol.rings[r].iter().copied())
                .collect();
            atoms.sort_unstable();
            atoms.dedup();
            atoms
        })
        .collect()
}

/// Mark the atom set aromatic when it passes the Hückel test. Returns true
/// when anything newly changed.
fn try_mark_aromatic(mol: &mut Molecule, atoms: &[usize]) -> bool {
    if atoms.iter().all(|&a| mol.atoms[a].aromatic) {
        return false;
    }
    let in_set: std::collections::HashSet<usize> = atoms.iter().copied().collect();
    let mut pi = 0u32;
    for &a in atoms {
        match pi_contribution(mol, a, &in_set) {
            Some(e) => pi += e,
            None => return false,
        }
    }
    if pi < 2 || !(pi - 2).is_multiple_of(4) {
        return false;
    }

    let mut changed = false;
    for &a in atoms {
        if !mol.atoms[a].aromatic {
            mol.atoms[a].aromatic = true;
            changed = true;
        }
    }
    for bond in &mut mol.bonds {
        if bond.in_ring
            && in_set.contains(&bond.a)
            && in_set.contains(&bond.b)
            && !matches!(bond.order, BondOrder::Aromatic)
        {
            bond.order = BondOrder::Aromatic;
            changed = true;
        }
    }
    changed
}

/// π electrons contributed by one atom to the candidate system, or None
/// when the atom cannot take part in an aromatic ring.
fn pi_contribution(
    mol: &Molecule,
    atom: usize,
    in_set: &std::collections::HashSet<usize>,
) -> Option<u32> {
    let element = mol.atoms[atom].element;
    let mut double_in = 0;
    let mut double_out = 0;
    for &(v, bi) in &mol.adjacency[atom] {
        match mol.bonds[bi].order {
            BondOrder::Double => {
                if in_set.contains(&v) {
                    double_in += 1;
                } else {
                    double_out += 1;
                }
            }
            BondOrder::Triple => return None,
            _ => {}
        }
    }

    if double_in >= 1 {
        return Some(1);
    }
    if mol.atoms[atom].aromatic {
        // Already-aromatic atoms (lowercase input) contribute by element.
        return Some(match element {
            Element::C | Element::B => 1,
            Element::N | Element::P => {
                if mol.atoms[atom].total_hydrogens() > 0 || mol.degree(atom) == 3 {
                    2
                } else {
                    1
                }
            }
            Element::O | Element::S => 2,
            _ => 1,
        });
    }
    if double_out >= 1 {
        // Exocyclic double bond: sp2, contributes nothing (quinoid carbon).
        return Some(0);
    }
    match element {
        Element::N | Element::P => Some(2), // pyrrole-type lone pair
        Element::O | Element::S => Some(2), // furan / thiophene
        Element::B => Some(0),
        _ => None, // saturated carbon breaks the π system
    }
}
