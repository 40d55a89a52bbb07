//! Finite Cayley graphs of quotients `G/N`, stored Schreier-style as one
//! permutation per generator.

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{CoarseError, Result};
use crate::coarse_homotopy::RPath;
use crate::words::{Presentation, Word};
use crate::zlinalg::{bfs_spanning_tree, Lattice};

/// Provenance prefix marking a quotient of a free group.
pub const FREE_PREFIX: &str = "free:";

/// Default vertex budget for builders.
pub const DEFAULT_VERTEX_BUDGET: u64 = 2_000_000;

/// Cayley graph of a finite quotient, basepoint = vertex 0.
///
/// Vertex labels are the BFS discovery order from 0, scanning generators in
/// index order and each generator before its inverse.
#[derive(Debug, Clone)]
pub struct CayleyQuotient {
    n_generators: usize,
    perms: Vec<Vec<u32>>,
    inverses: Vec<Vec<u32>>,
    provenance: String,
    fingerprint: u64,
}

impl PartialEq for CayleyQuotient {
    fn eq(&self, other: &Self) -> bool {
        self.n_generators == other.n_generators
            && self.perms == other.perms
            && self.provenance == other.provenance
    }
}

impl Eq for CayleyQuotient {}

/// On-disk graph format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphJson {
    pub n_generators: usize,
    pub num_vertices: usize,
    pub perms: Vec<Vec<u32>>,
    pub provenance: String,
}

fn invert(perm: &[u32], index: usize) -> Result<Vec<u32>> {
    let degree = perm.len();
    let mut inv = vec![u32::MAX; degree];
    for (i, &p) in perm.iter().enumerate() {
        let p = p as usize;
        if p >= degree || inv[p] != u32::MAX {
            return Err(CoarseError::NotBijective { index, degree });
        }
        inv[p] = i as u32;
    }
    Ok(inv)
}

/// BFS relabeling from point 0. Returns the relabeled permutations and, for
/// each new label, the old point it came from.
fn canonicalize(perms: &[Vec<u32>], inverses: &[Vec<u32>], degree: usize) -> (Vec<Vec<u32>>, Vec<u32>) {
    let mut new_of_old = vec![u32::MAX; degree];
    let mut old_of_new: Vec<u32> = Vec::new();
    if degree > 0 {
        new_of_old[0] = 0;
        old_of_new.push(0);
        let mut head = 0;
        while head < old_of_new.len() {
            let v = old_of_new[head] as usize;
            head += 1;
            for (p, q) in perms.iter().zip(inverses) {
                for w in [p[v], q[v]] {
                    if new_of_old[w as usize] == u32::MAX {
                        new_of_old[w as usize] = old_of_new.len() as u32;
                        old_of_new.push(w);
                    }
                }
            }
        }
    }
    let relabeled = perms
        .iter()
        .map(|p| {
            old_of_new
                .iter()
                .map(|&old| new_of_old[p[old as usize] as usize])
                .collect()
        })
        .collect();
    (relabeled, old_of_new)
}

fn letter_of_index(i: usize) -> i32 {
    let g = (i / 2 + 1) as i32;
    if i % 2 == 0 {
        g
    } else {
        -g
    }
}

impl CayleyQuotient {
    fn from_canonical(n_generators: usize, perms: Vec<Vec<u32>>, provenance: String) -> Self {
        let inverses = perms
            .iter()
            .enumerate()
            .map(|(i, p)| invert(p, i).expect("canonical permutations are bijections"))
            .collect();
        let mut h = DefaultHasher::new();
        n_generators.hash(&mut h);
        perms.hash(&mut h);
        let fingerprint = h.finish();
        CayleyQuotient {
            n_generators,
            perms,
            inverses,
            provenance,
            fingerprint,
        }
    }

    /// Restricts to the orbit of 0 and relabels canonically.
    pub fn from_permutations(
        n_generators: usize,
        perms: Vec<Vec<u32>>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if perms.len() != n_generators {
            return Err(CoarseError::InvalidArgument(format!(
                "expected {n_generators} permutations, got {}",
                perms.len()
            )));
        }
        let degree = perms.first().map_or(1, Vec::len);
        if degree == 0 {
            return Err(CoarseError::InvalidArgument("permutations of degree 0".into()));
        }
        let mut inverses = Vec::with_capacity(perms.len());
        for (i, p) in perms.iter().enumerate() {
            if p.len() != degree {
                return Err(CoarseError::InvalidArgument(format!(
                    "permutation {i} has degree {}, expected {degree}",
                    p.len()
                )));
            }
            inverses.push(invert(p, i)?);
        }
        let (relabeled, _) = canonicalize(&perms, &inverses, degree);
        Ok(Self::from_canonical(n_generators, relabeled, provenance.into()))
    }

    /// Image of the subgroup generated by integer 2x2 matrices in
    /// `SL_2(Z/modulus)`, acting by right multiplication. Each matrix is
    /// `[a, b, c, d]` for `[[a, b], [c, d]]`.
    pub fn from_matrices_sl2(modulus: u64, generators: &[[i64; 4]], budget: u64) -> Result<Self> {
        if modulus == 0 || modulus > 1 << 31 {
            return Err(CoarseError::InvalidArgument(format!(
                "modulus {modulus} outside 1..=2^31"
            )));
        }
        if generators.is_empty() {
            return Err(CoarseError::InvalidArgument("no generator matrices".into()));
        }
        let m = modulus;
        let red = |x: i64| x.rem_euclid(m as i64) as u64;
        let mut gens: Vec<[u64; 4]> = Vec::new();
        let mut invs: Vec<[u64; 4]> = Vec::new();
        for (index, g) in generators.iter().enumerate() {
            let [a, b, c, d] = g.map(red);
            let det = (a * d % m + m - b * c % m) % m;
            if det != 1 % m {
                return Err(CoarseError::Determinant { index, det, modulus: m });
            }
            gens.push([a, b, c, d]);
            invs.push([d, (m - b) % m, (m - c) % m, a]);
        }
        let mul = |x: &[u64; 4], y: &[u64; 4]| -> [u64; 4] {
            [
                (x[0] * y[0] + x[1] * y[2]) % m,
                (x[0] * y[1] + x[1] * y[3]) % m,
                (x[2] * y[0] + x[3] * y[2]) % m,
                (x[2] * y[1] + x[3] * y[3]) % m,
            ]
        };
        let n = gens.len();
        let identity = [1 % m, 0, 0, 1 % m];
        let mut elements = vec![identity];
        let mut index: HashMap<[u64; 4], u32> = HashMap::from([(identity, 0)]);
        let mut perms = vec![Vec::new(); n];
        let mut head = 0;
        while head < elements.len() {
            let x = elements[head];
            head += 1;
            for g in 0..n {
                for (k, y) in [mul(&x, &gens[g]), mul(&x, &invs[g])].into_iter().enumerate() {
                    let next = index.len() as u32;
                    let id = *index.entry(y).or_insert_with(|| {
                        elements.push(y);
                        next
                    });
                    if k == 0 {
                        perms[g].push(id);
                    }
                }
            }
            if elements.len() as u64 > budget {
                return Err(CoarseError::budget(
                    "vertices",
                    format!("more than {budget} (|SL2(Z/{m})| = {})", sl2_order(m)),
                    budget,
                ));
            }
        }
        Ok(Self::from_canonical(
            n,
            perms,
            format!("{FREE_PREFIX}F{n} -> SL2(Z/{m})"),
        ))
    }

    /// Regular Cayley graph of `Z/m1 x ... x Z/mk` on the standard
    /// generators. With one factor this is a quotient of the free group
    /// `F_1 = Z`.
    pub fn abelian(moduli: &[u32], budget: u64) -> Result<Self> {
        if moduli.is_empty() || moduli.contains(&0) {
            return Err(CoarseError::InvalidArgument(
                "moduli must be a nonempty list of positive integers".into(),
            ));
        }
        let order = moduli.iter().try_fold(1u64, |acc, &m| acc.checked_mul(m as u64));
        match order {
            Some(o) if o <= budget => {}
            _ => {
                let projected = moduli.iter().map(|&m| BigUint::from(m)).product::<BigUint>();
                return Err(CoarseError::budget("vertices", projected, budget));
            }
        }
        let order = order.unwrap_or(0) as usize;
        let mut stride = 1usize;
        let mut perms = Vec::new();
        for &m in moduli {
            let m = m as usize;
            let s = stride;
            perms.push(
                (0..order)
                    .map(|v| {
                        let digit = (v / s) % m;
                        let next = (digit + 1) % m;
                        (v - digit * s + next * s) as u32
                    })
                    .collect(),
            );
            stride *= m;
        }
        let label = moduli.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        let provenance = if moduli.len() == 1 {
            format!("{FREE_PREFIX}F1 -> Z/{label}")
        } else {
            format!("Z^{} -> Z/({label})", moduli.len())
        };
        Self::from_permutations(moduli.len(), perms, provenance)
    }

    /// Cycle graph `C_n` as the Cayley graph of `Z/n`.
    pub fn cycle(n: u32) -> Result<Self> {
        Self::abelian(&[n], u64::MAX)
    }

    /// One vertex with `n` loops: `F_n / F_n`, the base of the homology tower.
    pub fn bouquet(n_generators: usize) -> Self {
        Self::from_canonical(
            n_generators,
            vec![vec![0]; n_generators],
            format!("{FREE_PREFIX}F{n_generators}"),
        )
    }

    pub fn n_generators(&self) -> usize {
        self.n_generators
    }

    pub fn num_vertices(&self) -> usize {
        self.perms.first().map_or(1, Vec::len)
    }

    /// One edge per (vertex, generator).
    pub fn num_edges(&self) -> usize {
        self.num_vertices() * self.n_generators
    }

    /// `E - V + 1`, the rank of the free fundamental group of the graph.
    pub fn graph_betti(&self) -> usize {
        self.num_edges() + 1 - self.num_vertices()
    }

    pub fn perms(&self) -> &[Vec<u32>] {
        &self.perms
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn is_free_quotient(&self) -> bool {
        self.provenance.starts_with(FREE_PREFIX)
    }

    /// Directed edge list, edge id `v * n + (g - 1)`.
    pub fn edge_list(&self) -> Vec<(u32, u32)> {
        let n = self.n_generators;
        (0..self.num_vertices())
            .flat_map(|v| (0..n).map(move |g| (v, g)))
            .map(|(v, g)| (v as u32, self.perms[g][v]))
            .collect()
    }

    /// Right action of a single letter.
    #[inline]
    pub fn step(&self, v: u32, letter: i32) -> u32 {
        let g = letter.unsigned_abs() as usize - 1;
        if letter > 0 {
            self.perms[g][v as usize]
        } else {
            self.inverses[g][v as usize]
        }
    }

    /// Endpoint of the walk spelling `w` from `start`.
    pub fn evaluate(&self, w: &Word, start: u32) -> Result<u32> {
        w.check_alphabet(self.n_generators)?;
        Ok(w.letters().iter().fold(start, |v, &l| self.step(v, l)))
    }

    /// Vertices visited by the walk spelling `w` (length `|w| + 1`).
    pub fn trace(&self, w: &Word, start: u32) -> Result<Vec<u32>> {
        w.check_alphabet(self.n_generators)?;
        let mut out = Vec::with_capacity(w.len() + 1);
        out.push(start);
        let mut v = start;
        for &l in w.letters() {
            v = self.step(v, l);
            out.push(v);
        }
        Ok(out)
    }

    /// Undirected neighbours in canonical order (generator, then inverse).
    pub fn neighbours(&self, v: u32) -> impl Iterator<Item = (i32, u32)> + '_ {
        (0..self.n_generators).flat_map(move |g| {
            [
                ((g + 1) as i32, self.perms[g][v as usize]),
                (-((g + 1) as i32), self.inverses[g][v as usize]),
            ]
        })
    }

    /// BFS from `v`: distances plus the letter used to reach each vertex.
    fn bfs_tree(&self, v: u32) -> (Vec<u32>, Vec<i32>) {
        let nv = self.num_vertices();
        let mut dist = vec![u32::MAX; nv];
        let mut via = vec![0i32; nv];
        dist[v as usize] = 0;
        let mut queue = VecDeque::from([v]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u as usize];
            for (l, w) in self.neighbours(u) {
                if dist[w as usize] == u32::MAX {
                    dist[w as usize] = du + 1;
                    via[w as usize] = l;
                    queue.push_back(w);
                }
            }
        }
        (dist, via)
    }

    /// Hop distances from `v`, each generator edge undirected of length 1.
    pub fn bfs_distances(&self, v: u32) -> Vec<u32> {
        self.bfs_tree(v).0
    }

    /// A shortest word from `from` to `to`.
    pub fn geodesic_word(&self, from: u32, to: u32) -> Word {
        let (_, via) = self.bfs_tree(from);
        let mut letters = Vec::new();
        let mut at = to;
        while at != from {
            let l = via[at as usize];
            letters.push(l);
            at = self.step(at, -l);
        }
        letters.reverse();
        Word::new(letters)
    }

    /// Vertices within distance `r` of `v`, in BFS order.
    pub fn ball(&self, v: u32, r: u32) -> Vec<u32> {
        let mut seen: HashMap<u32, u32> = HashMap::from([(v, 0)]);
        let mut order = vec![v];
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            let du = seen[&u];
            if du == r {
                continue;
            }
            for (_, w) in self.neighbours(u) {
                if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(w) {
                    e.insert(du + 1);
                    order.push(w);
                }
            }
        }
        order
    }

    /// Bounded test `d(u, v) <= r`.
    pub fn within(&self, u: u32, v: u32, r: u32) -> bool {
        u == v || self.ball(u, r).contains(&v)
    }

    /// Diameter, computed as the eccentricity of the basepoint (Cayley graphs
    /// are vertex-transitive).
    pub fn diameter(&self) -> u32 {
        self.bfs_distances(0).into_iter().max().unwrap_or(0)
    }

    /// Diameter as the maximum eccentricity over all vertices.
    pub fn diameter_exhaustive(&self) -> u32 {
        (0..self.num_vertices() as u32)
            .map(|v| self.bfs_distances(v).into_iter().max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// Shortest nonempty freely reduced word closed at the basepoint, found
    /// by BFS over non-backtracking (vertex, last letter) states.
    pub fn girth_word(&self) -> Result<(usize, Word)> {
        let letters = 2 * self.n_generators;
        if letters == 0 {
            return Err(CoarseError::NoCycle);
        }
        let nv = self.num_vertices();
        let state = |v: u32, li: usize| v as usize * letters + li;
        let mut parent = vec![u32::MAX; nv * letters];
        let mut queue = VecDeque::new();
        const ROOT: u32 = u32::MAX - 1;
        let rebuild = |parent: &[u32], mut s: usize| -> Word {
            let mut out = Vec::new();
            loop {
                out.push(letter_of_index(s % letters));
                let p = parent[s];
                if p == ROOT {
                    break;
                }
                s = p as usize;
            }
            out.reverse();
            Word::new(out)
        };
        for li in 0..letters {
            let w = self.step(0, letter_of_index(li));
            let s = state(w, li);
            if parent[s] == u32::MAX {
                parent[s] = ROOT;
                if w == 0 {
                    return Ok((1, Word::letter(letter_of_index(li))));
                }
                queue.push_back(s);
            }
        }
        while let Some(s) = queue.pop_front() {
            let v = (s / letters) as u32;
            let last = letter_of_index(s % letters);
            for li in 0..letters {
                let l = letter_of_index(li);
                if l == -last {
                    continue;
                }
                let w = self.step(v, l);
                let t = state(w, li);
                if parent[t] != u32::MAX {
                    continue;
                }
                parent[t] = s as u32;
                if w == 0 {
                    let word = rebuild(&parent, t);
                    return Ok((word.len(), word));
                }
                queue.push_back(t);
            }
        }
        Err(CoarseError::NoCycle)
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            n_generators: self.n_generators,
            num_vertices: self.num_vertices(),
            perms: self.perms.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn from_json(g: GraphJson) -> Result<Self> {
        if g.perms.len() != g.n_generators {
            return Err(CoarseError::InvalidArgument(format!(
                "n_generators = {} but {} permutations given",
                g.n_generators,
                g.perms.len()
            )));
        }
        if g.perms.iter().any(|p| p.len() != g.num_vertices) {
            return Err(CoarseError::InvalidArgument(
                "permutation length differs from num_vertices".into(),
            ));
        }
        let n = g.n_generators;
        if n == 0 {
            return Ok(Self::from_canonical(0, Vec::new(), g.provenance));
        }
        Self::from_permutations(n, g.perms, g.provenance)
    }

    /// Graphviz rendering, one directed edge per (vertex, generator).
    pub fn to_dot(&self, comments: &[String]) -> String {
        let mut s = String::from("digraph cayley {\n");
        let _ = writeln!(s, "  // provenance: {}", self.provenance);
        for c in comments {
            let _ = writeln!(s, "  // {c}");
        }
        for v in 0..self.num_vertices() {
            for g in 0..self.n_generators {
                let _ = writeln!(s, "  {v} -> {} [label=\"s{}\"];", self.perms[g][v], g + 1);
            }
        }
        s.push_str("}\n");
        s
    }
}

/// `|SL_2(Z/m)| = m^3 prod_{p | m} (1 - 1/p^2)`.
pub fn sl2_order(m: u64) -> BigUint {
    let mut order = BigUint::from(m).pow(3);
    let mut rest = m;
    let mut p = 2;
    while p * p <= rest {
        if rest % p == 0 {
            order = order / (p * p) * (p * p - 1);
            while rest % p == 0 {
                rest /= p;
            }
        }
        p += 1;
    }
    if rest > 1 {
        order = order / (rest * rest) * (rest * rest - 1);
    }
    order
}

/// Generators of the level-2 principal congruence subgroup, a free group of
/// rank 2 and index 12 in `SL_2(Z)`.
pub const SL2_FREE_GENERATORS: [[i64; 4]; 2] = [[1, 2, 0, 1], [1, 0, 2, 1]];

/// A regular cover with its projection.
#[derive(Debug, Clone)]
pub struct Covering {
    pub cover: CayleyQuotient,
    /// Base vertex under each cover vertex.
    pub projection: Vec<u32>,
    /// Fiber coordinate in `(Z/m)^rank`, digits base `m`.
    pub voltage: Vec<u64>,
    pub deck_rank: usize,
    pub modulus: u32,
}

impl Covering {
    /// Digit `j` of the voltage of cover vertex `v`.
    pub fn voltage_digit(&self, v: u32, j: usize) -> u64 {
        let m = self.modulus as u64;
        (self.voltage[v as usize] / m.pow(j as u32)) % m
    }
}

/// Mod-`m` homology cover of a free-group quotient by spanning-tree voltages.
///
/// Tree edges of the canonical BFS tree carry voltage 0 and the `j`-th
/// non-tree edge carries the `j`-th basis vector of `(Z/m)^(E-V+1)`. The
/// result is the Cayley graph of `F/N^m[N, N]`.
pub fn voltage_cover(x: &CayleyQuotient, m: u32, budget: u64) -> Result<Covering> {
    if !x.is_free_quotient() {
        return Err(CoarseError::UnsupportedBase(format!(
            "voltage covers need a free-group quotient, got `{}`",
            x.provenance
        )));
    }
    if m < 2 {
        return Err(CoarseError::InvalidArgument(format!("modulus {m} < 2")));
    }
    let nv = x.num_vertices();
    let n = x.n_generators;
    let rank = x.graph_betti();
    let projected = BigUint::from(m).pow(rank as u32) * BigUint::from(nv);
    if projected > BigUint::from(budget) {
        return Err(CoarseError::budget("vertices", projected, budget));
    }
    let fiber = (m as u64).pow(rank as u32);
    let edges = x.edge_list();
    let (in_tree, _) = bfs_spanning_tree(nv, &edges);
    let mut basis = vec![None; edges.len()];
    let mut j = 0usize;
    for (id, &t) in in_tree.iter().enumerate() {
        if !t {
            basis[id] = Some(j);
            j += 1;
        }
    }
    let mpow: Vec<u64> = (0..rank as u32).map(|k| (m as u64).pow(k)).collect();
    let total = nv * fiber as usize;
    let mut raw: Vec<Vec<u32>> = vec![Vec::with_capacity(total); n];
    for v in 0..nv {
        for code in 0..fiber {
            for g in 0..n {
                let id = v * n + g;
                let target = x.perms[g][v] as u64;
                let new_code = match basis[id] {
                    None => code,
                    Some(k) => {
                        let digit = (code / mpow[k]) % m as u64;
                        if digit + 1 == m as u64 {
                            code - digit * mpow[k]
                        } else {
                            code + mpow[k]
                        }
                    }
                };
                raw[g].push((target * fiber + new_code) as u32);
            }
        }
    }
    let inverses: Vec<Vec<u32>> = raw
        .iter()
        .enumerate()
        .map(|(i, p)| invert(p, i))
        .collect::<Result<_>>()?;
    let (perms, old_of_new) = canonicalize(&raw, &inverses, total);
    if old_of_new.len() != total {
        return Err(CoarseError::Internal(format!(
            "voltage cover is disconnected: {} of {total} vertices reached",
            old_of_new.len()
        )));
    }
    let projection = old_of_new.iter().map(|&o| (o as u64 / fiber) as u32).collect();
    let voltage = old_of_new.iter().map(|&o| o as u64 % fiber).collect();
    let provenance = format!("{} / hom{m}", x.provenance);
    Ok(Covering {
        cover: CayleyQuotient::from_canonical(n, perms, provenance),
        projection,
        voltage,
        deck_rank: rank,
        modulus: m,
    })
}

/// What is known about the word problem of the group being quotiented.
#[derive(Debug, Clone)]
pub enum WordProblem {
    /// `G` is free on the generators: a closed reduced word is nontrivial.
    Free,
    /// `G = Z^n / L`: a word is trivial iff its exponent sums lie in `L`.
    Abelian(Lattice),
    /// Nothing beyond the graph: only free reduction is trusted.
    Unknown,
}

impl WordProblem {
    pub fn from_presentation(p: &Presentation) -> Self {
        if p.is_free() {
            WordProblem::Free
        } else if let Some(l) = p.abelian_relation_lattice() {
            WordProblem::Abelian(l)
        } else {
            WordProblem::Unknown
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystoleKind {
    Exact,
    LowerBound,
}

/// Certified value (or lower bound) of the shortest nontrivial element of
/// `N` in `G`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystoleCertificate {
    pub kind: SystoleKind,
    pub value: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Word>,
    /// Known upper bound when only a lower bound is certified.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_bound: Option<usize>,
    pub deep_provenance: Option<String>,
}

/// Shortest closed reduced word at the basepoint of `deep` that is
/// nontrivial in `G`. Always a lower bound for the systole of `N_deep`.
pub fn relative_girth(deep: &CayleyQuotient, wp: &WordProblem) -> Result<usize> {
    let lattice = match wp {
        WordProblem::Abelian(l) => l,
        WordProblem::Free | WordProblem::Unknown => return deep.girth_word().map(|(l, _)| l),
    };
    // Shortest nontrivial loops through the basepoint are fundamental cycles
    // of a shortest-path tree, because triviality in G is a homomorphism
    // condition on loops.
    let n = deep.n_generators;
    let (dist, via) = deep.bfs_tree(0);
    let nv = deep.num_vertices();
    let mut sums: Vec<Vec<i64>> = vec![Vec::new(); nv];
    sums[0] = vec![0; n];
    let mut order: Vec<u32> = (0..nv as u32).collect();
    order.sort_by_key(|&v| dist[v as usize]);
    for &v in order.iter().skip(1) {
        let l = via[v as usize];
        let p = deep.step(v, -l);
        let mut s = sums[p as usize].clone();
        s[l.unsigned_abs() as usize - 1] += l.signum() as i64;
        sums[v as usize] = s;
    }
    let mut best: Option<usize> = None;
    for v in 0..nv as u32 {
        for g in 0..n {
            let w = deep.perms[g][v as usize];
            if w != 0 && via[w as usize] == (g + 1) as i32 {
                continue;
            }
            let len = (dist[v as usize] + 1 + dist[w as usize]) as usize;
            if best.is_some_and(|b| b <= len) {
                continue;
            }
            let ex: Vec<i64> = (0..n)
                .map(|k| sums[v as usize][k] + i64::from(k == g) - sums[w as usize][k])
                .collect();
            if !lattice.contains(&ex) {
                best = Some(len);
            }
        }
    }
    best.ok_or(CoarseError::NoCycle)
}

/// Certifies the systole of `N_shallow` using a deeper quotient.
///
/// Runs a BFS on `deep` carrying the induced shallow vertex. The shortest
/// word closed in `shallow` but open in `deep` is a nontrivial element of
/// `N_shallow`; it is exact whenever it is shorter than every nontrivial
/// element of `N_deep`, which is bounded below by [`relative_girth`].
pub fn systole_certified(
    shallow: &CayleyQuotient,
    deep: &CayleyQuotient,
    wp: &WordProblem,
) -> Result<SystoleCertificate> {
    if shallow.n_generators != deep.n_generators {
        return Err(CoarseError::InvalidArgument(
            "shallow and deep quotients use different generating sets".into(),
        ));
    }
    let nv = deep.num_vertices();
    let mut image = vec![u32::MAX; nv];
    let mut dist = vec![u32::MAX; nv];
    let mut via = vec![0i32; nv];
    image[0] = 0;
    dist[0] = 0;
    let mut queue = VecDeque::from([0u32]);
    let mut separating: Option<u32> = None;
    while let Some(d) = queue.pop_front() {
        let s = image[d as usize];
        for (l, e) in deep.neighbours(d) {
            let t = shallow.step(s, l);
            if image[e as usize] == u32::MAX {
                image[e as usize] = t;
                dist[e as usize] = dist[d as usize] + 1;
                via[e as usize] = l;
                if t == 0 && separating.is_none() {
                    separating = Some(e);
                }
                queue.push_back(e);
            } else if image[e as usize] != t {
                return Err(CoarseError::InconsistentTower(format!(
                    "deep quotient `{}` does not refine shallow quotient `{}`",
                    deep.provenance, shallow.provenance
                )));
            }
        }
    }
    let deep_bound = relative_girth(deep, wp)?;
    let deep_provenance = Some(deep.provenance.clone());
    match separating {
        Some(e) if (dist[e as usize] as usize) < deep_bound => {
            let mut letters = Vec::new();
            let mut at = e;
            while at != 0 {
                let l = via[at as usize];
                letters.push(l);
                at = deep.step(at, -l);
            }
            letters.reverse();
            Ok(SystoleCertificate {
                kind: SystoleKind::Exact,
                value: letters.len(),
                witness: Some(Word::new(letters)),
                upper_bound: None,
                deep_provenance,
            })
        }
        other => Ok(SystoleCertificate {
            kind: SystoleKind::LowerBound,
            value: deep_bound,
            witness: None,
            upper_bound: other.map(|e| dist[e as usize] as usize),
            deep_provenance,
        }),
    }
}

/// For a quotient of a free group the systole is the reduced girth itself.
pub fn free_systole(x: &CayleyQuotient) -> Result<SystoleCertificate> {
    let (value, witness) = x.girth_word()?;
    Ok(SystoleCertificate {
        kind: SystoleKind::Exact,
        value,
        witness: Some(witness),
        upper_bound: None,
        deep_provenance: None,
    })
}

/// Lifts an r-path of the base to the cover, starting at `start`.
///
/// Each step goes to the unique preimage of the next point within distance
/// `r` of the current lifted point; uniqueness holds when `2r` is below the
/// systole of the covering.
pub fn lift_path(p: &RPath, base: &CayleyQuotient, cov: &Covering, start: u32) -> Result<RPath> {
    if p.graph() != base.fingerprint() {
        return Err(CoarseError::GraphMismatch);
    }
    let pts = p.points();
    if cov.projection.len() != cov.cover.num_vertices()
        || cov.projection.get(start as usize) != Some(&pts[0])
    {
        return Err(CoarseError::Precondition(format!(
            "start vertex {start} does not lie over {}",
            pts[0]
        )));
    }
    let r = p.scale();
    let mut lifted = vec![start];
    for (i, &target) in pts.iter().enumerate().skip(1) {
        let cur = *lifted.last().expect("nonempty");
        let candidates: Vec<u32> = cov
            .cover
            .ball(cur, r)
            .into_iter()
            .filter(|&w| cov.projection[w as usize] == target)
            .collect();
        match candidates.as_slice() {
            [w] => lifted.push(*w),
            _ => {
                return Err(CoarseError::AmbiguousLift {
                    step: i,
                    candidates: candidates.len(),
                    r,
                })
            }
        }
    }
    RPath::new(&cov.cover, r, lifted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::words::parse_presentation;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn cyc(n: u32) -> CayleyQuotient {
        CayleyQuotient::cycle(n).unwrap()
    }

    #[test]
    fn from_permutations_examples() {
        let c3 = CayleyQuotient::from_permutations(1, vec![vec![1, 2, 0]], "free:F1 -> Z/3").unwrap();
        assert_eq!(c3.num_vertices(), 3);
        let triv = CayleyQuotient::from_permutations(2, vec![vec![0], vec![0]], "free:F2").unwrap();
        assert_eq!(triv.num_vertices(), 1);
        let klein = CayleyQuotient::from_permutations(
            2,
            vec![vec![1, 0, 3, 2], vec![2, 3, 0, 1]],
            "Z2xZ2",
        )
        .unwrap();
        assert_eq!(klein.num_vertices(), 4);
    }

    #[test]
    fn from_permutations_restricts_to_orbit_and_relabels() {
        // Two 2-cycles; only the orbit {0, 3} survives, relabeled to {0, 1}.
        let x = CayleyQuotient::from_permutations(1, vec![vec![3, 2, 1, 0]], "t").unwrap();
        assert_eq!(x.num_vertices(), 2);
        assert_eq!(x.perms()[0], vec![1, 0]);
    }

    #[test]
    fn from_permutations_rejects_non_bijection() {
        assert!(matches!(
            CayleyQuotient::from_permutations(1, vec![vec![0, 0, 1]], "bad"),
            Err(CoarseError::NotBijective { .. })
        ));
        assert!(CayleyQuotient::from_permutations(2, vec![vec![0, 1], vec![0]], "bad").is_err());
    }

    #[test]
    fn sl2_congruence_images() {
        for (m, expected) in [(4u64, 4usize), (8, 32), (16, 256)] {
            let x = CayleyQuotient::from_matrices_sl2(m, &SL2_FREE_GENERATORS, DEFAULT_VERTEX_BUDGET).unwrap();
            assert_eq!(x.num_vertices(), expected, "modulus {m}");
            assert!(x.is_free_quotient());
        }
    }

    #[test]
    fn sl2_rejects_bad_determinant_and_budget() {
        assert!(matches!(
            CayleyQuotient::from_matrices_sl2(5, &[[2, 0, 0, 1]], 100),
            Err(CoarseError::Determinant { .. })
        ));
        assert!(matches!(
            CayleyQuotient::from_matrices_sl2(16, &SL2_FREE_GENERATORS, 100),
            Err(CoarseError::Budget { .. })
        ));
    }

    #[test]
    fn sl2_order_formula() {
        assert_eq!(sl2_order(2), BigUint::from(6u32));
        assert_eq!(sl2_order(7), BigUint::from(336u32));
        assert_eq!(sl2_order(4), BigUint::from(48u32));
    }

    #[test]
    fn voltage_cover_examples() {
        let b = CayleyQuotient::bouquet(2);
        let c1 = voltage_cover(&b, 2, 1000).unwrap();
        assert_eq!(c1.cover.num_vertices(), 4);
        let c2 = voltage_cover(&c1.cover, 2, 1000).unwrap();
        assert_eq!(c2.cover.num_vertices(), 4 * (1 << (8 - 4 + 1)));
        let c9 = voltage_cover(&cyc(9), 3, 1000).unwrap();
        assert_eq!(c9.cover.num_vertices(), 27);
        assert_eq!(c9.deck_rank, 1);
    }

    #[test]
    fn voltage_cover_projection_is_a_graph_morphism() {
        let c1 = voltage_cover(&CayleyQuotient::bouquet(2), 2, 1000).unwrap();
        let c2 = voltage_cover(&c1.cover, 2, 1000).unwrap();
        for v in 0..c2.cover.num_vertices() as u32 {
            for l in [1, -1, 2, -2] {
                let up = c2.cover.step(v, l);
                assert_eq!(c2.projection[up as usize], c1.cover.step(c2.projection[v as usize], l));
            }
        }
        assert_eq!(c2.projection[0], 0);
        assert_eq!(c2.voltage[0], 0);
    }

    #[test]
    fn voltage_cover_errors() {
        let torus = CayleyQuotient::abelian(&[3, 3], 100).unwrap();
        assert!(matches!(voltage_cover(&torus, 2, 1000), Err(CoarseError::UnsupportedBase(_))));
        let c1 = voltage_cover(&CayleyQuotient::bouquet(2), 2, 1000).unwrap();
        assert!(matches!(voltage_cover(&c1.cover, 2, 100), Err(CoarseError::Budget { .. })));
    }

    #[test]
    fn bfs_examples() {
        let c6 = cyc(6);
        let d = c6.bfs_distances(0);
        let by_power: Vec<u32> = (0..6).map(|k| d[c6.evaluate(&Word::new(vec![1; k]), 0).unwrap() as usize]).collect();
        assert_eq!(by_power, vec![0, 1, 2, 3, 2, 1]);
        assert_eq!(CayleyQuotient::bouquet(2).bfs_distances(0), vec![0]);
        let klein = CayleyQuotient::abelian(&[2, 2], 100).unwrap();
        for v in 0..4 {
            assert_eq!(klein.bfs_distances(v).into_iter().max(), Some(2));
        }
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(cyc(4).diameter(), 2);
        assert_eq!(cyc(3).diameter(), 1);
        assert_eq!(CayleyQuotient::bouquet(3).diameter(), 0);
        let x = CayleyQuotient::from_matrices_sl2(8, &SL2_FREE_GENERATORS, 1000).unwrap();
        assert_eq!(x.diameter(), x.diameter_exhaustive());
    }

    #[test]
    fn girth_examples() {
        let (len, w) = cyc(12).girth_word().unwrap();
        assert_eq!(len, 12);
        assert_eq!(w, Word::new(vec![1; 12]));
        let klein = CayleyQuotient::abelian(&[2, 2], 100).unwrap();
        assert_eq!(klein.girth_word().unwrap(), (2, Word::new(vec![1, 1])));
        let hom = voltage_cover(&CayleyQuotient::bouquet(2), 2, 100).unwrap().cover;
        assert_eq!(hom.girth_word().unwrap().0, brute_force_girth(&hom, 4).unwrap());
        assert_eq!(hom.girth_word().unwrap().0, 2);
    }

    #[test]
    fn girth_of_one_vertex_and_no_generators() {
        assert_eq!(CayleyQuotient::bouquet(2).girth_word().unwrap().0, 1);
        assert!(matches!(CayleyQuotient::bouquet(0).girth_word(), Err(CoarseError::NoCycle)));
    }

    /// Enumerates reduced words up to `max_len` and evaluates them.
    fn brute_force_girth(x: &CayleyQuotient, max_len: usize) -> Option<usize> {
        let n = x.n_generators() as i32;
        let alphabet: Vec<i32> = (1..=n).flat_map(|g| [g, -g]).collect();
        let mut frontier: Vec<(Vec<i32>, u32)> = vec![(vec![], 0)];
        for len in 1..=max_len {
            let mut next = Vec::new();
            for (w, v) in &frontier {
                for &l in &alphabet {
                    if w.last() == Some(&-l) {
                        continue;
                    }
                    let u = x.step(*v, l);
                    if u == 0 {
                        return Some(len);
                    }
                    let mut w2 = w.clone();
                    w2.push(l);
                    next.push((w2, u));
                }
            }
            frontier = next;
        }
        None
    }

    #[test]
    fn girth_invariant_under_generator_reordering() {
        let x = CayleyQuotient::from_matrices_sl2(8, &SL2_FREE_GENERATORS, 1000).unwrap();
        let swapped = CayleyQuotient::from_matrices_sl2(
            8,
            &[SL2_FREE_GENERATORS[1], SL2_FREE_GENERATORS[0]],
            1000,
        )
        .unwrap();
        assert_eq!(x.girth_word().unwrap().0, swapped.girth_word().unwrap().0);
        assert_eq!(x.girth_word().unwrap().0, brute_force_girth(&x, 8).unwrap());
        let t = CayleyQuotient::abelian(&[4, 6], 100).unwrap();
        let t2 = CayleyQuotient::abelian(&[6, 4], 100).unwrap();
        assert_eq!(t.girth_word().unwrap().0, t2.girth_word().unwrap().0);
    }

    #[test]
    fn nielsen_schreier_graph_rank() {
        for x in [
            CayleyQuotient::from_matrices_sl2(4, &SL2_FREE_GENERATORS, 1000).unwrap(),
            CayleyQuotient::from_matrices_sl2(8, &SL2_FREE_GENERATORS, 1000).unwrap(),
            voltage_cover(&CayleyQuotient::bouquet(3), 2, 1000).unwrap().cover,
        ] {
            let v = x.num_vertices();
            assert_eq!(x.graph_betti(), v * (x.n_generators() - 1) + 1);
        }
    }

    #[test]
    fn systole_shallow_equals_deep() {
        let x = cyc(12);
        let cert = systole_certified(&x, &x, &WordProblem::Free).unwrap();
        assert_eq!(cert.kind, SystoleKind::LowerBound);
        assert_eq!(cert.value, 12);
    }

    #[test]
    fn systole_trivial_shallow() {
        let triv = CayleyQuotient::bouquet(1);
        let cert = systole_certified(&triv, &cyc(12), &WordProblem::Free).unwrap();
        assert_eq!(cert.kind, SystoleKind::Exact);
        assert_eq!(cert.value, 1);
        assert_eq!(cert.witness, Some(Word::letter(1)));
    }

    #[test]
    fn systole_homology_level_against_free_ball() {
        let shallow = voltage_cover(&CayleyQuotient::bouquet(2), 2, 1000).unwrap().cover;
        let deep = voltage_cover(&shallow, 2, 1000).unwrap().cover;
        let cert = systole_certified(&shallow, &deep, &WordProblem::Free).unwrap();
        assert_eq!(cert.kind, SystoleKind::Exact);
        // Oracle: N_2 = kernel of F_2 -> (Z/2)^2, i.e. both exponent sums even.
        let mut best = None;
        let alphabet = [1, -1, 2, -2];
        let mut frontier: Vec<Vec<i32>> = vec![vec![]];
        'outer: for len in 1..=8 {
            let mut next = Vec::new();
            for w in &frontier {
                for &l in &alphabet {
                    if w.last() == Some(&-l) {
                        continue;
                    }
                    let mut w2 = w.clone();
                    w2.push(l);
                    let s = Word::new(w2.clone()).exponent_sums(2);
                    if s.iter().all(|x| x % 2 == 0) {
                        best = Some(len);
                        break 'outer;
                    }
                    next.push(w2);
                }
            }
            frontier = next;
        }
        assert_eq!(Some(cert.value), best);
        let w = cert.witness.unwrap();
        assert_eq!(shallow.evaluate(&w, 0).unwrap(), 0);
        assert_ne!(deep.evaluate(&w, 0).unwrap(), 0);
        assert!(w.is_reduced());
    }

    #[test]
    fn systole_detects_non_refinement() {
        assert!(matches!(
            systole_certified(&cyc(5), &cyc(12), &WordProblem::Free),
            Err(CoarseError::InconsistentTower(_))
        ));
    }

    #[test]
    fn systole_torus_uses_abelian_word_problem() {
        let p = parse_presentation("gens 2; rel abAB").unwrap();
        let wp = WordProblem::from_presentation(&p);
        let shallow = CayleyQuotient::abelian(&[10, 10], 1000).unwrap();
        let deep = CayleyQuotient::abelian(&[100, 100], 100_000).unwrap();
        assert_eq!(relative_girth(&deep, &wp).unwrap(), 100);
        let cert = systole_certified(&shallow, &deep, &wp).unwrap();
        assert_eq!((cert.kind, cert.value), (SystoleKind::Exact, 10));
        // Without the word problem the commutator square is all we can see.
        let weak = systole_certified(&shallow, &deep, &WordProblem::Unknown).unwrap();
        assert_eq!((weak.kind, weak.value, weak.upper_bound), (SystoleKind::LowerBound, 4, Some(10)));
    }

    #[test]
    fn relative_girth_free_matches_fundamental_cycles() {
        let x = CayleyQuotient::from_matrices_sl2(16, &SL2_FREE_GENERATORS, 1000).unwrap();
        // A trivial lattice in Z^2 makes "nontrivial" mean nonzero exponent
        // sums, which over-restricts; free girth is the plain girth.
        assert_eq!(relative_girth(&x, &WordProblem::Free).unwrap(), x.girth_word().unwrap().0);
    }

    #[test]
    fn lift_examples() {
        let c9 = cyc(9);
        let cov = voltage_cover(&c9, 3, 1000).unwrap();
        let constant = RPath::new(&c9, 1, vec![0; 4]).unwrap();
        let lifted = lift_path(&constant, &c9, &cov, 0).unwrap();
        assert_eq!(lifted.points(), &[0; 4]);

        let p = RPath::from_steps(&c9, 1, &[1; 9], 0).unwrap();
        let lifted = lift_path(&p, &c9, &cov, 0).unwrap();
        let end = *lifted.points().last().unwrap();
        assert_eq!(cov.projection[end as usize], 0);
        assert_eq!(cov.cover.bfs_distances(0)[end as usize], 9);
    }

    #[test]
    fn lift_tree_edges_stay_in_voltage_zero() {
        let base = cyc(9);
        let cov = voltage_cover(&base, 3, 10_000).unwrap();
        let (in_tree, _) = bfs_spanning_tree(base.num_vertices(), &base.edge_list());
        // Walk tree edges from 0 along BFS discovery.
        let mut path = vec![0u32];
        for (id, &t) in in_tree.iter().enumerate() {
            let (u, v) = base.edge_list()[id];
            if t && u == *path.last().unwrap() {
                path.push(v);
            }
        }
        assert!(path.len() > 1);
        let p = RPath::new(&base, 1, path).unwrap();
        let lifted = lift_path(&p, &base, &cov, 0).unwrap();
        assert!(lifted.points().iter().all(|&v| cov.voltage[v as usize] == 0));
    }

    #[test]
    fn lift_ambiguity_is_reported() {
        let c3 = cyc(3);
        let cov = voltage_cover(&c3, 2, 100).unwrap();
        // r = 3 >= half the cover's length, so preimages collide.
        let p = RPath::new(&c3, 3, vec![0, 1]).unwrap();
        assert!(matches!(lift_path(&p, &c3, &cov, 0), Err(CoarseError::AmbiguousLift { step: 1, .. })));
    }

    #[test]
    fn json_roundtrip_and_dot() {
        let x = CayleyQuotient::from_matrices_sl2(8, &SL2_FREE_GENERATORS, 1000).unwrap();
        let text = serde_json::to_string(&x.to_json()).unwrap();
        let back = CayleyQuotient::from_json(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, x);
        let dot = cyc(3).to_dot(&[]);
        assert!(dot.contains("0 -> 1 [label=\"s1\"];"));
        assert_eq!(dot.matches("[label=").count(), 3);
    }

    #[test]
    fn random_words_evaluate_like_their_reductions() {
        let x = CayleyQuotient::from_matrices_sl2(16, &SL2_FREE_GENERATORS, 1000).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..10_000 {
            let len = rng.gen_range(0..=32);
            let w = Word::new((0..len).map(|_| *[1, -1, 2, -2].get(rng.gen_range(0..4)).unwrap()).collect());
            assert_eq!(x.evaluate(&w, 0).unwrap(), x.evaluate(&w.reduced(), 0).unwrap());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn bfs_triangle_inequality(a in 0u32..256, b in 0u32..256, c in 0u32..256) {
            thread_local! {
                static X: CayleyQuotient = CayleyQuotient::from_matrices_sl2(16, &SL2_FREE_GENERATORS, 1000).unwrap();
            }
            X.with(|x| {
                let da = x.bfs_distances(a);
                let db = x.bfs_distances(b);
                prop_assert!(da[c as usize] <= da[b as usize] + db[c as usize]);
                Ok(())
            })?;
        }
    }
}
