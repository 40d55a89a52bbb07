//! Exact integer linear algebra: sparse Smith normal form and first homology
//! of 2-complexes built on graphs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{CoarseError, Result};

/// Sparse matrix over arbitrary-precision integers. Zeros are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<BTreeMap<usize, BigInt>>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix {
            rows,
            cols,
            entries: vec![BTreeMap::new(); rows],
        }
    }

    pub fn from_dense(rows: &[Vec<i64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = IntMatrix::zeros(rows.len(), cols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged dense matrix");
            for (j, &v) in row.iter().enumerate() {
                m.add(i, j, &BigInt::from(v));
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.iter().map(BTreeMap::len).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> BigInt {
        self.entries[i].get(&j).cloned().unwrap_or_default()
    }

    /// Adds `v` to entry `(i, j)`, dropping the entry if it becomes zero.
    pub fn add(&mut self, i: usize, j: usize, v: &BigInt) {
        assert!(i < self.rows && j < self.cols, "entry ({i}, {j}) out of bounds");
        if v.is_zero() {
            return;
        }
        let row = &mut self.entries[i];
        let e = row.entry(j).or_default();
        *e += v;
        if e.is_zero() {
            row.remove(&j);
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigInt) {
        assert!(i < self.rows && j < self.cols, "entry ({i}, {j}) out of bounds");
        if v.is_zero() {
            self.entries[i].remove(&j);
        } else {
            self.entries[i].insert(j, v);
        }
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, &BigInt)> {
        self.entries[i].iter().map(|(&j, v)| (j, v))
    }
}

/// Working copy for elimination: rows plus a column occupancy index.
struct Eliminator {
    rows: Vec<BTreeMap<usize, BigInt>>,
    cols: Vec<BTreeSet<usize>>,
    active_rows: BTreeSet<usize>,
}

impl Eliminator {
    fn new(m: &IntMatrix) -> Self {
        let mut cols = vec![BTreeSet::new(); m.cols];
        for (i, row) in m.entries.iter().enumerate() {
            for &j in row.keys() {
                cols[j].insert(i);
            }
        }
        let active_rows = (0..m.rows).filter(|&i| !m.entries[i].is_empty()).collect();
        Eliminator {
            rows: m.entries.clone(),
            cols,
            active_rows,
        }
    }

    fn sub_scaled(&mut self, i: usize, j: usize, delta: &BigInt) {
        let row = &mut self.rows[i];
        let e = row.entry(j).or_default();
        let was_zero = e.is_zero();
        *e -= delta;
        if e.is_zero() {
            row.remove(&j);
            self.cols[j].remove(&i);
        } else if was_zero {
            self.cols[j].insert(i);
        }
        if self.rows[i].is_empty() {
            self.active_rows.remove(&i);
        } else {
            self.active_rows.insert(i);
        }
    }

    /// Smallest absolute value, ties broken by lowest `(row, col)`.
    fn global_pivot(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, &BigInt)> = None;
        for &i in &self.active_rows {
            for (&j, v) in &self.rows[i] {
                if v.abs().is_one() {
                    return Some((i, j));
                }
                match best {
                    Some((_, _, b)) if b.abs() <= v.abs() => {}
                    _ => best = Some((i, j, v)),
                }
            }
        }
        best.map(|(i, j, _)| (i, j))
    }

    /// Smallest entry in row `r` or column `c`.
    fn local_pivot(&self, r: usize, c: usize) -> (usize, usize) {
        let candidates = self.rows[r]
            .iter()
            .map(|(&j, v)| (v.abs(), r, j))
            .chain(self.cols[c].iter().map(|&i| (self.rows[i][&c].abs(), i, c)));
        let (_, i, j) = candidates.min().expect("pivot row and column are nonempty");
        (i, j)
    }

    /// Reduces the pivot's row and column; returns true once both hold only
    /// the pivot.
    fn sweep(&mut self, r: usize, c: usize) -> bool {
        let p = self.rows[r][&c].clone();
        let pivot_row: Vec<(usize, BigInt)> =
            self.rows[r].iter().map(|(&j, v)| (j, v.clone())).collect();
        let others: Vec<usize> = self.cols[c].iter().copied().filter(|&i| i != r).collect();
        for i in others {
            let q = &self.rows[i][&c] / &p;
            if q.is_zero() {
                continue;
            }
            for (j, v) in &pivot_row {
                self.sub_scaled(i, *j, &(&q * v));
            }
        }
        let col_rows: Vec<(usize, BigInt)> = self.cols[c]
            .iter()
            .map(|&i| (i, self.rows[i][&c].clone()))
            .collect();
        let targets: Vec<usize> = self.rows[r].keys().copied().filter(|&j| j != c).collect();
        for j in targets {
            let q = &self.rows[r][&j] / &p;
            if q.is_zero() {
                continue;
            }
            for (i, v) in &col_rows {
                self.sub_scaled(*i, j, &(&q * v));
            }
        }
        self.rows[r].len() == 1 && self.cols[c].len() == 1
    }

    fn remove_pivot(&mut self, r: usize, c: usize) -> BigInt {
        let v = self.rows[r].remove(&c).expect("pivot present");
        self.cols[c].remove(&r);
        self.active_rows.remove(&r);
        v.abs()
    }
}

/// Turns a diagonal into the invariant-factor chain `d1 | d2 | ...`.
fn normalize_diagonal(mut d: Vec<BigInt>) -> Vec<BigInt> {
    for i in 0..d.len() {
        for j in i + 1..d.len() {
            let g = d[i].gcd(&d[j]);
            let l = d[i].lcm(&d[j]);
            d[i] = g;
            d[j] = l;
        }
    }
    d
}

/// Nonzero invariant factors of `m`, in divisibility order. Their count is
/// the rank of `m`.
pub fn snf(m: &IntMatrix) -> Vec<BigInt> {
    let mut work = Eliminator::new(m);
    let mut diag = Vec::new();
    while let Some((mut r, mut c)) = work.global_pivot() {
        while !work.sweep(r, c) {
            (r, c) = work.local_pivot(r, c);
        }
        diag.push(work.remove_pivot(r, c));
    }
    normalize_diagonal(diag)
}

pub fn rank(m: &IntMatrix) -> usize {
    snf(m).len()
}

mod torsion_serde {
    use num_bigint::BigInt;
    use num_traits::ToPrimitive;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Num {
        Small(u64),
        Big(String),
    }

    pub fn serialize<S: Serializer>(v: &[BigInt], s: S) -> Result<S::Ok, S::Error> {
        let nums: Vec<Num> = v
            .iter()
            .map(|x| x.to_u64().map_or_else(|| Num::Big(x.to_string()), Num::Small))
            .collect();
        nums.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigInt>, D::Error> {
        let nums = Vec::<Num>::deserialize(d)?;
        nums.into_iter()
            .map(|n| match n {
                Num::Small(x) => Ok(BigInt::from(x)),
                Num::Big(s) => s.parse().map_err(serde::de::Error::custom),
            })
            .collect()
    }
}

/// First homology `Z^betti ⊕ ⊕ Z/t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct H1Result {
    pub betti: usize,
    #[serde(with = "torsion_serde")]
    pub torsion: Vec<BigInt>,
}

impl H1Result {
    pub fn free(betti: usize) -> Self {
        H1Result {
            betti,
            torsion: Vec::new(),
        }
    }

    pub fn torsion_u64(&self) -> Vec<u64> {
        use num_traits::ToPrimitive;
        self.torsion.iter().filter_map(ToPrimitive::to_u64).collect()
    }
}

/// One step of a boundary walk: an edge traversed forwards or backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeStep {
    pub edge: usize,
    pub forward: bool,
}

/// Closed walk bounding a 2-cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryWalk {
    pub start: u32,
    pub steps: Vec<EdgeStep>,
}

/// A connected graph with 2-cells glued along closed walks.
#[derive(Debug, Clone)]
pub struct Complex2 {
    pub num_vertices: usize,
    /// Directed edges `(tail, head)`; the index is the edge id.
    pub edges: Vec<(u32, u32)>,
    pub cells: Vec<BoundaryWalk>,
}

/// BFS spanning tree from vertex 0 scanning incident edges in id order.
/// Returns the tree flag per edge and the number of reached vertices.
pub fn bfs_spanning_tree(num_vertices: usize, edges: &[(u32, u32)]) -> (Vec<bool>, usize) {
    let mut incident: Vec<Vec<(usize, u32)>> = vec![Vec::new(); num_vertices];
    for (id, &(t, h)) in edges.iter().enumerate() {
        incident[t as usize].push((id, h));
        if t != h {
            incident[h as usize].push((id, t));
        }
    }
    for list in &mut incident {
        list.sort_unstable();
    }
    let mut in_tree = vec![false; edges.len()];
    if num_vertices == 0 {
        return (in_tree, 0);
    }
    let mut seen = vec![false; num_vertices];
    seen[0] = true;
    let mut reached = 1;
    let mut queue = VecDeque::from([0u32]);
    while let Some(v) = queue.pop_front() {
        for &(id, w) in &incident[v as usize] {
            if !seen[w as usize] {
                seen[w as usize] = true;
                in_tree[id] = true;
                reached += 1;
                queue.push_back(w);
            }
        }
    }
    (in_tree, reached)
}

/// `H_1` of a connected 2-complex: express each cell boundary in the basis of
/// non-tree edges of the BFS spanning tree and take the Smith form.
pub fn h1_from_complex(cx: &Complex2) -> Result<H1Result> {
    let (in_tree, reached) = bfs_spanning_tree(cx.num_vertices, &cx.edges);
    if reached != cx.num_vertices {
        return Err(CoarseError::Disconnected {
            reached,
            total: cx.num_vertices,
        });
    }
    let mut column = vec![usize::MAX; cx.edges.len()];
    let mut beta = 0;
    for (id, &t) in in_tree.iter().enumerate() {
        if !t {
            column[id] = beta;
            beta += 1;
        }
    }
    let mut boundary = IntMatrix::zeros(cx.cells.len(), beta);
    for (ci, walk) in cx.cells.iter().enumerate() {
        let mut at = walk.start;
        for step in &walk.steps {
            let (t, h) = cx.edges[step.edge];
            let (from, to) = if step.forward { (t, h) } else { (h, t) };
            if from != at {
                return Err(CoarseError::Precondition(format!(
                    "boundary walk {ci} is not a walk at edge {}",
                    step.edge
                )));
            }
            at = to;
            if !in_tree[step.edge] {
                let s = if step.forward { 1 } else { -1 };
                boundary.add(ci, column[step.edge], &BigInt::from(s));
            }
        }
        if at != walk.start {
            return Err(CoarseError::Precondition(format!(
                "boundary walk {ci} is not closed"
            )));
        }
    }
    let factors = snf(&boundary);
    Ok(H1Result {
        betti: beta - factors.len(),
        torsion: factors.into_iter().filter(|d| !d.is_one()).collect(),
    })
}

/// Sublattice of `Z^dim` held in row-echelon form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    dim: usize,
    /// `(pivot column, row)`, pivots strictly increasing and positive.
    basis: Vec<(usize, Vec<BigInt>)>,
}

impl Lattice {
    pub fn from_rows(dim: usize, rows: &[Vec<i64>]) -> Self {
        let mut pending: Vec<Vec<BigInt>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
            .filter(|r: &Vec<BigInt>| r.iter().any(|x| !x.is_zero()))
            .collect();
        let mut basis = Vec::new();
        for col in 0..dim {
            let (mut with, rest): (Vec<_>, Vec<_>) =
                pending.into_iter().partition(|r| !r[col].is_zero());
            pending = rest;
            // Euclid on the column until a single row has a nonzero entry.
            while with.len() > 1 {
                with.sort_by(|a, b| a[col].abs().cmp(&b[col].abs()));
                let piv = with[0].clone();
                for r in with.iter_mut().skip(1) {
                    let q = &r[col] / &piv[col];
                    for (x, y) in r.iter_mut().zip(&piv) {
                        *x -= &q * y;
                    }
                }
                let (nz, z): (Vec<_>, Vec<_>) = with.into_iter().partition(|r| !r[col].is_zero());
                with = nz;
                pending.extend(z.into_iter().filter(|r| r.iter().any(|x| !x.is_zero())));
            }
            if let Some(mut r) = with.pop() {
                if r[col].is_negative() {
                    r.iter_mut().for_each(|x| *x = -&*x);
                }
                basis.push((col, r));
            }
        }
        Lattice { dim, basis }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn contains(&self, v: &[i64]) -> bool {
        assert_eq!(v.len(), self.dim);
        let mut w: Vec<BigInt> = v.iter().map(|&x| BigInt::from(x)).collect();
        for (col, row) in &self.basis {
            let (q, rem) = w[*col].div_rem(&row[*col]);
            if !rem.is_zero() {
                return false;
            }
            for (x, y) in w.iter_mut().zip(row) {
                *x -= &q * y;
            }
        }
        w.iter().all(Zero::is_zero)
    }
}
