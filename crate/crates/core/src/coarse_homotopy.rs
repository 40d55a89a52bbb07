//! r-paths, r-closeness, constructive homotopy chains and a bounded
//! brute-force oracle for r-homotopy classes of based loops.

use std::cmp::Ordering;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::cayley::CayleyQuotient;
use crate::error::{CoarseError, Result};

pub const DEFAULT_STATE_BUDGET: u64 = 1_000_000;
pub const DEFAULT_EDGE_BUDGET: u64 = 10_000_000;

/// A vertex sequence whose consecutive points are at distance at most `r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RPath {
    #[serde(skip)]
    graph: u64,
    r: u32,
    points: Vec<u32>,
}

impl RPath {
    pub fn new(x: &CayleyQuotient, r: u32, points: Vec<u32>) -> Result<Self> {
        if r == 0 {
            return Err(CoarseError::InvalidArgument("scale r must be at least 1".into()));
        }
        if points.is_empty() {
            return Err(CoarseError::InvalidArgument("a path needs at least one point".into()));
        }
        let nv = x.num_vertices() as u32;
        if let Some(&bad) = points.iter().find(|&&p| p >= nv) {
            return Err(CoarseError::InvalidArgument(format!(
                "vertex {bad} out of range (graph has {nv})"
            )));
        }
        for (i, w) in points.windows(2).enumerate() {
            if !x.within(w[0], w[1], r) {
                return Err(CoarseError::InvalidArgument(format!(
                    "step {i} ({} -> {}) is longer than {r}",
                    w[0], w[1]
                )));
            }
        }
        Ok(RPath {
            graph: x.fingerprint(),
            r,
            points,
        })
    }

    /// 1-path spelled by `steps` from `start`; letter 0 means "stay".
    pub fn from_steps(x: &CayleyQuotient, r: u32, steps: &[i32], start: u32) -> Result<Self> {
        let n = x.n_generators() as i32;
        if let Some(&bad) = steps.iter().find(|&&l| l.abs() > n) {
            return Err(CoarseError::MalformedWord {
                letter: bad,
                n_generators: x.n_generators(),
            });
        }
        let mut points = Vec::with_capacity(steps.len() + 1);
        let mut v = start;
        points.push(v);
        for &l in steps {
            if l != 0 {
                v = x.step(v, l);
            }
            points.push(v);
        }
        RPath::new(x, r, points)
    }

    pub fn constant(x: &CayleyQuotient, r: u32, v: u32, len: usize) -> Result<Self> {
        RPath::new(x, r, vec![v; len + 1])
    }

    fn derived(&self, points: Vec<u32>) -> Self {
        RPath {
            graph: self.graph,
            r: self.r,
            points,
        }
    }

    /// Fingerprint of the graph the path lives in.
    pub fn graph(&self) -> u64 {
        self.graph
    }

    pub fn scale(&self) -> u32 {
        self.r
    }

    pub fn points(&self) -> &[u32] {
        &self.points
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.points.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn start(&self) -> u32 {
        self.points[0]
    }

    pub fn end(&self) -> u32 {
        *self.points.last().expect("paths are nonempty")
    }

    pub fn is_loop_at(&self, v: u32) -> bool {
        self.start() == v && self.end() == v
    }

    pub fn reversed(&self) -> Self {
        let mut pts = self.points.clone();
        pts.reverse();
        self.derived(pts)
    }

    /// Same points, viewed at a coarser scale.
    pub fn with_scale(&self, r: u32) -> Self {
        RPath {
            r: r.max(self.r),
            ..self.clone()
        }
    }

    /// Extends by `extra` repeats of the final point.
    pub fn padded(&self, extra: usize) -> Self {
        let mut pts = self.points.clone();
        pts.extend(std::iter::repeat(self.end()).take(extra));
        self.derived(pts)
    }

    /// Drops repeats of the final point.
    pub fn trimmed(&self) -> Self {
        let end = self.end();
        let mut pts = self.points.clone();
        while pts.len() > 1 && pts[pts.len() - 2] == end {
            pts.pop();
        }
        self.derived(pts)
    }
}

/// Which clause of r-closeness relates two paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Closeness {
    /// One path is the other followed by a constant tail.
    CaseA,
    /// Equal length, pointwise within `r`.
    CaseB,
    No,
}

fn check_graph(x: &CayleyQuotient, p: &RPath) -> Result<()> {
    if p.graph != x.fingerprint() {
        return Err(CoarseError::GraphMismatch);
    }
    Ok(())
}

pub fn is_r_close(x: &CayleyQuotient, p: &RPath, q: &RPath, r: u32) -> Result<Closeness> {
    check_graph(x, p)?;
    check_graph(x, q)?;
    match p.points.len().cmp(&q.points.len()) {
        Ordering::Equal => {
            let close = p
                .points
                .iter()
                .zip(&q.points)
                .all(|(&a, &b)| x.within(a, b, r));
            Ok(if close { Closeness::CaseB } else { Closeness::No })
        }
        ord => {
            let (short, long) = if ord == Ordering::Less { (p, q) } else { (q, p) };
            let k = short.points.len();
            let agrees = long.points[..k] == short.points[..];
            let tail = short.end();
            if agrees && long.points[k..].iter().all(|&v| v == tail) {
                Ok(Closeness::CaseA)
            } else {
                Ok(Closeness::No)
            }
        }
    }
}

/// Concatenation `p * q`; the shared point is not repeated.
pub fn concat(p: &RPath, q: &RPath) -> Result<RPath> {
    if p.graph != q.graph {
        return Err(CoarseError::GraphMismatch);
    }
    if p.end() != q.start() {
        return Err(CoarseError::EndpointMismatch {
            end: p.end(),
            start: q.start(),
        });
    }
    let mut pts = p.points.clone();
    pts.extend_from_slice(&q.points[1..]);
    Ok(RPath {
        graph: p.graph,
        r: p.r.max(q.r),
        points: pts,
    })
}

/// A finite chain of r-close paths with fixed endpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomotopyChain {
    pub r: u32,
    pub paths: Vec<RPath>,
    pub links: Vec<Closeness>,
    /// Paths need not be loops at the basepoint.
    pub open: bool,
}

impl HomotopyChain {
    fn start(x: &CayleyQuotient, p: RPath, open: bool) -> Result<Self> {
        check_graph(x, &p)?;
        let r = p.r;
        Ok(HomotopyChain {
            r,
            paths: vec![p],
            links: Vec::new(),
            open,
        })
    }

    fn push(&mut self, x: &CayleyQuotient, points: Vec<u32>) -> Result<()> {
        let last = self.paths.last().expect("chains are nonempty");
        let next = last.derived(points);
        let case = is_r_close(x, last, &next, self.r)?;
        if case == Closeness::No {
            return Err(CoarseError::Internal(format!(
                "homotopy link {} is not {}-close",
                self.links.len(),
                self.r
            )));
        }
        self.links.push(case);
        self.paths.push(next);
        Ok(())
    }

    pub fn first(&self) -> &RPath {
        &self.paths[0]
    }

    pub fn last(&self) -> &RPath {
        self.paths.last().expect("chains are nonempty")
    }

    /// Re-checks every link and the endpoint conditions from scratch.
    pub fn validate(&self, x: &CayleyQuotient) -> Result<()> {
        let (s, e) = (self.first().start(), self.first().end());
        for (i, p) in self.paths.iter().enumerate() {
            check_graph(x, p)?;
            RPath::new(x, self.r, p.points.clone())?;
            let ok = if self.open {
                p.start() == s && p.end() == e
            } else {
                p.is_loop_at(0)
            };
            if !ok {
                return Err(CoarseError::Internal(format!("path {i} moves an endpoint")));
            }
        }
        if self.links.len() + 1 != self.paths.len() {
            return Err(CoarseError::Internal("link count does not match path count".into()));
        }
        for (i, w) in self.paths.windows(2).enumerate() {
            let case = is_r_close(x, &w[0], &w[1], self.r)?;
            if case == Closeness::No || case != self.links[i] {
                return Err(CoarseError::Internal(format!(
                    "link {i}: recorded {:?}, recomputed {case:?}",
                    self.links[i]
                )));
            }
        }
        Ok(())
    }
}

fn points_of(x: &CayleyQuotient, steps: &[i32], start: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(steps.len() + 1);
    let mut v = start;
    out.push(v);
    for &l in steps {
        if l != 0 {
            v = x.step(v, l);
        }
        out.push(v);
    }
    out
}

/// Moves every interior stay to the end one link at a time, then drops the
/// constant tail in one link.
fn flush_stays(x: &CayleyQuotient, chain: &mut HomotopyChain, steps: &mut Vec<i32>, start: u32) -> Result<()> {
    loop {
        let trailing = steps.iter().rev().take_while(|&&l| l == 0).count();
        let body = steps.len() - trailing;
        match steps[..body].iter().rposition(|&l| l == 0) {
            Some(i) => {
                let e = steps.remove(i);
                steps.insert(body - 1, e);
                chain.push(x, points_of(x, steps, start))?;
            }
            None => break,
        }
    }
    if steps.last() == Some(&0) {
        steps.retain(|&l| l != 0);
        chain.push(x, points_of(x, steps, start))?;
    }
    Ok(())
}

fn chain_is_open(p: &RPath) -> bool {
    !p.is_loop_at(0)
}

/// Homotopy from the 1-path spelled by `steps` (0 = stay) to the path of its
/// free reduction.
///
/// Stays are pushed to the end and dropped; a cancelling pair `s s^-1`
/// becomes two stays in one pointwise move.
pub fn witness_reduce(x: &CayleyQuotient, steps: &[i32], start: u32, r: u32) -> Result<HomotopyChain> {
    let p = RPath::from_steps(x, r, steps, start)?;
    let mut chain = HomotopyChain::start(x, p.clone(), chain_is_open(&p))?;
    let mut w = steps.to_vec();
    flush_stays(x, &mut chain, &mut w, start)?;
    while let Some(i) = w.windows(2).position(|p| p[0] == -p[1]) {
        w[i] = 0;
        w[i + 1] = 0;
        chain.push(x, points_of(x, &w, start))?;
        flush_stays(x, &mut chain, &mut w, start)?;
    }
    Ok(chain)
}

/// Homotopy from the 1-path of `u v w` to that of `u w`, where `v` is a
/// closed word of length at most `2r`.
pub fn witness_jump(x: &CayleyQuotient, u: &[i32], v: &[i32], w: &[i32], r: u32) -> Result<HomotopyChain> {
    if v.len() > 2 * r as usize {
        return Err(CoarseError::Precondition(format!(
            "hole of length {} exceeds 2r = {}",
            v.len(),
            2 * r
        )));
    }
    if u.iter().chain(v).chain(w).any(|&l| l == 0) {
        return Err(CoarseError::InvalidArgument("witness words may not contain stays".into()));
    }
    let at = *points_of(x, u, 0).last().expect("nonempty");
    if *points_of(x, v, at).last().expect("nonempty") != at {
        return Err(CoarseError::Precondition("inserted word is not closed".into()));
    }
    let uw: Vec<i32> = u.iter().chain(w).copied().collect();
    if *points_of(x, &uw, 0).last().expect("nonempty") != 0 {
        return Err(CoarseError::Precondition("u w is not a loop at the basepoint".into()));
    }
    let full: Vec<i32> = u.iter().chain(v).chain(w).copied().collect();
    let p = RPath::from_steps(x, r, &full, 0)?;
    let mut chain = HomotopyChain::start(x, p, false)?;
    let mut steps: Vec<i32> = u.iter().copied().chain(v.iter().map(|_| 0)).chain(w.iter().copied()).collect();
    chain.push(x, points_of(x, &steps, 0))?;
    flush_stays(x, &mut chain, &mut steps, 0)?;
    Ok(chain)
}

/// A 1-path r-homotopic to `p`, with the chain.
///
/// Each long step, from the last to the first, is replaced by a geodesic:
/// pad the end by `d - 1` stays, slide them up to the step one link at a
/// time, then straighten the repeated block onto the geodesic.
pub fn to_one_path(x: &CayleyQuotient, p: &RPath) -> Result<(RPath, HomotopyChain)> {
    check_graph(x, p)?;
    let mut chain = HomotopyChain::start(x, p.clone(), chain_is_open(p))?;
    let mut cur = p.points.clone();
    for k in (0..p.len()).rev() {
        let (a, b) = (cur[k], cur[k + 1]);
        let d = x.bfs_distances(a)[b as usize] as usize;
        if d <= 1 {
            continue;
        }
        let end = *cur.last().expect("nonempty");
        cur.extend(std::iter::repeat(end).take(d - 1));
        chain.push(x, cur.clone())?;
        for _ in 0..d - 1 {
            cur.pop();
            cur.insert(k + 1, b);
            chain.push(x, cur.clone())?;
        }
        let geo = x.geodesic_word(a, b);
        let route = points_of(x, geo.letters(), a);
        cur.splice(k + 1..k + 1 + d, route[1..].iter().copied());
        chain.push(x, cur.clone())?;
    }
    let q = RPath::new(x, 1, cur)?;
    Ok((q, chain))
}

/// Oracle answer for a pair of loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleVerdict {
    SameClass,
    /// Not joined by moves among loops of length at most the bound. This is
    /// not a proof that they are not r-homotopic.
    NotWithinBudget,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopClass {
    pub id: usize,
    pub size: u64,
    /// Lexicographically smallest member, padding removed.
    pub representative: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub r: u32,
    pub max_len: usize,
    pub num_vertices: usize,
    pub num_states: u64,
    pub nodes_examined: u64,
    pub num_classes: usize,
    pub classes: Vec<LoopClass>,
    pub state_budget: u64,
    pub edge_budget: u64,
}

/// Connected components of based r-loops of length at most `L` under
/// r-close moves.
///
/// Loops are padded to length exactly `L` with their final point, so only
/// equal-length pointwise moves remain.
#[derive(Debug, Clone)]
pub struct LoopOracle {
    r: u32,
    max_len: usize,
    graph: u64,
    states: Vec<u32>,
    class_of: Vec<u32>,
    report: OracleReport,
}

/// Fenwick tree over 0/1 flags.
struct Fenwick(Vec<i64>);

impl Fenwick {
    fn ones(n: usize) -> Self {
        let mut t = vec![0i64; n + 1];
        for i in 1..=n {
            t[i] += 1;
            let j = i + (i & i.wrapping_neg());
            if j <= n {
                t[j] += t[i];
            }
        }
        Fenwick(t)
    }

    fn add(&mut self, i: usize, d: i64) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += d;
            i += i & i.wrapping_neg();
        }
    }

    fn prefix(&self, i: usize) -> i64 {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    fn range(&self, lo: usize, hi: usize) -> i64 {
        self.prefix(hi) - self.prefix(lo)
    }
}

impl LoopOracle {
    pub fn report(&self) -> &OracleReport {
        &self.report
    }

    fn width(&self) -> usize {
        self.max_len + 1
    }

    fn state(&self, i: usize) -> &[u32] {
        &self.states[i * self.width()..(i + 1) * self.width()]
    }

    fn lookup(&self, p: &RPath) -> Result<usize> {
        if p.graph != self.graph {
            return Err(CoarseError::GraphMismatch);
        }
        if p.len() > self.max_len || !p.is_loop_at(0) {
            return Err(CoarseError::InvalidArgument(format!(
                "expected a loop at 0 of length at most {}",
                self.max_len
            )));
        }
        let padded = p.padded(self.max_len - p.len());
        let n = self.states.len() / self.width();
        let (mut lo, mut hi) = (0usize, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.state(mid).cmp(padded.points()) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return Ok(mid),
            }
        }
        Err(CoarseError::InvalidArgument(format!(
            "loop is not a {}-loop",
            self.r
        )))
    }

    pub fn class_id(&self, p: &RPath) -> Result<usize> {
        Ok(self.class_of[self.lookup(p)?] as usize)
    }

    pub fn compare(&self, p: &RPath, q: &RPath) -> Result<OracleVerdict> {
        Ok(if self.class_id(p)? == self.class_id(q)? {
            OracleVerdict::SameClass
        } else {
            OracleVerdict::NotWithinBudget
        })
    }
}

/// Number of closed r-walks of length `len` at vertex 0.
fn count_loops(balls: &[Vec<u32>], len: usize) -> BigUint {
    let nv = balls.len();
    let mut ways = vec![BigUint::from(0u32); nv];
    ways[0] = BigUint::from(1u32);
    for _ in 0..len {
        let mut next = vec![BigUint::from(0u32); nv];
        for (v, w) in ways.iter().enumerate() {
            if *w == BigUint::from(0u32) {
                continue;
            }
            for &u in &balls[v] {
                next[u as usize] += w;
            }
        }
        ways = next;
    }
    ways.swap_remove(0)
}

pub fn classify_loops(
    x: &CayleyQuotient,
    r: u32,
    max_len: usize,
    state_budget: u64,
    edge_budget: u64,
) -> Result<LoopOracle> {
    if r == 0 {
        return Err(CoarseError::InvalidArgument("scale r must be at least 1".into()));
    }
    let nv = x.num_vertices();
    let dist: Vec<Vec<u32>> = (0..nv as u32).map(|v| x.bfs_distances(v)).collect();
    let balls: Vec<Vec<u32>> = dist
        .iter()
        .map(|d| (0..nv as u32).filter(|&u| d[u as usize] <= r).collect())
        .collect();
    let projected = count_loops(&balls, max_len);
    if projected > BigUint::from(state_budget) {
        return Err(CoarseError::budget("oracle states", projected, state_budget));
    }

    // All closed r-walks of length max_len at 0, in lexicographic order.
    let width = max_len + 1;
    let mut states: Vec<u32> = Vec::new();
    let mut cur = vec![0u32; width];
    fn fill(
        pos: usize,
        cur: &mut Vec<u32>,
        out: &mut Vec<u32>,
        balls: &[Vec<u32>],
        dist: &[Vec<u32>],
        r: u32,
    ) {
        let width = cur.len();
        if pos == width {
            out.extend_from_slice(cur);
            return;
        }
        let remaining = (width - 1 - pos) as u32;
        for &u in &balls[cur[pos - 1] as usize] {
            if dist[0][u as usize] <= r.saturating_mul(remaining) {
                cur[pos] = u;
                fill(pos + 1, cur, out, balls, dist, r);
            }
        }
    }
    if max_len == 0 {
        states.push(0);
    } else {
        fill(1, &mut cur, &mut states, &balls, &dist, r);
    }
    let n = states.len() / width;

    let mut unvisited = Fenwick::ones(n);
    let mut class_of = vec![u32::MAX; n];
    let mut classes = Vec::new();
    let mut nodes: u64 = 0;
    let mut queue: Vec<usize> = Vec::new();

    struct Search<'a> {
        states: &'a [u32],
        width: usize,
        dist: &'a [Vec<u32>],
        r: u32,
    }
    impl Search<'_> {
        fn at(&self, i: usize, pos: usize) -> u32 {
            self.states[i * self.width + pos]
        }
        /// First index in `[lo, hi)` whose value at `pos` is at least `v`.
        fn lower(&self, lo: usize, hi: usize, pos: usize, v: u32) -> usize {
            let (mut a, mut b) = (lo, hi);
            while a < b {
                let m = (a + b) / 2;
                if self.at(m, pos) < v {
                    a = m + 1;
                } else {
                    b = m;
                }
            }
            a
        }
        #[allow(clippy::too_many_arguments)]
        fn expand(
            &self,
            s: usize,
            pos: usize,
            lo: usize,
            hi: usize,
            unvisited: &mut Fenwick,
            found: &mut Vec<usize>,
            nodes: &mut u64,
        ) {
            *nodes += 1;
            if unvisited.range(lo, hi) == 0 {
                return;
            }
            if pos == self.width {
                unvisited.add(lo, -1);
                found.push(lo);
                return;
            }
            let target = self.at(s, pos);
            let mut a = lo;
            while a < hi {
                let v = self.at(a, pos);
                let b = self.lower(a, hi, pos, v + 1);
                if self.dist[target as usize][v as usize] <= self.r {
                    self.expand(s, pos + 1, a, b, unvisited, found, nodes);
                }
                a = b;
            }
        }
    }
    let search = Search {
        states: &states,
        width,
        dist: &dist,
        r,
    };

    for seed in 0..n {
        if class_of[seed] != u32::MAX {
            continue;
        }
        let id = classes.len() as u32;
        unvisited.add(seed, -1);
        class_of[seed] = id;
        queue.clear();
        queue.push(seed);
        let mut size = 0u64;
        while let Some(s) = queue.pop() {
            size += 1;
            let mut found = Vec::new();
            search.expand(s, 0, 0, n, &mut unvisited, &mut found, &mut nodes);
            if nodes > edge_budget {
                return Err(CoarseError::budget("oracle move-graph nodes", nodes, edge_budget));
            }
            for f in found {
                class_of[f] = id;
                queue.push(f);
            }
        }
        let rep = RPath {
            graph: x.fingerprint(),
            r,
            points: states[seed * width..(seed + 1) * width].to_vec(),
        }
        .trimmed();
        classes.push(LoopClass {
            id: id as usize,
            size,
            representative: rep.points,
        });
    }

    let report = OracleReport {
        r,
        max_len,
        num_vertices: nv,
        num_states: n as u64,
        nodes_examined: nodes,
        num_classes: classes.len(),
        classes,
        state_budget,
        edge_budget,
    };
    Ok(LoopOracle {
        r,
        max_len,
        graph: x.fingerprint(),
        states,
        class_of,
        report,
    })
}
