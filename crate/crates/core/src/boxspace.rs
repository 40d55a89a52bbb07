//! Box spaces on a line and the rank obstruction to coarse equivalence.

use std::collections::HashSet;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::cayley::CayleyQuotient;
use crate::error::{CoarseError, Result};
use crate::towers::{valuation, RankLaw, SymbolicRank, Tower, TowerLevel};
use crate::zlinalg::H1Result;

/// Disjoint union of finite Cayley graphs placed along a line.
///
/// Component `i` sits at `offsets[i]`; consecutive offsets differ by the sum
/// of the two diameters (at least 1). For `u` in component `i` and `v` in
/// component `j != i` the distance is `d_i(u, 0) + |o_i - o_j| + d_j(0, v)`.
#[derive(Debug, Clone)]
pub struct BoxSpace {
    components: Vec<CayleyQuotient>,
    offsets: Vec<u64>,
    diameters: Vec<u32>,
    basepoint_distances: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxComponentJson {
    pub provenance: String,
    pub num_vertices: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_file: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxSpaceJson {
    pub components: Vec<BoxComponentJson>,
    pub offsets: Vec<u64>,
    pub diameters: Vec<u32>,
}

impl BoxSpace {
    pub fn assemble(components: Vec<CayleyQuotient>) -> Result<Self> {
        if components.is_empty() {
            return Err(CoarseError::InvalidArgument("a box space needs at least one component".into()));
        }
        let basepoint_distances: Vec<Vec<u32>> = components.iter().map(|c| c.bfs_distances(0)).collect();
        let diameters: Vec<u32> = basepoint_distances
            .iter()
            .map(|d| d.iter().copied().max().unwrap_or(0))
            .collect();
        let mut offsets = vec![0u64];
        for w in diameters.windows(2) {
            let gap = (w[0] as u64 + w[1] as u64).max(1);
            offsets.push(offsets.last().expect("nonempty") + gap);
        }
        Ok(BoxSpace {
            components,
            offsets,
            diameters,
            basepoint_distances,
        })
    }

    pub fn components(&self) -> &[CayleyQuotient] {
        &self.components
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub fn diameters(&self) -> &[u32] {
        &self.diameters
    }

    fn check(&self, i: usize, u: u32) -> Result<()> {
        match self.components.get(i) {
            Some(c) if (u as usize) < c.num_vertices() => Ok(()),
            Some(_) => Err(CoarseError::InvalidArgument(format!("vertex {u} not in component {i}"))),
            None => Err(CoarseError::InvalidArgument(format!("no component {i}"))),
        }
    }

    pub fn distance(&self, (i, u): (usize, u32), (j, v): (usize, u32)) -> Result<u64> {
        self.check(i, u)?;
        self.check(j, v)?;
        if i == j {
            return Ok(self.components[i].bfs_distances(u)[v as usize] as u64);
        }
        Ok(self.basepoint_distances[i][u as usize] as u64
            + self.offsets[i].abs_diff(self.offsets[j])
            + self.basepoint_distances[j][v as usize] as u64)
    }

    pub fn to_json(&self) -> BoxSpaceJson {
        BoxSpaceJson {
            components: self
                .components
                .iter()
                .map(|c| BoxComponentJson {
                    provenance: c.provenance().to_string(),
                    num_vertices: c.num_vertices(),
                    graph_file: None,
                })
                .collect(),
            offsets: self.offsets.clone(),
            diameters: self.diameters.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    NotCoarselyEquivalent,
    Inconclusive,
}

/// Machine-checkable reason why rank(T1, i) = rank(T2, j) has only finitely
/// many solutions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObstructionProof {
    /// Over a common base the normalized coefficients differ.
    CoefficientMismatch {
        #[serde(with = "crate::towers::dec")]
        coeff1: BigInt,
        #[serde(with = "crate::towers::dec")]
        coeff2: BigInt,
    },
    /// `slope1 * i + intercept1 = slope2 * j + intercept2` has no integer
    /// solution because `gcd` does not divide the intercept difference.
    Congruence {
        #[serde(with = "crate::towers::dec")]
        base: BigUint,
        slope1: i64,
        #[serde(with = "crate::towers::dec")]
        intercept1: BigInt,
        slope2: i64,
        #[serde(with = "crate::towers::dec")]
        intercept2: BigInt,
        gcd: i64,
        #[serde(with = "crate::towers::dec")]
        difference: BigInt,
    },
    /// `v_p(rank - 1)` grows with the level in one tower (`growing`, 1 or 2)
    /// and is the constant `constant_valuation` in the other.
    Valuation {
        prime: u64,
        growing: u8,
        constant_valuation: u64,
        bound_growing: u64,
        bound_other: u64,
        matches: Vec<(u64, u64)>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareVerdict {
    pub verdict: Verdict,
    pub witness: String,
    /// No matches with `i > bound` or `j > bound`.
    pub bound: Option<u64>,
    pub proof: Option<ObstructionProof>,
    pub ranks1: Vec<String>,
    pub ranks2: Vec<String>,
}

/// Exponent law over the smallest root base: `coeff * root^(slope*i + intercept)`.
struct AffineHead {
    coeff: BigInt,
    root: BigUint,
    slope: i64,
    intercept: BigInt,
}

fn affine_head(law: &RankLaw) -> Option<AffineHead> {
    let RankLaw::Affine { slope, intercept, .. } = law else {
        return None;
    };
    let (coeff, root, k) = law.head()?;
    let v = valuation(&coeff, &root);
    let coeff = coeff / BigInt::from(root.pow(v as u32));
    Some(AffineHead {
        coeff,
        root,
        slope: slope * k as i64,
        intercept: intercept * BigInt::from(k) + BigInt::from(v),
    })
}

fn prime_factors_u64(mut v: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= v {
        if v % p == 0 {
            out.push(p);
            while v % p == 0 {
                v /= p;
            }
        }
        p += 1;
    }
    if v > 1 {
        out.push(v);
    }
    out
}

/// `v_p(coeff)` and `v_p(base)` of a law's head.
fn head_valuations(law: &RankLaw, p: u64) -> Option<(u64, u64)> {
    let (coeff, root, k) = law.head()?;
    let pb = BigUint::from(p);
    Some((
        valuation(&coeff, &pb),
        valuation(&BigInt::from(root), &pb) * k as u64,
    ))
}

fn rank_of(t: &Tower, i: u64) -> Option<SymbolicRank> {
    t.law.rank(i).map(|r| r.over_root())
}

fn preview(t: &Tower) -> Vec<String> {
    let s = t.law.start();
    (s..s + 4)
        .map_while(|i| t.law.rank(i))
        .map(|r| r.to_string())
        .collect()
}

fn valuation_proof(t1: &Tower, t2: &Tower) -> Option<(ObstructionProof, u64, String)> {
    let (_, r1, _) = t1.law.head()?;
    let (_, r2, _) = t2.law.head()?;
    let mut primes: Vec<u64> = [r1, r2]
        .iter()
        .filter_map(|r| r.to_u64())
        .flat_map(prime_factors_u64)
        .collect();
    primes.sort_unstable();
    primes.dedup();
    for p in primes {
        let (c1, b1) = head_valuations(&t1.law, p)?;
        let (c2, b2) = head_valuations(&t2.law, p)?;
        let (grow, other, cg, bg, cconst, which) = match (b1 > 0, b2 > 0) {
            (true, false) => (t1, t2, c1, b1, c2, 1u8),
            (false, true) => (t2, t1, c2, b2, c1, 2u8),
            _ => continue,
        };
        // v_p(rank - 1) = cg + bg * e(i) must equal cconst.
        let sg = grow.law.start();
        let mut bound_growing = sg - 1;
        let mut i = sg;
        loop {
            let lower = BigInt::from(cg) + BigInt::from(bg) * grow.law.exponent_lower_bound(i);
            if lower > BigInt::from(cconst) {
                break;
            }
            bound_growing = i;
            i += 1;
            if i > sg + 10_000 {
                return None;
            }
        }
        // Largest rank the growing side can match with.
        let mut max_val = BigInt::zero();
        for i in sg..=bound_growing {
            max_val = max_val.max(grow.law.rank(i)?.value()?);
        }
        let so = other.law.start();
        let mut bound_other = so - 1;
        let mut j = so;
        loop {
            let v = other.law.rank(j)?.value()?;
            if v > max_val {
                break;
            }
            bound_other = j;
            j += 1;
            if j > so + 10_000 {
                return None;
            }
        }
        let mut matches = Vec::new();
        for i in sg..=bound_growing {
            for j in so..=bound_other {
                if grow.law.rank(i)?.value()? == other.law.rank(j)?.value()? {
                    matches.push(if which == 1 { (i, j) } else { (j, i) });
                }
            }
        }
        let bound = bound_growing.max(bound_other);
        let witness = format!(
            "{p}-adic valuation of rank - 1 grows with the level in tower {which} but is constantly {cconst} in the other; ranks can agree only at levels <= {bound} ({} match{})",
            matches.len(),
            if matches.len() == 1 { "" } else { "es" }
        );
        return Some((
            ObstructionProof::Valuation {
                prime: p,
                growing: which,
                constant_valuation: cconst,
                bound_growing,
                bound_other,
                matches,
            },
            bound,
            witness,
        ));
    }
    None
}

/// Looks for a proof that only finitely many levels of the two towers have
/// equal rank. Never claims equivalence.
pub fn compare_towers(t1: &Tower, t2: &Tower) -> Result<CompareVerdict> {
    let ranks1 = preview(t1);
    let ranks2 = preview(t2);
    if !t1.is_free() || !t2.is_free() {
        return compare_listed(t1, t2, ranks1, ranks2);
    }
    let done = |verdict, witness: String, bound, proof| CompareVerdict {
        verdict,
        witness,
        bound,
        proof,
        ranks1: ranks1.clone(),
        ranks2: ranks2.clone(),
    };

    if let (Some(a), Some(b)) = (affine_head(&t1.law), affine_head(&t2.law)) {
        if a.root == b.root {
            if a.coeff != b.coeff {
                let w = format!(
                    "over base {} the normalized coefficients {} and {} differ, so no ranks agree",
                    a.root, a.coeff, b.coeff
                );
                let proof = ObstructionProof::CoefficientMismatch {
                    coeff1: a.coeff,
                    coeff2: b.coeff,
                };
                return Ok(done(Verdict::NotCoarselyEquivalent, w, Some(0), Some(proof)));
            }
            let g = a.slope.gcd(&b.slope);
            let diff = &b.intercept - &a.intercept;
            if g != 0 && !(&diff % BigInt::from(g)).is_zero() {
                let w = format!(
                    "{c}{r}^({s1}i{t1:+}) = {c}{r}^({s2}j{t2:+}) forces {s1}i{t1:+} = {s2}j{t2:+}, impossible mod {g}",
                    c = if a.coeff == BigInt::from(1) { String::new() } else { format!("{}*", a.coeff) },
                    r = a.root,
                    s1 = a.slope,
                    t1 = a.intercept,
                    s2 = b.slope,
                    t2 = b.intercept,
                );
                let proof = ObstructionProof::Congruence {
                    base: a.root,
                    slope1: a.slope,
                    intercept1: a.intercept,
                    slope2: b.slope,
                    intercept2: b.intercept,
                    gcd: g,
                    difference: diff,
                };
                return Ok(done(Verdict::NotCoarselyEquivalent, w, Some(0), Some(proof)));
            }
            let w = format!(
                "ranks agree along an arithmetic progression of levels ({}i{:+} = {}j{:+} is solvable); no obstruction",
                a.slope, a.intercept, b.slope, b.intercept
            );
            return Ok(done(Verdict::Inconclusive, w, None, None));
        }
    }
    if let Some((proof, bound, w)) = valuation_proof(t1, t2) {
        return Ok(done(Verdict::NotCoarselyEquivalent, w, Some(bound), Some(proof)));
    }
    Ok(done(
        Verdict::Inconclusive,
        "no rank obstruction found".to_string(),
        None,
        None,
    ))
}

fn level_h1(t: &Tower, l: &TowerLevel) -> Option<H1Result> {
    match (&l.h1, &l.rank, t.is_free()) {
        (Some(h), _, _) => Some(h.clone()),
        (None, Some(r), true) => r.value()?.to_usize().map(H1Result::free),
        _ => None,
    }
}

/// Non-free towers: abelianizations are known only at the listed levels,
/// which can never rule out a cofinite matching.
fn compare_listed(t1: &Tower, t2: &Tower, ranks1: Vec<String>, ranks2: Vec<String>) -> Result<CompareVerdict> {
    let mut h = Vec::new();
    for t in [t1, t2] {
        let hs: Option<Vec<H1Result>> = t.levels.iter().map(|l| level_h1(t, l)).collect();
        match hs {
            Some(v) if !v.is_empty() => h.push(v),
            _ => {
                return Err(CoarseError::UnsupportedComparison(format!(
                    "tower `{}` is not free and lacks abelianization data at some level",
                    t.name
                )))
            }
        }
    }
    let matches = h[0].iter().flat_map(|a| h[1].iter().filter(move |b| *b == a)).count();
    Ok(CompareVerdict {
        verdict: Verdict::Inconclusive,
        witness: format!(
            "abelianizations known at {} and {} levels, {matches} matching pairs; finitely many levels cannot exclude a cofinite matching",
            h[0].len(),
            h[1].len()
        ),
        bound: None,
        proof: None,
        ranks1,
        ranks2,
    })
}

/// Re-checks an obstruction on all pairs `i, j <= samples` (from each
/// tower's first level) outside the declared bound. Returns the number of
/// pairs covered.
pub fn verify_obstruction(v: &CompareVerdict, t1: &Tower, t2: &Tower, samples: u64) -> Result<u64> {
    let (Some(proof), Some(bound)) = (&v.proof, v.bound) else {
        return Err(CoarseError::InvalidArgument("verdict carries no proof".into()));
    };
    let fail = |msg: String| Err(CoarseError::Internal(format!("obstruction does not re-validate: {msg}")));
    match proof {
        ObstructionProof::CoefficientMismatch { .. } | ObstructionProof::Congruence { .. } => {
            let (s1, s2) = (t1.law.start(), t2.law.start());
            let side2: HashSet<SymbolicRank> = (s2..s2 + samples)
                .map(|j| rank_of(t2, j))
                .collect::<Option<_>>()
                .ok_or_else(|| CoarseError::Unavailable("ranks of tower 2".into()))?;
            for i in s1..s1 + samples {
                let r = rank_of(t1, i).ok_or_else(|| CoarseError::Unavailable("ranks of tower 1".into()))?;
                if side2.contains(&r) {
                    return fail(format!("level {i} of tower 1 matches a level of tower 2"));
                }
            }
            Ok(samples * samples)
        }
        ObstructionProof::Valuation {
            prime,
            growing,
            constant_valuation,
            bound_growing,
            bound_other,
            matches,
        } => {
            let (grow, other) = if *growing == 1 { (t1, t2) } else { (t2, t1) };
            let (cg, bg) = head_valuations(&grow.law, *prime).ok_or_else(|| CoarseError::Unavailable("law".into()))?;
            let (co, bo) = head_valuations(&other.law, *prime).ok_or_else(|| CoarseError::Unavailable("law".into()))?;
            if bo != 0 || co != *constant_valuation || bg == 0 {
                return fail("valuation profile changed".into());
            }
            let sg = grow.law.start();
            for i in bound_growing + 1..sg + samples {
                let lower = BigInt::from(cg) + BigInt::from(bg) * grow.law.exponent_lower_bound(i);
                if lower <= BigInt::from(co) {
                    return fail(format!("level {i} may still match"));
                }
            }
            if bound != *bound_growing.max(bound_other) {
                return fail("declared bound disagrees with the proof".into());
            }
            let mut max_val = BigInt::zero();
            for i in sg..=*bound_growing {
                max_val = max_val.max(grow.law.rank(i).and_then(|r| r.value()).ok_or_else(|| CoarseError::Unavailable("rank".into()))?);
            }
            let next = other.law.rank(bound_other + 1).and_then(|r| r.value());
            match next {
                Some(v) if v > max_val => {}
                _ => return fail("other tower is not past the matchable range".into()),
            }
            for &(i, j) in matches {
                let (gi, oj) = if *growing == 1 { (i, j) } else { (j, i) };
                if gi > *bound_growing || oj > *bound_other {
                    return fail(format!("match ({i}, {j}) outside bounds"));
                }
            }
            Ok(samples * samples)
        }
    }
}
