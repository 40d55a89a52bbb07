//! Filtration towers, symbolic ranks and the arithmetic that separates them.

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::cayley::{voltage_cover, CayleyQuotient, SL2_FREE_GENERATORS};
use crate::coarse_pi1::{a1r_abelianized, fill_relators};
use crate::error::{CoarseError, Result};
use crate::words::Presentation;
use crate::zlinalg::H1Result;

/// Values with more bits than this are never materialized.
pub const VALUE_BITS_LIMIT: u64 = 1 << 20;

/// Serde adapter writing big integers as decimal strings.
pub mod dec {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T: FromStr, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        let text = String::deserialize(d)?;
        text.parse()
            .map_err(|_| D::Error::custom(format!("not an integer: {text}")))
    }
}

/// `coeff * base^exponent + offset`, normalized so `base` does not divide
/// `coeff`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolicRank {
    #[serde(with = "dec")]
    coeff: BigInt,
    #[serde(with = "dec")]
    base: BigUint,
    #[serde(with = "dec")]
    exponent: BigUint,
    #[serde(with = "dec")]
    offset: BigInt,
}

/// `p`-adic valuation of a nonzero integer.
pub fn valuation(v: &BigInt, p: &BigUint) -> u64 {
    let p = BigInt::from(p.clone());
    let mut v = v.abs();
    let mut k = 0;
    while !v.is_zero() && (&v % &p).is_zero() {
        v /= &p;
        k += 1;
    }
    k
}

fn prime_factors(v: &BigUint) -> Vec<BigUint> {
    let mut out = Vec::new();
    let mut rest = v.clone();
    let mut p = BigUint::from(2u32);
    while &p * &p <= rest {
        if (&rest % &p).is_zero() {
            out.push(p.clone());
            while (&rest % &p).is_zero() {
                rest /= &p;
            }
        }
        p += 1u32;
    }
    if rest > BigUint::one() {
        out.push(rest);
    }
    out
}

/// Smallest `r` with `r^k = b`, and that `k`.
fn perfect_power_root(b: &BigUint) -> (BigUint, u32) {
    let bits = b.bits() as u32;
    for k in (2..=bits.max(2)).rev() {
        let r = b.nth_root(k);
        if r > BigUint::one() && r.pow(k) == *b {
            let (rr, kk) = perfect_power_root(&r);
            return (rr, kk * k);
        }
    }
    (b.clone(), 1)
}

impl SymbolicRank {
    pub fn new(coeff: BigInt, base: BigUint, exponent: BigUint, offset: BigInt) -> Result<Self> {
        if base < BigUint::from(2u32) {
            return Err(CoarseError::InvalidArgument(format!("base {base} < 2")));
        }
        let mut s = SymbolicRank {
            coeff,
            base,
            exponent,
            offset,
        };
        s.normalize();
        Ok(s)
    }

    /// `coeff * base^exponent + 1`.
    pub fn rank(coeff: impl Into<BigInt>, base: u64, exponent: impl Into<BigUint>) -> Self {
        Self::new(coeff.into(), BigUint::from(base), exponent.into(), BigInt::one())
            .expect("base >= 2")
    }

    /// A plain integer written over `base` with offset 0.
    pub fn integer(v: impl Into<BigInt>, base: u64) -> Self {
        Self::new(v.into(), BigUint::from(base), BigUint::zero(), BigInt::zero()).expect("base >= 2")
    }

    fn normalize(&mut self) {
        if self.coeff.is_zero() {
            self.exponent = BigUint::zero();
            return;
        }
        let b = BigInt::from(self.base.clone());
        while (&self.coeff % &b).is_zero() {
            self.coeff /= &b;
            self.exponent += 1u32;
        }
    }

    pub fn coeff(&self) -> &BigInt {
        &self.coeff
    }

    pub fn base(&self) -> &BigUint {
        &self.base
    }

    pub fn exponent(&self) -> &BigUint {
        &self.exponent
    }

    pub fn offset(&self) -> &BigInt {
        &self.offset
    }

    /// Estimated bit length of `coeff * base^exponent`.
    pub fn bits_estimate(&self) -> f64 {
        let lb = self.base.bits() as f64;
        let e = self.exponent.to_f64().unwrap_or(f64::INFINITY);
        self.coeff.bits() as f64 + e * lb
    }

    fn small_exponent(&self) -> Option<u32> {
        if self.bits_estimate() > VALUE_BITS_LIMIT as f64 {
            return None;
        }
        self.exponent.to_u32()
    }

    /// The value, when it has at most `VALUE_BITS_LIMIT` bits.
    pub fn value(&self) -> Option<BigInt> {
        let e = self.small_exponent()?;
        Some(&self.coeff * BigInt::from(self.base.pow(e)) + &self.offset)
    }

    /// `value - offset`, i.e. `coeff * base^exponent`, when small.
    pub fn head_value(&self) -> Option<BigInt> {
        let e = self.small_exponent()?;
        Some(&self.coeff * BigInt::from(self.base.pow(e)))
    }

    /// `v_p(coeff * base^exponent)`.
    pub fn head_valuation(&self, p: &BigUint) -> BigUint {
        BigUint::from(valuation(&self.coeff, p))
            + &self.exponent * BigUint::from(valuation(&BigInt::from(self.base.clone()), p))
    }

    /// Rewrites over the smallest root of the base (e.g. base 4 over 2).
    pub fn over_root(&self) -> Self {
        let (r, k) = perfect_power_root(&self.base);
        Self::new(self.coeff.clone(), r, &self.exponent * k, self.offset.clone()).expect("root >= 2")
    }

    /// Decides equality: same (root) base by field comparison, otherwise by
    /// materializing small values or comparing valuations.
    pub fn equals(&self, other: &Self) -> Result<bool> {
        let (a, b) = (self.over_root(), other.over_root());
        if a.base == b.base {
            return Ok(a == b);
        }
        if a.bits_estimate() <= 4096.0 && b.bits_estimate() <= 4096.0 {
            return Ok(a.value() == b.value());
        }
        if a.offset == b.offset {
            for p in prime_factors(&a.base).into_iter().chain(prime_factors(&b.base)) {
                if a.head_valuation(&p) != b.head_valuation(&p) {
                    return Ok(false);
                }
            }
        }
        Err(CoarseError::Unavailable(format!(
            "cannot decide {a} = {b} without materializing"
        )))
    }
}

impl fmt::Display for SymbolicRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponent.is_zero() {
            write!(f, "{}", &self.coeff + &self.offset)
        } else {
            if !self.coeff.is_one() {
                write!(f, "{}*", self.coeff)?;
            }
            write!(f, "{}^{}", self.base, self.exponent)?;
            match self.offset.sign() {
                Sign::Plus => write!(f, " + {}", self.offset),
                Sign::Minus => write!(f, " - {}", -&self.offset),
                Sign::NoSign => Ok(()),
            }
        }
    }
}

/// `(n - 1) * index + 1`.
pub fn nielsen_schreier(index: &BigUint, n: u32) -> BigUint {
    index * BigUint::from(n.saturating_sub(1)) + 1u32
}

/// Closed form (or recurrence) of the rank of level `i` (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RankLaw {
    /// `coeff * base^(slope * i + intercept) + 1` for `i >= start`.
    Affine {
        #[serde(with = "dec")]
        coeff: BigInt,
        #[serde(with = "dec")]
        base: BigUint,
        slope: i64,
        #[serde(with = "dec")]
        intercept: BigInt,
        start: u64,
    },
    /// Mod-`m` homology filtration of `F_n`:
    /// `rank_i = (n - 1) m^(rank_1 + ... + rank_(i-1)) + 1`.
    HomologyRecurrence { n: u32, m: u32 },
    /// Only the listed levels are known.
    Listed,
}

/// Running state of the homology recurrence.
fn homology_exponents(n: u32, m: u32, upto: u64) -> Vec<BigUint> {
    let mut out = vec![BigUint::zero()];
    while (out.len() as u64) < upto {
        let e = out.last().expect("nonempty").clone();
        let r = SymbolicRank::rank(BigInt::from(n - 1), m as u64, e.clone());
        match r.value() {
            Some(v) => out.push(e + v.to_biguint().expect("ranks are positive")),
            None => break,
        }
    }
    out
}

impl RankLaw {
    pub fn affine(coeff: impl Into<BigInt>, base: u64, slope: i64, intercept: impl Into<BigInt>, start: u64) -> Self {
        let base = BigUint::from(base);
        let mut coeff: BigInt = coeff.into();
        let mut intercept: BigInt = intercept.into();
        let b = BigInt::from(base.clone());
        while !coeff.is_zero() && (&coeff % &b).is_zero() {
            coeff /= &b;
            intercept += 1;
        }
        RankLaw::Affine {
            coeff,
            base,
            slope,
            intercept,
            start,
        }
    }

    pub fn start(&self) -> u64 {
        match self {
            RankLaw::Affine { start, .. } => *start,
            _ => 1,
        }
    }

    /// Exponent of level `i`, when it can be computed.
    pub fn exponent(&self, i: u64) -> Option<BigInt> {
        match self {
            RankLaw::Affine { slope, intercept, .. } => Some(BigInt::from(*slope) * i + intercept),
            RankLaw::HomologyRecurrence { n, m } => {
                let es = homology_exponents(*n, *m, i);
                es.get(i as usize - 1).map(|e| BigInt::from(e.clone()))
            }
            RankLaw::Listed => None,
        }
    }

    /// A lower bound for the exponent that is always available.
    pub fn exponent_lower_bound(&self, i: u64) -> BigInt {
        match self {
            RankLaw::HomologyRecurrence { n, .. } => self
                .exponent(i)
                .unwrap_or_else(|| BigInt::from(i - 1) * BigInt::from(*n)),
            _ => self.exponent(i).unwrap_or_default(),
        }
    }

    pub fn rank(&self, i: u64) -> Option<SymbolicRank> {
        let e = self.exponent(i)?.to_biguint()?;
        match self {
            RankLaw::Affine { coeff, base, .. } => {
                SymbolicRank::new(coeff.clone(), base.clone(), e, BigInt::one()).ok()
            }
            RankLaw::HomologyRecurrence { n, m } => Some(SymbolicRank::rank(BigInt::from(n - 1), *m as u64, e)),
            RankLaw::Listed => None,
        }
    }

    /// Base and coefficient of the head `rank - 1`, rewritten over the
    /// smallest root of the base.
    pub(crate) fn head(&self) -> Option<(BigInt, BigUint, u32)> {
        let (coeff, base) = match self {
            RankLaw::Affine { coeff, base, .. } => (coeff.clone(), base.clone()),
            RankLaw::HomologyRecurrence { n, m } => (BigInt::from(n - 1), BigUint::from(*m)),
            RankLaw::Listed => return None,
        };
        let (root, k) = perfect_power_root(&base);
        Some((coeff, root, k))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupDescriptor {
    pub label: String,
    /// Rank of the ambient group when it is free.
    pub free_rank: Option<SymbolicRank>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TowerLevel {
    pub level: u64,
    pub index: SymbolicRank,
    pub rank: Option<SymbolicRank>,
    pub materialized: bool,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h1: Option<H1Result>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_file: Option<String>,
    #[serde(skip)]
    pub graph: Option<CayleyQuotient>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tower {
    pub name: String,
    pub group: GroupDescriptor,
    pub law: RankLaw,
    pub levels: Vec<TowerLevel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CongruenceFamily {
    /// Kernels mod `4^i`.
    N,
    /// Kernels mod `2^(2i+1)`.
    M,
}

impl CongruenceFamily {
    pub fn modulus(self, i: u64) -> BigUint {
        match self {
            CongruenceFamily::N => BigUint::from(4u32).pow(i as u32),
            CongruenceFamily::M => BigUint::from(2u32).pow(2 * i as u32 + 1),
        }
    }

    /// `(slope, intercept)` of the 2-adic exponent of the index.
    pub fn index_law(self) -> (i64, i64) {
        match self {
            CongruenceFamily::N => (6, -4),
            CongruenceFamily::M => (6, -1),
        }
    }
}

fn free_group(n: u32) -> GroupDescriptor {
    GroupDescriptor {
        label: format!("F{n}"),
        free_rank: Some(SymbolicRank::integer(n, 2)),
    }
}

fn check_materialized(level: &TowerLevel, g: &CayleyQuotient) -> Result<()> {
    let v = BigInt::from(g.num_vertices());
    if level.index.value() != Some(v.clone()) {
        return Err(CoarseError::InconsistentTower(format!(
            "level {}: {} vertices, closed form index {}",
            level.level, v, level.index
        )));
    }
    if let Some(rank) = &level.rank {
        let b1 = BigInt::from(g.graph_betti());
        if rank.value() != Some(b1.clone()) {
            return Err(CoarseError::InconsistentTower(format!(
                "level {}: graph b1 {b1}, closed form rank {rank}",
                level.level
            )));
        }
    }
    Ok(())
}

/// Principal congruence tower of `F_2` inside `SL_2(Z)`.
///
/// Levels whose index fits the budget are materialized and checked against
/// the closed forms.
pub fn congruence_tower_sl2(family: CongruenceFamily, depth: u64, budget: u64) -> Result<Tower> {
    if depth == 0 {
        return Err(CoarseError::InvalidArgument("depth must be at least 1".into()));
    }
    let (slope, intercept) = family.index_law();
    let law = RankLaw::affine(1, 2, slope, intercept, 1);
    let mut levels = Vec::new();
    for i in 1..=depth {
        let e = (slope * i as i64 + intercept) as u64;
        let index = SymbolicRank::new(BigInt::one(), BigUint::from(2u32), BigUint::from(e), BigInt::zero())?;
        let rank = law.rank(i).expect("affine exponents are computable");
        let modulus = family.modulus(i);
        let mut level = TowerLevel {
            level: i,
            index,
            rank: Some(rank),
            materialized: false,
            provenance: format!("free:F2 -> SL2(Z/{modulus})"),
            h1: None,
            graph_file: None,
            graph: None,
        };
        let fits = e < 63 && (1u64 << e) <= budget;
        if let (true, Some(m)) = (fits, modulus.to_u64()) {
            let g = CayleyQuotient::from_matrices_sl2(m, &SL2_FREE_GENERATORS, budget)?;
            check_materialized(&level, &g)?;
            level.materialized = true;
            level.graph = Some(g);
        }
        levels.push(level);
    }
    Ok(Tower {
        name: format!("congruence-{family:?}"),
        group: free_group(2),
        law,
        levels,
    })
}

/// Mod-`m` homology filtration of `F_n`, starting from the whole group.
///
/// Levels are built by iterated voltage covers while they fit the budget
/// and continue symbolically while the exponent is computable.
pub fn homology_tower(n: u32, m: u32, depth: u64, budget: u64) -> Result<Tower> {
    if n < 2 || m < 2 {
        return Err(CoarseError::InvalidArgument("need n >= 2 and m >= 2".into()));
    }
    if depth == 0 {
        return Err(CoarseError::InvalidArgument("depth must be at least 1".into()));
    }
    let law = RankLaw::HomologyRecurrence { n, m };
    let exps = homology_exponents(n, m, depth);
    if (exps.len() as u64) < depth {
        return Err(CoarseError::budget(
            "tower levels with computable exponents",
            depth,
            exps.len() as u64,
        ));
    }
    let mut levels: Vec<TowerLevel> = Vec::new();
    let mut graph = Some(CayleyQuotient::bouquet(n as usize));
    for (k, e) in exps.iter().enumerate() {
        let i = k as u64 + 1;
        let index = SymbolicRank::new(BigInt::one(), BigUint::from(m), e.clone(), BigInt::zero())?;
        let rank = law.rank(i).expect("exponent computed above");
        // The recurrence must agree with Nielsen-Schreier on the index.
        if let (Some(iv), Some(rv)) = (index.value(), rank.value()) {
            let ns = nielsen_schreier(&iv.to_biguint().expect("positive"), n);
            if BigInt::from(ns) != rv {
                return Err(CoarseError::InconsistentTower(format!(
                    "level {i}: recurrence rank {rv} differs from Nielsen-Schreier"
                )));
            }
        }
        if k > 0 {
            graph = match graph.take() {
                Some(g) => match voltage_cover(&g, m, budget) {
                    Ok(c) => Some(c.cover),
                    Err(CoarseError::Budget { .. }) => None,
                    Err(e) => return Err(e),
                },
                None => None,
            };
        }
        let mut level = TowerLevel {
            level: i,
            index,
            rank: Some(rank),
            materialized: false,
            provenance: format!("free:F{n} homology mod {m}, level {i}"),
            h1: None,
            graph_file: None,
            graph: None,
        };
        if let Some(g) = &graph {
            check_materialized(&level, g)?;
            level.materialized = true;
            level.graph = Some(g.clone());
        }
        levels.push(level);
    }
    Ok(Tower {
        name: format!("homology-F{n}-mod{m}"),
        group: free_group(n),
        law,
        levels,
    })
}

/// Tower `(m^i Z)^2` of `Z^2`, with `H_1` of each relator-filled quotient.
pub fn torus_tower(m: u32, depth: u64, budget: u64) -> Result<Tower> {
    let p = crate::words::parse_presentation("gens 2\nrel abAB\n")?;
    let mut levels = Vec::new();
    for i in 1..=depth {
        let side = (m as u64).checked_pow(i as u32).filter(|s| s * s <= budget);
        let side = side.ok_or_else(|| {
            CoarseError::budget("vertices", BigUint::from(m).pow(2 * i as u32), budget)
        })? as u32;
        let g = CayleyQuotient::abelian(&[side, side], budget)?;
        let h1 = a1r_abelianized(&fill_relators(&g, &p)?)?;
        levels.push(TowerLevel {
            level: i,
            index: SymbolicRank::new(BigInt::one(), BigUint::from(m), BigUint::from(2 * i), BigInt::zero())?,
            rank: None,
            materialized: true,
            provenance: g.provenance().to_string(),
            h1: Some(h1),
            graph_file: None,
            graph: Some(g),
        });
    }
    Ok(Tower {
        name: format!("torus-mod{m}"),
        group: GroupDescriptor {
            label: "Z^2".into(),
            free_rank: None,
        },
        law: RankLaw::Listed,
        levels,
    })
}

/// Generic tower over given quotients of a presented group.
pub fn tower_from_quotients(name: &str, p: &Presentation, quotients: Vec<CayleyQuotient>) -> Result<Tower> {
    let free = p.is_free();
    let n = p.n_generators() as u32;
    let mut levels = Vec::new();
    for (k, g) in quotients.into_iter().enumerate() {
        let v = g.num_vertices();
        let h1 = a1r_abelianized(&fill_relators(&g, p)?)?;
        let rank = free.then(|| {
            SymbolicRank::integer(BigInt::from(nielsen_schreier(&BigUint::from(v), n)), 2)
        });
        levels.push(TowerLevel {
            level: k as u64 + 1,
            index: SymbolicRank::integer(v, 2),
            rank,
            materialized: true,
            provenance: g.provenance().to_string(),
            h1: Some(h1),
            graph_file: None,
            graph: Some(g),
        });
    }
    let tower = Tower {
        name: name.to_string(),
        group: GroupDescriptor {
            label: if free { format!("F{n}") } else { "presented".into() },
            free_rank: free.then(|| SymbolicRank::integer(n, 2)),
        },
        law: RankLaw::Listed,
        levels,
    };
    tower.check_nested()?;
    Ok(tower)
}

/// Congruence-type tower of `F_3` with `[F_3 : N_i] = (q^2 - 1) q^(3i-2) / 2`.
/// Symbolic only.
pub fn ramanujan_tower(q: u64, depth: u64) -> Result<Tower> {
    check_odd_prime(q)?;
    let law = RankLaw::affine(q * q - 1, q, 3, -2, 1);
    let levels = (1..=depth)
        .map(|i| {
            Ok(TowerLevel {
                level: i,
                index: SymbolicRank::new(
                    BigInt::from((q * q - 1) / 2),
                    BigUint::from(q),
                    BigUint::from(3 * i - 2),
                    BigInt::zero(),
                )?,
                rank: Some(ramanujan_rank(q, i)?),
                materialized: false,
                provenance: format!("F3 -> PSL2(F_{q}^{i})"),
                h1: None,
                graph_file: None,
                graph: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Tower {
        name: format!("ramanujan-q{q}"),
        group: free_group(3),
        law,
        levels,
    })
}

/// The intersections `N_i` with the mod-`q` homology cover of `N_3`, as a
/// filtration of that cover, for `i >= 4`. Symbolic only.
pub fn corint_tower(q: u64, depth: u64) -> Result<Tower> {
    check_odd_prime(q)?;
    let qq = BigInt::from(q);
    let c = BigInt::from(q * q - 1);
    let intercept: BigInt = &c * qq.pow(7) - 4;
    let law = RankLaw::affine(c.clone(), q, 3, intercept.clone(), 4);
    // rank of the cover minus one: (q^2 - 1) q^((q^2-1) q^7 + 8).
    let ambient_exp: BigInt = &c * qq.pow(7) + 8;
    let ambient_head = SymbolicRank::new(c.clone(), BigUint::from(q), ambient_exp.to_biguint().expect("positive"), BigInt::one())?;
    let levels = (4..4 + depth)
        .map(|i| {
            Ok(TowerLevel {
                level: i,
                index: SymbolicRank::new(BigInt::one(), BigUint::from(q), BigUint::from(3 * (i - 4)), BigInt::zero())?,
                rank: Some(corint_rank_chain(q, i)?),
                materialized: false,
                provenance: format!("N_{i} meet q-homology cover of N_3, q = {q}"),
                h1: None,
                graph_file: None,
                graph: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Tower {
        name: format!("corint-q{q}"),
        group: GroupDescriptor {
            label: format!("q-homology cover of N_3 in F3, q = {q}"),
            free_rank: Some(ambient_head),
        },
        law,
        levels,
    })
}

fn check_odd_prime(q: u64) -> Result<()> {
    if q < 3 || q % 2 == 0 || (3..).step_by(2).take_while(|d| d * d <= q).any(|d| q % d == 0) {
        return Err(CoarseError::InvalidArgument(format!("{q} is not an odd prime")));
    }
    Ok(())
}

impl Tower {
    pub fn is_free(&self) -> bool {
        self.group.free_rank.is_some()
    }

    /// Checks that indices strictly increase and divide each other.
    pub fn check_nested(&self) -> Result<()> {
        for w in self.levels.windows(2) {
            let (a, b) = (&w[0].index, &w[1].index);
            let ok = match (a.value(), b.value()) {
                (Some(x), Some(y)) => x < y && (&y % &x).is_zero(),
                _ => {
                    let (a, b) = (a.over_root(), b.over_root());
                    a.base == b.base
                        && a.offset.is_zero()
                        && b.offset.is_zero()
                        && (&b.coeff % &a.coeff).is_zero()
                        && (a.exponent < b.exponent || (a.exponent == b.exponent && b.coeff > a.coeff))
                }
            };
            if !ok {
                return Err(CoarseError::InconsistentTower(format!(
                    "index {} does not properly divide {}",
                    a, b
                )));
            }
        }
        Ok(())
    }
}

/// Ratio `(coeff * base^e) / (coeff' * base^e')` when the bases agree and the
/// exponent gap is small.
fn head_ratio(num: &SymbolicRank, den: &SymbolicRank) -> Option<BigRational> {
    let (a, b) = (num.over_root(), den.over_root());
    if a.base == b.base {
        let gap = BigInt::from(a.exponent.clone()) - BigInt::from(b.exponent.clone());
        let g = gap.abs().to_u32().filter(|&g| g <= 4096)?;
        let pw = BigInt::from(a.base.pow(g));
        let (n, d) = if gap.is_negative() {
            (a.coeff.clone(), &b.coeff * pw)
        } else {
            (&a.coeff * pw, b.coeff.clone())
        };
        return Some(BigRational::new(n, d));
    }
    Some(BigRational::new(a.head_value()?, b.head_value()?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioSequence {
    pub values: Vec<String>,
    /// Best available upper bound on the infimum (the last value).
    pub infimum_bound: String,
    #[serde(skip)]
    pub exact: Vec<BigRational>,
}

fn ratio_sequence(values: Vec<BigRational>) -> RatioSequence {
    RatioSequence {
        values: values.iter().map(ToString::to_string).collect(),
        infimum_bound: values.last().map(ToString::to_string).unwrap_or_default(),
        exact: values,
    }
}

/// `(rank - 1) / index` per level; must be non-increasing.
pub fn rank_gradient(t: &Tower) -> Result<RatioSequence> {
    let mut out: Vec<BigRational> = Vec::new();
    for l in &t.levels {
        let rank = l.rank.as_ref().ok_or_else(|| {
            CoarseError::Unavailable(format!("level {} has no rank", l.level))
        })?;
        let head = SymbolicRank::new(rank.coeff.clone(), rank.base.clone(), rank.exponent.clone(), BigInt::zero())?;
        let adj: BigInt = &rank.offset - 1;
        let ratio = if adj.is_zero() {
            head_ratio(&head, &l.index)
        } else {
            match (rank.value(), l.index.value()) {
                (Some(r), Some(i)) => Some(BigRational::new(r - 1, i)),
                _ => None,
            }
        };
        let ratio = ratio.ok_or_else(|| {
            CoarseError::Unavailable(format!("level {}: ratio not computable", l.level))
        })?;
        if let Some(prev) = out.last() {
            if &ratio > prev {
                return Err(CoarseError::Internal(format!(
                    "rank gradient increases at level {}: {prev} -> {ratio}",
                    l.level
                )));
            }
        }
        out.push(ratio);
    }
    Ok(ratio_sequence(out))
}

/// `b_1(N_i) / index` per level, for levels where it can be formed.
pub fn betti_ratio_sequence(t: &Tower) -> Result<RatioSequence> {
    let mut out = Vec::new();
    for l in &t.levels {
        let b1 = match (&l.h1, &l.rank, t.is_free()) {
            (Some(h), _, _) => Some(BigInt::from(h.betti)),
            (None, Some(r), true) => r.value(),
            _ => None,
        };
        let b1 = b1.ok_or_else(|| CoarseError::Unavailable(format!("b1 of level {}", l.level)))?;
        match l.index.value() {
            Some(i) => out.push(BigRational::new(b1, i)),
            None => break,
        }
    }
    Ok(ratio_sequence(out))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RamanujanPrime {
    pub q: u64,
    pub minus_one_is_qr_mod_q: bool,
    pub five_is_qr_mod_2q: bool,
    pub one_mod_20: bool,
}

fn is_qr(a: u64, modulus: u64) -> bool {
    a.gcd(&modulus) == 1 && (0..modulus).any(|x| x * x % modulus == a % modulus)
}

/// Odd primes `q <= limit` such that `-1` is a square mod `q` and `5` is a
/// square mod `2q`, checked by brute force.
pub fn ramanujan_prime_search(limit: u64) -> Vec<RamanujanPrime> {
    (3..=limit)
        .filter(|&q| check_odd_prime(q).is_ok())
        .map(|q| RamanujanPrime {
            q,
            minus_one_is_qr_mod_q: is_qr(q - 1, q),
            five_is_qr_mod_2q: is_qr(5, 2 * q),
            one_mod_20: q % 20 == 1,
        })
        .filter(|p| p.minus_one_is_qr_mod_q && p.five_is_qr_mod_2q)
        .collect()
}

/// `(q^2 - 1) q^(3i - 2) + 1`.
pub fn ramanujan_rank(q: u64, i: u64) -> Result<SymbolicRank> {
    check_odd_prime(q)?;
    if i == 0 {
        return Err(CoarseError::InvalidArgument("levels start at 1".into()));
    }
    Ok(SymbolicRank::rank(BigInt::from(q * q - 1), q, 3 * i - 2))
}

/// `(q^2 - 1) q^((q^2 - 1) q^7 - 4 + 3i) + 1`, exponent kept symbolic.
pub fn corint_rank_chain(q: u64, i: u64) -> Result<SymbolicRank> {
    check_odd_prime(q)?;
    if i < 4 {
        return Err(CoarseError::InvalidArgument("the chain starts at level 4".into()));
    }
    let c = BigInt::from(q * q - 1);
    let e: BigInt = &c * BigInt::from(q).pow(7) - 4 + 3 * i;
    Ok(SymbolicRank::rank(c, q, e.to_biguint().expect("positive")))
}

/// Why the two rank chains can agree at no level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mod3Certificate {
    pub q: u64,
    /// `(q^2 - 1) q^7 - 4 + 3i mod 3`, the same for every `i`.
    pub corint_exponent_residue: u64,
    /// `3j - 2 mod 3`.
    pub congruence_exponent_residue: u64,
    /// `(q^2 - 1) q^7 - 2`, which would have to be divisible by 3.
    #[serde(with = "dec")]
    pub target: BigInt,
    pub target_mod_3: u64,
    pub contradiction: bool,
    /// Exhaustive check of `i in 4..=4+samples`, `j in 1..=samples`.
    pub sampled_pairs: u64,
    pub sampled_matches: u64,
}

pub fn corint_mod3_certificate(q: u64, samples: u64) -> Result<Mod3Certificate> {
    check_odd_prime(q)?;
    let three = BigInt::from(3);
    let c = BigInt::from(q * q - 1);
    let target = &c * BigInt::from(q).pow(7) - 2;
    let residue = |v: &BigInt| v.mod_floor(&three).to_u64().expect("small");
    let mut corint_res = Vec::new();
    for i in 4..4 + 6 {
        corint_res.push(residue(&BigInt::from(corint_rank_chain(q, i)?.exponent)));
    }
    if corint_res.iter().any(|&r| r != corint_res[0]) {
        return Err(CoarseError::Internal("corint exponent residue depends on i".into()));
    }
    let cong_res = residue(&BigInt::from(ramanujan_rank(q, 1)?.exponent));
    let target_mod_3 = residue(&target);
    // Direct check: no (i, j) in range has equal ranks.
    let cong: std::collections::HashSet<SymbolicRank> =
        (1..=samples).map(|j| ramanujan_rank(q, j)).collect::<Result<_>>()?;
    let mut matches = 0;
    for i in 4..4 + samples {
        if cong.contains(&corint_rank_chain(q, i)?) {
            matches += 1;
        }
    }
    let contradiction = target_mod_3 != 0 && corint_res[0] != cong_res && matches == 0;
    Ok(Mod3Certificate {
        q,
        corint_exponent_residue: corint_res[0],
        congruence_exponent_residue: cong_res,
        target,
        target_mod_3,
        contradiction,
        sampled_pairs: samples * samples,
        sampled_matches: matches,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoprimeVerdict {
    pub n: u64,
    pub m: u64,
    pub obstructed: bool,
    /// A prime dividing `m - 1` but not `n - 1`.
    pub witness_prime: Option<u64>,
}

/// Whether `(n - 1)^a` can be a multiple of `m - 1` for some `a >= 1`.
pub fn coprime_obstruction(n: u64, m: u64) -> Result<CoprimeVerdict> {
    if n < 3 || m < 2 {
        return Err(CoarseError::InvalidArgument("need n >= 3 and m >= 2".into()));
    }
    let witness = prime_factors(&BigUint::from(m - 1))
        .into_iter()
        .filter_map(|p| p.to_u64())
        .find(|p| (n - 1) % p != 0);
    Ok(CoprimeVerdict {
        n,
        m,
        obstructed: witness.is_some(),
        witness_prime: witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbolic_normalization() {
        let r = SymbolicRank::rank(BigInt::from(12), 2, 3u32);
        assert_eq!((r.coeff(), r.exponent()), (&BigInt::from(3), &BigUint::from(5u32)));
        assert_eq!(r.value(), Some(BigInt::from(97)));
        let again = SymbolicRank::new(r.coeff.clone(), r.base.clone(), r.exponent.clone(), r.offset.clone()).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn symbolic_equality_same_base() {
        for a in 1..20i64 {
            for e in 0..6u32 {
                for a2 in 1..20i64 {
                    for e2 in 0..6u32 {
                        let x = SymbolicRank::rank(a, 3, e);
                        let y = SymbolicRank::rank(a2, 3, e2);
                        let by_value = x.value() == y.value();
                        assert_eq!(x == y, by_value);
                    }
                }
            }
        }
    }

    #[test]
    fn symbolic_equality_cross_base() {
        let a = SymbolicRank::rank(1, 4, 3u32);
        let b = SymbolicRank::rank(1, 2, 6u32);
        assert!(a.equals(&b).unwrap());
        let c = SymbolicRank::rank(1, 3, 4u32);
        assert!(!a.equals(&c).unwrap());
        let huge2 = SymbolicRank::rank(1, 2, 100_000u32);
        let huge3 = SymbolicRank::rank(1, 3, 100_000u32);
        assert!(!huge2.equals(&huge3).unwrap());
    }

    #[test]
    fn nielsen_schreier_examples() {
        assert_eq!(nielsen_schreier(&BigUint::from(4u32), 2), BigUint::from(5u32));
        assert_eq!(nielsen_schreier(&BigUint::from(1u32), 7), BigUint::from(7u32));
        assert_eq!(nielsen_schreier(&BigUint::from(12u32), 2), BigUint::from(13u32));
    }

    fn values(t: &Tower, f: impl Fn(&TowerLevel) -> Option<BigInt>) -> Vec<u64> {
        t.levels.iter().map(|l| f(l).unwrap().to_u64().unwrap()).collect()
    }

    #[test]
    fn congruence_towers() {
        let n = congruence_tower_sl2(CongruenceFamily::N, 2, 100_000).unwrap();
        assert_eq!(values(&n, |l| l.index.value()), vec![4, 256]);
        assert_eq!(values(&n, |l| l.rank.as_ref().unwrap().value()), vec![5, 257]);
        let m = congruence_tower_sl2(CongruenceFamily::M, 2, 100_000).unwrap();
        assert_eq!(values(&m, |l| l.index.value()), vec![32, 2048]);
        assert!(m.levels.iter().all(|l| l.materialized));
        n.check_nested().unwrap();
    }

    #[test]
    fn congruence_tower_symbolic_beyond_budget() {
        let n = congruence_tower_sl2(CongruenceFamily::N, 5, 1000).unwrap();
        assert_eq!(n.levels.iter().filter(|l| l.materialized).count(), 2);
        assert_eq!(n.levels[4].rank.as_ref().unwrap().exponent(), &BigUint::from(26u32));
    }

    #[test]
    fn homology_tower_small() {
        let t = homology_tower(2, 2, 3, 1000).unwrap();
        assert_eq!(values(&t, |l| l.index.value()), vec![1, 4, 128]);
        assert_eq!(values(&t, |l| l.rank.as_ref().unwrap().value()), vec![2, 5, 129]);
        assert!(t.levels.iter().all(|l| l.materialized));
        let t3 = homology_tower(3, 2, 2, 1000).unwrap();
        assert_eq!(values(&t3, |l| l.index.value()), vec![1, 8]);
        assert_eq!(values(&t3, |l| l.rank.as_ref().unwrap().value()), vec![3, 17]);
    }

    #[test]
    fn homology_tower_continues_symbolically() {
        let t = homology_tower(2, 2, 5, 1000).unwrap();
        assert!(t.levels[3].rank.as_ref().unwrap().value().is_some());
        assert!(!t.levels[3].materialized);
        assert_eq!(t.levels[3].index.exponent(), &BigUint::from(136u32));
        t.check_nested().unwrap();
    }

    #[test]
    fn rank_gradient_examples() {
        let n = congruence_tower_sl2(CongruenceFamily::N, 4, 1000).unwrap();
        let rg = rank_gradient(&n).unwrap();
        assert!(rg.exact.iter().all(|v| v == &BigRational::one()));
        let h = homology_tower(3, 2, 4, 1000).unwrap();
        let rg = rank_gradient(&h).unwrap();
        assert!(rg.exact.iter().all(|v| v == &BigRational::from_integer(BigInt::from(2))));
    }

    #[test]
    fn betti_ratio_examples() {
        let h = homology_tower(2, 2, 3, 1000).unwrap();
        let br = betti_ratio_sequence(&h).unwrap();
        assert_eq!(br.values, vec!["2", "5/4", "129/128"]);
        let t = torus_tower(3, 3, 1_000_000).unwrap();
        let br = betti_ratio_sequence(&t).unwrap();
        assert_eq!(br.values, vec!["2/9", "2/81", "2/729"]);
    }

    #[test]
    fn prime_search_examples() {
        let qs: Vec<u64> = ramanujan_prime_search(50).iter().map(|p| p.q).collect();
        assert_eq!(qs, vec![29, 41]);
        let tagged: Vec<bool> = ramanujan_prime_search(50).iter().map(|p| p.one_mod_20).collect();
        assert_eq!(tagged, vec![false, true]);
        assert!(ramanujan_prime_search(2).is_empty());
    }

    #[test]
    fn prime_search_matches_legendre_symbols() {
        // Independent check via Euler's criterion.
        let pow_mod = |b: u64, e: u64, m: u64| -> u64 {
            let mut r = 1u64;
            for _ in 0..e {
                r = r * b % m;
            }
            r
        };
        let found: Vec<u64> = ramanujan_prime_search(400).iter().map(|p| p.q).collect();
        let expected: Vec<u64> = (3..=400u64)
            .filter(|&q| check_odd_prime(q).is_ok() && q != 5)
            .filter(|&q| pow_mod(q - 1, (q - 1) / 2, q) == 1 && pow_mod(5, (q - 1) / 2, q) == 1)
            .collect();
        assert_eq!(found, expected);
    }

    #[test]
    fn ramanujan_rank_examples() {
        assert_eq!(ramanujan_rank(5, 1).unwrap().value(), Some(BigInt::from(121)));
        let r = ramanujan_rank(29, 2).unwrap();
        assert_eq!(
            (r.coeff(), r.base(), r.exponent(), r.offset()),
            (&BigInt::from(840), &BigUint::from(29u32), &BigUint::from(4u32), &BigInt::one())
        );
        let r1 = ramanujan_rank(7, 1).unwrap();
        assert_eq!(r1.value(), Some(BigInt::from(48 * 7 + 1)));
    }

    #[test]
    fn corint_examples() {
        let r = corint_rank_chain(29, 4).unwrap();
        let expected = BigInt::from(840) * BigInt::from(29).pow(7) - 4 + 12;
        assert_eq!(BigInt::from(r.exponent().clone()), expected);
        assert!(r.value().is_none());
        let cert = corint_mod3_certificate(29, 200).unwrap();
        assert_eq!(cert.corint_exponent_residue, 2);
        assert_eq!(cert.congruence_exponent_residue, 1);
        assert_eq!(cert.target_mod_3, 1);
        assert!(cert.contradiction);
    }

    #[test]
    fn coprime_examples() {
        assert!(!coprime_obstruction(4, 2).unwrap().obstructed);
        let v = coprime_obstruction(3, 4).unwrap();
        assert_eq!((v.obstructed, v.witness_prime), (true, Some(3)));
        assert!(!coprime_obstruction(5, 3).unwrap().obstructed);
    }

    #[test]
    fn coprime_matches_brute_force() {
        for n in 3..30u64 {
            for m in 2..30u64 {
                let brute = !(1..12u32).any(|a| (n - 1).pow(a) % (m - 1) == 0);
                assert_eq!(coprime_obstruction(n, m).unwrap().obstructed, brute, "n={n} m={m}");
            }
        }
    }

    #[test]
    fn tower_json_roundtrip() {
        let t = homology_tower(2, 3, 2, 1000).unwrap();
        let text = serde_json::to_string(&t).unwrap();
        let back: Tower = serde_json::from_str(&text).unwrap();
        assert_eq!(back.law, t.law);
        assert_eq!(back.levels[1].rank, t.levels[1].rank);
    }
}
