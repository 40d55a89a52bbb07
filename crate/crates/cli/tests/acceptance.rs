//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test -p coarsebox-cli --release --test acceptance -- --nocapture`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use coarsebox::boxspace::{compare_towers, verify_obstruction, ObstructionProof, Verdict};
use coarsebox::cayley::SL2_FREE_GENERATORS;
use coarsebox::coarse_homotopy::{
    classify_loops, is_r_close, witness_jump, witness_reduce, OracleVerdict, DEFAULT_EDGE_BUDGET,
    DEFAULT_STATE_BUDGET,
};
use coarsebox::coarse_pi1::{a1r_abelianized, detect_report, detect_window, fill_relators};
use coarsebox::towers::{
    congruence_tower_sl2, corint_mod3_certificate, corint_rank_chain, corint_tower, homology_tower,
    ramanujan_prime_search, ramanujan_rank, ramanujan_tower, rank_gradient, torus_tower, CongruenceFamily, Tower,
};
use coarsebox::{parse_presentation, CayleyQuotient, Closeness, H1Result, Presentation, RPath, Word};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const BUDGET: u64 = 2_000_000;

fn run(n: usize, what: &str, f: impl FnOnce() -> Check) -> bool {
    let t = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into()))
    });
    let secs = t.elapsed().as_secs_f64();
    match &out {
        Ok(detail) => println!("criterion {n:>2}: PASS  {what} [{detail}; {secs:.1}s]"),
        Err(why) => println!("criterion {n:>2}: FAIL  {what} [{why}; {secs:.1}s]"),
    }
    out.is_ok()
}

fn within(start: Instant, limit: u64) -> Check {
    let e = start.elapsed();
    if e > Duration::from_secs(limit) {
        return Err(format!("took {:.1}s, limit {limit}s", e.as_secs_f64()));
    }
    Ok(String::new())
}

fn congruence_graphs() -> Vec<(u64, u64, CayleyQuotient)> {
    // (modulus, expected index, graph)
    let mut out = Vec::new();
    for i in 1..=3u64 {
        let m = 4u64.pow(i as u32);
        out.push((m, 1 << (6 * i - 4), CayleyQuotient::from_matrices_sl2(m, &SL2_FREE_GENERATORS, BUDGET).unwrap()));
    }
    for i in 1..=2u64 {
        let m = 1u64 << (2 * i + 1);
        out.push((m, 1 << (6 * i - 1), CayleyQuotient::from_matrices_sl2(m, &SL2_FREE_GENERATORS, BUDGET).unwrap()));
    }
    out
}

fn c1() -> Check {
    let t = Instant::now();
    let gs = congruence_graphs();
    for (m, idx, g) in &gs {
        ensure!(g.num_vertices() as u64 == *idx, "mod {m}: {} vertices, expected {idx}", g.num_vertices());
    }
    within(t, 60)?;
    let counts: Vec<usize> = gs.iter().map(|g| g.2.num_vertices()).collect();
    Ok(format!("vertex counts {counts:?}"))
}

fn c2() -> Check {
    let mut checked = 0;
    let mut graphs: Vec<(u64, CayleyQuotient)> = congruence_graphs().into_iter().map(|(_, i, g)| (i, g)).collect();
    for (n, m) in [(2, 2), (2, 3)] {
        for l in homology_tower(n, m, 3, BUDGET).unwrap().levels {
            let idx = l.index.value().unwrap();
            graphs.push((idx.try_into().unwrap(), l.graph.expect("materialized")));
        }
    }
    for (idx, g) in &graphs {
        ensure!(g.num_edges() == 2 * g.num_vertices(), "E != 2V");
        let b1 = g.num_edges() - g.num_vertices() + 1;
        ensure!(b1 as u64 == idx + 1, "index {idx}: b1 {b1}");
        ensure!(g.graph_betti() == b1, "graph_betti disagrees");
        checked += 1;
    }
    Ok(format!("{checked} quotients, b1 = index + 1"))
}

fn c3() -> Check {
    let t = Instant::now();
    let a = homology_tower(2, 2, 3, BUDGET).map_err(|e| e.to_string())?;
    let idx: Vec<BigInt> = a.levels.iter().map(|l| l.index.value().unwrap()).collect();
    let rk: Vec<BigInt> = a.levels.iter().map(|l| l.rank.as_ref().unwrap().value().unwrap()).collect();
    ensure!(idx == [1, 4, 128].map(BigInt::from), "indices {idx:?}");
    ensure!(rk == [2, 5, 129].map(BigInt::from), "ranks {rk:?}");
    let b = homology_tower(2, 3, 3, BUDGET).map_err(|e| e.to_string())?;
    let l3 = &b.levels[2];
    ensure!(l3.index.value() == Some(BigInt::from(531441)), "index {}", l3.index);
    ensure!(l3.rank.as_ref().unwrap().value() == Some(BigInt::from(531442)), "rank");
    let g = l3.graph.as_ref().ok_or("level 3 not materialized")?;
    ensure!(g.num_vertices() == 531441 && g.graph_betti() == 531442, "materialized b1 {}", g.graph_betti());
    within(t, 120)?;
    Ok("indices 1,4,128 ranks 2,5,129; 531441-vertex cover with b1 531442".into())
}

fn torus(m: u32) -> CayleyQuotient {
    CayleyQuotient::abelian(&[m, m], BUDGET).unwrap()
}

fn z2() -> Presentation {
    parse_presentation("gens 2; rel abAB").unwrap()
}

fn c4() -> Check {
    ensure!(detect_window(4, 10) == vec![2], "window {:?}", detect_window(4, 10));
    for m in 9..=12u32 {
        let r = detect_report(&torus(m), &z2(), Some(&torus(10 * m))).map_err(|e| e.to_string())?;
        ensure!(r.systole.value == m as usize, "m={m}: systole {}", r.systole.value);
        ensure!(r.window == vec![2], "m={m}: window {:?}", r.window);
        ensure!(r.h1 == H1Result::free(2), "m={m}: H1 {:?}", r.h1);
        ensure!(r.a1r == Some(H1Result::free(2)), "m={m}: A1r {:?}", r.a1r);
        let h = a1r_abelianized(&fill_relators(&torus(m), &z2()).unwrap()).unwrap();
        ensure!(h == H1Result::free(2), "m={m}: direct H1 {h:?}");
    }
    Ok("window [2], H1 = Z^2 for m = 9..12".into())
}

fn c5() -> Check {
    let r = detect_report(&torus(3), &z2(), Some(&torus(30))).map_err(|e| e.to_string())?;
    ensure!(r.window.is_empty(), "window {:?}", r.window);
    ensure!(r.a1r.is_none(), "A1r claimed");
    ensure!(r.verdict.contains("inapplicable"), "verdict {}", r.verdict);
    Ok(r.verdict)
}

fn winding(c: &CayleyQuotient, r: u32, k: i32) -> RPath {
    RPath::from_steps(c, r, &vec![k.signum(); k.unsigned_abs() as usize], 0).unwrap()
}

fn c6() -> Check {
    let t = Instant::now();
    let c8 = CayleyQuotient::cycle(8).unwrap();
    let o = classify_loops(&c8, 1, 10, DEFAULT_STATE_BUDGET, DEFAULT_EDGE_BUDGET).map_err(|e| e.to_string())?;
    ensure!(o.report().num_classes >= 3, "{} classes", o.report().num_classes);
    let ids: Vec<usize> = [-8, 0, 8].iter().map(|&k| o.class_id(&winding(&c8, 1, k)).unwrap()).collect();
    ensure!(ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2], "winding classes {ids:?}");
    let c5 = CayleyQuotient::cycle(5).unwrap();
    let o5 = classify_loops(&c5, 2, 7, DEFAULT_STATE_BUDGET, DEFAULT_EDGE_BUDGET).map_err(|e| e.to_string())?;
    let v = o5.compare(&winding(&c5, 2, 5), &winding(&c5, 2, 0)).unwrap();
    ensure!(v == OracleVerdict::SameClass, "C5 winding loop not joined");
    within(t, 60)?;
    Ok(format!("C8: {} classes; C5 r=2 joins winding to constant", o.report().num_classes))
}

fn random_word(rng: &mut StdRng, n: i32, max: usize) -> Vec<i32> {
    let len = rng.gen_range(2..=max);
    let mut w: Vec<i32> = Vec::with_capacity(len);
    while w.len() < len {
        let g = rng.gen_range(1..=n) * if rng.gen_bool(0.5) { 1 } else { -1 };
        w.push(g);
        // Plant cancellations so most words are far from reduced.
        if w.len() < len && rng.gen_bool(0.4) {
            w.push(-g);
        }
    }
    w
}

fn c7() -> Check {
    let mut rng = StdRng::seed_from_u64(7);
    let quotients = [
        CayleyQuotient::from_matrices_sl2(8, &SL2_FREE_GENERATORS, BUDGET).unwrap(),
        torus(5),
    ];
    let mut links = 0;
    for k in 0..100 {
        let x = &quotients[k % 2];
        let w = random_word(&mut rng, 2, 12);
        let r = 1 + (k % 3) as u32;
        let chain = witness_reduce(x, &w, 0, r).map_err(|e| e.to_string())?;
        chain.validate(x).map_err(|e| e.to_string())?;
        for p in chain.paths.windows(2) {
            ensure!(is_r_close(x, &p[0], &p[1], r).unwrap() != Closeness::No, "broken link in {w:?}");
            links += 1;
        }
        let target = x.trace(&Word::new(w.clone()).reduced(), 0).unwrap();
        ensure!(chain.last().points() == target.as_slice(), "{w:?} does not end at its reduction");
    }
    // Holes: a^2 is trivial mod 4; commutators are trivial in the torus.
    let sl4 = CayleyQuotient::from_matrices_sl2(4, &SL2_FREE_GENERATORS, BUDGET).unwrap();
    let holes: [(&CayleyQuotient, u32, Vec<Vec<i32>>); 2] = [
        (&sl4, 1, vec![vec![1, 1], vec![-1, -1], vec![2, 2], vec![-2, -2]]),
        (&quotients[1], 2, vec![vec![1, 2, -1, -2], vec![2, 1, -2, -1], vec![-1, -2, 1, 2], vec![1, 1, -1, -1]]),
    ];
    for k in 0..50 {
        let (x, r, vs) = &holes[k % 2];
        let u = random_word(&mut rng, 2, 5);
        let v = &vs[rng.gen_range(0..vs.len())];
        ensure!(v.len() <= 2 * *r as usize, "hole too long");
        let w: Vec<i32> = u.iter().rev().map(|l| -l).collect();
        let chain = witness_jump(x, &u, v, &w, *r).map_err(|e| e.to_string())?;
        chain.validate(x).map_err(|e| e.to_string())?;
        for p in chain.paths.windows(2) {
            ensure!(is_r_close(x, &p[0], &p[1], *r).unwrap() != Closeness::No, "broken jump link");
            links += 1;
        }
    }
    Ok(format!("100 reductions and 50 jumps, {links} links re-checked"))
}

fn generated_towers() -> Vec<Tower> {
    vec![
        congruence_tower_sl2(CongruenceFamily::N, 3, BUDGET).unwrap(),
        congruence_tower_sl2(CongruenceFamily::M, 2, BUDGET).unwrap(),
        homology_tower(2, 2, 3, BUDGET).unwrap(),
        homology_tower(2, 3, 3, BUDGET).unwrap(),
        homology_tower(3, 2, 3, BUDGET).unwrap(),
        ramanujan_tower(29, 3).unwrap(),
        ramanujan_tower(41, 3).unwrap(),
        corint_tower(29, 3).unwrap(),
        torus_tower(3, 2, BUDGET).unwrap(),
    ]
}

fn c8() -> Check {
    let n = congruence_tower_sl2(CongruenceFamily::N, 3, BUDGET).unwrap();
    let m = congruence_tower_sl2(CongruenceFamily::M, 2, BUDGET).unwrap();
    let v = compare_towers(&n, &m).map_err(|e| e.to_string())?;
    ensure!(v.verdict == Verdict::NotCoarselyEquivalent, "verdict {:?}", v.verdict);
    ensure!(v.witness.contains("6i-4 = 6j-1") && v.witness.contains("impossible mod 6"), "witness {}", v.witness);
    let pairs = verify_obstruction(&v, &n, &m, 1000).map_err(|e| e.to_string())?;
    ensure!(compare_towers(&m, &n).unwrap().verdict == Verdict::NotCoarselyEquivalent, "asymmetric");
    let towers = generated_towers();
    for t in &towers {
        let v = compare_towers(t, t).map_err(|e| e.to_string())?;
        ensure!(v.verdict == Verdict::Inconclusive, "{} vs itself: {:?}", t.name, v.verdict);
    }
    Ok(format!("witness `{}`; {pairs} pairs re-validated; {} self-comparisons inconclusive", v.witness, towers.len()))
}

fn c9() -> Check {
    let a = homology_tower(2, 2, 3, BUDGET).unwrap();
    let b = homology_tower(2, 3, 3, BUDGET).unwrap();
    let v = compare_towers(&a, &b).map_err(|e| e.to_string())?;
    ensure!(v.verdict == Verdict::NotCoarselyEquivalent, "verdict {:?}", v.verdict);
    let Some(ObstructionProof::Valuation { prime, .. }) = &v.proof else {
        return Err(format!("not a valuation proof: {:?}", v.proof));
    };
    verify_obstruction(&v, &a, &b, 1000).map_err(|e| e.to_string())?;
    let back = compare_towers(&b, &a).unwrap();
    ensure!(back.verdict == Verdict::NotCoarselyEquivalent, "asymmetric");
    Ok(format!("{prime}-adic witness, bound {:?}", v.bound))
}

fn c10() -> Check {
    let q = 29u64;
    // Brute-force quadratic residues, independent of the library search.
    let is_square = |a: u64, m: u64| (0..m).any(|x| x * x % m == a % m);
    ensure!(is_square(q - 1, q) && is_square(5, 2 * q), "q = 29 fails the residue conditions");
    ensure!(ramanujan_prime_search(50).iter().any(|p| p.q == q), "library search misses 29");
    let three = BigInt::from(3);
    let mut residues = Vec::new();
    for i in 4..40 {
        let e = BigInt::from(corint_rank_chain(q, i).unwrap().exponent().clone());
        residues.push(((e % &three) + &three) % &three);
    }
    let r = residues[0].clone();
    ensure!(residues.iter().all(|x| *x == r), "corint exponent residue varies with i");
    let cong = BigInt::from(ramanujan_rank(q, 5).unwrap().exponent().clone()) % &three;
    let target = BigInt::from(q * q - 1) * BigInt::from(q).pow(7) - 2;
    ensure!(cong == BigInt::from(1), "3j-2 residue {cong}");
    ensure!(&target % &three != BigInt::from(0), "(q^2-1)q^7-2 divisible by 3");
    ensure!(r != cong, "residues agree");
    let cert = corint_mod3_certificate(q, 300).map_err(|e| e.to_string())?;
    ensure!(cert.contradiction && cert.sampled_matches == 0, "certificate {cert:?}");
    ensure!(cert.target == target && cert.target_mod_3 == 1, "certificate target");
    let ram = ramanujan_tower(q, 3).unwrap();
    let cor = corint_tower(q, 3).unwrap();
    let v = compare_towers(&ram, &cor).unwrap();
    ensure!(v.verdict == Verdict::NotCoarselyEquivalent, "compare verdict");
    verify_obstruction(&v, &ram, &cor, 1000).map_err(|e| e.to_string())?;
    Ok(format!(
        "corint exponent = {r} mod 3 for all i, 3j-2 = 1 mod 3, (q^2-1)q^7-2 = 1 mod 3, certificate checked"
    ))
}

fn c11() -> Check {
    let towers = vec![
        congruence_tower_sl2(CongruenceFamily::N, 3, BUDGET).unwrap(),
        congruence_tower_sl2(CongruenceFamily::M, 2, BUDGET).unwrap(),
        homology_tower(2, 2, 3, BUDGET).unwrap(),
        homology_tower(2, 3, 3, BUDGET).unwrap(),
    ];
    for t in &towers {
        let rg = rank_gradient(t).map_err(|e| e.to_string())?;
        ensure!(rg.values.iter().all(|v| v == "1"), "{}: {:?}", t.name, rg.values);
    }
    Ok(format!("{} F2 towers, rank gradient sequence constant 1", towers.len()))
}

fn c12() -> Check {
    let bin = env!("CARGO_BIN_EXE_coarsebox");
    let st = Command::new(bin).args(["paper", "all", "--format", "csv"]).output().map_err(|e| e.to_string())?;
    let out = String::from_utf8_lossy(&st.stdout);
    ensure!(st.status.code() == Some(0), "paper all exited {:?}", st.status.code());
    let rows = out.lines().skip(1).count();
    ensure!(rows > 0 && out.lines().skip(1).all(|l| l.ends_with(",PASS")), "some row is not PASS");
    let mut flipped = Vec::new();
    for m in coarsebox::reproduce::Mutation::ALL {
        let st = Command::new(bin).args(["paper", "all", "--mutate", m.name()]).output().unwrap();
        ensure!(st.status.code() == Some(4), "mutation {m} exited {:?}", st.status.code());
        flipped.push(m.name());
    }
    Ok(format!("{rows} rows PASS; mutations {} flip the exit code", flipped.join(", ")))
}

#[test]
fn acceptance() {
    let results = [
        run(1, "congruence quotient indices", c1),
        run(2, "Nielsen-Schreier cross-check", c2),
        run(3, "homology towers", c3),
        run(4, "torus detection", c4),
        run(5, "empty-window honesty", c5),
        run(6, "loop oracle", c6),
        run(7, "constructive witnesses", c7),
        run(8, "congruence comparison and self-comparison", c8),
        run(9, "homology mod 2 vs mod 3", c9),
        run(10, "intersection mod-3 chain", c10),
        run(11, "rank gradient", c11),
        run(12, "paper reproduction and mutation", c12),
    ];
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    assert_eq!(passed, results.len());
}
