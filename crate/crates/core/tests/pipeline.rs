use coarsebox::boxspace::{compare_towers, verify_obstruction, BoxSpace, Verdict};
use coarsebox::cayley::{voltage_cover, SL2_FREE_GENERATORS};
use coarsebox::coarse_pi1::{a1r_abelianized, detect_report, fill_relators};
use coarsebox::towers::{congruence_tower_sl2, homology_tower, CongruenceFamily, Tower};
use coarsebox::{CayleyQuotient, H1Result, Presentation};

#[test]
fn tower_json_round_trip_keeps_the_verdict() {
    let n = congruence_tower_sl2(CongruenceFamily::N, 3, 100_000).unwrap();
    let m = congruence_tower_sl2(CongruenceFamily::M, 2, 100_000).unwrap();
    let n2: Tower = serde_json::from_str(&serde_json::to_string(&n).unwrap()).unwrap();
    let m2: Tower = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(n2.law, n.law);
    let v = compare_towers(&n2, &m2).unwrap();
    assert_eq!(v.verdict, Verdict::NotCoarselyEquivalent);
    verify_obstruction(&v, &n, &m, 200).unwrap();
    let back: coarsebox::boxspace::CompareVerdict =
        serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(back.proof, v.proof);
}

#[test]
fn box_space_of_the_n_tower() {
    let n = congruence_tower_sl2(CongruenceFamily::N, 3, 100_000).unwrap();
    let graphs: Vec<CayleyQuotient> = n.levels.iter().map(|l| l.graph.clone().unwrap()).collect();
    let b = BoxSpace::assemble(graphs).unwrap();
    for k in 0..2 {
        let gap = b.offsets()[k + 1] - b.offsets()[k];
        assert_eq!(gap, (b.diameters()[k] + b.diameters()[k + 1]) as u64);
        assert!(b.distance((k, 0), (k + 1, 0)).unwrap() >= b.diameters()[k] as u64);
    }
}

#[test]
fn homology_levels_detect_their_rank() {
    let t = homology_tower(2, 2, 3, 100_000).unwrap();
    let free = Presentation::free(2).unwrap();
    for l in &t.levels {
        let g = l.graph.as_ref().unwrap();
        let r = detect_report(g, &free, None).unwrap();
        let rank = l.rank.as_ref().unwrap().value().unwrap();
        assert_eq!(num_bigint::BigInt::from(r.h1.betti), rank);
        assert!(r.h1.torsion.is_empty());
    }
}

#[test]
fn covers_of_congruence_quotients_stay_free() {
    let x = CayleyQuotient::from_matrices_sl2(4, &SL2_FREE_GENERATORS, 1000).unwrap();
    let c = voltage_cover(&x, 3, 1_000_000).unwrap();
    assert_eq!(c.cover.num_vertices(), 4 * 3usize.pow(5));
    let h = a1r_abelianized(&fill_relators(&c.cover, &Presentation::free(2).unwrap()).unwrap()).unwrap();
    assert_eq!(h, H1Result::free(c.cover.graph_betti()));
}
