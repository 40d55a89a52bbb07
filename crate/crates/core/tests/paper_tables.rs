use coarsebox::reproduce::{reproduce, reproduce_all, Mutation, Section, Status};

const BUDGET: u64 = 2_000_000;

#[test]
fn every_row_passes() {
    for t in reproduce_all(BUDGET, None).unwrap() {
        for r in &t.rows {
            assert_eq!(r.status, Status::Pass, "{r:?}");
        }
    }
}

#[test]
fn every_mutation_flips_a_row() {
    for m in Mutation::ALL {
        let tables = reproduce_all(BUDGET, Some(m)).unwrap();
        assert!(tables.iter().any(|t| !t.all_pass()), "mutation {m} went unnoticed");
    }
}

#[test]
fn congruence_table_shape() {
    let t = reproduce(Section::Congruence, BUDGET, None).unwrap();
    let idx: Vec<&str> = t.rows.iter().filter(|r| r.item.starts_with("[F2:N")).map(|r| r.computed.as_str()).collect();
    assert_eq!(idx, ["4", "256", "16384"]);
    let idx: Vec<&str> = t.rows.iter().filter(|r| r.item.starts_with("[F2:M")).map(|r| r.computed.as_str()).collect();
    assert_eq!(idx, ["32", "2048"]);
}
