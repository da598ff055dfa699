#![allow(clippy::needless_range_loop)]

mod common;

use cholnest_core::generate::random_spd;
use cholnest_core::ordering::{min_degree_ordering, natural_ordering, predicted_factor_nnz};
use cholnest_core::symbolic::{analyze, column_counts, elimination_tree, find_supernodes, supernodal_structure};
use cholnest_core::{AmalgamationParams, Permutation, SparseSymmetric};
use common::{dense_etree, dense_symbolic, fig2_matrix};
use proptest::prelude::*;
use rand::rngs::SmallRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn ordering_for(a: &SparseSymmetric, kind: u8, rng: &mut SmallRng) -> Permutation {
    match kind {
        0 => natural_ordering(a.n()),
        1 => min_degree_ordering(a),
        _ => {
            let mut p: Vec<usize> = (0..a.n()).collect();
            p.shuffle(rng);
            Permutation::from_new_to_old(p).unwrap()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn unamalgamated_pattern_equals_dense_elimination(
        n in 1usize..=120, density in 0.0f64..0.15, seed: u64, kind in 0u8..3,
    ) {
        let mut rng = SmallRng::seed_from_u64(seed);
        let a = random_spd(&mut rng, n, density);
        let p = ordering_for(&a, kind, &mut rng);
        let an = analyze(&a, &p, AmalgamationParams::DISABLED).unwrap();
        let oracle = dense_symbolic(&an.matrix);
        let sym = &an.symbolic;
        for j in 0..n {
            for i in j..n {
                prop_assert_eq!(sym.stores(i, j), oracle[j][i], "entry ({}, {})", i, j);
            }
        }
        let counts: Vec<usize> = oracle.iter().map(|c| c.iter().filter(|&&b| b).count()).collect();
        prop_assert_eq!(&sym.col_counts, &counts);
        prop_assert_eq!(&sym.etree.parent, &dense_etree(&oracle));
        prop_assert_eq!(sym.stored_entries(), sym.nnz_l());
    }

    #[test]
    fn amalgamated_pattern_contains_structure(
        n in 1usize..=120, density in 0.0f64..0.15, seed: u64, kind in 0u8..3,
        ratio in 0.0f64..0.5, small in 0usize..8,
    ) {
        let mut rng = SmallRng::seed_from_u64(seed);
        let a = random_spd(&mut rng, n, density);
        let p = ordering_for(&a, kind, &mut rng);
        let params = AmalgamationParams { max_zero_ratio: ratio, small_limit: small };
        let an = analyze(&a, &p, params).unwrap();
        let oracle = dense_symbolic(&an.matrix);
        let sym = &an.symbolic;
        for j in 0..n {
            for i in j..n {
                if oracle[j][i] {
                    prop_assert!(sym.stores(i, j), "structural entry ({}, {}) not stored", i, j);
                }
            }
        }
        let counts: Vec<usize> = oracle.iter().map(|c| c.iter().filter(|&&b| b).count()).collect();
        prop_assert_eq!(&sym.col_counts, &counts);
        prop_assert_eq!(sym.nnz_l(), predicted_factor_nnz(&a, &p).unwrap());
        check_structure_invariants(sym);
    }
}

fn check_structure_invariants(sym: &cholnest_core::SymbolicFactor) {
    let part = &sym.partition;
    let n = sym.n();
    assert_eq!(part.super_ptr[0], 0);
    assert_eq!(*part.super_ptr.last().unwrap(), n);
    assert!(part.super_ptr.windows(2).all(|w| w[0] < w[1]));
    assert_eq!((0..part.n_super()).map(|s| part.width(s)).sum::<usize>(), n);
    for s in 0..part.n_super() {
        for j in part.columns(s) {
            assert_eq!(part.col_to_super[j], s);
        }
        if let Some(p) = part.snode_parent[s] {
            assert!(p > s);
        }
        let list = sym.update_list(s);
        assert_eq!(*list.last().unwrap(), s, "self entry last");
        assert!(list.windows(2).all(|w| w[0] < w[1]), "sorted, distinct");
        assert_eq!(sym.inner_counts()[s], list.len() - 1);
        for &d in sym.update_sources(s) {
            let shape = sym.update_shape(d, s);
            assert!(shape.hit > 0, "{d} listed as updating {s} but touches none of its columns");
        }
        // Conversely every supernode whose rows reach s is listed.
        let cols = part.columns(s);
        for d in 0..s {
            let touches = sym.below_rows(d).iter().any(|r| cols.contains(r));
            assert_eq!(touches, sym.update_sources(s).contains(&d));
        }
    }
    assert!(sym.etree.postorder.iter().enumerate().all(|(k, &j)| k == j));
}

#[test]
fn etree_examples() {
    let tri = cholnest_core::generate::tridiagonal(4, 4.0, 1.0);
    assert_eq!(elimination_tree(&tri).parent, vec![Some(1), Some(2), Some(3), None]);
    let arrow = cholnest_core::generate::arrowhead(4);
    assert_eq!(elimination_tree(&arrow).parent, vec![Some(3), Some(3), Some(3), None]);
    assert_eq!(dense_etree(&dense_symbolic(&arrow)), vec![Some(3), Some(3), Some(3), None]);
}

#[test]
fn fig2_update_counts() {
    let a = fig2_matrix();
    let oracle = dense_symbolic(&a);
    // No fill: every column holds only its tree edge.
    assert_eq!(oracle.iter().map(|c| c.iter().filter(|&&b| b).count()).collect::<Vec<_>>(), [2, 2, 2, 2, 2, 1]);
    let etree = elimination_tree(&a);
    let counts = column_counts(&a, &etree);
    let partition = find_supernodes(&etree, &counts);
    assert_eq!(partition.n_super(), 6);
    let sym = supernodal_structure(&a, &etree, &counts, &partition);
    assert_eq!(sym.inner_counts(), &[0, 0, 0, 2, 1, 2]);

    // Postordering relabels 3 and 4 but keeps the multiset.
    let an = analyze(&a, &natural_ordering(6), AmalgamationParams::DISABLED).unwrap();
    assert_eq!(an.symbolic.inner_counts(), &[0, 0, 2, 0, 1, 2]);
}

#[test]
fn path_graph_has_no_fill() {
    let p4 = cholnest_core::generate::tridiagonal(4, 2.0, -1.0);
    let p = min_degree_ordering(&p4);
    assert_eq!(predicted_factor_nnz(&p4, &p).unwrap(), p4.nnz());
}
