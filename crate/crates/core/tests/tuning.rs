use std::sync::Mutex;

use fairnorm::tuning::{group_kfold, search, search_with, ParamRange, SearchSpace};
use fairnorm::Error;
use proptest::prelude::*;

fn ids(sizes: &[usize]) -> Vec<String> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(g, &s)| std::iter::repeat_n(format!("g{g}"), s))
        .collect()
}

proptest! {
    #[test]
    fn folds_partition_rows_without_splitting_groups(
        sizes in prop::collection::vec(1usize..8, 2..30),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        prop_assume!(sizes.len() >= k);
        let groups = ids(&sizes);
        let plan = group_kfold(&groups, k, seed).unwrap();
        prop_assert_eq!(plan.fold_sizes().iter().sum::<usize>(), groups.len());
        prop_assert!(plan.fold_sizes().iter().all(|&s| s > 0));
        for f in 0..k {
            let valid = plan.validation_rows(f);
            let train = plan.train_rows(f);
            prop_assert_eq!(valid.len() + train.len(), groups.len());
            for &v in &valid {
                prop_assert!(!train.contains(&v));
                prop_assert!(train.iter().all(|&t| groups[t] != groups[v]));
            }
        }
        prop_assert_eq!(plan, group_kfold(&groups, k, seed).unwrap());
    }
}

#[test]
fn greedy_assignment_balances_uneven_groups() {
    let plan = group_kfold(&ids(&[5, 5, 5, 1, 1, 1]), 3, 7).unwrap();
    let mut sizes = plan.fold_sizes();
    sizes.sort();
    assert_eq!(sizes, vec![6, 6, 6]);
}

#[test]
fn too_few_groups_is_an_error() {
    assert!(group_kfold(&ids(&[3, 3]), 3, 0).is_err());
    assert!(group_kfold(&ids(&[3, 3]), 1, 0).is_err());
}

#[test]
fn unimodal_objective_is_located_within_a_decade() {
    let mut hits = 0;
    for seed in 0..100u64 {
        let target = -6.0 + 7.0 * (seed as f64 + 0.5) / 100.0;
        let space = SearchSpace::kelm(64, seed);
        let result = search(&space, |v| Ok(vec![-(v[0].log10() - target).powi(2)])).unwrap();
        if (result.value("c").unwrap().log10() - target).abs() <= 1.0 {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits} of 100");
}

#[test]
fn candidates_stay_in_range_and_are_log_spread() {
    let space = SearchSpace {
        params: vec![ParamRange::log("a", 1e-7, 1e-2), ParamRange::log("b", 1e-7, 1e-2)],
        budget: 2000,
        seed: 4,
    };
    let candidates = space.candidates();
    assert_eq!(candidates.len(), 2000);
    let below = candidates.iter().filter(|c| c[0] < 10f64.powf(-4.5)).count();
    assert!(candidates.iter().flatten().all(|&v| (1e-7..=1e-2).contains(&v)));
    assert!((900..1100).contains(&below), "{below}");
}

#[test]
fn objective_sees_only_its_candidates_and_ties_go_first() {
    let seen = Mutex::new(Vec::new());
    let space = SearchSpace::kelm(16, 3);
    let (result, extras) = search_with(&space, |v| {
        seen.lock().unwrap().push(v[0]);
        Ok((vec![1.0, 1.0], v[0]))
    })
    .unwrap();
    let mut seen = seen.into_inner().unwrap();
    let mut expected: Vec<f64> = space.candidates().into_iter().map(|c| c[0]).collect();
    assert_eq!(extras.iter().map(|e| e.unwrap()).collect::<Vec<_>>(), expected);
    seen.sort_by(f64::total_cmp);
    expected.sort_by(f64::total_cmp);
    assert_eq!(seen, expected);
    assert_eq!(result.best_index, 0);
}

#[test]
fn numeric_failures_are_discarded_and_other_errors_abort() {
    let space = SearchSpace::kelm(20, 1);
    let result = search(&space, |v| {
        if v[0] > 1.0 {
            Err(Error::Singular { condition: 1e20 })
        } else if v[0] > 1e-2 {
            Ok(vec![f64::NAN])
        } else {
            Ok(vec![-v[0]])
        }
    })
    .unwrap();
    assert!(result.value("c").unwrap() <= 1e-2);
    for row in &result.trace.rows {
        assert_eq!(row.mean.is_none(), row.values[0] > 1e-2);
        assert_eq!(row.note.is_empty(), row.mean.is_some());
    }
    let csv = result.trace.to_csv();
    assert!(csv.starts_with("index,c,fold_0,mean,note\n"));

    assert!(matches!(
        search(&space, |_| Ok(vec![f64::INFINITY])),
        Err(Error::NoFiniteCandidate { evaluated: 20 })
    ));
    assert!(matches!(
        search(&space, |_| Err(Error::InvalidArgument("bad".into()))),
        Err(Error::InvalidArgument(_))
    ));
}
