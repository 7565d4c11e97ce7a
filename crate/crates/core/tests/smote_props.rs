use keydyn::learner::{smote, SmoteConfig};
use keydyn::matrix::Matrix;
use proptest::prelude::*;

fn between(s: &[f64], a: &[f64], b: &[f64]) -> bool {
    let k = (0..a.len()).max_by(|&i, &j| (b[i] - a[i]).abs().total_cmp(&(b[j] - a[j]).abs())).unwrap();
    let u = if b[k] == a[k] { 0.0 } else { (s[k] - a[k]) / (b[k] - a[k]) };
    (-1e-12..=1.0 + 1e-12).contains(&u)
        && s.iter()
            .zip(a.iter().zip(b))
            .all(|(v, (x, y))| (v - (x + u * (y - x))).abs() <= 1e-9 * (1.0 + x.abs() + y.abs()))
}

proptest! {
    #[test]
    fn synthetic_rows_are_convex_combinations(
        rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 2..12),
        k in 1usize..6,
        extra in 0usize..40,
        seed in any::<u64>(),
    ) {
        let minority = Matrix::from_rows(&rows).unwrap();
        let out = smote(&minority, &SmoteConfig { k, target: rows.len() + extra, seed }).unwrap();
        prop_assert_eq!(out.rows.n_rows(), extra);
        for s in out.rows.rows() {
            let found = rows.iter().enumerate().any(|(i, a)| rows.iter().enumerate().any(|(j, b)| i != j && between(s, a, b)));
            prop_assert!(found, "{:?}", s);
        }
    }
}
