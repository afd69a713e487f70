use gci_ukf::linalg::{
    cholesky_factor, qr_triangularize, rank1_update, tri_solve, tri_solve_vec, vstack, Mat, Rank1, Side, Vector,
};
use proptest::prelude::*;

fn spd(n: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-1.0..1.0f64, n * n).prop_map(move |v| {
        let a = Mat::from_vec(n, n, v);
        &a * a.transpose() + Mat::identity(n, n) * 0.5
    })
}

fn sized_spd() -> impl Strategy<Value = Mat> {
    (1usize..=7).prop_flat_map(spd)
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cholesky_round_trip(p in sized_spd()) {
        let s = cholesky_factor(&p).unwrap();
        prop_assert!(s.has_positive_diagonal());
        prop_assert!(rel(&s.covariance(), &p) <= 1e-12);
    }

    #[test]
    fn qr_gram_identity((rows, cols, v) in (1usize..=6).prop_flat_map(|c| (c..=2 * c + 2).prop_flat_map(move |r| (Just(r), Just(c), prop::collection::vec(-2.0..2.0f64, r * c))))) {
        let a = Mat::from_vec(rows, cols, v);
        if let Ok(r) = qr_triangularize(&a) {
            prop_assert!(rel(&r.covariance(), &(a.transpose() * &a)) <= 1e-12);
        }
    }

    #[test]
    fn update_then_downdate_is_identity((p, x) in (1usize..=7).prop_flat_map(|n| (spd(n), prop::collection::vec(-1.0..1.0f64, n)))) {
        let s = cholesky_factor(&p).unwrap();
        let x = Vector::from_vec(x);
        let up = rank1_update(&s, &x, Rank1::Update).unwrap();
        let back = rank1_update(&up, &x, Rank1::Downdate).unwrap();
        prop_assert!(rel(back.as_mat(), s.as_mat()) <= 1e-9);
    }

    #[test]
    fn update_matches_qr_append((p, x) in (1usize..=7).prop_flat_map(|n| (spd(n), prop::collection::vec(-1.0..1.0f64, n)))) {
        let n = p.nrows();
        let s = cholesky_factor(&p).unwrap();
        let x = Vector::from_vec(x);
        let up = rank1_update(&s, &x, Rank1::Update).unwrap();
        let stacked = qr_triangularize(&vstack(&[s.as_mat(), &Mat::from_row_slice(1, n, x.as_slice())])).unwrap();
        prop_assert!(rel(up.as_mat(), stacked.as_mat()) <= 1e-10);
        let direct = &p + &x * x.transpose();
        prop_assert!(rel(&up.covariance(), &direct) <= 1e-10);
    }

    #[test]
    fn triangular_solves_have_small_residual((p, b) in (1usize..=6).prop_flat_map(|n| (spd(n), prop::collection::vec(-3.0..3.0f64, n * 2)))) {
        let n = p.nrows();
        let s = cholesky_factor(&p).unwrap();
        let b = Mat::from_vec(n, 2, b);
        let x = tri_solve(&s, &b, Side::Left, false).unwrap();
        prop_assert!((s.as_mat() * &x - &b).norm() <= 1e-12 * b.norm().max(1.0));
        let y = tri_solve(&s, &b, Side::Left, true).unwrap();
        prop_assert!((s.as_mat().transpose() * &y - &b).norm() <= 1e-12 * b.norm().max(1.0));
        let col = Vector::from_column_slice(b.column(0).as_slice());
        let v = tri_solve_vec(&s, &col, true).unwrap();
        prop_assert!((s.as_mat().transpose() * v - col).norm() <= 1e-12 * b.norm().max(1.0));
    }
}

#[test]
fn downdate_that_would_break_definiteness_errors() {
    let s = cholesky_factor(&Mat::identity(2, 2)).unwrap();
    let x = Vector::from_vec(vec![1.5, 0.0]);
    assert!(rank1_update(&s, &x, Rank1::Downdate).is_err());
}
