//! The factor toolkit behind the square-root filters: all factors are upper
//! triangular with `P = Sᵀ·S`.

use gci_ukf::linalg::{cholesky_factor, qr_triangularize, rank1_update, tri_solve_vec, vstack, Rank1};
use gci_ukf::prelude::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = Mat::from_row_slice(3, 3, &[4.0, 2.0, 0.6, 2.0, 2.0, 0.5, 0.6, 0.5, 1.0]);
    let s = cholesky_factor(&p)?;
    println!("S = {}", s.as_mat());
    println!("|SᵀS − P| = {:.2e}", (s.covariance() - &p).norm());

    let x = Vector::from_vec(vec![0.5, -0.25, 1.0]);
    let up = rank1_update(&s, &x, Rank1::Update)?;
    println!("|update − (P + xxᵀ)| = {:.2e}", (up.covariance() - (&p + &x * x.transpose())).norm());
    let down = rank1_update(&up, &x, Rank1::Downdate)?;
    println!("|downdate(update(S)) − S| = {:.2e}", (down.as_mat() - s.as_mat()).norm());

    // a stacked square-root array collapses to one triangular factor
    let stacked = vstack(&[s.as_mat(), &(Mat::identity(3, 3) * 0.1)]);
    let r = qr_triangularize(&stacked)?;
    println!("|RᵀR − (P + 0.01 I)| = {:.2e}", (r.covariance() - (&p + Mat::identity(3, 3) * 0.01)).norm());

    // whitening: Sᵀ·u = d gives u ~ N(0, I) for d ~ N(0, P)
    let u = tri_solve_vec(&s, &Vector::from_vec(vec![1.0, 1.0, 1.0]), true)?;
    println!("whitened = {:.4?}", u.as_slice());

    match rank1_update(&s, &(x * 10.0), Rank1::Downdate) {
        Ok(_) => println!("unexpected success"),
        Err(e) => println!("oversized downdate rejected: {e}"),
    }
    Ok(())
}
