/// Solve `a x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot falls below `1e-12` times the largest entry
/// of `a`, i.e. the system is (numerically) singular.
pub fn solve<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    let amax = a.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    if amax == 0.0 {
        return None;
    }
    let eps = 1e-12 * amax;
    for col in 0..N {
        let piv = (col..N)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap();
        if a[piv][col].abs() <= eps {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..N {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..N {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = [0.0; N];
    for r in (0..N).rev() {
        let s: f64 = (r + 1..N).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}
