//! Small dense least squares for the fitting hot path.

/// Least-squares solve of `A c ≈ y` with `A` given column-major (`cols[j][i]`).
///
/// Householder QR with column pivoting; columns whose remaining norm falls
/// below `rtol` times the largest column norm are dropped (coefficient 0).
/// Returns the coefficients and the residual sum of squares.
pub(crate) fn lstsq(cols: &[Vec<f64>], y: &[f64], rtol: f64) -> Option<(Vec<f64>, f64)> {
    let k = cols.len();
    let m = y.len();
    if cols.iter().any(|c| c.len() != m) {
        return None;
    }
    let mut a: Vec<Vec<f64>> = cols.to_vec();
    let mut b = y.to_vec();
    let mut perm: Vec<usize> = (0..k).collect();
    let col_norm = |c: &[f64], from: usize| c[from..].iter().map(|v| v * v).sum::<f64>().sqrt();
    let max_norm = a.iter().map(|c| col_norm(c, 0)).fold(0.0f64, f64::max);
    if !max_norm.is_finite() || !b.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut rank = 0;
    for j in 0..k.min(m) {
        let (p, pn) = (j..k)
            .map(|c| (c, col_norm(&a[c], j)))
            .fold((j, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pn <= rtol * max_norm || pn == 0.0 {
            break;
        }
        a.swap(j, p);
        perm.swap(j, p);
        let alpha = if a[j][j] > 0.0 { -pn } else { pn };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vn2: f64 = v.iter().map(|x| x * x).sum();
        if vn2 > 0.0 {
            for col in a.iter_mut().skip(j) {
                let s: f64 = v.iter().zip(&col[j..]).map(|(x, y)| x * y).sum::<f64>() * 2.0 / vn2;
                for (ci, vi) in col[j..].iter_mut().zip(&v) {
                    *ci -= s * vi;
                }
            }
            let s: f64 = v.iter().zip(&b[j..]).map(|(x, y)| x * y).sum::<f64>() * 2.0 / vn2;
            for (bi, vi) in b[j..].iter_mut().zip(&v) {
                *bi -= s * vi;
            }
        }
        rank += 1;
    }
    let mut c = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = b[i];
        for jj in i + 1..rank {
            s -= a[jj][i] * c[jj];
        }
        c[i] = s / a[i][i];
    }
    let rss: f64 = b[rank..].iter().map(|v| v * v).sum();
    let mut out = vec![0.0; k];
    for (i, &ci) in c.iter().enumerate() {
        out[perm[i]] = ci;
    }
    Some((out, rss))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.5).collect();
        let (c, rss) = lstsq(&[x.clone(), vec![1.0; 10]], &y, 1e-12).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-12 && (c[1] + 1.5).abs() < 1e-12);
        assert!(rss < 1e-20);
    }

    #[test]
    fn drops_collinear_column() {
        let x: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let x2: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let y: Vec<f64> = x.iter().map(|v| 6.0 * v).collect();
        let (c, rss) = lstsq(&[x, x2], &y, 1e-10).unwrap();
        assert!(rss < 1e-18);
        assert!(c.iter().filter(|v| **v == 0.0).count() == 1);
    }

    #[test]
    fn residual_matches_normal_equations() {
        // oracle: 1-column projection residual |y|^2 - (x.y)^2/|x|^2
        let x = vec![1.0, 2.0, 0.5, -1.0];
        let y = vec![0.3, 1.0, 2.0, -0.7];
        let xy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let xx: f64 = x.iter().map(|a| a * a).sum();
        let yy: f64 = y.iter().map(|a| a * a).sum();
        let (c, rss) = lstsq(&[x], &y, 1e-12).unwrap();
        assert!((c[0] - xy / xx).abs() < 1e-14);
        assert!((rss - (yy - xy * xy / xx)).abs() < 1e-12);
    }
}
