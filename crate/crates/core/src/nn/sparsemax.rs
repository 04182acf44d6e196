//! Euclidean projection onto the probability simplex.

/// Sparsemax of `z` restricted to entries where `allowed` is true (all
/// entries when `allowed` is `None` or excludes everything). Excluded entries
/// are exactly zero.
pub fn sparsemax_masked(z: &[f64], allowed: Option<&[bool]>, out: &mut [f64]) {
    let ok = |j: usize| allowed.is_none_or(|a| a[j]);
    let any = (0..z.len()).any(ok);
    let ok = |j: usize| !any || ok(j);
    let mut sorted: Vec<f64> = (0..z.len()).filter(|&j| ok(j)).map(|j| z[j]).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cum += v;
        let kk = (k + 1) as f64;
        if 1.0 + kk * v > cum {
            tau = (cum - 1.0) / kk;
        } else {
            break;
        }
    }
    for j in 0..z.len() {
        out[j] = if ok(j) { (z[j] - tau).max(0.0) } else { 0.0 };
    }
}

pub fn sparsemax(z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    sparsemax_masked(z, None, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn examples() {
        assert_eq!(sparsemax(&[2.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(sparsemax(&[0.5, 0.5]), vec![0.5, 0.5]);
        let p = sparsemax(&[0.3, 0.1, -5.0]);
        assert!((p[0] - 0.6).abs() < 1e-12 && (p[1] - 0.4).abs() < 1e-12 && p[2] == 0.0);
    }

    #[test]
    fn masked_entries_are_zero() {
        let mut out = [0.0; 3];
        sparsemax_masked(&[5.0, 0.0, 0.0], Some(&[false, true, true]), &mut out);
        assert_eq!(out, [0.0, 0.5, 0.5]);
    }

    #[test]
    fn projection_is_closest_simplex_point() {
        let mut r = crate::rng::rng(1);
        for _ in 0..500 {
            let z: Vec<f64> = (0..5).map(|_| r.random::<f64>() * 4.0 - 2.0).collect();
            let p = sparsemax(&z);
            let d0: f64 = z.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
            // random simplex points are never closer
            for _ in 0..20 {
                let mut q: Vec<f64> = (0..5).map(|_| -r.random::<f64>().ln()).collect();
                let s: f64 = q.iter().sum();
                q.iter_mut().for_each(|v| *v /= s);
                let d: f64 = z.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                assert!(d0 <= d + 1e-12);
            }
        }
    }
}
