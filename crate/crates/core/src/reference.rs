//! Slow direct-summation implementations used by tests to validate the FFT
//! paths. These deliberately share no code with the frequency-domain
//! routines.

/// Circular convolution by direct O(n^2 m^2) summation:
/// `y[p, q] = sum_uv kernel[u, v] * x[(p - u) mod n, (q - v) mod n]`.
pub fn naive_circular_convolve(n: usize, x: &[f64], m: usize, kernel: &[f64]) -> Vec<f64> {
    assert!(m <= n);
    assert_eq!(x.len(), n * n);
    assert_eq!(kernel.len(), m * m);
    let mut y = vec![0.0; n * n];
    for p in 0..n {
        for q in 0..n {
            let mut acc = 0.0;
            for u in 0..m {
                for v in 0..m {
                    let r = (p + n - u) % n;
                    let c = (q + n - v) % n;
                    acc += kernel[u * m + v] * x[r * n + c];
                }
            }
            y[p * n + q] = acc;
        }
    }
    y
}

/// Kernel-support cross-correlation by direct summation:
/// `c[u, v] = sum_pq g[p, q] * x[(p - u) mod n, (q - v) mod n]`.
pub fn naive_correlate_support(n: usize, g: &[f64], x: &[f64], m: usize) -> Vec<f64> {
    assert!(m <= n);
    assert_eq!(g.len(), n * n);
    assert_eq!(x.len(), n * n);
    let mut out = vec![0.0; m * m];
    for u in 0..m {
        for v in 0..m {
            let mut acc = 0.0;
            for p in 0..n {
                for q in 0..n {
                    let r = (p + n - u) % n;
                    let c = (q + n - v) % n;
                    acc += g[p * n + q] * x[r * n + c];
                }
            }
            out[u * m + v] = acc;
        }
    }
    out
}
