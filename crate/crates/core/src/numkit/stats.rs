use crate::data::Matrix;
use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn weighted_mean(xs: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    xs.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw
}

/// Median of a nonempty slice; even lengths average the middle pair.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Nearest-rank percentile: the smallest value with at least `p`% of the
/// sample at or below it.
pub fn percentile_nearest_rank(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    v[rank.clamp(1, n) - 1]
}

/// Population standard deviation.
pub fn pop_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct Standardized {
    pub z: Matrix,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Columns whose sd was zero; their z-scores are all zero.
    pub zero_variance: Vec<bool>,
}

/// Column z-scores with the population (divide-by-n) standard deviation.
pub fn standardize(matrix: &Matrix) -> Result<Standardized> {
    let (n, p) = matrix.shape();
    if n < 2 {
        return Err(Error::invalid("standardize needs at least 2 rows"));
    }
    let mut z = Matrix::zeros(n, p);
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    let mut flags = Vec::with_capacity(p);
    for j in 0..p {
        let col = matrix.column(j);
        let m = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        // relative test: a constant column can pick up rounding noise in `m`
        let zero = sd <= 1e-14 * m.abs().max(f64::MIN_POSITIVE) || sd == 0.0;
        if !zero {
            for i in 0..n {
                z[(i, j)] = (col[i] - m) / sd;
            }
        }
        means.push(m);
        sds.push(if zero { 0.0 } else { sd });
        flags.push(zero);
    }
    Ok(Standardized {
        z,
        mean: means,
        sd: sds,
        zero_variance: flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_column() {
        let s = standardize(&Matrix::from_column_slice(2, 1, &[1.0, 3.0])).unwrap();
        assert_eq!(s.z.as_slice(), &[-1.0, 1.0]);
        assert_eq!(s.sd[0], 1.0);
    }

    #[test]
    fn constant_column_is_flagged() {
        let s = standardize(&Matrix::from_column_slice(3, 1, &[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(s.z.as_slice(), &[0.0, 0.0, 0.0]);
        assert!(s.zero_variance[0]);
    }

    #[test]
    fn three_point_column() {
        let s = standardize(&Matrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0])).unwrap();
        // population sd = sqrt(2/3), so z = ±1/sqrt(2/3) = ±1.2247...
        let e = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((s.z[0] + e).abs() < 1e-12 && s.z[1].abs() < 1e-12 && (s.z[2] - e).abs() < 1e-12);
        assert!((e - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn single_row_rejected() {
        assert!(standardize(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn output_moments() {
        let m = Matrix::from_fn(7, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 * (j as f64 + 0.5));
        let s = standardize(&m).unwrap();
        for j in 0..3 {
            let c: Vec<f64> = s.z.column(j).iter().copied().collect();
            assert!(mean(&c).abs() < 1e-12);
            assert!((pop_sd(&c) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_rank() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile_nearest_rank(&xs, 20.0), 2.0);
        assert_eq!(percentile_nearest_rank(&xs, 80.0), 8.0);
        assert_eq!(percentile_nearest_rank(&xs, 100.0), 10.0);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }
}
