//! Dynamic time warping between multidimensional series of possibly
//! different lengths.

use super::EvalError;

/// Classic DTW dynamic program over row-major series (`features` wide) with
/// Euclidean row distance as the local cost and no window constraint.
/// Returns `D(N, M)`.
pub fn dtw(a: &[f32], b: &[f32], features: usize) -> Result<f64, EvalError> {
    assert!(
        features > 0 && a.len().is_multiple_of(features) && b.len().is_multiple_of(features),
        "ragged series"
    );
    let n = a.len() / features;
    let m = b.len() / features;
    if n == 0 || m == 0 {
        return Err(EvalError::EmptySeries);
    }

    let cost = |i: usize, j: usize| -> f64 {
        let ra = &a[i * features..(i + 1) * features];
        let rb = &b[j * features..(j + 1) * features];
        ra.iter()
            .zip(rb)
            .map(|(&x, &y)| {
                let d = x as f64 - y as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };

    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let c = cost(i - 1, j - 1);
            cur[j] = c + prev[j].min(cur[j - 1]).min(prev[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// Mean DTW over unordered distinct pairs (self-distances excluded).
pub fn avg_pairwise_dtw(series: &[&[f32]], features: usize) -> Result<f64, EvalError> {
    if series.len() < 2 {
        return Err(EvalError::TooFewSeries {
            need: 2,
            got: series.len(),
        });
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..series.len() {
        for j in i + 1..series.len() {
            sum += dtw(series[i], series[j], features)?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}
