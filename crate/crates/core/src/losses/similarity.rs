use crate::nn::Matrix;

/// Lower bound applied to vector norms before dividing.
pub const NORM_FLOOR: f64 = 1e-12;

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    dot / (norm(u).max(NORM_FLOOR) * norm(v).max(NORM_FLOOR))
}

fn norm(u: &[f64]) -> f64 {
    u.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Row-normalized copy of `x` and the floored row norms.
pub(crate) fn normalize_rows(x: &Matrix<f64>) -> (Matrix<f64>, Vec<f64>) {
    let mut u = x.clone();
    let mut norms = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let n = norm(x.row(i)).max(NORM_FLOOR);
        u.row_mut(i).iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    (u, norms)
}

/// All pairwise cosine similarities (`rows × rows`).
pub fn cosine_matrix(x: &Matrix<f64>) -> Matrix<f64> {
    let (u, _) = normalize_rows(x);
    let mut s = Matrix::zeros(x.rows, x.rows);
    for i in 0..x.rows {
        for j in 0..x.rows {
            s.data[i * x.rows + j] = u.row(i).iter().zip(u.row(j)).map(|(a, b)| a * b).sum();
        }
    }
    s
}

/// Maps a gradient with respect to the similarity matrix `S = U·Uᵀ` back to `x`.
pub(crate) fn similarity_backward(x: &Matrix<f64>, d_sim: &Matrix<f64>) -> Matrix<f64> {
    let (u, norms) = normalize_rows(x);
    let n = x.rows;
    let mut dx = Matrix::zeros(n, x.cols);
    for i in 0..n {
        let mut du = vec![0.0; x.cols];
        for j in 0..n {
            let w = d_sim.data[i * n + j] + d_sim.data[j * n + i];
            if w != 0.0 {
                du.iter_mut().zip(u.row(j)).for_each(|(d, v)| *d += w * v);
            }
        }
        let raw = norm(x.row(i));
        let out = dx.row_mut(i);
        if raw > NORM_FLOOR {
            let proj: f64 = du.iter().zip(u.row(i)).map(|(a, b)| a * b).sum();
            for ((o, d), v) in out.iter_mut().zip(&du).zip(u.row(i)) {
                *o = (d - proj * v) / norms[i];
            }
        } else {
            for (o, d) in out.iter_mut().zip(&du) {
                *o = d / NORM_FLOOR;
            }
        }
    }
    dx
}
