//! Exact solver for tiny SVM duals: enumerates which multipliers sit at 0, at
//! C, or strictly inside, solves the equality-constrained stationarity system
//! on the free set, and keeps the best feasible point. The dual is concave, so
//! its maximiser is a stationary point of some face and appears in the list.

pub fn gram(x: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    x.iter()
        .map(|a| x.iter().map(|b| (-gamma * a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()).exp()).collect())
        .collect()
}

pub fn dual(k: &[Vec<f64>], y: &[f64], a: &[f64]) -> f64 {
    let n = a.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[i] * a[j] * y[i] * y[j] * k[i][j];
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}

fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| m[r][col].abs().total_cmp(&m[s][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..n {
                    m[r][c] -= f * m[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / m[i][i]).collect())
}

/// Optimal dual value and multipliers for `y ∈ {−1, +1}`.
pub fn brute_force_dual(x: &[Vec<f64>], y: &[i8], gamma: f64, c: f64) -> (f64, Vec<f64>) {
    let n = x.len();
    assert!(n <= 8, "brute force is exponential");
    let k = gram(x, gamma);
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let q = |i: usize, j: usize| yf[i] * yf[j] * k[i][j];
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    for code in 0..3usize.pow(n as u32) {
        // state 0: α = 0, 1: α = C, 2: free
        let state: Vec<usize> = (0..n).map(|i| code / 3usize.pow(i as u32) % 3).collect();
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut a: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        if !free.is_empty() {
            // [Q_FF y_F; y_Fᵀ 0] [α_F; ν] = [1 − Q_FB α_B; −y_Bᵀ α_B]
            let m = free.len();
            let mut mat = vec![vec![0.0; m + 1]; m + 1];
            let mut rhs = vec![0.0; m + 1];
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    mat[r][s] = q(i, j);
                }
                mat[r][m] = yf[i];
                mat[m][r] = yf[i];
                rhs[r] = 1.0 - (0..n).filter(|&j| state[j] == 1).map(|j| q(i, j) * c).sum::<f64>();
            }
            rhs[m] = -(0..n).filter(|&j| state[j] == 1).map(|j| yf[j] * c).sum::<f64>();
            let Some(sol) = solve(mat, rhs) else { continue };
            for (r, &i) in free.iter().enumerate() {
                a[i] = sol[r];
            }
            if free.iter().any(|&i| a[i] < -1e-9 || a[i] > c + 1e-9) {
                continue;
            }
        }
        if a.iter().zip(&yf).map(|(a, y)| a * y).sum::<f64>().abs() > 1e-9 {
            continue;
        }
        let w = dual(&k, &yf, &a);
        if w > best.0 {
            best = (w, a);
        }
    }
    best
}
